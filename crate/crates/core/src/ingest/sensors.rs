//! Daily feature proxies derived from raw phone sensor streams.

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};

use crate::error::{Error, Result};

/// Four 6-hour parts of the day, participant-local time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimeBin {
    Night,
    Morning,
    Afternoon,
    Evening,
}

impl TimeBin {
    pub const ALL: [TimeBin; 4] = [TimeBin::Night, TimeBin::Morning, TimeBin::Afternoon, TimeBin::Evening];
    pub const HOURS: f64 = 6.0;

    pub fn of(t: NaiveDateTime) -> TimeBin {
        Self::ALL[(t.hour() / 6) as usize]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn start_hour(self) -> u32 {
        self.index() as u32 * 6
    }
}

/// Per-bin values plus the daily average over defined bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayBins {
    pub bins: [Option<f64>; 4],
    pub daily: Option<f64>,
}

impl DayBins {
    pub fn get(&self, bin: TimeBin) -> Option<f64> {
        self.bins[bin.index()]
    }

    /// `[daily, night, morning, afternoon, evening]`, the column order of the
    /// mobility and screen blocks of the daily feature vector.
    pub fn as_features(&self) -> [Option<f64>; 5] {
        [self.daily, self.bins[0], self.bins[1], self.bins[2], self.bins[3]]
    }

    fn from_bins(bins: [Option<f64>; 4]) -> Self {
        let defined: Vec<f64> = bins.iter().flatten().copied().collect();
        let daily = if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        };
        Self { bins, daily }
    }
}

/// The sleep episode chosen for one noon-to-noon window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SleepEstimate {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    /// Hours from the window start to the start of the episode.
    pub bedtime: f64,
    /// Hours from the window start to the end of the episode.
    pub waketime: f64,
    pub duration: f64,
}

impl SleepEstimate {
    pub fn bedtime_clock(&self) -> f64 {
        clock_hours(self.start)
    }

    pub fn waketime_clock(&self) -> f64 {
        clock_hours(self.end)
    }
}

fn clock_hours(t: NaiveDateTime) -> f64 {
    t.num_seconds_from_midnight() as f64 / 3600.0
}

fn hours(d: Duration) -> f64 {
    d.num_milliseconds() as f64 / 3_600_000.0
}

/// Noon-to-noon window whose sleep is attributed to `wake_date`.
pub fn sleep_window(wake_date: NaiveDate) -> (NaiveDateTime, NaiveDateTime) {
    let noon = NaiveTime::from_hms_opt(12, 0, 0).unwrap();
    let end = wake_date.and_time(noon);
    (end - Duration::hours(24), end)
}

/// Longest phone-lock episode in the 24 h window starting at `window_start`.
///
/// Episodes are clipped to the window. Equal durations resolve to the
/// earliest start, so the result does not depend on input order.
pub fn derive_sleep_from_lock(
    window_start: NaiveDateTime,
    episodes: &[(NaiveDateTime, NaiveDateTime)],
) -> Result<SleepEstimate> {
    let window_end = window_start + Duration::hours(24);
    let best = episodes
        .iter()
        .map(|&(s, e)| (s.max(window_start), e.min(window_end)))
        .filter(|(s, e)| e > s)
        .min_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
    let (start, end) = best.ok_or_else(|| Error::MissingData("no lock episodes in sleep window".into()))?;
    Ok(SleepEstimate {
        start,
        end,
        bedtime: hours(start - window_start),
        waketime: hours(end - window_start),
        duration: hours(end - start),
    })
}

/// Standard deviation (divisor n) of accelerometer magnitude per time bin.
///
/// A bin needs at least two samples to be defined. Samples are
/// `(timestamp, ax, ay, az)`.
pub fn derive_mobility_from_accelerometer(samples: &[(NaiveDateTime, f64, f64, f64)]) -> Result<DayBins> {
    let mut per_bin: [Vec<f64>; 4] = Default::default();
    for &(t, ax, ay, az) in samples {
        per_bin[TimeBin::of(t).index()].push((ax * ax + ay * ay + az * az).sqrt());
    }
    let bins = per_bin.map(|mags| {
        if mags.len() < 2 {
            return None;
        }
        let n = mags.len() as f64;
        let mean = mags.iter().sum::<f64>() / n;
        Some((mags.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n).sqrt())
    });
    let out = DayBins::from_bins(bins);
    if out.daily.is_none() {
        return Err(Error::MissingData("no accelerometer bin has two samples".into()));
    }
    Ok(out)
}

/// Screen-on hours per time bin of `day`.
///
/// Episodes are clipped to the day and overlaps merged; an episode crossing
/// a bin boundary contributes to each bin the part that falls inside it. An
/// empty episode list is a valid all-zero day.
pub fn bin_screen_usage(day: NaiveDate, episodes: &[(NaiveDateTime, NaiveDateTime)]) -> DayBins {
    let day_start = day.and_time(NaiveTime::MIN);
    let day_end = day_start + Duration::hours(24);
    let mut clipped: Vec<(NaiveDateTime, NaiveDateTime)> = episodes
        .iter()
        .map(|&(s, e)| (s.max(day_start), e.min(day_end)))
        .filter(|(s, e)| e > s)
        .collect();
    clipped.sort();

    let mut merged: Vec<(NaiveDateTime, NaiveDateTime)> = Vec::with_capacity(clipped.len());
    for (s, e) in clipped {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }

    let mut totals = [0.0f64; 4];
    for bin in TimeBin::ALL {
        let b0 = day_start + Duration::hours(bin.start_hour() as i64);
        let b1 = b0 + Duration::hours(6);
        for &(s, e) in &merged {
            let (lo, hi) = (s.max(b0), e.min(b1));
            if hi > lo {
                totals[bin.index()] += hours(hi - lo);
            }
        }
    }
    DayBins::from_bins(totals.map(Some))
}
