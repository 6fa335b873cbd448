//! CSV readers and writers for daily records, datasets, profiles and raw
//! sensor event streams.
//!
//! Every reader skips lines starting with `#`, which writers use for
//! provenance headers.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use nalgebra::DMatrix;

use super::profile::{AgeBin, BigFive, ParticipantProfile, TRAIT_NAMES};
use super::sensors::{self, DayBins};
use super::{feature_index, DayRecord, FeatureMatrix, RowMeta, FEATURE_NAMES, N_FEATURES};
use crate::error::{Error, Result};

/// Columns opening both the daily and the dataset format.
pub const ID_COLUMNS: [&str; 3] = ["participant_id", "date", "group_key"];

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(input)
}

struct Header {
    index: HashMap<String, usize>,
}

impl Header {
    fn read<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Self> {
        let headers = rdr.headers()?.clone();
        if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
            return Err(Error::schema("input is empty; expected a header row"));
        }
        Ok(Self {
            index: headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect(),
        })
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::schema(format!("missing required column `{name}`")))
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

fn parse_date(s: &str, line: u64) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| Error::schema(format!("line {line}: column `date`: `{s}` is not an ISO-8601 date")))
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn parse_value(s: &str, column: &str, line: u64) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::schema(format!("line {line}: column `{column}`: `{s}` is not a number")))
}

fn parse_flag(s: &str, column: &str, line: u64) -> Result<bool> {
    match s {
        "1" | "true" => Ok(true),
        "0" | "false" | "" => Ok(false),
        other => Err(Error::schema(format!("line {line}: column `{column}`: `{other}` is not a boolean"))),
    }
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

/// Reads the daily feature CSV. Extra columns are ignored; an optional
/// `trimmed` column carries the endpoint-trim flag of datasets written by
/// [`write_dataset_csv`].
pub fn read_daily_csv<R: Read>(input: R) -> Result<Vec<DayRecord>> {
    read_daily_csv_grouped(input, "group_key")
}

/// [`read_daily_csv`] taking group keys from `group_column` instead.
pub fn read_daily_csv_grouped<R: Read>(input: R, group_column: &str) -> Result<Vec<DayRecord>> {
    let mut rdr = csv_reader(input);
    let header = Header::read(&mut rdr)?;
    let pid_col = header.require("participant_id")?;
    let date_col = header.require("date")?;
    let group_col = header.optional(group_column);
    let trimmed_col = header.optional("trimmed");
    let feature_cols = FEATURE_NAMES
        .iter()
        .map(|n| header.require(n))
        .collect::<Result<Vec<_>>>()?;

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let pid = &rec[pid_col];
        if pid.is_empty() {
            return Err(Error::schema(format!("line {line}: column `participant_id` is empty")));
        }
        let date = parse_date(&rec[date_col], line)?;
        if !seen.insert((pid.to_string(), date)) {
            return Err(Error::schema(format!("line {line}: duplicate day {date} for participant {pid}")));
        }
        let group_key = group_col.map(|c| rec[c].to_string()).filter(|g| !g.is_empty());
        let mut features = [None; N_FEATURES];
        for (f, &c) in feature_cols.iter().enumerate() {
            features[f] = parse_value(&rec[c], FEATURE_NAMES[f], line)?;
        }
        let mut day = DayRecord::new(pid, date, group_key, features);
        if let Some(c) = trimmed_col {
            day.edges_trimmed = parse_flag(&rec[c], "trimmed", line)?;
        }
        out.push(day);
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes daily records in the ingest schema (no derived columns).
pub fn write_daily_csv<W: Write>(out: W, records: &[DayRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = ID_COLUMNS.to_vec();
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.participant_id.clone(),
            r.date.to_string(),
            r.group_key.clone().unwrap_or_default(),
        ];
        row.extend(r.features.iter().map(|v| fmt_opt(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Dataset columns: identity, weekday flag, trim flag, the 13 raw features,
/// then the 13 standardized features prefixed `z_`.
pub fn dataset_header() -> Vec<String> {
    let mut h: Vec<String> = ID_COLUMNS.iter().map(|s| s.to_string()).collect();
    h.push("weekday".into());
    h.push("trimmed".into());
    h.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
    h.extend(FEATURE_NAMES.iter().map(|s| format!("z_{s}")));
    h
}

/// Writes retained records alongside their standardized rows. The raw
/// columns make the file a valid daily CSV, so re-ingesting it reproduces it.
pub fn write_dataset_csv<W: Write>(mut out: W, preamble: Option<&str>, records: &[DayRecord], matrix: &FeatureMatrix) -> Result<()> {
    if records.len() != matrix.n_rows() {
        return Err(Error::domain("record count does not match matrix rows"));
    }
    if let Some(p) = preamble {
        for line in p.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(dataset_header())?;
    for (i, r) in records.iter().enumerate() {
        let mut row = vec![
            r.participant_id.clone(),
            r.date.to_string(),
            r.group_key.clone().unwrap_or_default(),
            u8::from(r.weekday).to_string(),
            u8::from(r.edges_trimmed).to_string(),
        ];
        row.extend(r.features.iter().map(|v| fmt_opt(*v)));
        row.extend((0..N_FEATURES).map(|c| matrix.values[(i, c)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset_csv`].
pub fn read_dataset_csv<R: Read>(input: R) -> Result<(Vec<DayRecord>, FeatureMatrix)> {
    let mut rdr = csv_reader(input);
    let header = Header::read(&mut rdr)?;
    let pid_col = header.require("participant_id")?;
    let date_col = header.require("date")?;
    let group_col = header.optional("group_key");
    let trimmed_col = header.optional("trimmed");
    let raw_cols = FEATURE_NAMES.iter().map(|n| header.require(n)).collect::<Result<Vec<_>>>()?;
    let z_cols = FEATURE_NAMES
        .iter()
        .map(|n| header.require(&format!("z_{n}")))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut z = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let date = parse_date(&rec[date_col], line)?;
        let group_key = group_col.map(|c| rec[c].to_string()).filter(|g| !g.is_empty());
        let mut features = [None; N_FEATURES];
        for (f, &c) in raw_cols.iter().enumerate() {
            features[f] = parse_value(&rec[c], FEATURE_NAMES[f], line)?;
        }
        let mut day = DayRecord::new(&rec[pid_col], date, group_key, features);
        if let Some(c) = trimmed_col {
            day.edges_trimmed = parse_flag(&rec[c], "trimmed", line)?;
        }
        for (f, &c) in z_cols.iter().enumerate() {
            let name = format!("z_{}", FEATURE_NAMES[f]);
            z.push(parse_value(&rec[c], &name, line)?.ok_or_else(|| Error::schema(format!("line {line}: column `{name}` is empty")))?);
        }
        records.push(day);
    }
    let values = DMatrix::from_row_slice(records.len(), N_FEATURES, &z);
    let matrix = FeatureMatrix {
        rows: records
            .iter()
            .map(|r| RowMeta {
                participant_id: r.participant_id.clone(),
                date: r.date,
                weekday: r.weekday,
                group_key: r.group_key.clone(),
            })
            .collect(),
        values,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    Ok((records, matrix))
}

/// Reads `participant_id,age_bin,gender,extraversion,...,openness`, with
/// optional `age` and `study` columns.
pub fn read_profiles_csv<R: Read>(input: R) -> Result<Vec<ParticipantProfile>> {
    let mut rdr = csv_reader(input);
    let header = Header::read(&mut rdr)?;
    let pid_col = header.require("participant_id")?;
    let age_bin_col = header.require("age_bin")?;
    let gender_col = header.require("gender")?;
    let trait_cols = TRAIT_NAMES.iter().map(|n| header.require(n)).collect::<Result<Vec<_>>>()?;
    let age_col = header.optional("age");
    let study_col = header.optional("study");

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let age_bin: AgeBin = rec[age_bin_col]
            .parse()
            .map_err(|e| Error::schema(format!("line {line}: {e}")))?;
        let mut scores = [0.0; 5];
        for (t, &c) in trait_cols.iter().enumerate() {
            scores[t] = parse_value(&rec[c], TRAIT_NAMES[t], line)?
                .ok_or_else(|| Error::schema(format!("line {line}: column `{}` is empty", TRAIT_NAMES[t])))?;
        }
        let big_five = BigFive::new(scores).map_err(|e| Error::schema(format!("line {line}: {e}")))?;
        out.push(ParticipantProfile {
            participant_id: rec[pid_col].to_string(),
            age_bin,
            age: match age_col {
                Some(c) => parse_value(&rec[c], "age", line)?,
                None => None,
            },
            gender: rec[gender_col].to_string(),
            big_five,
            study: study_col.map(|c| rec[c].to_string()).filter(|s| !s.is_empty()),
        });
    }
    Ok(out)
}

pub fn write_profiles_csv<W: Write>(out: W, profiles: &[ParticipantProfile]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["participant_id", "age_bin", "age", "gender"];
    header.extend(TRAIT_NAMES);
    header.push("study");
    w.write_record(&header)?;
    for p in profiles {
        let mut row = vec![
            p.participant_id.clone(),
            p.age_bin.to_string(),
            fmt_opt(p.age),
            p.gender.clone(),
        ];
        row.extend(p.big_five.0.iter().map(|v| v.to_string()));
        row.push(p.study.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub type Episodes = BTreeMap<String, Vec<(NaiveDateTime, NaiveDateTime)>>;
pub type AccelSamples = BTreeMap<String, Vec<(NaiveDateTime, f64, f64, f64)>>;

fn timestamp(rec: &csv::StringRecord, col: usize, name: &str) -> Result<NaiveDateTime> {
    parse_timestamp(&rec[col]).ok_or_else(|| {
        Error::schema(format!("line {}: column `{name}`: `{}` is not an ISO-8601 timestamp", line_of(rec), &rec[col]))
    })
}

/// Reads `participant_id,start,end` episode events (lock or screen-on).
pub fn read_episode_csv<R: Read>(input: R) -> Result<Episodes> {
    let mut rdr = csv_reader(input);
    let header = Header::read(&mut rdr)?;
    let pid = header.require("participant_id")?;
    let start = header.require("start")?;
    let end = header.require("end")?;
    let mut out: Episodes = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let s = timestamp(&rec, start, "start")?;
        let e = timestamp(&rec, end, "end")?;
        out.entry(rec[pid].to_string()).or_default().push((s, e));
    }
    Ok(out)
}

/// Reads `participant_id,timestamp,ax,ay,az` accelerometer samples.
pub fn read_accelerometer_csv<R: Read>(input: R) -> Result<AccelSamples> {
    let mut rdr = csv_reader(input);
    let header = Header::read(&mut rdr)?;
    let pid = header.require("participant_id")?;
    let ts = header.require("timestamp")?;
    let (ax, ay, az) = (header.require("ax")?, header.require("ay")?, header.require("az")?);
    let mut out: AccelSamples = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let t = timestamp(&rec, ts, "timestamp")?;
        let num = |c: usize, n: &str| parse_value(&rec[c], n, line)?.ok_or_else(|| Error::schema(format!("line {line}: column `{n}` is empty")));
        out.entry(rec[pid].to_string()).or_default().push((t, num(ax, "ax")?, num(ay, "ay")?, num(az, "az")?));
    }
    Ok(out)
}

/// Raw sensor streams for the daily proxy features.
#[derive(Debug, Default, Clone)]
pub struct RawStreams {
    pub lock: Episodes,
    pub accelerometer: AccelSamples,
    pub screen: Episodes,
}

/// Builds one [`DayRecord`] per calendar day spanned by each participant's
/// streams.
///
/// Sleep for day D comes from the noon-to-noon window ending at noon on D.
/// A participant absent from a stream has that modality missing on every
/// day; a participant present in the screen stream has zero screen use on
/// days without episodes.
pub fn assemble_daily_records(streams: &RawStreams) -> Vec<DayRecord> {
    let mut participants: BTreeSet<&String> = BTreeSet::new();
    participants.extend(streams.lock.keys());
    participants.extend(streams.accelerometer.keys());
    participants.extend(streams.screen.keys());

    let mut out = Vec::new();
    for pid in participants {
        let mut dates: Vec<NaiveDate> = Vec::new();
        for (s, e) in streams.lock.get(pid).into_iter().flatten() {
            dates.push(e.date());
            dates.push(s.date());
        }
        dates.extend(streams.accelerometer.get(pid).into_iter().flatten().map(|s| s.0.date()));
        for (s, e) in streams.screen.get(pid).into_iter().flatten() {
            dates.push(s.date());
            dates.push(e.date());
        }
        let (Some(&first), Some(&last)) = (dates.iter().min(), dates.iter().max()) else {
            continue;
        };

        let mut accel_by_day: BTreeMap<NaiveDate, Vec<(NaiveDateTime, f64, f64, f64)>> = BTreeMap::new();
        for s in streams.accelerometer.get(pid).into_iter().flatten() {
            accel_by_day.entry(s.0.date()).or_default().push(*s);
        }

        let mut day = first;
        while day <= last {
            let mut features = [None; N_FEATURES];
            if let Some(eps) = streams.lock.get(pid) {
                let (w0, _) = sensors::sleep_window(day);
                if let Ok(s) = sensors::derive_sleep_from_lock(w0, eps) {
                    features[feature_index("sleep_bed").unwrap()] = Some(s.bedtime);
                    features[feature_index("sleep_wake").unwrap()] = Some(s.waketime);
                    features[feature_index("sleep_dur").unwrap()] = Some(s.duration);
                }
            }
            if let Some(samples) = accel_by_day.get(&day) {
                if let Ok(bins) = sensors::derive_mobility_from_accelerometer(samples) {
                    put_bins(&mut features, "mob_daily", &bins);
                }
            }
            if let Some(eps) = streams.screen.get(pid) {
                put_bins(&mut features, "scr_daily", &sensors::bin_screen_usage(day, eps));
            }
            out.push(DayRecord::new(pid.as_str(), day, None, features));
            day += Duration::days(1);
        }
    }
    out
}

fn put_bins(features: &mut [Option<f64>; N_FEATURES], daily_column: &str, bins: &DayBins) {
    let start = feature_index(daily_column).unwrap();
    features[start..start + 5].copy_from_slice(&bins.as_features());
}
