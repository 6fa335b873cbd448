//! CSV writers for analysis outputs. Each accepts an optional preamble that
//! is written as `# `-prefixed comment lines ahead of the header.

use std::io::Write;

use crate::error::Result;
use crate::gmm::SweepEntry;
use crate::signature::{ClusterSummary, PersistenceRecord, RoutineSignature, SegmentPair};
use crate::transitions::TransitionMatrix;

fn start<W: Write>(mut out: W, preamble: Option<&str>) -> Result<csv::Writer<W>> {
    if let Some(p) = preamble {
        for line in p.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    Ok(csv::Writer::from_writer(out))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn header(base: &[&str], grouped: bool) -> Vec<String> {
    let mut h: Vec<String> = base.iter().map(|s| s.to_string()).collect();
    if grouped {
        h.push("group_key".into());
    }
    h
}

fn with_group(mut row: Vec<String>, grouped: bool, group: &Option<String>) -> Vec<String> {
    if grouped {
        row.push(group.clone().unwrap_or_default());
    }
    row
}

pub const SIGNATURE_COLUMNS: [&str; 6] = ["participant_id", "segment_id", "rank", "cluster_id", "count", "proportion"];
pub const TRANSITION_COLUMNS: [&str; 6] = ["participant_id", "segment_id", "from_cluster", "to_cluster", "count", "probability"];
pub const PERSISTENCE_COLUMNS: [&str; 6] = ["participant_id", "variant", "metric", "d_self", "d_ref", "n_reference_peers"];

/// One row per (participant, segment, rank). A trailing `group_key` column
/// is added when any unit carries a group.
pub fn write_signatures_csv<W: Write>(
    out: W,
    preamble: Option<&str>,
    pairs: &[SegmentPair<RoutineSignature>],
) -> Result<()> {
    let grouped = pairs.iter().any(|p| p.group_key.is_some());
    let mut w = start(out, preamble)?;
    w.write_record(header(&SIGNATURE_COLUMNS, grouped))?;
    for p in pairs {
        for sig in [&p.first, &p.second] {
            for (rank, (&cluster, &prop)) in sig.order.iter().zip(&sig.proportions).enumerate() {
                let row = vec![
                    sig.participant_id.clone(),
                    sig.segment_id.to_string(),
                    (rank + 1).to_string(),
                    cluster.to_string(),
                    sig.counts[cluster].to_string(),
                    prop.to_string(),
                ];
                w.write_record(with_group(row, grouped, &p.group_key))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Full K x K table per segment; undefined source rows have empty probabilities.
pub fn write_transitions_csv<W: Write>(
    out: W,
    preamble: Option<&str>,
    pairs: &[SegmentPair<TransitionMatrix>],
) -> Result<()> {
    let grouped = pairs.iter().any(|p| p.group_key.is_some());
    let mut w = start(out, preamble)?;
    w.write_record(header(&TRANSITION_COLUMNS, grouped))?;
    for p in pairs {
        for m in [&p.first, &p.second] {
            for a in 0..m.k() {
                for b in 0..m.k() {
                    let row = vec![
                        m.participant_id.clone(),
                        m.segment_id.to_string(),
                        a.to_string(),
                        b.to_string(),
                        m.counts[a][b].to_string(),
                        opt(m.row(a).map(|r| r[b])),
                    ];
                    w.write_record(with_group(row, grouped, &p.group_key))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_persistence_csv<W: Write>(out: W, preamble: Option<&str>, records: &[PersistenceRecord]) -> Result<()> {
    let grouped = records.iter().any(|r| r.group_key.is_some());
    let mut w = start(out, preamble)?;
    w.write_record(header(&PERSISTENCE_COLUMNS, grouped))?;
    for r in records {
        let row = vec![
            r.participant_id.clone(),
            r.variant.to_string(),
            r.metric.to_string(),
            r.d_self.to_string(),
            r.d_ref.to_string(),
            r.n_reference_peers.to_string(),
        ];
        w.write_record(with_group(row, grouped, &r.group_key))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: W, preamble: Option<&str>, entries: &[SweepEntry]) -> Result<()> {
    let mut w = start(out, preamble)?;
    w.write_record([
        "k",
        "structure",
        "bic",
        "loglik",
        "n_parameters",
        "mean_bhattacharyya",
        "min_bhattacharyya",
        "converged",
        "error",
    ])?;
    for e in entries {
        w.write_record([
            e.k.to_string(),
            e.structure.to_string(),
            opt(e.bic),
            opt(e.loglik),
            e.n_parameters.to_string(),
            opt(e.mean_bhattacharyya),
            opt(e.min_bhattacharyya),
            e.converged.to_string(),
            e.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Day counts, weekday/weekend split and centroid per cluster.
pub fn write_cluster_summary_csv<W: Write>(out: W, preamble: Option<&str>, summary: &ClusterSummary) -> Result<()> {
    let mut w = start(out, preamble)?;
    let mut h: Vec<String> = ["cluster_id", "n_days", "weekday_days", "weekend_days", "weekday_share", "weekend_share"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(summary.feature_names.iter().map(|f| format!("mean_z_{f}")));
    w.write_record(&h)?;
    for c in 0..summary.k() {
        let mut row = vec![
            c.to_string(),
            summary.day_counts[c].to_string(),
            summary.weekday_counts[c].to_string(),
            summary.weekend_counts[c].to_string(),
            opt(summary.weekday_share(c)),
            opt(summary.weekend_share(c)),
        ];
        match &summary.centroids[c] {
            Some(m) => row.extend(m.iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), summary.feature_names.len())),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signature::{build_signature, Metric, Variant};

    #[test]
    fn signature_rows_follow_rank_order() {
        let pairs = vec![SegmentPair {
            participant_id: "p".into(),
            group_key: None,
            first: build_signature(&[1, 1, 0], 2).unwrap().labelled("p", 1),
            second: build_signature(&[0], 2).unwrap().labelled("p", 2),
        }];
        let mut buf = Vec::new();
        write_signatures_csv(&mut buf, Some("run=1"), &pairs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# run=1");
        assert_eq!(lines[1], SIGNATURE_COLUMNS.join(","));
        assert_eq!(lines[2], "p,1,1,1,2,0.6666666666666666");
        assert_eq!(lines[3], "p,1,2,0,1,0.3333333333333333");
        assert_eq!(lines[5], "p,2,2,1,0,0");
    }

    #[test]
    fn undefined_transition_rows_are_blank() {
        let m = TransitionMatrix::from_counts(vec![vec![2, 0], vec![0, 0]]).unwrap().labelled("p", 1);
        let pairs = vec![SegmentPair {
            participant_id: "p".into(),
            group_key: None,
            first: m.clone(),
            second: m.labelled("p", 2),
        }];
        let mut buf = Vec::new();
        write_transitions_csv(&mut buf, None, &pairs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "p,1,0,0,2,1");
        assert_eq!(lines[3], "p,1,1,0,0,");
        assert_eq!(lines.len(), 1 + 8);
    }

    #[test]
    fn persistence_adds_group_column_only_when_grouped() {
        let mut r = PersistenceRecord {
            participant_id: "p".into(),
            group_key: None,
            variant: Variant::Signature,
            metric: Metric::Jsd,
            d_self: 0.25,
            d_ref: 0.5,
            n_reference_peers: 3,
        };
        let mut buf = Vec::new();
        write_persistence_csv(&mut buf, None, std::slice::from_ref(&r)).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\np,signature,jsd,0.25,0.5,3\n", PERSISTENCE_COLUMNS.join(",")));
        r.group_key = Some("y1".into());
        let mut buf = Vec::new();
        write_persistence_csv(&mut buf, None, &[r]).unwrap();
        assert!(String::from_utf8(buf).unwrap().ends_with("n_reference_peers,group_key\np,signature,jsd,0.25,0.5,3,y1\n"));
    }
}
