//! Subcommand implementations.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use routinesig::export;
use routinesig::gmm::{fit_gmm_traced, model_sweep, FitOptions};
use routinesig::ingest::io::{
    assemble_daily_records, read_accelerometer_csv, read_daily_csv_grouped, read_dataset_csv, read_episode_csv, read_profiles_csv,
    write_daily_csv, write_dataset_csv, write_profiles_csv, RawStreams,
};
use routinesig::ingest::profile::ParticipantProfile;
use routinesig::ingest::{apply_exclusions_audited, standardize, ExclusionAudit};
use routinesig::pipeline::{whole_period_signatures, PersistenceOptions};
use routinesig::signature::top_k_share;
use routinesig::stats::{build_design, AgeEncoding, PredictorSpec};
use routinesig::synth::synthetic_profiles;
use routinesig::transitions::{build_transitions, mean_population_transitions};
use routinesig::{
    analyze_persistence, assign, cluster_summary, generate, mixed_model, ols, paired_test, unit_days, CohortSpec, Error, FeatureMatrix,
    MixtureModel, PersistenceAnalysis, UnitDays, Variant,
};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::figures::{self, RankSeries};
use crate::output::{write_atomic, write_json, write_text, Provenance};
use crate::CliError;

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn read_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn input_or(cfg: &RunConfig, given: &Option<PathBuf>, default: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| cfg.out_path(default))
}

fn write_csv(path: &Path, prov: &Provenance, fill: impl FnOnce(&mut dyn Write, &str) -> Result<(), Error>) -> Result<(), CliError> {
    let preamble = prov.csv_preamble();
    write_atomic(path, |w| fill(w, &preamble).map_err(|e| CliError::at(path, e)))
}

/// Comment lines followed by a writer that knows nothing about them.
fn with_preamble(w: &mut dyn Write, preamble: &str) -> Result<(), Error> {
    for line in preamble.lines() {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn audit_rules(a: &ExclusionAudit) -> Value {
    let after_trim = a.rows_in - a.dropped_endpoint_days;
    let after_missing = after_trim - a.dropped_missing_days;
    json!([
        {"rule": "endpoint_days", "rows_in": a.rows_in, "rows_out": after_trim, "rows_dropped": a.dropped_endpoint_days},
        {"rule": "missing_features", "rows_in": after_trim, "rows_out": after_missing, "rows_dropped": a.dropped_missing_days},
        {
            "rule": "min_retained_days",
            "rows_in": after_missing,
            "rows_out": a.rows_out,
            "rows_dropped": a.dropped_short_participant_days,
            "participants_dropped": a.dropped_participants
        },
    ])
}

pub fn ingest(cfg: &RunConfig) -> Result<(), CliError> {
    let inputs = &cfg.inputs;
    let records = if let Some(p) = &inputs.daily {
        read_daily_csv_grouped(open(p)?, &cfg.group_column).map_err(|e| CliError::at(p, e))?
    } else if inputs.lock.is_some() || inputs.accelerometer.is_some() || inputs.screen.is_some() {
        let mut streams = RawStreams::default();
        if let Some(p) = &inputs.lock {
            streams.lock = read_episode_csv(open(p)?).map_err(|e| CliError::at(p, e))?;
        }
        if let Some(p) = &inputs.accelerometer {
            streams.accelerometer = read_accelerometer_csv(open(p)?).map_err(|e| CliError::at(p, e))?;
        }
        if let Some(p) = &inputs.screen {
            streams.screen = read_episode_csv(open(p)?).map_err(|e| CliError::at(p, e))?;
        }
        assemble_daily_records(&streams)
    } else {
        return Err(CliError::input("ingest needs --daily or at least one of --lock, --accelerometer, --screen"));
    };

    let (kept, audit) = apply_exclusions_audited(records);
    let matrix = standardize(&kept)?;
    let prov = Provenance::new(cfg);
    write_csv(&cfg.out_path("dataset.csv"), &prov, |w, pre| write_dataset_csv(w, Some(pre), &kept, &matrix))?;
    write_json(
        &cfg.out_path("exclusion_audit.json"),
        &prov,
        json!({ "totals": audit, "rules": audit_rules(&audit) }),
    )?;
    eprintln!(
        "ingest: {} rows in, {} rows out; {} of {} participants retained",
        audit.rows_in, audit.rows_out, audit.participants_out, audit.participants_in
    );
    if audit.rows_out == 0 {
        eprintln!("warning: no participant survived the exclusion rules");
    }
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<FeatureMatrix, CliError> {
    let path = input_or(cfg, &cfg.inputs.dataset, "dataset.csv");
    let (_, matrix) = read_dataset_csv(open(&path)?).map_err(|e| CliError::at(&path, e))?;
    if matrix.n_rows() == 0 {
        return Err(CliError::input(format!("{}: dataset has no rows", path.display())));
    }
    Ok(matrix)
}

fn write_model(cfg: &RunConfig, prov: &Provenance, model: &MixtureModel) -> Result<(), CliError> {
    write_json(&cfg.out_path("model.json"), prov, model.to_json())
}

pub fn fit(cfg: &RunConfig) -> Result<(), CliError> {
    let matrix = load_dataset(cfg)?;
    let opts = FitOptions {
        n_restarts: cfg.n_restarts,
        ..FitOptions::new(cfg.k, cfg.structure, cfg.seed())
    };
    let outcome = fit_gmm_traced(&matrix.values, &opts, &matrix.feature_names)?;
    let prov = Provenance::new(cfg);
    write_model(cfg, &prov, &outcome.model)?;
    let failed = outcome.restarts.iter().filter(|r| r.error.is_some()).count();
    eprintln!(
        "fit: K = {} {}, log-likelihood {:.4}, converged {}, {} of {} restarts failed",
        cfg.k,
        cfg.structure,
        outcome.model.loglik,
        outcome.model.converged,
        failed,
        outcome.restarts.len()
    );
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let matrix = load_dataset(cfg)?;
    let result = model_sweep(&matrix.values, &cfg.sweep_options(), &matrix.feature_names)?;
    let prov = Provenance::new(cfg);
    write_csv(&cfg.out_path("sweep.csv"), &prov, |w, pre| export::write_sweep_csv(w, Some(pre), &result.entries))?;
    write_model(cfg, &prov, result.selected_model())?;
    let best = result.selected_entry();
    eprintln!(
        "sweep: {} fits, selected K = {} {} (BIC {:.4})",
        result.entries.len(),
        best.k,
        best.structure,
        best.bic.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn check_schema(model: &MixtureModel, matrix: &FeatureMatrix) -> Result<(), CliError> {
    if !model.feature_names.is_empty() {
        for (i, name) in matrix.feature_names.iter().enumerate() {
            match model.feature_names.get(i) {
                Some(m) if m == name => {}
                Some(m) => return Err(Error::Schema(format!("model feature {i} is `{m}`, dataset column is `{name}`")).into()),
                None => return Err(Error::Schema(format!("dataset column `{name}` is not in the model")).into()),
            }
        }
        if let Some(extra) = model.feature_names.get(matrix.feature_names.len()) {
            return Err(Error::Schema(format!("model feature `{extra}` is missing from the dataset")).into());
        }
    }
    if model.n_features() != matrix.n_features() {
        return Err(Error::Schema(format!("model has {} features, dataset has {}", model.n_features(), matrix.n_features())).into());
    }
    Ok(())
}

fn write_assignments(path: &Path, prov: &Provenance, matrix: &FeatureMatrix, labels: &[usize]) -> Result<(), CliError> {
    let grouped = matrix.rows.iter().any(|r| r.group_key.is_some());
    write_csv(path, prov, |w, pre| {
        with_preamble(w, pre)?;
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["participant_id", "date", "weekday", "cluster_id"];
        if grouped {
            header.push("group_key");
        }
        out.write_record(&header)?;
        for (row, l) in matrix.rows.iter().zip(labels) {
            let mut rec = vec![row.participant_id.clone(), row.date.to_string(), u8::from(row.weekday).to_string(), l.to_string()];
            if grouped {
                rec.push(row.group_key.clone().unwrap_or_default());
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    })
}

fn persistence_summaries(cfg: &RunConfig, analysis: &PersistenceAnalysis) -> (Value, Value) {
    let mut tests = Vec::new();
    let mut summaries = Vec::new();
    for variant in [Variant::Signature, Variant::Transition] {
        for &metric in &cfg.metrics {
            let recs = analysis.records_for(variant, metric);
            let d_self: Vec<f64> = recs.iter().map(|r| r.d_self).collect();
            let d_ref: Vec<f64> = recs.iter().map(|r| r.d_ref).collect();
            let (ms, ss) = mean_sd(&d_self);
            let (mr, sr) = mean_sd(&d_ref);
            let head = json!({
                "variant": variant,
                "metric": metric,
                "n": recs.len(),
                "mean_d_self": ms,
                "sd_d_self": ss,
                "mean_d_ref": mr,
                "sd_d_ref": sr,
            });
            summaries.push(head.clone());
            let mut entry = head;
            match paired_test(&d_self, &d_ref) {
                Ok(r) => entry["test"] = serde_json::to_value(r).expect("test serializes"),
                Err(e) => entry["error"] = json!(e.to_string()),
            }
            tests.push(entry);
        }
    }
    (json!({ "tests": tests }), Value::Array(summaries))
}

fn regression_report(cfg: &RunConfig, analysis: &PersistenceAnalysis, profiles: &[ParticipantProfile]) -> Value {
    let by_id: BTreeMap<&str, &ParticipantProfile> = profiles.iter().map(|p| (p.participant_id.as_str(), p)).collect();
    let mut models = Vec::new();
    for variant in [Variant::Signature, Variant::Transition] {
        for &metric in &cfg.metrics {
            let recs = analysis.records_for(variant, metric);
            let matched: Vec<_> = recs.iter().filter_map(|r| by_id.get(r.participant_id.as_str()).map(|p| (*r, *p))).collect();
            let ids: Vec<String> = matched.iter().map(|(r, _)| r.participant_id.clone()).collect();
            let repeated = ids.iter().collect::<BTreeSet<_>>().len() < ids.len();
            let studies: BTreeSet<&str> = matched.iter().filter_map(|(_, p)| p.study.as_deref()).collect();
            let spec = PredictorSpec {
                age: cfg
                    .age_encoding
                    .unwrap_or(if repeated { AgeEncoding::Continuous } else { AgeEncoding::Binary }),
                study_effects: cfg.pool_studies && studies.len() > 1,
            };
            let mut entry = json!({
                "variant": variant,
                "metric": metric,
                "outcome": "d_self",
                "model": if repeated { "mixed" } else { "ols" },
                "age_encoding": spec.age,
                "study_effects": spec.study_effects,
                "n_without_profile": recs.len() - matched.len(),
            });
            let rows: Vec<&ParticipantProfile> = matched.iter().map(|(_, p)| *p).collect();
            let y: Vec<f64> = matched.iter().map(|(r, _)| r.d_self).collect();
            let fitted = build_design(&rows, spec).and_then(|design| {
                if repeated {
                    mixed_model(&design, &y, &ids).map(|m| serde_json::to_value(m).expect("result serializes"))
                } else {
                    ols(&design, &y).map(|m| serde_json::to_value(m).expect("result serializes"))
                }
            });
            match fitted {
                Ok(v) => entry["result"] = v,
                Err(e) => entry["error"] = json!(e.to_string()),
            }
            models.push(entry);
        }
    }
    json!({ "models": models })
}

fn rank_series(k: usize, units: &[UnitDays]) -> Result<RankSeries, CliError> {
    let sigs = whole_period_signatures(units, k)?;
    let (mut mean, mut sd) = (Vec::with_capacity(k), Vec::with_capacity(k));
    for r in 0..k {
        let col: Vec<f64> = sigs.iter().map(|s| s.proportions[r]).collect();
        let (m, s) = mean_sd(&col);
        mean.push(m);
        sd.push(s);
    }
    Ok(RankSeries { k, mean, sd })
}

fn sensitivity_series(cfg: &RunConfig, model: &MixtureModel, matrix: &FeatureMatrix, units: &[UnitDays]) -> Result<Vec<RankSeries>, CliError> {
    let ks = if cfg.k_range.is_empty() { vec![model.k()] } else { cfg.k_range.clone() };
    ks.into_iter()
        .map(|k| {
            if k == model.k() {
                return rank_series(k, units);
            }
            let opts = FitOptions {
                n_restarts: cfg.n_restarts,
                ..FitOptions::new(k, model.structure(), cfg.seed())
            };
            let fitted = fit_gmm_traced(&matrix.values, &opts, &matrix.feature_names)?.model;
            let labels = assign(&fitted, &matrix.values)?.labels;
            rank_series(k, &unit_days(matrix, &labels)?)
        })
        .collect()
}

fn write_rank_curves(path: &Path, prov: &Provenance, series: &[RankSeries]) -> Result<(), CliError> {
    write_csv(path, prov, |w, pre| {
        with_preamble(w, pre)?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "rank", "mean_proportion", "sd_proportion"])?;
        for s in series {
            for (r, (m, sd)) in s.mean.iter().zip(&s.sd).enumerate() {
                out.write_record([s.k.to_string(), (r + 1).to_string(), m.to_string(), sd.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    })
}

pub fn analyze(cfg: &RunConfig) -> Result<(), CliError> {
    let matrix = load_dataset(cfg)?;
    let model_path = input_or(cfg, &cfg.inputs.model, "model.json");
    let model = MixtureModel::from_json_str(&read_string(&model_path)?).map_err(|e| CliError::at(&model_path, e))?;
    check_schema(&model, &matrix)?;
    let profiles = match &cfg.inputs.profiles {
        Some(p) => Some(read_profiles_csv(open(p)?).map_err(|e| CliError::at(p, e))?),
        None => None,
    };

    let k = model.k();
    let labels = assign(&model, &matrix.values)?.labels;
    let units = unit_days(&matrix, &labels)?;
    let opts = PersistenceOptions {
        segment_length: cfg.segment_length,
        metrics: cfg.metrics.clone(),
        aggregation: cfg.aggregation,
        max_gap_days: cfg.max_gap_days,
    };
    let analysis = analyze_persistence(&units, k, &opts)?;
    let summary = cluster_summary(&labels, &matrix, k)?;

    let whole: Vec<_> = units
        .iter()
        .filter_map(|u| build_transitions(&u.days, k, cfg.max_gap_days).ok())
        .collect();
    let mean_transitions = if whole.is_empty() {
        vec![vec![None; k]; k]
    } else {
        mean_population_transitions(&whole)?
    };
    let series = sensitivity_series(cfg, &model, &matrix, &units)?;
    let top2: Vec<f64> = whole_period_signatures(&units, k)?.iter().map(|s| top_k_share(s, 2)).collect();

    let prov = Provenance::new(cfg);
    let out = |name: &str| cfg.out_path(name);
    write_assignments(&out("assignments.csv"), &prov, &matrix, &labels)?;
    write_csv(&out("signatures.csv"), &prov, |w, pre| export::write_signatures_csv(w, Some(pre), &analysis.signatures))?;
    write_csv(&out("transitions.csv"), &prov, |w, pre| export::write_transitions_csv(w, Some(pre), &analysis.transitions))?;
    write_csv(&out("persistence.csv"), &prov, |w, pre| export::write_persistence_csv(w, Some(pre), &analysis.records))?;
    write_csv(&out("clusters.csv"), &prov, |w, pre| export::write_cluster_summary_csv(w, Some(pre), &summary))?;
    write_rank_curves(&out("rank_curves.csv"), &prov, &series)?;

    let (tests, persistence) = persistence_summaries(cfg, &analysis);
    write_json(&out("paired_tests.json"), &prov, tests)?;
    if let Some(p) = &profiles {
        write_json(&out("regression.json"), &prov, regression_report(cfg, &analysis, p))?;
    }

    let comment = prov.markup_comment();
    let figs = out("figures");
    write_text(&figs.join("centroid_heatmap.svg"), &figures::centroid_heatmap(&summary, &comment))?;
    write_text(&figs.join("cluster_days.svg"), &figures::cluster_days(&summary, &comment))?;
    write_text(&figs.join("weekday_weekend.svg"), &figures::weekday_weekend(&summary, &comment))?;
    write_text(&figs.join("transition_heatmap.svg"), &figures::transition_heatmap(&mean_transitions, &comment))?;
    write_text(&figs.join("rank_curves.svg"), &figures::rank_curves(&series, &comment))?;

    let (top2_mean, top2_sd) = mean_sd(&top2);
    let participants: BTreeSet<&str> = matrix.rows.iter().map(|r| r.participant_id.as_str()).collect();
    let doc = json!({
        "n_rows": matrix.n_rows(),
        "n_participants": participants.len(),
        "n_units": units.len(),
        "k": k,
        "structure": model.structure(),
        "segment_length": cfg.segment_length,
        "cluster_days": summary.day_counts,
        "weekend_share": (0..k).map(|c| summary.weekend_share(c)).collect::<Vec<_>>(),
        "top2_share": { "mean": top2_mean, "sd": top2_sd },
        "persistence": persistence,
        "excluded_signature": analysis.excluded_signature,
        "excluded_transition": analysis.excluded_transition,
        "regression": profiles.is_some(),
    });
    write_json(&out("summary.json"), &prov, doc)?;
    eprintln!(
        "analyze: {} units, {} persistence records, {} excluded",
        units.len(),
        analysis.records.len(),
        analysis.excluded_signature.len()
    );
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let mut spec = match &cfg.inputs.spec {
        Some(p) => CohortSpec::from_json_str(&read_string(p)?).map_err(|e| CliError::at(p, e))?,
        None => CohortSpec::reference(),
    };
    if let Some(seed) = cfg.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let cohort = generate(&spec)?;
    let profiles = synthetic_profiles(&spec);
    let prov = Provenance::new(cfg);
    write_csv(&cfg.out_path("cohort.csv"), &prov, |w, pre| {
        with_preamble(w, pre)?;
        write_daily_csv(w, &cohort.records)
    })?;
    write_csv(&cfg.out_path("profiles.csv"), &prov, |w, pre| {
        with_preamble(w, pre)?;
        write_profiles_csv(w, &profiles)
    })?;
    let truth: Value = serde_json::from_str(&cohort.truth.to_json_string()?).expect("truth is valid json");
    write_json(&cfg.out_path("truth.json"), &prov, truth)?;
    eprintln!("synth: {} participants, {} days written", spec.n_participants, cohort.records.len());
    Ok(())
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    serde_json::from_str(&read_string(path)?).map_err(|e| CliError::at(path, e.into()))
}

fn fmt_num(v: &Value) -> String {
    match v.as_f64() {
        Some(x) if x != 0.0 && x.abs() < 1e-3 => format!("{x:.3e}"),
        Some(x) => format!("{x:.4}"),
        None => "n/a".into(),
    }
}

pub fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let summary = read_json(&cfg.out_path("summary.json"))?;
    let tests = read_json(&cfg.out_path("paired_tests.json"))?;
    let audit_path = cfg.out_path("exclusion_audit.json");
    let regression_path = cfg.out_path("regression.json");
    let prov = Provenance::new(cfg);

    let mut md = String::new();
    md.push_str(&prov.markup_comment());
    md.push_str("\n\n# Routine signature report\n\n");
    md.push_str(&format!(
        "{} person-days from {} participants ({} analysis units), K = {} ({}), segment length {} days.\n\n",
        summary["n_rows"], summary["n_participants"], summary["n_units"], summary["k"], summary["structure"].as_str().unwrap_or("?"),
        summary["segment_length"]
    ));
    if audit_path.exists() {
        let audit = read_json(&audit_path)?;
        md.push_str("## Exclusions\n\n| rule | rows in | rows out | dropped |\n|---|---|---|---|\n");
        for r in audit["rules"].as_array().into_iter().flatten() {
            md.push_str(&format!("| {} | {} | {} | {} |\n", r["rule"].as_str().unwrap_or(""), r["rows_in"], r["rows_out"], r["rows_dropped"]));
        }
        md.push('\n');
    }
    md.push_str("## Clusters\n\n| cluster | days | weekend share |\n|---|---|---|\n");
    let days = summary["cluster_days"].as_array().cloned().unwrap_or_default();
    for (c, n) in days.iter().enumerate() {
        md.push_str(&format!("| {c} | {n} | {} |\n", fmt_num(&summary["weekend_share"][c])));
    }
    md.push_str(&format!(
        "\nTop-2 routine share: {} ± {}\n\n",
        fmt_num(&summary["top2_share"]["mean"]),
        fmt_num(&summary["top2_share"]["sd"])
    ));
    md.push_str("## Persistence\n\n| variant | metric | n | d_self | d_ref | t | df | p | Wilcoxon p |\n|---|---|---|---|---|---|---|---|---|\n");
    for t in tests["tests"].as_array().into_iter().flatten() {
        md.push_str(&format!(
            "| {} | {} | {} | {} ± {} | {} ± {} | {} | {} | {} | {} |\n",
            t["variant"].as_str().unwrap_or(""),
            t["metric"].as_str().unwrap_or(""),
            t["n"],
            fmt_num(&t["mean_d_self"]),
            fmt_num(&t["sd_d_self"]),
            fmt_num(&t["mean_d_ref"]),
            fmt_num(&t["sd_d_ref"]),
            fmt_num(&t["test"]["t_statistic"]),
            fmt_num(&t["test"]["degrees_freedom"]),
            fmt_num(&t["test"]["p_value"]),
            fmt_num(&t["test"]["wilcoxon_p"]),
        ));
    }
    if regression_path.exists() {
        let reg = read_json(&regression_path)?;
        md.push_str("\n## Regression of d_self\n");
        for m in reg["models"].as_array().into_iter().flatten() {
            md.push_str(&format!(
                "\n### {} / {} ({})\n\n",
                m["variant"].as_str().unwrap_or(""),
                m["metric"].as_str().unwrap_or(""),
                m["model"].as_str().unwrap_or("")
            ));
            if let Some(e) = m["error"].as_str() {
                md.push_str(&format!("Not fitted: {e}\n"));
                continue;
            }
            let r = &m["result"];
            let coefs = r.get("coefficients").or_else(|| r.get("fixed_effects"));
            md.push_str("| predictor | b | 95% CI | p |\n|---|---|---|---|\n");
            for c in coefs.and_then(Value::as_array).into_iter().flatten() {
                md.push_str(&format!(
                    "| {} | {} | [{}, {}] | {} |\n",
                    c["name"].as_str().unwrap_or(""),
                    fmt_num(&c["estimate"]),
                    fmt_num(&c["ci_low"]),
                    fmt_num(&c["ci_high"]),
                    fmt_num(&c["p"])
                ));
            }
            if r.get("r_squared").is_some() {
                md.push_str(&format!("\nR² = {}, adjusted {}, n = {}\n", fmt_num(&r["r_squared"]), fmt_num(&r["adj_r_squared"]), r["n"]));
            } else {
                md.push_str(&format!(
                    "\nR² (marg./cond.) = {} / {}, n = {}, groups = {}\n",
                    fmt_num(&r["marginal_r2"]),
                    fmt_num(&r["conditional_r2"]),
                    r["n"],
                    r["n_groups"]
                ));
            }
        }
    }
    md.push_str("\n## Figures\n\n");
    for f in ["centroid_heatmap", "cluster_days", "weekday_weekend", "transition_heatmap", "rank_curves"] {
        md.push_str(&format!("- ![{f}](figures/{f}.svg)\n"));
    }
    write_text(&cfg.out_path("report.md"), &md)
}
