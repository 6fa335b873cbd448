//! End-to-end acceptance checks against the synthetic oracle and exact
//! fixtures. Prints one PASS/FAIL line per criterion and exits non-zero if
//! any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use chrono::{Days, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use routinesig::gmm::{bhattacharyya, model_sweep, n_parameters, SweepOptions};
use routinesig::ingest::{apply_exclusions, standardize};
use routinesig::pipeline::UnitDays;
use routinesig::signature::{build_signature, Variant};
use routinesig::stats::Design;
use routinesig::synth::{match_labels, ChainMode, EmissionSpec};
use routinesig::{
    analyze_persistence, assign, cluster_summary, fit_gmm, generate, jsd, mixed_model, ols, paired_test, score_recovery,
    transition_distance, unit_days, CohortSpec, CovarianceStructure, FeatureMatrix, FitOptions, Metric, PersistenceAnalysis,
    PersistenceOptions, SyntheticCohort,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn prepare(spec: &CohortSpec) -> (SyntheticCohort, FeatureMatrix) {
    let cohort = generate(spec).expect("cohort generates");
    let kept = apply_exclusions(cohort.records.clone());
    let matrix = standardize(&kept).expect("standardizes");
    (cohort, matrix)
}

fn fitted_labels(matrix: &FeatureMatrix, k: usize, seed: u64, restarts: usize) -> Vec<usize> {
    let opts = FitOptions {
        n_restarts: restarts,
        ..FitOptions::new(k, CovarianceStructure::Full, seed)
    };
    let model = fit_gmm(&matrix.values, &opts).expect("fit succeeds");
    assign(&model, &matrix.values).expect("assigns").labels
}

fn persistence(matrix: &FeatureMatrix, labels: &[usize], k: usize, segment: usize) -> PersistenceAnalysis {
    let units = unit_days(matrix, labels).expect("units");
    analyze_persistence(&units, k, &PersistenceOptions::new(segment)).expect("persistence")
}

fn columns(a: &PersistenceAnalysis, variant: Variant, metric: Metric) -> (Vec<f64>, Vec<f64>) {
    let recs = a.records_for(variant, metric);
    (recs.iter().map(|r| r.d_self).collect(), recs.iter().map(|r| r.d_ref).collect())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn mixture_recovery() -> Outcome {
    let start = Instant::now();
    let spec = CohortSpec {
        emissions: EmissionSpec::Preset { min_bhattacharyya: 3.0 },
        weight_concentration: 10.0,
        seed: 1,
        ..CohortSpec::reference()
    };
    let (cohort, matrix) = prepare(&spec);
    let t = &cohort.truth;
    let mut min_b = f64::INFINITY;
    for i in 0..t.means.len() {
        for j in i + 1..t.means.len() {
            let m = |v: &Vec<f64>| DVector::from_column_slice(v);
            let c = |v: &Vec<Vec<f64>>| DMatrix::from_fn(v.len(), v.len(), |r, s| v[r][s]);
            let b = bhattacharyya(&m(&t.means[i]), &c(&t.covariances[i]), &m(&t.means[j]), &c(&t.covariances[j])).unwrap();
            min_b = min_b.min(b);
        }
    }
    let opts = SweepOptions {
        k_values: (2..=8).collect(),
        structures: vec![CovarianceStructure::Full, CovarianceStructure::Diagonal],
        seed: 1,
        n_restarts: 2,
        ..SweepOptions::default()
    };
    let sweep = model_sweep(&matrix.values, &opts, &matrix.feature_names).expect("sweep");
    let best = sweep.selected_entry();
    let labels = assign(sweep.selected_model(), &matrix.values).unwrap().labels;
    let report = score_recovery(t, &matrix.rows, &labels, best.k).unwrap();
    let secs = start.elapsed().as_secs_f64();
    check(
        min_b >= 2.0 && best.k == 4 && best.structure == CovarianceStructure::Full && report.ari >= 0.90 && secs <= 60.0,
        format!(
            "min pairwise B {min_b:.3}; selected K={} {}; ARI {:.4}; matched accuracy {:.4}; {secs:.1} s",
            best.k, best.structure, report.ari, report.matched_accuracy
        ),
    )
}

fn true_labels(cohort: &SyntheticCohort, matrix: &FeatureMatrix) -> Vec<usize> {
    let truth: BTreeMap<(&str, NaiveDate), usize> = cohort
        .truth
        .participants
        .iter()
        .flat_map(|p| p.days.iter().map(move |&(d, l)| ((p.participant_id.as_str(), d), l)))
        .collect();
    matrix.rows.iter().map(|r| truth[&(r.participant_id.as_str(), r.date)]).collect()
}

fn signature_separation() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (n_days, segment, alpha) in [(300, 135, 1e-6), (62, 30, 1e-3)] {
        let spec = CohortSpec {
            n_days,
            seed: 2 + n_days as u64,
            ..CohortSpec::reference()
        };
        let (cohort, matrix) = prepare(&spec);
        let generated = true_labels(&cohort, &matrix);
        let fitted = fitted_labels(&matrix, 4, 2, 2);
        for (source, labels, required) in [("generated", &generated, true), ("fitted", &fitted, segment == 135)] {
            let a = persistence(&matrix, labels, 4, segment);
            for metric in Metric::ALL {
                let (ds, dr) = columns(&a, Variant::Signature, metric);
                let t = paired_test(&ds, &dr).unwrap();
                let pass = ds.len() == 100 && mean(&ds) < mean(&dr) && t.p_value < alpha;
                if required {
                    ok &= pass;
                }
                lines.push(format!(
                    "{segment}d {source} {metric}: n={} d_self {:.4} vs d_ref {:.4}, p {:.2e}{}",
                    ds.len(),
                    mean(&ds),
                    mean(&dr),
                    t.p_value,
                    if required { "" } else { " (informational)" }
                ));
            }
        }
    }
    check(ok, lines.join("; "))
}

fn transition_separation() -> Outcome {
    let spec = CohortSpec {
        chain_mode: ChainMode::Markov,
        chain_concentration: 1.0,
        seed: 3,
        ..CohortSpec::reference()
    };
    let (_, matrix) = prepare(&spec);
    let labels = fitted_labels(&matrix, 4, 3, 2);
    let a = persistence(&matrix, &labels, 4, 135);
    let mut lines = Vec::new();
    let mut ok = true;
    for metric in Metric::ALL {
        let (ds, dr) = columns(&a, Variant::Transition, metric);
        let t = paired_test(&ds, &dr).unwrap();
        let pass = ds.len() == 100 && mean(&ds) < mean(&dr) && t.p_value < 1e-3;
        ok &= pass;
        lines.push(format!("{metric}: n={} d_self {:.4} < d_ref {:.4}, p {:.2e}", ds.len(), mean(&ds), mean(&dr), t.p_value));
    }
    check(ok, lines.join("; "))
}

fn null_control() -> Outcome {
    let mut rejections: BTreeMap<(Variant, Metric), usize> = BTreeMap::new();
    let replicates = 50;
    for r in 0..replicates {
        let spec = CohortSpec {
            n_participants: 40,
            n_days: 122,
            chain_mode: ChainMode::Markov,
            shared_parameters: true,
            seed: 4000 + r,
            ..CohortSpec::reference()
        };
        let (_, matrix) = prepare(&spec);
        let labels = fitted_labels(&matrix, 4, r, 1);
        let a = persistence(&matrix, &labels, 4, 60);
        for variant in [Variant::Signature, Variant::Transition] {
            for metric in Metric::ALL {
                let (ds, dr) = columns(&a, variant, metric);
                let p = paired_test(&ds, &dr).unwrap().p_value;
                *rejections.entry((variant, metric)).or_default() += usize::from(p < 0.01);
            }
        }
    }
    let ok = rejections.values().all(|&n| replicates as usize - n >= 45);
    let detail: Vec<String> = rejections
        .iter()
        .map(|((v, m), n)| format!("{} {m}: {} of {replicates} not rejected", v.name(), replicates as usize - n))
        .collect();
    check(ok, detail.join("; "))
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.log2()).sum::<f64>()
}

fn metric_fixtures() -> Outcome {
    let (p, q) = ([0.5, 0.5], [1.0, 0.0]);
    let m = [0.75, 0.25];
    let oracle = entropy(&m) - 0.5 * (entropy(&p) + entropy(&q));
    let j = jsd(&p, &q).unwrap();
    let disjoint = jsd(&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
    let one = DMatrix::from_element(1, 1, 1.0);
    let b = bhattacharyya(&DVector::from_element(1, 0.0), &one, &DVector::from_element(1, 2.0), &one).unwrap();
    let b_oracle = 2.0f64.powi(2) / 8.0;
    let (k, d) = (8, 13);
    let count_oracle = (k - 1) + k * d + k * d * (d + 1) / 2;
    let count = n_parameters(k, d, CovarianceStructure::Full);
    check(
        (j - oracle).abs() <= 1e-12 && (j - 0.311278).abs() < 1e-6 && disjoint == 1.0 && (b - b_oracle).abs() <= 1e-12 && count == 839 && count == count_oracle,
        format!("jsd {j:.12} (oracle {oracle:.12}); disjoint {disjoint}; Bhattacharyya {b:.12}; BIC parameters {count}"),
    )
}

fn random_units(rng: &mut impl Rng, n: usize, days: usize, k: usize) -> Vec<UnitDays> {
    let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
    (0..n)
        .map(|i| {
            let bias = rng.random_range(0..k);
            UnitDays {
                participant_id: format!("U{i:03}"),
                group_key: None,
                days: (0..days)
                    .filter_map(|t| {
                        let l = if rng.random_bool(0.4) { bias } else { rng.random_range(0..k) };
                        rng.random_bool(0.95).then(|| (start + Days::new(t as u64), l))
                    })
                    .collect(),
            }
        })
        .collect()
}

fn invariance_suite() -> Outcome {
    let mut rng = StdRng::seed_from_u64(6);
    let mut worst_sig: f64 = 0.0;
    let mut worst_trans: f64 = 0.0;
    let mut compared = 0usize;
    for _ in 0..40 {
        let k = rng.random_range(2..=8);
        let units = random_units(&mut rng, 12, 130, k);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let permuted: Vec<UnitDays> = units
            .iter()
            .map(|u| UnitDays {
                days: u.days.iter().map(|&(d, l)| (d, perm[l])).collect(),
                ..u.clone()
            })
            .collect();
        let opts = PersistenceOptions::new(60);
        let a = analyze_persistence(&units, k, &opts).unwrap();
        let b = analyze_persistence(&permuted, k, &opts).unwrap();
        for metric in Metric::ALL {
            for (x, y) in a.records_for(Variant::Signature, metric).iter().zip(b.records_for(Variant::Signature, metric)) {
                worst_sig = worst_sig.max((x.d_self - y.d_self).abs()).max((x.d_ref - y.d_ref).abs());
                compared += 1;
            }
        }
        for (x, y) in a.transitions.iter().zip(&b.transitions) {
            let d_orig = transition_distance(&x.first, &x.second);
            let d_perm = transition_distance(&y.first, &y.second);
            if let (Ok(u), Ok(v)) = (d_orig, d_perm) {
                worst_trans = worst_trans.max((u - v).abs());
            }
            let cross_orig = transition_distance(&x.first, &a.transitions[0].second);
            let cross_perm = transition_distance(&y.first, &b.transitions[0].second);
            if let (Ok(u), Ok(v)) = (cross_orig, cross_perm) {
                worst_trans = worst_trans.max((u - v).abs());
            }
        }
    }

    let mut bad = 0usize;
    for _ in 0..10_000 {
        let k = rng.random_range(1..=12);
        let n = rng.random_range(1..=200);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let sig = build_signature(&labels, k).unwrap();
        let sorted = sig.proportions.windows(2).all(|w| w[0] >= w[1]);
        let total: f64 = sig.proportions.iter().sum();
        if !sorted || (total - 1.0).abs() > 1e-12 {
            bad += 1;
        }
    }
    check(
        worst_sig <= 1e-12 && worst_trans <= 1e-12 && bad == 0 && compared > 0,
        format!("{compared} signature records, max change {worst_sig:.1e}; transition max change {worst_trans:.1e}; {bad} of 10000 signatures malformed"),
    )
}

fn weekend_structure() -> Outcome {
    let spec = CohortSpec {
        emissions: EmissionSpec::Preset { min_bhattacharyya: 3.0 },
        weight_concentration: 20.0,
        weight_base: Some(vec![0.4, 0.3, 0.22, 0.08]),
        weekend_modulation: Some(vec![1.0, 1.0, 1.0, 4.0]),
        seed: 7,
        ..CohortSpec::reference()
    };
    let (cohort, matrix) = prepare(&spec);
    let labels = fitted_labels(&matrix, 4, 7, 2);
    let summary = cluster_summary(&labels, &matrix, 4).unwrap();
    let true_labels = true_labels(&cohort, &matrix);
    let mapping = match_labels(&labels, &true_labels, 4, 4).unwrap();
    let Some(cluster) = mapping.iter().position(|m| *m == Some(3)) else {
        return Err("no inferred cluster matched the boosted routine".into());
    };
    let share = summary.weekend_share(cluster).unwrap_or(0.0);
    let others: Vec<String> = (0..4)
        .filter(|&c| c != cluster)
        .map(|c| format!("{:.3}", summary.weekend_share(c).unwrap_or(f64::NAN)))
        .collect();
    check(
        share > 0.5,
        format!("boosted routine -> cluster {cluster}, weekend share {share:.3} (base rate 0.286; others {})", others.join(", ")),
    )
}

/// Solves the normal equations by Gauss-Jordan elimination.
fn normal_equations(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let p = x.ncols();
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            a[i][j] = (0..x.nrows()).map(|r| x[(r, i)] * x[(r, j)]).sum();
        }
        a[i][p] = (0..x.nrows()).map(|r| x[(r, i)] * y[r]).sum();
    }
    for c in 0..p {
        let pivot = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, pivot);
        let d = a[c][c];
        for v in a[c].iter_mut() {
            *v /= d;
        }
        for r in 0..p {
            if r != c {
                let f = a[r][c];
                let row_c = a[c].clone();
                for (v, w) in a[r].iter_mut().zip(row_c) {
                    *v -= f * w;
                }
            }
        }
    }
    a.iter().map(|row| row[p]).collect()
}

fn statistics_oracles() -> Outcome {
    let mut rng = StdRng::seed_from_u64(8);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut worst_ols: f64 = 0.0;
    for fixture in 0..20 {
        let (n, p) = (30 + fixture * 5, 2 + fixture % 5);
        let x = DMatrix::from_fn(n, p, |_, c| if c == 0 { 1.0 } else { normal.sample(&mut rng) });
        let y: Vec<f64> = (0..n).map(|r| (0..p).map(|c| x[(r, c)] * c as f64).sum::<f64>() + normal.sample(&mut rng)).collect();
        let design = Design {
            names: (0..p).map(|c| format!("x{c}")).collect(),
            x: x.clone(),
        };
        let fit = ols(&design, &y).unwrap();
        for (c, b) in fit.coefficients.iter().zip(normal_equations(&x, &y)) {
            worst_ols = worst_ols.max((c.estimate - b).abs());
        }
    }

    let (groups, per) = (200, 4);
    let (mut s_int, mut s_res) = (Vec::new(), Vec::new());
    let mut ordered = true;
    for _ in 0..50 {
        let mut ids = Vec::new();
        let mut y = Vec::new();
        let x = DMatrix::from_fn(groups * per, 3, |_, c| if c == 0 { 1.0 } else { normal.sample(&mut rng) });
        for g in 0..groups {
            let b = normal.sample(&mut rng);
            for o in 0..per {
                let r = g * per + o;
                ids.push(format!("g{g}"));
                y.push(1.0 + 0.5 * x[(r, 1)] - 0.3 * x[(r, 2)] + b + normal.sample(&mut rng));
            }
        }
        let design = Design {
            names: vec!["Intercept".into(), "a".into(), "b".into()],
            x,
        };
        let m = mixed_model(&design, &y, &ids).unwrap();
        ordered &= m.marginal_r2 <= m.conditional_r2;
        s_int.push(m.random_intercept_variance);
        s_res.push(m.residual_variance);
    }
    let (mi, mr) = (mean(&s_int), mean(&s_res));
    check(
        worst_ols <= 1e-8 && (mi - 1.0).abs() <= 0.2 && (mr - 1.0).abs() <= 0.2 && ordered,
        format!("OLS max |b - normal equations| {worst_ols:.1e}; mean intercept variance {mi:.3}, residual {mr:.3} over 50 replicates; marginal <= conditional R2: {ordered}"),
    )
}

fn run_pipeline(out: &Path, spec: &Path) -> Result<(), String> {
    let o = out.to_str().unwrap();
    let steps: Vec<Vec<&str>> = vec![
        vec!["synth", "--spec", spec.to_str().unwrap()],
        vec!["ingest", "--daily"],
        vec!["sweep", "--k-values", "3:5", "--structures", "full,diagonal", "--n-restarts", "2"],
        vec!["analyze", "--segment-length", "50", "--k-range", "3:5", "--n-restarts", "1"],
        vec!["report"],
    ];
    let cohort = out.join("cohort.csv");
    let profiles = out.join("profiles.csv");
    for step in steps {
        let mut args = vec!["routinesig", "--seed", "99", "--out-dir", o];
        args.extend(step.iter().copied());
        if step[0] == "ingest" {
            args.push(cohort.to_str().unwrap());
        }
        if step[0] == "analyze" {
            args.extend(["--profiles", profiles.to_str().unwrap()]);
        }
        let code = routinesig_cli::run(args.clone());
        if code != 0 {
            return Err(format!("{args:?} exited {code}"));
        }
    }
    Ok(())
}

fn files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"n_participants": 30, "n_days": 120, "k_true": 4, "emissions": {"preset": {"min_bhattacharyya": 2.0}},
            "weight_concentration": 0.5, "chain_mode": "markov", "chain_concentration": 1.0, "missing_day_rate": 0.05, "seed": 1}"#,
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_pipeline(&a, &spec)?;
    run_pipeline(&b, &spec)?;
    let fa = files(&a);
    let mut differing = Vec::new();
    for f in &fa {
        let rel = f.strip_prefix(&a).unwrap();
        if std::fs::read(f).unwrap() != std::fs::read(b.join(rel)).unwrap_or_default() {
            differing.push(rel.display().to_string());
        }
    }
    let kinds = |ext: &str| fa.iter().filter(|f| f.extension().is_some_and(|e| e == ext)).count();
    check(
        differing.is_empty() && fa.len() == files(&b).len() && kinds("svg") == 5,
        format!(
            "{} files compared ({} csv, {} json, {} svg); differing: {:?}",
            fa.len(),
            kinds("csv"),
            kinds("json"),
            kinds("svg"),
            differing
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("mixture recovery", mixture_recovery),
        ("signature persistence separation", signature_separation),
        ("transition persistence separation", transition_separation),
        ("null control", null_control),
        ("metric fixtures", metric_fixtures),
        ("invariance suite", invariance_suite),
        ("weekend structure recovery", weekend_structure),
        ("statistics oracles", statistics_oracles),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("[PASS] {} {name}: {d} [{secs:.1} s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("[FAIL] {} {name}: {d} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
