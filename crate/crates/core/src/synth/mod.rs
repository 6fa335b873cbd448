//! Seeded synthetic cohorts with known routines, weights and chains.

mod recovery;
mod spec;

pub use recovery::{adjusted_rand_index, match_labels, score_recovery, RecoveryReport};
pub use spec::{ChainMode, CohortSpec, EmissionSpec};

use chrono::{Days, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::profile::{AgeBin, BigFive, ParticipantProfile};
use crate::ingest::{is_weekday, DayRecord, N_FEATURES};
use crate::seed::rng_for;

pub const TRUTH_FORMAT: &str = "routinesig-ground-truth";
pub const TRUTH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantTruth {
    pub participant_id: String,
    pub weights: Vec<f64>,
    /// Row-stochastic chain in markov mode.
    pub chain: Option<Vec<Vec<f64>>>,
    /// Latent routine of every observed day, in date order.
    pub days: Vec<(NaiveDate, usize)>,
}

impl ParticipantTruth {
    /// Long-run routine frequencies implied by the generator: the weights in
    /// iid mode, the chain's stationary distribution in markov mode.
    pub fn expected_frequencies(&self) -> Vec<f64> {
        match &self.chain {
            None => self.weights.clone(),
            Some(chain) => stationary_distribution(chain),
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        self.days.iter().map(|&(_, l)| l).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub format: String,
    pub version: u32,
    pub spec: CohortSpec,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub participants: Vec<ParticipantTruth>,
}

impl GroundTruth {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let truth: GroundTruth = serde_json::from_str(text)?;
        if truth.format != TRUTH_FORMAT {
            return Err(Error::invalid("format", format!("expected `{TRUTH_FORMAT}`")));
        }
        if truth.version != TRUTH_FORMAT_VERSION {
            return Err(Error::invalid("version", format!("unsupported version {}", truth.version)));
        }
        Ok(truth)
    }

    pub fn participant(&self, id: &str) -> Option<&ParticipantTruth> {
        self.participants.iter().find(|p| p.participant_id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub records: Vec<DayRecord>,
    pub truth: GroundTruth,
}

/// Gaussian parameters of the latent routines.
#[derive(Debug, Clone, PartialEq)]
pub struct Emissions {
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
}

fn random_spd<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let eig = DVector::from_fn(d, |_, _| rng.random_range(0.5..1.5));
    let s = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    (&s + s.transpose()) * 0.5
}

/// Scale making every pair of `directions` at least `target` apart in
/// Bhattacharyya distance under the given covariances.
fn separating_scale(directions: &[DVector<f64>], covs: &[DMatrix<f64>], target: f64) -> f64 {
    let mut s2: f64 = 0.0;
    for i in 0..directions.len() {
        for j in i + 1..directions.len() {
            let avg = (&covs[i] + &covs[j]) * 0.5;
            let v = &directions[i] - &directions[j];
            let chol = avg.clone().cholesky().expect("average of SPD matrices is SPD");
            let q = v.dot(&chol.solve(&v));
            let log_det = |m: &DMatrix<f64>| 2.0 * m.clone().cholesky().expect("SPD").l().diagonal().map(f64::ln).sum();
            let c = 0.5 * (log_det(&avg) - 0.5 * (log_det(&covs[i]) + log_det(&covs[j])));
            s2 = s2.max(8.0 * (target - c) / q);
        }
    }
    s2.max(0.0).sqrt() * (1.0 + 1e-9)
}

pub fn build_emissions(spec: &CohortSpec) -> Result<Emissions> {
    spec.validate()?;
    let d = spec.feature_dim;
    match &spec.emissions {
        EmissionSpec::Explicit { means, covariances } => Ok(Emissions {
            means: means.iter().map(|m| DVector::from_column_slice(m)).collect(),
            covariances: covariances.iter().map(|c| DMatrix::from_fn(d, d, |i, j| c[i][j])).collect(),
        }),
        EmissionSpec::Preset { min_bhattacharyya } => {
            let mut rng = rng_for(spec.seed, "emissions", 0);
            let covariances: Vec<DMatrix<f64>> = (0..spec.k_true).map(|_| random_spd(d, &mut rng)).collect();
            let directions: Vec<DVector<f64>> = (0..spec.k_true)
                .map(|k| DVector::from_fn(d, |i, _| f64::from(u8::from(i == k))))
                .collect();
            let scale = separating_scale(&directions, &covariances, *min_bhattacharyya);
            Ok(Emissions {
                means: directions.into_iter().map(|v| v * scale).collect(),
                covariances,
            })
        }
    }
}

fn dirichlet<R: Rng>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter().map(|g| g / total).collect()
    } else {
        let mut one_hot = vec![0.0; alpha.len()];
        one_hot[rng.random_range(0..alpha.len())] = 1.0;
        one_hot
    }
}

fn categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Left eigenvector of a row-stochastic matrix for eigenvalue 1, by power iteration.
pub fn stationary_distribution(chain: &[Vec<f64>]) -> Vec<f64> {
    let k = chain.len();
    let mut pi = vec![1.0 / k as f64; k];
    for _ in 0..10_000 {
        let mut next = vec![0.0; k];
        for (a, row) in chain.iter().enumerate() {
            for (b, p) in row.iter().enumerate() {
                next[b] += pi[a] * p;
            }
        }
        // Averaging with the previous iterate damps periodic chains.
        let next: Vec<f64> = next.iter().zip(&pi).map(|(n, p)| 0.5 * (n + p)).collect();
        let delta = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pi = next;
        if delta < 1e-15 {
            break;
        }
    }
    pi
}

struct RoutineParams {
    weights: Vec<f64>,
    chain: Option<Vec<Vec<f64>>>,
}

fn draw_params<R: Rng>(spec: &CohortSpec, rng: &mut R) -> RoutineParams {
    let weights = dirichlet(&spec.weight_alpha(), rng);
    let chain = (spec.chain_mode == ChainMode::Markov).then(|| {
        let alpha = vec![spec.chain_concentration; spec.k_true];
        (0..spec.k_true).map(|_| dirichlet(&alpha, rng)).collect()
    });
    RoutineParams { weights, chain }
}

pub fn participant_id(index: usize) -> String {
    format!("P{index:04}")
}

fn simulate_participant(
    spec: &CohortSpec,
    factors: &[DMatrix<f64>],
    means: &[DVector<f64>],
    params: RoutineParams,
    index: usize,
) -> (Vec<DayRecord>, ParticipantTruth) {
    let id = participant_id(index);
    let mut rng = rng_for(spec.seed, "participant-days", index as u64);
    let d = spec.feature_dim;
    let mut records = Vec::with_capacity(spec.n_days);
    let mut days = Vec::with_capacity(spec.n_days);
    let mut prev: Option<usize> = None;
    for t in 0..spec.n_days {
        let date = spec.start_date + Days::new(t as u64);
        let mut probs = match (&params.chain, prev) {
            (Some(chain), Some(p)) => chain[p].clone(),
            _ => params.weights.clone(),
        };
        if let (Some(m), false) = (&spec.weekend_modulation, is_weekday(date)) {
            for (p, f) in probs.iter_mut().zip(m) {
                *p *= f;
            }
        }
        let routine = categorical(&probs, &mut rng);
        prev = Some(routine);

        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = &means[routine] + &factors[routine] * z;
        let mut features = [None; N_FEATURES];
        for (i, f) in features.iter_mut().enumerate() {
            *f = Some(if i < d { x[i] } else { rng.sample::<f64, _>(StandardNormal) });
        }
        if rng.random::<f64>() < spec.missing_day_rate {
            continue;
        }
        records.push(DayRecord::new(id.clone(), date, None, features));
        days.push((date, routine));
    }
    let truth = ParticipantTruth {
        participant_id: id,
        weights: params.weights,
        chain: params.chain,
        days,
    };
    (records, truth)
}

/// Generate the cohort. Participants draw from their own sub-seeds, so the
/// output does not depend on thread scheduling.
pub fn generate(spec: &CohortSpec) -> Result<SyntheticCohort> {
    let emissions = build_emissions(spec)?;
    let factors: Vec<DMatrix<f64>> = emissions
        .covariances
        .iter()
        .map(|c| c.clone().cholesky().map(|ch| ch.l()))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::invalid("emissions.covariances", "covariance is not positive definite"))?;
    let shared = spec
        .shared_parameters
        .then(|| draw_params(spec, &mut rng_for(spec.seed, "shared-params", 0)));

    let people: Vec<(Vec<DayRecord>, ParticipantTruth)> = (0..spec.n_participants)
        .into_par_iter()
        .map(|i| {
            let params = match &shared {
                Some(p) => RoutineParams {
                    weights: p.weights.clone(),
                    chain: p.chain.clone(),
                },
                None => draw_params(spec, &mut rng_for(spec.seed, "participant-params", i as u64)),
            };
            simulate_participant(spec, &factors, &emissions.means, params, i)
        })
        .collect();

    let mut records = Vec::new();
    let mut participants = Vec::with_capacity(people.len());
    for (r, t) in people {
        records.extend(r);
        participants.push(t);
    }
    let to_rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    Ok(SyntheticCohort {
        records,
        truth: GroundTruth {
            format: TRUTH_FORMAT.to_string(),
            version: TRUTH_FORMAT_VERSION,
            spec: spec.clone(),
            means: emissions.means.iter().map(|m| m.iter().copied().collect()).collect(),
            covariances: emissions.covariances.iter().map(to_rows).collect(),
            participants,
        },
    })
}

/// Demographics and trait scores drawn independently of routines.
pub fn synthetic_profiles(spec: &CohortSpec) -> Vec<ParticipantProfile> {
    (0..spec.n_participants)
        .map(|i| {
            let mut rng = rng_for(spec.seed, "profile", i as u64);
            let age = f64::from(rng.random_range(18u32..65));
            let gender = if rng.random_bool(0.5) { "Female" } else { "Male" };
            let scores = std::array::from_fn(|_| (rng.random_range(1.0..5.0f64) * 100.0).round() / 100.0);
            ParticipantProfile {
                participant_id: participant_id(i),
                age_bin: AgeBin::from_age(age).expect("age within bins"),
                age: Some(age),
                gender: gender.to_string(),
                big_five: BigFive(scores),
                study: None,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::bhattacharyya;
    use crate::signature::build_signature;

    fn small(k: usize) -> CohortSpec {
        CohortSpec {
            n_participants: 6,
            n_days: 40,
            k_true: k,
            ..CohortSpec::reference()
        }
    }

    #[test]
    fn single_routine_cohort() {
        let spec = CohortSpec {
            n_participants: 1,
            ..small(1)
        };
        let c = generate(&spec).unwrap();
        let sig = build_signature(&c.truth.participants[0].labels(), 1).unwrap();
        assert_eq!(sig.proportions, [1.0]);
        assert_eq!(c.records.len(), 40);
    }

    #[test]
    fn same_seed_same_cohort() {
        let spec = small(3);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let other = generate(&CohortSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.records, other.records);
    }

    #[test]
    fn presets_meet_their_separation() {
        for (k, target) in [(4, EmissionSpec::EASY), (6, EmissionSpec::HARD), (2, 3.0)] {
            let spec = CohortSpec {
                emissions: EmissionSpec::Preset {
                    min_bhattacharyya: target,
                },
                ..small(k)
            };
            let e = build_emissions(&spec).unwrap();
            let mut min = f64::INFINITY;
            for i in 0..k {
                for j in i + 1..k {
                    let b = bhattacharyya(&e.means[i], &e.covariances[i], &e.means[j], &e.covariances[j]).unwrap();
                    min = min.min(b);
                }
            }
            assert!(min >= target && min < target + 1e-6, "{min} vs {target}");
        }
    }

    #[test]
    fn iid_frequencies_follow_weights() {
        let spec = CohortSpec {
            n_participants: 1,
            n_days: 2000,
            weight_concentration: 2.0,
            ..small(4)
        };
        let c = generate(&spec).unwrap();
        for p in &c.truth.participants {
            let labels = p.labels();
            for k in 0..4 {
                let freq = labels.iter().filter(|&&l| l == k).count() as f64 / labels.len() as f64;
                assert!((freq - p.weights[k]).abs() < 0.03, "{freq} vs {:?}", p.weights);
            }
        }
    }

    #[test]
    fn chains_are_row_stochastic() {
        let spec = CohortSpec {
            chain_mode: ChainMode::Markov,
            ..small(5)
        };
        let c = generate(&spec).unwrap();
        for p in &c.truth.participants {
            for row in p.chain.as_ref().unwrap() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&v| v >= 0.0));
            }
            let pi = p.expected_frequencies();
            assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn weekend_boost_raises_weekend_share() {
        let spec = CohortSpec {
            n_participants: 4,
            n_days: 700,
            weight_concentration: 50.0,
            weekend_modulation: Some(vec![4.0, 1.0, 1.0, 0.25]),
            ..small(4)
        };
        let c = generate(&spec).unwrap();
        let mut weekday = [0usize; 4];
        let mut total = [0usize; 4];
        for p in &c.truth.participants {
            for &(date, l) in &p.days {
                total[l] += 1;
                weekday[l] += usize::from(is_weekday(date));
            }
        }
        let share = |k: usize| weekday[k] as f64 / total[k] as f64;
        assert!(share(0) < 5.0 / 7.0);
        assert!(share(3) > 5.0 / 7.0);
    }

    #[test]
    fn missing_days_are_dropped() {
        let spec = CohortSpec {
            missing_day_rate: 0.3,
            n_days: 1000,
            n_participants: 2,
            ..small(2)
        };
        let c = generate(&spec).unwrap();
        let kept = c.records.len() as f64 / 2000.0;
        assert!((kept - 0.7).abs() < 0.05);
        assert_eq!(c.truth.participants.iter().map(|p| p.days.len()).sum::<usize>(), c.records.len());
    }

    #[test]
    fn shared_parameters_are_identical() {
        let spec = CohortSpec {
            shared_parameters: true,
            chain_mode: ChainMode::Markov,
            ..small(3)
        };
        let c = generate(&spec).unwrap();
        let first = &c.truth.participants[0];
        assert!(c.truth.participants.iter().all(|p| p.weights == first.weights && p.chain == first.chain));
    }

    #[test]
    fn profiles_are_valid_and_seeded() {
        let spec = small(2);
        let p = synthetic_profiles(&spec);
        assert_eq!(p.len(), 6);
        assert!(p.iter().all(|q| BigFive::new(q.big_five.0).is_ok()));
        assert_eq!(p, synthetic_profiles(&spec));
    }

    #[test]
    fn truth_json_round_trips() {
        let c = generate(&small(3)).unwrap();
        let text = c.truth.to_json_string().unwrap();
        assert_eq!(GroundTruth::from_json_str(&text).unwrap(), c.truth);
    }
}
