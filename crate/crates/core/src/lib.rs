//! Routine discovery and routine-signature persistence for passively sensed
//! daily behavior.
//!
//! The pipeline: [`ingest`] turns daily records into a within-person
//! standardized feature matrix, [`gmm`] clusters pooled person-days into
//! routine types, [`signature`] and [`transitions`] summarize each person's
//! routine distribution and day-to-day dynamics over split-half segments,
//! and [`stats`] compares within- and between-person distances. [`synth`]
//! generates cohorts with known ground truth.

pub mod error;
pub mod export;
pub mod gmm;
pub mod ingest;
pub mod pipeline;
pub mod seed;
pub mod signature;
pub mod stats;
pub mod synth;
pub mod transitions;

pub use error::{Error, Result};
pub use gmm::{assign, bic, fit_gmm, Assignment, CovarianceStructure, FitOptions, MixtureModel};
pub use pipeline::{analyze_persistence, unit_days, PersistenceAnalysis, PersistenceOptions, UnitDays};
pub use signature::{build_signature, cluster_summary, jsd, ClusterSummary, Metric, PeerAggregation, PersistenceRecord, RoutineSignature, SegmentPair, Variant};
pub use stats::{mixed_model, ols, paired_test, MixedModelResult, PairedTestResult, RegressionResult};
pub use synth::{generate, score_recovery, CohortSpec, GroundTruth, SyntheticCohort};
pub use transitions::{build_transitions, transition_distance, TransitionMatrix};
pub use ingest::{DayRecord, FeatureMatrix, FEATURE_NAMES, N_FEATURES};
