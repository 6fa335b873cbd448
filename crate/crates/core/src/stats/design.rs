//! Design matrices for regressing persistence on demographics and traits.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::profile::{AgeBin, ParticipantProfile, TRAIT_NAMES};

pub const INTERCEPT: &str = "Intercept";
pub const REFERENCE_GENDER: &str = "Female";

/// Column-named regression design; the first column is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeEncoding {
    /// Indicator for the 25-and-over bins against the youngest bin.
    #[default]
    Binary,
    /// Age in years, or the bin midpoint when only the bin is known.
    Continuous,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub age: AgeEncoding,
    /// Add study indicators when observations come from several studies.
    pub study_effects: bool,
}

fn title_case(s: &str) -> String {
    let mut c = s.chars();
    c.next().map_or_else(String::new, |f| f.to_uppercase().chain(c).collect())
}

/// One design row per profile: intercept, gender indicators against Female,
/// age, the five traits on their [1, 5] scale, and optional study indicators.
pub fn build_design(rows: &[&ParticipantProfile], spec: PredictorSpec) -> Result<Design> {
    if rows.is_empty() {
        return Err(Error::insufficient("no observations for the design matrix"));
    }
    let genders: BTreeSet<&str> = rows.iter().map(|p| p.gender.as_str()).collect();
    let reference = if genders.contains(REFERENCE_GENDER) {
        REFERENCE_GENDER
    } else {
        genders.iter().next().copied().unwrap_or(REFERENCE_GENDER)
    };
    let gender_levels: Vec<&str> = genders.iter().copied().filter(|g| *g != reference).collect();

    let studies: BTreeSet<&str> = rows.iter().filter_map(|p| p.study.as_deref()).collect();
    let study_levels: Vec<&str> = if spec.study_effects {
        if rows.iter().any(|p| p.study.is_none()) {
            return Err(Error::invalid("study", "study effects requested but some profiles lack a study"));
        }
        studies.iter().copied().skip(1).collect()
    } else {
        Vec::new()
    };

    let mut names = vec![INTERCEPT.to_string()];
    names.extend(gender_levels.iter().map(|g| format!("Gender [{g}]")));
    names.push(match spec.age {
        AgeEncoding::Binary => "Age bin [≥25]".to_string(),
        AgeEncoding::Continuous => "Age".to_string(),
    });
    names.extend(TRAIT_NAMES.iter().map(|t| title_case(t)));
    names.extend(study_levels.iter().map(|s| format!("Study [{s}]")));

    let mut x = DMatrix::zeros(rows.len(), names.len());
    for (i, p) in rows.iter().enumerate() {
        let mut j = 0;
        let mut put = |v: f64| {
            x[(i, j)] = v;
            j += 1;
        };
        put(1.0);
        for g in &gender_levels {
            put(f64::from(u8::from(p.gender == *g)));
        }
        put(match spec.age {
            AgeEncoding::Binary => f64::from(u8::from(p.age_bin != AgeBin::Under25)),
            AgeEncoding::Continuous => p.age.unwrap_or_else(|| p.age_bin.midpoint()),
        });
        for &s in &p.big_five.0 {
            put(s);
        }
        for s in &study_levels {
            put(f64::from(u8::from(p.study.as_deref() == Some(*s))));
        }
    }
    Ok(Design { names, x })
}
