use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_CLINICAL: usize = 16;

/// Clinical column names in encoding order. Binary columns hold 0/1;
/// `sex` is 1 for male, 0 for female.
pub const CLINICAL_COLUMNS: [&str; N_CLINICAL] = [
    "age",
    "sex",
    "height",
    "weight",
    "cough_duration",
    "prior_tb",
    "prior_tb_pulmonary",
    "prior_tb_extrapulmonary",
    "prior_tb_unknown",
    "hemoptysis",
    "heart_rate",
    "temperature",
    "smoked_last_week",
    "fever",
    "night_sweats",
    "weight_loss",
];

/// Positions of the binary indicators within the encoded block.
pub const BINARY_COLUMNS: [usize; 10] = [1, 5, 6, 7, 8, 9, 12, 13, 14, 15];

pub fn is_binary_column(j: usize) -> bool {
    BINARY_COLUMNS.contains(&j)
}

/// Demographic and clinical variables of one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalRecord {
    /// Years.
    pub age: f64,
    pub sex_male: bool,
    /// Centimetres.
    pub height: f64,
    /// Kilograms.
    pub weight: f64,
    /// Days of reported cough.
    pub cough_duration: f64,
    pub prior_tb: bool,
    pub prior_tb_pulmonary: bool,
    pub prior_tb_extrapulmonary: bool,
    pub prior_tb_unknown: bool,
    pub hemoptysis: bool,
    /// Beats per minute.
    pub heart_rate: f64,
    /// Degrees Celsius.
    pub temperature: f64,
    pub smoked_last_week: bool,
    pub fever: bool,
    pub night_sweats: bool,
    pub weight_loss: bool,
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn unflag(v: f64, column: usize) -> Result<bool> {
    match v {
        0.0 => Ok(false),
        1.0 => Ok(true),
        other => Err(Error::InvalidArgument(format!(
            "column {} must be 0 or 1, got {other}",
            CLINICAL_COLUMNS[column]
        ))),
    }
}

impl ClinicalRecord {
    /// Encodes the record as 16 reals in [`CLINICAL_COLUMNS`] order.
    pub fn encode(&self) -> [f64; N_CLINICAL] {
        [
            self.age,
            flag(self.sex_male),
            self.height,
            self.weight,
            self.cough_duration,
            flag(self.prior_tb),
            flag(self.prior_tb_pulmonary),
            flag(self.prior_tb_extrapulmonary),
            flag(self.prior_tb_unknown),
            flag(self.hemoptysis),
            self.heart_rate,
            self.temperature,
            flag(self.smoked_last_week),
            flag(self.fever),
            flag(self.night_sweats),
            flag(self.weight_loss),
        ]
    }

    /// Inverse of [`encode`](Self::encode), validating binary slots.
    pub fn decode(v: &[f64]) -> Result<Self> {
        if v.len() != N_CLINICAL {
            return Err(Error::DimensionMismatch {
                expected: N_CLINICAL,
                actual: v.len(),
            });
        }
        if let Some(j) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "column {} is not a finite number",
                CLINICAL_COLUMNS[j]
            )));
        }
        Ok(Self {
            age: v[0],
            sex_male: unflag(v[1], 1)?,
            height: v[2],
            weight: v[3],
            cough_duration: v[4],
            prior_tb: unflag(v[5], 5)?,
            prior_tb_pulmonary: unflag(v[6], 6)?,
            prior_tb_extrapulmonary: unflag(v[7], 7)?,
            prior_tb_unknown: unflag(v[8], 8)?,
            hemoptysis: unflag(v[9], 9)?,
            heart_rate: v[10],
            temperature: v[11],
            smoked_last_week: unflag(v[12], 12)?,
            fever: unflag(v[13], 13)?,
            night_sweats: unflag(v[14], 14)?,
            weight_loss: unflag(v[15], 15)?,
        })
    }

    /// Values outside broad physiological ranges. Advisory only.
    pub fn range_warnings(&self) -> Vec<String> {
        let checks = [
            ("age", self.age, 0.0, 120.0),
            ("height", self.height, 50.0, 250.0),
            ("weight", self.weight, 10.0, 300.0),
            ("cough_duration", self.cough_duration, 0.0, 3650.0),
            ("heart_rate", self.heart_rate, 20.0, 250.0),
            ("temperature", self.temperature, 30.0, 45.0),
        ];
        checks
            .iter()
            .filter(|(_, v, lo, hi)| v < lo || v > hi)
            .map(|(name, v, lo, hi)| format!("{name}={v} outside [{lo}, {hi}]"))
            .collect()
    }
}
