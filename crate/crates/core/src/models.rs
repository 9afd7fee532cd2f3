//! Log-distance path loss with log-normal shadowing,
//! `L(d) = alpha + 10 * beta * log10(d) + X`, `X ~ N(0, sigma^2)`.
//!
//! The built-in registry holds the ten parameter sets measured inside a
//! 12.80 m city bus at 60 GHz: four seat groups (A-D) plus the pooled
//! "All" fit, each for the lower (hand-held) and upper (wearable)
//! transmitter positions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Carrier frequency of the measured models, Hz.
pub const CARRIER_HZ: f64 = 60e9;

/// Distances (m) the models were fitted over, roughly the bus interior.
/// Evaluation outside this open interval still succeeds but is flagged.
pub const VALID_RANGE_M: (f64, f64) = (0.5, 15.0);

/// Seat group, or the pooled fit over all four groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    A,
    B,
    C,
    D,
    All,
}

impl Region {
    pub const ALL: [Region; 5] = [Region::A, Region::B, Region::C, Region::D, Region::All];
    pub const GROUPS: [Region; 4] = [Region::A, Region::B, Region::C, Region::D];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::A => "A",
            Region::B => "B",
            Region::C => "C",
            Region::D => "D",
            Region::All => "All",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Region::A),
            "b" => Ok(Region::B),
            "c" => Ok(Region::C),
            "d" => Ok(Region::D),
            "all" => Ok(Region::All),
            other => Err(Error::domain(format!("unknown region {other:?}"))),
        }
    }
}

/// Transmitter height class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeightClass {
    /// Hand-held device position, 0.7 m by default.
    Lower,
    /// Head-mounted / wearable position, 1.2 m by default.
    Upper,
}

impl HeightClass {
    pub const ALL: [HeightClass; 2] = [HeightClass::Lower, HeightClass::Upper];

    pub fn as_str(self) -> &'static str {
        match self {
            HeightClass::Lower => "lower",
            HeightClass::Upper => "upper",
        }
    }
}

impl fmt::Display for HeightClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeightClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lower" => Ok(HeightClass::Lower),
            "upper" => Ok(HeightClass::Upper),
            other => Err(Error::domain(format!("unknown height class {other:?}"))),
        }
    }
}

/// One `(alpha, beta, sigma)` parameter set.
///
/// `sigma_db` is the standard deviation of the shadowing term; the
/// variance form is available through [`PathLossModel::to_combined_form`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRecord")]
pub struct PathLossModel {
    pub alpha_db: f64,
    pub beta: f64,
    pub sigma_db: f64,
    pub region: Region,
    pub height: HeightClass,
}

#[derive(Deserialize)]
struct ModelRecord {
    alpha_db: f64,
    beta: f64,
    sigma_db: f64,
    region: Region,
    height: HeightClass,
}

impl TryFrom<ModelRecord> for PathLossModel {
    type Error = Error;

    fn try_from(r: ModelRecord) -> Result<Self> {
        PathLossModel::new(r.alpha_db, r.beta, r.sigma_db, r.region, r.height)
    }
}

/// Mean path loss together with the extrapolation flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub mean_db: f64,
    /// Distance lies outside [`VALID_RANGE_M`].
    pub extrapolated: bool,
}

/// `alpha + slope * log10(d) + N(0, variance)`, i.e. the model with
/// `10 * beta` folded into one coefficient and sigma squared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedForm {
    pub alpha_db: f64,
    pub slope_db_per_decade: f64,
    pub variance_db2: f64,
}

impl CombinedForm {
    pub fn to_model(&self, region: Region, height: HeightClass) -> Result<PathLossModel> {
        if self.variance_db2.is_nan() || self.variance_db2 < 0.0 {
            return Err(Error::domain("variance must be non-negative"));
        }
        PathLossModel::new(
            self.alpha_db,
            self.slope_db_per_decade / 10.0,
            self.variance_db2.sqrt(),
            region,
            height,
        )
    }
}

fn check_distance(d: f64) -> Result<()> {
    if d.is_finite() && d > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "distance must be positive and finite, got {d}"
        )))
    }
}

impl PathLossModel {
    pub fn new(
        alpha_db: f64,
        beta: f64,
        sigma_db: f64,
        region: Region,
        height: HeightClass,
    ) -> Result<Self> {
        if !alpha_db.is_finite() || !beta.is_finite() {
            return Err(Error::domain("alpha_db and beta must be finite"));
        }
        if !(sigma_db.is_finite() && sigma_db >= 0.0) {
            return Err(Error::domain(format!(
                "sigma_db must be finite and non-negative, got {sigma_db}"
            )));
        }
        Ok(Self {
            alpha_db,
            beta,
            sigma_db,
            region,
            height,
        })
    }

    pub fn key(&self) -> (Region, HeightClass) {
        (self.region, self.height)
    }

    /// Same parameters, shadowing switched off.
    pub fn deterministic(&self) -> Self {
        Self {
            sigma_db: 0.0,
            ..*self
        }
    }

    /// `alpha + 10 * beta * log10(d)`.
    pub fn mean_path_loss(&self, d: f64) -> Result<f64> {
        check_distance(d)?;
        Ok(self.alpha_db + 10.0 * self.beta * d.log10())
    }

    pub fn evaluate(&self, d: f64) -> Result<Evaluation> {
        let mean_db = self.mean_path_loss(d)?;
        Ok(Evaluation {
            mean_db,
            extrapolated: !(d > VALID_RANGE_M.0 && d < VALID_RANGE_M.1),
        })
    }

    /// One shadowed realisation. The caller owns the random stream, so a
    /// fixed seed reproduces the value.
    pub fn sample_path_loss<R: Rng + ?Sized>(&self, d: f64, rng: &mut R) -> Result<f64> {
        let mean = self.mean_path_loss(d)?;
        let z: f64 = rng.sample(StandardNormal);
        Ok(mean + self.sigma_db * z)
    }

    /// `P(L(d) <= l_max)` under Gaussian shadowing.
    pub fn coverage_probability(&self, d: f64, l_max: f64) -> Result<f64> {
        let mean = self.mean_path_loss(d)?;
        if l_max.is_nan() {
            return Err(Error::domain("l_max is NaN"));
        }
        if self.sigma_db == 0.0 {
            return Ok(if l_max >= mean { 1.0 } else { 0.0 });
        }
        Ok(standard_normal_cdf((l_max - mean) / self.sigma_db))
    }

    pub fn to_combined_form(&self) -> CombinedForm {
        CombinedForm {
            alpha_db: self.alpha_db,
            slope_db_per_decade: 10.0 * self.beta,
            variance_db2: self.sigma_db * self.sigma_db,
        }
    }
}

impl fmt::Display for PathLossModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}: L(d) = {:.2} + 10*{:.2}*log10(d) + N(0, {:.2}^2)",
            self.region, self.height, self.alpha_db, self.beta, self.sigma_db
        )
    }
}

pub(crate) fn standard_normal_cdf(z: f64) -> f64 {
    // Normal::new(0, 1) cannot fail.
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

/// Upper 95 % quantile of the standard normal distribution.
pub const Z_95: f64 = 1.644_853_626_951_472_2;

/// The ten measured parameter sets, ordered by region then height.
pub fn builtin_models() -> Vec<PathLossModel> {
    use HeightClass::{Lower, Upper};
    use Region::{All, A, B, C, D};
    const TABLE: [(Region, HeightClass, f64, f64, f64); 10] = [
        (A, Lower, 87.29, 1.44, 3.13),
        (A, Upper, 83.29, 1.83, 2.22),
        (B, Lower, 83.83, 1.91, 2.88),
        (B, Upper, 84.43, 1.92, 1.67),
        (C, Lower, 85.77, 1.70, 2.00),
        (C, Upper, 81.24, 2.39, 2.27),
        (D, Lower, 84.34, 1.82, 2.38),
        (D, Upper, 81.88, 2.13, 2.65),
        (All, Lower, 85.23, 1.74, 2.54),
        (All, Upper, 82.86, 2.03, 2.34),
    ];
    TABLE
        .iter()
        .map(
            |&(region, height, alpha_db, beta, sigma_db)| PathLossModel {
                alpha_db,
                beta,
                sigma_db,
                region,
                height,
            },
        )
        .collect()
}

pub fn builtin(region: Region, height: HeightClass) -> PathLossModel {
    builtin_models()
        .into_iter()
        .find(|m| m.region == region && m.height == height)
        .expect("registry covers every (region, height) pair")
}

/// Free-space path loss `20 log10(4 pi d f / c)`.
pub fn fspl(d: f64, f_hz: f64) -> Result<f64> {
    check_distance(d)?;
    if !(f_hz.is_finite() && f_hz > 0.0) {
        return Err(Error::domain(format!(
            "frequency must be positive, got {f_hz}"
        )));
    }
    Ok(20.0 * (4.0 * std::f64::consts::PI * d * f_hz / SPEED_OF_LIGHT).log10())
}

/// Mean path loss of `a` minus that of `b` at each distance.
pub fn compare_models(a: &PathLossModel, b: &PathLossModel, distances: &[f64]) -> Result<Vec<f64>> {
    distances
        .iter()
        .map(|&d| Ok(a.mean_path_loss(d)? - b.mean_path_loss(d)?))
        .collect()
}

/// Models keyed by `(region, height)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelSet {
    models: BTreeMap<(Region, HeightClass), PathLossModel>,
}

impl ModelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn builtin() -> Self {
        builtin_models().into_iter().collect()
    }

    /// Replaces any model already registered under the same key.
    pub fn insert(&mut self, model: PathLossModel) -> Option<PathLossModel> {
        self.models.insert(model.key(), model)
    }

    pub fn get(&self, region: Region, height: HeightClass) -> Option<&PathLossModel> {
        self.models.get(&(region, height))
    }

    pub fn require(&self, region: Region, height: HeightClass) -> Result<&PathLossModel> {
        self.get(region, height)
            .ok_or_else(|| Error::MissingModel(format!("{region}/{height}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PathLossModel> {
        self.models.values()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Accepts either a single model object or an array of them.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.is_array() {
            let models: Vec<PathLossModel> = serde_json::from_value(value)?;
            Ok(models.into_iter().collect())
        } else {
            let model: PathLossModel = serde_json::from_value(value)?;
            Ok(std::iter::once(model).collect())
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let models: Vec<&PathLossModel> = self.iter().collect();
        Ok(serde_json::to_string_pretty(&models)?)
    }
}

impl FromIterator<PathLossModel> for ModelSet {
    fn from_iter<I: IntoIterator<Item = PathLossModel>>(iter: I) -> Self {
        let mut set = ModelSet::new();
        for m in iter {
            set.insert(m);
        }
        set
    }
}
