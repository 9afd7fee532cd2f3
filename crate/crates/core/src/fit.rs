//! Least-squares estimation of `(alpha, beta, sigma)` from
//! `(distance, path loss)` samples.
//!
//! The regression is `y = alpha + beta * x` with `x = 10 log10(d)`, so the
//! slope is the propagation exponent directly. Sigma is the residual
//! standard deviation with `n - 2` degrees of freedom.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{HeightClass, PathLossModel, Region};
use crate::stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub distance_m: f64,
    pub path_loss_db: f64,
    pub seat: Option<u32>,
    pub region: Option<Region>,
    pub height: Option<HeightClass>,
}

impl Sample {
    pub fn new(distance_m: f64, path_loss_db: f64) -> Self {
        Self {
            distance_m,
            path_loss_db,
            seat: None,
            region: None,
            height: None,
        }
    }

    pub fn tagged(mut self, seat: Option<u32>, region: Region, height: HeightClass) -> Self {
        self.seat = seat;
        self.region = Some(region);
        self.height = Some(height);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    entries: Vec<Sample>,
}

impl SampleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, s: Sample) -> Result<()> {
        if !(s.distance_m.is_finite() && s.distance_m > 0.0) {
            return Err(Error::domain(format!(
                "sample distance must be positive, got {}",
                s.distance_m
            )));
        }
        if !s.path_loss_db.is_finite() {
            return Err(Error::domain("sample path loss must be finite"));
        }
        self.entries.push(s);
        Ok(())
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        pairs.iter().map(|&(d, l)| Sample::new(d, l)).collect()
    }

    pub fn entries(&self) -> &[Sample] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Tag shared by every entry, if any.
    fn common<T: PartialEq + Copy>(&self, f: impl Fn(&Sample) -> Option<T>) -> Option<T> {
        let first = f(self.entries.first()?)?;
        self.entries
            .iter()
            .all(|s| f(s) == Some(first))
            .then_some(first)
    }

    /// Reads the sample CSV format: header `distance_m,path_loss_db` with
    /// optional `seat`, `region` and `height` columns.
    pub fn read_csv<R: Read>(reader: R, path: &Path) -> Result<Self> {
        read_samples(reader, path)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::File {
            path: path.to_owned(),
            msg: e.to_string(),
        })?;
        read_samples(file, path)
    }

    /// Writes the CSV with full-precision numbers. Tag columns are emitted
    /// only when at least one entry carries a tag.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let tagged = self
            .entries
            .iter()
            .any(|s| s.seat.is_some() || s.region.is_some() || s.height.is_some());
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.into());
        if tagged {
            w.write_record(["distance_m", "path_loss_db", "seat", "region", "height"])
                .map_err(io)?;
        } else {
            w.write_record(["distance_m", "path_loss_db"]).map_err(io)?;
        }
        for s in &self.entries {
            let mut rec = vec![s.distance_m.to_string(), s.path_loss_db.to_string()];
            if tagged {
                rec.push(s.seat.map(|v| v.to_string()).unwrap_or_default());
                rec.push(s.region.map(|v| v.to_string()).unwrap_or_default());
                rec.push(s.height.map(|v| v.to_string()).unwrap_or_default());
            }
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl FromIterator<Sample> for Result<SampleSet> {
    fn from_iter<I: IntoIterator<Item = Sample>>(iter: I) -> Self {
        let mut set = SampleSet::new();
        for s in iter {
            set.push(s)?;
        }
        Ok(set)
    }
}

fn read_samples<R: Read>(reader: R, path: &Path) -> Result<SampleSet> {
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(i_d), Some(i_l)) = (col("distance_m"), col("path_loss_db")) else {
        return Err(parse_err(
            1,
            "header must contain distance_m and path_loss_db".into(),
        ));
    };
    let (i_seat, i_region, i_height) = (col("seat"), col("region"), col("height"));

    let mut set = SampleSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize, name: &str| -> Result<f64> {
            let raw = rec.get(i).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| parse_err(line, format!("{name}: cannot parse {raw:?} as a number")))
        };
        let opt = |i: Option<usize>| i.and_then(|i| rec.get(i)).filter(|v| !v.is_empty());

        let mut s = Sample::new(num(i_d, "distance_m")?, num(i_l, "path_loss_db")?);
        if let Some(v) = opt(i_seat) {
            s.seat = Some(
                v.parse()
                    .map_err(|_| parse_err(line, format!("seat: invalid id {v:?}")))?,
            );
        }
        if let Some(v) = opt(i_region) {
            s.region = Some(
                v.parse()
                    .map_err(|e: Error| parse_err(line, e.to_string()))?,
            );
        }
        if let Some(v) = opt(i_height) {
            s.height = Some(
                v.parse()
                    .map_err(|e: Error| parse_err(line, e.to_string()))?,
            );
        }
        set.push(s).map_err(|e| parse_err(line, e.to_string()))?;
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: PathLossModel,
    pub residuals_db: Vec<f64>,
    pub r_squared: f64,
    pub n: usize,
}

/// JSON view: the model fields plus `r_squared` and `n`.
#[derive(Serialize)]
struct FitRecord<'a> {
    #[serde(flatten)]
    model: &'a PathLossModel,
    r_squared: f64,
    n: usize,
}

impl FitResult {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(FitRecord {
            model: &self.model,
            r_squared: self.r_squared,
            n: self.n,
        })
        .expect("fit record is always serialisable")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitOptions {
    /// Fraction of samples dropped from each residual tail before a second
    /// pass, in `[0, 0.5)`. Zero disables trimming.
    pub trim_fraction: f64,
    /// Tags for the fitted model. When `None`, tags shared by every entry
    /// are used, falling back to `All` / `Upper`.
    pub key: Option<(Region, HeightClass)>,
}

struct Line {
    alpha: f64,
    beta: f64,
}

fn ols(xs: &[f64], ys: &[f64]) -> Result<Line> {
    let n = xs.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(Error::DegenerateDesign);
    }
    let nf = n as f64;
    let x_mean = xs.iter().sum::<f64>() / nf;
    let y_mean = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - x_mean;
        sxx += dx * dx;
        sxy += dx * (y - y_mean);
    }
    let beta = sxy / sxx;
    Ok(Line {
        alpha: y_mean - beta * x_mean,
        beta,
    })
}

pub fn fit_log_distance(samples: &SampleSet) -> Result<FitResult> {
    fit_log_distance_with(samples, &FitOptions::default())
}

pub fn fit_log_distance_with(samples: &SampleSet, opts: &FitOptions) -> Result<FitResult> {
    if !(0.0..0.5).contains(&opts.trim_fraction) {
        return Err(Error::domain("trim_fraction must lie in [0, 0.5)"));
    }
    let mut xs: Vec<f64> = samples
        .entries
        .iter()
        .map(|s| 10.0 * s.distance_m.log10())
        .collect();
    let mut ys: Vec<f64> = samples.entries.iter().map(|s| s.path_loss_db).collect();
    let mut line = ols(&xs, &ys)?;

    let k = (opts.trim_fraction * xs.len() as f64).floor() as usize;
    if k > 0 {
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let res = |i: usize| ys[i] - line.alpha - line.beta * xs[i];
        order.sort_by(|&a, &b| res(a).total_cmp(&res(b)));
        let mut keep = order[k..order.len() - k].to_vec();
        keep.sort_unstable();
        xs = keep.iter().map(|&i| xs[i]).collect();
        ys = keep.iter().map(|&i| ys[i]).collect();
        line = ols(&xs, &ys)?;
    }

    let n = xs.len();
    let residuals: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| y - line.alpha - line.beta * x)
        .collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let y_mean = ys.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let sigma = (ss_res / (n - 2) as f64).sqrt();

    let (region, height) = opts.key.unwrap_or((
        samples.common(|s| s.region).unwrap_or(Region::All),
        samples.common(|s| s.height).unwrap_or(HeightClass::Upper),
    ));
    Ok(FitResult {
        model: PathLossModel::new(line.alpha, line.beta, sigma, region, height)?,
        residuals_db: residuals,
        r_squared,
        n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedCell {
    pub key: (Region, HeightClass),
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartitionFit {
    pub fits: BTreeMap<(Region, HeightClass), FitResult>,
    pub skipped: Vec<SkippedCell>,
}

/// Fits every populated `(group, height)` cell and, per height, the pooled
/// `All` cell. Cells that cannot be fitted are listed in `skipped`.
pub fn fit_by_partition(samples: &SampleSet) -> Result<PartitionFit> {
    let mut cells: BTreeMap<(Region, HeightClass), SampleSet> = BTreeMap::new();
    for (i, s) in samples.entries.iter().enumerate() {
        let (Some(region), Some(height)) = (s.region, s.height) else {
            return Err(Error::domain(format!(
                "sample {} lacks a region or height tag",
                i + 1
            )));
        };
        if region != Region::All {
            cells.entry((region, height)).or_default().entries.push(*s);
        }
        cells
            .entry((Region::All, height))
            .or_default()
            .entries
            .push(*s);
    }

    let mut out = PartitionFit::default();
    for (key, set) in cells {
        let opts = FitOptions {
            key: Some(key),
            ..FitOptions::default()
        };
        match fit_log_distance_with(&set, &opts) {
            Ok(fit) => {
                out.fits.insert(key, fit);
            }
            Err(e @ (Error::InsufficientData { .. } | Error::DegenerateDesign)) => {
                out.skipped.push(SkippedCell {
                    key,
                    reason: e.to_string(),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// One shadowed sample per distance, drawn from a stream seeded by `seed`.
pub fn synth_samples(model: &PathLossModel, distances: &[f64], seed: u64) -> Result<SampleSet> {
    let mut rng = stream(seed, 0);
    let mut set = SampleSet::new();
    for &d in distances {
        let l = model.sample_path_loss(d, &mut rng)?;
        set.push(Sample::new(d, l).tagged(None, model.region, model.height))?;
    }
    Ok(set)
}
