//! Power delay profile reduction: received power is the sum of the
//! retained PDP components, and path loss is the radiated power minus the
//! received power with the antenna gains added back.
//!
//! On disk a measurement campaign is a directory of measurement sets:
//!
//! ```text
//! <root>/<seat>_<height>/meta.json      {"seat": 14, "height": "upper"}
//! <root>/<seat>_<height>/sweep_<k>.csv  delay_ns,power_db
//! <root>/<seat>_<height>/sweep_<k>.json optional {"seat", "height", "sweep"}
//! ```

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{HeightClass, SPEED_OF_LIGHT};

/// Peak-relative noise threshold used when none is configured, dB.
pub const DEFAULT_NOISE_THRESHOLD_DB: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdpBin {
    pub delay_ns: f64,
    pub power_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub seat: u32,
    pub height: HeightClass,
    pub sweep: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdpRecord {
    bins: Vec<PdpBin>,
    pub meta: Option<SweepMeta>,
}

impl PdpRecord {
    /// Delays must be finite and strictly increasing; powers finite.
    pub fn new(bins: Vec<PdpBin>) -> Result<Self> {
        for (i, b) in bins.iter().enumerate() {
            if !b.delay_ns.is_finite() || !b.power_db.is_finite() {
                return Err(Error::domain(format!("bin {i}: non-finite value")));
            }
            if i > 0 && b.delay_ns <= bins[i - 1].delay_ns {
                return Err(Error::domain(format!(
                    "bin {i}: delays must be strictly increasing"
                )));
            }
        }
        Ok(Self { bins, meta: None })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(delay_ns, power_db)| PdpBin { delay_ns, power_db })
                .collect(),
        )
    }

    pub fn with_meta(mut self, meta: SweepMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn bins(&self) -> &[PdpBin] {
        &self.bins
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Strongest bin; the earliest one wins a tie.
    pub fn peak_component(&self) -> Result<PdpBin> {
        let mut it = self.bins.iter();
        let mut best = *it.next().ok_or(Error::EmptyPdp)?;
        for b in it {
            if b.power_db > best.power_db {
                best = *b;
            }
        }
        Ok(best)
    }

    /// Power sum of all bins within `threshold_db` of the peak, in dB.
    pub fn integrate(&self, threshold_db: f64) -> Result<f64> {
        if threshold_db.is_nan() || threshold_db < 0.0 {
            return Err(Error::domain(format!(
                "threshold must be non-negative, got {threshold_db}"
            )));
        }
        let peak = self.peak_component()?.power_db;
        let floor = peak - threshold_db;
        let total: f64 = self
            .bins
            .iter()
            .filter(|b| b.power_db >= floor)
            .map(|b| db_to_linear(b.power_db))
            .sum();
        Ok(linear_to_db(total))
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.into());
        w.write_record(["delay_ns", "power_db"]).map_err(io)?;
        for b in &self.bins {
            w.write_record([b.delay_ns.to_string(), b.power_db.to_string()])
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn integrate_pdp(pdp: &PdpRecord, threshold_db: f64) -> Result<f64> {
    pdp.integrate(threshold_db)
}

pub fn peak_component(pdp: &PdpRecord) -> Result<(f64, f64)> {
    pdp.peak_component().map(|b| (b.delay_ns, b.power_db))
}

pub(crate) fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub(crate) fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// One-way propagation distance for a delay, m.
pub fn delay_to_distance(delay_ns: f64) -> Result<f64> {
    if !(delay_ns.is_finite() && delay_ns >= 0.0) {
        return Err(Error::domain(format!(
            "delay must be non-negative, got {delay_ns}"
        )));
    }
    Ok(delay_ns * 1e-9 * SPEED_OF_LIGHT)
}

/// Inverse of [`delay_to_distance`].
pub fn distance_to_delay(distance_m: f64) -> Result<f64> {
    if !(distance_m.is_finite() && distance_m >= 0.0) {
        return Err(Error::domain(format!(
            "distance must be non-negative, got {distance_m}"
        )));
    }
    Ok(distance_m / SPEED_OF_LIGHT * 1e9)
}

fn default_gain() -> f64 {
    2.0
}

fn default_threshold() -> f64 {
    DEFAULT_NOISE_THRESHOLD_DB
}

/// System calibration needed to turn received power into path loss.
/// There is deliberately no default radiated power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CalibrationRecord")]
pub struct LinkCalibration {
    pub radiated_power_db: f64,
    pub g_tx_dbi: f64,
    pub g_rx_dbi: f64,
    pub noise_threshold_db: f64,
}

#[derive(Deserialize)]
struct CalibrationRecord {
    radiated_power_db: f64,
    #[serde(default = "default_gain")]
    g_tx_dbi: f64,
    #[serde(default = "default_gain")]
    g_rx_dbi: f64,
    #[serde(default = "default_threshold")]
    noise_threshold_db: f64,
}

impl TryFrom<CalibrationRecord> for LinkCalibration {
    type Error = Error;

    fn try_from(r: CalibrationRecord) -> Result<Self> {
        LinkCalibration::new(
            r.radiated_power_db,
            r.g_tx_dbi,
            r.g_rx_dbi,
            r.noise_threshold_db,
        )
    }
}

impl LinkCalibration {
    pub fn new(
        radiated_power_db: f64,
        g_tx_dbi: f64,
        g_rx_dbi: f64,
        noise_threshold_db: f64,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        if !radiated_power_db.is_finite() {
            problems.push("radiated_power_db must be finite".to_owned());
        }
        if !g_tx_dbi.is_finite() || !g_rx_dbi.is_finite() {
            problems.push("antenna gains must be finite".to_owned());
        }
        if noise_threshold_db.is_nan() || noise_threshold_db <= 0.0 {
            problems.push("noise_threshold_db must be positive".to_owned());
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Self {
            radiated_power_db,
            g_tx_dbi,
            g_rx_dbi,
            noise_threshold_db,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.line() as u64,
            msg: e.to_string(),
        })
    }

    /// `radiated - received + g_tx + g_rx`.
    pub fn path_loss_from_power(&self, p_rx_db: f64) -> f64 {
        self.radiated_power_db - p_rx_db + self.g_tx_dbi + self.g_rx_dbi
    }

    /// Received power a single component would need for a given path loss.
    pub fn power_for_path_loss(&self, path_loss_db: f64) -> f64 {
        self.radiated_power_db - path_loss_db + self.g_tx_dbi + self.g_rx_dbi
    }
}

pub fn path_loss_from_power(cal: &LinkCalibration, p_rx_db: f64) -> f64 {
    cal.path_loss_from_power(p_rx_db)
}

/// Repeated sweeps recorded at one transmitter position.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub seat: u32,
    pub height: HeightClass,
    sweeps: Vec<PdpRecord>,
}

impl MeasurementSet {
    /// Sweeps carrying metadata must agree with `seat` and `height`.
    pub fn new(seat: u32, height: HeightClass, sweeps: Vec<PdpRecord>) -> Result<Self> {
        for (i, s) in sweeps.iter().enumerate() {
            if let Some(m) = s.meta {
                if m.seat != seat || m.height != height {
                    return Err(Error::Validation(vec![format!(
                        "sweep {i} belongs to seat {} / {}, not {seat} / {height}",
                        m.seat, m.height
                    )]));
                }
            }
        }
        Ok(Self {
            seat,
            height,
            sweeps,
        })
    }

    pub fn sweeps(&self) -> &[PdpRecord] {
        &self.sweeps
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatedPoint {
    pub distance_m: f64,
    pub received_power_db: f64,
    pub path_loss_db: f64,
}

/// Linear-power mean of the per-sweep received powers, converted to path
/// loss; the distance comes from the median peak delay.
///
/// Both reductions sort their inputs first, so the result does not depend
/// on sweep order.
pub fn aggregate_measurement(
    set: &MeasurementSet,
    cal: &LinkCalibration,
) -> Result<AggregatedPoint> {
    if set.sweeps.is_empty() {
        return Err(Error::NoSweeps);
    }
    let mut powers = Vec::with_capacity(set.sweeps.len());
    let mut delays = Vec::with_capacity(set.sweeps.len());
    for sweep in &set.sweeps {
        powers.push(db_to_linear(sweep.integrate(cal.noise_threshold_db)?));
        delays.push(sweep.peak_component()?.delay_ns);
    }
    powers.sort_by(f64::total_cmp);
    delays.sort_by(f64::total_cmp);

    let mean_power = powers.iter().sum::<f64>() / powers.len() as f64;
    let received_power_db = linear_to_db(mean_power);
    let mid = delays.len() / 2;
    let median_delay = if delays.len() % 2 == 1 {
        delays[mid]
    } else {
        0.5 * (delays[mid - 1] + delays[mid])
    };
    Ok(AggregatedPoint {
        distance_m: delay_to_distance(median_delay)?,
        received_power_db,
        path_loss_db: cal.path_loss_from_power(received_power_db),
    })
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::File {
        path: path.to_owned(),
        msg: e.to_string(),
    })
}

fn read_pdp<R: Read>(reader: R, path: &Path) -> Result<PdpRecord> {
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_owned(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if headers.len() != 2 || &headers[0] != "delay_ns" || &headers[1] != "power_db" {
        return Err(parse_err(1, "header must be delay_ns,power_db".into()));
    }
    let mut bins: Vec<PdpBin> = Vec::new();
    for rec in rdr.records() {
        let rec =
            rec.map_err(|e| parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize, name: &str| -> Result<f64> {
            let raw = &rec[i];
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(line, format!("{name}: invalid value {raw:?}"))),
            }
        };
        let bin = PdpBin {
            delay_ns: num(0, "delay_ns")?,
            power_db: num(1, "power_db")?,
        };
        if let Some(prev) = bins.last() {
            if bin.delay_ns <= prev.delay_ns {
                return Err(parse_err(
                    line,
                    format!(
                        "delay {} ns does not increase after {} ns",
                        bin.delay_ns, prev.delay_ns
                    ),
                ));
            }
        }
        bins.push(bin);
    }
    if bins.is_empty() {
        return Err(Error::File {
            path: path.to_owned(),
            msg: "power delay profile has no bins".into(),
        });
    }
    PdpRecord::new(bins)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_owned(),
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

/// Loads one PDP CSV. A sidecar `<stem>.json` next to it, when present,
/// supplies the sweep metadata.
pub fn load_pdp_csv(path: impl AsRef<Path>) -> Result<PdpRecord> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::File {
        path: path.to_owned(),
        msg: e.to_string(),
    })?;
    let mut pdp = read_pdp(file, path)?;
    let sidecar = path.with_extension("json");
    if sidecar.is_file() {
        pdp.meta = Some(read_json(&sidecar)?);
    }
    Ok(pdp)
}

#[derive(Deserialize)]
struct SetMeta {
    seat: u32,
    height: HeightClass,
}

fn parse_set_dir_name(name: &str) -> Option<(u32, HeightClass)> {
    let (seat, height) = name.split_once('_')?;
    Some((seat.parse().ok()?, height.parse().ok()?))
}

fn parse_sweep_name(name: &str) -> Option<u32> {
    name.strip_prefix("sweep_")?
        .strip_suffix(".csv")?
        .parse()
        .ok()
}

/// Loads every `<seat>_<height>` measurement set under `root`, ordered by
/// seat then height; sweeps are ordered by index.
pub fn load_measurement_dir(root: impl AsRef<Path>) -> Result<Vec<MeasurementSet>> {
    let root = root.as_ref();
    let file_err = |path: &Path, msg: String| Error::File {
        path: path.to_owned(),
        msg,
    };
    let mut sets = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| file_err(root, e.to_string()))? {
        let dir = entry?.path();
        if !dir.is_dir() {
            continue;
        }
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let (seat, height) = parse_set_dir_name(name)
            .ok_or_else(|| file_err(&dir, "directory name must be <seat>_<lower|upper>".into()))?;

        let meta_path = dir.join("meta.json");
        if !meta_path.is_file() {
            return Err(file_err(&meta_path, "missing measurement metadata".into()));
        }
        let meta: SetMeta = read_json(&meta_path)?;
        if meta.seat != seat || meta.height != height {
            return Err(file_err(
                &meta_path,
                format!(
                    "metadata says seat {} / {}, directory says {seat} / {height}",
                    meta.seat, meta.height
                ),
            ));
        }

        let mut sweeps: Vec<(u32, PathBuf)> = Vec::new();
        for f in fs::read_dir(&dir)? {
            let p = f?.path();
            if let Some(k) = p
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(parse_sweep_name)
            {
                sweeps.push((k, p));
            }
        }
        sweeps.sort();
        let mut records = Vec::with_capacity(sweeps.len());
        for (k, p) in sweeps {
            let pdp = load_pdp_csv(&p)?;
            if let Some(m) = pdp.meta {
                if m.seat != seat || m.height != height || m.sweep != k {
                    return Err(file_err(
                        &p.with_extension("json"),
                        format!("sidecar metadata does not match {seat}_{height}/sweep_{k}"),
                    ));
                }
            }
            records.push(pdp.with_meta(SweepMeta {
                seat,
                height,
                sweep: k,
            }));
        }
        if records.is_empty() {
            return Err(file_err(
                &dir,
                "measurement set has no sweep_<k>.csv files".into(),
            ));
        }
        sets.push(MeasurementSet::new(seat, height, records)?);
    }
    sets.sort_by_key(|s| (s.seat, s.height));
    Ok(sets)
}

/// Writes sets in the layout read by [`load_measurement_dir`], including
/// per-sweep sidecars.
pub fn write_measurement_dir(root: impl AsRef<Path>, sets: &[MeasurementSet]) -> Result<()> {
    let root = root.as_ref();
    fs::create_dir_all(root)?;
    for set in sets {
        let dir = root.join(format!("{}_{}", set.seat, set.height));
        fs::create_dir_all(&dir)?;
        let meta = serde_json::json!({ "seat": set.seat, "height": set.height });
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        for (k, sweep) in set.sweeps.iter().enumerate() {
            let k = sweep.meta.map(|m| m.sweep).unwrap_or(k as u32);
            let file = fs::File::create(dir.join(format!("sweep_{k}.csv")))?;
            sweep.write_csv(std::io::BufWriter::new(file))?;
            let sidecar = SweepMeta {
                seat: set.seat,
                height: set.height,
                sweep: k,
            };
            fs::write(
                dir.join(format!("sweep_{k}.json")),
                serde_json::to_string(&sidecar)?,
            )?;
        }
    }
    Ok(())
}
