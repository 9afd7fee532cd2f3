//! Link budget and interference analysis over a bus layout.
//!
//! Every transmitter shares one channel with the access point. Received
//! powers are combined in linear milliwatts; only reported quantities are
//! in dB.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BusLayout;
use crate::models::{HeightClass, ModelSet, PathLossModel, Region};
use crate::pdp::{db_to_linear, linear_to_db};
use crate::stream;

/// Thermal noise density at 290 K, dBm/Hz.
pub const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

fn d_tx_power() -> f64 {
    10.0
}
fn d_gain() -> f64 {
    2.0
}
fn d_bandwidth() -> f64 {
    2.16e9
}
fn d_noise_figure() -> f64 {
    7.0
}
fn d_threshold() -> f64 {
    0.0
}

/// Radio parameters for the budget.
///
/// Only the 2 dBi antenna gains reflect the measurement setup. The other
/// defaults (10 dBm, one 2.16 GHz channel, 7 dB noise figure, 0 dB SNR
/// threshold) are generic 60 GHz WLAN figures and should be overridden for
/// any real study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BudgetRecord")]
pub struct LinkBudgetConfig {
    pub tx_power_dbm: f64,
    pub g_tx_dbi: f64,
    pub g_rx_dbi: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub snr_threshold_db: f64,
}

#[derive(Deserialize)]
struct BudgetRecord {
    #[serde(default = "d_tx_power")]
    tx_power_dbm: f64,
    #[serde(default = "d_gain")]
    g_tx_dbi: f64,
    #[serde(default = "d_gain")]
    g_rx_dbi: f64,
    #[serde(default = "d_bandwidth")]
    bandwidth_hz: f64,
    #[serde(default = "d_noise_figure")]
    noise_figure_db: f64,
    #[serde(default = "d_threshold")]
    snr_threshold_db: f64,
}

impl TryFrom<BudgetRecord> for LinkBudgetConfig {
    type Error = Error;

    fn try_from(r: BudgetRecord) -> Result<Self> {
        let c = LinkBudgetConfig {
            tx_power_dbm: r.tx_power_dbm,
            g_tx_dbi: r.g_tx_dbi,
            g_rx_dbi: r.g_rx_dbi,
            bandwidth_hz: r.bandwidth_hz,
            noise_figure_db: r.noise_figure_db,
            snr_threshold_db: r.snr_threshold_db,
        };
        c.validate()?;
        Ok(c)
    }
}

impl Default for LinkBudgetConfig {
    fn default() -> Self {
        Self {
            tx_power_dbm: d_tx_power(),
            g_tx_dbi: d_gain(),
            g_rx_dbi: d_gain(),
            bandwidth_hz: d_bandwidth(),
            noise_figure_db: d_noise_figure(),
            snr_threshold_db: d_threshold(),
        }
    }
}

impl LinkBudgetConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            errs.push(format!(
                "bandwidth_hz must be positive, got {}",
                self.bandwidth_hz
            ));
        }
        if !(self.noise_figure_db.is_finite() && self.noise_figure_db >= 0.0) {
            errs.push(format!(
                "noise_figure_db must be non-negative, got {}",
                self.noise_figure_db
            ));
        }
        if ![self.tx_power_dbm, self.g_tx_dbi, self.g_rx_dbi]
            .iter()
            .all(|v| v.is_finite())
        {
            errs.push("tx_power_dbm and antenna gains must be finite".into());
        }
        if self.snr_threshold_db.is_nan() {
            errs.push("snr_threshold_db is NaN".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::File {
            path: path.to_owned(),
            msg: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.line() as u64,
            msg: e.to_string(),
        })
    }

    /// `-174 + 10 log10(B) + NF`, dBm.
    pub fn noise_floor_dbm(&self) -> f64 {
        THERMAL_NOISE_DBM_HZ + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }

    pub fn eirp_plus_rx_gain_dbm(&self) -> f64 {
        self.tx_power_dbm + self.g_tx_dbi + self.g_rx_dbi
    }

    pub fn received_power_dbm(&self, pl_db: f64) -> f64 {
        self.eirp_plus_rx_gain_dbm() - pl_db
    }

    pub fn link_snr(&self, pl_db: f64) -> f64 {
        self.received_power_dbm(pl_db) - self.noise_floor_dbm()
    }

    /// Largest path loss that still meets the SNR threshold.
    pub fn max_path_loss_db(&self) -> f64 {
        self.eirp_plus_rx_gain_dbm() - self.noise_floor_dbm() - self.snr_threshold_db
    }
}

pub fn noise_floor_dbm(config: &LinkBudgetConfig) -> f64 {
    config.noise_floor_dbm()
}

pub fn link_snr(config: &LinkBudgetConfig, pl_db: f64) -> f64 {
    config.link_snr(pl_db)
}

/// Shannon capacity `B log2(1 + snr)`, bit/s.
pub fn shannon_rate(snr_db: f64, bandwidth_hz: f64) -> Result<f64> {
    if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
        return Err(Error::domain(format!(
            "bandwidth must be positive, got {bandwidth_hz}"
        )));
    }
    Ok(bandwidth_hz * db_to_linear(snr_db).ln_1p() / std::f64::consts::LN_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeatReport {
    pub seat: u32,
    pub height: HeightClass,
    pub distance_m: f64,
    pub mean_pl_db: f64,
    pub snr_db: f64,
    pub rate_bps: f64,
    pub coverage: f64,
    /// Distance outside the fitted range of the model.
    pub extrapolated: bool,
}

/// Picks the path loss model applied to a seat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelChoice {
    /// The model of the seat's own group.
    #[default]
    Group,
    /// The pooled `All` model for every seat.
    Pooled,
}

fn model_for<'a>(
    layout: &BusLayout,
    models: &'a ModelSet,
    seat: u32,
    height: HeightClass,
    choice: ModelChoice,
) -> Result<&'a PathLossModel> {
    let region = match choice {
        ModelChoice::Group => layout.seat(seat)?.group,
        ModelChoice::Pooled => Region::All,
    };
    models.require(region, height)
}

/// Mean-path-loss budget for every eligible seat at `height`, by seat id.
pub fn seat_sweep(
    layout: &BusLayout,
    models: &ModelSet,
    config: &LinkBudgetConfig,
    height: HeightClass,
    choice: ModelChoice,
) -> Result<Vec<SeatReport>> {
    config.validate()?;
    let pl_max = config.max_path_loss_db();
    layout
        .seats_in_group(Region::All, height)
        .into_iter()
        .map(|seat| {
            let model = model_for(layout, models, seat, height, choice)?;
            let distance_m = layout.link_distance(seat, height)?;
            let eval = model.evaluate(distance_m)?;
            let snr_db = config.link_snr(eval.mean_db);
            Ok(SeatReport {
                seat,
                height,
                distance_m,
                mean_pl_db: eval.mean_db,
                snr_db,
                rate_bps: shannon_rate(snr_db, config.bandwidth_hz)?,
                coverage: model.coverage_probability(distance_m, pl_max)?,
                extrapolated: eval.extrapolated,
            })
        })
        .collect()
}

/// Shadowing correlation across Monte-Carlo draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Shadowing {
    /// Fresh, independent shadowing for every link in every draw.
    #[default]
    Independent,
    /// One realisation per link, reused by every draw.
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FootprintRequest {
    pub active_seats: Vec<u32>,
    pub height: HeightClass,
    pub seed: u64,
    pub n_draws: usize,
    pub shadowing: Shadowing,
    pub choice: ModelChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SinrSummary {
    pub seat: u32,
    pub height: HeightClass,
    pub distance_m: f64,
    pub mean_snr_db: f64,
    pub mean_sinr_db: f64,
    pub median_sinr_db: f64,
    pub p05_sinr_db: f64,
}

/// Linear-interpolated percentile of sorted data, `q` in `[0, 100]`.
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

struct Link<'a> {
    model: &'a PathLossModel,
    distance_m: f64,
}

fn resolve_links<'a>(
    layout: &BusLayout,
    models: &'a ModelSet,
    seats: &[u32],
    height: HeightClass,
    choice: ModelChoice,
) -> Result<Vec<Link<'a>>> {
    seats
        .iter()
        .map(|&seat| {
            let distance_m = layout.link_distance(seat, height)?;
            let model = model_for(layout, models, seat, height, choice)?;
            model.mean_path_loss(distance_m)?;
            Ok(Link { model, distance_m })
        })
        .collect()
}

/// Per-draw `(snr_db, sinr_db)` for every active link, in request order.
fn footprint_draw(
    links: &[Link<'_>],
    config: &LinkBudgetConfig,
    noise_mw: f64,
    seed: u64,
    index: u64,
) -> Vec<(f64, f64)> {
    let mut rng = stream(seed, index);
    let rx_mw: Vec<f64> = links
        .iter()
        .map(|l| {
            let pl = l
                .model
                .sample_path_loss(l.distance_m, &mut rng)
                .expect("distance validated in resolve_links");
            db_to_linear(config.received_power_dbm(pl))
        })
        .collect();
    (0..links.len())
        .map(|s| {
            let interference: f64 = rx_mw
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != s)
                .map(|(_, p)| p)
                .sum();
            (
                linear_to_db(rx_mw[s] / noise_mw),
                linear_to_db(rx_mw[s] / (noise_mw + interference)),
            )
        })
        .collect()
}

/// SINR at the access point when all `active_seats` transmit at once.
///
/// Draw `i` uses random stream `(seed, i)`, so the result is independent
/// of thread scheduling.
pub fn interference_footprint(
    layout: &BusLayout,
    models: &ModelSet,
    config: &LinkBudgetConfig,
    req: &FootprintRequest,
) -> Result<Vec<SinrSummary>> {
    config.validate()?;
    if req.n_draws == 0 {
        return Err(Error::domain("n_draws must be at least 1"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &s in &req.active_seats {
        if !seen.insert(s) {
            return Err(Error::domain(format!("seat {s} listed twice")));
        }
    }
    let links = resolve_links(layout, models, &req.active_seats, req.height, req.choice)?;
    let noise_mw = db_to_linear(config.noise_floor_dbm());

    let draws: Vec<Vec<(f64, f64)>> = (0..req.n_draws as u64)
        .into_par_iter()
        .map(|i| {
            let index = match req.shadowing {
                Shadowing::Independent => i,
                Shadowing::Frozen => 0,
            };
            footprint_draw(&links, config, noise_mw, req.seed, index)
        })
        .collect();

    let n = req.n_draws as f64;
    Ok(req
        .active_seats
        .iter()
        .zip(&links)
        .enumerate()
        .map(|(k, (&seat, link))| {
            let mut sinr: Vec<f64> = draws.iter().map(|d| d[k].1).collect();
            let mean_snr_db = draws.iter().map(|d| d[k].0).sum::<f64>() / n;
            let mean_sinr_db = sinr.iter().sum::<f64>() / n;
            sinr.sort_by(f64::total_cmp);
            SinrSummary {
                seat,
                height: req.height,
                distance_m: link.distance_m,
                mean_snr_db,
                mean_sinr_db,
                median_sinr_db: percentile_sorted(&sinr, 50.0),
                p05_sinr_db: percentile_sorted(&sinr, 5.0),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageEstimate {
    pub seat: u32,
    pub height: HeightClass,
    pub empirical: f64,
    pub analytic: f64,
}

/// Fraction of shadowing draws meeting the SNR threshold, per eligible
/// seat, alongside the closed-form probability.
pub fn empirical_coverage(
    layout: &BusLayout,
    models: &ModelSet,
    config: &LinkBudgetConfig,
    height: HeightClass,
    seed: u64,
    n_draws: usize,
    choice: ModelChoice,
) -> Result<Vec<CoverageEstimate>> {
    config.validate()?;
    if n_draws == 0 {
        return Err(Error::domain("n_draws must be at least 1"));
    }
    let seats = layout.seats_in_group(Region::All, height);
    let links = resolve_links(layout, models, &seats, height, choice)?;
    let threshold = config.snr_threshold_db;

    let hits = (0..n_draws as u64)
        .into_par_iter()
        .fold(
            || vec![0u64; links.len()],
            |mut acc, i| {
                let mut rng = stream(seed, i);
                for (k, l) in links.iter().enumerate() {
                    let pl = l
                        .model
                        .sample_path_loss(l.distance_m, &mut rng)
                        .expect("distance validated in resolve_links");
                    if config.link_snr(pl) >= threshold {
                        acc[k] += 1;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; links.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let pl_max = config.max_path_loss_db();
    seats
        .iter()
        .zip(&links)
        .zip(hits)
        .map(|((&seat, l), h)| {
            Ok(CoverageEstimate {
                seat,
                height,
                empirical: h as f64 / n_draws as f64,
                analytic: l.model.coverage_probability(l.distance_m, pl_max)?,
            })
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.into())
}

/// `seat,height,distance_m,mean_pl_db,snr_db,rate_bps,coverage`
pub fn write_reports_csv<W: Write>(reports: &[SeatReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "seat",
        "height",
        "distance_m",
        "mean_pl_db",
        "snr_db",
        "rate_bps",
        "coverage",
    ])
    .map_err(csv_err)?;
    for r in reports {
        w.write_record([
            r.seat.to_string(),
            r.height.to_string(),
            r.distance_m.to_string(),
            r.mean_pl_db.to_string(),
            r.snr_db.to_string(),
            r.rate_bps.to_string(),
            r.coverage.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_footprint_csv<W: Write>(summaries: &[SinrSummary], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "seat",
        "height",
        "distance_m",
        "mean_snr_db",
        "mean_sinr_db",
        "median_sinr_db",
        "p05_sinr_db",
    ])
    .map_err(csv_err)?;
    for s in summaries {
        w.write_record([
            s.seat.to_string(),
            s.height.to_string(),
            s.distance_m.to_string(),
            s.mean_snr_db.to_string(),
            s.mean_sinr_db.to_string(),
            s.median_sinr_db.to_string(),
            s.p05_sinr_db.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
