//! Python bindings for the mmbus path loss toolkit.

use mmbus::linkbudget::{
    interference_footprint, seat_sweep as core_seat_sweep, shannon_rate as core_shannon_rate,
    FootprintRequest, ModelChoice, Shadowing,
};
use mmbus::models::{fspl as core_fspl, CARRIER_HZ};
use mmbus::pdp::{
    delay_to_distance as core_delay_to_distance, distance_to_delay as core_distance_to_delay,
};
use mmbus::{BusLayout, HeightClass, LinkBudgetConfig, ModelSet, PdpRecord, Region, SampleSet};
use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;

fn err(e: mmbus::Error) -> PyErr {
    match e {
        mmbus::Error::SeatNotFound(_) | mmbus::Error::MissingModel(_) => {
            PyKeyError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn region(s: &str) -> PyResult<Region> {
    s.parse().map_err(err)
}

fn height(s: &str) -> PyResult<HeightClass> {
    match s.to_ascii_lowercase().as_str() {
        "lower" => Ok(HeightClass::Lower),
        "upper" => Ok(HeightClass::Upper),
        _ => Err(PyValueError::new_err(format!("unknown height {s:?}"))),
    }
}

/// Log-distance model `L(d) = alpha + 10 beta log10(d) + N(0, sigma^2)`.
#[pyclass(name = "PathLossModel", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyModel(mmbus::PathLossModel);

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (alpha_db, beta, sigma_db, region="All", height="upper"))]
    fn new(alpha_db: f64, beta: f64, sigma_db: f64, region: &str, height: &str) -> PyResult<Self> {
        let m = mmbus::PathLossModel::new(
            alpha_db,
            beta,
            sigma_db,
            self::region(region)?,
            self::height(height)?,
        )
        .map_err(err)?;
        Ok(Self(m))
    }

    #[getter]
    fn alpha_db(&self) -> f64 {
        self.0.alpha_db
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta
    }

    #[getter]
    fn sigma_db(&self) -> f64 {
        self.0.sigma_db
    }

    #[getter]
    fn region(&self) -> String {
        self.0.region.to_string()
    }

    #[getter]
    fn height(&self) -> String {
        self.0.height.to_string()
    }

    fn mean_path_loss(&self, d: f64) -> PyResult<f64> {
        self.0.mean_path_loss(d).map_err(err)
    }

    /// `n` shadowed draws at distance `d`, reproducible for a given seed.
    #[pyo3(signature = (d, seed, n=1))]
    fn sample(&self, d: f64, seed: u64, n: usize) -> PyResult<Vec<f64>> {
        let mut rng = mmbus::stream(seed, 0);
        (0..n)
            .map(|_| self.0.sample_path_loss(d, &mut rng))
            .collect::<Result<_, _>>()
            .map_err(err)
    }

    fn coverage_probability(&self, d: f64, max_path_loss_db: f64) -> PyResult<f64> {
        self.0
            .coverage_probability(d, max_path_loss_db)
            .map_err(err)
    }

    /// `(alpha_db, slope_db_per_decade, variance_db2)`.
    fn combined_form(&self) -> (f64, f64, f64) {
        let c = self.0.to_combined_form();
        (c.alpha_db, c.slope_db_per_decade, c.variance_db2)
    }

    fn __repr__(&self) -> String {
        format!(
            "PathLossModel(alpha_db={}, beta={}, sigma_db={}, region='{}', height='{}')",
            self.0.alpha_db, self.0.beta, self.0.sigma_db, self.0.region, self.0.height
        )
    }
}

#[pyfunction]
fn builtin_models() -> Vec<PyModel> {
    mmbus::builtin_models().into_iter().map(PyModel).collect()
}

#[pyfunction]
fn builtin(region: &str, height: &str) -> PyResult<PyModel> {
    Ok(PyModel(mmbus::builtin(
        self::region(region)?,
        self::height(height)?,
    )))
}

/// Least-squares fit; returns `(model, r_squared)`.
#[pyfunction]
fn fit(distances_m: Vec<f64>, path_loss_db: Vec<f64>) -> PyResult<(PyModel, f64)> {
    if distances_m.len() != path_loss_db.len() {
        return Err(PyValueError::new_err(
            "distances and losses differ in length",
        ));
    }
    let pairs: Vec<(f64, f64)> = distances_m.into_iter().zip(path_loss_db).collect();
    let set = SampleSet::from_pairs(&pairs).map_err(err)?;
    let f = mmbus::fit_log_distance(&set).map_err(err)?;
    Ok((PyModel(f.model), f.r_squared))
}

/// Received power of a PDP: components within `threshold_db` of the peak, summed.
#[pyfunction]
#[pyo3(signature = (delays_ns, powers_db, threshold_db=mmbus::pdp::DEFAULT_NOISE_THRESHOLD_DB))]
fn integrate_pdp(delays_ns: Vec<f64>, powers_db: Vec<f64>, threshold_db: f64) -> PyResult<f64> {
    if delays_ns.len() != powers_db.len() {
        return Err(PyValueError::new_err("delays and powers differ in length"));
    }
    let pairs: Vec<(f64, f64)> = delays_ns.into_iter().zip(powers_db).collect();
    let pdp = PdpRecord::from_pairs(&pairs).map_err(err)?;
    pdp.integrate(threshold_db).map_err(err)
}

#[pyfunction]
fn delay_to_distance(delay_ns: f64) -> PyResult<f64> {
    core_delay_to_distance(delay_ns).map_err(err)
}

#[pyfunction]
fn distance_to_delay(distance_m: f64) -> PyResult<f64> {
    core_distance_to_delay(distance_m).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (d, f_hz=CARRIER_HZ))]
fn fspl(d: f64, f_hz: f64) -> PyResult<f64> {
    core_fspl(d, f_hz).map_err(err)
}

#[pyfunction]
fn shannon_rate(snr_db: f64, bandwidth_hz: f64) -> PyResult<f64> {
    core_shannon_rate(snr_db, bandwidth_hz).map_err(err)
}

/// Transmit power, antenna gains, bandwidth and noise figure of a link.
#[pyclass(name = "LinkBudget", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyBudget(LinkBudgetConfig);

#[pymethods]
impl PyBudget {
    #[new]
    #[pyo3(signature = (tx_power_dbm=None, g_tx_dbi=None, g_rx_dbi=None, bandwidth_hz=None, noise_figure_db=None, snr_threshold_db=None))]
    fn new(
        tx_power_dbm: Option<f64>,
        g_tx_dbi: Option<f64>,
        g_rx_dbi: Option<f64>,
        bandwidth_hz: Option<f64>,
        noise_figure_db: Option<f64>,
        snr_threshold_db: Option<f64>,
    ) -> PyResult<Self> {
        let d = LinkBudgetConfig::default();
        let c = LinkBudgetConfig {
            tx_power_dbm: tx_power_dbm.unwrap_or(d.tx_power_dbm),
            g_tx_dbi: g_tx_dbi.unwrap_or(d.g_tx_dbi),
            g_rx_dbi: g_rx_dbi.unwrap_or(d.g_rx_dbi),
            bandwidth_hz: bandwidth_hz.unwrap_or(d.bandwidth_hz),
            noise_figure_db: noise_figure_db.unwrap_or(d.noise_figure_db),
            snr_threshold_db: snr_threshold_db.unwrap_or(d.snr_threshold_db),
        };
        c.validate().map_err(err)?;
        Ok(Self(c))
    }

    fn noise_floor_dbm(&self) -> f64 {
        self.0.noise_floor_dbm()
    }

    fn link_snr(&self, path_loss_db: f64) -> f64 {
        self.0.link_snr(path_loss_db)
    }

    fn max_path_loss_db(&self) -> f64 {
        self.0.max_path_loss_db()
    }
}

/// Bus geometry: receiver position and transmitter seats.
#[pyclass(name = "BusLayout", frozen)]
struct PyLayout(BusLayout);

#[pymethods]
impl PyLayout {
    #[new]
    #[pyo3(signature = (json=None))]
    fn new(json: Option<&str>) -> PyResult<Self> {
        match json {
            Some(text) => BusLayout::from_json(text).map(Self).map_err(err),
            None => Ok(Self(BusLayout::default_layout())),
        }
    }

    fn link_distance(&self, seat: u32, height: &str) -> PyResult<f64> {
        self.0
            .link_distance(seat, self::height(height)?)
            .map_err(err)
    }

    fn eligible_seats(&self, height: &str) -> PyResult<Vec<u32>> {
        Ok(self.0.seats_in_group(Region::All, self::height(height)?))
    }
}

fn model_set(models: Option<Vec<PyModel>>) -> ModelSet {
    match models {
        Some(v) => v.into_iter().map(|m| m.0).collect(),
        None => ModelSet::builtin(),
    }
}

/// `(seat, distance_m, mean_pl_db, snr_db, rate_bps, coverage)`
type SweepRow = (u32, f64, f64, f64, f64, f64);

/// `(seat, mean_snr_db, mean_sinr_db, median_sinr_db, p05_sinr_db)`
type FootprintRow = (u32, f64, f64, f64, f64);

fn choice(pooled: bool) -> ModelChoice {
    if pooled {
        ModelChoice::Pooled
    } else {
        ModelChoice::Group
    }
}

/// Per-seat budget rows for every eligible seat.
#[pyfunction]
#[pyo3(signature = (layout, budget, height="upper", models=None, pooled=false))]
fn seat_sweep(
    layout: &PyLayout,
    budget: &PyBudget,
    height: &str,
    models: Option<Vec<PyModel>>,
    pooled: bool,
) -> PyResult<Vec<SweepRow>> {
    let reports = core_seat_sweep(
        &layout.0,
        &model_set(models),
        &budget.0,
        self::height(height)?,
        choice(pooled),
    )
    .map_err(err)?;
    Ok(reports
        .into_iter()
        .map(|r| {
            (
                r.seat,
                r.distance_m,
                r.mean_pl_db,
                r.snr_db,
                r.rate_bps,
                r.coverage,
            )
        })
        .collect())
}

/// Monte-Carlo SINR summary for each active seat.
#[pyfunction]
#[pyo3(signature = (layout, budget, active_seats, seed, height="upper", n_draws=1000, frozen=false, models=None, pooled=false))]
#[allow(clippy::too_many_arguments)]
fn footprint(
    py: Python<'_>,
    layout: &PyLayout,
    budget: &PyBudget,
    active_seats: Vec<u32>,
    seed: u64,
    height: &str,
    n_draws: usize,
    frozen: bool,
    models: Option<Vec<PyModel>>,
    pooled: bool,
) -> PyResult<Vec<FootprintRow>> {
    let req = FootprintRequest {
        active_seats,
        height: self::height(height)?,
        seed,
        n_draws,
        shadowing: if frozen {
            Shadowing::Frozen
        } else {
            Shadowing::Independent
        },
        choice: choice(pooled),
    };
    let models = model_set(models);
    let summaries = py
        .detach(|| interference_footprint(&layout.0, &models, &budget.0, &req))
        .map_err(err)?;
    Ok(summaries
        .into_iter()
        .map(|s| {
            (
                s.seat,
                s.mean_snr_db,
                s.mean_sinr_db,
                s.median_sinr_db,
                s.p05_sinr_db,
            )
        })
        .collect())
}

#[pymodule]
fn mmbus_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyBudget>()?;
    m.add_class::<PyLayout>()?;
    m.add_function(wrap_pyfunction!(builtin_models, m)?)?;
    m.add_function(wrap_pyfunction!(builtin, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_pdp, m)?)?;
    m.add_function(wrap_pyfunction!(delay_to_distance, m)?)?;
    m.add_function(wrap_pyfunction!(distance_to_delay, m)?)?;
    m.add_function(wrap_pyfunction!(fspl, m)?)?;
    m.add_function(wrap_pyfunction!(shannon_rate, m)?)?;
    m.add_function(wrap_pyfunction!(seat_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(footprint, m)?)?;
    Ok(())
}
