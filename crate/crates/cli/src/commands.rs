use std::path::Path;

use mmbus::fit::{
    fit_by_partition, fit_log_distance_with, FitOptions, FitResult, Sample, SampleSet,
};
use mmbus::linkbudget::{
    interference_footprint, seat_sweep, write_footprint_csv, write_reports_csv, FootprintRequest,
    ModelChoice, Shadowing,
};
use mmbus::models::{builtin, compare_models, ModelSet, Z_95};
use mmbus::pdp::{
    aggregate_measurement, distance_to_delay, load_measurement_dir, write_measurement_dir,
    LinkCalibration, MeasurementSet, PdpRecord,
};
use mmbus::{BusLayout, HeightClass, LinkBudgetConfig, PathLossModel, Region};
use serde::Serialize;

use crate::output::{emit, json_bytes, CliError, CliResult};
use crate::{
    BudgetArgs, CompareArgs, EvalArgs, FitArgs, FootprintArgs, Format, Globals, HeightArg,
    ProcessArgs, SweepArgs, SynthArgs, VerifyArgs,
};

fn heights(h: HeightArg) -> Vec<HeightClass> {
    match h {
        HeightArg::Lower => vec![HeightClass::Lower],
        HeightArg::Upper => vec![HeightClass::Upper],
        HeightArg::Both => vec![HeightClass::Lower, HeightClass::Upper],
    }
}

fn single_height(h: HeightArg) -> CliResult<HeightClass> {
    match h {
        HeightArg::Lower => Ok(HeightClass::Lower),
        HeightArg::Upper => Ok(HeightClass::Upper),
        HeightArg::Both => Err(CliError::input("--height both is only valid for synth")),
    }
}

fn layout(g: &Globals) -> CliResult<BusLayout> {
    Ok(match &g.layout {
        Some(p) => BusLayout::load(p)?,
        None => BusLayout::default_layout(),
    })
}

fn load_registry(path: &Path) -> CliResult<ModelSet> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    ModelSet::from_json(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// `All/upper`, `c-lower`, `B:Upper` select a built-in model; anything
/// else is read as a model JSON file holding exactly one model.
pub fn resolve_model(spec: &str) -> CliResult<PathLossModel> {
    if let Some((r, h)) = spec.split_once(['/', '-', ':']) {
        if let (Ok(region), Ok(height)) = (r.parse::<Region>(), h.parse::<HeightClass>()) {
            return Ok(builtin(region, height));
        }
    }
    let set = load_registry(Path::new(spec))?;
    let mut it = set.iter();
    match (it.next(), it.next()) {
        (Some(m), None) => Ok(*m),
        _ => Err(CliError::input(format!(
            "{spec}: expected exactly one model"
        ))),
    }
}

/// Inclusive `start:stop:step` range.
pub fn parse_range(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || {
        CliError::input(format!(
            "invalid distance range {spec:?}; expected start:stop:step"
        ))
    };
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if !(start > 0.0 && stop >= start && step > 0.0 && stop.is_finite()) {
        return Err(CliError::input(format!(
            "invalid distance range {spec:?}: need 0 < start <= stop and step > 0"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

fn fit_table(fits: &[&FitResult]) -> Vec<u8> {
    let mut s = String::from("region,height,alpha_db,beta,sigma_db,r_squared,n\n");
    for f in fits {
        let m = &f.model;
        s.push_str(&format!(
            "{},{},{:.2},{:.2},{:.2},{:.4},{}\n",
            m.region, m.height, m.alpha_db, m.beta, m.sigma_db, f.r_squared, f.n
        ));
    }
    s.into_bytes()
}

pub fn fit(g: &Globals, a: FitArgs) -> CliResult {
    let samples = SampleSet::load_csv(&a.samples)?;
    let fits: Vec<FitResult> = if a.by_group {
        if a.trim != 0.0 {
            return Err(CliError::input("--trim is not supported with --by-group"));
        }
        let part = fit_by_partition(&samples)?;
        for s in &part.skipped {
            eprintln!("mmbus: skipped {}/{}: {}", s.key.0, s.key.1, s.reason);
        }
        if part.fits.is_empty() {
            return Err(mmbus::Error::InsufficientData {
                needed: 3,
                got: samples.len(),
            }
            .into());
        }
        part.fits.into_values().collect()
    } else {
        let opts = FitOptions {
            trim_fraction: a.trim,
            key: None,
        };
        vec![fit_log_distance_with(&samples, &opts)?]
    };

    let bytes = match g.format.unwrap_or(Format::Json) {
        Format::Csv => fit_table(&fits.iter().collect::<Vec<_>>()),
        Format::Json if a.by_group => {
            let values: Vec<_> = fits.iter().map(FitResult::to_json_value).collect();
            json_bytes(&values)?
        }
        Format::Json => json_bytes(&fits[0].to_json_value())?,
    };
    emit(g.output.as_deref(), &bytes)
}

#[derive(Serialize)]
struct CurvePoint {
    distance_m: f64,
    mean_pl_db: f64,
    p05_db: f64,
    p95_db: f64,
}

pub fn eval(g: &Globals, a: EvalArgs) -> CliResult {
    let model = resolve_model(&a.model)?;
    let mut points = Vec::new();
    for d in parse_range(&a.distances)? {
        let e = model.evaluate(d)?;
        if e.extrapolated {
            eprintln!("mmbus: warning: d = {d} m is outside the fitted range of the model");
        }
        let spread = Z_95 * model.sigma_db;
        points.push(CurvePoint {
            distance_m: d,
            mean_pl_db: e.mean_db,
            p05_db: e.mean_db - spread,
            p95_db: e.mean_db + spread,
        });
    }
    let bytes = match g.format.unwrap_or(Format::Csv) {
        Format::Json => json_bytes(&points)?,
        Format::Csv => {
            let mut s = String::from("distance_m,mean_pl_db,p05_db,p95_db\n");
            for p in &points {
                s.push_str(&format!(
                    "{},{},{},{}\n",
                    p.distance_m, p.mean_pl_db, p.p05_db, p.p95_db
                ));
            }
            s.into_bytes()
        }
    };
    emit(g.output.as_deref(), &bytes)
}

/// One comparison between a registry-derived quantity and the value
/// printed in the combined model expressions.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub computed: f64,
    pub printed: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Values printed for the pooled models in combined form:
/// `L = alpha + slope log10(d) + N(0, variance)`.
const PRINTED: [(HeightClass, f64, f64, f64); 2] = [
    (HeightClass::Lower, 85.2, 17.4, 6.5),
    (HeightClass::Upper, 82.9, 20.3, 5.5),
];

/// Allowed |computed - printed| for (alpha, slope, variance). The alpha
/// and slope bounds are the half-width of one printed decimal; a value
/// sitting exactly on the bound passes.
fn tolerances(h: HeightClass) -> (f64, f64, f64) {
    match h {
        HeightClass::Lower => (0.05, 0.05, 0.06),
        HeightClass::Upper => (0.05, 0.05, 0.03),
    }
}

/// Slack for binary representation of decimal bounds such as 85.25 - 85.2.
const BOUNDARY_SLACK: f64 = 1e-9;

pub fn consistency_checks(registry: &ModelSet) -> Result<Vec<Check>, mmbus::Error> {
    let mut checks = Vec::new();
    for (height, alpha, slope, variance) in PRINTED {
        let c = registry.require(Region::All, height)?.to_combined_form();
        let (ta, ts, tv) = tolerances(height);
        for (what, computed, printed, tol) in [
            ("alpha_db", c.alpha_db, alpha, ta),
            ("10*beta", c.slope_db_per_decade, slope, ts),
            ("sigma^2", c.variance_db2, variance, tv),
        ] {
            checks.push(Check {
                name: format!("All/{height} {what}"),
                computed,
                printed,
                tolerance: tol,
                pass: (computed - printed).abs() <= tol + BOUNDARY_SLACK,
            });
        }
    }
    Ok(checks)
}

pub fn verify(g: &Globals, a: VerifyArgs) -> CliResult {
    let registry = match &a.registry {
        Some(p) => load_registry(p)?,
        None => ModelSet::builtin(),
    };
    let checks = consistency_checks(&registry)?;
    let ok = checks.iter().all(|c| c.pass);
    let bytes = match g.format {
        Some(Format::Json) => json_bytes(&checks)?,
        _ => {
            let mut s = format!(
                "{:<22} {:>10} {:>8} {:>8} {:>6}  result\n",
                "check", "computed", "printed", "delta", "tol"
            );
            for c in &checks {
                s.push_str(&format!(
                    "{:<22} {:>10.4} {:>8.2} {:>8.4} {:>6.2}  {}\n",
                    c.name,
                    c.computed,
                    c.printed,
                    c.computed - c.printed,
                    c.tolerance,
                    if c.pass { "PASS" } else { "FAIL" }
                ));
            }
            s.push_str(if ok { "PASS\n" } else { "FAIL\n" });
            s.into_bytes()
        }
    };
    emit(g.output.as_deref(), &bytes)?;
    if ok {
        Ok(())
    } else {
        Err(CliError::verify("consistency check failed"))
    }
}

pub fn process(g: &Globals, a: ProcessArgs) -> CliResult {
    let cal = LinkCalibration::load(&a.calibration)?;
    let layout = layout(g)?;
    let sets = load_measurement_dir(&a.measurement_dir)?;
    let mut samples = SampleSet::new();
    for set in &sets {
        let agg = aggregate_measurement(set, &cal)?;
        let mut s = Sample::new(agg.distance_m, agg.path_loss_db);
        s.seat = Some(set.seat);
        s.region = layout.seat(set.seat).ok().map(|seat| seat.group);
        s.height = Some(set.height);
        samples.push(s)?;
    }
    let mut buf = Vec::new();
    samples.write_csv(&mut buf)?;
    emit(g.output.as_deref(), &buf)
}

pub fn synth(g: &Globals, a: SynthArgs) -> CliResult {
    let layout = layout(g)?;
    let seed = g.seed.unwrap_or(0);
    let fixed = a.model.as_deref().map(resolve_model).transpose()?;
    let registry = match (&a.models, a.by_group) {
        (Some(p), _) => load_registry(p)?,
        (None, true) => ModelSet::builtin(),
        (None, false) => ModelSet::new(),
    };
    if fixed.is_none() && !a.by_group {
        return Err(CliError::input("synth needs --model or --by-group"));
    }
    if a.repeats == 0 || a.sweeps == 0 {
        return Err(CliError::input("--repeats and --sweeps must be at least 1"));
    }
    let pick = |region: Region, height: HeightClass| -> CliResult<PathLossModel> {
        let m = match fixed {
            Some(m) => m,
            None => *registry.require(region, height)?,
        };
        Ok(if a.noiseless { m.deterministic() } else { m })
    };

    let mut rng = mmbus::stream(seed, 0);
    match (&a.pdp_dir, &a.calibration) {
        (Some(dir), Some(cal_path)) => {
            let cal = LinkCalibration::load(cal_path)?;
            let mut sets = Vec::new();
            for height in heights(a.height) {
                for seat in layout.seats_in_group(Region::All, height) {
                    let spec = layout.seat(seat)?;
                    let model = pick(spec.group, height)?;
                    let d = layout.link_distance(seat, height)?;
                    let pl = model.sample_path_loss(d, &mut rng)?;
                    let sweeps = (0..a.sweeps)
                        .map(|_| synthetic_pdp(&cal, d, pl))
                        .collect::<Result<Vec<_>, _>>()?;
                    sets.push(MeasurementSet::new(seat, height, sweeps)?);
                }
            }
            write_measurement_dir(dir, &sets)?;
            Ok(())
        }
        _ => {
            let mut samples = SampleSet::new();
            for height in heights(a.height) {
                for seat in layout.seats_in_group(Region::All, height) {
                    let spec = layout.seat(seat)?;
                    let model = pick(spec.group, height)?;
                    let d = layout.link_distance(seat, height)?;
                    for _ in 0..a.repeats {
                        let pl = model.sample_path_loss(d, &mut rng)?;
                        samples.push(Sample::new(d, pl).tagged(Some(seat), spec.group, height))?;
                    }
                }
            }
            let mut buf = Vec::new();
            samples.write_csv(&mut buf)?;
            emit(g.output.as_deref(), &buf)
        }
    }
}

/// One dominant component at the line-of-sight delay, framed by two noise
/// bins well below the integration threshold.
fn synthetic_pdp(cal: &LinkCalibration, d: f64, pl: f64) -> Result<PdpRecord, mmbus::Error> {
    let delay = distance_to_delay(d)?;
    let peak = cal.power_for_path_loss(pl);
    let noise = peak - cal.noise_threshold_db - 15.0;
    PdpRecord::from_pairs(&[(0.5 * delay, noise), (delay, peak), (delay + 5.0, noise)])
}

fn budget_inputs(b: &BudgetArgs) -> CliResult<(LinkBudgetConfig, ModelSet, ModelChoice)> {
    let config = match &b.budget {
        Some(p) => LinkBudgetConfig::load(p)?,
        None => LinkBudgetConfig::default(),
    };
    let models = match &b.models {
        Some(p) => load_registry(p)?,
        None => ModelSet::builtin(),
    };
    let choice = if b.pooled {
        ModelChoice::Pooled
    } else {
        ModelChoice::Group
    };
    Ok((config, models, choice))
}

pub fn sweep(g: &Globals, a: SweepArgs) -> CliResult {
    let layout = layout(g)?;
    let (config, models, choice) = budget_inputs(&a.budget)?;
    let reports = seat_sweep(&layout, &models, &config, single_height(a.height)?, choice)?;
    let bytes = match g.format.unwrap_or(Format::Csv) {
        Format::Json => json_bytes(&reports)?,
        Format::Csv => {
            let mut buf = Vec::new();
            write_reports_csv(&reports, &mut buf)?;
            buf
        }
    };
    emit(g.output.as_deref(), &bytes)
}

pub fn footprint(g: &Globals, a: FootprintArgs) -> CliResult {
    let Some(seed) = g.seed else {
        return Err(CliError::input("footprint requires --seed"));
    };
    let layout = layout(g)?;
    let (config, models, choice) = budget_inputs(&a.budget)?;
    let req = FootprintRequest {
        active_seats: a.active,
        height: single_height(a.height)?,
        seed,
        n_draws: a.draws,
        shadowing: if a.frozen {
            Shadowing::Frozen
        } else {
            Shadowing::Independent
        },
        choice,
    };
    let summaries = interference_footprint(&layout, &models, &config, &req)?;
    let bytes = match g.format.unwrap_or(Format::Csv) {
        Format::Json => json_bytes(&summaries)?,
        Format::Csv => {
            let mut buf = Vec::new();
            write_footprint_csv(&summaries, &mut buf)?;
            buf
        }
    };
    emit(g.output.as_deref(), &bytes)
}

#[derive(Serialize)]
struct ComparePoint {
    distance_m: f64,
    a_db: f64,
    b_db: f64,
    diff_db: f64,
}

pub fn compare(g: &Globals, a: CompareArgs) -> CliResult {
    let ma = resolve_model(&a.a)?;
    let mb = resolve_model(&a.b)?;
    let ds = parse_range(&a.distances)?;
    let diffs = compare_models(&ma, &mb, &ds)?;
    let points: Vec<ComparePoint> = ds
        .iter()
        .zip(diffs)
        .map(|(&d, diff_db)| {
            Ok(ComparePoint {
                distance_m: d,
                a_db: ma.mean_path_loss(d)?,
                b_db: mb.mean_path_loss(d)?,
                diff_db,
            })
        })
        .collect::<Result<_, mmbus::Error>>()?;
    let bytes = match g.format.unwrap_or(Format::Csv) {
        Format::Json => json_bytes(&points)?,
        Format::Csv => {
            let mut s = String::from("distance_m,a_db,b_db,diff_db\n");
            for p in &points {
                s.push_str(&format!(
                    "{},{},{},{}\n",
                    p.distance_m, p.a_db, p.b_db, p.diff_db
                ));
            }
            s.into_bytes()
        }
    };
    emit(g.output.as_deref(), &bytes)
}

pub fn registry(g: &Globals) -> CliResult {
    let mut text = ModelSet::builtin().to_json()?;
    text.push('\n');
    emit(g.output.as_deref(), text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1:3:1").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_range("1:1.5:0.1").unwrap().len(), 6);
        assert_eq!(parse_range("10:10:1").unwrap(), vec![10.0]);
        for bad in ["0:3:1", "3:1:1", "1:3:0", "1:3", "a:b:c", "1:3:-1"] {
            assert!(parse_range(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn model_specs() {
        assert_eq!(resolve_model("All/upper").unwrap().alpha_db, 82.86);
        assert_eq!(resolve_model("c-lower").unwrap().alpha_db, 85.77);
        assert_eq!(resolve_model("B:Upper").unwrap().alpha_db, 84.43);
        assert!(resolve_model("no/such/file.json").is_err());
    }

    #[test]
    fn builtin_registry_passes() {
        assert!(consistency_checks(&ModelSet::builtin())
            .unwrap()
            .iter()
            .all(|c| c.pass));
    }

    #[test]
    fn perturbed_sigma_fails() {
        let mut reg = ModelSet::builtin();
        let mut m = builtin(Region::All, HeightClass::Lower);
        m.sigma_db = 3.0;
        reg.insert(m);
        let checks = consistency_checks(&reg).unwrap();
        let var = checks
            .iter()
            .find(|c| c.name == "All/lower sigma^2")
            .unwrap();
        assert_eq!(var.computed, 9.0);
        assert!(!var.pass);
    }

    #[test]
    fn boundary_value_passes() {
        let mut reg = ModelSet::builtin();
        let mut m = builtin(Region::All, HeightClass::Upper);
        m.alpha_db = 82.95;
        reg.insert(m);
        assert!(consistency_checks(&reg).unwrap().iter().all(|c| c.pass));
        m.alpha_db = 82.951;
        reg.insert(m);
        assert!(!consistency_checks(&reg).unwrap().iter().all(|c| c.pass));
    }
}
