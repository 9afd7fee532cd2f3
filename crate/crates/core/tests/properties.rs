use mmbus::fit::{fit_log_distance, synth_samples, SampleSet};
use mmbus::models::{builtin_models, CombinedForm};
use mmbus::pdp::{
    aggregate_measurement, integrate_pdp, LinkCalibration, MeasurementSet, PdpRecord,
};
use mmbus::{HeightClass, PathLossModel, Region};
use proptest::prelude::*;

fn arb_model() -> impl Strategy<Value = PathLossModel> {
    (
        40.0..120.0f64,
        -1.0..4.0f64,
        0.0..6.0f64,
        0..5usize,
        any::<bool>(),
    )
        .prop_map(|(a, b, s, r, upper)| {
            let height = if upper {
                HeightClass::Upper
            } else {
                HeightClass::Lower
            };
            PathLossModel::new(a, b, s, Region::ALL[r], height).unwrap()
        })
}

fn arb_pdp() -> impl Strategy<Value = PdpRecord> {
    prop::collection::vec((0.1..5.0f64, -140.0..-60.0f64), 1..40).prop_map(|steps| {
        let mut t = 0.0;
        let pairs: Vec<(f64, f64)> = steps
            .into_iter()
            .map(|(dt, p)| {
                t += dt;
                (t, p)
            })
            .collect();
        PdpRecord::from_pairs(&pairs).unwrap()
    })
}

proptest! {
    #[test]
    fn decade_law(m in arb_model(), d in 0.01..100.0f64) {
        let step = m.mean_path_loss(10.0 * d).unwrap() - m.mean_path_loss(d).unwrap();
        prop_assert!((step - 10.0 * m.beta).abs() < 1e-9);
    }

    #[test]
    fn mean_increases_with_distance(m in arb_model(), d in 0.01..50.0f64, k in 1.001..10.0f64) {
        prop_assume!(m.beta > 0.0);
        prop_assert!(m.mean_path_loss(d * k).unwrap() > m.mean_path_loss(d).unwrap());
    }

    #[test]
    fn combined_form_round_trip(m in arb_model()) {
        let back = m.to_combined_form().to_model(m.region, m.height).unwrap();
        let rel = |a: f64, b: f64| if b == 0.0 { a.abs() } else { ((a - b) / b).abs() };
        prop_assert!(rel(back.alpha_db, m.alpha_db) <= 1e-12);
        prop_assert!(rel(back.beta, m.beta) <= 1e-12);
        prop_assert!(rel(back.sigma_db, m.sigma_db) <= 1e-12);
        let c: CombinedForm = m.to_combined_form();
        prop_assert!(c.variance_db2 >= 0.0);
    }

    #[test]
    fn model_json_round_trip(m in arb_model()) {
        let text = serde_json::to_string(&m).unwrap();
        let back: PathLossModel = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn noiseless_refit_is_a_fixed_point(
        m in arb_model(),
        ds in prop::collection::vec(0.5..15.0f64, 2..30),
        seed in any::<u64>(),
    ) {
        let mut ds = ds;
        ds.push(ds[0] * 1.7);
        let fit = fit_log_distance(&synth_samples(&m.deterministic(), &ds, seed).unwrap()).unwrap();
        prop_assert!((fit.model.alpha_db - m.alpha_db).abs() <= 1e-9 * m.alpha_db.abs());
        prop_assert!((fit.model.beta - m.beta).abs() <= 1e-9 * m.beta.abs().max(1e-3));
    }

    #[test]
    fn residuals_are_orthogonal(m in arb_model(), seed in any::<u64>(), n in 3usize..200) {
        let ds: Vec<f64> = (0..n).map(|i| 1.0 + 11.0 * i as f64 / n as f64).collect();
        let set = synth_samples(&m, &ds, seed).unwrap();
        let fit = fit_log_distance(&set).unwrap();
        let sum: f64 = fit.residuals_db.iter().sum();
        let sum_x: f64 = fit
            .residuals_db
            .iter()
            .zip(set.entries())
            .map(|(r, s)| r * 10.0 * s.distance_m.log10())
            .sum();
        prop_assert!(sum.abs() <= 1e-9 * n as f64);
        prop_assert!(sum_x.abs() <= 1e-9 * n as f64 * 10.0);
        prop_assert!((0.0..=1.0).contains(&fit.r_squared));
        prop_assert_eq!(fit.n, fit.residuals_db.len());
    }

    #[test]
    fn scaling_distances_shifts_alpha(m in arb_model(), seed in any::<u64>()) {
        let ds: Vec<f64> = (1..=25).map(|i| 0.4 * i as f64).collect();
        let set = synth_samples(&m, &ds, seed).unwrap();
        let scaled = SampleSet::from_pairs(
            &set.entries().iter().map(|s| (10.0 * s.distance_m, s.path_loss_db)).collect::<Vec<_>>(),
        ).unwrap();
        let a = fit_log_distance(&set).unwrap().model;
        let b = fit_log_distance(&scaled).unwrap().model;
        prop_assert!((b.beta - a.beta).abs() < 1e-9);
        prop_assert!((b.alpha_db - (a.alpha_db - 10.0 * a.beta)).abs() < 1e-8);
    }

    #[test]
    fn integration_bounds(pdp in arb_pdp(), threshold in 0.0..80.0f64) {
        let peak = pdp.peak_component().unwrap().power_db;
        let floor = peak - threshold;
        let retained = pdp.bins().iter().filter(|b| b.power_db >= floor).count();
        let p = integrate_pdp(&pdp, threshold).unwrap();
        prop_assert!(p >= peak - 1e-9);
        prop_assert!(p <= peak + 10.0 * (retained as f64).log10() + 1e-9);
    }

    #[test]
    fn wider_threshold_never_loses_power(pdp in arb_pdp(), t in 0.0..60.0f64, extra in 0.0..40.0f64) {
        prop_assert!(integrate_pdp(&pdp, t + extra).unwrap() >= integrate_pdp(&pdp, t).unwrap());
    }

    #[test]
    fn sweep_order_is_irrelevant(pdps in prop::collection::vec(arb_pdp(), 1..8), rot in 0usize..8) {
        let cal = LinkCalibration::new(10.0, 2.0, 2.0, 25.0).unwrap();
        let a = MeasurementSet::new(1, HeightClass::Upper, pdps.clone()).unwrap();
        let mut shuffled = pdps;
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let b = MeasurementSet::new(1, HeightClass::Upper, shuffled).unwrap();
        prop_assert_eq!(
            aggregate_measurement(&a, &cal).unwrap(),
            aggregate_measurement(&b, &cal).unwrap()
        );
    }

    #[test]
    fn single_component_pipeline_returns_model_loss(d in 1.0..12.0f64, radiated in -20.0..30.0f64, g in 0.0..10.0f64) {
        let m = mmbus::builtin(Region::All, HeightClass::Upper);
        let cal = LinkCalibration::new(radiated, g, g, 25.0).unwrap();
        let l = m.mean_path_loss(d).unwrap();
        let delay = mmbus::pdp::distance_to_delay(d).unwrap();
        let pdp = PdpRecord::from_pairs(&[(delay, cal.power_for_path_loss(l))]).unwrap();
        let set = MeasurementSet::new(1, HeightClass::Upper, vec![pdp]).unwrap();
        let agg = aggregate_measurement(&set, &cal).unwrap();
        prop_assert!((agg.path_loss_db - l).abs() < 1e-9);
        prop_assert!((agg.distance_m - d).abs() < 1e-12 * d.max(1.0) * 10.0);
    }
}

#[test]
fn coverage_matches_monte_carlo_fraction() {
    use rand::{Rng, SeedableRng};
    let mut pick = rand_chacha::ChaCha8Rng::seed_from_u64(404);
    let models = builtin_models();
    for case in 0..4u64 {
        let m = models[pick.random_range(0..models.len())];
        let d: f64 = pick.random_range(1.0..12.0);
        let l_max = m.mean_path_loss(d).unwrap() + pick.random_range(-2.0..2.0) * m.sigma_db;
        let n = 1_000_000;
        let mut rng = mmbus::stream(77, case);
        let hits = (0..n)
            .filter(|_| m.sample_path_loss(d, &mut rng).unwrap() <= l_max)
            .count();
        let emp = hits as f64 / n as f64;
        let p = m.coverage_probability(d, l_max).unwrap();
        assert!(
            (emp - p).abs() <= 0.005,
            "{m}: d={d} l_max={l_max}: {emp} vs {p}"
        );
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn estimator_error_shrinks_with_sample_size() {
    use rand::{Rng, SeedableRng};
    let m = mmbus::builtin(Region::A, HeightClass::Lower);
    let mut prev: Option<(f64, f64)> = None;
    for n in [100usize, 1_000, 10_000] {
        let (mut ea, mut eb) = (Vec::new(), Vec::new());
        for seed in 0..100u64 {
            let mut g = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let ds: Vec<f64> = (0..n).map(|_| g.random_range(1.0..12.0)).collect();
            let fit = fit_log_distance(&synth_samples(&m, &ds, seed + 1000).unwrap()).unwrap();
            ea.push((fit.model.alpha_db - m.alpha_db).abs());
            eb.push((fit.model.beta - m.beta).abs());
        }
        let cur = (median(ea), median(eb));
        if let Some(p) = prev {
            assert!(cur.0 < p.0 && cur.1 < p.1, "n={n}: {cur:?} vs {p:?}");
        }
        prev = Some(cur);
    }
}

#[test]
fn builtin_partition_round_trip() {
    use rand::{Rng, SeedableRng};
    let mut g = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let mut all = SampleSet::new();
    for region in Region::GROUPS {
        let m = mmbus::builtin(region, HeightClass::Upper);
        let ds: Vec<f64> = (0..10_000).map(|_| g.random_range(1.0..12.0)).collect();
        for s in synth_samples(&m, &ds, region as u64).unwrap().entries() {
            all.push(*s).unwrap();
        }
    }
    let p = mmbus::fit_by_partition(&all).unwrap();
    assert_eq!(p.fits.len(), 5);
    for region in Region::GROUPS {
        let truth = mmbus::builtin(region, HeightClass::Upper);
        let fit = &p.fits[&(region, HeightClass::Upper)].model;
        assert!(
            (fit.alpha_db - truth.alpha_db).abs() <= 0.2,
            "{region}: {fit}"
        );
        assert!((fit.beta - truth.beta).abs() <= 0.05, "{region}: {fit}");
        assert!(
            (fit.sigma_db - truth.sigma_db).abs() <= 0.05,
            "{region}: {fit}"
        );
    }
}
