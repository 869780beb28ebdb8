use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use subid_core::algorithms::Method;
use subid_core::conditioning::{self, KrylovStructured};
use subid_core::linalg::{self, Matrix};
use subid_core::lti::{self, DiagonalModelSpec};
use subid_core::perturbation::{self, PerturbationBaseline, TrialConfig};

fn baseline(method: Method, seed: u64) -> PerturbationBaseline {
    let model = lti::random_diagonal_model(&DiagonalModelSpec::new(3, 2, 2, seed)).unwrap();
    PerturbationBaseline::build(&model, &TrialConfig::for_model(&model), method, seed).unwrap()
}

#[test]
fn least_squares_bound_holds_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    for t in 0..200 {
        let rows = 4 + t % 5;
        let cols = 1 + t % 4;
        let a = perturbation::random_perturbation(rows, cols, 1.0 + (t % 3) as f64, &mut rng);
        let b = perturbation::random_perturbation(rows, 2, 1.0, &mut rng);
        let scale = 10f64.powi(-((t % 6) as i32) - 1);
        let ea = perturbation::random_perturbation(rows, cols, scale, &mut rng);
        let eb = perturbation::random_perturbation(rows, 2, scale, &mut rng);
        let r = perturbation::bound_least_squares(&a, &b, &ea, &eb, 0.0).unwrap();
        if !r.valid {
            continue;
        }
        checked += 1;
        let x = linalg::pinv(&a, 0.0).unwrap() * &b;
        let xh = linalg::pinv(&(&a + &ea), 0.0).unwrap() * (&b + &eb);
        let h = linalg::spectral_norm(&(xh - x));
        assert!(h <= r.bound, "trial {t}: {h} > {}", r.bound);
        assert!(r.bound.is_finite() && r.bound > 0.0);
    }
    assert!(checked > 150);
}

#[test]
fn state_bounds_hold_in_every_injection_trial() {
    let base = baseline(Method::State, 3);
    for seed in 0..100 {
        let r = base.trial(1e-6, seed).unwrap();
        assert!(r.valid);
        assert!(r.violations().is_empty(), "{:?}", r.violations());
        assert!(r.measured["theta_frobenius"] <= r.bounds["theta_frobenius"]);
    }
}

#[test]
fn shift_a_bound_holds_at_1e_5() {
    let base = baseline(Method::Shift, 4);
    for seed in 0..100 {
        let r = base.trial(1e-5, seed).unwrap();
        assert!(r.valid);
        assert!(r.measured["a"] <= r.bounds["a_full_rank"]);
        assert!(r.measured["poles"] <= r.bounds["poles"]);
    }
}

#[test]
fn median_error_is_monotone_in_scale() {
    let scales = [1e-8, 1e-6, 1e-4, 1e-2];
    for method in [Method::State, Method::Shift] {
        let key = if method == Method::State { "theta" } else { "a" };
        let mut per_scale: Vec<Vec<f64>> = vec![Vec::new(); scales.len()];
        for seed in 0..50 {
            let base = baseline(method, 1000 + seed);
            for (k, &s) in scales.iter().enumerate() {
                per_scale[k].push(base.trial(s, seed).unwrap().measured[key]);
            }
        }
        let medians: Vec<f64> = per_scale
            .iter_mut()
            .map(|v| {
                v.sort_by(f64::total_cmp);
                conditioning::quantile_sorted(v, 0.5)
            })
            .collect();
        assert!(medians.windows(2).all(|w| w[0] <= w[1]), "{method}: {medians:?}");
    }
}

#[test]
fn pole_bound_vanishes_with_scale() {
    for method in [Method::State, Method::Shift] {
        let base = baseline(method, 5);
        let bounds: Vec<f64> = [1e-12, 1e-10, 1e-8, 1e-6, 1e-4]
            .iter()
            .map(|&s| base.trial(s, 1).unwrap().bounds["poles"])
            .collect();
        assert!(bounds.windows(2).all(|w| w[0] < w[1]), "{bounds:?}");
        // the bound scales like Δ^{1/n}
        assert!(bounds[0] < 1e-2 * bounds[4]);
    }
}

#[test]
fn krylov_bound_holds_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in 0..500usize {
        let n = 1 + t % 12;
        let p = 1 + (t / 12) % n.min(3);
        let blocks = (n / p).max(1);
        let diag: Vec<f64> = lti::sample_distinct_reals(&mut rng, n, (-1.0, 1.0), lti::EIGEN_SPACING).unwrap();
        let d = Matrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
        let j = perturbation::random_perturbation(n, p, 1.0, &mut rng);
        let k = KrylovStructured::new(j, d, blocks).unwrap();
        let check = conditioning::verify_krylov_sigma_bound(&k).unwrap();
        assert!(check.holds, "instance {t} (n={n}, p={p}, blocks={blocks}): {check:?}");
    }
}

#[test]
fn gamma_conditioning_at_order_eight() {
    let floor = conditioning::rho().powi(3) / 4.0;
    let r = conditioning::sample_gamma_conditioning(8, 1000, 2024).unwrap();
    let min = r.cond_samples().into_iter().fold(f64::INFINITY, f64::min);
    assert!(min >= floor, "min cond {min} below {floor}");
}

#[test]
fn median_condition_number_grows_with_order() {
    let reports = conditioning::run_conditioning_sweep(2, 12, 300, 8).unwrap();
    let medians: Vec<f64> = reports.iter().map(|r| r.median()).collect();
    assert!(medians.windows(2).all(|w| w[0] < w[1]), "{medians:?}");
    assert!(reports.iter().all(|r| r.fraction_krylov_bound() == 1.0));
}
