use fracsde::fbm::{FbmSampler, FbmSpec};
use fracsde::fields::{DriftField, FourierMode};
use fracsde::paths::running_max;
use fracsde::perturbed::{
    perturb, perturb_sequential, relation_residual, rho, running_sup_lipschitz_check, PerturbParams,
};
use fracsde::skorokhod::Domain;
use fracsde::solver::{solve, GammaKind, Scheme, SolveSpec};
use fracsde::young::{
    linear_young_integral, nonlinear_young_integral, sewing_bound_check, AveragedFieldGerm, GermMetadata, ProductGerm,
};
use fracsde::GridPath;
use proptest::prelude::*;

#[test]
fn perturbation_of_increasing_input_has_closed_form() {
    // w increasing from w0: max f = f, min f = f(0) = w0/(1−α−β)
    let (a, b) = (0.35, -0.6);
    let w = GridPath::from_fn(0.0, 1.0, 200, |t| 0.2 + t * t + t).unwrap();
    let params = PerturbParams::uniform(1, a, b).unwrap();
    let f0 = 0.2 / (1.0 - a - b);
    let r = perturb(&w, &params, 1e-12, 10_000).unwrap();
    for i in 0..w.len() {
        let exact = (w.value(i, 0) + b * f0) / (1.0 - a);
        assert!((r.f.value(i, 0) - exact).abs() < 1e-10);
    }
}

#[test]
fn rho_closed_form() {
    assert_eq!(rho(0.0, 0.7).unwrap(), 0.0);
    assert!((rho(0.5, -0.5).unwrap() - 0.25 / 0.75).abs() < 1e-15);
}

#[test]
fn running_max_is_one_lipschitz_in_variation_on_fbm_pairs() {
    let sampler = FbmSampler::new(FbmSpec::new(0.3, 1.0, 200, 1, 31)).unwrap();
    for k in 0..40 {
        let (w1, w2) = (sampler.sample(2 * k), sampler.sample(2 * k + 1));
        for p in [1.0, 1.5, 2.0] {
            let check = running_sup_lipschitz_check(&w1, &w2, p).unwrap();
            assert!(check.holds, "pair {k}, p={p}");
        }
    }
    // sanity on the object being checked
    let m = running_max(&sampler.sample(0));
    assert!(m.values().windows(2).all(|v| v[1] >= v[0]));
}

fn rough_path() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 2..80)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fixed_point_solvers_agree(xs in rough_path(), a in -2.0f64..0.9, b in -2.0f64..0.9) {
        let r = rho(a, b).unwrap();
        prop_assume!(r < 0.9 && (1.0 - a - b).abs() > 1e-2);
        let w = GridPath::from_scalar(0.0, 0.1, xs).unwrap();
        let params = PerturbParams::uniform(1, a, b).unwrap();
        let iter = perturb(&w, &params, 1e-11, 10_000).unwrap();
        let seq = perturb_sequential(&w, &params).unwrap();
        let scale = 1.0 + w.sup_norm() / (1.0 - a - b).abs();
        prop_assert!(iter.f.sup_distance(&seq).unwrap() < 1e-9 * scale);
        prop_assert!(relation_residual(&w.component_values(0), &seq.component_values(0), a, b) < 1e-12 * scale);
    }
}

#[test]
fn linear_young_integrals_of_smooth_paths() {
    let n = 1 << 12;
    let w = GridPath::from_fn(0.0, 2.0, n, f64::sin).unwrap();
    let b = GridPath::from_fn(0.0, 2.0, n, f64::cos).unwrap();
    // ∫ cos t d(sin t) = T/2 + sin 2T / 4
    let r = linear_young_integral(&b, &w, 6).unwrap();
    let exact = 1.0 + (4.0f64).sin() / 4.0;
    assert!((r.path.value(n, 0) - exact).abs() < 2e-3);
    // ∫ W dW = W_T² / 2
    let r = linear_young_integral(&w, &w, 6).unwrap();
    let exact = 2f64.sin().powi(2) / 2.0;
    assert!((r.path.value(n, 0) - exact).abs() < 2e-3);
    assert!(r.error_estimate.unwrap() < 2e-3);
}

#[test]
fn nonlinear_integral_of_product_germ() {
    // A_st(x) = x²(t−s) along θ_r = r: ∫ r² dr = 1/3, left-point error ≈ 1/(2n)
    let n = 1 << 14;
    let h = GridPath::from_fn(0.0, 1.0, n, |t| t).unwrap();
    let germ = ProductGerm::new(
        h.clone(),
        1,
        |x: &[f64], out: &mut [f64]| out[0] = x[0] * x[0],
        GermMetadata { q: 1.0, lipschitz: 2.0 },
    )
    .unwrap();
    let r = nonlinear_young_integral(&germ, &h, 5).unwrap();
    assert!((r.path.value(n, 0) - 1.0 / 3.0).abs() < 1.0 / n as f64);
}

#[test]
fn averaged_germ_satisfies_sewing_bound() {
    let w = FbmSampler::new(FbmSpec::new(0.7, 1.0, 512, 1, 3)).unwrap().sample(0);
    let field = DriftField::from_modes(vec![FourierMode { frequency: 2.0, amplitude: 1.0, phase: 0.3 }], 1.0);
    let germ = AveragedFieldGerm::new(w.clone(), field).unwrap();
    let theta = w.map(|x| 0.5 * x.sin());
    let r = nonlinear_young_integral(&germ, &theta, 6).unwrap();
    let check = sewing_bound_check(&germ, &theta, &r).unwrap();
    assert!(check.holds, "max ratio {}", check.max_ratio);
}

fn sine_noise(n: usize) -> GridPath {
    GridPath::from_fn(0.0, 1.0, n, f64::sin).unwrap()
}

#[test]
fn linear_ode_with_smooth_noise() {
    // X = x0 − ∫X + sin t  ⇔  X' = −X + cos t, X(0) = x0; both schemes use
    // left-point drift sums and converge at first order
    let x0 = 0.8;
    let exact = |t: f64| (x0 - 0.5) * (-t).exp() + (t.cos() + t.sin()) / 2.0;
    let field = DriftField::affine(vec![vec![-1.0]], vec![0.0]).unwrap();
    for scheme in [Scheme::PicardYoung, Scheme::EulerSplit] {
        let spec = SolveSpec::new(vec![x0], GammaKind::Identity, field.clone(), scheme);
        let errors: Vec<f64> = [256usize, 512, 1024]
            .iter()
            .map(|&n| {
                let x = solve(&spec, &sine_noise(n)).unwrap().x;
                (0..=n).map(|i| (x.value(i, 0) - exact(x.time(i))).abs()).fold(0.0, f64::max)
            })
            .collect();
        assert!(errors[2] < 1e-3, "{scheme:?} error {}", errors[2]);
        for k in 0..2 {
            let order = (errors[k] / errors[k + 1]).log2();
            assert!((order - 1.0).abs() < 0.1, "{scheme:?} order {order}");
        }
    }
}

#[test]
fn constant_drift_reflected_at_the_top() {
    // dX = dt on [−1, 0.5] from 0: X_t = min(t, 0.5)
    let n = 100;
    let zero = GridPath::constant(0.0, 0.01, n + 1, &[0.0]).unwrap();
    let gamma = GammaKind::Skorokhod { domain: Domain::uniform(1, -1.0, 0.5).unwrap() };
    for scheme in [Scheme::PicardYoung, Scheme::EulerSplit] {
        let spec = SolveSpec::new(vec![0.0], gamma.clone(), DriftField::constant(vec![1.0]), scheme);
        let x = solve(&spec, &zero).unwrap().x;
        for i in 0..=n {
            assert!((x.value(i, 0) - x.time(i).min(0.5)).abs() < 1e-12, "{scheme:?} node {i}");
        }
    }
}

#[test]
fn constant_drift_under_perturbation() {
    // input y = c t is increasing from 0, so X = c t / (1 − α)
    let (a, b, c) = (0.4, -0.3, 2.0);
    let zero = GridPath::constant(0.0, 0.01, 101, &[0.0]).unwrap();
    let gamma = GammaKind::Perturbed { params: PerturbParams::uniform(1, a, b).unwrap() };
    for scheme in [Scheme::PicardYoung, Scheme::EulerSplit] {
        let spec = SolveSpec::new(vec![0.0], gamma.clone(), DriftField::constant(vec![c]), scheme);
        let x = solve(&spec, &zero).unwrap().x;
        for i in 0..=100 {
            assert!((x.value(i, 0) - c * x.time(i) / (1.0 - a)).abs() < 1e-12);
        }
    }
}
