use fracsde::fbm::{FbmSampler, FbmSpec};
use fracsde::paths::oscillation_count;
use fracsde::skorokhod::{reflect, reflection_onevar_bound_check, Domain};
use fracsde::GridPath;
use proptest::prelude::*;

/// Explicit two-sided Skorokhod map on `[0, a]` at the nodes of a
/// piecewise-linear path: first the one-sided map at 0, then the
/// Kruk–Lehoczky–Ramanan–Shreve truncation
/// `Λ_a(φ)(t) = φ(t) − sup_{s≤t} [ (φ(s) − a)⁺ ∧ inf_{u∈[s,t]} φ(u) ]`.
/// Both suprema and infima of a piecewise-linear path are attained at nodes.
fn klrs(psi: &[f64], a: f64) -> Vec<f64> {
    let mut phi = Vec::with_capacity(psi.len());
    let mut push = 0.0_f64;
    for &x in psi {
        push = push.max(-x);
        phi.push(x + push);
    }
    (0..phi.len())
        .map(|t| {
            let mut sup = f64::NEG_INFINITY;
            for s in 0..=t {
                let inf = phi[s..=t].iter().cloned().fold(f64::INFINITY, f64::min);
                sup = sup.max((phi[s] - a).max(0.0).min(inf));
            }
            phi[t] - sup
        })
        .collect()
}

#[test]
fn matches_klrs_on_fbm_paths() {
    for (h, a) in [(0.3, 0.5), (0.5, 1.0), (0.7, 0.25)] {
        let sampler = FbmSampler::new(FbmSpec::new(h, 1.0, 256, 1, 99)).unwrap();
        let domain = Domain::uniform(1, 0.0, a).unwrap();
        for k in 0..20 {
            let w = sampler.sample(k);
            let ours = reflect(&w, &domain).unwrap().reflected.component_values(0);
            let oracle = klrs(&w.component_values(0), a);
            for (x, y) in ours.iter().zip(&oracle) {
                assert!((x - y).abs() < 1e-12, "H={h} a={a} replica {k}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn one_sided_map_equals_running_infimum_formula() {
    let domain = Domain::new(vec![0.0], vec![f64::INFINITY]).unwrap();
    let w = FbmSampler::new(FbmSpec::new(0.5, 1.0, 500, 1, 3)).unwrap().sample(0);
    let r = reflect(&w, &domain).unwrap();
    let xs = w.component_values(0);
    let mut push = 0.0_f64;
    for (i, &x) in xs.iter().enumerate() {
        push = push.max(-x);
        assert!((r.k.value(i, 0) - push).abs() < 1e-13);
    }
}

#[test]
fn onevar_bound_on_many_paths() {
    let domain = Domain::uniform(1, 0.0, 1.0).unwrap();
    for h in [0.25, 0.5, 0.75] {
        let sampler = FbmSampler::new(FbmSpec::new(h, 1.0, 1024, 1, 5)).unwrap();
        for k in 0..200 {
            let w = sampler.sample(k).scale(2.0);
            let check = reflection_onevar_bound_check(&w, &domain).unwrap();
            assert!(check.holds, "H={h} replica {k}: {:?} vs {:?}", check.lhs, check.rhs);
            let n = oscillation_count(&w, 0, 1.0).unwrap().count as f64;
            assert_eq!(check.rhs[0], n + 1.0);
        }
    }
}

fn path_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 1..60).prop_map(|steps| {
        let mut x = 0.5;
        let mut out = vec![x];
        for s in steps {
            x += s;
            out.push(x);
        }
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn klrs_agreement(xs in path_strategy(), a in 0.2f64..3.0) {
        let start = xs[0].clamp(0.0, a);
        let shifted: Vec<f64> = xs.iter().map(|x| x - xs[0] + start).collect();
        let domain = Domain::uniform(1, 0.0, a).unwrap();
        let ours = reflect(&GridPath::from_scalar(0.0, 0.1, shifted.clone()).unwrap(), &domain).unwrap();
        let oracle = klrs(&shifted, a);
        for (x, y) in ours.reflected.component_values(0).iter().zip(&oracle) {
            prop_assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn reflected_stays_in_box_with_valid_signs(xs in path_strategy(), lo in -2.0f64..0.0, width in 0.5f64..3.0) {
        let domain = Domain::uniform(1, lo, lo + width).unwrap();
        let start = xs[0].clamp(lo, lo + width);
        let shifted: Vec<f64> = xs.iter().map(|x| x - xs[0] + start).collect();
        let r = reflect(&GridPath::from_scalar(0.0, 0.1, shifted).unwrap(), &domain).unwrap();
        for i in 0..r.reflected.len() {
            prop_assert!(domain.contains(r.reflected.point(i)));
        }
        prop_assert!(r.sign_condition_violation(&domain) == 0.0);
    }

    #[test]
    fn paths_inside_the_box_are_untouched(xs in prop::collection::vec(0.0f64..1.0, 2..50)) {
        let domain = Domain::uniform(1, 0.0, 1.0).unwrap();
        let p = GridPath::from_scalar(0.0, 0.1, xs).unwrap();
        let r = reflect(&p, &domain).unwrap();
        prop_assert!(r.reflected.sup_distance(&p).unwrap() < 1e-13);
        prop_assert!(r.total_onevar() < 1e-12);
    }
}
