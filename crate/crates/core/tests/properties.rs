mod common;

use levy_perron::barriers::{half_space_barrier, radial_barrier};
use levy_perron::field::{AnalyticField, Field, Growth};
use levy_perron::geometry::Domain;
use levy_perron::grid::{ExteriorDatum, GridFunction, Lattice};
use levy_perron::kernels::{EllipticityParams, Kernel};
use levy_perron::nonlocal_op::{evaluate_linear, extremal_minus, extremal_plus};
use levy_perron::quadrature::QuadratureParams;
use levy_perron::regularity::{fit_holder_exponent, oscillation_profile, weak_harnack_check};
use proptest::prelude::*;

const INTERIOR: usize = 31;

fn grid(values: &[f64]) -> GridFunction {
    let d = Domain::interval(-1.0, 1.0).unwrap();
    let lat = Lattice::for_interval(-1.0, 1.0, INTERIOR, 2).unwrap();
    let zero = GridFunction::from_fn(lat, d, ExteriorDatum::constant(0.0), |_| 0.0).unwrap();
    let mut g = zero.clone();
    for (&idx, &v) in zero.interior().iter().zip(values) {
        g.set(idx, v);
    }
    g
}

fn family(sigma: f64) -> Vec<Kernel> {
    let p = EllipticityParams::fractional_class(1, sigma, 1.0, 2.0).unwrap();
    vec![Kernel::fractional(1, p, 1.0).unwrap(), Kernel::fractional(1, p, 2.0).unwrap()]
}

fn quadrature() -> QuadratureParams {
    QuadratureParams::balanced(2.0 / (INTERIOR + 1) as f64, 8.0)
}

fn sigma() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.5), Just(1.0), Just(1.5)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn duality_is_exact(
        vals in prop::collection::vec(-2.0f64..2.0, INTERIOR),
        node in 0..INTERIOR,
        s in sigma(),
    ) {
        let u = grid(&vals);
        let x = u.node(u.interior()[node]);
        let fam = family(s);
        let q = quadrature();
        let plus = extremal_plus(&fam, &u.negated(), &x[..1], &q).unwrap();
        let minus = extremal_minus(&fam, &u, &x[..1], &q).unwrap();
        prop_assert_eq!(plus.value, -minus.value);
        prop_assert_eq!(plus.index, minus.index);
    }

    #[test]
    fn extremal_plus_is_monotone_under_touching(
        vals in prop::collection::vec(-2.0f64..2.0, INTERIOR),
        lift in prop::collection::vec(0.0f64..1.0, INTERIOR),
        node in 0..INTERIOR,
        s in sigma(),
    ) {
        let u = grid(&vals);
        let mut above = vals.clone();
        for (i, v) in above.iter_mut().enumerate() {
            if i != node {
                *v += lift[i];
            }
        }
        let v = grid(&above);
        let x = u.node(u.interior()[node]);
        let fam = family(s);
        let q = quadrature();
        let a = extremal_plus(&fam, &u, &x[..1], &q).unwrap();
        let b = extremal_plus(&fam, &v, &x[..1], &q).unwrap();
        prop_assert!(a.value <= b.value + 1e-12 * (1.0 + b.value.abs()), "{} > {}", a.value, b.value);
    }

    #[test]
    fn constants_vanish_within_the_tail(c in -10.0f64..10.0, x in -0.9f64..0.9, s in sigma()) {
        let u = AnalyticField::new(1, Growth::Bounded(c.abs()), move |_| c);
        let v = evaluate_linear(&common::fractional(1, s), &u, &[x], &QuadratureParams::for_scale(1.0)).unwrap();
        prop_assert!(v.value.abs() <= v.tail_halfwidth + 1e-12, "{v:?}");
    }

    #[test]
    fn oscillation_is_nested(vals in prop::collection::vec(-1.0f64..1.0, INTERIOR), center in -0.2f64..0.2) {
        let rep = oscillation_profile(&grid(&vals), &[center], 2.0, 2).unwrap();
        for pair in rep.levels.windows(2) {
            prop_assert!(pair[1].max <= pair[0].max);
            prop_assert!(pair[1].min >= pair[0].min);
            prop_assert!(pair[1].oscillation() >= 0.0);
        }
    }

    #[test]
    fn holder_fit_is_affine_invariant(
        steps in prop::collection::vec(-1.0f64..1.0, 255),
        a in 0.1f64..10.0,
        b in -5.0f64..5.0,
    ) {
        // random walk on a finer grid so three levels are resolved
        let d = Domain::interval(-1.0, 1.0).unwrap();
        let lat = Lattice::for_interval(-1.0, 1.0, 255, 2).unwrap();
        let zero = GridFunction::from_fn(lat, d, ExteriorDatum::constant(0.0), |_| 0.0).unwrap();
        let mut w = zero.clone();
        let mut acc = 0.0;
        for (&idx, &s) in zero.interior().iter().zip(&steps) {
            acc += s;
            w.set(idx, acc);
        }
        let mut v = zero.with_datum(ExteriorDatum::constant(b));
        for &idx in zero.interior() {
            v.set(idx, a * w.values()[idx] + b);
        }
        let fit = |g: &GridFunction| fit_holder_exponent(&oscillation_profile(g, &[0.0], 2.0, 3).unwrap());
        match (fit(&w), fit(&v)) {
            (Ok(x), Ok(y)) => match (x.fit, y.fit) {
                (Some(p), Some(q)) => prop_assert!((p.alpha_hat - q.alpha_hat).abs() < 1e-9),
                (p, q) => prop_assert_eq!(p.is_none(), q.is_none()),
            },
            (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
        }
    }

    #[test]
    fn harnack_ignores_threshold_order(
        vals in prop::collection::vec(0.0f64..1.0, INTERIOR),
        ts in prop::collection::vec(0.01f64..0.99, 2..8),
        seed in any::<u64>(),
    ) {
        let u = grid(&vals);
        let mut shuffled = ts.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize);
        }
        let a = weak_harnack_check(&u, &[0.0], 0.5, 1.0, 1.5, &ts);
        let b = weak_harnack_check(&u, &[0.0], 0.5, 1.0, 1.5, &shuffled);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(&a, &b);
                for pair in a.masses.windows(2) {
                    prop_assert!(pair[1].measure <= pair[0].measure);
                }
            }
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn barriers_are_nonnegative_and_grow_outward(
        alpha in 0.05f64..0.95,
        theta in 0.0f64..std::f64::consts::TAU,
        t in 0.0f64..3.0,
        dt in 0.0f64..1.0,
    ) {
        let radial = radial_barrier(2, alpha).unwrap();
        let dir = [theta.cos(), theta.sin()];
        let at = |s: f64| radial.value(&[s * dir[0], s * dir[1]]);
        prop_assert!(at(t) >= 0.0);
        prop_assert!(at(t + dt) >= at(t));
        if t <= 1.0 {
            prop_assert_eq!(at(t), 0.0);
        }
        let half = half_space_barrier(2, alpha).unwrap();
        let y = 2.0 * theta.sin();
        prop_assert!(half.value(&[t + dt, y]) >= half.value(&[t, y]));
        prop_assert!(half.value(&[t, y]) >= 0.0);
        if t <= 1.0 {
            prop_assert_eq!(half.value(&[t, y]), 0.0);
        }
    }
}
