mod common;

use levy_perron::geometry::Domain;
use levy_perron::kernels::*;
use levy_perron::quadrature::{gauss_legendre, gl_panel};

fn class(dim: usize, sigma: f64) -> EllipticityParams {
    EllipticityParams::fractional_class(dim, sigma, 1.0, 1.0).unwrap()
}

#[test]
fn fractional_density_values_and_symmetry() {
    let k = Kernel::fractional(1, class(1, 1.0), 1.0).unwrap();
    assert_eq!(k.density(&[0.0], &[2.0]), 0.25);
    let k2 = Kernel::fractional(2, class(2, 0.7), 1.3).unwrap();
    for z in [[0.3, -0.2], [1.5, 2.0], [-0.01, 0.04]] {
        assert_eq!(k2.density(&[0.1, 0.2], &z), k2.density(&[0.1, 0.2], &[-z[0], -z[1]]));
    }
}

#[test]
fn annular_mass_matches_brute_force() {
    let sigma = 0.5;
    let k = Kernel::fractional(1, class(1, sigma), 1.0).unwrap();
    // both sides of B_2 \ B_1 on the line
    let rule = gauss_legendre(10);
    let mut nodes = Vec::new();
    for i in 0..200 {
        let a = 1.0 + i as f64 / 200.0;
        gl_panel(a, a + 1.0 / 200.0, &rule, &mut nodes);
    }
    let brute: f64 = nodes.iter().map(|&(z, w)| w * (k.density(&[0.0], &[z]) + k.density(&[0.0], &[-z]))).sum();
    let closed = (2.0 - sigma) * 2.0 * (1.0 - 2f64.powf(-sigma)) / sigma;
    assert!((brute - closed).abs() < 1e-12);
    let rep = &check_annulus_bounds(&k, &[0.0], &[1.0]).unwrap()[0];
    assert!((rep.mass - closed).abs() < 1e-10);
}

#[test]
fn zero_kernel_fails_only_the_lower_set() {
    let zero = Kernel::from_fn(2, class(2, 1.0), "zero", true, |_, _| 0.0).unwrap();
    for rep in check_annulus_bounds(&zero, &[0.0, 0.0], &[0.1, 1.0]).unwrap() {
        assert!(rep.pass_h1 && rep.pass_h2 && !rep.pass_h3);
    }
}

#[test]
fn upper_member_meets_mass_bound_with_equality() {
    for dim in [1, 2] {
        let p = EllipticityParams::fractional_class(dim, 1.2, 1.0, 2.0).unwrap();
        let k = Kernel::fractional(dim, p, 2.0).unwrap();
        for rep in check_annulus_bounds(&k, &[0.0, 0.0][..dim], &[0.05, 0.5, 3.0]).unwrap() {
            assert!(rep.pass_h1 && rep.pass_h2 && rep.pass_h3);
            assert!((rep.mass / rep.mass_bound - 1.0).abs() < 1e-6, "{}", rep.mass / rep.mass_bound);
            assert!(rep.first_moment < 1e-9 * rep.mass_bound);
        }
    }
}

#[test]
fn lower_set_fractions() {
    let p = class(2, 1.0);
    let iso = Kernel::fractional(2, p, 1.0).unwrap();
    let grid = PolarGrid { radial: 16, angular: 400 };
    assert_eq!(find_symmetric_lower_set(&iso, &[0.0, 0.0], 0.5, grid).unwrap().lower_set_fraction, 1.0);
    let one_sided = Kernel::one_sided(2, p, 1.0, 0).unwrap();
    assert_eq!(find_symmetric_lower_set(&one_sided, &[0.0, 0.0], 0.5, grid).unwrap().lower_set_fraction, 0.0);
    // constant on a pair of opposite sectors covering 30% of the annulus
    let wave = Kernel::from_fn(2, p, "sectors", true, |_, z| {
        let th = z[1].atan2(z[0]).rem_euclid(std::f64::consts::PI);
        if th < 0.3 * std::f64::consts::PI { 100.0 } else { 0.0 }
    })
    .unwrap();
    let f = find_symmetric_lower_set(&wave, &[0.0, 0.0], 0.5, grid).unwrap().lower_set_fraction;
    assert!((f - 0.3).abs() <= 1.0 / 400.0, "{f}");
}

/// `∫_{a<|z|<b, z·n<-a} (2-σ)|z|^{-3}` for σ = 1: the angular measure at
/// radius ρ is `2 acos(a/ρ)`.
fn isotropic_cone_mass(amplitude: f64, a: f64, b: f64) -> f64 {
    let rule = gauss_legendre(20);
    let mut nodes = Vec::new();
    // the integrand has a square-root edge at ρ = a
    let panels = 400;
    for i in 0..panels {
        let t0 = (i as f64 / panels as f64).powi(2);
        let t1 = ((i + 1) as f64 / panels as f64).powi(2);
        gl_panel(a + (b - a) * t0, a + (b - a) * t1, &rule, &mut nodes);
    }
    nodes.iter().map(|&(r, w)| w * amplitude * r.powi(-2) * 2.0 * (a / r).min(1.0).acos()).sum()
}

fn cone_probes(d: &Domain, r: f64) -> Vec<[f64; 2]> {
    let s = d.boundary_samples[0];
    let c = s.exterior_center(r);
    let mut out = Vec::new();
    for k in 1..8 {
        let t = 0.1 * k as f64;
        for ang in [-0.4f64, 0.0, 0.4] {
            let (sn, cs) = ang.sin_cos();
            let n = [cs * s.normal[0] - sn * s.normal[1], sn * s.normal[0] + cs * s.normal[1]];
            let y = [c[0] + (1.0 + t) * r * n[0], c[1] + (1.0 + t) * r * n[1]];
            if d.contains(&y) {
                out.push(y);
            }
        }
    }
    out
}

#[test]
fn isotropic_kernel_passes_boundary_cone() {
    let d = Domain::ball(2, &[0.0, 0.0], 1.0, 16).unwrap();
    let p = class(2, 1.0);
    let k = Kernel::fractional(2, p, 1.0).unwrap();
    let consts = ConeConstants::from_symmetric_class(2, &p, 0.05);
    let probes = cone_probes(&d, 0.2);
    assert!(!probes.is_empty());
    for y in probes {
        let rep = check_boundary_cone(&k, &d, &d.boundary_samples[0], 0.2, &y, &consts).unwrap();
        assert!(rep.pass, "{rep:?}");
        let rs = 0.2 * rep.s;
        let oracle = isotropic_cone_mass(1.0, rs, consts.c4 * rs);
        assert!((rep.cone_mass / oracle - 1.0).abs() < 1e-5, "{} vs {oracle}", rep.cone_mass);
    }
}

#[test]
fn kernel_vanishing_towards_the_obstacle_fails_cone() {
    let d = Domain::ball(2, &[0.0, 0.0], 1.0, 16).unwrap();
    let s = d.boundary_samples[0];
    let p = class(2, 1.0);
    // supported on {z·n > 0}: the cone points the other way
    let k = Kernel::anisotropic(2, p, 1.0, &s.normal[..2], std::f64::consts::FRAC_PI_2 - 1e-9, 0.0, false).unwrap();
    let consts = ConeConstants::from_symmetric_class(2, &p, 0.05);
    let c = s.exterior_center(0.2);
    let y = [c[0] + 1.3 * 0.2 * s.normal[0], c[1] + 1.3 * 0.2 * s.normal[1]];
    let rep = check_boundary_cone(&k, &d, &s, 0.2, &y, &consts).unwrap();
    assert!(!rep.pass && rep.cone_mass == 0.0, "{rep:?}");
}

#[test]
fn symmetric_class_implies_cone_condition() {
    let d = Domain::ball(2, &[0.0, 0.0], 1.0, 16).unwrap();
    let p = EllipticityParams::new(1.0, 0.25, 10.0, 0.5, 0.0).unwrap();
    // the lower threshold on two opposite sectors of total fraction 0.5
    let thr = move |z: &[f64]| {
        let r = z[0].hypot(z[1]);
        p.lower_threshold(2, r / 2.0) * 1.0001
    };
    let k = Kernel::from_fn(2, p, "half-sectors", true, move |_, z| {
        let th = z[1].atan2(z[0]).rem_euclid(std::f64::consts::PI);
        if th < 0.5 * std::f64::consts::PI { thr(z) } else { 0.0 }
    })
    .unwrap();
    for rep in check_annulus_bounds(&k, &[0.0, 0.0], &[0.05, 0.2]).unwrap() {
        assert!(rep.pass_h3, "{rep:?}");
    }
    let consts = ConeConstants::from_symmetric_class(2, &p, 0.05);
    for (i, s) in d.boundary_samples.iter().enumerate().step_by(3) {
        let c = s.exterior_center(0.2);
        let y = [c[0] + 1.4 * 0.2 * s.normal[0], c[1] + 1.4 * 0.2 * s.normal[1]];
        let rep = check_boundary_cone(&k, &d, s, 0.2, &y, &consts).unwrap();
        assert!(rep.pass, "sample {i}: {rep:?}");
    }
}
