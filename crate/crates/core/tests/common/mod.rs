#![allow(dead_code)]

use levy_perron::quadrature::{gauss_legendre, gl_panel};

/// `∫_0^b (1 - cos z) z^{-1-σ} dz`: power series on `[0, a]`, dense
/// composite Gauss-Legendre on `[a, b]`.
pub fn one_minus_cos_moment(sigma: f64, b: f64) -> f64 {
    let a = 0.5f64.min(b);
    let mut series = 0.0;
    let mut fact = 1.0;
    for k in 1..30 {
        fact *= ((2 * k - 1) * (2 * k)) as f64;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        series += sign * a.powf(2.0 * k as f64 - sigma) / (fact * (2.0 * k as f64 - sigma));
    }
    if b <= a {
        return series;
    }
    let rule = gauss_legendre(20);
    let panels = ((b - a) * 40.0).ceil() as usize;
    let w = (b - a) / panels as f64;
    let mut nodes = Vec::new();
    for k in 0..panels {
        gl_panel(a + k as f64 * w, a + (k + 1) as f64 * w, &rule, &mut nodes);
    }
    series + nodes.iter().map(|&(z, wz)| wz * (1.0 - z.cos()) * z.powf(-1.0 - sigma)).sum::<f64>()
}

/// Closed form of `∫_0^∞ (1 - cos z) z^{-1-σ} dz`.
pub fn one_minus_cos_moment_exact(sigma: f64) -> f64 {
    if sigma == 1.0 {
        std::f64::consts::FRAC_PI_2
    } else {
        gamma(1.0 - sigma) * (std::f64::consts::FRAC_PI_2 * sigma).cos() / sigma
    }
}

/// Lanczos approximation of Γ, with reflection for arguments below 1/2.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x));
    }
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

use levy_perron::geometry::Domain;
use levy_perron::grid::{ExteriorDatum, GridFunction, Lattice};
use levy_perron::kernels::{EllipticityParams, Kernel};
use levy_perron::nonlocal_op::evaluate_linear;
use levy_perron::quadrature::QuadratureParams;

/// Unit-amplitude fractional kernel `(2-σ)|z|^{-n-σ}`.
pub fn fractional(dim: usize, sigma: f64) -> Kernel {
    let p = EllipticityParams::fractional_class(dim, sigma, 1.0, 1.0).unwrap();
    Kernel::fractional(dim, p, 1.0).unwrap()
}

/// `cos(x₁)` sampled at spacing `h` on a domain wide enough that every
/// quadrature point within `truncation` of `[-1, 1]` is interpolated.
pub fn cos_grid(h: f64, truncation: f64) -> GridFunction {
    let half = truncation + 2.0;
    let d = Domain::interval(-half, half).unwrap();
    let lat = Lattice::covering(&d, h, 2).unwrap();
    let datum = ExteriorDatum::lipschitz(|x| x[0].cos(), 1.0, 1.0);
    GridFunction::from_fn(lat, d, datum, |x| x[0].cos()).unwrap()
}

/// Worst error of `L cos` against `-λ_R cos` at 11 probes in `[-1, 1]`,
/// relative to `λ_R = 2(2-σ)∫_0^R (1-cos z) z^{-1-σ} dz`.
pub fn cos_relative_error(sigma: f64, h: f64, truncation: f64) -> f64 {
    let k = fractional(1, sigma);
    let u = cos_grid(h, truncation);
    let q = QuadratureParams::balanced(h, truncation);
    let symbol = 2.0 * (2.0 - sigma) * one_minus_cos_moment(sigma, truncation);
    (0..11)
        .map(|i| {
            let x = -1.0 + 0.2 * i as f64 + 0.013;
            let v = evaluate_linear(&k, &u, &[x], &q).unwrap();
            (v.value + symbol * x.cos()).abs() / symbol
        })
        .fold(0.0, f64::max)
}

use levy_perron::barriers::{
    build_supersolution, certify_boundary_bump, certify_radial_barrier, default_bump_constant, BarrierReport, Envelope,
};
use levy_perron::nonlocal_op::{BellmanProblem, Coefficient};
use levy_perron::quadrature::TailMode;

/// `-L u - 1 = 0` on `(-1, 1)` with `u = 0` outside, `n` interior nodes.
pub struct Model {
    pub problem: BellmanProblem,
    pub q: QuadratureParams,
    pub zero: GridFunction,
}

pub fn model(n: usize, sigma: f64) -> Model {
    let d = Domain::interval(-1.0, 1.0).unwrap();
    let lat = Lattice::for_interval(-1.0, 1.0, n, 2).unwrap();
    let k = fractional(1, sigma);
    let problem = BellmanProblem::linear(
        d.clone(),
        ExteriorDatum::constant(0.0),
        k,
        Coefficient::Constant(0.0),
        Coefficient::Constant(-1.0),
    )
    .unwrap();
    let mut q = QuadratureParams::balanced(lat.h, 32.0);
    q.tail_mode = TailMode::FarConstant { value: 0.0 };
    let zero = GridFunction::from_fn(lat, d, ExteriorDatum::constant(0.0), |_| 0.0).unwrap();
    Model { problem, q, zero }
}

pub const MODEL_ALPHA: f64 = 0.6;
pub const MODEL_RADII: [f64; 4] = [0.05, 0.1, 0.2, 0.4];

/// Boundary-bump certificate for the model kernel.
pub fn model_certificate(m: &Model) -> BarrierReport {
    let fam = m.problem.kernels();
    let q = QuadratureParams::for_scale(1.0);
    let radii: Vec<f64> = (1..=10).map(|k| 0.5f64.powi(k)).collect();
    let radial = certify_radial_barrier(&fam, MODEL_ALPHA, 0.0, &radii, &q).unwrap();
    let d = &m.problem.domain;
    let probes: Vec<[f64; 2]> = (0..30).map(|k| [-0.99 + 1.98 * k as f64 / 29.0, 0.0]).collect();
    let c3 = default_bump_constant(MODEL_ALPHA, radial.range);
    certify_boundary_bump(&fam, d, &d.boundary_samples[0], 0.1, c3, MODEL_ALPHA, &radial, &probes, &q).unwrap()
}

pub fn model_supersolution(m: &Model) -> Envelope {
    let cert = model_certificate(m);
    build_supersolution(&m.problem, m.zero.lattice(), &cert, &MODEL_RADII).unwrap()
}

/// Interior values solving the assembled linear system `A u = 1` with
/// `A_ij = -(L e_j)(x_i)` from basis grid functions, by dense LU.
pub fn direct_model_solve(m: &Model) -> Vec<f64> {
    let k = &m.problem.pairs[0].kernel;
    let nodes = m.zero.interior().to_vec();
    let n = nodes.len();
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
    for (j, &nj) in nodes.iter().enumerate() {
        let mut e = m.zero.clone();
        e.set(nj, 1.0);
        for (i, &ni) in nodes.iter().enumerate() {
            a[(i, j)] = -evaluate_linear(k, &e, &e.node(ni), &m.q).unwrap().value;
        }
    }
    let b = nalgebra::DVector::from_element(n, 1.0);
    a.lu().solve(&b).unwrap().iter().copied().collect()
}
