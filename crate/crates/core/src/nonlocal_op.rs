//! Linear Lévy operators, extremal operators and the Bellman-Isaacs operator.
//!
//! Every linear evaluation is expressed as a point functional
//! `u ↦ Σ c_k u(y_k) + c_0`, emitted into a [`Sink`]. Summing against a field
//! gives the operator value; distributing onto lattice nodes gives the
//! discrete stencil used by the solver. Both therefore share one quadrature.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{gradient, Combination, Field};
use crate::geometry::{Domain, Shape};
use crate::grid::{ExteriorDatum, GridFunction};
use crate::kernels::{EllipticityParams, Kernel};
use crate::quadrature::{directions, point_from, tail_radial_nodes, Point, QuadratureParams, TailMode};

/// Receiver of a point functional. The `point` weights of an operator sum
/// to zero; `anchor` carries the unbalanced weight of a far-field tail.
pub trait Sink {
    fn point(&mut self, y: &Point, coef: f64);
    fn constant(&mut self, c: f64);
    fn anchor(&mut self, y: &Point, coef: f64) {
        self.point(y, coef);
    }
}

/// Sums the functional against a field, with balanced point values taken
/// relative to `u(x)` so the large near-field weights cancel exactly on
/// constants.
pub struct ValueSink<'a> {
    u: &'a dyn Field,
    reference: f64,
    sum: f64,
}

impl<'a> ValueSink<'a> {
    pub fn new(u: &'a dyn Field, reference: f64) -> Self {
        ValueSink { u, reference, sum: 0.0 }
    }

    pub fn total(&self) -> f64 {
        self.sum
    }
}

impl Sink for ValueSink<'_> {
    fn point(&mut self, y: &Point, coef: f64) {
        self.sum += coef * (self.u.value(y) - self.reference);
    }

    fn constant(&mut self, c: f64) {
        self.sum += c;
    }

    fn anchor(&mut self, y: &Point, coef: f64) {
        self.sum += coef * self.u.value(y);
    }
}

/// Operator value with the certified half-width of the truncated tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpValue {
    pub value: f64,
    pub tail_halfwidth: f64,
}

fn compensated(sigma: f64, r: f64) -> bool {
    sigma > 1.0 || (sigma == 1.0 && r < 1.0)
}

fn check_point(u: &dyn Field, x: &[f64]) -> Result<()> {
    if !u.contains(x) {
        return Err(Error::OutsideDomain(x[..u.dim()].to_vec()));
    }
    Ok(())
}

/// Rejects kernels whose mass grows like `|z|^{-n-2}` or faster at the
/// origin, i.e. without a finite second moment.
pub fn check_near_field(kernel: &Kernel, x: &[f64], rho: f64) -> Result<()> {
    let dirs = directions(kernel.dim, 32);
    let mass = |lo: f64| -> f64 {
        let mut nodes = Vec::new();
        let rule = crate::quadrature::gauss_legendre(6);
        crate::quadrature::gl_panel(lo, 2.0 * lo, &rule, &mut nodes);
        let mut m = 0.0;
        for (r, w) in nodes {
            for (d, wd) in &dirs {
                let z = [r * d[0], r * d[1]];
                m += w * wd * r.powi(kernel.dim as i32 - 1) * kernel.density(x, &z[..kernel.dim]);
            }
        }
        m
    };
    let d1 = rho * 2f64.powi(-20);
    let (m1, m2) = (mass(d1), mass(0.5 * d1));
    let growth = if m1 > 0.0 { (m2 / m1).log2() } else { 0.0 };
    if !m1.is_finite() || !m2.is_finite() || growth >= 2.0 - 1e-6 {
        return Err(Error::NonIntegrable { label: kernel.label.clone() });
    }
    Ok(())
}

/// Emits the point functional of `L_K u(x)`.
///
/// `step` is the finite-difference step used for the near-field Hessian and
/// the compensating gradient; `breaks` are extra radial panel boundaries.
pub fn emit_linear(
    kernel: &Kernel,
    x: &Point,
    step: f64,
    breaks: &[f64],
    q: &QuadratureParams,
    sink: &mut dyn Sink,
) -> Result<()> {
    q.validate()?;
    let dim = kernel.dim;
    let sigma = kernel.params.sigma;
    if sigma == 1.0 && (q.inner_radius >= 1.0 || q.truncation <= 1.0) {
        return Err(Error::InvalidParameter(
            "order one needs inner_radius < 1 < truncation (compensation switches at |z| = 1)".into(),
        ));
    }
    check_near_field(kernel, &x[..dim], q.inner_radius)?;
    let xs = &x[..dim];
    let dirs = directions(dim, q.angular_nodes);
    let mut extra: Vec<f64> = breaks.to_vec();
    if sigma == 1.0 {
        extra.push(1.0);
    }

    let mut center = 0.0;
    let mut comp = [0.0; 2];
    let mut moment_scale = 0.0;
    for (r, wr) in q.far_radial_nodes(&extra) {
        let jac = r.powi(dim as i32 - 1);
        let comp_here = compensated(sigma, r);
        for (d, wd) in &dirs {
            let z = [r * d[0], r * d[1]];
            let w = wr * wd * jac * kernel.density(xs, &z[..dim]);
            if w == 0.0 {
                continue;
            }
            sink.point(&[x[0] + z[0], x[1] + z[1]], w);
            center -= w;
            if comp_here {
                comp[0] += w * z[0];
                comp[1] += w * z[1];
                moment_scale += w * r;
            }
        }
    }

    let mut m2 = [[0.0; 2]; 2];
    let mut m1_near = [0.0; 2];
    for (r, wr) in q.near_radial_nodes(sigma) {
        let jac = r.powi(dim as i32 - 1);
        for (d, wd) in &dirs {
            let z = [r * d[0], r * d[1]];
            let w = wr * wd * jac * kernel.density(xs, &z[..dim]);
            for i in 0..dim {
                m1_near[i] += w * z[i];
                for j in 0..dim {
                    m2[i][j] += w * z[i] * z[j];
                }
            }
            moment_scale += w * r;
        }
    }

    match q.tail_mode {
        TailMode::FarConstant { value } => {
            let mut mass = 0.0;
            let mut m1 = [0.0; 2];
            for (r, wr) in tail_radial_nodes(q.truncation, sigma, 16) {
                let jac = r.powi(dim as i32 - 1);
                for (d, wd) in &dirs {
                    let z = [r * d[0], r * d[1]];
                    let w = wr * wd * jac * kernel.density(xs, &z[..dim]);
                    mass += w;
                    m1[0] += w * z[0];
                    m1[1] += w * z[1];
                }
            }
            sink.constant(value * mass);
            sink.anchor(x, -mass);
            if sigma > 1.0 {
                comp[0] += m1[0];
                comp[1] += m1[1];
            }
        }
        TailMode::Certified | TailMode::Ignore => {}
    }

    // near field: ½ H : M2 with a centered second-difference Hessian
    let h = step;
    let h2 = h * h;
    for i in 0..dim {
        let mut e = [0.0; 2];
        e[i] = h;
        let c = 0.5 * m2[i][i] / h2;
        sink.point(&[x[0] + e[0], x[1] + e[1]], c);
        sink.point(&[x[0] - e[0], x[1] - e[1]], c);
        center -= 2.0 * c;
    }
    if dim == 2 && m2[0][1].abs() > 1e-12 * (m2[0][0] + m2[1][1]) {
        let c = m2[0][1] / (4.0 * h2);
        sink.point(&[x[0] + h, x[1] + h], c);
        sink.point(&[x[0] + h, x[1] - h], -c);
        sink.point(&[x[0] - h, x[1] + h], -c);
        sink.point(&[x[0] - h, x[1] - h], c);
    }

    // gradient terms: near-field first moment (σ < 1) minus compensation
    let mut g = [-comp[0], -comp[1]];
    if sigma < 1.0 {
        g[0] += m1_near[0];
        g[1] += m1_near[1];
    }
    for i in 0..dim {
        if g[i].abs() <= 1e-12 * moment_scale {
            continue;
        }
        let mut e = [0.0; 2];
        e[i] = h;
        let c = g[i] / (2.0 * h);
        sink.point(&[x[0] + e[0], x[1] + e[1]], c);
        sink.point(&[x[0] - e[0], x[1] - e[1]], -c);
    }
    sink.point(x, center);
    Ok(())
}

/// Certified bound on the dropped tail `|z| > truncation`.
pub fn tail_halfwidth(kernel: &Kernel, u: &dyn Field, x: &[f64], q: &QuadratureParams) -> f64 {
    match q.tail_mode {
        TailMode::Certified => {
            let p = &kernel.params;
            let mut total = 0.0;
            let mut rad = q.truncation;
            for _ in 0..400 {
                let term = u.deviation_bound(x, 2.0 * rad) * p.mass_bound(rad);
                total += term;
                rad *= 2.0;
                if term <= 1e-17 * total {
                    break;
                }
            }
            if p.sigma > 1.0 {
                let g = gradient(u, x);
                let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
                let moments = p.moment_bound(q.truncation) / (1.0 - 2f64.powf(1.0 - p.sigma));
                total += gn * moments;
            }
            total
        }
        TailMode::FarConstant { .. } | TailMode::Ignore => 0.0,
    }
}

/// `δ_z u(x)` in the order-dependent form: plain difference for σ < 1,
/// compensated on `B_1` for σ = 1, fully compensated for σ > 1.
pub fn delta_u(u: &dyn Field, x: &[f64], z: &[f64], sigma: f64) -> Result<f64> {
    check_point(u, x)?;
    let dim = u.dim();
    let xp = point_from(&x[..dim]);
    let zp = point_from(&z[..dim]);
    let y = [xp[0] + zp[0], xp[1] + zp[1]];
    let mut d = u.value(&y) - u.value(&xp);
    let r = (zp[0] * zp[0] + zp[1] * zp[1]).sqrt();
    if compensated(sigma, r) {
        let g = gradient(u, &xp);
        d -= g[0] * zp[0] + g[1] * zp[1];
    }
    Ok(d)
}

/// `L_K u(x) = ∫ δ_z u(x) K(x,z) dz`.
pub fn evaluate_linear(kernel: &Kernel, u: &dyn Field, x: &[f64], q: &QuadratureParams) -> Result<OpValue> {
    if u.dim() != kernel.dim {
        return Err(Error::DimensionMismatch { expected: kernel.dim, got: u.dim() });
    }
    check_point(u, x)?;
    let xp = point_from(&x[..kernel.dim]);
    let mut sink = ValueSink::new(u, u.value(&xp));
    emit_linear(kernel, &xp, u.fd_step(), &u.breakpoints(&xp), q, &mut sink)?;
    Ok(OpValue { value: sink.total(), tail_halfwidth: tail_halfwidth(kernel, u, &xp, q) })
}

/// Extremal value over a finite family and the index attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalValue {
    pub value: f64,
    pub tail_halfwidth: f64,
    pub index: usize,
}

fn extremal(family: &[Kernel], u: &dyn Field, x: &[f64], q: &QuadratureParams, plus: bool) -> Result<ExtremalValue> {
    if family.is_empty() {
        return Err(Error::EmptyFamily("kernel family"));
    }
    let mut best: Option<ExtremalValue> = None;
    let mut hw = 0.0f64;
    for (i, k) in family.iter().enumerate() {
        let v = evaluate_linear(k, u, x, q)?;
        hw = hw.max(v.tail_halfwidth);
        let better = match best {
            None => true,
            Some(b) => if plus { v.value > b.value } else { v.value < b.value },
        };
        if better {
            best = Some(ExtremalValue { value: v.value, tail_halfwidth: 0.0, index: i });
        }
    }
    let mut b = best.unwrap();
    b.tail_halfwidth = hw;
    Ok(b)
}

/// `M⁺u(x) = max_K L_K u(x)`; ties go to the first index.
pub fn extremal_plus(family: &[Kernel], u: &dyn Field, x: &[f64], q: &QuadratureParams) -> Result<ExtremalValue> {
    extremal(family, u, x, q, true)
}

/// `M⁻u(x) = min_K L_K u(x)`; ties go to the first index.
pub fn extremal_minus(family: &[Kernel], u: &dyn Field, x: &[f64], q: &QuadratureParams) -> Result<ExtremalValue> {
    extremal(family, u, x, q, false)
}

/// Extremal operator of the pointwise class
/// `(2-σ)λ|z|^{-n-σ} <= K <= (2-σ)Λ|z|^{-n-σ}` (amplitudes `lambda`,
/// `big_lambda`): `∫ (Λ(δ_z u)⁺ - λ(δ_z u)⁻)(2-σ)|z|^{-n-σ} dz`.
///
/// For finite families drawn from that class it is an upper bound of
/// [`extremal_plus`].
pub fn strong_pucci_plus(
    sigma: f64,
    lambda: f64,
    big_lambda: f64,
    u: &dyn Field,
    x: &[f64],
    q: &QuadratureParams,
) -> Result<OpValue> {
    let dim = u.dim();
    let params = EllipticityParams::new(sigma, lambda, big_lambda, 1.0, 0.0)?;
    q.validate()?;
    check_point(u, x)?;
    let xp = point_from(&x[..dim]);
    let u0 = u.value(&xp);
    let g = gradient(u, &xp);
    let h = u.fd_step();
    let hess = hessian(u, &xp, h);
    let e = -(dim as f64) - sigma;
    let profile = |r: f64| (2.0 - sigma) * r.powf(e);
    let signed = |d: f64| if d > 0.0 { big_lambda * d } else { lambda * d };
    let dirs = directions(dim, q.angular_nodes);
    let mut extra = u.breakpoints(&xp);
    if sigma == 1.0 {
        extra.push(1.0);
    }
    let mut sum = 0.0;
    for (r, wr) in q.far_radial_nodes(&extra) {
        let jac = r.powi(dim as i32 - 1) * profile(r);
        let comp = compensated(sigma, r);
        for (d, wd) in &dirs {
            let z = [r * d[0], r * d[1]];
            let mut dz = u.value(&[xp[0] + z[0], xp[1] + z[1]]) - u0;
            if comp {
                dz -= g[0] * z[0] + g[1] * z[1];
            }
            sum += wr * wd * jac * signed(dz);
        }
    }
    for (r, wr) in q.near_radial_nodes(sigma) {
        let jac = r.powi(dim as i32 - 1) * profile(r);
        for (d, wd) in &dirs {
            let z = [r * d[0], r * d[1]];
            let mut dz = 0.5
                * (hess[0][0] * z[0] * z[0] + 2.0 * hess[0][1] * z[0] * z[1] + hess[1][1] * z[1] * z[1]);
            if sigma < 1.0 {
                dz += g[0] * z[0] + g[1] * z[1];
            }
            sum += wr * wd * jac * signed(dz);
        }
    }
    if let TailMode::FarConstant { value } = q.tail_mode {
        for (r, wr) in tail_radial_nodes(q.truncation, sigma, 16) {
            let jac = r.powi(dim as i32 - 1) * profile(r);
            for (d, wd) in &dirs {
                let z = [r * d[0], r * d[1]];
                let mut dz = value - u0;
                if sigma > 1.0 {
                    dz -= g[0] * z[0] + g[1] * z[1];
                }
                sum += wr * wd * jac * signed(dz);
            }
        }
    }
    let bound_kernel = Kernel::fractional(dim, params, big_lambda)?;
    let hw = tail_halfwidth(&Kernel { params: class_of(dim, &params)?, ..bound_kernel }, u, &xp, q);
    Ok(OpValue { value: sum, tail_halfwidth: hw })
}

fn class_of(dim: usize, p: &EllipticityParams) -> Result<EllipticityParams> {
    EllipticityParams::fractional_class(dim, p.sigma, p.lambda, p.big_lambda)
}

/// Centered second-difference Hessian.
pub fn hessian(u: &dyn Field, x: &Point, h: f64) -> [[f64; 2]; 2] {
    let dim = u.dim();
    let c = u.value(x);
    let mut hs = [[0.0; 2]; 2];
    for i in 0..dim {
        let mut p = *x;
        p[i] += h;
        let a = u.value(&p);
        p[i] -= 2.0 * h;
        let b = u.value(&p);
        hs[i][i] = (a - 2.0 * c + b) / (h * h);
    }
    if dim == 2 {
        let v = |dx: f64, dy: f64| u.value(&[x[0] + dx, x[1] + dy]);
        let m = (v(h, h) - v(h, -h) - v(-h, h) + v(-h, -h)) / (4.0 * h * h);
        hs[0][1] = m;
        hs[1][0] = m;
    }
    hs
}

type CoefFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Scalar coefficient field on Ω.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    /// `base + slope · x`.
    Affine { base: f64, slope: [f64; 2] },
    /// Closure with declared bounds `lo <= f <= hi` on Ω.
    Custom { f: CoefFn, lo: f64, hi: f64 },
}

impl std::fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Affine { base, slope } => write!(f, "Affine({base}, {slope:?})"),
            Coefficient::Custom { lo, hi, .. } => write!(f, "Custom([{lo}, {hi}])"),
        }
    }
}

impl Coefficient {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Affine { base, slope } => {
                base + slope[0] * x[0] + if x.len() > 1 { slope[1] * x[1] } else { 0.0 }
            }
            Coefficient::Custom { f, .. } => f(x),
        }
    }

    /// `(inf, sup)` over Ω.
    pub fn bounds(&self, domain: &Domain) -> (f64, f64) {
        match self {
            Coefficient::Constant(c) => (*c, *c),
            Coefficient::Affine { base, slope } => match &domain.shape {
                Shape::Interval { lo, hi } => {
                    let (a, b) = (base + slope[0] * lo, base + slope[0] * hi);
                    (a.min(b), a.max(b))
                }
                Shape::Ball { center, radius } => {
                    let d = domain.dim;
                    let c = base + (0..d).map(|i| slope[i] * center[i]).sum::<f64>();
                    let s = (0..d).map(|i| slope[i] * slope[i]).sum::<f64>().sqrt() * radius;
                    (c - s, c + s)
                }
            },
            Coefficient::Custom { lo, hi, .. } => (*lo, *hi),
        }
    }

    pub fn sup_abs(&self, domain: &Domain) -> f64 {
        let (a, b) = self.bounds(domain);
        a.abs().max(b.abs())
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Constant(c) if *c == 0.0)
            || matches!(self, Coefficient::Affine { base, slope } if *base == 0.0 && slope[0] == 0.0 && slope[1] == 0.0)
    }
}

/// Coefficients of one index pair `(a, b)`.
#[derive(Clone, Debug)]
pub struct PairCoefficients {
    pub kernel: Kernel,
    /// Drift components; `None` means no drift.
    pub drift: Option<Vec<Coefficient>>,
    pub zeroth: Coefficient,
    pub forcing: Coefficient,
}

impl PairCoefficients {
    pub fn new(kernel: Kernel, zeroth: Coefficient, forcing: Coefficient) -> Self {
        PairCoefficients { kernel, drift: None, zeroth, forcing }
    }

    pub fn with_drift(mut self, drift: Vec<Coefficient>) -> Self {
        self.drift = Some(drift);
        self
    }

    pub fn drift_at(&self, x: &[f64]) -> Point {
        let mut b = [0.0; 2];
        if let Some(d) = &self.drift {
            for (i, c) in d.iter().enumerate() {
                b[i] = c.value(x);
            }
        }
        b
    }
}

/// `sup_a inf_b {-I_ab[x,u] + b_ab·∇u + c_ab r + f_ab} = 0` in Ω, `u = g`
/// outside, with finite index sets.
#[derive(Clone, Debug)]
pub struct BellmanProblem {
    pub domain: Domain,
    pub datum: ExteriorDatum,
    pub params: EllipticityParams,
    /// Coercivity floor: `c_ab >= gamma` when positive.
    pub gamma: f64,
    pub n_a: usize,
    pub n_b: usize,
    /// Row-major in `(a, b)`.
    pub pairs: Vec<PairCoefficients>,
}

impl BellmanProblem {
    pub fn new(
        domain: Domain,
        datum: ExteriorDatum,
        params: EllipticityParams,
        gamma: f64,
        n_a: usize,
        n_b: usize,
        pairs: Vec<PairCoefficients>,
    ) -> Result<Self> {
        params.validate()?;
        if n_a == 0 || n_b == 0 {
            return Err(Error::EmptyFamily("index sets"));
        }
        if pairs.len() != n_a * n_b {
            return Err(Error::InvalidParameter(format!(
                "expected {} index pairs, got {}",
                n_a * n_b,
                pairs.len()
            )));
        }
        if gamma < 0.0 {
            return Err(Error::InvalidParameter("gamma must be nonnegative".into()));
        }
        for (k, p) in pairs.iter().enumerate() {
            if p.kernel.dim != domain.dim {
                return Err(Error::DimensionMismatch { expected: domain.dim, got: p.kernel.dim });
            }
            if p.kernel.params.sigma != params.sigma {
                return Err(Error::InvalidParameter(format!("pair {k}: kernel order differs from the problem's")));
            }
            let (lo, _) = p.zeroth.bounds(&domain);
            if lo < 0.0 {
                return Err(Error::InvalidParameter(format!("pair {k}: zeroth-order coefficient is negative")));
            }
            if gamma > 0.0 && lo < gamma {
                return Err(Error::InvalidParameter(format!("pair {k}: zeroth-order coefficient below gamma")));
            }
            if let Some(d) = &p.drift {
                if d.len() != domain.dim {
                    return Err(Error::DimensionMismatch { expected: domain.dim, got: d.len() });
                }
                if params.sigma < 1.0 && d.iter().any(|c| !c.is_zero()) {
                    return Err(Error::InvalidParameter("drift must vanish when sigma < 1".into()));
                }
            }
        }
        Ok(BellmanProblem { domain, datum, params, gamma, n_a, n_b, pairs })
    }

    /// Single-pair problem `-L u + c u + f = 0`.
    pub fn linear(domain: Domain, datum: ExteriorDatum, kernel: Kernel, zeroth: Coefficient, forcing: Coefficient) -> Result<Self> {
        let params = kernel.params;
        Self::new(domain, datum, params, 0.0, 1, 1, vec![PairCoefficients::new(kernel, zeroth, forcing)])
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn pair(&self, a: usize, b: usize) -> &PairCoefficients {
        &self.pairs[a * self.n_b + b]
    }

    pub fn kernels(&self) -> Vec<Kernel> {
        self.pairs.iter().map(|p| p.kernel.clone()).collect()
    }

    /// `sup |c_ab|` over Ω and all pairs.
    pub fn c_max(&self) -> f64 {
        self.pairs.iter().map(|p| p.zeroth.sup_abs(&self.domain)).fold(0.0, f64::max)
    }

    /// `sup ‖f_ab‖_∞` over all pairs.
    pub fn forcing_sup(&self) -> f64 {
        self.pairs.iter().map(|p| p.forcing.sup_abs(&self.domain)).fold(0.0, f64::max)
    }

    /// `sup |b_ab|` over Ω and all pairs.
    pub fn drift_sup(&self) -> f64 {
        self.pairs
            .iter()
            .map(|p| match &p.drift {
                None => 0.0,
                Some(d) => d.iter().map(|c| c.sup_abs(&self.domain).powi(2)).sum::<f64>().sqrt(),
            })
            .fold(0.0, f64::max)
    }

    /// Default modulus `m(t) = c_max t` of the uniform-ellipticity sandwich.
    pub fn modulus(&self, t: f64) -> f64 {
        self.c_max() * t
    }

    /// Value of one pair: `-I_ab[x,u] + b_ab·∇u + c_ab r + f_ab`.
    pub fn pair_value(&self, a: usize, b: usize, u: &dyn Field, x: &[f64], r: f64, q: &QuadratureParams) -> Result<OpValue> {
        let p = self.pair(a, b);
        let lin = evaluate_linear(&p.kernel, u, x, q)?;
        let mut v = -lin.value + p.zeroth.value(x) * r + p.forcing.value(x);
        if p.drift.is_some() {
            let g = gradient(u, x);
            let d = p.drift_at(x);
            v += d[0] * g[0] + d[1] * g[1];
        }
        Ok(OpValue { value: v, tail_halfwidth: lin.tail_halfwidth })
    }
}

/// Bellman-Isaacs value with the active pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellmanValue {
    pub value: f64,
    pub tail_halfwidth: f64,
    pub active: (usize, usize),
}

/// `sup_a inf_b` of the pair values; `r_override` replaces `u(x)` in the
/// zeroth-order slot. Ties go to the first index.
pub fn bellman_isaacs(
    problem: &BellmanProblem,
    u: &dyn Field,
    x: &[f64],
    r_override: Option<f64>,
    q: &QuadratureParams,
) -> Result<BellmanValue> {
    check_point(u, x)?;
    let xp = point_from(&x[..problem.dim()]);
    let r = r_override.unwrap_or_else(|| u.value(&xp));
    let mut best: Option<BellmanValue> = None;
    let mut hw = 0.0f64;
    for a in 0..problem.n_a {
        let mut inner: Option<(f64, usize)> = None;
        for b in 0..problem.n_b {
            let v = problem.pair_value(a, b, u, &xp, r, q)?;
            hw = hw.max(v.tail_halfwidth);
            if inner.is_none_or(|(m, _)| v.value < m) {
                inner = Some((v.value, b));
            }
        }
        let (m, b) = inner.unwrap();
        if best.is_none_or(|bv| m > bv.value) {
            best = Some(BellmanValue { value: m, tail_halfwidth: 0.0, active: (a, b) });
        }
    }
    let mut v = best.unwrap();
    v.tail_halfwidth = hw;
    Ok(v)
}

/// Bellman-Isaacs values at every interior node, evaluated in parallel.
pub fn evaluate_on_interior(problem: &BellmanProblem, u: &GridFunction, q: &QuadratureParams) -> Result<Vec<BellmanValue>> {
    u.interior()
        .par_iter()
        .map(|&idx| bellman_isaacs(problem, u, &u.node(idx), None, q))
        .collect()
}

/// An operator `I(x, r, u)` the structural checks can probe.
pub trait NonlocalOperator: Sync {
    fn evaluate(&self, u: &dyn Field, x: &[f64], r: f64, q: &QuadratureParams) -> Result<OpValue>;
    /// Kernels whose extremal operators should sandwich differences.
    fn family(&self) -> Vec<Kernel>;
    /// Gradient constant of the sandwich.
    fn gradient_constant(&self) -> f64;
    /// Modulus `m` of the sandwich.
    fn modulus(&self, t: f64) -> f64;
}

impl NonlocalOperator for BellmanProblem {
    fn evaluate(&self, u: &dyn Field, x: &[f64], r: f64, q: &QuadratureParams) -> Result<OpValue> {
        let v = bellman_isaacs(self, u, x, Some(r), q)?;
        Ok(OpValue { value: v.value, tail_halfwidth: v.tail_halfwidth })
    }

    fn family(&self) -> Vec<Kernel> {
        self.kernels()
    }

    fn gradient_constant(&self) -> f64 {
        self.drift_sup()
    }

    fn modulus(&self, t: f64) -> f64 {
        BellmanProblem::modulus(self, t)
    }
}

/// `(x, r, s, u, v)` probe of the uniform-ellipticity sandwich.
#[derive(Clone)]
pub struct EllipticitySample {
    pub x: Point,
    pub r: f64,
    pub s: f64,
    pub u: Arc<dyn Field>,
    pub v: Arc<dyn Field>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityRow {
    pub x: Point,
    pub lower: f64,
    pub difference: f64,
    pub upper: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub rows: Vec<EllipticityRow>,
    pub worst_slack: f64,
    pub gradient_constant: f64,
    pub modulus: String,
    pub pass: bool,
}

/// Checks `M⁻(v-u) - C0|∇(u-v)| - m(|r-s|) <= I(x,r,u) - I(x,s,v) <=
/// M⁺(v-u) + C0|∇(u-v)| + m(|r-s|)` at each sample.
pub fn check_uniform_ellipticity(
    op: &dyn NonlocalOperator,
    family: &[Kernel],
    samples: &[EllipticitySample],
    q: &QuadratureParams,
) -> Result<EllipticityReport> {
    let c0 = op.gradient_constant();
    let rows: Vec<EllipticityRow> = samples
        .iter()
        .map(|s| -> Result<EllipticityRow> {
            let iu = op.evaluate(s.u.as_ref(), &s.x, s.r, q)?;
            let iv = op.evaluate(s.v.as_ref(), &s.x, s.s, q)?;
            let diff = Combination::difference(s.v.clone(), s.u.clone());
            let hi = extremal_plus(family, &diff, &s.x, q)?;
            let lo = extremal_minus(family, &diff, &s.x, q)?;
            let g = gradient(&diff, &s.x);
            let grad = c0 * (g[0] * g[0] + g[1] * g[1]).sqrt();
            let m = op.modulus((s.r - s.s).abs());
            let difference = iu.value - iv.value;
            let lower = lo.value - grad - m;
            let upper = hi.value + grad + m;
            let scale = 1.0 + iu.value.abs() + iv.value.abs() + hi.value.abs() + lo.value.abs();
            let tolerance = iu.tail_halfwidth + iv.tail_halfwidth + hi.tail_halfwidth.max(lo.tail_halfwidth) + 1e-9 * scale;
            let slack = (difference - lower).min(upper - difference);
            Ok(EllipticityRow { x: s.x, lower, difference, upper, slack, tolerance, pass: slack >= -tolerance })
        })
        .collect::<Result<_>>()?;
    let worst_slack = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    let pass = rows.iter().all(|r| r.pass);
    Ok(EllipticityReport {
        rows,
        worst_slack,
        gradient_constant: c0,
        modulus: format!("m(t) = {} t", op.modulus(1.0)),
        pass,
    })
}

/// Probe of the structural axioms: `psi` is touched from above by `u` at
/// `x` (`u >= psi`, equality at `x`).
#[derive(Clone)]
pub struct AxiomSample {
    pub x: Point,
    pub r: f64,
    pub s: f64,
    pub constant: f64,
    pub u: Arc<dyn Field>,
    pub psi: Arc<dyn Field>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AxiomOutcome {
    pub checked: usize,
    pub failures: usize,
    /// Largest violation beyond tolerance (0 when none).
    pub worst_violation: f64,
}

impl AxiomOutcome {
    fn record(&mut self, violation: f64, tol: f64) {
        self.checked += 1;
        if violation > tol {
            self.failures += 1;
            self.worst_violation = self.worst_violation.max(violation);
        }
    }

    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    /// Monotonicity in `r`.
    pub monotone_in_r: AxiomOutcome,
    /// Invariance under adding constants.
    pub constant_invariance: AxiomOutcome,
    /// Comparison under touching from above.
    pub touching_comparison: AxiomOutcome,
}

impl AxiomReport {
    pub fn pass(&self) -> bool {
        self.monotone_in_r.pass() && self.constant_invariance.pass() && self.touching_comparison.pass()
    }
}

pub fn check_structural_axioms(op: &dyn NonlocalOperator, samples: &[AxiomSample], q: &QuadratureParams) -> Result<AxiomReport> {
    let mut rep = AxiomReport::default();
    for s in samples {
        let (lo, hi) = if s.r <= s.s { (s.r, s.s) } else { (s.s, s.r) };
        let a = op.evaluate(s.u.as_ref(), &s.x, lo, q)?;
        let b = op.evaluate(s.u.as_ref(), &s.x, hi, q)?;
        let tol = |x: &OpValue, y: &OpValue| x.tail_halfwidth + y.tail_halfwidth + 1e-9 * (1.0 + x.value.abs() + y.value.abs());
        rep.monotone_in_r.record(a.value - b.value, tol(&a, &b));

        let shifted = Combination::shifted(s.u.clone(), s.constant);
        let c = op.evaluate(&shifted, &s.x, s.r, q)?;
        let d = op.evaluate(s.u.as_ref(), &s.x, s.r, q)?;
        rep.constant_invariance.record((c.value - d.value).abs(), tol(&c, &d));

        let e = op.evaluate(s.psi.as_ref(), &s.x, s.r, q)?;
        rep.touching_comparison.record(d.value - e.value, tol(&d, &e));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{AnalyticField, Growth};

    fn frac(dim: usize, sigma: f64) -> Kernel {
        let p = EllipticityParams::fractional_class(dim, sigma, 1.0, 1.0).unwrap();
        Kernel::fractional(dim, p, 1.0).unwrap()
    }

    #[test]
    fn delta_of_constant_and_quadratic() {
        let c = AnalyticField::new(2, Growth::Bounded(7.0), |_| 7.0);
        for s in [0.5, 1.0, 1.5] {
            assert_eq!(delta_u(&c, &[0.1, 0.2], &[0.3, -0.1], s).unwrap(), 0.0);
        }
        let quad = AnalyticField::new(2, Growth::Bounded(10.0), |x| x[0] * x[0]).with_step(1e-3);
        let d = delta_u(&quad, &[0.0, 0.0], &[0.1, 0.0], 1.5).unwrap();
        assert!((d - 0.01).abs() < 1e-12);
        let lin = AnalyticField::new(2, Growth::Bounded(10.0), |x| x[0]).with_step(1e-3);
        assert!(delta_u(&lin, &[0.2, 0.0], &[0.3, 0.1], 1.5).unwrap().abs() < 1e-12);
    }

    #[test]
    fn constants_are_annihilated() {
        for (dim, s) in [(1, 0.5), (1, 1.0), (2, 1.5)] {
            let k = frac(dim, s);
            let u = AnalyticField::new(dim, Growth::Bounded(3.0), |_| 3.0);
            let q = QuadratureParams { truncation: 8.0, inner_radius: 0.05, ..Default::default() };
            let v = evaluate_linear(&k, &u, &[0.0, 0.0], &q).unwrap();
            // rounding of the O(h^-2) second-difference weights
            assert!(v.value.abs() < 1e-6, "{dim} {s}: {v:?}");
            assert!(v.tail_halfwidth > 0.0);
        }
    }

    #[test]
    fn rejects_overly_singular_kernel() {
        let p = EllipticityParams::new(1.5, 1.0, 1.0, 1.0, 0.0).unwrap();
        let k = Kernel::from_fn(1, p, "heavy", true, |_, z| z[0].abs().powf(-3.5)).unwrap();
        let u = AnalyticField::new(1, Growth::Bounded(1.0), |x| x[0].cos());
        let r = evaluate_linear(&k, &u, &[0.0], &QuadratureParams::default());
        assert!(matches!(r, Err(Error::NonIntegrable { .. })));
    }

    #[test]
    fn two_by_two_forcing_table() {
        let d = Domain::interval(-1.0, 1.0).unwrap();
        let k = frac(1, 1.5);
        let f = [1.0, 3.0, 2.0, 0.0];
        let pairs = f
            .iter()
            .map(|&v| PairCoefficients::new(k.clone(), Coefficient::Constant(0.0), Coefficient::Constant(v)))
            .collect();
        let p = BellmanProblem::new(d, ExteriorDatum::constant(0.0), k.params, 0.0, 2, 2, pairs).unwrap();
        let zero = AnalyticField::new(1, Growth::Bounded(0.0), |_| 0.0);
        let q = QuadratureParams { truncation: 4.0, tail_mode: TailMode::FarConstant { value: 0.0 }, ..Default::default() };
        let v = bellman_isaacs(&p, &zero, &[0.0], None, &q).unwrap();
        assert_eq!(v.value, 1.0);
        assert_eq!(v.active, (0, 0));
    }
}
