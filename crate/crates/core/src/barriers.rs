//! Barrier functions near the boundary and the boundary sub/supersolutions
//! assembled from them.
//!
//! Every certification evaluates the relevant operator with quadrature
//! rescaled to the distance from the probe to the barrier's kink, and
//! treats the tail half-width as an adverse error.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::field::{gradient, one_sided_gradient_norm, AnalyticField, Field, Growth};
use crate::geometry::{dist, BoundarySample, Domain};
use crate::grid::{GridFunction, Lattice};
use crate::kernels::Kernel;
use crate::nonlocal_op::{evaluate_linear, extremal_plus, BellmanProblem};
use crate::quadrature::{gauss_legendre, gl_panel, point_from, tail_radial_nodes, Point, QuadratureParams};

/// Relative finite-difference step used at a probe whose nearest kink is
/// at distance `scale`.
const STEP_FRACTION: f64 = 2e-3;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must lie in (0,1), got {alpha}")))
    }
}

fn pos_pow(t: f64, alpha: f64) -> f64 {
    if t > 0.0 {
        t.powf(alpha)
    } else {
        0.0
    }
}

/// `(1+r)e₁`.
fn ray_probe(r: f64) -> Point {
    [1.0 + r, 0.0]
}

/// `v_α(x) = ((x₁ - 1)⁺)^α`.
pub fn half_space_barrier(dim: usize, alpha: f64) -> Result<AnalyticField> {
    check_dim(dim)?;
    check_alpha(alpha)?;
    Ok(AnalyticField::new(dim, Growth::Holder { coef: 1.0, exponent: alpha }, move |x| pos_pow(x[0] - 1.0, alpha))
        .with_kinks(|x| vec![(x[0] - 1.0).abs()]))
}

/// `u_α(x) = ((|x| - 1)⁺)^α`.
pub fn radial_barrier(dim: usize, alpha: f64) -> Result<AnalyticField> {
    scaled_radial_barrier(dim, alpha, &[0.0, 0.0], 1.0)
}

/// `u_α^r(y) = ((|y - c|/r - 1)⁺)^α` for the exterior centre `c`.
pub fn scaled_radial_barrier(dim: usize, alpha: f64, center: &[f64], r: f64) -> Result<AnalyticField> {
    check_dim(dim)?;
    check_alpha(alpha)?;
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
    }
    let c = point_from(&center[..dim]);
    Ok(AnalyticField::new(dim, Growth::Holder { coef: r.powf(-alpha), exponent: alpha }, move |y| {
        pos_pow(dist(dim, y, &c) / r - 1.0, alpha)
    })
    .with_step(1e-4 * r)
    .with_kinks(move |y| {
        let d = dist(dim, y, &c);
        vec![(d - r).abs(), d + r]
    }))
}

/// `v_α^r(y) = ((((y - y^r)·n)/r - 1)⁺)^α` with the sample's fixed inward
/// normal `n` and `y^r = x - r n`.
pub fn scaled_half_space_barrier(dim: usize, alpha: f64, sample: &BoundarySample, r: f64) -> Result<AnalyticField> {
    directional_half_space(dim, alpha, sample.exterior_center(r), sample.normal, r)
}

fn directional_half_space(dim: usize, alpha: f64, c: Point, n: Point, r: f64) -> Result<AnalyticField> {
    check_dim(dim)?;
    check_alpha(alpha)?;
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
    }
    let proj = move |y: &[f64]| (0..dim).map(|i| (y[i] - c[i]) * n[i]).sum::<f64>();
    Ok(AnalyticField::new(dim, Growth::Holder { coef: r.powf(-alpha), exponent: alpha }, move |y| {
        pos_pow(proj(y) / r - 1.0, alpha)
    })
    .with_step(1e-4 * r)
    .with_kinks(move |y| vec![(proj(y) - r).abs()]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierKind {
    HalfSpace,
    Radial,
    BoundaryBump,
    DegenerateRange,
    Degenerate,
}

/// One probe of a certification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub point: Point,
    /// `r` or `s` of the probe, depending on the barrier.
    pub scale: f64,
    /// Operator value (upper bound for supersolution-type checks, lower
    /// bound for the degenerate ones).
    pub value: f64,
    pub tail_halfwidth: f64,
    /// Required bound.
    pub bound: f64,
    /// Margin by which the requirement holds; negative on failure.
    pub slack: f64,
    /// Offending or worst index pair, if any.
    pub pair: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub kind: BarrierKind,
    pub alpha: f64,
    /// `r₀` or `s₀`; zero when nothing validated.
    pub range: f64,
    pub epsilon: f64,
    pub worst_slack: f64,
    pub probes: usize,
    pub pass: bool,
    pub constants: BTreeMap<String, f64>,
    pub records: Vec<ProbeRecord>,
    /// `(alpha, worst margin)` of every exponent tried.
    pub tried: Vec<(f64, f64)>,
    pub message: Option<String>,
}

impl BarrierReport {
    fn new(kind: BarrierKind, alpha: f64) -> Self {
        BarrierReport {
            kind,
            alpha,
            range: 0.0,
            epsilon: 0.0,
            worst_slack: f64::NEG_INFINITY,
            probes: 0,
            pass: false,
            constants: BTreeMap::new(),
            records: Vec::new(),
            tried: Vec::new(),
            message: None,
        }
    }

    pub fn constant(&self, name: &str) -> Result<f64> {
        self.constants
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("report has no constant `{name}`")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn family_info(family: &[Kernel]) -> Result<(usize, f64)> {
    let k = family.first().ok_or(Error::EmptyFamily("kernel family"))?;
    if family.iter().any(|j| j.dim != k.dim || j.params.sigma != k.params.sigma) {
        return Err(Error::InvalidParameter("family mixes dimensions or orders".into()));
    }
    Ok((k.dim, k.params.sigma))
}

/// Largest `α` in `alpha_grid` with `M⁺v_α((1+r)e₁) <= -ε r^{α-σ}` at every
/// `r` in `r_grid`; `ε₅` is half the worst normalized margin. `q` is a
/// unit-scale rule, rescaled by `r` at each probe.
pub fn certify_halfspace_decay(
    family: &[Kernel],
    alpha_grid: &[f64],
    r_grid: &[f64],
    q: &QuadratureParams,
) -> Result<BarrierReport> {
    let (dim, sigma) = family_info(family)?;
    if r_grid.is_empty() || r_grid.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidParameter("r_grid must be nonempty and positive".into()));
    }
    let mut alphas = alpha_grid.to_vec();
    alphas.sort_by(|a, b| b.total_cmp(a));
    let mut tried = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for &alpha in &alphas {
        let field = half_space_barrier(dim, alpha)?;
        let rows: Vec<(f64, f64, f64, usize)> = r_grid
            .par_iter()
            .map(|&r| {
                let u = field.clone().with_step(STEP_FRACTION * r);
                let x = ray_probe(r);
                let v = extremal_plus(family, &u, &x[..dim], &q.scaled(r))?;
                Ok((r, v.value, v.tail_halfwidth, v.index))
            })
            .collect::<Result<_>>()?;
        let margin = |&(r, v, hw, _): &(f64, f64, f64, usize)| -(v + hw) / r.powf(alpha - sigma);
        let worst = rows.iter().map(margin).fold(f64::INFINITY, f64::min);
        tried.push((alpha, worst));
        if best.is_none_or(|b| worst > b.1) {
            best = Some((alpha, worst));
        }
        if worst > 0.0 {
            let eps = 0.5 * worst;
            let mut rep = BarrierReport::new(BarrierKind::HalfSpace, alpha);
            rep.records = rows
                .iter()
                .map(|&(r, v, hw, _)| {
                    let bound = -eps * r.powf(alpha - sigma);
                    ProbeRecord {
                        point: ray_probe(r),
                        scale: r,
                        value: v,
                        tail_halfwidth: hw,
                        bound,
                        slack: bound - (v + hw),
                        pair: None,
                    }
                })
                .collect();
            rep.worst_slack = rep.records.iter().map(|p| p.slack).fold(f64::INFINITY, f64::min);
            rep.epsilon = eps;
            rep.range = r_grid.iter().copied().fold(0.0, f64::max);
            rep.probes = rows.len();
            rep.pass = true;
            rep.tried = tried;
            rep.constants.insert("sigma".into(), sigma);
            return Ok(rep);
        }
    }
    let (alpha, worst) = best.unwrap_or((f64::NAN, f64::NEG_INFINITY));
    let mut rep = BarrierReport::new(BarrierKind::HalfSpace, alpha);
    rep.worst_slack = worst;
    rep.probes = r_grid.len();
    rep.tried = tried;
    rep.constants.insert("sigma".into(), sigma);
    rep.message = Some("no exponent gives a negative margin at every probe".into());
    Ok(rep)
}

/// Checks `M⁺u_α + C₀|∇u_α| <= -1` at `(1+r)e₁` for `r` in `r_grid ⊂ (0,1)`
/// and reports the largest `r₀` such that every grid radius up to it
/// passes. `ε` is the smallest certified value of `-(M⁺u_α + C₀|∇u_α|)`.
pub fn certify_radial_barrier(
    family: &[Kernel],
    alpha: f64,
    c0: f64,
    r_grid: &[f64],
    q: &QuadratureParams,
) -> Result<BarrierReport> {
    let (dim, sigma) = family_info(family)?;
    check_alpha(alpha)?;
    if c0 < 0.0 || (sigma < 1.0 && c0 > 0.0) {
        return Err(Error::InvalidParameter("C0 must be nonnegative, and zero when sigma < 1".into()));
    }
    if r_grid.is_empty() || r_grid.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
        return Err(Error::InvalidParameter("r_grid must be nonempty and lie in (0,1)".into()));
    }
    let mut radii = r_grid.to_vec();
    radii.sort_by(f64::total_cmp);
    let field = radial_barrier(dim, alpha)?;
    let records: Vec<ProbeRecord> = radii
        .par_iter()
        .map(|&r| {
            let u = field.clone().with_step(STEP_FRACTION * r);
            let x = ray_probe(r);
            let v = extremal_plus(family, &u, &x[..dim], &q.scaled(r))?;
            let g = gradient(&u, &x);
            let upper = v.value + v.tail_halfwidth + c0 * (g[0] * g[0] + g[1] * g[1]).sqrt();
            Ok(ProbeRecord {
                point: x,
                scale: r,
                value: v.value,
                tail_halfwidth: v.tail_halfwidth,
                bound: -1.0,
                slack: -1.0 - upper,
                pair: None,
            })
        })
        .collect::<Result<_>>()?;
    let validated = records.iter().take_while(|p| p.slack >= 0.0).count();
    let mut rep = BarrierReport::new(BarrierKind::Radial, alpha);
    rep.constants.insert("c0".into(), c0);
    rep.constants.insert("sigma".into(), sigma);
    rep.probes = records.len();
    if validated > 0 {
        let ok = &records[..validated];
        rep.range = ok[validated - 1].scale;
        rep.epsilon = ok.iter().map(|p| 1.0 + p.slack).fold(f64::INFINITY, f64::min);
        rep.worst_slack = ok.iter().map(|p| p.slack).fold(f64::INFINITY, f64::min);
        rep.pass = true;
    } else {
        rep.worst_slack = records[0].slack;
        rep.message = Some(format!("fails already at r = {}", records[0].scale));
    }
    rep.records = records;
    Ok(rep)
}

/// Default `C₃ = 4/r₀^α`.
pub fn default_bump_constant(alpha: f64, r0: f64) -> f64 {
    4.0 / r0.powf(alpha)
}

fn ramp(y1: f64, r0_halfwidth: f64) -> f64 {
    (2.0 - (y1 - r0_halfwidth)).clamp(1.0, 2.0)
}

#[derive(Debug, Clone, Copy)]
struct BumpShape {
    dim: usize,
    center: Point,
    r: f64,
    c3: f64,
    alpha: f64,
    halfwidth: f64,
}

impl BumpShape {
    fn value(&self, y: &[f64]) -> f64 {
        let radial = self.c3 * pos_pow(dist(self.dim, y, &self.center) / self.r - 1.0, self.alpha);
        ramp(y[0], self.halfwidth).min(radial)
    }

    /// Radius at which the radial branch reaches 2.
    fn saturation(&self) -> f64 {
        self.r * (1.0 + (2.0 / self.c3).powf(1.0 / self.alpha))
    }

    fn kinks(&self, y: &[f64]) -> Vec<f64> {
        let d = dist(self.dim, y, &self.center);
        let mut k = vec![(d - self.r).abs(), d + self.r, (d - self.saturation()).abs()];
        k.push((y[0] - self.halfwidth).abs());
        k.push((y[0] - self.halfwidth - 1.0).abs());
        k
    }
}

fn bump_shape(domain: &Domain, sample: &BoundarySample, r: f64, c3: f64, alpha: f64, r0: f64) -> Result<BumpShape> {
    check_alpha(alpha)?;
    if !(r > 0.0 && r < domain.r_omega) {
        return Err(Error::InvalidParameter(format!("need 0 < r < r_omega = {}, got {r}", domain.r_omega)));
    }
    if !(r0 > 0.0 && r0 < 1.0) {
        return Err(Error::InvalidParameter(format!("r0 must lie in (0,1), got {r0}")));
    }
    let min_c3 = 2.0 / r0.powf(alpha);
    if !(c3 > min_c3) {
        return Err(Error::InvalidParameter(format!("C3 = {c3} must exceed 2/r0^alpha = {min_c3}")));
    }
    Ok(BumpShape {
        dim: domain.dim,
        center: sample.exterior_center(r),
        r,
        c3,
        alpha,
        halfwidth: domain.r0_halfwidth,
    })
}

/// `φ_{x,r}(y) = min{ramp(y₁), C₃ u_α((y - y^r)/r)}` where the ramp is 2 for
/// `y₁ <= R₀`, 1 for `y₁ >= R₀ + 1` and linear in between.
pub fn boundary_bump(
    domain: &Domain,
    sample: &BoundarySample,
    r: f64,
    c3: f64,
    alpha: f64,
    r0: f64,
) -> Result<AnalyticField> {
    let shape = bump_shape(domain, sample, r, c3, alpha, r0)?;
    Ok(AnalyticField::new(domain.dim, Growth::Bounded(2.0), move |y| shape.value(y))
        .with_step(1e-3 * r)
        .with_kinks(move |y| shape.kinks(y)))
}

/// `∫_{z₁ > a} K(x, z) dz` for `a > 0`.
pub fn halfspace_mass(kernel: &Kernel, x: &[f64], a: f64) -> f64 {
    let sigma = kernel.params.sigma;
    let radial = tail_radial_nodes(a, sigma, 40);
    if kernel.dim == 1 {
        return radial.iter().map(|&(z, w)| w * kernel.density(x, &[z])).sum();
    }
    // z₂ = z₁ tan φ
    let rule = gauss_legendre(16);
    let mut angles = Vec::new();
    let half = std::f64::consts::FRAC_PI_2;
    let cuts = [-1.0, -0.9, -0.6, 0.0, 0.6, 0.9, 1.0];
    for w in cuts.windows(2) {
        gl_panel(w[0] * half, w[1] * half, &rule, &mut angles);
    }
    let mut total = 0.0;
    for &(z1, w1) in &radial {
        for &(phi, wp) in &angles {
            let c = phi.cos();
            total += w1 * wp * z1 / (c * c) * kernel.density(x, &[z1, z1 * phi.tan()]);
        }
    }
    total
}

/// Checks `M⁺φ_{x,r} + C₀|∇φ_{x,r}| <= -ε₇` at the probes inside Ω, with
/// `ε₆ = inf ∫_{z₁ > 2R₀+1} K`, `ε₇ = min(C₃, ε₆)`, and the worse one-sided
/// gradient taken at kinks.
#[allow(clippy::too_many_arguments)]
pub fn certify_boundary_bump(
    family: &[Kernel],
    domain: &Domain,
    sample: &BoundarySample,
    r: f64,
    c3: f64,
    alpha: f64,
    radial: &BarrierReport,
    probes: &[Point],
    q: &QuadratureParams,
) -> Result<BarrierReport> {
    let (dim, _) = family_info(family)?;
    if dim != domain.dim {
        return Err(Error::DimensionMismatch { expected: domain.dim, got: dim });
    }
    if radial.kind != BarrierKind::Radial || !radial.pass {
        return Err(Error::CertificationFailed("boundary bump needs a passing radial barrier".into()));
    }
    let r0 = radial.range;
    let c0 = radial.constant("c0")?;
    let shape = bump_shape(domain, sample, r, c3, alpha, r0)?;
    let inside: Vec<Point> = probes.iter().copied().filter(|p| domain.contains(&p[..dim])).collect();
    if inside.is_empty() {
        return Err(Error::EmptyFamily("probes inside the domain"));
    }
    let reach = 2.0 * domain.r0_halfwidth + 1.0;
    let eps6 = family
        .iter()
        .flat_map(|k| inside.iter().map(move |p| halfspace_mass(k, &p[..dim], reach)))
        .fold(f64::INFINITY, f64::min);
    let eps7 = c3.min(eps6);
    let field = boundary_bump(domain, sample, r, c3, alpha, r0)?;
    let records: Vec<ProbeRecord> = inside
        .par_iter()
        .map(|p| {
            let near = shape.kinks(p).into_iter().filter(|&k| k > 0.0).fold(f64::INFINITY, f64::min);
            let scale = near.min(r).max(1e-6 * r);
            let u = field.clone().with_step(STEP_FRACTION * scale);
            let v = extremal_plus(family, &u, &p[..dim], &q.scaled(scale))?;
            let upper = v.value + v.tail_halfwidth + c0 * one_sided_gradient_norm(&u, p);
            Ok(ProbeRecord {
                point: *p,
                scale,
                value: v.value,
                tail_halfwidth: v.tail_halfwidth,
                bound: -eps7,
                slack: -eps7 - upper,
                pair: None,
            })
        })
        .collect::<Result<_>>()?;
    let mut rep = BarrierReport::new(BarrierKind::BoundaryBump, alpha);
    rep.range = r0;
    rep.epsilon = eps7;
    rep.probes = records.len();
    rep.worst_slack = records.iter().map(|p| p.slack).fold(f64::INFINITY, f64::min);
    rep.pass = eps7 > 0.0 && rep.worst_slack >= 0.0;
    if let Some(bad) = records.iter().find(|p| p.slack < 0.0) {
        rep.message = Some(format!("positive excess {} at {:?}", -bad.slack, &bad.point[..dim]));
    }
    for (k, v) in [("c3", c3), ("eps6", eps6), ("eps7", eps7), ("r", r), ("c0", c0), ("r0", r0)] {
        rep.constants.insert(k.into(), v);
    }
    rep.records = records;
    Ok(rep)
}

fn plateau_of(problem: &BellmanProblem) -> Result<f64> {
    if !(problem.gamma > 0.0) {
        return Err(Error::InvalidParameter("the degenerate barrier needs gamma > 0".into()));
    }
    Ok((problem.forcing_sup() + 1.0) / problem.gamma)
}

/// Capped radial barrier `ψ_r = min{(sup‖f‖+1)/γ, C₅ u_α^r}`.
#[derive(Debug, Clone)]
pub struct DegenerateBarrier {
    pub sample: BoundarySample,
    pub r: f64,
    pub alpha: f64,
    pub s0: f64,
    pub c5: f64,
    pub plateau: f64,
    pub field: AnalyticField,
}

impl DegenerateBarrier {
    /// Radius beyond which `ψ_r` equals the plateau.
    pub fn saturation(&self) -> f64 {
        self.r * (1.0 + (self.plateau / self.c5).powf(1.0 / self.alpha))
    }
}

/// Smallest admissible `C₅` is `(sup‖f‖+1)/(s₀^α γ)`; this returns twice it.
pub fn default_degenerate_constant(problem: &BellmanProblem, alpha: f64, s0: f64) -> Result<f64> {
    Ok(2.0 * plateau_of(problem)? / s0.powf(alpha))
}

pub fn degenerate_barrier(
    problem: &BellmanProblem,
    sample: &BoundarySample,
    r: f64,
    c5: f64,
    alpha: f64,
    s0: f64,
) -> Result<DegenerateBarrier> {
    check_alpha(alpha)?;
    let plateau = plateau_of(problem)?;
    let domain = &problem.domain;
    if !(r > 0.0 && r < domain.r_omega) {
        return Err(Error::InvalidParameter(format!("need 0 < r < r_omega = {}, got {r}", domain.r_omega)));
    }
    if !(s0 > 0.0 && s0 < 1.0) {
        return Err(Error::InvalidParameter(format!("s0 must lie in (0,1), got {s0}")));
    }
    let min_c5 = plateau / s0.powf(alpha);
    if !(c5 > min_c5) {
        return Err(Error::InvalidParameter(format!("C5 = {c5} must exceed (sup|f|+1)/(s0^alpha gamma) = {min_c5}")));
    }
    let dim = domain.dim;
    let c = sample.exterior_center(r);
    let sat = r * (1.0 + (plateau / c5).powf(1.0 / alpha));
    let field = AnalyticField::new(dim, Growth::Bounded(plateau), move |y| {
        plateau.min(c5 * pos_pow(dist(dim, y, &c) / r - 1.0, alpha))
    })
    .with_step(1e-3 * r)
    .with_kinks(move |y| {
        let d = dist(dim, y, &c);
        vec![(d - r).abs(), d + r, (d - sat).abs()]
    });
    Ok(DegenerateBarrier { sample: *sample, r, alpha, s0, c5, plateau, field })
}

struct DegenerateProbe {
    lemma_slack: f64,
    lemma_value: f64,
    lemma_pair: (usize, usize),
    halfwidth: f64,
    /// `-I[v] / (r^{-σ} s^{α-σ})` minimized over pairs.
    margin: f64,
}

/// Worst pair of `-I_ab[y, u_α^r] + b_ab·∇u_α^r - 1` and the normalized
/// half-space margin along the probe's own direction.
fn degenerate_probe(
    problem: &BellmanProblem,
    center: Point,
    r: f64,
    alpha: f64,
    y: &Point,
    q: &QuadratureParams,
) -> Result<DegenerateProbe> {
    let dim = problem.dim();
    let sigma = problem.params.sigma;
    let d = dist(dim, y, &center);
    let s = d / r - 1.0;
    let scale = r * s;
    let qs = q.scaled(scale);
    let u = scaled_radial_barrier(dim, alpha, &center, r)?.with_step(STEP_FRACTION * scale);
    let mut n = [0.0; 2];
    for i in 0..dim {
        n[i] = (y[i] - center[i]) / d;
    }
    let v = directional_half_space(dim, alpha, center, n, r)?.with_step(STEP_FRACTION * scale);
    let g = gradient(&u, y);
    let norm = r.powf(-sigma) * s.powf(alpha - sigma);
    let mut out = DegenerateProbe {
        lemma_slack: f64::INFINITY,
        lemma_value: f64::NAN,
        lemma_pair: (0, 0),
        halfwidth: 0.0,
        margin: f64::INFINITY,
    };
    for a in 0..problem.n_a {
        for b in 0..problem.n_b {
            let p = problem.pair(a, b);
            let lin = evaluate_linear(&p.kernel, &u, &y[..dim], &qs)?;
            let drift = p.drift_at(y);
            let lower = -lin.value - lin.tail_halfwidth + drift[0] * g[0] + drift[1] * g[1];
            if lower - 1.0 < out.lemma_slack {
                out.lemma_slack = lower - 1.0;
                out.lemma_value = lower;
                out.lemma_pair = (a, b);
                out.halfwidth = lin.tail_halfwidth;
            }
            let lv = evaluate_linear(&p.kernel, &v, &y[..dim], &qs)?;
            out.margin = out.margin.min(-(lv.value + lv.tail_halfwidth) / norm);
        }
    }
    Ok(out)
}

/// Scans `y^r + (1+s) r n` for `s` in `s_grid ⊂ (0,1)` and reports the
/// largest `s₀` up to which `-I_ab[y, u_α^r] + b_ab·∇u_α^r >= 1` holds for
/// every pair, with `ε₈` half the smallest normalized margin of
/// `-I_ab[y, v_α^r]` on the validated probes.
pub fn degenerate_range(
    problem: &BellmanProblem,
    sample: &BoundarySample,
    r: f64,
    alpha: f64,
    s_grid: &[f64],
    q: &QuadratureParams,
) -> Result<BarrierReport> {
    check_alpha(alpha)?;
    let dim = problem.dim();
    let mut grid: Vec<f64> = s_grid.to_vec();
    if grid.is_empty() || grid.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
        return Err(Error::InvalidParameter("s_grid must be nonempty and lie in (0,1)".into()));
    }
    grid.sort_by(f64::total_cmp);
    let center = sample.exterior_center(r);
    let probes: Vec<(f64, Point)> = grid
        .iter()
        .map(|&s| {
            let t = (1.0 + s) * r;
            (s, [center[0] + t * sample.normal[0], center[1] + t * sample.normal[1]])
        })
        .filter(|(_, y)| problem.domain.contains(&y[..dim]))
        .collect();
    if probes.is_empty() {
        return Err(Error::EmptyFamily("ray probes inside the domain"));
    }
    let results: Vec<DegenerateProbe> = probes
        .par_iter()
        .map(|(_, y)| degenerate_probe(problem, center, r, alpha, y, q))
        .collect::<Result<_>>()?;
    let records: Vec<ProbeRecord> = probes
        .iter()
        .zip(&results)
        .map(|((s, y), d)| ProbeRecord {
            point: *y,
            scale: *s,
            value: d.lemma_value,
            tail_halfwidth: d.halfwidth,
            bound: 1.0,
            slack: d.lemma_slack,
            pair: Some(d.lemma_pair),
        })
        .collect();
    let validated = records.iter().zip(&results).take_while(|(p, d)| p.slack >= 0.0 && d.margin > 0.0).count();
    let mut rep = BarrierReport::new(BarrierKind::DegenerateRange, alpha);
    rep.probes = records.len();
    rep.constants.insert("r".into(), r);
    if validated > 0 {
        rep.range = records[validated - 1].scale;
        rep.epsilon = 0.5 * results[..validated].iter().map(|d| d.margin).fold(f64::INFINITY, f64::min);
        rep.worst_slack = records[..validated].iter().map(|p| p.slack).fold(f64::INFINITY, f64::min);
        rep.pass = true;
        rep.constants.insert("eps8".into(), rep.epsilon);
        if problem.gamma > 0.0 {
            rep.constants.insert("c5".into(), default_degenerate_constant(problem, alpha, rep.range)?);
        }
    } else {
        rep.worst_slack = records[0].slack.min(results[0].margin);
        rep.message = Some(format!(
            "fails at s = {} (pair {:?}, margin {})",
            records[0].scale, records[0].pair, results[0].margin
        ));
    }
    rep.records = records;
    Ok(rep)
}

/// Checks the degenerate barrier at the probes inside Ω: the radial
/// inequality for every pair where `s <= s₀`, and the supersolution
/// inequality `-I_ab[ψ] + b_ab·∇ψ + c_ab ψ + f_ab >= 0` for every pair
/// everywhere.
pub fn certify_degenerate_barrier(
    problem: &BellmanProblem,
    barrier: &DegenerateBarrier,
    probes: &[Point],
    q: &QuadratureParams,
) -> Result<BarrierReport> {
    let dim = problem.dim();
    let center = barrier.sample.exterior_center(barrier.r);
    let sat = barrier.saturation();
    // ray probes guarantee that the radial inequality is exercised
    let n = barrier.sample.normal;
    let ray = (0..4).map(|k| {
        let t = (1.0 + barrier.s0 * 0.5f64.powi(k)) * barrier.r;
        [center[0] + t * n[0], center[1] + t * n[1]]
    });
    let inside: Vec<Point> = probes
        .iter()
        .copied()
        .chain(ray)
        .filter(|p| problem.domain.contains(&p[..dim]))
        .collect();
    let rows: Vec<(ProbeRecord, Option<f64>)> = inside
        .par_iter()
        .map(|y| -> Result<(ProbeRecord, Option<f64>)> {
            let d = dist(dim, y, &center);
            let s = d / barrier.r - 1.0;
            let mut slack = f64::INFINITY;
            let mut pair = None;
            let mut margin = None;
            let mut value = f64::NAN;
            let mut hw = 0.0;
            if s <= barrier.s0 {
                let dp = degenerate_probe(problem, center, barrier.r, barrier.alpha, y, q)?;
                slack = dp.lemma_slack;
                pair = Some(dp.lemma_pair);
                margin = Some(dp.margin);
                value = dp.lemma_value;
                hw = dp.halfwidth;
            }
            let scale = (barrier.r * s).min((d - sat).abs()).max(1e-6 * barrier.r);
            let psi = barrier.field.clone().with_step(STEP_FRACTION * scale);
            let qs = q.scaled(scale);
            let r_val = psi.value(y);
            for a in 0..problem.n_a {
                for b in 0..problem.n_b {
                    let v = problem.pair_value(a, b, &psi, &y[..dim], r_val, &qs)?;
                    let lower = v.value - v.tail_halfwidth;
                    if lower < slack {
                        slack = lower;
                        pair = Some((a, b));
                        value = lower;
                        hw = v.tail_halfwidth;
                    }
                }
            }
            Ok((ProbeRecord { point: *y, scale: s, value, tail_halfwidth: hw, bound: 0.0, slack, pair }, margin))
        })
        .collect::<Result<_>>()?;
    let mut rep = BarrierReport::new(BarrierKind::Degenerate, barrier.alpha);
    rep.range = barrier.s0;
    rep.probes = rows.len();
    let eps8 = 0.5 * rows.iter().filter_map(|r| r.1).fold(f64::INFINITY, f64::min);
    rep.epsilon = if eps8.is_finite() { eps8 } else { 0.0 };
    rep.worst_slack = rows.iter().map(|r| r.0.slack).fold(f64::INFINITY, f64::min);
    let margins_ok = rows.iter().all(|r| r.1.is_none_or(|m| m > 0.0));
    rep.pass = margins_ok && rep.worst_slack >= 0.0;
    if let Some(bad) = rows.iter().find(|r| r.0.slack < 0.0 || r.1.is_some_and(|m| m <= 0.0)) {
        rep.message = Some(format!("violation at {:?} by pair {:?}", &bad.0.point[..dim], bad.0.pair));
    }
    for (k, v) in [
        ("c5", barrier.c5),
        ("plateau", barrier.plateau),
        ("gamma", problem.gamma),
        ("r", barrier.r),
        ("eps8", rep.epsilon),
    ] {
        rep.constants.insert(k.into(), v);
    }
    rep.records = rows.into_iter().map(|r| r.0).collect();
    Ok(rep)
}

#[derive(Debug, Clone, Copy)]
enum Profile {
    Bump { c3: f64, halfwidth: f64 },
    Capped { c5: f64, plateau: f64 },
}

/// Finite infimum (or supremum) over boundary samples and radii of
/// `g(x) ± ρ(3r) ± M b_{x,r}`, equal to `g` outside Ω.
#[derive(Debug, Clone)]
pub struct BarrierEnvelope {
    domain: Domain,
    datum: crate::grid::ExteriorDatum,
    /// `(exterior centre, r, g(x) ± ρ(3r))`.
    pieces: Vec<(Point, f64, f64)>,
    profile: Profile,
    alpha: f64,
    /// `+1` for the supersolution, `-1` for the subsolution.
    sign: f64,
    /// Multiple of the barrier added to `g(x) ± ρ(3r)`.
    pub multiple: f64,
    /// Estimate of `sup_Ω |I(·, ±‖g‖, 0)|`.
    pub operator_bound: f64,
}

impl BarrierEnvelope {
    fn barrier(&self, c: &Point, r: f64, y: &[f64]) -> f64 {
        let dim = self.domain.dim;
        match self.profile {
            Profile::Bump { c3, halfwidth } => BumpShape { dim, center: *c, r, c3, alpha: self.alpha, halfwidth }.value(y),
            Profile::Capped { c5, plateau } => plateau.min(c5 * pos_pow(dist(dim, y, c) / r - 1.0, self.alpha)),
        }
    }

    /// The construction's formula, also on and outside ∂Ω.
    pub fn formula(&self, y: &[f64]) -> f64 {
        let s = self.sign;
        s * self
            .pieces
            .iter()
            .map(|(c, r, base)| s * base + self.multiple * self.barrier(c, *r, y))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }
}

impl Field for BarrierEnvelope {
    fn dim(&self) -> usize {
        self.domain.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        if self.domain.contains(x) {
            self.formula(x)
        } else {
            self.datum.value(x)
        }
    }

    fn fd_step(&self) -> f64 {
        1e-4 * self.pieces.iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
    }

    fn deviation_bound(&self, _x: &[f64], _radius: f64) -> f64 {
        let top = match self.profile {
            Profile::Bump { .. } => 2.0,
            Profile::Capped { plateau, .. } => plateau,
        };
        let base = self.pieces.iter().map(|p| p.2.abs()).fold(self.datum.bound, f64::max);
        2.0 * (base + self.multiple * top)
    }
}

/// A boundary sub- or supersolution on a lattice.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub function: GridFunction,
    pub shape: BarrierEnvelope,
    pub radii: Vec<f64>,
}

/// `sup_x |sup_a inf_b {c_ab(x) t + f_ab(x)}|` over the lattice nodes in Ω
/// for `t = ±‖g‖`: the Bellman operator on the zero function, whose
/// nonlocal and drift parts vanish exactly.
fn zero_function_bound(problem: &BellmanProblem, lattice: &Lattice) -> f64 {
    let g = problem.datum.bound;
    let dim = problem.dim();
    (0..lattice.len())
        .into_par_iter()
        .filter_map(|idx| {
            let x = lattice.node(idx);
            problem.domain.contains(&x[..dim]).then(|| {
                [-g, g]
                    .iter()
                    .map(|&t| {
                        (0..problem.n_a)
                            .map(|a| {
                                (0..problem.n_b)
                                    .map(|b| {
                                        let p = problem.pair(a, b);
                                        p.zeroth.value(&x) * t + p.forcing.value(&x)
                                    })
                                    .fold(f64::INFINITY, f64::min)
                            })
                            .fold(f64::NEG_INFINITY, f64::max)
                            .abs()
                    })
                    .fold(0.0, f64::max)
            })
        })
        .reduce(|| 0.0, f64::max)
}

/// `inf` over boundary samples and `r_grid` of
/// `ρ(3r) + g(x) + M φ_{x,r}`, or the degenerate analogue, from a passing
/// boundary-bump or degenerate certificate.
pub fn build_supersolution(
    problem: &BellmanProblem,
    lattice: &Lattice,
    certificate: &BarrierReport,
    r_grid: &[f64],
) -> Result<Envelope> {
    build(problem, lattice, certificate, r_grid, 1.0)
}

/// Mirror image of [`build_supersolution`]: `sup` of `g(x) - ρ(3r) - M φ`.
pub fn build_subsolution(
    problem: &BellmanProblem,
    lattice: &Lattice,
    certificate: &BarrierReport,
    r_grid: &[f64],
) -> Result<Envelope> {
    build(problem, lattice, certificate, r_grid, -1.0)
}

fn build(
    problem: &BellmanProblem,
    lattice: &Lattice,
    cert: &BarrierReport,
    r_grid: &[f64],
    sign: f64,
) -> Result<Envelope> {
    if !cert.pass {
        return Err(Error::CertificationFailed(format!("{:?} certificate did not pass", cert.kind)));
    }
    let domain = &problem.domain;
    let dim = domain.dim;
    if r_grid.is_empty() || r_grid.iter().any(|&r| !(r > 0.0 && r < domain.r_omega)) {
        return Err(Error::InvalidParameter(format!("radii must lie in (0, r_omega = {})", domain.r_omega)));
    }
    if domain.boundary_samples.is_empty() {
        return Err(Error::EmptyFamily("boundary samples"));
    }
    let g_sup = problem.datum.bound;
    let operator_bound = zero_function_bound(problem, lattice);
    let (multiple, profile) = match cert.kind {
        BarrierKind::BoundaryBump => (
            (2.0 * g_sup).max(operator_bound / cert.epsilon),
            Profile::Bump { c3: cert.constant("c3")?, halfwidth: domain.r0_halfwidth },
        ),
        BarrierKind::Degenerate => {
            let plateau = plateau_of(problem)?;
            (2.0 * g_sup / plateau + 1.0, Profile::Capped { c5: cert.constant("c5")?, plateau })
        }
        k => {
            return Err(Error::InvalidParameter(format!("a {k:?} report cannot build a boundary envelope")));
        }
    };
    let pieces: Vec<(Point, f64, f64)> = domain
        .boundary_samples
        .iter()
        .flat_map(|s| {
            r_grid.iter().map(move |&r| {
                let base = problem.datum.value(&s.point[..dim]) + sign * problem.datum.modulus(3.0 * r);
                (s.exterior_center(r), r, base)
            })
        })
        .collect();
    let shape = BarrierEnvelope {
        domain: domain.clone(),
        datum: problem.datum.clone(),
        pieces,
        profile,
        alpha: cert.alpha,
        sign,
        multiple,
        operator_bound,
    };
    let function = GridFunction::from_fn(lattice.clone(), domain.clone(), problem.datum.clone(), |y| shape.formula(y))?;
    Ok(Envelope { function, shape, radii: r_grid.to_vec() })
}

/// Writes `x1[,x2],value` rows for plotting.
pub fn write_field_csv(u: &dyn Field, points: &[Point], path: &Path) -> Result<()> {
    let dim = u.dim();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    header.push("value".into());
    w.write_record(&header)?;
    for p in points {
        let mut row: Vec<String> = p[..dim].iter().map(|c| c.to_string()).collect();
        row.push(u.value(p).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
