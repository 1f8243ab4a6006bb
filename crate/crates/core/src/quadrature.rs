//! Radial/angular quadrature rules for singular Lévy integrals.
//!
//! Integrals over `R^n` are split into a near field `|z| < inner_radius`, a far
//! field `inner_radius <= |z| <= truncation` covered by dyadic radial panels,
//! and a tail `|z| > truncation` handled according to [`TailMode`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 2;

/// Fixed-size point storage; only the first `dim` entries are meaningful.
pub type Point = [f64; MAX_DIM];

pub fn point_from(slice: &[f64]) -> Point {
    let mut p = [0.0; MAX_DIM];
    p[..slice.len()].copy_from_slice(slice);
    p
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * x * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (x * p0 - p1) / (x * x - 1.0);
            let dx = p0 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Appends Gauss-Legendre nodes of `[a, b]` as `(abscissa, weight)` pairs.
pub fn gl_panel(a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>), out: &mut Vec<(f64, f64)>) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for (x, w) in rule.0.iter().zip(&rule.1) {
        out.push((mid + half * x, half * w));
    }
}

/// Integrates `f` over `[a, b]` with `panels` equal Gauss-Legendre panels.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, order: usize, panels: usize) -> f64 {
    let rule = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(order);
    let mut sum = 0.0;
    for k in 0..panels {
        nodes.clear();
        gl_panel(a + k as f64 * width, a + (k + 1) as f64 * width, &rule, &mut nodes);
        sum += nodes.iter().map(|&(x, w)| w * f(x)).sum::<f64>();
    }
    sum
}

/// Handling of the contribution from `|z| > truncation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TailMode {
    /// The tail is dropped from the value and reported as a certified
    /// interval half-width built from the function's deviation bound and
    /// the (H1)/(H2) mass decay of the kernel.
    Certified,
    /// `u(x+z)` is taken equal to `value` for `|z| > truncation`; the tail
    /// mass and first moment of the kernel are integrated explicitly. Exact
    /// when the exterior datum is that constant far away.
    FarConstant { value: f64 },
    /// The tail is dropped and no interval is reported.
    Ignore,
}

/// Quadrature configuration for one operator evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureParams {
    /// Near-field cut ρ; inside it the integrand is replaced by its
    /// second-order Taylor expansion.
    pub inner_radius: f64,
    /// Far-field cut R.
    pub truncation: f64,
    /// Gauss-Legendre points per radial panel.
    pub radial_order: usize,
    /// Equal sub-panels per dyadic annulus.
    pub annulus_splits: usize,
    /// Optional upper bound on the radial panel length.
    pub max_panel: Option<f64>,
    /// Number of angular nodes in two dimensions.
    pub angular_nodes: usize,
    /// Gauss-Legendre points of the near-field radial rule.
    pub near_order: usize,
    /// Geometric grading levels inserted around field breakpoints.
    pub grading_levels: usize,
    pub tail_mode: TailMode,
}

impl Default for QuadratureParams {
    fn default() -> Self {
        QuadratureParams {
            inner_radius: 0.05,
            truncation: 32.0,
            radial_order: 8,
            annulus_splits: 2,
            max_panel: None,
            angular_nodes: 64,
            near_order: 12,
            grading_levels: 0,
            tail_mode: TailMode::Certified,
        }
    }
}

impl QuadratureParams {
    /// Lattice-aligned rule for grid functions of spacing `h`: ρ = 2h and
    /// panels no longer than one lattice cell.
    pub fn for_grid(h: f64, truncation: f64) -> Self {
        QuadratureParams {
            inner_radius: 2.0 * h,
            truncation,
            radial_order: 4,
            annulus_splits: 1,
            max_panel: Some(h),
            ..Default::default()
        }
    }

    /// Like [`for_grid`](Self::for_grid) but with ρ the power-of-two multiple
    /// of `h` closest to `sqrt(h)`, which balances the near-field Taylor error
    /// against the interpolation error seen by the far field.
    pub fn balanced(h: f64, truncation: f64) -> Self {
        let k = (h.sqrt() / h).log2().round().max(1.0);
        QuadratureParams {
            inner_radius: h * 2f64.powf(k),
            ..Self::for_grid(h, truncation)
        }
    }

    /// Rule for analytic fields whose features live at length `scale`.
    pub fn for_scale(scale: f64) -> Self {
        QuadratureParams {
            inner_radius: 0.02 * scale,
            truncation: 1e8 * scale,
            radial_order: 10,
            annulus_splits: 2,
            max_panel: None,
            angular_nodes: 64,
            near_order: 12,
            grading_levels: 40,
            tail_mode: TailMode::Certified,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inner_radius > 0.0 && self.inner_radius < self.truncation) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < inner_radius < truncation, got {} and {}",
                self.inner_radius, self.truncation
            )));
        }
        if self.radial_order == 0 || self.near_order == 0 || self.annulus_splits == 0 {
            return Err(Error::InvalidParameter("quadrature orders must be positive".into()));
        }
        if self.angular_nodes < 4 || !self.angular_nodes.is_multiple_of(2) {
            return Err(Error::InvalidParameter(
                "angular_nodes must be even and at least 4".into(),
            ));
        }
        if let Some(p) = self.max_panel {
            if p <= 0.0 {
                return Err(Error::InvalidParameter("max_panel must be positive".into()));
            }
        }
        Ok(())
    }

    /// All lengths multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        QuadratureParams {
            inner_radius: self.inner_radius * factor,
            truncation: self.truncation * factor,
            max_panel: self.max_panel.map(|p| p * factor),
            ..self.clone()
        }
    }

    /// A strictly finer rule: halved near field, doubled orders and splits.
    pub fn refined(&self) -> Self {
        QuadratureParams {
            inner_radius: 0.5 * self.inner_radius,
            radial_order: 2 * self.radial_order,
            annulus_splits: 2 * self.annulus_splits,
            max_panel: self.max_panel.map(|p| 0.5 * p),
            angular_nodes: 2 * self.angular_nodes,
            near_order: 2 * self.near_order,
            ..self.clone()
        }
    }

    /// Radial panel boundaries on `[inner_radius, truncation]`.
    pub fn radial_breaks(&self, extra: &[f64]) -> Vec<f64> {
        let (lo, hi) = (self.inner_radius, self.truncation);
        let mut breaks = vec![lo];
        let mut r = lo;
        while r < hi {
            let next = (2.0 * r).min(hi);
            for k in 1..=self.annulus_splits {
                breaks.push(r + (next - r) * k as f64 / self.annulus_splits as f64);
            }
            r = next;
        }
        for &b in extra {
            if b > lo && b < hi {
                breaks.push(b);
                for k in 1..=self.grading_levels {
                    let d = b * 0.5f64.powi(k as i32);
                    for c in [b - d, b + d] {
                        if c > lo && c < hi {
                            breaks.push(c);
                        }
                    }
                }
            }
        }
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1e-300));
        if let Some(maxp) = self.max_panel {
            let mut refined = vec![breaks[0]];
            for w in breaks.windows(2) {
                let pieces = ((w[1] - w[0]) / maxp - 1e-9).ceil().max(1.0) as usize;
                for k in 1..=pieces {
                    refined.push(w[0] + (w[1] - w[0]) * k as f64 / pieces as f64);
                }
            }
            breaks = refined;
        }
        breaks
    }

    /// Far-field radial nodes `(r, dr-weight)`.
    pub fn far_radial_nodes(&self, extra: &[f64]) -> Vec<(f64, f64)> {
        let rule = gauss_legendre(self.radial_order);
        let breaks = self.radial_breaks(extra);
        let mut out = Vec::with_capacity(breaks.len() * self.radial_order);
        for w in breaks.windows(2) {
            gl_panel(w[0], w[1], &rule, &mut out);
        }
        out
    }

    /// Near-field radial nodes `(r, dr-weight)` on `[0, inner_radius]`.
    ///
    /// Uses `r = ρ t^p` so that the moments `∫ r^{1-σ} dr` (and `∫ r^{-σ} dr`
    /// when σ < 1) of a homogeneous kernel become polynomial in `t`.
    pub fn near_radial_nodes(&self, sigma: f64) -> Vec<(f64, f64)> {
        let p = if sigma < 1.0 {
            1.0 / (1.0 - sigma)
        } else {
            1.0 / (2.0 - sigma)
        };
        let rule = gauss_legendre(self.near_order);
        let mut t_nodes = Vec::new();
        gl_panel(0.0, 1.0, &rule, &mut t_nodes);
        let rho = self.inner_radius;
        t_nodes
            .into_iter()
            .map(|(t, w)| (rho * t.powf(p), w * rho * p * t.powf(p - 1.0)))
            .collect()
    }
}

/// Radial nodes `(r, dr-weight)` on `[truncation, ∞)` via `r = R t^{-1/σ}`,
/// exact for the mass of a kernel homogeneous of degree `-n-σ`.
pub fn tail_radial_nodes(truncation: f64, sigma: f64, order: usize) -> Vec<(f64, f64)> {
    let rule = gauss_legendre(order);
    let mut t_nodes = Vec::new();
    gl_panel(0.0, 1.0, &rule, &mut t_nodes);
    t_nodes
        .into_iter()
        .map(|(t, w)| {
            let r = truncation * t.powf(-1.0 / sigma);
            (r, w * truncation / sigma * t.powf(-1.0 / sigma - 1.0))
        })
        .collect()
}

/// Unit directions with angular weights: `±1` in 1D, a uniform circle rule in 2D.
pub fn directions(dim: usize, angular_nodes: usize) -> Vec<(Point, f64)> {
    match dim {
        1 => vec![([1.0, 0.0], 1.0), ([-1.0, 0.0], 1.0)],
        _ => {
            let m = angular_nodes;
            let w = 2.0 * std::f64::consts::PI / m as f64;
            (0..m)
                .map(|k| {
                    let th = w * k as f64;
                    ([th.cos(), th.sin()], w)
                })
                .collect()
        }
    }
}

/// Surface measure of the unit sphere `S^{n-1}`.
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => panic!("unsupported dimension"),
    }
}

/// Lebesgue measure of the ball of radius `r`.
pub fn ball_volume(dim: usize, r: f64) -> f64 {
    sphere_area(dim) * r.powi(dim as i32) / dim as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre(5);
        let s: f64 = rule.0.iter().zip(&rule.1).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        let total: f64 = rule.1.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn near_nodes_integrate_singular_moments() {
        // the most singular moment is integrated exactly, the other closely
        for sigma in [0.3, 0.8, 1.0, 1.5, 1.9] {
            let q = QuadratureParams { inner_radius: 0.1, ..Default::default() };
            let nodes = q.near_radial_nodes(sigma);
            let moment = |beta: f64| nodes.iter().map(|&(r, w)| w * r.powf(beta)).sum::<f64>();
            let exact = |beta: f64| 0.1f64.powf(beta + 1.0) / (beta + 1.0);
            let second = moment(1.0 - sigma);
            let tol = if sigma < 1.0 { 1e-5 } else { 1e-12 };
            assert!((second - exact(1.0 - sigma)).abs() < tol * exact(1.0 - sigma), "sigma {sigma}");
            if sigma < 1.0 {
                let first = moment(-sigma);
                assert!((first - exact(-sigma)).abs() < 1e-12 * exact(-sigma), "sigma {sigma}");
            }
        }
    }

    #[test]
    fn tail_nodes_integrate_power_tail() {
        // ∫_R^∞ r^{-1-σ} dr = R^{-σ}/σ
        for sigma in [0.5, 1.0, 1.5] {
            let s: f64 = tail_radial_nodes(3.0, sigma, 6).iter().map(|&(r, w)| w * r.powf(-1.0 - sigma)).sum();
            let exact = 3f64.powf(-sigma) / sigma;
            assert!((s - exact).abs() < 1e-13 * exact);
        }
    }

    #[test]
    fn grid_breaks_are_lattice_aligned() {
        let h = 1.0 / 64.0;
        let q = QuadratureParams::for_grid(h, 2.0);
        for b in q.radial_breaks(&[1.0]) {
            let k = b / h;
            assert!((k - k.round()).abs() < 1e-9, "break {b} not aligned");
        }
    }

    #[test]
    fn balanced_radius_is_power_of_two_multiple() {
        let h = 2f64.powi(-9);
        let q = QuadratureParams::balanced(h, 32.0);
        let k = (q.inner_radius / h).log2();
        assert!((k - k.round()).abs() < 1e-12);
        assert!(q.inner_radius >= 2.0 * h);
    }
}
