//! Lévy kernels, the ellipticity class and numerical checks of its axioms.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{dist, BoundarySample, Domain};
use crate::quadrature::{ball_volume, gauss_legendre, gl_panel, point_from, sphere_area, Point};

/// Constants of the class `L(σ, λ, Λ)` together with μ and the gradient
/// constant `C0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityParams {
    pub sigma: f64,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub mu: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
}

impl EllipticityParams {
    pub fn new(sigma: f64, lambda: f64, big_lambda: f64, mu: f64, c0: f64) -> Result<Self> {
        let p = EllipticityParams { sigma, lambda, big_lambda, mu, c0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma < 2.0) {
            return Err(Error::InvalidParameter(format!("sigma must lie in (0,2), got {}", self.sigma)));
        }
        if !(self.lambda > 0.0 && self.lambda <= self.big_lambda) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < lambda <= Lambda, got {} and {}",
                self.lambda, self.big_lambda
            )));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(Error::InvalidParameter(format!("mu must lie in (0,1], got {}", self.mu)));
        }
        if self.c0 < 0.0 {
            return Err(Error::InvalidParameter("C0 must be nonnegative".into()));
        }
        if self.sigma < 1.0 && self.c0 != 0.0 {
            return Err(Error::InvalidParameter("C0 must vanish when sigma < 1".into()));
        }
        Ok(())
    }

    /// Class constants containing every kernel `A(2-σ)|z|^{-n-σ}` with
    /// `lambda <= A <= big_lambda`.
    ///
    /// The annular mass of such a kernel over `B_{2δ} \ B_δ` is
    /// `A(2-σ)|S^{n-1}|(1-2^{-σ})/σ · δ^{-σ}` and its minimum on the annulus
    /// is `A(2-σ)(2δ)^{-n-σ}`, so the amplitude-Λ member meets the upper
    /// mass bound with equality and the amplitude-λ member meets the lower
    /// bound on the full annulus (μ = 1).
    pub fn fractional_class(dim: usize, sigma: f64, lambda: f64, big_lambda: f64) -> Result<Self> {
        check_dim(dim)?;
        let n = dim as f64;
        let upper = big_lambda * sphere_area(dim) * (1.0 - 2f64.powf(-sigma)) / sigma;
        let lower = lambda * 2f64.powf(-n - sigma);
        Self::new(sigma, lower, upper, 1.0, 0.0)
    }

    pub fn with_c0(mut self, c0: f64) -> Result<Self> {
        self.c0 = c0;
        self.validate()?;
        Ok(self)
    }

    /// Upper mass bound `(2-σ)Λδ^{-σ}` on `B_{2δ} \ B_δ`.
    pub fn mass_bound(&self, delta: f64) -> f64 {
        (2.0 - self.sigma) * self.big_lambda * delta.powf(-self.sigma)
    }

    /// First-moment bound `Λ|1-σ|δ^{1-σ}` on `B_{2δ} \ B_δ`.
    pub fn moment_bound(&self, delta: f64) -> f64 {
        self.big_lambda * (1.0 - self.sigma).abs() * delta.powf(1.0 - self.sigma)
    }

    /// Pointwise lower threshold `(2-σ)λδ^{-n-σ}` on `B_{2δ} \ B_δ`.
    pub fn lower_threshold(&self, dim: usize, delta: f64) -> f64 {
        (2.0 - self.sigma) * self.lambda * delta.powf(-(dim as f64) - self.sigma)
    }
}

/// Descriptive metadata of a kernel's construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelShape {
    Fractional { amplitude: f64 },
    Anisotropic { amplitude: f64, direction: [f64; 2], aperture: f64, floor: f64, symmetric: bool },
    Table { rows: usize },
    Custom,
}

type DensityFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Lévy density `K(x, z)` with its class constants.
#[derive(Clone)]
pub struct Kernel {
    pub dim: usize,
    pub(crate) density: DensityFn,
    pub params: EllipticityParams,
    pub label: String,
    pub shape: KernelShape,
    /// `K(x, ·)` does not depend on `x`.
    pub translation_invariant: bool,
}

impl std::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Kernel")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("shape", &self.shape)
            .field("params", &self.params)
            .finish()
    }
}

fn norm(dim: usize, z: &[f64]) -> f64 {
    z[..dim].iter().map(|c| c * c).sum::<f64>().sqrt()
}

impl Kernel {
    /// `K(z) = A(2-σ)|z|^{-n-σ}`.
    pub fn fractional(dim: usize, params: EllipticityParams, amplitude: f64) -> Result<Self> {
        check_dim(dim)?;
        params.validate()?;
        if !(amplitude > 0.0) {
            return Err(Error::InvalidParameter(format!("amplitude must be positive, got {amplitude}")));
        }
        let c = amplitude * (2.0 - params.sigma);
        let e = -(dim as f64) - params.sigma;
        Ok(Kernel {
            dim,
            density: Arc::new(move |_x, z| c * norm(dim, z).powf(e)),
            params,
            label: format!("fractional(A={amplitude})"),
            shape: KernelShape::Fractional { amplitude },
            translation_invariant: true,
        })
    }

    /// Fractional profile restricted to a cone of half-angle `aperture`
    /// around `direction` (and its reflection when `symmetric`); outside the
    /// cone the profile is multiplied by `floor`.
    pub fn anisotropic(
        dim: usize,
        params: EllipticityParams,
        amplitude: f64,
        direction: &[f64],
        aperture: f64,
        floor: f64,
        symmetric: bool,
    ) -> Result<Self> {
        let base = Self::fractional(dim, params, amplitude)?;
        if !(floor >= 0.0) || !(aperture > 0.0) {
            return Err(Error::InvalidParameter("need aperture > 0 and floor >= 0".into()));
        }
        let d = point_from(direction);
        let dn = norm(dim, &d);
        if dn == 0.0 {
            return Err(Error::InvalidParameter("cone direction must be nonzero".into()));
        }
        let d = [d[0] / dn, d[1] / dn];
        let cos_ap = aperture.cos();
        let inner = base.density.clone();
        Ok(Kernel {
            density: Arc::new(move |x, z| {
                let r = norm(dim, z);
                let c = (0..dim).map(|i| z[i] * d[i]).sum::<f64>() / r;
                let inside = c >= cos_ap - 1e-15 || (symmetric && -c >= cos_ap - 1e-15);
                let k = inner(x, z);
                if inside { k } else { floor * k }
            }),
            label: format!("anisotropic(A={amplitude},aperture={aperture},floor={floor})"),
            shape: KernelShape::Anisotropic { amplitude, direction: d, aperture, floor, symmetric },
            ..base
        })
    }

    /// Fractional profile supported on the half-space `{z·e_axis > 0}`.
    pub fn one_sided(dim: usize, params: EllipticityParams, amplitude: f64, axis: usize) -> Result<Self> {
        let mut d = [0.0; 2];
        d[axis.min(dim - 1)] = 1.0;
        let mut k = Self::anisotropic(dim, params, amplitude, &d[..dim], std::f64::consts::FRAC_PI_2 - 1e-12, 0.0, false)?;
        k.label = format!("one_sided(A={amplitude},axis={axis})");
        Ok(k)
    }

    pub fn from_fn(
        dim: usize,
        params: EllipticityParams,
        label: &str,
        translation_invariant: bool,
        f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_dim(dim)?;
        params.validate()?;
        Ok(Kernel {
            dim,
            density: Arc::new(f),
            params,
            label: label.to_string(),
            shape: KernelShape::Custom,
            translation_invariant,
        })
    }

    /// Tabulated translation-invariant density: rows `(z..., K)`. In 1D the
    /// table is interpolated linearly in `z` (zero outside its range); in 2D
    /// the nearest tabulated offset is used within its spacing.
    pub fn from_table(dim: usize, params: EllipticityParams, label: &str, rows: Vec<Vec<f64>>) -> Result<Self> {
        check_dim(dim)?;
        params.validate()?;
        if rows.is_empty() || rows.iter().any(|r| r.len() != dim + 1) {
            return Err(Error::InvalidParameter(format!("kernel table rows need {} columns", dim + 1)));
        }
        if rows.iter().any(|r| r[dim] < 0.0 || !r[dim].is_finite()) {
            return Err(Error::InvalidParameter("kernel table densities must be finite and nonnegative".into()));
        }
        let n = rows.len();
        let density: DensityFn = if dim == 1 {
            let mut pts: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
            pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            Arc::new(move |_x, z| {
                let t = z[0];
                let k = pts.partition_point(|p| p.0 < t);
                if k == 0 {
                    if (pts[0].0 - t).abs() < 1e-15 { pts[0].1 } else { 0.0 }
                } else if k == pts.len() {
                    0.0
                } else {
                    let (a, b) = (pts[k - 1], pts[k]);
                    a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
                }
            })
        } else {
            let pts: Vec<(Point, f64)> = rows.iter().map(|r| ([r[0], r[1]], r[2])).collect();
            let spacing = pts
                .iter()
                .skip(1)
                .map(|p| dist(2, &p.0, &pts[0].0))
                .fold(f64::INFINITY, f64::min);
            let reach = if spacing.is_finite() { spacing } else { f64::INFINITY };
            Arc::new(move |_x, z| {
                let (best, d) = pts
                    .iter()
                    .map(|p| (p.1, dist(2, &p.0, z)))
                    .fold((0.0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
                if d <= reach { best } else { 0.0 }
            })
        };
        Ok(Kernel {
            dim,
            density,
            params,
            label: label.to_string(),
            shape: KernelShape::Table { rows: n },
            translation_invariant: true,
        })
    }

    /// Loads a tabulated kernel from CSV columns `z1[,z2],density`.
    pub fn from_csv(dim: usize, params: EllipticityParams, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Io(format!("{}: {e}", path.display()))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::from_table(dim, params, &label, rows)
    }

    /// `K(x, z)`.
    pub fn density(&self, x: &[f64], z: &[f64]) -> f64 {
        (self.density)(x, z)
    }

    /// `r^{n+σ} K(r x, r z)`.
    pub fn rescaled(&self, r: f64) -> Self {
        let inner = self.density.clone();
        let dim = self.dim;
        let f = r.powf(dim as f64 + self.params.sigma);
        Kernel {
            density: Arc::new(move |x, z| {
                let xs = [r * x[0], if dim > 1 { r * x[1] } else { 0.0 }];
                let zs = [r * z[0], if dim > 1 { r * z[1] } else { 0.0 }];
                f * inner(&xs[..dim], &zs[..dim])
            }),
            label: format!("{}@scale({r})", self.label),
            ..self.clone()
        }
    }

    /// `c K`.
    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.density.clone();
        Kernel {
            density: Arc::new(move |x, z| c * inner(x, z)),
            label: format!("{}*{c}", self.label),
            ..self.clone()
        }
    }
}

/// Annulus integration resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub radial: usize,
    pub angular: usize,
}

impl Default for PolarGrid {
    fn default() -> Self {
        PolarGrid { radial: 64, angular: 256 }
    }
}

/// Mass and first moment of `K(x,·)` over `{lo <= |z| <= hi}`, restricted
/// to directions where `filter(direction, radius)` holds.
fn annulus_moments(
    kernel: &Kernel,
    x: &[f64],
    lo: f64,
    hi: f64,
    panels: usize,
    order: usize,
    angular: usize,
) -> (f64, Point) {
    let rule = gauss_legendre(order);
    let mut radial = Vec::new();
    // geometric panels resolve the radial decay uniformly across scales
    let ratio = (hi / lo).powf(1.0 / panels as f64);
    for k in 0..panels {
        let a = lo * ratio.powi(k as i32);
        let b = if k + 1 == panels { hi } else { a * ratio };
        gl_panel(a, b, &rule, &mut radial);
    }
    let dirs = angular_rule(kernel.dim, angular);
    let mut mass = 0.0;
    let mut m1 = [0.0; 2];
    for &(r, wr) in &radial {
        let jac = r.powi(kernel.dim as i32 - 1);
        for (d, wd) in &dirs {
            let z = [r * d[0], r * d[1]];
            let w = wr * wd * jac * kernel.density(x, &z[..kernel.dim]);
            mass += w;
            m1[0] += w * z[0];
            m1[1] += w * z[1];
        }
    }
    (mass, m1)
}

/// Midpoint angular rule (avoids placing nodes on cone edges aligned with
/// the axes).
fn angular_rule(dim: usize, m: usize) -> Vec<(Point, f64)> {
    if dim == 1 {
        return vec![([1.0, 0.0], 1.0), ([-1.0, 0.0], 1.0)];
    }
    let w = 2.0 * std::f64::consts::PI / m as f64;
    (0..m)
        .map(|k| {
            let th = w * (k as f64 + 0.5);
            ([th.cos(), th.sin()], w)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusReport {
    pub delta: f64,
    pub mass: f64,
    pub mass_error: f64,
    pub mass_bound: f64,
    pub first_moment: f64,
    pub moment_bound: f64,
    pub lower_set_fraction: f64,
    pub lower_set_stderr: f64,
    pub integrable: bool,
    pub pass_h1: bool,
    pub pass_h2: bool,
    pub pass_h3: bool,
}

fn symmetric_lower_fraction(kernel: &Kernel, x: &[f64], delta: f64, grid: PolarGrid) -> (f64, f64) {
    let thr = kernel.params.lower_threshold(kernel.dim, delta);
    let nr = grid.radial.max(1);
    let dirs: Vec<Point> = if kernel.dim == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        angular_rule(2, grid.angular.max(4)).into_iter().map(|d| d.0).collect()
    };
    let mut total = 0.0;
    let mut hit = 0.0;
    let mut cells = 0usize;
    for i in 0..nr {
        let r = delta * (1.0 + (i as f64 + 0.5) / nr as f64);
        let measure = r.powi(kernel.dim as i32 - 1);
        for d in &dirs {
            let z = [r * d[0], r * d[1]];
            let zm = [-z[0], -z[1]];
            let ok = kernel.density(x, &z[..kernel.dim]) >= thr * (1.0 - 1e-12)
                && kernel.density(x, &zm[..kernel.dim]) >= thr * (1.0 - 1e-12);
            total += measure;
            if ok {
                hit += measure;
            }
            cells += 1;
        }
    }
    let f = hit / total;
    // cells straddling the level-set boundary are the error source; the
    // binomial form gives a conservative scale for it
    let se = (f * (1.0 - f) / cells as f64).sqrt();
    (f, se)
}

fn annulus_report(kernel: &Kernel, x: &[f64], delta: f64, grid: PolarGrid) -> AnnulusReport {
    let p = &kernel.params;
    let coarse = annulus_moments(kernel, x, delta, 2.0 * delta, 4, 8, 128);
    let fine = annulus_moments(kernel, x, delta, 2.0 * delta, 8, 16, 512);
    let mass = fine.0;
    let mass_error = (fine.0 - coarse.0).abs();
    let first_moment = norm(kernel.dim, &fine.1);
    let moment_error = norm(kernel.dim, &[fine.1[0] - coarse.1[0], fine.1[1] - coarse.1[1]]);
    let mass_bound = p.mass_bound(delta);
    let moment_bound = p.moment_bound(delta);
    let integrable = mass.is_finite() && first_moment.is_finite();
    let (lower_set_fraction, lower_set_stderr) = symmetric_lower_fraction(kernel, x, delta, grid);
    let tol_m = mass_error.max(1e-10 * mass_bound);
    let tol_1 = moment_error.max(1e-10 * mass_bound * delta);
    AnnulusReport {
        delta,
        mass,
        mass_error,
        mass_bound,
        first_moment,
        moment_bound,
        lower_set_fraction,
        lower_set_stderr,
        integrable,
        pass_h1: integrable && mass <= mass_bound + tol_m,
        pass_h2: integrable && first_moment <= moment_bound + tol_1,
        pass_h3: integrable && lower_set_fraction >= p.mu - 1e-12,
    }
}

/// Checks the annular mass, first-moment and symmetric lower-set
/// conditions at `x` for each `δ`.
pub fn check_annulus_bounds(kernel: &Kernel, x: &[f64], deltas: &[f64]) -> Result<Vec<AnnulusReport>> {
    if deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidParameter("annulus radii must be positive".into()));
    }
    Ok(deltas.iter().map(|&d| annulus_report(kernel, x, d, PolarGrid::default())).collect())
}

/// Measure fraction of the largest symmetric subset of `B_{2δ} \ B_δ` on
/// which `K(x,·)` exceeds the lower threshold, estimated on a polar grid.
pub fn find_symmetric_lower_set(kernel: &Kernel, x: &[f64], delta: f64, grid: PolarGrid) -> Result<AnnulusReport> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter("annulus radius must be positive".into()));
    }
    Ok(annulus_report(kernel, x, delta, grid))
}

/// `n` dyadic radii starting at `lo`, e.g. spanning `[h, R]`.
pub fn dyadic_radii(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
    (0..n).map(|k| lo * ratio.powi(k as i32)).collect()
}

/// Constants of the boundary-cone condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeConstants {
    pub c4: f64,
    pub lambda: f64,
    pub mu: f64,
    /// Probes with `s` below this are flagged instead of checked.
    pub s_min: f64,
}

/// Fraction of `B_{C} \ B_{C/2}` covered by the slab `{|z·n| <= 1}`.
pub fn slab_fraction(dim: usize, c4: f64) -> f64 {
    if dim == 1 {
        // the slab is [-1, 1]; the annulus is C/2 <= |z| <= C
        let lo = c4 / 2.0;
        return ((1.0f64.min(c4) - lo).max(0.0)) / (c4 - lo);
    }
    let slab_disk = |r: f64| {
        if r <= 1.0 {
            std::f64::consts::PI * r * r
        } else {
            2.0 * ((r * r - 1.0).sqrt() + r * r * (1.0 / r).asin())
        }
    };
    let area = std::f64::consts::PI * (c4 * c4 - c4 * c4 / 4.0);
    (slab_disk(c4) - slab_disk(c4 / 2.0)) / area
}

impl ConeConstants {
    /// Constants derived from the symmetric lower-set condition: the
    /// smallest `C4 >= 2` (on a 1% geometric grid) whose slab fraction is
    /// below `μ/2`, then `λ̄ = λ (C4/2)^{-n-σ}` and `μ̄ = μ/4`.
    pub fn from_symmetric_class(dim: usize, params: &EllipticityParams, s_min: f64) -> Self {
        let mut c4 = 2.0;
        while slab_fraction(dim, c4) >= params.mu / 2.0 {
            c4 *= 1.01;
        }
        ConeConstants {
            c4,
            lambda: params.lambda * (c4 / 2.0).powf(-(dim as f64) - params.sigma),
            mu: params.mu / 4.0,
            s_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub boundary_point: Point,
    pub radius: f64,
    pub probe: Point,
    pub s: f64,
    pub cone_mass: f64,
    pub required_mass: f64,
    pub below_s_min: bool,
    pub pass: bool,
}

/// Kernel mass at `y` over `{z·n_y < -rs} ∩ (B_{C4 rs} \ B_{rs})` against
/// the lower bound `(2-σ)λ̄ μ̄ (rs)^{-n-σ} |B_{rs}|`.
pub fn check_boundary_cone(
    kernel: &Kernel,
    domain: &Domain,
    sample: &BoundarySample,
    r: f64,
    y: &[f64],
    consts: &ConeConstants,
) -> Result<ConeReport> {
    let dim = kernel.dim;
    if dim != domain.dim {
        return Err(Error::DimensionMismatch { expected: domain.dim, got: dim });
    }
    let yr = sample.exterior_center(r);
    let dy = dist(dim, y, &yr);
    if !domain.contains(y) || dy >= 2.0 * r {
        return Err(Error::OutsideDomain(y[..dim].to_vec()));
    }
    let s = dy / r - 1.0;
    let ny = [(y[0] - yr[0]) / dy, if dim > 1 { (y[1] - yr[1]) / dy } else { 0.0 }];
    let rs = r * s;
    let p = &kernel.params;
    let required = (2.0 - p.sigma) * consts.lambda * consts.mu * rs.powf(-(dim as f64) - p.sigma) * ball_volume(dim, rs);
    let mut report = ConeReport {
        boundary_point: sample.point,
        radius: r,
        probe: point_from(&y[..dim]),
        s,
        cone_mass: 0.0,
        required_mass: required,
        below_s_min: s < consts.s_min,
        pass: false,
    };
    if report.below_s_min {
        return Ok(report);
    }
    let rule = gauss_legendre(12);
    let mut radial = Vec::new();
    let panels = 16;
    let ratio = consts.c4.powf(1.0 / panels as f64);
    for k in 0..panels {
        let a = rs * ratio.powi(k);
        gl_panel(a, a * ratio, &rule, &mut radial);
    }
    let mut mass = 0.0;
    if dim == 1 {
        for &(rho, w) in &radial {
            let z = [-rho * ny[0]];
            mass += w * kernel.density(y, &z);
        }
    } else {
        let base = ny[1].atan2(ny[0]) + std::f64::consts::PI;
        let ang_rule = gauss_legendre(8);
        for &(rho, w) in &radial {
            // directions within acos(rs/rho) of -n_y
            let half = (rs / rho).min(1.0).acos();
            let mut ang = Vec::new();
            let pieces = 32;
            for k in 0..pieces {
                let a = base - half + 2.0 * half * k as f64 / pieces as f64;
                gl_panel(a, a + 2.0 * half / pieces as f64, &ang_rule, &mut ang);
            }
            for (th, wt) in ang {
                let z = [rho * th.cos(), rho * th.sin()];
                mass += w * wt * rho * kernel.density(y, &z);
            }
        }
    }
    report.cone_mass = mass;
    report.pass = mass >= required * (1.0 - 1e-9);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(sigma: f64) -> EllipticityParams {
        EllipticityParams::new(sigma, 1.0, 1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn fractional_density_formula() {
        let k = Kernel::fractional(1, params(1.0), 1.0).unwrap();
        assert!((k.density(&[0.0], &[2.0]) - 0.25).abs() < 1e-15);
        assert_eq!(k.density(&[0.0], &[0.7]), k.density(&[0.0], &[-0.7]));
        assert!(Kernel::fractional(1, params(1.0), 0.0).is_err());
    }

    #[test]
    fn class_rejects_gradient_constant_for_small_order() {
        assert!(EllipticityParams::new(0.5, 1.0, 2.0, 1.0, 0.3).is_err());
        assert!(EllipticityParams::new(1.5, 1.0, 2.0, 1.0, 0.3).is_ok());
        assert!(EllipticityParams::new(1.5, 2.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn slab_fraction_limits() {
        assert_eq!(slab_fraction(1, 2.0), 0.0);
        let a = slab_fraction(2, 4.0);
        let b = slab_fraction(2, 40.0);
        assert!(a > b && b > 0.0 && a < 1.0);
    }

    #[test]
    fn table_kernel_interpolates() {
        let rows = vec![vec![-1.0, 1.0], vec![0.5, 2.0], vec![1.0, 4.0]];
        let k = Kernel::from_table(1, params(1.0), "t", rows).unwrap();
        assert!((k.density(&[0.0], &[0.75]) - 3.0).abs() < 1e-14);
        assert_eq!(k.density(&[0.0], &[1.5]), 0.0);
    }

    #[test]
    fn rescaled_fractional_is_invariant() {
        let k = Kernel::fractional(2, params(1.5), 1.0).unwrap();
        let kr = k.rescaled(0.25);
        let z = [0.3, -0.4];
        assert!((kr.density(&[0.0, 0.0], &z) / k.density(&[0.0, 0.0], &z) - 1.0).abs() < 1e-13);
    }
}
