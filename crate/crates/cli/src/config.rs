//! Run configuration: TOML schema, validation and construction of the
//! library objects.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use levy_perron::geometry::Domain;
use levy_perron::grid::{ExteriorDatum, Lattice};
use levy_perron::kernels::{EllipticityParams, Kernel};
use levy_perron::nonlocal_op::{BellmanProblem, Coefficient, PairCoefficients};
use levy_perron::perron::{SolverConfig, SweepMode};
use levy_perron::quadrature::{QuadratureParams, TailMode};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub certify: CertifySpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Interval { lo: f64, hi: f64 },
    Ball {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "default_boundary_points")]
        boundary_points: usize,
    },
}

fn default_boundary_points() -> usize {
    16
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BarrierChoice {
    #[default]
    Bump,
    Degenerate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Fractional {
        amplitude: f64,
    },
    Anisotropic {
        amplitude: f64,
        direction: Vec<f64>,
        aperture: f64,
        #[serde(default)]
        floor: f64,
        #[serde(default)]
        symmetric: bool,
    },
    OneSided {
        amplitude: f64,
        #[serde(default)]
        axis: usize,
    },
    /// CSV with columns `z1[,z2],density`, relative to the config file.
    Table {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefSpec {
    Constant(f64),
    Affine { base: f64, slope: Vec<f64> },
}

impl CoefSpec {
    fn build(&self, dim: usize) -> Result<Coefficient> {
        Ok(match self {
            CoefSpec::Constant(c) => Coefficient::Constant(*c),
            CoefSpec::Affine { base, slope } => {
                ensure!(slope.len() == dim, "coefficient slope needs {dim} components");
                let mut s = [0.0; 2];
                s[..dim].copy_from_slice(slope);
                Coefficient::Affine { base: *base, slope: s }
            }
        })
    }

    fn is_zero(&self) -> bool {
        match self {
            CoefSpec::Constant(c) => *c == 0.0,
            CoefSpec::Affine { base, slope } => *base == 0.0 && slope.iter().all(|s| *s == 0.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    /// Index into `problem.kernels`.
    pub kernel: usize,
    pub c: CoefSpec,
    pub f: CoefSpec,
    #[serde(default)]
    pub drift: Option<Vec<CoefSpec>>,
}

/// `g(x) = clamp(value + slope·x, -cap, cap)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatumSpec {
    #[serde(default)]
    pub value: f64,
    #[serde(default)]
    pub slope: Option<Vec<f64>>,
    #[serde(default)]
    pub cap: Option<f64>,
}

impl Default for DatumSpec {
    fn default() -> Self {
        DatumSpec { value: 0.0, slope: None, cap: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub dim: usize,
    pub domain: DomainSpec,
    #[serde(default)]
    pub r_omega: Option<f64>,
    pub sigma: f64,
    /// Ellipticity constants; give these or `amplitudes`.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default, rename = "Lambda")]
    pub big_lambda: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
    /// Amplitude bounds `[λ, Λ]` of the class `(2-σ)A|z|^{-n-σ}`.
    #[serde(default)]
    pub amplitudes: Option<[f64; 2]>,
    #[serde(default, rename = "C0")]
    pub c0: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub barrier: BarrierChoice,
    #[serde(default)]
    pub g: DatumSpec,
    pub kernels: Vec<KernelSpec>,
    /// `[n_a, n_b]`.
    #[serde(default = "default_index_sets")]
    pub index_sets: [usize; 2],
    /// Row-major in `(a, b)`.
    pub pairs: Vec<PairSpec>,
}

fn default_index_sets() -> [usize; 2] {
    [1, 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailChoice {
    Certified,
    FarConstant,
    Ignore,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Lattice spacing; in 1D `interior` may be given instead.
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub interior: Option<usize>,
    #[serde(default = "default_margin")]
    pub margin: usize,
    #[serde(default = "default_truncation", rename = "R")]
    pub truncation: f64,
    /// Near-field radius; defaults to the power-of-two multiple of h
    /// closest to √h.
    #[serde(default)]
    pub rho: Option<f64>,
    /// Defaults to `far_constant` for constant data, else `certified`.
    #[serde(default)]
    pub tail: Option<TailChoice>,
}

fn default_margin() -> usize {
    2
}

fn default_truncation() -> f64 {
    32.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default)]
    pub mode: SweepMode,
}

fn default_tol() -> f64 {
    1e-9
}

fn default_max_sweeps() -> usize {
    50_000
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec { tol: default_tol(), max_sweeps: default_max_sweeps(), mode: SweepMode::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySpec {
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default = "default_halfspace_radii")]
    pub halfspace_radii: Vec<f64>,
    #[serde(default = "default_radial_radii")]
    pub radial_radii: Vec<f64>,
    /// Dyadic annuli between h and R.
    #[serde(default = "default_annuli")]
    pub annuli: usize,
    #[serde(default = "default_s_min")]
    pub cone_s_min: f64,
    #[serde(default = "default_envelope_radii")]
    pub envelope_radii: Vec<f64>,
    #[serde(default = "default_bump_radius")]
    pub bump_radius: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_s_grid")]
    pub degenerate_s_grid: Vec<f64>,
}

fn default_alpha_grid() -> Vec<f64> {
    (1..20).map(|k| 0.05 * k as f64).collect()
}

fn default_halfspace_radii() -> Vec<f64> {
    (0..6).map(|k| 2f64.powi(k - 3)).collect()
}

fn default_radial_radii() -> Vec<f64> {
    (1..=12).map(|k| 0.5f64.powi(k)).collect()
}

fn default_annuli() -> usize {
    16
}

fn default_s_min() -> f64 {
    0.05
}

fn default_envelope_radii() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.4]
}

fn default_bump_radius() -> f64 {
    0.1
}

fn default_probes() -> usize {
    30
}

fn default_s_grid() -> Vec<f64> {
    (1..=10).map(|k| 0.5f64.powi(k)).collect()
}

impl Default for CertifySpec {
    fn default() -> Self {
        CertifySpec {
            alpha_grid: default_alpha_grid(),
            halfspace_radii: default_halfspace_radii(),
            radial_radii: default_radial_radii(),
            annuli: default_annuli(),
            cone_s_min: default_s_min(),
            envelope_radii: default_envelope_radii(),
            bump_radius: default_bump_radius(),
            probes: default_probes(),
            degenerate_s_grid: default_s_grid(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    /// Defaults to the domain centre.
    #[serde(default)]
    pub centers: Vec<Vec<f64>>,
    #[serde(default = "default_base")]
    pub base: f64,
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Defaults to eight levels spread over the values in each Harnack ball.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_harnack_radius")]
    pub harnack_radius: f64,
    #[serde(default = "default_c1")]
    pub c1: f64,
    /// Centres closer than this to ∂Ω are skipped.
    #[serde(default)]
    pub min_depth: Option<f64>,
}

fn default_base() -> f64 {
    2.0
}

fn default_levels() -> usize {
    3
}

fn default_harnack_radius() -> f64 {
    0.15
}

fn default_c1() -> f64 {
    1.0
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        DiagnosticsSpec {
            centers: Vec::new(),
            base: default_base(),
            levels: default_levels(),
            thresholds: Vec::new(),
            harnack_radius: default_harnack_radius(),
            c1: default_c1(),
            min_depth: None,
        }
    }
}

/// Library objects assembled from a validated config.
pub struct Setup {
    pub problem: BellmanProblem,
    /// One entry per configured kernel.
    pub kernels: Vec<Kernel>,
    pub lattice: Lattice,
    pub q: QuadratureParams,
    pub solver: SolverConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("cannot parse config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for k in &mut cfg.problem.kernels {
            if let KernelSpec::Table { path } = k {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field checks that need no computation.
    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        ensure!(p.dim == 1 || p.dim == 2, "dim must be 1 or 2");
        ensure!(p.sigma > 0.0 && p.sigma < 2.0, "sigma must lie in (0, 2)");
        if p.sigma < 1.0 {
            ensure!(p.c0 == 0.0, "C0 must be 0 when sigma < 1");
            let drift = p.pairs.iter().any(|pr| pr.drift.as_ref().is_some_and(|d| d.iter().any(|c| !c.is_zero())));
            ensure!(!drift, "drift must be absent when sigma < 1");
        }
        if p.barrier == BarrierChoice::Degenerate {
            ensure!(p.gamma > 0.0, "the degenerate barrier needs gamma > 0");
        }
        match (p.amplitudes, p.lambda, p.big_lambda) {
            (Some(_), None, None) | (None, Some(_), Some(_)) => {}
            _ => bail!("give either `amplitudes` or both `lambda` and `Lambda`"),
        }
        ensure!(!p.kernels.is_empty(), "at least one kernel is required");
        ensure!(p.index_sets[0] > 0 && p.index_sets[1] > 0, "index sets must be nonempty");
        ensure!(
            p.pairs.len() == p.index_sets[0] * p.index_sets[1],
            "expected {} pairs for index sets {:?}, got {}",
            p.index_sets[0] * p.index_sets[1],
            p.index_sets,
            p.pairs.len()
        );
        for (i, pr) in p.pairs.iter().enumerate() {
            ensure!(pr.kernel < p.kernels.len(), "pair {i} refers to kernel {} of {}", pr.kernel, p.kernels.len());
        }
        if let Some(s) = &p.g.slope {
            ensure!(s.len() == p.dim, "g.slope needs {} components", p.dim);
            ensure!(p.g.cap.is_some_and(|c| c > 0.0), "an affine g needs a positive cap");
        }
        match (self.grid.h, self.grid.interior) {
            (Some(h), None) => ensure!(h > 0.0, "grid.h must be positive"),
            (None, Some(n)) => {
                ensure!(n >= 1, "grid.interior must be positive");
                ensure!(
                    matches!(p.domain, DomainSpec::Interval { .. }),
                    "grid.interior is only available for intervals"
                );
            }
            _ => bail!("give exactly one of grid.h and grid.interior"),
        }
        ensure!(self.grid.truncation > 0.0, "grid.R must be positive");
        ensure!(self.solver.tol > 0.0, "solver.tol must be positive");
        ensure!(self.diagnostics.base > 1.0, "diagnostics.base must exceed 1");
        ensure!(self.diagnostics.harnack_radius > 0.0, "diagnostics.harnack_radius must be positive");
        Ok(())
    }

    pub fn params(&self) -> Result<EllipticityParams> {
        let p = &self.problem;
        let base = match p.amplitudes {
            Some([lo, hi]) => EllipticityParams::fractional_class(p.dim, p.sigma, lo, hi)?,
            None => EllipticityParams::new(p.sigma, p.lambda.unwrap(), p.big_lambda.unwrap(), p.mu.unwrap_or(1.0), 0.0)?,
        };
        let base = match p.mu {
            Some(mu) if p.amplitudes.is_some() => EllipticityParams::new(base.sigma, base.lambda, base.big_lambda, mu, 0.0)?,
            _ => base,
        };
        Ok(base.with_c0(p.c0)?)
    }

    pub fn domain(&self) -> Result<Domain> {
        let p = &self.problem;
        let d = match &p.domain {
            DomainSpec::Interval { lo, hi } => {
                ensure!(p.dim == 1, "an interval domain needs dim = 1");
                Domain::interval(*lo, *hi)?
            }
            DomainSpec::Ball { center, radius, boundary_points } => {
                ensure!(center.len() == p.dim, "ball centre needs {} components", p.dim);
                Domain::ball(p.dim, center, *radius, *boundary_points)?
            }
        };
        Ok(match p.r_omega {
            Some(r) => d.with_r_omega(r)?,
            None => d,
        })
    }

    pub fn datum(&self) -> ExteriorDatum {
        let g = &self.problem.g;
        match (&g.slope, g.cap) {
            (Some(slope), Some(cap)) => {
                let (v, s) = (g.value, slope.clone());
                let lip = s.iter().map(|c| c * c).sum::<f64>().sqrt();
                ExteriorDatum::lipschitz(
                    move |x| (v + s.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).clamp(-cap, cap),
                    cap,
                    lip,
                )
            }
            _ => ExteriorDatum::constant(g.value),
        }
    }

    fn kernel(&self, spec: &KernelSpec, params: EllipticityParams) -> Result<Kernel> {
        let dim = self.problem.dim;
        Ok(match spec {
            KernelSpec::Fractional { amplitude } => Kernel::fractional(dim, params, *amplitude)?,
            KernelSpec::Anisotropic { amplitude, direction, aperture, floor, symmetric } => {
                ensure!(direction.len() == dim, "kernel direction needs {dim} components");
                Kernel::anisotropic(dim, params, *amplitude, direction, *aperture, *floor, *symmetric)?
            }
            KernelSpec::OneSided { amplitude, axis } => Kernel::one_sided(dim, params, *amplitude, *axis)?,
            KernelSpec::Table { path } => Kernel::from_csv(dim, params, path)
                .with_context(|| format!("cannot load kernel table {}", path.display()))?,
        })
    }

    pub fn setup(&self) -> Result<Setup> {
        let p = &self.problem;
        let params = self.params()?;
        let domain = self.domain()?;
        let datum = self.datum();
        let kernels = p.kernels.iter().map(|k| self.kernel(k, params)).collect::<Result<Vec<_>>>()?;
        let pairs = p
            .pairs
            .iter()
            .map(|pr| {
                let mut pc = PairCoefficients::new(kernels[pr.kernel].clone(), pr.c.build(p.dim)?, pr.f.build(p.dim)?);
                if let Some(d) = &pr.drift {
                    pc = pc.with_drift(d.iter().map(|c| c.build(p.dim)).collect::<Result<Vec<_>>>()?);
                }
                Ok(pc)
            })
            .collect::<Result<Vec<_>>>()?;
        let problem =
            BellmanProblem::new(domain.clone(), datum.clone(), params, p.gamma, p.index_sets[0], p.index_sets[1], pairs)?;
        let lattice = match (self.grid.h, self.grid.interior, &p.domain) {
            (None, Some(n), DomainSpec::Interval { lo, hi }) => Lattice::for_interval(*lo, *hi, n, self.grid.margin)?,
            (Some(h), _, _) => Lattice::covering(&domain, h, self.grid.margin)?,
            _ => bail!("grid spacing is not determined"),
        };
        let mut q = QuadratureParams::balanced(lattice.h, self.grid.truncation);
        if let Some(rho) = self.grid.rho {
            ensure!(rho > 0.0 && rho < self.grid.truncation, "need 0 < rho < R");
            q.inner_radius = rho;
        }
        q.tail_mode = match (self.grid.tail, datum.constant) {
            (Some(TailChoice::Certified), _) | (None, None) => TailMode::Certified,
            (Some(TailChoice::Ignore), _) => TailMode::Ignore,
            (Some(TailChoice::FarConstant), Some(v)) | (None, Some(v)) => TailMode::FarConstant { value: v },
            (Some(TailChoice::FarConstant), None) => bail!("tail = far_constant needs a constant g"),
        };
        let solver = SolverConfig { tol: self.solver.tol, max_sweeps: self.solver.max_sweeps, mode: self.solver.mode };
        Ok(Setup { problem, kernels, lattice, q, solver })
    }
}
