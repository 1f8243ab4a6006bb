//! Functions on `R^n` that the nonlocal operators can act on.

use std::sync::Arc;

use crate::quadrature::Point;

/// A function on `R^n` with the metadata the quadrature needs.
pub trait Field: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Step used by finite-difference gradients and Hessians.
    fn fd_step(&self) -> f64;

    /// Upper bound on `sup_{|z| >= radius} |u(x+z) - u(x)|`-type growth:
    /// must dominate `|u(x+z) - u(x)|` for all `|z| <= radius`.
    fn deviation_bound(&self, x: &[f64], radius: f64) -> f64;

    /// Radii `|z|` around `x` where the function has kinks; the radial
    /// panels are graded towards them.
    fn breakpoints(&self, _x: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    /// Whether `x` is a point where operators may be evaluated.
    fn contains(&self, _x: &[f64]) -> bool {
        true
    }
}

/// `constant + Σ c_i u_i`.
#[derive(Clone)]
pub struct Combination {
    terms: Vec<(f64, Arc<dyn Field>)>,
    constant: f64,
}

impl Combination {
    pub fn new(terms: Vec<(f64, Arc<dyn Field>)>, constant: f64) -> Self {
        assert!(!terms.is_empty(), "combination needs at least one field");
        Combination { terms, constant }
    }

    /// `a - b`.
    pub fn difference(a: Arc<dyn Field>, b: Arc<dyn Field>) -> Self {
        Self::new(vec![(1.0, a), (-1.0, b)], 0.0)
    }

    /// `u + c`.
    pub fn shifted(u: Arc<dyn Field>, c: f64) -> Self {
        Self::new(vec![(1.0, u)], c)
    }
}

impl Field for Combination {
    fn dim(&self) -> usize {
        self.terms[0].1.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(c, u)| c * u.value(x)).sum::<f64>()
    }

    fn fd_step(&self) -> f64 {
        self.terms.iter().map(|t| t.1.fd_step()).fold(f64::INFINITY, f64::min)
    }

    fn deviation_bound(&self, x: &[f64], radius: f64) -> f64 {
        self.terms.iter().map(|(c, u)| c.abs() * u.deviation_bound(x, radius)).sum()
    }

    fn breakpoints(&self, x: &[f64]) -> Vec<f64> {
        self.terms.iter().flat_map(|t| t.1.breakpoints(x)).collect()
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.terms.iter().all(|t| t.1.contains(x))
    }
}

/// How fast an analytic field may grow away from a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Growth {
    /// `|u| <= bound` everywhere.
    Bounded(f64),
    /// `|u(x+z) - u(x)| <= coef |z|^exponent`.
    Holder { coef: f64, exponent: f64 },
}

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type KinkFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Closure-backed field.
#[derive(Clone)]
pub struct AnalyticField {
    dim: usize,
    f: ValueFn,
    step: f64,
    growth: Growth,
    kinks: Option<KinkFn>,
}

impl std::fmt::Debug for AnalyticField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticField")
            .field("dim", &self.dim)
            .field("step", &self.step)
            .field("growth", &self.growth)
            .finish()
    }
}

impl AnalyticField {
    pub fn new(dim: usize, growth: Growth, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        AnalyticField { dim, f: Arc::new(f), step: 1e-4, growth, kinks: None }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_kinks(mut self, k: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.kinks = Some(Arc::new(k));
        self
    }

    pub fn growth(&self) -> Growth {
        self.growth
    }

    /// `x -> -u(x)`.
    pub fn negated(&self) -> Self {
        let f = self.f.clone();
        AnalyticField { f: Arc::new(move |x| -f(x)), ..self.clone() }
    }

    /// `x -> u(x) + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let f = self.f.clone();
        let growth = match self.growth {
            Growth::Bounded(b) => Growth::Bounded(b + c.abs()),
            g => g,
        };
        AnalyticField { f: Arc::new(move |x| f(x) + c), growth, ..self.clone() }
    }

    /// `x -> s u(x)`.
    pub fn scaled(&self, s: f64) -> Self {
        let f = self.f.clone();
        let growth = match self.growth {
            Growth::Bounded(b) => Growth::Bounded(b * s.abs()),
            Growth::Holder { coef, exponent } => Growth::Holder { coef: coef * s.abs(), exponent },
        };
        AnalyticField { f: Arc::new(move |x| s * f(x)), growth, ..self.clone() }
    }

    /// `x -> u(r x)`, with the step and kinks rescaled accordingly.
    pub fn dilated(&self, r: f64) -> Self {
        let f = self.f.clone();
        let dim = self.dim;
        let growth = match self.growth {
            Growth::Holder { coef, exponent } => Growth::Holder { coef: coef * r.powf(exponent), exponent },
            g => g,
        };
        let kinks = self.kinks.clone().map(|k| -> KinkFn {
            Arc::new(move |x: &[f64]| {
                let mut y = [0.0; 2];
                for i in 0..dim {
                    y[i] = r * x[i];
                }
                k(&y[..dim]).into_iter().map(|b| b / r).collect()
            })
        });
        AnalyticField {
            dim,
            f: Arc::new(move |x: &[f64]| {
                let mut y = [0.0; 2];
                for i in 0..dim {
                    y[i] = r * x[i];
                }
                f(&y[..dim])
            }),
            step: self.step / r,
            growth,
            kinks,
        }
    }
}

impl Field for AnalyticField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(&x[..self.dim])
    }

    fn fd_step(&self) -> f64 {
        self.step
    }

    fn deviation_bound(&self, _x: &[f64], radius: f64) -> f64 {
        match self.growth {
            Growth::Bounded(b) => 2.0 * b,
            Growth::Holder { coef, exponent } => coef * radius.powf(exponent),
        }
    }

    fn breakpoints(&self, x: &[f64]) -> Vec<f64> {
        self.kinks.as_ref().map(|k| k(&x[..self.dim])).unwrap_or_default()
    }
}

/// Centered finite-difference gradient.
pub fn gradient(u: &dyn Field, x: &[f64]) -> Point {
    let h = u.fd_step();
    let mut g = [0.0; 2];
    let mut p = [x[0], if u.dim() > 1 { x[1] } else { 0.0 }];
    for i in 0..u.dim() {
        let xi = p[i];
        p[i] = xi + h;
        let up = u.value(&p);
        p[i] = xi - h;
        let dn = u.value(&p);
        p[i] = xi;
        g[i] = (up - dn) / (2.0 * h);
    }
    g
}

/// Largest one-sided difference quotient magnitude; equals the centered
/// gradient norm in smooth regions and takes the worse side at kinks.
pub fn one_sided_gradient_norm(u: &dyn Field, x: &[f64]) -> f64 {
    let h = u.fd_step();
    let dim = u.dim();
    let mut p = [x[0], if dim > 1 { x[1] } else { 0.0 }];
    let c = u.value(&p);
    let mut fwd = [0.0; 2];
    let mut bwd = [0.0; 2];
    for i in 0..dim {
        let xi = p[i];
        p[i] = xi + h;
        fwd[i] = (u.value(&p) - c) / h;
        p[i] = xi - h;
        bwd[i] = (c - u.value(&p)) / h;
        p[i] = xi;
    }
    let mut worst = 0.0f64;
    for mask in 0..(1usize << dim) {
        let n: f64 = (0..dim)
            .map(|i| if mask >> i & 1 == 1 { fwd[i] } else { bwd[i] })
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        worst = worst.max(n);
    }
    worst
}
