//! Lattice-valued functions with an exterior datum.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::field::Field;
use crate::geometry::{Domain, Shape};
use crate::quadrature::{point_from, Point};

/// Uniform lattice on an axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub dim: usize,
    pub origin: Point,
    pub h: f64,
    pub counts: [usize; 2],
}

impl Lattice {
    pub fn new(dim: usize, origin: &[f64], h: f64, counts: &[usize]) -> Result<Self> {
        check_dim(dim)?;
        if h <= 0.0 {
            return Err(Error::InvalidParameter("lattice spacing must be positive".into()));
        }
        let mut c = [1usize; 2];
        for i in 0..dim {
            if counts[i] < 2 {
                return Err(Error::InvalidParameter("need at least two nodes per axis".into()));
            }
            c[i] = counts[i];
        }
        Ok(Lattice { dim, origin: point_from(&origin[..dim]), h, counts: c })
    }

    /// Lattice with spacing `h` whose nodes include the lower-left corner of
    /// the domain's bounding box, padded by `margin` cells on every side.
    pub fn covering(domain: &Domain, h: f64, margin: usize) -> Result<Self> {
        let (lo, hi) = match &domain.shape {
            Shape::Interval { lo, hi } => ([*lo, 0.0], [*hi, 0.0]),
            Shape::Ball { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
        };
        let mut origin = [0.0; 2];
        let mut counts = [1usize; 2];
        for i in 0..domain.dim {
            let cells = ((hi[i] - lo[i]) / h - 1e-9).ceil() as usize;
            origin[i] = lo[i] - margin as f64 * h;
            counts[i] = cells + 1 + 2 * margin;
        }
        Self::new(domain.dim, &origin[..domain.dim], h, &counts[..domain.dim])
    }

    /// Lattice for `(lo, hi)` with exactly `interior` nodes strictly inside.
    pub fn for_interval(lo: f64, hi: f64, interior: usize, margin: usize) -> Result<Self> {
        let h = (hi - lo) / (interior + 1) as f64;
        Self::new(1, &[lo - margin as f64 * h], h, &[interior + 2 + 2 * margin])
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, idx: usize) -> Point {
        let i = idx % self.counts[0];
        let j = idx / self.counts[0];
        [
            self.origin[0] + i as f64 * self.h,
            if self.dim > 1 { self.origin[1] + j as f64 * self.h } else { 0.0 },
        ]
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + j * self.counts[0]
    }

    /// Multi-index of a node.
    pub fn coords(&self, idx: usize) -> [usize; 2] {
        [idx % self.counts[0], idx / self.counts[0]]
    }

    /// Whether `y` lies in the closed box spanned by the lattice.
    pub fn in_box(&self, y: &[f64]) -> bool {
        (0..self.dim).all(|i| {
            let t = (y[i] - self.origin[i]) / self.h;
            t >= -1e-12 && t <= (self.counts[i] - 1) as f64 + 1e-12
        })
    }

    /// Multilinear interpolation weights of `y` (must be inside the box).
    /// Returns the number of entries used.
    pub fn interp_weights(&self, y: &[f64], out: &mut [(usize, f64); 4]) -> usize {
        let mut base = [0usize; 2];
        let mut frac = [0.0; 2];
        for i in 0..self.dim {
            let t = (y[i] - self.origin[i]) / self.h;
            let cell = (t.floor().max(0.0) as usize).min(self.counts[i] - 2);
            base[i] = cell;
            frac[i] = (t - cell as f64).clamp(0.0, 1.0);
        }
        if self.dim == 1 {
            out[0] = (base[0], 1.0 - frac[0]);
            out[1] = (base[0] + 1, frac[0]);
            2
        } else {
            let mut k = 0;
            for dj in 0..2 {
                for di in 0..2 {
                    let wx = if di == 0 { 1.0 - frac[0] } else { frac[0] };
                    let wy = if dj == 0 { 1.0 - frac[1] } else { frac[1] };
                    out[k] = (self.index(base[0] + di, base[1] + dj), wx * wy);
                    k += 1;
                }
            }
            4
        }
    }
}

type DatumFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type ModulusFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Exterior datum `g` with its sup bound and modulus of continuity.
#[derive(Clone)]
pub struct ExteriorDatum {
    f: DatumFn,
    pub bound: f64,
    modulus: ModulusFn,
    /// `Some(c)` when `g ≡ c`.
    pub constant: Option<f64>,
}

impl std::fmt::Debug for ExteriorDatum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExteriorDatum")
            .field("bound", &self.bound)
            .field("constant", &self.constant)
            .finish()
    }
}

impl ExteriorDatum {
    pub fn constant(c: f64) -> Self {
        ExteriorDatum {
            f: Arc::new(move |_| c),
            bound: c.abs(),
            modulus: Arc::new(|_| 0.0),
            constant: Some(c),
        }
    }

    /// Datum with a Lipschitz modulus `lipschitz * t`.
    pub fn lipschitz(
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        bound: f64,
        lipschitz: f64,
    ) -> Self {
        ExteriorDatum {
            f: Arc::new(f),
            bound,
            modulus: Arc::new(move |t| lipschitz * t),
            constant: None,
        }
    }

    pub fn with_modulus(mut self, m: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.modulus = Arc::new(m);
        self
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn modulus(&self, t: f64) -> f64 {
        (self.modulus)(t)
    }
}

/// Values on every lattice node plus the exterior datum. Nodes outside Ω
/// hold the datum; evaluation off the lattice interpolates inside Ω and
/// calls the datum outside Ω.
#[derive(Clone, Debug)]
pub struct GridFunction {
    lattice: Arc<Lattice>,
    domain: Arc<Domain>,
    datum: ExteriorDatum,
    inside: Arc<Vec<bool>>,
    interior: Arc<Vec<usize>>,
    values: Vec<f64>,
    bound: f64,
}

impl GridFunction {
    pub fn from_fn(
        lattice: Lattice,
        domain: Domain,
        datum: ExteriorDatum,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        if lattice.dim != domain.dim {
            return Err(Error::DimensionMismatch { expected: domain.dim, got: lattice.dim });
        }
        let n = lattice.len();
        let mut inside = vec![false; n];
        let mut interior = Vec::new();
        let mut values = vec![0.0; n];
        for idx in 0..n {
            let p = lattice.node(idx);
            if domain.contains(&p[..lattice.dim]) {
                inside[idx] = true;
                interior.push(idx);
                values[idx] = f(&p[..lattice.dim]);
            } else {
                values[idx] = datum.value(&p[..lattice.dim]);
            }
        }
        if interior.is_empty() {
            return Err(Error::TooCoarse("no lattice node inside the domain".into()));
        }
        let mut g = GridFunction {
            lattice: Arc::new(lattice),
            domain: Arc::new(domain),
            datum,
            inside: Arc::new(inside),
            interior: Arc::new(interior),
            values,
            bound: 0.0,
        };
        g.refresh_bound();
        Ok(g)
    }

    /// Same lattice, domain and datum with new interior values.
    pub fn with_interior(&self, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut g = self.clone();
        for &idx in g.interior.clone().iter() {
            let p = g.lattice.node(idx);
            g.values[idx] = f(&p[..g.lattice.dim]);
        }
        g.refresh_bound();
        g
    }

    /// Same interior values with a different exterior datum.
    pub fn with_datum(&self, datum: ExteriorDatum) -> Self {
        let mut g = self.clone();
        for idx in 0..g.values.len() {
            if !g.inside[idx] {
                let p = g.lattice.node(idx);
                g.values[idx] = datum.value(&p[..g.lattice.dim]);
            }
        }
        g.datum = datum;
        g.refresh_bound();
        g
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn datum(&self) -> &ExteriorDatum {
        &self.datum
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Indices of nodes inside Ω, in lexicographic order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn is_inside(&self, idx: usize) -> bool {
        self.inside[idx]
    }

    pub fn node(&self, idx: usize) -> Point {
        self.lattice.node(idx)
    }

    pub fn h(&self) -> f64 {
        self.lattice.h
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Sets an interior node value. Exterior nodes are immutable.
    pub fn set(&mut self, idx: usize, v: f64) {
        debug_assert!(self.inside[idx]);
        self.values[idx] = v;
        self.bound = self.bound.max(v.abs());
    }

    pub fn refresh_bound(&mut self) {
        let m = self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        self.bound = m.max(self.datum.bound);
    }

    /// Nodewise map of interior values, datum mapped by the caller.
    pub fn map_interior(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut g = self.clone();
        for &idx in self.interior.iter() {
            g.values[idx] = f(self.values[idx]);
        }
        g.refresh_bound();
        g
    }

    /// `-u`, including the datum.
    pub fn negated(&self) -> Self {
        let d = self.datum.clone();
        let datum = ExteriorDatum {
            bound: d.bound,
            modulus: d.modulus.clone(),
            constant: d.constant.map(|c| -c),
            f: Arc::new(move |x| -d.value(x)),
        };
        let mut g = self.clone();
        for v in &mut g.values {
            *v = -*v;
        }
        g.datum = datum;
        g
    }

    /// `u + c`, including the datum.
    pub fn shifted(&self, c: f64) -> Self {
        let d = self.datum.clone();
        let datum = ExteriorDatum {
            bound: d.bound + c.abs(),
            modulus: d.modulus.clone(),
            constant: d.constant.map(|k| k + c),
            f: Arc::new(move |x| d.value(x) + c),
        };
        let mut g = self.clone();
        for v in &mut g.values {
            *v += c;
        }
        g.datum = datum;
        g.refresh_bound();
        g
    }

    /// Pointwise combination of two functions on the same lattice; the
    /// datum is combined pointwise as well.
    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64 + Send + Sync + Copy + 'static) -> Result<Self> {
        if self.lattice != other.lattice {
            return Err(Error::InvalidParameter("grid functions live on different lattices".into()));
        }
        let (a, b) = (self.datum.clone(), other.datum.clone());
        let constant = match (a.constant, b.constant) {
            (Some(x), Some(y)) => Some(f(x, y)),
            _ => None,
        };
        let (ma, mb) = (a.modulus.clone(), b.modulus.clone());
        let bound = {
            let c = [a.bound, -a.bound];
            let d = [b.bound, -b.bound];
            c.iter().flat_map(|x| d.iter().map(move |y| f(*x, *y).abs())).fold(0.0, f64::max)
                .max(a.bound + b.bound)
        };
        let datum = ExteriorDatum {
            f: Arc::new(move |x| f(a.value(x), b.value(x))),
            bound,
            modulus: Arc::new(move |t| ma(t) + mb(t)),
            constant,
        };
        let mut g = self.clone();
        for (i, v) in g.values.iter_mut().enumerate() {
            *v = f(self.values[i], other.values[i]);
        }
        g.datum = datum;
        g.refresh_bound();
        Ok(g)
    }

    /// Interior values only, in [`interior`](Self::interior) order.
    pub fn interior_values(&self) -> Vec<f64> {
        self.interior.iter().map(|&i| self.values[i]).collect()
    }

    pub fn set_interior_values(&mut self, vals: &[f64]) {
        for (k, &idx) in self.interior.clone().iter().enumerate() {
            self.values[idx] = vals[k];
        }
        self.refresh_bound();
    }

    /// Signed distance of each interior node to ∂Ω (positive).
    pub fn interior_depth(&self, idx: usize) -> f64 {
        let p = self.lattice.node(idx);
        self.domain.signed_distance(&p[..self.lattice.dim])
    }
}

impl Field for GridFunction {
    fn dim(&self) -> usize {
        self.lattice.dim
    }

    fn value(&self, y: &[f64]) -> f64 {
        let d = self.lattice.dim;
        if !self.domain.contains(&y[..d]) || !self.lattice.in_box(y) {
            return self.datum.value(&y[..d]);
        }
        let mut w = [(0usize, 0.0); 4];
        let k = self.lattice.interp_weights(y, &mut w);
        w[..k].iter().map(|&(i, c)| c * self.values[i]).sum()
    }

    fn fd_step(&self) -> f64 {
        self.lattice.h
    }

    fn deviation_bound(&self, _x: &[f64], _radius: f64) -> f64 {
        2.0 * self.bound
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.domain.contains(&x[..self.lattice.dim])
    }
}
