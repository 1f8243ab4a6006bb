//! Bounded domains with a uniform exterior-ball condition.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::quadrature::{point_from, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// Open interval `(lo, hi)` in one dimension.
    Interval { lo: f64, hi: f64 },
    /// Open ball in one or two dimensions.
    Ball { center: [f64; 2], radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Interior,
    /// Inside Ω within one lattice step (or the given band) of the boundary.
    BoundaryProximal,
    Exterior,
}

/// Boundary point `x` with unit normal `n` pointing from the exterior-ball
/// centre into Ω; the exterior centre at radius `r` is `x - r n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub point: Point,
    pub normal: Point,
}

impl BoundarySample {
    pub fn exterior_center(&self, r: f64) -> Point {
        [self.point[0] - r * self.normal[0], self.point[1] - r * self.normal[1]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub dim: usize,
    pub shape: Shape,
    /// Uniform exterior-ball radius, normalized below 1.
    pub r_omega: f64,
    pub boundary_samples: Vec<BoundarySample>,
    /// Ω ⊂ {|y₁| < r0_halfwidth}.
    pub r0_halfwidth: f64,
    /// Ω ⊂ B_{r1_radius - 1}.
    pub r1_radius: f64,
}

pub(crate) fn norm(dim: usize, v: &[f64]) -> f64 {
    v[..dim].iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub(crate) fn dist(dim: usize, a: &[f64], b: &[f64]) -> f64 {
    (0..dim).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

impl Domain {
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidParameter(format!("empty interval ({lo}, {hi})")));
        }
        let samples = vec![
            BoundarySample { point: [lo, 0.0], normal: [1.0, 0.0] },
            BoundarySample { point: [hi, 0.0], normal: [-1.0, 0.0] },
        ];
        Self::finish(1, Shape::Interval { lo, hi }, samples)
    }

    /// Ball of the given centre and radius; `boundary_points` samples are
    /// spread uniformly over the sphere (ignored in 1D).
    pub fn ball(dim: usize, center: &[f64], radius: f64, boundary_points: usize) -> Result<Self> {
        check_dim(dim)?;
        if radius <= 0.0 {
            return Err(Error::InvalidParameter("ball radius must be positive".into()));
        }
        let c = point_from(center);
        let samples = if dim == 1 {
            vec![
                BoundarySample { point: [c[0] - radius, 0.0], normal: [1.0, 0.0] },
                BoundarySample { point: [c[0] + radius, 0.0], normal: [-1.0, 0.0] },
            ]
        } else {
            let m = boundary_points.max(4);
            (0..m)
                .map(|k| {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                    let (s, co) = th.sin_cos();
                    BoundarySample {
                        point: [c[0] + radius * co, c[1] + radius * s],
                        normal: [-co, -s],
                    }
                })
                .collect()
        };
        Self::finish(dim, Shape::Ball { center: c, radius }, samples)
    }

    fn finish(dim: usize, shape: Shape, samples: Vec<BoundarySample>) -> Result<Self> {
        let (r0, r1) = match &shape {
            Shape::Interval { lo, hi } => {
                let m = lo.abs().max(hi.abs());
                (m, m + 1.0)
            }
            Shape::Ball { center, radius } => {
                (center[0].abs() + radius, norm(dim, center) + radius + 1.0)
            }
        };
        Ok(Domain {
            dim,
            shape,
            r_omega: 0.5,
            boundary_samples: samples,
            r0_halfwidth: r0,
            r1_radius: r1,
        })
    }

    pub fn with_r_omega(mut self, r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidParameter(format!("r_omega must lie in (0,1), got {r}")));
        }
        self.r_omega = r;
        Ok(self)
    }

    /// Replaces the boundary cloud, e.g. with samples loaded from CSV.
    pub fn with_samples(mut self, samples: Vec<BoundarySample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyFamily("boundary samples"));
        }
        for s in &samples {
            let n = norm(self.dim, &s.normal);
            if (n - 1.0).abs() > 1e-8 {
                return Err(Error::InvalidParameter(format!("normal of length {n} at {:?}", s.point)));
            }
        }
        self.boundary_samples = samples;
        Ok(self)
    }

    /// Signed distance to the boundary, positive inside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Interval { lo, hi } => (x[0] - lo).min(hi - x[0]),
            Shape::Ball { center, radius } => radius - dist(self.dim, x, center),
        }
    }

    /// Strict membership; points within rounding of ∂Ω count as outside.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) > 1e-12
    }

    pub fn classify(&self, x: &[f64], band: f64) -> Region {
        let d = self.signed_distance(x);
        if d <= 0.0 {
            Region::Exterior
        } else if d <= band {
            Region::BoundaryProximal
        } else {
            Region::Interior
        }
    }

    /// Distance from `x` to the nearest boundary sample point.
    pub fn nearest_sample(&self, x: &[f64]) -> (usize, f64) {
        self.boundary_samples
            .iter()
            .enumerate()
            .map(|(i, s)| (i, dist(self.dim, x, &s.point)))
            .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc })
    }

    /// Checks on a point cloud that each closed exterior ball of radius
    /// `r <= r_omega` meets Ω̄ only at its boundary sample. Returns the
    /// offending `(sample index, radius)` pairs.
    pub fn verify_exterior_balls(&self, radii: &[f64], cloud: usize) -> Vec<(usize, f64)> {
        let mut bad = Vec::new();
        for (i, s) in self.boundary_samples.iter().enumerate() {
            for &r in radii {
                if r > self.r_omega {
                    bad.push((i, r));
                    continue;
                }
                let c = s.exterior_center(r);
                if self.ball_meets_domain(&c, r, &s.point, cloud) {
                    bad.push((i, r));
                }
            }
        }
        bad
    }

    fn ball_meets_domain(&self, c: &Point, r: f64, touch: &Point, cloud: usize) -> bool {
        let tol = 1e-9 * r.max(1.0);
        let check = |p: &[f64]| {
            dist(self.dim, p, touch) > 1e3 * tol && self.signed_distance(p) > -tol
        };
        if self.dim == 1 {
            (0..=cloud).any(|k| {
                let p = [c[0] - r + 2.0 * r * k as f64 / cloud as f64];
                check(&p)
            })
        } else {
            let m = (cloud as f64).sqrt().ceil() as usize + 1;
            (0..=m).any(|i| {
                (0..(4 * m)).any(|j| {
                    let rad = r * i as f64 / m as f64;
                    let th = 2.0 * std::f64::consts::PI * j as f64 / (4 * m) as f64;
                    let p = [c[0] + rad * th.cos(), c[1] + rad * th.sin()];
                    check(&p)
                })
            })
        }
    }

    /// Reads boundary samples from CSV columns `x1[,x2],n1[,n2]`.
    pub fn load_samples_csv(dim: usize, path: &std::path::Path) -> Result<Vec<BoundarySample>> {
        check_dim(dim)?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let mut out = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() < 2 * dim {
                return Err(Error::Io(format!("expected {} columns, got {}", 2 * dim, rec.len())));
            }
            let vals: Vec<f64> = rec
                .iter()
                .take(2 * dim)
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Io(e.to_string())))
                .collect::<Result<_>>()?;
            out.push(BoundarySample {
                point: point_from(&vals[..dim]),
                normal: point_from(&vals[dim..]),
            });
        }
        Ok(out)
    }
}
