//! Measured regularity of grid functions: dyadic oscillation decay and
//! superlevel-set mass against the weak Harnack bound.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry::dist;
use crate::grid::GridFunction;
use crate::quadrature::{point_from, Point};

/// Fewest lattice nodes a ball may hold at the deepest level.
pub const MIN_BALL_NODES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelExtrema {
    pub k: usize,
    pub radius: f64,
    pub nodes: usize,
    pub min: f64,
    pub max: f64,
}

impl LevelExtrema {
    pub fn oscillation(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub alpha_hat: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-oscillation regression.
    pub rms_residual: f64,
    pub levels_used: Vec<usize>,
    /// `2(1 - base^{-alpha_hat})`.
    pub epsilon4_implied: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub center: Point,
    /// Signed distance from the centre to the boundary, positive inside.
    pub center_depth: f64,
    pub base: f64,
    pub levels: Vec<LevelExtrema>,
    pub fit: Option<HolderFit>,
    /// Every oscillation at `k >= 1` vanished.
    pub perfect_regularity: bool,
}

/// Extremes of `w` over the lattice nodes strictly inside
/// `B_{base^{-k}}(center)` for `k = 0..=levels`.
pub fn oscillation_profile(w: &GridFunction, center: &[f64], base: f64, levels: usize) -> Result<HolderReport> {
    let dim = w.lattice().dim;
    if center.len() < dim {
        return Err(Error::DimensionMismatch { expected: dim, got: center.len() });
    }
    if !(base > 1.0) {
        return Err(Error::InvalidParameter("dyadic base must exceed 1".into()));
    }
    let c = point_from(&center[..dim]);
    let mut out = Vec::with_capacity(levels + 1);
    for k in 0..=levels {
        let radius = base.powi(-(k as i32));
        let (mut lo, mut hi, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0);
        for (idx, &v) in w.values().iter().enumerate() {
            if dist(dim, &w.node(idx), &c) < radius {
                lo = lo.min(v);
                hi = hi.max(v);
                n += 1;
            }
        }
        if n < MIN_BALL_NODES {
            return Err(Error::TooCoarse(format!(
                "ball of radius {radius:.3e} at level {k} holds {n} nodes, need {MIN_BALL_NODES}"
            )));
        }
        out.push(LevelExtrema { k, radius, nodes: n, min: lo, max: hi });
    }
    Ok(HolderReport {
        center: c,
        center_depth: w.domain().signed_distance(&c[..dim]),
        base,
        levels: out,
        fit: None,
        perfect_regularity: false,
    })
}

/// Least-squares slope of `log(M_k - m_k)` against `k log(base)` over the
/// levels `k >= 1` with positive oscillation.
pub fn fit_holder_exponent(report: &HolderReport) -> Result<HolderReport> {
    let mut out = report.clone();
    let deep: Vec<&LevelExtrema> = report.levels.iter().filter(|l| l.k >= 1).collect();
    if !deep.is_empty() && deep.iter().all(|l| l.oscillation() == 0.0) {
        out.perfect_regularity = true;
        out.fit = None;
        return Ok(out);
    }
    let used: Vec<&LevelExtrema> = deep.into_iter().filter(|l| l.oscillation() > 0.0).collect();
    if used.len() < 3 {
        return Err(Error::TooCoarse(format!("{} usable levels, need 3", used.len())));
    }
    let lb = report.base.ln();
    let xs: Vec<f64> = used.iter().map(|l| l.k as f64 * lb).collect();
    let ys: Vec<f64> = used.iter().map(|l| l.oscillation().ln()).collect();
    let (slope, intercept, rms) = least_squares(&xs, &ys);
    let alpha_hat = -slope;
    out.fit = Some(HolderFit {
        alpha_hat,
        intercept,
        rms_residual: rms,
        levels_used: used.iter().map(|l| l.k).collect(),
        epsilon4_implied: 2.0 * (1.0 - report.base.powf(-alpha_hat)),
    });
    out.perfect_regularity = false;
    Ok(out)
}

/// `(slope, intercept, rms residual)`.
fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / n).sqrt();
    (slope, intercept, rms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMass {
    pub t: f64,
    /// Lattice measure of `{u > t}` in the ball.
    pub measure: f64,
    /// `C r^n (u(center) + C1 r^σ)^ε t^{-ε}` at the reported `C`.
    pub fitted_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub center: Point,
    pub r: f64,
    pub c1: f64,
    pub sigma: f64,
    pub center_value: f64,
    /// Lattice measure of the whole ball.
    pub ball_measure: f64,
    /// Sorted by threshold.
    pub masses: Vec<ThresholdMass>,
    /// Negated least-squares slope of the log-log data.
    pub epsilon3: f64,
    /// Smallest constant for which the bound with `epsilon3` majorizes
    /// every measurement.
    pub c: f64,
    /// Least-squares intercept constant, before raising to a majorant.
    pub c_least_squares: f64,
    pub majorized: bool,
}

/// Lattice measure of `{u > t} ∩ B_r(center)` per threshold and a
/// log-log fit of `C r^n (u(center) + C1 r^σ)^ε t^{-ε}` to it: `ε` from the
/// least-squares slope over thresholds with positive measure, `C` the
/// least constant majorizing every measurement.
pub fn weak_harnack_check(
    u: &GridFunction,
    center: &[f64],
    r: f64,
    c1: f64,
    sigma: f64,
    thresholds: &[f64],
) -> Result<HarnackReport> {
    let dim = u.lattice().dim;
    if center.len() < dim {
        return Err(Error::DimensionMismatch { expected: dim, got: center.len() });
    }
    if !(r > 0.0) || c1 < 0.0 || !(sigma > 0.0 && sigma < 2.0) {
        return Err(Error::InvalidParameter("need r > 0, C1 >= 0 and 0 < sigma < 2".into()));
    }
    if thresholds.is_empty() || thresholds.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidParameter("thresholds must be positive".into()));
    }
    if let Some(i) = u.values().iter().position(|&v| v < 0.0) {
        return Err(Error::InvalidParameter(format!("u is negative at node {i}")));
    }
    let c = point_from(&center[..dim]);
    let cell = u.h().powi(dim as i32);
    let ball: Vec<f64> = u
        .values()
        .iter()
        .enumerate()
        .filter(|&(idx, _)| dist(dim, &u.node(idx), &c) < r)
        .map(|(_, &v)| v)
        .collect();
    if ball.len() < MIN_BALL_NODES {
        return Err(Error::TooCoarse(format!("ball of radius {r:.3e} holds {} nodes", ball.len())));
    }
    let mut ts = thresholds.to_vec();
    ts.sort_by(f64::total_cmp);
    let measures: Vec<f64> = ts.iter().map(|&t| ball.iter().filter(|&&v| v > t).count() as f64 * cell).collect();
    let center_value = u.value(&c[..dim]);
    let scale = center_value + c1 * r.powf(sigma);
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter("u(center) + C1 r^sigma must be positive".into()));
    }
    let rn = r.powi(dim as i32);
    let (xs, ys): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(&measures)
        .filter(|(_, &m)| m > 0.0)
        .map(|(&t, &m)| ((t / scale).ln(), (m / rn).ln()))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::TooCoarse("fewer than two thresholds with positive measure".into()));
    }
    let (slope, intercept, _) = least_squares(&xs, &ys);
    let epsilon3 = -slope;
    let bound = |cst: f64, t: f64| cst * rn * (scale / t).powf(epsilon3);
    let c_bound = ts
        .iter()
        .zip(&measures)
        .map(|(&t, &m)| m / bound(1.0, t))
        .fold(0.0, f64::max);
    let masses: Vec<ThresholdMass> = ts
        .iter()
        .zip(&measures)
        .map(|(&t, &m)| ThresholdMass { t, measure: m, fitted_bound: bound(c_bound, t) })
        .collect();
    let majorized = masses.iter().all(|m| m.measure <= m.fitted_bound * (1.0 + 1e-12));
    Ok(HarnackReport {
        center: c,
        r,
        c1,
        sigma,
        center_value,
        ball_measure: ball.len() as f64 * cell,
        masses,
        epsilon3,
        c: c_bound,
        c_least_squares: intercept.exp(),
        majorized,
    })
}

/// `k,radius,nodes,min,max,oscillation`.
pub fn write_holder_csv(report: &HolderReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "radius", "nodes", "min", "max", "oscillation"])?;
    for l in &report.levels {
        w.write_record([
            l.k.to_string(),
            l.radius.to_string(),
            l.nodes.to_string(),
            l.min.to_string(),
            l.max.to_string(),
            l.oscillation().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `t,measure,fitted_bound`.
pub fn write_harnack_csv(report: &HarnackReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "measure", "fitted_bound"])?;
    for m in &report.masses {
        w.write_record([m.t.to_string(), m.measure.to_string(), m.fitted_bound.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use crate::grid::{ExteriorDatum, Lattice};

    fn line(f: impl Fn(&[f64]) -> f64) -> GridFunction {
        let d = Domain::interval(-1.0, 1.0).unwrap();
        let lat = Lattice::for_interval(-1.0, 1.0, 4095, 1).unwrap();
        GridFunction::from_fn(lat, d, ExteriorDatum::constant(0.0), f).unwrap()
    }

    #[test]
    fn constant_is_flagged() {
        let w = line(|_| 0.0);
        let rep = fit_holder_exponent(&oscillation_profile(&w, &[0.0], 8.0, 2).unwrap()).unwrap();
        assert!(rep.perfect_regularity && rep.fit.is_none());
    }

    #[test]
    fn linear_profile_has_unit_exponent() {
        let w = line(|x| x[0]);
        let rep = fit_holder_exponent(&oscillation_profile(&w, &[0.0], 4.0, 4).unwrap()).unwrap();
        let a = rep.fit.unwrap().alpha_hat;
        assert!((a - 1.0).abs() < 0.05, "{a}");
    }

    #[test]
    fn too_deep_is_rejected() {
        let w = line(|x| x[0]);
        assert!(matches!(oscillation_profile(&w, &[0.0], 8.0, 6), Err(Error::TooCoarse(_))));
    }

    #[test]
    fn constant_harnack() {
        let w = line(|_| 1.0).with_datum(ExteriorDatum::constant(1.0));
        let rep = weak_harnack_check(&w, &[0.0], 0.5, 0.0, 1.0, &[0.25, 0.5, 2.0]).unwrap();
        assert_eq!(rep.masses[2].measure, 0.0);
        assert!((rep.masses[1].measure - rep.ball_measure).abs() < 1e-15);
        assert!(rep.majorized);
    }
}
