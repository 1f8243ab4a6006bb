//! Discrete Perron iteration: monotone pointwise updates from a subsolution,
//! clamped by a supersolution.
//!
//! Each pair `(a, b)` of the Bellman-Isaacs operator at an interior node is
//! assembled once into an affine row `diag·r + Σ off_j u_j + constant` over
//! the interior nodes, using the same point functional as
//! [`evaluate_linear`](crate::nonlocal_op::evaluate_linear), so the discrete
//! residual coincides with the operator evaluated on the grid function.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barriers::Envelope;
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::grid::{ExteriorDatum, GridFunction, Lattice};
use crate::nonlocal_op::{emit_linear, BellmanProblem, Sink};
use crate::quadrature::{Point, QuadratureParams};

/// Distributes a point functional onto interior lattice nodes; points and
/// nodes outside Ω contribute the datum as a constant.
struct StencilSink<'a> {
    lattice: &'a Lattice,
    domain: &'a Domain,
    datum: &'a ExteriorDatum,
    inside: &'a [bool],
    dense: Vec<f64>,
    touched: Vec<usize>,
    constant: f64,
    scale: f64,
}

impl StencilSink<'_> {
    fn add(&mut self, idx: usize, c: f64) {
        if self.dense[idx] == 0.0 {
            self.touched.push(idx);
        }
        self.dense[idx] += c;
        // keep the index even if the sum cancels to zero
        if self.dense[idx] == 0.0 {
            self.dense[idx] = f64::MIN_POSITIVE;
        }
    }
}

impl Sink for StencilSink<'_> {
    fn point(&mut self, y: &Point, coef: f64) {
        let c = coef * self.scale;
        let dim = self.lattice.dim;
        if !self.domain.contains(&y[..dim]) || !self.lattice.in_box(y) {
            self.constant += c * self.datum.value(&y[..dim]);
            return;
        }
        let mut w = [(0usize, 0.0); 4];
        let k = self.lattice.interp_weights(y, &mut w);
        for &(idx, wt) in &w[..k] {
            if wt == 0.0 {
                continue;
            }
            if self.inside[idx] {
                self.add(idx, c * wt);
            } else {
                let p = self.lattice.node(idx);
                self.constant += c * wt * self.datum.value(&p[..dim]);
            }
        }
    }

    fn constant(&mut self, c: f64) {
        self.constant += c * self.scale;
    }
}

/// One pair's affine row at one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    /// Coefficient of the node's own value, including `c_ab(x)`.
    pub diag: f64,
    /// Coefficients of the other interior nodes.
    pub off: Vec<(usize, f64)>,
    /// Datum contributions plus `f_ab(x)`.
    pub constant: f64,
}

impl PairRow {
    fn environment(&self, values: &[f64]) -> f64 {
        self.constant + self.off.iter().map(|&(j, c)| c * values[j]).sum::<f64>()
    }
}

/// Affine rows of every pair at every interior node.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    n_b: usize,
    nodes: Vec<usize>,
    rows: Vec<Vec<PairRow>>,
}

fn assemble_row(problem: &BellmanProblem, template: &GridFunction, node: usize, q: &QuadratureParams) -> Result<Vec<PairRow>> {
    let lattice = template.lattice();
    let dim = lattice.dim;
    let inside: Vec<bool> = (0..lattice.len()).map(|i| template.is_inside(i)).collect();
    let x = lattice.node(node);
    let h = lattice.h;
    let mut out = Vec::with_capacity(problem.pairs.len());
    for p in &problem.pairs {
        let mut sink = StencilSink {
            lattice,
            domain: template.domain(),
            datum: template.datum(),
            inside: &inside,
            dense: vec![0.0; lattice.len()],
            touched: Vec::new(),
            constant: 0.0,
            scale: -1.0,
        };
        emit_linear(&p.kernel, &x, h, &[], q, &mut sink)?;
        if p.drift.is_some() {
            let b = p.drift_at(&x);
            sink.scale = 1.0;
            for i in 0..dim {
                let mut e = [0.0; 2];
                e[i] = h;
                let c = b[i] / (2.0 * h);
                sink.point(&[x[0] + e[0], x[1] + e[1]], c);
                sink.point(&[x[0] - e[0], x[1] - e[1]], -c);
            }
        }
        let mut touched = std::mem::take(&mut sink.touched);
        touched.sort_unstable();
        let mut diag = p.zeroth.value(&x);
        let mut off = Vec::with_capacity(touched.len());
        for j in touched {
            let c = if sink.dense[j] == f64::MIN_POSITIVE { 0.0 } else { sink.dense[j] };
            if j == node {
                diag += c;
            } else if c != 0.0 {
                off.push((j, c));
            }
        }
        out.push(PairRow { diag, off, constant: sink.constant + p.forcing.value(&x) });
    }
    Ok(out)
}

/// `sup_a inf_b (diag r + env)` and the active pair.
fn scalar_value(rows: &[PairRow], env: &[f64], n_b: usize, r: f64) -> (f64, (usize, usize)) {
    let mut best = f64::NEG_INFINITY;
    let mut active = (0, 0);
    for (a, chunk) in rows.chunks(n_b).enumerate() {
        let mut inner = f64::INFINITY;
        let mut arg = 0;
        for (b, row) in chunk.iter().enumerate() {
            let v = row.diag * r + env[a * n_b + b];
            if v < inner {
                inner = v;
                arg = b;
            }
        }
        if inner > best {
            best = inner;
            active = (a, arg);
        }
    }
    (best, active)
}

/// Root of the nondecreasing piecewise-affine `r ↦ sup_a inf_b (diag r + env)`.
fn solve_scalar(
    rows: &[PairRow],
    env: &[f64],
    n_b: usize,
    node: usize,
    start: f64,
    width: f64,
    tol: f64,
) -> Result<(f64, (usize, usize))> {
    let g = |r: f64| scalar_value(rows, env, n_b, r);
    let width = if width > 0.0 { width } else { 1.0 };
    let (mut lo, mut hi) = (start - width, start + width);
    let mut step = width;
    let mut expansions = 0;
    while g(lo).0 > 0.0 || g(hi).0 < 0.0 {
        if expansions == 60 {
            return Err(Error::BracketFailure { node, lo, hi });
        }
        step *= 2.0;
        if g(lo).0 > 0.0 {
            lo -= step;
        }
        if g(hi).0 < 0.0 {
            hi += step;
        }
        expansions += 1;
    }
    let target = (tol / 10.0).max(4.0 * f64::EPSILON * lo.abs().max(hi.abs()));
    while hi - lo > target {
        let mid = 0.5 * (lo + hi);
        if g(mid).0 < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    let (_, (a, b)) = g(mid);
    let row = &rows[a * n_b + b];
    let slack = hi - lo;
    if row.diag > 0.0 {
        let r = -env[a * n_b + b] / row.diag;
        if r >= lo - slack && r <= hi + slack {
            let (_, act) = g(r);
            return Ok((r, act));
        }
    }
    Ok((mid, (a, b)))
}

impl DiscreteOperator {
    /// Assembles rows at every interior node of `template`'s lattice.
    pub fn assemble(problem: &BellmanProblem, template: &GridFunction, q: &QuadratureParams) -> Result<Self> {
        if template.lattice().dim != problem.dim() {
            return Err(Error::DimensionMismatch { expected: problem.dim(), got: template.lattice().dim });
        }
        let nodes = template.interior().to_vec();
        let rows = nodes
            .par_iter()
            .map(|&n| assemble_row(problem, template, n, q))
            .collect::<Result<Vec<_>>>()?;
        Ok(DiscreteOperator { n_b: problem.n_b, nodes, rows })
    }

    /// Interior lattice indices in sweep order.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn rows(&self, k: usize) -> &[PairRow] {
        &self.rows[k]
    }

    fn environment(&self, k: usize, values: &[f64]) -> Vec<f64> {
        self.rows[k].iter().map(|r| r.environment(values)).collect()
    }

    /// Residual and active pair at the `k`-th interior node.
    pub fn residual_at(&self, k: usize, values: &[f64]) -> (f64, (usize, usize)) {
        let env = self.environment(k, values);
        scalar_value(&self.rows[k], &env, self.n_b, values[self.nodes[k]])
    }

    pub fn residuals(&self, u: &GridFunction) -> Vec<(f64, (usize, usize))> {
        let v = u.values();
        (0..self.nodes.len()).into_par_iter().map(|k| self.residual_at(k, v)).collect()
    }

    /// The value at the `k`-th interior node that zeroes its residual with
    /// every other value frozen.
    pub fn update_at(&self, k: usize, values: &[f64], width: f64, tol: f64) -> Result<(f64, (usize, usize))> {
        let env = self.environment(k, values);
        let node = self.nodes[k];
        solve_scalar(&self.rows[k], &env, self.n_b, node, values[node], width, tol)
    }

    /// One sweep over the interior nodes in lexicographic order, clamped
    /// above by `upper` when given.
    pub fn sweep(&self, u: &mut GridFunction, upper: Option<&GridFunction>, mode: SweepMode, tol: f64) -> Result<SweepStats> {
        let width = 2.0 * u.bound().max(upper.map_or(0.0, |s| s.bound()));
        let mut stats = SweepStats::default();
        let record = |stats: &mut SweepStats, old: f64, new: f64, res: f64, clamped: bool| {
            stats.max_delta = stats.max_delta.max((new - old).abs());
            stats.max_residual = stats.max_residual.max(res.abs());
            if new < old - 1e-13 * old.abs().max(1.0) {
                stats.decreased += 1;
            }
            if clamped {
                stats.clamps += 1;
            }
        };
        match mode {
            SweepMode::GaussSeidel => {
                for k in 0..self.nodes.len() {
                    let node = self.nodes[k];
                    let values = u.values();
                    let old = values[node];
                    let (res, _) = self.residual_at(k, values);
                    let (mut new, _) = self.update_at(k, values, width, tol)?;
                    let mut clamped = false;
                    if let Some(s) = upper {
                        if new > s.values()[node] {
                            new = s.values()[node];
                            clamped = true;
                        }
                    }
                    u.set(node, new);
                    record(&mut stats, old, new, res, clamped);
                }
            }
            SweepMode::Jacobi => {
                let values = u.values().to_vec();
                let updates: Vec<(f64, f64)> = (0..self.nodes.len())
                    .into_par_iter()
                    .map(|k| {
                        let (res, _) = self.residual_at(k, &values);
                        let (new, _) = self.update_at(k, &values, width, tol)?;
                        Ok((res, new))
                    })
                    .collect::<Result<_>>()?;
                for (k, (res, mut new)) in updates.into_iter().enumerate() {
                    let node = self.nodes[k];
                    let mut clamped = false;
                    if let Some(s) = upper {
                        if new > s.values()[node] {
                            new = s.values()[node];
                            clamped = true;
                        }
                    }
                    u.set(node, new);
                    record(&mut stats, values[node], new, res, clamped);
                }
            }
        }
        u.refresh_bound();
        Ok(stats)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    #[default]
    #[serde(alias = "gauss-seidel")]
    GaussSeidel,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepStats {
    pub max_delta: f64,
    /// Largest residual seen before each node's update.
    pub max_residual: f64,
    /// Nodes whose value went down.
    pub decreased: usize,
    /// Nodes capped by the supersolution.
    pub clamps: usize,
}

/// Value at an interior lattice node that zeroes the Bellman-Isaacs residual
/// with `u` frozen elsewhere.
pub fn pointwise_update(problem: &BellmanProblem, u: &GridFunction, node: usize, q: &QuadratureParams, tol: f64) -> Result<f64> {
    if !u.is_inside(node) {
        return Err(Error::OutsideDomain(u.node(node)[..u.lattice().dim].to_vec()));
    }
    let rows = assemble_row(problem, u, node, q)?;
    let env: Vec<f64> = rows.iter().map(|r| r.environment(u.values())).collect();
    let start = u.values()[node];
    Ok(solve_scalar(&rows, &env, problem.n_b, node, start, 2.0 * u.bound(), tol)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_sweeps: usize,
    pub mode: SweepMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-8, max_sweeps: 20_000, mode: SweepMode::GaussSeidel }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// Largest pre-update residual of each sweep.
    pub residual_history: Vec<f64>,
    pub delta_history: Vec<f64>,
    /// Iterates never decreased at any node.
    pub monotone: bool,
    /// `sub <= u <= super` held after every sweep.
    pub sandwich_ok: bool,
    pub clamps: usize,
    /// Residual of the returned function at every interior node.
    pub final_residual: f64,
    pub active_indices: Vec<(usize, usize)>,
    pub mode: SweepMode,
    pub runtime_seconds: f64,
}

fn same_exterior(a: &GridFunction, b: &GridFunction) -> Result<()> {
    if a.lattice() != b.lattice() {
        return Err(Error::InvalidParameter("sub and super live on different lattices".into()));
    }
    for (i, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
        if !a.is_inside(i) && (x - y).abs() > 1e-12 * x.abs().max(1.0) {
            return Err(Error::InvalidParameter(format!("sub and super differ outside the domain at node {i}")));
        }
    }
    Ok(())
}

fn between(lo: &GridFunction, u: &GridFunction, hi: &GridFunction) -> bool {
    u.interior().iter().all(|&i| {
        let v = u.values()[i];
        let slack = 1e-12 * v.abs().max(1.0);
        lo.values()[i] <= v + slack && v <= hi.values()[i] + slack
    })
}

/// Sweeps from `sub` until the largest change drops below `config.tol`.
/// Non-convergence returns the last iterate with `converged = false`.
pub fn discrete_perron_solve(
    problem: &BellmanProblem,
    sub: &GridFunction,
    sup: &GridFunction,
    q: &QuadratureParams,
    config: &SolverConfig,
) -> Result<(GridFunction, SolveReport)> {
    let start = Instant::now();
    same_exterior(sub, sup)?;
    if !between(sub, sub, sup) {
        return Err(Error::InvalidParameter("subsolution exceeds supersolution somewhere".into()));
    }
    if !(config.tol > 0.0) || config.max_sweeps == 0 {
        return Err(Error::InvalidParameter("need tol > 0 and max_sweeps > 0".into()));
    }
    let op = DiscreteOperator::assemble(problem, sub, q)?;
    let mut u = sub.clone();
    let mut report = SolveReport {
        iterations: 0,
        converged: false,
        residual_history: Vec::new(),
        delta_history: Vec::new(),
        monotone: true,
        sandwich_ok: true,
        clamps: 0,
        final_residual: f64::NAN,
        active_indices: Vec::new(),
        mode: config.mode,
        runtime_seconds: 0.0,
    };
    for _ in 0..config.max_sweeps {
        let stats = op.sweep(&mut u, Some(sup), config.mode, config.tol)?;
        report.iterations += 1;
        report.residual_history.push(stats.max_residual);
        report.delta_history.push(stats.max_delta);
        report.monotone &= stats.decreased == 0;
        report.sandwich_ok &= between(sub, &u, sup);
        report.clamps += stats.clamps;
        if stats.max_delta < config.tol {
            report.converged = true;
            break;
        }
    }
    let res = op.residuals(&u);
    report.final_residual = res.iter().map(|r| r.0.abs()).fold(0.0, f64::max);
    report.active_indices = res.iter().map(|r| r.1).collect();
    report.runtime_seconds = start.elapsed().as_secs_f64();
    Ok((u, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residuals: Vec<f64>,
    pub worst: f64,
    pub worst_node: Point,
    pub violations: usize,
    pub tolerance: f64,
    pub pass: bool,
}

fn residual_report(problem: &BellmanProblem, u: &GridFunction, q: &QuadratureParams, tol: f64, sign: f64) -> Result<ResidualReport> {
    let op = DiscreteOperator::assemble(problem, u, q)?;
    let residuals: Vec<f64> = op.residuals(u).into_iter().map(|r| r.0).collect();
    // sign = +1: subsolution (residual <= tol); -1: supersolution
    let (k, worst) = residuals
        .iter()
        .enumerate()
        .map(|(k, r)| (k, sign * r))
        .fold((0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
    let violations = residuals.iter().filter(|&&r| sign * r > tol).count();
    Ok(ResidualReport {
        worst: sign * worst,
        worst_node: u.node(op.nodes[k]),
        violations,
        tolerance: tol,
        pass: violations == 0,
        residuals,
    })
}

/// Residual `<= tol` at every interior node.
pub fn check_discrete_subsolution(problem: &BellmanProblem, u: &GridFunction, q: &QuadratureParams, tol: f64) -> Result<ResidualReport> {
    residual_report(problem, u, q, tol, 1.0)
}

/// Residual `>= -tol` at every interior node.
pub fn check_discrete_supersolution(problem: &BellmanProblem, u: &GridFunction, q: &QuadratureParams, tol: f64) -> Result<ResidualReport> {
    residual_report(problem, u, q, tol, -1.0)
}

/// Writes `x1[,x2],value,residual,a,b` for every interior node.
pub fn write_solution_csv(u: &GridFunction, residuals: &[(f64, (usize, usize))], path: &Path) -> Result<()> {
    let dim = u.lattice().dim;
    if residuals.len() != u.interior().len() {
        return Err(Error::InvalidParameter("one residual per interior node expected".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    header.extend(["value", "residual", "a", "b"].map(String::from));
    w.write_record(&header)?;
    for (&idx, &(res, (a, b))) in u.interior().iter().zip(residuals) {
        let p = u.node(idx);
        let mut row: Vec<String> = p[..dim].iter().map(|c| c.to_string()).collect();
        row.push(u.values()[idx].to_string());
        row.push(res.to_string());
        row.push(a.to_string());
        row.push(b.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Distance from the datum at a boundary-adjacent node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttainmentRow {
    pub node: Point,
    /// Nearest boundary sample.
    pub sample: Point,
    pub distance: f64,
    /// `|w(node) - g(sample)|`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttainmentReport {
    pub rows: Vec<AttainmentRow>,
    /// Largest difference quotient of either envelope between an adjacent
    /// node and its sample, plus the Lipschitz constant of `g`.
    pub lip_slack: f64,
    /// `ρ(3 r_min)` of the datum.
    pub modulus_term: f64,
    /// `ρ(3 r_min) + 2h·lip_slack`.
    pub bound: f64,
    pub worst_gap: f64,
    /// `sub <= w <= sup` at every node.
    pub sandwich: bool,
    pub pass: bool,
}

/// Sandwich and boundary attainment of a solved `w` between two envelopes
/// built with the same radii: `|w - g| <= ρ(3 r_min) + 2h·lip_slack` at every
/// interior node with a lattice neighbour outside Ω.
pub fn check_boundary_attainment(
    problem: &BellmanProblem,
    w: &GridFunction,
    sub: &Envelope,
    sup: &Envelope,
) -> Result<AttainmentReport> {
    same_exterior(w, &sub.function)?;
    same_exterior(w, &sup.function)?;
    let domain = &problem.domain;
    if domain.boundary_samples.is_empty() {
        return Err(Error::EmptyFamily("boundary samples"));
    }
    let dim = domain.dim;
    let lat = w.lattice();
    let r_min = sup.radii.iter().chain(&sub.radii).copied().fold(f64::INFINITY, f64::min);
    let adjacent = w.interior().iter().copied().filter(|&idx| {
        let c = lat.coords(idx);
        (0..dim).any(|axis| {
            [-1i64, 1].iter().any(|&step| {
                let mut n = [c[0] as i64, c[1] as i64];
                n[axis] += step;
                if n[axis] < 0 || n[axis] >= lat.counts[axis] as i64 {
                    return true;
                }
                !w.is_inside(lat.index(n[0] as usize, n[1] as usize))
            })
        })
    });
    let mut rows = Vec::new();
    let mut slack = 0.0f64;
    for idx in adjacent {
        let y = w.node(idx);
        let (k, distance) = domain.nearest_sample(&y[..dim]);
        let x = domain.boundary_samples[k].point;
        if distance > 0.0 {
            for e in [&sub.shape, &sup.shape] {
                slack = slack.max((e.formula(&y[..dim]) - e.formula(&x[..dim])).abs() / distance);
            }
        }
        let gap = (w.values()[idx] - problem.datum.value(&x[..dim])).abs();
        rows.push(AttainmentRow { node: y, sample: x, distance, gap });
    }
    let lip_slack = slack + problem.datum.modulus(1.0);
    let modulus_term = problem.datum.modulus(3.0 * r_min);
    let bound = modulus_term + 2.0 * w.h() * lip_slack;
    let worst_gap = rows.iter().map(|r| r.gap).fold(0.0, f64::max);
    let sandwich = between(&sub.function, w, &sup.function);
    Ok(AttainmentReport { pass: sandwich && worst_gap <= bound, rows, lip_slack, modulus_term, bound, worst_gap, sandwich })
}
