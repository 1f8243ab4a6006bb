//! The certify, solve and diagnose stages and their output files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use serde_json::json;

use levy_perron::barriers::{
    build_subsolution, build_supersolution, certify_boundary_bump, certify_degenerate_barrier, certify_halfspace_decay,
    certify_radial_barrier, default_bump_constant, degenerate_barrier, degenerate_range, BarrierReport,
};
use levy_perron::grid::GridFunction;
use levy_perron::kernels::{check_annulus_bounds, check_boundary_cone, dyadic_radii, AnnulusReport, ConeConstants, ConeReport};
use levy_perron::nonlocal_op::evaluate_on_interior;
use levy_perron::perron::{check_boundary_attainment, discrete_perron_solve, write_solution_csv};
use levy_perron::quadrature::{Point, QuadratureParams};
use levy_perron::regularity::{fit_holder_exponent, oscillation_profile, weak_harnack_check, write_harnack_csv, write_holder_csv};

use crate::config::{BarrierChoice, RunConfig, Setup};

/// Output directory with `reports/` and `tables/`.
pub struct Output {
    root: PathBuf,
}

impl Output {
    pub fn create(root: &Path) -> Result<Self> {
        for sub in ["reports", "tables"] {
            fs::create_dir_all(root.join(sub)).with_context(|| format!("cannot create {}", root.display()))?;
        }
        Ok(Output { root: root.to_path_buf() })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn json<T: Serialize + ?Sized>(&self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.path(rel), text).with_context(|| format!("cannot write {rel}"))?;
        Ok(())
    }

    fn csv(&self, rel: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_path(self.path(rel))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Outcome of a stage: whether it met its own pass criteria, and why not.
pub struct StageOutcome {
    pub pass: bool,
    pub failures: Vec<String>,
}

pub struct Certification {
    pub outcome: StageOutcome,
    /// Boundary-bump or degenerate certificate, when one passed.
    pub barrier: Option<BarrierReport>,
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

/// Up to `count` interior lattice nodes, evenly spread in index order.
fn probe_nodes(setup: &Setup, count: usize) -> Vec<Point> {
    let dim = setup.lattice.dim;
    let inside: Vec<Point> = (0..setup.lattice.len())
        .map(|i| setup.lattice.node(i))
        .filter(|p| setup.problem.domain.contains(&p[..dim]))
        .collect();
    if inside.len() <= count {
        return inside;
    }
    (0..count).map(|k| inside[k * (inside.len() - 1) / (count - 1).max(1)]).collect()
}

fn annulus_row(label: &str, r: &AnnulusReport) -> Vec<String> {
    vec![
        label.to_string(),
        r.delta.to_string(),
        r.mass.to_string(),
        r.mass_bound.to_string(),
        r.first_moment.to_string(),
        r.moment_bound.to_string(),
        r.lower_set_fraction.to_string(),
        r.pass_h1.to_string(),
        r.pass_h2.to_string(),
        r.pass_h3.to_string(),
    ]
}

pub fn certify(cfg: &RunConfig, setup: &Setup, out: &Output) -> Result<Certification> {
    let c = &cfg.certify;
    let dim = setup.lattice.dim;
    let domain = &setup.problem.domain;
    let params = setup.problem.params;
    let mut failures = Vec::new();

    // kernel class checks at the origin of the domain's bounding box
    let x0 = domain_center(cfg);
    let deltas = dyadic_radii(setup.lattice.h, cfg.grid.truncation, c.annuli);
    let mut annulus = Vec::new();
    let mut rows = Vec::new();
    for (k, kernel) in setup.kernels.iter().enumerate() {
        let reps = check_annulus_bounds(kernel, &x0[..dim], &deltas)?;
        for (name, flag) in [("H1", 0), ("H2", 1), ("H3", 2)] {
            let bad: Vec<String> = reps
                .iter()
                .filter(|r| ![r.pass_h1, r.pass_h2, r.pass_h3][flag])
                .map(|r| format!("{:.3e}", r.delta))
                .collect();
            if !bad.is_empty() {
                failures.push(format!("kernel {k} ({}): ({name}) fails at delta = {}", kernel.label, bad.join(", ")));
            }
        }
        rows.extend(reps.iter().map(|r| annulus_row(&kernel.label, r)));
        annulus.push(json!({ "kernel": kernel.label, "reports": reps }));
    }
    out.json("reports/annulus.json", &annulus)?;
    out.csv(
        "tables/annulus.csv",
        &["kernel", "delta", "mass", "mass_bound", "first_moment", "moment_bound", "lower_set_fraction", "h1", "h2", "h3"],
        rows,
    )?;

    // boundary cone at a few samples and depths
    let consts = ConeConstants::from_symmetric_class(dim, &params, c.cone_s_min);
    let r = 0.5 * domain.r_omega;
    let stride = (domain.boundary_samples.len() / 8).max(1);
    let mut cones: Vec<ConeReport> = Vec::new();
    for kernel in &setup.kernels {
        for s in domain.boundary_samples.iter().step_by(stride) {
            let yr = s.exterior_center(r);
            for t in [0.1, 0.3, 0.6] {
                let y = [yr[0] + (1.0 + t) * r * s.normal[0], yr[1] + (1.0 + t) * r * s.normal[1]];
                if domain.contains(&y[..dim]) {
                    cones.push(check_boundary_cone(kernel, domain, s, r, &y[..dim], &consts)?);
                }
            }
        }
    }
    let cone_fail = cones.iter().filter(|r| !r.pass && !r.below_s_min).count();
    if cone_fail > 0 {
        failures.push(format!("boundary cone fails at {cone_fail} of {} probes", cones.len()));
    }
    out.json("reports/cone.json", &json!({ "constants": consts, "reports": cones }))?;

    // barriers
    let q = QuadratureParams::for_scale(1.0);
    let family = setup.problem.kernels();
    let decay = certify_halfspace_decay(&family, &c.alpha_grid, &c.halfspace_radii, &q)?;
    out.json("reports/halfspace.json", &decay)?;
    let mut barrier = None;
    if !decay.pass {
        failures.push("half-space decay: no exponent in the grid certifies".into());
    } else {
        match cfg.problem.barrier {
            BarrierChoice::Bump => {
                let radial = certify_radial_barrier(&family, decay.alpha, params.c0, &c.radial_radii, &q)?;
                out.json("reports/radial.json", &radial)?;
                if !radial.pass {
                    failures.push("radial barrier: no radius certifies".into());
                } else {
                    let c3 = default_bump_constant(decay.alpha, radial.range);
                    let probes = probe_nodes(setup, c.probes);
                    let sample = &domain.boundary_samples[0];
                    let bump =
                        certify_boundary_bump(&family, domain, sample, c.bump_radius, c3, decay.alpha, &radial, &probes, &q)?;
                    out.json("reports/barrier.json", &bump)?;
                    if bump.pass {
                        barrier = Some(bump);
                    } else {
                        failures.push("boundary bump barrier fails".into());
                    }
                }
            }
            BarrierChoice::Degenerate => {
                let sample = &domain.boundary_samples[0];
                let range = degenerate_range(&setup.problem, sample, c.bump_radius, decay.alpha, &c.degenerate_s_grid, &q)?;
                out.json("reports/degenerate_range.json", &range)?;
                if !range.pass {
                    failures.push("degenerate barrier: no s0 certifies".into());
                } else {
                    let b = degenerate_barrier(
                        &setup.problem,
                        sample,
                        c.bump_radius,
                        range.constant("c5")?,
                        decay.alpha,
                        range.range,
                    )?;
                    let cert = certify_degenerate_barrier(&setup.problem, &b, &probe_nodes(setup, c.probes), &q)?;
                    out.json("reports/barrier.json", &cert)?;
                    if cert.pass {
                        barrier = Some(cert);
                    } else {
                        failures.push("degenerate barrier fails".into());
                    }
                }
            }
        }
    }
    let pass = failures.is_empty();
    out.json("reports/certify.json", &json!({ "pass": pass, "failures": failures }))?;
    Ok(Certification { outcome: StageOutcome { pass, failures }, barrier })
}

fn domain_center(cfg: &RunConfig) -> Point {
    match &cfg.problem.domain {
        crate::config::DomainSpec::Interval { lo, hi } => [0.5 * (lo + hi), 0.0],
        crate::config::DomainSpec::Ball { center, .. } => {
            [center[0], if center.len() > 1 { center[1] } else { 0.0 }]
        }
    }
}

/// Builds the envelopes, runs the Perron iteration and writes the
/// solution. The dump is written even when the iteration did not converge.
pub fn solve(cfg: &RunConfig, setup: &Setup, barrier: &BarrierReport, out: &Output) -> Result<StageOutcome> {
    let radii = &cfg.certify.envelope_radii;
    let sub = build_subsolution(&setup.problem, &setup.lattice, barrier, radii)?;
    let sup = build_supersolution(&setup.problem, &setup.lattice, barrier, radii)?;
    let (w, report) = discrete_perron_solve(&setup.problem, &sub.function, &sup.function, &setup.q, &setup.solver)?;
    eprintln!(
        "solve: {} sweeps, converged {}, {:.2}s",
        report.iterations, report.converged, report.runtime_seconds
    );

    let values = evaluate_on_interior(&setup.problem, &w, &setup.q)?;
    let residuals: Vec<(f64, (usize, usize))> = values.iter().map(|v| (v.value, v.active)).collect();
    write_solution_csv(&w, &residuals, &out.path("solution.csv"))?;

    // timing is left out so repeated runs produce identical files
    let mut rep = serde_json::to_value(&report)?;
    if let Some(m) = rep.as_object_mut() {
        m.remove("runtime_seconds");
    }
    out.json("reports/solve.json", &rep)?;
    out.csv(
        "tables/convergence.csv",
        &["sweep", "max_delta", "max_residual"],
        report
            .delta_history
            .iter()
            .zip(&report.residual_history)
            .enumerate()
            .map(|(i, (d, r))| vec![(i + 1).to_string(), d.to_string(), r.to_string()]),
    )?;
    let attainment = check_boundary_attainment(&setup.problem, &w, &sub, &sup)?;
    out.json("reports/attainment.json", &attainment)?;

    let mut failures = Vec::new();
    if !report.converged {
        failures.push(format!("no convergence after {} sweeps", report.iterations));
    }
    if !report.monotone {
        failures.push("iterates decreased at some node".into());
    }
    if !attainment.pass {
        failures.push(format!(
            "boundary attainment: gap {:.3e} exceeds {:.3e} or sandwich broken",
            attainment.worst_gap, attainment.bound
        ));
    }
    Ok(StageOutcome { pass: failures.is_empty(), failures })
}

/// Reads `solution.csv` back onto the configured lattice.
pub fn load_solution(setup: &Setup, path: &Path) -> Result<GridFunction> {
    let template = GridFunction::from_fn(
        setup.lattice.clone(),
        setup.problem.domain.clone(),
        setup.problem.datum.clone(),
        |_| 0.0,
    )?;
    let dim = setup.lattice.dim;
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("cannot read solution {}", path.display()))?;
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .with_context(|| format!("row {row}: missing column {i}"))?
                .parse::<f64>()
                .with_context(|| format!("row {row}: bad number"))
        };
        let Some(&idx) = template.interior().get(row) else {
            bail!("solution has more rows than the lattice has interior nodes");
        };
        let node = template.node(idx);
        for (axis, &coord) in node.iter().enumerate().take(dim) {
            let x = field(axis)?;
            ensure!(
                (x - coord).abs() <= 1e-9 * (1.0 + x.abs()),
                "row {row}: node {x} does not match the configured lattice"
            );
        }
        values.push(field(dim)?);
    }
    ensure!(
        values.len() == template.interior().len(),
        "solution has {} rows, the lattice has {} interior nodes",
        values.len(),
        template.interior().len()
    );
    let mut w = template;
    w.set_interior_values(&values);
    Ok(w)
}

pub fn diagnose(cfg: &RunConfig, setup: &Setup, w: &GridFunction, out: &Output) -> Result<StageOutcome> {
    let d = &cfg.diagnostics;
    let dim = setup.lattice.dim;
    let centers: Vec<Vec<f64>> =
        if d.centers.is_empty() { vec![domain_center(cfg)[..dim].to_vec()] } else { d.centers.clone() };
    let min_depth = d.min_depth.unwrap_or(d.harnack_radius);
    // default thresholds span the values inside each Harnack ball
    let thresholds_at = |c: &[f64]| -> Vec<f64> {
        if !d.thresholds.is_empty() {
            return d.thresholds.clone();
        }
        let (lo, hi) = w
            .interior()
            .iter()
            .filter(|&&i| {
                let p = w.node(i);
                (0..dim).map(|k| (p[k] - c[k]).powi(2)).sum::<f64>().sqrt() < d.harnack_radius
            })
            .map(|&i| w.values()[i])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        (1..=8).map(|k| lo + (hi - lo) * k as f64 / 9.0).filter(|&t| t > 0.0).collect()
    };
    let nonnegative = w.values().iter().all(|&v| v >= 0.0);

    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for (i, c) in centers.iter().enumerate() {
        ensure!(c.len() == dim, "diagnostics centre {i} needs {dim} components");
        let depth = setup.problem.domain.signed_distance(c);
        if depth < min_depth {
            warn(&format!("centre {c:?} is {depth:.3} from the boundary, below {min_depth}; skipped"));
            summary.push(json!({ "center": c, "skipped": "too close to the boundary" }));
            continue;
        }
        let holder = match oscillation_profile(w, c, d.base, d.levels).and_then(|p| fit_holder_exponent(&p)) {
            Ok(h) => h,
            Err(e) => {
                failures.push(format!("centre {c:?}: {e}"));
                summary.push(json!({ "center": c, "error": e.to_string() }));
                continue;
            }
        };
        out.json(&format!("reports/holder_{i}.json"), &holder)?;
        write_holder_csv(&holder, &out.path(&format!("tables/holder_{i}.csv")))?;
        let mut entry = json!({
            "center": c,
            "alpha_hat": holder.fit.as_ref().map(|f| f.alpha_hat),
            "perfect_regularity": holder.perfect_regularity,
        });
        if holder.fit.as_ref().is_some_and(|f| f.alpha_hat.is_nan() || f.alpha_hat <= 0.0) {
            failures.push(format!("centre {c:?}: fitted exponent is not positive"));
        }

        if holder.perfect_regularity {
            entry["harnack"] = json!("skipped: constant near the centre");
        } else if !nonnegative {
            warn("the solution takes negative values; weak Harnack skipped");
            entry["harnack"] = json!("skipped: negative values");
        } else {
            match weak_harnack_check(w, c, d.harnack_radius, d.c1, cfg.problem.sigma, &thresholds_at(c)) {
                Ok(h) => {
                    out.json(&format!("reports/harnack_{i}.json"), &h)?;
                    write_harnack_csv(&h, &out.path(&format!("tables/harnack_{i}.csv")))?;
                    if !(h.epsilon3 > 0.0 && h.majorized) {
                        failures.push(format!("centre {c:?}: weak Harnack fit has epsilon3 = {}", h.epsilon3));
                    }
                    entry["epsilon3"] = json!(h.epsilon3);
                    entry["harnack_constant"] = json!(h.c);
                }
                Err(e) => {
                    failures.push(format!("centre {c:?}: {e}"));
                    entry["harnack"] = json!(e.to_string());
                }
            }
        }
        summary.push(entry);
    }
    let pass = failures.is_empty();
    out.json("reports/diagnose.json", &json!({ "pass": pass, "failures": failures, "centers": summary }))?;
    Ok(StageOutcome { pass, failures })
}
