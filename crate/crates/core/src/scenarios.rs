//! Scenario setup and drivers turning a [`ScenarioConfig`] into results and
//! artifacts.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix2, Matrix4, Vector2};
use serde::Serialize;

use crate::assembly::{self, StepTopology, StiffnessPlan};
use crate::basis::BasisKind;
use crate::config::{LoadSpec, ScenarioConfig, ScenarioName, SolverSpec};
use crate::constitutive::{rho, update_stress};
use crate::diagnostics::{self, fmt_value, EnergyRow};
use crate::error::{MpmError, Result};
use crate::grid::BackgroundGrid;
use crate::mpoints::{generate_block, import_point_cloud, Material, MaterialPoint};
use crate::output::{write_csv, write_summary, Output};
use crate::solver_explicit::{ExplicitConfig, ExplicitSolver, MassMode};
use crate::solver_implicit::{ImplicitConfig, ImplicitSolver, LoadSchedule, NewtonReport};

/// Grid, materials, and initial points of a scenario.
pub struct Setup {
    pub grid: BackgroundGrid,
    pub materials: Vec<Material>,
    pub points: Vec<MaterialPoint>,
}

pub fn build_setup(cfg: &ScenarioConfig) -> Result<Setup> {
    let g = &cfg.grid;
    let grid = BackgroundGrid::new(Vector2::from(g.origin), g.h, g.nx, g.ny, &g.fix)?;
    let materials = cfg.materials.clone();
    let mut points = Vec::new();
    for (i, b) in cfg.bodies.iter().enumerate() {
        let body_id = b.body_id.unwrap_or(i);
        let mut pts = match (&b.block, &b.csv) {
            (Some(rect), _) => generate_block(
                &grid,
                rect,
                b.points_per_cell.unwrap_or(1),
                &materials[b.material],
                b.material,
                body_id,
            )?,
            (None, Some(path)) => import_point_cloud(path, &materials)?,
            (None, None) => unreachable!("validated config"),
        };
        for p in &mut pts {
            if let Some(v) = b.velocity {
                p.v = Vector2::from(v);
            }
            if let Some(e) = b.expansion {
                p.v = e.rate * (p.x - Vector2::from(e.centre));
            }
        }
        points.extend(pts);
    }
    Ok(Setup { grid, materials, points })
}

/// Machine-readable run summary (`summary.json`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: ScenarioName,
    pub n_points: usize,
    pub steps_requested: usize,
    pub steps_completed: usize,
    pub divergence_step: Option<usize>,
    pub divergence_reason: Option<String>,
    pub total_newton_iterations: Option<usize>,
    pub max_newton_iterations: Option<usize>,
    pub final_stable_step: Option<usize>,
    /// Scenario-specific scalar results; infinite values serialise as `null`.
    pub metrics: BTreeMap<String, f64>,
}

/// One position of the translating-domain conditioning sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub a_over_h: f64,
    pub kappa_m: f64,
    pub kappa_m_stab: f64,
    pub kappa_m_lumped: f64,
    pub kappa_k: f64,
    pub kappa_k_stab: f64,
    pub cfl: f64,
    pub cfl_stab: f64,
}

/// One position of the translating-body velocity-map sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityMapRow {
    pub position: f64,
    pub err_consistent: f64,
    pub err_ghost: f64,
    pub err_lumped: f64,
}

/// Everything a scenario run produced.
#[derive(Debug, Clone, Default)]
pub struct ScenarioResult {
    pub summary: Option<Summary>,
    pub sweep: Vec<SweepRow>,
    pub velocity_map: Vec<VelocityMapRow>,
    pub energy: Vec<EnergyRow>,
    pub newton: Vec<NewtonReport>,
    /// Per-step `(step, value)` scenario trace: displacement error for
    /// expanding bodies, loaded-point displacement for point loads, stress
    /// error for the column.
    pub trace: Vec<(usize, f64)>,
    /// Largest `sqrt(2 J2)` over the points after each step.
    pub max_rho: Vec<f64>,
    pub points: Vec<MaterialPoint>,
}

/// Run a scenario, writing artifacts when `out` is given.
pub fn run_scenario(cfg: &ScenarioConfig, out: Option<&Output>) -> Result<ScenarioResult> {
    let setup = build_setup(cfg)?;
    let res = match cfg.scenario {
        ScenarioName::TranslatingDomain => translating_domain(cfg, setup, out)?,
        ScenarioName::TranslatingBody => translating_body(cfg, setup, out)?,
        _ => match cfg.solver {
            SolverSpec::Explicit { .. } => explicit(cfg, setup, out)?,
            SolverSpec::Implicit { .. } => implicit(cfg, setup, out)?,
        },
    };
    if let (Some(o), Some(s)) = (out, &res.summary) {
        write_summary(&o.path("summary.json"), s)?;
    }
    Ok(res)
}

fn summary(cfg: &ScenarioConfig, n_points: usize, steps: usize) -> Summary {
    Summary {
        scenario: cfg.scenario,
        n_points,
        steps_requested: steps,
        steps_completed: steps,
        divergence_step: None,
        divergence_reason: None,
        total_newton_iterations: None,
        max_newton_iterations: None,
        final_stable_step: None,
        metrics: BTreeMap::new(),
    }
}

fn translation_step(cfg: &ScenarioConfig) -> (usize, Vector2<f64>, Option<Vector2<f64>>) {
    let t = cfg.translation.expect("validated config");
    (t.steps, Vector2::from(t.displacement) / t.steps as f64, t.velocity.map(Vector2::from))
}

/// Conditioning and CFL of the mass and stiffness matrices as a rigid body
/// is translated through the grid in equal increments.
fn translating_domain(cfg: &ScenarioConfig, mut s: Setup, out: Option<&Output>) -> Result<ScenarioResult> {
    let (steps, du, _) = translation_step(cfg);
    let h = s.grid.h;
    let (gm, gk) = (cfg.gamma_m(), cfg.gamma_k());
    let mut rows = Vec::with_capacity(steps);
    let mut travelled = Vector2::zeros();
    for _ in 0..steps {
        for p in &mut s.points {
            p.x += du;
        }
        travelled += du;
        let row = conditioning_at(&s.grid, cfg.basis, &s.materials, &s.points, gm, gk)?;
        rows.push(SweepRow { a_over_h: travelled.norm() / h, ..row });
    }
    let mut sum = summary(cfg, s.points.len(), steps);
    let max = |f: fn(&SweepRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    sum.metrics.insert("max_kappa_M".into(), max(|r| r.kappa_m));
    sum.metrics.insert("max_kappa_M_stab".into(), max(|r| r.kappa_m_stab));
    sum.metrics.insert("max_kappa_M_lumped".into(), max(|r| r.kappa_m_lumped));
    sum.metrics.insert("max_kappa_K".into(), max(|r| r.kappa_k));
    sum.metrics.insert("max_kappa_K_stab".into(), max(|r| r.kappa_k_stab));
    if let Some(o) = out {
        let header = [
            "a_over_h", "kappa_M", "kappa_Mstab", "kappa_Mlumped", "kappa_K", "kappa_Kstab", "C_CFL",
            "C_CFL_stab",
        ];
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                [r.a_over_h, r.kappa_m, r.kappa_m_stab, r.kappa_m_lumped, r.kappa_k, r.kappa_k_stab, r.cfl, r.cfl_stab]
                    .iter()
                    .map(|&v| fmt_value(v))
                    .collect()
            })
            .collect();
        write_csv(&o.path("diagnostics.csv"), &header, &table)?;
    }
    Ok(ScenarioResult { summary: Some(sum), sweep: rows, points: s.points, ..Default::default() })
}

/// Largest reduced system for which dense eigen-diagnostics are computed.
pub const MAX_DENSE_DOFS: usize = 4000;

/// Conditioning diagnostics of the reduced matrices for the current points.
pub fn conditioning_at(
    grid: &BackgroundGrid,
    kind: BasisKind,
    materials: &[Material],
    points: &[MaterialPoint],
    gamma_m: f64,
    gamma_k: f64,
) -> Result<SweepRow> {
    let topo = StepTopology::build(grid, kind, points, true)?;
    let map = topo.dof_map(grid, &[0, 1]);
    if map.len() > MAX_DENSE_DOFS {
        return Err(MpmError::Config(format!(
            "conditioning diagnostics need at most {MAX_DENSE_DOFS} reduced dofs, got {}",
            map.len()
        )));
    }
    let pat = topo.pattern(&map);
    let m = assembly::assemble_mass(&topo.basis, points, &map, &pat);
    let jg = topo.ghost_matrix(grid, &map, &pat);
    let lumped = assembly::assemble_lumped_mass(&topo.basis, points, &map);
    let tangents: Vec<Matrix4<f64>> = points
        .iter()
        .map(|p| {
            update_stress(&materials[p.material_id], &Matrix2::identity(), &p.eps_e, 1.0).map(|r| r.a)
        })
        .collect::<Result<_>>()?;
    let vol: Vec<f64> = points.iter().map(|p| p.vol).collect();
    let k = StiffnessPlan::new(&topo.basis, &map, &pat).assemble(&topo.basis, &tangents, &vol);
    let m_stab = m.add_scaled(gamma_m, &jg).to_dense();
    let k_stab = k.add_scaled(gamma_k, &jg).to_dense();
    let (m, k) = (m.to_dense(), k.to_dense());
    let ml = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lumped));
    Ok(SweepRow {
        a_over_h: 0.0,
        kappa_m: diagnostics::condition_number(&m)?,
        kappa_m_stab: diagnostics::condition_number(&m_stab)?,
        kappa_m_lumped: diagnostics::condition_number(&ml)?,
        kappa_k: diagnostics::condition_number(&k)?,
        kappa_k_stab: diagnostics::condition_number(&k_stab)?,
        cfl: diagnostics::cfl_number(&k, &m, grid.h),
        cfl_stab: diagnostics::cfl_number(&k_stab, &m_stab, grid.h),
    })
}

/// Maximum nodal velocity error over active nodes after mapping a uniform
/// point velocity; infinite when the mass matrix cannot be factorised.
pub fn velocity_map_error(
    grid: &BackgroundGrid,
    kind: BasisKind,
    points: &[MaterialPoint],
    mode: MassMode,
    gamma_m: f64,
    v: &Vector2<f64>,
) -> Result<f64> {
    match crate::solver_explicit::map_velocity_to_grid(grid, kind, points, mode, gamma_m) {
        Ok((topo, nodal)) => Ok(topo
            .active_nodes
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(n, _)| (nodal[n] - v).norm())
            .fold(0.0, f64::max)),
        Err(MpmError::Linalg(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

fn translating_body(cfg: &ScenarioConfig, mut s: Setup, out: Option<&Output>) -> Result<ScenarioResult> {
    let (steps, du, vel) = translation_step(cfg);
    let v = vel.unwrap_or_else(|| Vector2::new(1.0, 1.0));
    for p in &mut s.points {
        p.v = v;
    }
    let gm = cfg.gamma_m();
    let mut rows = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        if i > 0 {
            for p in &mut s.points {
                p.x += du;
            }
        }
        let err = |mode| velocity_map_error(&s.grid, cfg.basis, &s.points, mode, gm, &v);
        rows.push(VelocityMapRow {
            position: (i as f64 * du).norm(),
            err_consistent: err(MassMode::Consistent)?,
            err_ghost: err(MassMode::Ghost)?,
            err_lumped: err(MassMode::Lumped)?,
        });
    }
    let mut sum = summary(cfg, s.points.len(), steps);
    let max = |f: fn(&VelocityMapRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    sum.metrics.insert("max_error_consistent".into(), max(|r| r.err_consistent));
    sum.metrics.insert("max_error_ghost".into(), max(|r| r.err_ghost));
    sum.metrics.insert("max_error_lumped".into(), max(|r| r.err_lumped));
    if let Some(o) = out {
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                [r.position, r.err_consistent, r.err_ghost, r.err_lumped]
                    .iter()
                    .map(|&x| fmt_value(x))
                    .collect()
            })
            .collect();
        write_csv(
            &o.path("diagnostics.csv"),
            &["position", "err_consistent", "err_ghost", "err_lumped"],
            &table,
        )?;
    }
    Ok(ScenarioResult { summary: Some(sum), velocity_map: rows, points: s.points, ..Default::default() })
}

/// Expansion velocity field of the first expanding body, if any.
fn expansion_field(cfg: &ScenarioConfig) -> Option<impl Fn(&Vector2<f64>) -> Vector2<f64>> {
    cfg.bodies.iter().find_map(|b| b.expansion).map(|e| {
        let c = Vector2::from(e.centre);
        move |x: &Vector2<f64>| e.rate * (x - c)
    })
}

fn max_rho(points: &[MaterialPoint]) -> f64 {
    points.iter().map(|p| rho(&p.tau)).fold(0.0, f64::max)
}

fn explicit(cfg: &ScenarioConfig, mut s: Setup, out: Option<&Output>) -> Result<ScenarioResult> {
    let SolverSpec::Explicit { dt, n_steps, mass, stress_update, velocity_update, gravity } = cfg.solver
    else {
        unreachable!()
    };
    let ecfg = ExplicitConfig {
        dt,
        n_steps,
        basis: cfg.basis,
        mass_mode: mass,
        stress_order: stress_update,
        velocity_update,
        gamma_m: cfg.gamma_m(),
        gravity: Vector2::from(gravity),
    };
    let solver = ExplicitSolver::new(&s.grid, &s.materials, ecfg)?;
    let field = expansion_field(cfg);
    let mut trace = Vec::new();
    let mut rho_hist = Vec::new();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let grid = &s.grid;
    let outcome = solver.run(&mut s.points, |rep, pts| {
        let errs: Option<Vec<f64>> = field.as_ref().map(|f| {
            pts.iter().map(|p| (p.displacement() - rep.t * f(&p.x0)).norm()).collect()
        });
        let max_err = errs.as_ref().map(|e| e.iter().copied().fold(0.0, f64::max));
        if let Some(e) = max_err {
            trace.push((rep.step, e));
        }
        let mr = max_rho(pts);
        rho_hist.push(mr);
        let en = rep.energy;
        rows.push(vec![
            rep.step.to_string(),
            fmt_value(rep.t),
            fmt_value(en.w_kin),
            fmt_value(en.w_strain),
            fmt_value(en.w_plastic),
            fmt_value(en.energy_error),
            fmt_value(rep.max_nodal_speed),
            fmt_value(mr),
            max_err.map_or(String::new(), fmt_value),
            "0".into(),
        ]);
        if let Some(o) = out {
            o.maybe_snapshot(rep.step, pts, errs.as_deref())?;
            o.ghost_edges(rep.step, grid, &rep.ghost_faces)?;
        }
        Ok(())
    })?;
    let mut sum = summary(cfg, s.points.len(), n_steps);
    sum.steps_completed = outcome.steps_completed;
    if let Some((step, reason)) = &outcome.divergence {
        sum.divergence_step = Some(*step);
        sum.divergence_reason = Some(reason.clone());
        let mut r = vec![String::new(); 10];
        r[0] = step.to_string();
        r[1] = fmt_value(*step as f64 * dt);
        r[9] = "1".into();
        rows.push(r);
    }
    sum.metrics.insert(
        "normalised_mean_energy_error".into(),
        diagnostics::normalised_mean_energy_error(&outcome.energy),
    );
    if let Some(last) = outcome.energy.last() {
        sum.metrics.insert("W0".into(), last.w0);
        sum.metrics.insert("final_W_kin".into(), last.w_kin);
        sum.metrics.insert("final_W_strain".into(), last.w_strain);
        sum.metrics.insert("final_W_plastic".into(), last.w_plastic);
    }
    if let Some(&(_, e)) = trace.last() {
        sum.metrics.insert("final_max_displacement_error".into(), e);
    }
    sum.metrics.insert("max_rho".into(), rho_hist.iter().copied().fold(0.0, f64::max));
    if let Some(o) = out {
        let header = [
            "step", "t", "W_kin", "W_strain", "W_plastic", "energy_error", "max_nodal_speed", "max_rho",
            "max_displacement_error", "diverged",
        ];
        write_csv(&o.path("diagnostics.csv"), &header, &rows)?;
        let energy: Vec<Vec<String>> = outcome
            .energy
            .iter()
            .map(|e| {
                [e.t, e.w_kin, e.w_strain, e.w_plastic, e.energy_error].iter().map(|&v| fmt_value(v)).collect()
            })
            .collect();
        write_csv(&o.path("energy.csv"), &["t", "W_kin", "W_strain", "W_plastic", "energy_error"], &energy)?;
    }
    Ok(ScenarioResult {
        summary: Some(sum),
        energy: outcome.energy,
        trace,
        max_rho: rho_hist,
        points: s.points,
        ..Default::default()
    })
}

/// The two points nearest the free (largest-x) end, one either side of the
/// horizontal axis `y = axis`.
pub fn tip_pair(points: &[MaterialPoint], axis: f64) -> Result<Vec<usize>> {
    let xmax = points.iter().map(|p| p.x0[0]).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * xmax.abs().max(1.0);
    let pick = |above: bool| {
        points
            .iter()
            .enumerate()
            .filter(|(_, p)| (p.x0[0] - xmax).abs() <= tol && ((p.x0[1] > axis) == above))
            .min_by(|a, b| {
                (a.1.x0[1] - axis).abs().total_cmp(&(b.1.x0[1] - axis).abs())
            })
            .map(|(i, _)| i)
    };
    match (pick(false), pick(true)) {
        (Some(a), Some(b)) => Ok(vec![a, b]),
        _ => Err(MpmError::Config(format!("no points either side of the axis y = {axis} at the free end"))),
    }
}

fn implicit(cfg: &ScenarioConfig, mut s: Setup, out: Option<&Output>) -> Result<ScenarioResult> {
    let SolverSpec::Implicit { n_steps, tol, max_newton_iters, ref load } = cfg.solver else {
        unreachable!()
    };
    let (schedule, tracked) = match load {
        LoadSpec::BodyForce { gravity } => (LoadSchedule::BodyForce { gravity: Vector2::from(*gravity) }, None),
        LoadSpec::PointLoad { total, point_ids, tip_pair_axis } => {
            let ids = match (point_ids, tip_pair_axis) {
                (Some(ids), _) => ids.clone(),
                (None, Some(axis)) => tip_pair(&s.points, *axis)?,
                (None, None) => {
                    return Err(MpmError::Config("point_load needs point_ids or tip_pair_axis".into()))
                }
            };
            if let Some(&bad) = ids.iter().find(|&&i| i >= s.points.len()) {
                return Err(MpmError::Config(format!("loaded point {bad} does not exist")));
            }
            (LoadSchedule::PointLoad { points: ids.clone(), total: Vector2::from(*total) }, Some(ids))
        }
    };
    let icfg = ImplicitConfig {
        n_steps,
        tol,
        max_newton_iters,
        gamma_k: cfg.gamma_k(),
        ghost_enabled: cfg.ghost.enabled,
        basis: cfg.basis,
        load: schedule,
    };
    let solver = ImplicitSolver::new(&s.grid, &s.materials, icfg)?;
    let column = cfg.column;
    let rho0 = s.materials[0].rho0;
    let mut trace = Vec::new();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut newton_rows: Vec<Vec<String>> = Vec::new();
    let outcome = solver.run(&mut s.points, |rep, pts| {
        let tip = tracked.as_ref().map(|ids| {
            ids.iter().map(|&i| pts[i].displacement()).sum::<Vector2<f64>>() / ids.len() as f64
        });
        let err = column.map(|c| diagnostics::stress_error_column(pts, rho0, c.l0, c.g));
        if rep.converged {
            if let Some(t) = tip {
                trace.push((rep.step, t[1]));
            } else if let Some(e) = err {
                trace.push((rep.step, e));
            }
        }
        rows.push(vec![
            rep.step.to_string(),
            fmt_value(rep.step as f64 / n_steps as f64),
            rep.iterations.to_string(),
            u8::from(rep.converged).to_string(),
            tip.map_or(String::new(), |t| fmt_value(t[0])),
            tip.map_or(String::new(), |t| fmt_value(t[1])),
            err.map_or(String::new(), fmt_value),
        ]);
        newton_rows.push(vec![
            rep.step.to_string(),
            rep.iterations.to_string(),
            u8::from(rep.converged).to_string(),
            rep.residuals.iter().map(|&r| fmt_value(r)).collect::<Vec<_>>().join(";"),
        ]);
        if let Some(o) = out {
            o.maybe_snapshot(rep.step, pts, None)?;
        }
        Ok(())
    })?;
    let mut sum = summary(cfg, s.points.len(), n_steps);
    sum.steps_completed = outcome.final_stable_step;
    sum.final_stable_step = Some(outcome.final_stable_step);
    sum.total_newton_iterations = Some(outcome.total_iterations());
    sum.max_newton_iterations = Some(outcome.max_iterations());
    if !outcome.completed {
        let last = outcome.reports.last().expect("failed step is reported");
        sum.divergence_step = Some(last.step);
        sum.divergence_reason = last.failure.clone();
    }
    if let Some(c) = column {
        sum.metrics.insert("stress_error".into(), diagnostics::stress_error_column(&s.points, rho0, c.l0, c.g));
        let top = s.points.iter().map(|p| p.x[1] + p.half_lengths[1]).fold(0.0, f64::max);
        sum.metrics.insert("height_ratio".into(), top / c.l0);
    }
    if let Some(ids) = &tracked {
        let t = ids.iter().map(|&i| s.points[i].displacement()).sum::<Vector2<f64>>() / ids.len() as f64;
        sum.metrics.insert("tip_displacement_x".into(), t[0]);
        sum.metrics.insert("tip_displacement_y".into(), t[1]);
    }
    if let Some(o) = out {
        write_csv(
            &o.path("diagnostics.csv"),
            &["step", "load_factor", "iterations", "converged", "tip_ux", "tip_uy", "stress_error"],
            &rows,
        )?;
        write_csv(&o.path("newton.csv"), &["step", "iterations", "converged", "residuals"], &newton_rows)?;
    }
    Ok(ScenarioResult {
        summary: Some(sum),
        newton: outcome.reports,
        trace,
        points: s.points,
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpoints::Material;

    #[test]
    fn tip_pair_straddles_axis() {
        let m = Material::new(1.0, 0.2, 0.0, None).unwrap();
        let ys = [0.125, 0.375, 0.625, 0.875];
        let mut p = Vec::new();
        for x in [9.75, 9.25] {
            for y in ys {
                p.push(MaterialPoint::new(Vector2::new(x, y), 1.0, Vector2::zeros(), &m, 0, 0));
            }
        }
        let ids = tip_pair(&p, 0.5).unwrap();
        assert_eq!(ids, vec![1, 2]);
        assert!(tip_pair(&p, 2.0).is_err());
    }
}
