//! Implicit quasi-static Newton-Raphson load stepping with optional ghost
//! stiffness stabilisation.
//!
//! Within a load step the basis gradients and `K_G` are frozen at their
//! start-of-step values; the unknown is the step displacement `u`.

use nalgebra::{Matrix2, Matrix4, Vector2};
use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{self, StepTopology, StiffnessPlan};
use crate::basis::{self, BasisContribution, BasisKind};
use crate::constitutive::{update_stress, StressResult};
use crate::error::{MpmError, Result};
use crate::grid::BackgroundGrid;
use crate::linalg::{norm2, CscMatrix, DofMap};
use crate::mpoints::{Material, MaterialPoint};

/// External load, ramped linearly over the load steps.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadSchedule {
    /// Gravity acceleration reached at the final step.
    BodyForce { gravity: Vector2<f64> },
    /// Total force split equally between the listed points.
    PointLoad { points: Vec<usize>, total: Vector2<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitConfig {
    pub n_steps: usize,
    pub tol: f64,
    pub max_newton_iters: usize,
    pub gamma_k: f64,
    pub ghost_enabled: bool,
    pub basis: BasisKind,
    pub load: LoadSchedule,
}

impl ImplicitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(MpmError::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_newton_iters == 0 {
            return Err(MpmError::Config("max_newton_iters must be at least 1".into()));
        }
        if !(self.gamma_k >= 0.0) {
            return Err(MpmError::Config(format!("gamma_k must be non-negative, got {}", self.gamma_k)));
        }
        Ok(())
    }
}

/// Normalised residual test `|R| / |f_ext| < tol`, with a 1 N floor when the
/// external force vanishes.
pub fn newton_convergence_check(r: &[f64], f_ext: &[f64], tol: f64) -> bool {
    let fe = norm2(f_ext);
    let scale = if fe > 0.0 { fe } else { 1.0 };
    norm2(r) / scale < tol
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonReport {
    pub step: usize,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// Why the step failed, when it did.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitOutcome {
    pub reports: Vec<NewtonReport>,
    /// Last load step that converged (0 if none).
    pub final_stable_step: usize,
    pub completed: bool,
}

impl ImplicitOutcome {
    pub fn total_iterations(&self) -> usize {
        self.reports.iter().filter(|r| r.converged).map(|r| r.iterations).sum()
    }

    pub fn max_iterations(&self) -> usize {
        self.reports.iter().filter(|r| r.converged).map(|r| r.iterations).max().unwrap_or(0)
    }
}

/// Trial state of every point for a given step displacement.
struct Trial {
    basis_x: Vec<BasisContribution>,
    stress: Vec<StressResult>,
    f: Vec<Matrix2<f64>>,
    vol: Vec<f64>,
}

pub struct ImplicitSolver<'a> {
    pub grid: &'a BackgroundGrid,
    pub materials: &'a [Material],
    pub cfg: ImplicitConfig,
}

impl<'a> ImplicitSolver<'a> {
    pub fn new(grid: &'a BackgroundGrid, materials: &'a [Material], cfg: ImplicitConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(ImplicitSolver { grid, materials, cfg })
    }

    fn external_force(
        &self,
        basis: &[BasisContribution],
        points: &[MaterialPoint],
        map: &DofMap,
        factor: f64,
    ) -> Result<Vec<f64>> {
        match &self.cfg.load {
            LoadSchedule::BodyForce { gravity } => {
                Ok(assembly::assemble_body_force(basis, points, &(gravity * factor), map))
            }
            LoadSchedule::PointLoad { points: ids, total } => {
                let mut w = vec![Vector2::zeros(); points.len()];
                for &i in ids {
                    let slot = w.get_mut(i).ok_or(MpmError::Index {
                        what: "loaded point",
                        index: i,
                        len: points.len(),
                    })?;
                    *slot += total * (factor / ids.len() as f64);
                }
                Ok(assembly::assemble_weighted(basis, &w, map))
            }
        }
    }

    fn trial(
        &self,
        points: &[MaterialPoint],
        basis: &[BasisContribution],
        u_nodal: &[Vector2<f64>],
    ) -> Result<Trial> {
        let per: Vec<_> = points
            .par_iter()
            .zip(basis.par_iter())
            .enumerate()
            .map(|(i, (p, b))| -> Result<_> {
                let df = Matrix2::identity() + b.gradient(u_nodal);
                let f = df * p.f;
                let j = f.determinant();
                let inv_t = df
                    .try_inverse()
                    .filter(|_| j > 0.0)
                    .ok_or_else(|| MpmError::NonPhysical(format!("point {i}: det(F) = {j}")))?
                    .transpose();
                let s = update_stress(&self.materials[p.material_id], &df, &p.eps_e, j)
                    .map_err(|e| MpmError::NonPhysical(format!("point {i}: {e}")))?;
                let bx = BasisContribution {
                    nodes: b.nodes.clone(),
                    s: b.s.clone(),
                    grad: b.grad.iter().map(|g| inv_t * g).collect(),
                };
                Ok((bx, s, f, j * p.v0))
            })
            .collect::<Result<_>>()?;
        let mut t = Trial {
            basis_x: Vec::with_capacity(per.len()),
            stress: Vec::with_capacity(per.len()),
            f: Vec::with_capacity(per.len()),
            vol: Vec::with_capacity(per.len()),
        };
        for (b, s, f, v) in per {
            t.basis_x.push(b);
            t.stress.push(s);
            t.f.push(f);
            t.vol.push(v);
        }
        Ok(t)
    }

    /// Solve one load step and commit the converged state.
    pub fn load_step(&self, points: &mut [MaterialPoint], step: usize) -> Result<NewtonReport> {
        let grid = self.grid;
        let cfg = &self.cfg;
        let ghost = cfg.ghost_enabled;
        let topo = StepTopology::build(grid, cfg.basis, points, ghost)?;
        let map = topo.dof_map(grid, &[0, 1]);
        let pat = topo.pattern(&map);
        let k_g: Option<CscMatrix> = (ghost && cfg.gamma_k != 0.0)
            .then(|| topo.ghost_matrix(grid, &map, &pat).scaled(cfg.gamma_k));
        let factor = step as f64 / cfg.n_steps as f64;
        let f_ext = self.external_force(&topo.basis, points, &map, factor)?;
        let plan = StiffnessPlan::new(&topo.basis, &map, &pat);
        let n_nodes = grid.n_nodes();

        let mut u = vec![0.0; map.len()];
        let mut report = NewtonReport {
            step,
            iterations: 0,
            residuals: Vec::new(),
            converged: false,
            failure: None,
        };
        for it in 1..=cfg.max_newton_iters {
            report.iterations = it;
            let u_nodal = assembly::scatter(&map, &u, n_nodes);
            let trial = match self.trial(points, &topo.basis, &u_nodal) {
                Ok(t) => t,
                Err(e) => {
                    report.failure = Some(e.to_string());
                    return Ok(report);
                }
            };
            let sigma: Vec<Matrix2<f64>> = trial
                .stress
                .iter()
                .map(|s| s.sigma.fixed_view::<2, 2>(0, 0).into_owned())
                .collect();
            let f_int = assembly::assemble_internal_force(&trial.basis_x, &sigma, &trial.vol, &map);
            let mut r: Vec<f64> = f_int.iter().zip(&f_ext).map(|(a, b)| a - b).collect();
            if let Some(kg) = &k_g {
                for (ri, gi) in r.iter_mut().zip(kg.mul_vec(&u)) {
                    *ri += gi;
                }
            }
            let fe = norm2(&f_ext);
            report.residuals.push(norm2(&r) / if fe > 0.0 { fe } else { 1.0 });
            if newton_convergence_check(&r, &f_ext, cfg.tol) {
                report.converged = true;
                self.commit(points, &topo.basis, &u_nodal, trial)?;
                return Ok(report);
            }
            if it == cfg.max_newton_iters {
                break;
            }
            let tangents: Vec<Matrix4<f64>> = trial.stress.iter().map(|s| s.a).collect();
            let mut k = plan.assemble(&trial.basis_x, &tangents, &trial.vol);
            if let Some(kg) = &k_g {
                k = k.add_scaled(1.0, kg);
            }
            let neg: Vec<f64> = r.iter().map(|v| -v).collect();
            match k.solve_lu(&neg) {
                Ok(du) => {
                    for (a, b) in u.iter_mut().zip(du) {
                        *a += b;
                    }
                }
                Err(e) => {
                    report.failure = Some(e.to_string());
                    return Ok(report);
                }
            }
        }
        report.failure = Some(format!(
            "no convergence within {} iterations",
            cfg.max_newton_iters
        ));
        Ok(report)
    }

    fn commit(
        &self,
        points: &mut [MaterialPoint],
        basis: &[BasisContribution],
        u_nodal: &[Vector2<f64>],
        trial: Trial,
    ) -> Result<()> {
        for (((p, b), s), f) in points.iter_mut().zip(basis).zip(trial.stress).zip(trial.f) {
            p.x += b.interpolate(u_nodal);
            p.f = f;
            p.vol = f.determinant() * p.v0;
            p.eps_e = s.eps_e;
            p.tau = s.tau;
            p.sigma = s.sigma;
            p.w_plastic += s.d_wp * p.v0;
            p.eq_plastic += s.d_eq_plastic();
        }
        basis::update_domains(points)
    }

    /// Run all load steps, stopping at the first that fails to converge.
    pub fn run<F>(&self, points: &mut [MaterialPoint], mut observe: F) -> Result<ImplicitOutcome>
    where
        F: FnMut(&NewtonReport, &[MaterialPoint]) -> Result<()>,
    {
        let mut reports = Vec::new();
        let mut final_stable_step = 0;
        for step in 1..=self.cfg.n_steps {
            let rep = match self.load_step(points, step) {
                Ok(r) => r,
                Err(e @ (MpmError::Config(_) | MpmError::Io(_))) => return Err(e),
                Err(e) => NewtonReport {
                    step,
                    iterations: 0,
                    residuals: Vec::new(),
                    converged: false,
                    failure: Some(e.to_string()),
                },
            };
            let ok = rep.converged;
            observe(&rep, points)?;
            reports.push(rep);
            if !ok {
                return Ok(ImplicitOutcome { reports, final_stable_step, completed: false });
            }
            final_stable_step = step;
        }
        Ok(ImplicitOutcome { reports, final_stable_step, completed: true })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Axis, DirichletLine};
    use crate::mpoints::{generate_block, Rect};

    #[test]
    fn convergence_rule() {
        assert!(newton_convergence_check(&[0.0], &[1.0], 1e-6));
        assert!(!newton_convergence_check(&[1e-6], &[1.0], 1e-6));
        assert!(newton_convergence_check(&[1e-7], &[0.0], 1e-6));
    }

    fn column(ghost: bool, gamma_k: f64, gravity: f64) -> (BackgroundGrid, Vec<Material>, ImplicitConfig) {
        let fix = [
            DirichletLine { line: Axis::X, at: 0.0, dofs: vec![Axis::X] },
            DirichletLine { line: Axis::X, at: 1.0, dofs: vec![Axis::X] },
            DirichletLine { line: Axis::Y, at: 0.0, dofs: vec![Axis::Y] },
        ];
        let g = BackgroundGrid::new(Vector2::zeros(), 1.0, 1, 12, &fix).unwrap();
        let mats = vec![Material::new(10e3, 0.0, 80.0, None).unwrap()];
        let cfg = ImplicitConfig {
            n_steps: 4,
            tol: 1e-9,
            max_newton_iters: 10,
            gamma_k,
            ghost_enabled: ghost,
            basis: BasisKind::Gimpm,
            load: LoadSchedule::BodyForce { gravity: Vector2::new(0.0, -gravity) },
        };
        (g, mats, cfg)
    }

    #[test]
    fn zero_load_converges_in_one_iteration() {
        let (g, mats, cfg) = column(true, 10e3, 0.0);
        let r = Rect { min: [0.0, 0.0], max: [1.0, 10.0] };
        let mut p = generate_block(&g, &r, 2, &mats[0], 0, 0).unwrap();
        let s = ImplicitSolver::new(&g, &mats, cfg).unwrap();
        let rep = s.load_step(&mut p, 1).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.residuals, vec![0.0]);
    }

    #[test]
    fn ghost_off_matches_zero_penalty() {
        let r = Rect { min: [0.0, 0.0], max: [1.0, 10.0] };
        let (g, mats, a) = column(false, 0.0, 10.0);
        let (_, _, mut b) = column(false, 0.0, 10.0);
        b.gamma_k = 5.0;
        b.ghost_enabled = false;
        let mut pa = generate_block(&g, &r, 2, &mats[0], 0, 0).unwrap();
        let mut pb = pa.clone();
        let oa = ImplicitSolver::new(&g, &mats, a).unwrap().run(&mut pa, |_, _| Ok(())).unwrap();
        let ob = ImplicitSolver::new(&g, &mats, b).unwrap().run(&mut pb, |_, _| Ok(())).unwrap();
        assert_eq!(oa, ob);
        assert_eq!(pa, pb);
    }

    #[test]
    fn column_newton_converges_quadratically() {
        let (g, mats, cfg) = column(true, 10e3, 10.0);
        let r = Rect { min: [0.0, 0.0], max: [1.0, 10.0] };
        let mut p = generate_block(&g, &r, 2, &mats[0], 0, 0).unwrap();
        let s = ImplicitSolver::new(&g, &mats, cfg).unwrap();
        let out = s.run(&mut p, |_, _| Ok(())).unwrap();
        assert!(out.completed, "{:?}", out.reports.last());
        for rep in &out.reports {
            let r = &rep.residuals;
            let n = r.len();
            assert!(n >= 3, "{r:?}");
            // order estimate from the last three residuals
            let order = (r[n - 1] / r[n - 2]).ln() / (r[n - 2] / r[n - 3]).ln();
            assert!(order >= 1.8 || r[n - 1] < 1e-13, "{r:?}");
        }
    }
}
