//! Explicit dynamic time stepping with consistent, lumped, or
//! ghost-stabilised consistent mass.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{self, StepTopology};
use crate::basis::{self, BasisContribution, BasisKind};
use crate::constitutive::update_stress;
use crate::diagnostics::{self, EnergyRow};
use crate::error::{MpmError, Result};
use crate::grid::BackgroundGrid;
use crate::linalg::{DofMap, Factor};
use crate::mpoints::{Material, MaterialPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassMode {
    Consistent,
    Lumped,
    Ghost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StressOrder {
    Usf,
    Usl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VelocityUpdate {
    Flip,
    Pic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub basis: BasisKind,
    pub mass_mode: MassMode,
    pub stress_order: StressOrder,
    pub velocity_update: VelocityUpdate,
    pub gamma_m: f64,
    pub gravity: Vector2<f64>,
}

impl ExplicitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(MpmError::Config(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.gamma_m >= 0.0) {
            return Err(MpmError::Config(format!("gamma_M must be non-negative, got {}", self.gamma_m)));
        }
        Ok(())
    }
}

/// Factorised per-axis grid mass of one step.
pub struct GridMass {
    pub maps: [DofMap; 2],
    factors: [Factor; 2],
}

impl GridMass {
    pub fn build(
        grid: &BackgroundGrid,
        topo: &StepTopology,
        points: &[MaterialPoint],
        mode: MassMode,
        gamma_m: f64,
    ) -> Result<Self> {
        let maps = [topo.dof_map(grid, &[0]), topo.dof_map(grid, &[1])];
        let factor = |map: &DofMap| -> Result<Factor> {
            match mode {
                MassMode::Lumped => {
                    Factor::diagonal(assembly::assemble_lumped_mass(&topo.basis, points, map))
                }
                MassMode::Consistent => {
                    let pat = topo.pattern(map);
                    assembly::assemble_mass(&topo.basis, points, map, &pat).cholesky()
                }
                MassMode::Ghost => {
                    let pat = topo.pattern(map);
                    let m = assembly::assemble_mass(&topo.basis, points, map, &pat);
                    let jg = topo.ghost_matrix(grid, map, &pat);
                    m.add_scaled(gamma_m, &jg).cholesky()
                }
            }
        };
        let factors = [factor(&maps[0])?, factor(&maps[1])?];
        Ok(GridMass { maps, factors })
    }

    /// Solve `M x = rhs` per axis, returning nodal vectors.
    pub fn solve(&self, rhs: &[Vec<f64>; 2], n_nodes: usize) -> Result<Vec<Vector2<f64>>> {
        let xs = [self.factors[0].solve(&rhs[0])?, self.factors[1].solve(&rhs[1])?];
        Ok(assembly::scatter_axes(&self.maps, &xs, n_nodes))
    }

    /// Nodal velocities from point momentum.
    pub fn map_velocity(
        &self,
        basis: &[BasisContribution],
        points: &[MaterialPoint],
        n_nodes: usize,
    ) -> Result<Vec<Vector2<f64>>> {
        let rhs = [
            assembly::assemble_momentum(basis, points, &self.maps[0]),
            assembly::assemble_momentum(basis, points, &self.maps[1]),
        ];
        self.solve(&rhs, n_nodes)
    }
}

/// Nodal velocities of the current point state (Dirichlet dofs zero).
pub fn map_velocity_to_grid(
    grid: &BackgroundGrid,
    kind: BasisKind,
    points: &[MaterialPoint],
    mode: MassMode,
    gamma_m: f64,
) -> Result<(StepTopology, Vec<Vector2<f64>>)> {
    let topo = StepTopology::build(grid, kind, points, mode == MassMode::Ghost)?;
    let mass = GridMass::build(grid, &topo, points, mode, gamma_m)?;
    let v = mass.map_velocity(&topo.basis, points, grid.n_nodes())?;
    Ok((topo, v))
}

/// Per-step summary.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    pub energy: EnergyRow,
    pub max_nodal_speed: f64,
    pub ghost_faces: Vec<usize>,
}

/// Outcome of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub steps_completed: usize,
    pub divergence: Option<(usize, String)>,
    pub energy: Vec<EnergyRow>,
}

pub struct ExplicitSolver<'a> {
    pub grid: &'a BackgroundGrid,
    pub materials: &'a [Material],
    pub cfg: ExplicitConfig,
}

impl<'a> ExplicitSolver<'a> {
    pub fn new(grid: &'a BackgroundGrid, materials: &'a [Material], cfg: ExplicitConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(ExplicitSolver { grid, materials, cfg })
    }

    /// Advance all points by one time step.
    pub fn step(&self, points: &mut [MaterialPoint], step: usize) -> Result<StepReport> {
        let grid = self.grid;
        let cfg = &self.cfg;
        let n_nodes = grid.n_nodes();
        let topo = StepTopology::build(grid, cfg.basis, points, cfg.mass_mode == MassMode::Ghost)?;
        let mass = GridMass::build(grid, &topo, points, cfg.mass_mode, cfg.gamma_m)?;
        let v_n = mass.map_velocity(&topo.basis, points, n_nodes)?;

        if cfg.stress_order == StressOrder::Usf {
            self.update_deformation(points, &topo.basis, &v_n)?;
        }

        let mut rhs: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for (axis, r) in rhs.iter_mut().enumerate() {
            let map = &mass.maps[axis];
            let fe = assembly::assemble_body_force(&topo.basis, points, &cfg.gravity, map);
            let fi = assembly::assemble_internal_force_points(&topo.basis, points, map);
            *r = fe.iter().zip(&fi).map(|(a, b)| a - b).collect();
        }
        let acc = mass.solve(&rhs, n_nodes)?;
        let v_next: Vec<Vector2<f64>> = v_n.iter().zip(&acc).map(|(v, a)| v + cfg.dt * a).collect();

        let dt = cfg.dt;
        points.par_iter_mut().zip(topo.basis.par_iter()).for_each(|(p, b)| {
            match cfg.velocity_update {
                VelocityUpdate::Flip => p.v += dt * b.interpolate(&acc),
                VelocityUpdate::Pic => p.v = b.interpolate(&v_next),
            }
            p.x += dt * b.interpolate(&v_next);
        });

        if cfg.stress_order == StressOrder::Usl {
            // The strain increment uses the updated point momentum mapped back
            // through the start-of-step mass matrix.
            let v_usl = mass.map_velocity(&topo.basis, points, n_nodes)?;
            self.update_deformation(points, &topo.basis, &v_usl)?;
        }
        basis::update_domains(points)?;
        if let Some((i, p)) = points
            .iter()
            .enumerate()
            .find(|(_, p)| !p.x.iter().chain(p.v.iter()).all(|v| v.is_finite()))
        {
            return Err(MpmError::NonPhysical(format!("point {i} has a non-finite state: {:?}", p.x)));
        }
        let max_nodal_speed = v_next.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let t = step as f64 * dt;
        Ok(StepReport {
            step,
            t,
            energy: diagnostics::energy_budget(points, step, t, 0.0),
            max_nodal_speed,
            ghost_faces: topo.faces.face_ids(),
        })
    }

    /// `F <- (I + dt sum v (x) grad S) F` and the matching stress update.
    fn update_deformation(
        &self,
        points: &mut [MaterialPoint],
        basis: &[BasisContribution],
        v_nodal: &[Vector2<f64>],
    ) -> Result<()> {
        let dt = self.cfg.dt;
        let materials = self.materials;
        points
            .par_iter_mut()
            .zip(basis.par_iter())
            .enumerate()
            .try_for_each(|(i, (p, b))| {
                let df = Matrix2::identity() + dt * b.gradient(v_nodal);
                let f_new = df * p.f;
                let j = f_new.determinant();
                if !(j > 0.0) {
                    return Err(MpmError::NonPhysical(format!(
                        "point {i}: det(F) = {j} is not positive"
                    )));
                }
                let s = update_stress(&materials[p.material_id], &df, &p.eps_e, j)
                    .map_err(|e| MpmError::NonPhysical(format!("point {i}: {e}")))?;
                p.f = f_new;
                p.vol = j * p.v0;
                p.eps_e = s.eps_e;
                p.tau = s.tau;
                p.sigma = s.sigma;
                p.w_plastic += s.d_wp * p.v0;
                p.eq_plastic += s.d_eq_plastic();
                Ok(())
            })
    }

    /// Run all steps; numerical failures end the run as a recorded divergence.
    pub fn run<F>(&self, points: &mut [MaterialPoint], mut observe: F) -> Result<RunOutcome>
    where
        F: FnMut(&StepReport, &[MaterialPoint]) -> Result<()>,
    {
        let w0 = diagnostics::kinetic_energy(points) + diagnostics::strain_energy(points);
        let mut energy = vec![diagnostics::energy_budget(points, 0, 0.0, w0)];
        for step in 1..=self.cfg.n_steps {
            match self.step(points, step) {
                Ok(mut rep) => {
                    rep.energy = diagnostics::energy_budget(points, step, rep.t, w0);
                    energy.push(rep.energy);
                    observe(&rep, points)?;
                }
                Err(e @ (MpmError::Config(_) | MpmError::Io(_))) => return Err(e),
                Err(e) => {
                    return Ok(RunOutcome {
                        steps_completed: step - 1,
                        divergence: Some((step, e.to_string())),
                        energy,
                    })
                }
            }
        }
        Ok(RunOutcome { steps_completed: self.cfg.n_steps, divergence: None, energy })
    }
}
