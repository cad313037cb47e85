//! TOML scenario configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::BasisKind;
use crate::error::{MpmError, Result};
use crate::grid::DirichletLine;
use crate::mpoints::{Material, Rect};
use crate::solver_explicit::{MassMode, StressOrder, VelocityUpdate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    TranslatingDomain,
    TranslatingBody,
    StretchingBody,
    CollidingElastic,
    CollidingPlastic,
    Column,
    Beam,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioName,
    #[serde(default = "default_basis")]
    pub basis: BasisKind,
    pub grid: GridSpec,
    pub materials: Vec<Material>,
    pub bodies: Vec<BodySpec>,
    pub solver: SolverSpec,
    #[serde(default)]
    pub ghost: GhostSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Rigid sweep used by the translating scenarios.
    #[serde(default)]
    pub translation: Option<TranslationSpec>,
    /// Analytical reference for the column scenario.
    #[serde(default)]
    pub column: Option<ColumnSpec>,
}

fn default_basis() -> BasisKind {
    BasisKind::Gimpm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub origin: [f64; 2],
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub fix: Vec<DirichletLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySpec {
    #[serde(default)]
    pub material: usize,
    /// Defaults to the body's position in the list.
    #[serde(default)]
    pub body_id: Option<usize>,
    #[serde(default)]
    pub block: Option<Rect>,
    #[serde(default)]
    pub points_per_cell: Option<usize>,
    /// CSV point cloud, resolved relative to the config file.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub velocity: Option<[f64; 2]>,
    #[serde(default)]
    pub expansion: Option<ExpansionSpec>,
}

/// Initial velocity `rate * (x - centre)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionSpec {
    pub centre: [f64; 2],
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverSpec {
    Explicit {
        dt: f64,
        n_steps: usize,
        mass: MassMode,
        #[serde(default = "default_order")]
        stress_update: StressOrder,
        #[serde(default = "default_update")]
        velocity_update: VelocityUpdate,
        #[serde(default)]
        gravity: [f64; 2],
    },
    Implicit {
        n_steps: usize,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_iters")]
        max_newton_iters: usize,
        load: LoadSpec,
    },
}

fn default_order() -> StressOrder {
    StressOrder::Usl
}

fn default_update() -> VelocityUpdate {
    VelocityUpdate::Flip
}

fn default_tol() -> f64 {
    1e-6
}

fn default_iters() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadSpec {
    BodyForce {
        gravity: [f64; 2],
    },
    PointLoad {
        total: [f64; 2],
        #[serde(default)]
        point_ids: Option<Vec<usize>>,
        /// Pick the two points nearest the free end either side of this
        /// horizontal axis.
        #[serde(default)]
        tip_pair_axis: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GhostSpec {
    #[serde(default)]
    pub enabled: bool,
    /// Defaults to a quarter of the largest density.
    #[serde(default)]
    pub gamma_m: Option<f64>,
    /// Defaults to the largest Young's modulus.
    #[serde(default)]
    pub gamma_k: Option<f64>,
}

impl Default for GhostSpec {
    fn default() -> Self {
        GhostSpec { enabled: false, gamma_m: None, gamma_k: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    /// Steps between VTK snapshots; 0 disables them.
    #[serde(default)]
    pub snapshot_stride: usize,
}

fn default_dir() -> PathBuf {
    PathBuf::from("output")
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { directory: default_dir(), snapshot_stride: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslationSpec {
    pub steps: usize,
    pub displacement: [f64; 2],
    /// Uniform point velocity mapped at each position.
    #[serde(default)]
    pub velocity: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub l0: f64,
    pub g: f64,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| MpmError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file; relative CSV paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MpmError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for b in &mut cfg.bodies {
            if let Some(csv) = &b.csv {
                if csv.is_relative() {
                    b.csv = Some(base.join(csv));
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.materials.is_empty() {
            return Err(MpmError::Config("at least one material is required".into()));
        }
        for m in &self.materials {
            m.validate()?;
        }
        for (i, b) in self.bodies.iter().enumerate() {
            if b.material >= self.materials.len() {
                return Err(MpmError::Config(format!("body {i} references unknown material {}", b.material)));
            }
            match (&b.block, &b.csv) {
                (Some(_), None) if b.points_per_cell.is_some() => {}
                (Some(_), None) => {
                    return Err(MpmError::Config(format!("body {i}: block needs points_per_cell")))
                }
                (None, Some(_)) => {}
                _ => {
                    return Err(MpmError::Config(format!(
                        "body {i}: exactly one of `block` or `csv` is required"
                    )))
                }
            }
            if b.velocity.is_some() && b.expansion.is_some() {
                return Err(MpmError::Config(format!(
                    "body {i}: `velocity` and `expansion` are exclusive"
                )));
            }
        }
        match self.scenario {
            ScenarioName::TranslatingDomain | ScenarioName::TranslatingBody
                if self.translation.is_none() =>
            {
                return Err(MpmError::Config("translating scenarios need a [translation] block".into()))
            }
            ScenarioName::Column if self.column.is_none() => {
                return Err(MpmError::Config("the column scenario needs a [column] block".into()))
            }
            _ => {}
        }
        if let Some(g) = self.ghost.gamma_m {
            if !(g >= 0.0) {
                return Err(MpmError::Config(format!("gamma_m must be non-negative, got {g}")));
            }
        }
        if let Some(g) = self.ghost.gamma_k {
            if !(g >= 0.0) {
                return Err(MpmError::Config(format!("gamma_k must be non-negative, got {g}")));
            }
        }
        Ok(())
    }

    pub fn gamma_m(&self) -> f64 {
        self.ghost.gamma_m.unwrap_or_else(|| {
            0.25 * self.materials.iter().map(|m| m.rho0).fold(0.0, f64::max)
        })
    }

    pub fn gamma_k(&self) -> f64 {
        self.ghost
            .gamma_k
            .unwrap_or_else(|| self.materials.iter().map(|m| m.e).fold(0.0, f64::max))
    }
}
