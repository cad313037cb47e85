//! CSV, legacy VTK, and JSON artifact writers.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::constitutive::rho;
use crate::error::Result;
use crate::grid::BackgroundGrid;
use crate::mpoints::MaterialPoint;

/// Artifact destination with snapshot and ghost-edge dump settings.
#[derive(Debug, Clone)]
pub struct Output {
    pub dir: PathBuf,
    pub snapshot_stride: usize,
    pub dump_ghost_edges: bool,
}

impl Output {
    pub fn new(dir: impl Into<PathBuf>, snapshot_stride: usize, dump_ghost_edges: bool) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let out = Output { dir, snapshot_stride, dump_ghost_edges };
        if dump_ghost_edges {
            let mut f = File::create(out.path("ghost_edges.csv"))?;
            writeln!(f, "step,face,x0,y0,x1,y1")?;
        }
        Ok(out)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Write a VTK snapshot when `step` falls on the stride.
    pub fn maybe_snapshot(
        &self,
        step: usize,
        points: &[MaterialPoint],
        disp_error: Option<&[f64]>,
    ) -> Result<()> {
        if self.snapshot_stride > 0 && step % self.snapshot_stride == 0 {
            write_vtk(&self.path(&format!("points_{step:05}.vtk")), points, disp_error)?;
        }
        Ok(())
    }

    /// Append the faces of one step to `ghost_edges.csv` when enabled.
    pub fn ghost_edges(&self, step: usize, grid: &BackgroundGrid, faces: &[usize]) -> Result<()> {
        if !self.dump_ghost_edges {
            return Ok(());
        }
        let mut f = BufWriter::new(OpenOptions::new().append(true).open(self.path("ghost_edges.csv"))?);
        for &face in faces {
            let [a, b] = grid.face_topology[face];
            let (pa, pb) = (grid.node_coords[a], grid.node_coords[b]);
            writeln!(f, "{step},{face},{},{},{},{}", pa[0], pa[1], pb[0], pb[1])?;
        }
        Ok(())
    }
}

/// Write a table with a header row.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::error::MpmError {
    std::io::Error::other(e.to_string()).into()
}

pub fn write_summary<T: Serialize>(path: &Path, summary: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).map_err(std::io::Error::other)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Legacy ASCII POLYDATA snapshot with per-point scalars.
pub fn write_vtk(path: &Path, points: &[MaterialPoint], disp_error: Option<&[f64]>) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    let n = points.len();
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "material points")?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET POLYDATA")?;
    writeln!(f, "POINTS {n} double")?;
    for p in points {
        writeln!(f, "{:.12e} {:.12e} 0", p.x[0], p.x[1])?;
    }
    writeln!(f, "VERTICES {n} {}", 2 * n)?;
    for i in 0..n {
        writeln!(f, "1 {i}")?;
    }
    writeln!(f, "POINT_DATA {n}")?;
    let mut scalar = |name: &str, vals: &mut dyn Iterator<Item = f64>| -> Result<()> {
        writeln!(f, "SCALARS {name} double 1")?;
        writeln!(f, "LOOKUP_TABLE default")?;
        for v in vals {
            writeln!(f, "{v:.12e}")?;
        }
        Ok(())
    };
    scalar("speed", &mut points.iter().map(|p| p.v.norm()))?;
    scalar("sigma_yy", &mut points.iter().map(|p| p.sigma[(1, 1)]))?;
    scalar("eq_plastic_strain", &mut points.iter().map(|p| p.eq_plastic))?;
    scalar("rho", &mut points.iter().map(|p| rho(&p.tau)))?;
    scalar("body_id", &mut points.iter().map(|p| p.body_id as f64))?;
    if let Some(e) = disp_error {
        scalar("displacement_error", &mut e.iter().copied())?;
    }
    f.flush()?;
    Ok(())
}
