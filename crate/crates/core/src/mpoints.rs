//! Material point state, materials, and point generators.

use std::path::Path;

use nalgebra::{Matrix2, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{MpmError, Result};
use crate::grid::BackgroundGrid;

/// Isotropic Hencky material with optional von Mises yield stress.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    #[serde(rename = "E")]
    pub e: f64,
    pub nu: f64,
    pub rho0: f64,
    #[serde(default)]
    pub yield_stress: Option<f64>,
}

impl Material {
    pub fn new(e: f64, nu: f64, rho0: f64, yield_stress: Option<f64>) -> Result<Self> {
        let m = Material { e, nu, rho0, yield_stress };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.e >= 0.0
            && self.nu > -1.0
            && self.nu < 0.5
            && self.rho0 >= 0.0
            && self.yield_stress.is_none_or(|y| y > 0.0);
        if ok {
            Ok(())
        } else {
            Err(MpmError::Config(format!("invalid material parameters: {self:?}")))
        }
    }

    pub fn lambda(&self) -> f64 {
        self.e * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))
    }

    pub fn mu(&self) -> f64 {
        self.e / (2.0 * (1.0 + self.nu))
    }

    pub fn bulk(&self) -> f64 {
        self.lambda() + 2.0 * self.mu() / 3.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialPoint {
    pub body_id: usize,
    pub material_id: usize,
    pub x: Vector2<f64>,
    pub x0: Vector2<f64>,
    pub v0: f64,
    pub vol: f64,
    pub mass: f64,
    pub v: Vector2<f64>,
    pub f: Matrix2<f64>,
    /// Elastic logarithmic strain including the out-of-plane component.
    pub eps_e: Matrix3<f64>,
    pub tau: Matrix3<f64>,
    pub sigma: Matrix3<f64>,
    pub half_lengths: Vector2<f64>,
    pub half_lengths0: Vector2<f64>,
    /// Accumulated equivalent plastic strain.
    pub eq_plastic: f64,
    /// Accumulated plastic dissipation (J per unit thickness).
    pub w_plastic: f64,
}

impl MaterialPoint {
    pub fn new(
        x: Vector2<f64>,
        v0: f64,
        half_lengths: Vector2<f64>,
        material: &Material,
        material_id: usize,
        body_id: usize,
    ) -> Self {
        MaterialPoint {
            body_id,
            material_id,
            x,
            x0: x,
            v0,
            vol: v0,
            mass: material.rho0 * v0,
            v: Vector2::zeros(),
            f: Matrix2::identity(),
            eps_e: Matrix3::zeros(),
            tau: Matrix3::zeros(),
            sigma: Matrix3::zeros(),
            half_lengths,
            half_lengths0: half_lengths,
            eq_plastic: 0.0,
            w_plastic: 0.0,
        }
    }

    pub fn displacement(&self) -> Vector2<f64> {
        self.x - self.x0
    }
}

/// Axis-aligned rectangle `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

/// Fill a grid-aligned rectangle with `ppc x ppc` equally spaced points per cell.
pub fn generate_block(
    grid: &BackgroundGrid,
    rect: &Rect,
    ppc: usize,
    material: &Material,
    material_id: usize,
    body_id: usize,
) -> Result<Vec<MaterialPoint>> {
    if ppc == 0 {
        return Err(MpmError::Config("points per cell must be at least 1".into()));
    }
    let h = grid.h;
    let mut cells = [(0usize, 0usize); 2];
    for k in 0..2 {
        let a = (rect.min[k] - grid.origin[k]) / h;
        let b = (rect.max[k] - grid.origin[k]) / h;
        let (ia, ib) = (a.round(), b.round());
        if (a - ia).abs() > 1e-9 || (b - ib).abs() > 1e-9 || ib <= ia || ia < 0.0 {
            return Err(MpmError::Config(format!(
                "block {rect:?} is not aligned with the grid lines (h = {h})"
            )));
        }
        cells[k] = (ia as usize, ib as usize);
    }
    if cells[0].1 > grid.nx || cells[1].1 > grid.ny {
        return Err(MpmError::Config(format!("block {rect:?} extends beyond the grid")));
    }
    let dx = h / ppc as f64;
    let vol = dx * dx;
    let half = Vector2::new(0.5 * dx, 0.5 * dx);
    let mut out = Vec::new();
    for cj in cells[1].0..cells[1].1 {
        for py in 0..ppc {
            for ci in cells[0].0..cells[0].1 {
                for px in 0..ppc {
                    let x = grid.origin
                        + Vector2::new(
                            ci as f64 * h + (px as f64 + 0.5) * dx,
                            cj as f64 * h + (py as f64 + 0.5) * dx,
                        );
                    out.push(MaterialPoint::new(x, vol, half, material, material_id, body_id));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct CloudRow {
    x: f64,
    y: f64,
    #[serde(rename = "V0")]
    v0: f64,
    lx: f64,
    ly: f64,
    body_id: usize,
    material_id: usize,
}

/// Read a `x,y,V0,lx,ly,body_id,material_id` CSV point cloud.
pub fn import_point_cloud(path: &Path, materials: &[Material]) -> Result<Vec<MaterialPoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_error(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            parse_error(path, e.position().map_or(0, |p| p.line()), e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: CloudRow = rec
            .deserialize(None)
            .map_err(|e| parse_error(path, line, e.to_string()))?;
        if !(row.v0 > 0.0) {
            return Err(parse_error(path, line, format!("non-positive volume {}", row.v0)));
        }
        if !(row.lx > 0.0 && row.ly > 0.0) {
            return Err(parse_error(path, line, "non-positive domain half-length".into()));
        }
        let mat = materials.get(row.material_id).ok_or_else(|| {
            parse_error(path, line, format!("unknown material id {}", row.material_id))
        })?;
        out.push(MaterialPoint::new(
            Vector2::new(row.x, row.y),
            row.v0,
            Vector2::new(row.lx, row.ly),
            mat,
            row.material_id,
            row.body_id,
        ));
    }
    Ok(out)
}

fn parse_error(path: &Path, line: u64, message: String) -> MpmError {
    MpmError::Parse { path: path.to_path_buf(), line, message }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn steel() -> Material {
        Material::new(1.0, 0.0, 1.0, None).unwrap()
    }

    #[test]
    fn material_moduli() {
        let m = Material::new(1000.0, 0.3, 1000.0, None).unwrap();
        assert!((m.lambda() - 576.923_076_923_076_9).abs() < 1e-9);
        assert!((m.mu() - 384.615_384_615_384_6).abs() < 1e-9);
        assert!(Material::new(1.0, 0.5, 1.0, None).is_err());
        assert!(Material::new(1.0, 0.2, 1.0, Some(0.0)).is_err());
    }

    #[test]
    fn unit_cell_block() {
        let g = BackgroundGrid::new(Vector2::zeros(), 1.0, 1, 1, &[]).unwrap();
        let r = Rect { min: [0.0, 0.0], max: [1.0, 1.0] };
        let p = generate_block(&g, &r, 2, &steel(), 0, 0).unwrap();
        let want = [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)];
        assert_eq!(p.len(), 4);
        for (pt, w) in p.iter().zip(want) {
            assert_eq!((pt.x[0], pt.x[1]), w);
            assert_eq!(pt.v0, 0.25);
            assert_eq!(pt.half_lengths, Vector2::new(0.25, 0.25));
        }
    }

    #[test]
    fn two_by_one_block_has_eight_points() {
        let g = BackgroundGrid::new(Vector2::zeros(), 1.0, 5, 1, &[]).unwrap();
        let r = Rect { min: [0.0, 0.0], max: [2.0, 1.0] };
        let p = generate_block(&g, &r, 2, &steel(), 0, 0).unwrap();
        assert_eq!(p.len(), 8);
        assert!(p.iter().all(|q| q.v0 == 0.25));
    }

    #[test]
    fn misaligned_block_rejected() {
        let g = BackgroundGrid::new(Vector2::zeros(), 1.0, 5, 1, &[]).unwrap();
        let r = Rect { min: [0.1, 0.0], max: [2.0, 1.0] };
        assert!(generate_block(&g, &r, 2, &steel(), 0, 0).is_err());
    }

    #[test]
    fn point_cloud_import() {
        let mats = [steel()];
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment\nx,y,V0,lx,ly,body_id,material_id\n0.5,0.5,0.25,0.25,0.25,0,0\n1.5,0.5,0.25,0.25,0.25,1,0").unwrap();
        let p = import_point_cloud(f.path(), &mats).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[1].body_id, 1);

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x,y,V0,lx,ly,body_id,material_id").unwrap();
        assert!(import_point_cloud(f.path(), &mats).unwrap().is_empty());

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x,y,V0,lx,ly,body_id,material_id\n0.5,0.5,0.25,0.25,0.25,0,0\n0.5,0.5,-1,0.25,0.25,0,0").unwrap();
        match import_point_cloud(f.path(), &mats) {
            Err(MpmError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn block_mass_and_placement(ppc in 1usize..6, ni in 1usize..4, nj in 1usize..4, rho in 0.5f64..2000.0) {
            let h = 0.1;
            let g = BackgroundGrid::new(Vector2::zeros(), h, 6, 6, &[]).unwrap();
            let r = Rect { min: [h, 2.0 * h], max: [(1 + ni) as f64 * h, (2 + nj) as f64 * h] };
            let m = Material::new(1.0, 0.2, rho, None).unwrap();
            let p = generate_block(&g, &r, ppc, &m, 0, 0).unwrap();
            prop_assert_eq!(p.len(), ni * nj * ppc * ppc);
            let mass: f64 = p.iter().map(|q| q.mass).sum();
            let area = (ni * nj) as f64 * h * h;
            prop_assert!((mass - rho * area).abs() <= 1e-12 * rho * area);
            for q in &p {
                let rel = q.x / h;
                prop_assert!((rel[0] - rel[0].round()).abs() > 1e-9);
                prop_assert!((rel[1] - rel[1].round()).abs() > 1e-9);
            }
        }
    }
}
