//! Regular bi-linear quadrilateral background grid with its face skeleton.
//!
//! Nodes are numbered row by row (`j * (nx + 1) + i`), elements likewise
//! (`j * nx + i`). Element nodes run counter-clockwise from the bottom-left
//! corner. Internal faces are listed vertical faces first (left element is the
//! `+` side, normal `(1, 0)`), then horizontal faces (lower element is the `+`
//! side, normal `(0, 1)`).

use std::collections::BTreeSet;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{MpmError, Result};

/// Axis selector used for Dirichlet constraints and per-axis matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

/// Homogeneous constraint on every node lying on a grid line.
///
/// `line = X, at = 0.0` selects the vertical line `x = 0`; `dofs` lists the
/// displacement components fixed on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletLine {
    pub line: Axis,
    pub at: f64,
    pub dofs: Vec<Axis>,
}

/// One face quadrature point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceQuadPoint {
    pub x: Vector2<f64>,
    pub weight: f64,
    pub det_jac: f64,
}

/// Geometry of an internal face.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceGeometry {
    pub face: usize,
    pub normal: Vector2<f64>,
    pub length: f64,
    pub quadrature: Vec<FaceQuadPoint>,
}

#[derive(Debug, Clone)]
pub struct BackgroundGrid {
    pub origin: Vector2<f64>,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub node_coords: Vec<Vector2<f64>>,
    pub element_topology: Vec<[usize; 4]>,
    /// `(plus, minus)` element pair of each internal face.
    pub face_connectivity: Vec<(usize, usize)>,
    pub face_topology: Vec<[usize; 2]>,
    /// Constrained `(node, axis index)` pairs.
    pub fixed_dofs: BTreeSet<(usize, usize)>,
    element_faces: Vec<Vec<usize>>,
}

const GAUSS_2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

impl BackgroundGrid {
    pub fn new(
        origin: Vector2<f64>,
        h: f64,
        nx: usize,
        ny: usize,
        dirichlet: &[DirichletLine],
    ) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(MpmError::Config(format!("element size must be positive, got {h}")));
        }
        if nx == 0 || ny == 0 {
            return Err(MpmError::Config(format!(
                "element counts must be at least 1, got nx={nx}, ny={ny}"
            )));
        }
        let node_coords = (0..=ny)
            .flat_map(|j| {
                (0..=nx).map(move |i| origin + Vector2::new(i as f64 * h, j as f64 * h))
            })
            .collect();
        let element_topology = (0..ny)
            .flat_map(|j| {
                (0..nx).map(move |i| {
                    let n0 = j * (nx + 1) + i;
                    [n0, n0 + 1, n0 + nx + 2, n0 + nx + 1]
                })
            })
            .collect();

        let mut face_connectivity = Vec::new();
        let mut face_topology = Vec::new();
        for j in 0..ny {
            for i in 1..nx {
                face_connectivity.push((j * nx + i - 1, j * nx + i));
                let n = j * (nx + 1) + i;
                face_topology.push([n, n + nx + 1]);
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                face_connectivity.push(((j - 1) * nx + i, j * nx + i));
                let n = j * (nx + 1) + i;
                face_topology.push([n, n + 1]);
            }
        }
        let mut element_faces = vec![Vec::new(); nx * ny];
        for (f, &(p, m)) in face_connectivity.iter().enumerate() {
            element_faces[p].push(f);
            element_faces[m].push(f);
        }

        let mut grid = BackgroundGrid {
            origin,
            h,
            nx,
            ny,
            node_coords,
            element_topology,
            face_connectivity,
            face_topology,
            fixed_dofs: BTreeSet::new(),
            element_faces,
        };
        for spec in dirichlet {
            grid.fix_line(spec)?;
        }
        Ok(grid)
    }

    fn fix_line(&mut self, spec: &DirichletLine) -> Result<()> {
        let tol = 1e-9 * self.h;
        let mut hit = false;
        for (n, x) in self.node_coords.iter().enumerate() {
            if (x[spec.line.index()] - spec.at).abs() <= tol {
                hit = true;
                for d in &spec.dofs {
                    self.fixed_dofs.insert((n, d.index()));
                }
            }
        }
        if !hit {
            return Err(MpmError::Config(format!(
                "constraint line {:?} = {} does not coincide with a grid line",
                spec.line, spec.at
            )));
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn n_elements(&self) -> usize {
        self.element_topology.len()
    }

    pub fn n_faces(&self) -> usize {
        self.face_connectivity.len()
    }

    /// Upper-right corner of the grid.
    pub fn extent(&self) -> Vector2<f64> {
        self.origin + Vector2::new(self.nx as f64 * self.h, self.ny as f64 * self.h)
    }

    pub fn is_fixed(&self, node: usize, axis: usize) -> bool {
        self.fixed_dofs.contains(&(node, axis))
    }

    pub fn node_id(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn element_id(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn element_ij(&self, e: usize) -> (usize, usize) {
        (e % self.nx, e / self.nx)
    }

    pub fn element_centre(&self, e: usize) -> Vector2<f64> {
        let (i, j) = self.element_ij(e);
        self.origin + Vector2::new((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }

    /// Internal faces attached to element `e` (at most four).
    pub fn element_faces(&self, e: usize) -> &[usize] {
        &self.element_faces[e]
    }

    /// Element whose closed box contains `x`; ties on interior lines go to the
    /// higher index.
    pub fn locate_element(&self, x: &Vector2<f64>) -> Option<usize> {
        let i = self.locate_axis(x[0] - self.origin[0], self.nx)?;
        let j = self.locate_axis(x[1] - self.origin[1], self.ny)?;
        Some(self.element_id(i, j))
    }

    fn locate_axis(&self, rel: f64, n: usize) -> Option<usize> {
        if !(rel >= 0.0) || rel > n as f64 * self.h {
            return None;
        }
        Some(((rel / self.h).floor() as usize).min(n - 1))
    }

    /// Bi-linear shape values and global gradients of element `e` at `x`.
    pub fn element_shape(&self, e: usize, x: &Vector2<f64>) -> ([f64; 4], [Vector2<f64>; 4]) {
        const CORNERS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
        let c = self.element_centre(e);
        let xi = 2.0 * (x[0] - c[0]) / self.h;
        let eta = 2.0 * (x[1] - c[1]) / self.h;
        let mut n = [0.0; 4];
        let mut g = [Vector2::zeros(); 4];
        for (a, &(xa, ya)) in CORNERS.iter().enumerate() {
            n[a] = 0.25 * (1.0 + xa * xi) * (1.0 + ya * eta);
            g[a] = Vector2::new(
                0.25 * xa * (1.0 + ya * eta) * 2.0 / self.h,
                0.25 * ya * (1.0 + xa * xi) * 2.0 / self.h,
            );
        }
        (n, g)
    }

    pub fn face_normal(&self, face: usize) -> Vector2<f64> {
        let [a, b] = self.face_topology[face];
        if (self.node_coords[a][0] - self.node_coords[b][0]).abs() < 0.5 * self.h {
            Vector2::new(1.0, 0.0)
        } else {
            Vector2::new(0.0, 1.0)
        }
    }

    /// Two-point Gauss-Legendre quadrature on an internal face.
    pub fn face_geometry(&self, face: usize) -> Result<FaceGeometry> {
        if face >= self.n_faces() {
            return Err(MpmError::Index {
                what: "face",
                index: face,
                len: self.n_faces(),
            });
        }
        let [a, b] = self.face_topology[face];
        let (xa, xb) = (self.node_coords[a], self.node_coords[b]);
        let mid = 0.5 * (xa + xb);
        let half = 0.5 * (xb - xa);
        let quadrature = GAUSS_2
            .iter()
            .map(|&s| FaceQuadPoint {
                x: mid + s * half,
                weight: 1.0,
                det_jac: 0.5 * self.h,
            })
            .collect();
        Ok(FaceGeometry {
            face,
            normal: self.face_normal(face),
            length: self.h,
            quadrature,
        })
    }
}
