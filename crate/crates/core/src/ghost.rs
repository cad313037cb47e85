//! Boundary element edge identification and the ghost penalty matrix `J_G`.
//!
//! `J_G` penalises the jump of the normal displacement gradient across the
//! faces between active elements next to the edge of the material:
//! `J_G = h^3/3 * sum_faces int (q q^T)`, where `q_a` is the normal derivative
//! of node `a`'s shape function on the `+` side minus that on the `-` side.
//! The same scalar block is applied to each displacement component.

use std::collections::BTreeMap;

use nalgebra::SMatrix;
use rayon::prelude::*;

use crate::basis::{populated_elements, BasisKind};
use crate::grid::BackgroundGrid;
use crate::linalg::{CscMatrix, DofMap};
use crate::mpoints::MaterialPoint;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GhostFace {
    pub face: usize,
    pub plus: usize,
    pub minus: usize,
    /// Bodies whose boundary produced this face.
    pub bodies: Vec<usize>,
}

/// Faces over which the ghost penalty is integrated, sorted by face id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GhostFaceSet {
    pub faces: Vec<GhostFace>,
}

impl GhostFaceSet {
    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn face_ids(&self) -> Vec<usize> {
        self.faces.iter().map(|f| f.face).collect()
    }
}

/// Active-element flags per body: elements populated by the body's points.
pub fn active_elements(
    grid: &BackgroundGrid,
    kind: BasisKind,
    points: &[MaterialPoint],
) -> BTreeMap<usize, Vec<bool>> {
    let mut out: BTreeMap<usize, Vec<bool>> = BTreeMap::new();
    for p in points {
        let flags = out
            .entry(p.body_id)
            .or_insert_with(|| vec![false; grid.n_elements()]);
        for e in populated_elements(grid, kind, &p.x, &p.half_lengths) {
            flags[e] = true;
        }
    }
    out
}

/// Boundary element edges of a single body.
pub fn boundary_edges(grid: &BackgroundGrid, active: &[bool]) -> Vec<usize> {
    let mut boundary = vec![false; grid.n_elements()];
    for &(p, m) in &grid.face_connectivity {
        if active[p] != active[m] {
            boundary[if active[p] { p } else { m }] = true;
        }
    }
    let mut faces: Vec<usize> = (0..grid.n_elements())
        .filter(|&e| boundary[e])
        .flat_map(|e| grid.element_faces(e).iter().copied())
        .filter(|&f| {
            let (p, m) = grid.face_connectivity[f];
            active[p] && active[m]
        })
        .collect();
    faces.sort_unstable();
    faces.dedup();
    faces
}

/// Union over bodies of the per-body boundary element edges.
pub fn identify_boundary_edges(
    grid: &BackgroundGrid,
    active_per_body: &BTreeMap<usize, Vec<bool>>,
) -> GhostFaceSet {
    let mut by_face: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&body, active) in active_per_body {
        for f in boundary_edges(grid, active) {
            by_face.entry(f).or_default().push(body);
        }
    }
    GhostFaceSet {
        faces: by_face
            .into_iter()
            .map(|(face, bodies)| {
                let (plus, minus) = grid.face_connectivity[face];
                GhostFace { face, plus, minus, bodies }
            })
            .collect(),
    }
}

/// The six distinct nodes of a face pair: `+` element nodes, then the two
/// `-` element nodes not on the face.
pub fn face_nodes(grid: &BackgroundGrid, face: usize) -> [usize; 6] {
    let (p, m) = grid.face_connectivity[face];
    let tp = grid.element_topology[p];
    let mut out = [0; 6];
    out[..4].copy_from_slice(&tp);
    let mut k = 4;
    for n in grid.element_topology[m] {
        if !tp.contains(&n) {
            out[k] = n;
            k += 1;
        }
    }
    out
}

/// Scalar face contribution to `J_G` over [`face_nodes`].
pub fn face_matrix(grid: &BackgroundGrid, face: usize) -> ([usize; 6], SMatrix<f64, 6, 6>) {
    let (p, m) = grid.face_connectivity[face];
    let nodes = face_nodes(grid, face);
    let geo = grid
        .face_geometry(face)
        .expect("face id from the grid's own connectivity");
    let n = geo.normal;
    let mut jf = SMatrix::<f64, 6, 6>::zeros();
    for qp in &geo.quadrature {
        let mut q = SMatrix::<f64, 6, 1>::zeros();
        let (_, gp) = grid.element_shape(p, &qp.x);
        let (_, gm) = grid.element_shape(m, &qp.x);
        for a in 0..4 {
            q[a] += gp[a].dot(&n);
            let node = grid.element_topology[m][a];
            let slot = nodes.iter().position(|&x| x == node).expect("node of face pair");
            q[slot] -= gm[a].dot(&n);
        }
        jf += q * q.transpose() * (qp.weight * qp.det_jac);
    }
    (nodes, jf * (grid.h.powi(3) / 3.0))
}

/// Node cliques coupled by the ghost faces.
pub fn face_cliques(grid: &BackgroundGrid, faces: &GhostFaceSet) -> Vec<[usize; 6]> {
    faces.faces.iter().map(|f| face_nodes(grid, f.face)).collect()
}

/// Assemble `J_G` on `map` into a zeroed copy of `pattern`, one identical
/// scalar block per axis of the map.
pub fn assemble_jg(
    grid: &BackgroundGrid,
    faces: &GhostFaceSet,
    map: &DofMap,
    pattern: &CscMatrix,
) -> CscMatrix {
    let local: Vec<_> = faces
        .faces
        .par_iter()
        .map(|f| face_matrix(grid, f.face))
        .collect();
    let mut jg = pattern.zeroed();
    for (nodes, jf) in &local {
        for &axis in map.axes() {
            for (a, &na) in nodes.iter().enumerate() {
                let Some(r) = map.get(na, axis) else { continue };
                for (b, &nb) in nodes.iter().enumerate() {
                    if let Some(c) = map.get(nb, axis) {
                        jg.add(r, c, jf[(a, b)]);
                    }
                }
            }
        }
    }
    jg
}

/// Default mass penalty `rho / 4`.
pub fn default_gamma_m(rho: f64) -> f64 {
    0.25 * rho
}
