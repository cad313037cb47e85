//! Global mass, force, and stiffness assembly on reduced dof numbering.

use nalgebra::{Matrix2, Matrix4, Vector2};
use rayon::prelude::*;

use crate::basis::{self, BasisContribution, BasisKind};
use crate::constitutive::PAIRS;
use crate::error::Result;
use crate::ghost::{self, GhostFaceSet};
use crate::grid::BackgroundGrid;
use crate::linalg::{CscMatrix, DofMap};
use crate::mpoints::MaterialPoint;

/// Basis, active nodes, and ghost faces of one step.
#[derive(Debug, Clone)]
pub struct StepTopology {
    pub basis: Vec<BasisContribution>,
    pub active_nodes: Vec<bool>,
    pub faces: GhostFaceSet,
    face_cliques: Vec<[usize; 6]>,
}

impl StepTopology {
    /// Evaluate the basis at the current positions and, if `ghost`, identify
    /// the boundary element edges.
    pub fn build(
        grid: &BackgroundGrid,
        kind: BasisKind,
        points: &[MaterialPoint],
        ghost: bool,
    ) -> Result<Self> {
        let basis = basis::evaluate_all(grid, kind, points)?;
        let faces = if ghost {
            ghost::identify_boundary_edges(grid, &ghost::active_elements(grid, kind, points))
        } else {
            GhostFaceSet::default()
        };
        let face_cliques = ghost::face_cliques(grid, &faces);
        let mut active_nodes = vec![false; grid.n_nodes()];
        for b in &basis {
            for &n in &b.nodes {
                active_nodes[n] = true;
            }
        }
        for c in &face_cliques {
            for &n in c {
                active_nodes[n] = true;
            }
        }
        Ok(StepTopology { basis, active_nodes, faces, face_cliques })
    }

    pub fn dof_map(&self, grid: &BackgroundGrid, axes: &[usize]) -> DofMap {
        DofMap::new(grid.n_nodes(), axes, &self.active_nodes, &grid.fixed_dofs)
    }

    /// Sparsity pattern covering point supports and ghost face pairs.
    pub fn pattern(&self, map: &DofMap) -> CscMatrix {
        let pts = self.basis.iter().map(|b| b.nodes.as_slice());
        let faces = self.face_cliques.iter().map(|c| c.as_slice());
        CscMatrix::from_cliques(map, pts.chain(faces))
    }

    /// `J_G` on `map`, sharing `pattern`.
    pub fn ghost_matrix(&self, grid: &BackgroundGrid, map: &DofMap, pattern: &CscMatrix) -> CscMatrix {
        ghost::assemble_jg(grid, &self.faces, map, pattern)
    }
}

/// Consistent mass `sum_p m_p S^T S`, one identical block per axis of `map`.
pub fn assemble_mass(
    basis: &[BasisContribution],
    points: &[MaterialPoint],
    map: &DofMap,
    pattern: &CscMatrix,
) -> CscMatrix {
    let mut m = pattern.zeroed();
    for (b, p) in basis.iter().zip(points) {
        for &axis in map.axes() {
            for (i, &na) in b.nodes.iter().enumerate() {
                let Some(r) = map.get(na, axis) else { continue };
                for (j, &nb) in b.nodes.iter().enumerate() {
                    if let Some(c) = map.get(nb, axis) {
                        m.add(r, c, p.mass * b.s[i] * b.s[j]);
                    }
                }
            }
        }
    }
    m
}

/// Row-sum lumped mass `sum_p m_p S`.
pub fn assemble_lumped_mass(
    basis: &[BasisContribution],
    points: &[MaterialPoint],
    map: &DofMap,
) -> Vec<f64> {
    let mut d = vec![0.0; map.len()];
    for (b, p) in basis.iter().zip(points) {
        for &axis in map.axes() {
            for (i, &n) in b.nodes.iter().enumerate() {
                if let Some(r) = map.get(n, axis) {
                    d[r] += p.mass * b.s[i];
                }
            }
        }
    }
    d
}

/// `sum_p S (w_p)_axis` for per-point vectors `w`.
pub fn assemble_weighted(basis: &[BasisContribution], w: &[Vector2<f64>], map: &DofMap) -> Vec<f64> {
    let mut f = vec![0.0; map.len()];
    for (b, wp) in basis.iter().zip(w) {
        for (i, &n) in b.nodes.iter().enumerate() {
            for &axis in map.axes() {
                if let Some(r) = map.get(n, axis) {
                    f[r] += b.s[i] * wp[axis];
                }
            }
        }
    }
    f
}

/// Momentum `sum_p S m_p v_p`.
pub fn assemble_momentum(basis: &[BasisContribution], points: &[MaterialPoint], map: &DofMap) -> Vec<f64> {
    let w: Vec<_> = points.iter().map(|p| p.mass * p.v).collect();
    assemble_weighted(basis, &w, map)
}

/// Body force `sum_p S m_p g`.
pub fn assemble_body_force(
    basis: &[BasisContribution],
    points: &[MaterialPoint],
    g: &Vector2<f64>,
    map: &DofMap,
) -> Vec<f64> {
    let w: Vec<_> = points.iter().map(|p| p.mass * g).collect();
    assemble_weighted(basis, &w, map)
}

/// Internal force `sum_p grad S^T sigma_p V_p` from in-plane Cauchy stresses.
pub fn assemble_internal_force(
    basis: &[BasisContribution],
    sigma: &[Matrix2<f64>],
    vol: &[f64],
    map: &DofMap,
) -> Vec<f64> {
    let mut f = vec![0.0; map.len()];
    for ((b, s), &v) in basis.iter().zip(sigma).zip(vol) {
        for (g, &n) in b.grad.iter().zip(&b.nodes) {
            let t = s * g * v;
            for &axis in map.axes() {
                if let Some(r) = map.get(n, axis) {
                    f[r] += t[axis];
                }
            }
        }
    }
    f
}

/// Internal force from the points' stored stress and volume.
pub fn assemble_internal_force_points(
    basis: &[BasisContribution],
    points: &[MaterialPoint],
    map: &DofMap,
) -> Vec<f64> {
    let sigma: Vec<Matrix2<f64>> = points
        .iter()
        .map(|p| p.sigma.fixed_view::<2, 2>(0, 0).into_owned())
        .collect();
    let vol: Vec<f64> = points.iter().map(|p| p.vol).collect();
    assemble_internal_force(basis, &sigma, &vol, map)
}

/// Precomputed value slots of every point's local stiffness block.
#[derive(Debug, Clone)]
pub struct StiffnessPlan {
    pattern: CscMatrix,
    /// Per point: `(local row, local col, slot)`.
    slots: Vec<Vec<(u16, u16, usize)>>,
}

impl StiffnessPlan {
    pub fn new(basis: &[BasisContribution], map: &DofMap, pattern: &CscMatrix) -> Self {
        let slots = basis
            .par_iter()
            .map(|b| {
                let mut out = Vec::with_capacity(4 * b.len() * b.len());
                for (a, &na) in b.nodes.iter().enumerate() {
                    for i in 0..2 {
                        let Some(r) = map.get(na, i) else { continue };
                        for (c, &nc) in b.nodes.iter().enumerate() {
                            for m in 0..2 {
                                if let Some(col) = map.get(nc, m) {
                                    let k = slot_of(pattern, r, col);
                                    out.push(((2 * a + i) as u16, (2 * c + m) as u16, k));
                                }
                            }
                        }
                    }
                }
                out
            })
            .collect();
        StiffnessPlan { pattern: pattern.zeroed(), slots }
    }

    /// `K = sum_p V_p G^T a_p G` with `G` the current basis gradients.
    pub fn assemble(
        &self,
        basis: &[BasisContribution],
        tangents: &[Matrix4<f64>],
        vol: &[f64],
    ) -> CscMatrix {
        let locals: Vec<Vec<f64>> = basis
            .par_iter()
            .zip(tangents.par_iter())
            .zip(vol.par_iter())
            .map(|((b, a), &v)| local_stiffness(b, a, v))
            .collect();
        let mut values = vec![0.0; self.pattern.nnz()];
        for ((b, slots), local) in basis.iter().zip(&self.slots).zip(&locals) {
            let nd = 2 * b.len();
            for &(r, c, k) in slots {
                values[k] += local[r as usize * nd + c as usize];
            }
        }
        self.pattern.with_values(values)
    }
}

fn slot_of(pattern: &CscMatrix, row: usize, col: usize) -> usize {
    pattern
        .slot_index(row, col)
        .unwrap_or_else(|| panic!("entry ({row}, {col}) outside the sparsity pattern"))
}

/// Dense local stiffness, row-major over `(node, axis)` pairs.
pub fn local_stiffness(b: &BasisContribution, a: &Matrix4<f64>, vol: f64) -> Vec<f64> {
    let nd = 2 * b.len();
    let mut k = vec![0.0; nd * nd];
    // pair index of (i, j)
    let idx = |i: usize, j: usize| PAIRS.iter().position(|&p| p == (i, j)).unwrap();
    let mut lut = [[0usize; 2]; 2];
    for (i, row) in lut.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = idx(i, j);
        }
    }
    for (ia, ga) in b.grad.iter().enumerate() {
        for (ib, gb) in b.grad.iter().enumerate() {
            for i in 0..2 {
                for m in 0..2 {
                    let mut s = 0.0;
                    for j in 0..2 {
                        for r in 0..2 {
                            s += ga[j] * a[(lut[i][j], lut[m][r])] * gb[r];
                        }
                    }
                    k[(2 * ia + i) * nd + 2 * ib + m] = vol * s;
                }
            }
        }
    }
    k
}

/// Nodal vectors from a reduced solution; unmapped dofs are zero.
pub fn scatter(map: &DofMap, x: &[f64], n_nodes: usize) -> Vec<Vector2<f64>> {
    let mut out = vec![Vector2::zeros(); n_nodes];
    for (k, &(n, a)) in map.dofs().iter().enumerate() {
        out[n][a] = x[k];
    }
    out
}

/// Combine two per-axis solutions into nodal vectors.
pub fn scatter_axes(maps: &[DofMap; 2], xs: &[Vec<f64>; 2], n_nodes: usize) -> Vec<Vector2<f64>> {
    let mut out = vec![Vector2::zeros(); n_nodes];
    for (map, x) in maps.iter().zip(xs) {
        for (k, &(n, a)) in map.dofs().iter().enumerate() {
            out[n][a] = x[k];
        }
    }
    out
}

/// Reduced vector from nodal vectors.
pub fn gather(map: &DofMap, field: &[Vector2<f64>]) -> Vec<f64> {
    map.dofs().iter().map(|&(n, a)| field[n][a]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::update_stress;
    use crate::mpoints::{generate_block, Material, Rect};
    use nalgebra::Matrix3;
    use proptest::prelude::*;

    fn unit_grid(nx: usize, ny: usize) -> BackgroundGrid {
        BackgroundGrid::new(Vector2::zeros(), 1.0, nx, ny, &[]).unwrap()
    }

    fn mat() -> Material {
        Material::new(1.0, 0.0, 1.0, None).unwrap()
    }

    #[test]
    fn single_point_mass_blocks() {
        let g = unit_grid(1, 1);
        let p = vec![MaterialPoint::new(Vector2::new(0.5, 0.5), 1.0, Vector2::zeros(), &mat(), 0, 0)];
        let topo = StepTopology::build(&g, BasisKind::Smpm, &p, false).unwrap();
        let map = topo.dof_map(&g, &[0]);
        let m = assemble_mass(&topo.basis, &p, &map, &topo.pattern(&map)).to_dense();
        assert!(m.iter().all(|&v| (v - 1.0 / 16.0).abs() < 1e-15));
        let l = assemble_lumped_mass(&topo.basis, &p, &map);
        assert!(l.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn uniform_stress_nodal_forces() {
        let g = unit_grid(1, 1);
        let r = Rect { min: [0.0, 0.0], max: [1.0, 1.0] };
        let mut p = generate_block(&g, &r, 2, &mat(), 0, 0).unwrap();
        for q in &mut p {
            q.sigma[(1, 1)] = -1.0;
        }
        let topo = StepTopology::build(&g, BasisKind::Smpm, &p, false).unwrap();
        let map = topo.dof_map(&g, &[0, 1]);
        let f = assemble_internal_force_points(&topo.basis, &p, &map);
        let nodal = scatter(&map, &f, g.n_nodes());
        // bottom nodes pushed down-wards by -sigma, top nodes up
        for n in 0..4 {
            let want = if n < 2 { 0.5 } else { -0.5 };
            assert!((nodal[n][1] - want).abs() < 1e-14, "{n}: {}", nodal[n][1]);
            assert!(nodal[n][0].abs() < 1e-14);
        }
        let z: Vec<_> = p.iter().map(|_| Matrix2::zeros()).collect();
        let v: Vec<_> = p.iter().map(|q| q.vol).collect();
        assert!(assemble_internal_force(&topo.basis, &z, &v, &map).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn stiffness_matches_fd_of_internal_force() {
        let g = unit_grid(3, 3);
        let r = Rect { min: [1.0, 1.0], max: [2.0, 2.0] };
        let m = Material::new(1000.0, 0.3, 1.0, None).unwrap();
        let p = generate_block(&g, &r, 2, &m, 0, 0).unwrap();
        let topo = StepTopology::build(&g, BasisKind::Gimpm, &p, false).unwrap();
        let map = topo.dof_map(&g, &[0, 1]);
        let pat = topo.pattern(&map);
        let n = map.len();
        let u0: Vec<f64> = (0..n).map(|k| 0.01 * ((k * 7 % 11) as f64 - 5.0) / 5.0).collect();
        // internal force at nodal displacement u, gradients pushed forward
        let eval = |u: &[f64]| {
            let un = scatter(&map, u, g.n_nodes());
            let mut bs = Vec::new();
            let mut sig = Vec::new();
            let mut vol = Vec::new();
            let mut tan = Vec::new();
            for (b, q) in topo.basis.iter().zip(&p) {
                let df = Matrix2::identity() + b.gradient(&un);
                let inv_t = df.try_inverse().unwrap().transpose();
                let mut bc = b.clone();
                bc.grad = b.grad.iter().map(|gr| inv_t * gr).collect();
                let jd = df.determinant();
                let s = update_stress(&m, &df, &Matrix3::zeros(), jd).unwrap();
                sig.push(s.sigma.fixed_view::<2, 2>(0, 0).into_owned());
                vol.push(q.v0 * jd);
                tan.push(s.a);
                bs.push(bc);
            }
            (assemble_internal_force(&bs, &sig, &vol, &map), bs, tan, vol)
        };
        let (_, bs, tan, vol) = eval(&u0);
        let k = StiffnessPlan::new(&topo.basis, &map, &pat).assemble(&bs, &tan, &vol).to_dense();
        let step = 1e-7;
        let mut err: f64 = 0.0;
        for c in 0..n {
            let mut up = u0.clone();
            let mut um = u0.clone();
            up[c] += step;
            um[c] -= step;
            let (fp, ..) = eval(&up);
            let (fm, ..) = eval(&um);
            for r in 0..n {
                err = err.max(((fp[r] - fm[r]) / (2.0 * step) - k[(r, c)]).abs());
            }
        }
        assert!(err <= 1e-4 * k.amax(), "fd mismatch {err}");
    }

    proptest! {
        #[test]
        fn mass_and_force_identities(
            seeds in proptest::collection::vec((0.3f64..3.7, 0.3f64..3.7, 0.1f64..2.0), 1..30),
            kind in prop_oneof![Just(BasisKind::Smpm), Just(BasisKind::Gimpm)],
        ) {
            let g = unit_grid(4, 4);
            let m = mat();
            let p: Vec<_> = seeds.iter().map(|&(x, y, v)| {
                MaterialPoint::new(Vector2::new(x, y), v, Vector2::new(0.2, 0.2), &m, 0, 0)
            }).collect();
            let total: f64 = p.iter().map(|q| q.mass).sum();
            let topo = StepTopology::build(&g, kind, &p, true).unwrap();
            let map = topo.dof_map(&g, &[0]);
            let mm = assemble_mass(&topo.basis, &p, &map, &topo.pattern(&map));
            let s: f64 = mm.row_sums().iter().sum();
            prop_assert!((s - total).abs() <= 1e-12 * total);
            let d = mm.to_dense();
            prop_assert!((d.clone() - d.transpose()).amax() <= 1e-14 * d.amax());
            let l: f64 = assemble_lumped_mass(&topo.basis, &p, &map).iter().sum();
            prop_assert!((l - total).abs() <= 1e-12 * total);
            let map2 = topo.dof_map(&g, &[0, 1]);
            let fb = scatter(&map2, &assemble_body_force(&topo.basis, &p, &Vector2::new(0.0, -10.0), &map2), g.n_nodes());
            let fy: f64 = fb.iter().map(|v| v[1]).sum();
            prop_assert!((fy + 10.0 * total).abs() <= 1e-12 * 10.0 * total);
        }
    }
}
