//! sMPM and uGIMP basis functions and the GIMP domain update.

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MpmError, Result};
use crate::grid::BackgroundGrid;
use crate::mpoints::MaterialPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Smpm,
    Gimpm,
}

/// Supporting nodes of one material point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BasisContribution {
    pub nodes: Vec<usize>,
    pub s: Vec<f64>,
    pub grad: Vec<Vector2<f64>>,
}

impl BasisContribution {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Interpolate a nodal vector field (`field[node]`) to the point.
    pub fn interpolate(&self, field: &[Vector2<f64>]) -> Vector2<f64> {
        self.nodes
            .iter()
            .zip(&self.s)
            .map(|(&n, &s)| s * field[n])
            .sum()
    }

    /// `sum_v field[v] (x) grad S_v`, the nodal gradient of a vector field.
    pub fn gradient(&self, field: &[Vector2<f64>]) -> Matrix2<f64> {
        self.nodes
            .iter()
            .zip(&self.grad)
            .map(|(&n, g)| field[n] * g.transpose())
            .sum()
    }
}

/// Standard bi-linear basis of the element containing `x`.
pub fn smpm_basis(grid: &BackgroundGrid, x: &Vector2<f64>) -> Option<BasisContribution> {
    let e = grid.locate_element(x)?;
    let (n, g) = grid.element_shape(e, x);
    let mut out = BasisContribution::default();
    for a in 0..4 {
        if n[a] != 0.0 || g[a] != Vector2::zeros() {
            out.nodes.push(grid.element_topology[e][a]);
            out.s.push(n[a]);
            out.grad.push(g[a]);
        }
    }
    Some(out)
}

fn hat(s: f64, h: f64) -> f64 {
    ((h - s.abs()) / h).max(0.0)
}

/// Integral of the 1D hat function over `[a, b]`, accumulated per linear piece.
fn hat_integral(a: f64, b: f64, h: f64) -> f64 {
    let mut total = 0.0;
    for (lo, hi) in [(-h, 0.0), (0.0, h)] {
        let s0 = a.max(lo);
        let s1 = b.min(hi);
        if s1 > s0 {
            total += (s1 - s0) * 0.5 * (hat(s0, h) + hat(s1, h));
        }
    }
    total
}

/// 1D uGIMP value and derivative for offset `d = x_p - x_v` and half-length `l`.
pub fn gimp_1d(d: f64, l: f64, h: f64) -> (f64, f64) {
    let s = hat_integral(d - l, d + l, h) / (2.0 * l);
    let ds = (hat(d + l, h) - hat(d - l, h)) / (2.0 * l);
    (s, ds)
}

/// uGIMP basis for a point at `x` with domain half-lengths `half`.
pub fn gimpm_basis(
    grid: &BackgroundGrid,
    x: &Vector2<f64>,
    half: &Vector2<f64>,
) -> Option<BasisContribution> {
    let h = grid.h;
    let tol = 1e-12 * h;
    let lo = x - half - grid.origin;
    let hi = x + half - grid.origin;
    let ext = grid.extent() - grid.origin;
    if lo[0] < -tol || lo[1] < -tol || hi[0] > ext[0] + tol || hi[1] > ext[1] + tol {
        return None;
    }
    let axis = |k: usize, n: usize| -> Vec<(usize, f64, f64)> {
        let rel = x[k] - grid.origin[k];
        let first = ((rel - half[k] - h) / h).floor().max(0.0) as usize;
        let last = (((rel + half[k] + h) / h).ceil() as usize).min(n);
        (first..=last)
            .map(|i| {
                let (s, ds) = gimp_1d(rel - i as f64 * h, half[k], h);
                (i, s, ds)
            })
            .collect()
    };
    let sx = axis(0, grid.nx);
    let sy = axis(1, grid.ny);
    let mut out = BasisContribution::default();
    for &(j, syv, dsy) in &sy {
        for &(i, sxv, dsx) in &sx {
            let s = sxv * syv;
            let g = Vector2::new(dsx * syv, sxv * dsy);
            if s != 0.0 || g != Vector2::zeros() {
                out.nodes.push(grid.node_id(i, j));
                out.s.push(s);
                out.grad.push(g);
            }
        }
    }
    Some(out)
}

/// Basis of one point, with an out-of-domain error naming the point.
pub fn evaluate(
    grid: &BackgroundGrid,
    kind: BasisKind,
    id: usize,
    x: &Vector2<f64>,
    half: &Vector2<f64>,
) -> Result<BasisContribution> {
    let b = match kind {
        BasisKind::Smpm => smpm_basis(grid, x),
        BasisKind::Gimpm => gimpm_basis(grid, x, half),
    };
    b.ok_or(MpmError::OutOfDomain { point: id, x: x[0], y: x[1] })
}

/// Basis of every point, evaluated in parallel.
pub fn evaluate_all(
    grid: &BackgroundGrid,
    kind: BasisKind,
    points: &[MaterialPoint],
) -> Result<Vec<BasisContribution>> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| evaluate(grid, kind, i, &p.x, &p.half_lengths))
        .collect()
}

/// Elements whose open interior meets the point's support region.
///
/// For sMPM this is the containing element; for GIMPM every element the
/// domain box overlaps with positive area.
pub fn populated_elements(
    grid: &BackgroundGrid,
    kind: BasisKind,
    x: &Vector2<f64>,
    half: &Vector2<f64>,
) -> Vec<usize> {
    match kind {
        BasisKind::Smpm => grid.locate_element(x).into_iter().collect(),
        BasisKind::Gimpm => {
            // An element is populated along an axis when both of its nodes
            // receive a nonzero one-dimensional weight. This uses the same
            // arithmetic as the basis, so a roundoff-sized sliver of overlap
            // activates the element exactly when it produces nonzero entries.
            let h = grid.h;
            let axis = |k: usize, n: usize| -> Vec<usize> {
                let rel = x[k] - grid.origin[k];
                let first = ((rel - half[k] - h) / h).floor().max(0.0) as usize;
                let last = (((rel + half[k] + h) / h).ceil() as usize).min(n);
                let nonzero: Vec<bool> =
                    (first..=last).map(|i| gimp_1d(rel - i as f64 * h, half[k], h).0 != 0.0).collect();
                (first..last).filter(|&i| nonzero[i - first] && nonzero[i + 1 - first]).collect()
            };
            let (ex, ey) = (axis(0, grid.nx), axis(1, grid.ny));
            ey.iter().flat_map(|&j| ex.iter().map(move |&i| grid.element_id(i, j))).collect()
        }
    }
}

/// Stretch-tensor diagonal `diag(sqrt(F^T F))`.
pub fn stretch_diagonal(f: &Matrix2<f64>) -> Result<Vector2<f64>> {
    let c = f.transpose() * f;
    let eig = SymmetricEigen::new(c);
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(MpmError::NonPhysical(format!(
            "right Cauchy-Green tensor is not positive definite: {:?}",
            eig.eigenvalues.as_slice()
        )));
    }
    let q = eig.eigenvectors;
    let sq = eig.eigenvalues.map(f64::sqrt);
    let u = q * Matrix2::from_diagonal(&sq) * q.transpose();
    Ok(Vector2::new(u[(0, 0)], u[(1, 1)]))
}

/// `half_lengths = diag(U) * half_lengths0` for every point.
pub fn update_domains(points: &mut [MaterialPoint]) -> Result<()> {
    for p in points.iter_mut() {
        let d = stretch_diagonal(&p.f)?;
        p.half_lengths = d.component_mul(&p.half_lengths0);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(h: f64, nx: usize, ny: usize) -> BackgroundGrid {
        BackgroundGrid::new(Vector2::zeros(), h, nx, ny, &[]).unwrap()
    }

    /// Independent closed form of the 1D uGIMP function.
    fn gimp_closed(d: f64, l: f64, h: f64) -> f64 {
        let a = d.abs();
        if a < l {
            1.0 - (d * d + l * l) / (2.0 * h * l)
        } else if a < h - l {
            1.0 - a / h
        } else if a < h + l {
            (h + l - a).powi(2) / (4.0 * h * l)
        } else {
            0.0
        }
    }

    #[test]
    fn smpm_values() {
        let g = grid(1.0, 1, 1);
        let b = smpm_basis(&g, &Vector2::new(0.5, 0.5)).unwrap();
        assert!(b.s.iter().all(|&s| (s - 0.25).abs() < 1e-15));
        let b = smpm_basis(&g, &Vector2::new(0.0, 0.0)).unwrap();
        // The opposite corner has zero value and zero gradient, so it is dropped.
        assert_eq!(b.s, vec![1.0, 0.0, 0.0]);
        assert_eq!(b.nodes, vec![0, 1, 2]);
        let b = smpm_basis(&g, &Vector2::new(0.25, 0.5)).unwrap();
        let want = [0.375, 0.125, 0.125, 0.375];
        for (s, w) in b.s.iter().zip(want) {
            assert!((s - w).abs() < 1e-15);
        }
        assert!(smpm_basis(&g, &Vector2::new(1.5, 0.5)).is_none());
    }

    #[test]
    fn gimp_centre_and_node_values() {
        let g = grid(1.0, 3, 3);
        let b = gimpm_basis(&g, &Vector2::new(1.5, 1.5), &Vector2::new(0.25, 0.25)).unwrap();
        assert_eq!(b.len(), 4);
        assert!(b.s.iter().all(|&s| (s - 0.25).abs() < 1e-15));
        let l = 0.3;
        let b = gimpm_basis(&g, &Vector2::new(1.0, 1.0), &Vector2::new(l, l)).unwrap();
        let k = b.nodes.iter().position(|&n| n == g.node_id(1, 1)).unwrap();
        let one = 1.0 - l / 2.0;
        assert!((b.s[k] - one * one).abs() < 1e-15);
    }

    #[test]
    fn gimp_out_of_grid() {
        let g = grid(1.0, 2, 2);
        assert!(gimpm_basis(&g, &Vector2::new(0.1, 1.0), &Vector2::new(0.25, 0.25)).is_none());
        assert!(gimpm_basis(&g, &Vector2::new(0.25, 1.0), &Vector2::new(0.25, 0.25)).is_some());
        let err = evaluate(&g, BasisKind::Gimpm, 7, &Vector2::new(3.0, 1.0), &Vector2::zeros());
        assert!(matches!(err, Err(MpmError::OutOfDomain { point: 7, .. })));
    }

    #[test]
    fn domain_update_cases() {
        assert_eq!(stretch_diagonal(&Matrix2::identity()).unwrap(), Vector2::new(1.0, 1.0));
        let t = 0.37;
        let d = stretch_diagonal(&(Matrix2::identity() * (1.0 + t))).unwrap();
        assert!((d - Vector2::new(1.0 + t, 1.0 + t)).norm() < 1e-14);
        let th = 0.8f64;
        let r = Matrix2::new(th.cos(), -th.sin(), th.sin(), th.cos());
        assert!((stretch_diagonal(&r).unwrap() - Vector2::new(1.0, 1.0)).norm() < 1e-14);
        assert!(stretch_diagonal(&Matrix2::new(1.0, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn populated_elements_by_overlap() {
        let g = grid(1.0, 4, 1);
        let e = populated_elements(&g, BasisKind::Gimpm, &Vector2::new(1.8, 0.5), &Vector2::new(0.25, 0.25));
        assert_eq!(e, vec![1, 2]);
        let e = populated_elements(&g, BasisKind::Gimpm, &Vector2::new(1.75, 0.5), &Vector2::new(0.25, 0.25));
        assert_eq!(e, vec![1]);
        let e = populated_elements(&g, BasisKind::Smpm, &Vector2::new(1.8, 0.5), &Vector2::new(0.25, 0.25));
        assert_eq!(e, vec![1]);
    }

    proptest! {
        #[test]
        fn populated_elements_cover_basis_support(
            i in 1usize..7, j in 1usize..7, fx in -1.0f64..1.0, fy in -1.0f64..1.0,
            sx in -40i32..0, sy in -40i32..0, lx in 0.01f64..0.5, ly in 0.01f64..0.5
        ) {
            // Offsets range from order one down to roundoff-sized slivers.
            let g = grid(0.3, 8, 8);
            let xp = Vector2::new(
                i as f64 * 0.3 + fx * 0.3 * 2f64.powi(sx / 2),
                j as f64 * 0.3 + fy * 0.3 * 2f64.powi(sy / 2),
            );
            let half = Vector2::new(lx, ly) * 0.3;
            let Some(b) = gimpm_basis(&g, &xp, &half) else { return Ok(()) };
            let elements = populated_elements(&g, BasisKind::Gimpm, &xp, &half);
            let mut covered = std::collections::BTreeSet::new();
            for &e in &elements {
                for &n in &g.element_topology[e] {
                    let k = b.nodes.iter().position(|&m| m == n);
                    prop_assert!(k.is_some_and(|k| b.s[k] > 0.0), "node {n} of element {e} has no weight");
                    covered.insert(n);
                }
            }
            for (k, &n) in b.nodes.iter().enumerate() {
                if b.s[k] > 0.0 {
                    prop_assert!(covered.contains(&n), "weighted node {n} outside populated elements");
                }
            }
        }

        #[test]
        fn gimp_1d_matches_closed_form(d in -2.0f64..2.0, l in 0.01f64..0.5) {
            let (s, _) = gimp_1d(d, l, 1.0);
            prop_assert!((s - gimp_closed(d, l, 1.0)).abs() < 1e-13);
        }

        #[test]
        fn gimp_partition_and_gradients(
            x in 0.6f64..3.4, y in 0.6f64..3.4, lx in 0.01f64..0.5, ly in 0.01f64..0.5
        ) {
            let g = grid(1.0, 4, 4);
            let xp = Vector2::new(x, y);
            let half = Vector2::new(lx, ly);
            let b = gimpm_basis(&g, &xp, &half).unwrap();
            prop_assert!(b.len() <= 16);
            prop_assert!(b.s.iter().all(|&s| s >= 0.0));
            prop_assert!((b.s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let gs: Vector2<f64> = b.grad.iter().sum();
            prop_assert!(gs.norm() < 1e-12);
            // central differences of S with the domain carried along
            let step = 1e-6;
            for k in 0..2 {
                let mut e = Vector2::zeros();
                e[k] = step;
                let bp = gimpm_basis(&g, &(xp + e), &half).unwrap();
                let bm = gimpm_basis(&g, &(xp - e), &half).unwrap();
                for (n, gr) in b.nodes.iter().zip(&b.grad) {
                    let sp = bp.nodes.iter().position(|m| m == n).map_or(0.0, |i| bp.s[i]);
                    let sm = bm.nodes.iter().position(|m| m == n).map_or(0.0, |i| bm.s[i]);
                    let fd = (sp - sm) / (2.0 * step);
                    prop_assert!((fd - gr[k]).abs() <= 1e-5 * gr[k].abs().max(1.0));
                }
            }
        }

        #[test]
        fn gimp_tends_to_smpm(x in 0.05f64..1.95, y in 0.05f64..0.95) {
            let g = grid(1.0, 2, 1);
            let xp = Vector2::new(x, y);
            let l = 1e-8;
            let a = gimpm_basis(&g, &xp, &Vector2::new(l, l)).unwrap();
            let b = smpm_basis(&g, &xp).unwrap();
            for (n, s) in b.nodes.iter().zip(&b.s) {
                let sa = a.nodes.iter().position(|m| m == n).map_or(0.0, |i| a.s[i]);
                prop_assert!((sa - s).abs() < 1e-6);
            }
        }

        #[test]
        fn smpm_partition(x in 0.0f64..2.0, y in 0.0f64..1.0) {
            let g = grid(1.0, 2, 1);
            let b = smpm_basis(&g, &Vector2::new(x, y)).unwrap();
            prop_assert!((b.s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let gs: Vector2<f64> = b.grad.iter().sum();
            prop_assert!(gs.norm() < 1e-12);
        }
    }
}
