//! Degree-of-freedom maps, a compact CSC matrix, and sparse direct solves.

use std::collections::BTreeSet;

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;
use nalgebra::DMatrix;

use crate::error::{MpmError, Result};

/// Map from `(node, axis)` to reduced equation numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    axes: Vec<usize>,
    index: Vec<Option<usize>>,
    dofs: Vec<(usize, usize)>,
}

impl DofMap {
    /// Number active nodes node-major over `axes`, skipping `fixed` pairs.
    pub fn new(
        n_nodes: usize,
        axes: &[usize],
        active: &[bool],
        fixed: &BTreeSet<(usize, usize)>,
    ) -> Self {
        let mut index = vec![None; n_nodes * 2];
        let mut dofs = Vec::new();
        for n in (0..n_nodes).filter(|&n| active[n]) {
            for &a in axes {
                if !fixed.contains(&(n, a)) {
                    index[2 * n + a] = Some(dofs.len());
                    dofs.push((n, a));
                }
            }
        }
        DofMap { axes: axes.to_vec(), index, dofs }
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn axes(&self) -> &[usize] {
        &self.axes
    }

    pub fn get(&self, node: usize, axis: usize) -> Option<usize> {
        self.index[2 * node + axis]
    }

    /// `(node, axis)` of each reduced equation.
    pub fn dofs(&self) -> &[(usize, usize)] {
        &self.dofs
    }
}

/// Square sparse matrix in compressed-column form with a fixed pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Pattern coupling every pair of dofs within each clique of nodes.
    pub fn from_cliques<'a, I>(map: &DofMap, cliques: I) -> Self
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let n = map.len();
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut buf = Vec::new();
        for clique in cliques {
            buf.clear();
            for &node in clique {
                for &a in map.axes() {
                    if let Some(d) = map.get(node, a) {
                        buf.push(d);
                    }
                }
            }
            for &c in &buf {
                cols[c].extend_from_slice(&buf);
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for mut c in cols {
            c.sort_unstable();
            c.dedup();
            row_idx.extend_from_slice(&c);
            col_ptr.push(row_idx.len());
        }
        let values = vec![0.0; row_idx.len()];
        CscMatrix { n, col_ptr, row_idx, values }
    }

    /// Diagonal matrix with the given entries.
    pub fn diagonal(d: &[f64]) -> Self {
        CscMatrix {
            n: d.len(),
            col_ptr: (0..=d.len()).collect(),
            row_idx: (0..d.len()).collect(),
            values: d.to_vec(),
        }
    }

    /// Same pattern with the given values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        CscMatrix { values, ..self.clone() }
    }

    /// Same pattern with all values zero.
    pub fn zeroed(&self) -> Self {
        CscMatrix { values: vec![0.0; self.values.len()], ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Position of `(row, col)` in the value array, if in the pattern.
    pub fn slot_index(&self, row: usize, col: usize) -> Option<usize> {
        let (a, b) = (self.col_ptr[col], self.col_ptr[col + 1]);
        self.row_idx[a..b].binary_search(&row).ok().map(|k| a + k)
    }

    /// Add `v` at `(row, col)`; the entry must lie in the pattern.
    pub fn add(&mut self, row: usize, col: usize, v: f64) {
        let k = self
            .slot_index(row, col)
            .unwrap_or_else(|| panic!("entry ({row}, {col}) outside the sparsity pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.slot_index(row, col).map_or(0.0, |k| self.values[k])
    }

    /// `self + c * other` for matrices sharing one pattern.
    pub fn add_scaled(&self, c: f64, other: &CscMatrix) -> CscMatrix {
        assert_eq!(self.col_ptr, other.col_ptr, "patterns differ");
        assert_eq!(self.row_idx, other.row_idx, "patterns differ");
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect();
        CscMatrix { values, ..self.clone() }
    }

    pub fn scaled(&self, c: f64) -> CscMatrix {
        CscMatrix { values: self.values.iter().map(|v| c * v).collect(), ..self.clone() }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for c in 0..self.n {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += self.values[k] * x[c];
            }
        }
        y
    }

    /// Row sums (`A 1`).
    pub fn row_sums(&self) -> Vec<f64> {
        self.mul_vec(&vec![1.0; self.n])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for c in 0..self.n {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                d[(self.row_idx[k], c)] += self.values[k];
            }
        }
        d
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let trips: Vec<_> = (0..self.n)
            .flat_map(|c| {
                (self.col_ptr[c]..self.col_ptr[c + 1])
                    .map(move |k| (k, c))
            })
            .map(|(k, c)| Triplet::new(self.row_idx[k], c, self.values[k]))
            .collect();
        SparseColMat::try_new_from_triplets(self.n, self.n, &trips)
            .map_err(|e| MpmError::Linalg(format!("{e:?}")))
    }

    /// Sparse Cholesky factorisation; fails unless the matrix is SPD and
    /// nonsingular to working precision.
    ///
    /// For an SPD matrix `kappa >= max(diag) / min(diag)`, so a diagonal
    /// spread beyond `1 / EPSILON` proves the solve would be meaningless even
    /// when every pivot happens to stay positive.
    pub fn cholesky(&self) -> Result<Factor> {
        if self.n == 0 {
            return Ok(Factor::Diagonal(Vec::new()));
        }
        let d: Vec<f64> = (0..self.n).map(|i| self.get(i, i)).collect();
        let dmax = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
        if !(dmin > 0.0) || dmax / dmin > 1.0 / f64::EPSILON {
            return Err(MpmError::Linalg(format!(
                "matrix is singular to working precision (diagonal range [{dmin:e}, {dmax:e}])"
            )));
        }
        let llt = self
            .to_faer()?
            .sp_cholesky(Side::Lower)
            .map_err(|e| MpmError::Linalg(format!("Cholesky factorisation failed: {e:?}")))?;
        Ok(Factor::Cholesky(llt))
    }

    /// Sparse LU factorisation.
    pub fn lu(&self) -> Result<Factor> {
        if self.n == 0 {
            return Ok(Factor::Diagonal(Vec::new()));
        }
        let lu = self
            .to_faer()?
            .sp_lu()
            .map_err(|e| MpmError::Linalg(format!("LU factorisation failed: {e:?}")))?;
        Ok(Factor::Lu(lu))
    }

    pub fn solve_spd(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.cholesky()?.solve(rhs)
    }

    pub fn solve_lu(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.lu()?.solve(rhs)
    }
}

/// A factorised matrix ready for repeated solves.
pub enum Factor {
    Cholesky(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
    Diagonal(Vec<f64>),
}

impl Factor {
    /// Factor of a diagonal matrix; fails on a non-positive entry.
    pub fn diagonal(d: Vec<f64>) -> Result<Self> {
        if let Some(v) = d.iter().find(|&&v| !(v > 0.0)) {
            return Err(MpmError::Linalg(format!("non-positive diagonal entry {v}")));
        }
        Ok(Factor::Diagonal(d))
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let x = match self {
            Factor::Diagonal(d) => rhs.iter().zip(d).map(|(b, v)| b / v).collect(),
            Factor::Cholesky(f) => {
                let col = Col::<f64>::from_fn(rhs.len(), |i| rhs[i]);
                let x = f.solve(&col);
                (0..rhs.len()).map(|i| x[i]).collect()
            }
            Factor::Lu(f) => {
                let col = Col::<f64>::from_fn(rhs.len(), |i| rhs[i]);
                let x = f.solve(&col);
                (0..rhs.len()).map(|i| x[i]).collect()
            }
        };
        finite(x)
    }
}

fn finite(x: Vec<f64>) -> Result<Vec<f64>> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(MpmError::Linalg("solution contains non-finite values".into()))
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
