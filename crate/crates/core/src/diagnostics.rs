//! Conditioning, CFL, energy, and error-norm diagnostics.

use nalgebra::{Cholesky, DMatrix, Vector2};
use serde::Serialize;

use crate::error::{MpmError, Result};
use crate::mpoints::MaterialPoint;

/// Spectral condition number `lambda_max / lambda_min` of a symmetric matrix.
///
/// The matrix is first equilibrated by its diagonal; if that scaled matrix is
/// numerically singular (or the matrix is not positive definite) the result
/// is `f64::INFINITY`. Otherwise the smallest eigenvalue is taken from the
/// largest eigenvalue of the Cholesky-based inverse, which keeps it accurate
/// for strongly graded matrices.
pub fn condition_number(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(MpmError::Linalg(format!(
            "condition number of a non-square {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(1.0);
    }
    let d = m.diagonal();
    if d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Ok(f64::INFINITY);
    }
    let s = d.map(|v| 1.0 / v.sqrt());
    let a = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * s[i] * s[j]);
    let ea = a.symmetric_eigenvalues();
    let (amin, amax) = min_max(ea.as_slice());
    if amin <= 1e3 * n as f64 * f64::EPSILON * amax {
        return Ok(f64::INFINITY);
    }
    let lmax = min_max(m.clone().symmetric_eigenvalues().as_slice()).1;
    let Some(chol) = Cholesky::new(m.clone()) else {
        return Ok(f64::INFINITY);
    };
    let inv = chol.inverse();
    let inv = 0.5 * (&inv + inv.transpose());
    let imax = min_max(inv.symmetric_eigenvalues().as_slice()).1;
    if !(imax > 0.0) || !imax.is_finite() {
        return Ok(f64::INFINITY);
    }
    Ok((lmax * imax).max(1.0))
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Largest eigenvalue of `K x = lambda M x`, or `None` when `M` is not SPD.
pub fn generalised_lambda_max(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l();
    let y = l.solve_lower_triangular(k)?;
    let c = l.solve_lower_triangular(&y.transpose())?;
    let c = 0.5 * (&c + c.transpose());
    let (_, hi) = min_max(c.symmetric_eigenvalues().as_slice());
    hi.is_finite().then_some(hi)
}

/// CFL number `1 / (h sqrt(lambda_max))`; zero when `M` is not SPD.
pub fn cfl_number(k: &DMatrix<f64>, m: &DMatrix<f64>, h: f64) -> f64 {
    match generalised_lambda_max(k, m) {
        Some(l) if l > 0.0 => 1.0 / (h * l.sqrt()),
        Some(_) => f64::INFINITY,
        None => 0.0,
    }
}

/// Format a diagnostic value, writing the infinite sentinel as `inf`.
pub fn fmt_value(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v:.9e}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRow {
    pub step: usize,
    pub t: f64,
    pub w_kin: f64,
    pub w_strain: f64,
    pub w_plastic: f64,
    pub w0: f64,
    pub energy_error: f64,
}

pub fn kinetic_energy(points: &[MaterialPoint]) -> f64 {
    points.iter().map(|p| 0.5 * p.mass * p.v.norm_squared()).sum()
}

/// Hencky strain energy `sum 1/2 tau : eps_e V0`.
pub fn strain_energy(points: &[MaterialPoint]) -> f64 {
    points.iter().map(|p| 0.5 * p.tau.dot(&p.eps_e) * p.v0).sum()
}

pub fn plastic_work(points: &[MaterialPoint]) -> f64 {
    points.iter().map(|p| p.w_plastic).sum()
}

pub fn energy_budget(points: &[MaterialPoint], step: usize, t: f64, w0: f64) -> EnergyRow {
    let w_kin = kinetic_energy(points);
    let w_strain = strain_energy(points);
    let w_plastic = plastic_work(points);
    EnergyRow {
        step,
        t,
        w_kin,
        w_strain,
        w_plastic,
        w0,
        energy_error: w_kin + w_strain + w_plastic - w0,
    }
}

/// `sum |W_kin + W_strain + W_plastic - W0| / (n_t W0)` over the recorded steps.
pub fn normalised_mean_energy_error(rows: &[EnergyRow]) -> f64 {
    let Some(first) = rows.first() else { return 0.0 };
    let n = rows.iter().filter(|r| r.step > 0).count().max(1);
    rows.iter()
        .filter(|r| r.step > 0)
        .map(|r| r.energy_error.abs())
        .sum::<f64>()
        / (n as f64 * first.w0)
}

/// Column self-weight error
/// `sum |sigma_yy - sigma_a(Y)| V0 / (g rho0 l0 V0_total)` with
/// `sigma_a(Y) = -rho0 g (l0 - Y)` (tension positive), `Y` the reference height.
pub fn stress_error_column(points: &[MaterialPoint], rho0: f64, l0: f64, g: f64) -> f64 {
    let v_total: f64 = points.iter().map(|p| p.v0).sum();
    let num: f64 = points
        .iter()
        .map(|p| {
            let exact = -rho0 * g * (l0 - p.x0[1]);
            (p.sigma[(1, 1)] - exact).abs() * p.v0
        })
        .sum();
    num / (g * rho0 * l0 * v_total)
}

/// Maximum `|u_p - t v0_p|` for a uniform expansion with velocity field `v0`.
pub fn displacement_error_stretch<F>(points: &[MaterialPoint], t: f64, v0: F) -> f64
where
    F: Fn(&Vector2<f64>) -> Vector2<f64>,
{
    points
        .iter()
        .map(|p| (p.displacement() - t * v0(&p.x0)).norm())
        .fold(0.0, f64::max)
}

/// Observed convergence order from a log-log least-squares fit.
pub fn convergence_order(h: &[f64], err: &[f64]) -> f64 {
    let n = h.len() as f64;
    let lx: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpoints::Material;
    use proptest::prelude::*;

    #[test]
    fn condition_simple() {
        assert_eq!(condition_number(&DMatrix::identity(3, 3)).unwrap(), 1.0);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1e-12]));
        let k = condition_number(&d).unwrap();
        assert!((k / 1e12 - 1.0).abs() < 1e-10);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(condition_number(&s).unwrap().is_infinite());
        assert!(condition_number(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn graded_matrix_keeps_tiny_eigenvalue() {
        // diag(1, 1e-40) rotated slightly stays graded; kappa must be ~1e40
        let e = 1e-20;
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5 * e, 0.5 * e, e * e]);
        let k = condition_number(&m).unwrap();
        let exact = 1.0 / (0.75 * e * e);
        assert!((k / exact - 1.0).abs() < 1e-6, "{k:e} vs {exact:e}");
    }

    #[test]
    fn cfl_simple() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert!((cfl_number(&i, &i, 1.0) - 1.0).abs() < 1e-14);
        assert!((cfl_number(&(&i * 4.0), &i, 2.0) - 0.25).abs() < 1e-14);
        assert_eq!(fmt_value(f64::INFINITY), "inf");
    }

    #[test]
    fn energies_vanish_at_rest() {
        let m = Material::new(1.0, 0.2, 1.0, None).unwrap();
        let p = vec![MaterialPoint::new(Vector2::new(0.5, 0.5), 1.0, Vector2::zeros(), &m, 0, 0)];
        let r = energy_budget(&p, 0, 0.0, 0.0);
        assert_eq!((r.w_kin, r.w_strain, r.w_plastic), (0.0, 0.0, 0.0));
        assert_eq!(displacement_error_stretch(&p, 0.0, |x| *x), 0.0);
    }

    #[test]
    fn exact_column_stress_has_zero_error() {
        let m = Material::new(1.0, 0.0, 80.0, None).unwrap();
        let mut p: Vec<_> = (0..10)
            .map(|k| MaterialPoint::new(Vector2::new(0.5, k as f64 + 0.5), 1.0, Vector2::zeros(), &m, 0, 0))
            .collect();
        for q in &mut p {
            q.sigma[(1, 1)] = -80.0 * 10.0 * (10.0 - q.x0[1]);
        }
        assert!(stress_error_column(&p, 80.0, 10.0, 10.0).abs() < 1e-15);
    }

    #[test]
    fn order_fit() {
        let h = [1.0, 0.5, 0.25];
        let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        assert!((convergence_order(&h, &e) - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn kappa_scale_invariant_and_at_least_one(
            vals in proptest::collection::vec(0.01f64..10.0, 4), c in 1e-3f64..1e3
        ) {
            let b = DMatrix::from_fn(4, 4, |i, j| if i == j { vals[i] } else { 0.1 * ((i + 2 * j) % 3) as f64 });
            let m = &b * b.transpose() + DMatrix::identity(4, 4) * 0.1;
            let k1 = condition_number(&m).unwrap();
            let k2 = condition_number(&(&m * c)).unwrap();
            prop_assert!(k1 >= 1.0);
            prop_assert!((k1 - k2).abs() <= 1e-8 * k1);
        }

        #[test]
        fn cfl_scale_invariant(vals in proptest::collection::vec(0.1f64..10.0, 3), c in 1e-3f64..1e3) {
            let k = DMatrix::from_fn(3, 3, |i, j| if i == j { vals[i] + 1.0 } else { 0.2 });
            let m = DMatrix::from_fn(3, 3, |i, j| if i == j { 2.0 } else { 0.3 });
            let a = cfl_number(&k, &m, 0.5);
            let b = cfl_number(&(&k * c), &(&m * c), 0.5);
            prop_assert!((a - b).abs() <= 1e-10 * a);
        }
    }
}
