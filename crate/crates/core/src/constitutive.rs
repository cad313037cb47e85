//! Hencky elasticity with perfectly plastic von Mises return mapping.
//!
//! Tensors carry the out-of-plane component explicitly (3x3, `F_zz = 1`).
//! The spatial tangent acts on in-plane index pairs ordered
//! `[(0,0), (1,1), (0,1), (1,0)]`.

use nalgebra::{Matrix2, Matrix3, Matrix4, SymmetricEigen, Vector3};

use crate::error::{MpmError, Result};
use crate::mpoints::Material;

/// In-plane index pairs in tangent ordering.
pub const PAIRS: [(usize, usize); 4] = [(0, 0), (1, 1), (0, 1), (1, 0)];

#[derive(Debug, Clone, PartialEq)]
pub struct StressResult {
    pub tau: Matrix3<f64>,
    pub sigma: Matrix3<f64>,
    pub eps_e: Matrix3<f64>,
    /// Spatial tangent `a[(i,j),(m,r)]`.
    pub a: Matrix4<f64>,
    /// Plastic dissipation per unit initial volume.
    pub d_wp: f64,
    /// Plastic multiplier of the return.
    pub d_gamma: f64,
}

impl StressResult {
    /// Increment of equivalent plastic strain.
    pub fn d_eq_plastic(&self) -> f64 {
        (2.0f64 / 3.0).sqrt() * self.d_gamma
    }
}

/// Plane-strain isotropic stiffness in Voigt form `[xx, yy, xy(engineering)]`.
pub fn elastic_moduli(m: &Material) -> nalgebra::Matrix3<f64> {
    let (l, mu) = (m.lambda(), m.mu());
    nalgebra::Matrix3::new(l + 2.0 * mu, l, 0.0, l, l + 2.0 * mu, 0.0, 0.0, 0.0, mu)
}

pub fn embed(f: &Matrix2<f64>) -> Matrix3<f64> {
    let mut out = Matrix3::identity();
    out.fixed_view_mut::<2, 2>(0, 0).copy_from(f);
    out
}

fn spectral(q: &Matrix3<f64>, vals: &Vector3<f64>) -> Matrix3<f64> {
    q * Matrix3::from_diagonal(vals) * q.transpose()
}

/// `sqrt(2 J2)` of a stress tensor.
pub fn rho(tau: &Matrix3<f64>) -> f64 {
    let p = tau.trace() / 3.0;
    (tau - Matrix3::identity() * p).norm()
}

/// Divided difference `(ln a - ln b) / (a - b)`, stable for close arguments.
fn log_divided(a: f64, b: f64) -> f64 {
    let r = (a - b) / b;
    if r.abs() < 1e-8 {
        (1.0 - 0.5 * r + r * r / 3.0) / b
    } else {
        r.ln_1p() / r / b
    }
}

/// Elastic predictor and radial return for the deformation increment `df`.
///
/// `j` is the determinant of the total deformation gradient, used for the
/// Cauchy stress and the spatial tangent.
pub fn update_stress(
    m: &Material,
    df: &Matrix2<f64>,
    eps_old: &Matrix3<f64>,
    j: f64,
) -> Result<StressResult> {
    if !(df.determinant() > 0.0) || !(j > 0.0) {
        return Err(MpmError::NonPhysical(format!(
            "non-positive Jacobian (det dF = {}, J = {j})",
            df.determinant()
        )));
    }
    let (lam, mu, kb) = (m.lambda(), m.mu(), m.bulk());
    let f3 = embed(df);
    let old = SymmetricEigen::new(*eps_old);
    let b_old = spectral(&old.eigenvectors, &old.eigenvalues.map(|e| (2.0 * e).exp()));
    let b_tr = f3 * b_old * f3.transpose();
    let b_tr = 0.5 * (b_tr + b_tr.transpose());
    let eig = SymmetricEigen::new(b_tr);
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(MpmError::NonPhysical(format!(
            "trial elastic left stretch is not positive definite: {:?}",
            eig.eigenvalues.as_slice()
        )));
    }
    let q = eig.eigenvectors;
    let lb = eig.eigenvalues;
    let eps_tr = lb.map(|l| 0.5 * l.ln());
    let tr = eps_tr.sum();
    let tau_tr = eps_tr.map(|e| lam * tr + 2.0 * mu * e);
    let p = tau_tr.sum() / 3.0;
    let s_tr = tau_tr.map(|t| t - p);
    let s_norm = s_tr.norm();

    let mut eps = eps_tr;
    let mut tau_p = tau_tr;
    let mut beta = 1.0;
    let mut n_hat = Vector3::zeros();
    let mut d_gamma = 0.0;
    if let Some(ry) = m.yield_stress {
        if s_norm > ry {
            n_hat = s_tr / s_norm;
            d_gamma = (s_norm - ry) / (2.0 * mu);
            eps = eps_tr - n_hat * d_gamma;
            tau_p = n_hat * ry + Vector3::repeat(p);
            beta = ry / s_norm;
        }
    }
    let d_wp = m.yield_stress.map_or(0.0, |ry| ry * d_gamma);
    let tau = spectral(&q, &tau_p);
    let eps_e = spectral(&q, &eps);
    let n_tensor = spectral(&q, &n_hat);

    // Log-derivative coefficients in the trial eigenbasis.
    let mut g = Matrix3::zeros();
    for a in 0..3 {
        for b in 0..3 {
            g[(a, b)] = if a == b { 1.0 / lb[a] } else { log_divided(lb[a], lb[b]) };
        }
    }
    let mut c = Matrix4::zeros();
    for (col, &(mm, r)) in PAIRS.iter().enumerate() {
        // perturbation dF -> (I + e_m (x) e_r) dF
        let mut db = Matrix3::zeros();
        for pp in 0..3 {
            for qq in 0..3 {
                let mut v = 0.0;
                if pp == mm {
                    v += b_tr[(r, qq)];
                }
                if qq == mm {
                    v += b_tr[(pp, r)];
                }
                db[(pp, qq)] = v;
            }
        }
        let db_e = q.transpose() * db * q;
        let deps_e = 0.5 * db_e.component_mul(&g);
        let deps = q * deps_e * q.transpose();
        let trd = deps.trace();
        let dev = deps - Matrix3::identity() * (trd / 3.0);
        let nd = n_tensor.dot(&deps);
        let dtau = Matrix3::identity() * (kb * trd) + 2.0 * mu * beta * dev
            - n_tensor * (2.0 * mu * beta * nd);
        for (row, &(i, jj)) in PAIRS.iter().enumerate() {
            c[(row, col)] = dtau[(i, jj)];
        }
    }
    let mut a = Matrix4::zeros();
    for (row, &(i, jj)) in PAIRS.iter().enumerate() {
        for (col, &(mm, r)) in PAIRS.iter().enumerate() {
            let geo = if jj == mm { tau[(i, r)] } else { 0.0 };
            a[(row, col)] = (c[(row, col)] - geo) / j;
        }
    }
    Ok(StressResult {
        tau,
        sigma: tau / j,
        eps_e,
        a,
        d_wp,
        d_gamma,
    })
}
