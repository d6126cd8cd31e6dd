use ndarray::{Array1, Array2, Axis};

use gwinv_model::{perturb_observations, NoiseCov};

use crate::error::{EsmdaError, Result};
use crate::tsvd::tsvd_pinv;

/// Column-mean-centered anomaly covariances of the parameter ensemble `M`
/// (`N_m x N_e`) and the prediction ensemble `D` (`N_d x N_e`):
/// `C_MD = dM dD^T / (N_e - 1)`, `C_DD = dD dD^T / (N_e - 1)`.
pub fn ensemble_covariances(m: &Array2<f64>, d: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let n_e = m.ncols();
    if d.ncols() != n_e {
        return Err(EsmdaError::Shape(format!(
            "member counts differ: {} vs {}",
            n_e,
            d.ncols()
        )));
    }
    if n_e < 2 {
        return Err(EsmdaError::Shape("need at least two members for covariances".into()));
    }
    let m_mean = m.mean_axis(Axis(1)).unwrap();
    let d_mean = d.mean_axis(Axis(1)).unwrap();
    let dm = m - &m_mean.insert_axis(Axis(1));
    let dd = d - &d_mean.insert_axis(Axis(1));
    let w = 1.0 / (n_e as f64 - 1.0);
    let c_md = dm.dot(&dd.t()) * w;
    let c_dd = dd.dot(&dd.t()) * w;
    Ok((c_md, c_dd))
}

fn add_noise_cov(c: &mut Array2<f64>, alpha: f64, c_d: &NoiseCov) -> Result<()> {
    match c_d {
        NoiseCov::Diag(diag) => {
            if diag.len() != c.nrows() {
                return Err(EsmdaError::Shape("noise covariance size mismatch".into()));
            }
            for (i, &v) in diag.iter().enumerate() {
                c[[i, i]] += alpha * v;
            }
        }
        NoiseCov::Full(full) => {
            if full.nrows() != c.nrows() || full.ncols() != c.ncols() {
                return Err(EsmdaError::Shape("noise covariance size mismatch".into()));
            }
            c.zip_mut_with(full, |a, &b| *a += alpha * b);
        }
    }
    Ok(())
}

/// One ESMDA update with inflation `alpha`:
/// `m_j <- m_j + C_MD (C_DD + alpha C_D)^+ (d_uc,j - g(m_j))`,
/// where the perturbed observations `d_uc,j ~ N(d, alpha C_D)` are drawn
/// from `seed`. Returns the updated ensemble, the retained TSVD rank and the
/// mean data mismatch `mean_j ||d_uc,j - g(m_j)||`.
pub fn esmda_update(
    m: &Array2<f64>,
    d_pred: &Array2<f64>,
    d: &[f64],
    alpha: f64,
    c_d: &NoiseCov,
    tsvd_energy: f64,
    seed: u64,
) -> Result<(Array2<f64>, usize, f64)> {
    let n_e = m.ncols();
    let n_d = d.len();
    if d_pred.nrows() != n_d || d_pred.ncols() != n_e {
        return Err(EsmdaError::Shape(format!(
            "prediction ensemble is {}x{}, expected {}x{}",
            d_pred.nrows(),
            d_pred.ncols(),
            n_d,
            n_e
        )));
    }
    if !(alpha > 0.0) {
        return Err(EsmdaError::Config(format!("inflation must be positive, got {alpha}")));
    }

    let d_uc = perturb_observations(d, alpha, c_d, n_e, seed)
        .map_err(|e| EsmdaError::Config(e.to_string()))?;

    let (c_md, mut c) = ensemble_covariances(m, d_pred)?;
    add_noise_cov(&mut c, alpha, c_d)?;
    let (pinv, rank) = tsvd_pinv(&c, tsvd_energy)?;

    let residual = &d_uc - d_pred;
    let mismatch = residual
        .columns()
        .into_iter()
        .map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum::<f64>()
        / n_e as f64;

    // K = C_MD * pinv; M_new = M + K * residual.
    let gain = c_md.dot(&pinv);
    let m_new = m + &gain.dot(&residual);
    if m_new.iter().any(|v| !v.is_finite()) {
        return Err(EsmdaError::Numeric("update produced non-finite parameters".into()));
    }
    Ok((m_new, rank, mismatch))
}

/// Mean prediction vector of one member against the data (for reports).
pub fn data_mismatch(d_pred: &Array2<f64>, d: &Array1<f64>) -> f64 {
    let n_e = d_pred.ncols();
    d_pred
        .columns()
        .into_iter()
        .map(|col| {
            col.iter()
                .zip(d.iter())
                .map(|(p, o)| (p - o) * (p - o))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / n_e as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn constant_predictions_give_zero_covariances() {
        let m = arr2(&[[1.0, 2.0, 3.0], [0.5, 0.5, 0.5]]);
        let d = arr2(&[[4.0, 4.0, 4.0]]);
        let (c_md, c_dd) = ensemble_covariances(&m, &d).unwrap();
        assert!(c_md.iter().all(|&v| v == 0.0));
        assert!(c_dd.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_computed_two_by_two() {
        // M = [[0, 2]], D = [[1, 3]]: dM = [-1, 1], dD = [-1, 1];
        // C_MD = C_DD = (1 + 1)/(2-1) = 2.
        let m = arr2(&[[0.0, 2.0]]);
        let d = arr2(&[[1.0, 3.0]]);
        let (c_md, c_dd) = ensemble_covariances(&m, &d).unwrap();
        assert!((c_md[[0, 0]] - 2.0).abs() < 1e-14);
        assert!((c_dd[[0, 0]] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn cdd_is_symmetric_psd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let d = Array2::from_shape_fn((5, 12), |_| rng.random_range(-2.0..2.0));
        let m = Array2::from_shape_fn((3, 12), |_| rng.random_range(-2.0..2.0));
        let (_, c_dd) = ensemble_covariances(&m, &d).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((c_dd[[i, j]] - c_dd[[j, i]]).abs() < 1e-12);
            }
        }
        let sym = nalgebra::DMatrix::from_fn(5, 5, |i, j| c_dd[[i, j]]);
        let eig = sym.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-12));
    }

    #[test]
    fn uncorrelated_predictions_leave_ensemble_unchanged() {
        // Predictions identical across members: C_MD = 0, update adds nothing.
        let m = arr2(&[[1.0, 2.0, 3.0, 4.0]]);
        let d_pred = arr2(&[[5.0, 5.0, 5.0, 5.0]]);
        let c_d = NoiseCov::Diag(ndarray::arr1(&[0.25]));
        let (m_new, _, _) = esmda_update(&m, &d_pred, &[6.0], 1.0, &c_d, 0.999, 7).unwrap();
        assert_eq!(m_new, m);
    }

    #[test]
    fn single_member_rejected() {
        let m = arr2(&[[1.0]]);
        let d = arr2(&[[1.0]]);
        assert!(ensemble_covariances(&m, &d).is_err());
    }
}
