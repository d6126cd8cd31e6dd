use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use gwinv_model::NoiseCov;

use crate::error::{EsmdaError, Result};
use crate::prior::PriorSpec;
use crate::schedule::InflationSchedule;
use crate::update::esmda_update;

/// Deterministic per-stage sub-seed (splitmix64 over the pair).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EsmdaOptions {
    /// TSVD energy threshold for the pseudo-inverse.
    pub tsvd_energy: f64,
    /// Base seed; per-iteration perturbation seeds are derived from it.
    pub seed: u64,
}

impl Default for EsmdaOptions {
    fn default() -> Self {
        Self { tsvd_energy: 0.999, seed: 0 }
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpdateReport {
    /// 1-based assimilation iteration; `n_iterations + 1` marks the final
    /// re-evaluation sweep.
    pub iteration: usize,
    pub alpha: f64,
    /// Mean over members of `||d_uc,j - g(m_j)||` going into the update (for
    /// the final sweep: against the unperturbed data).
    pub data_mismatch: f64,
    /// Retained TSVD rank of `C_DD + alpha C_D`.
    pub retained_rank: usize,
    /// Mean member-wise standard deviation over all parameters.
    pub spread: f64,
    /// Mean spread per block when the layout is known: (z, sl, ss).
    pub block_spread: Option<[f64; 3]>,
}

/// Result of a full ESMDA run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub ensemble: Array2<f64>,
    pub reports: Vec<UpdateReport>,
    /// Total forward evaluations performed, including resamples and the
    /// final re-evaluation sweep.
    pub forward_evaluations: usize,
    /// Prediction ensemble from the final sweep (N_d x N_e).
    pub final_predictions: Array2<f64>,
}

fn spread_stats(m: &Array2<f64>, prior: Option<&PriorSpec>) -> (f64, Option<[f64; 3]>) {
    let n_e = m.ncols() as f64;
    let stds: Vec<f64> = m
        .rows()
        .into_iter()
        .map(|row| {
            let mean = row.sum() / n_e;
            (row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n_e - 1.0)).sqrt()
        })
        .collect();
    let overall = stds.iter().sum::<f64>() / stds.len().max(1) as f64;
    let block = prior.map(|p| {
        let mean_over = |r: std::ops::Range<usize>| -> f64 {
            if r.is_empty() {
                0.0
            } else {
                stds[r.clone()].iter().sum::<f64>() / r.len() as f64
            }
        };
        [
            mean_over(p.layout.z_range()),
            mean_over(p.layout.sl_range()),
            mean_over(p.layout.ss_range()),
        ]
    });
    (overall, block)
}

fn evaluate_ensemble<F>(
    m: &mut Array2<f64>,
    forward: &F,
    prior: Option<&PriorSpec>,
    resample_seed: u64,
    eval_count: &mut usize,
) -> Result<Array2<f64>>
where
    F: Fn(&[f64]) -> std::result::Result<Vec<f64>, String> + Sync,
{
    let n_e = m.ncols();
    let columns: Vec<Vec<f64>> = (0..n_e).map(|j| m.column(j).to_vec()).collect();
    let results: Vec<std::result::Result<Vec<f64>, String>> =
        columns.par_iter().map(|c| forward(c)).collect();
    *eval_count += n_e;

    let mut predictions: Vec<Vec<f64>> = Vec::with_capacity(n_e);
    for (j, res) in results.into_iter().enumerate() {
        match res {
            Ok(p) => predictions.push(p),
            Err(first_err) => {
                // One resample from the prior, then hard error.
                let prior = prior.ok_or_else(|| EsmdaError::Forward {
                    member: j,
                    message: first_err.clone(),
                })?;
                let fresh = prior
                    .sample_one(derive_seed(resample_seed, j as u64))
                    .map_err(|e| EsmdaError::Forward { member: j, message: e.to_string() })?;
                *eval_count += 1;
                match forward(&fresh) {
                    Ok(p) => {
                        for (i, v) in fresh.iter().enumerate() {
                            m[[i, j]] = *v;
                        }
                        predictions.push(p);
                    }
                    Err(second_err) => {
                        return Err(EsmdaError::Forward {
                            member: j,
                            message: format!("{first_err}; after resample: {second_err}"),
                        });
                    }
                }
            }
        }
    }

    let n_d = predictions[0].len();
    if predictions.iter().any(|p| p.len() != n_d) {
        return Err(EsmdaError::Shape("forward outputs have inconsistent lengths".into()));
    }
    let mut d_pred = Array2::<f64>::zeros((n_d, n_e));
    for (j, p) in predictions.iter().enumerate() {
        for (i, v) in p.iter().enumerate() {
            d_pred[[i, j]] = *v;
        }
    }
    Ok(d_pred)
}

/// Runs the full ESMDA loop: for each iteration, evaluate the forward model
/// on every member, perturb the data with inflated noise, update, and clamp
/// the bounded blocks to the prior support. A final evaluation sweep scores
/// the posterior ensemble, so the total forward-run budget is
/// `N_e * (N_a + 1)` (plus any failure resamples).
pub fn run_esmda<F>(
    initial: Array2<f64>,
    forward: F,
    schedule: &InflationSchedule,
    d: &Array1<f64>,
    c_d: &NoiseCov,
    prior: Option<&PriorSpec>,
    opts: &EsmdaOptions,
) -> Result<RunResult>
where
    F: Fn(&[f64]) -> std::result::Result<Vec<f64>, String> + Sync,
{
    if c_d.n() != d.len() {
        return Err(EsmdaError::Shape(format!(
            "noise covariance size {} does not match data length {}",
            c_d.n(),
            d.len()
        )));
    }
    let mut m = initial;
    let mut reports = Vec::with_capacity(schedule.n_iterations() + 1);
    let mut eval_count = 0usize;

    for (it, &alpha) in schedule.alphas().iter().enumerate() {
        let iter_seed = derive_seed(opts.seed, it as u64);
        let d_pred = evaluate_ensemble(
            &mut m,
            &forward,
            prior,
            derive_seed(iter_seed, RESAMPLE_STREAM),
            &mut eval_count,
        )?;
        let (m_new, rank, mismatch) =
            esmda_update(&m, &d_pred, d.as_slice().unwrap(), alpha, c_d, opts.tsvd_energy, iter_seed)?;
        m = m_new;
        if let Some(p) = prior {
            p.clamp(&mut m);
        }
        let (spread, block_spread) = spread_stats(&m, prior);
        reports.push(UpdateReport {
            iteration: it + 1,
            alpha,
            data_mismatch: mismatch,
            retained_rank: rank,
            spread,
            block_spread,
        });
    }

    // Final re-evaluation for reporting.
    let final_seed = derive_seed(opts.seed, schedule.n_iterations() as u64);
    let d_pred = evaluate_ensemble(&mut m, &forward, prior, final_seed, &mut eval_count)?;
    let final_mismatch = {
        let n_e = d_pred.ncols() as f64;
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
            / n_e
    };
    let (spread, block_spread) = spread_stats(&m, prior);
    reports.push(UpdateReport {
        iteration: schedule.n_iterations() + 1,
        alpha: f64::NAN,
        data_mismatch: final_mismatch,
        retained_rank: 0,
        spread,
        block_spread,
    });

    // Ensemble means stay finite by construction of the update; double-check.
    if m.mean_axis(Axis(1)).unwrap().iter().any(|v| !v.is_finite()) {
        return Err(EsmdaError::Numeric("posterior ensemble contains non-finite values".into()));
    }

    Ok(RunResult {
        ensemble: m,
        reports,
        forward_evaluations: eval_count,
        final_predictions: d_pred,
    })
}

const RESAMPLE_STREAM: u64 = 0x5e5a_11ed;
