//! Lipschitz bounds for dense networks and the Gaussian Poincaré check
//! `Var(f) ≤ L²‖S‖₂²`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, DenseNetwork};
use crate::exec::{try_map_indexed, Execution};
use crate::measure::GaussianMeasure;
use crate::report::num;
use crate::seed::derive_seed;
use crate::vae::{bias_variance_likelihood, VaeError, VaeModel};

pub const POWER_ITERATION_CAP: usize = 10_000;
pub const POWER_ITERATION_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LipschitzError {
    #[error("power iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("matrix is zero or empty")]
    ZeroMatrix,
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("no sample points")]
    NoSamples,
    #[error("variance and Lipschitz constant must be non-negative")]
    Negative,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Vae(#[from] VaeError),
}

/// Largest singular value of `w` by power iteration on `wᵀw`, started from
/// the all-ones vector.
pub fn spectral_norm(w: ArrayView2<'_, f64>, tol: f64) -> Result<f64, LipschitzError> {
    if w.is_empty() || w.iter().all(|&v| v == 0.0) {
        return Err(LipschitzError::ZeroMatrix);
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(LipschitzError::NonFinite);
    }
    let n = w.ncols();
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut sigma = w.dot(&v).dot(&w.dot(&v)).sqrt();
    let mut restarted = false;
    let mut residual = f64::INFINITY;
    for _ in 0..POWER_ITERATION_CAP {
        let wtwv = w.t().dot(&w.dot(&v));
        let norm = wtwv.dot(&wtwv).sqrt();
        if norm == 0.0 {
            // The start vector lies in the null space; retry once from a fixed scrambled vector.
            if restarted {
                return Err(LipschitzError::ZeroMatrix);
            }
            restarted = true;
            v = Array1::from_shape_fn(n, |i| ((i as f64 + 1.0) * 0.618_033_988_75).fract() - 0.5);
            let len = v.dot(&v).sqrt();
            v /= len;
            continue;
        }
        let next = &wtwv / norm;
        let wv = w.dot(&next);
        let next_sigma = wv.dot(&wv).sqrt();
        let rayleigh = (sigma * sigma).max(f64::MIN_POSITIVE);
        let r = &wtwv - &(&v * rayleigh);
        residual = r.dot(&r).sqrt() / rayleigh;
        v = next;
        if (next_sigma - sigma).abs() <= tol * next_sigma {
            return Ok(next_sigma);
        }
        sigma = next_sigma;
    }
    Err(LipschitzError::NoConvergence {
        iterations: POWER_ITERATION_CAP,
        residual,
    })
}

fn operator_norm(w: ArrayView2<'_, f64>) -> Result<f64, LipschitzError> {
    match spectral_norm(w, POWER_ITERATION_TOL) {
        Err(LipschitzError::ZeroMatrix) => Ok(0.0),
        other => other,
    }
}

/// `Π_l ‖W_l‖₂ · Π_l Lip(σ_l)`.
pub fn lipschitz_upper_bound(net: &DenseNetwork) -> Result<f64, LipschitzError> {
    let mut bound = 1.0;
    for (l, shape) in net.layers().iter().enumerate() {
        bound *= operator_norm(net.weights(l))? * shape.activation.lipschitz();
    }
    Ok(bound)
}

/// Input Jacobians (`outputs × inputs`) of `net` at every row of `points`.
pub fn jacobians(net: &DenseNetwork, points: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>, LipschitzError> {
    let (out, tape) = net.forward(points)?;
    let mut jac = vec![Array2::zeros((net.output_dim(), net.input_dim())); points.nrows()];
    for o in 0..net.output_dim() {
        let mut seed = Array2::zeros(out.raw_dim());
        seed.column_mut(o).fill(1.0);
        let g = net.backward(&tape, seed.view())?;
        for (j, row) in jac.iter_mut().zip(g.input.axis_iter(Axis(0))) {
            j.row_mut(o).assign(&row);
        }
    }
    Ok(jac)
}

/// Largest Jacobian operator norm over the sample points: a lower bound on
/// the Lipschitz constant.
pub fn empirical_lipschitz(net: &DenseNetwork, points: ArrayView2<'_, f64>, exec: Execution) -> Result<f64, LipschitzError> {
    if points.nrows() == 0 {
        return Err(LipschitzError::NoSamples);
    }
    let jac = jacobians(net, points)?;
    let norms = try_map_indexed(exec, jac.len(), |i| operator_norm(jac[i].view()))?;
    Ok(norms.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzMethod {
    NormProduct,
    GradientSampling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzEstimate {
    pub upper_bound: f64,
    pub empirical_lower_bound: f64,
    /// Method behind `upper_bound`.
    pub method: LipschitzMethod,
    pub sample_count: usize,
}

pub fn lipschitz_estimate(
    net: &DenseNetwork,
    points: ArrayView2<'_, f64>,
    exec: Execution,
) -> Result<LipschitzEstimate, LipschitzError> {
    Ok(LipschitzEstimate {
        upper_bound: lipschitz_upper_bound(net)?,
        empirical_lower_bound: empirical_lipschitz(net, points, exec)?,
        method: LipschitzMethod::NormProduct,
        sample_count: points.nrows(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareCheck {
    pub holds: bool,
    /// `L²‖S‖₂² − var_f`.
    pub slack: f64,
}

/// Checks `var_f ≤ L²‖S‖₂² + 3·std_error` (pass `0` for an exact variance).
pub fn poincare_check(var_f: f64, lipschitz: f64, m: &GaussianMeasure, std_error: f64) -> Result<PoincareCheck, LipschitzError> {
    if var_f < 0.0 || lipschitz < 0.0 || std_error < 0.0 {
        return Err(LipschitzError::Negative);
    }
    let bound = (lipschitz * m.scale_norm()).powi(2);
    Ok(PoincareCheck {
        holds: var_f <= bound + 3.0 * std_error,
        slack: bound - var_f,
    })
}

/// Outcome of checking the Poincaré bound on every point and decoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderPoincareSummary {
    pub lipschitz: f64,
    pub checks: usize,
    pub violations: usize,
    pub var_max: f64,
    pub slack_min: f64,
}

/// Monte Carlo decoder variance under `q(z|x)` against the decoder's
/// Lipschitz bound at every row of `data`; point `i` uses seed `(seed, i)`.
pub fn decoder_poincare(
    model: &VaeModel,
    data: ArrayView2<'_, f64>,
    n_samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<DecoderPoincareSummary, LipschitzError> {
    let lipschitz = lipschitz_upper_bound(&model.decoder)?;
    let per_point = try_map_indexed(exec, data.nrows(), |i| {
        let x = data.row(i).to_vec();
        let bv = bias_variance_likelihood(model, &x, n_samples, derive_seed(seed, &[i as u64]))?;
        let (mu, sigma) = model.encode(&x)?;
        let m = GaussianMeasure::new(mu, sigma).map_err(VaeError::from)?;
        bv.per_dim_variance
            .iter()
            .zip(&bv.per_dim_std_error)
            .map(|(&v, &se)| Ok((v, poincare_check(v.max(0.0), lipschitz, &m, se)?)))
            .collect::<Result<Vec<_>, LipschitzError>>()
    })?;
    let mut summary = DecoderPoincareSummary {
        lipschitz,
        checks: 0,
        violations: 0,
        var_max: 0.0,
        slack_min: f64::INFINITY,
    };
    for (var, check) in per_point.into_iter().flatten() {
        summary.checks += 1;
        summary.violations += usize::from(!check.holds);
        summary.var_max = summary.var_max.max(var);
        summary.slack_min = summary.slack_min.min(check.slack);
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReportRow {
    pub network_id: String,
    pub sigma_phi_or_sigma: f64,
    pub upper_bound: f64,
    pub empirical_lower_bound: f64,
    pub var_max: f64,
    pub poincare_slack_min: f64,
}

pub fn lipschitz_report_csv(rows: &[LipschitzReportRow]) -> String {
    let mut out = String::from("network_id,sigma_phi_or_sigma,upper_bound,empirical_lower_bound,var_max,poincare_slack_min\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.network_id,
            num(r.sigma_phi_or_sigma),
            num(r.upper_bound),
            num(r.empirical_lower_bound),
            num(r.var_max),
            num(r.poincare_slack_min)
        ));
    }
    out
}
