use std::collections::BTreeMap;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};

use super::hermite::{hermite_all, GaussHermiteRule};
use super::multi_index::{enumerate_multi_indices, MultiIndex, MAX_EXACT_DEGREE};
use super::{GaussianMeasure, MeasureError};
use crate::exec::{map_indexed, Execution};
use crate::report::num;
use crate::seed::rng_from;

const MC_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Quadrature,
    MonteCarlo,
}

/// How expectations under the measure are approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// Tensorised Gauss–Hermite rule with this many nodes per dimension.
    Quadrature { nodes_per_dim: usize },
    /// Seeded standard-normal draws in standardised coordinates.
    MonteCarlo { samples: usize, seed: u64 },
}

impl Estimator {
    /// Quadrature (64 nodes/dim) up to two dimensions, 10⁵ Monte Carlo samples beyond.
    pub fn default_for(dim: usize, seed: u64) -> Self {
        if dim <= 2 {
            Estimator::Quadrature { nodes_per_dim: 64 }
        } else {
            Estimator::MonteCarlo {
                samples: 100_000,
                seed,
            }
        }
    }

    pub fn kind(&self) -> EstimatorKind {
        match self {
            Estimator::Quadrature { .. } => EstimatorKind::Quadrature,
            Estimator::MonteCarlo { .. } => EstimatorKind::MonteCarlo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientEstimate {
    pub value: f64,
    /// Zero for quadrature.
    pub std_error: f64,
    pub estimator: EstimatorKind,
    pub samples_or_nodes: usize,
}

/// One term `f̂(α)²/α!` of the variance expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coefficient: CoefficientEstimate,
    pub contribution: f64,
    pub std_error: f64,
}

/// Variance of a function split over Hermite degrees `1 ≤ |α| ≤ truncation_degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDecomposition {
    pub contributions: BTreeMap<MultiIndex, Term>,
    pub truncation_degree: usize,
    pub total: f64,
    pub total_std_error: f64,
}

impl VarianceDecomposition {
    pub fn contribution(&self, alpha: &MultiIndex) -> f64 {
        self.contributions.get(alpha).map_or(0.0, |t| t.contribution)
    }

    /// Contributions summed by total degree; entry `k` holds degree `k` (entry 0 is always 0).
    pub fn by_degree(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.truncation_degree + 1];
        for (alpha, term) in &self.contributions {
            out[alpha.total_degree()] += term.contribution;
        }
        out
    }

    /// Share of the captured variance carried by degrees `≥ min_degree`.
    pub fn fraction_at_or_above(&self, min_degree: usize) -> Option<f64> {
        if self.total <= 0.0 {
            return None;
        }
        let high: f64 = self.by_degree().iter().skip(min_degree).sum();
        Some(high / self.total)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,contribution,std_error\n");
        for (alpha, term) in &self.contributions {
            out.push_str(&format!("{alpha},{},{}\n", num(term.contribution), num(term.std_error)));
        }
        out
    }
}

/// Evaluation points in standard coordinates with their quadrature weights.
struct Design {
    xhat: Array2<f64>,
    weights: Option<Vec<f64>>,
    kind: EstimatorKind,
    count: usize,
}

fn design(m: &GaussianMeasure, est: Estimator, exec: Execution) -> Result<Design, MeasureError> {
    let n = m.dim();
    match est {
        Estimator::Quadrature { nodes_per_dim } => {
            if nodes_per_dim == 0 {
                return Err(MeasureError::InvalidEstimator("zero quadrature nodes"));
            }
            if n > 4 {
                return Err(MeasureError::QuadratureDimension(n));
            }
            let rule = GaussHermiteRule::new(nodes_per_dim)?;
            let total = nodes_per_dim.pow(n as u32);
            let mut xhat = Array2::zeros((total, n));
            let mut weights = vec![1.0; total];
            for p in 0..total {
                let mut rem = p;
                for i in (0..n).rev() {
                    let k = rem % nodes_per_dim;
                    rem /= nodes_per_dim;
                    xhat[(p, i)] = rule.nodes[k];
                    weights[p] *= rule.weights[k];
                }
            }
            Ok(Design {
                xhat,
                weights: Some(weights),
                kind: EstimatorKind::Quadrature,
                count: nodes_per_dim,
            })
        }
        Estimator::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(MeasureError::InvalidEstimator("Monte Carlo needs at least two samples"));
            }
            let chunks = samples.div_ceil(MC_CHUNK);
            let parts = map_indexed(exec, chunks, |c| {
                let len = MC_CHUNK.min(samples - c * MC_CHUNK);
                let mut rng = rng_from(seed, &[c as u64]);
                Array2::from_shape_simple_fn((len, n), || StandardNormal.sample(&mut rng))
            });
            let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
            let xhat = ndarray::concatenate(Axis(0), &views).expect("equal widths");
            Ok(Design {
                xhat,
                weights: None,
                kind: EstimatorKind::MonteCarlo,
                count: samples,
            })
        }
    }
}

fn evaluate<F>(
    f: &F,
    design: &Design,
    m: &GaussianMeasure,
    exec: Execution,
) -> Result<Array2<f64>, MeasureError>
where
    F: Fn(ArrayView2<'_, f64>) -> Array2<f64> + Sync,
{
    let rows = design.xhat.nrows();
    let chunks = rows.div_ceil(MC_CHUNK);
    let parts = map_indexed(exec, chunks, |c| {
        let block = design.xhat.slice(s![c * MC_CHUNK..rows.min((c + 1) * MC_CHUNK), ..]);
        let mut points = Array2::zeros(block.raw_dim());
        for (src, mut dst) in block.outer_iter().zip(points.outer_iter_mut()) {
            let x = m
                .destandardize(src.as_slice().expect("row-major"))
                .expect("dimension checked");
            dst.assign(&ndarray::ArrayView1::from(&x[..]));
        }
        f(points.view())
    });
    for p in &parts {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(MeasureError::NonFinite("function values"));
        }
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let values = ndarray::concatenate(Axis(0), &views)
        .map_err(|_| MeasureError::BadEvaluation { expected: rows, found: 0 })?;
    if values.nrows() != rows {
        return Err(MeasureError::BadEvaluation {
            expected: rows,
            found: values.nrows(),
        });
    }
    Ok(values)
}

/// `E[v]` and its standard error for one coefficient's integrand.
fn reduce(values: impl Iterator<Item = f64>, design: &Design) -> (f64, f64) {
    match &design.weights {
        Some(w) => (values.zip(w).map(|(v, w)| v * w).sum(), 0.0),
        None => {
            let v: Vec<f64> = values.collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, (var / n).sqrt())
        }
    }
}

/// Hermite values `H_k(x̂_{j,i})` for every point `j`, coordinate `i`, `k ≤ max_degree`.
fn hermite_table(xhat: &Array2<f64>, max_degree: usize) -> Vec<Vec<Vec<f64>>> {
    xhat.outer_iter()
        .map(|row| row.iter().map(|&t| hermite_all(max_degree, t)).collect())
        .collect()
}

fn estimate(
    values: &Array2<f64>,
    output: usize,
    alpha: &MultiIndex,
    table: &[Vec<Vec<f64>>],
    design: &Design,
) -> CoefficientEstimate {
    let integrand = table.iter().enumerate().map(|(j, h)| {
        let basis: f64 = alpha.degrees().iter().enumerate().map(|(i, &k)| h[i][k]).product();
        values[(j, output)] * basis
    });
    let (value, std_error) = reduce(integrand, design);
    CoefficientEstimate {
        value,
        std_error,
        estimator: design.kind,
        samples_or_nodes: design.count,
    }
}

/// Estimates `f̂(α) = E[f(x) H_α(x̂)]` under `m`.
pub fn hermite_coefficient<F>(
    f: F,
    alpha: &MultiIndex,
    m: &GaussianMeasure,
    est: Estimator,
) -> Result<CoefficientEstimate, MeasureError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if alpha.dim() != m.dim() {
        return Err(MeasureError::DimensionMismatch {
            expected: m.dim(),
            found: alpha.dim(),
        });
    }
    if alpha.total_degree() > MAX_EXACT_DEGREE {
        return Err(MeasureError::DegreeTooLarge(alpha.total_degree()));
    }
    let exec = Execution::default();
    let design = design(m, est, exec)?;
    let values = evaluate(&scalar_batch(&f), &design, m, exec)?;
    let max_deg = alpha.degrees().iter().copied().max().unwrap_or(0);
    let table = hermite_table(&design.xhat, max_deg);
    Ok(estimate(&values, 0, alpha, &table, &design))
}

fn scalar_batch<F>(f: &F) -> impl Fn(ArrayView2<'_, f64>) -> Array2<f64> + Sync + '_
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    move |points: ArrayView2<'_, f64>| {
        let col: Vec<f64> = points
            .outer_iter()
            .map(|r| f(r.as_slice().expect("row-major")))
            .collect();
        Array2::from_shape_vec((col.len(), 1), col).expect("column")
    }
}

/// Variance decomposition of a scalar function.
pub fn variance_decomposition<F>(
    f: F,
    m: &GaussianMeasure,
    max_degree: usize,
    est: Estimator,
) -> Result<VarianceDecomposition, MeasureError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut out = variance_decompositions(scalar_batch(&f), m, max_degree, est, Execution::default())?;
    Ok(out.remove(0))
}

/// Variance decompositions of every output column of a batched function
/// (`points: rows × dim → values: rows × outputs`), sharing one design.
pub fn variance_decompositions<F>(
    f: F,
    m: &GaussianMeasure,
    max_degree: usize,
    est: Estimator,
    exec: Execution,
) -> Result<Vec<VarianceDecomposition>, MeasureError>
where
    F: Fn(ArrayView2<'_, f64>) -> Array2<f64> + Sync,
{
    if max_degree == 0 {
        return Err(MeasureError::InvalidEstimator("max_degree must be at least 1"));
    }
    if max_degree > MAX_EXACT_DEGREE {
        return Err(MeasureError::DegreeTooLarge(max_degree));
    }
    let design = design(m, est, exec)?;
    let values = evaluate(&f, &design, m, exec)?;
    let table = hermite_table(&design.xhat, max_degree);
    let indices: Vec<MultiIndex> = enumerate_multi_indices(m.dim(), max_degree)
        .into_iter()
        .filter(|a| a.total_degree() >= 1)
        .collect();
    let outputs = values.ncols();
    let per_output = map_indexed(exec, outputs, |o| {
        let mut contributions = BTreeMap::new();
        let (mut total, mut var_total) = (0.0, 0.0);
        for alpha in &indices {
            let coefficient = estimate(&values, o, alpha, &table, &design);
            let fact = alpha.factorial().expect("degree bounded") as f64;
            let contribution = coefficient.value.powi(2) / fact;
            let std_error = 2.0 * coefficient.value.abs() * coefficient.std_error / fact;
            total += contribution;
            var_total += std_error * std_error;
            contributions.insert(
                alpha.clone(),
                Term {
                    coefficient,
                    contribution,
                    std_error,
                },
            );
        }
        VarianceDecomposition {
            contributions,
            truncation_degree: max_degree,
            total,
            total_std_error: var_total.sqrt(),
        }
    });
    Ok(per_output)
}
