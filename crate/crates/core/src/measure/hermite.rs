use std::f64::consts::PI;

use super::MeasureError;

/// Probabilists' Hermite polynomial `H_k(t)` via the three-term recurrence.
pub fn hermite(k: usize, t: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, t);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let next = t * cur - j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `H_0(t), …, H_max(t)` in one pass.
pub fn hermite_all(max_degree: usize, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_degree + 1);
    out.push(1.0);
    if max_degree >= 1 {
        out.push(t);
    }
    for j in 1..max_degree {
        let next = t * out[j] - j as f64 * out[j - 1];
        out.push(next);
    }
    out
}

/// `H_k((x - mu) / sigma)`, the degree-`k` orthogonal polynomial of `N(mu, sigma²)`.
pub fn hermite_general(k: usize, x: f64, mu: f64, sigma: f64) -> Result<f64, MeasureError> {
    if !(sigma > 0.0) {
        return Err(MeasureError::NonPositiveScale);
    }
    Ok(hermite(k, (x - mu) / sigma))
}

/// Gauss–Hermite rule for the standard normal weight: `E[f(X)] ≈ Σ wᵢ f(xᵢ)`.
///
/// Nodes are found by Newton iteration on the orthonormal physicists'
/// recurrence, then mapped to the unit-variance weight by `x = √2·z` and
/// `w = w_phys / √π`, so the weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermiteRule {
    pub fn new(n: usize) -> Result<Self, MeasureError> {
        if n == 0 {
            return Err(MeasureError::InvalidEstimator("quadrature needs at least one node"));
        }
        let (z, w) = physicists_rule(n);
        let nodes: Vec<f64> = z.iter().map(|z| z * 2f64.sqrt()).collect();
        let weights: Vec<f64> = w.iter().map(|w| w / PI.sqrt()).collect();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Nodes (ascending) and weights for `∫ e^{-z²} f(z) dz`.
fn physicists_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let half = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..half {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        for _ in 0..100 {
            let (p1, p2) = orthonormal_recurrence(n, z, pim4);
            let z1 = z;
            z = z1 - p1 / ((2.0 * nf).sqrt() * p2);
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, p2) = orthonormal_recurrence(n, z, pim4);
        let pp = (2.0 * nf).sqrt() * p2;
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    // Stored descending from the largest root; flip to ascending.
    x.reverse();
    w.reverse();
    (x, w)
}

/// Returns `(p_n(z), p_{n-1}(z))` for the orthonormal physicists' Hermite functions.
fn orthonormal_recurrence(n: usize, z: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, p2)
}
