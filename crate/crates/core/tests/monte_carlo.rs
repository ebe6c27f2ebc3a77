//! Closed forms checked against seeded Monte Carlo estimates (3 standard errors).

use harmonic_vae::seed::rng_from;
use harmonic_vae::vae::{add_input_noise, kl_diag_gaussian, reparameterize};
use rand_distr::{Distribution, StandardNormal};

const SAMPLES: usize = 1_000_000;

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn log_normal(z: f64, mu: f64, sigma: f64) -> f64 {
    -0.5 * ((z - mu) / sigma).powi(2) - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

#[test]
fn kl_matches_sampled_log_ratio() {
    for (case, (mu, sigma)) in [
        (vec![0.0], vec![1.0]),
        (vec![1.0, -0.5], vec![0.5, 2.0]),
        (vec![0.3, 0.0, -2.0], vec![0.1, 1.3, 0.8]),
    ]
    .into_iter()
    .enumerate()
    {
        let mut rng = rng_from(11, &[case as u64]);
        let draws: Vec<f64> = (0..SAMPLES)
            .map(|_| {
                let eps: Vec<f64> = (0..mu.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
                let z = reparameterize(&mu, &sigma, &eps).unwrap();
                (0..mu.len())
                    .map(|i| log_normal(z[i], mu[i], sigma[i]) - log_normal(z[i], 0.0, 1.0))
                    .sum()
            })
            .collect();
        let (mc, se) = mean_and_se(&draws);
        let exact = kl_diag_gaussian(&mu, &sigma).unwrap();
        assert!((mc - exact).abs() <= 3.0 * se.max(1e-12), "case {case}: {mc} ± {se} vs {exact}");
    }
}

#[test]
fn reparameterized_samples_have_the_posterior_moments() {
    let (mu, sigma) = ([0.7], [0.3]);
    let mut rng = rng_from(5, &[]);
    let z: Vec<f64> = (0..SAMPLES)
        .map(|_| reparameterize(&mu, &sigma, &[StandardNormal.sample(&mut rng)]).unwrap()[0])
        .collect();
    let (m, se) = mean_and_se(&z);
    assert!((m - 0.7).abs() <= 3.0 * se);
    let sq: Vec<f64> = z.iter().map(|v| (v - 0.7).powi(2)).collect();
    let (v, se) = mean_and_se(&sq);
    assert!((v - 0.09).abs() <= 3.0 * se);
}

#[test]
fn input_noise_has_the_requested_spread() {
    let mut rng = rng_from(9, &[]);
    let dev: Vec<f64> = (0..SAMPLES).map(|_| add_input_noise(&[0.25], 0.5, &mut rng)[0] - 0.25).collect();
    let (m, se) = mean_and_se(&dev);
    assert!(m.abs() <= 3.0 * se);
    let sq: Vec<f64> = dev.iter().map(|d| d * d).collect();
    let (v, se) = mean_and_se(&sq);
    assert!((v - 0.25).abs() <= 3.0 * se);
}
