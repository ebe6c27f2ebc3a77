//! Norm-bounded maximum-damage attacks on a trained VAE and the relative
//! log-likelihood degradation they cause.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::row;
use crate::exec::{try_map_indexed, Execution};
use crate::report::num;
use crate::seed::{derive_seed, rng_from};
use crate::vae::{gaussian_log_likelihood, EncoderScale, VaeError, VaeModel};

/// Baselines `|log p(x|z)|` below this are rejected as degenerate.
pub const DEGENERATE_BASELINE: f64 = 1e-12;

/// Step-halvings tried before a non-improving step is abandoned.
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error("invalid attack configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("baseline log-likelihood {0:e} is too close to zero")]
    DegenerateBaseline(f64),
    #[error("every restart produced non-finite gradients")]
    AllRestartsFailed,
    #[error("empty point set")]
    NoPoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    /// Largest allowed ‖δ‖₂.
    #[serde(rename = "c")]
    pub max_norm: f64,
    pub steps: usize,
    /// Defaults to `max_norm / 20`.
    pub step_size: Option<f64>,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            max_norm: 1.0,
            steps: 100,
            step_size: None,
            restarts: 5,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn effective_step_size(&self) -> f64 {
        self.step_size.unwrap_or(self.max_norm / 20.0)
    }

    fn validate(&self) -> Result<(), AttackError> {
        if !(self.max_norm >= 0.0 && self.max_norm.is_finite()) {
            return Err(AttackError::InvalidConfig("c must be a finite non-negative number"));
        }
        if self.steps == 0 || self.restarts == 0 {
            return Err(AttackError::InvalidConfig("steps and restarts must be positive"));
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(AttackError::InvalidConfig("step_size must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub delta: Vec<f64>,
    /// ‖gθ(μφ(x+δ) + η∘σφ(x+δ)) − gθ(μφ(x))‖₂ at `delta`.
    pub objective: f64,
    pub degradation: f64,
    pub norm_used: f64,
    /// Frozen noise of the winning restart.
    pub eta: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean projection onto the ball of radius `c`.
pub fn project_l2(delta: &mut [f64], c: f64) {
    let n = norm(delta);
    if n > c {
        let s = if n > 0.0 { c / n } else { 0.0 };
        delta.iter_mut().for_each(|d| *d *= s);
    }
}

struct Objective<'a> {
    model: &'a VaeModel,
    x: &'a [f64],
    clean: Vec<f64>,
    eta: Vec<f64>,
}

impl Objective<'_> {
    fn input(&self, delta: &[f64]) -> Vec<f64> {
        self.x.iter().zip(delta).map(|(a, b)| a + b).collect()
    }

    #[cfg(test)]
    fn value(&self, delta: &[f64]) -> Result<f64, VaeError> {
        let (mu, sigma) = self.model.encode(&self.input(delta))?;
        let z: Vec<f64> = mu.iter().zip(&sigma).zip(&self.eta).map(|((m, s), e)| m + s * e).collect();
        let g = self.model.decoder.predict_one(&z)?;
        Ok(g.iter().zip(&self.clean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
    }

    /// Objective and its gradient with respect to `delta`.
    fn gradient(&self, delta: &[f64]) -> Result<(f64, Vec<f64>), VaeError> {
        let xin = self.input(delta);
        let m = self.model;
        let (mu, mean_tape) = m.encoder_mean.forward(row(&xin))?;
        let (sigma, scale_tape) = m.scale_forward(row(&xin), 1)?;
        let eta = Array2::from_shape_vec((1, self.eta.len()), self.eta.clone()).expect("row");
        let z = &mu + &(&sigma * &eta);
        let (g, dec_tape) = m.decoder.forward(z.view())?;
        let diff: Vec<f64> = g.iter().zip(&self.clean).map(|(a, b)| a - b).collect();
        let value = norm(&diff);
        if value == 0.0 {
            return Ok((0.0, vec![0.0; delta.len()]));
        }
        let seed = Array2::from_shape_vec((1, diff.len()), diff.iter().map(|d| d / value).collect()).expect("row");
        let dz = m.decoder.backward(&dec_tape, seed.view())?.input;
        let mut dx = m.encoder_mean.backward(&mean_tape, dz.view())?.input;
        if let (EncoderScale::Learned(net), Some((tape, dsig))) = (&m.encoder_scale, scale_tape) {
            let ds = &(&dz * &eta) * &dsig;
            dx += &net.backward(&tape, ds.view())?.input;
        }
        let grad = dx.into_raw_vec_and_offset().0;
        if !value.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(VaeError::NonFinite("attack gradient"));
        }
        Ok((value, grad))
    }
}

/// Projected normalised-gradient ascent from `start`; a step that would lower
/// the objective is retried at half the size, so the final objective is never
/// below the starting one.
fn ascend(obj: &Objective<'_>, mut delta: Vec<f64>, c: f64, steps: usize, step_size: f64) -> Result<(Vec<f64>, f64), VaeError> {
    project_l2(&mut delta, c);
    let (mut value, mut grad) = obj.gradient(&delta)?;
    for _ in 0..steps {
        let gn = norm(&grad);
        if gn == 0.0 {
            break;
        }
        let mut step = step_size;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let mut cand: Vec<f64> = delta.iter().zip(&grad).map(|(d, g)| d + step * g / gn).collect();
            project_l2(&mut cand, c);
            let (v, g) = obj.gradient(&cand)?;
            if v >= value {
                delta = cand;
                value = v;
                grad = g;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((delta, value))
}

fn random_in_ball<R: Rng + ?Sized>(dim: usize, c: f64, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = norm(&v);
    let radius = c * rng.random::<f64>().powf(1.0 / dim as f64);
    v.iter_mut().for_each(|x| *x *= if n > 0.0 { radius / n } else { 0.0 });
    v
}

/// Maximum-damage attack; restart 0 starts at `δ = 0`, the others uniformly in the ball.
pub fn maximum_damage_attack(model: &VaeModel, x: &[f64], cfg: &AttackConfig) -> Result<AttackResult, AttackError> {
    maximum_damage_attack_from(model, x, cfg, None)
}

/// As [`maximum_damage_attack`], plus an extra restart from `warm` (same η),
/// so the result never falls below a previous solution that remains feasible.
pub fn maximum_damage_attack_from(
    model: &VaeModel,
    x: &[f64],
    cfg: &AttackConfig,
    warm: Option<&AttackResult>,
) -> Result<AttackResult, AttackError> {
    cfg.validate()?;
    if x.len() != model.data_dim() {
        return Err(VaeError::DimensionMismatch {
            expected: model.data_dim(),
            found: x.len(),
        }
        .into());
    }
    let c = cfg.max_norm;
    let (mu, _) = model.encode(x)?;
    let clean = model.decoder.predict_one(&mu).map_err(VaeError::from)?;
    if c == 0.0 {
        return Ok(AttackResult {
            delta: vec![0.0; x.len()],
            objective: 0.0,
            degradation: 0.0,
            norm_used: 0.0,
            eta: vec![0.0; mu.len()],
        });
    }
    let mut starts = Vec::with_capacity(cfg.restarts + 1);
    for r in 0..cfg.restarts {
        let mut rng = rng_from(cfg.seed, &[r as u64]);
        let eta: Vec<f64> = (0..mu.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let delta = if r == 0 { vec![0.0; x.len()] } else { random_in_ball(x.len(), c, &mut rng) };
        starts.push((eta, delta));
    }
    if let Some(w) = warm {
        starts.push((w.eta.clone(), w.delta.clone()));
    }
    let mut best: Option<(Vec<f64>, f64, Vec<f64>)> = None;
    for (eta, delta) in starts {
        let obj = Objective {
            model,
            x,
            clean: clean.clone(),
            eta,
        };
        match ascend(&obj, delta, c, cfg.steps, cfg.effective_step_size()) {
            Ok((d, v)) => {
                if best.as_ref().is_none_or(|b| v > b.1) {
                    best = Some((d, v, obj.eta));
                }
            }
            Err(VaeError::NonFinite(_)) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    let (delta, objective, eta) = best.ok_or(AttackError::AllRestartsFailed)?;
    let degradation = likelihood_degradation(model, x, &delta)?;
    Ok(AttackResult {
        norm_used: norm(&delta),
        delta,
        objective,
        degradation,
        eta,
    })
}

/// `|log p(x|z*) − log p(x|z)| / |log p(x|z)|` with `z = μφ(x)`, `z* = μφ(x+δ)`.
pub fn likelihood_degradation(model: &VaeModel, x: &[f64], delta: &[f64]) -> Result<f64, AttackError> {
    if delta.len() != x.len() {
        return Err(VaeError::DimensionMismatch {
            expected: x.len(),
            found: delta.len(),
        }
        .into());
    }
    let log_p = |input: &[f64]| -> Result<f64, AttackError> {
        let (mu, _) = model.encode(input)?;
        let g = model.decoder.predict_one(&mu).map_err(VaeError::from)?;
        let sq: f64 = g.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
        Ok(gaussian_log_likelihood(sq, x.len(), model.likelihood_scale()))
    };
    let base = log_p(x)?;
    if base.abs() < DEGENERATE_BASELINE {
        return Err(AttackError::DegenerateBaseline(base));
    }
    let shifted: Vec<f64> = x.iter().zip(delta).map(|(a, b)| a + b).collect();
    Ok((log_p(&shifted)? - base).abs() / base.abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessPoint {
    pub max_norm: f64,
    pub mean_degradation: f64,
    /// Sample variance across points (zero for a single point).
    pub var_degradation: f64,
    pub n_points: usize,
}

/// Degradation statistics over `points` (rows) for each attack radius.
///
/// Radii are processed in increasing order and each attack is warm-started
/// from the point's previous solution. Point `i` uses seed `(cfg.seed, i)`.
pub fn robustness_curve(
    model: &VaeModel,
    points: ArrayView2<'_, f64>,
    c_grid: &[f64],
    cfg: &AttackConfig,
    exec: Execution,
) -> Result<Vec<RobustnessPoint>, AttackError> {
    if points.nrows() == 0 {
        return Err(AttackError::NoPoints);
    }
    let mut order: Vec<usize> = (0..c_grid.len()).collect();
    order.sort_by(|&a, &b| c_grid[a].total_cmp(&c_grid[b]));
    let per_point = try_map_indexed(exec, points.nrows(), |i| {
        let x = points.row(i).to_vec();
        let mut out = vec![0.0; c_grid.len()];
        let mut warm: Option<AttackResult> = None;
        for &k in &order {
            let point_cfg = AttackConfig {
                max_norm: c_grid[k],
                seed: derive_seed(cfg.seed, &[i as u64]),
                ..cfg.clone()
            };
            let r = maximum_damage_attack_from(model, &x, &point_cfg, warm.as_ref())?;
            out[k] = r.degradation;
            warm = Some(r);
        }
        Ok::<_, AttackError>(out)
    })?;
    let n = points.nrows();
    Ok((0..c_grid.len())
        .map(|k| {
            let mean = per_point.iter().map(|p| p[k]).sum::<f64>() / n as f64;
            let var = if n > 1 {
                per_point.iter().map(|p| (p[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            RobustnessPoint {
                max_norm: c_grid[k],
                mean_degradation: mean,
                var_degradation: var,
                n_points: n,
            }
        })
        .collect())
}

pub fn robustness_csv(curve: &[RobustnessPoint], sigma_phi: Option<f64>, input_noise_sigma: f64) -> String {
    let mut out = String::from("C,mean_degradation,var_degradation,n_points,sigma_phi,input_noise_sigma\n");
    let phi = sigma_phi.map_or_else(|| "learned".to_string(), num);
    for p in curve {
        out.push_str(&format!(
            "{},{},{},{},{phi},{}\n",
            num(p.max_norm),
            num(p.mean_degradation),
            num(p.var_degradation),
            p.n_points,
            num(input_noise_sigma)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Activation, DenseNetwork, LayerShape};
    use crate::vae::{Architecture, VaeModel};
    use std::f64::consts::PI;

    fn small_model(fixed: Option<f64>, seed: u64) -> VaeModel {
        let arch = Architecture {
            data_dim: 3,
            latent_dim: 2,
            hidden: vec![12, 12],
            activation: Activation::Tanh,
        };
        VaeModel::new(&arch, fixed, 0.3, &mut rng_from(seed, &[])).unwrap()
    }

    fn linear(w: f64, b: f64) -> DenseNetwork {
        DenseNetwork::from_parameters(vec![LayerShape { inputs: 1, outputs: 1, activation: Activation::Identity }], vec![w, b])
            .unwrap()
    }

    #[test]
    fn zero_radius() {
        let m = small_model(Some(0.5), 1);
        let r = maximum_damage_attack(&m, &[0.1, 0.2, -0.3], &AttackConfig { max_norm: 0.0, ..AttackConfig::default() }).unwrap();
        assert_eq!(r.delta, vec![0.0; 3]);
        assert_eq!((r.objective, r.degradation, r.norm_used), (0.0, 0.0, 0.0));
    }

    #[test]
    fn respects_radius_and_is_deterministic() {
        for fixed in [Some(0.5), None] {
            let m = small_model(fixed, 2);
            let x = [0.3, -0.5, 0.8];
            for c in [0.05, 0.5, 2.0] {
                let cfg = AttackConfig { max_norm: c, steps: 30, seed: 4, ..AttackConfig::default() };
                let a = maximum_damage_attack(&m, &x, &cfg).unwrap();
                assert!(a.norm_used <= c + 1e-9);
                assert!(a.degradation >= 0.0);
                assert_eq!(a, maximum_damage_attack(&m, &x, &cfg).unwrap());
            }
        }
    }

    #[test]
    fn each_restart_improves_on_its_start() {
        let m = small_model(None, 3);
        let x = [0.3, -0.5, 0.8];
        let cfg = AttackConfig { max_norm: 1.0, steps: 20, ..AttackConfig::default() };
        for r in 0..cfg.restarts {
            let mut rng = rng_from(cfg.seed, &[r as u64]);
            let eta: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let start = if r == 0 { vec![0.0; 3] } else { random_in_ball(3, 1.0, &mut rng) };
            let (mu, _) = m.encode(&x).unwrap();
            let obj = Objective { model: &m, x: &x, clean: m.decoder.predict_one(&mu).unwrap(), eta };
            let v0 = obj.value(&start).unwrap();
            let (d, v) = ascend(&obj, start, 1.0, 20, 0.05).unwrap();
            assert!(v >= v0);
            assert!((obj.value(&d).unwrap() - v).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = small_model(None, 5);
        let x = [0.2, 0.1, -0.4];
        let (mu, _) = m.encode(&x).unwrap();
        let obj = Objective { model: &m, x: &x, clean: m.decoder.predict_one(&mu).unwrap(), eta: vec![0.7, -1.1] };
        let d = [0.05, -0.1, 0.2];
        let (_, g) = obj.gradient(&d).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut p = d;
            p[i] += h;
            let mut q = d;
            q[i] -= h;
            let fd = (obj.value(&p).unwrap() - obj.value(&q).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn warm_start_makes_objective_monotone_in_radius() {
        let m = small_model(Some(0.3), 6);
        let x = [0.4, 0.4, -0.2];
        let mut warm: Option<AttackResult> = None;
        let mut last = 0.0;
        for c in [0.5, 1.0, 2.0] {
            let cfg = AttackConfig { max_norm: c, steps: 25, ..AttackConfig::default() };
            let r = maximum_damage_attack_from(&m, &x, &cfg, warm.as_ref()).unwrap();
            assert!(r.objective >= last);
            last = r.objective;
            warm = Some(r);
        }
    }

    #[test]
    fn projection() {
        let mut inside = vec![0.3, 0.4];
        project_l2(&mut inside, 1.0);
        assert_eq!(inside, vec![0.3, 0.4]);
        let mut outside = vec![3.0, 4.0];
        project_l2(&mut outside, 2.0);
        assert!((norm(&outside) - 2.0).abs() < 1e-12);
        assert!((outside[0] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn degradation_hand_computed() {
        // μ(x) = 2x + 0.1, g(z) = -0.5z + 0.3, σθ = 0.2.
        let m = VaeModel::from_parts(linear(2.0, 0.1), EncoderScale::Fixed(vec![0.5]), linear(-0.5, 0.3), 0.2).unwrap();
        let (x, d) = (0.4, 0.15);
        let logp = |input: f64| {
            let g = -0.5 * (2.0 * input + 0.1) + 0.3;
            -(x - g).powi(2) / (2.0 * 0.04) - 0.5 * (2.0 * PI * 0.04f64).ln()
        };
        let want = (logp(x + d) - logp(x)).abs() / logp(x).abs();
        assert!((likelihood_degradation(&m, &[x], &[d]).unwrap() - want).abs() < 1e-10);
        assert_eq!(likelihood_degradation(&m, &[x], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_baseline_is_signalled() {
        // Choose σθ so that the perfect-reconstruction log-likelihood is exactly zero: 2πσθ² = 1.
        let s = (1.0 / (2.0 * PI)).sqrt();
        let m = VaeModel::from_parts(linear(1.0, 0.0), EncoderScale::Fixed(vec![1.0]), linear(1.0, 0.0), s).unwrap();
        assert!(matches!(likelihood_degradation(&m, &[0.3], &[0.1]), Err(AttackError::DegenerateBaseline(_))));
    }

    #[test]
    fn robustness_curve_shapes() {
        let m = small_model(Some(0.5), 7);
        let pts = Array2::from_shape_fn((3, 3), |(i, j)| ((i * 3 + j) as f64 * 0.7).sin() * 0.8);
        let cfg = AttackConfig { steps: 10, restarts: 2, ..AttackConfig::default() };
        let zero = robustness_curve(&m, pts.view(), &[0.0], &cfg, Execution::Sequential).unwrap();
        assert_eq!(zero[0].mean_degradation, 0.0);
        assert_eq!(zero[0].var_degradation, 0.0);
        let curve = robustness_curve(&m, pts.view(), &[1.0, 0.5], &cfg, Execution::Sequential).unwrap();
        assert_eq!(curve[0].max_norm, 1.0);
        assert!(curve.iter().all(|p| p.mean_degradation >= 0.0 && p.n_points == 3));
        let csv = robustness_csv(&curve, Some(0.5), 0.0);
        assert!(csv.starts_with("C,mean_degradation,var_degradation,n_points,sigma_phi,input_noise_sigma\n"));
        assert!(robustness_curve(&m, pts.slice(ndarray::s![..0, ..]), &[1.0], &cfg, Execution::Sequential).is_err());
    }
}
