use harmonic_vae::attack::project_l2;
use harmonic_vae::autodiff::{Activation, AdamConfig, AdamState, DenseNetwork};
use harmonic_vae::lipschitz::{empirical_lipschitz, lipschitz_upper_bound};
use harmonic_vae::measure::{
    hermite, hermite_coefficient, whiten, Estimator, GaussHermiteRule, GaussianMeasure, MultiIndex,
};
use harmonic_vae::seed::rng_from;
use harmonic_vae::spectral::{dft, dft_angular_grid, nudft, optimal_poly_degree};
use harmonic_vae::vae::{kl_diag_gaussian, reparameterize};
use harmonic_vae::Execution;
use nalgebra::DMatrix;
use ndarray::{Array2, Axis};
use proptest::prelude::*;

fn activation() -> impl Strategy<Value = Activation> {
    prop_oneof![
        Just(Activation::Sigmoid),
        Just(Activation::Tanh),
        Just(Activation::Relu),
        Just(Activation::Identity)
    ]
}

fn net(sizes: &[usize], act: Activation, seed: u64) -> DenseNetwork {
    DenseNetwork::mlp(sizes, act, Activation::Identity, &mut rng_from(seed, &[])).unwrap()
}

fn batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    use rand::Rng;
    let mut rng = rng_from(seed, &[1]);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-2.0..2.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hermite_orthogonal_under_any_measure(
        k in 0usize..=10,
        m in 0usize..=10,
        mu in -3.0f64..3.0,
        s in 0.1f64..5.0,
    ) {
        let rule = GaussHermiteRule::new(64).unwrap();
        let g = GaussianMeasure::new(vec![mu], vec![s]).unwrap();
        // Integrate in x-space through the affine map x = μ + s·x̂.
        let v = rule.integrate(|xhat| {
            let x = g.destandardize(&[xhat]).unwrap()[0];
            let t = g.standardize(&[x]).unwrap()[0];
            hermite(k, t) * hermite(m, t)
        });
        let kf: f64 = (1..=k).map(|i| i as f64).product();
        let expected = if k == m { kf } else { 0.0 };
        prop_assert!((v - expected).abs() <= 1e-8 * kf.max(1.0), "k={k} m={m} got {v}");
    }

    #[test]
    fn coefficients_are_measure_invariant(
        mu in -1.0f64..1.0,
        s in 0.2f64..2.0,
        a in 0usize..4,
    ) {
        let f = |x: &[f64]| (0.7 * x[0]).sin() + 0.1 * x[0] * x[0];
        let g = GaussianMeasure::new(vec![mu], vec![s]).unwrap();
        let est = Estimator::Quadrature { nodes_per_dim: 64 };
        let alpha = MultiIndex::new(vec![a]);
        let direct = hermite_coefficient(f, &alpha, &g, est).unwrap().value;
        let pulled = hermite_coefficient(
            |xh: &[f64]| f(&[mu + s * xh[0]]),
            &alpha,
            &GaussianMeasure::standard(1).unwrap(),
            est,
        )
        .unwrap()
        .value;
        prop_assert!((direct - pulled).abs() < 1e-10);
    }

    #[test]
    fn measure_fourier_decays_and_widening_suppresses(
        s in 0.1f64..3.0,
        w1 in 0.01f64..5.0,
        w2 in 0.01f64..5.0,
        grow in 1.01f64..3.0,
    ) {
        let g = GaussianMeasure::new(vec![0.3], vec![s]).unwrap();
        let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
        prop_assert!(g.fourier(&[hi]).unwrap().norm() <= g.fourier(&[lo]).unwrap().norm());
        let wide = GaussianMeasure::new(vec![0.3], vec![s * grow]).unwrap();
        prop_assert!(wide.fourier(&[w1]).unwrap().norm() < g.fourier(&[w1]).unwrap().norm());
    }

    #[test]
    fn whitening_is_orthogonal(seed in any::<u64>(), n in 1usize..6) {
        let a = batch(n, n, seed);
        let a = DMatrix::from_fn(n, n, |i, j| a[(i, j)]);
        let c = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
        let w = whiten(&c).unwrap();
        let gram = &w.rotation * w.rotation.transpose();
        prop_assert!((gram - DMatrix::identity(n, n)).abs().max() < 1e-10);
        prop_assert!(w.eigenvalues.iter().all(|&l| l > 0.0));
    }

    #[test]
    fn batch_equals_example_loop(seed in any::<u64>(), act in activation(), rows in 1usize..9) {
        let n = net(&[3, 7, 5, 2], act, seed);
        let x = batch(rows, 3, seed);
        let seed_grad = batch(rows, 2, seed ^ 1);
        let (out, tape) = n.forward(x.view()).unwrap();
        let g = n.backward(&tape, seed_grad.view()).unwrap();
        let mut summed = vec![0.0; n.parameter_count()];
        for r in 0..rows {
            let xi = x.index_axis(Axis(0), r).insert_axis(Axis(0));
            let (oi, ti) = n.forward(xi).unwrap();
            for (a, b) in oi.iter().zip(out.row(r)) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
            let gi = n.backward(&ti, seed_grad.index_axis(Axis(0), r).insert_axis(Axis(0))).unwrap();
            for (a, b) in gi.input.iter().zip(g.input.row(r)) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
            summed.iter_mut().zip(&gi.params).for_each(|(s, p)| *s += p);
        }
        for (a, b) in summed.iter().zip(&g.params) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn adam_trajectories_are_reproducible(seed in any::<u64>()) {
        let run = || {
            let mut n = net(&[2, 4, 1], Activation::Tanh, seed);
            let mut opt = AdamState::new(n.parameter_count(), AdamConfig::default());
            let x = batch(5, 2, seed);
            for _ in 0..20 {
                let (out, tape) = n.forward(x.view()).unwrap();
                let g = n.backward(&tape, out.view()).unwrap();
                opt.step(n.parameters_mut(), &g.params).unwrap();
            }
            n.parameters().to_vec()
        };
        let (a, b) = (run(), run());
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn empirical_lipschitz_below_upper_bound(seed in any::<u64>(), act in activation()) {
        let n = net(&[3, 8, 8, 2], act, seed);
        let pts = batch(32, 3, seed);
        let lo = empirical_lipschitz(&n, pts.view(), Execution::Sequential).unwrap();
        let hi = lipschitz_upper_bound(&n).unwrap();
        prop_assert!(lo <= hi * (1.0 + 1e-9), "{lo} > {hi}");
    }

    #[test]
    fn scaling_one_layer_scales_the_bound(seed in any::<u64>(), c in -4.0f64..4.0, layer in 0usize..3) {
        prop_assume!(c.abs() > 1e-3);
        let n = net(&[3, 6, 6, 2], Activation::Sigmoid, seed);
        let mut scaled = n.clone();
        scaled.weights_mut(layer).mapv_inplace(|w| w * c);
        let (a, b) = (lipschitz_upper_bound(&n).unwrap(), lipschitz_upper_bound(&scaled).unwrap());
        prop_assert!((b - c.abs() * a).abs() <= 1e-8 * b.max(1.0));
    }

    #[test]
    fn projection_lands_in_ball(v in prop::collection::vec(-50.0f64..50.0, 1..8), c in 0.0f64..20.0) {
        let norm = |d: &[f64]| d.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut d = v.clone();
        project_l2(&mut d, c);
        prop_assert!(norm(&d) <= c + 1e-9);
        if norm(&v) <= c {
            prop_assert_eq!(&d, &v);
        }
        let mut again = d.clone();
        project_l2(&mut again, c);
        prop_assert!(again.iter().zip(&d).all(|(a, b)| (a - b).abs() <= 1e-12));
    }

    #[test]
    fn kl_is_non_negative(
        mu in prop::collection::vec(-5.0f64..5.0, 1..6),
        log_sigma in prop::collection::vec(-4.0f64..3.0, 6),
    ) {
        let sigma: Vec<f64> = log_sigma[..mu.len()].iter().map(|l| l.exp()).collect();
        prop_assert!(kl_diag_gaussian(&mu, &sigma).unwrap() >= 0.0);
    }

    #[test]
    fn reparameterize_is_affine(
        mu in prop::collection::vec(-5.0f64..5.0, 3),
        sigma in prop::collection::vec(0.01f64..5.0, 3),
        e1 in prop::collection::vec(-3.0f64..3.0, 3),
        e2 in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let z = |e: &[f64]| reparameterize(&mu, &sigma, e).unwrap();
        let sum: Vec<f64> = e1.iter().zip(&e2).map(|(a, b)| a + b).collect();
        let lhs: Vec<f64> = z(&e1).iter().zip(z(&e2)).zip(z(&[0.0; 3])).map(|((a, b), c)| a + b - c).collect();
        for (a, b) in lhs.iter().zip(z(&sum)) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn parseval(y in prop::collection::vec(-10.0f64..10.0, 2..300)) {
        let s = dft(&y).unwrap();
        let time: f64 = y.iter().map(|v| v * v).sum();
        let freq: f64 = s.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() / y.len() as f64;
        prop_assert!((time - freq).abs() <= 1e-9 * time.max(1e-300));
    }

    #[test]
    fn nudft_is_linear(
        pairs in prop::collection::vec((-1.0f64..1.0, -3.0f64..3.0, -3.0f64..3.0), 2..40),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let t: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y1: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let y2: Vec<f64> = pairs.iter().map(|p| p.2).collect();
        let mix: Vec<f64> = y1.iter().zip(&y2).map(|(u, v)| a * u + b * v).collect();
        let omega = dft_angular_grid(16, 0.1);
        let (s1, s2, sm) = (nudft(&t, &y1, &omega).unwrap(), nudft(&t, &y2, &omega).unwrap(), nudft(&t, &mix, &omega).unwrap());
        for k in 0..omega.len() {
            let expect = s1.amplitudes[k] * a + s2.amplitudes[k] * b;
            prop_assert!((sm.amplitudes[k] - expect).norm() <= 1e-9 * (1.0 + expect.norm()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn degree_selection_ignores_input_order(seed in any::<u64>(), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let t: Vec<f64> = (0..60).map(|i| -1.0 + 2.0 * i as f64 / 59.0).collect();
        let y: Vec<f64> = t.iter().map(|&v| (3.0 * v).sin() + 0.5 * v).collect();
        let mut idx: Vec<usize> = (0..t.len()).collect();
        idx.shuffle(&mut rng_from(perm_seed, &[]));
        let tp: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
        let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let a = optimal_poly_degree(&t, &y, 8, 5, seed).unwrap();
        let b = optimal_poly_degree(&tp, &yp, 8, 5, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
