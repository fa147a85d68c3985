//! Gaussian-process backend against independent linear-algebra oracles and
//! end-to-end regression checks.

use famopt_core::circuits;
use famopt_core::posterior::moments;
use famopt_core::space::{latin_hypercube, train_test_split, uniform_sample};
use famopt_core::surrogate::gp::{gp_fit, gp_predict, kernel_eval, GpBackend, GpHyperparams, GpModel, KernelKind};
use famopt_core::surrogate::{Context, SurrogateBackend};
use famopt_core::{DesignPoint, DesignSpace, Rng};
use nalgebra::{DMatrix, DVector};

const KERNELS: [KernelKind; 3] = [KernelKind::Rbf, KernelKind::Matern52, KernelKind::Linear];

/// Mean and variance by explicit inversion of the (noise + jitter)-augmented
/// Gram matrix, in raw output units. Inputs are taken relative to their mean.
fn dense_oracle(ctx: &Context, hp: &GpHyperparams, jitter: f64, q: &[f64]) -> (f64, f64) {
    let n = ctx.len();
    let dim = q.len();
    let center: Vec<f64> = (0..dim)
        .map(|j| ctx.inputs().iter().map(|x| x[j]).sum::<f64>() / n as f64)
        .collect();
    let shift = |v: &[f64]| -> Vec<f64> { v.iter().zip(&center).map(|(a, c)| a - c).collect() };
    let x: Vec<Vec<f64>> = ctx.inputs().iter().map(|v| shift(v)).collect();
    let q = &shift(q)[..];
    let y = ctx.outputs();
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let sd = (y.iter().map(|v| (v - mean_y).powi(2)).sum::<f64>() / n as f64).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let k = DMatrix::from_fn(n, n, |i, j| {
        kernel_eval(hp, &x[i], &x[j]) + if i == j { hp.noise_variance() + jitter } else { 0.0 }
    });
    let k_inv = k.try_inverse().expect("invertible gram");
    let z = DVector::from_iterator(n, y.iter().map(|v| (v - mean_y) / sd));
    let kq = DVector::from_iterator(n, x.iter().map(|xi| kernel_eval(hp, xi, q)));
    let m = kq.dot(&(&k_inv * &z));
    let v = kernel_eval(hp, q, q) - kq.dot(&(&k_inv * &kq));
    (m * sd + mean_y, v.max(0.0) * sd * sd)
}

fn context(space: &DesignSpace, pts: &[DesignPoint], f: impl Fn(&[f64]) -> f64) -> Context {
    let ys: Vec<f64> = pts.iter().map(|p| f(p.coords())).collect();
    Context::new(space, pts, &ys).unwrap()
}

fn r2(pred: &[f64], truth: &[f64]) -> f64 {
    let m = truth.iter().sum::<f64>() / truth.len() as f64;
    let tot: f64 = truth.iter().map(|t| (t - m).powi(2)).sum();
    let res: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    1.0 - res / tot
}

#[test]
fn three_point_rbf_matches_hand_solve() {
    let space = DesignSpace::unit(1).unwrap();
    let pts: Vec<DesignPoint> = [0.1, 0.5, 0.9].iter().map(|&x| space.point(vec![x]).unwrap()).collect();
    let ctx = context(&space, &pts, |x| (3.0 * x[0]).sin());
    let hp = GpHyperparams::new(KernelKind::Rbf, 0.3, 1.0, 1e-4);
    let model = GpModel::condition(&ctx, hp).unwrap();
    for q in [0.0, 0.3, 0.5, 0.77] {
        let qp = space.point(vec![q]).unwrap();
        let got = gp_predict(&model, &ctx, std::slice::from_ref(&qp))[0];
        let (m, v) = dense_oracle(&ctx, &hp, model.jitter(), &[q]);
        assert!((got.mean - m).abs() < 1e-8, "mean at {q}: {} vs {m}", got.mean);
        assert!((got.std * got.std - v).abs() < 1e-8, "var at {q}");
    }
}

#[test]
fn random_contexts_match_dense_inverse() {
    let mut rng = Rng::new(77);
    let mut checked = 0;
    for trial in 0..60 {
        let dim = 1 + rng.below(4);
        let n = 2 + rng.below(19);
        let space = DesignSpace::unit(dim).unwrap();
        let pts = uniform_sample(&space, n, &mut rng);
        let offsets: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let ys: Vec<f64> = pts
            .iter()
            .zip(&offsets)
            .map(|(p, e)| 2.0 * p.coords().iter().sum::<f64>() + 0.3 * e)
            .collect();
        let ctx = Context::new(&space, &pts, &ys).unwrap();
        let kernel = KERNELS[trial % 3];
        let hp = gp_fit(&ctx, kernel, &mut rng.fork(trial as u64)).unwrap();
        let model = GpModel::condition(&ctx, hp).unwrap();
        let queries = uniform_sample(&space, 5, &mut rng);
        let got = gp_predict(&model, &ctx, &queries);
        for (q, g) in queries.iter().zip(&got) {
            let (m, v) = dense_oracle(&ctx, &hp, model.jitter(), &space.normalize(q));
            assert!(
                (g.mean - m).abs() < 1e-8,
                "trial {trial} {kernel:?} n={n}: {} vs {m}",
                g.mean
            );
            assert!((g.std * g.std - v).abs() < 1e-8, "trial {trial} variance");
            assert!(g.std >= 0.0);
            checked += 1;
        }
    }
    assert_eq!(checked, 300);
}

#[test]
fn noiseless_data_is_interpolated() {
    let mut rng = Rng::new(5);
    let space = DesignSpace::unit(2).unwrap();
    let pts = latin_hypercube(&space, 15, &mut rng);
    for kernel in KERNELS {
        // The linear kernel can only interpolate data it can represent.
        let f = |x: &[f64]| match kernel {
            KernelKind::Linear => 1.5 * x[0] - 0.7 * x[1],
            _ => (4.0 * x[0]).sin() + x[1] * x[1],
        };
        let ctx = context(&space, &pts, f);
        let model = GpModel::condition(&ctx, GpHyperparams::new(kernel, 0.4, 1.0, 1e-8)).unwrap();
        for (p, post) in pts.iter().zip(gp_predict(&model, &ctx, &pts)) {
            assert!(
                (post.mean - f(p.coords())).abs() < 1e-4,
                "{kernel:?}: {} vs {}",
                post.mean,
                f(p.coords())
            );
        }
    }
}

#[test]
fn linear_kernel_recovers_linear_function() {
    let mut rng = Rng::new(9);
    let space = DesignSpace::new(vec![-1.0; 3], vec![2.0; 3]).unwrap();
    let f = |x: &[f64]| 3.0 * x[0] - x[1] + 0.5 * x[2] + 4.0;
    let train = latin_hypercube(&space, 30, &mut rng);
    let test = uniform_sample(&space, 50, &mut rng);
    let ctx = context(&space, &train, f);
    let hp = gp_fit(&ctx, KernelKind::Linear, &mut rng).unwrap();
    let model = GpModel::condition(&ctx, hp).unwrap();
    let pred: Vec<f64> = gp_predict(&model, &ctx, &test).iter().map(|g| g.mean).collect();
    let truth: Vec<f64> = test.iter().map(|p| f(p.coords())).collect();
    assert!(r2(&pred, &truth) >= 0.999, "R² {}", r2(&pred, &truth));
}

#[test]
fn constant_outputs_predict_the_constant() {
    let mut rng = Rng::new(1);
    let space = DesignSpace::unit(3).unwrap();
    let pts = uniform_sample(&space, 12, &mut rng);
    let ctx = context(&space, &pts, |_| 2.5);
    for kernel in KERNELS {
        let mut b = GpBackend::new(kernel, 50, 3);
        b.set_context(&ctx).unwrap();
        for g in b.predict_gaussian(&uniform_sample(&space, 20, &mut rng)).unwrap() {
            assert!((g.mean - 2.5).abs() < 1e-6, "{kernel:?}: {}", g.mean);
        }
    }
}

#[test]
fn fit_needs_two_points() {
    let space = DesignSpace::unit(1).unwrap();
    let ctx = context(&space, &[space.midpoint()], |_| 1.0);
    assert!(gp_fit(&ctx, KernelKind::Rbf, &mut Rng::new(0)).is_err());
}

#[test]
fn fit_is_deterministic() {
    let mut rng = Rng::new(3);
    let space = DesignSpace::unit(2).unwrap();
    let pts = uniform_sample(&space, 10, &mut rng);
    let ctx = context(&space, &pts, |x| x[0] * x[1]);
    let a = gp_fit(&ctx, KernelKind::Matern52, &mut Rng::new(8)).unwrap();
    let b = gp_fit(&ctx, KernelKind::Matern52, &mut Rng::new(8)).unwrap();
    assert_eq!(a, b);
}

/// Fifty LHS samples of the two-stage amplifier's gain with an 80:20 split;
/// the median held-out R² over ten seeds. The threshold was fixed from the
/// first full run of this implementation.
#[test]
fn matern_fits_amplifier_gain_from_fifty_samples() {
    let tb = circuits::build("ota2-analytic").unwrap();
    let mut scores = Vec::new();
    for seed in 0..10u64 {
        let mut rng = Rng::new(seed);
        let pts = latin_hypercube(tb.space(), 50, &mut rng);
        let ys: Vec<f64> = pts.iter().map(|p| tb.metric("gain_db", p).unwrap()).collect();
        let split = train_test_split(50, 0.8, &mut rng).unwrap();
        let (tx, ty): (Vec<DesignPoint>, Vec<f64>) = split.train.iter().map(|&i| (pts[i].clone(), ys[i])).unzip();
        let (qx, qy): (Vec<DesignPoint>, Vec<f64>) = split.test.iter().map(|&i| (pts[i].clone(), ys[i])).unzip();
        let mut b = GpBackend::new(KernelKind::Matern52, 100, seed);
        b.set_context(&Context::new(tb.space(), &tx, &ty).unwrap()).unwrap();
        let pred: Vec<f64> = b.predict_batch(&qx).unwrap().iter().map(|p| moments(p).0).collect();
        scores.push(r2(&pred, &qy));
    }
    scores.sort_by(f64::total_cmp);
    let median = 0.5 * (scores[4] + scores[5]);
    assert!(median >= 0.80, "median R² {median}: {scores:?}");
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

    #[test]
    fn variance_at_observations_is_bounded_by_noise(
        seed in 0u64..10_000,
        n in 2usize..16,
        kernel in 0usize..3,
        log_ell in -1.5f64..0.5,
        log_noise in -8.0f64..-1.0,
    ) {
        let mut rng = Rng::new(seed);
        let space = DesignSpace::unit(2).unwrap();
        let pts = uniform_sample(&space, n, &mut rng);
        let ctx = context(&space, &pts, |x| (5.0 * x[0]).cos() + x[1]);
        let noise = 10f64.powf(log_noise);
        let hp = GpHyperparams::new(KERNELS[kernel], 10f64.powf(log_ell), 1.0, noise);
        let model = GpModel::condition(&ctx, hp).unwrap();
        for p in &pts {
            let (_, var) = model.predict_standardized(&space.normalize(p));
            proptest::prop_assert!(var <= hp.noise_variance() + model.jitter() + 1e-6, "{var}");
        }
    }
}
