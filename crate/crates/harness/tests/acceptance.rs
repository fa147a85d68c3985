//! Acceptance checks. Each test prints one `PASS`/`FAIL` line (to the real
//! stdout, so it shows even when output is captured) and then asserts.
//!
//! Run alone with `cargo test -p famopt-harness --test acceptance`.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use famopt_core::circuits::{self, REGIME_SWITCHING};
use famopt_core::optimizer::{run, Phase, RunConfig};
use famopt_core::posterior::{closed_form_ei, dei, discretize_gaussian, moments};
use famopt_core::space::{latin_hypercube, uniform_sample};
use famopt_core::surrogate::external::{mock_posterior, parse_posteriors, serve_mock, MockConfig, Request, Response};
use famopt_core::surrogate::gp::{gp_fit, gp_predict, kernel_eval, GpHyperparams, GpModel, KernelKind};
use famopt_core::surrogate::{BackendKind, Context};
use famopt_core::{DesignSpace, DiscretePosterior, GaussianPosterior, Rng};
use famopt_harness::audit::audit_dir;
use famopt_harness::campaign::{run_campaign, CampaignConfig};
use famopt_harness::metrics::median;
use famopt_harness::regression::{run_regression_protocol, RegressionConfig};
use famopt_harness::report;
use nalgebra::{DMatrix, DVector};

fn verdict(name: &str, pass: bool, detail: &str) {
    let line = format!("{} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "{name}: {detail}");
}

fn campaign(toml_text: &str, dir: &Path) -> report::CampaignReport {
    let cfg: CampaignConfig = toml::from_str(toml_text).expect("campaign config");
    run_campaign(cfg, dir).expect("campaign runs")
}

#[test]
fn dei_ei_convergence() {
    let start = Instant::now();
    let mut rng = Rng::new(2024);
    let triples: Vec<(GaussianPosterior, f64)> = (0..100)
        .map(|_| {
            let mu = rng.uniform_range(-5.0, 5.0);
            let sd = rng.uniform_range(0.1, 3.0);
            let f = rng.uniform_range(-5.0, 5.0);
            (GaussianPosterior::new(mu, sd).unwrap(), f)
        })
        .collect();
    let errors = |k: usize| -> Vec<f64> {
        triples
            .iter()
            .map(|&(g, f)| {
                let ei = closed_form_ei(g, f);
                (dei(&discretize_gaussian(g, k, 8.0).unwrap(), f) - ei).abs() / ei.max(1e-12)
            })
            .collect()
    };
    let max = |e: &[f64]| e.iter().copied().fold(0.0, f64::max);
    let mean = |e: &[f64]| e.iter().sum::<f64>() / e.len() as f64;
    let at_1000 = max(&errors(1000));
    let at_4096 = max(&errors(4096));

    // Error ratio per doubling, on the mean error over all triples.
    let ks = [64, 128, 256, 512, 1024, 2048, 4096];
    let means: Vec<f64> = ks.iter().map(|&k| mean(&errors(k))).collect();
    let ratios: Vec<f64> = means.windows(2).map(|w| w[1] / w[0]).collect();
    let halving = ratios.iter().all(|r| (0.4..=0.6).contains(r));
    let elapsed = start.elapsed();

    let pass = at_1000 <= 1e-3 && at_4096 <= 1e-4 && halving && elapsed < Duration::from_secs(5);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    verdict(
        "dei_ei_convergence",
        pass,
        &format!(
            "max rel err K=1000 {at_1000:.2e} (≤1e-3), K=4096 {at_4096:.2e} (≤1e-4); \
             per-doubling ratios [{}] (required 0.5±20%); {:.2} s",
            shown.join(", "),
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn posterior_math() {
    let start = Instant::now();
    let mut rng = Rng::new(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = 1 + rng.below(50);
        let mut centers: Vec<f64> = (0..k).map(|_| rng.uniform_range(-20.0, 20.0)).collect();
        centers.sort_by(f64::total_cmp);
        centers.dedup();
        let weights: Vec<f64> = centers.iter().map(|_| rng.uniform()).collect();
        let p = DiscretePosterior::from_weights(centers, weights).unwrap();
        let f_star = rng.uniform_range(-25.0, 25.0);

        let (mut bm, mut bei) = (0.0, 0.0);
        for i in (0..p.len()).rev() {
            bm += p.centers()[i] * p.probs()[i];
        }
        let mut bv = 0.0;
        for i in (0..p.len()).rev() {
            let (c, w) = (p.centers()[i], p.probs()[i]);
            bv += w * (c - bm) * (c - bm);
            if c > f_star {
                bei += w * (c - f_star);
            }
        }
        let (m, v) = moments(&p);
        let d = dei(&p, f_star);
        worst = worst
            .max((m - bm).abs() / (1.0 + bm.abs()))
            .max((v - bv).abs() / (1.0 + bv))
            .max((d - bei).abs() / (1.0 + bei));
    }
    let elapsed = start.elapsed();
    verdict(
        "posterior_math",
        worst <= 1e-12 && elapsed < Duration::from_secs(1),
        &format!(
            "worst deviation {worst:.2e} over 1000 posteriors (≤1e-12); {:.3} s",
            elapsed.as_secs_f64()
        ),
    );
}

/// Dense explicit-inverse GP prediction on mean-centred inputs.
fn dense_oracle(ctx: &Context, hp: &GpHyperparams, jitter: f64, q: &[f64]) -> (f64, f64) {
    let n = ctx.len();
    let center: Vec<f64> = (0..q.len())
        .map(|j| ctx.inputs().iter().map(|x| x[j]).sum::<f64>() / n as f64)
        .collect();
    let shift = |v: &[f64]| -> Vec<f64> { v.iter().zip(&center).map(|(a, c)| a - c).collect() };
    let x: Vec<Vec<f64>> = ctx.inputs().iter().map(|v| shift(v)).collect();
    let q = shift(q);
    let y = ctx.outputs();
    let my = y.iter().sum::<f64>() / n as f64;
    let sd = (y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n as f64).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let k = DMatrix::from_fn(n, n, |i, j| {
        kernel_eval(hp, &x[i], &x[j]) + if i == j { hp.noise_variance() + jitter } else { 0.0 }
    });
    let inv = k.try_inverse().unwrap();
    let z = DVector::from_iterator(n, y.iter().map(|v| (v - my) / sd));
    let kq = DVector::from_iterator(n, x.iter().map(|xi| kernel_eval(hp, xi, &q)));
    let m = kq.dot(&(&inv * &z));
    let v = kernel_eval(hp, &q, &q) - kq.dot(&(&inv * &kq));
    (m * sd + my, v.max(0.0) * sd * sd)
}

#[test]
fn gp_correctness() {
    let start = Instant::now();
    let kernels = [KernelKind::Rbf, KernelKind::Matern52, KernelKind::Linear];
    let mut rng = Rng::new(31);
    let mut worst_solve = 0.0f64;
    let mut contexts = 0;
    for n in 1..=20 {
        for (ki, &kernel) in kernels.iter().enumerate() {
            for rep in 0..3 {
                let dim = 1 + (n + ki + rep) % 5;
                let space = DesignSpace::unit(dim).unwrap();
                let pts = uniform_sample(&space, n, &mut rng);
                let ys: Vec<f64> = pts
                    .iter()
                    .map(|p| p.coords().iter().map(|v| (3.0 * v).sin()).sum::<f64>() + rng.normal() * 0.1)
                    .collect();
                let ctx = Context::new(&space, &pts, &ys).unwrap();
                let hp = if n >= 2 {
                    gp_fit(&ctx, kernel, &mut rng.fork(n as u64)).unwrap()
                } else {
                    GpHyperparams::new(kernel, 0.5, 1.0, 1e-4)
                };
                let model = GpModel::condition(&ctx, hp).unwrap();
                let qs = uniform_sample(&space, 4, &mut rng);
                for (q, g) in qs.iter().zip(gp_predict(&model, &ctx, &qs)) {
                    let (m, v) = dense_oracle(&ctx, &hp, model.jitter(), &space.normalize(q));
                    worst_solve = worst_solve.max((g.mean - m).abs()).max((g.std * g.std - v).abs());
                }
                contexts += 1;
            }
        }
    }

    let mut worst_interp = 0.0f64;
    let space = DesignSpace::unit(3).unwrap();
    let pts = latin_hypercube(&space, 20, &mut rng);
    for kernel in kernels {
        let f = |x: &[f64]| match kernel {
            KernelKind::Linear => 2.0 * x[0] - x[1] + 0.3 * x[2],
            _ => (4.0 * x[0]).sin() * x[1] + x[2] * x[2],
        };
        let ys: Vec<f64> = pts.iter().map(|p| f(p.coords())).collect();
        let ctx = Context::new(&space, &pts, &ys).unwrap();
        let model = GpModel::condition(&ctx, GpHyperparams::new(kernel, 0.5, 1.0, 1e-8)).unwrap();
        for (g, y) in gp_predict(&model, &ctx, &pts).iter().zip(&ys) {
            worst_interp = worst_interp.max((g.mean - y).abs());
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "gp_correctness",
        worst_solve <= 1e-8 && worst_interp <= 1e-4 && elapsed < Duration::from_secs(10),
        &format!(
            "dense-oracle deviation {worst_solve:.2e} over {contexts} contexts of size 1..20 × 3 kernels (≤1e-8); \
             interpolation error {worst_interp:.2e} (≤1e-4); {:.2} s",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn structural_contrast_regression() {
    let start = Instant::now();
    let cfg: RegressionConfig = toml::from_str(
        r#"
        backends = ["gp_matern", "khist"]
        sizes = [50]
        seeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]
        [[tasks]]
        testbench = "ota2-analytic"
        metrics = ["gain_db"]
        [[tasks]]
        testbench = "bandgap-analytic"
        metrics = ["tc_ppm"]
        "#,
    )
    .unwrap();
    let rows = run_regression_protocol(&cfg).unwrap();
    let med = |bench: &str, backend: &str| {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.testbench == bench && r.backend == backend)
            .map(|r| r.r_squared.unwrap_or(f64::NEG_INFINITY))
            .collect();
        assert_eq!(v.len(), 10);
        median(&v).unwrap()
    };
    let (gp_ota, gp_bg) = (med("ota2-analytic", "gp_matern"), med("bandgap-analytic", "gp_matern"));
    let (kh_ota, kh_bg) = (med("ota2-analytic", "khist"), med("bandgap-analytic", "khist"));
    let gp_gap = gp_ota - gp_bg;
    let kh_gap = kh_ota - kh_bg;
    let elapsed = start.elapsed();
    verdict(
        "structural_contrast_regression",
        gp_gap >= 0.2 && kh_gap.abs() <= 0.5 * gp_gap && elapsed < Duration::from_secs(300),
        &format!(
            "GP-Matérn median R² ota2 gain {gp_ota:.3} vs bandgap TC {gp_bg:.3} (gap {gp_gap:.3} ≥ 0.2); \
             khist {kh_ota:.3} vs {kh_bg:.3} (gap {kh_gap:.3} ≤ {:.3}); {:.1} s",
            0.5 * gp_gap,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn optimization_effectiveness() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let report = campaign(
        r#"
        seeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]
        budget = 100
        [[methods]]
        label = "khist-dei"
        [[methods]]
        label = "random"
        kind = "random_search"
        "#,
        dir.path(),
    );
    let mut wins = 0;
    let mut parts = Vec::new();
    for bench in circuits::NAMES {
        let bo = report.aggregate_for("khist-dei", bench).unwrap();
        let rs = report.aggregate_for("random", bench).unwrap();
        assert_eq!((bo.runs, rs.runs), (10, 10));
        let win = bo.median_final_fom > rs.median_final_fom;
        wins += usize::from(win);
        parts.push(format!(
            "{bench} {:.3} vs {:.3}",
            bo.median_final_fom, rs.median_final_fom
        ));
    }
    let elapsed = start.elapsed();
    verdict(
        "optimization_effectiveness",
        wins >= 5 && elapsed < Duration::from_secs(900),
        &format!(
            "median final FoM, khist+dei vs random at budget 100: {} — wins {wins}/6 (≥5); {:.0} s",
            parts.join("; "),
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn acquisition_ablation_protocol() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/ablation.toml")).unwrap();
    let report = campaign(&text, dir.path());

    // Protocol completeness: a factor per bench × seed × checkpoint.
    let cells: BTreeSet<(String, u64, usize)> = report
        .ablation
        .iter()
        .filter(|r| r.factor.is_finite())
        .map(|r| (r.testbench.clone(), r.seed, r.checkpoint))
        .collect();
    let complete = cells.len() == 6 * 10 * 2
        && circuits::NAMES
            .iter()
            .all(|b| [30, 50].iter().all(|&cp| report.median_factor(b, cp).is_some()));

    let mut shrinking = true;
    let mut parts = Vec::new();
    for bench in circuits::NAMES {
        let f30 = report.median_factor(bench, 30).unwrap_or(f64::NAN);
        let f50 = report.median_factor(bench, 50).unwrap_or(f64::NAN);
        let regime = REGIME_SWITCHING.contains(&bench);
        if regime {
            shrinking &= f30 >= f50;
        }
        parts.push(format!("{bench}{} {f30:.3}→{f50:.3}", if regime { "*" } else { "" }));
    }
    let elapsed = start.elapsed();
    verdict(
        "acquisition_ablation_protocol",
        complete && shrinking && elapsed < Duration::from_secs(1200),
        &format!(
            "{} of 120 factors present; median DEI/EI factor at 30→50 evaluations: {} \
             (* regime-switching, requires f30 ≥ f50); {:.0} s",
            cells.len(),
            parts.join("; "),
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn loop_invariants_audit() {
    let dir = tempfile::tempdir().unwrap();
    campaign(
        r#"
        seeds = [0, 1]
        budget = 15
        candidate_count = 128
        fom_samples = 32
        [[methods]]
        label = "direct-khist"
        [[methods]]
        label = "metric-khist"
        strategy = "metric_decomposed"
        [[methods]]
        label = "constraint-khist"
        strategy = "constraint_decomposed"
        acquisition = "ei"
        [[methods]]
        label = "direct-gp"
        backend = "gp_matern"
        [[methods]]
        label = "constraint-gp"
        strategy = "constraint_decomposed"
        backend = "gp_rbf"
        [[methods]]
        label = "metric-gp"
        strategy = "metric_decomposed"
        backend = "gp_linear"
        acquisition = "ei"
        [[methods]]
        label = "random"
        kind = "random_search"
        "#,
        dir.path(),
    );
    let (checked, violations) = audit_dir(dir.path()).unwrap();
    let expected = 7 * 6 * 2;
    for (file, v) in violations.iter().take(10) {
        println!("{file}: {v}");
    }
    verdict(
        "loop_invariants_audit",
        checked == expected && violations.is_empty(),
        &format!(
            "{checked} traces audited (expected {expected}) across 3 strategies, 4 backends and random search; \
             {} violations",
            violations.len()
        ),
    );
}

#[test]
fn campaign_determinism() {
    let config = r#"
        seeds = [0, 1, 2]
        testbenches = ["ota3-analytic", "chargepump-regime"]
        budget = 20
        candidate_count = 128
        fom_samples = 32
        workers = 3
        [[methods]]
        label = "ei"
        acquisition = "ei"
        [[methods]]
        label = "dei"
        [[methods]]
        label = "metric-gp"
        strategy = "metric_decomposed"
        backend = "gp_matern"
        [[methods]]
        label = "random"
        kind = "random_search"
        [ablation]
        baseline = "ei"
        candidate = "dei"
        checkpoints = [10, 20]
    "#;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    campaign(config, a.path());
    campaign(config, b.path());
    let tables = [
        report::RUNS_CSV,
        report::AGGREGATE_CSV,
        report::PLOT_CSV,
        report::ABLATION_CSV,
        report::ABLATION_SUMMARY_CSV,
    ];
    let differing: Vec<&str> = tables
        .iter()
        .copied()
        .filter(|f| std::fs::read(a.path().join(f)).unwrap() != std::fs::read(b.path().join(f)).unwrap())
        .collect();
    verdict(
        "campaign_determinism",
        differing.is_empty(),
        &format!(
            "two identical campaigns, {} tables compared byte-for-byte; differing: {differing:?}",
            tables.len()
        ),
    );
}

#[test]
fn bridge_protocol_conformance_with_mock() {
    let mut rng = Rng::new(5);
    let mut input = String::from("{\"op\":\"handshake\",\"version\":1}\n");
    let mut queries = Vec::new();
    for _ in 0..1000 {
        let n = 1 + rng.below(30);
        let q = 1 + rng.below(8);
        let dim = 1 + rng.below(6);
        let req = Request::Predict {
            context_x: (0..n).map(|_| (0..dim).map(|_| rng.uniform()).collect()).collect(),
            context_y: (0..n).map(|_| rng.normal() * 10.0).collect(),
            query_x: (0..q).map(|_| (0..dim).map(|_| rng.uniform()).collect()).collect(),
            num_bins: 100,
        };
        input.push_str(&serde_json::to_string(&req).unwrap());
        input.push('\n');
        queries.push(req);
    }
    let mut out = Vec::new();
    serve_mock(std::io::Cursor::new(input), &mut out, &MockConfig::default()).unwrap();
    let frames: Vec<String> = String::from_utf8(out).unwrap().lines().map(String::from).collect();
    let mut valid = 0;
    for (frame, req) in frames[1..].iter().zip(&queries) {
        let Request::Predict { context_y, query_x, .. } = req else {
            unreachable!()
        };
        if let Ok(Response::Posterior { centers, probs }) = serde_json::from_str(frame) {
            let sums_ok = probs.iter().all(|p| (p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            if let Ok(posts) = parse_posteriors(centers, probs, query_x.len()) {
                let (c, p) = mock_posterior(context_y);
                if sums_ok
                    && posts
                        .iter()
                        .all(|d| d.centers() == c.as_slice() && d.probs() == p.as_slice())
                {
                    valid += 1;
                }
            }
        }
    }

    let bin = env!("CARGO_BIN_EXE_famopt");
    let cfg = RunConfig {
        backend: BackendKind::External,
        external_backend_cmd: Some(format!("'{bin}' mock-backend")),
        budget: 25,
        candidate_count: 64,
        ..RunConfig::default()
    };
    let trace = run(&cfg).unwrap();
    let acquired = trace.records.iter().filter(|r| r.phase == Phase::Acquisition).count();
    verdict(
        "bridge_protocol_conformance_mock",
        valid == 1000 && frames.len() == 1001 && acquired == 20,
        &format!(
            "{valid}/1000 mock frames pass client validation and match the fixture; \
             {acquired} acquisition iterations through the mock backend (real-model check skipped: no model here)"
        ),
    );
}
