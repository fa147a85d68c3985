//! End-to-end behaviour of the optimization loop.

use std::time::Duration;

use famopt_core::error::Error;
use famopt_core::optimizer::{
    random_search, run, run_with, Acquisition, Evaluator, ExternalEvaluator, Phase, RunConfig, RunTrace, Strategy,
    TestbenchEvaluator,
};
use famopt_core::surrogate::{BackendKind, BandwidthPolicy, Context, KhistBackend, SurrogateBackend};
use famopt_core::{circuits, DesignPoint, DiscretePosterior, Result};

fn config(strategy: Strategy, backend: BackendKind, budget: usize, seed: u64) -> RunConfig {
    RunConfig {
        strategy,
        backend,
        budget,
        candidate_count: 128,
        bins: 64,
        fom_samples: 32,
        seed,
        ..RunConfig::default()
    }
}

fn check_loop_invariants(trace: &RunTrace, cfg: &RunConfig) {
    assert_eq!(trace.len(), cfg.budget);
    let mut best = f64::NEG_INFINITY;
    for (t, r) in trace.records.iter().enumerate() {
        assert_eq!(r.iteration, t);
        best = best.max(r.fom);
        assert_eq!(r.incumbent_fom, best, "incumbent at {t}");
        if t >= cfg.init_count && r.phase != Phase::Random {
            assert_eq!(r.context_size, t);
        }
    }
    assert_eq!(trace.best_fom, best);
}

#[test]
fn every_strategy_and_backend_keeps_loop_invariants() {
    let backends = [
        BackendKind::GpRbf,
        BackendKind::GpMatern,
        BackendKind::GpLinear,
        BackendKind::Khist,
    ];
    let strategies = [
        Strategy::DirectFom,
        Strategy::MetricDecomposed,
        Strategy::ConstraintDecomposed,
    ];
    for (i, &backend) in backends.iter().enumerate() {
        for (j, &strategy) in strategies.iter().enumerate() {
            let cfg = RunConfig {
                acquisition: if (i + j) % 2 == 0 {
                    Acquisition::Dei
                } else {
                    Acquisition::Ei
                },
                ..config(strategy, backend, 9, (i * 3 + j) as u64)
            };
            let trace = run(&cfg).unwrap();
            check_loop_invariants(&trace, &cfg);
            assert!(
                trace.records[5..].iter().all(|r| r.phase == Phase::Acquisition),
                "{}",
                cfg.method_label()
            );
        }
    }
}

#[test]
fn surrogate_cost_orders_direct_constraint_metric() {
    for bench in circuits::NAMES {
        let per_iteration = |strategy| {
            let cfg = RunConfig {
                testbench: bench.to_string(),
                ..config(strategy, BackendKind::Khist, 6, 0)
            };
            run(&cfg).unwrap().records[5].surrogate_queries
        };
        let direct = per_iteration(Strategy::DirectFom);
        let constraint = per_iteration(Strategy::ConstraintDecomposed);
        let metric = per_iteration(Strategy::MetricDecomposed);
        let specs = circuits::build(bench).unwrap().specs().clone();
        let n_m = specs.len();
        let n_c = specs.hard_constraints().count();
        assert_eq!(direct, 128);
        assert_eq!(constraint, (n_c + 1) * 128);
        assert_eq!(metric, n_m * 128);
        assert!(direct < constraint);
        if n_m > n_c {
            assert!(constraint <= metric, "{bench}");
        }
    }
}

#[test]
fn runs_are_reproducible() {
    let cfg = config(Strategy::MetricDecomposed, BackendKind::Khist, 12, 42);
    let strip = |t: RunTrace| {
        t.records
            .into_iter()
            .map(|r| (r.point, r.fom, r.acquisition_value))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(run(&cfg).unwrap()), strip(run(&cfg).unwrap()));
    let rs = random_search(&cfg).unwrap();
    check_loop_invariants(&rs, &cfg);
    assert_eq!(strip(rs), strip(random_search(&cfg).unwrap()));
}

#[test]
fn dei_and_ei_agree_on_first_gaussian_acquisition() {
    let mut agree = 0;
    for seed in 0..100 {
        let first = |acquisition| {
            let cfg = RunConfig {
                acquisition,
                bins: 4096,
                candidate_count: 64,
                ..config(Strategy::DirectFom, BackendKind::GpMatern, 6, seed)
            };
            run(&cfg).unwrap().records[5].point.clone()
        };
        agree += usize::from(first(Acquisition::Dei) == first(Acquisition::Ei));
    }
    assert!(agree >= 95, "agreement {agree}/100");
}

/// Fits normally until `fail_from` contexts have been seen, then refuses.
struct Flaky {
    inner: KhistBackend,
    fits: usize,
    fail_from: usize,
}

impl SurrogateBackend for Flaky {
    fn name(&self) -> String {
        "flaky".into()
    }

    fn set_context(&mut self, context: &Context) -> Result<()> {
        self.fits += 1;
        if self.fits > self.fail_from {
            return Err(Error::Backend("backend went away".into()));
        }
        self.inner.set_context(context)
    }

    fn predict_batch(&self, queries: &[DesignPoint]) -> Result<Vec<DiscretePosterior>> {
        self.inner.predict_batch(queries)
    }
}

#[test]
fn backend_failure_falls_back_without_losing_evaluations() {
    let cfg = config(Strategy::DirectFom, BackendKind::Khist, 10, 3);
    let mut eval = TestbenchEvaluator::new(circuits::build("ota2-analytic").unwrap());
    let build = |_| -> Box<dyn SurrogateBackend> {
        Box::new(Flaky {
            inner: KhistBackend::new(64, BandwidthPolicy::Median),
            fits: 0,
            fail_from: 2,
        })
    };
    let trace = run_with(&cfg, &mut eval, &build).unwrap();
    check_loop_invariants(&trace, &cfg);
    let phases: Vec<Phase> = trace.records[5..].iter().map(|r| r.phase).collect();
    assert_eq!(
        phases,
        [
            Phase::Acquisition,
            Phase::Acquisition,
            Phase::Fallback,
            Phase::Fallback,
            Phase::Fallback
        ]
    );
    for r in &trace.records[7..] {
        assert_eq!(r.surrogate_queries, 0);
        assert!(r.fallback_reason.as_deref().unwrap().contains("went away"));
        assert!(r.acquisition_value.is_none());
    }
}

fn ota2_evaluator(cmd: &str, timeout: Duration) -> ExternalEvaluator {
    let tb = circuits::build("ota2-analytic").unwrap();
    ExternalEvaluator::new(cmd, tb.space().clone(), tb.specs().clone(), timeout).unwrap()
}

#[test]
fn external_evaluator_reads_metrics_from_a_process() {
    let reply = r#"{"metrics":{"gain_db":70.0,"pm_deg":65.0,"gbw_mhz":12.0,"current_ua":80.0}}"#;
    let cmd = format!("sh -c 'read line; echo; echo {}'", shlex_quote(reply));
    let mut eval = ota2_evaluator(&cmd, Duration::from_secs(10));
    let x = eval.space().midpoint();
    let m = eval.evaluate(&x).unwrap();
    assert_eq!(m.require("gain_db").unwrap(), 70.0);
    assert_eq!(m.require("current_ua").unwrap(), 80.0);

    let cfg = RunConfig {
        external_eval_cmd: Some(cmd),
        ..config(Strategy::DirectFom, BackendKind::Khist, 7, 0)
    };
    let trace = run(&cfg).unwrap();
    assert!(trace.records.iter().all(|r| r.fom == trace.records[0].fom));
}

#[test]
fn external_evaluator_failures_are_errors() {
    let x = circuits::build("ota2-analytic").unwrap().space().midpoint();
    let missing = r#"{"metrics":{"gain_db":70.0}}"#;
    let cases = [
        "false".to_string(),
        "sh -c 'read line; echo not-json'".to_string(),
        format!("sh -c 'read line; echo {}'", shlex_quote(missing)),
        "/nonexistent/evaluator".to_string(),
    ];
    for cmd in cases {
        assert!(
            ota2_evaluator(&cmd, Duration::from_secs(10)).evaluate(&x).is_err(),
            "{cmd}"
        );
    }
    let start = std::time::Instant::now();
    let err = ota2_evaluator("sleep 30", Duration::from_millis(300))
        .evaluate(&x)
        .unwrap_err();
    assert!(err.to_string().contains("timed out"), "{err}");
    assert!(start.elapsed() < Duration::from_secs(10));
}

fn shlex_quote(s: &str) -> String {
    format!("'\\''{s}'\\''")
}
