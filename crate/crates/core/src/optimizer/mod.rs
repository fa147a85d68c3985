//! The sequential optimization loop and its random-search baseline.
//!
//! A run evaluates `init_count` uniformly random designs, then repeats until
//! the budget is spent: fit the strategy's surrogates on everything evaluated
//! so far, draw a fresh uniform candidate set, score it, and evaluate the
//! highest-scoring candidate. The reported design is the best evaluated one.
//!
//! Random streams are forked from the run seed by purpose: stream 1 draws the
//! initial designs (random search draws its whole budget from the same stream,
//! so paired runs share their first `init_count` designs), stream 2 the
//! candidate sets, and stream 3 — forked again per iteration — the joint
//! samples of the metric-decomposed strategy.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::circuits::{self, Testbench};
use crate::error::{Error, Result};
use crate::fom::{constraint_margin, fom, objective_score, MetricVector, SpecSet};
use crate::observations::ObservationSet;
use crate::posterior::DEFAULT_BINS;
use crate::rng::Rng;
use crate::space::{uniform_sample, DesignPoint};
use crate::surrogate::{BackendFactory, BackendKind, Context, SurrogateBackend};

pub mod acquisition;
pub mod evaluator;

pub use acquisition::{
    acquire_constraint_decomposed, acquire_direct, acquire_metric_decomposed, select_next, Acquisition, Scored,
};
pub use evaluator::{Evaluator, ExternalEvaluator, TestbenchEvaluator, DEFAULT_EVAL_TIMEOUT_SECS};

/// Bumped whenever the serialized trace layout changes.
pub const TRACE_SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_CANDIDATE_COUNT: usize = 2048;
pub const DEFAULT_FOM_SAMPLES: usize = 256;
pub const DEFAULT_INIT_COUNT: usize = 5;
pub const DEFAULT_BUDGET: usize = 400;

/// What the surrogates model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// One surrogate over the figure of merit.
    DirectFom,
    /// One surrogate per metric, recombined through the figure of merit.
    MetricDecomposed,
    /// One surrogate for the objective score plus one per hard-constraint margin.
    ConstraintDecomposed,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::DirectFom => "direct_fom",
            Strategy::MetricDecomposed => "metric_decomposed",
            Strategy::ConstraintDecomposed => "constraint_decomposed",
        }
    }

    /// Surrogate instances the strategy fits each iteration.
    pub fn surrogate_count(&self, specs: &SpecSet) -> usize {
        match self {
            Strategy::DirectFom => 1,
            Strategy::MetricDecomposed => specs.len(),
            Strategy::ConstraintDecomposed => specs.hard_count() + 1,
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct_fom" => Ok(Strategy::DirectFom),
            "metric_decomposed" => Ok(Strategy::MetricDecomposed),
            "constraint_decomposed" => Ok(Strategy::ConstraintDecomposed),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub testbench: String,
    pub strategy: Strategy,
    pub backend: BackendKind,
    pub acquisition: Acquisition,
    pub budget: usize,
    pub init_count: usize,
    pub candidate_count: usize,
    pub seed: u64,
    pub bins: usize,
    /// Joint samples per candidate for the metric-decomposed strategy.
    pub fom_samples: usize,
    /// Command speaking the JSON-lines surrogate protocol; required when
    /// `backend` is `external`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_backend_cmd: Option<String>,
    /// Replaces the in-repo testbench model with an external evaluator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_eval_cmd: Option<String>,
    pub eval_timeout_secs: u64,
    /// Threshold overrides keyed by metric name.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub spec_overrides: BTreeMap<String, f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            testbench: "ota2-analytic".into(),
            strategy: Strategy::DirectFom,
            backend: BackendKind::Khist,
            acquisition: Acquisition::Dei,
            budget: DEFAULT_BUDGET,
            init_count: DEFAULT_INIT_COUNT,
            candidate_count: DEFAULT_CANDIDATE_COUNT,
            seed: 0,
            bins: DEFAULT_BINS,
            fom_samples: DEFAULT_FOM_SAMPLES,
            external_backend_cmd: None,
            external_eval_cmd: None,
            eval_timeout_secs: DEFAULT_EVAL_TIMEOUT_SECS,
            spec_overrides: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.init_count == 0 {
            return Err(Error::Config("init_count must be at least 1".into()));
        }
        if self.budget < self.init_count {
            return Err(Error::Config(format!(
                "budget {} is smaller than init_count {}",
                self.budget, self.init_count
            )));
        }
        if self.candidate_count == 0 {
            return Err(Error::Config("candidate_count must be at least 1".into()));
        }
        if self.bins == 0 {
            return Err(Error::Config("bins must be at least 1".into()));
        }
        if self.fom_samples == 0 {
            return Err(Error::Config("fom_samples must be at least 1".into()));
        }
        if self.backend == BackendKind::External && self.external_backend_cmd.is_none() {
            return Err(Error::Config("external backend selected without a command".into()));
        }
        Ok(())
    }

    /// Short label identifying the optimizer configuration, e.g.
    /// `direct_fom/khist/dei`.
    pub fn method_label(&self) -> String {
        format!("{}/{}/{}", self.strategy, self.backend, self.acquisition)
    }

    /// Registry testbench with the configured threshold overrides applied.
    pub fn resolve_testbench(&self) -> Result<Testbench> {
        let bench = circuits::build(&self.testbench)?;
        if self.spec_overrides.is_empty() {
            return Ok(bench);
        }
        let specs = bench.specs().with_thresholds(&self.spec_overrides)?;
        bench.with_specs(specs)
    }

    fn evaluator(&self) -> Result<Box<dyn Evaluator>> {
        let bench = self.resolve_testbench()?;
        Ok(match &self.external_eval_cmd {
            Some(cmd) => Box::new(ExternalEvaluator::new(
                cmd,
                bench.space().clone(),
                bench.specs().clone(),
                Duration::from_secs(self.eval_timeout_secs),
            )?),
            None => Box::new(TestbenchEvaluator::new(bench)),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Uniform random design before the surrogate loop starts.
    Init,
    /// Design chosen by the acquisition function.
    Acquisition,
    /// Acquisition failed; the first (uniformly drawn) candidate was used.
    Fallback,
    /// Random-search baseline evaluation.
    Random,
}

/// Wall-clock milliseconds spent in each phase of one iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub fit_ms: f64,
    pub acquire_ms: f64,
    pub evaluate_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Zero-based evaluation index; initial designs included.
    pub iteration: usize,
    pub phase: Phase,
    pub point: DesignPoint,
    pub metrics: MetricVector,
    pub fom: f64,
    pub incumbent_fom: f64,
    /// Observations the surrogates were conditioned on (0 outside acquisition).
    pub context_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acquisition_value: Option<f64>,
    pub surrogate_queries: usize,
    pub timings: PhaseTimings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
}

/// Best objective under constraints: the best primary-target value among
/// feasible designs, or the primary-target value of the highest-FoM design
/// when nothing feasible has been found.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedObjective {
    pub value: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub schema_version: u32,
    pub method: String,
    pub config: RunConfig,
    pub specs: SpecSet,
    pub records: Vec<IterationRecord>,
    pub best_index: usize,
    pub best_fom: f64,
    pub best_point: DesignPoint,
}

impl RunTrace {
    fn from_records(method: String, config: &RunConfig, specs: &SpecSet, records: Vec<IterationRecord>) -> Self {
        let mut obs = ObservationSet::new();
        for r in &records {
            obs.push(r.point.clone(), r.fom);
        }
        let best_index = obs.incumbent_index().expect("nonempty trace");
        Self {
            schema_version: TRACE_SCHEMA_VERSION,
            method,
            config: config.clone(),
            specs: specs.clone(),
            best_fom: records[best_index].fom,
            best_point: records[best_index].point.clone(),
            records,
            best_index,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Incumbent figure of merit after the first `evaluations` evaluations.
    pub fn incumbent_after(&self, evaluations: usize) -> Option<f64> {
        evaluations
            .checked_sub(1)
            .and_then(|i| self.records.get(i))
            .map(|r| r.incumbent_fom)
    }

    /// [`ConstrainedObjective`] over the first `evaluations` evaluations.
    pub fn constrained_objective_after(&self, evaluations: usize) -> Result<ConstrainedObjective> {
        let n = evaluations.min(self.records.len());
        if n == 0 {
            return Err(Error::InvalidArgument("no evaluations to summarize".into()));
        }
        constrained_best_objective(&self.specs, &self.records[..n])
    }
}

pub fn constrained_best_objective(specs: &SpecSet, records: &[IterationRecord]) -> Result<ConstrainedObjective> {
    let target = specs.primary_target()?;
    let mut best: Option<(f64, f64)> = None; // (objective score, raw value)
    for r in records {
        if specs.all_hard_met(&r.metrics)? {
            let raw = r.metrics.require(&target.name)?;
            let score = target.ratio(raw)?;
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, raw));
            }
        }
    }
    if let Some((_, raw)) = best {
        return Ok(ConstrainedObjective {
            value: raw,
            feasible: true,
        });
    }
    let top = records
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.fom > records[b].fom { i } else { b });
    Ok(ConstrainedObjective {
        value: records[top].metrics.require(&target.name)?,
        feasible: false,
    })
}

fn millis(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Runs the configured optimizer on the configured testbench.
pub fn run(config: &RunConfig) -> Result<RunTrace> {
    config.validate()?;
    let mut evaluator = config.evaluator()?;
    let factory = BackendFactory::new(
        config.backend,
        config.bins,
        config.seed,
        config.external_backend_cmd.as_deref(),
    )?;
    run_with(config, evaluator.as_mut(), &|instance| factory.build(instance))
}

/// Everything evaluated so far, in the shapes the strategies fit on.
struct History {
    points: Vec<DesignPoint>,
    metrics: Vec<MetricVector>,
    obs: ObservationSet,
}

impl History {
    fn push(&mut self, point: DesignPoint, metrics: MetricVector, value: f64) {
        self.points.push(point.clone());
        self.metrics.push(metrics);
        self.obs.push(point, value);
    }

    fn column(&self, f: impl Fn(&MetricVector) -> Result<f64>) -> Result<Vec<f64>> {
        self.metrics.iter().map(f).collect()
    }
}

/// Fits the strategy's surrogates and scores the candidates. Returns the
/// scores together with the f* used and the fit/acquire timings.
#[allow(clippy::too_many_arguments)]
fn score_candidates(
    config: &RunConfig,
    specs: &SpecSet,
    history: &History,
    evaluator: &dyn Evaluator,
    backends: &mut [Box<dyn SurrogateBackend>],
    candidates: &[DesignPoint],
    sample_rng: &mut Rng,
    timings: &mut PhaseTimings,
) -> Result<(Scored, f64)> {
    let space = evaluator.space();
    let fit_start = Instant::now();
    let f_star = match config.strategy {
        Strategy::DirectFom => {
            let ctx = Context::new(space, &history.points, history.obs.values())?;
            backends[0].set_context(&ctx)?;
            history.obs.incumbent_value().expect("nonempty history")
        }
        Strategy::MetricDecomposed => {
            for (backend, item) in backends.iter_mut().zip(specs.items()) {
                let ys = history.column(|m| m.require(&item.name))?;
                backend.set_context(&Context::new(space, &history.points, &ys)?)?;
            }
            history.obs.incumbent_value().expect("nonempty history")
        }
        Strategy::ConstraintDecomposed => {
            let objective = history.column(|m| objective_score(specs, m))?;
            backends[0].set_context(&Context::new(space, &history.points, &objective)?)?;
            for (backend, item) in backends[1..].iter_mut().zip(specs.hard_constraints()) {
                let margins = history.column(|m| constraint_margin(item, m.require(&item.name)?))?;
                backend.set_context(&Context::new(space, &history.points, &margins)?)?;
            }
            // Best feasible objective; before anything is feasible, the worst
            // observed objective so that feasibility mass drives the search.
            let mut feasible_best = f64::NEG_INFINITY;
            for (m, o) in history.metrics.iter().zip(&objective) {
                if specs.all_hard_met(m)? {
                    feasible_best = feasible_best.max(*o);
                }
            }
            if feasible_best.is_finite() {
                feasible_best
            } else {
                objective.iter().copied().fold(f64::INFINITY, f64::min)
            }
        }
    };
    timings.fit_ms = millis(fit_start);

    let acq_start = Instant::now();
    let scored = match config.strategy {
        Strategy::DirectFom => acquire_direct(backends[0].as_ref(), candidates, config.acquisition, f_star)?,
        Strategy::MetricDecomposed => {
            let refs: Vec<&dyn SurrogateBackend> = backends.iter().map(|b| b.as_ref()).collect();
            acquire_metric_decomposed(
                &refs,
                candidates,
                specs,
                config.acquisition,
                f_star,
                config.fom_samples,
                sample_rng,
            )?
        }
        Strategy::ConstraintDecomposed => {
            let margins: Vec<&dyn SurrogateBackend> = backends[1..].iter().map(|b| b.as_ref()).collect();
            acquire_constraint_decomposed(backends[0].as_ref(), &margins, candidates, config.acquisition, f_star)?
        }
    };
    timings.acquire_ms = millis(acq_start);
    Ok((scored, f_star))
}

/// The loop with the evaluator and surrogate construction supplied by the
/// caller. `build(i)` must return a fresh backend for surrogate instance `i`.
pub fn run_with(
    config: &RunConfig,
    evaluator: &mut dyn Evaluator,
    build: &dyn Fn(u64) -> Box<dyn SurrogateBackend>,
) -> Result<RunTrace> {
    config.validate()?;
    let specs = evaluator.specs().clone();
    if config.strategy == Strategy::ConstraintDecomposed {
        specs.primary_target()?;
    }
    let space = evaluator.space().clone();
    let root = Rng::new(config.seed);
    let mut init_rng = root.fork(1);
    let mut candidate_rng = root.fork(2);
    let sample_root = root.fork(3);

    let mut history = History {
        points: Vec::new(),
        metrics: Vec::new(),
        obs: ObservationSet::new(),
    };
    let mut records = Vec::with_capacity(config.budget);

    for point in uniform_sample(&space, config.init_count, &mut init_rng) {
        let start = Instant::now();
        let metrics = evaluator.evaluate(&point)?;
        let evaluate_ms = millis(start);
        let value = fom(&specs, &metrics)?;
        history.push(point.clone(), metrics.clone(), value);
        records.push(IterationRecord {
            iteration: records.len(),
            phase: Phase::Init,
            point,
            metrics,
            fom: value,
            incumbent_fom: history.obs.incumbent_value().expect("just pushed"),
            context_size: 0,
            f_star: None,
            acquisition_value: None,
            surrogate_queries: 0,
            timings: PhaseTimings {
                evaluate_ms,
                ..Default::default()
            },
            fallback_reason: None,
        });
    }

    let mut backends: Vec<Box<dyn SurrogateBackend>> =
        (0..config.strategy.surrogate_count(&specs) as u64).map(build).collect();

    while records.len() < config.budget {
        let iteration = records.len();
        let candidates = uniform_sample(&space, config.candidate_count, &mut candidate_rng);
        let mut sample_rng = sample_root.fork(iteration as u64);
        let mut timings = PhaseTimings::default();

        let outcome = score_candidates(
            config,
            &specs,
            &history,
            &*evaluator,
            &mut backends,
            &candidates,
            &mut sample_rng,
            &mut timings,
        )
        .and_then(|(scored, f_star)| Ok((select_next(&scored.scores)?, scored, f_star)));

        let (choice, phase, acquisition_value, f_star, queries, reason) = match outcome {
            Ok((idx, scored, f_star)) => (
                idx,
                Phase::Acquisition,
                Some(scored.scores[idx]),
                Some(f_star),
                scored.queries,
                None,
            ),
            Err(e) => {
                log::warn!("iteration {iteration}: acquisition failed ({e}); using a random candidate");
                (0, Phase::Fallback, None, None, 0, Some(e.to_string()))
            }
        };

        let point = candidates[choice].clone();
        let start = Instant::now();
        let metrics = evaluator.evaluate(&point)?;
        timings.evaluate_ms = millis(start);
        let value = fom(&specs, &metrics)?;
        history.push(point.clone(), metrics.clone(), value);
        records.push(IterationRecord {
            iteration,
            phase,
            point,
            metrics,
            fom: value,
            incumbent_fom: history.obs.incumbent_value().expect("just pushed"),
            context_size: iteration,
            f_star,
            acquisition_value,
            surrogate_queries: queries,
            timings,
            fallback_reason: reason,
        });
    }

    Ok(RunTrace::from_records(config.method_label(), config, &specs, records))
}

/// `budget` uniformly random evaluations, recorded in the same trace format.
pub fn random_search(config: &RunConfig) -> Result<RunTrace> {
    config.validate()?;
    let mut evaluator = config.evaluator()?;
    random_search_with(config, evaluator.as_mut())
}

pub fn random_search_with(config: &RunConfig, evaluator: &mut dyn Evaluator) -> Result<RunTrace> {
    config.validate()?;
    let specs = evaluator.specs().clone();
    let mut rng = Rng::new(config.seed).fork(1);
    let mut obs = ObservationSet::new();
    let mut records = Vec::with_capacity(config.budget);
    for point in uniform_sample(&evaluator.space().clone(), config.budget, &mut rng) {
        let start = Instant::now();
        let metrics = evaluator.evaluate(&point)?;
        let evaluate_ms = millis(start);
        let value = fom(&specs, &metrics)?;
        obs.push(point.clone(), value);
        records.push(IterationRecord {
            iteration: records.len(),
            phase: Phase::Random,
            point,
            metrics,
            fom: value,
            incumbent_fom: obs.incumbent_value().expect("just pushed"),
            context_size: 0,
            f_star: None,
            acquisition_value: None,
            surrogate_queries: 0,
            timings: PhaseTimings {
                evaluate_ms,
                ..Default::default()
            },
            fallback_reason: None,
        });
    }
    Ok(RunTrace::from_records("random_search".into(), config, &specs, records))
}
