//! Tables derived from a campaign directory's trace files.
//!
//! Nothing here reads state other than the persisted traces and the config
//! snapshot, so regenerating a report from the same directory is
//! byte-identical. Timings are never written to the CSVs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use famopt_core::fom::Direction;
use famopt_core::optimizer::RunTrace;

use crate::campaign::{self, load_snapshot, write_atomic, CampaignConfig, TRACE_DIR};
use crate::error::{HarnessError, Result};
use crate::metrics::{itr_at_threshold, median, ratio, render_itr, Threshold};

pub const RUNS_CSV: &str = "runs.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const PLOT_CSV: &str = "plot_data.csv";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const ABLATION_SUMMARY_CSV: &str = "ablation_summary.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub method: String,
    pub testbench: String,
    pub seed: u64,
    pub evaluations: usize,
    pub final_fom: f64,
    /// 1-based evaluation count, or `"<budget>+"` when never reached.
    pub itr_at_threshold: String,
    pub constrained_objective: f64,
    pub constrained_feasible: bool,
    pub trace_file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub testbench: String,
    pub runs: usize,
    pub median_final_fom: f64,
    pub median_itr_at_threshold: String,
    pub reached: usize,
    pub median_constrained_objective: f64,
    /// Min-max normalization of the median constrained objective across the
    /// methods on this testbench: 1 for the best method, 0 for the worst.
    pub normalized_objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub method: String,
    pub testbench: String,
    pub seed: u64,
    pub evaluation: usize,
    pub fom: f64,
    pub incumbent_fom: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub testbench: String,
    pub seed: u64,
    pub checkpoint: usize,
    pub direction: String,
    pub baseline_objective: f64,
    pub candidate_objective: f64,
    pub factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSummaryRow {
    pub testbench: String,
    pub checkpoint: usize,
    pub seeds: usize,
    pub median_factor: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CampaignReport {
    pub runs: Vec<RunRow>,
    pub aggregate: Vec<AggregateRow>,
    pub plot: Vec<PlotRow>,
    pub ablation: Vec<AblationRow>,
    pub ablation_summary: Vec<AblationSummaryRow>,
}

impl CampaignReport {
    pub fn aggregate_for(&self, method: &str, testbench: &str) -> Option<&AggregateRow> {
        self.aggregate
            .iter()
            .find(|r| r.method == method && r.testbench == testbench)
    }

    pub fn median_factor(&self, testbench: &str, checkpoint: usize) -> Option<f64> {
        self.ablation_summary
            .iter()
            .find(|r| r.testbench == testbench && r.checkpoint == checkpoint)
            .map(|r| r.median_factor)
    }
}

/// Trace files of a campaign directory, keyed by file name.
pub fn load_traces(dir: &Path) -> Result<BTreeMap<String, RunTrace>> {
    let trace_dir = dir.join(TRACE_DIR);
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(&trace_dir).map_err(|e| HarnessError::io(&trace_dir, e))? {
        let path = entry.map_err(|e| HarnessError::io(&trace_dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        let trace: RunTrace = serde_json::from_str(&text)?;
        let name = path.file_name().expect("file").to_string_lossy().into_owned();
        out.insert(name, trace);
    }
    Ok(out)
}

fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Maximize => "maximize",
        Direction::Minimize => "minimize",
    }
}

/// Builds every table from `traces`, ordered as the config lists methods,
/// testbenches and seeds.
pub fn build(config: &CampaignConfig, traces: &BTreeMap<String, RunTrace>) -> Result<CampaignReport> {
    let mut ordered: Vec<(&String, &RunTrace)> = traces.iter().collect();
    let rank = |t: &RunTrace| {
        let m = config
            .methods
            .iter()
            .position(|m| m.label == t.method)
            .unwrap_or(usize::MAX);
        let b = config
            .testbenches
            .iter()
            .position(|b| *b == t.config.testbench)
            .unwrap_or(usize::MAX);
        (m, b, t.config.seed)
    };
    ordered.sort_by_key(|(_, t)| rank(t));

    // Comparison group for convergence: everything run on the same testbench.
    let mut best_by_bench: BTreeMap<&str, f64> = BTreeMap::new();
    for (_, t) in &ordered {
        let e = best_by_bench
            .entry(t.config.testbench.as_str())
            .or_insert(f64::NEG_INFINITY);
        *e = e.max(t.best_fom);
    }

    let mut report = CampaignReport::default();
    for (file, t) in &ordered {
        let threshold = Threshold::FractionOfBest {
            fraction: config.itr_fraction,
            best: best_by_bench[t.config.testbench.as_str()],
        };
        let constrained = t.constrained_objective_after(t.len())?;
        report.runs.push(RunRow {
            method: t.method.clone(),
            testbench: t.config.testbench.clone(),
            seed: t.config.seed,
            evaluations: t.len(),
            final_fom: t.best_fom,
            itr_at_threshold: render_itr(itr_at_threshold(t, threshold), t.config.budget),
            constrained_objective: constrained.value,
            constrained_feasible: constrained.feasible,
            trace_file: format!("{TRACE_DIR}/{file}"),
        });
        for r in &t.records {
            report.plot.push(PlotRow {
                method: t.method.clone(),
                testbench: t.config.testbench.clone(),
                seed: t.config.seed,
                evaluation: r.iteration + 1,
                fom: r.fom,
                incumbent_fom: r.incumbent_fom,
            });
        }
    }

    aggregate(&mut report, &ordered, config, &best_by_bench)?;
    if let Some(ab) = &config.ablation {
        ablation(&mut report, ab, traces)?;
    }
    Ok(report)
}

fn aggregate(
    report: &mut CampaignReport,
    ordered: &[(&String, &RunTrace)],
    config: &CampaignConfig,
    best_by_bench: &BTreeMap<&str, f64>,
) -> Result<()> {
    // (method, testbench) groups in first-seen order.
    let mut groups: Vec<((String, String), Vec<&RunTrace>)> = Vec::new();
    for (_, t) in ordered {
        let key = (t.method.clone(), t.config.testbench.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(t),
            None => groups.push((key, vec![t])),
        }
    }

    let mut rows = Vec::new();
    for ((method, bench), traces) in &groups {
        let threshold = Threshold::FractionOfBest {
            fraction: config.itr_fraction,
            best: best_by_bench[bench.as_str()],
        };
        let itrs: Vec<Option<usize>> = traces.iter().map(|t| itr_at_threshold(t, threshold)).collect();
        let itr_values: Vec<f64> = itrs.iter().map(|i| i.map_or(f64::INFINITY, |n| n as f64)).collect();
        let med_itr = median(&itr_values).expect("nonempty group");
        let budget = traces[0].config.budget;
        let objectives = traces
            .iter()
            .map(|t| t.constrained_objective_after(t.len()).map(|c| c.value))
            .collect::<famopt_core::Result<Vec<f64>>>()?;
        rows.push(AggregateRow {
            method: method.clone(),
            testbench: bench.clone(),
            runs: traces.len(),
            median_final_fom: median(&traces.iter().map(|t| t.best_fom).collect::<Vec<_>>()).expect("nonempty"),
            median_itr_at_threshold: if med_itr.is_finite() {
                format!("{med_itr}")
            } else {
                render_itr(None, budget)
            },
            reached: itrs.iter().filter(|i| i.is_some()).count(),
            median_constrained_objective: median(&objectives).expect("nonempty"),
            normalized_objective: f64::NAN,
        });
    }

    for bench in best_by_bench.keys() {
        let direction = ordered
            .iter()
            .find(|(_, t)| t.config.testbench == *bench)
            .map(|(_, t)| t.specs.primary_target().map(|p| p.direction))
            .expect("bench has traces")?;
        let values: Vec<f64> = rows
            .iter()
            .filter(|r| r.testbench == *bench)
            .map(|r| r.median_constrained_objective)
            .collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for r in rows.iter_mut().filter(|r| r.testbench == *bench) {
            let v = r.median_constrained_objective;
            r.normalized_objective = if hi == lo {
                1.0
            } else {
                match direction {
                    Direction::Minimize => (hi - v) / (hi - lo),
                    Direction::Maximize => (v - lo) / (hi - lo),
                }
            };
        }
    }
    report.aggregate = rows;
    Ok(())
}

fn ablation(
    report: &mut CampaignReport,
    ab: &campaign::AblationSpec,
    traces: &BTreeMap<String, RunTrace>,
) -> Result<()> {
    let find = |label: &str, bench: &str, seed: u64| {
        traces
            .values()
            .find(|t| t.method == label && t.config.testbench == bench && t.config.seed == seed)
    };
    let mut pairs: Vec<(&RunTrace, &RunTrace)> = Vec::new();
    for row in &report.runs {
        if row.method != ab.baseline {
            continue;
        }
        if let (Some(a), Some(b)) = (
            find(&ab.baseline, &row.testbench, row.seed),
            find(&ab.candidate, &row.testbench, row.seed),
        ) {
            pairs.push((a, b));
        }
    }

    for &cp in &ab.checkpoints {
        for (a, b) in &pairs {
            let direction = a.specs.primary_target()?.direction;
            let base = a.constrained_objective_after(cp)?.value;
            let cand = b.constrained_objective_after(cp)?.value;
            report.ablation.push(AblationRow {
                testbench: a.config.testbench.clone(),
                seed: a.config.seed,
                checkpoint: cp,
                direction: direction_name(direction).into(),
                baseline_objective: base,
                candidate_objective: cand,
                factor: ratio(base, cand, direction)?,
            });
        }
    }

    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in &report.ablation {
        let k = (r.testbench.clone(), r.checkpoint);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (bench, cp) in keys {
        let factors: Vec<f64> = report
            .ablation
            .iter()
            .filter(|r| r.testbench == bench && r.checkpoint == cp)
            .map(|r| r.factor)
            .collect();
        report.ablation_summary.push(AblationSummaryRow {
            testbench: bench,
            checkpoint: cp,
            seeds: factors.len(),
            median_factor: median(&factors).expect("nonempty"),
        });
    }
    Ok(())
}

fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| HarnessError::Invalid(e.to_string()))
}

pub const RUNS_HEADER: [&str; 9] = [
    "method",
    "testbench",
    "seed",
    "evaluations",
    "final_fom",
    "itr_at_threshold",
    "constrained_objective",
    "constrained_feasible",
    "trace_file",
];
pub const AGGREGATE_HEADER: [&str; 8] = [
    "method",
    "testbench",
    "runs",
    "median_final_fom",
    "median_itr_at_threshold",
    "reached",
    "median_constrained_objective",
    "normalized_objective",
];
pub const PLOT_HEADER: [&str; 6] = ["method", "testbench", "seed", "evaluation", "fom", "incumbent_fom"];
pub const ABLATION_HEADER: [&str; 7] = [
    "testbench",
    "seed",
    "checkpoint",
    "direction",
    "baseline_objective",
    "candidate_objective",
    "factor",
];
pub const ABLATION_SUMMARY_HEADER: [&str; 4] = ["testbench", "checkpoint", "seeds", "median_factor"];

/// Writes every table of `report` into `dir`.
pub fn write(report: &CampaignReport, dir: &Path) -> Result<()> {
    write_atomic(&dir.join(RUNS_CSV), &csv_bytes(&report.runs, &RUNS_HEADER)?)?;
    write_atomic(
        &dir.join(AGGREGATE_CSV),
        &csv_bytes(&report.aggregate, &AGGREGATE_HEADER)?,
    )?;
    write_atomic(&dir.join(PLOT_CSV), &csv_bytes(&report.plot, &PLOT_HEADER)?)?;
    write_atomic(&dir.join(ABLATION_CSV), &csv_bytes(&report.ablation, &ABLATION_HEADER)?)?;
    write_atomic(
        &dir.join(ABLATION_SUMMARY_CSV),
        &csv_bytes(&report.ablation_summary, &ABLATION_SUMMARY_HEADER)?,
    )?;
    Ok(())
}

/// Rebuilds and rewrites the tables of the campaign in `dir`.
pub fn generate(dir: &Path) -> Result<CampaignReport> {
    let config = load_snapshot(dir)?;
    let traces = load_traces(dir)?;
    let report = build(&config, &traces)?;
    write(&report, dir)?;
    Ok(report)
}
