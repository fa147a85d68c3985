//! Optimization campaigns: every `(method, testbench, seed)` cell of a run
//! matrix, one trace file per cell, and the tables derived from them.
//!
//! Output layout under the campaign directory:
//!
//! ```text
//! config.resolved.toml        the configuration actually used
//! traces/<method>__<bench>__seed<k>.json
//! errors.jsonl                failed cells, one JSON object per line
//! runs.csv, aggregate.csv, plot_data.csv, ablation.csv, ablation_summary.csv
//! ```
//!
//! The CSVs are produced by [`crate::report::generate`] from the trace files
//! alone, so `report --from <dir>` reproduces them byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use famopt_core::circuits;
use famopt_core::optimizer::{
    self, Acquisition, RunConfig, RunTrace, Strategy, DEFAULT_CANDIDATE_COUNT, DEFAULT_FOM_SAMPLES, DEFAULT_INIT_COUNT,
};
use famopt_core::posterior::DEFAULT_BINS;
use famopt_core::surrogate::BackendKind;

use crate::error::{HarnessError, Result};
use crate::report::{self, CampaignReport};

pub const CONFIG_SNAPSHOT: &str = "config.resolved.toml";
pub const TRACE_DIR: &str = "traces";
pub const ERRORS_FILE: &str = "errors.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Optimizer,
    RandomSearch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    /// Unique name used in file names and tables.
    pub label: String,
    #[serde(default = "default_kind")]
    pub kind: MethodKind,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_backend")]
    pub backend: BackendKind,
    #[serde(default = "default_acquisition")]
    pub acquisition: Acquisition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_backend_cmd: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_eval_cmd: Option<String>,
}

fn default_kind() -> MethodKind {
    MethodKind::Optimizer
}

fn default_strategy() -> Strategy {
    Strategy::DirectFom
}

fn default_backend() -> BackendKind {
    BackendKind::Khist
}

fn default_acquisition() -> Acquisition {
    Acquisition::Dei
}

impl MethodSpec {
    pub fn optimizer(label: &str, strategy: Strategy, backend: BackendKind, acquisition: Acquisition) -> Self {
        Self {
            label: label.into(),
            kind: MethodKind::Optimizer,
            strategy,
            backend,
            acquisition,
            external_backend_cmd: None,
            external_eval_cmd: None,
        }
    }

    pub fn random_search(label: &str) -> Self {
        Self {
            kind: MethodKind::RandomSearch,
            ..Self::optimizer(label, default_strategy(), default_backend(), default_acquisition())
        }
    }
}

/// Pairs two methods whose objectives are compared at fixed evaluation
/// counts; factors above 1 favor `candidate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSpec {
    pub baseline: String,
    pub candidate: String,
    pub checkpoints: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    /// Empty means every registered testbench.
    pub testbenches: Vec<String>,
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub init_count: usize,
    pub candidate_count: usize,
    pub bins: usize,
    pub fom_samples: usize,
    pub eval_timeout_secs: u64,
    /// Parallel worker slots; cells are independent.
    pub workers: usize,
    /// Convergence threshold as a fraction of the best FoM on each testbench.
    pub itr_fraction: f64,
    pub methods: Vec<MethodSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationSpec>,
    /// Per-testbench threshold overrides keyed by metric name.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub spec_overrides: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            testbenches: Vec::new(),
            seeds: (0..10).collect(),
            budget: 100,
            init_count: DEFAULT_INIT_COUNT,
            candidate_count: DEFAULT_CANDIDATE_COUNT,
            bins: DEFAULT_BINS,
            fom_samples: DEFAULT_FOM_SAMPLES,
            eval_timeout_secs: optimizer::DEFAULT_EVAL_TIMEOUT_SECS,
            workers: 1,
            itr_fraction: 0.8,
            methods: Vec::new(),
            ablation: None,
            spec_overrides: BTreeMap::new(),
        }
    }
}

fn safe_label(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
}

impl CampaignConfig {
    /// Fills in the testbench list and checks everything that can be checked
    /// before running.
    pub fn resolved(mut self) -> Result<Self> {
        if self.testbenches.is_empty() {
            self.testbenches = circuits::NAMES.iter().map(|s| s.to_string()).collect();
        }
        for name in &self.testbenches {
            circuits::build(name)?;
        }
        if self.methods.is_empty() || self.seeds.is_empty() {
            return Err(HarnessError::Config(
                "campaign needs at least one method and one seed".into(),
            ));
        }
        if self.workers == 0 {
            return Err(HarnessError::Config("workers must be at least 1".into()));
        }
        if !(self.itr_fraction > 0.0 && self.itr_fraction <= 1.0) {
            return Err(HarnessError::Config(format!(
                "itr_fraction {} outside (0, 1]",
                self.itr_fraction
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.methods {
            if !safe_label(&m.label) {
                return Err(HarnessError::Config(format!(
                    "method label `{}` must be nonempty ASCII letters, digits, '-', '_' or '.'",
                    m.label
                )));
            }
            if !seen.insert(m.label.as_str()) {
                return Err(HarnessError::Config(format!("duplicate method label `{}`", m.label)));
            }
        }
        if let Some(ab) = &self.ablation {
            for label in [&ab.baseline, &ab.candidate] {
                if !seen.contains(label.as_str()) {
                    return Err(HarnessError::Config(format!(
                        "ablation refers to unknown method `{label}`"
                    )));
                }
            }
            if let Some(&cp) = ab.checkpoints.iter().find(|&&c| c == 0 || c > self.budget) {
                return Err(HarnessError::Config(format!(
                    "ablation checkpoint {cp} outside 1..={}",
                    self.budget
                )));
            }
        }
        for (i, m) in self.methods.iter().enumerate() {
            self.run_config(m, &self.testbenches[0], self.seeds[0])
                .validate()
                .map_err(|e| HarnessError::Config(format!("method #{i} `{}`: {e}", m.label)))?;
        }
        Ok(self)
    }

    pub fn run_config(&self, method: &MethodSpec, testbench: &str, seed: u64) -> RunConfig {
        RunConfig {
            testbench: testbench.to_string(),
            strategy: method.strategy,
            backend: method.backend,
            acquisition: method.acquisition,
            budget: self.budget,
            init_count: self.init_count,
            candidate_count: self.candidate_count,
            seed,
            bins: self.bins,
            fom_samples: self.fom_samples,
            external_backend_cmd: method.external_backend_cmd.clone(),
            external_eval_cmd: method.external_eval_cmd.clone(),
            eval_timeout_secs: self.eval_timeout_secs,
            spec_overrides: self.spec_overrides.get(testbench).cloned().unwrap_or_default(),
        }
    }

    /// Every cell in method-major, then testbench, then seed order.
    pub fn cells(&self) -> Vec<Cell<'_>> {
        let mut out = Vec::new();
        for method in &self.methods {
            for bench in &self.testbenches {
                for &seed in &self.seeds {
                    out.push(Cell {
                        method,
                        testbench: bench,
                        seed,
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Cell<'a> {
    pub method: &'a MethodSpec,
    pub testbench: &'a str,
    pub seed: u64,
}

impl Cell<'_> {
    pub fn trace_file_name(&self) -> String {
        trace_file_name(&self.method.label, self.testbench, self.seed)
    }
}

pub fn trace_file_name(label: &str, testbench: &str, seed: u64) -> String {
    format!("{label}__{testbench}__seed{seed}.json")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub method: String,
    pub testbench: String,
    pub seed: u64,
    pub error: String,
}

/// Writes `contents` to a sibling temporary file and renames it into place,
/// so readers never observe a half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub fn run_cell(config: &CampaignConfig, cell: &Cell<'_>) -> Result<RunTrace> {
    let rc = config.run_config(cell.method, cell.testbench, cell.seed);
    let mut trace = match cell.method.kind {
        MethodKind::Optimizer => optimizer::run(&rc)?,
        MethodKind::RandomSearch => optimizer::random_search(&rc)?,
    };
    trace.method = cell.method.label.clone();
    Ok(trace)
}

/// Runs every cell, writes traces and the config snapshot into `out_dir`,
/// then derives the report tables from what was written.
pub fn run_campaign(config: CampaignConfig, out_dir: &Path) -> Result<CampaignReport> {
    let config = config.resolved()?;
    let trace_dir = out_dir.join(TRACE_DIR);
    fs::create_dir_all(&trace_dir).map_err(|e| HarnessError::io(&trace_dir, e))?;
    let snapshot = toml::to_string(&config).map_err(|e| HarnessError::Config(e.to_string()))?;
    write_atomic(&out_dir.join(CONFIG_SNAPSHOT), snapshot.as_bytes())?;

    let cells = config.cells();
    let next = AtomicUsize::new(0);
    let errors = Mutex::new(Vec::new());
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(cell) = cells.get(i) else { break };
        log::info!(
            "cell {}/{}: {} {} seed {}",
            i + 1,
            cells.len(),
            cell.method.label,
            cell.testbench,
            cell.seed
        );
        let outcome = run_cell(&config, cell).and_then(|trace| {
            let json = serde_json::to_vec_pretty(&trace)?;
            write_atomic(&trace_dir.join(cell.trace_file_name()), &json)
        });
        if let Err(e) = outcome {
            log::error!(
                "{} {} seed {} failed: {e}",
                cell.method.label,
                cell.testbench,
                cell.seed
            );
            errors.lock().unwrap_or_else(|p| p.into_inner()).push((
                i,
                CellError {
                    method: cell.method.label.clone(),
                    testbench: cell.testbench.to_string(),
                    seed: cell.seed,
                    error: e.to_string(),
                },
            ));
        }
    };
    if config.workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..config.workers {
                s.spawn(work);
            }
        });
    }

    let mut errors = errors.into_inner().unwrap_or_else(|p| p.into_inner());
    errors.sort_by_key(|(i, _)| *i);
    let mut lines = String::new();
    for (_, e) in &errors {
        lines.push_str(&serde_json::to_string(e)?);
        lines.push('\n');
    }
    write_atomic(&out_dir.join(ERRORS_FILE), lines.as_bytes())?;

    report::generate(out_dir)
}

/// Reads a campaign snapshot back.
pub fn load_snapshot(dir: &Path) -> Result<CampaignConfig> {
    let path = dir.join(CONFIG_SNAPSHOT);
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    Ok(toml::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_methods() -> CampaignConfig {
        CampaignConfig {
            testbenches: vec!["ota2-analytic".into()],
            seeds: vec![0, 1, 2],
            budget: 8,
            candidate_count: 32,
            methods: vec![
                MethodSpec::optimizer("khist-dei", Strategy::DirectFom, BackendKind::Khist, Acquisition::Dei),
                MethodSpec::random_search("random"),
            ],
            ..Default::default()
        }
    }

    #[test]
    fn resolution_checks() {
        assert!(two_methods().resolved().is_ok());
        let all = CampaignConfig {
            testbenches: vec![],
            ..two_methods()
        };
        assert_eq!(all.resolved().unwrap().testbenches.len(), 6);

        let mut dup = two_methods();
        dup.methods[1].label = "khist-dei".into();
        assert!(dup.resolved().is_err());

        let mut bad = two_methods();
        bad.methods[0].label = "a/b".into();
        assert!(bad.resolved().is_err());

        let mut ab = two_methods();
        ab.ablation = Some(AblationSpec {
            baseline: "random".into(),
            candidate: "missing".into(),
            checkpoints: vec![5],
        });
        assert!(ab.resolved().is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = two_methods().resolved().unwrap();
        cfg.spec_overrides
            .insert("ota2-analytic".into(), [("gain_db".to_string(), 55.0)].into());
        let text = toml::to_string(&cfg).unwrap();
        let back: CampaignConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn matrix_writes_one_trace_per_cell() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_campaign(two_methods(), dir.path()).unwrap();
        let traces: Vec<_> = fs::read_dir(dir.path().join(TRACE_DIR)).unwrap().collect();
        assert_eq!(traces.len(), 6);
        assert_eq!(report.runs.len(), 6);
        assert!(dir.path().join(report::AGGREGATE_CSV).exists());
        assert_eq!(fs::read_to_string(dir.path().join(ERRORS_FILE)).unwrap(), "");
    }

    #[test]
    fn failing_cells_are_quarantined() {
        let mut cfg = two_methods();
        cfg.methods.push(MethodSpec {
            external_eval_cmd: Some("/nonexistent/simulator".into()),
            ..MethodSpec::random_search("broken")
        });
        let dir = tempfile::tempdir().unwrap();
        let report = run_campaign(cfg, dir.path()).unwrap();
        assert_eq!(report.runs.len(), 6);
        let errors = fs::read_to_string(dir.path().join(ERRORS_FILE)).unwrap();
        assert_eq!(errors.lines().count(), 3);
        assert!(errors.contains("broken"));
    }
}
