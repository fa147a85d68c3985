//! Structural checks on recorded traces.

use std::path::Path;

use famopt_core::fom::fom;
use famopt_core::optimizer::{Phase, RunTrace};

use crate::error::Result;
use crate::report::load_traces;

/// Every invariant a finished trace must satisfy; returns one message per
/// violation (empty when the trace is sound).
pub fn audit_trace(trace: &RunTrace) -> Vec<String> {
    let mut bad = Vec::new();
    let cfg = &trace.config;
    if trace.len() != cfg.budget {
        bad.push(format!("{} evaluations for budget {}", trace.len(), cfg.budget));
    }
    let per_query = cfg.strategy.surrogate_count(&trace.specs) * cfg.candidate_count;
    let random = trace.method == "random_search" || trace.records.iter().all(|r| r.phase == Phase::Random);
    let mut running = f64::NEG_INFINITY;
    for (i, r) in trace.records.iter().enumerate() {
        if r.iteration != i {
            bad.push(format!("record {i} carries iteration {}", r.iteration));
        }
        match fom(&trace.specs, &r.metrics) {
            Ok(v) if v == r.fom => {}
            Ok(v) => bad.push(format!("record {i}: stored fom {} but metrics give {v}", r.fom)),
            Err(e) => bad.push(format!("record {i}: {e}")),
        }
        running = running.max(r.fom);
        if r.incumbent_fom != running {
            bad.push(format!(
                "record {i}: incumbent {} but running best {running}",
                r.incumbent_fom
            ));
        }
        if i > 0 && r.incumbent_fom < trace.records[i - 1].incumbent_fom {
            bad.push(format!("record {i}: incumbent decreased"));
        }
        let expected_phase_ok = match r.phase {
            Phase::Random => random,
            Phase::Init => !random && i < cfg.init_count,
            Phase::Acquisition | Phase::Fallback => !random && i >= cfg.init_count,
        };
        if !expected_phase_ok {
            bad.push(format!("record {i}: unexpected phase {:?}", r.phase));
        }
        match r.phase {
            Phase::Acquisition => {
                if r.context_size != cfg.init_count + (i - cfg.init_count) {
                    bad.push(format!("record {i}: context {} != {}", r.context_size, i));
                }
                if r.surrogate_queries != per_query {
                    bad.push(format!(
                        "record {i}: {} surrogate queries, expected {per_query}",
                        r.surrogate_queries
                    ));
                }
            }
            _ => {
                if r.surrogate_queries != 0 {
                    bad.push(format!("record {i}: {:?} record issued surrogate queries", r.phase));
                }
            }
        }
    }
    if let Some(best) = trace.records.get(trace.best_index) {
        if best.fom != trace.best_fom || best.point != trace.best_point || best.fom != running {
            bad.push("reported best design is not the best evaluated design".into());
        }
    } else {
        bad.push(format!("best index {} out of range", trace.best_index));
    }
    bad
}

/// Audits every trace of a campaign directory; returns `(file, violation)`
/// pairs and the number of traces checked.
pub fn audit_dir(dir: &Path) -> Result<(usize, Vec<(String, String)>)> {
    let traces = load_traces(dir)?;
    let mut out = Vec::new();
    for (file, t) in &traces {
        out.extend(audit_trace(t).into_iter().map(|v| (file.clone(), v)));
    }
    Ok((traces.len(), out))
}
