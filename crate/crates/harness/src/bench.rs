//! Dataset export and the stdin/stdout evaluator used to exercise the
//! external-evaluator hook with an in-repo testbench.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use famopt_core::circuits::Testbench;
use famopt_core::fom::MetricVector;
use famopt_core::space::latin_hypercube;
use famopt_core::Rng;

use crate::error::{HarnessError, Result};

/// LHS samples of a testbench as CSV: one column per variable, then one per
/// metric, both in declaration order.
pub fn export_csv<W: Write>(bench: &Testbench, samples: usize, seed: u64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = bench.variables().iter().map(|v| v.name.clone()).collect();
    header.extend(bench.metric_names());
    w.write_record(&header)?;
    for p in latin_hypercube(bench.space(), samples, &mut Rng::new(seed)) {
        let m = bench.evaluate(&p)?;
        let mut row: Vec<String> = p.coords().iter().map(|v| v.to_string()).collect();
        row.extend(bench.specs().names().map(|n| m.get(n).expect("metric").to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io("<export>", e))?;
    Ok(())
}

#[derive(Deserialize)]
struct EvalRequest {
    x: Vec<f64>,
}

#[derive(Serialize)]
struct EvalResponse {
    metrics: MetricVector,
}

/// Answers `{"x":[...]}` lines with `{"metrics":{...}}` lines until EOF.
pub fn serve_eval<R: BufRead, W: Write>(bench: &Testbench, input: R, mut output: W) -> Result<()> {
    for line in input.lines() {
        let line = line.map_err(|e| HarnessError::io("<stdin>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let req: EvalRequest = serde_json::from_str(&line)?;
        let x = bench.space().point(req.x)?;
        let metrics = bench.evaluate(&x)?;
        let reply = serde_json::to_string(&EvalResponse { metrics })?;
        writeln!(output, "{reply}").map_err(|e| HarnessError::io("<stdout>", e))?;
        output.flush().map_err(|e| HarnessError::io("<stdout>", e))?;
    }
    Ok(())
}
