//! Where metric values come from: an in-repo testbench or an external
//! command (for users with a real simulator).

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::circuits::Testbench;
use crate::error::{Error, Result};
use crate::fom::{MetricVector, SpecSet};
use crate::space::{DesignPoint, DesignSpace};

pub const DEFAULT_EVAL_TIMEOUT_SECS: u64 = 600;

pub trait Evaluator {
    fn space(&self) -> &DesignSpace;

    fn specs(&self) -> &SpecSet;

    /// Metrics for every spec at `x`; values must be finite.
    fn evaluate(&mut self, x: &DesignPoint) -> Result<MetricVector>;
}

pub struct TestbenchEvaluator {
    bench: Testbench,
}

impl TestbenchEvaluator {
    pub fn new(bench: Testbench) -> Self {
        Self { bench }
    }

    pub fn bench(&self) -> &Testbench {
        &self.bench
    }
}

impl Evaluator for TestbenchEvaluator {
    fn space(&self) -> &DesignSpace {
        self.bench.space()
    }

    fn specs(&self) -> &SpecSet {
        self.bench.specs()
    }

    fn evaluate(&mut self, x: &DesignPoint) -> Result<MetricVector> {
        self.bench.evaluate(x)
    }
}

#[derive(Serialize)]
struct EvalRequest<'a> {
    x: &'a [f64],
}

#[derive(Deserialize)]
struct EvalResponse {
    metrics: MetricVector,
}

/// Runs `command` once per evaluation, writing `{"x":[...]}` to its standard
/// input and reading `{"metrics":{...}}` from its standard output. The design
/// space and specifications come from the testbench it stands in for.
pub struct ExternalEvaluator {
    argv: Vec<String>,
    space: DesignSpace,
    specs: SpecSet,
    timeout: Duration,
}

impl ExternalEvaluator {
    pub fn new(command: &str, space: DesignSpace, specs: SpecSet, timeout: Duration) -> Result<Self> {
        let argv = shlex::split(command)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| Error::Config(format!("cannot parse evaluator command `{command}`")))?;
        Ok(Self {
            argv,
            space,
            specs,
            timeout,
        })
    }

    fn run_once(&self, x: &DesignPoint) -> Result<String> {
        let mut child = Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Evaluator(format!("cannot start `{}`: {e}", self.argv[0])))?;

        let request = serde_json::to_string(&EvalRequest { x: x.coords() }).expect("serializable");
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            // A child that exits without reading is reported through its status.
            let _ = writeln!(stdin, "{request}");
        }

        let mut stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut out = String::new();
            let res = stdout.read_to_string(&mut out).map(|_| out);
            let _ = tx.send(res);
        });

        let output = match rx.recv_timeout(self.timeout) {
            Ok(res) => res.map_err(|e| Error::Evaluator(format!("reading evaluator output: {e}")))?,
            Err(_) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::Evaluator(format!(
                    "evaluation timed out after {} s",
                    self.timeout.as_secs_f64()
                )));
            }
        };
        let status = child.wait()?;
        if !status.success() {
            return Err(Error::Evaluator(format!("evaluator exited with {status}")));
        }
        Ok(output)
    }
}

impl Evaluator for ExternalEvaluator {
    fn space(&self) -> &DesignSpace {
        &self.space
    }

    fn specs(&self) -> &SpecSet {
        &self.specs
    }

    fn evaluate(&mut self, x: &DesignPoint) -> Result<MetricVector> {
        let raw = self.run_once(x)?;
        let line = raw.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
        let resp: EvalResponse = serde_json::from_str(line)
            .map_err(|e| Error::Evaluator(format!("bad evaluator response ({e}): {line}")))?;
        resp.metrics.validate_against(&self.specs)?;
        Ok(resp.metrics)
    }
}
