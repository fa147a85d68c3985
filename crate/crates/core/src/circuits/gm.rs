//! High-dimensional source-degenerated transconductor.
//!
//! Forty-eight finger multipliers feed three device groups (input pair,
//! loads, output stage) through seed-generated weights; five bias and
//! passive variables complete the design. Every metric is a smooth
//! composition of power-law devices and a real-pole loop.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use super::ota::{Process, PROCESS};
use super::primitives::{power_law, unity_gain_crossover};
use super::testbench::{Provenance, Testbench, Variable};
use crate::error::Result;
use crate::fom::{Direction, SpecItem, SpecSet};
use crate::rng::Rng;

pub const SEED: u64 = 53;
pub const FINGERS: usize = 48;
const GROUP: usize = FINGERS / 3;

/// Boltzmann constant times 300 K, J.
const KT: f64 = 1.380_649e-23 * 300.0;

#[derive(Clone, Debug, Serialize)]
pub struct GmConstants {
    pub seed: u64,
    /// Width contributed per unit finger multiplier, µm.
    pub finger_width_um: f64,
    /// Input-group weights.
    pub input_weights: Vec<f64>,
    /// Load-group flicker-noise weights.
    pub noise_weights: Vec<f64>,
    /// Output-stage weights.
    pub output_weights: Vec<f64>,
    /// Flicker-noise coefficient at the read-out frequency, V²/Hz.
    pub flicker_coeff: f64,
    /// Thermal excess-noise factor.
    pub gamma: f64,
    /// Differential input amplitude for the distortion metric, V.
    pub signal_amplitude: f64,
    pub process: Process,
}

pub fn constants() -> GmConstants {
    let mut rng = Rng::new(SEED);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| (rng.uniform_range(0.5, 1.5) * 1e6).round() / 1e6)
            .collect()
    };
    let input_weights = draw(GROUP);
    let noise_weights = draw(GROUP);
    let output_weights = draw(GROUP);
    GmConstants {
        seed: SEED,
        finger_width_um: 2.0,
        input_weights,
        noise_weights,
        output_weights,
        flicker_coeff: 2e-17,
        gamma: 2.0 / 3.0,
        signal_amplitude: 0.2,
        process: PROCESS,
    }
}

/// Thresholds for Gm (µS), phase margin (°), noise (nV/√Hz) and THD (%).
pub const GM_SPECS: [f64; 4] = [400.0, 60.0, 20.0, 1.0];

pub fn variables() -> Vec<Variable> {
    let mut v: Vec<Variable> = (0..FINGERS)
        .map(|j| Variable::new(&format!("m{j}"), 0.5, 4.0, "multiplier"))
        .collect();
    v.push(Variable::new("vov", 0.05, 0.35, "V"));
    v.push(Variable::new("ibias", 20.0, 200.0, "uA"));
    v.push(Variable::new("rdeg", 0.2, 10.0, "kOhm"));
    v.push(Variable::new("cc", 0.2, 3.0, "pF"));
    v.push(Variable::new("l_in", 0.18, 2.0, "um"));
    v
}

/// `[gm_us, pm_deg, noise_nv, thd_pct]`.
pub fn model(c: &GmConstants, x: &[f64]) -> Vec<f64> {
    let p = &c.process;
    let m = &x[..FINGERS];
    let [vov, ibias_ua, rdeg_k, cc_pf, l_in] = x[FINGERS..FINGERS + 5] else {
        unreachable!("gm-highdim has 53 variables")
    };
    let ibias = ibias_ua * 1e-6;
    let rdeg = rdeg_k * 1e3;
    let cc = cc_pf * 1e-12;
    let weighted = |w: &[f64], ms: &[f64]| -> f64 { w.iter().zip(ms).map(|(a, b)| a * b).sum() };

    // Input pair: geometry- and current-limited transconductance combined in
    // series, then degenerated.
    let w_in = c.finger_width_um * weighted(&c.input_weights, &m[..GROUP]);
    let gm_geom = p.kn * power_law(w_in, l_in, vov, 1.0);
    let gm_cur = ibias / vov;
    let gm = 1.0 / (1.0 / gm_geom + 1.0 / gm_cur);
    let loop_gain = gm * rdeg;
    let gm_eff = gm / (1.0 + loop_gain);

    let thd = 100.0 * (c.signal_amplitude / (4.0 * vov * (1.0 + loop_gain))).powi(2);

    let flicker: f64 = c
        .noise_weights
        .iter()
        .zip(&m[GROUP..2 * GROUP])
        .map(|(b, mj)| b / mj)
        .sum::<f64>()
        * c.flicker_coeff;
    let thermal = 8.0 * KT * (c.gamma / gm + rdeg);
    let noise = (thermal + flicker).sqrt() * 1e9;

    // Two-stage loop: degenerated first stage into a power-law output stage.
    let w_out = c.finger_width_um * weighted(&c.output_weights, &m[2 * GROUP..]);
    let gm2 = (2.0 * p.kp * (w_out / 0.5) * ibias).sqrt();
    let r1 = 1.0 / (2.0 * p.lambda_um / l_in * ibias / 2.0);
    let r2 = 1.0 / (2.0 * p.lambda_um / 0.5 * ibias);
    let a2 = gm2 * r2;
    let a0 = gm_eff * r1 * a2;
    let c_par: f64 = p.cox * c.finger_width_um * 0.5 * m[GROUP..2 * GROUP].iter().sum::<f64>();
    let gm_load = (2.0 * p.kp * 4.0 * ibias / 2.0).sqrt();
    let poles = [
        1.0 / (2.0 * PI * r1 * (1.0 + a2) * cc),
        gm2 / (2.0 * PI * p.c_load),
        gm_load / (2.0 * PI * c_par),
    ];
    let pm = unity_gain_crossover(a0.max(1.0), &poles, &[]).phase_margin.max(0.0);

    vec![gm_eff * 1e6, pm, noise, thd]
}

pub fn gm_highdim() -> Result<Testbench> {
    let c = constants();
    let [gm, pm, noise, thd] = GM_SPECS;
    let specs = SpecSet::new(vec![
        SpecItem::target("gm_us", Direction::Maximize, gm)?,
        SpecItem::hard("pm_deg", Direction::Maximize, pm)?,
        SpecItem::hard("noise_nv", Direction::Minimize, noise)?,
        SpecItem::hard("thd_pct", Direction::Minimize, thd)?,
    ])?;
    let constants = serde_json::to_value(&c).expect("serializable constants");
    Testbench::new(
        "gm-highdim",
        "53-variable degenerated transconductor: maximize effective Gm subject to phase margin, noise and distortion",
        variables(),
        specs,
        Provenance::Generated { seed: SEED },
        constants,
        Arc::new(move |x: &[f64]| model(&c, x)),
    )
}
