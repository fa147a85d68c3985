//! Charge pump with cascoded up/down current sources and a loop filter.
//!
//! Each source stays in saturation only while the output voltage leaves it
//! enough headroom; a smooth regime indicator per source and output level
//! gates the delivered current. Matching and deviation are read at three
//! output levels, so the metrics are piecewise in the bias and geometry
//! variables. Mirror finger weights come from a fixed seed.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use super::ota::{Process, PROCESS};
use super::primitives::{regime_indicator, unity_gain_crossover, DEFAULT_SHARPNESS};
use super::testbench::{Provenance, Testbench, Variable};
use crate::error::Result;
use crate::fom::{Direction, SpecItem, SpecSet};
use crate::rng::Rng;

pub const SEED: u64 = 36;
pub const FINGERS: usize = 16;

#[derive(Clone, Debug, Serialize)]
pub struct ChargePumpConstants {
    pub seed: u64,
    pub vdd: f64,
    /// Output levels at which the sources are checked, V.
    pub output_levels: [f64; 3],
    /// Switch gate drive above threshold, V.
    pub switch_drive: f64,
    /// Per-finger mirror weights (first half up, second half down).
    pub finger_weights: Vec<f64>,
    /// Feedback divider of the surrounding loop.
    pub divider: f64,
    /// Frequency standing in for the loop's two integrators, Hz.
    pub integrator_pole_hz: f64,
    /// Capacitor density, µm² per pF.
    pub cap_area_per_pf: f64,
    /// Resistor density, µm² per kΩ.
    pub res_area_per_kohm: f64,
    /// Cost weight of supply power, per µW.
    pub power_weight: f64,
    pub sharpness: f64,
    pub process: Process,
}

pub fn constants() -> ChargePumpConstants {
    let mut rng = Rng::new(SEED);
    let finger_weights = (0..FINGERS)
        .map(|_| (rng.uniform_range(0.9, 1.1) * 1e6).round() / 1e6)
        .collect();
    ChargePumpConstants {
        seed: SEED,
        vdd: 1.8,
        output_levels: [0.5, 0.9, 1.3],
        switch_drive: 1.3,
        finger_weights,
        divider: 16.0,
        integrator_pole_hz: 1.0,
        cap_area_per_pf: 1000.0,
        res_area_per_kohm: 20.0,
        power_weight: 0.01,
        sharpness: DEFAULT_SHARPNESS,
        process: PROCESS,
    }
}

/// Thresholds for cost, matching (%), deviation (%) and stability (°).
pub const CHARGEPUMP_SPECS: [f64; 4] = [20.0, 5.0, 5.0, 45.0];

pub fn variables() -> Vec<Variable> {
    let mut v = vec![
        Variable::new("w_up", 4.0, 80.0, "um"),
        Variable::new("l_up", 0.18, 2.0, "um"),
        Variable::new("w_dn", 2.0, 40.0, "um"),
        Variable::new("l_dn", 0.18, 2.0, "um"),
        Variable::new("w_upc", 4.0, 80.0, "um"),
        Variable::new("l_upc", 0.18, 2.0, "um"),
        Variable::new("w_dnc", 2.0, 40.0, "um"),
        Variable::new("l_dnc", 0.18, 2.0, "um"),
        Variable::new("w_swu", 1.0, 20.0, "um"),
        Variable::new("l_swu", 0.18, 1.0, "um"),
        Variable::new("w_swd", 0.5, 10.0, "um"),
        Variable::new("l_swd", 0.18, 1.0, "um"),
        Variable::new("i_ref", 5.0, 60.0, "uA"),
        Variable::new("w_amp", 1.0, 20.0, "um"),
        Variable::new("l_amp", 0.18, 2.0, "um"),
        Variable::new("ib_amp", 1.0, 50.0, "uA"),
        Variable::new("c1", 1.0, 50.0, "pF"),
        Variable::new("c2", 0.1, 10.0, "pF"),
        Variable::new("r_lf", 1.0, 100.0, "kOhm"),
        Variable::new("kvco", 50.0, 1000.0, "MHz/V"),
    ];
    for k in 0..FINGERS {
        v.push(Variable::new(&format!("f{k}"), 0.8, 1.25, "multiplier"));
    }
    v
}

fn vov(k: f64, wl: f64, i: f64) -> f64 {
    (2.0 * i / (k * wl)).sqrt()
}

/// `[cost, matching_pct, deviation_pct, stability_deg]`.
pub fn model(c: &ChargePumpConstants, x: &[f64]) -> Vec<f64> {
    let p = &c.process;
    let [w_up, l_up, w_dn, l_dn, w_upc, l_upc, w_dnc, l_dnc, w_swu, l_swu, w_swd, l_swd, i_ref_ua, w_amp, l_amp, ib_amp_ua, c1_pf, c2_pf, r_lf_k, kvco_mhz] =
        x[..20]
    else {
        unreachable!("chargepump has 36 variables")
    };
    let fingers = &x[20..20 + FINGERS];
    let half = FINGERS / 2;
    let ratio = |range: std::ops::Range<usize>| -> f64 {
        range.clone().map(|k| c.finger_weights[k] * fingers[k]).sum::<f64>() / range.len() as f64
    };
    let (ratio_up, ratio_dn) = (ratio(0..half), ratio(half..FINGERS));
    let i_ref = i_ref_ua * 1e-6;
    let (i_up0, i_dn0) = (i_ref * ratio_up, i_ref * ratio_dn);

    // Saturation headroom of each stack: source + cascode overdrive plus the
    // switch's resistive drop.
    let drop_up = vov(p.kp, w_up / l_up, i_up0)
        + vov(p.kp, w_upc / l_upc, i_up0)
        + i_up0 / (p.kp * (w_swu / l_swu) * c.switch_drive);
    let drop_dn = vov(p.kn, w_dn / l_dn, i_dn0)
        + vov(p.kn, w_dnc / l_dnc, i_dn0)
        + i_dn0 / (p.kn * (w_swd / l_swd) * c.switch_drive);

    // Replica amplifier gain suppresses the cascoded output conductance.
    let a_amp =
        (2.0 * p.kn * (w_amp / l_amp) * ib_amp_ua * 1e-6).sqrt() / (2.0 * p.lambda_um / l_amp * ib_amp_ua * 1e-6);
    let cascode = |l: f64, lc: f64, i: f64, wc: f64, k: f64| -> f64 {
        let v = vov(k, wc / lc, i);
        (p.lambda_um / l) * (p.lambda_um / lc) * v / 2.0
    };
    let lam_up = cascode(l_up, l_upc, i_up0, w_upc, p.kp) / (1.0 + a_amp.sqrt());
    let lam_dn = cascode(l_dn, l_dnc, i_dn0, w_dnc, p.kn) / (1.0 + a_amp.sqrt());

    let vmid = c.vdd / 2.0;
    let mut matching: f64 = 0.0;
    let mut avg = [0.0; 3];
    for (j, &vo) in c.output_levels.iter().enumerate() {
        let s_up = regime_indicator(c.vdd - vo - drop_up, 0.0, c.sharpness);
        let s_dn = regime_indicator(vo - drop_dn, 0.0, c.sharpness);
        let i_up = i_up0 * (1.0 + lam_up * (vmid - vo)) * s_up;
        let i_dn = i_dn0 * (1.0 + lam_dn * (vo - vmid)) * s_dn;
        matching = matching.max((i_up - i_dn).abs() / i_ref);
        avg[j] = 0.5 * (i_up + i_dn) / i_ref;
    }
    let deviation =
        avg.iter().copied().fold(f64::NEG_INFINITY, f64::max) - avg.iter().copied().fold(f64::INFINITY, f64::min);

    // Loop stability: both integrators as very low poles, the filter's
    // stabilizing zero and its ripple pole. Pump current only counts while
    // both sources are saturated at mid-rail.
    let (c1, c2, r) = (c1_pf * 1e-12, c2_pf * 1e-12, r_lf_k * 1e3);
    let s_mid =
        regime_indicator(c.vdd - vmid - drop_up, 0.0, c.sharpness) * regime_indicator(vmid - drop_dn, 0.0, c.sharpness);
    let i_cp = 0.5 * (i_up0 + i_dn0) * s_mid;
    let wp0 = 2.0 * PI * c.integrator_pole_hz;
    let k_loop = i_cp * kvco_mhz * 1e6 * 2.0 * PI / (2.0 * PI * c.divider);
    let dc_gain = k_loop / ((c1 + c2) * wp0 * wp0);
    let zero = 1.0 / (2.0 * PI * r * c1);
    let ripple = (c1 + c2) / (2.0 * PI * r * c1 * c2);
    let cross = unity_gain_crossover(
        dc_gain.max(1.0),
        &[c.integrator_pole_hz, c.integrator_pole_hz, ripple],
        &[zero],
    );
    let stability = cross.phase_margin.clamp(0.0, 180.0);

    let dev_area = w_up * l_up * ratio_up
        + w_dn * l_dn * ratio_dn
        + w_upc * l_upc
        + w_dnc * l_dnc
        + w_swu * l_swu
        + w_swd * l_swd
        + w_amp * l_amp;
    let area = dev_area + (c1_pf + c2_pf) * c.cap_area_per_pf + r_lf_k * c.res_area_per_kohm;
    let power_uw = c.vdd * (i_ref * (1.0 + ratio_up + ratio_dn) + ib_amp_ua * 1e-6) * 1e6;
    let cost = area / 1000.0 + c.power_weight * power_uw;

    vec![cost, 100.0 * matching, 100.0 * deviation, stability]
}

pub fn chargepump() -> Result<Testbench> {
    let c = constants();
    let [cost, matching, deviation, stability] = CHARGEPUMP_SPECS;
    let specs = SpecSet::new(vec![
        SpecItem::target("cost", Direction::Minimize, cost)?,
        SpecItem::hard("matching_pct", Direction::Minimize, matching)?,
        SpecItem::hard("deviation_pct", Direction::Minimize, deviation)?,
        SpecItem::hard("stability_deg", Direction::Maximize, stability)?,
    ])?;
    let constants = serde_json::to_value(&c).expect("serializable constants");
    Testbench::new(
        "chargepump-regime",
        "Cascoded charge pump whose sources drop out of saturation near the rails: minimize cost subject to matching, deviation and loop stability",
        variables(),
        specs,
        Provenance::Generated { seed: SEED },
        constants,
        Arc::new(move |x: &[f64]| model(&c, x)),
    )
}
