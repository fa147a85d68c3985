//! Two- and three-stage operational amplifiers.
//!
//! Transconductances follow the strong-inversion power law, output resistances
//! scale with channel length, and the small-signal response is a chain of
//! real poles placed by bias and geometry. Gain, unity-gain bandwidth and
//! phase margin therefore couple through the same few variables.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use super::primitives::{power_law, unity_gain_crossover};
use super::testbench::{Provenance, Testbench, Variable};
use crate::error::Result;
use crate::fom::{Direction, SpecItem, SpecSet};

/// Process constants shared by the amplifiers.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Process {
    /// NMOS transconductance parameter, A/V².
    pub kn: f64,
    /// PMOS transconductance parameter, A/V².
    pub kp: f64,
    /// Channel-length modulation at L = 1 µm, 1/V; scales as 1/L.
    pub lambda_um: f64,
    /// Gate capacitance per area, F/µm².
    pub cox: f64,
    /// Load capacitance, F.
    pub c_load: f64,
    /// W/L of the reference device that mirror ratios are quoted against.
    pub mirror_ref_wl: f64,
}

pub const PROCESS: Process = Process {
    kn: 200e-6,
    kp: 80e-6,
    lambda_um: 0.08,
    cox: 8.5e-15,
    c_load: 2e-12,
    mirror_ref_wl: 4.0,
};

/// Gain floor in dB, reached when the amplifier has no gain (for example at
/// zero input overdrive).
pub const GAIN_FLOOR_DB: f64 = 0.0;

fn lambda(p: &Process, l_um: f64) -> f64 {
    p.lambda_um / l_um
}

/// Output resistance of two devices in parallel carrying `i` amperes.
fn r_out(p: &Process, l_a: f64, l_b: f64, i: f64) -> f64 {
    1.0 / ((lambda(p, l_a) + lambda(p, l_b)) * i)
}

fn gain_db(a0: f64) -> f64 {
    20.0 * a0.max(1.0).log10() + GAIN_FLOOR_DB
}

/// `[gain_db, pm_deg, gbw_mhz]` of a DC gain and real poles.
fn loop_metrics(a0: f64, poles: &[f64]) -> [f64; 3] {
    let c = unity_gain_crossover(a0.max(1.0), poles, &[]);
    [gain_db(a0), c.phase_margin.max(0.0), c.frequency * 1e-6]
}

pub fn ota2_variables() -> Vec<Variable> {
    vec![
        Variable::new("w1", 4.0, 24.0, "um"),
        Variable::new("l1", 0.35, 2.0, "um"),
        Variable::new("w3", 4.0, 24.0, "um"),
        Variable::new("l3", 0.35, 2.0, "um"),
        Variable::new("w6", 16.0, 96.0, "um"),
        Variable::new("l6", 0.35, 2.0, "um"),
        Variable::new("w7", 8.0, 48.0, "um"),
        Variable::new("l7", 0.35, 2.0, "um"),
        Variable::new("cc", 0.5, 5.0, "pF"),
        Variable::new("itail", 10.0, 60.0, "uA"),
        Variable::new("vov1", 0.0, 0.3, "V"),
        Variable::new("vov6", 0.08, 0.35, "V"),
    ]
}

/// `[gain_db, pm_deg, gbw_mhz, current_ua]` of the two-stage amplifier.
pub fn ota2_model(p: &Process, x: &[f64]) -> Vec<f64> {
    let [w1, l1, w3, l3, w6, l6, w7, l7, cc_pf, itail_ua, vov1, vov6] = x[..12] else {
        unreachable!("ota2 has 12 variables")
    };
    let itail = itail_ua * 1e-6;
    let cc = cc_pf * 1e-12;
    let i1 = itail / 2.0;
    let i6 = itail * (w7 / l7) / p.mirror_ref_wl;

    let gm1 = p.kn * power_law(w1, l1, vov1, 1.0);
    let r1 = r_out(p, l1, l3, i1);
    let gm6 = p.kp * power_law(w6, l6, vov6, 1.0);
    let r2 = r_out(p, l6, l7, i6);
    let a2 = gm6 * r2;
    let a0 = gm1 * r1 * a2;

    // Miller-split dominant pole, output pole, and the mirror pole.
    let c1 = p.cox * (2.0 / 3.0) * w6 * l6;
    let p1 = 1.0 / (2.0 * PI * r1 * (1.0 + a2) * cc);
    let p2 = gm6 * cc / (2.0 * PI * (c1 * p.c_load + cc * (c1 + p.c_load)));
    let gm3 = (2.0 * p.kp * (w3 / l3) * i1).sqrt();
    let p3 = gm3 / (2.0 * PI * 2.0 * p.cox * (2.0 / 3.0) * w3 * l3);

    let [g, pm, gbw] = loop_metrics(a0, &[p1, p2, p3]);
    vec![g, pm, gbw, (itail + i6) * 1e6]
}

pub fn ota_specs(gain_db: f64, pm_deg: f64, gbw_mhz: f64, current_ua: f64) -> Result<SpecSet> {
    SpecSet::new(vec![
        SpecItem::hard("gain_db", Direction::Maximize, gain_db)?,
        SpecItem::hard("pm_deg", Direction::Maximize, pm_deg)?,
        SpecItem::hard("gbw_mhz", Direction::Maximize, gbw_mhz)?,
        SpecItem::target("current_ua", Direction::Minimize, current_ua)?,
    ])
}

pub fn ota2() -> Result<Testbench> {
    let p = PROCESS;
    Testbench::new(
        "ota2-analytic",
        "Two-stage Miller amplifier: minimize supply current subject to gain, phase margin and bandwidth",
        ota2_variables(),
        ota_specs(OTA2_SPECS[0], OTA2_SPECS[1], OTA2_SPECS[2], OTA2_SPECS[3])?,
        Provenance::Analytic,
        serde_json::to_value(p).expect("serializable constants"),
        Arc::new(move |x: &[f64]| ota2_model(&p, x)),
    )
}

/// Thresholds for gain (dB), phase margin (°), GBW (MHz) and current (µA).
pub const OTA2_SPECS: [f64; 4] = [60.0, 60.0, 5.0, 60.0];
pub const OTA3_SPECS: [f64; 4] = [80.0, 55.0, 2.0, 150.0];

pub fn ota3_variables() -> Vec<Variable> {
    vec![
        Variable::new("w1", 4.0, 24.0, "um"),
        Variable::new("l1", 0.35, 2.0, "um"),
        Variable::new("w3", 4.0, 24.0, "um"),
        Variable::new("l3", 0.35, 2.0, "um"),
        Variable::new("w4", 4.0, 48.0, "um"),
        Variable::new("l4", 0.35, 2.0, "um"),
        Variable::new("w5", 4.0, 48.0, "um"),
        Variable::new("l5", 0.35, 2.0, "um"),
        Variable::new("w6", 16.0, 96.0, "um"),
        Variable::new("l6", 0.35, 2.0, "um"),
        Variable::new("w7", 8.0, 96.0, "um"),
        Variable::new("l7", 0.35, 2.0, "um"),
        Variable::new("cc1", 0.5, 5.0, "pF"),
        Variable::new("cc2", 0.2, 3.0, "pF"),
        Variable::new("itail", 5.0, 40.0, "uA"),
        Variable::new("k2", 0.5, 4.0, "ratio"),
        Variable::new("k3", 1.0, 10.0, "ratio"),
        Variable::new("vov1", 0.0, 0.3, "V"),
    ]
}

/// `[gain_db, pm_deg, gbw_mhz, current_ua]` of the nested-Miller
/// three-stage amplifier.
pub fn ota3_model(p: &Process, x: &[f64]) -> Vec<f64> {
    let [w1, l1, w3, l3, w4, l4, w5, l5, w6, l6, w7, l7, cc1_pf, cc2_pf, itail_ua, k2, k3, vov1] = x[..18] else {
        unreachable!("ota3 has 18 variables")
    };
    let itail = itail_ua * 1e-6;
    let (cc1, cc2) = (cc1_pf * 1e-12, cc2_pf * 1e-12);
    let i1 = itail / 2.0;
    let i2 = k2 * itail;
    let i3 = k3 * itail;

    let gm1 = p.kn * power_law(w1, l1, vov1, 1.0);
    let gm2 = (2.0 * p.kp * (w4 / l4) * i2).sqrt();
    let gm3 = (2.0 * p.kn * (w6 / l6) * i3).sqrt();
    let r1 = r_out(p, l1, l3, i1);
    let r2 = r_out(p, l4, l5, i2);
    let r3 = r_out(p, l6, l7, i3);
    let (a2, a3) = (gm2 * r2, gm3 * r3);
    let a0 = gm1 * r1 * a2 * a3;

    let c2 = p.cox * (2.0 / 3.0) * (w4 * l4 + w5 * l5);
    let c3 = p.cox * (2.0 / 3.0) * (w6 * l6 + w7 * l7);
    let p1 = 1.0 / (2.0 * PI * r1 * a2 * a3 * cc1);
    let p2 = gm2 / (2.0 * PI * (cc2 + c2)) * (cc1 / (cc1 + cc2));
    let p3 = gm3 / (2.0 * PI * (p.c_load + c3));
    let gm_mirror = (2.0 * p.kp * (w3 / l3) * i1).sqrt();
    let p4 = gm_mirror / (2.0 * PI * 2.0 * p.cox * (2.0 / 3.0) * w3 * l3);

    let [g, pm, gbw] = loop_metrics(a0, &[p1, p2, p3, p4]);
    vec![g, pm, gbw, (itail + i2 + i3) * 1e6]
}

pub fn ota3() -> Result<Testbench> {
    let p = PROCESS;
    Testbench::new(
        "ota3-analytic",
        "Three-stage nested-Miller amplifier: minimize supply current subject to gain, phase margin and bandwidth",
        ota3_variables(),
        ota_specs(OTA3_SPECS[0], OTA3_SPECS[1], OTA3_SPECS[2], OTA3_SPECS[3])?,
        Provenance::Analytic,
        serde_json::to_value(p).expect("serializable constants"),
        Arc::new(move |x: &[f64]| ota3_model(&p, x)),
    )
}
