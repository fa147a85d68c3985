//! Low-dropout regulator with a pass device that can fall out of saturation.
//!
//! The pass device's operating regime is a smooth indicator of dropout
//! voltage versus the overdrive its load current demands. Each regime has its
//! own loop response (gain, output pole, gate pole, zeros); the small-signal
//! metrics blend the two by the indicator, so they switch sharply across a
//! ~10 mV band.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use super::ota::{Process, PROCESS};
use super::primitives::{power_law, rational_response, regime_indicator, unity_gain_crossover, DEFAULT_SHARPNESS};
use super::testbench::{Provenance, Testbench, Variable};
use crate::error::Result;
use crate::fom::{Direction, SpecItem, SpecSet};

#[derive(Clone, Debug, Serialize)]
pub struct LdoConstants {
    pub v_out: f64,
    /// Load current, A.
    pub i_load: f64,
    /// Frequency at which supply rejection is read, Hz.
    pub psrr_freq_hz: f64,
    /// Parasitic capacitance at the error-amplifier output, F.
    pub c_par: f64,
    /// Capacitor density, µm² per pF.
    pub cap_area_per_pf: f64,
    /// Resistor density, µm² per kΩ.
    pub res_area_per_kohm: f64,
    /// Fixed high-frequency parasitic poles present in both regimes, Hz.
    pub parasitic_poles_hz: [f64; 2],
    pub sharpness: f64,
    pub process: Process,
}

pub fn constants() -> LdoConstants {
    LdoConstants {
        v_out: 1.2,
        i_load: 10e-3,
        psrr_freq_hz: 1e3,
        c_par: 50e-15,
        cap_area_per_pf: 1000.0,
        res_area_per_kohm: 5.0,
        parasitic_poles_hz: [2e7, 2e8],
        sharpness: DEFAULT_SHARPNESS,
        process: PROCESS,
    }
}

/// Thresholds for area (µm²), PSRR (dB), GBW (MHz), phase margin (°) and
/// power (µW).
pub const LDO_SPECS: [f64; 5] = [8000.0, 40.0, 0.5, 45.0, 3000.0];

pub fn variables() -> Vec<Variable> {
    vec![
        Variable::new("w_pass", 500.0, 8000.0, "um"),
        Variable::new("l_pass", 0.18, 1.0, "um"),
        Variable::new("vdrop", 0.05, 0.5, "V"),
        Variable::new("vov_ea", 0.05, 0.4, "V"),
        Variable::new("w_ea", 1.0, 20.0, "um"),
        Variable::new("l_ea", 0.18, 2.0, "um"),
        Variable::new("w_eal", 1.0, 20.0, "um"),
        Variable::new("l_eal", 0.18, 2.0, "um"),
        Variable::new("ib_ea", 1.0, 50.0, "uA"),
        Variable::new("cc", 0.1, 5.0, "pF"),
        Variable::new("cout", 0.1, 10.0, "uF"),
        Variable::new("esr", 0.01, 1.0, "Ohm"),
        Variable::new("r1", 10.0, 500.0, "kOhm"),
        Variable::new("r2", 10.0, 500.0, "kOhm"),
        Variable::new("w_buf", 1.0, 50.0, "um"),
        Variable::new("l_buf", 0.18, 2.0, "um"),
        Variable::new("ib_buf", 1.0, 50.0, "uA"),
        Variable::new("cff", 0.1, 10.0, "pF"),
        Variable::new("w_mir", 1.0, 20.0, "um"),
        Variable::new("l_mir", 0.18, 2.0, "um"),
        Variable::new("rz", 0.1, 50.0, "kOhm"),
    ]
}

fn parallel(a: f64, b: f64) -> f64 {
    a * b / (a + b)
}

/// Small-signal metrics of one regime: `[psrr_db, gbw_mhz, pm_deg]`.
fn regime_metrics(c: &LdoConstants, dc_gain: f64, poles: &[f64], zeros: &[f64]) -> [f64; 3] {
    let a = dc_gain.max(1.0);
    let cross = unity_gain_crossover(a, poles, zeros);
    let mag = rational_response(c.psrr_freq_hz, a, poles, zeros).0;
    let psrr = 20.0 * (1.0 + 10f64.powf(mag / 20.0)).log10();
    [psrr, cross.frequency * 1e-6, cross.phase_margin.clamp(0.0, 180.0)]
}

/// `[area_um2, psrr_db, gbw_mhz, pm_deg, power_uw]`.
pub fn model(c: &LdoConstants, x: &[f64]) -> Vec<f64> {
    let p = &c.process;
    let [w_pass, l_pass, vdrop, vov_ea, w_ea, l_ea, w_eal, l_eal, ib_ea_ua, cc_pf, cout_uf, esr, r1_k, r2_k, w_buf, l_buf, ib_buf_ua, cff_pf, w_mir, l_mir, rz_k] =
        x[..21]
    else {
        unreachable!("ldo has 21 variables")
    };
    let r_load = c.v_out / c.i_load;
    let (cc, cout, cff) = (cc_pf * 1e-12, cout_uf * 1e-6, cff_pf * 1e-12);
    let (r1, r2, rz) = (r1_k * 1e3, r2_k * 1e3, rz_k * 1e3);
    let ib_ea = ib_ea_ua * 1e-6;
    let ib_buf = ib_buf_ua * 1e-6 * (w_mir / l_mir) / 4.0;

    // Pass device: the overdrive needed to carry the load, and the regime.
    let wl_pass = w_pass / l_pass;
    let vov_req = (2.0 * c.i_load / (p.kp * wl_pass)).sqrt();
    let sat = regime_indicator(vdrop, vov_req, c.sharpness);

    let gm_ea = p.kn * power_law(w_ea, l_ea, vov_ea, 1.0);
    let ro_ea = 1.0 / ((p.lambda_um / l_ea + p.lambda_um / l_eal) * ib_ea / 2.0);
    let a_ea = gm_ea * ro_ea;
    let beta = r2 / (r1 + r2);
    let gm_buf = (2.0 * p.kn * (w_buf / l_buf) * ib_buf).sqrt();
    let p_ea = 1.0 / (2.0 * PI * ro_ea * (cc + c.c_par));
    let zeros = [
        1.0 / (2.0 * PI * esr * cout),
        1.0 / (2.0 * PI * r1 * cff),
        1.0 / (2.0 * PI * rz * cc),
    ];

    // Saturation: high output resistance, gate capacitance two-thirds of the
    // channel.
    let gm_sat = 2.0 * c.i_load / vov_req;
    let rout_sat = parallel(l_pass / (p.lambda_um * c.i_load), r_load);
    let sat_poles = [
        p_ea,
        1.0 / (2.0 * PI * rout_sat * cout),
        gm_buf / (2.0 * PI * (2.0 / 3.0) * p.cox * w_pass * l_pass),
        c.parasitic_poles_hz[0],
        c.parasitic_poles_hz[1],
    ];
    let m_sat = regime_metrics(c, a_ea * gm_sat * rout_sat * beta, &sat_poles, &zeros);

    // Triode: the pass device is a resistor, its transconductance scales
    // with the drain-source voltage, and the full channel loads the gate.
    let gm_tri = p.kp * wl_pass * vdrop;
    let rout_tri = parallel(vdrop / c.i_load, r_load);
    let tri_poles = [
        p_ea,
        1.0 / (2.0 * PI * rout_tri * cout),
        gm_buf / (2.0 * PI * p.cox * w_pass * l_pass),
        c.parasitic_poles_hz[0],
        c.parasitic_poles_hz[1],
    ];
    let m_tri = regime_metrics(c, a_ea * gm_tri * rout_tri * beta, &tri_poles, &zeros);

    let blend = |i: usize| sat * m_sat[i] + (1.0 - sat) * m_tri[i];

    let v_in = c.v_out + vdrop;
    let quiescent = ib_ea + ib_buf + c.v_out / (r1 + r2);
    let power = vdrop * c.i_load + v_in * quiescent;

    let area = w_pass * l_pass
        + 2.0 * (w_ea * l_ea + w_eal * l_eal)
        + w_buf * l_buf
        + w_mir * l_mir
        + (cc_pf + cff_pf) * c.cap_area_per_pf
        + (r1_k + r2_k + rz_k) * c.res_area_per_kohm;

    vec![area, blend(0), blend(1), blend(2), power * 1e6]
}

pub fn ldo() -> Result<Testbench> {
    let c = constants();
    let [area, psrr, gbw, pm, power] = LDO_SPECS;
    let specs = SpecSet::new(vec![
        SpecItem::target("area_um2", Direction::Minimize, area)?,
        SpecItem::hard("psrr_db", Direction::Maximize, psrr)?,
        SpecItem::hard("gbw_mhz", Direction::Maximize, gbw)?,
        SpecItem::hard("pm_deg", Direction::Maximize, pm)?,
        SpecItem::hard("power_uw", Direction::Minimize, power)?,
    ])?;
    let constants = serde_json::to_value(&c).expect("serializable constants");
    Testbench::new(
        "ldo-regime",
        "Low-dropout regulator whose pass device switches between saturation and triode: minimize area subject to PSRR, bandwidth, phase margin and power",
        variables(),
        specs,
        Provenance::Analytic,
        constants,
        Arc::new(move |x: &[f64]| model(&c, x)),
    )
}
