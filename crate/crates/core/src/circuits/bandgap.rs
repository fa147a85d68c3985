//! Bandgap-style reference built from weak-inversion branches.
//!
//! The reference voltage is a signed, resistor-weighted sum of six
//! exponential branch currents. Its temperature curvature, taken over a
//! three-point stencil, is the objective: small changes in the gate drives move
//! it exponentially, while the amplifier and mirror geometry only enter through
//! a weak mismatch term. A regulation amplifier sets the supply rejection.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use super::ota::PROCESS;
use super::primitives::{exp_law, rational_response};
use super::testbench::{Provenance, Testbench, Variable};
use crate::error::Result;
use crate::fom::{Direction, SpecItem, SpecSet};

/// Boltzmann constant over electron charge, V/K.
pub const K_OVER_Q: f64 = 1.380_649e-23 / 1.602_176_634e-19;

/// Temperature stencil for the curvature metric, °C.
pub const TEMPERATURES_C: [f64; 3] = [-20.0, 27.0, 85.0];

#[derive(Clone, Debug, Serialize)]
pub struct BandgapConstants {
    /// Offset of the reference before the branch contributions, V.
    pub v_offset: f64,
    /// Voltage contributed per unit resistor ratio per unit branch current, V.
    pub v_unit: f64,
    /// Unit branch current, µA.
    pub i_unit_ua: f64,
    /// Sign of each branch in the weighted sum.
    pub signs: [f64; 6],
    /// Subthreshold slope factor per branch.
    pub ideality: [f64; 6],
    /// Threshold at 27 °C per branch, V.
    pub vth27: [f64; 6],
    /// Threshold temperature coefficient, V/°C (thresholds fall with
    /// temperature).
    pub vth_tempco: f64,
    /// Strength of the geometry-dependent mirror mismatch.
    pub mismatch: f64,
    /// Floor added to the curvature metric so it stays strictly positive.
    pub tc_floor: f64,
    /// Frequency at which supply rejection is read, Hz.
    pub psrr_freq_hz: f64,
    pub process: super::ota::Process,
}

pub fn constants() -> BandgapConstants {
    BandgapConstants {
        v_offset: 1.2,
        v_unit: 0.05,
        i_unit_ua: 1.0,
        signs: [1.0, -1.0, 1.0, -1.0, 1.0, -1.0],
        ideality: [1.30, 1.35, 1.40, 1.45, 1.50, 1.55],
        vth27: [0.42, 0.44, 0.46, 0.43, 0.45, 0.47],
        vth_tempco: 1.5e-3,
        mismatch: 2e-3,
        tc_floor: 0.01,
        psrr_freq_hz: 1e3,
        process: PROCESS,
    }
}

/// Thresholds for curvature (ppm/°C²), current (µA) and PSRR (dB).
pub const BANDGAP_SPECS: [f64; 3] = [0.5, 40.0, 50.0];

pub fn variables() -> Vec<Variable> {
    let mut v = Vec::with_capacity(20);
    for k in 1..=6 {
        v.push(Variable::new(&format!("vg{k}"), 0.1, 0.4, "V"));
    }
    for k in 1..=6 {
        v.push(Variable::new(&format!("r{k}"), 0.5, 2.0, "ratio"));
    }
    v.push(Variable::new("ibias_amp", 1.0, 20.0, "uA"));
    v.push(Variable::new("c_comp", 0.5, 10.0, "pF"));
    v.push(Variable::new("w_amp", 1.0, 20.0, "um"));
    v.push(Variable::new("l_amp", 0.35, 4.0, "um"));
    v.push(Variable::new("w_mir", 1.0, 20.0, "um"));
    v.push(Variable::new("l_mir", 0.35, 4.0, "um"));
    v.push(Variable::new("w_out", 1.0, 20.0, "um"));
    v.push(Variable::new("l_out", 0.35, 4.0, "um"));
    v
}

/// Indices of the variables that only enter through the exponential branches.
pub const EXP_COUPLED: std::ops::Range<usize> = 0..6;
/// Indices of the device-geometry variables.
pub const GEOMETRY_ONLY: std::ops::Range<usize> = 14..20;

fn thermal_voltage(t_c: f64) -> f64 {
    K_OVER_Q * (t_c + 273.15)
}

/// Branch current of branch `k` at temperature `t_c`, in units of `i_unit`.
fn branch(c: &BandgapConstants, k: usize, vg: f64, t_c: f64) -> f64 {
    let vth = c.vth27[k] - c.vth_tempco * (t_c - 27.0);
    exp_law(vg - vth, c.ideality[k], thermal_voltage(t_c))
}

fn vref(c: &BandgapConstants, x: &[f64], mirror_ratio: f64, t_c: f64) -> f64 {
    let mis = 1.0 + c.mismatch * mirror_ratio.ln();
    let sum: f64 = (0..6)
        .map(|k| c.signs[k] * x[6 + k] * c.v_unit * branch(c, k, x[k], t_c))
        .sum();
    c.v_offset + mis * sum
}

/// `[tc_ppm, current_ua, psrr_db]`.
pub fn model(c: &BandgapConstants, x: &[f64]) -> Vec<f64> {
    let [ibias_ua, c_comp_pf, w_amp, l_amp, w_mir, l_mir, w_out, l_out] = x[12..20] else {
        unreachable!("bandgap has 20 variables")
    };
    let mirror_ratio = (w_out / l_out) / (w_mir / l_mir);

    // Nonuniform three-point second difference, relative to V(27 °C).
    let [t1, t2, t3] = TEMPERATURES_C;
    let [v1, v2, v3] = TEMPERATURES_C.map(|t| vref(c, x, mirror_ratio, t));
    let (h1, h2) = (t2 - t1, t3 - t2);
    let curvature = 2.0 * ((v3 - v2) / h2 - (v2 - v1) / h1) / (h1 + h2);
    let tc = 1e6 * curvature.abs() / v2.abs().max(1e-3) + c.tc_floor;

    let branches: f64 = (0..6).map(|k| x[6 + k] * branch(c, k, x[k], 27.0)).sum();
    let current = c.i_unit_ua * branches * (1.0 + mirror_ratio) + ibias_ua;

    let p = &c.process;
    let ibias = ibias_ua * 1e-6;
    let gm = (2.0 * p.kn * (w_amp / l_amp) * ibias).sqrt();
    let ro = l_amp / (p.lambda_um * ibias);
    let a_loop = gm * ro;
    let pole = gm / (2.0 * PI * a_loop * c_comp_pf * 1e-12);
    let psrr = rational_response(c.psrr_freq_hz, 1.0 + a_loop, &[pole], &[]).0;

    vec![tc, current, psrr.max(0.0)]
}

pub fn bandgap() -> Result<Testbench> {
    let c = constants();
    let [tc, current, psrr] = BANDGAP_SPECS;
    let specs = SpecSet::new(vec![
        SpecItem::target("tc_ppm", Direction::Minimize, tc)?,
        SpecItem::hard("current_ua", Direction::Minimize, current)?,
        SpecItem::hard("psrr_db", Direction::Maximize, psrr)?,
    ])?;
    let constants = serde_json::to_value(&c).expect("serializable constants");
    Testbench::new(
        "bandgap-analytic",
        "Reference whose temperature curvature is a signed sum of exponential branches: minimize curvature subject to current and supply rejection",
        variables(),
        specs,
        Provenance::Analytic,
        constants,
        Arc::new(move |x: &[f64]| model(&c, x)),
    )
}
