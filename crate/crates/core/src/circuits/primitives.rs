//! The device-law building blocks every testbench is composed from:
//! exponential (weak inversion), power law (strong inversion), single-real
//! pole/zero transfer functions, and smooth regime indicators.

/// Largest exponent [`exp_law`] will evaluate; larger arguments saturate.
pub const EXP_CLAMP: f64 = 40.0;

/// Default logistic steepness for [`regime_indicator`], per volt. Gives a
/// transition roughly 10 mV wide.
pub const DEFAULT_SHARPNESS: f64 = 200.0;

/// Frequency range searched for the unity-gain crossover, in hertz.
pub const CROSSOVER_RANGE: (f64, f64) = (1e-2, 1e12);

/// Subthreshold-style exponential `exp(v / (n·vt))`, saturating at
/// `exp(EXP_CLAMP)`.
pub fn exp_law(v: f64, n: f64, vt: f64) -> f64 {
    (v / (n * vt)).min(EXP_CLAMP).exp()
}

/// Square-law-style `(w/l)·max(vov, 0)^alpha`.
pub fn power_law(w: f64, l: f64, vov: f64, alpha: f64) -> f64 {
    (w / l) * vov.max(0.0).powf(alpha)
}

/// Magnitude (dB) and phase (degrees) of a DC gain followed by real poles and
/// zeros, at frequency `f`.
pub fn rational_response(f: f64, dc_gain: f64, poles: &[f64], zeros: &[f64]) -> (f64, f64) {
    let mut mag = 20.0 * dc_gain.log10();
    let mut phase = 0.0;
    for z in zeros {
        mag += 10.0 * (1.0 + (f / z).powi(2)).log10();
        phase += (f / z).atan();
    }
    for p in poles {
        mag -= 10.0 * (1.0 + (f / p).powi(2)).log10();
        phase -= (f / p).atan();
    }
    (mag, phase.to_degrees())
}

/// Result of a crossover search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossover {
    pub frequency: f64,
    /// 180° plus the phase at the crossover frequency.
    pub phase_margin: f64,
    /// The magnitude stayed above 0 dB over the whole search range; the
    /// frequency is the range's upper end.
    pub unbounded: bool,
}

/// Frequency at which the magnitude falls through 0 dB, by bisection in log
/// frequency. With no zeros the magnitude is monotone, so the root is unique.
pub fn unity_gain_crossover(dc_gain: f64, poles: &[f64], zeros: &[f64]) -> Crossover {
    let mag = |f: f64| rational_response(f, dc_gain, poles, zeros).0;
    let finish = |f: f64, unbounded: bool| Crossover {
        frequency: f,
        phase_margin: 180.0 + rational_response(f, dc_gain, poles, zeros).1,
        unbounded,
    };
    let (lo_f, hi_f) = CROSSOVER_RANGE;
    if mag(lo_f) <= 0.0 {
        return finish(lo_f, false);
    }
    if mag(hi_f) > 0.0 {
        return finish(hi_f, true);
    }
    let (mut lo, mut hi) = (lo_f.ln(), hi_f.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let m = mag(mid.exp());
        if m.abs() < 1e-9 {
            return finish(mid.exp(), false);
        }
        if m > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    finish((0.5 * (lo + hi)).exp(), false)
}

/// Logistic step `1 / (1 + exp(-sharpness·(v - vth)))`.
pub fn regime_indicator(v: f64, vth: f64, sharpness: f64) -> f64 {
    let t = -sharpness * (v - vth);
    if t > 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exp_law_examples() {
        assert_eq!(exp_law(0.0, 1.5, 0.026), 1.0);
        assert!((exp_law(1.5 * 0.026, 1.5, 0.026) - std::f64::consts::E).abs() < 1e-12);
        let want = (0.2f64 / (1.5 * 0.026)).exp();
        assert!((exp_law(0.2, 1.5, 0.026) - want).abs() < 1e-9);
        assert!((exp_law(0.2, 1.5, 0.026) - 168.714_026).abs() < 1e-5);
        assert_eq!(exp_law(100.0, 1.0, 0.026), EXP_CLAMP.exp());
    }

    #[test]
    fn power_law_examples() {
        assert_eq!(power_law(1e-6, 1e-6, -0.1, 2.0), 0.0);
        assert_eq!(power_law(2e-6, 2e-6, 1.0, 2.0), 1.0);
        assert!((power_law(10e-6, 1e-6, 0.3, 2.0) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn rational_response_examples() {
        let (m, p) = rational_response(1e-9, 1000.0, &[1e3], &[]);
        assert!((m - 60.0).abs() < 1e-9 && p.abs() < 1e-9);
        let (m, p) = rational_response(1e3, 1.0, &[1e3], &[]);
        assert!((m + 3.0103).abs() < 1e-4);
        assert!((p + 45.0).abs() < 1e-12);

        // Direct evaluation of |H| = A / sqrt((1+(f/p1)^2)(1+(f/p2)^2)).
        let (m, p) = rational_response(1e4, 1000.0, &[1e3, 1e6], &[]);
        let h = 1000.0 / ((1.0 + 100.0f64) * (1.0 + 1e-4f64)).sqrt();
        assert!((m - 20.0 * h.log10()).abs() < 1e-12);
        let ph = -(10f64.atan() + 0.01f64.atan()).to_degrees();
        assert!((p - ph).abs() < 1e-12);
    }

    #[test]
    fn single_pole_crossover_matches_closed_form() {
        let c = unity_gain_crossover(1000.0, &[1e3], &[]);
        let want = 1e3 * (1000.0f64 * 1000.0 - 1.0).sqrt();
        assert!(!c.unbounded);
        assert!((c.frequency - want).abs() / want < 1e-9, "{}", c.frequency);
        assert!((c.frequency - 999_999.5).abs() < 0.01);
        // Phase margin is 180° − atan(f/p) at the crossover.
        let pm = 180.0 - (c.frequency / 1e3).atan().to_degrees();
        assert!((c.phase_margin - pm).abs() < 1e-9);
        assert!((c.phase_margin - 90.0).abs() < 0.1);
    }

    #[test]
    fn crossover_boundaries() {
        let c = unity_gain_crossover(1.0, &[1e3], &[]);
        assert_eq!(c.frequency, CROSSOVER_RANGE.0);
        let c = unity_gain_crossover(1e3, &[1e11], &[]);
        assert!(c.unbounded);
        assert_eq!(c.frequency, CROSSOVER_RANGE.1);
    }

    #[test]
    fn two_pole_crossover_matches_sweep() {
        let (a, poles) = (3e3, [2e2, 5e5]);
        let c = unity_gain_crossover(a, &poles, &[]);
        let mut best = (f64::INFINITY, 0.0);
        let n = 200_000;
        for i in 0..=n {
            let f = 10f64.powf(-2.0 + 14.0 * i as f64 / n as f64);
            let m = rational_response(f, a, &poles, &[]).0.abs();
            if m < best.0 {
                best = (m, f);
            }
        }
        assert!((c.frequency - best.1).abs() / best.1 < 1e-3);
    }

    #[test]
    fn regime_indicator_examples() {
        assert_eq!(regime_indicator(0.4, 0.4, 200.0), 0.5);
        assert!(1.0 - regime_indicator(0.5, 0.4, 200.0) < 1e-8);
        let want = 1.0 / (1.0 + 2f64.exp());
        assert!((regime_indicator(0.39, 0.4, 200.0) - want).abs() < 1e-12);
        assert!((want - 0.1192).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn magnitude_is_nonincreasing_without_zeros(
            a in 1.0f64..1e5,
            p1 in 1.0f64..1e8,
            p2 in 1.0f64..1e8,
            f in 1e-2f64..1e10,
            df in 1.0f64..100.0,
        ) {
            let m1 = rational_response(f, a, &[p1, p2], &[]).0;
            let m2 = rational_response(f * df, a, &[p1, p2], &[]).0;
            prop_assert!(m2 <= m1 + 1e-12);
        }

        #[test]
        fn regime_indicator_is_monotone_and_bounded(
            v in -2.0f64..2.0, dv in 0.0f64..1.0, vth in -1.0f64..1.0, s in 1.0f64..1000.0,
        ) {
            let a = regime_indicator(v, vth, s);
            let b = regime_indicator(v + dv, vth, s);
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b >= a);
        }
    }
}
