//! Lumped-element description of the quartz / LC / transmon circuit and the
//! reduction to model parameters.

use std::f64::consts::PI;

use log::warn;

use crate::error::{Error, Result};
use crate::model::SystemParams;

/// CODATA 2018 exact and recommended values, SI units.
pub mod constants {
    pub const HBAR: f64 = 1.054_571_817e-34;
    pub const PLANCK: f64 = 6.626_070_15e-34;
    pub const BOLTZMANN: f64 = 1.380_649e-23;
    pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
    /// Superconducting flux quantum `h / 2e`.
    pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * ELEMENTARY_CHARGE);
}

use constants::*;

/// Loss and decoherence rates that the circuit description does not fix.
/// All in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dissipation {
    pub gamma_m: f64,
    pub gamma_c: f64,
    pub gamma_down: f64,
    pub gamma_up: f64,
    pub gamma_phi: f64,
}

impl Dissipation {
    pub fn nominal() -> Self {
        let tp = 2.0 * PI;
        Self {
            gamma_m: tp * 0.1,
            gamma_c: tp * 100e3,
            gamma_down: tp * 10e6,
            gamma_up: tp * 10e3,
            gamma_phi: tp * 10e3,
        }
    }
}

/// Circuit elements (SI) plus drive and bath settings.
///
/// `l_m` defaults to the value placing the quartz mode at `omega_m`; `l_c`
/// defaults to the value tuning the LC mode into resonance with it.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitParams {
    pub c_m: f64,
    pub l_m: Option<f64>,
    pub omega_m: f64,
    pub c_c: f64,
    pub l_c: Option<f64>,
    pub c_ct: f64,
    pub c_t: f64,
    pub e_j_max: f64,
    pub flux_ratio: f64,
    pub drive_freq: f64,
    pub drive_amplitude: f64,
    pub temperature: f64,
    pub dissipation: Dissipation,
}

impl CircuitParams {
    /// Quartz with `C_m = 10.7 zF` at 250 MHz, `C_t = 56 fF`, `C_ct = 16 fF`,
    /// the stray capacitance chosen for a 7 kHz electromechanical coupling and
    /// the Josephson energy chosen for an 8 GHz transmon at zero flux.
    pub fn nominal() -> Self {
        let tp = 2.0 * PI;
        let c_m = 10.7e-21;
        let c_ct = 16e-15;
        let c_t = 56e-15;
        let omega = tp * 250e6;
        let c_c = stray_capacitance_for_coupling(c_m, c_ct, c_t, omega, tp * 7e3)
            .expect("nominal coupling is reachable");
        let mut cp = Self {
            c_m,
            l_m: None,
            omega_m: omega,
            c_c,
            l_c: None,
            c_ct,
            c_t,
            e_j_max: 0.0,
            flux_ratio: 0.0,
            drive_freq: tp * 7.75e9,
            drive_amplitude: tp * 775e6,
            temperature: 20e-3,
            dissipation: Dissipation::nominal(),
        };
        let caps = effective_capacitances(&cp).expect("nominal capacitances are valid");
        let e_c = charging_energy(caps.c_tilde_t);
        cp.e_j_max = josephson_for_splitting(e_c, tp * 8e9);
        cp
    }
}

/// Loaded capacitances and coupling prefactors of the three-node circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveCapacitances {
    pub c_pi: f64,
    pub c_pi_m: f64,
    pub c_tilde_c: f64,
    pub c_tilde_m: f64,
    pub c_tilde_t: f64,
    pub g_tilde_mc: f64,
    pub beta_tilde_t: f64,
    pub beta_ct: f64,
    pub beta_mt: f64,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")))
    }
}

pub fn effective_capacitances(cp: &CircuitParams) -> Result<EffectiveCapacitances> {
    let c_m = positive("C_m", cp.c_m)?;
    let c_c = positive("C_c", cp.c_c)?;
    let c_ct = positive("C_ct", cp.c_ct)?;
    let c_t = positive("C_t", cp.c_t)?;
    Ok(capacitances_unchecked(c_m, c_c, c_ct, c_t))
}

fn capacitances_unchecked(c_m: f64, c_c: f64, c_ct: f64, c_t: f64) -> EffectiveCapacitances {
    let c_pi = c_c * c_ct + c_c * c_t + c_ct * c_t;
    let c_pi_m = c_m * (c_c + c_ct);
    let c_tilde_c = c_pi / (c_ct + c_t);
    let c_tilde_m = c_m * c_pi / (c_pi + c_pi_m);
    let c_tilde_t = c_pi / (c_c + c_ct);
    let beta_tilde_t = c_ct / c_pi;
    EffectiveCapacitances {
        c_pi,
        c_pi_m,
        c_tilde_c,
        c_tilde_m,
        c_tilde_t,
        g_tilde_mc: (c_ct + c_t) / c_pi,
        beta_tilde_t,
        beta_ct: c_tilde_c * beta_tilde_t,
        beta_mt: c_tilde_m * beta_tilde_t,
    }
}

/// Inductance placing a mode with capacitance `c` at angular frequency `omega`.
pub fn inductance_for(omega: f64, c: f64) -> f64 {
    1.0 / (omega * omega * c)
}

pub fn mode_frequency(l: f64, c: f64) -> f64 {
    1.0 / (l * c).sqrt()
}

/// `sqrt(ħω / 2C)`.
pub fn zero_point_voltage(omega: f64, c_tilde: f64) -> f64 {
    (HBAR * omega / (2.0 * c_tilde)).sqrt()
}

/// `e² / 2C`, in joules.
pub fn charging_energy(c_sigma: f64) -> f64 {
    ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (2.0 * c_sigma)
}

/// Flux-tuned Josephson energy `E_J,max |cos(π Φ/Φ₀)|`.
pub fn josephson_energy(e_j_max: f64, flux_ratio: f64) -> f64 {
    e_j_max * (PI * flux_ratio).cos().abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmonSplitting {
    /// Angular level splitting.
    pub omega: f64,
    pub ej_over_ec: f64,
    /// False when `E_J/E_C < 1`, outside the transmon regime.
    pub transmon_regime: bool,
}

/// `ħΩ = sqrt(8 E_C E_J) - E_C`.
pub fn transmon_splitting(e_c: f64, e_j: f64) -> Result<TransmonSplitting> {
    positive("E_C", e_c)?;
    positive("E_J", e_j)?;
    let ratio = e_j / e_c;
    let hbar_omega = (8.0 * e_c * e_j).sqrt() - e_c;
    if hbar_omega <= 0.0 {
        return Err(Error::Parameter(format!(
            "E_J/E_C = {ratio:.3} gives a non-positive splitting"
        )));
    }
    let transmon_regime = ratio >= 1.0;
    if !transmon_regime {
        warn!("E_J/E_C = {ratio:.3} is below 1; the transmon splitting formula is not reliable");
    }
    Ok(TransmonSplitting {
        omega: hbar_omega / HBAR,
        ej_over_ec: ratio,
        transmon_regime,
    })
}

/// Inverse of [`transmon_splitting`]: the `E_J` giving splitting `omega`.
pub fn josephson_for_splitting(e_c: f64, omega: f64) -> f64 {
    let x = HBAR * omega + e_c;
    x * x / (8.0 * e_c)
}

/// Qubit coupling `g = e V₀ β (E_J / 2E_C)^{1/4} / ħ`, in rad/s.
pub fn qubit_coupling(v0: f64, beta: f64, e_j: f64, e_c: f64) -> f64 {
    ELEMENTARY_CHARGE * v0 * beta * (e_j / (2.0 * e_c)).powf(0.25) / HBAR
}

/// Electromechanical coupling `g̃_mc / sqrt(4 ω_m L_m ω_c L_c)`, in rad/s.
pub fn electromechanical_coupling(g_tilde_mc: f64, omega_m: f64, l_m: f64, omega_c: f64, l_c: f64) -> f64 {
    g_tilde_mc / (4.0 * omega_m * l_m * omega_c * l_c).sqrt()
}

/// Stray capacitance `C_c` for which resonant modes at `omega` have
/// electromechanical coupling `g_mc`.
pub fn stray_capacitance_for_coupling(c_m: f64, c_ct: f64, c_t: f64, omega: f64, g_mc: f64) -> Result<f64> {
    let coupling = |c_c: f64| {
        let k = capacitances_unchecked(c_m, c_c, c_ct, c_t);
        let l_m = inductance_for(omega, k.c_tilde_m);
        let l_c = inductance_for(omega, k.c_tilde_c);
        electromechanical_coupling(k.g_tilde_mc, omega, l_m, omega, l_c)
    };
    // The coupling decreases monotonically with C_c.
    let (mut lo, mut hi) = (1e-18_f64, 1e-6_f64);
    if !(coupling(hi) < g_mc && g_mc < coupling(lo)) {
        return Err(Error::Parameter(format!("coupling {g_mc} rad/s is out of reach")));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if coupling(mid) > g_mc {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Bessel function of the first kind, order one.
///
/// Power series for `|x| <= 8`, where it is accurate to about 1e-13
/// relative; trapezoidal quadrature of the integral representation beyond.
pub fn bessel_j1(x: f64) -> f64 {
    if x.abs() <= 8.0 {
        let h = x / 2.0;
        let h2 = h * h;
        let mut term = h;
        let mut sum = h;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= -h2 / (k * (k + 1.0));
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() || k > 200.0 {
                break;
            }
        }
        sum
    } else {
        let n = 64 + 2 * x.abs().ceil() as usize;
        let step = PI / n as f64;
        let mut sum = 0.0;
        for k in 0..=n {
            let tau = k as f64 * step;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            sum += w * (tau - x * tau.sin()).cos();
        }
        sum * step / PI
    }
}

/// Sideband coupling `g J₁(ℰ_d/ω_d)`.
pub fn sideband_coupling(g: f64, drive_amplitude: f64, drive_freq: f64) -> f64 {
    g * bessel_j1(drive_amplitude / drive_freq)
}

/// Bose-Einstein occupation at angular frequency `omega`.
pub fn bose_occupation(omega: f64, temperature: f64) -> Result<f64> {
    positive("mode frequency", omega)?;
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(Error::Parameter(format!("temperature must be non-negative, got {temperature}")));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (HBAR * omega / (BOLTZMANN * temperature)).exp_m1())
}

/// Everything derived from the circuit, kept for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitDerivation {
    pub capacitances: EffectiveCapacitances,
    pub l_m: f64,
    pub l_c: f64,
    pub e_c: f64,
    pub e_j: f64,
    pub splitting: TransmonSplitting,
    pub params: SystemParams,
}

/// Reduces circuit elements to model parameters. The transmon charging energy
/// uses `C̃_t` as the total island capacitance.
pub fn derive(cp: &CircuitParams) -> Result<CircuitDerivation> {
    let caps = effective_capacitances(cp)?;
    let l_m = match cp.l_m {
        Some(l) => positive("L_m", l)?,
        None => inductance_for(positive("omega_m", cp.omega_m)?, caps.c_tilde_m),
    };
    let omega_m = mode_frequency(l_m, caps.c_tilde_m);
    let l_c = match cp.l_c {
        Some(l) => positive("L_c", l)?,
        None => inductance_for(omega_m, caps.c_tilde_c),
    };
    let omega_c = mode_frequency(l_c, caps.c_tilde_c);
    let e_c = charging_energy(caps.c_tilde_t);
    let e_j = josephson_energy(positive("E_J,max", cp.e_j_max)?, cp.flux_ratio);
    let splitting = transmon_splitting(e_c, e_j)?;
    let v0_c = zero_point_voltage(omega_c, caps.c_tilde_c);
    let v0_m = zero_point_voltage(omega_m, caps.c_tilde_m);
    let g_cq = qubit_coupling(v0_c, caps.beta_ct, e_j, e_c);
    let g_mq = qubit_coupling(v0_m, caps.beta_mt, e_j, e_c);
    let g_mc = electromechanical_coupling(caps.g_tilde_mc, omega_m, l_m, omega_c, l_c);
    let drive_freq = positive("drive frequency", cp.drive_freq)?;
    if !(cp.drive_amplitude >= 0.0) {
        return Err(Error::Parameter("drive amplitude must be non-negative".into()));
    }
    let d = cp.dissipation;
    let params = SystemParams {
        omega_m,
        omega_c,
        qubit_freq: splitting.omega,
        drive_freq,
        drive_amplitude: cp.drive_amplitude,
        g_mc,
        g_cq,
        g_mq,
        gbar_cq: sideband_coupling(g_cq, cp.drive_amplitude, drive_freq),
        gbar_mq: sideband_coupling(g_mq, cp.drive_amplitude, drive_freq),
        gamma_m: d.gamma_m,
        gamma_c: d.gamma_c,
        gamma_down: d.gamma_down,
        gamma_up: d.gamma_up,
        gamma_phi: d.gamma_phi,
        nbar_m: bose_occupation(omega_m, cp.temperature)?,
        nbar_c: bose_occupation(omega_c, cp.temperature)?,
        temperature: Some(cp.temperature),
        e_c: Some(e_c),
        v0_c: Some(v0_c),
        v0_m: Some(v0_m),
    };
    params.validate()?;
    Ok(CircuitDerivation {
        capacitances: caps,
        l_m,
        l_c,
        e_c,
        e_j,
        splitting,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const TP: f64 = 2.0 * PI;

    /// Independent oracle: J₁ by Simpson quadrature of the integral form.
    fn j1_simpson(x: f64) -> f64 {
        let n = 2000;
        let h = PI / n as f64;
        let f = |t: f64| (t - x * t.sin()).cos();
        let mut s = f(0.0) + f(PI);
        for k in 1..n {
            s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0 / PI
    }

    #[test]
    fn j1_matches_quadrature() {
        for &x in &[1e-6, 0.01, 0.1, 0.5, 1.0, 2.0, 3.8317, 5.0, 7.9, 9.0, 15.0] {
            assert_relative_eq!(bessel_j1(x), j1_simpson(x), max_relative = 1e-10, epsilon = 1e-14);
        }
    }

    #[test]
    fn j1_small_argument_value() {
        // J₁(0.1) = 0.1/2 - 0.1³/16 + 0.1⁵/384 - ...
        let series = 0.05 - 0.001 / 16.0 + 1e-5 / 384.0 - 1e-7 / 18432.0;
        assert_relative_eq!(bessel_j1(0.1), series, max_relative = 1e-12);
    }

    #[test]
    fn nominal_sideband_couplings() {
        let gbar_cq = sideband_coupling(TP * 20e6, TP * 775e6, TP * 7.75e9) / TP;
        let gbar_mq = sideband_coupling(TP * 1e3, TP * 775e6, TP * 7.75e9) / TP;
        assert!((0.998e6..=1.002e6).contains(&gbar_cq), "{gbar_cq}");
        assert!((49.9..=50.1).contains(&gbar_mq), "{gbar_mq}");
    }

    #[test]
    fn bose_occupation_nominal() {
        let n = bose_occupation(TP * 250e6, 20e-3).unwrap();
        // Frozen from ħω/k_BT = 0.5997878...
        assert_relative_eq!(n, 1.216_624_334_6, max_relative = 1e-9);
        assert_eq!(bose_occupation(TP * 250e6, 0.0).unwrap(), 0.0);
        assert!(bose_occupation(-1.0, 0.02).is_err());
    }

    #[test]
    fn transmon_inverse_round_trip() {
        let e_c = PLANCK * 300e6;
        let e_j = josephson_for_splitting(e_c, TP * 8e9);
        let s = transmon_splitting(e_c, e_j).unwrap();
        assert_relative_eq!(s.omega, TP * 8e9, max_relative = 1e-12);
        assert!(s.transmon_regime);
        let low = transmon_splitting(e_c, 0.6 * e_c).unwrap();
        assert!(!low.transmon_regime);
        assert!(transmon_splitting(e_c, 0.01 * e_c).is_err());
    }

    #[test]
    fn flux_tuning_is_periodic() {
        assert_relative_eq!(josephson_energy(2.0, 0.0), 2.0);
        assert_relative_eq!(josephson_energy(2.0, 1.0), 2.0, max_relative = 1e-12);
        assert!(josephson_energy(2.0, 0.5) < 1e-15);
    }

    #[test]
    fn capacitance_algebra() {
        let cp = CircuitParams::nominal();
        let k = effective_capacitances(&cp).unwrap();
        assert_relative_eq!(k.g_tilde_mc * k.c_tilde_c, 1.0, max_relative = 1e-14);
        assert_relative_eq!(k.beta_ct, cp.c_ct / (cp.c_ct + cp.c_t), max_relative = 1e-14);
        assert!(k.c_tilde_m < cp.c_m);
        let mut bad = cp.clone();
        bad.c_t = -1.0;
        assert!(effective_capacitances(&bad).is_err());
    }

    #[test]
    fn nominal_circuit_reproduces_target_couplings() {
        let d = derive(&CircuitParams::nominal()).unwrap();
        let p = &d.params;
        assert_relative_eq!(p.omega_m / TP, 250e6, max_relative = 1e-12);
        assert_relative_eq!(p.omega_c / TP, 250e6, max_relative = 1e-12);
        assert_relative_eq!(p.g_mc / TP, 7e3, max_relative = 1e-9);
        assert_relative_eq!(p.qubit_freq / TP, 8e9, max_relative = 1e-12);
        let g_cq = p.g_cq / TP;
        let g_mq = p.g_mq / TP;
        assert!(g_cq > 10e6 && g_cq < 40e6, "g_cq = {g_cq}");
        assert!(g_mq > 0.5e3 && g_mq < 2e3, "g_mq = {g_mq}");
        assert!(d.splitting.ej_over_ec > 50.0);
    }

    proptest! {
        #[test]
        fn splitting_inverse_holds(ec_mhz in 50.0f64..800.0, f_ghz in 3.0f64..12.0) {
            let e_c = PLANCK * ec_mhz * 1e6;
            let e_j = josephson_for_splitting(e_c, TP * f_ghz * 1e9);
            let s = transmon_splitting(e_c, e_j).unwrap();
            prop_assert!((s.omega / (TP * f_ghz * 1e9) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn occupation_is_positive_and_decreasing(f in 1e6f64..1e10, t in 1e-3f64..1.0) {
            let a = bose_occupation(TP * f, t).unwrap();
            let b = bose_occupation(TP * f * 1.01, t).unwrap();
            prop_assert!(a > 0.0 && b < a);
        }

        #[test]
        fn stray_capacitance_inverse(g_khz in 1.0f64..50.0) {
            let omega = TP * 250e6;
            let c_c = stray_capacitance_for_coupling(10.7e-21, 16e-15, 56e-15, omega, TP * g_khz * 1e3).unwrap();
            let mut cp = CircuitParams::nominal();
            cp.c_c = c_c;
            let d = derive(&cp).unwrap();
            prop_assert!((d.params.g_mc / (TP * g_khz * 1e3) - 1.0).abs() < 1e-9);
        }
    }
}
