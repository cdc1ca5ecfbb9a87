//! Model parameters, Hamiltonians and the Lindblad generator of the
//! qubit + circuit + mechanics system.

use std::f64::consts::PI;

use crate::circuit::{bose_occupation, sideband_coupling};
use crate::error::{Error, Result};
use crate::hilbert::{
    destroy, embed, liouvillian, number, sigma_minus, sigma_x, sigma_z, Operator, Slot,
    SpaceLayout, Superoperator,
};

/// Model parameters. Frequencies and rates are angular (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub omega_m: f64,
    pub omega_c: f64,
    /// Qubit splitting Ω.
    pub qubit_freq: f64,
    pub drive_freq: f64,
    pub drive_amplitude: f64,
    pub g_mc: f64,
    pub g_cq: f64,
    pub g_mq: f64,
    pub gbar_cq: f64,
    pub gbar_mq: f64,
    pub gamma_m: f64,
    pub gamma_c: f64,
    pub gamma_down: f64,
    pub gamma_up: f64,
    pub gamma_phi: f64,
    pub nbar_m: f64,
    pub nbar_c: f64,
    /// Bath temperature in kelvin, when occupations came from one.
    pub temperature: Option<f64>,
    /// Transmon charging energy in joules.
    pub e_c: Option<f64>,
    /// Zero-point voltages in volts.
    pub v0_c: Option<f64>,
    pub v0_m: Option<f64>,
}

impl SystemParams {
    pub fn nominal() -> Self {
        let tp = 2.0 * PI;
        let omega = tp * 250e6;
        let drive = tp * 7.75e9;
        let amp = tp * 775e6;
        let nbar = bose_occupation(omega, 20e-3).expect("nominal occupation");
        Self {
            omega_m: omega,
            omega_c: omega,
            qubit_freq: tp * 8e9,
            drive_freq: drive,
            drive_amplitude: amp,
            g_mc: tp * 7e3,
            g_cq: tp * 20e6,
            g_mq: tp * 1e3,
            gbar_cq: sideband_coupling(tp * 20e6, amp, drive),
            gbar_mq: sideband_coupling(tp * 1e3, amp, drive),
            gamma_m: tp * 0.1,
            gamma_c: tp * 100e3,
            gamma_down: tp * 10e6,
            gamma_up: tp * 10e3,
            gamma_phi: tp * 10e3,
            nbar_m: nbar,
            nbar_c: nbar,
            temperature: Some(20e-3),
            e_c: None,
            v0_c: None,
            v0_m: None,
        }
    }

    /// Qubit detuning from the drive, `Ω - ω_d`.
    pub fn delta_d(&self) -> f64 {
        self.qubit_freq - self.drive_freq
    }

    /// Total qubit decoherence rate `γ↓ + γ↑ + 2γ_φ`.
    pub fn gamma_t(&self) -> f64 {
        self.gamma_down + self.gamma_up + 2.0 * self.gamma_phi
    }

    /// Recomputes the sideband couplings from the bare couplings and drive.
    pub fn refresh_sideband_couplings(&mut self) {
        self.gbar_cq = sideband_coupling(self.g_cq, self.drive_amplitude, self.drive_freq);
        self.gbar_mq = sideband_coupling(self.g_mq, self.drive_amplitude, self.drive_freq);
    }

    pub fn omega(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Circuit => self.omega_c,
            Mode::Mech => self.omega_m,
        }
    }

    pub fn gamma(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Circuit => self.gamma_c,
            Mode::Mech => self.gamma_m,
        }
    }

    pub fn gbar(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Circuit => self.gbar_cq,
            Mode::Mech => self.gbar_mq,
        }
    }

    pub fn nbar(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Circuit => self.nbar_c,
            Mode::Mech => self.nbar_m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega_m", self.omega_m),
            ("omega_c", self.omega_c),
            ("qubit_freq", self.qubit_freq),
            ("drive_freq", self.drive_freq),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("drive_amplitude", self.drive_amplitude),
            ("g_mc", self.g_mc),
            ("g_cq", self.g_cq),
            ("g_mq", self.g_mq),
            ("gbar_cq", self.gbar_cq),
            ("gbar_mq", self.gbar_mq),
            ("gamma_m", self.gamma_m),
            ("gamma_c", self.gamma_c),
            ("gamma_down", self.gamma_down),
            ("gamma_up", self.gamma_up),
            ("gamma_phi", self.gamma_phi),
            ("nbar_m", self.nbar_m),
            ("nbar_c", self.nbar_c),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.gamma_down + self.gamma_up <= 0.0 {
            return Err(Error::Parameter("qubit needs a non-zero relaxation rate".into()));
        }
        Ok(())
    }
}

/// The two oscillators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Circuit,
    Mech,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Circuit, Mode::Mech];

    pub fn other(self) -> Mode {
        match self {
            Mode::Circuit => Mode::Mech,
            Mode::Mech => Mode::Circuit,
        }
    }

    pub fn slot(self) -> Slot {
        match self {
            Mode::Circuit => Slot::Circuit,
            Mode::Mech => Slot::Mech,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Circuit => "c",
            Mode::Mech => "m",
        }
    }
}

/// Reference frame of the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    /// Everything rotating at the qubit detuning, counter-rotating qubit
    /// terms dropped. Conserves total excitation number.
    Sideband,
    /// Qubit in the drive frame, oscillators in the lab frame, full `q σ_x`
    /// coupling kept.
    Lab,
}

/// Ladder operators of one mode in a layout.
pub fn mode_destroy(mode: Mode, layout: &SpaceLayout) -> Result<Operator> {
    let n = layout.slot_dim(mode.slot())?;
    embed(&destroy(n)?, mode.slot(), layout)
}

pub fn mode_number(mode: Mode, layout: &SpaceLayout) -> Result<Operator> {
    let n = layout.slot_dim(mode.slot())?;
    embed(&number(n)?, mode.slot(), layout)
}

/// `g_mc (a_m† a_c + a_c† a_m)`.
pub fn beam_splitter(sp: &SystemParams, layout: &SpaceLayout) -> Result<Operator> {
    let a_c = mode_destroy(Mode::Circuit, layout)?;
    let a_m = mode_destroy(Mode::Mech, layout)?;
    Ok(a_m.adjoint().mul(&a_c).plus_adjoint().scale_re(sp.g_mc))
}

pub fn build_hamiltonian(sp: &SystemParams, layout: &SpaceLayout, frame: Frame) -> Result<Operator> {
    if !layout.has_qubit() {
        return Err(Error::Layout("the full model needs a qubit factor".into()));
    }
    let sm = embed(&sigma_minus(), Slot::Qubit, layout)?;
    let mut h = beam_splitter(sp, layout)?;
    for mode in Mode::ALL {
        let a = mode_destroy(mode, layout)?;
        let n = mode_number(mode, layout)?;
        match frame {
            Frame::Sideband => {
                h = h.add(&n.scale_re(sp.omega(mode) - sp.delta_d()));
                let exchange = a.mul(&sm.adjoint()).plus_adjoint();
                h = h.add(&exchange.scale_re(sp.gbar(mode)));
            }
            Frame::Lab => {
                h = h.add(&n.scale_re(sp.omega(mode)));
                let sx = embed(&sigma_x(), Slot::Qubit, layout)?;
                h = h.add(&a.plus_adjoint().mul(&sx).scale_re(sp.gbar(mode)));
            }
        }
    }
    if frame == Frame::Lab {
        let sz = embed(&sigma_z(), Slot::Qubit, layout)?;
        h = h.add(&sz.scale_re(sp.delta_d() / 2.0));
    }
    h.mark_hermitian(1e-9 * sp.omega_c.max(sp.qubit_freq))
}

/// Thermal oscillator damping plus qubit relaxation, excitation and
/// dephasing, as `(rate, collapse operator)` pairs.
pub fn build_dissipators(sp: &SystemParams, layout: &SpaceLayout) -> Result<Vec<(f64, Operator)>> {
    let mut out = Vec::new();
    for mode in Mode::ALL {
        let a = mode_destroy(mode, layout)?;
        out.push((sp.gamma(mode) * (sp.nbar(mode) + 1.0), a.clone()));
        out.push((sp.gamma(mode) * sp.nbar(mode), a.adjoint()));
    }
    if layout.has_qubit() {
        let sm = embed(&sigma_minus(), Slot::Qubit, layout)?;
        out.push((sp.gamma_down, sm.clone()));
        out.push((sp.gamma_up, sm.adjoint()));
        out.push((sp.gamma_phi / 2.0, embed(&sigma_z(), Slot::Qubit, layout)?));
    }
    Ok(out)
}

pub fn build_liouvillian(sp: &SystemParams, layout: &SpaceLayout, frame: Frame) -> Result<Superoperator> {
    sp.validate()?;
    let h = build_hamiltonian(sp, layout, frame)?;
    liouvillian(&h, &build_dissipators(sp, layout)?)
}

/// Ratios behind the resolved-sideband and adiabatic-elimination
/// assumptions. Both should be at least [`RegimeReport::THRESHOLD`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport {
    /// `min(ω_c, ω_m) / γ_t`.
    pub resolved_sideband: f64,
    /// `γ↓ / max(g_mc, ḡ_cq, ḡ_mq, γ_c, γ_m)`.
    pub adiabatic: f64,
}

impl RegimeReport {
    pub const THRESHOLD: f64 = 10.0;

    fn meets(x: f64) -> bool {
        x >= Self::THRESHOLD * (1.0 - 1e-12)
    }

    pub fn resolved_ok(&self) -> bool {
        Self::meets(self.resolved_sideband)
    }

    pub fn adiabatic_ok(&self) -> bool {
        Self::meets(self.adiabatic)
    }

    pub fn satisfied(&self) -> bool {
        self.resolved_ok() && self.adiabatic_ok()
    }
}

pub fn regime_report(sp: &SystemParams) -> RegimeReport {
    let slow = [sp.g_mc, sp.gbar_cq, sp.gbar_mq, sp.gamma_c, sp.gamma_m]
        .into_iter()
        .fold(0.0, f64::max);
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { f64::INFINITY };
    RegimeReport {
        resolved_sideband: ratio(sp.omega_c.min(sp.omega_m), sp.gamma_t()),
        adiabatic: ratio(sp.gamma_down, slow),
    }
}
