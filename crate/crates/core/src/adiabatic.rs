//! Qubit-induced damping and frequency shifts once the qubit is eliminated,
//! the resulting steady occupations and the reduced oscillator-only master
//! equations.

use log::warn;

use crate::error::{Error, Result};
use crate::hilbert::{liouvillian, Operator, SpaceLayout, Superoperator};
use crate::linalg::C64;
use crate::model::{beam_splitter, build_dissipators, mode_destroy, mode_number, regime_report, Mode, SystemParams};

/// Driven-qubit response `G(ω)`.
pub fn qubit_response(omega: f64, sp: &SystemParams) -> C64 {
    let half = sp.gamma_t() / 2.0;
    let dd = sp.delta_d();
    let up = sp.gamma_up / C64::new(half, -(omega + dd));
    let down = sp.gamma_down / C64::new(half, -(omega - dd));
    (up + down) / (sp.gamma_down + sp.gamma_up)
}

/// Qubit-induced cooling rate, heating rate and frequency shift of one mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InducedRates {
    pub gamma_minus: f64,
    pub gamma_plus: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdiabaticRates {
    pub circuit: InducedRates,
    pub mech: InducedRates,
}

impl AdiabaticRates {
    pub fn mode(&self, mode: Mode) -> &InducedRates {
        match mode {
            Mode::Circuit => &self.circuit,
            Mode::Mech => &self.mech,
        }
    }

    /// `γ_p + γ⁻_p - γ⁺_p`.
    pub fn gamma_eff(&self, sp: &SystemParams, mode: Mode) -> f64 {
        let r = self.mode(mode);
        sp.gamma(mode) + r.gamma_minus - r.gamma_plus
    }
}

fn rates_from_response(sp: &SystemParams, mode: Mode) -> InducedRates {
    let g2 = sp.gbar(mode).powi(2);
    let w = sp.omega(mode);
    let plus = qubit_response(w, sp);
    let minus = qubit_response(-w, sp);
    InducedRates {
        gamma_minus: 2.0 * g2 * plus.re,
        gamma_plus: 2.0 * g2 * minus.re,
        shift: g2 * (plus.im - minus.im),
    }
}

/// Induced rates from the qubit response function. Logs a warning when the
/// regime report flags the elimination as unreliable.
pub fn induced_rates(sp: &SystemParams) -> Result<AdiabaticRates> {
    sp.validate()?;
    let report = regime_report(sp);
    if !report.satisfied() {
        warn!(
            "adiabatic elimination outside its regime: resolved-sideband ratio {:.3}, adiabatic ratio {:.3}",
            report.resolved_sideband, report.adiabatic
        );
    }
    Ok(AdiabaticRates {
        circuit: rates_from_response(sp, Mode::Circuit),
        mech: rates_from_response(sp, Mode::Mech),
    })
}

/// The same rates through their explicit closed forms, valid for
/// `δ_d = ω_p`.
pub fn induced_rates_closed_form(sp: &SystemParams) -> AdiabaticRates {
    let gt = sp.gamma_t();
    let sum = sp.gamma_down + sp.gamma_up;
    let one = |mode: Mode| {
        let g2 = sp.gbar(mode).powi(2);
        let w = sp.omega(mode);
        let lorentz = gt * gt / (gt * gt + 16.0 * w * w);
        InducedRates {
            gamma_minus: 4.0 * g2 / gt * (sp.gamma_down / sum + sp.gamma_up / sum * lorentz),
            gamma_plus: 4.0 * g2 / gt * (sp.gamma_up / sum + sp.gamma_down / sum * lorentz),
            shift: 2.0 * g2 * 4.0 * w / (gt * gt + 16.0 * w * w),
        }
    };
    AdiabaticRates {
        circuit: one(Mode::Circuit),
        mech: one(Mode::Mech),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occupations {
    pub n_c: f64,
    pub n_m: f64,
}

impl Occupations {
    pub fn mode(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Circuit => self.n_c,
            Mode::Mech => self.n_m,
        }
    }
}

/// Steady occupations in the limits `γ⁻_ce, γ_c ≫ γ_m, γ⁺_ce`. With no
/// electromechanical coupling each mode relaxes independently to
/// `(γ⁺ + γ n̄) / (γ⁻ - γ⁺ + γ)`.
pub fn steady_occupations(sp: &SystemParams, rates: &AdiabaticRates) -> Occupations {
    if sp.g_mc == 0.0 {
        let uncoupled = |mode: Mode| {
            let r = rates.mode(mode);
            let g = sp.gamma(mode);
            (r.gamma_plus + g * sp.nbar(mode)) / (r.gamma_minus - r.gamma_plus + g)
        };
        return Occupations {
            n_c: uncoupled(Mode::Circuit),
            n_m: uncoupled(Mode::Mech),
        };
    }
    let n_c = sp.nbar_c * sp.gamma_c / (sp.gamma_c + rates.circuit.gamma_minus);
    let a = (sp.gamma_m + rates.mech.gamma_minus) * (sp.gamma_c + rates.circuit.gamma_minus);
    let g4 = 4.0 * sp.g_mc * sp.g_mc;
    let n_m = n_c * g4 / (g4 + a) + sp.nbar_m * a / (a + g4);
    Occupations { n_c, n_m }
}

/// Exact steady occupations of the reduced linear model without cross terms:
/// second moments of two damped modes exchanging quanta at rate `g_mc`.
/// The modes are detuned by `ω_m - ω_c`, plus `δ_m - δ_c` when
/// `include_shifts`.
pub fn linear_moment_occupations(sp: &SystemParams, rates: &AdiabaticRates, include_shifts: bool) -> Occupations {
    let kappa = |mode: Mode| rates.gamma_eff(sp, mode);
    let drive = |mode: Mode| sp.gamma(mode) * sp.nbar(mode) + rates.mode(mode).gamma_plus;
    let (kc, km) = (kappa(Mode::Circuit), kappa(Mode::Mech));
    let (dc, dm) = (drive(Mode::Circuit), drive(Mode::Mech));
    let mean = (kc + km) / 2.0;
    let mut detuning = sp.omega_m - sp.omega_c;
    if include_shifts {
        detuning += rates.mech.shift - rates.circuit.shift;
    }
    let exchange = 2.0 * sp.g_mc * sp.g_mc * mean / (mean * mean + detuning * detuning);
    let det = kc * km + exchange * (kc + km);
    Occupations {
        n_c: (dc * (km + exchange) + exchange * dm) / det,
        n_m: (dm * (kc + exchange) + exchange * dc) / det,
    }
}

/// The two sufficient conditions for mechanical cooling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoolingCriteria {
    /// `γ⁻_ce / γ_c`; the circuit is cooled when this exceeds 1.
    pub circuit_margin: f64,
    /// `4 g_mc² / [(γ_m + γ⁻_me)(γ_c + γ⁻_ce)]`; transfer wins above 1.
    pub transfer_margin: f64,
}

impl CoolingCriteria {
    pub fn circuit_cooled(&self) -> bool {
        self.circuit_margin > 1.0
    }

    pub fn transfer_dominates(&self) -> bool {
        self.transfer_margin > 1.0
    }
}

pub fn cooling_criteria(sp: &SystemParams, rates: &AdiabaticRates) -> CoolingCriteria {
    let a = (sp.gamma_m + rates.mech.gamma_minus) * (sp.gamma_c + rates.circuit.gamma_minus);
    CoolingCriteria {
        circuit_margin: rates.circuit.gamma_minus / sp.gamma_c,
        transfer_margin: 4.0 * sp.g_mc * sp.g_mc / a,
    }
}

/// Which reduced oscillator master equation to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReducedVariant {
    /// Rates from the full qubit response.
    Interaction,
    /// Leading-order Neumann-series form with rates `4ḡ²/γ_t`.
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReducedOptions {
    pub variant: ReducedVariant,
    /// Qubit-mediated terms coupling the two modes.
    pub cross_terms: bool,
    /// Induced frequency shifts (interaction variant only).
    pub shifts: bool,
}

impl Default for ReducedOptions {
    fn default() -> Self {
        Self {
            variant: ReducedVariant::Interaction,
            cross_terms: true,
            shifts: true,
        }
    }
}

/// `ρ ↦ [X ρ, Y]`.
fn left_commutator(x: &Operator, y: &Operator) -> Superoperator {
    Superoperator::sandwich(x, y).sub(&Superoperator::left(&y.mul(x)))
}

/// `ρ ↦ [Y, ρ X]`.
fn right_commutator(y: &Operator, x: &Operator) -> Superoperator {
    Superoperator::sandwich(y, x).sub(&Superoperator::right(&x.mul(y)))
}

/// Oscillator-only generator after eliminating the qubit. `layout` must be
/// an oscillator-only layout.
pub fn reduced_liouvillian(
    sp: &SystemParams,
    rates: &AdiabaticRates,
    layout: &SpaceLayout,
    opts: ReducedOptions,
) -> Result<Superoperator> {
    if layout.has_qubit() {
        return Err(Error::Layout("reduced models live on an oscillator-only layout".into()));
    }
    sp.validate()?;
    let gt = sp.gamma_t();
    // Common frame rotating at ω_c.
    let mut h = beam_splitter(sp, layout)?
        .add(&mode_number(Mode::Mech, layout)?.scale_re(sp.omega_m - sp.omega_c));
    if opts.shifts && opts.variant == ReducedVariant::Interaction {
        for mode in Mode::ALL {
            h = h.add(&mode_number(mode, layout)?.scale_re(rates.mode(mode).shift));
        }
    }
    let mut channels = build_dissipators(sp, layout)?;
    for mode in Mode::ALL {
        let a = mode_destroy(mode, layout)?;
        match opts.variant {
            ReducedVariant::Interaction => {
                let r = rates.mode(mode);
                channels.push((r.gamma_minus, a.clone()));
                channels.push((r.gamma_plus, a.adjoint()));
            }
            ReducedVariant::Neumann => {
                channels.push((4.0 * sp.gbar(mode).powi(2) / gt, a.clone()));
            }
        }
    }
    let mut l = liouvillian(&h, &channels)?;
    if opts.cross_terms {
        let gg = sp.gbar_cq * sp.gbar_mq;
        for mode in Mode::ALL {
            let a = mode_destroy(mode, layout)?;
            let b = mode_destroy(mode.other(), layout)?;
            let term = match opts.variant {
                ReducedVariant::Interaction => {
                    let w = sp.omega(mode);
                    let gp = qubit_response(w, sp) * gg;
                    let gm = qubit_response(-w, sp) * gg;
                    // G(+ω)[a_p̄ ρ, a_p†] + G(-ω)[a_p̄† ρ, a_p] + h.c.
                    left_commutator(&b, &a.adjoint())
                        .scale(gp)
                        .add(&right_commutator(&a, &b.adjoint()).scale(gp.conj()))
                        .add(&left_commutator(&b.adjoint(), &a).scale(gm))
                        .add(&right_commutator(&a.adjoint(), &b).scale(gm.conj()))
                }
                ReducedVariant::Neumann => {
                    // (2ḡ_pq ḡ_p̄q/γ_t)([a_p, ρ a_p̄†] + h.c.)
                    let k = C64::new(2.0 * gg / gt, 0.0);
                    right_commutator(&a, &b.adjoint())
                        .add(&left_commutator(&b, &a.adjoint()))
                        .scale(k)
                }
            };
            l = l.add(&term);
        }
    }
    Ok(l)
}
