//! Qubit fluorescence spectrum: closed-form motional-sideband decomposition
//! and the numerically exact regression-theorem resolvent.
//!
//! Frequencies are angular and measured from the drive. Spectral densities
//! are one-sided, `S[ω] = Re ∫₀^∞ e^{-iωt} ⟨σ₊(t) σ₋(0)⟩ dt`.

use faer::Mat;
use log::warn;
use rayon::prelude::*;

use crate::adiabatic::{induced_rates, steady_occupations, AdiabaticRates, Occupations};
use crate::error::{Error, Result};
use crate::hilbert::{embed, sigma_minus, sigma_plus, vectorize, Slot, SpaceLayout, Superoperator};
use crate::linalg::{components, HessenbergResolvent, CsrMatrix, SparseLu, C64, I, ONE, ZERO};
use crate::model::{build_liouvillian, Frame, Mode, SystemParams};
use crate::steady::{solve_steady, SteadyOptions, SteadyState};

/// Sample points in rad/s relative to the drive.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    points: Vec<f64>,
}

impl FrequencyGrid {
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Parameter("a frequency grid needs at least 2 points".into()));
        }
        if points.iter().any(|w| !w.is_finite()) || points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("grid points must be finite and strictly increasing".into()));
        }
        Ok(Self { points })
    }

    pub fn linear(center: f64, span: f64, n: usize) -> Result<Self> {
        if !(span > 0.0) || n < 2 {
            return Err(Error::Parameter(format!("need span > 0 and n >= 2, got {span}, {n}")));
        }
        let step = span / (n - 1) as f64;
        Self::from_points((0..n).map(|k| center - span / 2.0 + k as f64 * step).collect())
    }

    /// Points concentrated within roughly `width` of `center`, thinning out
    /// towards the edges of the window (a sinh map of a uniform grid).
    pub fn clustered(center: f64, span: f64, n: usize, width: f64) -> Result<Self> {
        if !(span > 0.0) || !(width > 0.0) || n < 2 {
            return Err(Error::Parameter("need span > 0, width > 0 and n >= 2".into()));
        }
        let umax = (span / 2.0 / width).asinh();
        Self::from_points(
            (0..n)
                .map(|k| {
                    let u = -umax + 2.0 * umax * k as f64 / (n - 1) as f64;
                    center + width * u.sinh()
                })
                .collect(),
        )
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingRegime {
    /// Damping mismatch exceeds the exchange coupling; modes keep their
    /// identity and only the linewidths hybridize.
    Weak,
    /// Normal modes split by about `2 g_mc`.
    Strong,
}

/// Linewidths of the coupled oscillator pair, bare and qubit-renormalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridLinewidths {
    pub gamma_tilde_c: f64,
    pub gamma_tilde_m: f64,
    pub gamma_tilde_c_eff: f64,
    pub gamma_tilde_m_eff: f64,
    pub regime: CouplingRegime,
}

impl HybridLinewidths {
    pub fn bare(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Circuit => self.gamma_tilde_c,
            Mode::Mech => self.gamma_tilde_m,
        }
    }

    pub fn eff(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Circuit => self.gamma_tilde_c_eff,
            Mode::Mech => self.gamma_tilde_m_eff,
        }
    }
}

/// Splits `(γ_c, γ_m)` into hybridized rates; past the exceptional point
/// both equal the mean.
fn hybridize(gamma_c: f64, gamma_m: f64, g: f64) -> (f64, f64, bool) {
    let disc = (gamma_c - gamma_m).powi(2) - 16.0 * g * g;
    let sum = gamma_c + gamma_m;
    if disc < 0.0 {
        return (sum / 2.0, sum / 2.0, false);
    }
    let root = disc.sqrt();
    if gamma_c >= gamma_m {
        ((sum + root) / 2.0, (sum - root) / 2.0, true)
    } else {
        ((sum - root) / 2.0, (sum + root) / 2.0, true)
    }
}

pub fn hybrid_linewidths(sp: &SystemParams, rates: &AdiabaticRates) -> HybridLinewidths {
    let (c, m, _) = hybridize(sp.gamma_c, sp.gamma_m, sp.g_mc);
    let (ce, me, weak) = hybridize(
        rates.gamma_eff(sp, Mode::Circuit),
        rates.gamma_eff(sp, Mode::Mech),
        sp.g_mc,
    );
    HybridLinewidths {
        gamma_tilde_c: c,
        gamma_tilde_m: m,
        gamma_tilde_c_eff: ce,
        gamma_tilde_m_eff: me,
        regime: if weak { CouplingRegime::Weak } else { CouplingRegime::Strong },
    }
}

/// A spectrum on a grid, with named additive parts.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub grid: Vec<f64>,
    pub total: Vec<f64>,
    pub parts: Vec<(String, Vec<f64>)>,
    pub frame: Option<Frame>,
}

impl SpectrumResult {
    pub fn part(&self, name: &str) -> Option<&[f64]> {
        self.parts.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    fn from_parts(grid: &FrequencyGrid, parts: Vec<(String, Vec<f64>)>, frame: Option<Frame>) -> Self {
        let mut total = vec![0.0; grid.len()];
        for (_, v) in &parts {
            for (t, x) in total.iter_mut().zip(v) {
                *t += x;
            }
        }
        Self {
            grid: grid.points().to_vec(),
            total,
            parts,
            frame,
        }
    }
}

pub const PART_QUBIT: &str = "s_q";
pub const PART_NUMERIC: &str = "numeric";

pub fn part_name(mode: Mode, upper: bool) -> String {
    format!("s_{}_{}", mode.label(), if upper { "upper" } else { "lower" })
}

/// Fluorescence of the driven qubit alone: a Lorentzian of width `γ_t`
/// at `δ_d`, weighted by the excited-state population.
pub fn qubit_spectrum(grid: &FrequencyGrid, sp: &SystemParams) -> Result<Vec<f64>> {
    let gt = sp.gamma_t();
    if !(gt > 0.0) {
        return Err(Error::Parameter("qubit spectrum needs a positive total decoherence rate".into()));
    }
    let pe = sp.gamma_up / (sp.gamma_down + sp.gamma_up);
    let half = gt / 2.0;
    let dd = sp.delta_d();
    Ok(grid
        .points()
        .iter()
        .map(|&w| pe * half / (half * half + (w - dd).powi(2)))
        .collect())
}

/// Qubit correlation functions `(r, t)` entering the sideband weights at an
/// oscillator eigenvalue `λ`.
pub fn qubit_correlators(lambda: C64, sp: &SystemParams) -> Result<(C64, C64)> {
    let sum = sp.gamma_down + sp.gamma_up;
    let half = sp.gamma_t() / 2.0;
    let dd = sp.delta_d();
    let pole = C64::new(half, dd) - lambda;
    if pole.norm() < 1e-6 * sp.gamma_t() {
        return Err(Error::Solver(format!("oscillator eigenvalue {lambda} sits on the qubit pole")));
    }
    let r = C64::new((sp.gamma_up - sp.gamma_down) / sum, 0.0) / pole;
    let pe = sp.gamma_up / sum;
    let x = dd - lambda.im;
    let t = pe * (ONE / C64::new(half + lambda.re, -x) + ONE / C64::new(half - lambda.re, x));
    Ok((r, t))
}

/// One oscillator eigenvalue pair with its quadrature moments, indexed by
/// `[circuit, mech]`.
#[derive(Debug, Clone, Copy)]
struct EigenTerm {
    lambda: C64,
    lambda_eff: C64,
    upper: bool,
    m: [[f64; 2]; 2],
    c: [[f64; 2]; 2],
}

fn mode_index(mode: Mode) -> usize {
    match mode {
        Mode::Circuit => 0,
        Mode::Mech => 1,
    }
}

fn weak_terms(sp: &SystemParams, rates: &AdiabaticRates, hl: &HybridLinewidths, occ: &Occupations) -> Vec<EigenTerm> {
    let mut out = Vec::new();
    for mode in Mode::ALL {
        let p = mode_index(mode);
        let w = sp.omega(mode);
        let we = w + rates.mode(mode).shift;
        let n = occ.mode(mode);
        for k in [1.0, -1.0] {
            let upper = k > 0.0;
            let mut m = [[0.0; 2]; 2];
            let mut c = [[0.0; 2]; 2];
            m[p][p] = if upper { n } else { n + 1.0 };
            c[p][p] = if upper { -1.0 } else { 1.0 };
            out.push(EigenTerm {
                lambda: C64::new(-hl.bare(mode) / 2.0, k * w),
                lambda_eff: C64::new(-hl.eff(mode) / 2.0, k * we),
                upper,
                m,
                c,
            });
        }
    }
    out
}

/// Eigenvalues with positive-frequency labels of the 2x2 coherence matrix
/// `[[iω_c − κ_c/2, ig], [ig, iω_m − κ_m/2]]`, ordered (upper, lower)
/// normal mode.
fn normal_mode_eigenvalues(w_c: f64, k_c: f64, w_m: f64, k_m: f64, g: f64) -> [C64; 2] {
    let a = C64::new(-k_c / 2.0, w_c);
    let d = C64::new(-k_m / 2.0, w_m);
    let mean = (a + d) * 0.5;
    let half = (a - d) * 0.5;
    let root = (half * half - g * g).sqrt();
    let (x, y) = (mean + root, mean - root);
    if x.im >= y.im {
        [x, y]
    } else {
        [y, x]
    }
}

fn strong_terms(sp: &SystemParams, rates: &AdiabaticRates, occ: &Occupations) -> Vec<EigenTerm> {
    let bare = normal_mode_eigenvalues(sp.omega_c, sp.gamma_c, sp.omega_m, sp.gamma_m, sp.g_mc);
    let eff = normal_mode_eigenvalues(
        sp.omega_c + rates.circuit.shift,
        rates.gamma_eff(sp, Mode::Circuit),
        sp.omega_m + rates.mech.shift,
        rates.gamma_eff(sp, Mode::Mech),
        sp.g_mc,
    );
    let n = [occ.n_c, occ.n_m];
    let mut out = Vec::new();
    for (s, sigma) in [1.0, -1.0].into_iter().enumerate() {
        for k in [1.0, -1.0] {
            let upper = k > 0.0;
            let mut m = [[0.0; 2]; 2];
            let mut c = [[0.0; 2]; 2];
            for p in 0..2 {
                let pop = if upper { n[p] } else { n[p] + 1.0 };
                let comm = if upper { -1.0 } else { 1.0 };
                m[p][p] = pop / 2.0;
                m[p][1 - p] = sigma * pop / 2.0;
                c[p][p] = comm / 2.0;
                c[p][1 - p] = sigma * comm / 2.0;
            }
            let (lambda, lambda_eff) = if upper { (bare[s], eff[s]) } else { (bare[s].conj(), eff[s].conj()) };
            out.push(EigenTerm {
                lambda,
                lambda_eff,
                upper,
                m,
                c,
            });
        }
    }
    out
}

fn eigensum(sp: &SystemParams, terms: &[EigenTerm], grid: &FrequencyGrid) -> Result<Vec<(String, Vec<f64>)>> {
    let gbar = [sp.gbar_cq, sp.gbar_mq];
    let mut parts = Vec::new();
    for mode in Mode::ALL {
        let p = mode_index(mode);
        for upper in [true, false] {
            let mut curve = vec![0.0; grid.len()];
            for term in terms.iter().filter(|t| t.upper == upper) {
                let (r, t) = qubit_correlators(term.lambda, sp)?;
                let mut weight = ZERO;
                for q in 0..2 {
                    weight += gbar[p] * gbar[q] * r.conj() * (r * term.m[p][q] + t * term.c[p][q]);
                }
                if weight == ZERO {
                    continue;
                }
                for (s, &w) in curve.iter_mut().zip(grid.points()) {
                    *s += (weight / (I * w - term.lambda_eff)).re;
                }
            }
            parts.push((part_name(mode, upper), curve));
        }
    }
    Ok(parts)
}

fn with_qubit(sp: &SystemParams, grid: &FrequencyGrid, mut sidebands: Vec<(String, Vec<f64>)>) -> Result<SpectrumResult> {
    let mut parts = vec![(PART_QUBIT.to_string(), qubit_spectrum(grid, sp)?)];
    parts.append(&mut sidebands);
    Ok(SpectrumResult::from_parts(grid, parts, None))
}

fn require_regime(hl: &HybridLinewidths, want: CouplingRegime) -> Result<()> {
    if hl.regime != want {
        let hint = match want {
            CouplingRegime::Weak => "use the normal-mode path",
            CouplingRegime::Strong => "use the weak-coupling sideband path",
        };
        return Err(Error::Regime(format!("oscillator coupling is in the {:?} regime; {hint}", hl.regime)));
    }
    Ok(())
}

/// Upper and lower motional sidebands in their simplified Lorentzian form,
/// valid for red-sideband driving (`δ_d = ω_p`) with `γ↓ ≫ γ↑`, plus the
/// bare qubit line.
pub fn sideband_analytic(
    grid: &FrequencyGrid,
    sp: &SystemParams,
    rates: &AdiabaticRates,
    occ: &Occupations,
) -> Result<SpectrumResult> {
    let hl = hybrid_linewidths(sp, rates);
    require_regime(&hl, CouplingRegime::Weak)?;
    let gt = sp.gamma_t();
    for mode in Mode::ALL {
        if (sp.delta_d() - sp.omega(mode)).abs() > gt {
            warn!("drive detuning is off the {} red sideband by more than the qubit linewidth", mode.label());
        }
    }
    let mut parts = Vec::new();
    for mode in Mode::ALL {
        let g2 = sp.gbar(mode).powi(2);
        let gt_p = gt + hl.bare(mode);
        let ge = hl.eff(mode);
        let w = sp.omega(mode) + rates.mode(mode).shift;
        let n = occ.mode(mode);
        let up = 8.0 * g2 / (gt_p * gt_p) * n;
        let low = 8.0 * g2 / (gt_p * gt_p + 16.0 * sp.omega(mode).powi(2)) * (n + 1.0);
        let lor = |x: f64| ge / (4.0 * x * x + ge * ge);
        parts.push((part_name(mode, true), grid.points().iter().map(|&x| up * lor(x - w)).collect()));
        parts.push((part_name(mode, false), grid.points().iter().map(|&x| low * lor(x + w)).collect()));
    }
    with_qubit(sp, grid, parts)
}

/// Integrated weight of each simplified sideband, `(upper, lower)`.
pub fn sideband_weights(sp: &SystemParams, rates: &AdiabaticRates, occ: &Occupations, mode: Mode) -> (f64, f64) {
    let hl = hybrid_linewidths(sp, rates);
    let gt_p = sp.gamma_t() + hl.bare(mode);
    let g2 = sp.gbar(mode).powi(2);
    let n = occ.mode(mode);
    let half_pi = std::f64::consts::FRAC_PI_2;
    (
        8.0 * g2 / (gt_p * gt_p) * n * half_pi,
        8.0 * g2 / (gt_p * gt_p + 16.0 * sp.omega(mode).powi(2)) * (n + 1.0) * half_pi,
    )
}

/// Sideband spectrum from the eigenvalue sum with the full qubit
/// correlation functions, for any drive detuning (weak regime).
pub fn sideband_eigensum(
    grid: &FrequencyGrid,
    sp: &SystemParams,
    rates: &AdiabaticRates,
    occ: &Occupations,
) -> Result<SpectrumResult> {
    let hl = hybrid_linewidths(sp, rates);
    require_regime(&hl, CouplingRegime::Weak)?;
    let parts = eigensum(sp, &weak_terms(sp, rates, &hl, occ), grid)?;
    with_qubit(sp, grid, parts)
}

/// Sideband spectrum in the normal-mode regime, where the direct coupling
/// splits each sideband into two hybrid peaks.
pub fn normal_mode_analytic(
    grid: &FrequencyGrid,
    sp: &SystemParams,
    rates: &AdiabaticRates,
    occ: &Occupations,
) -> Result<SpectrumResult> {
    let hl = hybrid_linewidths(sp, rates);
    require_regime(&hl, CouplingRegime::Strong)?;
    let parts = eigensum(sp, &strong_terms(sp, rates, occ), grid)?;
    with_qubit(sp, grid, parts)
}

/// Regime-appropriate closed-form spectrum with adiabatic occupations.
pub fn analytic_spectrum(grid: &FrequencyGrid, sp: &SystemParams) -> Result<SpectrumResult> {
    let rates = induced_rates(sp)?;
    let occ = steady_occupations(sp, &rates);
    match hybrid_linewidths(sp, &rates).regime {
        CouplingRegime::Weak => sideband_analytic(grid, sp, &rates, &occ),
        CouplingRegime::Strong => normal_mode_analytic(grid, sp, &rates, &occ),
    }
}

/// Largest phase-dependent or cross moment relative to the occupations.
pub fn phase_moment_ratio(ss: &SteadyState) -> Result<f64> {
    let occ = ss.occupations()?;
    let scale = occ.n_c.min(occ.n_m).max(f64::MIN_POSITIVE);
    let keys = ["a_c^2", "a_m^2", "a_m^dag a_c"];
    let mut worst: f64 = 0.0;
    for k in keys {
        let v = ss.expectations.get(k).copied().unwrap_or(ZERO);
        worst = worst.max(v.norm() / scale);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericOptions {
    pub steady: SteadyOptions,
    /// Blocks up to this size use one Hessenberg reduction; larger blocks
    /// are factored per frequency.
    pub dense_limit: usize,
}

impl Default for NumericOptions {
    fn default() -> Self {
        Self {
            steady: SteadyOptions::default(),
            dense_limit: 3000,
        }
    }
}

/// Regression-theorem spectrum `Re ℓᵀ (iω − L)⁻¹ vec(σ₋ ρ_ss)`.
pub fn spectrum_numeric(
    sp: &SystemParams,
    layout: &SpaceLayout,
    frame: Frame,
    grid: &FrequencyGrid,
    opts: &NumericOptions,
) -> Result<SpectrumResult> {
    let l = build_liouvillian(sp, layout, frame)?;
    let ss = solve_steady(&l, &opts.steady)?;
    spectrum_from_steady(&l, &ss, sp, layout, frame, grid, opts)
}

pub fn spectrum_from_steady(
    l: &Superoperator,
    ss: &SteadyState,
    sp: &SystemParams,
    layout: &SpaceLayout,
    frame: Frame,
    grid: &FrequencyGrid,
    opts: &NumericOptions,
) -> Result<SpectrumResult> {
    if !layout.has_qubit() {
        return Err(Error::Layout("fluorescence spectrum needs the qubit".into()));
    }
    let d = layout.dim();
    let sm = embed(&sigma_minus(), Slot::Qubit, layout)?.to_dense();
    let sp_op = embed(&sigma_plus(), Slot::Qubit, layout)?.csr();
    let b = vectorize(&(&sm * &ss.rho));
    let mut ell = vec![ZERO; d * d];
    for (i, j, v) in sp_op.iter() {
        ell[j + i * d] = v;
    }
    // The sideband frame rotates the qubit at its own frequency.
    let offset = match frame {
        Frame::Sideband => sp.delta_d(),
        Frame::Lab => 0.0,
    };
    let z: Vec<C64> = grid.points().iter().map(|&w| I * (w - offset)).collect();
    let mut values = vec![0.0; grid.len()];
    for comp in components(l.matrix()) {
        if !comp.iter().any(|&i| b[i] != ZERO) || !comp.iter().any(|&i| ell[i] != ZERO) {
            continue;
        }
        let bc: Vec<C64> = comp.iter().map(|&i| b[i]).collect();
        let lc: Vec<C64> = comp.iter().map(|&i| ell[i]).collect();
        let part = if comp.len() <= opts.dense_limit {
            resolvent_dense(&l.matrix().restrict_dense(&comp), &lc, &bc, &z)?
        } else {
            resolvent_sparse(&l.matrix().restrict(&comp), &lc, &bc, &z)?
        };
        for (v, p) in values.iter_mut().zip(part) {
            *v += p;
        }
    }
    Ok(SpectrumResult::from_parts(grid, vec![(PART_NUMERIC.to_string(), values)], Some(frame)))
}

fn resolvent_dense(a: &Mat<C64>, l: &[C64], b: &[C64], z: &[C64]) -> Result<Vec<f64>> {
    let h = HessenbergResolvent::new(a, l, b);
    z.par_iter()
        .map_init(Vec::new, |work, &zi| h.eval_with(zi, work).map(|v| v.re))
        .collect()
}

fn resolvent_sparse(a: &CsrMatrix, l: &[C64], b: &[C64], z: &[C64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    z.par_iter()
        .map(|&zi| {
            let shifted = CsrMatrix::identity(n).axpby(zi, a, -ONE);
            let x = SparseLu::new(&shifted)?.solve(b);
            Ok(l.iter().zip(&x).map(|(li, xi)| li * xi).sum::<C64>().re)
        })
        .collect()
}

/// Trapezoidal integral of samples on a (possibly non-uniform) grid.
pub fn integrate_band(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Location and shape of the dominant peak of a sampled curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakMetrics {
    /// Midpoint of the two half-maximum crossings.
    pub center: f64,
    pub fwhm: f64,
    pub height: f64,
    /// Grid point of the largest sample.
    pub argmax: f64,
}

pub fn peak_metrics(grid: &[f64], values: &[f64]) -> Result<PeakMetrics> {
    if grid.len() != values.len() || grid.len() < 3 {
        return Err(Error::Parameter("peak analysis needs matching grids of at least 3 points".into()));
    }
    let (imax, &height) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let half = height / 2.0;
    let cross = |i: usize, j: usize| {
        let t = (half - values[i]) / (values[j] - values[i]);
        grid[i] + t * (grid[j] - grid[i])
    };
    // Outermost crossings, so that narrow features inside the line do not
    // split it.
    let outside = || Error::Parameter("peak does not fall to half maximum inside the window".into());
    let first = values.iter().position(|&v| v > half).ok_or_else(outside)?;
    let last = values.iter().rposition(|&v| v > half).ok_or_else(outside)?;
    if first == 0 || last + 1 == values.len() {
        return Err(outside());
    }
    let (l, r) = (cross(first - 1, first), cross(last, last + 1));
    Ok(PeakMetrics {
        center: 0.5 * (l + r),
        fwhm: r - l,
        height,
        argmax: grid[imax],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{liouvillian, sigma_x, Operator};
    use crate::linalg::dense_solve;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const TP: f64 = 2.0 * std::f64::consts::PI;

    fn nominal() -> (SystemParams, AdiabaticRates, Occupations) {
        let sp = SystemParams::nominal();
        let rates = induced_rates(&sp).unwrap();
        let occ = steady_occupations(&sp, &rates);
        (sp, rates, occ)
    }

    #[test]
    fn qubit_line_shape() {
        let (sp, _, _) = nominal();
        let dd = sp.delta_d();
        let gt = sp.gamma_t();
        let grid = FrequencyGrid::linear(dd, 10.0 * gt, 20001).unwrap();
        let s = qubit_spectrum(&grid, &sp).unwrap();
        let pm = peak_metrics(grid.points(), &s).unwrap();
        let pe = sp.gamma_up / (sp.gamma_down + sp.gamma_up);
        assert_relative_eq!(pm.height, 2.0 * pe / gt, max_relative = 1e-9);
        assert_relative_eq!(pm.fwhm, gt, max_relative = 1e-6);
        assert_relative_eq!(pm.center, dd, epsilon = 1e-6 * gt);
        assert_relative_eq!(gt / TP, 10.03e6, max_relative = 1e-3);
        let mut cold = sp.clone();
        cold.gamma_up = 0.0;
        assert!(qubit_spectrum(&grid, &cold).unwrap().iter().all(|&v| v == 0.0));
    }

    /// `(r, t)` against the qubit's own resolvents.
    fn correlators_by_resolvent(lambda: C64, sp: &SystemParams) -> (C64, C64) {
        let sm = sigma_minus();
        let sx = sigma_x();
        let h = crate::hilbert::sigma_z().scale_re(sp.delta_d() / 2.0);
        let sum = sp.gamma_down + sp.gamma_up;
        let lq = liouvillian(
            &h,
            &[
                (sp.gamma_down, sm.clone()),
                (sp.gamma_up, sm.adjoint()),
                (sp.gamma_phi / 2.0, crate::hilbert::sigma_z()),
            ],
        )
        .unwrap();
        let rho = Mat::<C64>::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => C64::new(sp.gamma_down / sum, 0.0),
            (1, 1) => C64::new(sp.gamma_up / sum, 0.0),
            _ => ZERO,
        });
        let lmat = lq.matrix().to_dense();
        // Tr[A (z − L)⁻¹ X]
        let resolve = |z: C64, x: &Mat<C64>, a: &Operator| {
            let m = Mat::<C64>::from_fn(4, 4, |i, j| if i == j { z } else { ZERO } - lmat[(i, j)]);
            let y = dense_solve(&m, &vectorize(x));
            a.expect(&crate::hilbert::unvectorize(&y, 2))
        };
        let sxd = sx.to_dense();
        let smd = sm.to_dense();
        let comm = &(&sxd * &rho) - &(&rho * &sxd);
        let r = resolve(-lambda, &comm, &sm);
        let t = resolve(lambda, &(&smd * &rho), &sx) + resolve(-lambda, &(&rho * &sxd), &sm);
        (r, t)
    }

    #[test]
    fn correlators_match_qubit_resolvents() {
        let (sp, _, _) = nominal();
        for lambda in [
            C64::new(0.0, sp.omega_c),
            C64::new(-TP * 2e5, sp.omega_c),
            C64::new(-TP * 1e3, -sp.omega_m),
            C64::new(-TP * 3e6, TP * 1e6),
        ] {
            let (r, t) = qubit_correlators(lambda, &sp).unwrap();
            let (r0, t0) = correlators_by_resolvent(lambda, &sp);
            assert!((t - t0).norm() <= 1e-10 * t0.norm(), "{t} vs {t0}");
            // r carries the commutator in the opposite order.
            assert!((r + r0).norm() <= 1e-10 * r0.norm(), "{r} vs {r0}");
        }
    }

    #[test]
    fn correlator_special_values() {
        let (mut sp, _, _) = nominal();
        let half = sp.gamma_t() / 2.0;
        let pe = sp.gamma_up / (sp.gamma_down + sp.gamma_up);
        let lam = C64::new(0.0, TP * 3e6);
        let (_, t) = qubit_correlators(lam, &sp).unwrap();
        let expect = pe * sp.gamma_t() / (half * half + (sp.delta_d() - lam.im).powi(2));
        assert_relative_eq!(t.re, expect, max_relative = 1e-12);
        assert!(t.im.abs() < 1e-12 * t.re);

        sp.gamma_up = sp.gamma_down;
        assert_eq!(qubit_correlators(lam, &sp).unwrap().0, ZERO);

        let mut sp = SystemParams::nominal();
        sp.drive_freq = sp.qubit_freq;
        let (r, _) = qubit_correlators(ZERO, &sp).unwrap();
        let sum = sp.gamma_down + sp.gamma_up;
        assert_relative_eq!(r.re, -(sp.gamma_down - sp.gamma_up) / (sum * sp.gamma_t() / 2.0), max_relative = 1e-12);

        let pole = C64::new(sp.gamma_t() / 2.0, sp.delta_d());
        assert!(qubit_correlators(pole, &sp).is_err());
    }

    #[test]
    fn hybridized_linewidths() {
        let (sp, rates, _) = nominal();
        let hl = hybrid_linewidths(&sp, &rates);
        assert_eq!(hl.regime, CouplingRegime::Weak);
        assert!(hl.gamma_tilde_m_eff <= hl.gamma_tilde_c_eff);
        let bare_sum = rates.gamma_eff(&sp, Mode::Circuit) + rates.gamma_eff(&sp, Mode::Mech);
        assert_relative_eq!(hl.gamma_tilde_c_eff + hl.gamma_tilde_m_eff, bare_sum, max_relative = 1e-10);
        assert_relative_eq!(hl.gamma_tilde_m_eff / TP, 394.80, max_relative = 1e-3);
        assert!(hl.gamma_tilde_m_eff > 1e3 * sp.gamma_m);
    }

    #[test]
    fn boxed_forms_match_eigensum_on_resonance() {
        // The simplified forms drop γ↑ corrections; with γ↑ = 0 and the
        // drive on the red sideband they are the eigenvalue sum exactly.
        let (mut sp, _, _) = nominal();
        sp.gamma_up = 0.0;
        let rates = induced_rates(&sp).unwrap();
        let occ = Occupations { n_c: 0.3, n_m: 0.7 };
        for (center, span) in [(sp.omega_c, TP * 4e6), (-sp.omega_c, TP * 4e6)] {
            let grid = FrequencyGrid::clustered(center, span, 801, TP * 1e4).unwrap();
            let a = sideband_analytic(&grid, &sp, &rates, &occ).unwrap();
            let b = sideband_eigensum(&grid, &sp, &rates, &occ).unwrap();
            for name in ["s_c_upper", "s_m_upper", "s_c_lower", "s_m_lower"] {
                let (x, y) = (a.part(name).unwrap(), b.part(name).unwrap());
                let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (u, v) in x.iter().zip(y) {
                    assert!((u - v).abs() <= 1e-9 * scale, "{name}: {u} vs {v}");
                }
            }
        }
    }

    #[test]
    fn nominal_spectrum_structure() {
        let (sp, rates, occ) = nominal();
        let grid = FrequencyGrid::clustered(sp.omega_c, TP * 4e6, 2001, TP * 2e3).unwrap();
        let s = sideband_analytic(&grid, &sp, &rates, &occ).unwrap();
        let peak = |name: &str| s.part(name).unwrap().iter().cloned().fold(0.0, f64::max);
        assert!(peak("s_c_upper") / peak("s_m_upper") > 10.0);
        for (i, t) in s.total.iter().enumerate() {
            let sum: f64 = s.parts.iter().map(|(_, v)| v[i]).sum();
            assert!((t - sum).abs() <= 1e-12 * t.abs());
            assert!(*t >= -1e-12);
        }
        let mut strong = sp.clone();
        strong.g_mc = TP * 1e6;
        assert!(matches!(sideband_analytic(&grid, &strong, &rates, &occ), Err(Error::Regime(_))));
    }

    #[test]
    fn asymmetry_matches_closed_form() {
        let (sp, rates, occ) = nominal();
        let hl = hybrid_linewidths(&sp, &rates);
        for mode in Mode::ALL {
            let (u, l) = sideband_weights(&sp, &rates, &occ, mode);
            let n = occ.mode(mode);
            let a = (sp.gamma_t() + hl.bare(mode)).powi(2);
            let expect = n / (n + 1.0) * (a + 16.0 * sp.omega(mode).powi(2)) / a;
            assert_relative_eq!(u / l, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn lorentzian_area_by_quadrature() {
        let (sp, rates, occ) = nominal();
        let hl = hybrid_linewidths(&sp, &rates);
        for mode in Mode::ALL {
            let ge = hl.eff(mode);
            let center = sp.omega(mode) + rates.mode(mode).shift;
            let grid = FrequencyGrid::clustered(center, 2e8 * ge, 400_001, ge / 4.0).unwrap();
            let s = sideband_analytic(&grid, &sp, &rates, &occ).unwrap();
            let area = integrate_band(grid.points(), s.part(&part_name(mode, true)).unwrap());
            assert_relative_eq!(area, sideband_weights(&sp, &rates, &occ, mode).0, max_relative = 1e-6);
        }
    }

    fn strong_params() -> SystemParams {
        let mut sp = SystemParams::nominal();
        sp.g_mc = TP * 1e6;
        sp
    }

    #[test]
    fn normal_mode_peaks_split_by_twice_the_coupling() {
        let mut sp = strong_params();
        sp.gbar_mq = 0.0;
        sp.gamma_up = 0.0;
        let mut rates = induced_rates(&sp).unwrap();
        rates.circuit.shift = 0.0;
        rates.mech.shift = 0.0;
        let occ = Occupations { n_c: 0.4, n_m: 0.4 };
        let grid = FrequencyGrid::linear(sp.omega_c, TP * 6e6, 60_001).unwrap();
        let s = normal_mode_analytic(&grid, &sp, &rates, &occ).unwrap();
        let up = s.part("s_c_upper").unwrap();
        let mid = grid.len() / 2;
        let lo = peak_metrics(&grid.points()[..mid], &up[..mid]).unwrap();
        let hi = peak_metrics(&grid.points()[mid..], &up[mid..]).unwrap();
        let expect = 2.0 * (sp.g_mc.powi(2) - (rates.gamma_eff(&sp, Mode::Circuit) - rates.gamma_eff(&sp, Mode::Mech)).powi(2) / 16.0).sqrt();
        assert_relative_eq!(hi.argmax - lo.argmax, expect, max_relative = 2e-3);
        assert_relative_eq!(expect, 2.0 * sp.g_mc, max_relative = 0.05);
        assert_relative_eq!(hi.height, lo.height, max_relative = 1e-2);
        assert!(sideband_analytic(&grid, &sp, &rates, &occ).is_err());
    }

    #[test]
    fn weak_and_strong_agree_at_threshold() {
        let mut sp = SystemParams::nominal();
        // Retune the circuit damping so that γ_c,eff/2π = 500 kHz.
        let rates0 = induced_rates(&sp).unwrap();
        let extra = rates0.circuit.gamma_minus - rates0.circuit.gamma_plus;
        sp.gamma_c = TP * 5e5 - extra;
        let rates = induced_rates(&sp).unwrap();
        assert_relative_eq!(rates.gamma_eff(&sp, Mode::Circuit), TP * 5e5, max_relative = 1e-12);
        let gap = rates.gamma_eff(&sp, Mode::Circuit) - rates.gamma_eff(&sp, Mode::Mech);
        let occ = steady_occupations(&sp, &rates);
        let grid = FrequencyGrid::linear(sp.omega_c, TP * 3e6, 3001).unwrap();
        sp.g_mc = gap / 4.0 * (1.0 - 1e-9);
        let weak = sideband_eigensum(&grid, &sp, &rates, &occ).unwrap();
        sp.g_mc = gap / 4.0 * (1.0 + 1e-9);
        let strong = normal_mode_analytic(&grid, &sp, &rates, &occ).unwrap();
        for (a, b) in weak.total.iter().zip(&strong.total) {
            assert!((a - b).abs() <= 0.05 * a.abs(), "{a} vs {b}");
        }
    }

    /// Quadrature moments by explicit eigenprojectors of `−i[ω_c n_c + ω_m n_m, ·]`.
    #[test]
    fn moments_by_brute_force() {
        let layout = SpaceLayout::new(4, 4).unwrap();
        let d = layout.dim();
        let (wc, wm) = (1.0, std::f64::consts::SQRT_2);
        // Diagonal states with an empty top level so that ⟨a a†⟩ = n + 1.
        let pc = [0.6, 0.3, 0.1, 0.0];
        let pm = [0.5, 0.35, 0.15, 0.0];
        let pq = [0.9, 0.1];
        let rho = Mat::<C64>::from_fn(d, d, |i, j| {
            if i != j {
                return ZERO;
            }
            let (q, c, m) = (i / 16, (i / 4) % 4, i % 4);
            C64::new(pq[q] * pc[c] * pm[m], 0.0)
        });
        let n = [pc.iter().enumerate().map(|(k, p)| k as f64 * p).sum::<f64>(), pm.iter().enumerate().map(|(k, p)| k as f64 * p).sum::<f64>()];
        let q_ops: Vec<Mat<C64>> = Mode::ALL
            .iter()
            .map(|&mode| {
                let a = crate::model::mode_destroy(mode, &layout).unwrap();
                a.add(&a.adjoint()).to_dense()
            })
            .collect();
        let energy = |i: usize| ((i / 4) % 4) as f64 * wc + (i % 4) as f64 * wm;
        let project = |x: &Mat<C64>, kc: i32, km: i32| {
            let target = kc as f64 * wc + km as f64 * wm;
            Mat::<C64>::from_fn(d, d, |i, j| if ((energy(j) - energy(i)) - target).abs() < 1e-9 { x[(i, j)] } else { ZERO })
        };
        let trace = |x: &Mat<C64>| (0..d).map(|i| x[(i, i)]).sum::<C64>();
        for kc in -1..=1 {
            for km in -1..=1 {
                if kc == 0 && km == 0 {
                    continue;
                }
                for p in 0..2 {
                    for pp in 0..2 {
                        let qr = &q_ops[pp] * &rho;
                        let rq = &rho * &q_ops[pp];
                        let m = trace(&(&q_ops[p] * &project(&qr, kc, km)));
                        let c = trace(&(&q_ops[p] * &project(&(&qr - &rq), kc, km)));
                        let (kp, kbar) = if p == 0 { (kc, km) } else { (km, kc) };
                        let (m_exp, c_exp) = if p != pp || kbar != 0 {
                            (0.0, 0.0)
                        } else if kp == 1 {
                            (n[p], -1.0)
                        } else {
                            (n[p] + 1.0, 1.0)
                        };
                        assert!((m - m_exp).norm() < 1e-12, "M {p}{pp} k=({kc},{km}): {m} vs {m_exp}");
                        assert!((c - c_exp).norm() < 1e-12, "C {p}{pp} k=({kc},{km}): {c} vs {c_exp}");
                    }
                }
            }
        }
    }

    #[test]
    fn peak_metrics_on_lorentzian() {
        let grid = FrequencyGrid::linear(0.0, 100.0, 100_001).unwrap();
        let v: Vec<f64> = grid.points().iter().map(|x| 1.0 / (1.0 + (x - 3.0).powi(2))).collect();
        let pm = peak_metrics(grid.points(), &v).unwrap();
        assert_relative_eq!(pm.center, 3.0, epsilon = 1e-6);
        assert_relative_eq!(pm.fwhm, 2.0, max_relative = 1e-6);
        assert_relative_eq!(pm.height, 1.0, max_relative = 1e-9);
        let narrow = FrequencyGrid::linear(0.0, 1.0, 11).unwrap();
        let flat = vec![1.0; 11];
        assert!(peak_metrics(narrow.points(), &flat).is_err());
        // A narrow notch at the center leaves the outer width intact.
        let mut notched = v.clone();
        notched[53_010] = 0.0;
        let pn = peak_metrics(grid.points(), &notched).unwrap();
        assert_relative_eq!(pn.fwhm, pm.fwhm, max_relative = 1e-12);
    }

    #[test]
    fn uncoupled_qubit_numeric_matches_closed_form() {
        let mut sp = SystemParams::nominal();
        sp.g_cq = 0.0;
        sp.g_mq = 0.0;
        sp.refresh_sideband_couplings();
        let layout = SpaceLayout::new(2, 2).unwrap();
        let grid = FrequencyGrid::linear(sp.delta_d(), 20.0 * sp.gamma_t(), 201).unwrap();
        let exact = qubit_spectrum(&grid, &sp).unwrap();
        let scale = exact.iter().cloned().fold(0.0, f64::max);
        for frame in [Frame::Sideband, Frame::Lab] {
            for dense_limit in [0, 100_000] {
                let opts = NumericOptions { dense_limit, ..Default::default() };
                let num = spectrum_numeric(&sp, &layout, frame, &grid, &opts).unwrap();
                for (a, b) in num.total.iter().zip(&exact) {
                    assert!((a - b).abs() <= 1e-8 * scale, "{frame:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn ground_state_has_no_upper_sideband() {
        let mut sp = SystemParams::nominal();
        sp.g_mc = 0.0;
        sp.g_mq = 0.0;
        sp.refresh_sideband_couplings();
        sp.gamma_up = 0.0;
        sp.gamma_phi = 0.0;
        let layout = SpaceLayout::new(6, 2).unwrap();
        let grid = FrequencyGrid::linear(sp.omega_c, TP * 2e6, 101).unwrap();
        let peak = |nbar: f64| {
            let mut s = sp.clone();
            s.nbar_c = nbar;
            s.nbar_m = 0.0;
            let r = spectrum_numeric(&s, &layout, Frame::Sideband, &grid, &NumericOptions::default()).unwrap();
            r.total.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        };
        let hot = peak(1.0);
        assert!(hot > 0.0);
        assert!(peak(0.0).abs() < 1e-10 * hot);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn hybrid_sum_rule(gc_khz in 1.0f64..1e3, gm_hz in 0.01f64..1e3, g_khz in 0.0f64..500.0) {
            let (a, b, _) = hybridize(TP * gc_khz * 1e3, TP * gm_hz, TP * g_khz * 1e3);
            let sum = TP * (gc_khz * 1e3 + gm_hz);
            prop_assert!(((a + b) / sum - 1.0).abs() < 1e-12);
            prop_assert!(a > 0.0 && b > 0.0);
        }

        #[test]
        fn clustered_grid_is_increasing(n in 3usize..500, width in 1e-3f64..10.0) {
            let g = FrequencyGrid::clustered(5.0, 20.0, n, width).unwrap();
            prop_assert_eq!(g.len(), n);
            prop_assert!((g.points()[0] + 5.0).abs() < 1e-9);
            prop_assert!((g.points()[n - 1] - 15.0).abs() < 1e-9);
        }
    }
}
