//! Steady states of Lindblad generators, truncation control and occupation
//! sweeps.
//!
//! The generator is split into the connected components of its sparsity
//! graph. Only components touching the diagonal of ρ can carry the steady
//! state, and the excitation-conserving frame makes those much smaller than
//! the full Liouville space.

use std::collections::BTreeMap;
use std::fmt;

use faer::{Mat, Side};
use log::{debug, warn};
use rayon::prelude::*;

use crate::adiabatic::{induced_rates, steady_occupations, Occupations};
use crate::error::{Error, Result};
use crate::hilbert::{embed, sigma_minus, sigma_z, unvectorize, vectorize, Operator, Slot, SpaceLayout, Superoperator};
use crate::linalg::{components, dense_solve, vec_norm_inf, CsrMatrix, SparseLu, C64, ONE, ZERO};
use crate::model::{build_liouvillian, mode_destroy, Frame, Mode, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteadyMethod {
    /// Null space from a bordered linear solve with the trace condition.
    Direct,
    /// Shifted inverse iteration towards the zero eigenvalue.
    InverseIteration,
    /// Implicit time stepping to long times.
    TimeIntegration,
}

impl fmt::Display for SteadyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SteadyMethod::Direct => "direct",
            SteadyMethod::InverseIteration => "inverse-iteration",
            SteadyMethod::TimeIntegration => "time-integration",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyOptions {
    /// Acceptable `‖L vec ρ‖∞ / ‖L‖∞`.
    pub residual_tol: f64,
    /// Compare the two smallest singular values of the steady block.
    pub check_uniqueness: bool,
    /// Try inverse iteration and then time integration when the direct
    /// solve misses the tolerance.
    pub fallback: bool,
    /// Blocks up to this size are factored densely.
    pub dense_limit: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-9,
            check_uniqueness: false,
            fallback: true,
            dense_limit: 400,
        }
    }
}

/// A normalized, Hermitian steady state with common expectation values.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: Mat<C64>,
    pub layout: Option<SpaceLayout>,
    pub residual: f64,
    pub method: SteadyMethod,
    pub expectations: BTreeMap<String, C64>,
}

impl SteadyState {
    fn new(rho: Mat<C64>, layout: Option<SpaceLayout>, residual: f64, method: SteadyMethod) -> Result<Self> {
        let mut s = Self {
            rho,
            layout,
            residual,
            method,
            expectations: BTreeMap::new(),
        };
        if let Some(l) = layout {
            s.expectations = standard_expectations(&s.rho, &l)?;
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn expect(&self, op: &Operator) -> C64 {
        op.expect(&self.rho)
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.rho[(i, i)]).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut m: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                m = m.max((self.rho[(i, j)] - self.rho[(j, i)].conj()).norm());
            }
        }
        m
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let ev = self
            .rho
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Solver(format!("eigenvalue solve failed: {e:?}")))?;
        Ok(ev.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// `⟨a_p† a_p⟩`; needs a layout.
    pub fn occupation(&self, mode: Mode) -> Result<f64> {
        let key = format!("n_{}", mode.label());
        self.expectations
            .get(&key)
            .map(|v| v.re)
            .ok_or_else(|| Error::Layout("steady state has no layout".into()))
    }

    pub fn occupations(&self) -> Result<Occupations> {
        Ok(Occupations {
            n_c: self.occupation(Mode::Circuit)?,
            n_m: self.occupation(Mode::Mech)?,
        })
    }

    /// Population of the highest retained Fock level of `mode`.
    pub fn tail_population(&self, mode: Mode) -> Result<f64> {
        let l = self.layout.ok_or_else(|| Error::Layout("steady state has no layout".into()))?;
        let mut p = 0.0;
        for q in 0..l.qubit_dim() {
            for c in 0..l.n_c() {
                for m in 0..l.n_m() {
                    let top = match mode {
                        Mode::Circuit => c == l.n_c() - 1,
                        Mode::Mech => m == l.n_m() - 1,
                    };
                    if top {
                        let i = l.index(q, c, m);
                        p += self.rho[(i, i)].re;
                    }
                }
            }
        }
        Ok(p)
    }

    /// Oscillator state after tracing out the qubit.
    pub fn oscillator_state(&self) -> Result<Mat<C64>> {
        let l = self.layout.ok_or_else(|| Error::Layout("steady state has no layout".into()))?;
        let d = l.n_c() * l.n_m();
        let mut out = Mat::<C64>::zeros(d, d);
        for q in 0..l.qubit_dim() {
            for i in 0..d {
                for j in 0..d {
                    out[(i, j)] += self.rho[(q * d + i, q * d + j)];
                }
            }
        }
        Ok(out)
    }
}

fn standard_expectations(rho: &Mat<C64>, l: &SpaceLayout) -> Result<BTreeMap<String, C64>> {
    let mut out = BTreeMap::new();
    let a_c = mode_destroy(Mode::Circuit, l)?;
    let a_m = mode_destroy(Mode::Mech, l)?;
    for (mode, a) in [(Mode::Circuit, &a_c), (Mode::Mech, &a_m)] {
        let s = mode.label();
        out.insert(format!("n_{s}"), a.adjoint().mul(a).expect(rho));
        out.insert(format!("a_{s}"), a.expect(rho));
        out.insert(format!("a_{s}^2"), a.mul(a).expect(rho));
    }
    out.insert("a_m^dag a_c".into(), a_m.adjoint().mul(&a_c).expect(rho));
    if l.has_qubit() {
        let sm = embed(&sigma_minus(), Slot::Qubit, l)?;
        out.insert("sigma_minus".into(), sm.expect(rho));
        out.insert("p_e".into(), sm.adjoint().mul(&sm).expect(rho));
        out.insert("sigma_z".into(), embed(&sigma_z(), Slot::Qubit, l)?.expect(rho));
    }
    Ok(out)
}

/// Indices of the components that contain diagonal entries of ρ.
fn steady_support(l: &Superoperator) -> Result<Vec<usize>> {
    let diag = l.diagonal_positions();
    let mut is_diag = vec![false; l.dim()];
    for &p in &diag {
        is_diag[p] = true;
    }
    let blocks: Vec<Vec<usize>> = components(l.matrix())
        .into_iter()
        .filter(|c| c.iter().any(|&i| is_diag[i]))
        .collect();
    if blocks.len() > 1 {
        return Err(Error::Solver(format!(
            "steady state is not unique: {} decoupled population blocks",
            blocks.len()
        )));
    }
    Ok(blocks.into_iter().next().unwrap_or_default())
}

fn relative_residual(l: &Superoperator, v: &[C64]) -> f64 {
    vec_norm_inf(&l.apply_vec(v)) / l.norm_inf().max(f64::MIN_POSITIVE)
}

/// Turns a block solution into a normalized Hermitian density matrix.
fn finish(l: &Superoperator, idx: &[usize], x: &[C64]) -> Result<(Mat<C64>, f64)> {
    let d = l.op_dim();
    let mut v = vec![ZERO; l.dim()];
    for (k, &i) in idx.iter().enumerate() {
        v[i] = x[k];
    }
    let rho = unvectorize(&v, d);
    let mut herm = Mat::<C64>::from_fn(d, d, |i, j| (rho[(i, j)] + rho[(j, i)].conj()) * 0.5);
    let tr: C64 = (0..d).map(|i| herm[(i, i)]).sum();
    if !(tr.norm() > 0.0) || !tr.re.is_finite() {
        return Err(Error::Solver("steady solve produced a traceless state".into()));
    }
    for j in 0..d {
        for i in 0..d {
            herm[(i, j)] /= tr.re;
        }
    }
    let r = relative_residual(l, &vectorize(&herm));
    Ok((herm, r))
}

fn bordered_solve(block: &CsrMatrix, trace_rows: &[usize], dense_limit: usize) -> Result<Vec<C64>> {
    let n = block.nrows();
    let pivot = trace_rows[0];
    let s = C64::new(block.max_abs().max(1.0), 0.0);
    let mut t: Vec<_> = block.iter().filter(|&(r, _, _)| r != pivot).collect();
    t.extend(trace_rows.iter().map(|&c| (pivot, c, s)));
    let bordered = CsrMatrix::from_triplets(n, n, t);
    let mut rhs = vec![ZERO; n];
    rhs[pivot] = s;
    if n <= dense_limit {
        return Ok(dense_solve(&bordered.to_dense(), &rhs));
    }
    match SparseLu::new(&bordered) {
        Ok(lu) => Ok(lu.solve(&rhs)),
        Err(e) if n <= 8 * dense_limit.max(1000) => {
            debug!("sparse LU failed ({e}); using a dense factorization");
            Ok(dense_solve(&bordered.to_dense(), &rhs))
        }
        Err(e) => Err(e),
    }
}

fn inverse_iteration(block: &CsrMatrix, trace_rows: &[usize]) -> Result<Vec<C64>> {
    let n = block.nrows();
    let shift = C64::new(-1e-10 * block.max_abs().max(1.0), 0.0);
    let shifted = block.axpby(ONE, &CsrMatrix::identity(n), -shift);
    let lu = SparseLu::new(&shifted)?;
    let mut x = vec![ZERO; n];
    for &p in trace_rows {
        x[p] = ONE;
    }
    for _ in 0..30 {
        let y = lu.solve(&x);
        let nrm = vec_norm_inf(&y);
        if !(nrm > 0.0 && nrm.is_finite()) {
            return Err(Error::Solver("inverse iteration diverged".into()));
        }
        x = y.into_iter().map(|v| v / nrm).collect();
        if vec_norm_inf(&block.matvec(&x)) <= 1e-13 * block.norm_inf() {
            break;
        }
    }
    Ok(x)
}

/// Backward-Euler integration of `dρ/dt = L ρ` on the steady block from
/// `x0` to `t_final`, with geometrically growing steps.
fn integrate_block(block: &CsrMatrix, mut x: Vec<C64>, t_final: f64) -> Result<Vec<C64>> {
    let n = block.nrows();
    let mut h = 1.0 / block.norm_inf().max(1.0);
    let mut t = 0.0;
    while t < t_final {
        let step = h.min(t_final - t);
        let lhs = CsrMatrix::identity(n).axpby(ONE, block, C64::new(-step, 0.0));
        let lu = SparseLu::new(&lhs)?;
        // Repeat each step size a few times before growing it.
        for _ in 0..4 {
            if t >= t_final {
                break;
            }
            x = lu.solve(&x);
            t += step;
        }
        h *= 2.0;
    }
    Ok(x)
}

fn block_data(l: &Superoperator) -> Result<(Vec<usize>, CsrMatrix, Vec<usize>)> {
    let idx = steady_support(l)?;
    let block = l.matrix().restrict(&idx);
    let diag: std::collections::HashSet<usize> = l.diagonal_positions().into_iter().collect();
    let trace_rows: Vec<usize> = idx
        .iter()
        .enumerate()
        .filter(|(_, i)| diag.contains(i))
        .map(|(k, _)| k)
        .collect();
    Ok((idx, block, trace_rows))
}

fn check_uniqueness(block: &CsrMatrix) {
    if block.nrows() < 2 {
        return;
    }
    match block.to_dense().singular_values() {
        Ok(mut sv) => {
            sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if sv[1] < 1e3 * sv[0] {
                warn!(
                    "steady state may not be unique: smallest singular values {:e} and {:e}",
                    sv[0], sv[1]
                );
            }
        }
        Err(e) => warn!("uniqueness check skipped: {e:?}"),
    }
}

/// Steady state of a Lindblad generator.
pub fn solve_steady(l: &Superoperator, opts: &SteadyOptions) -> Result<SteadyState> {
    let (idx, block, trace_rows) = block_data(l)?;
    if opts.check_uniqueness {
        check_uniqueness(&block);
    }
    let mut best: Option<(Mat<C64>, f64, SteadyMethod)> = None;
    let direct = bordered_solve(&block, &trace_rows, opts.dense_limit).and_then(|x| finish(l, &idx, &x));
    match direct {
        Ok((rho, r)) => best = Some((rho, r, SteadyMethod::Direct)),
        Err(e) => debug!("direct steady solve failed: {e}"),
    }
    let good = |b: &Option<(Mat<C64>, f64, SteadyMethod)>| b.as_ref().is_some_and(|(_, r, _)| *r <= opts.residual_tol);
    if !good(&best) && opts.fallback {
        warn!("direct steady solve missed the residual tolerance; trying inverse iteration");
        if let Ok((rho, r)) = inverse_iteration(&block, &trace_rows).and_then(|x| finish(l, &idx, &x)) {
            if best.as_ref().map_or(true, |(_, rb, _)| r < *rb) {
                best = Some((rho, r, SteadyMethod::InverseIteration));
            }
        }
    }
    if !good(&best) && opts.fallback {
        warn!("falling back to time integration");
        let mut x0 = vec![ZERO; idx.len()];
        for &p in &trace_rows {
            x0[p] = C64::new(1.0 / trace_rows.len() as f64, 0.0);
        }
        let t_final = 50.0 / slowest_rate_estimate(&block);
        if let Ok((rho, r)) = integrate_block(&block, x0, t_final).and_then(|x| finish(l, &idx, &x)) {
            if best.as_ref().map_or(true, |(_, rb, _)| r < *rb) {
                best = Some((rho, r, SteadyMethod::TimeIntegration));
            }
        }
    }
    match best {
        Some((rho, r, method)) if r <= opts.residual_tol => SteadyState::new(rho, l.layout(), r, method),
        Some((_, r, _)) => Err(Error::Solver(format!(
            "steady state residual {r:e} exceeds tolerance {:e}",
            opts.residual_tol
        ))),
        None => Err(Error::Solver("all steady-state methods failed".into())),
    }
}

/// Smallest non-zero diagonal decay magnitude of the block, a cheap lower
/// bound proxy for its slowest relaxation rate.
fn slowest_rate_estimate(block: &CsrMatrix) -> f64 {
    (0..block.nrows())
        .map(|i| block.get(i, i).re.abs())
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min)
        .min(block.norm_inf())
        .max(f64::MIN_POSITIVE)
}

/// Steady state by implicit time integration from the maximally mixed
/// population state up to `t_final`.
pub fn integrate_to_steady(l: &Superoperator, t_final: f64) -> Result<SteadyState> {
    let (idx, block, trace_rows) = block_data(l)?;
    let mut x0 = vec![ZERO; idx.len()];
    for &p in &trace_rows {
        x0[p] = C64::new(1.0 / trace_rows.len() as f64, 0.0);
    }
    let x = integrate_block(&block, x0, t_final)?;
    let (rho, r) = finish(l, &idx, &x)?;
    SteadyState::new(rho, l.layout(), r, SteadyMethod::TimeIntegration)
}

/// Steady state of the full model.
pub fn model_steady(sp: &SystemParams, layout: &SpaceLayout, frame: Frame, opts: &SteadyOptions) -> Result<SteadyState> {
    let l = build_liouvillian(sp, layout, frame)?;
    solve_steady(&l, opts)
}

/// Grows both truncations by two until the top Fock level of each mode
/// holds less than `tail_tol` population.
pub fn truncation_escalate(
    sp: &SystemParams,
    start: &SpaceLayout,
    frame: Frame,
    tail_tol: f64,
    cap: usize,
    opts: &SteadyOptions,
) -> Result<SteadyState> {
    let mut layout = *start;
    loop {
        let ss = model_steady(sp, &layout, frame, opts)?;
        let tail = ss.tail_population(Mode::Circuit)?.max(ss.tail_population(Mode::Mech)?);
        if tail < tail_tol {
            return Ok(ss);
        }
        let (nc, nm) = (layout.n_c() + 2, layout.n_m() + 2);
        if nc > cap || nm > cap {
            return Err(Error::Truncation(format!(
                "top-level population {tail:e} still above {tail_tol:e} at n_c = {}, n_m = {}",
                layout.n_c(),
                layout.n_m()
            )));
        }
        debug!("tail population {tail:e}; growing truncation to {nc} x {nm}");
        layout = layout.with_truncation(nc, nm)?;
    }
}

/// One grid point of an occupation sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub gamma_down: f64,
    pub gamma_c: f64,
    pub numeric: Option<Occupations>,
    pub adiabatic: Occupations,
    pub residual: f64,
    pub error: Option<String>,
}

/// Numeric and adiabatic occupations over a `γ_c × γ↓` grid. Points are
/// solved in parallel; a failed point is reported in its row and does not
/// stop the sweep.
pub fn sweep_occupations(
    base: &SystemParams,
    layout: &SpaceLayout,
    frame: Frame,
    gamma_downs: &[f64],
    gamma_cs: &[f64],
    opts: &SteadyOptions,
) -> Result<Vec<SweepRow>> {
    let mut points = Vec::new();
    for &gc in gamma_cs {
        for &gd in gamma_downs {
            points.push((gd, gc));
        }
    }
    points
        .par_iter()
        .map(|&(gd, gc)| {
            let mut sp = base.clone();
            sp.gamma_down = gd;
            sp.gamma_c = gc;
            let adiabatic = steady_occupations(&sp, &induced_rates(&sp)?);
            let row = match model_steady(&sp, layout, frame, opts).and_then(|s| Ok((s.occupations()?, s.residual))) {
                Ok((occ, r)) => SweepRow {
                    gamma_down: gd,
                    gamma_c: gc,
                    numeric: Some(occ),
                    adiabatic,
                    residual: r,
                    error: None,
                },
                Err(e) => {
                    warn!("sweep point gamma_down = {gd:e}, gamma_c = {gc:e} failed: {e}");
                    SweepRow {
                        gamma_down: gd,
                        gamma_c: gc,
                        numeric: None,
                        adiabatic,
                        residual: f64::NAN,
                        error: Some(e.to_string()),
                    }
                }
            };
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{destroy, liouvillian, number, zero};
    use approx::assert_relative_eq;

    #[test]
    fn thermal_oscillator_relaxes_to_bose_occupation() {
        let n = 12;
        let a = destroy(n).unwrap();
        let (gamma, nbar) = (1.3, 1.21);
        let l = liouvillian(&zero(n), &[(gamma * (nbar + 1.0), a.clone()), (gamma * nbar, a.adjoint())]).unwrap();
        let ss = solve_steady(&l, &SteadyOptions::default()).unwrap();
        let occ = ss.expect(&number(n).unwrap()).re;
        // Truncated thermal state: ⟨n⟩ = Σ k x^k / Σ x^k with x = n̄/(n̄+1).
        let x: f64 = nbar / (nbar + 1.0);
        let z: f64 = (0..n).map(|k| x.powi(k as i32)).sum();
        let exact: f64 = (0..n).map(|k| k as f64 * x.powi(k as i32)).sum::<f64>() / z;
        assert_relative_eq!(occ, exact, max_relative = 1e-10);
        assert!((occ - nbar).abs() < 0.02);
        assert_eq!(ss.method, SteadyMethod::Direct);
    }

    #[test]
    fn decoupled_populations_are_rejected() {
        let n = 3;
        let l = liouvillian(&number(n).unwrap(), &[]).unwrap();
        assert!(solve_steady(&l, &SteadyOptions::default()).is_err());
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        let sp = SystemParams::nominal();
        let layout = SpaceLayout::new(3, 3).unwrap();
        let dense = model_steady(&sp, &layout, Frame::Sideband, &SteadyOptions { dense_limit: 100_000, ..Default::default() }).unwrap();
        let sparse = model_steady(&sp, &layout, Frame::Sideband, &SteadyOptions { dense_limit: 0, ..Default::default() }).unwrap();
        for (k, v) in &dense.expectations {
            assert!((v - sparse.expectations[k]).norm() < 1e-9, "{k}");
        }
    }

    #[test]
    fn integration_agrees_with_null_space() {
        let sp = SystemParams::nominal();
        let layout = SpaceLayout::new(3, 3).unwrap();
        let l = build_liouvillian(&sp, &layout, Frame::Sideband).unwrap();
        let direct = solve_steady(&l, &SteadyOptions::default()).unwrap();
        let slowest = sp.gamma_m * sp.nbar_m;
        let integrated = integrate_to_steady(&l, 50.0 / slowest).unwrap();
        for (k, v) in &direct.expectations {
            assert!((v - integrated.expectations[k]).norm() < 1e-5, "{k}: {v} vs {}", integrated.expectations[k]);
        }
    }

    #[test]
    fn escalation_stops_at_cap() {
        let mut sp = SystemParams::nominal();
        sp.g_cq = 0.0;
        sp.g_mq = 0.0;
        sp.refresh_sideband_couplings();
        sp.nbar_c = 5.0;
        sp.nbar_m = 5.0;
        let start = SpaceLayout::new(4, 4).unwrap();
        let err = truncation_escalate(&sp, &start, Frame::Sideband, 1e-4, 6, &SteadyOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Truncation(_)));
    }
}
