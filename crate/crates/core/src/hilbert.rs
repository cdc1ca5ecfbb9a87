//! Truncated Hilbert spaces, operators on them and their superoperators.
//!
//! Composite spaces are ordered qubit ⊗ circuit ⊗ mech with the qubit as the
//! slowest index. Density matrices are vectorized by stacking columns, so
//! `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`.

use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, C64, I, ONE, ZERO};

/// Operators below this dimension are stored densely.
pub const DENSE_BELOW: usize = 64;

/// One tensor factor of the composite space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Qubit,
    Circuit,
    Mech,
}

/// Truncation of the composite space. The full model carries a two-level
/// qubit; the oscillator-only variant is used by reduced master equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpaceLayout {
    qubit: bool,
    n_c: usize,
    n_m: usize,
}

impl SpaceLayout {
    pub fn new(n_c: usize, n_m: usize) -> Result<Self> {
        Self::checked(true, n_c, n_m)
    }

    pub fn oscillators(n_c: usize, n_m: usize) -> Result<Self> {
        Self::checked(false, n_c, n_m)
    }

    fn checked(qubit: bool, n_c: usize, n_m: usize) -> Result<Self> {
        if n_c < 2 || n_m < 2 {
            return Err(Error::Layout(format!(
                "oscillator truncations must be at least 2, got n_c = {n_c}, n_m = {n_m}"
            )));
        }
        Ok(Self { qubit, n_c, n_m })
    }

    pub fn has_qubit(&self) -> bool {
        self.qubit
    }

    pub fn qubit_dim(&self) -> usize {
        if self.qubit {
            2
        } else {
            1
        }
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn n_m(&self) -> usize {
        self.n_m
    }

    pub fn dim(&self) -> usize {
        self.qubit_dim() * self.n_c * self.n_m
    }

    pub fn slot_dim(&self, slot: Slot) -> Result<usize> {
        match slot {
            Slot::Qubit if !self.qubit => Err(Error::Layout("layout has no qubit factor".into())),
            Slot::Qubit => Ok(2),
            Slot::Circuit => Ok(self.n_c),
            Slot::Mech => Ok(self.n_m),
        }
    }

    /// Flat basis index of `|q⟩|c⟩|m⟩`.
    pub fn index(&self, q: usize, c: usize, m: usize) -> usize {
        debug_assert!(q < self.qubit_dim() && c < self.n_c && m < self.n_m);
        (q * self.n_c + c) * self.n_m + m
    }

    pub fn with_truncation(&self, n_c: usize, n_m: usize) -> Result<Self> {
        Self::checked(self.qubit, n_c, n_m)
    }
}

#[derive(Debug, Clone)]
enum Storage {
    Dense(Mat<C64>),
    Sparse(CsrMatrix),
}

/// A square operator on a (possibly composite) Hilbert space.
#[derive(Debug, Clone)]
pub struct Operator {
    storage: Storage,
    dim: usize,
    layout: Option<SpaceLayout>,
    hermitian: bool,
}

impl Operator {
    pub fn from_csr(m: CsrMatrix, layout: Option<SpaceLayout>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "operators are square");
        if let Some(l) = layout {
            assert_eq!(l.dim(), m.nrows(), "operator does not fit its layout");
        }
        let dim = m.nrows();
        let storage = if dim < DENSE_BELOW {
            Storage::Dense(m.to_dense())
        } else {
            Storage::Sparse(m)
        };
        Self {
            storage,
            dim,
            layout,
            hermitian: false,
        }
    }

    pub fn from_dense(m: &Mat<C64>, layout: Option<SpaceLayout>) -> Self {
        Self::from_csr(CsrMatrix::from_dense(m), layout)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layout(&self) -> Option<SpaceLayout> {
        self.layout
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn csr(&self) -> CsrMatrix {
        match &self.storage {
            Storage::Dense(m) => CsrMatrix::from_dense(m),
            Storage::Sparse(m) => m.clone(),
        }
    }

    pub fn to_dense(&self) -> Mat<C64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Sparse(m) => m.to_dense(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        match &self.storage {
            Storage::Dense(m) => m[(r, c)],
            Storage::Sparse(m) => m.get(r, c),
        }
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Largest entry of `|A - A†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        self.csr().sub(&self.csr().adjoint()).max_abs()
    }

    /// Sets the hermiticity flag after checking `max|A - A†| <= tol`.
    pub fn mark_hermitian(mut self, tol: f64) -> Result<Self> {
        let defect = self.hermiticity_defect();
        if defect > tol {
            return Err(Error::Parameter(format!(
                "operator is not Hermitian: max |A - A†| = {defect:e}"
            )));
        }
        self.hermitian = true;
        Ok(self)
    }

    fn merged_layout(&self, other: &Self) -> Option<SpaceLayout> {
        assert_eq!(self.dim, other.dim, "operator dimension mismatch");
        if let (Some(a), Some(b)) = (self.layout, other.layout) {
            assert_eq!(a, b, "operator layout mismatch");
        }
        self.layout.or(other.layout)
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::from_csr(self.csr().adjoint(), self.layout);
        out.hermitian = self.hermitian;
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let layout = self.merged_layout(other);
        Self::from_csr(self.csr().matmul(&other.csr()), layout)
    }

    pub fn add(&self, other: &Self) -> Self {
        let layout = self.merged_layout(other);
        let mut out = Self::from_csr(self.csr().add(&other.csr()), layout);
        out.hermitian = self.hermitian && other.hermitian;
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let layout = self.merged_layout(other);
        let mut out = Self::from_csr(self.csr().sub(&other.csr()), layout);
        out.hermitian = self.hermitian && other.hermitian;
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = Self::from_csr(self.csr().scale(s), self.layout);
        out.hermitian = self.hermitian && s.im == 0.0;
        out
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// `A + A†`.
    pub fn plus_adjoint(&self) -> Self {
        let mut out = self.add(&self.adjoint());
        out.hermitian = true;
        out
    }

    /// `tr(A ρ)`.
    pub fn expect(&self, rho: &Mat<C64>) -> C64 {
        assert_eq!(rho.nrows(), self.dim);
        let mut acc = ZERO;
        for (r, c, v) in self.csr().iter() {
            acc += v * rho[(c, r)];
        }
        acc
    }

    pub fn trace(&self) -> C64 {
        self.csr().trace()
    }

    pub fn max_abs(&self) -> f64 {
        self.csr().max_abs()
    }
}

/// Annihilation operator truncated to `n` levels.
pub fn destroy(n: usize) -> Result<Operator> {
    if n < 1 {
        return Err(Error::Layout("truncation must be positive".into()));
    }
    let t = (1..n).map(|k| (k - 1, k, C64::new((k as f64).sqrt(), 0.0))).collect();
    Ok(Operator::from_csr(CsrMatrix::from_triplets(n, n, t), None))
}

pub fn create(n: usize) -> Result<Operator> {
    Ok(destroy(n)?.adjoint())
}

pub fn number(n: usize) -> Result<Operator> {
    let a = destroy(n)?;
    let mut num = a.adjoint().mul(&a);
    num.hermitian = true;
    Ok(num)
}

pub fn identity(n: usize) -> Operator {
    let mut out = Operator::from_csr(CsrMatrix::identity(n), None);
    out.hermitian = true;
    out
}

pub fn zero(n: usize) -> Operator {
    let mut out = Operator::from_csr(CsrMatrix::zeros(n, n), None);
    out.hermitian = true;
    out
}

/// `|g⟩⟨e|`, with the ground state as basis index 0.
pub fn sigma_minus() -> Operator {
    Operator::from_csr(CsrMatrix::from_triplets(2, 2, vec![(0, 1, ONE)]), None)
}

pub fn sigma_plus() -> Operator {
    sigma_minus().adjoint()
}

/// `|e⟩⟨e| - |g⟩⟨g|`.
pub fn sigma_z() -> Operator {
    let mut out = Operator::from_csr(CsrMatrix::from_diagonal(&[-ONE, ONE]), None);
    out.hermitian = true;
    out
}

pub fn sigma_x() -> Operator {
    sigma_minus().plus_adjoint()
}

/// Lifts a single-factor operator into the composite space.
pub fn embed(op: &Operator, slot: Slot, layout: &SpaceLayout) -> Result<Operator> {
    let expected = layout.slot_dim(slot)?;
    if op.dim() != expected {
        return Err(Error::Layout(format!(
            "{slot:?} operator has dimension {}, layout expects {expected}",
            op.dim()
        )));
    }
    let (before, after) = match slot {
        Slot::Qubit => (1, layout.n_c * layout.n_m),
        Slot::Circuit => (layout.qubit_dim(), layout.n_m),
        Slot::Mech => (layout.qubit_dim() * layout.n_c, 1),
    };
    let m = CsrMatrix::kron(
        &CsrMatrix::kron(&CsrMatrix::identity(before), &op.csr()),
        &CsrMatrix::identity(after),
    );
    let mut out = Operator::from_csr(m, Some(*layout));
    out.hermitian = op.hermitian;
    Ok(out)
}

/// Column-stacking vectorization.
pub fn vectorize(rho: &Mat<C64>) -> Vec<C64> {
    let d = rho.nrows();
    let mut v = Vec::with_capacity(d * rho.ncols());
    for j in 0..rho.ncols() {
        for i in 0..d {
            v.push(rho[(i, j)]);
        }
    }
    v
}

pub fn unvectorize(v: &[C64], d: usize) -> Mat<C64> {
    assert_eq!(v.len(), d * d);
    Mat::from_fn(d, d, |i, j| v[i + j * d])
}

/// Linear map on vectorized operators.
#[derive(Debug, Clone)]
pub struct Superoperator {
    op_dim: usize,
    matrix: CsrMatrix,
    layout: Option<SpaceLayout>,
}

impl Superoperator {
    pub fn from_csr(op_dim: usize, matrix: CsrMatrix, layout: Option<SpaceLayout>) -> Self {
        assert_eq!(matrix.nrows(), op_dim * op_dim);
        assert_eq!(matrix.ncols(), op_dim * op_dim);
        Self {
            op_dim,
            matrix,
            layout,
        }
    }

    pub fn zero(op_dim: usize, layout: Option<SpaceLayout>) -> Self {
        Self::from_csr(op_dim, CsrMatrix::zeros(op_dim * op_dim, op_dim * op_dim), layout)
    }

    /// `ρ ↦ A ρ B`.
    pub fn sandwich(a: &Operator, b: &Operator) -> Self {
        let layout = a.merged_layout(b);
        Self::from_csr(a.dim(), CsrMatrix::kron(&b.csr().transpose(), &a.csr()), layout)
    }

    /// `ρ ↦ A ρ`.
    pub fn left(a: &Operator) -> Self {
        Self::from_csr(
            a.dim(),
            CsrMatrix::kron(&CsrMatrix::identity(a.dim()), &a.csr()),
            a.layout(),
        )
    }

    /// `ρ ↦ ρ B`.
    pub fn right(b: &Operator) -> Self {
        Self::from_csr(
            b.dim(),
            CsrMatrix::kron(&b.csr().transpose(), &CsrMatrix::identity(b.dim())),
            b.layout(),
        )
    }

    /// `ρ ↦ -i [H, ρ]`.
    pub fn hamiltonian(h: &Operator) -> Self {
        Self::left(h).sub(&Self::right(h)).scale(-I)
    }

    /// `ρ ↦ rate (c ρ c† - ½{c†c, ρ})`.
    pub fn dissipator(c: &Operator, rate: f64) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::Parameter(format!("dissipation rate must be finite and non-negative, got {rate}")));
        }
        let cdc = c.adjoint().mul(c);
        let jump = Self::sandwich(c, &c.adjoint());
        let anti = Self::left(&cdc).add(&Self::right(&cdc)).scale(C64::new(0.5, 0.0));
        Ok(jump.sub(&anti).scale(C64::new(rate, 0.0)))
    }

    pub fn op_dim(&self) -> usize {
        self.op_dim
    }

    pub fn dim(&self) -> usize {
        self.op_dim * self.op_dim
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn layout(&self) -> Option<SpaceLayout> {
        self.layout
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.op_dim, other.op_dim);
        Self::from_csr(self.op_dim, self.matrix.add(&other.matrix), self.layout.or(other.layout))
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.op_dim, other.op_dim);
        Self::from_csr(self.op_dim, self.matrix.sub(&other.matrix), self.layout.or(other.layout))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_csr(self.op_dim, self.matrix.scale(s), self.layout)
    }

    pub fn apply_vec(&self, v: &[C64]) -> Vec<C64> {
        self.matrix.matvec(v)
    }

    pub fn apply(&self, rho: &Mat<C64>) -> Mat<C64> {
        unvectorize(&self.apply_vec(&vectorize(rho)), self.op_dim)
    }

    pub fn norm_inf(&self) -> f64 {
        self.matrix.norm_inf()
    }

    /// Positions of the diagonal entries `ρ_ii` in the vectorized state.
    pub fn diagonal_positions(&self) -> Vec<usize> {
        (0..self.op_dim).map(|i| i * (self.op_dim + 1)).collect()
    }

    /// `max_j |Σ_i L[(i,i), j]|`; zero for a trace-preserving map.
    pub fn trace_defect(&self) -> f64 {
        let mut sums = vec![ZERO; self.dim()];
        for p in self.diagonal_positions() {
            for (c, v) in self.matrix.row(p) {
                sums[c] += v;
            }
        }
        sums.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

/// Lindblad generator `-i[H, ·] + Σ rate 𝒟[c]`. Zero-rate channels are
/// skipped.
pub fn liouvillian(h: &Operator, channels: &[(f64, Operator)]) -> Result<Superoperator> {
    let scale = h.max_abs().max(1.0);
    let defect = h.hermiticity_defect();
    if defect > 1e-12 * scale {
        return Err(Error::Parameter(format!("Hamiltonian is not Hermitian: defect {defect:e}")));
    }
    let mut l = Superoperator::hamiltonian(h);
    for (rate, c) in channels {
        if c.dim() != h.dim() {
            return Err(Error::Layout(format!(
                "collapse operator has dimension {}, Hamiltonian has {}",
                c.dim(),
                h.dim()
            )));
        }
        if *rate == 0.0 {
            continue;
        }
        l = l.add(&Superoperator::dissipator(c, *rate)?);
    }
    Ok(l)
}
