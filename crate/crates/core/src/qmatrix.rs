//! Dense complex Hermitian linear algebra on operators and states.
//!
//! Matrix functions are built on one eigendecomposition path,
//! [`HermitianOperator::eigen`].

use std::fmt;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{dim_err, domain_err, QcapError, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Default tolerance on `‖M − M†‖_max`.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Eigenvalues above `-PSD_TOL` count as nonnegative.
pub const PSD_TOL: f64 = 1e-9;
/// Allowed deviation of a state's trace (or a pure state's norm) from 1.
pub const TRACE_TOL: f64 = 1e-9;
/// Eigenvalues of `A − B` in `[-TIE_TOL, TIE_TOL]` belong to `{A ≥ B}`.
pub const TIE_TOL: f64 = 1e-12;
/// Default support threshold, relative to the largest eigenvalue.
pub const RANK_TOL: f64 = 1e-10;

pub(crate) const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[inline]
pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Eigendecomposition of a Hermitian operator, eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector for `values[k]`.
    pub vectors: CMatrix,
}

impl Spectrum {
    /// Rebuilds `Σ_k f(λ_k) |v_k⟩⟨v_k|`.
    pub fn rebuild(&self, f: impl Fn(f64) -> f64) -> HermitianOperator {
        let d = self.values.len();
        let mut scaled = self.vectors.clone();
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            for i in 0..d {
                scaled[(i, k)] *= w;
            }
        }
        HermitianOperator::from_matrix_unchecked(&scaled * self.vectors.adjoint())
    }

    /// Projector onto the span of the eigenvectors selected by `keep`.
    pub fn projector_where(&self, keep: impl Fn(f64) -> bool) -> HermitianOperator {
        self.rebuild(|l| if keep(l) { 1.0 } else { 0.0 })
    }

    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Support threshold `rank_tol · max(λ_max, 0)`, floored at machine scale.
    pub fn support_threshold(&self, rank_tol: f64) -> f64 {
        (rank_tol * self.max().max(0.0)).max(1e-300)
    }

    pub fn rank(&self, rank_tol: f64) -> usize {
        let thr = self.support_threshold(rank_tol);
        self.values.iter().filter(|&&l| l > thr).count()
    }

    pub fn column(&self, k: usize) -> CVector {
        self.vectors.column(k).into_owned()
    }
}

/// A square complex matrix that is Hermitian within tolerance.
///
/// Construction symmetrizes the stored matrix to `(M + M†)/2`, so downstream
/// code can rely on exact Hermiticity.
#[derive(Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl fmt::Debug for HermitianOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HermitianOperator(dim={}) {}", self.dim(), self.matrix)
    }
}

impl HermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, HERMITICITY_TOL)
    }

    pub fn with_tolerance(matrix: CMatrix, hermiticity_tol: f64) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return dim_err(format!("operator must be square, got {}x{}", matrix.nrows(), matrix.ncols()));
        }
        if matrix.nrows() == 0 {
            return dim_err("operator dimension must be at least 1");
        }
        let dev = max_abs(&(&matrix - matrix.adjoint()));
        if dev > hermiticity_tol {
            return domain_err(format!("operator is not Hermitian: ‖M − M†‖_max = {dev:.3e}"));
        }
        Ok(Self::from_matrix_unchecked(matrix))
    }

    /// Symmetrizes without checking. For matrices Hermitian by construction.
    pub fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        let adj = matrix.adjoint();
        let mut matrix = matrix;
        matrix += adj;
        matrix.scale_mut(0.5);
        Self { matrix }
    }

    pub fn identity(d: usize) -> Self {
        Self { matrix: CMatrix::identity(d, d) }
    }

    pub fn zeros(d: usize) -> Self {
        Self { matrix: CMatrix::zeros(d, d) }
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let d = entries.len();
        let mut m = CMatrix::zeros(d, d);
        for (i, &x) in entries.iter().enumerate() {
            m[(i, i)] = c(x);
        }
        Self { matrix: m }
    }

    /// `|v⟩⟨v|` (not normalized).
    pub fn outer(v: &CVector) -> Self {
        Self::from_matrix_unchecked(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).sum()
    }

    /// Eigendecomposition, eigenvalues sorted in descending order.
    pub fn eigen(&self) -> Spectrum {
        let d = self.dim();
        if is_diagonal(&self.matrix) {
            let mut idx: Vec<usize> = (0..d).collect();
            idx.sort_by(|&a, &b| self.matrix[(b, b)].re.total_cmp(&self.matrix[(a, a)].re));
            let mut vectors = CMatrix::zeros(d, d);
            let values = idx
                .iter()
                .enumerate()
                .map(|(k, &i)| {
                    vectors[(i, k)] = ONE;
                    self.matrix[(i, i)].re
                })
                .collect();
            return Spectrum { values, vectors };
        }
        let eig = robust_eigen(&self.matrix);
        let mut idx: Vec<usize> = (0..d).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut vectors = CMatrix::zeros(d, d);
        let mut values = Vec::with_capacity(d);
        for (k, &i) in idx.iter().enumerate() {
            values.push(eig.eigenvalues[i]);
            vectors.set_column(k, &eig.eigenvectors.column(i));
        }
        Spectrum { values, vectors }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        if is_diagonal(&self.matrix) {
            let mut v: Vec<f64> = (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            return v;
        }
        let mut v: Vec<f64> = self.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().unwrap()
    }

    /// Applies a real function to the spectrum.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Self {
        self.eigen().rebuild(f)
    }

    /// Square root with negative round-off clamped to zero.
    pub fn sqrt_psd(&self) -> Self {
        self.map_spectrum(|l| l.max(0.0).sqrt())
    }

    /// Moore–Penrose style power on the support (`λ^p` for `λ` above the
    /// support threshold, 0 elsewhere). Valid for any real `p`.
    pub fn support_power(&self, p: f64, rank_tol: f64) -> Self {
        let eig = self.eigen();
        let thr = eig.support_threshold(rank_tol);
        eig.rebuild(|l| if l > thr { l.powf(p) } else { 0.0 })
    }

    /// `log₂` on the support, 0 on the kernel.
    pub fn support_log2(&self, rank_tol: f64) -> Self {
        let eig = self.eigen();
        let thr = eig.support_threshold(rank_tol);
        eig.rebuild(|l| if l > thr { l.log2() } else { 0.0 })
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self { matrix: self.matrix.kronecker(&other.matrix) }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { matrix: self.matrix.scale(s) }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { matrix: &self.matrix + &other.matrix }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { matrix: &self.matrix - &other.matrix }
    }

    /// `Re Tr[self · other]`.
    pub fn inner(&self, other: &Self) -> f64 {
        trace_product(&self.matrix, &other.matrix).re
    }

    /// `X · self · X†` for an arbitrary (possibly rectangular) `X`.
    pub fn conjugate_by(&self, x: &CMatrix) -> Self {
        Self::from_matrix_unchecked(x * &self.matrix * x.adjoint())
    }

    /// `√P · self · √P`, the sandwich used throughout the operator-smoothed quantities.
    pub fn sandwich(&self, sqrt_p: &Self) -> Self {
        Self::from_matrix_unchecked(&sqrt_p.matrix * &self.matrix * &sqrt_p.matrix)
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    pub(crate) fn check_same_dim(&self, other: &Self, what: &str) -> Result<()> {
        if self.dim() != other.dim() {
            return dim_err(format!("{what}: dimension mismatch {} vs {}", self.dim(), other.dim()));
        }
        Ok(())
    }
}

/// A positive semidefinite operator of unit trace, or of trace at most one
/// when flagged subnormalized.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    op: HermitianOperator,
    subnormalized: bool,
}

impl Deref for DensityOperator {
    type Target = HermitianOperator;
    fn deref(&self) -> &HermitianOperator {
        &self.op
    }
}

impl DensityOperator {
    pub fn new(op: HermitianOperator) -> Result<Self> {
        Self::check_psd(&op)?;
        let tr = op.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return domain_err(format!("state trace {tr} is not 1"));
        }
        Ok(Self { op, subnormalized: false })
    }

    pub fn new_subnormalized(op: HermitianOperator) -> Result<Self> {
        Self::check_psd(&op)?;
        let tr = op.trace();
        if tr > 1.0 + TRACE_TOL {
            return domain_err(format!("subnormalized state has trace {tr} > 1"));
        }
        Ok(Self { op, subnormalized: true })
    }

    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        Self::new(HermitianOperator::new(m)?)
    }

    fn check_psd(op: &HermitianOperator) -> Result<()> {
        let min = op.min_eigenvalue();
        if min < -PSD_TOL {
            return domain_err(format!("operator is not positive semidefinite (λ_min = {min:.3e})"));
        }
        Ok(())
    }

    /// Wraps an operator known to be a state (up to round-off) without checks.
    pub(crate) fn from_op_unchecked(op: HermitianOperator, subnormalized: bool) -> Self {
        Self { op, subnormalized }
    }

    /// Divides by the trace.
    pub fn normalized(op: HermitianOperator) -> Result<Self> {
        let tr = op.trace();
        if tr <= 0.0 {
            return domain_err("cannot normalize an operator with nonpositive trace");
        }
        Self::new(op.scale(1.0 / tr))
    }

    pub fn pure(psi: &PureState) -> Self {
        Self { op: HermitianOperator::outer(&psi.amplitudes), subnormalized: false }
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self { op: HermitianOperator::identity(d).scale(1.0 / d as f64), subnormalized: false }
    }

    pub fn diagonal(probs: &[f64]) -> Result<Self> {
        Self::new(HermitianOperator::diagonal(probs))
    }

    pub fn basis(d: usize, i: usize) -> Self {
        let mut p = vec![0.0; d];
        p[i] = 1.0;
        Self { op: HermitianOperator::diagonal(&p), subnormalized: false }
    }

    pub fn op(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn into_op(self) -> HermitianOperator {
        self.op
    }

    pub fn is_subnormalized(&self) -> bool {
        self.subnormalized
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self { op: self.op.kron(&other.op), subnormalized: self.subnormalized || other.subnormalized }
    }
}

/// A unit vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
}

impl PureState {
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return dim_err("pure state must have dimension at least 1");
        }
        let n = amplitudes.norm();
        if (n - 1.0).abs() > TRACE_TOL {
            return domain_err(format!("pure state norm {n} is not 1"));
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalize(v: CVector) -> Result<Self> {
        let n = v.norm();
        if n == 0.0 {
            return domain_err("cannot normalize the zero vector");
        }
        Ok(Self { amplitudes: v.unscale(n) })
    }

    pub(crate) fn from_vector_unchecked(amplitudes: CVector) -> Self {
        Self { amplitudes }
    }

    pub fn basis(d: usize, i: usize) -> Self {
        let mut v = CVector::zeros(d);
        v[i] = ONE;
        Self { amplitudes: v }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn density(&self) -> DensityOperator {
        DensityOperator::pure(self)
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self { amplitudes: self.amplitudes.kronecker(&other.amplitudes) }
    }

    /// `|⟨self|other⟩|`.
    pub fn overlap(&self, other: &Self) -> f64 {
        self.amplitudes.dotc(&other.amplitudes).norm()
    }
}

/// Tensor-factor bookkeeping: dimensions and names of the factors of a
/// composite space, in Kronecker order.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FactorSpec {
    pub dims: Vec<usize>,
    pub labels: Vec<String>,
}

impl FactorSpec {
    pub fn new<S: Into<String>>(dims: Vec<usize>, labels: Vec<S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if dims.len() != labels.len() {
            return dim_err(format!("{} dims but {} labels", dims.len(), labels.len()));
        }
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return dim_err("factor dimensions must be positive and nonempty");
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return dim_err(format!("duplicate factor label {l}"));
            }
        }
        Ok(Self { dims, labels })
    }

    /// Two factors, the conventional layout of every conditional quantity:
    /// the conditioned system first, the conditioning system second.
    pub fn bipartite(da: usize, db: usize) -> Self {
        Self::new(vec![da, db], vec!["A", "B"]).expect("positive dims")
    }

    pub fn labeled2(da: usize, la: &str, db: usize, lb: &str) -> Self {
        Self::new(vec![da, db], vec![la, lb]).expect("positive dims")
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| QcapError::Dimension(format!("unknown factor label {label}")))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.dims[self.position(label)?])
    }

    pub(crate) fn check_bipartite(&self) -> Result<(usize, usize)> {
        if self.dims.len() != 2 {
            return dim_err(format!("expected a bipartite factor layout, got {} factors", self.dims.len()));
        }
        Ok((self.dims[0], self.dims[1]))
    }

    fn keep_mask(&self, keep: &[&str]) -> Result<Vec<bool>> {
        let mut mask = vec![false; self.dims.len()];
        for l in keep {
            mask[self.position(l)?] = true;
        }
        Ok(mask)
    }
}

/// Flat-index offsets of the kept and traced sub-indices.
fn split_offsets(dims: &[usize], keep: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let n = dims.len();
    let mut strides = vec![1usize; n];
    for k in (0..n.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let build = |sel: bool| -> Vec<usize> {
        let mut offs = vec![0usize];
        for k in 0..n {
            if keep[k] == sel {
                let mut next = Vec::with_capacity(offs.len() * dims[k]);
                for &o in &offs {
                    for i in 0..dims[k] {
                        next.push(o + i * strides[k]);
                    }
                }
                offs = next;
            }
        }
        offs
    };
    (build(true), build(false))
}

/// Partial trace of a square matrix given raw dims and a kept-factor mask.
pub(crate) fn partial_trace_raw(m: &CMatrix, dims: &[usize], keep: &[bool]) -> CMatrix {
    let (ko, to) = split_offsets(dims, keep);
    let kd = ko.len();
    let mut out = CMatrix::zeros(kd, kd);
    for (i, &oi) in ko.iter().enumerate() {
        for (j, &oj) in ko.iter().enumerate() {
            let mut s = ZERO;
            for &t in &to {
                s += m[(oi + t, oj + t)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// Reshapes a vector of the composite space into a (kept × traced) matrix.
pub(crate) fn vector_split(v: &CVector, dims: &[usize], keep: &[bool]) -> CMatrix {
    let (ko, to) = split_offsets(dims, keep);
    CMatrix::from_fn(ko.len(), to.len(), |i, j| v[ko[i] + to[j]])
}

/// `Tr_{traced}` of the operator, keeping the factors named in `keep` in
/// their original order.
pub fn partial_trace(op: &HermitianOperator, factors: &FactorSpec, keep: &[&str]) -> Result<HermitianOperator> {
    if factors.total_dim() != op.dim() {
        return dim_err(format!(
            "factor dims {:?} (product {}) inconsistent with operator dim {}",
            factors.dims,
            factors.total_dim(),
            op.dim()
        ));
    }
    let mask = factors.keep_mask(keep)?;
    Ok(HermitianOperator::from_matrix_unchecked(partial_trace_raw(op.matrix(), &factors.dims, &mask)))
}

/// Reduced state of a density operator.
pub fn reduce(rho: &DensityOperator, factors: &FactorSpec, keep: &[&str]) -> Result<DensityOperator> {
    let op = partial_trace(rho, factors, keep)?;
    Ok(DensityOperator::from_op_unchecked(op, rho.is_subnormalized()))
}

/// Reduced state of a pure state, computed without forming the full projector.
pub fn reduce_pure(psi: &PureState, factors: &FactorSpec, keep: &[&str]) -> Result<DensityOperator> {
    if factors.total_dim() != psi.dim() {
        return dim_err(format!("factor dims {:?} inconsistent with state dim {}", factors.dims, psi.dim()));
    }
    let mask = factors.keep_mask(keep)?;
    let x = vector_split(psi.amplitudes(), &factors.dims, &mask);
    Ok(DensityOperator::from_op_unchecked(HermitianOperator::from_matrix_unchecked(&x * x.adjoint()), false))
}

/// `Tr_A` of an operator on `A ⊗ B`.
pub(crate) fn trace_first(m: &HermitianOperator, da: usize, db: usize) -> HermitianOperator {
    HermitianOperator::from_matrix_unchecked(partial_trace_raw(m.matrix(), &[da, db], &[false, true]))
}

/// `Tr_B` of an operator on `A ⊗ B`.
pub(crate) fn trace_second(m: &HermitianOperator, da: usize, db: usize) -> HermitianOperator {
    HermitianOperator::from_matrix_unchecked(partial_trace_raw(m.matrix(), &[da, db], &[true, false]))
}

/// Uhlmann fidelity `Tr√(√ρ σ √ρ)`, extended to subnormalized operators.
pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    fidelity_psd(rho, sigma)
}

fn rounded_sqrt(x: &HermitianOperator) -> HermitianOperator {
    let eig = x.eigen();
    let thr = 4.0 * f64::EPSILON * x.dim() as f64 * eig.max().max(0.0);
    eig.rebuild(|l| if l > thr { l.sqrt() } else { 0.0 })
}

pub(crate) fn fidelity_psd(rho: &HermitianOperator, sigma: &HermitianOperator) -> Result<f64> {
    rho.check_same_dim(sigma, "fidelity")?;
    // ‖√ρ√σ‖₁: the singular values are the square roots of the eigenvalues of √ρσ√ρ, and
    // taking them directly keeps near-zero eigenvalues from blowing up under √.
    // Eigenvalues at the eigensolver's rounding level are zeroed first, since
    // √(1e-17) alone would shift F by ~1e-9.
    let prod = rounded_sqrt(rho).matrix() * rounded_sqrt(sigma).matrix();
    let f: f64 = prod.singular_values().iter().sum();
    Ok(f.min(1.0))
}

/// `‖A − B‖₁`, the sum of absolute eigenvalues of the difference.
pub fn trace_distance(a: &HermitianOperator, b: &HermitianOperator) -> Result<f64> {
    a.check_same_dim(b, "trace_distance")?;
    Ok(trace_norm(&a.sub(b)))
}

pub fn trace_norm(x: &HermitianOperator) -> f64 {
    x.eigenvalues().iter().map(|l| l.abs()).sum()
}

/// The projector `{A ≥ B}` onto the nonnegative eigenspace of `A − B`.
/// Near-zero eigenvalues (within [`TIE_TOL`]) are assigned to this side.
pub fn positive_part_projector(a: &HermitianOperator, b: &HermitianOperator) -> Result<HermitianOperator> {
    a.check_same_dim(b, "positive_part_projector")?;
    Ok(a.sub(b).eigen().projector_where(|l| l >= -TIE_TOL))
}

/// `Tr[{X ≥ 0} X]`, the sum of the nonnegative eigenvalues.
pub fn positive_part_trace(x: &HermitianOperator) -> f64 {
    x.eigenvalues().iter().filter(|&&l| l > 0.0).sum()
}

/// Projector onto the eigenvectors with eigenvalue above
/// `rank_tol · λ_max(ρ)`.
pub fn support_projector(rho: &HermitianOperator, rank_tol: f64) -> HermitianOperator {
    let eig = rho.eigen();
    let thr = eig.support_threshold(rank_tol);
    eig.projector_where(|l| l > thr)
}

/// Schmidt-form purification `Σ_i √λ_i |e_i⟩ ⊗ |i⟩` with purifier dimension
/// equal to `rank(ρ)`. The system comes first in the Kronecker order.
pub fn purify(rho: &DensityOperator) -> Result<PureState> {
    if rho.is_subnormalized() && (rho.trace() - 1.0).abs() > TRACE_TOL {
        return domain_err("purify requires a normalized state");
    }
    Ok(purify_psd(rho).0)
}

/// Purification of any PSD operator (norm² = trace). Returns the vector and
/// the purifier dimension.
pub(crate) fn purify_psd(rho: &HermitianOperator) -> (PureState, usize) {
    let d = rho.dim();
    let eig = rho.eigen();
    let r = eig.rank(RANK_TOL).max(1);
    let mut v = CVector::zeros(d * r);
    for k in 0..r {
        let w = eig.values[k].max(0.0).sqrt();
        for i in 0..d {
            v[i * r + k] = eig.vectors[(i, k)] * w;
        }
    }
    (PureState::from_vector_unchecked(v), r)
}

/// `(1/√m) Σ_{i<m} |i⟩ ⊗ |i⟩` in `ℂ^d ⊗ ℂ^d`.
pub fn max_entangled(m: usize, d: usize) -> Result<PureState> {
    if m == 0 || m > d {
        return domain_err(format!("maximally entangled rank m={m} must satisfy 1 ≤ m ≤ d={d}"));
    }
    let mut v = CVector::zeros(d * d);
    let a = 1.0 / (m as f64).sqrt();
    for i in 0..m {
        v[i * d + i] = c(a);
    }
    Ok(PureState::from_vector_unchecked(v))
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `symmetric_eigen` can return NaN eigenvectors on highly degenerate
/// inputs. Shifting by a multiple of the identity leaves the eigenvectors
/// unchanged and avoids the breakdown.
fn robust_eigen(m: &CMatrix) -> nalgebra::SymmetricEigen<Complex64, nalgebra::Dyn> {
    let finite = |e: &nalgebra::SymmetricEigen<Complex64, nalgebra::Dyn>| {
        e.eigenvalues.iter().all(|l| l.is_finite()) && e.eigenvectors.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    };
    let eig = m.clone().symmetric_eigen();
    if finite(&eig) {
        return eig;
    }
    let d = m.nrows();
    let scale = m.camax().max(1e-300);
    let mut last = eig;
    for c in [1.0, 0.618_033_988_749_895, 2.718_281_828_459_045] {
        let shift = c * scale;
        let mut e = (m + CMatrix::identity(d, d) * Complex64::new(shift, 0.0)).symmetric_eigen();
        e.eigenvalues.iter_mut().for_each(|l| *l -= shift);
        if finite(&e) {
            return e;
        }
        last = e;
    }
    last
}

pub(crate) fn is_diagonal(m: &CMatrix) -> bool {
    let d = m.nrows();
    for j in 0..d {
        for i in 0..d {
            if i != j && m[(i, j)] != ZERO {
                return false;
            }
        }
    }
    true
}

/// `Tr[AB]` without forming the product.
pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let mut s = ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

/// Isometry check `‖V†V − 𝟙‖_max ≤ tol`.
pub fn is_isometry(v: &CMatrix, tol: f64) -> bool {
    let g = v.adjoint() * v;
    max_abs(&(g - CMatrix::identity(v.ncols(), v.ncols()))) <= tol
}
