//! Quantum channels in Kraus form with their dilations and derived maps.
//! Also the tripartite code states and correlated channel sequences.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{dim_err, domain_err, QcapError, Result};
use crate::qmatrix::{
    c, is_isometry, max_abs, reduce_pure, CMatrix, CVector, DensityOperator, FactorSpec, HermitianOperator, PureState,
    RANK_TOL, ZERO,
};
use crate::sampling::{haar_isometry, seeded_rng};

/// `‖Σ K†K − 𝟙‖_max` allowed for a valid channel.
pub const TP_TOL: f64 = 1e-9;
/// Kraus operators with Frobenius norm below this are discarded.
pub const KRAUS_DROP_TOL: f64 = 1e-12;
/// Largest `n · log₂ d` accepted by [`memory_sequence`].
pub const SEQUENCE_LOG_DIM_LIMIT: f64 = 12.0;
/// Cap on the number of complex entries of a materialized Kraus list.
pub const KRAUS_ENTRY_LIMIT: usize = 1 << 24;

/// A CPTP map `𝔅(ℂ^in_dim) → 𝔅(ℂ^out_dim)` given by Kraus operators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChannel", into = "RawChannel")]
pub struct KrausChannel {
    in_dim: usize,
    out_dim: usize,
    kraus: Vec<CMatrix>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    in_dim: usize,
    out_dim: usize,
    #[serde(with = "codec::matrices")]
    kraus: Vec<CMatrix>,
}

impl TryFrom<RawChannel> for KrausChannel {
    type Error = QcapError;
    fn try_from(r: RawChannel) -> Result<Self> {
        KrausChannel::new(r.in_dim, r.out_dim, r.kraus)
    }
}

impl From<KrausChannel> for RawChannel {
    fn from(k: KrausChannel) -> Self {
        RawChannel { in_dim: k.in_dim, out_dim: k.out_dim, kraus: k.kraus }
    }
}

impl KrausChannel {
    /// Validates shapes and trace preservation, and drops negligible operators.
    pub fn new(in_dim: usize, out_dim: usize, kraus: Vec<CMatrix>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return dim_err("channel dimensions must be positive");
        }
        if kraus.is_empty() {
            return dim_err("channel needs at least one Kraus operator");
        }
        for (k, m) in kraus.iter().enumerate() {
            if m.nrows() != out_dim || m.ncols() != in_dim {
                return dim_err(format!(
                    "Kraus operator {k} is {}x{}, expected {out_dim}x{in_dim}",
                    m.nrows(),
                    m.ncols()
                ));
            }
        }
        let ch = Self::from_kraus_unchecked(in_dim, out_dim, kraus);
        let dev = ch.tp_deviation();
        if dev > TP_TOL {
            return domain_err(format!("channel is not trace preserving: ‖ΣK†K − 𝟙‖_max = {dev:.3e}"));
        }
        Ok(ch)
    }

    pub(crate) fn from_kraus_unchecked(in_dim: usize, out_dim: usize, kraus: Vec<CMatrix>) -> Self {
        let mut kept: Vec<CMatrix> = kraus.into_iter().filter(|k| k.norm() >= KRAUS_DROP_TOL).collect();
        if kept.is_empty() {
            kept.push(CMatrix::zeros(out_dim, in_dim));
        }
        Self { in_dim, out_dim, kraus: kept }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    /// Number of Kraus operators, which is also the Stinespring environment dimension.
    pub fn env_dim(&self) -> usize {
        self.kraus.len()
    }

    pub fn tp_deviation(&self) -> f64 {
        let mut s = CMatrix::zeros(self.in_dim, self.in_dim);
        for k in &self.kraus {
            s += k.adjoint() * k;
        }
        max_abs(&(s - CMatrix::identity(self.in_dim, self.in_dim)))
    }

    fn apply_op(&self, x: &HermitianOperator) -> HermitianOperator {
        let mut out = CMatrix::zeros(self.out_dim, self.out_dim);
        for k in &self.kraus {
            out += k * x.matrix() * k.adjoint();
        }
        HermitianOperator::from_matrix_unchecked(out)
    }

    /// `Σ_k K_k ρ K_k†`.
    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        self.apply_hermitian(rho).map(|op| DensityOperator::from_op_unchecked(op, rho.is_subnormalized()))
    }

    /// The same map on an arbitrary Hermitian input.
    pub fn apply_hermitian(&self, x: &HermitianOperator) -> Result<HermitianOperator> {
        if x.dim() != self.in_dim {
            return dim_err(format!("channel input dim {} but operator dim {}", self.in_dim, x.dim()));
        }
        Ok(self.apply_op(x))
    }

    /// `(id_A ⊗ Φ)` applied to an operator on `A ⊗ in`.
    pub fn apply_on_second(&self, x: &HermitianOperator, da: usize) -> Result<HermitianOperator> {
        if x.dim() != da * self.in_dim {
            return dim_err(format!("operator dim {} is not {da}·{}", x.dim(), self.in_dim));
        }
        let id = CMatrix::identity(da, da);
        let mut out = CMatrix::zeros(da * self.out_dim, da * self.out_dim);
        for k in &self.kraus {
            let big = id.kronecker(k);
            out += &big * x.matrix() * big.adjoint();
        }
        Ok(HermitianOperator::from_matrix_unchecked(out))
    }

    /// Stinespring isometry `V: ℂ^in → ℂ^out ⊗ ℂ^env` with
    /// `V[(b·env + k), a] = K_k[b, a]`.
    pub fn stinespring(&self) -> CMatrix {
        let e = self.env_dim();
        let mut v = CMatrix::zeros(self.out_dim * e, self.in_dim);
        for (k, km) in self.kraus.iter().enumerate() {
            for b in 0..self.out_dim {
                for a in 0..self.in_dim {
                    v[(b * e + k, a)] = km[(b, a)];
                }
            }
        }
        v
    }

    /// The complementary channel `ρ ↦ Tr_B[VρV†]` onto the environment.
    pub fn complement(&self) -> KrausChannel {
        let e = self.env_dim();
        let ops = (0..self.out_dim)
            .map(|b| CMatrix::from_fn(e, self.in_dim, |k, a| self.kraus[k][(b, a)]))
            .collect();
        Self::from_kraus_unchecked(self.in_dim, e, ops)
    }

    /// The unital adjoint map `X ↦ Σ K† X K`.
    pub fn adjoint(&self) -> AdjointMap {
        AdjointMap { in_dim: self.out_dim, out_dim: self.in_dim, ops: self.kraus.iter().map(|k| k.adjoint()).collect() }
    }

    /// `Φ|_S`: the Kraus operators composed with the code isometry.
    pub fn restrict(&self, s: &CodeSubspace) -> Result<KrausChannel> {
        if s.ambient_dim() != self.in_dim {
            return dim_err(format!("subspace ambient dim {} but channel input dim {}", s.ambient_dim(), self.in_dim));
        }
        let w = s.isometry();
        Ok(Self::from_kraus_unchecked(s.code_dim(), self.out_dim, self.kraus.iter().map(|k| k * w).collect()))
    }

    /// `Φ₂ ∘ Φ₁` where `self` is `Φ₁`.
    pub fn then(&self, next: &KrausChannel) -> Result<KrausChannel> {
        if next.in_dim != self.out_dim {
            return dim_err(format!("cannot compose: {} output into {} input", self.out_dim, next.in_dim));
        }
        let mut ops = Vec::with_capacity(self.kraus.len() * next.kraus.len());
        for b in &next.kraus {
            for a in &self.kraus {
                ops.push(b * a);
            }
        }
        Ok(Self::from_kraus_unchecked(self.in_dim, next.out_dim, ops).minimal())
    }

    pub fn tensor(&self, other: &KrausChannel) -> KrausChannel {
        let mut ops = Vec::with_capacity(self.kraus.len() * other.kraus.len());
        for a in &self.kraus {
            for b in &other.kraus {
                ops.push(a.kronecker(b));
            }
        }
        Self { in_dim: self.in_dim * other.in_dim, out_dim: self.out_dim * other.out_dim, kraus: ops }
    }

    pub fn tensor_power(&self, n: usize) -> KrausChannel {
        let mut out = self.clone();
        for _ in 1..n.max(1) {
            out = out.tensor(self);
        }
        out
    }

    /// Normalized Choi state `(id ⊗ Φ)(|Ψ_d⟩⟨Ψ_d|)` on `in ⊗ out`.
    pub fn choi(&self) -> DensityOperator {
        let (din, dout) = (self.in_dim, self.out_dim);
        let scale = 1.0 / (din as f64).sqrt();
        let mut j = CMatrix::zeros(din * dout, din * dout);
        for k in &self.kraus {
            let v = CVector::from_fn(din * dout, |idx, _| k[(idx % dout, idx / dout)] * scale);
            j += &v * v.adjoint();
        }
        DensityOperator::from_op_unchecked(HermitianOperator::from_matrix_unchecked(j), false)
    }

    /// Choi rank: the minimal number of Kraus operators.
    pub fn choi_rank(&self) -> usize {
        self.choi().eigen().rank(RANK_TOL)
    }

    /// An equivalent channel with the minimal number of (mutually
    /// Hilbert–Schmidt orthogonal) Kraus operators, from the Choi spectrum.
    pub fn minimal(&self) -> KrausChannel {
        let (din, dout) = (self.in_dim, self.out_dim);
        if self.kraus.len() <= 1 {
            return self.clone();
        }
        let eig = self.choi().eigen();
        let r = eig.rank(RANK_TOL).max(1);
        let ops = (0..r)
            .map(|k| {
                let w = (din as f64 * eig.values[k].max(0.0)).sqrt();
                CMatrix::from_fn(dout, din, |o, i| eig.vectors[(i * dout + o, k)] * w)
            })
            .collect();
        Self::from_kraus_unchecked(din, dout, ops)
    }

    /// Reference-system code state and its marginals; see [`OmegaStates`].
    pub fn omega_states(&self, s: &CodeSubspace) -> Result<OmegaStates> {
        if s.ambient_dim() != self.in_dim {
            return dim_err(format!("subspace ambient dim {} but channel input dim {}", s.ambient_dim(), self.in_dim));
        }
        let sd = s.code_dim();
        let (db, de) = (self.out_dim, self.env_dim());
        let vw = self.stinespring() * s.isometry();
        let scale = 1.0 / (sd as f64).sqrt();
        let amps = CVector::from_fn(sd * db * de, |idx, _| vw[(idx % (db * de), idx / (db * de))] * scale);
        let omega = PureState::from_vector_unchecked(amps);
        let f = OmegaStates::factors_rbe(sd, db, de);
        let rb = reduce_pure(&omega, &f, &["R", "B"])?;
        let re = reduce_pure(&omega, &f, &["R", "E"])?;
        Ok(OmegaStates { omega, s: sd, db, de, rb, re })
    }

    pub fn is_valid(&self) -> bool {
        self.tp_deviation() <= TP_TOL
    }
}

/// `Φ*`, in Kraus form `{K_k†}`.
#[derive(Clone, Debug)]
pub struct AdjointMap {
    in_dim: usize,
    out_dim: usize,
    ops: Vec<CMatrix>,
}

impl AdjointMap {
    pub fn apply(&self, x: &HermitianOperator) -> Result<HermitianOperator> {
        if x.dim() != self.in_dim {
            return dim_err(format!("adjoint map input dim {} but operator dim {}", self.in_dim, x.dim()));
        }
        let mut out = CMatrix::zeros(self.out_dim, self.out_dim);
        for k in &self.ops {
            out += k * x.matrix() * k.adjoint();
        }
        Ok(HermitianOperator::from_matrix_unchecked(out))
    }

    /// `(id_A ⊗ Φ*)` on an operator of `A ⊗ out`.
    pub fn apply_on_second(&self, x: &HermitianOperator, da: usize) -> Result<HermitianOperator> {
        if x.dim() != da * self.in_dim {
            return dim_err(format!("operator dim {} is not {da}·{}", x.dim(), self.in_dim));
        }
        let id = CMatrix::identity(da, da);
        let mut out = CMatrix::zeros(da * self.out_dim, da * self.out_dim);
        for k in &self.ops {
            let big = id.kronecker(k);
            out += &big * x.matrix() * big.adjoint();
        }
        Ok(HermitianOperator::from_matrix_unchecked(out))
    }
}

/// A subspace of the channel input, held as a `d × s` isometry whose columns
/// form an orthonormal basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSubspace", into = "RawSubspace")]
pub struct CodeSubspace {
    isometry: CMatrix,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawSubspace {
    ambient_dim: usize,
    code_dim: usize,
    #[serde(with = "codec::matrix")]
    isometry: CMatrix,
}

impl TryFrom<RawSubspace> for CodeSubspace {
    type Error = QcapError;
    fn try_from(r: RawSubspace) -> Result<Self> {
        if r.isometry.nrows() != r.ambient_dim || r.isometry.ncols() != r.code_dim {
            return dim_err("isometry shape does not match ambient_dim × code_dim");
        }
        CodeSubspace::new(r.isometry)
    }
}

impl From<CodeSubspace> for RawSubspace {
    fn from(s: CodeSubspace) -> Self {
        RawSubspace { ambient_dim: s.ambient_dim(), code_dim: s.code_dim(), isometry: s.isometry }
    }
}

impl CodeSubspace {
    pub fn new(isometry: CMatrix) -> Result<Self> {
        if isometry.ncols() == 0 || isometry.ncols() > isometry.nrows() {
            return dim_err(format!("code dim {} must be in 1..={}", isometry.ncols(), isometry.nrows()));
        }
        if !is_isometry(&isometry, 1e-10) {
            return domain_err("subspace basis is not orthonormal");
        }
        Ok(Self { isometry })
    }

    pub(crate) fn from_isometry_unchecked(isometry: CMatrix) -> Self {
        Self { isometry }
    }

    /// The whole space with its canonical basis.
    pub fn full(d: usize) -> Self {
        Self { isometry: CMatrix::identity(d, d) }
    }

    /// Span of the first `s` canonical basis vectors.
    pub fn canonical(d: usize, s: usize) -> Result<Self> {
        if s == 0 || s > d {
            return dim_err(format!("code dim {s} must be in 1..={d}"));
        }
        Ok(Self { isometry: CMatrix::identity(d, s) })
    }

    pub fn haar(d: usize, s: usize, seed: u64) -> Result<Self> {
        if s == 0 || s > d {
            return dim_err(format!("code dim {s} must be in 1..={d}"));
        }
        Ok(Self { isometry: haar_isometry(d, s, &mut seeded_rng(seed, 0)) })
    }

    pub fn ambient_dim(&self) -> usize {
        self.isometry.nrows()
    }

    pub fn code_dim(&self) -> usize {
        self.isometry.ncols()
    }

    pub fn isometry(&self) -> &CMatrix {
        &self.isometry
    }

    /// `Π_S = W W†`.
    pub fn projector(&self) -> HermitianOperator {
        HermitianOperator::from_matrix_unchecked(&self.isometry * self.isometry.adjoint())
    }
}

/// `|Ω^{RBE}⟩ = (𝟙_R ⊗ V)|Ψ_S⟩` with `|Ψ_S⟩ = s^{-1/2} Σ_i |i⟩_R|ς_i⟩_A`, and
/// its two marginals `ω^{RB}`, `ω^{RE}`. Kronecker order is `R ⊗ B ⊗ E`.
#[derive(Clone, Debug)]
pub struct OmegaStates {
    pub omega: PureState,
    pub s: usize,
    pub db: usize,
    pub de: usize,
    pub rb: DensityOperator,
    pub re: DensityOperator,
}

impl OmegaStates {
    pub fn factors_rbe(s: usize, db: usize, de: usize) -> FactorSpec {
        FactorSpec::new(vec![s, db, de], vec!["R", "B", "E"]).expect("positive dims")
    }

    pub fn rbe_factors(&self) -> FactorSpec {
        Self::factors_rbe(self.s, self.db, self.de)
    }

    pub fn rb_factors(&self) -> FactorSpec {
        FactorSpec::labeled2(self.s, "R", self.db, "B")
    }

    pub fn re_factors(&self) -> FactorSpec {
        FactorSpec::labeled2(self.s, "R", self.de, "E")
    }
}

/// Weyl operator `X^a Z^b` on `ℂ^d`.
fn weyl(d: usize, a: usize, b: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    for j in 0..d {
        let phase = 2.0 * PI * ((b * j) % d) as f64 / d as f64;
        m[((j + a) % d, j)] = Complex64::from_polar(1.0, phase);
    }
    m
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) || x.is_nan() {
        return domain_err(format!("{name} = {x} must lie in [0, 1]"));
    }
    Ok(())
}

pub fn identity(d: usize) -> Result<KrausChannel> {
    KrausChannel::new(d, d, vec![CMatrix::identity(d, d)])
}

pub fn unitary(u: CMatrix) -> Result<KrausChannel> {
    let d = u.nrows();
    KrausChannel::new(d, d, vec![u])
}

/// `ρ ↦ (1−p)ρ + p𝟙/d`, via the Weyl basis.
pub fn depolarizing(d: usize, p: f64) -> Result<KrausChannel> {
    check_unit("p", p)?;
    if d == 0 {
        return dim_err("dimension must be positive");
    }
    KrausChannel::new(d, d, depolarizing_kraus(d, p))
}

fn depolarizing_weights(d: usize, p: f64) -> Vec<f64> {
    let d2 = (d * d) as f64;
    (0..d * d).map(|k| if k == 0 { 1.0 - p + p / d2 } else { p / d2 }).collect()
}

fn depolarizing_kraus(d: usize, p: f64) -> Vec<CMatrix> {
    depolarizing_weights(d, p)
        .iter()
        .enumerate()
        .map(|(k, &w)| weyl(d, k / d, k % d).scale(w.sqrt()))
        .collect()
}

pub fn amplitude_damping(gamma: f64) -> Result<KrausChannel> {
    check_unit("gamma", gamma)?;
    let k0 = CMatrix::from_row_slice(2, 2, &[c(1.0), ZERO, ZERO, c((1.0 - gamma).sqrt())]);
    let k1 = CMatrix::from_row_slice(2, 2, &[ZERO, c(gamma.sqrt()), ZERO, ZERO]);
    KrausChannel::new(2, 2, vec![k0, k1])
}

pub fn dephasing(p: f64) -> Result<KrausChannel> {
    check_unit("p", p)?;
    let k0 = CMatrix::identity(2, 2).scale((1.0 - p).sqrt());
    let k1 = CMatrix::from_row_slice(2, 2, &[c(1.0), ZERO, ZERO, c(-1.0)]).scale(p.sqrt());
    KrausChannel::new(2, 2, vec![k0, k1])
}

/// Random channel from a Haar isometry `ℂ^{d_in} → ℂ^{d_out} ⊗ ℂ^{r}`.
pub fn random_channel(d_in: usize, d_out: usize, kraus_rank: usize, seed: u64) -> Result<KrausChannel> {
    if d_in == 0 || d_out == 0 || kraus_rank == 0 {
        return dim_err("dimensions and Kraus rank must be positive");
    }
    if d_out * kraus_rank < d_in {
        return domain_err(format!("d_out·kraus_rank = {} is smaller than d_in = {d_in}", d_out * kraus_rank));
    }
    let v = haar_isometry(d_out * kraus_rank, d_in, &mut seeded_rng(seed, 0));
    let ops = (0..kraus_rank)
        .map(|k| CMatrix::from_fn(d_out, d_in, |b, a| v[(b * kraus_rank + k, a)]))
        .collect();
    Ok(KrausChannel::from_kraus_unchecked(d_in, d_out, ops))
}

/// The channel family of a [`ChannelSequence`].
#[derive(Clone, Debug, PartialEq)]
pub enum SequenceGenerator {
    /// `Φ_n = Φ^{⊗n}`.
    Iid(KrausChannel),
    /// `Φ_n = Σ_path Pr[path] ⊗_i Dep(p_{path_i})` for a two-state Markov
    /// chain over depolarizing strengths.
    MarkovDepolarizing { d: usize, p: [f64; 2], transition: [[f64; 2]; 2], initial: [f64; 2] },
}

/// `{Φ_n}` for `n = 1..=n_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSequence {
    pub generator: SequenceGenerator,
    pub n_max: usize,
}

/// JSON form `{"kind", "params", "n_max"}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSpec {
    pub kind: String,
    pub params: serde_json::Value,
    pub n_max: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IidParams {
    channel: KrausChannel,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkovParams {
    d: usize,
    p: [f64; 2],
    transition: [[f64; 2]; 2],
    initial: Option<[f64; 2]>,
}

impl SequenceSpec {
    pub fn build(&self) -> Result<ChannelSequence> {
        let params = |e: serde_json::Error| QcapError::Domain(format!("params: {e}"));
        match self.kind.as_str() {
            "iid" => {
                let p: IidParams = serde_json::from_value(self.params.clone()).map_err(params)?;
                memory_sequence(SequenceGenerator::Iid(p.channel), self.n_max)
            }
            "markov_depolarizing" => {
                let p: MarkovParams = serde_json::from_value(self.params.clone()).map_err(params)?;
                let initial = match p.initial {
                    Some(i) => i,
                    None => stationary(&p.transition),
                };
                let g = SequenceGenerator::MarkovDepolarizing { d: p.d, p: p.p, transition: p.transition, initial };
                memory_sequence(g, self.n_max)
            }
            other => domain_err(format!("unknown sequence kind {other:?} (expected iid or markov_depolarizing)")),
        }
    }
}

impl From<&ChannelSequence> for SequenceSpec {
    fn from(seq: &ChannelSequence) -> Self {
        let (kind, params) = match &seq.generator {
            SequenceGenerator::Iid(ch) => ("iid", serde_json::json!({ "channel": ch })),
            SequenceGenerator::MarkovDepolarizing { d, p, transition, initial } => (
                "markov_depolarizing",
                serde_json::json!({ "d": d, "p": p, "transition": transition, "initial": initial }),
            ),
        };
        SequenceSpec { kind: kind.into(), params, n_max: seq.n_max }
    }
}

pub(crate) fn stationary(t: &[[f64; 2]; 2]) -> [f64; 2] {
    let a = t[0][1];
    let b = t[1][0];
    if a + b <= 0.0 {
        [0.5, 0.5]
    } else {
        [b / (a + b), a / (a + b)]
    }
}

/// Validates a generator against the `n_max · log₂ d ≤ 12` guard.
pub fn memory_sequence(generator: SequenceGenerator, n_max: usize) -> Result<ChannelSequence> {
    if n_max == 0 {
        return domain_err("n_max must be at least 1");
    }
    let d = match &generator {
        SequenceGenerator::Iid(ch) => ch.in_dim().max(ch.out_dim()),
        SequenceGenerator::MarkovDepolarizing { d, p, transition, initial } => {
            if *d == 0 {
                return dim_err("dimension must be positive");
            }
            check_unit("p[0]", p[0])?;
            check_unit("p[1]", p[1])?;
            for (i, row) in transition.iter().enumerate() {
                check_unit("transition entry", row[0])?;
                check_unit("transition entry", row[1])?;
                if (row[0] + row[1] - 1.0).abs() > 1e-9 {
                    return domain_err(format!("transition row {i} sums to {}", row[0] + row[1]));
                }
            }
            if initial.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (initial[0] + initial[1] - 1.0).abs() > 1e-9 {
                return domain_err("initial distribution must be a probability vector");
            }
            *d
        }
    };
    let load = n_max as f64 * (d as f64).log2();
    if load > SEQUENCE_LOG_DIM_LIMIT + 1e-12 {
        return Err(QcapError::Resource(format!(
            "n_max·log2(d) = {load:.2} exceeds the limit {SEQUENCE_LOG_DIM_LIMIT}"
        )));
    }
    Ok(ChannelSequence { generator, n_max })
}

impl ChannelSequence {
    pub fn is_iid(&self) -> bool {
        matches!(self.generator, SequenceGenerator::Iid(_))
    }

    pub fn single_input_dim(&self) -> usize {
        match &self.generator {
            SequenceGenerator::Iid(ch) => ch.in_dim(),
            SequenceGenerator::MarkovDepolarizing { d, .. } => *d,
        }
    }

    /// Materializes `Φ_n`.
    pub fn channel(&self, n: usize) -> Result<KrausChannel> {
        if n == 0 || n > self.n_max {
            return domain_err(format!("n = {n} outside 1..={}", self.n_max));
        }
        match &self.generator {
            SequenceGenerator::Iid(ch) => {
                let r = ch.env_dim() as f64;
                let entries = r.powi(n as i32) * ((ch.in_dim() * ch.out_dim()) as f64).powi(n as i32);
                guard_entries(entries)?;
                Ok(ch.tensor_power(n))
            }
            SequenceGenerator::MarkovDepolarizing { d, p, transition, initial } => {
                let entries = ((d * d) as f64).powi(n as i32) * ((d * d) as f64).powi(n as i32);
                guard_entries(entries)?;
                Ok(markov_depolarizing_channel(*d, *p, transition, *initial, n))
            }
        }
    }
}

fn guard_entries(entries: f64) -> Result<()> {
    if entries > KRAUS_ENTRY_LIMIT as f64 {
        return Err(QcapError::Resource(format!(
            "materializing this channel needs {entries:.0} matrix entries (limit {KRAUS_ENTRY_LIMIT})"
        )));
    }
    Ok(())
}

/// Markov-modulated depolarizing noise. Products of Weyl operators are
/// Hilbert–Schmidt orthogonal, so the mixture is diagonal in that basis and
/// only the weight of each Weyl string has to be summed over chain paths.
fn markov_depolarizing_channel(d: usize, p: [f64; 2], t: &[[f64; 2]; 2], init: [f64; 2], n: usize) -> KrausChannel {
    let w = [depolarizing_weights(d, p[0]), depolarizing_weights(d, p[1])];
    let single: Vec<CMatrix> = (0..d * d).map(|k| weyl(d, k / d, k % d)).collect();
    let r = d * d;
    let count = r.pow(n as u32);
    let mut ops = Vec::with_capacity(count);
    let mut digits = vec![0usize; n];
    for idx in 0..count {
        let mut rem = idx;
        for i in (0..n).rev() {
            digits[i] = rem % r;
            rem /= r;
        }
        // forward recursion over the hidden state
        let mut f = [init[0] * w[0][digits[0]], init[1] * w[1][digits[0]]];
        for &k in &digits[1..] {
            f = [
                (f[0] * t[0][0] + f[1] * t[1][0]) * w[0][k],
                (f[0] * t[0][1] + f[1] * t[1][1]) * w[1][k],
            ];
        }
        let weight = f[0] + f[1];
        let mut op = single[digits[0]].clone();
        for &k in &digits[1..] {
            op = op.kronecker(&single[k]);
        }
        ops.push(op.scale(weight.max(0.0).sqrt()));
    }
    let dn = d.pow(n as u32);
    KrausChannel::from_kraus_unchecked(dn, dn, ops)
}
