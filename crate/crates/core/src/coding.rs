//! Random subspace codes by Monte-Carlo.
//!
//! A code of rank `m` inside an `s`-dimensional subspace `S` is drawn by
//! rotating `S` with a Haar unitary `U_g` and keeping the first `m` rotated
//! directions. The reference system `R` is the `m`-dimensional range of the
//! code projector, so `ω^R = 𝟙_m/m` exactly. Every trial `t` draws from RNG
//! stream `t` and reductions use pairwise summation over trial order, so
//! reports do not depend on the thread count.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{CodeSubspace, KrausChannel, OmegaStates};
use crate::entropy::ic2;
use crate::error::{dim_err, domain_err, QcapError, Result};
use crate::qmatrix::{
    fidelity_psd, is_isometry, max_abs, purify_psd, reduce, reduce_pure, trace_norm, trace_second, CMatrix,
    CVector, DensityOperator, FactorSpec, HermitianOperator, PureState,
};
use crate::sampling::{haar_unitary, random_pure, random_vector, seeded_rng, MeanEstimate};
use crate::smoothing::smooth_ic2_state;

/// Fewest trials accepted by [`verify_random_coding_bound`].
pub const MIN_TRIALS: usize = 100;
const MARGINAL_TOL: f64 = 1e-8;
const RADICAND_TOL: f64 = 1e-12;
const HILL_STEPS: usize = 40;
const PRUNE_STREAM: u64 = 1 << 48;

/// One random code `(m, g)` and its reference-system states.
#[derive(Clone, Debug)]
pub struct CodeSample {
    pub g_seed: u64,
    pub g_stream: u64,
    pub m: usize,
    pub s: usize,
    /// The `m`-dimensional code inside the channel input.
    pub code: CodeSubspace,
    /// `R ⊗ B ⊗ E` states of the code, with `R` of dimension `m`.
    pub omega: OmegaStates,
    /// `|Ψ^{RA}⟩ = m^{-1/2} Σ_k |k⟩_R ⊗ |c_k⟩_A` for the code basis `c_k`.
    pub psi_ra: PureState,
}

impl CodeSample {
    pub fn ra_factors(&self) -> FactorSpec {
        FactorSpec::labeled2(self.m, "R", self.code.ambient_dim(), "A")
    }
}

/// The code spanned by the first `m` rows of `u`, read as coefficient
/// vectors in the basis of `sub`.
pub fn code_from_rotation(phi: &KrausChannel, sub: &CodeSubspace, m: usize, u: &CMatrix) -> Result<CodeSample> {
    let s = sub.code_dim();
    if m == 0 || m > s {
        return domain_err(format!("code rank m = {m} must satisfy 1 ≤ m ≤ s = {s}"));
    }
    if u.nrows() != s || u.ncols() != s || !is_isometry(u, 1e-10) {
        return dim_err(format!("rotation must be an {s} × {s} unitary"));
    }
    let rows = u.rows(0, m).transpose();
    let w = sub.isometry() * rows;
    let d = w.nrows();
    let scale = 1.0 / (m as f64).sqrt();
    let psi = PureState::from_vector_unchecked(CVector::from_fn(m * d, |idx, _| w[(idx % d, idx / d)] * scale));
    let code = CodeSubspace::from_isometry_unchecked(w);
    let omega = phi.omega_states(&code)?;
    Ok(CodeSample { g_seed: 0, g_stream: 0, m, s, code, omega, psi_ra: psi })
}

/// Random code of rank `m` in `sub` from RNG stream `stream` of `seed`.
pub fn sample_code_stream(phi: &KrausChannel, sub: &CodeSubspace, m: usize, seed: u64, stream: u64) -> Result<CodeSample> {
    let s = sub.code_dim();
    if m == 0 || m > s {
        return domain_err(format!("code rank m = {m} must satisfy 1 ≤ m ≤ s = {s}"));
    }
    let u = haar_unitary(s, &mut seeded_rng(seed, stream));
    let mut c = code_from_rotation(phi, sub, m, &u)?;
    c.g_seed = seed;
    c.g_stream = stream;
    Ok(c)
}

pub fn sample_code(phi: &KrausChannel, sub: &CodeSubspace, m: usize, seed: u64) -> Result<CodeSample> {
    sample_code_stream(phi, sub, m, seed, 0)
}

fn decoupling_target(sample: &CodeSample) -> Result<HermitianOperator> {
    let om = &sample.omega;
    let omega_e = reduce(&om.re, &om.re_factors(), &["E"])?;
    let tau = HermitianOperator::identity(sample.m).scale(1.0 / sample.m as f64);
    Ok(tau.kron(&omega_e))
}

/// `F²(ω^{RE}, τ^R ⊗ ω^E)`.
pub fn decoupling_fidelity(sample: &CodeSample) -> Result<f64> {
    let f = fidelity_psd(&sample.omega.re, &decoupling_target(sample)?)?;
    Ok(f * f)
}

/// `‖ω^{RE} − τ^R ⊗ ω^E‖₁`.
pub fn decoupling_trace_norm(sample: &CodeSample) -> Result<f64> {
    Ok(trace_norm(&sample.omega.re.sub(&decoupling_target(sample)?)))
}

/// Decoder `B → A` built from the Uhlmann isometry between a purification
/// `Ω^{RBE'}` of `ω^{RB}` and `Ψ^{RA} ⊗ χ^{E'A'}`, where `χ` purifies
/// `ω^{E'}`. Tracing out `A'` gives a CPTP map whose decoded fidelity is at
/// least `F²(ω^{RE'}, ω^R ⊗ ω^{E'})`.
pub fn uhlmann_decoder(
    omega_rb: &DensityOperator,
    f_rb: &FactorSpec,
    psi_ra: &PureState,
    f_ra: &FactorSpec,
) -> Result<KrausChannel> {
    let (dr, db) = f_rb.check_bipartite()?;
    let (dr2, da) = f_ra.check_bipartite()?;
    if dr != dr2 || omega_rb.dim() != dr * db || psi_ra.dim() != dr * da {
        return dim_err(format!("reference dims differ: ω^RB has {dr}⊗{db}, Ψ^RA has {dr2}⊗{da}"));
    }
    let omega_r = trace_second(omega_rb, dr, db);
    let psi_r = reduce_pure(psi_ra, f_ra, &[f_ra.labels[0].as_str()])?;
    let gap = max_abs(&(omega_r.matrix() - psi_r.matrix()));
    if gap > MARGINAL_TOL {
        return domain_err(format!("Ψ^RA does not purify ω^R: marginals differ by {gap:.3e}"));
    }
    // Schmidt-form purification: ω^{E'} = diag(λ), so χ = Σ √λ_k |k⟩|k⟩.
    let (pur, de) = purify_psd(omega_rb);
    let omega_amp = pur.amplitudes();
    let lambda: Vec<f64> = (0..de)
        .map(|e| (0..dr * db).map(|x| omega_amp[x * de + e].norm_sqr()).sum::<f64>())
        .collect();
    let dap = de.max(db.div_ceil(da));
    let psi = psi_ra.amplitudes();
    let m_omega = CMatrix::from_fn(dr * de, db, |x, b| omega_amp[((x / de) * db + b) * de + x % de]);
    let m_target = CMatrix::from_fn(dr * de, da * dap, |x, y| {
        let (r, e) = (x / de, x % de);
        let (a, ap) = (y / dap, y % dap);
        if ap == e {
            psi[r * da + a] * lambda[e].sqrt()
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let k = m_omega.transpose() * m_target.map(|z| z.conj());
    let svd = k.svd(true, true);
    let (u, vt) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vᵀ"));
    let w = vt.adjoint() * u.adjoint();
    if w.ncols() != db || !is_isometry(&w, 1e-9) {
        return Err(QcapError::Domain("Uhlmann isometry lost orthonormality".into()));
    }
    let ops = (0..dap)
        .map(|j| CMatrix::from_fn(da, db, |a, b| w[(a * dap + j, b)]))
        .filter(|k| max_abs(k) > 0.0)
        .collect();
    KrausChannel::new(db, da, ops)
}

/// `⟨Ψ^{RA}|(id_R ⊗ D)(ω^{RB})|Ψ^{RA}⟩`.
pub fn decoded_fidelity(omega_rb: &DensityOperator, dr: usize, psi_ra: &PureState, decoder: &KrausChannel) -> Result<f64> {
    let out = decoder.apply_on_second(omega_rb, dr)?;
    if out.dim() != psi_ra.dim() {
        return dim_err(format!("decoded state dim {} but Ψ^RA dim {}", out.dim(), psi_ra.dim()));
    }
    let v = psi_ra.amplitudes();
    Ok((v.adjoint() * out.matrix() * v)[(0, 0)].re)
}

/// Per-trial quantities of one random code.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TrialOutcome {
    pub decoded: f64,
    pub decoupling: f64,
    pub trace_norm: f64,
}

pub fn run_trial(sample: &CodeSample) -> Result<TrialOutcome> {
    let om = &sample.omega;
    let dec = uhlmann_decoder(&om.rb, &om.rb_factors(), &sample.psi_ra, &sample.ra_factors())?;
    Ok(TrialOutcome {
        decoded: decoded_fidelity(&om.rb, sample.m, &sample.psi_ra, &dec)?,
        decoupling: decoupling_fidelity(sample)?,
        trace_norm: decoupling_trace_norm(sample)?,
    })
}

/// `1 − 4δ − √(m(2^{I^c_{2,δ}} − 1/s))`. Radicands below `RADICAND_TOL` are
/// clamped to zero.
pub fn random_coding_rhs(ic2_value: f64, s: usize, m: usize, delta: f64) -> f64 {
    let inner = m as f64 * (ic2_value.exp2() - 1.0 / s as f64);
    let inner = if inner < RADICAND_TOL { 0.0 } else { inner };
    1.0 - 4.0 * delta - inner.sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct RandomCodingReport {
    pub s: usize,
    pub m: usize,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    /// `I^c_{2,δ}(ω^{RE}_S)` of the full subspace.
    pub ic2: f64,
    pub rhs: f64,
    /// Group-averaged decoded fidelity with the Uhlmann decoder.
    pub fidelity: MeanEstimate,
    pub decoupling: MeanEstimate,
    pub trace_norm: MeanEstimate,
    /// Smallest per-trial `decoded − decoupling`; nonnegative up to 1e-8.
    pub min_decoder_margin: f64,
    /// Averages ordered as decoded ≥ decoupling ≥ 1 − trace norm.
    pub chain_holds: bool,
    /// `fidelity.mean ≥ rhs − 3·fidelity.std_error`.
    pub holds: bool,
}

/// Estimates the group-averaged fidelity of rank-`m` random codes in `sub`
/// and compares it with the random-coding lower bound.
pub fn verify_random_coding_bound(
    phi: &KrausChannel,
    sub: &CodeSubspace,
    m: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<RandomCodingReport> {
    let s = sub.code_dim();
    if m == 0 || m > s {
        return domain_err(format!("code rank m = {m} must satisfy 1 ≤ m ≤ s = {s}"));
    }
    if trials < MIN_TRIALS {
        return Err(QcapError::Budget(format!("{trials} trials requested, at least {MIN_TRIALS} needed")));
    }
    let full = phi.omega_states(sub)?;
    let ic2_value = if delta == 0.0 {
        ic2(&full.re, &full.re_factors())?
    } else {
        smooth_ic2_state(&full.re, &full.re_factors(), delta)?.value
    };
    let rhs = random_coding_rhs(ic2_value, s, m, delta);
    let outcomes: Vec<TrialOutcome> = (0..trials as u64)
        .into_par_iter()
        .map(|t| run_trial(&sample_code_stream(phi, sub, m, seed, t)?))
        .collect::<Result<_>>()?;
    let col = |f: fn(&TrialOutcome) -> f64| outcomes.iter().map(f).collect::<Vec<f64>>();
    let fidelity = MeanEstimate::from_samples(&col(|o| o.decoded));
    let decoupling = MeanEstimate::from_samples(&col(|o| o.decoupling));
    let tn = MeanEstimate::from_samples(&col(|o| o.trace_norm));
    let min_decoder_margin = outcomes.iter().map(|o| o.decoded - o.decoupling).fold(f64::INFINITY, f64::min);
    let chain_holds = min_decoder_margin >= -1e-8 && decoupling.mean >= 1.0 - tn.mean - 1e-12;
    Ok(RandomCodingReport {
        s,
        m,
        delta,
        trials,
        seed,
        ic2: ic2_value,
        rhs,
        holds: fidelity.mean >= rhs - 3.0 * fidelity.std_error,
        fidelity,
        decoupling,
        trace_norm: tn,
        min_decoder_margin,
        chain_holds,
    })
}

/// `F_e(Λ) = Σ_k |Tr K_k|² / m²`.
pub fn entanglement_fidelity(lambda: &KrausChannel) -> Result<f64> {
    let m = lambda.in_dim();
    if lambda.out_dim() != m {
        return dim_err(format!("channel maps {m} to {} dims", lambda.out_dim()));
    }
    Ok(lambda.kraus().iter().map(|k| k.trace().norm_sqr()).sum::<f64>() / (m * m) as f64)
}

fn state_fidelity(kraus: &[CMatrix], v: &CVector) -> f64 {
    kraus.iter().map(|k| (v.adjoint() * k * v)[(0, 0)].norm_sqr()).sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct AvgFidelityReport {
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    /// Haar average of `⟨φ|Λ(φ)|φ⟩`.
    pub estimate: MeanEstimate,
    pub entanglement_fidelity: f64,
    /// `(m F_e + 1)/(m + 1)`.
    pub formula: f64,
    pub difference: f64,
    pub within_3se: bool,
}

pub fn avg_fidelity_identity_check(lambda: &KrausChannel, trials: usize, seed: u64) -> Result<AvgFidelityReport> {
    let fe = entanglement_fidelity(lambda)?;
    if trials < 2 {
        return Err(QcapError::Budget(format!("{trials} trials cannot give a standard error")));
    }
    let m = lambda.in_dim();
    let vals: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| state_fidelity(lambda.kraus(), random_pure(m, &mut seeded_rng(seed, t)).amplitudes()))
        .collect();
    let estimate = MeanEstimate::from_samples(&vals);
    let formula = (m as f64 * fe + 1.0) / (m as f64 + 1.0);
    let difference = estimate.mean - formula;
    Ok(AvgFidelityReport {
        m,
        trials,
        seed,
        within_3se: difference.abs() <= 3.0 * estimate.std_error + 1e-12,
        estimate,
        entanglement_fidelity: fe,
        formula,
        difference,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PruningReport {
    pub m: usize,
    pub kept_dim: usize,
    pub entanglement_fidelity: f64,
    /// `1 − 2(1 − F_e)`.
    pub bound: f64,
    /// Minimum over Haar samples in the kept subspace.
    pub sampled_min: f64,
    /// Minimum after hill climbing from random restarts and the sampled minimizer.
    pub adversarial_min: f64,
    /// Both minima are upper estimates of the true minimum, so only
    /// `adversarial_min < bound` is conclusive.
    pub evidence: String,
    pub kept_subspace: CodeSubspace,
}

fn unit(v: CVector) -> CVector {
    let n = v.norm();
    v / Complex64::new(n, 0.0)
}

/// Hill climbing on the unit sphere of `span(q)`, minimizing the fidelity.
fn descend<R: Rng>(kraus: &[CMatrix], q: &CMatrix, start: CVector, rng: &mut R) -> (f64, CVector) {
    let k = q.ncols();
    let mut x = unit(start);
    let mut best = state_fidelity(kraus, &(q * &x));
    let mut step = 0.3;
    for _ in 0..HILL_STEPS {
        let y = unit(&x + random_vector(k, rng) * Complex64::new(step, 0.0));
        let v = state_fidelity(kraus, &(q * &y));
        if v < best {
            best = v;
            x = y;
        } else {
            step *= 0.7;
        }
    }
    (best, x)
}

fn worst_state<R: Rng>(kraus: &[CMatrix], q: &CMatrix, samples: usize, restarts: usize, rng: &mut R) -> (f64, f64, CVector) {
    let k = q.ncols();
    let mut sampled = (f64::INFINITY, CVector::zeros(k));
    for _ in 0..samples.max(1) {
        let x = unit(random_vector(k, rng));
        let v = state_fidelity(kraus, &(q * &x));
        if v < sampled.0 {
            sampled = (v, x);
        }
    }
    let mut adv = descend(kraus, q, sampled.1.clone(), rng);
    for _ in 0..restarts {
        let c = descend(kraus, q, random_vector(k, rng), rng);
        if c.0 < adv.0 {
            adv = c;
        }
    }
    (sampled.0, adv.0, adv.1)
}

/// Orthonormal basis of the complement of `y` in `ℂ^k`.
fn complement(y: &CVector) -> CMatrix {
    let k = y.len();
    let mut m = CMatrix::identity(k, k);
    m.set_column(0, y);
    let j = (0..k).max_by(|&a, &b| y[a].norm().total_cmp(&y[b].norm())).unwrap_or(0);
    if j != 0 {
        m.set_column(j, &CVector::from_fn(k, |i, _| if i == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }));
    }
    m.qr().q().columns(1, k - 1).into_owned()
}

/// Sampled probe of the pruning bound for the composite `D ∘ Φ` on `code`.
/// Half of the code is removed one worst state at a time, then the kept
/// subspace is searched for a state with fidelity below `1 − 2(1 − F_e)`.
pub fn pruning_probe(
    phi: &KrausChannel,
    code: &CodeSubspace,
    decoder: &KrausChannel,
    samples: usize,
    restarts: usize,
    seed: u64,
) -> Result<PruningReport> {
    let m = code.code_dim();
    if m % 2 != 0 {
        return domain_err(format!("pruning needs an even code dimension, got {m}"));
    }
    if decoder.in_dim() != phi.out_dim() || decoder.out_dim() != phi.in_dim() {
        return dim_err("decoder must map the channel output back to its input");
    }
    let w = code.isometry();
    let kraus: Vec<CMatrix> = phi.then(decoder)?.kraus().iter().map(|k| w.adjoint() * k * w).collect();
    let fe = kraus.iter().map(|k| k.trace().norm_sqr()).sum::<f64>() / (m * m) as f64;
    let bound = 1.0 - 2.0 * (1.0 - fe);
    let mut rng = seeded_rng(seed, PRUNE_STREAM);
    let mut q = CMatrix::identity(m, m);
    for _ in 0..m / 2 {
        let (_, _, y) = worst_state(&kraus, &q, samples, restarts.min(4), &mut rng);
        q = &q * complement(&y);
    }
    let (sampled_min, adversarial_min, _) = worst_state(&kraus, &q, samples, restarts, &mut rng);
    let evidence = if adversarial_min >= bound - 1e-12 {
        "no sampled state below the bound"
    } else {
        "sampled state below the bound on the kept subspace"
    };
    Ok(PruningReport {
        m,
        kept_dim: q.ncols(),
        entanglement_fidelity: fe,
        bound,
        sampled_min,
        adversarial_min: adversarial_min.min(sampled_min),
        evidence: evidence.to_string(),
        kept_subspace: CodeSubspace::new(w * q)?,
    })
}
