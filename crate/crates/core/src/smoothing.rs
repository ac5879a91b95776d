//! Smoothed coherent informations over the fidelity ball
//! `𝔟(ρ;δ) = {ρ̄ ≥ 0 : Tr ρ̄ ≤ 1, F²(ρ,ρ̄) ≥ 1−δ²}` and the test-operator ball
//! `𝔭(ρ;δ) = {0 ≤ P ≤ 𝟙 : Tr[Pρ] ≥ 1−δ}`.
//!
//! Both optimizations are nonconvex. Every routine returns a witnessed value
//! (the objective evaluated at an explicit ball element) together with
//! bounds that hold unconditionally.
//!
//! State-ball searches use eigenvalue truncations `ρ̄ = QρQ / Tr[Qρ]`, for
//! which `F²(ρ,ρ̄) = Tr[Qρ]`. Operator-ball searches run greedy ascent over
//! moves `P ↦ √P(𝟙 − tQ)√P` through a fixed ladder of budgets, so a larger `δ`
//! always replays the search of a smaller one and values are monotone in `δ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::KrausChannel;
use crate::codec::{self, ExtReal};
use crate::entropy::{ic2, s1_p_sqrt};
use crate::error::{dim_err, domain_err, Result};
use crate::qmatrix::{
    fidelity_psd, support_projector, trace_first, CMatrix, DensityOperator, FactorSpec, HermitianOperator, Spectrum,
    PSD_TOL, RANK_TOL,
};
use crate::sampling::{random_hermitian, seeded_rng};

/// Slack allowed in the ball constraints.
pub const BALL_TOL: f64 = 1e-9;
/// Grid size for the step length of an operator-ball move.
pub const T_POINTS: usize = 32;
/// Largest `dim(A⊗B)` for which [`smooth_ic0_state`] also runs the oracle.
pub const ORACLE_MAX_DIM: usize = 4;
/// Seed of the built-in perturbation oracle.
pub const ORACLE_SEED: u64 = 0x5eed_0b11;
/// Rank up to which every eigenvalue truncation is enumerated.
const EXHAUSTIVE_RANK: usize = 10;
/// Largest operator dimension searched with every ladder rung and all step sizes.
pub const FULL_EFFORT_DIM: usize = 8;
const IMPROVE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ball {
    StateBall,
    OperatorBall,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingBudget {
    pub delta: f64,
    pub ball: Ball,
}

impl SmoothingBudget {
    pub fn new(delta: f64, ball: Ball) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return domain_err(format!("smoothing parameter δ = {delta} outside [0, 1]"));
        }
        Ok(Self { delta, ball })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    Heuristic,
    Oracle,
}

/// A witnessed smoothed value.
#[derive(Clone, Debug, Serialize)]
pub struct SmoothedResult {
    /// Bits.
    pub value: f64,
    /// The optimizing `ρ̄` (state ball) or `P` (operator ball).
    #[serde(with = "codec::hermitian")]
    pub witness: HermitianOperator,
    /// The conditioning state used at the witness, where one is optimized.
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "ser_opt_herm")]
    pub sigma: Option<HermitianOperator>,
    pub method: SearchMethod,
    pub budget: SmoothingBudget,
    /// `[lower, upper]`, both containing `value`.
    pub certified_bounds: (f64, ExtReal),
    /// Oracle minus heuristic value, or the duality gap of [`smooth_hmin_fixed`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic_gap: Option<f64>,
}

fn ser_opt_herm<S: serde::Serializer>(h: &Option<HermitianOperator>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match h {
        Some(h) => codec::hermitian::serialize(h, s),
        None => s.serialize_none(),
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return domain_err(format!("smoothing parameter δ = {delta} outside [0, 1]"));
    }
    Ok(())
}

fn factors(rho: &HermitianOperator, f: &FactorSpec) -> Result<(usize, usize)> {
    let (da, db) = f.check_bipartite()?;
    if da * db != rho.dim() {
        return dim_err(format!("factor dims {:?} inconsistent with operator dim {}", f.dims, rho.dim()));
    }
    Ok((da, db))
}

/// `−log λ_max(Tr_A X)` for a positive `X` on `A ⊗ B`; `+∞` when `X = 0`.
fn neg_log_lmax_marginal(x: &HermitianOperator, da: usize, db: usize) -> f64 {
    let lam = trace_first(x, da, db).max_eigenvalue();
    if lam > 1e-300 {
        -lam.log2()
    } else {
        f64::INFINITY
    }
}

/// Is `candidate` in `𝔟(ρ;δ)`? Tolerances: trace `≤ 1 + 1e-9`, fidelity
/// `F² ≥ 1 − δ² − 1e-9`. Non-PSD candidates are rejected.
pub fn state_ball_membership(rho: &DensityOperator, candidate: &HermitianOperator, delta: f64) -> bool {
    if candidate.dim() != rho.dim() || !candidate.is_psd(PSD_TOL) || candidate.trace() > 1.0 + BALL_TOL {
        return false;
    }
    match fidelity_psd(rho, candidate) {
        Ok(f) => f * f >= 1.0 - delta * delta - BALL_TOL,
        Err(_) => false,
    }
}

/// Kept index sets of the eigenvalue truncations of a rank-`r` spectrum.
fn truncation_sets(r: usize) -> Vec<Vec<usize>> {
    if r <= EXHAUSTIVE_RANK {
        return (1u32..(1 << r)).map(|mask| (0..r).filter(|&k| mask & (1 << k) != 0).collect()).collect();
    }
    let mut out: Vec<Vec<usize>> = (1..=r).map(|j| (0..j).collect()).collect();
    for i in 0..r {
        out.push((0..r).filter(|&k| k != i).collect());
        for j in i + 1..r {
            out.push((0..r).filter(|&k| k != i && k != j).collect());
        }
    }
    out
}

fn subset_projector(eig: &Spectrum, keep: &[usize]) -> HermitianOperator {
    let d = eig.vectors.nrows();
    let mut v = CMatrix::zeros(d, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        v.set_column(c, &eig.vectors.column(k));
    }
    HermitianOperator::from_matrix_unchecked(&v * v.adjoint())
}

/// One eigenvalue truncation: its projector `Q`, mass `Tr[Qρ]` and the
/// normalized truncated state.
struct Truncation {
    mass: f64,
    projector: HermitianOperator,
}

fn truncations(rho: &HermitianOperator) -> Vec<Truncation> {
    let eig = rho.eigen();
    let r = eig.rank(RANK_TOL).max(1);
    truncation_sets(r)
        .into_par_iter()
        .map(|keep| {
            let mass = keep.iter().map(|&k| eig.values[k]).sum::<f64>();
            Truncation { mass, projector: subset_projector(&eig, &keep) }
        })
        .collect()
}

fn truncated_state(rho: &HermitianOperator, t: &Truncation) -> HermitianOperator {
    rho.sandwich(&t.projector).scale(1.0 / t.mass.max(1e-300))
}

/// Index of the first maximum; `None` on an empty or all-NaN list.
fn argmax(vals: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in vals.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| v > vals[b]) {
            best = Some(i);
        }
    }
    best
}

/// `I^c_{0,δ}(ρ) = max_{ρ̄ ∈ 𝔟(ρ;δ)} −log λ_max(Tr_A Π_ρ̄)`. The heuristic
/// scans eigenvalue truncations; at `dim ≤ 4` the perturbation oracle runs
/// too and the larger witnessed value is reported.
pub fn smooth_ic0_state(rho: &DensityOperator, f: &FactorSpec, delta: f64) -> Result<SmoothedResult> {
    check_delta(delta)?;
    let (da, db) = factors(rho, f)?;
    let budget = SmoothingBudget { delta, ball: Ball::StateBall };
    let upper = ExtReal::Finite((da.min(db) as f64).log2());
    let pi = support_projector(rho, RANK_TOL);
    let base = neg_log_lmax_marginal(&pi, da, db);
    let mut best = SmoothedResult {
        value: base,
        witness: rho.op().clone(),
        sigma: None,
        method: SearchMethod::Heuristic,
        budget,
        certified_bounds: (base, upper),
        diagnostic_gap: None,
    };
    if delta > 0.0 {
        let trs = truncations(rho);
        let vals: Vec<f64> = trs
            .par_iter()
            .map(|t| {
                if t.mass >= 1.0 - delta * delta - BALL_TOL {
                    neg_log_lmax_marginal(&t.projector, da, db)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        if let Some(i) = argmax(&vals) {
            if vals[i] > best.value {
                best.value = vals[i];
                best.witness = truncated_state(rho, &trs[i]);
            }
        }
    }
    if rho.dim() <= ORACLE_MAX_DIM {
        let o = state_oracle(rho, f, delta, ORACLE_SEED, 24)?;
        best.diagnostic_gap = Some(o.value - best.value);
        best.method = SearchMethod::Oracle;
        if o.value > best.value {
            best.value = o.value;
            best.witness = o.witness;
        }
    }
    best.certified_bounds.0 = best.value;
    Ok(best)
}

/// `exp(i a H)` for Hermitian `H`.
fn unitary_exp(h: &HermitianOperator, a: f64) -> CMatrix {
    let eig = h.eigen();
    let mut scaled = eig.vectors.clone();
    for (k, &l) in eig.values.iter().enumerate() {
        let ph = num_complex::Complex64::from_polar(1.0, a * l);
        for i in 0..scaled.nrows() {
            scaled[(i, k)] *= ph;
        }
    }
    &scaled * eig.vectors.adjoint()
}

/// Randomized search of `𝔟(ρ;δ)`: every eigenbasis projector (kernel
/// directions included) is rotated by `exp(i a H)` for random `H` of unit
/// norm and a fixed ladder of angles `a`; the candidate is the normalized
/// compression of `ρ` onto the rotated projector. The candidate pool does not
/// depend on `δ`, so the result is monotone in `δ` for a fixed seed.
pub fn state_oracle(rho: &DensityOperator, f: &FactorSpec, delta: f64, seed: u64, samples: usize) -> Result<SmoothedResult> {
    check_delta(delta)?;
    let (da, db) = factors(rho, f)?;
    let d = rho.dim();
    if d > 16 {
        return dim_err(format!("state oracle limited to dim ≤ 16, got {d}"));
    }
    let eig = rho.eigen();
    let angles = [0.02, 0.05, 0.1, 0.2, 0.4, 0.8];
    let sets: Vec<Vec<usize>> = truncation_sets(d);
    let pool: Vec<(f64, HermitianOperator)> = sets
        .par_iter()
        .enumerate()
        .flat_map_iter(|(si, keep)| {
            let q = subset_projector(&eig, keep);
            let mut rng = seeded_rng(seed, si as u64);
            let mut out = Vec::with_capacity(angles.len() * samples);
            for &a in &angles {
                for _ in 0..samples {
                    let h = random_hermitian(d, &mut rng);
                    let nrm = h.eigenvalues().iter().fold(0.0f64, |m, l| m.max(l.abs())).max(1e-300);
                    let u = unitary_exp(&h.scale(1.0 / nrm), a);
                    let qr = q.conjugate_by(&u);
                    let mass = qr.inner(rho);
                    if mass <= 1e-12 {
                        continue;
                    }
                    let cand = rho.sandwich(&qr).scale(1.0 / mass);
                    let v = neg_log_lmax_marginal(&support_projector(&cand, RANK_TOL), da, db);
                    out.push((v, cand));
                }
            }
            out
        })
        .collect();
    let base = neg_log_lmax_marginal(&support_projector(rho, RANK_TOL), da, db);
    let mut value = base;
    let mut witness = rho.op().clone();
    for (v, cand) in pool {
        if v > value && state_ball_membership(rho, &cand, delta) {
            value = v;
            witness = cand;
        }
    }
    Ok(SmoothedResult {
        value,
        witness,
        sigma: None,
        method: SearchMethod::Oracle,
        budget: SmoothingBudget { delta, ball: Ball::StateBall },
        certified_bounds: (value, ExtReal::Finite((da.min(db) as f64).log2())),
        diagnostic_gap: None,
    })
}

/// `I^c_{2,δ}(ρ) = min_{ρ̄ ∈ 𝔟(ρ;δ)} I^c_2(ρ̄)` over normalized eigenvalue
/// truncations. The value is witnessed, hence an upper estimate of the
/// minimum.
pub fn smooth_ic2_state(rho: &DensityOperator, f: &FactorSpec, delta: f64) -> Result<SmoothedResult> {
    check_delta(delta)?;
    let (da, db) = factors(rho, f)?;
    let base = ic2(rho, f)?;
    let mut value = base;
    let mut witness = rho.op().clone();
    if delta > 0.0 {
        let trs = truncations(rho);
        let vals: Vec<f64> = trs
            .par_iter()
            .map(|t| {
                if t.mass < 1.0 - delta * delta - BALL_TOL {
                    return f64::NEG_INFINITY;
                }
                let st = DensityOperator::from_op_unchecked(truncated_state(rho, t), false);
                ic2(&st, f).map(|x| -x).unwrap_or(f64::NEG_INFINITY)
            })
            .collect();
        if let Some(i) = argmax(&vals) {
            if -vals[i] < value {
                value = -vals[i];
                witness = truncated_state(rho, &trs[i]);
            }
        }
    }
    // I^c_2 = −H_2 ≥ −H_0 ≥ −log min(d_A, d_B) and ≤ log d_A.
    let lo = -(da.min(db) as f64).log2();
    Ok(SmoothedResult {
        value,
        witness,
        sigma: None,
        method: SearchMethod::Heuristic,
        budget: SmoothingBudget { delta, ball: Ball::StateBall },
        certified_bounds: (lo.min(value), ExtReal::Finite(value)),
        diagnostic_gap: None,
    })
}

/// `H_min^δ(ω^{AE}|ω^E) = −min_{ω̄ ∈ 𝔟} D_max(ω̄ ‖ 𝟙 ⊗ ω̄^E)` over normalized
/// eigenvalue truncations. When the complementary marginal `ω^{AB}` of the
/// same purification is supplied, the gap to `I^c_{0,δ}(ω^{AB})` (the
/// duality `H_min^δ(ω^{AE}|ω^E) = −H_0^δ(ω^{AB}|B)`) is reported.
pub fn smooth_hmin_fixed(
    omega_re: &DensityOperator,
    f: &FactorSpec,
    delta: f64,
    omega_rb: Option<(&DensityOperator, &FactorSpec)>,
) -> Result<SmoothedResult> {
    check_delta(delta)?;
    let (da, de) = factors(omega_re, f)?;
    let hmin_marginal = |x: &HermitianOperator| -> f64 {
        let xe = trace_first(x, da, de);
        let big = HermitianOperator::identity(da).kron(&xe);
        match crate::entropy::dmax(x, &big) {
            Ok(ExtReal::Finite(v)) => -v,
            _ => f64::NEG_INFINITY,
        }
    };
    let mut value = hmin_marginal(omega_re);
    let mut witness = omega_re.op().clone();
    if delta > 0.0 {
        let trs = truncations(omega_re);
        let vals: Vec<f64> = trs
            .par_iter()
            .map(|t| {
                if t.mass >= 1.0 - delta * delta - BALL_TOL {
                    hmin_marginal(&truncated_state(omega_re, t))
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        if let Some(i) = argmax(&vals) {
            if vals[i] > value {
                value = vals[i];
                witness = truncated_state(omega_re, &trs[i]);
            }
        }
    }
    let gap = match omega_rb {
        Some((rb, frb)) => Some(value - smooth_ic0_state(rb, frb, delta)?.value),
        None => None,
    };
    Ok(SmoothedResult {
        value,
        witness,
        sigma: None,
        method: SearchMethod::Heuristic,
        budget: SmoothingBudget { delta, ball: Ball::StateBall },
        certified_bounds: (value, ExtReal::Finite((da as f64).log2())),
        diagnostic_gap: gap,
    })
}

/// The ladder of budgets the operator-ball search passes through.
pub fn budget_ladder() -> Vec<f64> {
    let fine = (1..=20).map(|k| k as f64 * 0.01);
    let coarse = (5..=19).map(|k| k as f64 * 0.05);
    fine.chain(coarse).collect()
}

#[derive(Clone)]
struct OpPoint {
    p: HermitianOperator,
    sqrt_p: HermitianOperator,
    value: f64,
    mass: f64,
}

struct OpProblem<'a> {
    rho: &'a HermitianOperator,
    pi: HermitianOperator,
    rho_spec: Spectrum,
    rho_rank: usize,
    da: usize,
    db: usize,
    max_iter: usize,
    t_points: usize,
    sparse_ladder: bool,
    truncs: Vec<(f64, f64, HermitianOperator)>,
}

impl<'a> OpProblem<'a> {
    fn new(rho: &'a HermitianOperator, da: usize, db: usize) -> Self {
        let pi = support_projector(rho, RANK_TOL);
        let rho_spec = rho.eigen();
        let rho_rank = rho_spec.rank(RANK_TOL).max(1);
        let truncs = truncations(rho)
            .into_iter()
            .map(|t| (t.mass, neg_log_lmax_marginal(&t.projector, da, db), t.projector))
            .collect();
        let small = rho.dim() <= FULL_EFFORT_DIM;
        let max_iter = if small { 16 } else { 4 };
        let t_points = if small { T_POINTS } else { T_POINTS / 4 };
        Self { rho, pi, rho_spec, rho_rank, da, db, max_iter, t_points, sparse_ladder: !small, truncs }
    }

    fn point(&self, p: HermitianOperator) -> OpPoint {
        let sqrt_p = p.sqrt_psd();
        let value = neg_log_lmax_marginal(&self.pi.sandwich(&sqrt_p), self.da, self.db);
        let mass = p.inner(self.rho);
        OpPoint { p, sqrt_p, value, mass }
    }

    fn cuts(&self, x: &OpPoint) -> Vec<HermitianOperator> {
        let omega = self.pi.sandwich(&x.sqrt_p);
        let m = trace_first(&omega, self.da, self.db).eigen();
        let id_a = HermitianOperator::identity(self.da);
        let mut out = Vec::new();
        for k in 0..self.db {
            out.push(id_a.kron(&HermitianOperator::outer(&m.column(k))));
        }
        for j in 1..self.db {
            out.push(id_a.kron(&subset_projector(&m, &(0..j).collect::<Vec<_>>())));
        }
        for k in 0..self.rho_rank.min(16) {
            out.push(HermitianOperator::outer(&self.rho_spec.column(k)));
        }
        let v1 = id_a.kron(&HermitianOperator::outer(&m.column(0)));
        let xm = HermitianOperator::from_matrix_unchecked(omega.matrix() * v1.matrix() * omega.matrix());
        let top = xm.eigen();
        if top.max() > 1e-14 {
            out.push(HermitianOperator::outer(&top.column(0)));
        }
        out
    }

    /// Greedy ascent within `𝔭(ρ; b)` starting from `x`.
    fn ascend(&self, mut x: OpPoint, b: f64) -> OpPoint {
        let floor = 1.0 - b;
        if let Some((_, v, q)) = self
            .truncs
            .iter()
            .filter(|(mass, _, _)| *mass >= floor)
            .max_by(|a, c| a.1.total_cmp(&c.1))
        {
            if *v > x.value + IMPROVE_TOL {
                x = self.point(q.clone());
            }
        }
        let cap = op_upper(self.db, b).to_f64();
        for _ in 0..self.max_iter {
            if x.value >= cap - IMPROVE_TOL {
                break;
            }
            let cuts = self.cuts(&x);
            let rho_p = self.rho.sandwich(&x.sqrt_p);
            let moves: Vec<(usize, f64)> = cuts
                .iter()
                .enumerate()
                .flat_map(|(ci, q)| {
                    let cq = rho_p.inner(q);
                    let tmax = if cq > 1e-15 { ((x.mass - floor) / cq).min(1.0) } else { 1.0 };
                    let n = self.t_points;
                    (1..=n).filter(move |_| tmax > 0.0).map(move |k| (ci, tmax * k as f64 / n as f64))
                })
                .collect();
            let shrinks: Vec<HermitianOperator> = cuts.iter().map(|q| q.sandwich(&x.sqrt_p)).collect();
            let pts: Vec<Option<OpPoint>> = moves
                .par_iter()
                .map(|&(ci, t)| {
                    let pt = self.point(x.p.sub(&shrinks[ci].scale(t)));
                    (pt.mass >= floor - 1e-12 && pt.value.is_finite()).then_some(pt)
                })
                .collect();
            let vals: Vec<f64> = pts.iter().map(|p| p.as_ref().map_or(f64::NEG_INFINITY, |p| p.value)).collect();
            match argmax(&vals) {
                Some(i) if vals[i] > x.value + IMPROVE_TOL => x = pts[i].clone().unwrap(),
                _ => break,
            }
        }
        x
    }

    /// Best point after each ladder rung `b ≤ δ`, starting from `P = 𝟙`.
    /// Above `FULL_EFFORT_DIM` only every fourth rung and the last one are visited.
    fn phases(&self, delta: f64) -> (OpPoint, Vec<OpPoint>) {
        let start = self.point(HermitianOperator::identity(self.rho.dim()));
        let mut x = start.clone();
        let mut out = Vec::new();
        let rungs: Vec<f64> = budget_ladder().into_iter().filter(|&b| b <= delta + 1e-12).collect();
        let last = rungs.len().saturating_sub(1);
        for (i, &b) in rungs.iter().enumerate() {
            if self.sparse_ladder && i % 4 != 0 && i != last {
                continue;
            }
            x = self.ascend(x, b);
            out.push(x.clone());
        }
        (start, out)
    }
}

fn op_upper(db: usize, delta: f64) -> ExtReal {
    if delta < 1.0 {
        ExtReal::Finite((db as f64).log2() - (1.0 - delta).log2())
    } else {
        ExtReal::PosInf
    }
}

/// `Ĩ^c_{0,δ}(ρ) = max_{P ∈ 𝔭(ρ;δ)} −log λ_max(Tr_A[√P Π_ρ √P])`.
pub fn smooth_ic0_operator(rho: &DensityOperator, f: &FactorSpec, delta: f64) -> Result<SmoothedResult> {
    check_delta(delta)?;
    let (da, db) = factors(rho, f)?;
    let prob = OpProblem::new(rho, da, db);
    let (start, phases) = prob.phases(delta);
    let best = phases.last().cloned().unwrap_or(start);
    Ok(SmoothedResult {
        value: best.value,
        witness: best.p,
        sigma: None,
        method: SearchMethod::Heuristic,
        budget: SmoothingBudget { delta, ball: Ball::OperatorBall },
        certified_bounds: (best.value, op_upper(db, delta)),
        diagnostic_gap: None,
    })
}

/// `min_σ S_1^P(ρ‖𝟙⊗σ)` over conditioning states whose support contains
/// that of `ω_B`, `ω = √Pρ√P`. On that class `Π_{𝟙⊗σ}` acts trivially on
/// `ω`, and the minimum is attained at `σ = ω_B / Tr ω`.
fn ic1_inner(prob: &OpProblem, x: &OpPoint) -> (f64, HermitianOperator) {
    let (da, db) = (prob.da, prob.db);
    let omega_b = trace_first(&prob.rho.sandwich(&x.sqrt_p), da, db);
    let sigma = omega_b.scale(1.0 / omega_b.trace().max(1e-300));
    let id_a = HermitianOperator::identity(da);
    let v = s1_p_sqrt(prob.rho, &id_a.kron(&sigma), &x.sqrt_p).unwrap_or(f64::INFINITY);
    (v, sigma)
}

/// `Ĩ^c_{1,δ}(ρ) = max_{P ∈ 𝔭(ρ;δ)} min_σ S_1^P(ρ‖𝟙⊗σ)`. The outer max runs
/// over `P = 𝟙` and every rung witness of the operator-ball `I^c_0` search,
/// so both quantities are compared on the same set of test operators.
///
/// Convexity of `α ↦ ψ_α^P` gives `S_1^P ≥ S_0^P + ψ_1^P` with
/// `ψ_1^P = log Tr[Pρ] ≥ log(1−δ)` on the support class used here, so
/// `Ĩ^c_{0,δ} ≤ Ĩ^c_{1,δ} + log(1/(1−δ))` at shared witnesses.
pub fn smooth_ic1_operator(rho: &DensityOperator, f: &FactorSpec, delta: f64) -> Result<SmoothedResult> {
    check_delta(delta)?;
    let (da, db) = factors(rho, f)?;
    let prob = OpProblem::new(rho, da, db);
    let (start, phases) = prob.phases(delta);
    let mut best: Option<(f64, OpPoint, HermitianOperator)> = None;
    for x in std::iter::once(start).chain(phases) {
        let (v, s) = ic1_inner(&prob, &x);
        if best.as_ref().is_none_or(|b| v > b.0) {
            best = Some((v, x, s));
        }
    }
    let (value, x, sigma) = best.expect("P = 𝟙 is always evaluated");
    // ceiling from S_1^P ≤ (S(√Pρ√P‖σ) + 2δ′log d + 2)/(1−δ′) at σ = 𝟙/d_B, δ′ = 2√δ
    let dp = 2.0 * delta.sqrt();
    let upper = if dp < 1.0 {
        let l = ((da * db) as f64).log2();
        ExtReal::Finite(((1.0 + 2.0 * dp) * l + 2.0) / (1.0 - dp) - (da as f64).log2())
    } else {
        ExtReal::PosInf
    };
    Ok(SmoothedResult {
        value,
        witness: x.p,
        sigma: Some(sigma),
        method: SearchMethod::Heuristic,
        budget: SmoothingBudget { delta, ball: Ball::OperatorBall },
        certified_bounds: (value, upper),
        diagnostic_gap: None,
    })
}

/// Outcome of [`data_processing_check`].
#[derive(Clone, Debug, Serialize)]
pub struct DataProcessingReport {
    pub delta: f64,
    /// `Ĩ^c_{0,δ}((id⊗Φ)ρ)` with its witness `P`.
    pub processed: SmoothedResult,
    /// The pulled-back test operator `Q = (id⊗Φ*)(√P Π √P)`.
    #[serde(with = "codec::hermitian")]
    pub pulled_back: HermitianOperator,
    /// `Tr[Qρ]`, at least `1 − 2√δ` in theory.
    pub pulled_back_mass: f64,
    pub pulled_back_feasible: bool,
    /// `−log λ_max(Tr_A[√Q Π_ρ √Q])`.
    pub value_at_pulled_back: f64,
    /// Independent search value of `Ĩ^c_{0,2√δ}(ρ)`.
    pub searched: f64,
    pub holds: bool,
}

/// Checks `Ĩ^c_{0,2√δ}(ρ^{AB}) ≥ Ĩ^c_{0,δ}((id⊗Φ)ρ^{AB})` by evaluating the
/// left side at the test operator pulled back from the right side's witness.
pub fn data_processing_check(
    rho: &DensityOperator,
    f: &FactorSpec,
    phi: &KrausChannel,
    delta: f64,
) -> Result<DataProcessingReport> {
    if !(0.0..=0.25).contains(&delta) {
        return domain_err(format!("data-processing check needs δ ∈ [0, 0.25], got {delta}"));
    }
    let (da, db) = factors(rho, f)?;
    if phi.in_dim() != db {
        return dim_err(format!("channel input dim {} but B has dim {db}", phi.in_dim()));
    }
    let dc = phi.out_dim();
    let gamma = DensityOperator::from_op_unchecked(phi.apply_on_second(rho, da)?, false);
    let fc = FactorSpec::bipartite(da, dc);
    let processed = smooth_ic0_operator(&gamma, &fc, delta)?;
    let sqrt_p = processed.witness.sqrt_psd();
    let x = support_projector(&gamma, RANK_TOL).sandwich(&sqrt_p);
    let q = phi.adjoint().apply_on_second(&x, da)?;
    let mass = q.inner(rho);
    let dq = 2.0 * delta.sqrt();
    let feasible = mass >= 1.0 - dq - BALL_TOL && q.is_psd(PSD_TOL) && q.max_eigenvalue() <= 1.0 + PSD_TOL;
    let at_q = neg_log_lmax_marginal(&support_projector(rho, RANK_TOL).sandwich(&q.sqrt_psd()), da, db);
    let searched = smooth_ic0_operator(rho, f, dq.min(1.0))?.value;
    let holds = feasible && at_q >= processed.value - 1e-9;
    Ok(DataProcessingReport {
        delta,
        processed,
        pulled_back: q,
        pulled_back_mass: mass,
        pulled_back_feasible: feasible,
        value_at_pulled_back: at_q,
        searched,
        holds,
    })
}
