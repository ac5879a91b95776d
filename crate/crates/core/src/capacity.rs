//! One-shot entanglement-transmission capacity bounds.
//!
//! For a channel `Φ` with input dimension `d` and error `ε`,
//!
//! ```text
//! log[1/d + ε²/4] + max_S I^c_{0,ε/8}(ω^{RB}_S) − Δ  ≤  Q_ent(Φ;ε)  ≤  max_S Ĩ^c_{0,2√ε}(ω^{RB}_S)
//! ```
//!
//! The maximum over code subspaces `S` is searched heuristically, so the
//! reported upper value is a witnessed lower estimate of the right-hand side;
//! `log d` is always attached as the unconditional ceiling.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSequence, CodeSubspace, KrausChannel};
use crate::entropy::{coherent_information, ic2};
use crate::error::{domain_err, Result};
use crate::qmatrix::CMatrix;
use crate::sampling::{complex_gaussian, haar_isometry, seeded_rng};
use crate::smoothing::{smooth_ic0_operator, smooth_ic0_state, SmoothedResult};

/// Label attached to every reported upper value.
pub const UPPER_LABEL: &str = "witnessed lower estimate of the RHS";
const PROPOSALS: usize = 3;
const HILL_STREAM: u64 = 1 << 40;

/// `Δ(x) = x − log⌊2^x⌋ ∈ [0, 1]`, so that `x − Δ(x)` is the log of a
/// positive integer.
pub fn delta_correction(x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return domain_err(format!("Δ(x) needs finite x ≥ 0, got {x}"));
    }
    let p = x.exp2();
    let m = (p + 1e-9 * p.max(1.0)).floor().max(1.0);
    Ok((x - m.log2()).clamp(0.0, 1.0))
}

/// What a subspace search maximizes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "delta", rename_all = "snake_case")]
pub enum Objective {
    /// `I^c_{0,δ}(ω^{RB}_S)` over the state ball.
    Ic0State(f64),
    /// `Ĩ^c_{0,δ}(ω^{RB}_S)` over the operator ball.
    Ic0Operator(f64),
    /// `−I^c_2(ω^{RE}_S)`, the exponent entering the random-coding fidelity bound.
    Ic2,
    /// `I^c(ω^{RB}_S)`.
    CoherentInfo,
}

/// Budget of the heuristic subspace search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Haar-random isometries tried per code dimension, besides the canonical one.
    pub haar_trials: usize,
    /// Rounds of single-vector replacement hill climbing.
    pub hill_steps: usize,
    pub seed: u64,
    /// Code dimensions to search; all of `1..=d` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_dims: Option<Vec<usize>>,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self { haar_trials: 4, hill_steps: 2, seed: 0, code_dims: None }
    }
}

impl SearchParams {
    fn dims(&self, d: usize) -> Vec<usize> {
        match &self.code_dims {
            Some(v) => v.iter().copied().filter(|&s| s >= 1 && s <= d).collect(),
            None => (1..=d).collect(),
        }
    }
}

/// A scored subspace.
#[derive(Clone, Debug, Serialize)]
pub struct SubspaceWitness {
    pub subspace: CodeSubspace,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<SmoothedResult>,
}

fn evaluate(phi: &KrausChannel, sub: &CodeSubspace, obj: Objective) -> Result<SubspaceWitness> {
    let om = phi.omega_states(sub)?;
    let (value, smoothing) = match obj {
        Objective::Ic0State(d) => {
            let r = smooth_ic0_state(&om.rb, &om.rb_factors(), d)?;
            (r.value, Some(r))
        }
        Objective::Ic0Operator(d) => {
            let r = smooth_ic0_operator(&om.rb, &om.rb_factors(), d)?;
            (r.value, Some(r))
        }
        Objective::Ic2 => (-ic2(&om.re, &om.re_factors())?, None),
        Objective::CoherentInfo => (coherent_information(&om.rb, &om.rb_factors())?, None),
    };
    Ok(SubspaceWitness { subspace: sub.clone(), value, smoothing })
}

fn best_of(cands: Vec<SubspaceWitness>) -> Option<SubspaceWitness> {
    let mut best: Option<SubspaceWitness> = None;
    for c in cands {
        if best.as_ref().is_none_or(|b| c.value > b.value) {
            best = Some(c);
        }
    }
    best
}

/// Replaces column `j` by a random vector and re-orthonormalizes.
fn replace_column(iso: &CMatrix, j: usize, v: DVector<num_complex::Complex64>) -> Option<CMatrix> {
    let mut m = iso.clone();
    m.set_column(j, &v);
    let q = m.qr().q();
    CodeSubspace::new(q.clone()).ok().map(|_| q)
}

/// Best `s`-dimensional subspace found from the canonical subspace and
/// `haar_trials` Haar isometries, refined by hill climbing. For `s = d` every
/// isometry gives the same value, so only the full space is evaluated.
pub fn subspace_search(phi: &KrausChannel, s: usize, obj: Objective, params: &SearchParams) -> Result<SubspaceWitness> {
    let d = phi.in_dim();
    if s == 0 || s > d {
        return domain_err(format!("code dimension {s} outside 1..={d}"));
    }
    if s == d {
        return evaluate(phi, &CodeSubspace::full(d), obj);
    }
    let mut subs = vec![CodeSubspace::canonical(d, s)?];
    for t in 0..params.haar_trials {
        let mut rng = seeded_rng(params.seed, (s as u64) << 20 | t as u64);
        subs.push(CodeSubspace::new(haar_isometry(d, s, &mut rng))?);
    }
    let scored: Vec<SubspaceWitness> = subs.par_iter().map(|x| evaluate(phi, x, obj)).collect::<Result<_>>()?;
    let mut best = best_of(scored).expect("at least the canonical subspace");
    let mut rng = seeded_rng(params.seed, HILL_STREAM | s as u64);
    for _ in 0..params.hill_steps {
        for j in 0..s {
            let props: Vec<CMatrix> = (0..PROPOSALS)
                .filter_map(|_| {
                    let v = DVector::from_fn(d, |_, _| complex_gaussian(&mut rng));
                    replace_column(best.subspace.isometry(), j, v)
                })
                .collect();
            let scored: Vec<SubspaceWitness> = props
                .into_par_iter()
                .map(|q| evaluate(phi, &CodeSubspace::new(q)?, obj))
                .collect::<Result<_>>()?;
            if let Some(c) = best_of(scored) {
                if c.value > best.value + 1e-12 {
                    best = c;
                }
            }
        }
    }
    Ok(best)
}

/// Best witness over the configured code dimensions plus `extra` subspaces.
fn search_all(phi: &KrausChannel, obj: Objective, params: &SearchParams, extra: &[CodeSubspace]) -> Result<SubspaceWitness> {
    let d = phi.in_dim();
    let mut all: Vec<SubspaceWitness> =
        params.dims(d).into_iter().map(|s| subspace_search(phi, s, obj, params)).collect::<Result<_>>()?;
    for e in extra {
        all.push(evaluate(phi, e, obj)?);
    }
    best_of(all).ok_or_else(|| crate::error::QcapError::Domain("no code dimension to search".into()))
}

#[derive(Clone, Debug, Serialize)]
pub struct LowerBound {
    pub epsilon: f64,
    /// The certified lower bound on `Q_ent`: `log m` for a positive integer `m`.
    pub bits: f64,
    /// `max_S I^c_{0,ε/8} + log[1/d + ε²/4]` before rounding.
    pub raw_bits: f64,
    pub delta_correction: f64,
    /// `raw_bits < 0`: only the trivial `Q_ent ≥ 0` is certified.
    pub vacuous: bool,
    pub witness: SubspaceWitness,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return domain_err(format!("ε = {eps} outside [0, 1]"));
    }
    Ok(())
}

pub fn lower_bound(phi: &KrausChannel, eps: f64, params: &SearchParams) -> Result<LowerBound> {
    check_eps(eps)?;
    let mut warnings = Vec::new();
    if eps == 0.0 {
        warnings.push("ε = 0: the lower bound degenerates; smoothing evaluated at δ = 0".to_string());
    }
    let d = phi.in_dim() as f64;
    let witness = search_all(phi, Objective::Ic0State(eps / 8.0), params, &[])?;
    let raw = witness.value + (1.0 / d + eps * eps / 4.0).log2();
    let (bits, delta, vacuous) = if raw >= 0.0 {
        let dc = delta_correction(raw)?;
        (raw - dc, dc, false)
    } else {
        (0.0, 0.0, true)
    };
    Ok(LowerBound { epsilon: eps, bits, raw_bits: raw, delta_correction: delta, vacuous, witness, warnings })
}

#[derive(Clone, Debug, Serialize)]
pub struct UpperBound {
    pub epsilon: f64,
    /// `min(witnessed, log d)`.
    pub bits: f64,
    /// Best value of `Ĩ^c_{0,2√ε}` found; `None` when the ball saturates.
    pub witnessed: Option<f64>,
    /// `log d`, valid for every channel.
    pub cap: f64,
    /// `2√ε ≥ 1`: the operator ball contains arbitrarily small `P`.
    pub saturated: bool,
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<SubspaceWitness>,
}

pub fn upper_bound(phi: &KrausChannel, eps: f64, params: &SearchParams) -> Result<UpperBound> {
    upper_bound_with(phi, eps, params, &[])
}

fn upper_bound_with(phi: &KrausChannel, eps: f64, params: &SearchParams, extra: &[CodeSubspace]) -> Result<UpperBound> {
    check_eps(eps)?;
    let cap = (phi.in_dim() as f64).log2();
    let delta = 2.0 * eps.sqrt();
    let label = UPPER_LABEL.to_string();
    if delta >= 1.0 {
        return Ok(UpperBound { epsilon: eps, bits: cap, witnessed: None, cap, saturated: true, label, witness: None });
    }
    let w = search_all(phi, Objective::Ic0Operator(delta), params, extra)?;
    Ok(UpperBound {
        epsilon: eps,
        bits: w.value.min(cap),
        witnessed: Some(w.value),
        cap,
        saturated: false,
        label,
        witness: Some(w),
    })
}

/// Both sides of the one-shot capacity sandwich at one `ε`.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub epsilon: f64,
    pub lower_bits: f64,
    pub upper_bits: f64,
    pub delta_correction: f64,
    pub lower: LowerBound,
    pub upper: UpperBound,
    /// `max(0, lower − upper)`: how far the heuristic searches fail to nest.
    pub search_slack: f64,
    pub search_budget: SearchParams,
}

/// Lower and upper bounds with shared search seeds. The upper search also
/// scores the lower bound's witness subspace.
pub fn bound_report(phi: &KrausChannel, eps: f64, params: &SearchParams) -> Result<BoundReport> {
    let lower = lower_bound(phi, eps, params)?;
    let upper = upper_bound_with(phi, eps, params, std::slice::from_ref(&lower.witness.subspace))?;
    Ok(BoundReport {
        epsilon: eps,
        lower_bits: lower.bits,
        upper_bits: upper.bits,
        delta_correction: lower.delta_correction,
        search_slack: (lower.bits - upper.bits).max(0.0),
        lower,
        upper,
        search_budget: params.clone(),
    })
}

/// `Q_ent(Φ;ε) − 1 ≤ Q_min(Φ;2ε) ≤ Q_ent(Φ;4ε)`, evaluated with the bounds above.
#[derive(Clone, Debug, Serialize)]
pub struct QminBracket {
    pub epsilon: f64,
    /// `max(0, lower_bound(ε) − 1)`.
    pub lower_bits: f64,
    /// Upper side at `min(4ε, 1)`, labelled like every upper value.
    pub upper_bits: f64,
    pub upper_cap: f64,
    pub label: String,
}

pub fn qmin_bracket(phi: &KrausChannel, eps: f64, params: &SearchParams) -> Result<QminBracket> {
    if !(eps > 0.0) {
        return domain_err(format!("Q_min bracket needs ε > 0, got {eps}"));
    }
    let lo = lower_bound(phi, eps.min(1.0), params)?;
    let up = upper_bound_with(phi, (4.0 * eps).min(1.0), params, std::slice::from_ref(&lo.witness.subspace))?;
    Ok(QminBracket {
        epsilon: eps,
        lower_bits: (lo.bits - 1.0).max(0.0),
        upper_bits: up.bits,
        upper_cap: up.cap,
        label: UPPER_LABEL.to_string(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PerUseRow {
    pub n: usize,
    pub lower_per_use: f64,
    /// Unrounded lower bound per use, `raw_bits / n`.
    pub raw_lower_per_use: f64,
    pub upper_per_use: f64,
    /// `max_S I^c(S, Φ^{⊗n}) / n`, reported for memoryless sequences.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coherent_info_per_use: Option<f64>,
}

/// Lower and upper bounds per channel use for `n = 1..=n_max`.
pub fn per_use_rates(seq: &ChannelSequence, eps: f64, n_max: usize, params: &SearchParams) -> Result<Vec<PerUseRow>> {
    if n_max == 0 || n_max > seq.n_max {
        return domain_err(format!("n_max = {n_max} outside 1..={}", seq.n_max));
    }
    (1..=n_max)
        .map(|n| {
            let phi = seq.channel(n)?;
            let rep = bound_report(&phi, eps, params)?;
            let ci = if seq.is_iid() {
                Some(search_all(&phi, Objective::CoherentInfo, params, &[])?.value / n as f64)
            } else {
                None
            };
            Ok(PerUseRow {
                n,
                lower_per_use: rep.lower_bits / n as f64,
                raw_lower_per_use: rep.lower.raw_bits / n as f64,
                upper_per_use: rep.upper_bits / n as f64,
                coherent_info_per_use: ci,
            })
        })
        .collect()
}
