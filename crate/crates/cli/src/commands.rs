use std::path::Path;

use oneshot_qcap::capacity::{bound_report, per_use_rates, qmin_bracket, BoundReport, PerUseRow, QminBracket, SearchParams};
use oneshot_qcap::channel::{memory_sequence, CodeSubspace, SequenceGenerator};
use oneshot_qcap::codec::ExtReal;
use oneshot_qcap::coding::verify_random_coding_bound;
use oneshot_qcap::entropy::{
    coherent_information, cond_h0, cond_h2, cond_hmin, dmax, ic0, ic2, quasi_entropy, relative_entropy, s1_p,
    QuasiEntropyQuery,
};
use oneshot_qcap::qmatrix::FactorSpec;
use oneshot_qcap::smoothing::{smooth_ic0_operator, smooth_ic0_state, smooth_ic2_state, SmoothedResult};
use oneshot_qcap::spectrum::{
    scan_rates, spectral_coherent_rate, rate_trend, CoherentRateWindow, GammaGrid, RateTrend, SPECTRUM_LOG_DIM_LIMIT,
};
use oneshot_qcap::QcapError;
use serde::Serialize;

use crate::input::{self, EntropyRequest};
use crate::{CliError, SearchArgs};

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn params(a: &SearchArgs) -> SearchParams {
    SearchParams { haar_trials: a.trials, hill_steps: a.hill_steps, seed: a.seed, code_dims: a.code_dims.clone() }
}

#[derive(Serialize)]
struct ChannelInfo {
    in_dim: usize,
    out_dim: usize,
    kraus_ops: usize,
}

#[derive(Serialize)]
struct BoundsOutput {
    channel: ChannelInfo,
    report: BoundReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    qmin: Option<QminBracket>,
}

pub fn bounds(path: &Path, eps: f64, qmin: bool, search: &SearchArgs) -> Result<String, CliError> {
    let phi = input::channel(path)?;
    let p = params(search);
    let report = bound_report(&phi, eps, &p)?;
    let qmin = if qmin { Some(qmin_bracket(&phi, eps, &p)?) } else { None };
    let channel = ChannelInfo { in_dim: phi.in_dim(), out_dim: phi.out_dim(), kraus_ops: phi.env_dim() };
    Ok(pretty(&BoundsOutput { channel, report, qmin }))
}

#[derive(Serialize)]
struct QuasiValue {
    alpha: f64,
    value: ExtReal,
}

#[derive(Serialize)]
struct HminValue {
    value: f64,
    bracket: [f64; 2],
    converged: bool,
}

#[derive(Serialize)]
struct Smoothed {
    delta: f64,
    ic0_state: SmoothedResult,
    ic0_operator: SmoothedResult,
    ic2_state: SmoothedResult,
}

#[derive(Serialize, Default)]
struct EntropyLine {
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<serde_json::Value>,
    dim: usize,
    von_neumann: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    relative_entropy: Option<ExtReal>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dmax: Option<ExtReal>,
    #[serde(skip_serializing_if = "Option::is_none")]
    s1_p: Option<ExtReal>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    quasi_entropy: Vec<QuasiValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cond_h0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cond_h2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cond_hmin: Option<HminValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ic0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ic2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coherent_information: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    smoothed: Option<Smoothed>,
}

/// Support violations become `+inf`; other errors propagate.
fn or_inf(r: oneshot_qcap::Result<f64>) -> Result<ExtReal, CliError> {
    match r {
        Ok(x) => Ok(ExtReal::Finite(x)),
        Err(QcapError::Domain(_)) => Ok(ExtReal::PosInf),
        Err(e) => Err(e.into()),
    }
}

fn entropy_line(r: EntropyRequest, delta: f64) -> Result<EntropyLine, CliError> {
    let mut line = EntropyLine {
        id: r.id,
        dim: r.rho.dim(),
        von_neumann: oneshot_qcap::entropy::von_neumann(&r.rho),
        ..Default::default()
    };
    if let Some(p) = &r.p {
        if p.dim() != r.rho.dim() {
            return Err(QcapError::Dimension(format!("p has dim {} but rho has dim {}", p.dim(), r.rho.dim())).into());
        }
    }
    if let Some(sigma) = &r.sigma {
        if sigma.dim() != r.rho.dim() {
            return Err(QcapError::Dimension(format!("sigma has dim {} but rho has dim {}", sigma.dim(), r.rho.dim())).into());
        }
        line.relative_entropy = Some(relative_entropy(&r.rho, sigma)?);
        line.dmax = Some(dmax(&r.rho, sigma)?);
        line.s1_p = Some(or_inf(s1_p(&r.rho, sigma, r.p.as_ref()))?);
        for &alpha in &r.alpha {
            if !(alpha >= 0.0) {
                return Err(QcapError::Domain(format!("alpha = {alpha} must be nonnegative")).into());
            }
            let value = if alpha == 1.0 {
                or_inf(s1_p(&r.rho, sigma, r.p.as_ref()))?
            } else {
                let q = QuasiEntropyQuery { rho: r.rho.clone(), sigma: sigma.clone(), p: r.p.clone(), alpha };
                or_inf(quasi_entropy(&q))?
            };
            line.quasi_entropy.push(QuasiValue { alpha, value });
        }
    }
    if let Some(f) = r.factors {
        let f = FactorSpec::new(f.dims, f.labels)?;
        line.cond_h0 = Some(cond_h0(&r.rho, &f)?);
        line.cond_h2 = Some(cond_h2(&r.rho, &f)?);
        let h = cond_hmin(&r.rho, &f, None)?;
        line.cond_hmin = Some(HminValue { value: h.value, bracket: h.bracket, converged: h.converged });
        line.ic0 = Some(ic0(&r.rho, &f)?);
        line.ic2 = Some(ic2(&r.rho, &f)?);
        line.coherent_information = Some(coherent_information(&r.rho, &f)?);
        if delta > 0.0 {
            line.smoothed = Some(Smoothed {
                delta,
                ic0_state: smooth_ic0_state(&r.rho, &f, delta)?,
                ic0_operator: smooth_ic0_operator(&r.rho, &f, delta)?,
                ic2_state: smooth_ic2_state(&r.rho, &f, delta)?,
            });
        }
    }
    Ok(line)
}

/// One compact JSON line per request.
pub fn entropy(path: &Path, delta: f64) -> Result<String, CliError> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(CliError::Usage(format!("--delta {delta} outside [0, 1]")));
    }
    let mut out = String::new();
    for r in input::entropy_requests(path)? {
        out.push_str(&serde_json::to_string(&entropy_line(r, delta)?).expect("reports serialize"));
        out.push('\n');
    }
    Ok(out)
}

pub fn simulate(
    path: &Path,
    code_dim: Option<usize>,
    rank: Option<usize>,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<String, CliError> {
    let phi = input::channel(path)?;
    let s = code_dim.unwrap_or(phi.in_dim());
    let sub = CodeSubspace::canonical(phi.in_dim(), s)?;
    let report = verify_random_coding_bound(&phi, &sub, rank.unwrap_or(s), delta, trials, seed)?;
    Ok(pretty(&report))
}

fn block_lengths(n_list: Option<Vec<usize>>, n_max: usize) -> Result<Vec<usize>, CliError> {
    let ns = n_list.unwrap_or_else(|| (1..=n_max).collect());
    if ns.is_empty() || ns.contains(&0) {
        return Err(CliError::Usage("block lengths must be positive".into()));
    }
    Ok(ns)
}

#[derive(Serialize)]
struct PairRow {
    n: usize,
    gamma_lo: f64,
    gamma_hi: f64,
    /// `S(ρ‖σ)` for iid pairs.
    oracle: Option<f64>,
    width: f64,
    widenings: usize,
    grid: GammaGrid,
}

#[derive(Serialize)]
struct PairOutput {
    kind: &'static str,
    tol: f64,
    rows: Vec<PairRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trend: Option<RateTrend>,
}

pub fn spectrum_pair(
    path: &Path,
    n_list: Option<Vec<usize>>,
    n_max: Option<usize>,
    grid: &GammaGrid,
    tol: f64,
) -> Result<String, CliError> {
    let pair = input::pair(path)?;
    let ns = block_lengths(n_list, n_max.unwrap_or(pair.n_max))?;
    let trend = if pair.is_iid() { Some(rate_trend(&pair, &ns, grid, tol)?) } else { None };
    let oracle = trend.as_ref().map(|s| s.oracle);
    let rows = ns
        .iter()
        .map(|&n| {
            let w = scan_rates(&pair, n, grid, tol)?;
            Ok(PairRow {
                n,
                gamma_lo: w.gamma_lo,
                gamma_hi: w.gamma_hi,
                oracle,
                width: w.width(),
                widenings: w.widenings,
                grid: w.grid,
            })
        })
        .collect::<Result<_, CliError>>()?;
    let kind = if pair.is_iid() { "iid" } else { "markov" };
    Ok(pretty(&PairOutput { kind, tol, rows, trend }))
}

#[derive(Serialize)]
struct CoherentOutput {
    kind: &'static str,
    tol: f64,
    rows: Vec<CoherentRateWindow>,
}

pub fn spectrum_channel(
    path: &Path,
    n_list: Option<Vec<usize>>,
    n_max: Option<usize>,
    grid: &GammaGrid,
    tol: f64,
) -> Result<String, CliError> {
    let phi = input::channel(path)?;
    let ns = block_lengths(n_list, n_max.unwrap_or(2))?;
    let (dr, db) = (phi.in_dim(), phi.out_dim());
    let site = ((dr * db) as f64).log2();
    let rows = ns
        .iter()
        .map(|&n| {
            if n as f64 * site > SPECTRUM_LOG_DIM_LIMIT + 1e-12 {
                return Err(QcapError::Resource(format!(
                    "n·log2(d_R d_B) = {:.2} exceeds the limit {SPECTRUM_LOG_DIM_LIMIT}",
                    n as f64 * site
                ))
                .into());
            }
            let om = phi.tensor_power(n).omega_states(&CodeSubspace::full(dr.pow(n as u32)))?;
            Ok(spectral_coherent_rate(&om.rb, dr, db, n, grid, tol)?)
        })
        .collect::<Result<_, CliError>>()?;
    Ok(pretty(&CoherentOutput { kind: "coherent", tol, rows }))
}

#[derive(Serialize)]
struct PerUseOutput {
    epsilon: f64,
    n_max: usize,
    iid: bool,
    search_budget: SearchParams,
    rows: Vec<PerUseRow>,
}

pub fn per_use(
    channel: Option<&Path>,
    sequence: Option<&Path>,
    eps: f64,
    n_max: usize,
    search: &SearchArgs,
) -> Result<String, CliError> {
    let seq = match (channel, sequence) {
        (Some(c), _) => memory_sequence(SequenceGenerator::Iid(input::channel(c)?), n_max)?,
        (None, Some(s)) => input::sequence(s)?,
        (None, None) => return Err(CliError::Usage("per-use needs --channel or --sequence".into())),
    };
    let p = params(search);
    let rows = per_use_rates(&seq, eps, n_max, &p)?;
    Ok(pretty(&PerUseOutput { epsilon: eps, n_max, iid: seq.is_iid(), search_budget: p, rows }))
}
