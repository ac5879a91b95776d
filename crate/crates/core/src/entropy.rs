//! Unsmoothed entropic quantities in bits. Relative entropies come with
//! Rényi quasi-entropies weighted by a test operator; conditional entropies
//! are given at orders 0 and 2 and as min-entropy.
//!
//! Bipartite functions take a two-factor [`FactorSpec`]. The first factor is
//! the conditioned system (`A`, or the reference `R`) and the second the
//! conditioning system (`B` or `E`).

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::channel::{CodeSubspace, KrausChannel};
use crate::codec::{self, ExtReal};
use crate::error::{dim_err, domain_err, QcapError, Result};
use crate::qmatrix::{
    c, support_projector, trace_first, trace_product, CMatrix, DensityOperator, FactorSpec, HermitianOperator, ONE,
    RANK_TOL,
};

/// Traces below this make `ψ_α` undefined (orthogonal supports).
pub const ORTHOGONALITY_TOL: f64 = 1e-14;
/// Weight of `ρ` outside `supp σ` above which divergences are `+∞`.
pub const SUPPORT_TOL: f64 = 1e-10;

/// Shannon/von Neumann entropy `−Tr ρ log ρ`.
pub fn von_neumann(rho: &HermitianOperator) -> f64 {
    rho.eigenvalues().iter().filter(|&&l| l > 0.0).map(|&l| -l * l.log2()).sum::<f64>() + 0.0
}

/// Weight of `rho` outside the support of `sigma`.
fn weight_outside(rho: &HermitianOperator, sigma: &HermitianOperator) -> f64 {
    let pi = support_projector(sigma, RANK_TOL);
    rho.trace() - rho.inner(&pi)
}

/// `S(ρ‖σ) = Tr ρ(log ρ − log σ)`, `+∞` unless `supp ρ ⊆ supp σ`.
pub fn relative_entropy(rho: &DensityOperator, sigma: &HermitianOperator) -> Result<ExtReal> {
    rho.check_same_dim(sigma, "relative_entropy")?;
    if weight_outside(rho, sigma) > SUPPORT_TOL {
        return Ok(ExtReal::PosInf);
    }
    let lr = rho.support_log2(RANK_TOL);
    let ls = sigma.support_log2(RANK_TOL);
    Ok(ExtReal::Finite(rho.inner(&lr) - rho.inner(&ls)))
}

/// Inputs of [`quasi_entropy`]. `alpha = 0` selects the support-projector form.
#[derive(Clone, Debug)]
pub struct QuasiEntropyQuery {
    pub rho: DensityOperator,
    pub sigma: HermitianOperator,
    /// Test operator `0 ≤ P ≤ 𝟙`; `None` means `P = 𝟙`.
    pub p: Option<HermitianOperator>,
    pub alpha: f64,
}

fn sqrt_or_identity(p: Option<&HermitianOperator>, d: usize) -> Result<HermitianOperator> {
    match p {
        None => Ok(HermitianOperator::identity(d)),
        Some(p) => {
            if p.dim() != d {
                return dim_err(format!("test operator dim {} but state dim {d}", p.dim()));
            }
            let ev = p.eigenvalues();
            if ev[0] > 1.0 + 1e-9 || ev[d - 1] < -1e-9 {
                return domain_err("test operator must satisfy 0 ≤ P ≤ 𝟙");
            }
            Ok(p.sqrt_psd())
        }
    }
}

/// `Tr[√P ρ^α √P σ^{1−α}]` with powers taken on supports.
fn quasi_trace(rho: &HermitianOperator, sigma: &HermitianOperator, sqrt_p: &HermitianOperator, alpha: f64) -> f64 {
    let ra = if alpha == 0.0 { support_projector(rho, RANK_TOL) } else { rho.support_power(alpha, RANK_TOL) };
    let sb = if alpha == 1.0 { support_projector(sigma, RANK_TOL) } else { sigma.support_power(1.0 - alpha, RANK_TOL) };
    ra.sandwich(sqrt_p).inner(&sb)
}

/// `ψ_α^P(ρ‖σ) = log Tr[√P ρ^α √P σ^{1−α}]` for `α ≥ 0`.
pub fn psi_alpha(rho: &DensityOperator, sigma: &HermitianOperator, p: Option<&HermitianOperator>, alpha: f64) -> Result<f64> {
    rho.check_same_dim(sigma, "psi_alpha")?;
    if !(alpha >= 0.0) {
        return domain_err(format!("alpha = {alpha} must be nonnegative"));
    }
    let sp = sqrt_or_identity(p, rho.dim())?;
    let tr = quasi_trace(rho, sigma, &sp, alpha);
    if tr <= ORTHOGONALITY_TOL {
        return domain_err(format!("√Pρ^α√P and σ^(1−α) are orthogonal (trace {tr:.3e})"));
    }
    Ok(tr.log2())
}

/// `S_α^P(ρ‖σ) = ψ_α^P/(α−1)`, and `−log Tr[√P Π_ρ √P σ]` at `α = 0`.
pub fn quasi_entropy(q: &QuasiEntropyQuery) -> Result<f64> {
    if q.alpha == 1.0 {
        return domain_err("alpha = 1 is the limit case; use s1_p");
    }
    let psi = psi_alpha(&q.rho, &q.sigma, q.p.as_ref(), q.alpha)?;
    Ok(psi / (q.alpha - 1.0))
}

/// The `α → 1` limit
/// `Tr[√P ρlogρ √P Π_σ − √P ρ √P log σ] / Tr[√P ρ √P Π_σ]`.
pub fn s1_p(rho: &DensityOperator, sigma: &HermitianOperator, p: Option<&HermitianOperator>) -> Result<f64> {
    rho.check_same_dim(sigma, "s1_p")?;
    let sp = sqrt_or_identity(p, rho.dim())?;
    s1_p_sqrt(rho, sigma, &sp)
}

pub(crate) fn s1_p_sqrt(rho: &HermitianOperator, sigma: &HermitianOperator, sqrt_p: &HermitianOperator) -> Result<f64> {
    let pi_s = support_projector(sigma, RANK_TOL);
    let omega = rho.sandwich(sqrt_p);
    let den = omega.inner(&pi_s);
    if den <= ORTHOGONALITY_TOL {
        return domain_err(format!("Tr[√Pρ√P Π_σ] = {den:.3e} vanishes"));
    }
    let rlr = rho.map_spectrum(|l| if l > 0.0 { l * l.log2() } else { 0.0 });
    let num = rlr.sandwich(sqrt_p).inner(&pi_s) - omega.inner(&sigma.support_log2(RANK_TOL));
    Ok(num / den)
}

/// `D_max(ρ‖σ) = log λ_max(σ^{-1/2} ρ σ^{-1/2})`, `+∞` on a support violation.
pub fn dmax(rho: &HermitianOperator, sigma: &HermitianOperator) -> Result<ExtReal> {
    rho.check_same_dim(sigma, "dmax")?;
    if weight_outside(rho, sigma) > SUPPORT_TOL {
        return Ok(ExtReal::PosInf);
    }
    let inv_sqrt = sigma.support_power(-0.5, RANK_TOL);
    let lam = rho.sandwich(&inv_sqrt).max_eigenvalue();
    if lam <= 0.0 {
        return domain_err("D_max undefined for a zero operator");
    }
    Ok(ExtReal::Finite(lam.log2()))
}

fn bipartite(rho: &HermitianOperator, f: &FactorSpec) -> Result<(usize, usize)> {
    let (da, db) = f.check_bipartite()?;
    if da * db != rho.dim() {
        return dim_err(format!("factor dims {:?} inconsistent with operator dim {}", f.dims, rho.dim()));
    }
    Ok((da, db))
}

/// `H_0(A|B) = log λ_max(Tr_A Π_ρ)`.
pub fn cond_h0(rho: &DensityOperator, f: &FactorSpec) -> Result<f64> {
    let (da, db) = bipartite(rho, f)?;
    let m = trace_first(&support_projector(rho, RANK_TOL), da, db);
    Ok(m.max_eigenvalue().log2())
}

/// `H_2(A|B) = −2 log Tr √(Tr_A ρ²)`.
pub fn cond_h2(rho: &DensityOperator, f: &FactorSpec) -> Result<f64> {
    let (da, db) = bipartite(rho, f)?;
    let sq = HermitianOperator::from_matrix_unchecked(rho.matrix() * rho.matrix());
    let m = trace_first(&sq, da, db);
    let t: f64 = m.eigenvalues().iter().map(|&l| l.max(0.0).sqrt()).sum();
    Ok(-2.0 * t.log2())
}

/// The optimal `σ^B ∝ √(Tr_A ρ²)` of the order-2 minimization.
pub fn cond_h2_optimizer(rho: &DensityOperator, f: &FactorSpec) -> Result<DensityOperator> {
    let (da, db) = bipartite(rho, f)?;
    let sq = HermitianOperator::from_matrix_unchecked(rho.matrix() * rho.matrix());
    DensityOperator::normalized(trace_first(&sq, da, db).sqrt_psd())
}

/// `I^c_0 = −H_0`, `I^c_2 = −H_2`.
pub fn ic0(rho: &DensityOperator, f: &FactorSpec) -> Result<f64> {
    cond_h0(rho, f).map(|h| -h)
}

pub fn ic2(rho: &DensityOperator, f: &FactorSpec) -> Result<f64> {
    cond_h2(rho, f).map(|h| -h)
}

/// Outcome of [`cond_hmin`].
#[derive(Clone, Debug, Serialize)]
pub struct HminResult {
    /// Reported `H_min` in bits: the lower end of `bracket`.
    pub value: f64,
    /// Certified interval containing the true `H_min` (degenerate when `σ` is fixed).
    pub bracket: [f64; 2],
    /// The conditioning state attaining `value`.
    #[serde(with = "codec::hermitian")]
    pub sigma: HermitianOperator,
    pub converged: bool,
    pub iterations: usize,
}

/// Largest conditioning dimension accepted by the free optimization.
pub const HMIN_MAX_COND_DIM: usize = 8;
/// Target bracket width in bits.
pub const HMIN_BRACKET_TOL: f64 = 1e-7;

/// `H_min(A|B)`. With `sigma` given this is `−D_max(ρ‖𝟙⊗σ)`; otherwise the
/// maximum over conditioning states, solved as
/// `min Tr Y s.t. 𝟙⊗Y ≥ ρ` with a log-det barrier. The dual point
/// `Z = S⁻¹/t`, rescaled to satisfy `Tr_A Z ≤ 𝟙`, certifies the other end
/// of the bracket.
pub fn cond_hmin(rho: &DensityOperator, f: &FactorSpec, sigma: Option<&DensityOperator>) -> Result<HminResult> {
    let (da, db) = bipartite(rho, f)?;
    if let Some(s) = sigma {
        if s.dim() != db {
            return dim_err(format!("conditioning state dim {} but factor dim {db}", s.dim()));
        }
        let big = HermitianOperator::identity(da).kron(s);
        let v = match dmax(rho, &big)? {
            ExtReal::Finite(x) => -x,
            ExtReal::PosInf => return domain_err("supp Tr_A ρ is not contained in supp σ"),
        };
        return Ok(HminResult { value: v, bracket: [v, v], sigma: (*s).clone().into_op(), converged: true, iterations: 0 });
    }
    if db == 1 {
        let trivial = DensityOperator::maximally_mixed(1);
        return cond_hmin(rho, f, Some(&trivial));
    }
    if db > HMIN_MAX_COND_DIM {
        return Err(QcapError::Resource(format!(
            "free H_min optimization limited to conditioning dim ≤ {HMIN_MAX_COND_DIM}, got {db}"
        )));
    }
    hmin_barrier(rho, da, db)
}

/// Orthonormal Hermitian basis of `db × db` matrices.
fn hermitian_basis(db: usize) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(db * db);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..db {
        let mut m = CMatrix::zeros(db, db);
        m[(j, j)] = ONE;
        out.push(m);
    }
    for j in 0..db {
        for k in j + 1..db {
            let mut m = CMatrix::zeros(db, db);
            m[(j, k)] = c(h);
            m[(k, j)] = c(h);
            out.push(m);
            let mut m = CMatrix::zeros(db, db);
            m[(j, k)] = num_complex::Complex64::new(0.0, -h);
            m[(k, j)] = num_complex::Complex64::new(0.0, h);
            out.push(m);
        }
    }
    out
}

fn build_y(basis: &[CMatrix], y: &DVector<f64>, db: usize) -> CMatrix {
    let mut m = CMatrix::zeros(db, db);
    for (b, &w) in basis.iter().zip(y.iter()) {
        m += b.scale(w);
    }
    m
}

/// Inverse of a Hermitian positive definite matrix, `None` if not PD.
fn pd_inverse(m: &CMatrix) -> Option<CMatrix> {
    let ch = m.clone().cholesky()?;
    Some(ch.inverse())
}

fn hmin_barrier(rho: &DensityOperator, da: usize, db: usize) -> Result<HminResult> {
    let n = da * db;
    let basis = hermitian_basis(db);
    let k = basis.len();
    let lifted: Vec<CMatrix> = basis.iter().map(|b| CMatrix::identity(da, da).kronecker(b)).collect();
    let trace_b: Vec<f64> = basis.iter().map(|b| (0..db).map(|i| b[(i, i)].re).sum()).collect();
    let lam = rho.max_eigenvalue().max(1e-300);

    // strictly feasible start: Y = 2λ_max 𝟙
    let mut y = DVector::<f64>::zeros(k);
    for j in 0..db {
        y[j] = 2.0 * lam;
    }
    let slack = |y: &DVector<f64>| -> CMatrix {
        CMatrix::identity(da, da).kronecker(&build_y(&basis, y, db)) - rho.matrix()
    };

    let mut t = n as f64 / (2.0 * lam * db as f64);
    let mut iterations = 0;
    let mut best_upper = f64::INFINITY; // on Tr Y
    let mut best_y = y.clone();
    let mut best_lower = 0.0f64; // on Tr[ρZ]
    let mut converged = false;

    for _outer in 0..60 {
        for _inner in 0..80 {
            iterations += 1;
            let s = slack(&y);
            let sinv = match pd_inverse(&s) {
                Some(m) => m,
                None => break,
            };
            let m: Vec<CMatrix> = lifted.iter().map(|l| &sinv * l).collect();
            let mut g = DVector::<f64>::zeros(k);
            let mut h = DMatrix::<f64>::zeros(k, k);
            for i in 0..k {
                g[i] = t * trace_b[i] - (0..n).map(|r| m[i][(r, r)].re).sum::<f64>();
                for j in i..k {
                    let v = trace_product(&m[i], &m[j]).re;
                    h[(i, j)] = v;
                    h[(j, i)] = v;
                }
            }
            let step = match h.clone().cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => break,
            };
            let decrement = -g.dot(&step);
            if decrement < 1e-12 {
                break;
            }
            // damped Newton: self-concordance makes 1/(1+√λ²) a safe step
            let mut alpha = if decrement > 0.25 { 1.0 / (1.0 + decrement.sqrt()) } else { 1.0 };
            let mut accepted = false;
            for _ in 0..60 {
                let cand = &y + &step * alpha;
                if slack(&cand).cholesky().is_some() {
                    y = cand;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted || decrement < 1e-10 {
                break;
            }
        }

        let s = slack(&y);
        let tr_y: f64 = (0..db).map(|j| y[j]).sum();
        if s.clone().cholesky().is_some() && tr_y < best_upper {
            best_upper = tr_y;
            best_y = y.clone();
        }
        if let Some(sinv) = pd_inverse(&s) {
            let z = HermitianOperator::from_matrix_unchecked(sinv);
            let marg = trace_first(&z, da, db).max_eigenvalue();
            if marg > 0.0 {
                best_lower = best_lower.max(rho.inner(&z) / marg);
            }
        }
        if best_lower > 0.0 && best_upper.is_finite() && (best_upper / best_lower).log2() < HMIN_BRACKET_TOL {
            converged = true;
            break;
        }
        t *= 8.0;
    }

    let upper_h = if best_lower > 0.0 { -best_lower.log2() } else { f64::INFINITY };
    let lower_h = -best_upper.log2();
    let ymat = HermitianOperator::from_matrix_unchecked(build_y(&basis, &best_y, db));
    let sigma = ymat.scale(1.0 / best_upper);
    Ok(HminResult { value: lower_h, bracket: [lower_h, upper_h], sigma, converged, iterations })
}

/// `I^c(ρ) = S(ρ_B) − S(ρ_AB)`.
pub fn coherent_information(rho: &DensityOperator, f: &FactorSpec) -> Result<f64> {
    let (da, db) = bipartite(rho, f)?;
    let rb = trace_first(rho, da, db);
    Ok(von_neumann(&rb) - von_neumann(rho))
}

/// `I^c(S, Φ) = I^c(ω^{RB}_S)`.
pub fn channel_coherent_information(ch: &KrausChannel, s: &CodeSubspace) -> Result<f64> {
    let om = ch.omega_states(s)?;
    coherent_information(&om.rb, &om.rb_factors())
}

/// `min_ξ S(ρ^{AB}‖σ^A ⊗ ξ^B)`, attained at `ξ = ρ^B`.
pub fn min_relative_entropy_marginal(rho: &DensityOperator, f: &FactorSpec, sigma_a: &HermitianOperator) -> Result<ExtReal> {
    let (da, db) = bipartite(rho, f)?;
    if sigma_a.dim() != da {
        return dim_err(format!("σ_A dim {} but factor dim {da}", sigma_a.dim()));
    }
    let rho_b = trace_first(rho, da, db);
    relative_entropy(rho, &sigma_a.kron(&rho_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{depolarizing, identity, random_channel};
    use crate::qmatrix::{max_entangled, partial_trace};
    use crate::sampling::{random_contraction, random_density, random_positive, seeded_rng};
    use approx::assert_abs_diff_eq;

    fn bloch_state(theta: f64, phi: f64, r: f64) -> DensityOperator {
        let (x, y, z) = (r * theta.sin() * phi.cos(), r * theta.sin() * phi.sin(), r * theta.cos());
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[
                c((1.0 + z) / 2.0),
                num_complex::Complex64::new(x / 2.0, -y / 2.0),
                num_complex::Complex64::new(x / 2.0, y / 2.0),
                c((1.0 - z) / 2.0),
            ],
        );
        DensityOperator::from_matrix(m).unwrap()
    }

    #[test]
    fn relative_entropy_examples() {
        let mut rng = seeded_rng(31, 0);
        let rho = random_density(3, 3, &mut rng);
        assert_abs_diff_eq!(relative_entropy(&rho, &rho).unwrap().to_f64(), 0.0, epsilon = 1e-10);
        let z0 = DensityOperator::basis(2, 0);
        let mixed = DensityOperator::maximally_mixed(2);
        assert_abs_diff_eq!(relative_entropy(&z0, &mixed).unwrap().to_f64(), 1.0, epsilon = 1e-12);
        assert_eq!(relative_entropy(&z0, &DensityOperator::basis(2, 1)).unwrap(), ExtReal::PosInf);
    }

    #[test]
    fn quasi_entropy_examples() {
        let mut rng = seeded_rng(32, 0);
        let rho = random_density(3, 3, &mut rng);
        for alpha in [0.0, 0.3, 2.0] {
            let q = QuasiEntropyQuery { rho: rho.clone(), sigma: (*rho).clone(), p: None, alpha };
            assert_abs_diff_eq!(quasi_entropy(&q).unwrap(), 0.0, epsilon = 1e-10);
        }
        // classical Rényi divergence
        let a = [0.5, 0.3, 0.2];
        let b = [0.1, 0.6, 0.3];
        let rho = DensityOperator::diagonal(&a).unwrap();
        let sigma = HermitianOperator::diagonal(&b);
        for alpha in [0.25, 0.5, 1.5, 3.0] {
            let q = QuasiEntropyQuery { rho: rho.clone(), sigma: sigma.clone(), p: None, alpha };
            let oracle: f64 =
                a.iter().zip(b.iter()).map(|(x, y): (&f64, &f64)| x.powf(alpha) * y.powf(1.0 - alpha)).sum::<f64>().log2()
                    / (alpha - 1.0);
            assert_abs_diff_eq!(quasi_entropy(&q).unwrap(), oracle, epsilon = 1e-10);
        }
        // α → 0
        for _ in 0..10 {
            let rho = random_density(3, 2, &mut rng);
            let sigma = random_positive(3, &mut rng);
            let p = random_contraction(3, &mut rng);
            let s0 = quasi_entropy(&QuasiEntropyQuery { rho: rho.clone(), sigma: sigma.clone(), p: Some(p.clone()), alpha: 0.0 })
                .unwrap();
            let s001 =
                quasi_entropy(&QuasiEntropyQuery { rho, sigma, p: Some(p), alpha: 0.001 }).unwrap();
            assert!((s0 - s001).abs() < 1e-2, "{s0} {s001}");
        }
        let z0 = DensityOperator::basis(2, 0);
        let q = QuasiEntropyQuery { rho: z0, sigma: HermitianOperator::diagonal(&[0.0, 1.0]), p: None, alpha: 0.5 };
        assert!(matches!(quasi_entropy(&q), Err(QcapError::Domain(_))));
    }

    #[test]
    fn s1_examples() {
        let mut rng = seeded_rng(33, 0);
        for _ in 0..10 {
            let rho = random_density(3, 2, &mut rng);
            let sigma = random_density(3, 3, &mut rng);
            let s = relative_entropy(&rho, &sigma).unwrap().to_f64();
            assert_abs_diff_eq!(s1_p(&rho, &sigma, None).unwrap(), s, epsilon = 1e-10);

            let p = random_contraction(3, &mut rng);
            let h = 1e-5;
            let fd = (psi_alpha(&rho, &sigma, Some(&p), 1.0 + h).unwrap()
                - psi_alpha(&rho, &sigma, Some(&p), 1.0 - h).unwrap())
                / (2.0 * h);
            let v = s1_p(&rho, &sigma, Some(&p)).unwrap();
            assert!((fd - v).abs() < 1e-4, "{fd} {v}");
            let cs = 0.37;
            let scaled = s1_p(&rho, &sigma.scale(cs), Some(&p)).unwrap();
            assert_abs_diff_eq!(scaled, v - cs.log2(), epsilon = 1e-10);
        }
    }

    #[test]
    fn dmax_examples() {
        let mut rng = seeded_rng(34, 0);
        let rho = random_density(3, 3, &mut rng);
        assert_abs_diff_eq!(dmax(&rho, &rho).unwrap().to_f64(), 0.0, epsilon = 1e-9);
        let phi = crate::sampling::random_pure(4, &mut rng).density();
        assert_abs_diff_eq!(
            dmax(&phi, &DensityOperator::maximally_mixed(4)).unwrap().to_f64(),
            2.0,
            epsilon = 1e-10
        );
        assert_eq!(dmax(&DensityOperator::basis(2, 0), &DensityOperator::basis(2, 1)).unwrap(), ExtReal::PosInf);
    }

    #[test]
    fn h0_examples() {
        for m in 1..=3 {
            let mes = max_entangled(m, 3).unwrap().density();
            let f = FactorSpec::bipartite(3, 3);
            assert_abs_diff_eq!(cond_h0(&mes, &f).unwrap(), -(m as f64).log2(), epsilon = 1e-10);
            assert_abs_diff_eq!(cond_h2(&mes, &f).unwrap(), -(m as f64).log2(), epsilon = 1e-10);
        }
        let mut rng = seeded_rng(35, 0);
        let a = random_density(3, 2, &mut rng);
        let b = random_density(2, 2, &mut rng);
        let f = FactorSpec::bipartite(3, 2);
        assert_abs_diff_eq!(cond_h0(&a.kron(&b), &f).unwrap(), 2f64.log2(), epsilon = 1e-9);
    }

    /// Bloch-ball grid over `(θ, φ, r)` followed by a shrinking pattern
    /// search from the best node, with `r` clamped to `[0, 1]`.
    fn grid_min(f: impl Fn(&DensityOperator) -> f64) -> f64 {
        let eval = |v: [f64; 3]| f(&bloch_state(v[0], v[1], v[2].clamp(0.0, 1.0 - 1e-12)));
        let mut best = (f64::INFINITY, [0.0; 3]);
        let n = 24;
        for i in 0..=n {
            let theta = std::f64::consts::PI * i as f64 / n as f64;
            for j in 0..n {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                for r in [0.0, 0.3, 0.6, 0.8, 0.9, 0.97, 1.0] {
                    let v = [theta, phi, r];
                    let val = eval(v);
                    if val < best.0 {
                        best = (val, v);
                    }
                }
            }
        }
        let mut step = 0.05;
        while step > 1e-9 {
            let mut improved = false;
            for axis in 0..3 {
                for sgn in [-1.0, 1.0] {
                    let mut v = best.1;
                    v[axis] += sgn * step;
                    v[2] = v[2].clamp(0.0, 1.0);
                    let val = eval(v);
                    if val < best.0 {
                        best = (val, v);
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best.0
    }

    #[test]
    fn closed_forms_dominate_bloch_grid() {
        let mut rng = seeded_rng(36, 0);
        let f = FactorSpec::bipartite(2, 2);
        for _ in 0..5 {
            let rho = random_density(4, 3, &mut rng);
            let pi = support_projector(&rho, RANK_TOL);
            let h0 = cond_h0(&rho, &f).unwrap();
            let s0 = |s: &DensityOperator| -pi.inner(&HermitianOperator::identity(2).kron(s)).log2();
            let g0 = grid_min(s0);
            assert!(-h0 <= g0 + 1e-12);
            assert!(g0 + h0 < 1e-6, "{}", g0 + h0);

            let h2 = cond_h2(&rho, &f).unwrap();
            let sq = HermitianOperator::from_matrix_unchecked(rho.matrix() * rho.matrix());
            let s2 = |s: &DensityOperator| sq.inner(&HermitianOperator::identity(2).kron(s).map_spectrum(|l| 1.0 / l)).log2();
            let g2 = grid_min(s2);
            assert!(-h2 <= g2 + 1e-12);
            assert!(g2 + h2 < 1e-6, "{}", g2 + h2);
        }
    }

    #[test]
    fn hmin_examples() {
        for m in 1..=3 {
            let mes = max_entangled(m, m).unwrap().density();
            let f = FactorSpec::bipartite(m, m);
            let r = cond_hmin(&mes, &f, Some(&DensityOperator::maximally_mixed(m))).unwrap();
            assert_abs_diff_eq!(r.value, -(m as f64).log2(), epsilon = 1e-10);
            let free = cond_hmin(&mes, &f, None).unwrap();
            assert!(free.converged);
            assert!((free.value + (m as f64).log2()).abs() < 1e-6, "{:?}", free.bracket);
        }
        let mut rng = seeded_rng(37, 0);
        let a = random_density(2, 2, &mut rng);
        let b = random_density(3, 3, &mut rng);
        let f = FactorSpec::bipartite(2, 3);
        let r = cond_hmin(&a.kron(&b), &f, Some(&b)).unwrap();
        assert_abs_diff_eq!(r.value, -a.max_eigenvalue().log2(), epsilon = 1e-9);
    }

    #[test]
    fn hmin_bracket_is_tight_and_ordered() {
        let mut rng = seeded_rng(38, 0);
        for (da, db) in [(2, 2), (2, 3), (3, 2)] {
            let f = FactorSpec::bipartite(da, db);
            for _ in 0..10 {
                let rho = random_density(da * db, 1 + (da * db) / 2, &mut rng);
                let r = cond_hmin(&rho, &f, None).unwrap();
                assert!(r.converged);
                assert!(r.bracket[1] - r.bracket[0] < 1e-6);
                let fixed = cond_hmin(&rho, &f, Some(&DensityOperator::from_op_unchecked(r.sigma.clone(), false))).unwrap();
                assert!((fixed.value - r.value).abs() < 1e-6, "{} {}", fixed.value, r.value);
                let h2 = cond_h2(&rho, &f).unwrap();
                let h0 = cond_h0(&rho, &f).unwrap();
                assert!(r.value <= h2 + 1e-9 && h2 <= h0 + 1e-9);
            }
        }
    }

    #[test]
    fn hmin_h0_duality_on_code_states() {
        for seed in 0..10 {
            let ch = random_channel(2, 2, 2, seed).unwrap();
            let om = ch.omega_states(&CodeSubspace::full(2)).unwrap();
            let e = partial_trace(&om.re, &om.re_factors(), &["E"]).unwrap();
            let e = DensityOperator::from_op_unchecked(e, false);
            let hmin = cond_hmin(&om.re, &om.re_factors(), Some(&e)).unwrap().value;
            let h0 = cond_h0(&om.rb, &om.rb_factors()).unwrap();
            assert_abs_diff_eq!(hmin, -h0, epsilon = 1e-8);
        }
    }

    #[test]
    fn coherent_information_examples() {
        let id = identity(2).unwrap();
        assert_abs_diff_eq!(channel_coherent_information(&id, &CodeSubspace::full(2)).unwrap(), 1.0, epsilon = 1e-12);
        for seed in 0..5 {
            let ch = random_channel(2, 3, 2, seed).unwrap();
            let om = ch.omega_states(&CodeSubspace::full(2)).unwrap();
            let a = coherent_information(&om.rb, &om.rb_factors()).unwrap();
            let b = coherent_information(&om.re, &om.re_factors()).unwrap();
            assert_abs_diff_eq!(a, -b, epsilon = 1e-10);
        }
        for p in [0.0, 0.1, 0.25] {
            let ch = depolarizing(2, p).unwrap();
            let got = channel_coherent_information(&ch, &CodeSubspace::full(2)).unwrap();
            // ω^{RB} is a Bell-diagonal state with weights (1−3p/4, p/4, p/4, p/4)
            let w = [1.0 - 0.75 * p, p / 4.0, p / 4.0, p / 4.0];
            let h: f64 = w.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum();
            assert_abs_diff_eq!(got, 1.0 - h, epsilon = 1e-10);
        }
    }

    #[test]
    fn marginal_minimizer() {
        let mut rng = seeded_rng(39, 0);
        let f = FactorSpec::bipartite(2, 3);
        let a = random_density(2, 2, &mut rng);
        let b = random_density(3, 3, &mut rng);
        let prod = a.kron(&b);
        assert_abs_diff_eq!(min_relative_entropy_marginal(&prod, &f, &a).unwrap().to_f64(), 0.0, epsilon = 1e-10);

        let rho = random_density(6, 3, &mut rng);
        let ra = partial_trace(&rho, &f, &["A"]).unwrap();
        let rb = partial_trace(&rho, &f, &["B"]).unwrap();
        let mi = min_relative_entropy_marginal(&rho, &f, &ra).unwrap().to_f64();
        let direct = von_neumann(&ra) + von_neumann(&rb) - von_neumann(&rho);
        assert_abs_diff_eq!(mi, direct, epsilon = 1e-10);
        for _ in 0..300 {
            let xi = random_density(3, 3, &mut rng);
            let other = relative_entropy(&rho, &ra.kron(&xi)).unwrap().to_f64();
            assert!(other >= mi - 1e-10);
        }
    }
}
