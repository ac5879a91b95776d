//! Seeded random matrices and states. Every generator takes an explicit RNG.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::qmatrix::{CMatrix, CVector, DensityOperator, HermitianOperator, PureState};

/// One ChaCha8 stream per `(seed, stream)` pair. Trial `t` of a Monte-Carlo
/// run always draws from stream `t`, so results do not depend on how trials
/// are scheduled across threads.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `rows × cols` matrix of i.i.d. standard complex Gaussians.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    // column-major fill keeps the draw order independent of nalgebra internals
    let mut m = CMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = complex_gaussian(rng);
        }
    }
    m
}

/// Haar-distributed isometry `ℂ^cols → ℂ^rows` (`rows ≥ cols`): QR of a
/// Ginibre matrix with the phases of `diag(R)` pushed into `Q`.
pub fn haar_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    assert!(rows >= cols, "isometry needs rows >= cols");
    let g = ginibre(rows, cols, rng);
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut out = q;
    for j in 0..cols {
        let d = r[(j, j)];
        let n = d.norm();
        let phase = if n > 0.0 { d / n } else { Complex64::new(1.0, 0.0) };
        for i in 0..rows {
            out[(i, j)] *= phase;
        }
    }
    out
}

pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    haar_isometry(d, d, rng)
}

pub fn random_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CVector {
    DVector::from_fn(d, |_, _| complex_gaussian(rng))
}

/// Unitarily invariant random pure state.
pub fn random_pure<R: Rng + ?Sized>(d: usize, rng: &mut R) -> PureState {
    loop {
        if let Ok(p) = PureState::normalize(random_vector(d, rng)) {
            return p;
        }
    }
}

/// Induced-measure random density operator `G G† / Tr`, `G` of size `d × k`.
/// `k = d` gives the Hilbert–Schmidt measure, `k < d` a rank-`k` state.
pub fn random_density<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> DensityOperator {
    let g = ginibre(d, k.max(1), rng);
    let op = HermitianOperator::from_matrix_unchecked(&g * g.adjoint());
    DensityOperator::normalized(op).expect("Ginibre product has positive trace")
}

/// GUE-like random Hermitian matrix.
pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> HermitianOperator {
    HermitianOperator::from_matrix_unchecked(ginibre(d, d, rng))
}

/// Random `0 ≤ P ≤ 𝟙`: a Haar rotation of uniform `[0,1]` eigenvalues.
pub fn random_contraction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> HermitianOperator {
    let u = haar_unitary(d, rng);
    let diag: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    HermitianOperator::diagonal(&diag).conjugate_by(&u)
}

/// Random positive definite operator with spectrum bounded away from zero.
pub fn random_positive<R: Rng + ?Sized>(d: usize, rng: &mut R) -> HermitianOperator {
    let u = haar_unitary(d, rng);
    let diag: Vec<f64> = (0..d).map(|_| 0.05 + rng.random::<f64>()).collect();
    HermitianOperator::diagonal(&diag).conjugate_by(&u)
}

/// Sum by recursive halving. The result depends only on the order of `xs`,
/// which keeps parallel Monte-Carlo reductions reproducible.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        n if n <= 8 => xs.iter().sum(),
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

/// Sample mean with its standard error `s/√n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_error: f64::NAN, samples: 0 };
        }
        let mean = pairwise_sum(xs) / n as f64;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        Self { mean, std_error: (var / n as f64).sqrt(), samples: n }
    }
}
