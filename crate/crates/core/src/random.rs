//! Seeded random generators for matrices, states, channels, and generators.
//!
//! Everything is driven by an explicit [`ChaCha12Rng`] so tests and
//! benchmarks are reproducible across platforms and thread counts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::channel::{DensityMatrix, KrausChannel};
use crate::linalg::{self, C64, CMat, HermitianMatrix};
use crate::lindblad::CanonicalGenerator;

/// Deterministic RNG from a seed.
pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// d×d matrix of standard complex Gaussian entries.
pub fn complex_matrix(d: usize, rng: &mut impl Rng) -> CMat {
    CMat::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    })
}

/// Random Hermitian matrix (G + G†)/2 of a Gaussian G.
pub fn hermitian(d: usize, rng: &mut impl Rng) -> HermitianMatrix {
    let g = complex_matrix(d, rng);
    HermitianMatrix::new((&g + g.adjoint()) * C64::new(0.5, 0.0)).expect("symmetrized input")
}

/// Random PSD matrix G·G† of a Gaussian G.
pub fn psd(d: usize, rng: &mut impl Rng) -> HermitianMatrix {
    let g = complex_matrix(d, rng);
    HermitianMatrix::new(&g * g.adjoint()).expect("Gram matrix is Hermitian")
}

/// Haar-distributed unitary (polar factor of a Gaussian matrix).
pub fn unitary(d: usize, rng: &mut impl Rng) -> CMat {
    let g = complex_matrix(d, rng);
    linalg::polar(&g).expect("Gaussian matrix is a.s. full rank").unitary
}

/// Random traceless operator: Gaussian G minus tr(G)/d · I.
pub fn traceless(d: usize, rng: &mut impl Rng) -> CMat {
    let g = complex_matrix(d, rng);
    let shift = g.trace() / C64::new(d as f64, 0.0);
    g - CMat::identity(d, d) * shift
}

/// Random full-rank density matrix G·G†/tr(G·G†).
pub fn density(d: usize, rng: &mut impl Rng) -> DensityMatrix {
    let p = psd(d, rng);
    let tr = p.trace_re();
    DensityMatrix::new(p.matrix() * C64::new(1.0 / tr, 0.0)).expect("normalized PSD is a state")
}

/// Random k-operator channel on dimension d with machine-exact completeness:
/// the blocks of a Haar-ish isometry T (T†T = I) sliced into k stacked d×d
/// operators.
pub fn kraus_channel(d: usize, k: usize, rng: &mut impl Rng) -> KrausChannel {
    let g = CMat::from_fn(k * d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    });
    let svd = g
        .try_svd(true, true, f64::EPSILON, 100_000)
        .expect("SVD of a Gaussian matrix converges");
    let t = svd.u.expect("requested U") * svd.v_t.expect("requested V^T");
    let ops: Vec<CMat> = (0..k).map(|j| t.rows(j * d, d).into_owned()).collect();
    KrausChannel::with_tolerance(ops, 1e-12).expect("isometry blocks are complete")
}

/// Random traceless operator with unit Frobenius norm.
pub fn lindblad_op(d: usize, rng: &mut impl Rng) -> CMat {
    let l = traceless(d, rng);
    let n = l.norm();
    l * C64::new(1.0 / n, 0.0)
}

/// Random canonical generator: unit-norm Hermitian H plus k unit-norm
/// traceless operators.
pub fn canonical_generator(d: usize, k: usize, rng: &mut impl Rng) -> CanonicalGenerator {
    let h_raw = hermitian(d, rng);
    let n = h_raw.matrix().norm();
    let h = HermitianMatrix::new(h_raw.matrix() * C64::new(1.0 / n, 0.0)).expect("scaled Hermitian");
    let ops: Vec<CMat> = (0..k).map(|_| lindblad_op(d, rng)).collect();
    CanonicalGenerator::new(h, ops).expect("traceless by construction")
}

/// Random Hermitian measurement operators {B_k = √E_k} of a random POVM
/// {E_k = S^{-1/2} G_k S^{-1/2}} built from PSD blocks G_k with S = Σ G_k.
pub fn hermitian_povm_sqrt(d: usize, k: usize, rng: &mut impl Rng) -> Vec<CMat> {
    let blocks: Vec<HermitianMatrix> = (0..k).map(|_| psd(d, rng)).collect();
    let mut s = CMat::zeros(d, d);
    for b in &blocks {
        s += b.matrix();
    }
    let s = HermitianMatrix::new(s).expect("sum of Hermitian blocks");
    let w = s
        .apply_fn(|l| 1.0 / l.sqrt())
        .expect("sum of a.s. full-rank PSD blocks is positive definite");
    blocks
        .iter()
        .map(|g| {
            let e = HermitianMatrix::new(w.matrix() * g.matrix() * w.matrix())
                .expect("congruence of Hermitian");
            e.apply_fn(linalg::sqrt_clamped).expect("POVM element is PSD").into_matrix()
        })
        .collect()
}
