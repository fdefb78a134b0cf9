//! Shared numerical kernel: symmetric eigendecomposition under a fixed
//! ordering convention, pseudoinverse solves with an explicit range test, PSD
//! square-root factors, and the counter-based random stream every randomized
//! component consumes.
//!
//! Everything here is deterministic: identical inputs produce identical bits
//! on a given platform, independent of thread count. The random stream is
//! keyed by (seed, substream index) so callers can hand disjoint substreams
//! to parallel workers and still reproduce results under any schedule.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff for pseudoinverse solves: eigenvalues at or
/// below `RANK_TOL * omega_max` count as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Relative residual tolerance for the range test in [`SpectralData::pinv_solve`]:
/// v ∈ range(S) is accepted when ‖Sx − v‖ ≤ RANGE_TOL · max(1, ‖v‖).
pub const RANGE_TOL: f64 = 1e-8;

/// Eigendecomposition S = Q·diag(ω)·Qᵀ of a symmetric matrix, eigenvalues
/// sorted descending. Keeps the source matrix for honest residual tests.
#[derive(Debug, Clone)]
pub struct SpectralData {
    matrix: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    basis: DMatrix<f64>,
    /// Coordinates of the all-ones vector in the eigenbasis, Qᵀ𝟙.
    ones_coords: DVector<f64>,
}

impl SpectralData {
    /// Decomposes a symmetric matrix. The caller is responsible for symmetry;
    /// pass `(S + Sᵀ)/2` if in doubt. Errors on non-finite entries.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let n = matrix.nrows();
        if n != matrix.ncols() {
            return Err(Error::NotSquare { rows: n, cols: matrix.ncols() });
        }
        let eig = matrix.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .expect("eigenvalues are finite")
        });
        let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let basis = DMatrix::from_columns(
            &order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>(),
        );
        let ones_coords = basis.tr_mul(&DVector::from_element(n, 1.0));
        Ok(Self { matrix, eigenvalues, basis, ones_coords })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvector columns, aligned with [`Self::eigenvalues`].
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn omega_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn omega_min(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    /// Qᵀ𝟙, cached because the scalar dual consumes it on every evaluation.
    pub fn ones_coords(&self) -> &DVector<f64> {
        &self.ones_coords
    }

    /// Coordinates Qᵀv of a vector in the eigenbasis.
    pub fn coords(&self, v: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(v)
    }

    /// Minimum-norm solution x of S x = v via the eigenbasis, treating
    /// eigenvalues ≤ `rank_tol · ω_max` as zero. The flag reports whether v
    /// lies in range(S): ‖S x − v‖ ≤ RANGE_TOL · max(1, ‖v‖), measured with
    /// the original matrix so reconstruction error counts against it.
    ///
    /// Negative eigenvalues are never inverted; their components land in the
    /// residual and fail the range test, which is what certification needs.
    pub fn pinv_solve(&self, v: &DVector<f64>, rank_tol: f64) -> (DVector<f64>, bool) {
        let cutoff = rank_tol * self.omega_max().abs();
        let coords = self.coords(v);
        let scaled = DVector::from_iterator(
            self.dim(),
            coords.iter().zip(self.eigenvalues.iter()).map(
                |(&c, &w)| {
                    if w > cutoff {
                        c / w
                    } else {
                        0.0
                    }
                },
            ),
        );
        let x = &self.basis * scaled;
        let residual = (&self.matrix * &x - v).norm();
        let in_range = residual <= RANGE_TOL * v.norm().max(1.0);
        (x, in_range)
    }

    /// Q·diag(ω)·Qᵀ, for reconstruction tests.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = self.basis.clone() * DMatrix::from_diagonal(&self.eigenvalues);
        scaled * self.basis.transpose()
    }
}

/// Symmetric PSD square root L = Q·diag(√ω̂)·Qᵀ with ω̂ = max(ω, 0) after
/// clamping eigenvalues below `clamp_tol` to zero, so L·Lᵀ reproduces the
/// input up to the clamp. Errors when the most negative eigenvalue is below
/// `−neg_tol`: the input is then materially indefinite, not just noisy.
pub fn psd_sqrt_factor(matrix: DMatrix<f64>, clamp_tol: f64, neg_tol: f64) -> Result<DMatrix<f64>> {
    let spectral = SpectralData::new(matrix)?;
    let min_eig = spectral.omega_min();
    if min_eig < -neg_tol {
        return Err(Error::NotPsd { min_eig, tol: neg_tol });
    }
    let roots = DVector::from_iterator(
        spectral.dim(),
        spectral.eigenvalues().iter().map(|&w| if w > clamp_tol { w.sqrt() } else { 0.0 }),
    );
    let scaled = spectral.basis().clone() * DMatrix::from_diagonal(&roots);
    Ok(scaled * spectral.basis().transpose())
}

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const SEED_SALT: u64 = 0xa076_1d64_78bd_642f;

/// SplitMix64 finalizer: a bijective avalanche mix on 64 bits.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based pseudorandom stream keyed by (seed, substream index).
///
/// Output i of substream (s, j) is `mix(key(s, j) + (i+1)·GAMMA)` where `key`
/// itself passes through two finalizer rounds, so distinct (seed, index)
/// pairs give decorrelated sequences and a stream can be handed to any thread
/// without coordination. This construction (Weyl sequence + avalanche
/// finalizer) is frozen: changing it invalidates every derived table.
#[derive(Debug, Clone)]
pub struct RandomStream {
    key: u64,
    counter: u64,
    cached_gaussian: Option<f64>,
}

impl RandomStream {
    pub fn new(seed: u64, index: u64) -> Self {
        let key = mix(mix(seed ^ SEED_SALT).wrapping_add(index.wrapping_mul(GAMMA)));
        Self { key, counter: 0, cached_gaussian: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via the Marsaglia polar method. Pairs are generated
    /// two at a time; the second is cached. Rejection keeps s = u²+v² in
    /// (0, 1), so the log/sqrt transform is always well defined.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(g) = self.cached_gaussian.take() {
            return g;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let scale = (-2.0 * s.ln() / s).sqrt();
                self.cached_gaussian = Some(v * scale);
                return u * scale;
            }
        }
    }

    pub fn gaussian_vector(&mut self, len: usize) -> DVector<f64> {
        DVector::from_fn(len, |_, _| self.gaussian())
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        // Column-major fill order; part of the frozen generation contract.
        DMatrix::from_fn(rows, cols, |_, _| self.gaussian())
    }

    pub fn uniform_vector(&mut self, len: usize) -> DVector<f64> {
        DVector::from_fn(len, |_, _| self.uniform())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sym(entries: &[f64], n: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(n, n, entries)
    }

    #[test]
    fn eig_identity_is_unit_spectrum() {
        let s = SpectralData::new(DMatrix::identity(2, 2)).unwrap();
        assert_abs_diff_eq!(s.eigenvalues()[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.eigenvalues()[1], 1.0, epsilon = 1e-14);
        let qtq = s.basis().tr_mul(s.basis());
        assert_abs_diff_eq!(qtq, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn eig_two_by_two_hand_values() {
        let s = SpectralData::new(sym(&[2.0, 1.0, 1.0, 2.0], 2)).unwrap();
        assert_abs_diff_eq!(s.eigenvalues()[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.eigenvalues()[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eig_singular_diagonal() {
        let s = SpectralData::new(sym(&[1.0, 0.0, 0.0, 0.0], 2)).unwrap();
        assert_abs_diff_eq!(s.eigenvalues()[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.eigenvalues()[1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn eig_reconstructs_random_symmetric() {
        let mut stream = RandomStream::new(7, 0);
        for trial in 0..5 {
            let n = 3 + trial;
            let a = stream.gaussian_matrix(n, n);
            let m = (&a + a.transpose()) * 0.5;
            let s = SpectralData::new(m.clone()).unwrap();
            let err = (s.reconstruct() - &m).norm();
            assert!(err <= 1e-10 * m.norm().max(1.0), "reconstruction error {err}");
            let qtq = s.basis().tr_mul(s.basis());
            assert_abs_diff_eq!(qtq, DMatrix::identity(n, n), epsilon = 1e-10);
            for i in 1..n {
                assert!(s.eigenvalues()[i - 1] >= s.eigenvalues()[i]);
            }
        }
    }

    #[test]
    fn sqrt_factor_zero_and_identity() {
        let zero = psd_sqrt_factor(DMatrix::zeros(3, 3), 0.0, 1e-12).unwrap();
        assert_abs_diff_eq!(zero.norm(), 0.0, epsilon = 1e-15);
        let l = psd_sqrt_factor(DMatrix::identity(3, 3), 0.0, 1e-12).unwrap();
        assert_abs_diff_eq!(&l * l.transpose(), DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn sqrt_factor_reproduces_singular_input() {
        let m = sym(&[1.0, 1.0, 1.0, 1.0], 2);
        let l = psd_sqrt_factor(m.clone(), 0.0, 1e-12).unwrap();
        assert!((&l * l.transpose() - &m).norm() <= 1e-9);
    }

    #[test]
    fn sqrt_factor_rejects_indefinite() {
        let m = sym(&[1.0, 0.0, 0.0, -0.5], 2);
        assert!(matches!(psd_sqrt_factor(m, 0.0, 1e-9), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn pinv_identity_returns_input() {
        let s = SpectralData::new(DMatrix::identity(3, 3)).unwrap();
        let v = DVector::from_row_slice(&[0.3, -1.0, 2.5]);
        let (x, in_range) = s.pinv_solve(&v, RANK_TOL);
        assert!(in_range);
        assert_abs_diff_eq!(x, v, epsilon = 1e-12);
    }

    #[test]
    fn pinv_singular_in_range() {
        let s = SpectralData::new(sym(&[1.0, 0.0, 0.0, 0.0], 2)).unwrap();
        let (x, in_range) = s.pinv_solve(&DVector::from_row_slice(&[1.0, 0.0]), RANK_TOL);
        assert!(in_range);
        assert_abs_diff_eq!(x, DVector::from_row_slice(&[1.0, 0.0]), epsilon = 1e-12);
    }

    #[test]
    fn pinv_singular_out_of_range() {
        let s = SpectralData::new(sym(&[1.0, 0.0, 0.0, 0.0], 2)).unwrap();
        let (x, in_range) = s.pinv_solve(&DVector::from_row_slice(&[0.0, 1.0]), RANK_TOL);
        assert!(!in_range);
        assert_abs_diff_eq!(x, DVector::zeros(2), epsilon = 1e-12);
    }

    #[test]
    fn stream_is_deterministic_per_key() {
        let a: Vec<u64> = RandomStream::new(123, 5).by_u64(8);
        let b: Vec<u64> = RandomStream::new(123, 5).by_u64(8);
        let c: Vec<u64> = RandomStream::new(123, 6).by_u64(8);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    impl RandomStream {
        fn by_u64(mut self, k: usize) -> Vec<u64> {
            (0..k).map(|_| self.next_u64()).collect()
        }
    }

    #[test]
    fn uniform_range_and_mean() {
        let mut stream = RandomStream::new(9, 1);
        let mut sum = 0.0;
        for _ in 0..100_000 {
            let u = stream.uniform();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        assert!((sum / 1e5 - 0.5).abs() < 0.01);
    }

    #[test]
    fn gaussian_moments_and_interval_mass() {
        let mut stream = RandomStream::new(2024, 3);
        let samples = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut inside = 0usize;
        for _ in 0..samples {
            let z = stream.gaussian();
            sum += z;
            sumsq += z * z;
            if z.abs() < 0.5 {
                inside += 1;
            }
        }
        let mean = sum / samples as f64;
        let var = sumsq / samples as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "variance {var}");
        // Φ(0.5) − Φ(−0.5) ≈ 0.3829
        let mass = inside as f64 / samples as f64;
        assert!((mass - 0.383).abs() < 0.02, "interval mass {mass}");
    }

    #[test]
    fn distinct_substreams_decorrelated() {
        let mut a = RandomStream::new(77, 0);
        let mut b = RandomStream::new(77, 1);
        let samples = 100_000;
        let mut dot = 0.0;
        for _ in 0..samples {
            dot += a.gaussian() * b.gaussian();
        }
        assert!((dot / samples as f64).abs() < 0.02);
    }
}
