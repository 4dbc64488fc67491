//! Time structure of the all-at-once system: the uniform time grid, the
//! eigenvalues of the circulant time-difference matrix, the block Fourier
//! transform acting along the time index, and the permutations between the
//! field-major layout and the per-frequency block layout.
//!
//! Layout of a block vector with `nb = n_t - 1` interior time points,
//! `n_v` velocity and `n_p` pressure unknowns per time point
//! (fields in order: state velocity, state pressure, adjoint velocity,
//! adjoint pressure; time-major inside each field):
//!
//! ```text
//! [ v_0 .. v_{nb-1} | p_0 .. p_{nb-1} | l_0 .. l_{nb-1} | m_0 .. m_{nb-1} ]
//! ```
//!
//! The per-frequency order groups one frequency j as `(v_j, l_j, p_j, m_j)`
//! contiguously, which is the row order of the frequency-domain blocks.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform grid on `[0, T]` with `n_t` steps of length `tau = T / n_t`.
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid {
    n_t: usize,
    t_final: f64,
}

impl TimeGrid {
    /// At least three time steps are needed for the interior difference
    /// structure to be nondegenerate.
    pub fn new(n_t: usize, t_final: f64) -> Result<Self> {
        if n_t < 3 {
            return Err(Error::config(format!(
                "need at least 3 time steps, got {n_t}"
            )));
        }
        if !(t_final > 0.0) {
            return Err(Error::config(format!(
                "final time must be positive, got {t_final}"
            )));
        }
        Ok(TimeGrid { n_t, t_final })
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Time step `T / n_t`.
    pub fn tau(&self) -> f64 {
        self.t_final / self.n_t as f64
    }

    /// Number of interior time points carrying unknowns.
    pub fn n_blocks(&self) -> usize {
        self.n_t - 1
    }

    /// The k-th unknown time point `t_k = (k+1) tau`, `k = 0..n_blocks`.
    pub fn time_point(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.tau()
    }
}

/// Eigenvalues of the circulant time-difference matrix (first column
/// `(1, -1, 0, ..., 0)`), one per time frequency.
#[derive(Debug, Clone)]
pub struct CirculantSpectrum {
    d: Vec<Complex64>,
}

impl CirculantSpectrum {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.d
    }

    pub fn d(&self, j: usize) -> Complex64 {
        self.d[j]
    }

    /// Real part of the j-th eigenvalue.
    pub fn d_r(&self, j: usize) -> f64 {
        self.d[j].re
    }

    /// Imaginary part of the j-th eigenvalue.
    pub fn d_c(&self, j: usize) -> f64 {
        self.d[j].im
    }
}

/// Dimensions of a block vector: time blocks times per-point unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    /// Interior time points `n_t - 1`.
    pub nb: usize,
    /// Velocity unknowns per time point.
    pub nv: usize,
    /// Pressure unknowns per time point.
    pub np: usize,
}

impl BlockLayout {
    pub fn new(nb: usize, nv: usize, np: usize) -> Self {
        BlockLayout { nb, nv, np }
    }

    /// Total length `2 nb (nv + np)`.
    pub fn len(&self) -> usize {
        2 * self.nb * (self.nv + self.np)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Length of one per-frequency block, `2 (nv + np)`.
    pub fn block_size(&self) -> usize {
        2 * (self.nv + self.np)
    }

    pub fn v_offset(&self, j: usize) -> usize {
        j * self.nv
    }

    pub fn p_offset(&self, j: usize) -> usize {
        self.nb * self.nv + j * self.np
    }

    pub fn lam_offset(&self, j: usize) -> usize {
        self.nb * (self.nv + self.np) + j * self.nv
    }

    pub fn mu_offset(&self, j: usize) -> usize {
        self.nb * (2 * self.nv + self.np) + j * self.np
    }
}

/// A field-major vector over the space-time unknowns, carrying its layout.
#[derive(Debug, Clone)]
pub struct BlockVector<S> {
    pub layout: BlockLayout,
    pub data: Vec<S>,
}

impl<S: Scalar> BlockVector<S> {
    pub fn zeros(layout: BlockLayout) -> Self {
        BlockVector {
            layout,
            data: vec![S::zero(); layout.len()],
        }
    }

    pub fn from_data(layout: BlockLayout, data: Vec<S>) -> Result<Self> {
        if data.len() != layout.len() {
            return Err(Error::usage(format!(
                "data length {} does not match layout length {}",
                data.len(),
                layout.len()
            )));
        }
        Ok(BlockVector { layout, data })
    }

    pub fn v(&self, j: usize) -> &[S] {
        let o = self.layout.v_offset(j);
        &self.data[o..o + self.layout.nv]
    }

    pub fn p(&self, j: usize) -> &[S] {
        let o = self.layout.p_offset(j);
        &self.data[o..o + self.layout.np]
    }

    pub fn lam(&self, j: usize) -> &[S] {
        let o = self.layout.lam_offset(j);
        &self.data[o..o + self.layout.nv]
    }

    pub fn mu(&self, j: usize) -> &[S] {
        let o = self.layout.mu_offset(j);
        &self.data[o..o + self.layout.np]
    }

    pub fn v_mut(&mut self, j: usize) -> &mut [S] {
        let o = self.layout.v_offset(j);
        let nv = self.layout.nv;
        &mut self.data[o..o + nv]
    }

    pub fn p_mut(&mut self, j: usize) -> &mut [S] {
        let o = self.layout.p_offset(j);
        let np = self.layout.np;
        &mut self.data[o..o + np]
    }

    pub fn lam_mut(&mut self, j: usize) -> &mut [S] {
        let o = self.layout.lam_offset(j);
        let nv = self.layout.nv;
        &mut self.data[o..o + nv]
    }

    pub fn mu_mut(&mut self, j: usize) -> &mut [S] {
        let o = self.layout.mu_offset(j);
        let np = self.layout.np;
        &mut self.data[o..o + np]
    }
}

impl BlockVector<f64> {
    /// Promote to complex entries.
    pub fn to_complex(&self) -> BlockVector<Complex64> {
        BlockVector {
            layout: self.layout,
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

impl BlockVector<Complex64> {
    /// Largest absolute imaginary part, for checking that a vector that
    /// should be real actually is.
    pub fn max_imag(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    /// Drop imaginary parts.
    pub fn to_real(&self) -> BlockVector<f64> {
        BlockVector {
            layout: self.layout,
            data: self.data.iter().map(|z| z.re).collect(),
        }
    }
}

/// Unitary DFT along the time index, applied independently to every
/// spatial degree of freedom of every field.
pub struct TimeFourier {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl TimeFourier {
    pub fn new(grid: &TimeGrid) -> Self {
        let n = grid.n_blocks();
        let mut planner = FftPlanner::new();
        TimeFourier {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Eigenvalues of the circulant difference matrix under the same DFT
    /// convention as the block transform: the raw forward DFT of the first
    /// column `(1, -1, 0, ..., 0)`. The zero-frequency entry equals the
    /// vanishing row sum analytically and is snapped to exactly zero.
    pub fn spectrum(&self) -> CirculantSpectrum {
        let mut col = vec![Complex64::new(0.0, 0.0); self.n];
        col[0] = Complex64::new(1.0, 0.0);
        col[1] = Complex64::new(-1.0, 0.0);
        self.forward.process(&mut col);
        debug_assert!(col[0].norm() <= 1e-13);
        col[0] = Complex64::new(0.0, 0.0);
        // The transform of a real sequence is conjugate-symmetric; snap the
        // pairing exactly so mirrored frequency blocks see bitwise-equal
        // derived constants. Self-paired entries are analytically real.
        for j in 1..=(self.n / 2) {
            let mate = self.n - j;
            if mate == j {
                col[j].im = 0.0;
            } else {
                col[mate] = col[j].conj();
            }
        }
        CirculantSpectrum { d: col }
    }

    fn transform_field(
        &self,
        data: &mut [Complex64],
        offset_of: impl Fn(usize) -> usize,
        count: usize,
        fft: &Arc<dyn Fft<f64>>,
        scale: f64,
    ) {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        for i in 0..count {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = data[offset_of(j) + i];
            }
            fft.process(&mut buf);
            for (j, b) in buf.iter().enumerate() {
                data[offset_of(j) + i] = *b * scale;
            }
        }
    }

    fn apply(&self, x: &mut BlockVector<Complex64>, fft: &Arc<dyn Fft<f64>>) {
        assert_eq!(x.layout.nb, self.n, "layout does not match the time grid");
        let scale = 1.0 / (self.n as f64).sqrt();
        let layout = x.layout;
        self.transform_field(&mut x.data, |j| layout.v_offset(j), layout.nv, fft, scale);
        self.transform_field(&mut x.data, |j| layout.p_offset(j), layout.np, fft, scale);
        self.transform_field(&mut x.data, |j| layout.lam_offset(j), layout.nv, fft, scale);
        self.transform_field(&mut x.data, |j| layout.mu_offset(j), layout.np, fft, scale);
    }

    /// Forward transform, in place.
    pub fn forward(&self, x: &mut BlockVector<Complex64>) {
        self.apply(x, &self.forward.clone());
    }

    /// Inverse transform, in place.
    pub fn inverse(&self, x: &mut BlockVector<Complex64>) {
        self.apply(x, &self.inverse.clone());
    }
}

/// Gather map for the per-frequency order: entry `k` names the field-major
/// index whose value lands at permuted position `k`.
pub fn block_diag_index_map(layout: BlockLayout) -> Vec<usize> {
    let mut map = Vec::with_capacity(layout.len());
    for j in 0..layout.nb {
        for i in 0..layout.nv {
            map.push(layout.v_offset(j) + i);
        }
        for i in 0..layout.nv {
            map.push(layout.lam_offset(j) + i);
        }
        for i in 0..layout.np {
            map.push(layout.p_offset(j) + i);
        }
        for i in 0..layout.np {
            map.push(layout.mu_offset(j) + i);
        }
    }
    map
}

/// Reorder field-major data into contiguous per-frequency blocks
/// `(v_j, l_j, p_j, m_j)`.
pub fn to_block_diagonal_order<S: Scalar>(x: &[S], layout: BlockLayout) -> Vec<S> {
    let map = block_diag_index_map(layout);
    map.iter().map(|&src| x[src]).collect()
}

/// Exact inverse of [`to_block_diagonal_order`].
pub fn from_block_diagonal_order<S: Scalar>(y: &[S], layout: BlockLayout) -> Vec<S> {
    let map = block_diag_index_map(layout);
    let mut out = vec![S::zero(); y.len()];
    for (k, &src) in map.iter().enumerate() {
        out[src] = y[k];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn random_block_vector(layout: BlockLayout, seed: u64) -> BlockVector<Complex64> {
        let mut rng = StdRng::seed_from_u64(seed);
        let data = (0..layout.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        BlockVector { layout, data }
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(2, 1.0).is_err());
        assert!(TimeGrid::new(5, 0.0).is_err());
        assert!(TimeGrid::new(5, -1.0).is_err());
        let g = TimeGrid::new(10, 10.0).unwrap();
        assert_eq!(g.tau(), 1.0);
        assert_eq!(g.n_blocks(), 9);
        assert_eq!(g.time_point(0), 1.0);
        assert_eq!(g.time_point(8), 9.0);
    }

    #[test]
    fn two_point_spectrum_is_zero_and_two() {
        let grid = TimeGrid::new(3, 1.0).unwrap();
        let d = TimeFourier::new(&grid).spectrum();
        assert_eq!(d.len(), 2);
        assert_eq!(d.d(0), Complex64::new(0.0, 0.0));
        assert!((d.d(1) - Complex64::new(2.0, 0.0)).norm() <= 1e-14);
    }

    #[test]
    fn four_point_spectrum_matches_hand_dft() {
        let grid = TimeGrid::new(5, 1.0).unwrap();
        let d = TimeFourier::new(&grid).spectrum();
        let expect = [
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 1.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(1.0, -1.0),
        ];
        // The set must match; the order depends only on the conjugation
        // convention, which pairs j and n - j.
        for e in expect {
            assert!(
                d.values().iter().any(|z| (z - e).norm() <= 1e-13),
                "missing {e}"
            );
        }
        assert!((d.d(1) - Complex64::new(1.0, 1.0)).norm() <= 1e-13);
    }

    #[test]
    fn spectrum_matches_closed_form_for_awkward_sizes() {
        for n_t in [7usize, 15, 31, 63, 14] {
            let grid = TimeGrid::new(n_t, 10.0).unwrap();
            let d = TimeFourier::new(&grid).spectrum();
            let n = grid.n_blocks();
            let mut sum = Complex64::new(0.0, 0.0);
            for j in 0..n {
                let angle = -2.0 * PI * j as f64 / n as f64;
                let expect = Complex64::new(1.0 - angle.cos(), -angle.sin());
                assert!((d.d(j) - expect).norm() <= 1e-12, "n={n} j={j}");
                sum += d.d(j);
                // Conjugation closure: d_j is bitwise conj(d_{n-j}), and the
                // self-paired entries are exactly real.
                let mate = d.d((n - j) % n);
                assert_eq!(d.d(j), mate.conj());
            }
            assert!((sum - Complex64::new(n as f64, 0.0)).norm() <= 1e-11);
            assert_eq!(d.d(0), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn transform_round_trip_is_identity() {
        let grid = TimeGrid::new(8, 2.0).unwrap();
        let tf = TimeFourier::new(&grid);
        let layout = BlockLayout::new(grid.n_blocks(), 3, 2);
        let x = random_block_vector(layout, 5);
        let mut y = x.clone();
        tf.forward(&mut y);
        tf.inverse(&mut y);
        for (a, b) in x.data.iter().zip(&y.data) {
            assert!((a - b).norm() <= 1e-13);
        }
    }

    #[test]
    fn transform_is_an_isometry() {
        let grid = TimeGrid::new(9, 2.0).unwrap();
        let tf = TimeFourier::new(&grid);
        let layout = BlockLayout::new(grid.n_blocks(), 2, 1);
        let x = random_block_vector(layout, 6);
        let mut y = x.clone();
        tf.forward(&mut y);
        let nx = crate::scalar::norm2(&x.data);
        let ny = crate::scalar::norm2(&y.data);
        assert!((nx - ny).abs() <= 1e-13 * nx);
    }

    #[test]
    fn constant_in_time_concentrates_on_zero_frequency() {
        let grid = TimeGrid::new(6, 1.0).unwrap();
        let tf = TimeFourier::new(&grid);
        let layout = BlockLayout::new(grid.n_blocks(), 2, 1);
        let mut x = BlockVector::zeros(layout);
        for j in 0..layout.nb {
            x.v_mut(j).copy_from_slice(&[
                Complex64::new(1.5, 0.0),
                Complex64::new(-0.5, 0.0),
            ]);
            x.p_mut(j).copy_from_slice(&[Complex64::new(2.0, 0.0)]);
        }
        tf.forward(&mut x);
        let root = (layout.nb as f64).sqrt();
        assert!((x.v(0)[0] - Complex64::new(1.5 * root, 0.0)).norm() <= 1e-13);
        for j in 1..layout.nb {
            for z in x.v(j).iter().chain(x.p(j)) {
                assert!(z.norm() <= 1e-13);
            }
        }
    }

    #[test]
    fn four_point_transform_matches_dense_dft_oracle() {
        let grid = TimeGrid::new(5, 1.0).unwrap();
        let tf = TimeFourier::new(&grid);
        let n = grid.n_blocks();
        let layout = BlockLayout::new(n, 2, 1);
        let x = random_block_vector(layout, 9);
        let mut y = x.clone();
        tf.forward(&mut y);
        // Dense unitary DFT applied per degree of freedom.
        let scale = 1.0 / (n as f64).sqrt();
        for i in 0..layout.nv {
            for j in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    let angle = -2.0 * PI * (j * k) as f64 / n as f64;
                    acc += x.v(k)[i] * Complex64::new(angle.cos(), angle.sin());
                }
                assert!((y.v(j)[i] - acc * scale).norm() <= 1e-13);
            }
        }
    }

    #[test]
    fn layout_offsets_partition_the_vector() {
        let layout = BlockLayout::new(3, 4, 2);
        assert_eq!(layout.len(), 36);
        assert_eq!(layout.block_size(), 12);
        let mut seen = vec![false; layout.len()];
        for j in 0..layout.nb {
            for i in 0..layout.nv {
                seen[layout.v_offset(j) + i] = true;
                seen[layout.lam_offset(j) + i] = true;
            }
            for i in 0..layout.np {
                seen[layout.p_offset(j) + i] = true;
                seen[layout.mu_offset(j) + i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn permutation_matches_hand_enumerated_table() {
        // nb = 2, nv = np = 1: field-major [v0 v1 p0 p1 l0 l1 m0 m1],
        // per-frequency [(v0 l0 p0 m0), (v1 l1 p1 m1)].
        let layout = BlockLayout::new(2, 1, 1);
        let map = block_diag_index_map(layout);
        assert_eq!(map, vec![0, 4, 2, 6, 1, 5, 3, 7]);
        let x: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let y = to_block_diagonal_order(&x, layout);
        assert_eq!(y, vec![0.0, 4.0, 2.0, 6.0, 1.0, 5.0, 3.0, 7.0]);
        let back = from_block_diagonal_order(&y, layout);
        assert_eq!(back, x);
    }

    #[test]
    fn permutation_is_a_bijection() {
        let layout = BlockLayout::new(5, 7, 3);
        let mut map = block_diag_index_map(layout);
        map.sort_unstable();
        let expect: Vec<usize> = (0..layout.len()).collect();
        assert_eq!(map, expect);
    }

    #[test]
    fn permutation_round_trip_on_random_data() {
        let layout = BlockLayout::new(4, 3, 2);
        let x = random_block_vector(layout, 11);
        let y = to_block_diagonal_order(&x.data, layout);
        let back = from_block_diagonal_order(&y, layout);
        for (a, b) in x.data.iter().zip(&back) {
            assert_eq!(a, b);
        }
    }
}
