//! Fourier differentiation on the periodic grid.
//!
//! Axes are ordered [x_1, y_1, ..., x_n, y_n] with period 1 and row-major
//! point indexing. Holomorphic derivatives follow the Wirtzinger convention
//! d_i = (d_x - i d_y)/2 on the i-th complex axis.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform periodic grid on a complex n-torus, m points per real axis.
#[derive(Clone)]
pub struct SpectralGrid {
    n: usize,
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("n", &self.n).field("m", &self.m).finish()
    }
}

impl PartialEq for SpectralGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.m == other.m
    }
}

/// A derivative direction: holomorphic d_i or conjugate d_ibar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CAxis {
    Holo(usize),
    AntiHolo(usize),
}

impl SpectralGrid {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if !(2..=3).contains(&n) {
            return Err(Error::InvalidSpec(format!("complex dimension must be 2 or 3, got {n}")));
        }
        if !m.is_power_of_two() || m < 4 {
            return Err(Error::InvalidSpec(format!("points per axis must be a power of two >= 4, got {m}")));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        Ok(Self { n, m, fwd, inv })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn num_axes(&self) -> usize {
        2 * self.n
    }

    pub fn num_points(&self) -> usize {
        self.m.pow(2 * self.n as u32)
    }

    /// Real coordinates of a grid point, axes [x_1, y_1, ..., x_n, y_n].
    pub fn coords(&self, mut pt: usize, out: &mut [f64]) {
        let axes = self.num_axes();
        for a in (0..axes).rev() {
            out[a] = (pt % self.m) as f64 / self.m as f64;
            pt /= self.m;
        }
    }

    /// Signed integer frequency for an index along one axis. The Nyquist
    /// mode carries no usable phase for odd derivatives and is dropped.
    fn freq(&self, idx: usize) -> f64 {
        let half = self.m / 2;
        if idx < half {
            idx as f64
        } else if idx == half {
            0.0
        } else {
            idx as f64 - self.m as f64
        }
    }

    fn stride(&self, axis: usize) -> usize {
        self.m.pow((self.num_axes() - 1 - axis) as u32)
    }

    /// In-place FFT along every axis. `inverse` applies the 1/m^axes scale.
    pub fn fft_all(&self, data: &mut [Complex64], inverse: bool) {
        debug_assert_eq!(data.len(), self.num_points());
        let mut scratch = vec![Complex64::new(0.0, 0.0); data.len()];
        for axis in 0..self.num_axes() {
            self.fft_axis(data, &mut scratch, axis, inverse);
        }
    }

    /// FFT along a single axis via gather -> batched transform -> scatter.
    fn fft_axis(&self, data: &mut [Complex64], scratch: &mut [Complex64], axis: usize, inverse: bool) {
        let m = self.m;
        let npts = self.num_points();
        let s = self.stride(axis);
        let lanes = npts / m;
        // lane l = (pre, post): element j at pre * (m s) + j s + post
        for l in 0..lanes {
            let pre = l / s;
            let post = l % s;
            let base = pre * (m * s) + post;
            for j in 0..m {
                scratch[l * m + j] = data[base + j * s];
            }
        }
        let plan = if inverse { &self.inv } else { &self.fwd };
        scratch.par_chunks_mut(m).for_each(|lane| {
            plan.process(lane);
        });
        let scale = if inverse { 1.0 / m as f64 } else { 1.0 };
        for l in 0..lanes {
            let pre = l / s;
            let post = l % s;
            let base = pre * (m * s) + post;
            for j in 0..m {
                data[base + j * s] = scratch[l * m + j] * scale;
            }
        }
    }

    /// Multiply a spectrum in place by the symbol of a complex derivative.
    /// For mode k on complex axis i (real axes 2i, 2i+1):
    ///   d_i    -> pi (k_y + i k_x)
    ///   d_ibar -> pi (-k_y + i k_x)
    pub fn apply_deriv_symbol(&self, hat: &mut [Complex64], axis: CAxis) {
        let (ci, anti) = match axis {
            CAxis::Holo(i) => (i, false),
            CAxis::AntiHolo(i) => (i, true),
        };
        debug_assert!(ci < self.n);
        let m = self.m;
        let pi = std::f64::consts::PI;
        // per-(kx, ky) symbol table for the complex axis
        let mut table = vec![Complex64::new(0.0, 0.0); m * m];
        for ix in 0..m {
            for iy in 0..m {
                let kx = self.freq(ix);
                let ky = self.freq(iy);
                table[ix * m + iy] = if anti {
                    Complex64::new(-pi * ky, pi * kx)
                } else {
                    Complex64::new(pi * ky, pi * kx)
                };
            }
        }
        // axes 2ci (x) and 2ci+1 (y) have strides sx = m * sy
        let sy = self.stride(2 * ci + 1);
        let sx = m * sy;
        let block = m * sx; // one full (x, y) period of the pair
        hat.par_chunks_mut(block).for_each(|chunk| {
            for ix in 0..m {
                for iy in 0..m {
                    let s = table[ix * m + iy];
                    let base = ix * sx + iy * sy;
                    for v in chunk[base..base + sy].iter_mut() {
                        *v *= s;
                    }
                }
            }
        });
    }

    /// Pointwise multiply the spectrum by symbol(modes).
    pub fn apply_symbol<F>(&self, hat: &mut [Complex64], symbol: F)
    where
        F: Fn(&Self, &[usize]) -> Complex64 + Sync,
    {
        let axes = self.num_axes();
        let m = self.m;
        hat.par_iter_mut().enumerate().for_each(|(pt, v)| {
            let mut modes = [0usize; 8];
            let mut rest = pt;
            for a in (0..axes).rev() {
                modes[a] = rest % m;
                rest /= m;
            }
            *v *= symbol(self, &modes[..axes]);
        });
    }

    /// Spectral derivative of complex field data along one complex axis.
    pub fn spectral_d(&self, data: &[Complex64], axis: CAxis) -> Vec<Complex64> {
        let mut hat = data.to_vec();
        self.fft_all(&mut hat, false);
        self.apply_deriv_symbol(&mut hat, axis);
        self.fft_all(&mut hat, true);
        hat
    }

    /// All Hermitian second derivatives d_i d_jbar u of a real field at
    /// once: returns per-point n x n matrices (entry (i, j) = d_i d_jbar u),
    /// reusing a single forward transform.
    pub fn ddbar(&self, data: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let nn = n * n;
        let npts = self.num_points();
        let mut hat = data.to_vec();
        self.fft_all(&mut hat, false);
        let streams = self.ddbar_streams_from_hat(&hat);
        let mut out = vec![Complex64::new(0.0, 0.0); npts * nn];
        out.par_chunks_mut(nn)
            .enumerate()
            .for_each(|(pt, blk)| {
                for i in 0..n {
                    for j in 0..=i {
                        let v = streams[Self::pair_index(i, j)][pt];
                        blk[i * n + j] = v;
                        if j < i {
                            // d_j d_ibar u = conj(d_i d_jbar u) for real u
                            blk[j * n + i] = v.conj();
                        }
                    }
                }
            });
        out
    }

    /// Holomorphic gradient (d_1 u, ..., d_n u) of a field, one forward
    /// transform shared across axes.
    pub fn grad_holo(&self, data: &[Complex64]) -> Vec<Vec<Complex64>> {
        let mut hat = data.to_vec();
        self.fft_all(&mut hat, false);
        self.grad_holo_from_hat(&hat)
    }

    /// Forward transform of real data.
    pub fn fft_of_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut hat: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft_all(&mut hat, false);
        hat
    }

    pub fn grad_holo_from_hat(&self, hat: &[Complex64]) -> Vec<Vec<Complex64>> {
        (0..self.n)
            .map(|i| {
                let mut h = hat.to_vec();
                self.apply_deriv_symbol(&mut h, CAxis::Holo(i));
                self.fft_all(&mut h, true);
                h
            })
            .collect()
    }

    /// Upper-triangle second derivatives d_i d_jbar u (j <= i) as separate
    /// contiguous streams, indexed by pair_index(i, j); the lower triangle
    /// is the conjugate for real u.
    pub fn ddbar_streams_from_hat(&self, hat: &[Complex64]) -> Vec<Vec<Complex64>> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                let mut h = hat.to_vec();
                self.apply_deriv_symbol(&mut h, CAxis::Holo(i));
                self.apply_deriv_symbol(&mut h, CAxis::AntiHolo(j));
                self.fft_all(&mut h, true);
                out.push(h);
            }
        }
        out
    }

    /// Index of the (i, j <= i) stream in ddbar_streams_from_hat.
    #[inline]
    pub fn pair_index(i: usize, j: usize) -> usize {
        debug_assert!(j <= i);
        i * (i + 1) / 2 + j
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn field_from_fn(grid: &SpectralGrid, f: impl Fn(&[f64]) -> Complex64) -> Vec<Complex64> {
        let axes = grid.num_axes();
        let mut out = vec![Complex64::new(0.0, 0.0); grid.num_points()];
        let mut xs = vec![0.0; axes];
        for (pt, v) in out.iter_mut().enumerate() {
            grid.coords(pt, &mut xs);
            *v = f(&xs);
        }
        out
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let grid = SpectralGrid::new(2, 8).unwrap();
        let f = vec![Complex64::new(3.5, -1.0); grid.num_points()];
        let d = grid.spectral_d(&f, CAxis::Holo(0));
        assert!(d.iter().all(|v| v.norm() < 1e-13));
    }

    #[test]
    fn holomorphic_derivative_of_exponential() {
        // u = exp(2 pi i x_1): d_1 u = pi i u
        let grid = SpectralGrid::new(2, 8).unwrap();
        let u = field_from_fn(&grid, |x| (Complex64::i() * 2.0 * PI * x[0]).exp());
        let d = grid.spectral_d(&u, CAxis::Holo(0));
        for (pt, v) in d.iter().enumerate() {
            let expect = Complex64::i() * PI * u[pt];
            assert!((v - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn laplacian_of_cosine() {
        // d_1 d_1bar cos(2 pi x_1) = -pi^2 cos(2 pi x_1)
        let grid = SpectralGrid::new(2, 8).unwrap();
        let u = field_from_fn(&grid, |x| Complex64::new((2.0 * PI * x[0]).cos(), 0.0));
        let d1 = grid.spectral_d(&u, CAxis::Holo(0));
        let d = grid.spectral_d(&d1, CAxis::AntiHolo(0));
        for (pt, v) in d.iter().enumerate() {
            let expect = -PI * PI * u[pt].re;
            assert!((v.re - expect).abs() < 1e-11 && v.im.abs() < 1e-11);
        }
    }

    #[test]
    fn ddbar_matches_composed_derivatives() {
        let grid = SpectralGrid::new(2, 8).unwrap();
        let u = field_from_fn(&grid, |x| {
            Complex64::new(
                (2.0 * PI * x[0]).cos() * (2.0 * PI * x[3]).sin() + 0.3 * (2.0 * PI * x[2]).cos(),
                0.0,
            )
        });
        let dd = grid.ddbar(&u);
        let n = grid.n();
        for i in 0..n {
            for j in 0..n {
                let di = grid.spectral_d(&u, CAxis::Holo(i));
                let dij = grid.spectral_d(&di, CAxis::AntiHolo(j));
                for pt in 0..grid.num_points() {
                    let got = dd[pt * n * n + i * n + j];
                    assert!((got - dij[pt]).norm() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn mixed_wirtinger_derivative_y_axis() {
        // u = sin(2 pi y_1): d_1 u = (d_x - i d_y)/2 u = -i pi cos(2 pi y_1)
        let grid = SpectralGrid::new(2, 8).unwrap();
        let u = field_from_fn(&grid, |x| Complex64::new((2.0 * PI * x[1]).sin(), 0.0));
        let d = grid.spectral_d(&u, CAxis::Holo(0));
        let mut xs = vec![0.0; grid.num_axes()];
        for (pt, v) in d.iter().enumerate() {
            grid.coords(pt, &mut xs);
            let expect = Complex64::new(0.0, -PI * (2.0 * PI * xs[1]).cos());
            assert!((v - expect).norm() < 1e-11);
        }
    }
}
