//! Restarted GMRES with a constant-coefficient spectral preconditioner for
//! the Newton linear systems. The linearized operator is uniformly elliptic
//! on admissible iterates, so the flat Laplacian scaled by the averaged
//! trace of F^{i jbar} is spectrally equivalent at desk scale.

use num_complex::Complex64;

use crate::hermgeo::SpectralGrid;

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub restart: usize,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self { restart: 50, tol: 1e-10, max_iters: 400 }
    }
}

/// Inverse of gamma * sum_i d_i d_ibar on the live-mode subspace,
/// diagonal in Fourier space with symbol -gamma pi^2 |k|^2.
///
/// Modes where every first-derivative symbol vanishes (the mean and the
/// Nyquist checkerboards) are discretization gauge directions: they do not
/// move F(g[u]) at all, and the linearized operator annihilates them. Both
/// the preconditioner and the projector kill them.
pub struct SpectralPrecond {
    grid: SpectralGrid,
    inv_symbol: Vec<f64>,
}

impl SpectralPrecond {
    pub fn new(grid: &SpectralGrid, gamma: f64) -> Self {
        let m = grid.m();
        let axes = grid.num_axes();
        let npts = grid.num_points();
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let freq = |idx: usize| -> f64 {
            let half = m / 2;
            if idx < half {
                idx as f64
            } else if idx == half {
                0.0
            } else {
                idx as f64 - m as f64
            }
        };
        let mut inv_symbol = vec![0.0; npts];
        for (pt, s) in inv_symbol.iter_mut().enumerate() {
            let mut k2 = 0.0;
            let mut rest = pt;
            for _ in 0..axes {
                let f = freq(rest % m);
                k2 += f * f;
                rest /= m;
            }
            *s = if k2 > 0.0 { -1.0 / (gamma * pi2 * k2) } else { 0.0 };
        }
        Self { grid: grid.clone(), inv_symbol }
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut hat: Vec<Complex64> = r.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.grid.fft_all(&mut hat, false);
        for (v, &s) in hat.iter_mut().zip(&self.inv_symbol) {
            *v *= s;
        }
        self.grid.fft_all(&mut hat, true);
        hat.into_iter().map(|v| v.re).collect()
    }

    /// Multiply a spectrum in place by the inverse symbol (the M^{-1}
    /// action without the transforms), so callers can fuse the
    /// preconditioner into an operator that already works on spectra.
    pub fn scale_hat(&self, hat: &mut [Complex64]) {
        for (v, &s) in hat.iter_mut().zip(&self.inv_symbol) {
            *v *= s;
        }
    }

    /// Orthogonal projection onto the live modes (zeroes the mean and the
    /// Nyquist checkerboard directions).
    pub fn project(&self, r: &[f64]) -> Vec<f64> {
        let mut hat: Vec<Complex64> = r.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.grid.fft_all(&mut hat, false);
        for (v, &s) in hat.iter_mut().zip(&self.inv_symbol) {
            if s == 0.0 {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        self.grid.fft_all(&mut hat, true);
        hat.into_iter().map(|v| v.re).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub struct GmresOutcome {
    pub solution: Vec<f64>,
    pub rel_residual: f64,
    pub iterations: usize,
}

/// Right-preconditioned restarted GMRES: solves A M^{-1} y = b, x = M^{-1} y.
pub fn gmres<A, M>(apply: A, precond: M, b: &[f64], opts: &GmresOptions) -> GmresOutcome
where
    A: Fn(&[f64]) -> Vec<f64>,
    M: Fn(&[f64]) -> Vec<f64>,
{
    let nn = b.len();
    let bnorm = norm(b).max(1e-300);
    let mut x = vec![0.0; nn];
    let mut total_iters = 0usize;
    let mut rel = 1.0;

    'outer: while total_iters < opts.max_iters {
        // residual of the current x
        let ax = apply(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= opts.tol {
            break;
        }
        for v in r.iter_mut() {
            *v /= beta;
        }
        let m = opts.restart;
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r);
        // Hessenberg in column-major compressed form plus Givens rotations
        let mut h = vec![0.0; (m + 1) * m];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0usize;

        for k in 0..m {
            if total_iters >= opts.max_iters {
                break;
            }
            total_iters += 1;
            let z = precond(&basis[k]);
            let mut w = apply(&z);
            // modified Gram-Schmidt
            for (j, vj) in basis.iter().enumerate() {
                let hjk = dot(&w, vj);
                h[j * m + k] = hjk;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= hjk * vi;
                }
            }
            let hk1 = norm(&w);
            h[(k + 1) * m + k] = hk1;
            // apply accumulated rotations to the new column
            for j in 0..k {
                let t = cs[j] * h[j * m + k] + sn[j] * h[(j + 1) * m + k];
                h[(j + 1) * m + k] = -sn[j] * h[j * m + k] + cs[j] * h[(j + 1) * m + k];
                h[j * m + k] = t;
            }
            let denom = (h[k * m + k] * h[k * m + k] + hk1 * hk1).sqrt();
            if denom < 1e-300 {
                k_used = k + 1;
                break;
            }
            cs[k] = h[k * m + k] / denom;
            sn[k] = hk1 / denom;
            h[k * m + k] = denom;
            h[(k + 1) * m + k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            rel = g[k + 1].abs() / bnorm;
            if rel <= opts.tol || hk1 < 1e-300 {
                break;
            }
            let mut v = w;
            for vi in v.iter_mut() {
                *vi /= hk1;
            }
            basis.push(v);
        }

        if k_used == 0 {
            break 'outer;
        }
        // back-substitution for the least-squares coefficients
        let mut ycoef = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in (i + 1)..k_used {
                s -= h[i * m + j] * ycoef[j];
            }
            ycoef[i] = s / h[i * m + i];
        }
        // x += M^{-1} (V y)
        let mut update = vec![0.0; nn];
        for (j, yc) in ycoef.iter().enumerate() {
            for (ui, vi) in update.iter_mut().zip(&basis[j]) {
                *ui += yc * vi;
            }
        }
        let mu = precond(&update);
        for (xi, ui) in x.iter_mut().zip(&mu) {
            *xi += ui;
        }
        if rel <= opts.tol {
            break;
        }
    }

    GmresOutcome { solution: x, rel_residual: rel, iterations: total_iters }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gmres_solves_small_dense_system() {
        // nonsymmetric 4x4
        let a = [
            [4.0, 1.0, 0.0, 0.5],
            [0.3, 3.0, 1.0, 0.0],
            [0.0, 0.2, 5.0, 1.0],
            [1.0, 0.0, 0.1, 2.0],
        ];
        let apply = |x: &[f64]| -> Vec<f64> {
            (0..4).map(|i| (0..4).map(|j| a[i][j] * x[j]).sum()).collect()
        };
        let b = vec![1.0, -2.0, 0.5, 3.0];
        let out = gmres(apply, |r: &[f64]| r.to_vec(), &b, &GmresOptions::default());
        let ax = (0..4).map(|i| (0..4).map(|j| a[i][j] * out.solution[j]).sum::<f64>());
        for (axi, bi) in ax.zip(&b) {
            assert!((axi - bi).abs() < 1e-8);
        }
    }

    #[test]
    fn precond_inverts_flat_laplacian() {
        use crate::hermgeo::{CAxis, ScalarField, SpectralGrid};
        let grid = SpectralGrid::new(2, 8).unwrap();
        let u = ScalarField::from_fn(&grid, |x| {
            (2.0 * std::f64::consts::PI * x[0]).cos()
                * (2.0 * std::f64::consts::PI * x[3]).sin()
        });
        // L u = gamma sum_i d_i d_ibar u with gamma = 2
        let mut lu = vec![0.0; grid.num_points()];
        for i in 0..2 {
            let d = u.derivative(CAxis::Holo(i)).derivative(CAxis::AntiHolo(i));
            for (o, v) in lu.iter_mut().zip(&d.data) {
                *o += 2.0 * v.re;
            }
        }
        let pre = SpectralPrecond::new(&grid, 2.0);
        let back = pre.apply(&lu);
        for (b, v) in back.iter().zip(&u.data) {
            assert!((b - v.re).abs() < 1e-10);
        }
    }
}
