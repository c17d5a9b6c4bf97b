//! Small dense Hermitian linear algebra on stack buffers.
//!
//! Everything here operates on n x n row-major `Complex64` slices with
//! n <= MAX_N. The grid kernels call these routines once per grid point,
//! so they avoid heap allocation entirely.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Hard cap on the matrix dimension handled by the stack kernels.
pub const MAX_N: usize = 8;

const JACOBI_SWEEPS: usize = 30;

#[inline]
pub fn idx(n: usize, i: usize, j: usize) -> usize {
    i * n + j
}

/// Hermitian-symmetrize in place: a <- (a + a^H)/2.
pub fn hermitize(n: usize, a: &mut [Complex64]) {
    for i in 0..n {
        a[idx(n, i, i)] = Complex64::new(a[idx(n, i, i)].re, 0.0);
        for j in (i + 1)..n {
            let m = 0.5 * (a[idx(n, i, j)] + a[idx(n, j, i)].conj());
            a[idx(n, i, j)] = m;
            a[idx(n, j, i)] = m.conj();
        }
    }
}

/// Max absolute off-diagonal entry.
fn offdiag_norm(n: usize, a: &[Complex64]) -> f64 {
    let mut m = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            m = m.max(a[idx(n, i, j)].norm());
        }
    }
    m
}

/// Eigenvalues of a Hermitian matrix, descending. 2x2 goes through the
/// closed form; larger sizes use cyclic Jacobi.
pub fn eigh_values(n: usize, a: &[Complex64], out: &mut [f64]) {
    debug_assert!(n <= MAX_N && a.len() >= n * n && out.len() >= n);
    if n == 1 {
        out[0] = a[0].re;
        return;
    }
    if n == 2 {
        let p = a[0].re;
        let q = a[3].re;
        let b = a[1];
        let mean = 0.5 * (p + q);
        let disc = (0.25 * (p - q) * (p - q) + b.norm_sqr()).sqrt();
        out[0] = mean + disc;
        out[1] = mean - disc;
        return;
    }
    let mut work = [Complex64::new(0.0, 0.0); MAX_N * MAX_N];
    work[..n * n].copy_from_slice(&a[..n * n]);
    jacobi(n, &mut work, None);
    for i in 0..n {
        out[i] = work[idx(n, i, i)].re;
    }
    sort_desc(&mut out[..n]);
}

/// Full Hermitian eigendecomposition: eigenvalues descending in `vals`,
/// eigenvectors in the COLUMNS of `vecs` (row-major), matching order.
pub fn eigh(n: usize, a: &[Complex64], vals: &mut [f64], vecs: &mut [Complex64]) {
    debug_assert!(n <= MAX_N);
    let mut work = [Complex64::new(0.0, 0.0); MAX_N * MAX_N];
    work[..n * n].copy_from_slice(&a[..n * n]);
    for (k, v) in vecs.iter_mut().take(n * n).enumerate() {
        let (i, j) = (k / n, k % n);
        *v = if i == j {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
    jacobi(n, &mut work, Some(vecs));
    let mut order = [0usize; MAX_N];
    for (i, o) in order.iter_mut().take(n).enumerate() {
        *o = i;
    }
    let diag: Vec<f64> = (0..n).map(|i| work[idx(n, i, i)].re).collect();
    order[..n].sort_by(|&p, &q| diag[q].partial_cmp(&diag[p]).unwrap());
    let mut tmp = [Complex64::new(0.0, 0.0); MAX_N * MAX_N];
    tmp[..n * n].copy_from_slice(&vecs[..n * n]);
    for (newc, &oldc) in order[..n].iter().enumerate() {
        vals[newc] = diag[oldc];
        for r in 0..n {
            vecs[idx(n, r, newc)] = tmp[idx(n, r, oldc)];
        }
    }
}

/// Cyclic complex Jacobi. Rotations zero the (p,q) entry; the optional
/// accumulator collects them so its columns end up as eigenvectors.
fn jacobi(n: usize, a: &mut [Complex64], mut acc: Option<&mut [Complex64]>) {
    let scale: f64 = (0..n * n).map(|k| a[k].norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return;
    }
    let tol = 1e-15 * scale;
    for _ in 0..JACOBI_SWEEPS {
        if offdiag_norm(n, a) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[idx(n, p, q)];
                if apq.norm() <= tol * 1e-2 {
                    continue;
                }
                let app = a[idx(n, p, p)].re;
                let aqq = a[idx(n, q, q)].re;
                // Unitary 2x2: diagonalize [[app, apq], [apq^*, aqq]].
                // Rutishauser angle keeps |theta| <= pi/4.
                let phase = apq / apq.norm();
                let tau = (aqq - app) / (2.0 * apq.norm());
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let u_pp = Complex64::new(c, 0.0);
                let u_pq = phase * s;
                // rows/cols update: a <- U^H a U with U = [[c, s*phase],[-s*conj(phase), c]]
                for k in 0..n {
                    let akp = a[idx(n, k, p)];
                    let akq = a[idx(n, k, q)];
                    a[idx(n, k, p)] = akp * u_pp - akq * u_pq.conj();
                    a[idx(n, k, q)] = akp * u_pq + akq * u_pp;
                }
                for k in 0..n {
                    let apk = a[idx(n, p, k)];
                    let aqk = a[idx(n, q, k)];
                    a[idx(n, p, k)] = apk * u_pp.conj() - aqk * u_pq;
                    a[idx(n, q, k)] = apk * u_pq.conj() + aqk * u_pp;
                }
                a[idx(n, p, q)] = Complex64::new(0.0, 0.0);
                a[idx(n, q, p)] = Complex64::new(0.0, 0.0);
                if let Some(v) = acc.as_deref_mut() {
                    for k in 0..n {
                        let vkp = v[idx(n, k, p)];
                        let vkq = v[idx(n, k, q)];
                        v[idx(n, k, p)] = vkp * u_pp - vkq * u_pq.conj();
                        v[idx(n, k, q)] = vkp * u_pq + vkq * u_pp;
                    }
                }
            }
        }
    }
}

pub fn sort_desc(v: &mut [f64]) {
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
}

/// Upper-triangular Cholesky of a Hermitian positive definite matrix:
/// a = r^H r. Fails when a pivot drops below `eps` times the diagonal scale.
pub fn cholesky_upper(n: usize, a: &[Complex64], r: &mut [Complex64]) -> Result<()> {
    let scale: f64 = (0..n).map(|i| a[idx(n, i, i)].re.abs()).fold(0.0, f64::max);
    let eps = 1e-13 * (1.0 + scale);
    r[..n * n].fill(Complex64::new(0.0, 0.0));
    for i in 0..n {
        let mut d = a[idx(n, i, i)].re;
        for k in 0..i {
            d -= r[idx(n, k, i)].norm_sqr();
        }
        if d <= eps {
            return Err(Error::MetricDegenerate { point: usize::MAX });
        }
        let rii = d.sqrt();
        r[idx(n, i, i)] = Complex64::new(rii, 0.0);
        for j in (i + 1)..n {
            let mut s = a[idx(n, i, j)];
            for k in 0..i {
                s -= r[idx(n, k, i)].conj() * r[idx(n, k, j)];
            }
            r[idx(n, i, j)] = s / rii;
        }
    }
    Ok(())
}

/// Whiten a Hermitian form: m = r^{-H} x r^{-1}, where g = r^H r.
/// The eigenvalues of m are the eigenvalues of x with respect to g.
pub fn whiten(n: usize, r: &[Complex64], x: &[Complex64], m: &mut [Complex64]) {
    // Solve r^H y = x (forward substitution on columns), then m r = y^T-ish:
    // work column-wise: first w = r^{-H} x  (w over rows), then m = w r^{-1}.
    let mut w = [Complex64::new(0.0, 0.0); MAX_N * MAX_N];
    // r^H is lower triangular with entries conj(r[j,i]).
    for col in 0..n {
        for i in 0..n {
            let mut s = x[idx(n, i, col)];
            for k in 0..i {
                s -= r[idx(n, k, i)].conj() * w[idx(n, k, col)];
            }
            w[idx(n, i, col)] = s / r[idx(n, i, i)].re;
        }
    }
    // m = w r^{-1}  <=>  m r = w, solve rows against upper-triangular r.
    for row in 0..n {
        for j in 0..n {
            let mut s = w[idx(n, row, j)];
            for k in 0..j {
                s -= m[idx(n, row, k)] * r[idx(n, k, j)];
            }
            m[idx(n, row, j)] = s / r[idx(n, j, j)].re;
        }
    }
}

/// Undo whitening on a Hermitian form: x = r^H m r.
pub fn unwhiten(n: usize, r: &[Complex64], m: &[Complex64], x: &mut [Complex64]) {
    let mut w = [Complex64::new(0.0, 0.0); MAX_N * MAX_N];
    // w = m r
    for i in 0..n {
        for j in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..=j {
                s += m[idx(n, i, k)] * r[idx(n, k, j)];
            }
            w[idx(n, i, j)] = s;
        }
    }
    // x = r^H w
    for i in 0..n {
        for j in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..=i {
                s += r[idx(n, k, i)].conj() * w[idx(n, k, j)];
            }
            x[idx(n, i, j)] = s;
        }
    }
}

/// Dual of the whitening transform for derivative matrices:
/// out = r^{-1} x r^{-H}. If F(g_form) = f(lambda(r^{-H} g_form r^{-1}))
/// then the matrix of first derivatives with respect to the form entries
/// is r^{-1} (U diag(f_p) U^H) r^{-H}.
pub fn unwhiten_dual(n: usize, r: &[Complex64], x: &[Complex64], out: &mut [Complex64]) {
    let mut y = [Complex64::new(0.0, 0.0); MAX_N * MAX_N];
    // y = r^{-1} x: solve r y = x column-wise (r upper triangular)
    for col in 0..n {
        for i in (0..n).rev() {
            let mut s = x[idx(n, i, col)];
            for k in (i + 1)..n {
                s -= r[idx(n, i, k)] * y[idx(n, k, col)];
            }
            y[idx(n, i, col)] = s / r[idx(n, i, i)].re;
        }
    }
    // out = y r^{-H}: solve out r^H = y row-wise; r^H lower triangular
    for row in 0..n {
        for j in (0..n).rev() {
            let mut s = y[idx(n, row, j)];
            for k in (j + 1)..n {
                s -= out[idx(n, row, k)] * r[idx(n, j, k)].conj();
            }
            out[idx(n, row, j)] = s / r[idx(n, j, j)].re;
        }
    }
}

/// Adjugate of a Hermitian matrix (det(a) a^{-1}, extended continuously to
/// singular a). Used for the Hodge-star closed form of an (n-1)-th wedge
/// power: n <= 3 is all the grid machinery needs, but keep n = 4 for tests.
pub fn adjugate(n: usize, a: &[Complex64], out: &mut [Complex64]) {
    match n {
        1 => out[0] = Complex64::new(1.0, 0.0),
        2 => {
            out[0] = a[3];
            out[1] = -a[1];
            out[2] = -a[2];
            out[3] = a[0];
        }
        _ => {
            // cofactor expansion; fine for n <= 4
            for i in 0..n {
                for j in 0..n {
                    out[idx(n, i, j)] = cofactor(n, a, j, i);
                }
            }
        }
    }
}

fn cofactor(n: usize, a: &[Complex64], row: usize, col: usize) -> Complex64 {
    let mut minor = [Complex64::new(0.0, 0.0); MAX_N * MAX_N];
    let m = n - 1;
    let mut r = 0;
    for i in 0..n {
        if i == row {
            continue;
        }
        let mut c = 0;
        for j in 0..n {
            if j == col {
                continue;
            }
            minor[idx(m, r, c)] = a[idx(n, i, j)];
            c += 1;
        }
        r += 1;
    }
    let sign = if (row + col) % 2 == 0 { 1.0 } else { -1.0 };
    sign * det(m, &minor)
}

pub fn det(n: usize, a: &[Complex64]) -> Complex64 {
    match n {
        0 => Complex64::new(1.0, 0.0),
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => {
            // LU with partial pivoting
            let mut w = [Complex64::new(0.0, 0.0); MAX_N * MAX_N];
            w[..n * n].copy_from_slice(&a[..n * n]);
            let mut d = Complex64::new(1.0, 0.0);
            for k in 0..n {
                let mut piv = k;
                for i in (k + 1)..n {
                    if w[idx(n, i, k)].norm() > w[idx(n, piv, k)].norm() {
                        piv = i;
                    }
                }
                if piv != k {
                    for j in 0..n {
                        w.swap(idx(n, k, j), idx(n, piv, j));
                    }
                    d = -d;
                }
                let pivot = w[idx(n, k, k)];
                if pivot.norm() == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                d *= pivot;
                for i in (k + 1)..n {
                    let f = w[idx(n, i, k)] / pivot;
                    for j in (k + 1)..n {
                        let wkj = w[idx(n, k, j)];
                        w[idx(n, i, j)] -= f * wkj;
                    }
                }
            }
            d
        }
    }
}

/// General inverse through the adjugate; callers guarantee a is well
/// conditioned (metric fields are validated at construction).
pub fn invert(n: usize, a: &[Complex64], out: &mut [Complex64]) -> Result<()> {
    let d = det(n, a);
    let scale: f64 = (0..n * n).map(|k| a[k].norm()).fold(0.0, f64::max);
    if d.norm() <= 1e-14 * (1.0 + scale.powi(n as i32)) {
        return Err(Error::MetricDegenerate { point: usize::MAX });
    }
    adjugate(n, a, out);
    for v in out[..n * n].iter_mut() {
        *v /= d;
    }
    Ok(())
}

pub fn matmul(n: usize, a: &[Complex64], b: &[Complex64], out: &mut [Complex64]) {
    for i in 0..n {
        for j in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..n {
                s += a[idx(n, i, k)] * b[idx(n, k, j)];
            }
            out[idx(n, i, j)] = s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eigh_2x2_closed_form() {
        let a = [c(3.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)];
        let mut vals = [0.0; 2];
        eigh_values(2, &a, &mut vals);
        let disc = 2.0f64.sqrt();
        assert!((vals[0] - (2.0 + disc)).abs() < 1e-14);
        assert!((vals[1] - (2.0 - disc)).abs() < 1e-14);
    }

    #[test]
    fn eigh_3x3_reconstructs() {
        let a = [
            c(2.0, 0.0), c(0.3, 0.1), c(0.0, -0.2),
            c(0.3, -0.1), c(1.0, 0.0), c(0.5, 0.0),
            c(0.0, 0.2), c(0.5, 0.0), c(-1.0, 0.0),
        ];
        let mut vals = [0.0; 3];
        let mut vecs = [c(0.0, 0.0); 9];
        eigh(3, &a, &mut vals, &mut vecs);
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        // A v_k = lambda_k v_k
        for k in 0..3 {
            for i in 0..3 {
                let mut av = c(0.0, 0.0);
                for j in 0..3 {
                    av += a[idx(3, i, j)] * vecs[idx(3, j, k)];
                }
                let diff = av - vals[k] * vecs[idx(3, i, k)];
                assert!(diff.norm() < 1e-12, "residual {}", diff.norm());
            }
        }
    }

    #[test]
    fn cholesky_whiten_roundtrip() {
        let g = [
            c(2.0, 0.0), c(0.4, 0.3), c(0.0, 0.0),
            c(0.4, -0.3), c(3.0, 0.0), c(0.1, -0.1),
            c(0.0, 0.0), c(0.1, 0.1), c(1.5, 0.0),
        ];
        let x = [
            c(1.0, 0.0), c(0.2, 0.5), c(0.0, 0.1),
            c(0.2, -0.5), c(-1.0, 0.0), c(0.3, 0.0),
            c(0.0, -0.1), c(0.3, 0.0), c(2.0, 0.0),
        ];
        let mut r = [c(0.0, 0.0); 9];
        cholesky_upper(3, &g, &mut r).unwrap();
        // r^H r = g
        let mut rh = [c(0.0, 0.0); 9];
        for i in 0..3 {
            for j in 0..3 {
                rh[idx(3, i, j)] = r[idx(3, j, i)].conj();
            }
        }
        let mut gg = [c(0.0, 0.0); 9];
        matmul(3, &rh, &r, &mut gg);
        for k in 0..9 {
            assert!((gg[k] - g[k]).norm() < 1e-12);
        }
        let mut m = [c(0.0, 0.0); 9];
        whiten(3, &r, &x, &mut m);
        let mut back = [c(0.0, 0.0); 9];
        unwhiten(3, &r, &m, &mut back);
        for k in 0..9 {
            assert!((back[k] - x[k]).norm() < 1e-11);
        }
    }

    #[test]
    fn adjugate_matches_det_times_inverse() {
        let a = [
            c(2.0, 0.0), c(0.5, 0.2), c(0.1, 0.0),
            c(0.5, -0.2), c(1.8, 0.0), c(0.0, 0.3),
            c(0.1, 0.0), c(0.0, -0.3), c(2.5, 0.0),
        ];
        let d = det(3, &a);
        let mut inv = [c(0.0, 0.0); 9];
        invert(3, &a, &mut inv).unwrap();
        let mut adj = [c(0.0, 0.0); 9];
        adjugate(3, &a, &mut adj);
        for k in 0..9 {
            assert!((adj[k] - d * inv[k]).norm() < 1e-10);
        }
    }
}
