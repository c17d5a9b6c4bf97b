//! The (1,1)-form chi in f(lambda(chi[u] + i d dbar u)) = psi, including
//! the gradient-dependent form arising from the Gauduchon equation.
//!
//! The Gauduchon chi is assembled pointwise in a g-unitary frame (Cholesky
//! g = R^H R): there the Hodge-star reductions take their closed
//! component forms
//!   (1/(n-2)!) * (omega_0^{n-1})                  = (n-1) adj(M_0)
//!   (1/(n-2)!) * Re{ i du ^ dbar omega^{n-2} }    = E(zeta) from torsion
//! with M_0 the frame matrix of omega_0 and E linear in the frame gradient.
//! chi follows from chi_tilde by the trace relation
//! chi = (tr chi_tilde / (n-1)) omega - chi_tilde, and transforms back to
//! coordinates as R^H chi_frame R.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hermgeo::{christoffel, ChernData, MatrixField, MetricField, ScalarField, SpectralGrid};
use crate::linalg;

/// Specification of chi.
#[derive(Debug, Clone)]
pub enum ChiSpec {
    /// constant Hermitian block
    Constant(Vec<Complex64>),
    /// z-dependent Hermitian field, no u dependence
    ZDependent(MatrixField),
    /// the Gauduchon form built from omega_0 and the metric torsion
    Gauduchon { omega0: MatrixField, c: f64 },
}

impl ChiSpec {
    pub fn depends_on_gradient(&self) -> bool {
        matches!(self, ChiSpec::Gauduchon { .. })
    }
}

/// Pointwise frame data for the Gauduchon chi, precomputed once per
/// (metric, omega_0) pair.
pub struct GauduchonAssembly {
    pub grid: SpectralGrid,
    pub n: usize,
    pub c: f64,
    /// upper Cholesky factor R of g per point
    chol: MatrixField,
    /// (n-1) adj(M_0) per point: the u-independent part of chi_tilde in frame
    adj_part: MatrixField,
    /// torsion in the unitary frame, layout (pt, a, b, c) = T_{ab}^c
    torsion_frame: Vec<Complex64>,
}

fn frame_torsion(
    metric: &MetricField,
    conn: &ChernData,
    chol: &MatrixField,
) -> Vec<Complex64> {
    let n = metric.n();
    let npts = metric.grid().num_points();
    let mut out = vec![Complex64::new(0.0, 0.0); npts * n * n * n];
    let mut rinv = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
    for pt in 0..npts {
        let r = chol.block(pt);
        // invert the upper-triangular factor
        rinv[..n * n].fill(Complex64::new(0.0, 0.0));
        for j in (0..n).rev() {
            rinv[j * n + j] = Complex64::new(1.0, 0.0) / r[j * n + j];
            for i in (0..j).rev() {
                let mut s = Complex64::new(0.0, 0.0);
                for k in (i + 1)..=j {
                    s += r[i * n + k] * rinv[k * n + j];
                }
                rinv[i * n + j] = -s / r[i * n + i];
            }
        }
        // T_frame_{ab}^c = conj(Rinv_{ia}) conj(Rinv_{jb}) T_{ij}^k conj(R_{ck})
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let mut s = Complex64::new(0.0, 0.0);
                    for i in 0..n {
                        for j in 0..n {
                            for k in 0..n {
                                s += rinv[i * n + a].conj()
                                    * rinv[j * n + b].conj()
                                    * conn.torsion.at(pt, i, j, k)
                                    * r[c * n + k].conj();
                            }
                        }
                    }
                    out[((pt * n + a) * n + b) * n + c] = s;
                }
            }
        }
    }
    out
}

impl GauduchonAssembly {
    pub fn new(metric: &MetricField, omega0: &MatrixField, c: f64) -> Result<Self> {
        let grid = metric.grid().clone();
        let n = metric.n();
        if omega0.n != n || &omega0.grid != &grid {
            return Err(Error::DimensionMismatch { expected: n, got: omega0.n });
        }
        let npts = grid.num_points();
        let mut chol = MatrixField::zeros(&grid);
        let mut adj_part = MatrixField::zeros(&grid);
        for pt in 0..npts {
            linalg::cholesky_upper(n, metric.g().block(pt), chol.block_mut(pt))
                .map_err(|_| Error::MetricDegenerate { point: pt })?;
            let mut m0 = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
            linalg::whiten(n, chol.block(pt), omega0.block(pt), &mut m0);
            linalg::hermitize(n, &mut m0[..n * n]);
            let mut adj = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
            linalg::adjugate(n, &m0, &mut adj);
            let scale = (n - 1) as f64;
            for (dst, src) in adj_part.block_mut(pt).iter_mut().zip(&adj[..n * n]) {
                *dst = scale * src;
            }
        }
        let conn = christoffel(metric)?;
        let torsion_frame = frame_torsion(metric, &conn, &chol);
        Ok(Self { grid, n, c, chol, adj_part, torsion_frame })
    }

    #[inline]
    fn t_frame(&self, pt: usize, a: usize, b: usize, c: usize) -> Complex64 {
        let n = self.n;
        self.torsion_frame[((pt * n + a) * n + b) * n + c]
    }

    /// The torsion bilinear E_{a bbar}(zeta) of the frame gradient, with
    /// independent zeta and zetabar slots. Diagonal:
    ///   E_{a abar} = 1/2 sum_{p, l != a} (zeta_p conj(T_{pl}^l) + zetabar_p T_{pl}^l)
    /// off-diagonal (a != b):
    ///   E_{a bbar} = -1/2 [ sum_{l != a} (zeta_a conj(T_{bl}^l) + zeta_l conj(T_{lb}^a))
    ///                    + sum_{l != b} (zetabar_b T_{al}^l + zetabar_l T_{la}^b) ]
    pub fn e_frame(
        &self,
        pt: usize,
        zeta: &[Complex64],
        zetabar: &[Complex64],
        out: &mut [Complex64],
    ) {
        let n = self.n;
        out[..n * n].fill(Complex64::new(0.0, 0.0));
        if n < 3 {
            // the (n-2)-fold wedge is empty: torsion coefficients with
            // repeated lower indices vanish and the sums are void
            return;
        }
        for a in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for p in 0..n {
                if p == a {
                    continue;
                }
                for l in 0..n {
                    if l == a {
                        continue;
                    }
                    let t = self.t_frame(pt, p, l, l);
                    s += 0.5 * (zeta[p] * t.conj() + zetabar[p] * t);
                }
            }
            out[a * n + a] = s;
        }
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let mut s = Complex64::new(0.0, 0.0);
                for l in 0..n {
                    if l != a {
                        s += zeta[a] * self.t_frame(pt, b, l, l).conj()
                            + zeta[l] * self.t_frame(pt, l, b, a).conj();
                    }
                    if l != b {
                        s += zetabar[b] * self.t_frame(pt, a, l, l)
                            + zetabar[l] * self.t_frame(pt, l, a, b);
                    }
                }
                out[a * n + b] = -0.5 * s;
            }
        }
    }

    /// chi_tilde in the frame at a point, for independent gradient slots.
    pub fn chi_tilde_frame(
        &self,
        pt: usize,
        zeta: &[Complex64],
        zetabar: &[Complex64],
        out: &mut [Complex64],
    ) {
        let n = self.n;
        self.e_frame(pt, zeta, zetabar, out);
        let adj = self.adj_part.block(pt);
        for k in 0..n * n {
            out[k] = adj[k] + self.c * out[k];
        }
    }

    /// chi in the frame: (tr chi_tilde / (n-1)) I - chi_tilde.
    pub fn chi_frame(
        &self,
        pt: usize,
        zeta: &[Complex64],
        zetabar: &[Complex64],
        out: &mut [Complex64],
    ) {
        let n = self.n;
        self.chi_tilde_frame(pt, zeta, zetabar, out);
        let mut tr = Complex64::new(0.0, 0.0);
        for i in 0..n {
            tr += out[i * n + i];
        }
        let scale = tr / (n - 1) as f64;
        for v in out[..n * n].iter_mut() {
            *v = -*v;
        }
        for i in 0..n {
            out[i * n + i] += scale;
        }
    }

    /// Frame gradient zeta_hat = R^{-H} zeta from the coordinate gradient.
    pub fn frame_gradient(&self, pt: usize, zeta: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        let r = self.chol.block(pt);
        // solve R^H out = zeta; R^H is lower triangular with (i,j) = conj(R_{ji})
        for i in 0..n {
            let mut s = zeta[i];
            for k in 0..i {
                s -= r[k * n + i].conj() * out[k];
            }
            out[i] = s / r[i * n + i].re;
        }
    }

    /// chi in coordinates at a point, from the coordinate gradient.
    pub fn chi_coords(&self, pt: usize, zeta_coord: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        let mut zf = [Complex64::new(0.0, 0.0); linalg::MAX_N];
        self.frame_gradient(pt, zeta_coord, &mut zf);
        let mut zfb = [Complex64::new(0.0, 0.0); linalg::MAX_N];
        for (dst, src) in zfb[..n].iter_mut().zip(&zf[..n]) {
            *dst = src.conj();
        }
        let mut cf = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
        self.chi_frame(pt, &zf[..n], &zfb[..n], &mut cf);
        linalg::unwhiten(n, self.chol.block(pt), &cf, out);
    }

    /// chi in coordinates with independent zeta / zetabar slots, for the
    /// finite-difference probes of the gradient dependence.
    pub fn chi_coords_slots(
        &self,
        pt: usize,
        zeta: &[Complex64],
        zetabar: &[Complex64],
        out: &mut [Complex64],
    ) {
        let n = self.n;
        let mut zf = [Complex64::new(0.0, 0.0); linalg::MAX_N];
        self.frame_gradient(pt, zeta, &mut zf);
        // the conjugate slot transforms through the conjugated solve
        let zb_conj: Vec<Complex64> = zetabar.iter().map(|z| z.conj()).collect();
        let mut zfb = [Complex64::new(0.0, 0.0); linalg::MAX_N];
        self.frame_gradient(pt, &zb_conj, &mut zfb);
        for v in zfb[..n].iter_mut() {
            *v = v.conj();
        }
        let mut cf = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
        self.chi_frame(pt, &zf[..n], &zfb[..n], &mut cf);
        linalg::unwhiten(n, self.chol.block(pt), &cf, out);
    }

    /// Upper Cholesky factor R(z) of the metric at a point.
    pub fn chol_block(&self, pt: usize) -> &[Complex64] {
        self.chol.block(pt)
    }

    /// Coefficient matrices A^alpha(z) = d chi_{i jbar} / d zeta_alpha in
    /// coordinates (chi is affine in the gradient). The conjugate-slot
    /// coefficients are B^alpha = (A^alpha)^H entrywise by hermiticity.
    pub fn gradient_coefficients(&self) -> Vec<MatrixField> {
        let n = self.n;
        let npts = self.grid.num_points();
        let mut coeffs: Vec<MatrixField> = (0..n).map(|_| MatrixField::zeros(&self.grid)).collect();
        let zero = vec![Complex64::new(0.0, 0.0); n];
        let mut base = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
        let mut bumped = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
        let mut base_frame = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
        let mut bump_frame = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
        for pt in 0..npts {
            // base value at zeta = 0 (zetabar = 0 as independent slot)
            self.chi_frame(pt, &zero, &zero, &mut base_frame);
            linalg::unwhiten(n, self.chol.block(pt), &base_frame, &mut base);
            for (alpha, coeff) in coeffs.iter_mut().enumerate() {
                // coordinate unit vector in the zeta slot
                let mut zc = vec![Complex64::new(0.0, 0.0); n];
                zc[alpha] = Complex64::new(1.0, 0.0);
                let mut zf = [Complex64::new(0.0, 0.0); linalg::MAX_N];
                self.frame_gradient(pt, &zc, &mut zf);
                self.chi_frame(pt, &zf[..n], &zero, &mut bump_frame);
                linalg::unwhiten(n, self.chol.block(pt), &bump_frame, &mut bumped);
                let blk = coeff.block_mut(pt);
                for k in 0..n * n {
                    blk[k] = bumped[k] - base[k];
                }
            }
        }
        coeffs
    }
}

/// Materialized chi[u] field plus the kernel needed for re-evaluation.
pub enum ChiEval {
    Fixed(MatrixField),
    Gauduchon(Box<GauduchonAssembly>),
}

impl ChiEval {
    pub fn build(spec: &ChiSpec, metric: &MetricField) -> Result<Self> {
        match spec {
            ChiSpec::Constant(block) => {
                let mut f = MatrixField::constant(metric.grid(), block)?;
                f.hermitize();
                Ok(ChiEval::Fixed(f))
            }
            ChiSpec::ZDependent(field) => {
                if field.hermitian_defect() > 1e-12 * (1.0 + field.max_abs()) {
                    return Err(Error::InvalidSpec("z-dependent chi is not Hermitian".into()));
                }
                Ok(ChiEval::Fixed(field.clone()))
            }
            ChiSpec::Gauduchon { omega0, c } => {
                Ok(ChiEval::Gauduchon(Box::new(GauduchonAssembly::new(metric, omega0, *c)?)))
            }
        }
    }

    /// Evaluate chi[u] given the holomorphic gradient fields of u.
    pub fn evaluate(&self, grad_u: &[Vec<Complex64>], grid: &SpectralGrid) -> MatrixField {
        match self {
            ChiEval::Fixed(f) => f.clone(),
            ChiEval::Gauduchon(assembly) => {
                let n = assembly.n;
                let mut out = MatrixField::zeros(grid);
                let npts = grid.num_points();
                let mut zeta = vec![Complex64::new(0.0, 0.0); n];
                for pt in 0..npts {
                    for (a, g) in grad_u.iter().enumerate() {
                        zeta[a] = g[pt];
                    }
                    assembly.chi_coords(pt, &zeta, out.block_mut(pt));
                }
                out
            }
        }
    }
}

impl GauduchonAssembly {
    /// Max over probed points and index pairs of |d chi_tilde_{i jbar} / d zeta_j|,
    /// by central differences in the gradient slot. The construction keeps
    /// this identically zero; nonzero values flag a broken torsion reduction.
    pub fn gradient_slot_defect(&self, stride: usize) -> f64 {
        let n = self.n;
        let npts = self.grid.num_points();
        let h = 1e-5;
        let mut plus = vec![Complex64::new(0.0, 0.0); n * n];
        let mut minus = vec![Complex64::new(0.0, 0.0); n * n];
        let mut worst = 0.0f64;
        for pt in (0..npts).step_by(stride.max(1)) {
            let zeta0: Vec<Complex64> =
                (0..n).map(|a| Complex64::new(0.1 + 0.03 * a as f64, -0.05)).collect();
            let zetabar: Vec<Complex64> = zeta0.iter().map(|z| z.conj()).collect();
            for j in 0..n {
                let mut zp = zeta0.clone();
                let mut zm = zeta0.clone();
                zp[j] += Complex64::new(h, 0.0);
                zm[j] -= Complex64::new(h, 0.0);
                self.chi_tilde_frame(pt, &zp, &zetabar, &mut plus);
                self.chi_tilde_frame(pt, &zm, &zetabar, &mut minus);
                for i in 0..n {
                    let fd = (plus[i * n + j] - minus[i * n + j]) / (2.0 * h);
                    worst = worst.max(fd.norm());
                }
            }
        }
        worst
    }
}

/// Public entry matching the solver interface: the Gauduchon chi field for
/// a given u.
pub fn build_gauduchon_chi(
    omega0: &MatrixField,
    metric: &MetricField,
    u: &ScalarField,
    c: f64,
) -> Result<MatrixField> {
    let assembly = GauduchonAssembly::new(metric, omega0, c)?;
    let grad = u.grid.grad_holo(&u.data);
    let eval = ChiEval::Gauduchon(Box::new(assembly));
    Ok(eval.evaluate(&grad, &u.grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermgeo::eigenvalues_wrt_metric;
    use std::f64::consts::PI;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn flat_metric_chi_is_omega0_at_n2() {
        // n = 2: the wedge term is empty and chi = omega_0 exactly
        let grid = SpectralGrid::new(2, 4).unwrap();
        let metric = MetricField::flat(&grid);
        let omega0 = MatrixField::constant(
            &grid,
            &[c64(2.0, 0.0), c64(0.3, 0.1), c64(0.3, -0.1), c64(1.0, 0.0)],
        )
        .unwrap();
        let u = ScalarField::from_fn(&grid, |x| 0.1 * (2.0 * PI * x[0]).cos());
        let chi = build_gauduchon_chi(&omega0, &metric, &u, 1.0).unwrap();
        for pt in 0..grid.num_points() {
            for k in 0..4 {
                assert!((chi.block(pt)[k] - omega0.block(pt)[k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn conformal_metric_chi_is_omega0_at_n2() {
        // at n = 2 the trace relation collapses for any metric
        let grid = SpectralGrid::new(2, 8).unwrap();
        let phi = ScalarField::from_fn(&grid, |x| 0.2 * (2.0 * PI * x[0]).cos());
        let metric = MetricField::conformal(&grid, &phi).unwrap();
        let omega0 = MatrixField::identity(&grid);
        let u = ScalarField::from_fn(&grid, |x| 0.05 * (2.0 * PI * x[2]).sin());
        let chi = build_gauduchon_chi(&omega0, &metric, &u, 1.0).unwrap();
        for pt in (0..grid.num_points()).step_by(11) {
            for k in 0..4 {
                let expect = omega0.block(pt)[k];
                assert!((chi.block(pt)[k] - expect).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn flat_metric_n3_torsion_part_vanishes() {
        let grid = SpectralGrid::new(3, 4).unwrap();
        let metric = MetricField::flat(&grid);
        let omega0 = MatrixField::identity(&grid);
        let u = ScalarField::from_fn(&grid, |x| 0.1 * (2.0 * PI * x[0]).cos());
        let chi_u = build_gauduchon_chi(&omega0, &metric, &u, 1.0).unwrap();
        let zero = ScalarField::zeros(&grid);
        let chi_0 = build_gauduchon_chi(&omega0, &metric, &zero, 1.0).unwrap();
        // torsion-free: chi does not depend on u at all
        for pt in 0..grid.num_points() {
            for k in 0..9 {
                assert!((chi_u.block(pt)[k] - chi_0.block(pt)[k]).norm() < 1e-12);
            }
        }
        // omega_0 = id: adj part (n-1) adj(I) = (n-1) I, chi_tilde = 2 I,
        // chi = (tr/2) I - chi_tilde = 3 I - 2 I = I
        for k in 0..3 {
            assert!((chi_0.block(0)[k * 3 + k] - c64(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn gauduchon_gradient_slot_identities_n3() {
        // chi_tilde_{i jbar, zeta_j} = 0 for every i, j (finite differences
        // in the gradient slot), on a conformal metric with real torsion
        let grid = SpectralGrid::new(3, 8).unwrap();
        let phi = ScalarField::from_fn(&grid, |x| {
            0.15 * (2.0 * PI * x[0]).cos() + 0.1 * (2.0 * PI * x[3]).sin()
        });
        let metric = MetricField::conformal(&grid, &phi).unwrap();
        let omega0 = MatrixField::identity(&grid);
        let assembly = GauduchonAssembly::new(&metric, &omega0, 1.0).unwrap();
        let n = 3;
        let h = 1e-5;
        let mut plus = [c64(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
        let mut minus = [c64(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
        let mut max_defect = 0.0f64;
        for pt in (0..grid.num_points()).step_by(97) {
            let zeta0: Vec<Complex64> = (0..n)
                .map(|a| c64(0.1 + 0.05 * a as f64, -0.07 * a as f64))
                .collect();
            let zetabar: Vec<Complex64> = zeta0.iter().map(|z| z.conj()).collect();
            for j in 0..n {
                let mut zp = zeta0.clone();
                let mut zm = zeta0.clone();
                zp[j] += c64(h, 0.0);
                zm[j] -= c64(h, 0.0);
                assembly.chi_tilde_frame(pt, &zp, &zetabar, &mut plus);
                assembly.chi_tilde_frame(pt, &zm, &zetabar, &mut minus);
                for i in 0..n {
                    let fd = (plus[i * n + j] - minus[i * n + j]) / (2.0 * h);
                    max_defect = max_defect.max(fd.norm());
                }
            }
        }
        assert!(max_defect < 1e-9, "gradient-slot defect {max_defect}");
    }

    #[test]
    fn gauduchon_positivity_preserved() {
        // with omega_0 = id the chi built at u = 0 is positive definite
        let grid = SpectralGrid::new(3, 4).unwrap();
        let phi = ScalarField::from_fn(&grid, |x| 0.1 * (2.0 * PI * x[0]).cos());
        let metric = MetricField::conformal(&grid, &phi).unwrap();
        let omega0 = MatrixField::identity(&grid);
        let zero = ScalarField::zeros(&grid);
        let chi = build_gauduchon_chi(&omega0, &metric, &zero, 1.0).unwrap();
        let lam = eigenvalues_wrt_metric(&chi, &metric).unwrap();
        assert!(lam.min_entry() > 0.0);
    }
}
