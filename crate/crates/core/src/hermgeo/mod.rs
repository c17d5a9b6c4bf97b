//! Hermitian geometry on a discretized complex torus: scalar and
//! matrix-valued fields, metric fields with cached inverses, eigenvalues of
//! (1,1)-forms with respect to the metric, Chern connection data and the
//! covariant-derivative commutation residuals.

mod chern;
mod spectral;

pub use chern::{christoffel, commutation_residuals, curvature, ChernData, CommutationResiduals};
pub use spectral::{CAxis, SpectralGrid};

use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;

/// Scalar field on the grid (complex storage; real data keeps im = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: SpectralGrid,
    pub data: Vec<Complex64>,
}

impl ScalarField {
    pub fn zeros(grid: &SpectralGrid) -> Self {
        Self { grid: grid.clone(), data: vec![Complex64::new(0.0, 0.0); grid.num_points()] }
    }

    pub fn from_fn(grid: &SpectralGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut field = Self::zeros(grid);
        let axes = grid.num_axes();
        let mut xs = vec![0.0; axes];
        for (pt, v) in field.data.iter_mut().enumerate() {
            grid.coords(pt, &mut xs);
            *v = Complex64::new(f(&xs), 0.0);
        }
        field
    }

    pub fn from_real(grid: &SpectralGrid, data: &[f64]) -> Self {
        Self {
            grid: grid.clone(),
            data: data.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        }
    }

    pub fn re(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.re).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn mean_re(&self) -> f64 {
        self.data.iter().map(|v| v.re).sum::<f64>() / self.data.len() as f64
    }

    pub fn derivative(&self, axis: CAxis) -> Self {
        Self { grid: self.grid.clone(), data: self.grid.spectral_d(&self.data, axis) }
    }
}

/// n x n matrix per grid point, row-major blocks. Entry (i, j) of the block
/// holds the component X_{i jbar} of a (1,1)-form.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    pub grid: SpectralGrid,
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl MatrixField {
    pub fn zeros(grid: &SpectralGrid) -> Self {
        let n = grid.n();
        Self {
            grid: grid.clone(),
            n,
            data: vec![Complex64::new(0.0, 0.0); grid.num_points() * n * n],
        }
    }

    pub fn identity(grid: &SpectralGrid) -> Self {
        let mut f = Self::zeros(grid);
        let n = f.n;
        for pt in 0..grid.num_points() {
            for i in 0..n {
                f.data[pt * n * n + i * n + i] = Complex64::new(1.0, 0.0);
            }
        }
        f
    }

    pub fn constant(grid: &SpectralGrid, block: &[Complex64]) -> Result<Self> {
        let n = grid.n();
        if block.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: block.len() });
        }
        let mut f = Self::zeros(grid);
        for pt in 0..grid.num_points() {
            f.data[pt * n * n..(pt + 1) * n * n].copy_from_slice(block);
        }
        Ok(f)
    }

    #[inline]
    pub fn block(&self, pt: usize) -> &[Complex64] {
        &self.data[pt * self.n * self.n..(pt + 1) * self.n * self.n]
    }

    #[inline]
    pub fn block_mut(&mut self, pt: usize) -> &mut [Complex64] {
        &mut self.data[pt * self.n * self.n..(pt + 1) * self.n * self.n]
    }

    #[inline]
    pub fn at(&self, pt: usize, i: usize, j: usize) -> Complex64 {
        self.data[pt * self.n * self.n + i * self.n + j]
    }

    /// Kill round-off skew: every block <- (block + block^H)/2.
    pub fn hermitize(&mut self) {
        let n = self.n;
        self.data.par_chunks_mut(n * n).for_each(|b| linalg::hermitize(n, b));
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest deviation from Hermitian symmetry over the grid.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.n;
        self.data
            .par_chunks(n * n)
            .map(|b| {
                let mut d = 0.0f64;
                for i in 0..n {
                    d = d.max(b[i * n + i].im.abs());
                    for j in (i + 1)..n {
                        d = d.max((b[i * n + j] - b[j * n + i].conj()).norm());
                    }
                }
                d
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Hermitian metric with cached inverse, validated positive definite.
#[derive(Debug, Clone)]
pub struct MetricField {
    g: MatrixField,
    g_inv: MatrixField,
    /// true when the metric is exactly the flat identity everywhere
    flat: bool,
}

impl MetricField {
    pub fn flat(grid: &SpectralGrid) -> Self {
        Self {
            g: MatrixField::identity(grid),
            g_inv: MatrixField::identity(grid),
            flat: true,
        }
    }

    /// Conformally flat metric g = e^phi delta for a real field phi.
    pub fn conformal(grid: &SpectralGrid, phi: &ScalarField) -> Result<Self> {
        let n = grid.n();
        let mut g = MatrixField::zeros(grid);
        for pt in 0..grid.num_points() {
            let w = phi.data[pt].re.exp();
            for i in 0..n {
                g.data[pt * n * n + i * n + i] = Complex64::new(w, 0.0);
            }
        }
        Self::from_matrix(g)
    }

    pub fn from_matrix(g: MatrixField) -> Result<Self> {
        let n = g.n;
        let npts = g.grid.num_points();
        let mut g_inv = MatrixField::zeros(&g.grid);
        for pt in 0..npts {
            let block = g.block(pt);
            let mut eigs = [0.0; linalg::MAX_N];
            linalg::eigh_values(n, block, &mut eigs);
            if eigs[n - 1] <= 1e-10 {
                return Err(Error::MetricDegenerate { point: pt });
            }
            linalg::invert(n, block, g_inv.block_mut(pt))
                .map_err(|_| Error::MetricDegenerate { point: pt })?;
        }
        // g_inv * g = id to 1e-12
        let mut prod = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
        for pt in 0..npts {
            linalg::matmul(n, g_inv.block(pt), g.block(pt), &mut prod);
            for i in 0..n {
                for j in 0..n {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    if (prod[i * n + j] - expect).norm() > 1e-12 {
                        return Err(Error::MetricDegenerate { point: pt });
                    }
                }
            }
        }
        Ok(Self { g, g_inv, flat: false })
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.g.grid
    }

    pub fn n(&self) -> usize {
        self.g.n
    }

    pub fn g(&self) -> &MatrixField {
        &self.g
    }

    pub fn g_inv(&self) -> &MatrixField {
        &self.g_inv
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    /// Raised-index component g^{i jbar}. With G the matrix {g_{i jbar}},
    /// the defining relation g^{i jbar} g_{k jbar} = delta_{ik} gives
    /// g^{i jbar} = (G^{-1})_{ji}.
    #[inline]
    pub fn up(&self, pt: usize, i: usize, j: usize) -> Complex64 {
        self.g_inv.at(pt, j, i)
    }
}

/// Per-point eigenvalue tuples, sorted descending.
#[derive(Debug, Clone)]
pub struct LambdaField {
    pub grid: SpectralGrid,
    pub n: usize,
    pub data: Vec<f64>,
}

impl LambdaField {
    #[inline]
    pub fn at(&self, pt: usize) -> &[f64] {
        &self.data[pt * self.n..(pt + 1) * self.n]
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Eigenvalues of a Hermitian (1,1)-form with respect to the metric,
/// computed pointwise through the Cholesky whitening g = R^H R,
/// M = R^{-H} X R^{-1}.
pub fn eigenvalues_wrt_metric(x: &MatrixField, metric: &MetricField) -> Result<LambdaField> {
    let n = x.n;
    if metric.n() != n || metric.grid() != &x.grid {
        return Err(Error::DimensionMismatch { expected: metric.n(), got: n });
    }
    let npts = x.grid.num_points();
    let mut data = vec![0.0; npts * n];
    let flat = metric.is_flat();
    let g = &metric.g;
    data.par_chunks_mut(n).enumerate().try_for_each(|(pt, out)| -> Result<()> {
        let block = x.block(pt);
        let mut eigs = [0.0; linalg::MAX_N];
        if flat {
            linalg::eigh_values(n, block, &mut eigs);
        } else {
            let mut r = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
            linalg::cholesky_upper(n, g.block(pt), &mut r)
                .map_err(|_| Error::MetricDegenerate { point: pt })?;
            let mut m = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
            linalg::whiten(n, &r, block, &mut m);
            linalg::hermitize(n, &mut m[..n * n]);
            linalg::eigh_values(n, &m, &mut eigs);
        }
        out.copy_from_slice(&eigs[..n]);
        Ok(())
    })?;
    Ok(LambdaField { grid: x.grid.clone(), n, data })
}

// ---------------------------------------------------------------------------
// field serialization: flat binary, documented layout
//
//   magic "HLF1" | u32 n | u32 m | u32 ncomp | u64 npts
//   then npts * ncomp complex entries as f64 LE pairs (re, im),
//   points row-major over axes [x_1, y_1, ...], matrix entries row-major.
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 4] = b"HLF1";

fn write_header<W: Write>(w: &mut W, n: usize, m: usize, ncomp: usize, npts: usize) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(m as u32).to_le_bytes())?;
    w.write_all(&(ncomp as u32).to_le_bytes())?;
    w.write_all(&(npts as u64).to_le_bytes())?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R) -> Result<(usize, usize, usize, usize)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::InvalidSpec("bad field file magic".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let m = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let ncomp = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let npts = u64::from_le_bytes(b8) as usize;
    Ok((n, m, ncomp, npts))
}

fn write_complex_data<W: Write>(w: &mut W, data: &[Complex64]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 16);
    for v in data {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_complex_data<R: Read>(r: &mut R, count: usize) -> Result<Vec<Complex64>> {
    let mut buf = vec![0u8; count * 16];
    r.read_exact(&mut buf)?;
    let mut out = Vec::with_capacity(count);
    for chunk in buf.chunks_exact(16) {
        let re = f64::from_le_bytes(chunk[..8].try_into().unwrap());
        let im = f64::from_le_bytes(chunk[8..].try_into().unwrap());
        out.push(Complex64::new(re, im));
    }
    Ok(out)
}

impl ScalarField {
    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        write_header(w, self.grid.n(), self.grid.m(), 1, self.grid.num_points())?;
        write_complex_data(w, &self.data)
    }

    pub fn load<R: Read>(r: &mut R) -> Result<Self> {
        let (n, m, ncomp, npts) = read_header(r)?;
        if ncomp != 1 {
            return Err(Error::InvalidSpec(format!("expected scalar field, ncomp = {ncomp}")));
        }
        let grid = SpectralGrid::new(n, m)?;
        if grid.num_points() != npts {
            return Err(Error::InvalidSpec("field header point count mismatch".into()));
        }
        let data = read_complex_data(r, npts)?;
        Ok(Self { grid, data })
    }

    /// CSV dump: one row per point with grid indices and re/im.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let axes = self.grid.num_axes();
        for a in 0..axes {
            write!(w, "i{a},")?;
        }
        writeln!(w, "re,im")?;
        let m = self.grid.m();
        let mut idxs = vec![0usize; axes];
        for (pt, v) in self.data.iter().enumerate() {
            let mut rest = pt;
            for a in (0..axes).rev() {
                idxs[a] = rest % m;
                rest /= m;
            }
            for idx in &idxs {
                write!(w, "{idx},")?;
            }
            writeln!(w, "{:.17e},{:.17e}", v.re, v.im)?;
        }
        Ok(())
    }
}

impl MatrixField {
    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        write_header(w, self.grid.n(), self.grid.m(), self.n * self.n, self.grid.num_points())?;
        write_complex_data(w, &self.data)
    }

    pub fn load<R: Read>(r: &mut R) -> Result<Self> {
        let (n, m, ncomp, npts) = read_header(r)?;
        if ncomp != n * n {
            return Err(Error::InvalidSpec(format!("expected matrix field, ncomp = {ncomp}")));
        }
        let grid = SpectralGrid::new(n, m)?;
        if grid.num_points() != npts {
            return Err(Error::InvalidSpec("field header point count mismatch".into()));
        }
        let data = read_complex_data(r, npts * ncomp)?;
        Ok(Self { grid, n, data })
    }
}
