//! Computational geometry of the level sets Gamma^sigma and the tangent
//! cone at infinity: boundary sampling, membership in C_sigma^+ and its
//! enlargement, rank estimation, dichotomy witnesses and the h_mu(r)
//! profile.
//!
//! All sampled points are raw (unsorted) tuples: the operator kernels are
//! symmetric so nothing requires the descending convention, and the margin
//! sum f_i (mu_i - lambda_i) pairs coordinates against a fixed mu.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::symfun::{
    cone_margin_raw, eval_jet_unchecked, sup_along_diagonal, LambdaVec, OperatorSpec,
};

/// Default shell ladder.
pub const DEFAULT_RADII: [f64; 3] = [10.0, 100.0, 1000.0];
/// Default direction budget per shell, per dimension.
pub const DIRECTIONS_PER_DIM: usize = 512;
/// Default zero threshold for rank clustering.
pub const DEFAULT_ZERO_THRESHOLD: f64 = 1e-3;

const BISECT_MAX_ITER: usize = 200;

/// Validated handle on the superlevel set Gamma^sigma = {f > sigma}.
#[derive(Debug, Clone)]
pub struct LevelSetHandle {
    op: OperatorSpec,
    sigma: f64,
    anchor: Vec<f64>,
}

/// A point on the boundary {f = sigma} with its outward unit normal
/// Df/|Df|. `degenerate` marks ray probes that exited the domain cone
/// before reaching the level sigma.
#[derive(Debug, Clone)]
pub struct BoundaryPoint {
    pub lambda: Vec<f64>,
    pub normal: Vec<f64>,
    pub degenerate: bool,
}

impl BoundaryPoint {
    /// Sorted-descending view of the boundary point.
    pub fn lambda_sorted(&self) -> LambdaVec {
        LambdaVec::new(self.lambda.clone()).expect("boundary point entries are finite")
    }
}

/// One boundary sample with its jet data, cached for reuse across
/// membership queries.
#[derive(Debug, Clone)]
pub struct AtlasSample {
    pub lambda: Vec<f64>,
    pub normal: Vec<f64>,
    pub grad: Vec<f64>,
    pub grad_sum: f64,
    pub min_grad: f64,
}

#[derive(Debug, Clone)]
pub struct ShellSamples {
    pub radius: f64,
    pub samples: Vec<AtlasSample>,
    /// arcs that hit the cone boundary instead of the level set
    pub degenerate_hits: usize,
}

/// Boundary samples organized by radius shell |lambda| = r.
#[derive(Debug, Clone)]
pub struct BoundaryAtlas {
    pub shells: Vec<ShellSamples>,
}

impl BoundaryAtlas {
    pub fn total_samples(&self) -> usize {
        self.shells.iter().map(|s| s.samples.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CplusVerdict {
    /// the linear escape margin holds beyond `radius` with the reported epsilon.
    In { epsilon: f64, radius: f64 },
    Out { witness: Vec<f64> },
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CtildeVerdict {
    In,
    Out,
    EqualsRn,
}

/// An asymptotic supporting plane {x : nu . x > offset} with a degenerate
/// (boundary-of-Gamma_n) normal.
#[derive(Debug, Clone, Serialize)]
pub struct SupportingPlane {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalCluster {
    /// true where the normal component is above the zero threshold
    pub nonzero_pattern: Vec<bool>,
    pub representative: Vec<f64>,
    pub count: usize,
    /// min over cluster samples of nu . lambda at the outer shell
    pub offset: f64,
    /// flagged (zero) components shrank from the previous shell
    pub decay_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankEstimate {
    pub rank: usize,
    pub clusters: Vec<NormalCluster>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DichotomyWitness {
    pub delta: f64,
    pub epsilon: f64,
    pub radius_max: f64,
    pub samples_checked: usize,
    pub violations: usize,
}

impl LevelSetHandle {
    /// Validates sup_{boundary} f < sigma < sup f by ray probing, and that
    /// the anchor lies strictly inside Gamma^sigma.
    pub fn new(op: OperatorSpec, sigma: f64, anchor: &[f64]) -> Result<Self> {
        if anchor.len() != op.n {
            return Err(Error::DimensionMismatch { expected: op.n, got: anchor.len() });
        }
        let tol = 1e-10 * (1.0 + sigma.abs());
        let anchor_margin = cone_margin_raw(op.domain, anchor);
        if anchor_margin <= 0.0 {
            return Err(Error::InvalidSpec("anchor is not inside the domain cone".into()));
        }
        let f_anchor = eval_jet_unchecked(&op, anchor)?.value;
        if !(f_anchor > sigma + tol) {
            return Err(Error::InvalidSpec(format!(
                "anchor is not inside the level set: f(anchor) = {f_anchor}, sigma = {sigma}"
            )));
        }
        let sup = sup_along_diagonal(&op, 1e7)?;
        if !(sup > sigma) {
            return Err(Error::InvalidSpec(format!(
                "sigma = {sigma} is not below sup f = {sup}"
            )));
        }
        let handle = Self { op, sigma, anchor: anchor.to_vec() };
        // boundary-side probe: rays toward the cone boundary must cross the
        // level before leaving the cone
        let n = handle.op.n;
        let mut rng = ChaCha12Rng::seed_from_u64(0x1eb1);
        for probe in 0..4 * n {
            let mut d = vec![0.0; n];
            if probe < n {
                d[probe] = -1.0;
            } else {
                for x in d.iter_mut() {
                    *x = rng.gen_range(-1.0..1.0);
                }
                let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-9 {
                    continue;
                }
                for x in d.iter_mut() {
                    *x /= norm;
                }
            }
            match handle.boundary_point(&d) {
                Ok(bp) if bp.degenerate => {
                    return Err(Error::InvalidSpec(
                        "sigma is at or below the boundary supremum of f".into(),
                    ))
                }
                Ok(_) | Err(Error::RayStaysInside) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(handle)
    }

    pub fn op(&self) -> &OperatorSpec {
        &self.op
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    fn f_at(&self, v: &[f64]) -> f64 {
        match eval_jet_unchecked(&self.op, v) {
            Ok(jet) if jet.value.is_finite() => jet.value,
            _ => f64::NEG_INFINITY,
        }
    }

    /// First crossing of {f = sigma} along the ray anchor + t * direction,
    /// located by doubling plus bisection to |f - sigma| <= 1e-11 (1+|sigma|).
    pub fn boundary_point(&self, direction: &[f64]) -> Result<BoundaryPoint> {
        let n = self.op.n;
        if direction.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: direction.len() });
        }
        let anchor_norm = self.anchor.iter().map(|x| x * x).sum::<f64>().sqrt();
        let t_max = 1e8 * (1.0 + anchor_norm);
        let point = |t: f64| -> Vec<f64> {
            self.anchor.iter().zip(direction).map(|(a, d)| a + t * d).collect()
        };
        let cone_tol = 1e-13 * (1.0 + anchor_norm);
        let in_cone = |v: &[f64]| cone_margin_raw(self.op.domain, v) > cone_tol;

        let mut t_lo = 0.0f64;
        let mut t = 1.0f64;
        loop {
            let p = point(t);
            if !in_cone(&p) {
                // ray leaves the cone inside (t_lo, t): find the cone exit
                let mut a = t_lo;
                let mut b = t;
                for _ in 0..BISECT_MAX_ITER {
                    let m = 0.5 * (a + b);
                    if in_cone(&point(m)) {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let exit_p = point(a);
                let f_exit = self.f_at(&exit_p);
                if f_exit > self.sigma {
                    // exits the cone before reaching level sigma
                    let jet = eval_jet_unchecked(&self.op, &exit_p)?;
                    return Ok(BoundaryPoint {
                        lambda: exit_p,
                        normal: unit(&jet.grad),
                        degenerate: true,
                    });
                }
                return self.bisect_level(t_lo, a, direction);
            }
            let f = self.f_at(&p);
            if f <= self.sigma {
                return self.bisect_level(t_lo, t, direction);
            }
            t_lo = t;
            t *= 2.0;
            if t > t_max {
                return Err(Error::RayStaysInside);
            }
        }
    }

    fn bisect_level(&self, mut a: f64, mut b: f64, direction: &[f64]) -> Result<BoundaryPoint> {
        let ftol = 1e-11 * (1.0 + self.sigma.abs());
        let point = |t: f64| -> Vec<f64> {
            self.anchor.iter().zip(direction).map(|(x, d)| x + t * d).collect()
        };
        for _ in 0..BISECT_MAX_ITER {
            let m = 0.5 * (a + b);
            let fm = self.f_at(&point(m));
            if (fm - self.sigma).abs() <= ftol {
                a = m;
                break;
            }
            if fm > self.sigma {
                a = m;
            } else {
                b = m;
            }
        }
        let p = point(a);
        let jet = eval_jet_unchecked(&self.op, &p)?;
        Ok(BoundaryPoint { lambda: p, normal: unit(&jet.grad), degenerate: false })
    }

    /// Boundary samples lying exactly on the sphere |lambda| = radius,
    /// found by walking great-circle arcs from the diagonal direction
    /// toward quasi-uniform targets.
    pub fn sample_shell(&self, radius: f64, directions: usize, seed: u64) -> Result<ShellSamples> {
        let n = self.op.n;
        let s_diag: Vec<f64> = vec![1.0 / (n as f64).sqrt(); n];
        let top: Vec<f64> = s_diag.iter().map(|x| radius * x).collect();
        if cone_margin_raw(self.op.domain, &top) <= 0.0 || self.f_at(&top) <= self.sigma {
            return Err(Error::InvalidSpec(format!(
                "diagonal point at radius {radius} is not inside the level set"
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ radius.to_bits());
        let mut samples = Vec::new();
        let mut degenerate_hits = 0usize;
        for j in 0..directions {
            let w = if n == 2 {
                let theta = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / directions as f64;
                vec![theta.cos(), theta.sin()]
            } else {
                let mut v: Vec<f64> = (0..n).map(|_| {
                    // Box-Muller from uniforms keeps the dependency surface small
                    let u1: f64 = rng.gen_range(1e-12..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                }).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-9 {
                    continue;
                }
                for x in v.iter_mut() {
                    *x /= norm;
                }
                v
            };
            // arc s(theta) = cos(theta) s_diag + sin(theta) w_perp
            let dot: f64 = w.iter().zip(&s_diag).map(|(a, b)| a * b).sum();
            let mut wp: Vec<f64> = w.iter().zip(&s_diag).map(|(a, b)| a - dot * b).collect();
            let wnorm = wp.iter().map(|x| x * x).sum::<f64>().sqrt();
            if wnorm < 1e-9 {
                continue;
            }
            for x in wp.iter_mut() {
                *x /= wnorm;
            }
            let arc_point = |theta: f64| -> Vec<f64> {
                let (st, ct) = theta.sin_cos();
                s_diag
                    .iter()
                    .zip(&wp)
                    .map(|(a, b)| radius * (ct * a + st * b))
                    .collect()
            };
            let inside = |v: &[f64]| -> bool {
                cone_margin_raw(self.op.domain, v) > 0.0 && self.f_at(v) > self.sigma
            };
            // walk until the arc leaves the level set
            let mut th_lo = 0.0f64;
            let mut th_hi = None;
            let step = std::f64::consts::PI / 64.0;
            let mut th = step;
            while th <= std::f64::consts::PI + 1e-12 {
                if !inside(&arc_point(th)) {
                    th_hi = Some(th);
                    break;
                }
                th_lo = th;
                th += step;
            }
            let Some(mut hi) = th_hi else { continue };
            let mut lo = th_lo;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if inside(&arc_point(mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let p = arc_point(lo);
            let jet = eval_jet_unchecked(&self.op, &p)?;
            let grad_norm = jet.grad.iter().map(|x| x * x).sum::<f64>().sqrt();
            // the level value is conditioned by |grad f| |lambda|: near the
            // asymptotic escapes the crossing is positionally exact but f
            // itself is only resolvable to eps * |grad f| * r
            let ftol = 1e-6 * (1.0 + self.sigma.abs()) + 1e-11 * grad_norm * (1.0 + radius);
            if !jet.value.is_finite() || (jet.value - self.sigma).abs() > ftol {
                // landed on the cone boundary rather than the level set
                degenerate_hits += 1;
                continue;
            }
            let grad_sum: f64 = jet.grad.iter().sum();
            let min_grad = jet.grad.iter().cloned().fold(f64::INFINITY, f64::min);
            samples.push(AtlasSample {
                normal: unit(&jet.grad),
                grad: jet.grad,
                grad_sum,
                min_grad,
                lambda: p,
            });
        }
        Ok(ShellSamples { radius, samples, degenerate_hits })
    }

    pub fn atlas(&self, radii: &[f64], dirs_per_shell: usize, seed: u64) -> Result<BoundaryAtlas> {
        let mut shells = Vec::with_capacity(radii.len());
        for &r in radii {
            shells.push(self.sample_shell(r, dirs_per_shell, seed)?);
        }
        Ok(BoundaryAtlas { shells })
    }

    pub fn default_atlas(&self, seed: u64) -> Result<BoundaryAtlas> {
        self.atlas(&DEFAULT_RADII, DIRECTIONS_PER_DIM * self.op.n, seed)
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

/// Escape margin at a sample, normalized so that a verdict margin of
/// eps certifies f_i (mu_i - lambda_i) >= eps (sum f_i) + eps.
fn cplus_margin(sample: &AtlasSample, mu: &[f64]) -> f64 {
    let num: f64 = sample
        .grad
        .iter()
        .zip(mu.iter().zip(&sample.lambda))
        .map(|(g, (m, l))| g * (m - l))
        .sum();
    num / (sample.grad_sum + 1.0)
}

/// Second dichotomy branch margin: sum f_i (mu_i - lambda_i) / sum f_i.
fn ctilde_margin(sample: &AtlasSample, mu: &[f64]) -> f64 {
    let num: f64 = sample
        .grad
        .iter()
        .zip(mu.iter().zip(&sample.lambda))
        .map(|(g, (m, l))| g * (m - l))
        .sum();
    num / sample.grad_sum
}

pub fn membership_cplus(ls: &LevelSetHandle, mu: &[f64], radii: &[f64]) -> Result<CplusVerdict> {
    let atlas = ls.atlas(radii, DIRECTIONS_PER_DIM * ls.op.n, 0)?;
    Ok(membership_cplus_with_atlas(&atlas, mu))
}

pub fn membership_cplus_with_atlas(atlas: &BoundaryAtlas, mu: &[f64]) -> CplusVerdict {
    let mu_norm = mu.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-9 * (1.0 + mu_norm);
    // try the smallest cutoff radius first
    for start in 0..atlas.shells.len() {
        let mut min_margin = f64::INFINITY;
        for shell in &atlas.shells[start..] {
            for s in &shell.samples {
                min_margin = min_margin.min(cplus_margin(s, mu));
            }
        }
        if min_margin > tol && min_margin.is_finite() {
            return CplusVerdict::In {
                epsilon: 0.5 * min_margin,
                radius: atlas.shells[start].radius,
            };
        }
    }
    // out requires a persistent violation: negative minima on every shell
    // and a witness on the outermost
    let persists = atlas.shells.iter().all(|shell| {
        shell
            .samples
            .iter()
            .map(|s| cplus_margin(s, mu))
            .fold(f64::INFINITY, f64::min)
            <= -tol
    });
    if persists {
        if let Some(shell) = atlas.shells.last() {
            if let Some(worst) = shell
                .samples
                .iter()
                .min_by(|a, b| cplus_margin(a, mu).partial_cmp(&cplus_margin(b, mu)).unwrap())
            {
                return CplusVerdict::Out { witness: worst.lambda.clone() };
            }
        }
    }
    CplusVerdict::Inconclusive
}

/// Rank of the tangent cone from the zero patterns of asymptotic normals.
pub fn estimate_rank(
    ls: &LevelSetHandle,
    escape_directions: usize,
    zero_threshold: f64,
) -> Result<RankEstimate> {
    let atlas = ls.atlas(&DEFAULT_RADII, escape_directions, 0)?;
    Ok(estimate_rank_with_atlas(&atlas, zero_threshold, ls.op.n))
}

pub fn estimate_rank_with_atlas(
    atlas: &BoundaryAtlas,
    zero_threshold: f64,
    n: usize,
) -> RankEstimate {
    let outer = atlas.shells.last().expect("atlas has at least one shell");
    let prev = if atlas.shells.len() >= 2 {
        Some(&atlas.shells[atlas.shells.len() - 2])
    } else {
        None
    };
    let mut clusters: Vec<NormalCluster> = Vec::new();
    for s in &outer.samples {
        let pattern: Vec<bool> = s.normal.iter().map(|x| x.abs() >= zero_threshold).collect();
        match clusters.iter_mut().find(|c| c.nonzero_pattern == pattern) {
            Some(c) => {
                c.count += 1;
                for (r, x) in c.representative.iter_mut().zip(&s.normal) {
                    *r += x;
                }
                let off: f64 = s.normal.iter().zip(&s.lambda).map(|(a, b)| a * b).sum();
                if off < c.offset {
                    c.offset = off;
                }
            }
            None => {
                clusters.push(NormalCluster {
                    nonzero_pattern: pattern,
                    representative: s.normal.clone(),
                    count: 1,
                    offset: s.normal.iter().zip(&s.lambda).map(|(a, b)| a * b).sum(),
                    decay_ok: true,
                });
            }
        }
    }
    for c in clusters.iter_mut() {
        let norm = c.representative.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in c.representative.iter_mut() {
            *x /= norm;
        }
        // zero components of an asymptotic normal must shrink with radius
        if c.nonzero_pattern.iter().any(|&p| !p) {
            if let Some(prev_shell) = prev {
                let zmax = |shell: &ShellSamples| -> f64 {
                    shell
                        .samples
                        .iter()
                        .filter(|s| {
                            s.normal
                                .iter()
                                .map(|x| x.abs() >= zero_threshold)
                                .collect::<Vec<bool>>()
                                == c.nonzero_pattern
                        })
                        .map(|s| {
                            s.normal
                                .iter()
                                .zip(&c.nonzero_pattern)
                                .filter(|(_, &p)| !p)
                                .map(|(x, _)| x.abs())
                                .fold(0.0f64, f64::max)
                        })
                        .fold(0.0f64, f64::max)
                };
                let prev_max = zmax(prev_shell);
                let outer_max = zmax(outer);
                if prev_max > 0.0 {
                    c.decay_ok = outer_max < prev_max;
                }
            }
        }
    }
    let rank = clusters
        .iter()
        .map(|c| c.nonzero_pattern.iter().filter(|&&p| p).count())
        .min()
        .unwrap_or(n);
    RankEstimate { rank, clusters }
}

/// Asymptotic supporting planes with a zero normal component; empty means
/// the enlarged cone is all of R^n.
pub fn degenerate_planes(rank: &RankEstimate) -> Vec<SupportingPlane> {
    rank.clusters
        .iter()
        .filter(|c| c.nonzero_pattern.iter().any(|&p| !p))
        .map(|c| {
            let mut normal = c.representative.clone();
            for (x, &p) in normal.iter_mut().zip(&c.nonzero_pattern) {
                if !p {
                    *x = 0.0;
                }
            }
            let norm = normal.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in normal.iter_mut() {
                *x /= norm;
            }
            SupportingPlane { normal, offset: c.offset }
        })
        .collect()
}

pub fn membership_ctilde(ls: &LevelSetHandle, mu: &[f64]) -> Result<CtildeVerdict> {
    let rank = estimate_rank(ls, DIRECTIONS_PER_DIM * ls.op.n, DEFAULT_ZERO_THRESHOLD)?;
    Ok(membership_ctilde_with_planes(&degenerate_planes(&rank), mu))
}

pub fn membership_ctilde_with_planes(planes: &[SupportingPlane], mu: &[f64]) -> CtildeVerdict {
    if planes.is_empty() {
        return CtildeVerdict::EqualsRn;
    }
    let mu_norm = mu.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-6 * (1.0 + mu_norm);
    for plane in planes {
        let v: f64 = plane.normal.iter().zip(mu).map(|(a, b)| a * b).sum();
        if v <= plane.offset - tol {
            return CtildeVerdict::Out;
        }
    }
    CtildeVerdict::In
}

/// Margins table behind the boundary dichotomy (every boundary point
/// either has comparable gradient entries or a positive mu-margin). Every sample
/// is assigned its larger branch; that assignment maximizes min(delta,
/// epsilon), whose optimum is min over samples of max(m1, m2). The
/// reported constants are half that joint optimum for safety (the theorem
/// asserts existence, not values).
pub fn dichotomy_witness(
    ls: &LevelSetHandle,
    mu: &[f64],
    shells: &[f64],
) -> Result<DichotomyWitness> {
    let rank = estimate_rank(ls, DIRECTIONS_PER_DIM * ls.op.n, DEFAULT_ZERO_THRESHOLD)?;
    let planes = degenerate_planes(&rank);
    if membership_ctilde_with_planes(&planes, mu) == CtildeVerdict::Out {
        return Err(Error::HypothesisFailed(
            "mu is outside the enlarged tangent cone".into(),
        ));
    }
    let atlas = ls.atlas(shells, DIRECTIONS_PER_DIM * ls.op.n, 0)?;
    Ok(dichotomy_with_atlas(&atlas, mu, ls.op.n))
}

pub fn dichotomy_with_atlas(atlas: &BoundaryAtlas, mu: &[f64], n: usize) -> DichotomyWitness {
    let mut joint = f64::INFINITY;
    let mut violations = 0usize;
    let mut samples_checked = 0usize;
    for shell in &atlas.shells {
        for s in &shell.samples {
            samples_checked += 1;
            let m1 = s.min_grad / s.grad_sum;
            let m2 = ctilde_margin(s, mu);
            let larger = m1.max(m2);
            if larger <= 0.0 {
                violations += 1;
                continue;
            }
            joint = joint.min(larger);
        }
    }
    let value = if joint.is_finite() { 0.5 * joint } else { 0.5 / n as f64 };
    DichotomyWitness {
        delta: value,
        epsilon: value,
        radius_max: atlas.shells.last().map(|s| s.radius).unwrap_or(0.0),
        samples_checked,
        violations,
    }
}

/// One row of the h_mu profile.
#[derive(Debug, Clone, Serialize)]
pub struct HProfileRow {
    pub radius: f64,
    pub h_mu: f64,
    pub branch_samples: usize,
}

/// Tabulates h_mu(r) = min over second-branch samples on the shell of
/// sup over the segment [t_lambda, 1] of f(t lambda + (1-t) mu) - sigma.
/// The paper's open question (is it nondecreasing?) is reported, never
/// asserted.
pub fn h_mu_profile(ls: &LevelSetHandle, mu: &[f64], radii: &[f64]) -> Result<Vec<HProfileRow>> {
    let rank = estimate_rank(ls, DIRECTIONS_PER_DIM * ls.op.n, DEFAULT_ZERO_THRESHOLD)?;
    let planes = degenerate_planes(&rank);
    if membership_ctilde_with_planes(&planes, mu) == CtildeVerdict::Out {
        return Err(Error::HypothesisFailed(
            "mu is outside the enlarged tangent cone".into(),
        ));
    }
    let atlas = ls.atlas(radii, DIRECTIONS_PER_DIM * ls.op.n, 0)?;
    let witness = dichotomy_with_atlas(&atlas, mu, ls.op.n);
    let eps = witness.epsilon.min(1e6);
    let mut rows = Vec::with_capacity(atlas.shells.len());
    for shell in &atlas.shells {
        let mut h = f64::INFINITY;
        let mut used = 0usize;
        for s in &shell.samples {
            if ctilde_margin(s, mu) < eps {
                continue;
            }
            used += 1;
            let sup = segment_sup(ls, mu, &s.lambda);
            h = h.min(sup - ls.sigma);
        }
        rows.push(HProfileRow {
            radius: shell.radius,
            h_mu: if used > 0 { h } else { f64::NAN },
            branch_samples: used,
        });
    }
    Ok(rows)
}

/// sup over t in [t_lambda, 1] of f on the segment t lambda + (1 - t) mu,
/// with t_lambda the first t at which the segment enters the closed level
/// set. Golden-section search; f is concave along segments.
fn segment_sup(ls: &LevelSetHandle, mu: &[f64], lambda: &[f64]) -> f64 {
    let seg = |t: f64| -> Vec<f64> {
        lambda.iter().zip(mu).map(|(l, m)| t * l + (1.0 - t) * m).collect()
    };
    let ftol = 1e-11 * (1.0 + ls.sigma.abs());
    let in_closure = |t: f64| -> bool {
        let p = seg(t);
        cone_margin_raw(ls.op.domain, &p) > 0.0 && ls.f_at(&p) >= ls.sigma - ftol
    };
    let mut t_lambda = 0.0;
    if !in_closure(0.0) {
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if in_closure(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        t_lambda = hi;
    }
    // golden-section maximization of t -> f(seg(t))
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let eval = |t: f64| -> f64 { ls.f_at(&seg(t)) };
    let mut a = t_lambda;
    let mut b = 1.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    for _ in 0..120 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d);
        }
    }
    fc.max(fd).max(eval(t_lambda)).max(eval(1.0))
}

/// CSV of boundary samples: radius, lambda, normal and both branch margins.
pub fn write_boundary_csv<W: Write>(
    w: &mut W,
    atlas: &BoundaryAtlas,
    mu: &[f64],
    n: usize,
) -> std::io::Result<()> {
    write!(w, "radius")?;
    for i in 1..=n {
        write!(w, ",lambda_{i}")?;
    }
    for i in 1..=n {
        write!(w, ",nu_{i}")?;
    }
    writeln!(w, ",margin_delta,margin_epsilon")?;
    for shell in &atlas.shells {
        for s in &shell.samples {
            write!(w, "{}", shell.radius)?;
            for x in &s.lambda {
                write!(w, ",{x:.17e}")?;
            }
            for x in &s.normal {
                write!(w, ",{x:.17e}")?;
            }
            writeln!(w, ",{:.17e},{:.17e}", s.min_grad / s.grad_sum, ctilde_margin(s, mu))?;
        }
    }
    Ok(())
}

pub fn write_profile_csv<W: Write>(w: &mut W, rows: &[HProfileRow]) -> std::io::Result<()> {
    writeln!(w, "r,h_mu,branch_samples")?;
    for row in rows {
        writeln!(w, "{},{:.17e},{}", row.radius, row.h_mu, row.branch_samples)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symfun::{OperatorFamily, OperatorSpec};

    fn logrho1_n2(sigma: f64) -> LevelSetHandle {
        let op = OperatorSpec::new(OperatorFamily::LogRhoK { k: 1 }, 2).unwrap();
        LevelSetHandle::new(op, sigma, &[2.0, 2.0]).unwrap()
    }

    #[test]
    fn boundary_point_on_hyperbola() {
        // level set lambda_1 lambda_2 = 1; ray from (2,2) along -e1 crosses
        // at (0.5, 2)
        let ls = logrho1_n2(0.0);
        let bp = ls.boundary_point(&[-1.0, 0.0]).unwrap();
        assert!(!bp.degenerate);
        assert!((bp.lambda[0] - 0.5).abs() < 1e-9, "{:?}", bp.lambda);
        assert!((bp.lambda[1] - 2.0).abs() < 1e-12);
        // normal has all entries > 0
        assert!(bp.normal.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn boundary_point_linear_level_set() {
        let op = OperatorSpec::new(OperatorFamily::SigmaKRoot { k: 1 }, 2).unwrap();
        let ls = LevelSetHandle::new(op, 1.0, &[1.0, 1.0]).unwrap();
        let d = [-1.0 / 2.0f64.sqrt(), -1.0 / 2.0f64.sqrt()];
        let bp = ls.boundary_point(&d).unwrap();
        let sum: f64 = bp.lambda.iter().sum();
        assert!((sum - 1.0).abs() < 1e-10);
    }

    #[test]
    fn diagonal_ray_stays_inside() {
        let ls = logrho1_n2(0.0);
        let d = [1.0 / 2.0f64.sqrt(); 2];
        assert!(matches!(ls.boundary_point(&d), Err(Error::RayStaysInside)));
    }

    #[test]
    fn shell_samples_sit_on_level_and_sphere() {
        let ls = logrho1_n2(0.0);
        let shell = ls.sample_shell(10.0, 64, 0).unwrap();
        assert!(shell.samples.len() >= 2);
        for s in &shell.samples {
            let r = s.lambda.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((r - 10.0).abs() < 1e-8);
            let prod: f64 = s.lambda.iter().product();
            assert!((prod - 1.0).abs() < 1e-4, "prod {prod}");
        }
    }

    #[test]
    fn cplus_membership_hyperbola() {
        let ls = logrho1_n2(0.0);
        let radii = [10.0, 100.0, 1000.0];
        assert!(matches!(
            membership_cplus(&ls, &[2.0, 2.0], &radii).unwrap(),
            CplusVerdict::In { .. }
        ));
        assert!(matches!(
            membership_cplus(&ls, &[2.0, -0.1], &radii).unwrap(),
            CplusVerdict::Out { .. }
        ));
    }

    #[test]
    fn ctilde_hyperbola_asymptotes() {
        let ls = logrho1_n2(0.0);
        assert_eq!(membership_ctilde(&ls, &[1.0, 1.0]).unwrap(), CtildeVerdict::In);
        assert_eq!(membership_ctilde(&ls, &[1.0, -1.0]).unwrap(), CtildeVerdict::Out);
    }

    #[test]
    fn ctilde_halfspace_is_rn() {
        let op = OperatorSpec::new(OperatorFamily::SigmaKRoot { k: 1 }, 2).unwrap();
        let ls = LevelSetHandle::new(op, 1.0, &[1.0, 1.0]).unwrap();
        assert_eq!(membership_ctilde(&ls, &[-5.0, -5.0]).unwrap(), CtildeVerdict::EqualsRn);
    }

    #[test]
    fn rank_matches_analytic_values_n3() {
        // sigma_k^{1/k}: n - k + 1; log rho_k: k
        for k in 1..=3usize {
            let op = OperatorSpec::new(OperatorFamily::SigmaKRoot { k }, 3).unwrap();
            let anchor = [3.0, 3.0, 3.0];
            let ls = LevelSetHandle::new(op, 1.0, &anchor).unwrap();
            let est = estimate_rank(&ls, 512, DEFAULT_ZERO_THRESHOLD).unwrap();
            assert_eq!(est.rank, 3 - k + 1, "sigma root k = {k}");
        }
        for k in 1..=3usize {
            let op = OperatorSpec::new(OperatorFamily::LogRhoK { k }, 3).unwrap();
            let anchor = [2.0, 2.0, 2.0];
            let ls = LevelSetHandle::new(op, 0.0, &anchor).unwrap();
            let est = estimate_rank(&ls, 512, DEFAULT_ZERO_THRESHOLD).unwrap();
            assert_eq!(est.rank, k, "log rho k = {k}");
        }
    }

    #[test]
    fn dichotomy_anchor_satisfies_branch_two() {
        let ls = logrho1_n2(0.0);
        let atlas = ls.atlas(&[10.0, 100.0], 128, 0).unwrap();
        // concavity oracle: sum f_i (mu_i - lambda_i) >= f(mu) - f(lambda)
        let fmu = eval_jet_unchecked(ls.op(), ls.anchor()).unwrap().value;
        for shell in &atlas.shells {
            for s in &shell.samples {
                let lhs: f64 = s
                    .grad
                    .iter()
                    .zip(ls.anchor().iter().zip(&s.lambda))
                    .map(|(g, (m, l))| g * (m - l))
                    .sum();
                assert!(lhs >= (fmu - ls.sigma()) * (1.0 - 1e-9));
            }
        }
        let w = dichotomy_with_atlas(&atlas, ls.anchor(), 2);
        assert_eq!(w.violations, 0);
        assert!(w.epsilon > 0.0);
    }

    #[test]
    fn dichotomy_witness_clean_up_to_r1000() {
        let ls = logrho1_n2(0.0);
        let w = dichotomy_witness(&ls, &[2.0, 2.0], &[10.0, 100.0, 1000.0]).unwrap();
        assert_eq!(w.violations, 0);
        assert!(w.delta > 0.0 && w.epsilon > 0.0);
        assert_eq!(w.radius_max, 1000.0);
    }

    #[test]
    fn dichotomy_hypothesis_failure() {
        let ls = logrho1_n2(0.0);
        let res = dichotomy_witness(&ls, &[1.0, -1.0], &[10.0, 100.0]);
        assert!(matches!(res, Err(Error::HypothesisFailed(_))));
    }

    #[test]
    fn h_profile_deep_mu_positive() {
        let ls = logrho1_n2(0.0);
        let rows = h_mu_profile(&ls, &[2.0, 2.0], &[5.0, 10.0, 20.0, 40.0]).unwrap();
        assert_eq!(rows.len(), 4);
        let f_mu = eval_jet_unchecked(ls.op(), &[2.0, 2.0]).unwrap().value;
        for row in &rows {
            // segment endpoint t = 0 gives f(mu), so h >= f(mu) - sigma
            assert!(row.h_mu >= f_mu - ls.sigma() - 1e-8, "h = {}", row.h_mu);
        }
    }

    #[test]
    fn monotonicity_in_sigma() {
        // if sigma >= rho then in at level sigma implies in at level rho
        let ls_hi = logrho1_n2(0.5);
        let ls_lo = logrho1_n2(0.0);
        let radii = [10.0, 100.0];
        let mus = [[2.0, 2.0], [3.0, 0.5], [0.9, 2.5], [4.0, 0.2]];
        for mu in &mus {
            if matches!(membership_cplus(&ls_hi, mu, &radii).unwrap(), CplusVerdict::In { .. }) {
                assert!(matches!(
                    membership_cplus(&ls_lo, mu, &radii).unwrap(),
                    CplusVerdict::In { .. }
                ));
            }
        }
    }

    #[test]
    fn translation_stability() {
        // mu + e stays in for e in Gamma_n
        let ls = logrho1_n2(0.0);
        let radii = [10.0, 100.0];
        let mu = [1.5, 1.5];
        assert!(matches!(membership_cplus(&ls, &mu, &radii).unwrap(), CplusVerdict::In { .. }));
        for e in [[0.5, 0.0], [0.0, 1.0], [2.0, 3.0]] {
            let shifted = [mu[0] + e[0], mu[1] + e[1]];
            assert!(matches!(
                membership_cplus(&ls, &shifted, &radii).unwrap(),
                CplusVerdict::In { .. }
            ));
            assert_eq!(membership_ctilde(&ls, &shifted).unwrap(), CtildeVerdict::In);
        }
    }

    #[test]
    fn permutation_equivariance_of_membership() {
        let op = OperatorSpec::new(OperatorFamily::LogRhoK { k: 2 }, 3).unwrap();
        let ls = LevelSetHandle::new(op, 0.0, &[2.0, 2.0, 2.0]).unwrap();
        let radii = [10.0, 100.0];
        let mu = [3.0, 1.0, 0.5];
        let perms: [[usize; 3]; 3] = [[0, 1, 2], [2, 0, 1], [1, 2, 0]];
        let base = matches!(membership_cplus(&ls, &mu, &radii).unwrap(), CplusVerdict::In { .. });
        for p in &perms {
            let pm: Vec<f64> = p.iter().map(|&i| mu[i]).collect();
            let got = matches!(membership_cplus(&ls, &pm, &radii).unwrap(), CplusVerdict::In { .. });
            assert_eq!(base, got);
        }
    }
}
