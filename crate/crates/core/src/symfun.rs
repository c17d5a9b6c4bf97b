//! Symmetric operator kernels: evaluation, gradient, Hessian and cone
//! membership for the operator families
//! sigma_k^{1/k}, (sigma_k/sigma_l)^{1/(k-l)}, sigma_k/sigma_{k-1},
//! log rho_k and sum arctan(lambda_i).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Subset-enumeration bound for rho_k and the log rho_k jets.
pub const ENUM_MAX_N: usize = 8;

/// Eigenvalue n-tuple, stored sorted descending. Constructors sort and
/// reject non-finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaVec {
    entries: Vec<f64>,
}

impl LambdaVec {
    pub fn new(mut entries: Vec<f64>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "eigenvalue tuple needs n >= 2, got {}",
                entries.len()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpec("non-finite eigenvalue".into()));
        }
        entries.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok(Self { entries })
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Domain cones. GammaK(k) is the Garding cone {sigma_1, ..., sigma_k > 0};
/// PK(k) requires every k-fold partial sum positive; GammaN is the positive
/// orthant and HalfSpace is {sigma_1 > 0}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeSpec {
    GammaK(usize),
    PK(usize),
    GammaN,
    HalfSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Membership {
    Inside,
    Boundary,
    Outside,
}

impl ConeSpec {
    fn validate(&self, n: usize) -> Result<()> {
        let k = match self {
            ConeSpec::GammaK(k) | ConeSpec::PK(k) => *k,
            _ => 1,
        };
        if k == 0 || k > n {
            return Err(Error::InvalidSpec(format!("cone index k = {k} out of range for n = {n}")));
        }
        Ok(())
    }

    /// Smallest defining margin of the cone at lambda. Positive inside,
    /// negative outside. For PK(k) the binding constraint is the sum of
    /// the k smallest entries, so no enumeration is needed.
    pub fn margin(&self, lambda: &LambdaVec) -> f64 {
        let v = lambda.entries();
        let n = v.len();
        match self {
            ConeSpec::GammaN => v[n - 1],
            ConeSpec::HalfSpace => v.iter().sum(),
            ConeSpec::PK(k) => v[n - k..].iter().sum(),
            ConeSpec::GammaK(k) => {
                let sig = sigma_all(lambda);
                sig[1..=*k].iter().cloned().fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// Cone margin of a raw (unsorted) tuple. The cone geometry samples points
/// along rays where sorting would scramble the pairing with a fixed mu, so
/// it works on raw slices throughout.
pub fn cone_margin_raw(cone: ConeSpec, v: &[f64]) -> f64 {
    match cone {
        ConeSpec::GammaN => v.iter().cloned().fold(f64::INFINITY, f64::min),
        ConeSpec::HalfSpace => v.iter().sum(),
        ConeSpec::PK(k) => {
            let mut s = v.to_vec();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            s[..k].iter().sum()
        }
        ConeSpec::GammaK(k) => {
            let sig = sigma_all_slice(v);
            sig[1..=k].iter().cloned().fold(f64::INFINITY, f64::min)
        }
    }
}

/// cone membership with a relative tolerance band around the boundary.
pub fn cone_contains(cone: ConeSpec, lambda: &LambdaVec) -> Membership {
    cone_contains_tol(cone, lambda, default_tol(lambda))
}

pub fn default_tol(lambda: &LambdaVec) -> f64 {
    1e-12 * (1.0 + lambda.norm())
}

pub fn cone_contains_tol(cone: ConeSpec, lambda: &LambdaVec, tol: f64) -> Membership {
    let m = cone.margin(lambda);
    if m > tol {
        Membership::Inside
    } else if m < -tol {
        Membership::Outside
    } else {
        Membership::Boundary
    }
}

/// Operator families named in the equation f(lambda(chi_u)) = psi.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum OperatorFamily {
    /// sigma_k^{1/k} on Gamma_k
    SigmaKRoot { k: usize },
    /// (sigma_k/sigma_l)^{1/(k-l)} on Gamma_k, 0 <= l < k
    SigmaQuotient { k: usize, l: usize },
    /// sigma_k/sigma_{k-1} on Gamma_{k-1}, 1 < k <= n
    SigmaKOverKm1 { k: usize },
    /// log prod (lambda_{i_1} + ... + lambda_{i_k}) on P_k
    LogRhoK { k: usize },
    /// sum arctan(lambda_i); branch not fixed, domain configurable
    SumArctan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub family: OperatorFamily,
    pub n: usize,
    pub domain: ConeSpec,
}

impl OperatorSpec {
    /// Operator with its natural domain cone.
    pub fn new(family: OperatorFamily, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSpec("operator dimension must be >= 2".into()));
        }
        let domain = match family {
            OperatorFamily::SigmaKRoot { k } => {
                check_k(k, n)?;
                ConeSpec::GammaK(k)
            }
            OperatorFamily::SigmaQuotient { k, l } => {
                check_k(k, n)?;
                if l >= k {
                    return Err(Error::InvalidSpec(format!("quotient needs l < k, got k={k} l={l}")));
                }
                ConeSpec::GammaK(k)
            }
            OperatorFamily::SigmaKOverKm1 { k } => {
                check_k(k, n)?;
                if k < 2 {
                    return Err(Error::InvalidSpec("sigma_k/sigma_{k-1} needs k >= 2".into()));
                }
                ConeSpec::GammaK(k - 1)
            }
            OperatorFamily::LogRhoK { k } => {
                check_k(k, n)?;
                if n > ENUM_MAX_N {
                    return Err(Error::DimensionTooLarge { n, max: ENUM_MAX_N });
                }
                ConeSpec::PK(k)
            }
            // The paper names the operator without fixing a branch of its
            // domain; Gamma_n is the default, overridable via with_domain.
            OperatorFamily::SumArctan => ConeSpec::GammaN,
        };
        Ok(Self { family, n, domain })
    }

    pub fn with_domain(mut self, domain: ConeSpec) -> Result<Self> {
        domain.validate(self.n)?;
        self.domain = domain;
        Ok(self)
    }

    pub fn contains(&self, lambda: &LambdaVec) -> Membership {
        cone_contains(self.domain, lambda)
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidSpec(format!("operator index k = {k} out of range for n = {n}")));
    }
    Ok(())
}

/// Value, gradient and Hessian of f at a lambda tuple.
#[derive(Debug, Clone)]
pub struct OperatorJet {
    pub value: f64,
    pub grad: Vec<f64>,
    /// row-major n x n symmetric matrix
    pub hess: Vec<f64>,
}

/// All elementary symmetric functions (sigma_0, ..., sigma_n), computed by
/// the one-variable-at-a-time recurrence.
pub fn sigma_all(lambda: &LambdaVec) -> Vec<f64> {
    sigma_all_slice(lambda.entries())
}

fn sigma_all_slice(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (i, &x) in v.iter().enumerate() {
        for j in (1..=i + 1).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

/// sigma functions of the tuple with entry `skip` removed.
fn sigma_all_deleted(v: &[f64], skip: usize) -> Vec<f64> {
    let reduced: Vec<f64> = v
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != skip)
        .map(|(_, &x)| x)
        .collect();
    sigma_all_slice(&reduced)
}

fn sigma_all_deleted2(v: &[f64], skip_a: usize, skip_b: usize) -> Vec<f64> {
    let reduced: Vec<f64> = v
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != skip_a && *i != skip_b)
        .map(|(_, &x)| x)
        .collect();
    sigma_all_slice(&reduced)
}

/// rho_k = product of all k-fold partial sums, by subset enumeration.
pub fn rho_k(lambda: &LambdaVec, k: usize) -> Result<f64> {
    let n = lambda.n();
    if n > ENUM_MAX_N {
        return Err(Error::DimensionTooLarge { n, max: ENUM_MAX_N });
    }
    check_k(k, n)?;
    let mut prod = 1.0;
    for_each_subset(n, k, |subset| {
        let s: f64 = subset.iter().map(|&i| lambda.entries()[i]).sum();
        prod *= s;
    });
    Ok(prod)
}

/// Visit every k-subset of {0, ..., n-1} in lexicographic order.
/// Allocation-free (n is capped at ENUM_MAX_N).
pub fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    debug_assert!(k <= n && n <= ENUM_MAX_N);
    let mut buf = [0usize; ENUM_MAX_N];
    for (i, b) in buf.iter_mut().take(k).enumerate() {
        *b = i;
    }
    let idx = &mut buf[..k];
    loop {
        f(&*idx);
        // advance
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Full jet of the operator at an interior point of its domain cone.
pub fn eval_jet(op: &OperatorSpec, lambda: &LambdaVec) -> Result<OperatorJet> {
    if lambda.n() != op.n {
        return Err(Error::DimensionMismatch { expected: op.n, got: lambda.n() });
    }
    if op.contains(lambda) != Membership::Inside {
        return Err(Error::OutsideDomain);
    }
    eval_jet_unchecked(op, lambda.entries())
}

/// Jet without the domain check; used by the bisection helpers that probe
/// near the cone boundary where the operator is still defined.
pub fn eval_jet_unchecked(op: &OperatorSpec, v: &[f64]) -> Result<OperatorJet> {
    let n = v.len();
    match op.family {
        OperatorFamily::SigmaKRoot { k } => {
            let (s, si, sij) = sigma_k_jet(v, k);
            Ok(power_jet(s, &si, &sij, 1.0 / k as f64, n))
        }
        OperatorFamily::SigmaQuotient { k, l } => {
            let (q, qi, qij) = quotient_jet(v, k, l);
            Ok(power_jet(q, &qi, &qij, 1.0 / (k - l) as f64, n))
        }
        OperatorFamily::SigmaKOverKm1 { k } => {
            let (q, qi, qij) = quotient_jet(v, k, k - 1);
            Ok(OperatorJet { value: q, grad: qi, hess: qij })
        }
        OperatorFamily::LogRhoK { k } => log_rho_jet(v, k),
        OperatorFamily::SumArctan => {
            let mut grad = vec![0.0; n];
            let mut hess = vec![0.0; n * n];
            let mut value = 0.0;
            for i in 0..n {
                let x = v[i];
                value += x.atan();
                let d = 1.0 + x * x;
                grad[i] = 1.0 / d;
                hess[i * n + i] = -2.0 * x / (d * d);
            }
            Ok(OperatorJet { value, grad, hess })
        }
    }
}

/// sigma_k with first and second partial derivatives:
/// d sigma_k / d lambda_i = sigma_{k-1}(lambda | i), and the mixed second
/// derivative is sigma_{k-2}(lambda | ij).
fn sigma_k_jet(v: &[f64], k: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let n = v.len();
    let s = sigma_all_slice(v)[k];
    let mut si = vec![0.0; n];
    for i in 0..n {
        si[i] = if k >= 1 { sigma_all_deleted(v, i)[k - 1] } else { 0.0 };
    }
    let mut sij = vec![0.0; n * n];
    if k >= 2 {
        for i in 0..n {
            for j in (i + 1)..n {
                let x = sigma_all_deleted2(v, i, j)[k - 2];
                sij[i * n + j] = x;
                sij[j * n + i] = x;
            }
        }
    }
    (s, si, sij)
}

/// Jet of q = sigma_k / sigma_l.
fn quotient_jet(v: &[f64], k: usize, l: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let n = v.len();
    let (sk, ski, skij) = sigma_k_jet(v, k);
    if l == 0 {
        return (sk, ski, skij);
    }
    let (sl, sli, slij) = sigma_k_jet(v, l);
    let q = sk / sl;
    let mut qi = vec![0.0; n];
    for i in 0..n {
        qi[i] = (ski[i] * sl - sk * sli[i]) / (sl * sl);
    }
    let mut qij = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            qij[i * n + j] = skij[i * n + j] / sl
                - (ski[i] * sli[j] + ski[j] * sli[i]) / (sl * sl)
                - sk * slij[i * n + j] / (sl * sl)
                + 2.0 * sk * sli[i] * sli[j] / (sl * sl * sl);
        }
    }
    (q, qi, qij)
}

/// Jet of f = g^p given the jet of g.
fn power_jet(g: f64, gi: &[f64], gij: &[f64], p: f64, n: usize) -> OperatorJet {
    if (p - 1.0).abs() < 1e-15 {
        return OperatorJet { value: g, grad: gi.to_vec(), hess: gij.to_vec() };
    }
    let value = g.powf(p);
    let c1 = p * g.powf(p - 1.0);
    let c2 = p * (p - 1.0) * g.powf(p - 2.0);
    let grad: Vec<f64> = gi.iter().map(|x| c1 * x).collect();
    let mut hess = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            hess[i * n + j] = c1 * gij[i * n + j] + c2 * gi[i] * gi[j];
        }
    }
    OperatorJet { value, grad, hess }
}

fn log_rho_jet(v: &[f64], k: usize) -> Result<OperatorJet> {
    let n = v.len();
    if n > ENUM_MAX_N {
        return Err(Error::DimensionTooLarge { n, max: ENUM_MAX_N });
    }
    let mut value = 0.0;
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n * n];
    let mut member = vec![false; n];
    for_each_subset(n, k, |subset| {
        member.iter_mut().for_each(|m| *m = false);
        let mut p = 0.0;
        for &i in subset {
            p += v[i];
            member[i] = true;
        }
        value += p.ln();
        let inv = 1.0 / p;
        let inv2 = inv * inv;
        for &i in subset {
            grad[i] += inv;
            for j in 0..n {
                if member[j] {
                    hess[i * n + j] -= inv2;
                }
            }
        }
    });
    Ok(OperatorJet { value, grad, hess })
}

/// Sampled verification of the structure conditions: positive gradient,
/// negative semidefinite Hessian, midpoint concavity, and the growth of f
/// along the diagonal ray t (1, ..., 1).
#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub samples: usize,
    pub min_grad_entry: f64,
    /// largest Hessian eigenvalue observed (absolute)
    pub max_hess_eig: f64,
    /// max-norm scale of the Hessians the eigenvalue is measured against
    pub hess_scale: f64,
    pub midpoint_violations: usize,
    /// (t, f(t * ones)) along the diagonal ray
    pub sup_ray: Vec<(f64, f64)>,
    pub sup_estimate: f64,
}

pub fn check_structure(op: &OperatorSpec, sample_count: usize, seed: u64) -> Result<StructureReport> {
    let n = op.n;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut min_grad = f64::INFINITY;
    let mut max_eig = f64::NEG_INFINITY;
    let mut scale = 0.0f64;
    let mut violations = 0usize;
    let mut accepted = 0usize;
    let mut prev: Option<(LambdaVec, f64)> = None;
    let mut eigbuf = vec![0.0; n];
    let mut cbuf = vec![num_complex::Complex64::new(0.0, 0.0); n * n];

    let mut attempts = 0usize;
    while accepted < sample_count {
        attempts += 1;
        if attempts > 2000 * sample_count {
            return Err(Error::InvalidSpec("interior sampling failed to hit the cone".into()));
        }
        let cand: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let lam = LambdaVec::new(cand)?;
        if op.contains(&lam) != Membership::Inside {
            continue;
        }
        let jet = eval_jet(op, &lam)?;
        for &g in &jet.grad {
            min_grad = min_grad.min(g);
        }
        for (k, &h) in jet.hess.iter().enumerate() {
            cbuf[k] = num_complex::Complex64::new(h, 0.0);
            scale = scale.max(h.abs());
        }
        linalg::eigh_values(n, &cbuf, &mut eigbuf);
        max_eig = max_eig.max(eigbuf[0]);
        accepted += 1;

        // midpoint concavity against the previous sample; the midpoint of
        // two interior points of a convex cone is interior.
        if let Some((plam, pval)) = &prev {
            let mid: Vec<f64> = plam
                .entries()
                .iter()
                .zip(lam.entries())
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let mid = LambdaVec::new(mid)?;
            if op.contains(&mid) == Membership::Inside {
                let fmid = eval_jet(op, &mid)?.value;
                let favg = 0.5 * (pval + jet.value);
                if fmid < favg - 1e-10 * (1.0 + favg.abs()) {
                    violations += 1;
                }
            }
        }
        prev = Some((lam, jet.value));
    }

    let mut sup_ray = Vec::new();
    for &t in &[1.0, 10.0, 100.0, 1000.0, 10000.0] {
        let lam = LambdaVec::new(vec![t; n])?;
        if op.contains(&lam) == Membership::Inside {
            sup_ray.push((t, eval_jet(op, &lam)?.value));
        }
    }
    let sup_estimate = sup_ray.last().map(|&(_, f)| f).unwrap_or(f64::NEG_INFINITY);

    Ok(StructureReport {
        samples: sample_count,
        min_grad_entry: min_grad,
        max_hess_eig: max_eig,
        hess_scale: scale,
        midpoint_violations: violations,
        sup_ray,
        sup_estimate,
    })
}

/// Cone margin for a slice already sorted descending (grid eigenvalue
/// tuples arrive sorted from the eigensolver).
pub fn cone_margin_sorted_desc(cone: ConeSpec, v: &[f64]) -> f64 {
    let n = v.len();
    match cone {
        ConeSpec::GammaN => v[n - 1],
        ConeSpec::HalfSpace => v.iter().sum(),
        ConeSpec::PK(k) => v[n - k..].iter().sum(),
        ConeSpec::GammaK(k) => {
            let mut e = [0.0f64; ENUM_MAX_N + 1];
            let kk = k.min(n);
            e[0] = 1.0;
            let mut margin = f64::INFINITY;
            for (i, &x) in v.iter().enumerate() {
                let top = (i + 1).min(kk);
                for j in (1..=top).rev() {
                    e[j] += x * e[j - 1];
                }
            }
            for ej in e[1..=kk].iter() {
                margin = margin.min(*ej);
            }
            margin
        }
    }
}

/// Allocation-free operator value at a sorted-descending tuple; the grid
/// loops call this once per point.
pub fn eval_value(op: &OperatorSpec, v: &[f64]) -> f64 {
    match op.family {
        OperatorFamily::SigmaKRoot { k } => sigma_only(v, k).powf(1.0 / k as f64),
        OperatorFamily::SigmaQuotient { k, l } => {
            let q = sigma_only(v, k) / if l == 0 { 1.0 } else { sigma_only(v, l) };
            q.powf(1.0 / (k - l) as f64)
        }
        OperatorFamily::SigmaKOverKm1 { k } => sigma_only(v, k) / sigma_only(v, k - 1),
        OperatorFamily::LogRhoK { k } => {
            let mut s = 0.0;
            for_each_subset(v.len(), k, |subset| {
                s += subset.iter().map(|&i| v[i]).sum::<f64>().ln();
            });
            s
        }
        OperatorFamily::SumArctan => v.iter().map(|x| x.atan()).sum(),
    }
}

/// Allocation-free gradient; `out` must hold n entries.
pub fn eval_grad(op: &OperatorSpec, v: &[f64], out: &mut [f64]) {
    let n = v.len();
    match op.family {
        OperatorFamily::SigmaKRoot { k } => {
            let s = sigma_only(v, k);
            let c = (1.0 / k as f64) * s.powf(1.0 / k as f64 - 1.0);
            for i in 0..n {
                out[i] = c * sigma_only_deleted(v, k - 1, i);
            }
        }
        OperatorFamily::SigmaQuotient { k, l } => {
            let sk = sigma_only(v, k);
            let sl = if l == 0 { 1.0 } else { sigma_only(v, l) };
            let q = sk / sl;
            let m = (k - l) as f64;
            let c = (1.0 / m) * q.powf(1.0 / m - 1.0);
            for i in 0..n {
                let ski = sigma_only_deleted(v, k - 1, i);
                let sli = if l == 0 { 0.0 } else { sigma_only_deleted(v, l - 1, i) };
                out[i] = c * (ski * sl - sk * sli) / (sl * sl);
            }
        }
        OperatorFamily::SigmaKOverKm1 { k } => {
            let sk = sigma_only(v, k);
            let sl = sigma_only(v, k - 1);
            for i in 0..n {
                let ski = sigma_only_deleted(v, k - 1, i);
                let sli = sigma_only_deleted(v, k - 2, i);
                out[i] = (ski * sl - sk * sli) / (sl * sl);
            }
        }
        OperatorFamily::LogRhoK { k } => {
            out[..n].fill(0.0);
            for_each_subset(n, k, |subset| {
                let p: f64 = subset.iter().map(|&i| v[i]).sum();
                let inv = 1.0 / p;
                for &i in subset {
                    out[i] += inv;
                }
            });
        }
        OperatorFamily::SumArctan => {
            for i in 0..n {
                out[i] = 1.0 / (1.0 + v[i] * v[i]);
            }
        }
    }
}

fn sigma_only(v: &[f64], k: usize) -> f64 {
    let mut e = [0.0f64; ENUM_MAX_N + 1];
    e[0] = 1.0;
    for (i, &x) in v.iter().enumerate() {
        let top = (i + 1).min(k);
        for j in (1..=top).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e[k]
}

fn sigma_only_deleted(v: &[f64], k: usize, skip: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut e = [0.0f64; ENUM_MAX_N + 1];
    e[0] = 1.0;
    let mut cnt = 0usize;
    for (i, &x) in v.iter().enumerate() {
        if i == skip {
            continue;
        }
        cnt += 1;
        let top = cnt.min(k);
        for j in (1..=top).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e[k]
}

/// Estimate of sup over the domain cone of f along the diagonal ray; the
/// level-set machinery uses it to validate sup_{boundary} f < sigma < sup f.
pub fn sup_along_diagonal(op: &OperatorSpec, t_max: f64) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    let mut t = 1.0;
    while t <= t_max {
        let lam = LambdaVec::new(vec![t; op.n])?;
        if op.contains(&lam) == Membership::Inside {
            best = best.max(eval_jet(op, &lam)?.value);
        }
        t *= 4.0;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lam(v: &[f64]) -> LambdaVec {
        LambdaVec::new(v.to_vec()).unwrap()
    }

    /// Direct subset-enumeration oracle for sigma_k, independent of the
    /// recurrence used by the implementation.
    fn sigma_oracle(v: &[f64], k: usize) -> f64 {
        if k == 0 {
            return 1.0;
        }
        let mut total = 0.0;
        for_each_subset(v.len(), k, |subset| {
            total += subset.iter().map(|&i| v[i]).product::<f64>();
        });
        total
    }

    #[test]
    fn sigma_all_examples() {
        assert_eq!(sigma_all(&lam(&[1.0, 1.0, 1.0])), vec![1.0, 3.0, 3.0, 1.0]);
        // frozen from the enumeration oracle
        assert_eq!(sigma_all(&lam(&[3.0, 2.0, 1.0])), vec![1.0, 6.0, 11.0, 6.0]);
        assert_eq!(sigma_all(&lam(&[1.0, 0.0, -1.0])), vec![1.0, 0.0, -1.0, 0.0]);
    }

    #[test]
    fn sigma_all_matches_enumeration_oracle() {
        let v = [2.5, -0.75, 1.25, 0.5, -1.5];
        let s = sigma_all(&lam(&v));
        let sorted = lam(&v);
        for k in 0..=v.len() {
            let oracle = sigma_oracle(sorted.entries(), k);
            assert!((s[k] - oracle).abs() < 1e-12 * (1.0 + oracle.abs()));
        }
    }

    #[test]
    fn rho_k_examples() {
        let l = lam(&[3.0, 2.0, 1.0]);
        // rho_1 = sigma_n and rho_n = sigma_1
        assert_eq!(rho_k(&l, 1).unwrap(), 6.0);
        assert_eq!(rho_k(&l, 3).unwrap(), 6.0);
        // (3+2)(3+1)(2+1), pair enumeration oracle
        assert_eq!(rho_k(&l, 2).unwrap(), 60.0);
    }

    #[test]
    fn rho_k_rejects_large_n() {
        let l = LambdaVec::new((0..9).map(|i| i as f64 + 1.0).collect()).unwrap();
        assert!(matches!(rho_k(&l, 2), Err(Error::DimensionTooLarge { .. })));
    }

    #[test]
    fn cone_membership_examples() {
        assert_eq!(cone_contains(ConeSpec::GammaN, &lam(&[1.0, 1.0])), Membership::Inside);
        // sigma_2(3,1,-1) = 3 - 3 - 1 = -1
        assert_eq!(
            cone_contains(ConeSpec::GammaK(2), &lam(&[3.0, 1.0, -1.0])),
            Membership::Outside
        );
        // pair sum -2
        assert_eq!(
            cone_contains(ConeSpec::PK(2), &lam(&[5.0, -1.0, -1.0])),
            Membership::Outside
        );
        assert_eq!(
            cone_contains(ConeSpec::GammaK(1), &lam(&[1.0, -0.5])),
            Membership::Inside
        );
        assert_eq!(cone_contains(ConeSpec::HalfSpace, &lam(&[1.0, -1.0])), Membership::Boundary);
    }

    #[test]
    fn cone_aliases_agree() {
        let pts = [
            lam(&[1.0, 2.0, 0.5]),
            lam(&[1.0, -0.1, 3.0]),
            lam(&[-1.0, -2.0, 5.0]),
            lam(&[0.3, 0.2, 0.1]),
        ];
        for p in &pts {
            // GammaK(n) and GammaN agree
            assert_eq!(cone_contains(ConeSpec::GammaK(3), p), cone_contains(ConeSpec::GammaN, p));
            // PK(1) = GammaN, PK(n) = GammaK(1)
            assert_eq!(cone_contains(ConeSpec::PK(1), p), cone_contains(ConeSpec::GammaN, p));
            assert_eq!(cone_contains(ConeSpec::PK(3), p), cone_contains(ConeSpec::GammaK(1), p));
        }
    }

    #[test]
    fn jet_sigma1_is_linear() {
        let op = OperatorSpec::new(OperatorFamily::SigmaKRoot { k: 1 }, 3).unwrap();
        let jet = eval_jet(&op, &lam(&[2.0, 0.7, -0.5])).unwrap();
        assert_eq!(jet.grad, vec![1.0, 1.0, 1.0]);
        assert!(jet.hess.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn jet_sigma2_root_example() {
        // lambda = (1,2,3): sigma_2 = 11, grad_i = (sigma_1 - lambda_i)/(2 sqrt(11))
        let op = OperatorSpec::new(OperatorFamily::SigmaKRoot { k: 2 }, 3).unwrap();
        let jet = eval_jet(&op, &lam(&[1.0, 2.0, 3.0])).unwrap();
        let s = 11.0f64;
        assert!((jet.value - s.sqrt()).abs() < 1e-14);
        // sorted descending: lambda = (3,2,1)
        let expect = [3.0, 4.0, 5.0].map(|x| x / (2.0 * s.sqrt()));
        for (g, e) in jet.grad.iter().zip(expect.iter()) {
            assert!((g - e).abs() < 1e-14);
        }
    }

    #[test]
    fn jet_log_rho1_example() {
        // log sigma_n at (2,1): value log 2, grad (1/2, 1) on sorted entries
        let op = OperatorSpec::new(OperatorFamily::LogRhoK { k: 1 }, 2).unwrap();
        let jet = eval_jet(&op, &lam(&[2.0, 1.0])).unwrap();
        assert!((jet.value - 2.0f64.ln()).abs() < 1e-14);
        assert!((jet.grad[0] - 0.5).abs() < 1e-14);
        assert!((jet.grad[1] - 1.0).abs() < 1e-14);
    }

    fn fd_jet_check(op: &OperatorSpec, l: &LambdaVec, tol_g: f64, tol_h: f64) {
        let n = l.n();
        let jet = eval_jet(op, l).unwrap();
        let h = 1e-6 * (1.0 + l.norm());
        let v = l.entries();
        let mut max_gerr = 0.0f64;
        for i in 0..n {
            let mut vp = v.to_vec();
            let mut vm = v.to_vec();
            vp[i] += h;
            vm[i] -= h;
            let fp = eval_jet_unchecked(op, &vp).unwrap().value;
            let fm = eval_jet_unchecked(op, &vm).unwrap().value;
            let fd = (fp - fm) / (2.0 * h);
            max_gerr = max_gerr.max((fd - jet.grad[i]).abs());
        }
        let gscale = 1.0 + jet.grad.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(max_gerr / gscale < tol_g, "grad fd error {max_gerr}");

        let hh = 1e-4 * (1.0 + l.norm());
        let hscale = 1.0 + jet.hess.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        for i in 0..n {
            for j in 0..n {
                let mut vpp = v.to_vec();
                let mut vpm = v.to_vec();
                let mut vmp = v.to_vec();
                let mut vmm = v.to_vec();
                vpp[i] += hh;
                vpp[j] += hh;
                vpm[i] += hh;
                vpm[j] -= hh;
                vmp[i] -= hh;
                vmp[j] += hh;
                vmm[i] -= hh;
                vmm[j] -= hh;
                let fd = (eval_jet_unchecked(op, &vpp).unwrap().value
                    - eval_jet_unchecked(op, &vpm).unwrap().value
                    - eval_jet_unchecked(op, &vmp).unwrap().value
                    + eval_jet_unchecked(op, &vmm).unwrap().value)
                    / (4.0 * hh * hh);
                let err = (fd - jet.hess[i * n + j]).abs();
                assert!(err / hscale < tol_h, "hess fd error {err} at ({i},{j})");
            }
        }
    }

    #[test]
    fn jets_match_finite_differences() {
        let cases: Vec<(OperatorSpec, LambdaVec)> = vec![
            (OperatorSpec::new(OperatorFamily::SigmaKRoot { k: 2 }, 3).unwrap(), lam(&[2.0, 1.5, 0.4])),
            (OperatorSpec::new(OperatorFamily::SigmaQuotient { k: 3, l: 1 }, 3).unwrap(), lam(&[3.0, 2.0, 1.0])),
            (OperatorSpec::new(OperatorFamily::SigmaKOverKm1 { k: 2 }, 3).unwrap(), lam(&[2.0, 1.0, -0.4])),
            (OperatorSpec::new(OperatorFamily::LogRhoK { k: 2 }, 3).unwrap(), lam(&[1.2, 0.8, -0.3])),
            (OperatorSpec::new(OperatorFamily::SumArctan, 3).unwrap(), lam(&[2.0, 1.0, 0.3])),
        ];
        for (op, l) in &cases {
            fd_jet_check(op, l, 1e-7, 1e-5);
        }
    }

    #[test]
    fn structure_report_sigma2() {
        let op = OperatorSpec::new(OperatorFamily::SigmaKRoot { k: 2 }, 3).unwrap();
        let rep = check_structure(&op, 500, 7).unwrap();
        assert!(rep.min_grad_entry > 0.0);
        assert!(rep.max_hess_eig <= 1e-10 * (1.0 + rep.hess_scale));
        assert_eq!(rep.midpoint_violations, 0);
    }

    #[test]
    fn structure_arctan_sup_is_n_half_pi() {
        let op = OperatorSpec::new(OperatorFamily::SumArctan, 3).unwrap();
        let rep = check_structure(&op, 200, 11).unwrap();
        assert!((rep.sup_estimate - 3.0 * std::f64::consts::FRAC_PI_2).abs() < 1e-3);
    }
}
