//! Matrix divisor sets, divisor counts, and the dyadic scale sets.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::approx::{psi_star, ApproxFunction, DenominatorSet};
use crate::error::{Error, Result};
use crate::lattice::{punctured_ball, shell, sup_norm, Point};

/// Relative slack on the dyadic block boundaries, so that values such as
/// `Psi_*^{-s} = 8` computed as `8.000000000000002` land in the right block.
pub const BOUNDARY_RTOL: f64 = 1e-12;

/// Positive divisors of `a != 0`, ascending.
pub fn positive_divisors(a: i64) -> Vec<i64> {
    let a = a.unsigned_abs();
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1u64;
    while d * d <= a {
        if a.is_multiple_of(d) {
            small.push(d as i64);
            if d * d != a {
                large.push((a / d) as i64);
            }
        }
        d += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

/// Number of positive divisors of `ell >= 1`.
pub fn integer_divisor_count(ell: i64) -> Result<u64> {
    if ell <= 0 {
        return Err(Error::Domain(format!("divisor count needs ell >= 1, got {ell}")));
    }
    Ok(positive_divisors(ell).len() as u64)
}

/// `exp(s ln t / ln ln t)` for `t > e`.
pub fn wigert_envelope(s: f64, t: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain("wigert envelope needs s > 0".into()));
    }
    if !(t > std::f64::consts::E) {
        return Err(Error::Domain(format!("wigert envelope needs t > e, got {t}")));
    }
    let lt = t.ln();
    Ok((s * lt / lt.ln()).exp())
}

/// An `m x n` integer matrix stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatrixIndex<'a> {
    pub m: usize,
    pub n: usize,
    pub ell: &'a [i64],
}

impl<'a> MatrixIndex<'a> {
    pub fn new(ell: &'a [i64], m: usize, n: usize) -> Result<Self> {
        if ell.len() != m * n {
            return Err(Error::Argument(format!(
                "frequency has length {}, expected {}",
                ell.len(),
                m * n
            )));
        }
        Ok(MatrixIndex { m, n, ell })
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.ell[i * self.n + j]
    }

    /// Column `j`: `(l_{1j}, ..., l_{mj})`.
    pub fn column(&self, j: usize) -> Point {
        (0..self.m).map(|i| self.get(i, j)).collect()
    }
}

/// `k` with `ell = k q^T`, if it exists (`q != 0`).
pub fn quotient(ell: &[i64], q: &[i64], m: usize, n: usize) -> Option<Point> {
    debug_assert_eq!(ell.len(), m * n);
    let j = q.iter().position(|&x| x != 0)?;
    let mut k = Point::with_capacity(m);
    for i in 0..m {
        let a = ell[i * n + j];
        if a % q[j] != 0 {
            return None;
        }
        k.push(a / q[j]);
    }
    for i in 0..m {
        for jj in 0..n {
            if ell[i * n + jj] != k[i] * q[jj] {
                return None;
            }
        }
    }
    Some(k)
}

/// Outer product `k q^T`, row-major.
pub fn outer(k: &[i64], q: &[i64]) -> Point {
    let mut out = Point::with_capacity(k.len() * q.len());
    for &ki in k {
        for &qj in q {
            out.push(ki * qj);
        }
    }
    out
}

/// `D(ell) = {q in Z^n : ell = k q^T for some k in Z^m}`, sorted.
///
/// Injects `D(ell)` into the signed divisors of a maximal entry
/// `l_{i0 j0}`, so `|D(ell)| <= 2 tau(|ell|)`.
pub fn divisor_set(ell: &[i64], m: usize, n: usize) -> Result<Vec<Point>> {
    let mat = MatrixIndex::new(ell, m, n)?;
    let norm = sup_norm(ell);
    if norm == 0 {
        return Err(Error::InfiniteSet("D(0) is all of Z^n".into()));
    }
    let pos = ell.iter().position(|x| x.abs() == norm).unwrap();
    let (i0, j0) = (pos / n, pos % n);
    let a = mat.get(i0, j0);
    let mut out = Vec::new();
    for d in positive_divisors(a) {
        for qj0 in [-d, d] {
            let k_i0 = a / qj0;
            let mut q = Point::with_capacity(n);
            let mut ok = true;
            for j in 0..n {
                let b = mat.get(i0, j);
                if b % k_i0 != 0 {
                    ok = false;
                    break;
                }
                q.push(b / k_i0);
            }
            if ok && quotient(ell, &q, m, n).is_some() {
                out.push(q);
            }
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ScaleKind {
    QOfM,
    QPrimeOfM,
    LOfM,
}

/// A finite block of denominators (or, for `LOfM`, frequencies) at scale `M`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleSet {
    pub scale: f64,
    pub kind: ScaleKind,
    pub members: Vec<Point>,
}

impl ScaleSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// `M/2 < Psi_*(q)^{-s} <= M` with the block slack.
pub fn in_dyadic_block(psi: &ApproxFunction, q: &[i64], s: f64, scale: f64) -> bool {
    let star = match psi_star(psi, q) {
        Ok(v) if v > 0.0 => v,
        _ => return false,
    };
    let v = (-s * star.ln()).exp();
    v <= scale * (1.0 + BOUNDARY_RTOL) && v > 0.5 * scale * (1.0 + BOUNDARY_RTOL)
}

/// `Q(M) = {q in Q : M/2 < Psi_*(q)^{-s} <= M}`.
pub fn scale_set_q(
    q_set: &DenominatorSet,
    psi: &ApproxFunction,
    s: f64,
    scale: f64,
) -> Result<ScaleSet> {
    if !(scale >= 1.0) || !(s > 0.0) {
        return Err(Error::Domain(format!("need M >= 1 and s > 0, got M = {scale}, s = {s}")));
    }
    let thr = scale.powf(-1.0 / s) * (1.0 - 1e-9);
    let radius = psi.radius_for_star_threshold(thr)?;
    let members = match (q_set, psi.sparse_support(radius)) {
        (_, Some(support)) => support
            .into_iter()
            .filter(|q| q_set.contains(q) && in_dyadic_block(psi, q, s, scale))
            .collect(),
        (DenominatorSet::AllNonzero { n }, None) if psi.is_radial_nonincreasing() => {
            // Radial rule: test one representative per shell.
            let mut probe: Point = smallvec::smallvec![0; *n];
            let mut out = Vec::new();
            for r in 1..=radius {
                probe[0] = r;
                if in_dyadic_block(psi, &probe, s, scale) {
                    out.extend(shell(*n, r));
                }
            }
            out.sort();
            out
        }
        _ => q_set
            .enumerate_up_to(radius)?
            .into_iter()
            .filter(|q| in_dyadic_block(psi, q, s, scale))
            .collect(),
    };
    Ok(ScaleSet { scale, kind: ScaleKind::QOfM, members })
}

/// Radius `(M / (2 log2^{n+1} M))^{1/(2mn)}` of `L(M)`.
pub fn l_radius(scale: f64, m: usize, n: usize) -> f64 {
    let l2 = scale.log2();
    (scale / (2.0 * l2.powi(n as i32 + 1))).powf(1.0 / (2.0 * (m * n) as f64))
}

/// `L(M) = {ell in Z^{mn} : 0 < |ell| <= l_radius(M)}`.
pub fn scale_set_l(scale: f64, m: usize, n: usize) -> Result<ScaleSet> {
    if !(scale >= 2.0) {
        return Err(Error::Domain(format!("L(M) needs M >= 2, got {scale}")));
    }
    let h = (l_radius(scale, m, n) * (1.0 + BOUNDARY_RTOL)).floor() as i64;
    Ok(ScaleSet {
        scale,
        kind: ScaleKind::LOfM,
        members: punctured_ball(m * n, h).collect(),
    })
}

/// `Q'(M) = Q(M) minus the union of D(ell) over ell in L(M)`.
pub fn scale_set_q_prime(
    q_set: &DenominatorSet,
    psi: &ApproxFunction,
    s: f64,
    scale: f64,
    m: usize,
    n: usize,
) -> Result<ScaleSet> {
    if !(scale >= 2.0) {
        return Err(Error::Domain(format!("Q'(M) needs M >= 2, got {scale}")));
    }
    let q = scale_set_q(q_set, psi, s, scale)?;
    let l = scale_set_l(scale, m, n)?;
    let mut removed: BTreeSet<Point> = BTreeSet::new();
    for ell in &l.members {
        removed.extend(divisor_set(ell, m, n)?);
    }
    let members = q.members.into_iter().filter(|q| !removed.contains(q)).collect();
    Ok(ScaleSet { scale, kind: ScaleKind::QPrimeOfM, members })
}

/// `Q(2^k)` is admissible: `sum_{Q(2^k)} Psi_*^s >= k^{-(n+1)}`.
pub fn script_m_member(k: u32, q_set: &DenominatorSet, psi: &ApproxFunction, s: f64) -> Result<bool> {
    if k == 0 {
        return Err(Error::Domain("scale index k must be >= 1".into()));
    }
    let block = scale_set_q(q_set, psi, s, dyadic(k))?;
    let mut sum = 0.0;
    for q in &block.members {
        sum += psi_star(psi, q)?.powf(s);
    }
    Ok(!block.is_empty() && sum >= (k as f64).powi(-(q_set.n() as i32 + 1)))
}

/// `2^k` as a float.
pub fn dyadic(k: u32) -> f64 {
    2f64.powi(k as i32)
}

/// Smallest `k in [k_min, k_cap]` with `2^k` admissible.
pub fn next_scale_in_script_m(
    k_min: u32,
    q_set: &DenominatorSet,
    psi: &ApproxFunction,
    s: f64,
    k_cap: u32,
) -> Result<Option<u32>> {
    if k_min == 0 {
        return Err(Error::Domain("k_min must be >= 1".into()));
    }
    for k in k_min..=k_cap {
        if script_m_member(k, q_set, psi, s)? {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// Smallest admissible `k0 <= k_max` such that `|Q'(2^k)| >= 2^k / (4 k^{n+1})`
/// for every admissible `k` in `[k0, k_max]`.
pub fn find_q_prime_threshold(
    q_set: &DenominatorSet,
    psi: &ApproxFunction,
    s: f64,
    m: usize,
    n: usize,
    k_max: u32,
) -> Result<Option<u32>> {
    let mut threshold = None;
    for k in 1..=k_max {
        if !script_m_member(k, q_set, psi, s)? {
            continue;
        }
        let size = scale_set_q_prime(q_set, psi, s, dyadic(k), m, n)?.len() as f64;
        let ok = size >= dyadic(k) / (4.0 * (k as f64).powi(n as i32 + 1));
        match (ok, threshold) {
            (true, None) => threshold = Some(k),
            (false, _) => threshold = None,
            _ => {}
        }
    }
    Ok(threshold)
}
