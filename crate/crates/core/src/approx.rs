//! Approximation functions, denominator sets, series exponents and the
//! closed-form dimension values.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{ball_count, punctured_ball, shell_count, sup_norm, Point};

/// Hard cap on the number of lattice points a single enumeration may visit.
pub const ENUMERATION_BUDGET: u128 = 200_000_000;

/// Total point budget used to size the default radius schedule for `n >= 2`.
pub const DEFAULT_POINT_BUDGET: u128 = 10_000_000;

pub type PsiFn = Arc<dyn Fn(&[i64]) -> f64 + Send + Sync>;

/// Raw approximation rules. Values are clamped by [`ApproxFunction`].
#[derive(Clone)]
pub enum PsiRule {
    /// `q -> |q|^{-tau}`.
    Power { tau: f64 },
    /// `q -> values[|q| - 1]`, zero beyond the table.
    Symmetric { values: Vec<f64> },
    /// Explicit finite table, zero elsewhere.
    Table { entries: BTreeMap<Point, f64> },
    /// `1/2` on `(2^k, 0, ..., 0)` for `k >= 1`, zero elsewhere.
    AxisPowersOfTwo,
    /// Arbitrary rule. Evaluable, but no enumeration radius can be derived.
    Custom(PsiFn),
}

impl fmt::Debug for PsiRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PsiRule::Power { tau } => write!(f, "Power {{ tau: {tau} }}"),
            PsiRule::Symmetric { values } => write!(f, "Symmetric({} values)", values.len()),
            PsiRule::Table { entries } => write!(f, "Table({} entries)", entries.len()),
            PsiRule::AxisPowersOfTwo => write!(f, "AxisPowersOfTwo"),
            PsiRule::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// A clamped approximation function `Z^n -> [0, 1/2]` with `value(0) = 1/2`.
#[derive(Clone, Debug)]
pub struct ApproxFunction {
    n: usize,
    rule: PsiRule,
}

/// Clamp a raw rule: `min(raw, 1/2)` away from the origin, `1/2` at it.
pub fn clamp_psi(n: usize, rule: PsiRule) -> ApproxFunction {
    ApproxFunction { n, rule }
}

impl ApproxFunction {
    pub fn power(n: usize, tau: f64) -> Self {
        clamp_psi(n, PsiRule::Power { tau })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rule(&self) -> &PsiRule {
        &self.rule
    }

    /// Construction always clamps, so this is constant; kept for callers that
    /// want to assert it.
    pub fn is_clamped(&self) -> bool {
        true
    }

    /// Unclamped rule value.
    pub fn raw(&self, q: &[i64]) -> f64 {
        debug_assert_eq!(q.len(), self.n);
        match &self.rule {
            PsiRule::Power { tau } => {
                let r = sup_norm(q);
                if r == 0 {
                    f64::INFINITY
                } else {
                    (r as f64).powf(-tau)
                }
            }
            PsiRule::Symmetric { values } => {
                let r = sup_norm(q) as usize;
                if r == 0 {
                    f64::INFINITY
                } else {
                    values.get(r - 1).copied().unwrap_or(0.0)
                }
            }
            PsiRule::Table { entries } => entries.get(q).copied().unwrap_or(0.0),
            PsiRule::AxisPowersOfTwo => {
                let q1 = q[0];
                if q1 >= 2 && (q1 & (q1 - 1)) == 0 && q[1..].iter().all(|&x| x == 0) {
                    0.5
                } else {
                    0.0
                }
            }
            PsiRule::Custom(f) => f(q),
        }
    }

    /// Clamped value `Psi(q)`.
    pub fn value(&self, q: &[i64]) -> f64 {
        if q.iter().all(|&x| x == 0) {
            return 0.5;
        }
        let raw = self.raw(q);
        if raw.is_nan() || raw <= 0.0 {
            0.0
        } else {
            raw.min(0.5)
        }
    }

    /// Power-law exponent, when the rule is one.
    pub fn power_exponent(&self) -> Option<f64> {
        match self.rule {
            PsiRule::Power { tau } => Some(tau),
            _ => None,
        }
    }

    /// Depends on `|q|` only and is nonincreasing in it.
    pub fn is_radial_nonincreasing(&self) -> bool {
        match &self.rule {
            PsiRule::Power { tau } => *tau >= 0.0,
            PsiRule::Symmetric { values } => values.windows(2).all(|w| w[1] <= w[0]),
            _ => false,
        }
    }

    /// Every `q` with `0 < |q| <= radius` and `Psi(q) > 0`, when the rule has
    /// an explicitly known sparse support. Sorted.
    pub fn sparse_support(&self, radius: i64) -> Option<Vec<Point>> {
        match &self.rule {
            PsiRule::Table { entries } => Some(
                entries
                    .iter()
                    .filter(|(q, _)| {
                        let r = sup_norm(q);
                        r > 0 && r <= radius
                    })
                    .filter(|(q, _)| self.value(q) > 0.0)
                    .map(|(q, _)| q.clone())
                    .collect(),
            ),
            PsiRule::AxisPowersOfTwo => {
                let mut out = Vec::new();
                let mut p: i64 = 2;
                while p <= radius {
                    let mut q: Point = smallvec::smallvec![0; self.n];
                    q[0] = p;
                    out.push(q);
                    match p.checked_mul(2) {
                        Some(v) => p = v,
                        None => break,
                    }
                }
                Some(out)
            }
            _ => None,
        }
    }

    pub(crate) fn is_radial(&self) -> bool {
        matches!(self.rule, PsiRule::Power { .. } | PsiRule::Symmetric { .. })
    }

    /// A radius `R` such that every `q` with `psi_star(q) >= thr` has `|q| <= R`.
    pub fn radius_for_star_threshold(&self, thr: f64) -> Result<i64> {
        if !(thr > 0.0) {
            return Err(Error::Domain("threshold must be positive".into()));
        }
        // Clamping alone gives Psi_* <= 1/(2|q|).
        let clamp_bound = 1.0 / (2.0 * thr);
        let bound = match &self.rule {
            PsiRule::Power { tau } => {
                let own = thr.powf(-1.0 / (1.0 + tau));
                own.min(clamp_bound)
            }
            PsiRule::Symmetric { values } => clamp_bound.min(values.len() as f64),
            PsiRule::Table { entries } => {
                let r = entries.keys().map(|q| sup_norm(q)).max().unwrap_or(0);
                clamp_bound.min(r as f64)
            }
            PsiRule::AxisPowersOfTwo => clamp_bound,
            PsiRule::Custom(_) => {
                return Err(Error::Unsupported(
                    "no enumeration radius can be derived for a custom rule".into(),
                ))
            }
        };
        if bound > 4e18 {
            return Err(Error::Budget(format!("radius bound {bound:e} too large")));
        }
        Ok((bound * (1.0 + 1e-9)).floor() as i64 + 1)
    }
}

/// `Psi(q) / |q|`.
pub fn psi_star(psi: &ApproxFunction, q: &[i64]) -> Result<f64> {
    let r = sup_norm(q);
    if r == 0 {
        return Err(Error::Domain("psi_star is undefined at q = 0".into()));
    }
    Ok(psi.value(q) / r as f64)
}

/// A subset of `Z^n` with an exact enumerator by sup-norm radius.
pub type MembershipFn = Arc<dyn Fn(&[i64]) -> bool + Send + Sync>;

#[derive(Clone)]
pub enum DenominatorSet {
    AllNonzero { n: usize },
    Members { n: usize, members: BTreeSet<Point> },
    Predicate { n: usize, pred: MembershipFn },
}

impl fmt::Debug for DenominatorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DenominatorSet::AllNonzero { n } => write!(f, "AllNonzero(n={n})"),
            DenominatorSet::Members { n, members } => {
                write!(f, "Members(n={n}, {} members)", members.len())
            }
            DenominatorSet::Predicate { n, .. } => write!(f, "Predicate(n={n})"),
        }
    }
}

fn check_box_budget(n: usize, radius: i64) -> Result<()> {
    if ball_count(n, radius) > ENUMERATION_BUDGET {
        return Err(Error::Budget(format!(
            "enumerating Z^{n} up to radius {radius} exceeds {ENUMERATION_BUDGET} points"
        )));
    }
    Ok(())
}

impl DenominatorSet {
    pub fn all_nonzero(n: usize) -> Self {
        DenominatorSet::AllNonzero { n }
    }

    pub fn n(&self) -> usize {
        match self {
            DenominatorSet::AllNonzero { n }
            | DenominatorSet::Members { n, .. }
            | DenominatorSet::Predicate { n, .. } => *n,
        }
    }

    pub fn contains(&self, q: &[i64]) -> bool {
        match self {
            DenominatorSet::AllNonzero { .. } => q.iter().any(|&x| x != 0),
            DenominatorSet::Members { members, .. } => members.contains(q),
            DenominatorSet::Predicate { pred, .. } => pred(q),
        }
    }

    /// `{q in Q : 0 < |q| <= radius}`, lexicographic and duplicate-free.
    pub fn enumerate_up_to(&self, radius: i64) -> Result<Vec<Point>> {
        match self {
            DenominatorSet::AllNonzero { n } => {
                check_box_budget(*n, radius)?;
                Ok(punctured_ball(*n, radius).collect())
            }
            DenominatorSet::Members { members, .. } => Ok(members
                .iter()
                .filter(|q| {
                    let r = sup_norm(q);
                    r > 0 && r <= radius
                })
                .cloned()
                .collect()),
            DenominatorSet::Predicate { n, pred } => {
                check_box_budget(*n, radius)?;
                Ok(punctured_ball(*n, radius).filter(|q| pred(q)).collect())
            }
        }
    }
}

/// `(m, n, Q, Psi, theta)`.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub m: usize,
    pub n: usize,
    pub q_set: DenominatorSet,
    pub psi: ApproxFunction,
    pub theta: Vec<f64>,
}

impl ProblemInstance {
    pub fn new(
        m: usize,
        n: usize,
        q_set: DenominatorSet,
        psi: ApproxFunction,
        theta: Vec<f64>,
    ) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::Argument("m and n must be positive".into()));
        }
        if psi.n() != n || q_set.n() != n {
            return Err(Error::Argument(format!(
                "dimension mismatch: n = {n}, psi.n = {}, Q.n = {}",
                psi.n(),
                q_set.n()
            )));
        }
        if theta.len() != m {
            return Err(Error::Argument(format!(
                "theta has length {}, expected {m}",
                theta.len()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Argument("theta must be finite".into()));
        }
        Ok(ProblemInstance { m, n, q_set, psi, theta })
    }

    /// Power law on `Z^n \ {0}`.
    pub fn power_law(m: usize, n: usize, tau: f64, theta: Vec<f64>) -> Result<Self> {
        Self::new(
            m,
            n,
            DenominatorSet::all_nonzero(n),
            ApproxFunction::power(n, tau),
            theta,
        )
    }
}

/// Which series to sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SeriesMode {
    /// `sum Psi_*(q)^s`.
    PsiStarPow { s: f64 },
    /// `sum Psi(q)^m`.
    PsiPow { m: usize },
    /// `sum |q|^m (Psi(q)/|q|)^eta`.
    Rynne { m: usize, eta: f64 },
}

fn term_value(mode: SeriesMode, norm: i64, log_psi: f64) -> f64 {
    let log_r = (norm as f64).ln();
    let log_star = log_psi - log_r;
    match mode {
        SeriesMode::PsiStarPow { s } => (s * log_star).exp(),
        SeriesMode::PsiPow { m } => (m as f64 * log_psi).exp(),
        SeriesMode::Rynne { m, eta } => (m as f64 * log_r + eta * log_star).exp(),
    }
}

#[derive(Clone, Debug)]
struct Term {
    norm: i64,
    log_psi: f64,
    weight: f64,
}

/// Every nonzero-`Psi` term of `Q` up to a radius, cached as
/// `(|q|, log Psi(q), multiplicity)` sorted by norm.
#[derive(Clone, Debug)]
pub struct TermTable {
    radius: i64,
    terms: Vec<Term>,
}

impl TermTable {
    pub fn build(q_set: &DenominatorSet, psi: &ApproxFunction, radius: i64) -> Result<Self> {
        let radius = radius.max(0);
        let n = q_set.n();
        let mut terms = Vec::new();
        if matches!(q_set, DenominatorSet::AllNonzero { .. }) && psi.is_radial() {
            // Psi is constant on sup-norm shells, so one term per shell is exact.
            let mut probe: Point = smallvec::smallvec![0; n];
            for r in 1..=radius {
                probe[0] = r;
                let v = psi.value(&probe);
                if v > 0.0 {
                    terms.push(Term { norm: r, log_psi: v.ln(), weight: shell_count(n, r) as f64 });
                }
            }
        } else if let Some(support) = psi.sparse_support(radius) {
            for q in support.into_iter().filter(|q| q_set.contains(q)) {
                terms.push(Term { norm: sup_norm(&q), log_psi: psi.value(&q).ln(), weight: 1.0 });
            }
            terms.sort_by(|a, b| a.norm.cmp(&b.norm).then(a.log_psi.total_cmp(&b.log_psi)));
        } else {
            for q in q_set.enumerate_up_to(radius)? {
                let v = psi.value(&q);
                if v > 0.0 {
                    terms.push(Term { norm: sup_norm(&q), log_psi: v.ln(), weight: 1.0 });
                }
            }
            terms.sort_by(|a, b| a.norm.cmp(&b.norm).then(a.log_psi.total_cmp(&b.log_psi)));
        }
        Ok(TermTable { radius, terms })
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    /// Partial sum over `|q| <= radius` (clipped to the table radius).
    pub fn partial_sum(&self, mode: SeriesMode, radius: i64) -> f64 {
        self.terms
            .iter()
            .take_while(|t| t.norm <= radius)
            .map(|t| t.weight * term_value(mode, t.norm, t.log_psi))
            .sum()
    }

    /// Dyadic block sums: block 0 is `|q| = 1`, block `k >= 1` is
    /// `2^{k-1} < |q| <= 2^k`, for `k` up to `floor(log2 radius)`.
    pub fn block_sums(&self, mode: SeriesMode) -> Vec<f64> {
        let kmax = dyadic_floor(self.radius);
        let mut blocks = vec![0.0; kmax as usize + 1];
        for t in &self.terms {
            let k = block_index(t.norm);
            if k <= kmax {
                blocks[k as usize] += t.weight * term_value(mode, t.norm, t.log_psi);
            }
        }
        blocks
    }
}

fn dyadic_floor(r: i64) -> u32 {
    if r < 1 {
        0
    } else {
        63 - (r as u64).leading_zeros()
    }
}

/// Index `k` of the dyadic block `2^{k-1} < r <= 2^k` containing `r >= 1`.
pub fn block_index(r: i64) -> u32 {
    debug_assert!(r >= 1);
    if r == 1 {
        0
    } else {
        64 - ((r - 1) as u64).leading_zeros()
    }
}

/// Exact finite sum over `enumerate_up_to(radius)`.
pub fn partial_series(
    q_set: &DenominatorSet,
    psi: &ApproxFunction,
    mode: SeriesMode,
    radius: i64,
) -> Result<f64> {
    Ok(TermTable::build(q_set, psi, radius)?.partial_sum(mode, radius))
}

/// Ratio below which a fitted block sequence counts as geometrically decaying.
///
/// Any fixed threshold below one biases the detected exponent upward by a
/// constant; one is the only value that is consistent in the radius limit.
pub const CONVERGENCE_RATIO: f64 = 1.0;

/// Number of trailing dyadic blocks used by the fit.
pub const FIT_BLOCKS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailFit {
    /// Fitted per-block ratio of the trailing block sums.
    pub ratio: f64,
    pub convergent: bool,
}

/// Least-squares log-slope of the trailing positive block sums.
pub fn classify_blocks(blocks: &[f64]) -> TailFit {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (used, (k, &b)) in blocks.iter().enumerate().rev().enumerate() {
        if used >= FIT_BLOCKS && pts.len() >= 2 {
            break;
        }
        if b > 0.0 {
            pts.push((k as f64, b.ln()));
        }
    }
    let tail_all_zero = blocks.iter().rev().take(FIT_BLOCKS).all(|&b| b == 0.0);
    if pts.len() < 2 || tail_all_zero {
        return TailFit { ratio: 0.0, convergent: true };
    }
    let len = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / len;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / len;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let ratio = (sxy / sxx).exp();
    TailFit { ratio, convergent: ratio < CONVERGENCE_RATIO }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ExponentKind {
    /// Critical exponent of `sum Psi_*^s`.
    S,
    /// Critical exponent of `sum |q|^m (Psi/|q|)^eta`.
    Eta { m: usize },
}

impl ExponentKind {
    fn mode(self, x: f64) -> SeriesMode {
        match self {
            ExponentKind::S => SeriesMode::PsiStarPow { s: x },
            ExponentKind::Eta { m } => SeriesMode::Rynne { m, eta: x },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentEstimate {
    pub kind: ExponentKind,
    pub lower: f64,
    pub upper: f64,
    pub radius_used: i64,
    pub converged_sum_at_upper: f64,
    pub diverging_partial_at_lower: f64,
    /// Closed form for power laws on `Z^n \ {0}`.
    pub analytic: Option<f64>,
}

impl ExponentEstimate {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// `2^4, ..., 2^14` for `n = 1`; for larger `n` the top radius is capped so
/// the enumerated box stays within [`DEFAULT_POINT_BUDGET`].
pub fn default_radius_schedule(n: usize) -> Vec<i64> {
    let mut out = Vec::new();
    for k in 4..=14 {
        let r = 1i64 << k;
        if n > 1 && ball_count(n, r) > DEFAULT_POINT_BUDGET {
            break;
        }
        out.push(r);
    }
    if out.is_empty() {
        out.push(16);
    }
    out
}

fn analytic_exponent(q_set: &DenominatorSet, psi: &ApproxFunction, kind: ExponentKind) -> Option<f64> {
    let tau = psi.power_exponent()?;
    if !matches!(q_set, DenominatorSet::AllNonzero { .. }) || tau < 0.0 {
        return None;
    }
    let n = q_set.n() as f64;
    Some(match kind {
        ExponentKind::S => n / (1.0 + tau),
        ExponentKind::Eta { m } => (m as f64 + n) / (1.0 + tau),
    })
}

/// Bisection on the exponent with the block-slope classifier.
pub fn estimate_exponent(
    q_set: &DenominatorSet,
    psi: &ApproxFunction,
    kind: ExponentKind,
    tol: f64,
    schedule: &[i64],
) -> Result<ExponentEstimate> {
    if !(tol > 0.0) {
        return Err(Error::Argument("tol must be positive".into()));
    }
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("radius schedule must be nonempty and increasing".into()));
    }
    let radius = *schedule.last().unwrap();
    if radius < 1 << FIT_BLOCKS {
        return Err(Error::Argument(format!(
            "largest radius must be at least {}",
            1 << FIT_BLOCKS
        )));
    }
    let top = 1i64 << dyadic_floor(radius);
    let table = TermTable::build(q_set, psi, top)?;
    let convergent = |x: f64| classify_blocks(&table.block_sums(kind.mode(x))).convergent;

    let n = q_set.n() as f64;
    let mut lo = 0.0;
    let mut hi = match kind {
        ExponentKind::S => n + 1.0,
        ExponentKind::Eta { m } => m as f64 + n + 1.0,
    };
    if convergent(lo) {
        hi = lo;
    } else {
        let mut guard = 0;
        while !convergent(hi) {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 8 {
                return Err(Error::NotFound(format!(
                    "series still classified divergent at exponent {hi}"
                )));
            }
        }
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if convergent(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    Ok(ExponentEstimate {
        kind,
        lower: lo,
        upper: hi,
        radius_used: top,
        converged_sum_at_upper: table.partial_sum(kind.mode(hi), top),
        diverging_partial_at_lower: table.partial_sum(kind.mode(lo), top),
        analytic: analytic_exponent(q_set, psi, kind),
    })
}

/// Classify `sum Psi(q)^m` at the given radius.
pub fn convergence_hypothesis(instance: &ProblemInstance, radius: i64) -> Result<TailFit> {
    let top = 1i64 << dyadic_floor(radius.max(1));
    let table = TermTable::build(&instance.q_set, &instance.psi, top)?;
    Ok(classify_blocks(&table.block_sums(SeriesMode::PsiPow { m: instance.m })))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum FourierDimension {
    /// `min(2s, mn)` with the convergence hypothesis affirmed.
    Formula { value: f64, lower: f64, upper: f64 },
    /// Hypothesis fails for a monotone radial rule on all of `Z^n \ {0}`:
    /// the set has full measure, hence Fourier dimension `mn`.
    FullMeasure { value: f64 },
    UnknownDivergent,
}

impl FourierDimension {
    pub fn value(&self) -> Option<f64> {
        match self {
            FourierDimension::Formula { value, .. } | FourierDimension::FullMeasure { value } => {
                Some(*value)
            }
            FourierDimension::UnknownDivergent => None,
        }
    }
}

pub fn fourier_dimension(
    instance: &ProblemInstance,
    s_est: &ExponentEstimate,
) -> Result<FourierDimension> {
    let mn = (instance.m * instance.n) as f64;
    let hyp = convergence_hypothesis(instance, s_est.radius_used)?;
    if hyp.convergent {
        return Ok(FourierDimension::Formula {
            value: (2.0 * s_est.midpoint()).min(mn),
            lower: (2.0 * s_est.lower).min(mn),
            upper: (2.0 * s_est.upper).min(mn),
        });
    }
    let full_measure = matches!(instance.q_set, DenominatorSet::AllNonzero { .. })
        && instance.psi.is_radial_nonincreasing();
    if full_measure {
        Ok(FourierDimension::FullMeasure { value: mn })
    } else {
        Ok(FourierDimension::UnknownDivergent)
    }
}

/// `min(m(n-1) + eta, mn)` at the bracket midpoint.
pub fn hausdorff_dimension(instance: &ProblemInstance, eta_est: &ExponentEstimate) -> f64 {
    let (m, n) = (instance.m as f64, instance.n as f64);
    (m * (n - 1.0) + eta_est.midpoint()).min(m * n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use smallvec::smallvec;

    #[test]
    fn clamp_examples() {
        let psi = ApproxFunction::power(1, 1.0);
        assert_eq!(psi.value(&[1]), 0.5);
        assert_eq!(psi.value(&[4]), 0.25);
        assert_eq!(psi.value(&[0]), 0.5);
        assert_eq!(psi.value(&[-4]), 0.25);
    }

    #[test]
    fn psi_star_examples() {
        let psi = ApproxFunction::power(1, 1.0);
        assert_eq!(psi_star(&psi, &[2]).unwrap(), 0.25);
        let psi2 = ApproxFunction::power(2, 2.0);
        assert_eq!(psi_star(&psi2, &[2, 1]).unwrap(), 0.125);
        let ex = clamp_psi(1, PsiRule::AxisPowersOfTwo);
        assert_eq!(psi_star(&ex, &[3]).unwrap(), 0.0);
        assert!(matches!(psi_star(&psi, &[0]), Err(Error::Domain(_))));
    }

    #[test]
    fn partial_series_examples() {
        let q = DenominatorSet::all_nonzero(1);
        let psi = ApproxFunction::power(1, 1.0);
        // Psi(2) clamps to 1/2, so Psi_*(+-2) = 1/4: 2 * 1/2 + 2 * 1/4.
        let v = partial_series(&q, &psi, SeriesMode::PsiStarPow { s: 1.0 }, 2).unwrap();
        assert!((v - 1.5).abs() < 1e-14);
        let ex = clamp_psi(1, PsiRule::AxisPowersOfTwo);
        let v = partial_series(&q, &ex, SeriesMode::PsiStarPow { s: 1.0 }, 8).unwrap();
        assert!((v - 0.4375).abs() < 1e-14);
        let empty = DenominatorSet::Members { n: 1, members: BTreeSet::new() };
        assert_eq!(partial_series(&empty, &psi, SeriesMode::PsiStarPow { s: 0.3 }, 50).unwrap(), 0.0);
    }

    #[test]
    fn radial_fast_path_matches_enumeration() {
        for n in 1..=3 {
            let psi = ApproxFunction::power(n, 1.3);
            let fast = TermTable::build(&DenominatorSet::all_nonzero(n), &psi, 9).unwrap();
            let all = DenominatorSet::Predicate { n, pred: Arc::new(|q: &[i64]| q.iter().any(|&x| x != 0)) };
            let slow = TermTable::build(&all, &psi, 9).unwrap();
            for mode in [
                SeriesMode::PsiStarPow { s: 0.7 },
                SeriesMode::PsiPow { m: 2 },
                SeriesMode::Rynne { m: 1, eta: 1.1 },
            ] {
                let a = fast.block_sums(mode);
                let b = slow.block_sums(mode);
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn block_index_boundaries() {
        assert_eq!(block_index(1), 0);
        assert_eq!(block_index(2), 1);
        assert_eq!(block_index(3), 2);
        assert_eq!(block_index(4), 2);
        assert_eq!(block_index(5), 3);
        assert_eq!(block_index(1024), 10);
        assert_eq!(block_index(1025), 11);
    }

    #[test]
    fn classifier_on_synthetic_blocks() {
        let geo: Vec<f64> = (0..10).map(|k| 0.9f64.powi(k)).collect();
        assert!(classify_blocks(&geo).convergent);
        let flat = vec![1.0; 10];
        assert!(!classify_blocks(&flat).convergent);
        assert!(classify_blocks(&[0.0; 8]).convergent);
        let mut sparse = vec![0.0; 12];
        sparse[3] = 1.0;
        sparse[7] = 0.5;
        sparse[11] = 0.25;
        assert!(classify_blocks(&sparse).convergent);
    }

    #[test]
    fn schedule_validation() {
        let q = DenominatorSet::all_nonzero(1);
        let psi = ApproxFunction::power(1, 1.0);
        assert!(estimate_exponent(&q, &psi, ExponentKind::S, 0.01, &[64, 32]).is_err());
        assert!(estimate_exponent(&q, &psi, ExponentKind::S, 0.0, &[64]).is_err());
        assert!(estimate_exponent(&q, &psi, ExponentKind::S, 0.01, &[8]).is_err());
    }

    #[test]
    fn power_law_brackets_contain_closed_form() {
        for n in 1..=2usize {
            let sched = default_radius_schedule(n);
            for tau in [0.5, 1.0, 2.0, 3.0] {
                let q = DenominatorSet::all_nonzero(n);
                let psi = ApproxFunction::power(n, tau);
                let est = estimate_exponent(&q, &psi, ExponentKind::S, 0.005, &sched).unwrap();
                let exact = est.analytic.unwrap();
                assert!((exact - n as f64 / (1.0 + tau)).abs() < 1e-15);
                assert!(est.contains(exact), "n={n} tau={tau} {est:?}");
                assert!(est.upper - est.lower <= 0.005);
            }
        }
    }

    #[test]
    fn eta_bracket_for_unit_power() {
        let q = DenominatorSet::all_nonzero(1);
        let psi = ApproxFunction::power(1, 1.0);
        let est = estimate_exponent(&q, &psi, ExponentKind::Eta { m: 1 }, 0.005, &default_radius_schedule(1)).unwrap();
        assert!(est.contains(1.0), "{est:?}");
    }

    #[test]
    fn axis_example_is_divergent_with_zero_exponent() {
        let inst = ProblemInstance::new(
            1,
            2,
            DenominatorSet::all_nonzero(2),
            clamp_psi(2, PsiRule::AxisPowersOfTwo),
            vec![0.0],
        )
        .unwrap();
        let est = estimate_exponent(&inst.q_set, &inst.psi, ExponentKind::S, 0.005, &default_radius_schedule(2)).unwrap();
        assert_eq!(est.lower, 0.0);
        assert!(est.upper <= 0.01);
        assert_eq!(fourier_dimension(&inst, &est).unwrap(), FourierDimension::UnknownDivergent);
    }

    #[test]
    fn radius_bounds() {
        let psi = ApproxFunction::power(1, 1.0);
        // Psi_* = q^-2 >= 1/100 iff q <= 10.
        assert!(psi.radius_for_star_threshold(0.01).unwrap() >= 10);
        let custom = clamp_psi(1, PsiRule::Custom(Arc::new(|_q: &[i64]| 0.1)));
        assert!(matches!(custom.radius_for_star_threshold(0.01), Err(Error::Unsupported(_))));
        let mut entries = BTreeMap::new();
        entries.insert(smallvec![7], 0.3);
        let table = clamp_psi(1, PsiRule::Table { entries });
        assert!(table.radius_for_star_threshold(1e-6).unwrap() >= 7);
    }

    #[test]
    fn hausdorff_saturates() {
        let inst = ProblemInstance::power_law(1, 1, 0.1, vec![0.0]).unwrap();
        let est = ExponentEstimate {
            kind: ExponentKind::Eta { m: 1 },
            lower: 1.7,
            upper: 1.8,
            radius_used: 16,
            converged_sum_at_upper: 0.0,
            diverging_partial_at_lower: 0.0,
            analytic: None,
        };
        assert_eq!(hausdorff_dimension(&inst, &est), 1.0);
    }
}
