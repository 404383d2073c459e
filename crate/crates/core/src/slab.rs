//! Slab sets `L^m_{delta,q,theta}`, the plane measures `L_{q,theta_i}` and
//! their Fourier coefficients, Monte Carlo sandwich checks and the
//! convergence sums behind the Borel-Cantelli argument.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{self, Write};
use std::sync::Mutex;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::approx::{ProblemInstance, SeriesMode, TermTable};
use crate::bump::BumpFunction;
use crate::error::{Error, Result};
use crate::lattice::{euclid_norm, BoxIter, Point};
use crate::measure::MeasureStage;
use crate::quadrature::GaussLegendre;

/// `L^m_{delta,q,theta}`: every row `x^(i)` lies within `delta` of a
/// hyperplane `q . x = r + theta_i`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlabFamily {
    pub delta: f64,
    pub q: Point,
    pub theta: Vec<f64>,
    /// `delta / |q|_2`, the Euclidean half-width of each slab.
    pub delta_star: f64,
}

impl SlabFamily {
    pub fn new(delta: f64, q: &[i64], theta: Vec<f64>) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::Argument(format!("slab width delta = {delta} must lie in (0, 1/2)")));
        }
        if q.iter().all(|&c| c == 0) {
            return Err(Error::Argument("slab normal q must be nonzero".into()));
        }
        if theta.is_empty() || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Argument("theta must be a nonempty finite vector".into()));
        }
        Ok(SlabFamily { delta, q: q.into(), theta, delta_star: delta / euclid_norm(q) })
    }

    pub fn m(&self) -> usize {
        self.theta.len()
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }
}

/// Membership in `L^m_{delta,q,theta}`, with `r` the nearest integer.
pub fn in_slab_family(x: &[f64], fam: &SlabFamily) -> bool {
    let n = fam.n();
    debug_assert_eq!(x.len(), n * fam.m());
    fam.theta.iter().enumerate().all(|(i, th)| {
        let dot: f64 = x[i * n..(i + 1) * n].iter().zip(&fam.q).map(|(a, &b)| a * b as f64).sum();
        let y = dot - th;
        (y - y.round()).abs() <= fam.delta
    })
}

/// `t` with `k = t q`, if any.
fn line_multiple(q: &[i64], k: &[i64]) -> Option<i64> {
    let j = q.iter().position(|&c| c != 0)?;
    if k[j] % q[j] != 0 {
        return None;
    }
    let t = k[j] / q[j];
    q.iter().zip(k).all(|(&a, &b)| a * t == b).then_some(t)
}

/// `L_{q,theta_i}_hat(k)`: `e^{-2 pi i t theta_i} |q|_2` on `k = t q`, zero off the line.
pub fn plane_fourier(q: &[i64], theta_i: f64, k: &[i64]) -> Complex64 {
    assert_eq!(q.len(), k.len());
    match line_multiple(q, k) {
        Some(t) => Complex64::from_polar(euclid_norm(q), -2.0 * PI * t as f64 * theta_i),
        None => Complex64::new(0.0, 0.0),
    }
}

/// A quadrature value with the gap between two refinements as its error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadratureValue {
    pub value: Complex64,
    pub error: f64,
}

/// Surface-integral evaluation of `L_{q,theta_i}_hat(k)` over the planes
/// `r = 0, ..., |q_1| - 1`, each parameterized by `(x_2, ..., x_n)` with
/// area element `|q|_2 / |q_1|`.
///
/// The integrand factors over `x_2, ..., x_n`; each factor
/// `int_0^1 e^{-2 pi i a x} dx` with `a = k_j - k_1 q_j / q_1` is computed by
/// composite Gauss-Legendre and memoized on the exact rational `a`.
pub struct PlaneOracle {
    rule: GaussLegendre,
    cache: Mutex<HashMap<(i64, i64), QuadratureValue>>,
}

impl Default for PlaneOracle {
    fn default() -> Self {
        Self::new(16)
    }
}

impl PlaneOracle {
    pub fn new(nodes: usize) -> Self {
        PlaneOracle { rule: GaussLegendre::new(nodes.max(2)), cache: Mutex::new(HashMap::new()) }
    }

    /// `int_0^1 e^{-2 pi i (num/den) x} dx`.
    fn factor(&self, num: i64, den: i64) -> QuadratureValue {
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()).max(1) as i64;
        let key = if den < 0 { (-num / g, -den / g) } else { (num / g, den / g) };
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return *v;
        }
        let a = key.0 as f64 / key.1 as f64;
        let f = |x: f64| Complex64::from_polar(1.0, -2.0 * PI * a * x);
        let panels = (a.abs().ceil() as usize).max(2);
        let coarse = self.rule.composite_c(f, 0.0, 1.0, panels);
        let fine = self.rule.composite_c(f, 0.0, 1.0, 2 * panels);
        let v = QuadratureValue { value: fine, error: (fine - coarse).norm() };
        self.cache.lock().unwrap().insert(key, v);
        v
    }

    pub fn coefficient(&self, q: &[i64], theta_i: f64, k: &[i64]) -> Result<QuadratureValue> {
        if q.len() != k.len() {
            return Err(Error::Argument("q and k must have the same length".into()));
        }
        let Some(lead) = q.iter().position(|&c| c != 0) else {
            return Err(Error::Argument("plane normal q must be nonzero".into()));
        };
        let (q1, k1) = (q[lead], k[lead]);
        let area = euclid_norm(q) / q1.unsigned_abs() as f64;
        let mut inner = Complex64::new(area, 0.0);
        let mut err = 0.0;
        for j in (0..q.len()).filter(|&j| j != lead) {
            let f = self.factor(k[j] * q1 - k1 * q[j], q1);
            err = err * f.value.norm() + inner.norm() * f.error + err * f.error;
            inner *= f.value;
        }
        let mut total = Complex64::new(0.0, 0.0);
        for r in 0..q1.unsigned_abs() as i64 {
            let x1 = (r as f64 + theta_i) / q1 as f64;
            total += inner * Complex64::from_polar(1.0, -2.0 * PI * k1 as f64 * x1);
        }
        Ok(QuadratureValue { value: total, error: err * q1.unsigned_abs() as f64 })
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// One-shot form of [`PlaneOracle::coefficient`].
pub fn plane_fourier_oracle(q: &[i64], theta_i: f64, k: &[i64], nodes: usize) -> Result<QuadratureValue> {
    PlaneOracle::new(nodes).coefficient(q, theta_i, k)
}

/// A measure on `R^{mn}` that can be sampled with importance weights and
/// whose normalized transform is available at integer frequencies.
pub trait LatticeMeasure: Sync {
    fn dim(&self) -> usize;
    /// `mu_hat(k) / mu_hat(0)`.
    fn transform(&self, k: &[i64]) -> Result<Complex64>;
    /// A point and its weight; the measure is `E[w 1_x] / E[w]`.
    fn draw(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64);
}

/// Lebesgue measure on `[0,1]^dim`.
#[derive(Clone, Copy, Debug)]
pub struct Lebesgue {
    pub dim: usize,
}

impl LatticeMeasure for Lebesgue {
    fn dim(&self) -> usize {
        self.dim
    }

    fn transform(&self, k: &[i64]) -> Result<Complex64> {
        Ok(if k.iter().all(|&c| c == 0) { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
        ((0..self.dim).map(|_| rng.gen::<f64>()).collect(), 1.0)
    }
}

/// A built stage `mu_k`, drawn from `f0` and weighted by `F_{M_1} ... F_{M_k}`.
pub struct StageMeasure<'a> {
    stage: &'a MeasureStage,
    mass: f64,
}

impl<'a> StageMeasure<'a> {
    pub fn new(stage: &'a MeasureStage) -> Result<Self> {
        let mass = stage.mass();
        if !(mass > 0.0) {
            return Err(Error::Domain(format!("stage mass {mass} is not positive")));
        }
        Ok(StageMeasure { stage, mass })
    }
}

impl LatticeMeasure for StageMeasure<'_> {
    fn dim(&self) -> usize {
        self.stage.dim()
    }

    fn transform(&self, k: &[i64]) -> Result<Complex64> {
        let xi: Vec<f64> = k.iter().map(|&c| c as f64).collect();
        self.stage
            .mu_hat(&xi)
            .map(|(v, _)| v / self.mass)
            .map_err(|e| Error::Argument(format!("transform unavailable at {k:?}: {e}")))
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
        let x = self.stage.f0.sample(rng);
        let w = self.stage.fms.iter().map(|f| f.eval(&x)).product();
        (x, w)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeCheckConfig {
    /// Cutoff of the lower-bound correction sum, `|t| <= kappa / delta`.
    pub kappa: f64,
    /// Order `N` of the `kappa^{-N}` remainder.
    pub tail_order: u32,
    pub samples: usize,
    pub seed: u64,
    /// Half-width of the confidence interval in standard errors.
    pub z: f64,
    /// `(c, C)` relative to `2^m`: the ratio must stay below `C (1 + S_upper)`
    /// and above `c (1 - S_lower) - kappa^{-N} / delta^m`.
    pub band: (f64, f64),
}

impl Default for LatticeCheckConfig {
    fn default() -> Self {
        LatticeCheckConfig { kappa: 4.0, tail_order: 2, samples: 1_000_000, seed: 0, z: 3.0, band: (0.25, 4.0) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeReport {
    pub delta: f64,
    pub q: Vec<i64>,
    pub theta: Vec<f64>,
    pub samples: usize,
    pub estimate: f64,
    pub std_err: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `sum_{0 < |t| <= 2/delta} |mu_hat(t q^T)|`.
    pub sum_upper_cutoff: f64,
    /// `sum_{0 < |t| <= kappa/delta} |mu_hat(t q^T)|`.
    pub sum_lower_cutoff: f64,
    pub kappa_remainder: f64,
    /// `estimate / delta^m`.
    pub ratio: f64,
    /// `ratio / (1 + sum_upper_cutoff)`.
    pub upper_constant: f64,
    /// `ratio / (1 + sum_lower_cutoff)`.
    pub lower_constant: f64,
    pub within_band: bool,
}

/// `sum_{0 < |t|_inf <= radius} |mu_hat(t_1 q, ..., t_m q)|`.
fn line_sum(mu: &dyn LatticeMeasure, q: &[i64], m: usize, radius: i64) -> Result<f64> {
    let n = q.len();
    let mut total = 0.0;
    for t in BoxIter::new(m, radius) {
        if t.iter().all(|&c| c == 0) {
            continue;
        }
        let k: Vec<i64> = t.iter().flat_map(|&ti| q.iter().map(move |&qj| ti * qj)).collect();
        debug_assert_eq!(k.len(), m * n);
        total += mu.transform(&k)?.norm();
    }
    Ok(total)
}

const BLOCK: usize = 1 << 16;

/// Sandwich check of `mu(L^m)` against `delta^m (1 + correction)`.
pub fn lattice_lemma_check(
    mu: &dyn LatticeMeasure,
    fam: &SlabFamily,
    cfg: &LatticeCheckConfig,
) -> Result<LatticeReport> {
    let (m, n) = (fam.m(), fam.n());
    if mu.dim() != m * n {
        return Err(Error::Argument(format!("measure lives in dimension {}, slabs in {}", mu.dim(), m * n)));
    }
    if cfg.samples == 0 || !(cfg.kappa > 0.0) {
        return Err(Error::Argument("sample count and kappa must be positive".into()));
    }
    let blocks = cfg.samples.div_ceil(BLOCK);
    // Per block: sum w, sum w 1_L, sum w^2, sum (w 1_L)^2, sum w^2 1_L.
    let sums = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let count = BLOCK.min(cfg.samples - b * BLOCK);
            let mut acc = [0.0f64; 4];
            for _ in 0..count {
                let (x, w) = mu.draw(&mut rng);
                let hit = if w > 0.0 && in_slab_family(&x, fam) { w } else { 0.0 };
                acc[0] += w;
                acc[1] += hit;
                acc[2] += w * w;
                acc[3] += hit * w;
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold([0.0f64; 4], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]);
    let nf = cfg.samples as f64;
    let (sw, sh, sww, shw) = (sums[0] / nf, sums[1] / nf, sums[2] / nf, sums[3] / nf);
    if !(sw > 0.0) {
        return Err(Error::Domain("no sample carries positive weight".into()));
    }
    let estimate = sh / sw;
    // Delta method for the ratio of means; (w 1_L)^2 = w 1_L w.
    let var = (shw - 2.0 * estimate * shw + estimate * estimate * sww) / (sw * sw);
    let std_err = (var.max(0.0) / nf).sqrt();
    let upper_radius = (2.0 / fam.delta).floor() as i64;
    let lower_radius = (cfg.kappa / fam.delta).floor() as i64;
    let sum_upper_cutoff = line_sum(mu, &fam.q, m, upper_radius)?;
    let sum_lower_cutoff = line_sum(mu, &fam.q, m, lower_radius)?;
    let ratio = estimate / fam.delta.powi(m as i32);
    let upper_constant = ratio / (1.0 + sum_upper_cutoff);
    let lower_constant = ratio / (1.0 + sum_lower_cutoff);
    let scale = 2f64.powi(m as i32);
    let kappa_remainder = cfg.kappa.powi(-(cfg.tail_order as i32));
    // The lower correction is signed, so it only bites while the sum is below 1.
    let upper_ok = upper_constant <= cfg.band.1 * scale;
    let lower_ok = ratio >= cfg.band.0 * scale * (1.0 - sum_lower_cutoff) - kappa_remainder / fam.delta.powi(m as i32);
    Ok(LatticeReport {
        delta: fam.delta,
        q: fam.q.to_vec(),
        theta: fam.theta.clone(),
        samples: cfg.samples,
        estimate,
        std_err,
        ci_lo: estimate - cfg.z * std_err,
        ci_hi: estimate + cfg.z * std_err,
        sum_upper_cutoff,
        sum_lower_cutoff,
        kappa_remainder,
        ratio,
        upper_constant,
        lower_constant,
        within_band: upper_ok && lower_ok,
    })
}

pub const LATTICE_CSV_HEADER: &str = "delta,q,estimate,ci_lo,ci_hi,sum_upper_cutoff,sum_lower_cutoff,ratio";

/// One row per report; `q` is written with spaces between components.
pub fn write_lattice_csv<W: Write>(reports: &[LatticeReport], mut out: W) -> io::Result<()> {
    writeln!(out, "{LATTICE_CSV_HEADER}")?;
    for r in reports {
        let q: Vec<String> = r.q.iter().map(|c| c.to_string()).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.delta,
            q.join(" "),
            r.estimate,
            r.ci_lo,
            r.ci_hi,
            r.sum_upper_cutoff,
            r.sum_lower_cutoff,
            r.ratio
        )?;
    }
    Ok(())
}

/// Both sides of the smoothed Parseval identity for `m = n = 1` and a
/// trigonometric density `1 + sum_j a_j cos(2 pi j x)` on `[0, 1]`:
/// `int (phi_{delta_*} * L_{q,theta}) dmu = delta (1 + S + T)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParsevalToy {
    pub lhs: f64,
    pub rhs: Complex64,
    /// Terms with `0 < |t| < kappa / delta`.
    pub s_sum: Complex64,
    /// Terms with `|t| >= kappa / delta`.
    pub t_sum: Complex64,
    pub gap: f64,
}

pub fn parseval_toy(
    q: i64,
    theta: f64,
    delta: f64,
    kappa: f64,
    modes: &[(i64, f64)],
    phi: &BumpFunction,
) -> Result<ParsevalToy> {
    if q == 0 || phi.dim() != 1 || !(delta > 0.0 && delta < 0.5) {
        return Err(Error::Argument("need q != 0, a 1-d bump and delta in (0, 1/2)".into()));
    }
    if modes.iter().any(|&(j, _)| j <= 0) || modes.iter().map(|m| m.1.abs()).sum::<f64>() > 1.0 {
        return Err(Error::Argument("modes need positive frequencies and total amplitude at most 1".into()));
    }
    let qa = q.unsigned_abs() as f64;
    let dstar = delta / qa;
    let density = |x: f64| 1.0 + modes.iter().map(|&(j, a)| a * (2.0 * PI * j as f64 * x).cos()).sum::<f64>();
    // phi_{delta_*}(y) = phi(y / delta_*), one copy per point (r + theta) / q.
    let reach = dstar * phi.support_radius();
    let rule = GaussLegendre::new(12);
    let pieces = 4 * phi.spline_order();
    let (lo_r, hi_r) = {
        let a = (-theta - qa * reach).floor() as i64 - 1;
        let b = (qa + qa * reach - theta).ceil() as i64 + 1;
        (a.min(-b), b.max(-a))
    };
    let mut lhs = 0.0;
    for r in lo_r..=hi_r {
        let c = (r as f64 + theta) / q as f64;
        let (a, b) = ((c - reach).max(0.0), (c + reach).min(1.0));
        if a >= b {
            continue;
        }
        let h = (b - a) / pieces as f64;
        for i in 0..pieces {
            let x0 = a + i as f64 * h;
            lhs += rule.integrate(|x| density(x) * phi.eval_1d((x - c) / dstar), x0, x0 + h);
        }
    }
    let mu_hat = |k: i64| -> f64 {
        if k == 0 {
            return 1.0;
        }
        modes.iter().filter(|m| m.0 == k.abs()).map(|m| 0.5 * m.1).sum()
    };
    let max_freq = modes.iter().map(|m| m.0).max().unwrap_or(0);
    let t_max = max_freq / q.abs();
    let split = kappa / delta;
    let (mut s_sum, mut t_sum) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for t in -t_max..=t_max {
        if t == 0 {
            continue;
        }
        let k = t * q;
        let term = Complex64::from_polar(mu_hat(k), -2.0 * PI * t as f64 * theta) * phi.transform_1d(dstar * k as f64);
        if (t.abs() as f64) < split {
            s_sum += term;
        } else {
            t_sum += term;
        }
    }
    let rhs = (Complex64::new(1.0, 0.0) + s_sum + t_sum) * delta;
    Ok(ParsevalToy { lhs, rhs, s_sum, t_sum, gap: (rhs - lhs).norm() })
}

/// One dyadic block `2^{k-1} < |q| <= 2^k` of both convergence series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesBlock {
    pub block: u32,
    pub lo: i64,
    pub hi: i64,
    /// `sum Psi(q)^m` over the block.
    pub mass_block: f64,
    /// `sum Psi(q)^s |q|^{-s}` over the block.
    pub dimension_block: f64,
    pub mass_ratio: Option<f64>,
    pub dimension_ratio: Option<f64>,
    pub mass_partial: f64,
    pub dimension_partial: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesTable {
    pub s: f64,
    pub m: usize,
    pub blocks: Vec<SeriesBlock>,
    /// Ratios below this count as geometric shrinking.
    pub ratio_threshold: f64,
    /// Blocks above `2^start_block` are judged.
    pub start_block: u32,
    pub mass_cauchy: bool,
    pub dimension_cauchy: bool,
}

/// Dyadic block sums of `sum Psi(q)^m` and `sum Psi(q)^s |q|^{-s}` up to
/// `2^max_block`, with Cauchy flags from the block ratios past `2^start_block`.
pub fn borel_cantelli_sums(
    instance: &ProblemInstance,
    s: f64,
    max_block: u32,
    start_block: u32,
    ratio_threshold: f64,
) -> Result<SeriesTable> {
    if !(s > 0.0) || max_block > 40 {
        return Err(Error::Argument(format!("need s > 0 and at most 40 blocks (s = {s}, blocks = {max_block})")));
    }
    let m = instance.m;
    let table = TermTable::build(&instance.q_set, &instance.psi, 1i64 << max_block)?;
    let mass = table.block_sums(SeriesMode::PsiPow { m });
    let dim = table.block_sums(SeriesMode::PsiStarPow { s });
    let ratio = |v: &[f64], k: usize| (k > 0 && v[k - 1] > 0.0).then(|| v[k] / v[k - 1]);
    let (mut pm, mut pd) = (0.0, 0.0);
    let mut blocks = Vec::with_capacity(mass.len());
    for k in 0..mass.len() {
        pm += mass[k];
        pd += dim[k];
        blocks.push(SeriesBlock {
            block: k as u32,
            lo: if k == 0 { 1 } else { (1i64 << (k - 1)) + 1 },
            hi: 1i64 << k,
            mass_block: mass[k],
            dimension_block: dim[k],
            mass_ratio: ratio(&mass, k),
            dimension_ratio: ratio(&dim, k),
            mass_partial: pm,
            dimension_partial: pd,
        });
    }
    let cauchy = |pick: fn(&SeriesBlock) -> (f64, Option<f64>)| {
        let judged: Vec<_> = blocks.iter().filter(|b| b.block > start_block).map(pick).collect();
        !judged.is_empty()
            && judged.iter().all(|&(v, r)| v == 0.0 || r.is_some_and(|r| r < ratio_threshold))
    };
    let mass_cauchy = cauchy(|b| (b.mass_block, b.mass_ratio));
    let dimension_cauchy = cauchy(|b| (b.dimension_block, b.dimension_ratio));
    Ok(SeriesTable { s, m, blocks, ratio_threshold, start_block, mass_cauchy, dimension_cauchy })
}

impl SeriesTable {
    /// Largest ratio past the start block, per series.
    pub fn worst_ratios(&self) -> (f64, f64) {
        let tail = self.blocks.iter().filter(|b| b.block > self.start_block);
        tail.fold((0.0f64, 0.0f64), |(a, b), blk| {
            (a.max(blk.mass_ratio.unwrap_or(0.0)), b.max(blk.dimension_ratio.unwrap_or(0.0)))
        })
    }
}

/// Per-row torus fraction of `L_{delta,q,theta_i}` for uniform samples.
pub fn slab_density_sample(fam: &SlabFamily, samples: usize, seed: u64) -> f64 {
    let row = SlabFamily { theta: vec![fam.theta[0]], ..fam.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = fam.n();
    let hits = (0..samples)
        .filter(|_| {
            let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            in_slab_family(&x, &row)
        })
        .count();
    hits as f64 / samples.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::make_bspline_bump;

    #[test]
    fn slab_membership_examples() {
        let fam = SlabFamily::new(0.1, &[1], vec![0.0]).unwrap();
        assert!(in_slab_family(&[0.0], &fam));
        assert!(!in_slab_family(&[0.5], &fam));
        assert!(in_slab_family(&[0.95], &fam));
        assert!(SlabFamily::new(0.5, &[1], vec![0.0]).is_err());
        assert!(SlabFamily::new(0.1, &[0, 0], vec![0.0]).is_err());
    }

    #[test]
    fn plane_fourier_examples() {
        assert!((plane_fourier(&[2, 1], 0.3, &[0, 0]) - Complex64::new(5f64.sqrt(), 0.0)).norm() < 1e-15);
        let v = plane_fourier(&[2, 1], 0.25, &[4, 2]);
        assert!((v - Complex64::new(-(5f64.sqrt()), 0.0)).norm() < 1e-12);
        assert_eq!(plane_fourier(&[2, 1], 0.25, &[1, 1]), Complex64::new(0.0, 0.0));
        assert_eq!(plane_fourier(&[0, 3], 0.1, &[1, 3]), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn oracle_reproduces_closed_form_in_the_plane() {
        let oracle = PlaneOracle::default();
        for q in [[2i64, 1], [0, 3], [-3, 2], [1, -4]] {
            for k in BoxIter::new(2, 6) {
                for th in [0.0, 0.3] {
                    let o = oracle.coefficient(&q, th, &k).unwrap();
                    let c = plane_fourier(&q, th, &k);
                    assert!((o.value - c).norm() < 1e-9, "q {q:?} k {k:?}: {} vs {c}", o.value);
                    assert!(o.error < 1e-9);
                }
            }
        }
    }

    #[test]
    fn lebesgue_sandwich_has_no_correction() {
        let fam = SlabFamily::new(0.1, &[3], vec![0.3]).unwrap();
        let cfg = LatticeCheckConfig { samples: 200_000, seed: 7, ..Default::default() };
        let rep = lattice_lemma_check(&Lebesgue { dim: 1 }, &fam, &cfg).unwrap();
        assert_eq!(rep.sum_upper_cutoff, 0.0);
        assert_eq!(rep.sum_lower_cutoff, 0.0);
        assert!((rep.estimate - 0.2).abs() <= 3.0 * rep.std_err + 1e-12, "{rep:?}");
        assert!(rep.within_band);
        let mut csv = Vec::new();
        write_lattice_csv(&[rep], &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with(LATTICE_CSV_HEADER));
        assert!(text.lines().nth(1).unwrap().starts_with("0.1,3,"));
    }

    #[test]
    fn lattice_check_is_seed_deterministic() {
        let fam = SlabFamily::new(0.2, &[2, 1], vec![0.0, 0.3]).unwrap();
        let cfg = LatticeCheckConfig { samples: 100_000, seed: 11, ..Default::default() };
        let a = lattice_lemma_check(&Lebesgue { dim: 4 }, &fam, &cfg).unwrap();
        let b = lattice_lemma_check(&Lebesgue { dim: 4 }, &fam, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(lattice_lemma_check(&Lebesgue { dim: 3 }, &fam, &cfg).is_err());
    }

    #[test]
    fn parseval_toy_balances() {
        let phi = make_bspline_bump(1, 4, 0.9).unwrap();
        for (q, th) in [(1, 0.0), (3, 0.3), (-2, 0.7)] {
            let toy = parseval_toy(q, th, 0.2, 2.0, &[(3, 0.4), (6, 0.3), (2, 0.2)], &phi).unwrap();
            assert!(toy.gap < 1e-6, "q = {q}: {toy:?}");
        }
        // Uniform density: only the main term survives.
        let toy = parseval_toy(2, 0.1, 0.1, 2.0, &[], &phi).unwrap();
        assert!((toy.lhs - 0.1).abs() < 1e-6);
    }

    #[test]
    fn series_blocks_follow_the_power_law() {
        let inst = ProblemInstance::power_law(1, 1, 1.0, vec![0.0]).unwrap();
        let tab = borel_cantelli_sums(&inst, 0.6, 14, 6, 0.95).unwrap();
        let (mass, dim) = tab.worst_ratios();
        assert!(dim < 0.95 && dim > 0.8, "{dim}");
        assert!(mass > 0.95, "{mass}");
        assert!(tab.dimension_cauchy && !tab.mass_cauchy);
        let low = borel_cantelli_sums(&inst, 0.4, 14, 6, 0.95).unwrap();
        assert!(!low.dimension_cauchy);
    }
}
