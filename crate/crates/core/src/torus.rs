//! Periodic bumps on the torus and the single-scale functions `F_M`.
//!
//! For `q in Z^n` and `theta in R^m`, `Phi^eps_{q,theta}(x)` is the
//! `Z^m`-periodisation of `phi^eps = eps^{-m} phi(./eps)` evaluated at
//! `xq - theta`, where `x` is an `m x n` matrix and `(xq)_i = q . x^{(i)}`.
//! Its spectrum is supported on the rank-one frequencies `ell = k q^T`.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::approx::ApproxFunction;
use crate::bump::BumpFunction;
use crate::divisor::{divisor_set, l_radius, outer, quotient, wigert_envelope, ScaleSet, BOUNDARY_RTOL};
use crate::error::{Error, Result};
use crate::lattice::{sup_norm, BoxIter, Point};
use crate::spectrum::{fft_nd, SparseSpectrum, FP_ALLOWANCE};

fn check_q(q: &[i64]) -> Result<usize> {
    q.iter()
        .position(|&x| x != 0)
        .ok_or_else(|| Error::Domain("q must be nonzero".into()))
}

/// `e^{-2 pi i k.theta} phi_hat(eps k)`.
fn rank_one_term(phi: &BumpFunction, eps: f64, k: &[i64], theta: &[f64]) -> Complex64 {
    let phase: f64 = k.iter().zip(theta).map(|(&a, &t)| a as f64 * t).sum();
    let arg: Vec<f64> = k.iter().map(|&a| eps * a as f64).collect();
    Complex64::cis(-2.0 * PI * phase.fract()) * phi.transform(&arg)
}

/// Closed form of the coefficient of `Phi^eps_{q,theta}` at `ell`, using
/// column `j` (which must satisfy `q_j != 0`). `None` if `q_j = 0`.
pub fn phi_q_theta_coeff_via(
    phi: &BumpFunction,
    eps: f64,
    q: &[i64],
    theta: &[f64],
    ell: &[i64],
    j: usize,
) -> Result<Option<Complex64>> {
    let (m, n) = (theta.len(), q.len());
    check_q(q)?;
    if ell.len() != m * n {
        return Err(Error::Argument("frequency length must be m*n".into()));
    }
    if q[j] == 0 {
        return Ok(None);
    }
    if quotient(ell, q, m, n).is_none() {
        return Ok(Some(Complex64::new(0.0, 0.0)));
    }
    let k: Vec<i64> = (0..m).map(|i| ell[i * n + j] / q[j]).collect();
    Ok(Some(rank_one_term(phi, eps, &k, theta)))
}

/// Coefficient of `Phi^eps_{q,theta}` at `ell`: `e^{-2 pi i k.theta}
/// phi_hat(eps k)` if `ell = k q^T`, else 0. Uses the first nonzero column.
pub fn phi_q_theta_coeff(
    phi: &BumpFunction,
    eps: f64,
    q: &[i64],
    theta: &[f64],
    ell: &[i64],
) -> Result<Complex64> {
    let j = check_q(q)?;
    if phi.dim() != theta.len() {
        return Err(Error::Argument("bump dimension must equal m".into()));
    }
    if ell.iter().all(|&x| x == 0) {
        return Ok(Complex64::new(phi.transform(&vec![0.0; theta.len()]), 0.0));
    }
    Ok(phi_q_theta_coeff_via(phi, eps, q, theta, ell, j)?.unwrap())
}

/// One-dimensional periodisation `sum_r eps^{-1} b((y - r)/eps)` of a bump factor.
pub fn periodic_factor(phi: &BumpFunction, eps: f64, y: f64) -> f64 {
    let reach = phi.support_radius() * eps;
    let lo = (y - reach).floor() as i64;
    let hi = (y + reach).ceil() as i64;
    let mut acc = 0.0;
    for r in lo..=hi {
        let t = (y - r as f64) / eps;
        if t.abs() < phi.support_radius() {
            acc += phi.eval_1d(t) / eps;
        }
    }
    acc
}

/// `Phi^eps_{q,theta}(x)` for an `m x n` matrix `x` stored row-major.
pub fn phi_q_theta_eval(phi: &BumpFunction, eps: f64, q: &[i64], theta: &[f64], x: &[f64]) -> f64 {
    let n = q.len();
    let mut out = 1.0;
    for (i, th) in theta.iter().enumerate() {
        let y: f64 = (0..n).map(|j| q[j] as f64 * x[i * n + j]).sum::<f64>() - th;
        out *= periodic_factor(phi, eps, y);
        if out == 0.0 {
            break;
        }
    }
    out
}

/// Quadrature oracle for the spectrum of `Phi^eps_{q,theta}`.
///
/// The bump is a tensor product, so the integral over `[0,1)^{mn}` splits
/// into one `n`-dimensional integral per row; each is computed by a periodic
/// Riemann sum on an `N^n` grid (one FFT yields every frequency at once).
#[derive(Clone, Debug)]
pub struct PhiOracle {
    m: usize,
    n: usize,
    size: usize,
    rows: Vec<Vec<Complex64>>,
}

impl PhiOracle {
    pub fn new(
        phi: &BumpFunction,
        eps: f64,
        q: &[i64],
        theta: &[f64],
        grid_size: usize,
    ) -> Result<Self> {
        check_q(q)?;
        if grid_size < 64 {
            return Err(Error::Argument("oracle grid needs at least 64 points per axis".into()));
        }
        let (m, n) = (theta.len(), q.len());
        let total = grid_size.pow(n as u32);
        let norm = 1.0 / total as f64;
        let rows = theta
            .iter()
            .map(|&th| {
                let mut data: Vec<Complex64> = (0..total)
                    .map(|idx| {
                        let mut rest = idx;
                        let mut y = -th;
                        for j in (0..n).rev() {
                            let c = rest % grid_size;
                            rest /= grid_size;
                            y += q[j] as f64 * c as f64 / grid_size as f64;
                        }
                        Complex64::new(periodic_factor(phi, eps, y) * norm, 0.0)
                    })
                    .collect();
                fft_nd(&mut data, grid_size, n, false);
                data
            })
            .collect();
        Ok(PhiOracle { m, n, size: grid_size, rows })
    }

    /// Numerical coefficient at `ell`; accurate for `|ell|` well below `N/2`.
    pub fn coefficient(&self, ell: &[i64]) -> Complex64 {
        let mut out = Complex64::new(1.0, 0.0);
        let size = self.size as i64;
        for i in 0..self.m {
            let mut idx = 0usize;
            for j in 0..self.n {
                idx = idx * self.size + ell[i * self.n + j].rem_euclid(size) as usize;
            }
            out *= self.rows[i][idx];
        }
        out
    }
}

/// Single-frequency form of [`PhiOracle`].
pub fn phi_q_theta_oracle(
    phi: &BumpFunction,
    eps: f64,
    q: &[i64],
    theta: &[f64],
    ell: &[i64],
    grid_size: usize,
) -> Result<Complex64> {
    Ok(PhiOracle::new(phi, eps, q, theta, grid_size)?.coefficient(ell))
}

/// Unfactored Riemann sum over the full `N^{mn}` grid, for small `mn`.
pub fn phi_q_theta_direct(
    phi: &BumpFunction,
    eps: f64,
    q: &[i64],
    theta: &[f64],
    ell: &[i64],
    grid_size: usize,
) -> Complex64 {
    let d = ell.len();
    let total = grid_size.pow(d as u32);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut x = vec![0.0; d];
    for idx in 0..total {
        let mut rest = idx;
        for c in (0..d).rev() {
            x[c] = (rest % grid_size) as f64 / grid_size as f64;
            rest /= grid_size;
        }
        let v = phi_q_theta_eval(phi, eps, q, theta, &x);
        if v != 0.0 {
            let phase: f64 = ell.iter().zip(&x).map(|(&l, &t)| l as f64 * t).sum();
            acc += Complex64::cis(-2.0 * PI * phase) * v;
        }
    }
    acc / total as f64
}

/// `F_M = |Q'|^{-1} sum_{q in Q'(M)} Phi^{Psi(q)}_{q,theta}`.
#[derive(Clone, Debug)]
pub struct SingleScale {
    pub m: usize,
    pub n: usize,
    pub scale: f64,
    pub members: Vec<Point>,
    pub widths: Vec<f64>,
    pub theta: Vec<f64>,
    pub phi: BumpFunction,
    index: HashMap<Point, usize>,
}

impl SingleScale {
    pub fn new(
        qprime: &ScaleSet,
        psi: &ApproxFunction,
        theta: &[f64],
        phi: &BumpFunction,
    ) -> Result<Self> {
        if qprime.is_empty() {
            return Err(Error::DegenerateScale {
                scale: qprime.scale,
                reason: "Q'(M) is empty".into(),
            });
        }
        let m = theta.len();
        let n = qprime.members[0].len();
        if phi.dim() != m {
            return Err(Error::Argument("bump dimension must equal m".into()));
        }
        let widths = qprime.members.iter().map(|q| psi.value(q)).collect();
        let index = qprime
            .members
            .iter()
            .enumerate()
            .map(|(i, q)| (q.clone(), i))
            .collect();
        Ok(SingleScale {
            m,
            n,
            scale: qprime.scale,
            members: qprime.members.clone(),
            widths,
            theta: theta.to_vec(),
            phi: phi.clone(),
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, q: &[i64]) -> bool {
        self.index.contains_key(q)
    }

    /// Smallest `|q|` over `Q'(M)`.
    pub fn min_norm(&self) -> i64 {
        self.members.iter().map(|q| sup_norm(q)).min().unwrap_or(0)
    }

    /// Coefficient at `ell` via the divisor set of `ell`.
    pub fn coefficient(&self, ell: &[i64]) -> Result<Complex64> {
        if ell.iter().all(|&x| x == 0) {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for q in divisor_set(ell, self.m, self.n)? {
            if let Some(&i) = self.index.get(&q) {
                let j = q.iter().position(|&x| x != 0).unwrap();
                let k: Vec<i64> = (0..self.m).map(|r| ell[r * self.n + j] / q[j]).collect();
                acc += rank_one_term(&self.phi, self.widths[i], &k, &self.theta);
            }
        }
        Ok(acc / self.len() as f64)
    }

    /// Bound on `sum_{|ell| > cutoff} |F_hat(ell)|`.
    pub fn tail_bound(&self, cutoff: i64) -> f64 {
        let total: f64 = self
            .members
            .iter()
            .zip(&self.widths)
            .map(|(q, &w)| self.phi.dilated_lattice_tail(w, cutoff / sup_norm(q) + 1))
            .sum();
        total / self.len() as f64
    }

    /// Bound on `sum_ell |F_hat(ell)|`.
    pub fn l1_bound(&self) -> f64 {
        let total: f64 = self.widths.iter().map(|&w| self.phi.dilated_lattice_sum(w)).sum();
        total / self.len() as f64
    }

    /// Smallest cutoff (a power of two) whose tail bound is at most `tol`.
    pub fn cutoff_for_tail(&self, tol: f64) -> i64 {
        let mut c = self.min_norm().max(1);
        while self.tail_bound(c) > tol && c < (1 << 40) {
            c *= 2;
        }
        c
    }

    /// Exhaustive spectrum for `|ell| <= cutoff`, generated from the pairs
    /// `(q, k)` with `|k||q| <= cutoff`.
    pub fn spectrum(&self, cutoff: i64) -> SparseSpectrum {
        let mut out = SparseSpectrum::new(self.m, self.n, cutoff);
        for (q, &w) in self.members.iter().zip(&self.widths) {
            let reach = cutoff / sup_norm(q);
            for k in BoxIter::new(self.m, reach) {
                out.add(outer(&k, q), rank_one_term(&self.phi, w, &k, &self.theta));
            }
        }
        let count = self.len() as f64;
        for c in out.coeffs.values_mut() {
            *c /= count;
        }
        out.prune_zeros();
        out.coeff_error = FP_ALLOWANCE;
        out.tail_l1 = self.tail_bound(cutoff);
        out
    }

    /// Direct evaluation of `F_M(x)`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let total: f64 = self
            .members
            .iter()
            .zip(&self.widths)
            .map(|(q, &w)| phi_q_theta_eval(&self.phi, w, q, &self.theta, x))
            .sum();
        total / self.len() as f64
    }

    /// Members `q` for which some `r` has `|xq - r - theta| <= Psi(q)`.
    pub fn solutions(&self, x: &[f64]) -> Vec<&Point> {
        self.members
            .iter()
            .zip(&self.widths)
            .filter(|(q, &w)| approximates(x, q, &self.theta, w))
            .map(|(q, _)| q)
            .collect()
    }

    /// Bound on `sup |d^a F_M / dx_{ij}^a|`.
    pub fn derivative_sup(&self, a: usize) -> f64 {
        // Only row i of the bump product depends on x_{ij}; the other m-1
        // periodised factors are bounded by eps^{-1} sup b.
        let sup_b = self.phi.sup().powf(1.0 / self.m as f64);
        self.members
            .iter()
            .zip(&self.widths)
            .map(|(q, &w)| {
                let qmax = sup_norm(q) as f64;
                let one = self.phi.derivative_sup_1d(a) * qmax.powi(a as i32) / w.powi(a as i32 + 1);
                one * (sup_b / w).powi(self.m as i32 - 1)
            })
            .fold(0.0, f64::max)
    }
}

/// `|xq - r - theta|_inf <= width` for the nearest integer vector `r`.
pub fn approximates(x: &[f64], q: &[i64], theta: &[f64], width: f64) -> bool {
    let n = q.len();
    theta.iter().enumerate().all(|(i, th)| {
        let y: f64 = (0..n).map(|j| q[j] as f64 * x[i * n + j]).sum::<f64>() - th;
        (y - y.round()).abs() <= width
    })
}

/// Spectrum of `F_M` on `|ell| <= cutoff`, one divisor set per frequency.
pub fn fm_spectrum(
    qprime: &ScaleSet,
    phi: &BumpFunction,
    psi: &ApproxFunction,
    theta: &[f64],
    cutoff: i64,
) -> Result<SparseSpectrum> {
    if cutoff < 1 {
        return Err(Error::Argument("cutoff must be at least 1".into()));
    }
    let fm = SingleScale::new(qprime, psi, theta, phi)?;
    let dim = fm.m * fm.n;
    let freqs: Vec<Point> = BoxIter::new(dim, cutoff).collect();
    let coeffs: Vec<(Point, Complex64)> = freqs
        .into_par_iter()
        .map(|ell| {
            let c = fm.coefficient(&ell).expect("frequency has the right length");
            (ell, c)
        })
        .filter(|(_, c)| c.re != 0.0 || c.im != 0.0)
        .collect();
    let mut out = SparseSpectrum::new(fm.m, fm.n, cutoff);
    out.coeffs = coeffs.into_iter().collect();
    out.coeff_error = FP_ALLOWANCE;
    out.tail_l1 = fm.tail_bound(cutoff);
    Ok(out)
}

/// Whether `x` meets the approximation slabs of each scale.
pub fn support_pointcheck(
    x: &[f64],
    qprimes: &[ScaleSet],
    psi: &ApproxFunction,
    theta: &[f64],
) -> Vec<bool> {
    qprimes
        .iter()
        .map(|set| set.members.iter().any(|q| approximates(x, q, theta, psi.value(q))))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FmBoundsReport {
    pub scale: f64,
    pub cutoff: i64,
    pub zero_coefficient_is_one: bool,
    pub max_abs: f64,
    pub bounded_by_one: bool,
    pub annulus_radius: i64,
    pub annulus_is_zero: bool,
    /// Smallest `C` with `|F_hat(ell)| <= C |ell|^{-s} w_zeta(|ell|) log2^{n+1} M`
    /// over `3 <= |ell| <= cutoff`.
    pub fitted_constant: f64,
    pub fit_frequency: Option<Vec<i64>>,
}

impl FmBoundsReport {
    pub fn structural_parts_hold(&self) -> bool {
        self.zero_coefficient_is_one && self.bounded_by_one && self.annulus_is_zero
    }
}

/// Checks of `F_hat(0) = 1`, `|F_hat| <= 1`, the zero annulus and the fitted
/// decay constant.
pub fn verify_fm_bounds(spec: &SparseSpectrum, scale: f64, s: f64, zeta: f64) -> FmBoundsReport {
    let zero = Point::from_elem(0, spec.dim());
    let c0 = spec.coeffs.get(&zero).copied().unwrap_or_default();
    let max_abs = spec.max_abs();
    let h = if scale >= 2.0 {
        (l_radius(scale, spec.m, spec.n) * (1.0 + BOUNDARY_RTOL)).floor() as i64
    } else {
        0
    };
    let annulus_is_zero = spec
        .coeffs
        .iter()
        .all(|(ell, c)| {
            let r = sup_norm(ell);
            r == 0 || r > h || (c.re == 0.0 && c.im == 0.0)
        });
    let log_factor = scale.log2().powi(spec.n as i32 + 1);
    let mut fitted: f64 = 0.0;
    let mut at = None;
    for (ell, c) in &spec.coeffs {
        let r = sup_norm(ell);
        if r < 3 {
            continue;
        }
        let t = r as f64;
        let env = t.powf(-s) * wigert_envelope(zeta, t).expect("t >= 3 > e") * log_factor;
        let ratio = c.norm() / env;
        if ratio > fitted {
            fitted = ratio;
            at = Some(ell.to_vec());
        }
    }
    FmBoundsReport {
        scale,
        cutoff: spec.cutoff,
        zero_coefficient_is_one: c0.re == 1.0 && c0.im == 0.0,
        max_abs,
        bounded_by_one: max_abs <= 1.0 + 1e-12,
        annulus_radius: h,
        annulus_is_zero,
        fitted_constant: fitted,
        fit_frequency: at,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::DenominatorSet;
    use crate::bump::make_bspline_bump;
    use crate::divisor::scale_set_q_prime;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coefficient_examples() {
        let phi = make_bspline_bump(1, 4, 0.9).unwrap();
        let eps = 0.3;
        assert_eq!(phi_q_theta_coeff(&phi, eps, &[2], &[0.0], &[0]).unwrap(), Complex64::new(1.0, 0.0));
        let c = phi_q_theta_coeff(&phi, eps, &[2], &[0.0], &[4]).unwrap();
        assert!((c.re - phi.transform_1d(2.0 * eps)).abs() < 1e-15 && c.im == 0.0);
        assert_eq!(phi_q_theta_coeff(&phi, eps, &[2], &[0.0], &[3]).unwrap(), Complex64::new(0.0, 0.0));
        assert!(phi_q_theta_coeff(&phi, eps, &[0], &[0.0], &[3]).is_err());
    }

    #[test]
    fn column_choice_is_irrelevant() {
        let phi = make_bspline_bump(2, 5, 0.9).unwrap();
        let theta = [0.3, -0.7];
        let q = [2, -3];
        for k in BoxIter::new(2, 3) {
            let ell = outer(&k, &q);
            let a = phi_q_theta_coeff_via(&phi, 0.2, &q, &theta, &ell, 0).unwrap().unwrap();
            let b = phi_q_theta_coeff_via(&phi, 0.2, &q, &theta, &ell, 1).unwrap().unwrap();
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn factored_oracle_matches_full_grid() {
        let phi = make_bspline_bump(2, 3, 0.9).unwrap();
        let theta = [0.3, 0.55];
        let q = [3];
        let oracle = PhiOracle::new(&phi, 0.45, &q, &theta, 64).unwrap();
        for ell in [[0i64, 0], [3, -6], [6, 3], [1, 0]] {
            let a = oracle.coefficient(&ell);
            let b = phi_q_theta_direct(&phi, 0.45, &q, &theta, &ell, 64);
            assert!((a - b).norm() < 1e-12, "{ell:?}: {a} vs {b}");
        }
    }

    #[test]
    fn oracle_invariant_under_integer_shift_of_theta() {
        let phi = make_bspline_bump(1, 4, 0.9).unwrap();
        let a = phi_q_theta_oracle(&phi, 0.3, &[3], &[0.3], &[6], 128).unwrap();
        let b = phi_q_theta_oracle(&phi, 0.3, &[3], &[2.3], &[6], 128).unwrap();
        assert!((a - b).norm() < 1e-12);
        let mass = phi_q_theta_oracle(&phi, 0.01, &[1], &[0.3], &[0], 4096).unwrap();
        assert!((mass.re - 1.0).abs() < 1e-6);
    }

    fn sample_scale(m: usize, n: usize, k: u32) -> (ScaleSet, ApproxFunction) {
        let psi = ApproxFunction::power(n, 1.0);
        let q_set = DenominatorSet::all_nonzero(n);
        let s = 0.45 * n as f64;
        let qp = scale_set_q_prime(&q_set, &psi, s, 2f64.powi(k as i32), m, n).unwrap();
        (qp, psi)
    }

    #[test]
    fn generative_spectrum_matches_divisor_path() {
        for (m, n, k, cutoff) in [(1usize, 1usize, 6u32, 200i64), (2, 1, 5, 30), (1, 2, 6, 25)] {
            let (qp, psi) = sample_scale(m, n, k);
            let theta: Vec<f64> = (0..m).map(|i| 0.3 + 0.1 * i as f64).collect();
            let phi = make_bspline_bump(m, m * n + 3, 0.9).unwrap();
            let fm = SingleScale::new(&qp, &psi, &theta, &phi).unwrap();
            let fast = fm.spectrum(cutoff);
            let slow = fm_spectrum(&qp, &phi, &psi, &theta, cutoff).unwrap();
            assert_eq!(fast.coeffs.len(), slow.coeffs.len());
            for (ell, c) in &slow.coeffs {
                assert!((fast.coeffs[ell] - c).norm() < 1e-14);
            }
            assert_eq!(fast.coeffs[&Point::from_elem(0, m * n)], Complex64::new(1.0, 0.0));
            assert!(fast.max_conjugate_asymmetry() < 1e-14);
        }
    }

    #[test]
    fn spectrum_evaluates_to_direct_sum_within_tail() {
        let (qp, psi) = sample_scale(1, 1, 6);
        let phi = make_bspline_bump(1, 4, 0.9).unwrap();
        let fm = SingleScale::new(&qp, &psi, &[0.3], &phi).unwrap();
        let cutoff = fm.cutoff_for_tail(1e-4);
        let spec = fm.spectrum(cutoff);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = [rng.gen::<f64>()];
            let a = spec.evaluate(&x).unwrap();
            let b = fm.eval(&x);
            assert!((a - b).abs() <= spec.evaluation_error_bound() + 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn off_support_points_evaluate_to_zero() {
        let (qp, psi) = sample_scale(1, 1, 5);
        let phi = make_bspline_bump(1, 4, 0.9).unwrap();
        let fm = SingleScale::new(&qp, &psi, &[0.0], &phi).unwrap();
        let spec = fm.spectrum(fm.cutoff_for_tail(1e-6));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = 0;
        for _ in 0..2000 {
            let x = [rng.gen::<f64>()];
            if support_pointcheck(&x, std::slice::from_ref(&qp), &psi, &[0.0])[0] {
                continue;
            }
            seen += 1;
            assert_eq!(fm.eval(&x), 0.0);
            assert!(spec.evaluate(&x).unwrap().abs() <= spec.evaluation_error_bound() + 1e-9);
        }
        assert!(seen > 0);
    }

    #[test]
    fn positive_points_are_supported() {
        let (qp, psi) = sample_scale(1, 1, 6);
        let phi = make_bspline_bump(1, 4, 0.9).unwrap();
        let fm = SingleScale::new(&qp, &psi, &[0.0], &phi).unwrap();
        assert_eq!(support_pointcheck(&[0.0], std::slice::from_ref(&qp), &psi, &[0.0]), vec![true]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let x = [rng.gen::<f64>()];
            if fm.eval(&x) > 0.0 {
                assert!(support_pointcheck(&x, std::slice::from_ref(&qp), &psi, &[0.0])[0]);
            }
        }
    }

    #[test]
    fn structural_bounds_hold() {
        let (qp, psi) = sample_scale(1, 1, 8);
        let phi = make_bspline_bump(1, 4, 0.9).unwrap();
        let fm = SingleScale::new(&qp, &psi, &[0.3], &phi).unwrap();
        let spec = fm.spectrum(300);
        let rep = verify_fm_bounds(&spec, 256.0, 0.45, 0.75);
        assert!(rep.structural_parts_hold(), "{rep:?}");
        assert!(rep.fitted_constant.is_finite() && rep.fitted_constant > 0.0);
    }

    #[test]
    fn empty_scale_is_degenerate() {
        let empty = ScaleSet { scale: 4.0, kind: crate::divisor::ScaleKind::QPrimeOfM, members: vec![] };
        let phi = make_bspline_bump(1, 4, 0.9).unwrap();
        let psi = ApproxFunction::power(1, 1.0);
        assert!(matches!(
            fm_spectrum(&empty, &phi, &psi, &[0.0], 10),
            Err(Error::DegenerateScale { .. })
        ));
    }

    #[test]
    fn derivative_bound_dominates_finite_differences() {
        let (qp, psi) = sample_scale(1, 1, 4);
        let phi = make_bspline_bump(1, 4, 0.9).unwrap();
        let fm = SingleScale::new(&qp, &psi, &[0.2], &phi).unwrap();
        let bound = fm.derivative_sup(1);
        let h = 1e-6;
        for i in 0..1000 {
            let x = i as f64 / 1000.0;
            let d = (fm.eval(&[x + h]) - fm.eval(&[x - h])) / (2.0 * h);
            assert!(d.abs() <= bound);
        }
    }
}
