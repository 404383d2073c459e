//! Multi-scale measure `mu_k = f0 F_{M_1} ... F_{M_k} dx` with certified
//! stage-to-stage Fourier drift.
//!
//! The periodic factor `P_k = F_{M_1} ... F_{M_k}` is carried as an exact
//! sparse spectrum with error bars, and `mu_k_hat(xi) = sum_ell P_k_hat(ell)
//! f0_hat(xi - ell)` is evaluated locally around `xi`.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::approx::ProblemInstance;
use crate::bump::{make_bspline_bump, BumpFunction};
use crate::divisor::{dyadic, next_scale_in_script_m, scale_set_q_prime, wigert_envelope};
use crate::error::{Error, Result};
use crate::lattice::{shell_count, shell_power_tail, sup_norm, sup_norm_f, BoxIter, Point};
use crate::quadrature::{halton_point, kronecker_point, radical_inverse};
use crate::spectrum::{convolve, SparseSpectrum, DENSE_GRID_BUDGET};
use crate::torus::{approximates, SingleScale};

pub const DEFAULT_ZETA: f64 = 0.75;

/// `g(t)` for `t = |xi|`: 1 up to 3, then `t^{-s} w_1(t) ln^{n+1} t`.
pub fn g_radial(s: f64, n: usize, t: f64) -> f64 {
    if t <= 3.0 {
        return 1.0;
    }
    let w = wigert_envelope(1.0, t).expect("t > 3 > e");
    t.powf(-s) * w * t.ln().powi(n as i32 + 1)
}

pub fn g_envelope(s: f64, n: usize, xi: &[f64]) -> f64 {
    g_radial(s, n, sup_norm_f(xi))
}

/// Smoothness order `mn + ceil(s) + 2`.
pub fn default_order(m: usize, n: usize, s: f64) -> usize {
    m * n + s.ceil().max(0.0) as usize + 2
}

/// `sum_{j in Z^dim} b(max(0, |j| - 1/2))` for a nonincreasing `b` with
/// `b(|j| - 1/2) <= tail_coeff |j|^{-p}` beyond the explicit shells.
fn shifted_lattice_majorant<F: Fn(f64) -> f64>(dim: usize, b: F, tail_coeff: f64, p: f64) -> f64 {
    const EXPLICIT: i64 = 64;
    let mut total = b(0.0);
    for r in 1..=EXPLICIT {
        total += shell_count(dim, r) as f64 * b(r as f64 - 0.5);
    }
    total + tail_coeff * shell_power_tail(dim, EXPLICIT + 1, p)
}

/// Value of a shift-sum together with a bound on its error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShiftSum {
    pub value: Complex64,
    pub tail: f64,
}

/// `(chi F_M)^(xi) = sum_ell F_hat(ell) chi_hat(xi - ell)` truncated to the
/// stored coefficients, for `|chi_hat(v)| <= c_chi (1 + |v|)^{-order}`.
pub fn chi_fm_transform<F: Fn(&[f64]) -> Complex64>(
    chi_hat: F,
    c_chi: f64,
    order: usize,
    fm: &SparseSpectrum,
    xi: &[f64],
) -> Result<ShiftSum> {
    if xi.len() != fm.dim() {
        return Err(Error::Argument("xi has the wrong dimension".into()));
    }
    if order as f64 <= fm.dim() as f64 {
        return Err(Error::Argument("decay order must exceed the dimension".into()));
    }
    let mut value = Complex64::new(0.0, 0.0);
    let mut arg = vec![0.0; xi.len()];
    for (ell, c) in &fm.coeffs {
        for (a, (x, l)) in arg.iter_mut().zip(xi.iter().zip(ell.iter())) {
            *a = x - *l as f64;
        }
        value += c * chi_hat(&arg);
    }
    let p = order as f64;
    let lattice = shifted_lattice_majorant(fm.dim(), |r| c_chi * (1.0 + r).powf(-p), c_chi, p);
    Ok(ShiftSum {
        value,
        tail: fm.tail_l1 * c_chi + fm.coeff_error * lattice,
    })
}

/// `mu_hat(xi) = sum_{|xi - ell| <= rho} P_hat(ell) f0_hat(xi - ell)` with an
/// error bound covering coefficient errors and the dropped terms.
///
/// `p` must be the spectrum of a nonnegative function, exhaustive on
/// `|xi| + rho`.
pub fn local_transform(
    p: &SparseSpectrum,
    f0: &BumpFunction,
    rho: i64,
    xi: &[f64],
) -> Result<(Complex64, f64)> {
    let dim = p.dim();
    if xi.len() != dim {
        return Err(Error::Argument("xi has the wrong dimension".into()));
    }
    let lo: Vec<i64> = xi.iter().map(|x| (x - rho as f64).ceil() as i64).collect();
    let hi: Vec<i64> = xi.iter().map(|x| (x + rho as f64).floor() as i64).collect();
    let reach = lo.iter().chain(&hi).map(|v| v.abs()).max().unwrap_or(0);
    if reach > p.cutoff {
        return Err(Error::Argument(format!(
            "transform at |xi| = {} needs coefficients to {reach}, spectrum is exhaustive to {}",
            sup_norm_f(xi),
            p.cutoff
        )));
    }
    let mut value = Complex64::new(0.0, 0.0);
    let mut arg = vec![0.0; dim];
    let mut term = |ell: &[i64], c: &Complex64| {
        for (a, (x, l)) in arg.iter_mut().zip(xi.iter().zip(ell)) {
            *a = x - *l as f64;
        }
        value += c * f0.transform(&arg);
    };
    if dim == 1 {
        let a = Point::from_slice(&lo);
        let b = Point::from_slice(&hi);
        for (ell, c) in p.coeffs.range(a..=b) {
            term(ell, c);
        }
    } else {
        let mut ell: Point = Point::from_slice(&lo);
        'outer: loop {
            if let Some(c) = p.coeffs.get(&ell) {
                let key = ell.clone();
                term(&key, c);
            }
            let mut axis = dim;
            loop {
                if axis == 0 {
                    break 'outer;
                }
                axis -= 1;
                if ell[axis] < hi[axis] {
                    ell[axis] += 1;
                    break;
                }
                ell[axis] = lo[axis];
            }
        }
    }
    let zero = Point::from_elem(0, dim);
    let mass = p.coeffs.get(&zero).map_or(0.0, |c| c.norm()) + p.coeff_error;
    let err = p.coeff_error * f0.lattice_sum() + mass * f0.lattice_tail(rho as f64);
    Ok((value, err))
}

/// Stored coefficients for one candidate: its own spectrum plus, after the
/// first stage, the widened previous product.
fn candidate_entries(fm: &SingleScale, cutoff: i64, window: i64, dim: usize, first: bool) -> f64 {
    let n = fm.n as i32;
    let own: f64 = fm.members.iter().map(|q| (2.0 * (cutoff / sup_norm(q)) as f64 + 1.0).powi(n)).sum();
    let widened = if first { 0.0 } else { (2.0 * (window + cutoff) as f64 + 1.0).powi(dim as i32) };
    own + widened
}

/// Radial majorant `A_j(u) >= sup_{|ell| >= u} |P_j_hat(ell)|` for
/// `P_j = F_1 ... F_j`, from `|phi_hat(eps k)| <= min(1, (pi eps |k| / lambda)^{-p})`
/// and `|ell| = |k| |q|` on the support of each `F_hat`.
#[derive(Clone, Debug)]
pub struct ProductMajorant {
    lambda: f64,
    p: i32,
    /// Per factor: `min_q Psi(q) / |q|` and the `l1` bound of its spectrum.
    factors: Vec<(f64, f64)>,
    /// `P_j_hat(0)` upper bounds, `j = 0..=k`.
    masses: Vec<f64>,
}

impl ProductMajorant {
    pub fn new(phi: &BumpFunction, fms: &[SingleScale], masses: Vec<f64>) -> Self {
        let factors = fms
            .iter()
            .map(|f| {
                let slope = f
                    .members
                    .iter()
                    .zip(&f.widths)
                    .map(|(q, w)| w / sup_norm(q) as f64)
                    .fold(f64::INFINITY, f64::min);
                (slope, f.l1_bound())
            })
            .collect();
        ProductMajorant { lambda: phi.lambda(), p: phi.spline_order() as i32, factors, masses }
    }

    /// `(A_j(u), decaying)`: the flag is set when every piece is already on
    /// its power-law branch, so `A_j(t) t^s` is nonincreasing from `u` on.
    pub fn sup_beyond(&self, j: usize, u: f64) -> (f64, bool) {
        if j == 0 {
            return (0.0, true);
        }
        let (slope, l1_f) = self.factors[j - 1];
        let x = PI * 0.5 * u * slope / self.lambda;
        let (a_f, f_power) = if x > 1.0 { (x.powi(-self.p), true) } else { (1.0, false) };
        let l1_prev: f64 = self.factors[..j - 1].iter().map(|f| f.1).product();
        let (a_prev, prev_power) = self.sup_beyond(j - 1, 0.5 * u);
        let raw = a_f * l1_prev + a_prev * l1_f;
        let cap = self.masses[j];
        if raw <= cap {
            (raw, f_power && prev_power)
        } else {
            (cap, false)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BuildConfig {
    pub k_max: usize,
    /// Smoothness order `K` of `phi` and `f0`; `None` means `mn + ceil(s) + 2`.
    pub order: Option<usize>,
    pub support: f64,
    /// All lattice points with `|xi| <= witness_radius` are witnesses.
    pub witness_radius: i64,
    pub off_lattice_per_shell: usize,
    pub k_cap: u32,
    /// Spectrum of each `F_M` is kept up to the cutoff where its tail drops below this.
    pub fm_tail_tol: f64,
    /// Locality radius for transforms is chosen so the `f0_hat` lattice tail is below this.
    pub rho_tol: f64,
    /// Transforms are available for `|xi| < report_radius`.
    pub report_radius: i64,
    /// Step in `ln |xi|` of the tail certificate.
    pub certificate_step: f64,
    pub dense_budget: usize,
    /// Largest number of stored coefficients one candidate scale may need;
    /// candidates beyond it end the search with `NotFound`.
    pub entry_budget: usize,
    pub zeta: f64,
}

/// Default cap on stored coefficients per candidate (about 1.2 GB of maps).
pub const ENTRY_BUDGET: usize = 1 << 24;

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            k_max: 2,
            order: None,
            support: 0.9,
            witness_radius: 32,
            off_lattice_per_shell: 10,
            k_cap: 20,
            fm_tail_tol: 1e-5,
            rho_tol: 1e-9,
            report_radius: 512,
            certificate_step: 0.01,
            dense_budget: DENSE_GRID_BUDGET,
            entry_budget: ENTRY_BUDGET,
            zeta: DEFAULT_ZETA,
        }
    }
}

impl BuildConfig {
    /// Defaults with the witness box shrunk for `mn >= 3`.
    pub fn for_dim(dim: usize) -> Self {
        let mut cfg = Self::default();
        if dim >= 3 {
            cfg.witness_radius = 16;
            cfg.report_radius = 64;
        }
        cfg
    }

    fn validate(&self, dim: usize, s: f64, order: usize) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::Argument("k_max must be at least 1".into()));
        }
        if self.witness_radius < 16 {
            return Err(Error::Argument("witness_radius must be at least 16".into()));
        }
        if self.report_radius < self.witness_radius {
            return Err(Error::Argument("report_radius must be at least witness_radius".into()));
        }
        if !(self.fm_tail_tol > 0.0 && self.rho_tol > 0.0 && self.certificate_step > 0.0) {
            return Err(Error::Argument("tolerances must be positive".into()));
        }
        if (order as f64) <= dim as f64 + s {
            return Err(Error::Argument(format!("order K = {order} must exceed mn + s")));
        }
        Ok(())
    }
}

/// Diagnostics of one selected scale.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleRecord {
    pub stage: usize,
    pub exponent: u32,
    pub scale: f64,
    pub qprime_size: usize,
    pub cutoff: i64,
    pub delta: f64,
    /// `1 - max_xi drift_bound(xi) / (delta g(xi))` over the witness grid.
    pub grid_margin: f64,
    pub certificate: TailCertificate,
    pub candidates_tried: usize,
}

/// Analytic bound on the drift for `|xi| > witness_radius`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailCertificate {
    pub holds: bool,
    pub margin: f64,
    /// From this radius on the bound times `|xi|^s` is nonincreasing and below `delta`.
    pub power_radius: f64,
    pub steps: usize,
}

/// Witnesses: the lattice box of radius `xi_max` and off-lattice points on
/// `(1/2, 1)` and each dyadic shell `[2^j, 2^{j+1})` inside it.
pub fn witness_grid(dim: usize, xi_max: i64, per_shell: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = BoxIter::new(dim, xi_max)
        .map(|p| p.iter().map(|&x| x as f64).collect())
        .collect();
    let mut shells = vec![(0.5, 1.0)];
    let mut lo = 1.0;
    while 2.0 * lo <= xi_max as f64 {
        shells.push((lo, 2.0 * lo));
        lo *= 2.0;
    }
    let mut index = 1u64;
    for (a, b) in shells {
        for _ in 0..per_shell {
            out.push(shell_point(dim, a, b, index));
            index += 1;
        }
    }
    out
}

fn shell_point(dim: usize, a: f64, b: f64, index: u64) -> Vec<f64> {
    let u = kronecker_point(index, dim);
    let mut v: Vec<f64> = u.iter().map(|x| 2.0 * x - 1.0).collect();
    let norm = sup_norm_f(&v).max(1e-12);
    let r = a + (b - a) * radical_inverse(index, 2);
    for x in v.iter_mut() {
        *x *= r / norm;
    }
    v
}

/// Smallest locality radius whose `f0_hat` lattice tail is at most `tol`.
pub fn locality_radius(f0: &BumpFunction, tol: f64) -> i64 {
    let mut rho = 4i64;
    while f0.lattice_tail(rho as f64) > tol && rho < 4096 {
        rho = (rho as f64 * 1.25).ceil() as i64;
    }
    rho
}

/// A finished (or partially finished) construction.
#[derive(Clone, Debug)]
pub struct MeasureStage {
    pub m: usize,
    pub n: usize,
    pub s: f64,
    pub order: usize,
    pub theta: Vec<f64>,
    pub f0: BumpFunction,
    pub phi: BumpFunction,
    pub rho: i64,
    pub config: BuildConfig,
    pub scales: Vec<ScaleRecord>,
    pub fms: Vec<SingleScale>,
    pub fm_spectra: Vec<SparseSpectrum>,
    /// `P_0 = 1, P_1, ..., P_k`, each exhaustive to at least `report_radius + rho`.
    pub products: Vec<SparseSpectrum>,
    pub product_l1: Vec<f64>,
    pub witness: Vec<Vec<f64>>,
}

impl MeasureStage {
    pub fn k(&self) -> usize {
        self.fms.len()
    }

    pub fn dim(&self) -> usize {
        self.m * self.n
    }

    /// `mu_j_hat(xi)` with error bound, `j <= k`.
    pub fn mu_hat_at(&self, j: usize, xi: &[f64]) -> Result<(Complex64, f64)> {
        local_transform(&self.products[j], &self.f0, self.rho, xi)
    }

    pub fn mu_hat(&self, xi: &[f64]) -> Result<(Complex64, f64)> {
        self.mu_hat_at(self.k(), xi)
    }

    /// Total mass `mu_k_hat(0)`.
    pub fn mass(&self) -> f64 {
        self.mu_hat(&vec![0.0; self.dim()]).map(|v| v.0.re).unwrap_or(f64::NAN)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let mut v = self.f0.eval(x);
        for fm in &self.fms {
            if v == 0.0 {
                break;
            }
            v *= fm.eval(x);
        }
        v
    }

    pub fn scales(&self) -> Vec<f64> {
        self.fms.iter().map(|f| f.scale).collect()
    }
}

/// Products `P_0 .. P_k` with `P_k` exhaustive to `window`.
fn product_chain(
    (m, n): (usize, usize),
    fms: &[SingleScale],
    fm_spectra: &[SparseSpectrum],
    window: i64,
    budget: usize,
) -> Result<(Vec<SparseSpectrum>, Vec<f64>)> {
    let k = fms.len();
    let mut windows = vec![window; k + 1];
    for j in (1..k).rev() {
        windows[j] = windows[j + 1] + fm_spectra[j].cutoff;
    }
    let mut products = vec![SparseSpectrum::constant_one(m, n, windows[0])];
    let mut l1 = vec![1.0];
    for j in 1..=k {
        let bound = fms[j - 1].l1_bound();
        let next = if j == 1 {
            fms[0].spectrum(windows[1])
        } else {
            convolve(&products[j - 1], l1[j - 1], &fm_spectra[j - 1], bound, windows[j], budget)?
        };
        l1.push(l1[j - 1] * bound);
        products.push(next);
    }
    Ok((products, l1))
}

struct Candidate {
    exponent: u32,
    fm: SingleScale,
    spectrum: SparseSpectrum,
    grid_margin: f64,
    certificate: TailCertificate,
}

/// Running state of the construction while scales are being selected.
pub struct Builder<'a> {
    instance: &'a ProblemInstance,
    s: f64,
    order: usize,
    f0: BumpFunction,
    phi: BumpFunction,
    rho: i64,
    cfg: BuildConfig,
    witness: Vec<Vec<f64>>,
    fms: Vec<SingleScale>,
    fm_spectra: Vec<SparseSpectrum>,
    records: Vec<ScaleRecord>,
    /// `P_{k}` at the widest window computed so far, and its `l1` bound.
    current: SparseSpectrum,
    current_l1: f64,
    /// Bounds on `P_j_hat(0)`, `j = 0..=k`.
    masses: Vec<f64>,
    /// `mu_k_hat` and its error on the witness grid.
    current_mu: Vec<(Complex64, f64)>,
}

impl<'a> Builder<'a> {
    pub fn new(instance: &'a ProblemInstance, s: f64, cfg: BuildConfig) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::Argument(format!("s must be positive, got {s}")));
        }
        let (m, n) = (instance.m, instance.n);
        let dim = m * n;
        let order = cfg.order.unwrap_or_else(|| default_order(m, n, s));
        cfg.validate(dim, s, order)?;
        let mut checked = cfg.clone();
        checked.order = Some(order);
        let f0 = make_bspline_bump(dim, order, cfg.support)?;
        let phi = make_bspline_bump(m, order, cfg.support)?;
        let rho = locality_radius(&f0, cfg.rho_tol);
        let witness = witness_grid(dim, cfg.witness_radius, cfg.off_lattice_per_shell);
        let current = SparseSpectrum::constant_one(m, n, i64::MAX / 4);
        let current_mu = witness
            .iter()
            .map(|xi| local_transform(&current, &f0, rho, xi))
            .collect::<Result<Vec<_>>>()?;
        Ok(Builder {
            instance,
            s,
            order,
            f0,
            phi,
            rho,
            cfg: checked,
            witness,
            fms: vec![],
            fm_spectra: vec![],
            records: vec![],
            current,
            current_l1: 1.0,
            masses: vec![1.0],
            current_mu,
        })
    }

    pub fn rho(&self) -> i64 {
        self.rho
    }

    pub fn witness(&self) -> &[Vec<f64>] {
        &self.witness
    }

    /// Make sure `P_k` is exhaustive to `window`.
    fn widen_current(&mut self, window: i64) -> Result<()> {
        if self.current.cutoff >= window {
            return Ok(());
        }
        let (mut products, mut l1) =
            product_chain((self.instance.m, self.instance.n), &self.fms, &self.fm_spectra, window, self.cfg.dense_budget)?;
        self.current = products.pop().expect("chain is nonempty");
        self.current_l1 = l1.pop().expect("chain is nonempty");
        Ok(())
    }

    /// Drift bound for `|xi| > witness_radius`.
    ///
    /// With `D = P_k_hat - P_{k-1}_hat`, `|mu_k_hat - mu_{k-1}_hat|(xi) <=
    /// sup_{|ell| >= t/2} |D(ell)| S_f0 + (m_k + m_{k-1}) tail_f0(t/2)` for
    /// `t = |xi|`; the sup uses exact coefficients inside the window and
    /// [`ProductMajorant`] beyond it. The bound is nonincreasing in `t` and is
    /// compared with `delta g` on a grid in `ln t`, with `ln g` Lipschitz.
    fn certificate(&self, fm: &SingleScale, next: &SparseSpectrum, delta: f64) -> TailCertificate {
        let dim = self.f0.dim();
        let zero = Point::from_elem(0, dim);
        let mass_of = |p: &SparseSpectrum| p.coeffs.get(&zero).map_or(0.0, |c| c.norm()) + p.coeff_error;
        let mut masses: Vec<f64> = self.masses.clone();
        masses.push(mass_of(next));
        let mut fms = self.fms.clone();
        fms.push(fm.clone());
        let k = fms.len();
        let major = ProductMajorant::new(&self.phi, &fms, masses.clone());
        let window = next.cutoff;
        let cut = window as usize;
        let mut by_radius = vec![0.0f64; cut + 2];
        for ell in BoxIter::new(dim, window) {
            let a = next.coeffs.get(&ell).copied().unwrap_or_default();
            let b = self.current.coeffs.get(&ell).copied().unwrap_or_default();
            let r = sup_norm(&ell) as usize;
            by_radius[r] = by_radius[r].max((a - b).norm());
        }
        for r in (0..=cut).rev() {
            by_radius[r] = by_radius[r].max(by_radius[r + 1]);
        }
        let err = next.coeff_error + self.current.coeff_error;
        let outside = major.sup_beyond(k, window as f64 + 1.0).0 + major.sup_beyond(k - 1, window as f64 + 1.0).0;
        let sup_diff = |u: f64| -> (f64, bool) {
            let r = u.ceil().max(0.0) as usize;
            if r <= cut {
                ((by_radius[r] + err).max(outside), false)
            } else {
                let (a, pa) = major.sup_beyond(k, u);
                let (b, pb) = major.sup_beyond(k - 1, u);
                (a + b, pa && pb)
            }
        };
        let s_f0 = self.f0.lattice_sum();
        let both = masses[k] + masses[k - 1];
        let a_f0 = PI / self.f0.lambda();
        let bound = |t: f64| -> (f64, bool) {
            let (d, power) = sup_diff(0.5 * t);
            (d * s_f0 + both * self.f0.lattice_tail(0.5 * t), power && a_f0 * 0.5 * t > 1.0)
        };
        let h = self.cfg.certificate_step;
        let n = self.instance.n;
        let mut big_l = (self.cfg.witness_radius as f64).ln();
        let mut worst: f64 = 0.0;
        let mut steps = 0usize;
        let mut closed = false;
        while steps < 100_000 {
            let t = big_l.exp();
            let (r, power) = bound(t);
            if power && r * t.powf(self.s) <= delta {
                closed = true;
                break;
            }
            let lip = self.s + 0.25 + (n as f64 + 1.0) / big_l;
            let floor = delta * g_radial(self.s, n, t) * (-lip * h).exp();
            worst = worst.max(r / floor);
            big_l += h;
            steps += 1;
        }
        TailCertificate {
            holds: closed && worst <= 1.0,
            margin: 1.0 - worst,
            power_radius: big_l.exp(),
            steps,
        }
    }

    /// `M_*(delta, m0, f0 P_k)`: the smallest admissible `M >= m0` whose drift
    /// passes the witness grid and the tail certificate.
    fn select_m_star(&mut self, delta: f64, m0: f64) -> Result<(Candidate, usize)> {
        let inst = self.instance;
        let (m, n) = (inst.m, inst.n);
        let mut exp = (m0.log2() - 1e-9).ceil().max(1.0) as u32;
        let mut tried = 0usize;
        let mut last = String::from("no admissible scale in range");
        let xi_max = self.cfg.witness_radius;
        while exp <= self.cfg.k_cap {
            let Some(k) = next_scale_in_script_m(exp, &inst.q_set, &inst.psi, self.s, self.cfg.k_cap)?
            else {
                break;
            };
            exp = k + 1;
            tried += 1;
            let qp = scale_set_q_prime(&inst.q_set, &inst.psi, self.s, dyadic(k), m, n)?;
            if qp.is_empty() {
                last = format!("Q'(2^{k}) is empty");
                continue;
            }
            let fm = SingleScale::new(&qp, &inst.psi, &inst.theta, &self.phi)?;
            let cutoff = fm.cutoff_for_tail(self.cfg.fm_tail_tol);
            let window = xi_max + self.rho + 1;
            let need = candidate_entries(&fm, cutoff, window, inst.m * inst.n, self.fms.is_empty());
            if need > self.cfg.entry_budget as f64 {
                return Err(Error::NotFound(format!(
                    "2^{k} would store about {need:.3e} coefficients, over the budget of {}; last: {last}",
                    self.cfg.entry_budget
                )));
            }
            let spec = fm.spectrum(cutoff);
            let next = if self.fms.is_empty() {
                fm.spectrum(window)
            } else {
                self.widen_current(window + cutoff)?;
                convolve(&self.current, self.current_l1, &spec, fm.l1_bound(), window, self.cfg.dense_budget)?
            };
            let (s, f0, rho) = (self.s, &self.f0, self.rho);
            let worst = self
                .witness
                .par_iter()
                .zip(&self.current_mu)
                .map(|(xi, (prev, prev_err))| {
                    let (v, err) = local_transform(&next, f0, rho, xi)?;
                    Ok(((v - prev).norm() + err + prev_err) / (delta * g_envelope(s, n, xi)))
                })
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0f64, f64::max);
            if worst > 1.0 {
                last = format!("2^{k}: witness drift reaches {worst:.3} of the allowance");
                continue;
            }
            let certificate = self.certificate(&fm, &next, delta);
            if !certificate.holds {
                last = format!("2^{k}: tail certificate margin {:.3}", certificate.margin);
                continue;
            }
            return Ok((
                Candidate { exponent: k, fm, spectrum: spec, grid_margin: 1.0 - worst, certificate },
                tried,
            ));
        }
        Err(Error::NotFound(format!(
            "no scale M >= {m0} up to 2^{} passes (delta = {delta}); last: {last}",
            self.cfg.k_cap
        )))
    }

    /// Select and append the next scale with drift allowance `delta`.
    pub fn push_stage(&mut self, delta: f64) -> Result<&ScaleRecord> {
        let m0 = self.fms.last().map_or(1.0, |f| 2.0 * f.scale);
        let (cand, tried) = self.select_m_star(delta, m0)?;
        let stage = self.fms.len() + 1;
        self.records.push(ScaleRecord {
            stage,
            exponent: cand.exponent,
            scale: dyadic(cand.exponent),
            qprime_size: cand.fm.len(),
            cutoff: cand.spectrum.cutoff,
            delta,
            grid_margin: cand.grid_margin,
            certificate: cand.certificate,
            candidates_tried: tried,
        });
        self.fms.push(cand.fm);
        self.fm_spectra.push(cand.spectrum);
        let window = self.cfg.witness_radius + self.rho + 1;
        let (mut products, mut l1) =
            product_chain((self.instance.m, self.instance.n), &self.fms, &self.fm_spectra, window, self.cfg.dense_budget)?;
        self.current = products.pop().unwrap();
        self.current_l1 = l1.pop().unwrap();
        let zero = Point::from_elem(0, self.f0.dim());
        self.masses
            .push(self.current.coeffs.get(&zero).map_or(0.0, |c| c.norm()) + self.current.coeff_error);
        let (cur, f0, rho) = (&self.current, &self.f0, self.rho);
        self.current_mu = self
            .witness
            .par_iter()
            .map(|xi| local_transform(cur, f0, rho, xi))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.records.last().unwrap())
    }

    /// Assemble the stage object with spectra wide enough for reporting.
    pub fn finish(self) -> Result<MeasureStage> {
        let window = self.cfg.report_radius + self.rho + 1;
        let (products, product_l1) =
            product_chain((self.instance.m, self.instance.n), &self.fms, &self.fm_spectra, window, self.cfg.dense_budget)?;
        Ok(MeasureStage {
            m: self.instance.m,
            n: self.instance.n,
            s: self.s,
            order: self.order,
            theta: self.instance.theta.clone(),
            f0: self.f0,
            phi: self.phi,
            rho: self.rho,
            config: self.cfg,
            scales: self.records,
            fms: self.fms,
            fm_spectra: self.fm_spectra,
            products,
            product_l1,
            witness: self.witness,
        })
    }
}

/// A construction that stopped early, with everything built so far.
#[derive(Debug)]
pub struct PartialBuild {
    pub stage: Option<MeasureStage>,
    pub error: Error,
}

/// `delta_k = 2^{-k-1}`.
pub fn delta_schedule(k: usize) -> f64 {
    2f64.powi(-(k as i32) - 1)
}

/// Build `mu_1, ..., mu_{k_max}` with scale chaining `M_k >= 2 M_{k-1}`.
pub fn build_measure(
    instance: &ProblemInstance,
    s: f64,
    cfg: BuildConfig,
) -> std::result::Result<MeasureStage, Box<PartialBuild>> {
    let k_max = cfg.k_max;
    let mut builder = Builder::new(instance, s, cfg).map_err(|error| Box::new(PartialBuild { stage: None, error }))?;
    for k in 1..=k_max {
        if let Err(error) = builder.push_stage(delta_schedule(k)) {
            let stage = builder.finish().ok();
            return Err(Box::new(PartialBuild { stage, error }));
        }
    }
    builder
        .finish()
        .map_err(|error| Box::new(PartialBuild { stage: None, error }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftCheck {
    pub stage: usize,
    pub delta: f64,
    /// Largest `(|mu_k_hat - mu_{k-1}_hat| + errors) / (delta g)` on the grid.
    pub max_ratio: f64,
    pub holds: bool,
}

/// Re-check every stage's drift on the witness grid from the stored spectra.
pub fn verify_drift(stage: &MeasureStage) -> Result<Vec<DriftCheck>> {
    let mut out = Vec::new();
    for k in 1..=stage.k() {
        let delta = stage.scales[k - 1].delta;
        let ratios = stage
            .witness
            .par_iter()
            .map(|xi| {
                let (a, ea) = stage.mu_hat_at(k, xi)?;
                let (b, eb) = stage.mu_hat_at(k - 1, xi)?;
                Ok(((a - b).norm() + ea + eb) / (delta * g_envelope(stage.s, stage.n, xi)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let max_ratio = ratios.into_iter().fold(0.0, f64::max);
        out.push(DriftCheck { stage: k, delta, max_ratio, holds: max_ratio <= 1.0 });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub shell_lo: f64,
    pub shell_hi: f64,
    pub samples: usize,
    pub max_abs_mu_hat: f64,
    pub envelope: f64,
    pub ratio: f64,
    pub bounded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    /// `C` from the first shell: `max |mu_hat| / g(center)`.
    pub fitted_constant: f64,
    pub rows: Vec<DecayRow>,
}

impl DecayReport {
    pub fn all_bounded(&self) -> bool {
        self.rows.iter().all(|r| r.bounded)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "shell_lo,shell_hi,max_abs_mu_hat,envelope,ratio")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.shell_lo, r.shell_hi, r.max_abs_mu_hat, r.envelope, r.ratio)?;
        }
        Ok(())
    }
}

/// Deterministic frequencies in the shell `2^j <= |xi| < 2^{j+1}`: lattice
/// points (all of them when `mn = 1`, else up to 256) and 10 off-lattice points.
pub fn shell_sample(dim: usize, j: u32) -> Vec<Vec<f64>> {
    let lo = 1i64 << j;
    let hi = 1i64 << (j + 1);
    let mut out = Vec::new();
    if dim == 1 {
        for r in lo..hi {
            out.push(vec![r as f64]);
            out.push(vec![-r as f64]);
        }
    } else {
        let mut seen = std::collections::BTreeSet::new();
        let mut index = 1u64;
        while seen.len() < 256 && index < 4096 {
            let u = halton_point(index, dim);
            index += 1;
            let mut v: Vec<f64> = u.iter().map(|x| 2.0 * x - 1.0).collect();
            let norm = sup_norm_f(&v).max(1e-12);
            let r = lo as f64 + (hi - lo) as f64 * radical_inverse(index, 5);
            for x in v.iter_mut() {
                *x = (*x * r / norm).round();
            }
            let p: Vec<i64> = v.iter().map(|&x| x as i64).collect();
            let nrm = sup_norm(&p);
            if nrm >= lo && nrm < hi {
                seen.insert(p);
            }
        }
        out.extend(seen.into_iter().map(|p| p.iter().map(|&x| x as f64).collect()));
    }
    for i in 0..10u64 {
        out.push(shell_point(dim, lo as f64, hi as f64, 1000 + 16 * j as u64 + i));
    }
    out
}

/// Per-shell maxima of `|mu_k_hat|` for shells `j = 0..=j_max`, against the
/// envelope `C g` with `C` fitted on the first shell.
pub fn decay_report(stage: &MeasureStage, j_max: u32) -> Result<DecayReport> {
    let dim = stage.dim();
    let mut maxima = Vec::new();
    for j in 0..=j_max {
        let pts = shell_sample(dim, j);
        let vals = pts
            .par_iter()
            .map(|xi| stage.mu_hat(xi).map(|v| v.0.norm()))
            .collect::<Result<Vec<f64>>>()?;
        maxima.push((j, pts.len(), vals.into_iter().fold(0.0, f64::max)));
    }
    let center = |j: u32| 1.5 * dyadic(j);
    let ratio_of = |j: u32, v: f64| v / g_radial(stage.s, stage.n, center(j));
    let c = ratio_of(0, maxima[0].2);
    let rows = maxima
        .into_iter()
        .map(|(j, count, v)| {
            let ratio = ratio_of(j, v);
            DecayRow {
                shell_lo: dyadic(j),
                shell_hi: dyadic(j + 1),
                samples: count,
                max_abs_mu_hat: v,
                envelope: c * g_radial(stage.s, stage.n, center(j)),
                ratio,
                bounded: ratio <= c * (1.0 + 1e-12),
            }
        })
        .collect();
    Ok(DecayReport { fitted_constant: c, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Census {
    pub samples: usize,
    /// Density-weighted fraction of samples approximable at every built scale.
    pub weighted_fraction: f64,
    pub positive_density_samples: usize,
    /// Per scale: total number of solving `q` over positive-density samples.
    pub solutions_per_scale: Vec<usize>,
    /// Unweighted fraction for uniform samples on `[0,1)^{mn}`.
    pub uniform_fraction: f64,
}

/// Samples `x ~ f0`, weights them by `P_k(x)` (so the weighted law is
/// `mu_k`), and checks `|xq - r - theta| <= Psi(q)` for some `q in Q'(M_j)`
/// at every scale.
pub fn membership_census(stage: &MeasureStage, sample_count: usize, seed: u64) -> Census {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = stage.dim();
    let mut weight_total = 0.0;
    let mut weight_member = 0.0;
    let mut positive = 0usize;
    let mut counts = vec![0usize; stage.k()];
    for _ in 0..sample_count {
        let x = stage.f0.sample(&mut rng);
        let w: f64 = stage.fms.iter().map(|f| f.eval(&x)).product();
        if w <= 0.0 {
            continue;
        }
        positive += 1;
        let mut member = true;
        for (j, fm) in stage.fms.iter().enumerate() {
            let sols = fm.solutions(&x).len();
            counts[j] += sols;
            member &= sols > 0;
        }
        weight_total += w;
        if member {
            weight_member += w;
        }
    }
    let mut uniform_hits = 0usize;
    for _ in 0..sample_count {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        if stage
            .fms
            .iter()
            .all(|fm| fm.members.iter().zip(&fm.widths).any(|(q, &w)| approximates(&x, q, &stage.theta, w)))
        {
            uniform_hits += 1;
        }
    }
    Census {
        samples: sample_count,
        weighted_fraction: if weight_total > 0.0 { weight_member / weight_total } else { f64::NAN },
        positive_density_samples: positive,
        solutions_per_scale: counts,
        uniform_fraction: uniform_hits as f64 / sample_count.max(1) as f64,
    }
}

/// Serialisable summary of a construction.
#[derive(Clone, Debug, Serialize)]
pub struct StageSummary {
    pub m: usize,
    pub n: usize,
    pub s: f64,
    pub order: usize,
    pub support: f64,
    pub rho: i64,
    pub witness_points: usize,
    pub scales: Vec<ScaleRecord>,
    pub masses: Vec<f64>,
    pub drift: Vec<DriftCheck>,
    pub decay: Option<DecayReport>,
    pub census: Option<Census>,
    pub error: Option<String>,
}

impl StageSummary {
    pub fn new(stage: &MeasureStage) -> Result<Self> {
        let zero = vec![0.0; stage.dim()];
        let masses = (0..=stage.k())
            .map(|j| stage.mu_hat_at(j, &zero).map(|v| v.0.re))
            .collect::<Result<Vec<_>>>()?;
        Ok(StageSummary {
            m: stage.m,
            n: stage.n,
            s: stage.s,
            order: stage.order,
            support: stage.config.support,
            rho: stage.rho,
            witness_points: stage.witness.len(),
            scales: stage.scales.clone(),
            masses,
            drift: verify_drift(stage)?,
            decay: None,
            census: None,
            error: None,
        })
    }
}
