//! Finite Fourier series on the `mn`-torus.

use std::collections::BTreeMap;
use std::io::{self, Write};

use std::collections::HashMap;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::lattice::{ball_count, sup_norm, BoxIter, Point};

/// Per-coefficient allowance for floating-point accumulation.
pub const FP_ALLOWANCE: f64 = 1e-13;

/// Sparse coefficients `ell -> c(ell)` on `Z^{mn}`, exhaustive within `cutoff`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSpectrum {
    pub m: usize,
    pub n: usize,
    /// Sup-norm radius within which absent frequencies have coefficient 0.
    pub cutoff: i64,
    pub coeffs: BTreeMap<Point, Complex64>,
    /// Bound on `|stored - true|` for every frequency in the window.
    pub coeff_error: f64,
    /// Bound on the `l1` mass of the true coefficients outside the window.
    pub tail_l1: f64,
}

impl SparseSpectrum {
    pub fn new(m: usize, n: usize, cutoff: i64) -> Self {
        SparseSpectrum {
            m,
            n,
            cutoff,
            coeffs: BTreeMap::new(),
            coeff_error: 0.0,
            tail_l1: 0.0,
        }
    }

    /// The constant function 1.
    pub fn constant_one(m: usize, n: usize, cutoff: i64) -> Self {
        let mut s = Self::new(m, n, cutoff);
        s.coeffs.insert(Point::from_elem(0, m * n), Complex64::new(1.0, 0.0));
        s
    }

    pub fn dim(&self) -> usize {
        self.m * self.n
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficient at `ell`, or `None` outside the exhaustive window.
    pub fn get(&self, ell: &[i64]) -> Option<Complex64> {
        if sup_norm(ell) > self.cutoff {
            return None;
        }
        Some(self.coeffs.get(ell).copied().unwrap_or_default())
    }

    pub fn add(&mut self, ell: Point, c: Complex64) {
        *self.coeffs.entry(ell).or_default() += c;
    }

    /// Drop entries that are exactly zero.
    pub fn prune_zeros(&mut self) {
        self.coeffs.retain(|_, c| c.re != 0.0 || c.im != 0.0);
    }

    pub fn l1_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().fold(0.0, |a, c| a.max(c.norm()))
    }

    /// Largest `|c(-ell) - conj(c(ell))|` over the window.
    pub fn max_conjugate_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (ell, c) in &self.coeffs {
            let neg: Point = ell.iter().map(|x| -x).collect();
            let d = self.coeffs.get(&neg).copied().unwrap_or_default();
            worst = worst.max((d - c.conj()).norm());
        }
        worst
    }

    /// Bound on `|truncated series - true function|` at any point.
    pub fn evaluation_error_bound(&self) -> f64 {
        self.tail_l1 + self.coeff_error * ball_count(self.dim(), self.cutoff) as f64
    }

    pub fn evaluate_complex(&self, x: &[f64]) -> Complex64 {
        debug_assert_eq!(x.len(), self.dim());
        let mut acc = Complex64::new(0.0, 0.0);
        for (ell, c) in &self.coeffs {
            let phase: f64 = ell.iter().zip(x).map(|(&l, &t)| l as f64 * t).sum();
            acc += c * Complex64::cis(2.0 * std::f64::consts::PI * phase.fract());
        }
        acc
    }

    /// Real part of the truncated series; the imaginary part must vanish up
    /// to rounding, as it does for spectra of real functions.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let v = self.evaluate_complex(x);
        let tol = 1e-9 * self.l1_norm().max(1.0);
        if v.im.abs() > tol {
            return Err(Error::Domain(format!(
                "imaginary part {:e} exceeds {tol:e}: spectrum is not that of a real function",
                v.im
            )));
        }
        Ok(v.re)
    }

    /// Restriction to a smaller window; dropped mass moves into the tail.
    pub fn restrict(&self, cutoff: i64) -> SparseSpectrum {
        let mut out = SparseSpectrum::new(self.m, self.n, cutoff.min(self.cutoff));
        out.coeff_error = self.coeff_error;
        out.tail_l1 = self.tail_l1;
        for (ell, c) in &self.coeffs {
            if sup_norm(ell) <= out.cutoff {
                out.coeffs.insert(ell.clone(), *c);
            } else {
                out.tail_l1 += c.norm() + self.coeff_error;
            }
        }
        out
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim() + 3);
        for i in 1..=self.m {
            for j in 1..=self.n {
                if self.m < 10 && self.n < 10 {
                    out.push(format!("l{i}{j}"));
                } else {
                    out.push(format!("l{i}_{j}"));
                }
            }
        }
        out.extend(["re", "im", "abs"].map(String::from));
        out
    }

    /// CSV with header `l11,...,lmn,re,im,abs`, lexicographic in `ell`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        self.write_csv_filtered(w, |_, _| true)
    }

    pub fn write_csv_filtered<W: Write, F: Fn(&[i64], Complex64) -> bool>(
        &self,
        w: &mut W,
        keep: F,
    ) -> io::Result<()> {
        writeln!(w, "{}", self.column_names().join(","))?;
        for (ell, c) in &self.coeffs {
            if !keep(ell, *c) {
                continue;
            }
            for l in ell {
                write!(w, "{l},")?;
            }
            writeln!(w, "{},{},{}", c.re, c.im, c.norm())?;
        }
        Ok(())
    }
}

/// In-place DFT over every axis of an `size^dim` array stored row-major.
/// The inverse is unnormalised.
pub(crate) fn fft_nd(data: &mut [Complex64], size: usize, dim: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(size)
    } else {
        planner.plan_fft_forward(size)
    };
    let mut line = vec![Complex64::new(0.0, 0.0); size];
    for axis in 0..dim {
        let stride = size.pow((dim - 1 - axis) as u32);
        let block = stride * size;
        for start in 0..data.len() / size {
            let base = (start / stride) * block + start % stride;
            for (t, v) in line.iter_mut().enumerate() {
                *v = data[base + t * stride];
            }
            fft.process(&mut line);
            for (t, v) in line.iter().enumerate() {
                data[base + t * stride] = *v;
            }
        }
    }
}

fn wrap_index(ell: &[i64], size: usize) -> usize {
    ell.iter()
        .fold(0usize, |acc, &l| acc * size + l.rem_euclid(size as i64) as usize)
}

/// Default cap on the number of cells of a dense FFT convolution grid.
pub const DENSE_GRID_BUDGET: usize = 1 << 22;

/// Spectrum of the product of the functions behind `a` and `b`, exhaustive
/// on `|ell| <= window`.
///
/// `a` must be the spectrum of a nonnegative function (so `|a(ell)| <= a(0)`)
/// and exhaustive on `window + b.cutoff`; `a_l1` and `b_l1` bound the `l1`
/// norms of the true spectra. Coefficient error and tail are propagated.
pub fn convolve(
    a: &SparseSpectrum,
    a_l1: f64,
    b: &SparseSpectrum,
    b_l1: f64,
    window: i64,
    dense_budget: usize,
) -> Result<SparseSpectrum> {
    if a.m != b.m || a.n != b.n {
        return Err(Error::Argument("spectra have different shapes".into()));
    }
    if a.cutoff < window + b.cutoff {
        return Err(Error::Argument(format!(
            "left factor is exhaustive to {} but {} is needed",
            a.cutoff,
            window + b.cutoff
        )));
    }
    let dim = a.dim();
    let zero = Point::from_elem(0, dim);
    let a0 = a.coeffs.get(&zero).map_or(0.0, |c| c.norm()) + a.coeff_error;
    let reach = window + b.cutoff;
    let a_l1_stored: f64 = a
        .coeffs
        .iter()
        .filter(|(l, _)| sup_norm(l) <= reach)
        .map(|(_, c)| c.norm())
        .sum();
    let b_l1_stored = b.l1_norm();
    let size = (2 * (window + b.cutoff) + 1).max(2) as usize;
    let size = size.next_power_of_two();
    let cells = size.checked_pow(dim as u32);

    let mut out = SparseSpectrum::new(a.m, a.n, window);
    let fp;
    match cells {
        Some(total) if total <= dense_budget => {
            let mut fa = vec![Complex64::new(0.0, 0.0); total];
            let mut fb = vec![Complex64::new(0.0, 0.0); total];
            for (l, c) in &a.coeffs {
                if sup_norm(l) <= reach {
                    fa[wrap_index(l, size)] = *c;
                }
            }
            for (l, c) in &b.coeffs {
                fb[wrap_index(l, size)] = *c;
            }
            fft_nd(&mut fa, size, dim, false);
            fft_nd(&mut fb, size, dim, false);
            for (x, y) in fa.iter_mut().zip(&fb) {
                *x *= y;
            }
            fft_nd(&mut fa, size, dim, true);
            let scale = 1.0 / total as f64;
            fp = 4.0 * f64::EPSILON * ((total as f64).log2() + 2.0) * a_l1_stored * b_l1_stored;
            for ell in BoxIter::new(dim, window) {
                let v = fa[wrap_index(&ell, size)] * scale;
                if v.norm() > fp {
                    out.coeffs.insert(ell, v);
                }
            }
        }
        _ => {
            let lookup: HashMap<&Point, Complex64> =
                a.coeffs.iter().filter(|(l, _)| sup_norm(l) <= reach).map(|(l, c)| (l, *c)).collect();
            let pairs: Vec<(&Point, Complex64)> = b.coeffs.iter().map(|(l, c)| (l, *c)).collect();
            let cells: Vec<Point> = BoxIter::new(dim, window).collect();
            let vals: Vec<(Point, Complex64)> = cells
                .into_par_iter()
                .map(|ell| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    let mut key = ell.clone();
                    for (lb, cb) in &pairs {
                        for c in 0..dim {
                            key[c] = ell[c] - lb[c];
                        }
                        if let Some(ca) = lookup.get(&key) {
                            acc += ca * cb;
                        }
                    }
                    (ell, acc)
                })
                .filter(|(_, v)| v.re != 0.0 || v.im != 0.0)
                .collect();
            out.coeffs = vals.into_iter().collect();
            fp = 2.0 * f64::EPSILON * pairs.len() as f64 * a.max_abs() * b.max_abs();
        }
    }
    // A dropped rounding-level entry costs at most `fp` more.
    out.coeff_error = a.coeff_error * b_l1_stored + b.coeff_error * a_l1 + a0 * b.tail_l1 + 2.0 * fp;
    let l1 = a_l1 * b_l1;
    let cells = ball_count(dim, window) as f64;
    out.tail_l1 = (l1 - (out.l1_norm() - cells * out.coeff_error)).max(0.0);
    Ok(out)
}
