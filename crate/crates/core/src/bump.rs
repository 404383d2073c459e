//! Tensor-product cardinal B-spline bumps with closed-form transforms.

use rand::Rng;

use crate::error::{Error, Result};

/// Centered-at-`p/2` cardinal B-spline `N_p(u)`, supported on `[0, p]`.
///
/// Cox-de Boor recursion on integer knots.
pub fn cardinal_bspline(p: usize, u: f64) -> f64 {
    if !(u > 0.0 && u < p as f64) {
        return 0.0;
    }
    let j = u.floor() as usize;
    let mut vals = vec![0.0; p + 1];
    vals[j] = 1.0;
    for k in 2..=p {
        let kf = k as f64;
        for i in 0..p {
            let v = u - i as f64;
            vals[i] = (v * vals[i] + (kf - v) * vals[i + 1]) / (kf - 1.0);
        }
    }
    vals[0]
}

/// `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    let px = std::f64::consts::PI * x;
    if px.abs() < 1e-6 {
        1.0 - px * px / 6.0
    } else {
        px.sin() / px
    }
}

/// Nonnegative bump on `[-c, c]^dim` with unit mass.
///
/// Each coordinate factor is `lambda N_p(lambda x + p/2)` with `p = K + 1`
/// and `lambda = p / (2c)`; its transform is `sinc(xi / lambda)^p`.
#[derive(Clone, Debug, PartialEq)]
pub struct BumpFunction {
    dim: usize,
    order: usize,
    support: f64,
    spline_order: usize,
    lambda: f64,
}

pub fn make_bspline_bump(dim: usize, order: usize, support: f64) -> Result<BumpFunction> {
    if order < 2 {
        return Err(Error::Argument(format!(
            "bump order K = {order} gives insufficient decay, need K >= 2"
        )));
    }
    if !(support > 0.0 && support < 1.0) {
        return Err(Error::Argument(format!("support radius must lie in (0,1), got {support}")));
    }
    if dim == 0 {
        return Err(Error::Argument("bump dimension must be positive".into()));
    }
    let p = order + 1;
    Ok(BumpFunction {
        dim,
        order,
        support,
        spline_order: p,
        lambda: p as f64 / (2.0 * support),
    })
}

impl BumpFunction {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Smoothness/decay order `K`.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn support_radius(&self) -> f64 {
        self.support
    }

    /// Spline order `p = K + 1`, the actual transform decay exponent.
    pub fn spline_order(&self) -> usize {
        self.spline_order
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eval_1d(&self, t: f64) -> f64 {
        let p = self.spline_order;
        self.lambda * cardinal_bspline(p, self.lambda * t + 0.5 * p as f64)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut out = 1.0;
        for &t in x {
            if t.abs() >= self.support {
                return 0.0;
            }
            out *= self.eval_1d(t);
        }
        out
    }

    pub fn transform_1d(&self, xi: f64) -> f64 {
        sinc(xi / self.lambda).powi(self.spline_order as i32)
    }

    /// Real because the bump is even.
    pub fn transform(&self, xi: &[f64]) -> f64 {
        debug_assert_eq!(xi.len(), self.dim);
        xi.iter().map(|&x| self.transform_1d(x)).product()
    }

    /// `C_r` with `|transform(xi)| <= C_r (1 + |xi|)^{-r}` for `r <= p`.
    pub fn decay_constant(&self, r: usize) -> f64 {
        assert!(r <= self.spline_order, "decay order exceeds spline order");
        (1.0 + self.lambda / std::f64::consts::PI).powi(r as i32)
    }

    /// `C_phi` for the nominal order `K`.
    pub fn decay_constant_k(&self) -> f64 {
        self.decay_constant(self.order)
    }

    /// `min(1, (|v| / (pi lambda^{-1}))^{-p})`-type majorant of one factor.
    pub fn factor_majorant(&self, v: f64) -> f64 {
        let x = std::f64::consts::PI * v.abs() / self.lambda;
        if x <= 1.0 {
            1.0
        } else {
            x.powi(-(self.spline_order as i32))
        }
    }

    /// Upper bound for `sup_x sum_{l in Z} |factor(x - l)|`.
    pub fn lattice_sum_1d(&self) -> f64 {
        // Distances to the lattice are d0 and j -+ d0 (j >= 1, d0 <= 1/2),
        // each at least j - 1/2.
        let p = self.spline_order as f64;
        let j_max = 2000;
        let mut s = 1.0;
        for j in 1..=j_max {
            let t = j as f64 - 0.5;
            s += self.factor_majorant(t) + self.factor_majorant(j as f64);
        }
        let a = std::f64::consts::PI / self.lambda;
        let t0 = j_max as f64 - 0.5;
        s + 2.0 * a.powf(-p) * t0.powf(1.0 - p) / (p - 1.0)
    }

    /// Upper bound for `sup_x sum_{l : |x - l| > rho} |factor(x - l)|`.
    pub fn lattice_tail_1d(&self, rho: f64) -> f64 {
        let p = self.spline_order as f64;
        let a = std::f64::consts::PI / self.lambda;
        if a * rho <= 1.0 {
            return self.lattice_sum_1d();
        }
        2.0 * a.powf(-p) * (rho.powf(-p) + rho.powf(1.0 - p) / (p - 1.0))
    }

    /// Upper bound for `sup_xi sum_{l in Z^dim} |transform(xi - l)|`.
    pub fn lattice_sum(&self) -> f64 {
        self.lattice_sum_1d().powi(self.dim as i32)
    }

    /// Upper bound for `sup_xi sum_{|xi - l| > rho} |transform(xi - l)|`.
    pub fn lattice_tail(&self, rho: f64) -> f64 {
        let d = self.dim as i32;
        d as f64 * self.lattice_tail_1d(rho) * self.lattice_sum_1d().powi(d - 1)
    }

    /// Upper bound for `sum_{k in Z^dim} |transform(eps k)|`.
    pub fn dilated_lattice_sum(&self, eps: f64) -> f64 {
        let p = self.spline_order as f64;
        let a = std::f64::consts::PI * eps / self.lambda;
        // One factor: 1 + 2 sum_{j>=1} min(1, (a j)^{-p}).
        let j_switch = (1.0 / a).floor().max(0.0);
        let mut s = 1.0 + 2.0 * j_switch;
        let j0 = j_switch + 1.0;
        s += 2.0 * (a * j0).powf(-p) + 2.0 * a.powf(-p) * j0.powf(1.0 - p) / (p - 1.0);
        s.powi(self.dim as i32)
    }

    /// Upper bound for `sum_{k in Z^dim, |k| >= r0} |transform(eps k)|`, `r0 >= 1`.
    pub fn dilated_lattice_tail(&self, eps: f64, r0: i64) -> f64 {
        let p = self.spline_order as f64;
        let a = std::f64::consts::PI * eps / self.lambda;
        if a * (r0 as f64) <= 1.0 {
            return self.dilated_lattice_sum(eps);
        }
        // |transform(eps k)| <= (a |k|)^{-p}, then sum over shells.
        a.powf(-p) * crate::lattice::shell_power_tail(self.dim, r0, p)
    }

    /// Bound on `sup |d^a/dt^a factor|` (one coordinate).
    pub fn derivative_sup_1d(&self, a: usize) -> f64 {
        // N_p^{(a)} is a signed sum of 2^a shifted N_{p-a}, each bounded by 1.
        self.lambda.powi(a as i32 + 1) * 2f64.powi(a as i32)
    }

    /// Bound on `int |d^a/dt^a factor|` (one coordinate).
    pub fn derivative_l1_1d(&self, a: usize) -> f64 {
        self.lambda.powi(a as i32) * 2f64.powi(a as i32)
    }

    /// Sup of the bump.
    pub fn sup(&self) -> f64 {
        let p = self.spline_order;
        (self.lambda * cardinal_bspline(p, 0.5 * p as f64)).powi(self.dim as i32)
    }

    /// One coordinate drawn from the bump density: a centered sum of `p`
    /// uniforms, rescaled.
    pub fn sample_1d<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p = self.spline_order;
        let s: f64 = (0..p).map(|_| rng.gen::<f64>()).sum();
        (s - 0.5 * p as f64) / self.lambda
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim).map(|_| self.sample_1d(rng)).collect()
    }
}
