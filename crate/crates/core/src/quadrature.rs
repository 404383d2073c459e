//! Gauss-Legendre rules and low-discrepancy point sets.

use num_complex::Complex64;

/// An `n`-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Chebyshev-like initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    pub fn integrate_c<F: FnMut(f64) -> Complex64>(&self, mut f: F, a: f64, b: f64) -> Complex64 {
        self.mapped(a, b).map(|(x, w)| f(x) * w).sum()
    }

    /// Composite rule over `panels` equal subintervals.
    pub fn composite_c<F: FnMut(f64) -> Complex64>(
        &self,
        mut f: F,
        a: f64,
        b: f64,
        panels: usize,
    ) -> Complex64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|i| self.integrate_c(&mut f, a + i as f64 * h, a + (i + 1) as f64 * h))
            .sum()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    out
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Point `index` (starting at 1) of the Halton sequence in `[0,1)^dim`.
pub fn halton_point(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "Halton sequence supports up to 16 dimensions");
    (0..dim).map(|c| radical_inverse(index, PRIMES[c])).collect()
}

/// Kronecker point `frac(i * alpha_c + 1/2)` with `alpha_c = frac(sqrt(p_c))`.
pub fn kronecker_point(index: u64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|c| {
            let a = (PRIMES[c] as f64).sqrt().fract();
            (index as f64 * a + 0.5).fract()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(8);
        for deg in 0..16 {
            let got = gl.integrate(|x| x.powi(deg), 0.0, 1.0);
            let expect = 1.0 / (deg as f64 + 1.0);
            assert!((got - expect).abs() < 1e-14, "deg {deg}: {got} vs {expect}");
        }
    }

    #[test]
    fn weights_sum_to_interval_length() {
        for n in [1, 2, 5, 20, 64] {
            let gl = GaussLegendre::new(n);
            assert!((gl.integrate(|_| 1.0, -3.0, 2.0) - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn halton_first_points() {
        assert_eq!(halton_point(1, 2), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton_point(2, 2), vec![0.25, 2.0 / 3.0]);
        assert_eq!(radical_inverse(0, 2), 0.0);
    }
}
