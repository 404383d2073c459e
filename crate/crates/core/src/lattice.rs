//! Integer lattice helpers: sup-norm, box enumeration, shell counts.

use smallvec::SmallVec;

/// A point of `Z^d` (denominators, matrix frequencies, ...).
pub type Point = SmallVec<[i64; 4]>;

pub fn sup_norm(v: &[i64]) -> i64 {
    v.iter().map(|x| x.abs()).max().unwrap_or(0)
}

pub fn sup_norm_f(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn euclid_norm(v: &[i64]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Number of lattice points of `Z^dim` with sup-norm exactly `r`.
pub fn shell_count(dim: usize, r: i64) -> u64 {
    if r == 0 {
        return 1;
    }
    let r = r as u64;
    (2 * r + 1).pow(dim as u32) - (2 * r - 1).pow(dim as u32)
}

/// Number of lattice points in the closed sup-norm ball of radius `r`.
pub fn ball_count(dim: usize, r: i64) -> u128 {
    (2 * r.max(0) as u128 + 1).pow(dim as u32)
}

/// Lexicographic odometer over the box `[-r, r]^dim`.
#[derive(Debug, Clone)]
pub struct BoxIter {
    radius: i64,
    cur: Option<Point>,
}

impl BoxIter {
    pub fn new(dim: usize, radius: i64) -> Self {
        let cur = if radius < 0 || dim == 0 {
            None
        } else {
            Some(SmallVec::from_elem(-radius, dim))
        };
        BoxIter { radius, cur }
    }
}

impl Iterator for BoxIter {
    type Item = Point;

    fn next(&mut self) -> Option<Point> {
        let out = self.cur.clone()?;
        let mut next = out.clone();
        let mut i = next.len();
        loop {
            if i == 0 {
                self.cur = None;
                break;
            }
            i -= 1;
            if next[i] < self.radius {
                next[i] += 1;
                for x in next.iter_mut().skip(i + 1) {
                    *x = -self.radius;
                }
                self.cur = Some(next);
                break;
            }
        }
        Some(out)
    }
}

/// Nonzero points with `|x| <= radius`, lexicographic.
pub fn punctured_ball(dim: usize, radius: i64) -> impl Iterator<Item = Point> {
    BoxIter::new(dim, radius).filter(|p| p.iter().any(|&x| x != 0))
}

/// Points with sup-norm exactly `r`, lexicographic.
///
/// Generated by the position `i` of the first coordinate with `|x_i| = r`, so
/// the cost is proportional to the shell size rather than the box.
pub fn shell(dim: usize, r: i64) -> Vec<Point> {
    if r == 0 {
        return vec![SmallVec::from_elem(0, dim)];
    }
    let mut out = Vec::with_capacity(shell_count(dim, r) as usize);
    for i in 0..dim {
        let inner = BoxIter::new(i, r - 1);
        let heads: Vec<Point> = if i == 0 { vec![Point::new()] } else { inner.collect() };
        let tails: Vec<Point> = if i + 1 == dim {
            vec![Point::new()]
        } else {
            BoxIter::new(dim - i - 1, r).collect()
        };
        for head in &heads {
            for sign in [-r, r] {
                for tail in &tails {
                    let mut p = head.clone();
                    p.push(sign);
                    p.extend_from_slice(tail);
                    out.push(p);
                }
            }
        }
    }
    out.sort();
    out
}

/// `sum_{r >= r0} shell_count(dim, r) * c * r^{-p}` bounded from above, for `p > dim`.
///
/// Uses `shell_count(dim, r) <= 2 dim 3^{dim-1} r^{dim-1}` and an integral
/// comparison for the monotone tail.
pub fn shell_power_tail(dim: usize, r0: i64, p: f64) -> f64 {
    assert!(p > dim as f64, "tail exponent must exceed the dimension");
    let r0 = r0.max(1) as f64;
    let lead = 2.0 * dim as f64 * 3f64.powi(dim as i32 - 1);
    let e = p - (dim as f64 - 1.0);
    lead * (r0.powf(-e) + r0.powf(1.0 - e) / (e - 1.0))
}
