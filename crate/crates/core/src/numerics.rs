//! Small numerical kernels shared by the dynamics and exponent code.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{Float, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(order, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A weighted set of quadrature nodes.
#[derive(Clone, Debug, Default)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    /// Composite Gauss–Legendre rule on `[a, b]`.
    pub fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(lo + 0.5 * h * (xi + 1.0));
                weights.push(0.5 * h * wi);
            }
        }
        Self { nodes, weights }
    }

    /// Trapezoid rule on `[a, b]` with spacing at most `max_spacing`.
    pub fn trapezoid(a: f64, b: f64, max_spacing: f64) -> Self {
        let cells = (((b - a) / max_spacing) - 1e-9).ceil().max(1.0) as usize;
        let h = (b - a) / cells as f64;
        let nodes: Vec<f64> = (0..=cells).map(|j| a + j as f64 * h).collect();
        let mut weights = vec![h; cells + 1];
        weights[0] = 0.5 * h;
        weights[cells] = 0.5 * h;
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn extend(&mut self, other: Quadrature) {
        self.nodes.extend(other.nodes);
        self.weights.extend(other.weights);
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Solves `(H - z) u = rhs` for the tridiagonal `H` with the given diagonal and
/// unit off-diagonals, Dirichlet outside.
///
/// For `Im z != 0` every pivot has imaginary part of magnitude at least `|Im z|`,
/// so the elimination never breaks down.
pub fn solve_shifted_tridiagonal(
    diagonal: &[f64],
    z: Complex64,
    rhs: &[Complex64],
    pivots: &mut Vec<Complex64>,
    out: &mut Vec<Complex64>,
) -> Result<()> {
    let n = diagonal.len();
    assert_eq!(rhs.len(), n);
    pivots.clear();
    out.clear();
    out.extend_from_slice(rhs);
    let mut prev = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let mut d = Complex64::new(diagonal[i], 0.0) - z;
        if i > 0 {
            d -= prev.inv();
            let carry = out[i - 1] / prev;
            out[i] -= carry;
        }
        if d.norm_sqr() == 0.0 || !d.is_finite() {
            return Err(Error::SingularSolve { row: i });
        }
        pivots.push(d);
        prev = d;
    }
    out[n - 1] /= pivots[n - 1];
    for i in (0..n - 1).rev() {
        let next = out[i + 1];
        out[i] = (out[i] - next) / pivots[i];
    }
    Ok(())
}

/// Ordinary least-squares fit `y = slope * x + intercept`; returns
/// `(slope, intercept, residual_norm)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum::<f64>()
        .sqrt();
    (slope, intercept, residual)
}

/// Number of fixed work chunks for deterministic parallel reductions. The
/// partition depends only on the item count, never on the thread count.
const CHUNKS: usize = 64;

/// Sums per-item contributions into an accumulator of length `len`.
///
/// `item` adds the contribution of one work item into the buffer it is given.
/// Items are grouped into a fixed set of contiguous chunks; each chunk is reduced
/// sequentially and chunk results are added in chunk order, so the result is
/// bit-for-bit reproducible regardless of the pool size.
pub fn deterministic_sum<S, F>(items: usize, len: usize, init: impl Fn() -> S + Sync, item: F) -> Result<Vec<f64>>
where
    F: Fn(&mut S, usize, &mut [f64]) -> Result<()> + Sync,
{
    let chunk = items.div_ceil(CHUNKS).max(1);
    let partials: Vec<Result<Vec<f64>>> = (0..items.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; len];
            let mut scratch = init();
            for i in (c * chunk)..((c + 1) * chunk).min(items) {
                item(&mut scratch, i, &mut acc)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![0.0; len];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part?) {
            *t += p;
        }
    }
    Ok(total)
}

/// Exact dyadic rational `num / 2^scale`. Trace-map orbits at energies off
/// the spectrum grow like `exp(c φ^k)`; exact arithmetic keeps the Fricke
/// value meaningful where floating point would cancel catastrophically.
#[derive(Clone, Debug)]
pub(crate) struct Dyadic {
    num: BigInt,
    scale: u64,
}

impl Dyadic {
    pub(crate) fn from_f64(v: f64) -> Self {
        let (mantissa, exponent, sign) = v.integer_decode();
        let mut num = BigInt::from(mantissa) * i64::from(sign);
        let mut scale = 0;
        if exponent >= 0 {
            num <<= exponent as usize;
        } else {
            scale = (-exponent) as u64;
        }
        Self { num, scale }.normalized()
    }

    pub(crate) fn normalized(mut self) -> Self {
        if self.num.is_zero() {
            self.scale = 0;
            return self;
        }
        let shift = self.num.trailing_zeros().unwrap_or(0).min(self.scale);
        self.num >>= shift as usize;
        self.scale -= shift;
        self
    }

    pub(crate) fn aligned(&self, scale: u64) -> BigInt {
        &self.num << (scale - self.scale) as usize
    }

    pub(crate) fn mul(&self, o: &Self) -> Self {
        Self { num: &self.num * &o.num, scale: self.scale + o.scale }.normalized()
    }

    pub(crate) fn add(&self, o: &Self) -> Self {
        let s = self.scale.max(o.scale);
        Self { num: self.aligned(s) + o.aligned(s), scale: s }.normalized()
    }

    pub(crate) fn sub(&self, o: &Self) -> Self {
        let s = self.scale.max(o.scale);
        Self { num: self.aligned(s) - o.aligned(s), scale: s }.normalized()
    }

    pub(crate) fn scaled_pow2(&self, shift: u64) -> Self {
        Self { num: self.num.clone(), scale: self.scale + shift }.normalized()
    }

    /// `(top, e)` with `self ≈ top · 2^e` and `|top| < 2^64`.
    pub(crate) fn split(&self) -> (f64, i64) {
        let bits = self.num.bits();
        let shift = bits.saturating_sub(64);
        let top = (&self.num >> shift as usize).to_f64().unwrap_or(0.0);
        (top, shift as i64 - self.scale as i64)
    }

    pub(crate) fn to_f64(&self) -> f64 {
        if self.num.is_zero() {
            return 0.0;
        }
        let (mut v, mut e) = self.split();
        while e > 0 {
            let step = e.min(1000);
            v *= 2f64.powi(step as i32);
            e -= step;
        }
        while e < 0 {
            let step = (-e).min(1000);
            v *= 2f64.powi(-(step as i32));
            e += step;
        }
        v
    }

    pub(crate) fn ln_abs(&self) -> f64 {
        if self.num.is_zero() {
            return f64::NEG_INFINITY;
        }
        let (top, e) = self.split();
        top.abs().ln() + e as f64 * std::f64::consts::LN_2
    }
}
