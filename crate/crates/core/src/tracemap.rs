//! Fibonacci trace map: orbits of `x_k = tr M(q_k, 0, E)`, the Fricke surface,
//! zeros and derivatives of `x_k`, radius proxies for the spectral
//! approximants and the `η` constant.
//!
//! Indexing: `q_k = F_k` with `F_1 = 1, F_2 = 2, F_3 = 3, F_4 = 5`. The
//! renormalized matrices satisfy `M_{k+1} = M_{k−1} M_k` with
//! `M_{−1} = [[1, −λ], [0, 1]]` and `M_0 = [[E, −1], [1, 0]]`, so the seeds are
//! `x_{−1} = 2`, `x_0 = E`, `x_1 = E − λ`. All traces use phase `ω = 0`.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::PotentialSpec;
use crate::numerics::{least_squares, Dyadic};
use crate::transfer::transfer_product;

/// Golden mean `φ = (1 + √5)/2`.
pub const PHI: f64 = 1.618_033_988_749_895;

/// Traces beyond this magnitude are clamped (keeping their sign).
pub const TRACE_CLAMP: f64 = 1e150;

/// Default upper limit on the band thickening parameter.
pub const DELTA_MAX: f64 = 0.1;

/// `q_k = F_k`, for `k ≥ −1` (`q_{−1} = 0`, `q_0 = 1`).
pub fn fibonacci_length(k: i32) -> u64 {
    assert!(k >= -1);
    let (mut a, mut b) = (0u64, 1u64);
    for _ in -1..k {
        let next = a + b;
        a = b;
        b = next;
    }
    a
}

/// Which trace normalization turns the surface constant into `1 + λ²/4`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    FullTrace,
    HalfTrace,
}

impl Normalization {
    pub fn scale(self) -> f64 {
        match self {
            Normalization::FullTrace => 1.0,
            Normalization::HalfTrace => 0.5,
        }
    }
}

/// `x² + y² + z² − 2xyz`.
pub fn fricke_invariant(triple: [f64; 3]) -> f64 {
    let [x, y, z] = triple;
    x * x + y * y + z * z - 2.0 * x * y * z
}

/// Decides the normalization from direct matrix products at `λ = 1`: the one
/// whose Fricke value matches `1 + λ²/4`.
pub fn resolve_normalization() -> Normalization {
    let spec = PotentialSpec::fibonacci(1.0);
    let e = Complex64::new(0.37, 0.0);
    let x = |k: i32| transfer_product(&spec, fibonacci_length(k) as i64, 0, e).matrix.trace().re;
    let full = [x(4), x(3), x(2)];
    let target = 1.25;
    let half = full.map(|v| 0.5 * v);
    if (fricke_invariant(half) - target).abs() < (fricke_invariant(full) - target).abs() {
        Normalization::HalfTrace
    } else {
        Normalization::FullTrace
    }
}

trait Ring: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {}
impl<T: Copy + Add<Output = T> + Sub<Output = T> + Mul<Output = T>> Ring for T {}

/// Full traces `x_{−1}, …, x_{k_max+1}` and their derivatives in `E`.
fn full_traces<T: Ring + From<f64>>(lambda: f64, e: T, k_max: usize) -> (Vec<T>, Vec<T>) {
    let lam = T::from(lambda);
    let mut x = vec![T::from(2.0), e, e - lam];
    let one = T::from(1.0);
    let mut dx = vec![T::from(0.0), one, one];
    for k in 1..=k_max {
        let (a, b, c) = (x[k + 1], x[k], x[k - 1]);
        x.push(a * b - c);
        let (da, db, dc) = (dx[k + 1], dx[k], dx[k - 1]);
        dx.push(da * b + a * db - dc);
    }
    (x, dx)
}

/// Real traces with clamping; returns (x, x', clamped).
fn real_traces(lambda: f64, e: f64, k_max: usize) -> (Vec<f64>, Vec<f64>, bool) {
    let mut x = vec![2.0, e, e - lambda];
    let mut dx = vec![0.0, 1.0, 1.0];
    let mut clamped = false;
    let clamp = |v: f64, flag: &mut bool| {
        if v.abs() > TRACE_CLAMP || !v.is_finite() {
            *flag = true;
            if v.is_nan() {
                TRACE_CLAMP
            } else {
                TRACE_CLAMP.copysign(v)
            }
        } else {
            v
        }
    };
    for k in 1..=k_max {
        let v = x[k + 1] * x[k] - x[k - 1];
        let d = dx[k + 1] * x[k] + x[k + 1] * dx[k] - dx[k - 1];
        x.push(clamp(v, &mut clamped));
        dx.push(clamp(d, &mut clamped));
    }
    (x, dx, clamped)
}

/// Full trace `x_k(E)` for a complex energy.
pub fn complex_trace(lambda: f64, z: Complex64, k: usize) -> Complex64 {
    let (x, _) = full_traces(lambda, z, k.max(1));
    x[k + 1]
}

/// Largest supported `k_max` for exact orbits (`q_k` around 3·10⁴).
pub const MAX_ORBIT_K: usize = 22;

/// An orbit of the trace map at one energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceOrbit {
    pub lambda: f64,
    pub energy: f64,
    /// `q_k` for `k = 0..=k_max+1`.
    pub lengths: Vec<u64>,
    /// `(x_{k+1}, x_k, x_{k−1})` in full-trace normalization, `k = 0..=k_max`.
    /// Values beyond the `f64` range are stored as signed infinities; see
    /// [`TraceOrbit::log_abs`].
    pub triples: Vec<[f64; 3]>,
    /// `log |x_k|` for `k = −1..=k_max+1`.
    pub log_abs: Vec<f64>,
    /// Fricke value `I(k)` of the normalized triple, evaluated exactly.
    pub fricke: Vec<f64>,
    pub normalization: Normalization,
    /// Largest relative gap between the recursion and direct matrix
    /// products over `k ≤ min(k_max, 16)`.
    pub direct_mismatch: f64,
    /// Some trace left the `f64` range and is tracked only through `log_abs`.
    pub overflowed: bool,
}

impl TraceOrbit {
    /// Full trace `x_k` for `−1 ≤ k ≤ k_max + 1`.
    pub fn trace(&self, k: i32) -> f64 {
        if k == -1 {
            return self.triples[0][2];
        }
        let k = k as usize;
        if k == 0 {
            self.triples[0][1]
        } else {
            self.triples[k - 1][0]
        }
    }

    pub fn k_max(&self) -> usize {
        self.triples.len() - 1
    }

    /// Triple rescaled to the normalization of the Fricke surface `1 + λ²/4`.
    pub fn surface_triple(&self, k: usize) -> [f64; 3] {
        self.triples[k].map(|v| v * self.normalization.scale())
    }

    /// `max_k |I(k) − I(0)|`.
    pub fn fricke_drift(&self) -> f64 {
        self.fricke.iter().map(|v| (v - self.fricke[0]).abs()).fold(0.0, f64::max)
    }
}

/// Trace orbit at real energy. The seeds come from direct products; later
/// values use the recursion in exact arithmetic and are cross-checked
/// against direct products for `k ≤ 16`.
pub fn trace_orbit(lambda: f64, energy: f64, k_max: usize) -> Result<TraceOrbit> {
    if !(3..=MAX_ORBIT_K).contains(&k_max) {
        return Err(invalid("k_max", "must lie in 3..=22"));
    }
    if !(lambda.is_finite() && energy.is_finite()) {
        return Err(invalid("energy", "must be finite"));
    }
    let spec = PotentialSpec::fibonacci(lambda);
    let z = Complex64::new(energy, 0.0);
    let direct = |k: i32| transfer_product(&spec, fibonacci_length(k) as i64, 0, z).matrix.trace().re;
    let e = Dyadic::from_f64(energy);
    let lam = Dyadic::from_f64(lambda);
    let two = Dyadic::from_f64(2.0);
    // x_1 = E − λ and x_2 = E(E − λ) − 2 are single and double products
    let mut x = vec![two.clone(), e.clone(), e.sub(&lam)];
    debug_assert_eq!(x[2].to_f64(), direct(1));
    for k in 1..=k_max {
        let next = x[k + 1].mul(&x[k]).sub(&x[k - 1]);
        x.push(next);
    }
    let normalization = resolve_normalization();
    let shift = match normalization {
        Normalization::FullTrace => 0,
        Normalization::HalfTrace => 1,
    };
    let values: Vec<f64> = x.iter().map(Dyadic::to_f64).collect();
    let log_abs = x.iter().map(Dyadic::ln_abs).collect();
    let overflowed = values.iter().any(|v| !v.is_finite());
    let mut direct_mismatch: f64 = 0.0;
    for k in 1..=k_max.min(16) as i32 {
        let d = direct(k);
        let rec = values[(k + 1) as usize];
        direct_mismatch = direct_mismatch.max((d - rec).abs() / d.abs().max(1.0));
    }
    let fricke = (0..=k_max)
        .map(|k| {
            let [a, b, c] = [&x[k + 2], &x[k + 1], &x[k]].map(|v| v.scaled_pow2(shift));
            let squares = a.mul(&a).add(&b.mul(&b)).add(&c.mul(&c));
            let abc = a.mul(&b).mul(&c);
            squares.sub(&abc.add(&abc)).to_f64()
        })
        .collect();
    Ok(TraceOrbit {
        lambda,
        energy,
        lengths: (0..=k_max as i32 + 1).map(fibonacci_length).collect(),
        triples: (0..=k_max).map(|k| [values[k + 2], values[k + 1], values[k]]).collect(),
        log_abs,
        fricke,
        normalization,
        direct_mismatch,
        overflowed,
    })
}

/// `x_k'(E)` (full-trace normalization).
pub fn trace_derivative(lambda: f64, energy: f64, k: usize) -> f64 {
    let (_, dx, _) = real_traces(lambda, energy, k.max(1));
    dx[k + 1]
}

fn trace_value(lambda: f64, energy: f64, k: usize) -> f64 {
    let (x, _, _) = real_traces(lambda, energy, k.max(1));
    x[k + 1]
}

/// Zeros of `x_k` on the real line with derivative data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandData {
    pub lambda: f64,
    pub k: usize,
    pub q_k: u64,
    /// Sorted zeros `E_k^{(j)}`.
    pub zeros: Vec<f64>,
    /// `|x_k'(E_k^{(j)})|` in the Fricke-surface normalization.
    pub derivatives: Vec<f64>,
    pub normalization: Normalization,
}

impl BandData {
    /// `(1/k) log min_j |x_k'(E_k^{(j)})|`.
    pub fn lyapunov_proxy(&self) -> f64 {
        let min = self.derivatives.iter().cloned().fold(f64::INFINITY, f64::min);
        min.ln() / self.k as f64
    }
}

/// All `q_k` real zeros of `E ↦ x_k(E)` on `[−3−λ, 3+λ]`.
pub fn band_zeros(lambda: f64, k: usize) -> Result<BandData> {
    if k < 1 {
        return Err(invalid("k", "must be at least 1"));
    }
    let q = fibonacci_length(k as i32);
    if q > 10_000 {
        return Err(invalid("k", "q_k exceeds 10^4"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", "must be finite and non-negative"));
    }
    let (lo, hi) = (-3.0 - lambda, 3.0 + lambda);
    let f = |e: f64| trace_value(lambda, e, k);
    let mut points = 200 * q as usize;
    let mut brackets = Vec::new();
    loop {
        brackets.clear();
        let h = (hi - lo) / points as f64;
        let mut prev = f(lo);
        for i in 1..=points {
            let e = lo + i as f64 * h;
            let v = f(e);
            if v == 0.0 {
                // grid point on a zero: record it and carry the crossed sign
                brackets.push((e, e));
                prev = -prev;
                continue;
            }
            if prev.signum() != v.signum() {
                brackets.push((e - h, e));
            }
            prev = v;
        }
        if brackets.len() as u64 == q || points > (1 << 26) {
            break;
        }
        points *= 2;
    }
    if brackets.len() as u64 != q {
        return Err(Error::ZeroCountMismatch { found: brackets.len(), expected: q as usize });
    }
    let normalization = resolve_normalization();
    let zeros: Vec<f64> = brackets.iter().map(|&(a, b)| bisect(&f, a, b)).collect();
    let derivatives = zeros.iter().map(|&e| (trace_derivative(lambda, e, k) * normalization.scale()).abs()).collect();
    Ok(BandData { lambda, k, q_k: q, zeros, derivatives, normalization })
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    while b - a > 1e-12 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa.signum() == fm.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// `δ²/((1+δ)²(1+2δ)²)`: `1/R_k ≥ c · min_j |x_k'|`.
pub fn outer_prefactor(delta: f64) -> f64 {
    delta * delta / ((1.0 + delta).powi(2) * (1.0 + 2.0 * delta).powi(2))
}

/// `(2+3δ)²/((1+δ)(1+2δ²))`: `1/r_k^{(j)} ≤ c · |x_k'(E_k^{(j)})|`.
pub fn inner_prefactor(delta: f64) -> f64 {
    (2.0 + 3.0 * delta).powi(2) / ((1.0 + delta) * (1.0 + 2.0 * delta * delta))
}

/// Per-zero radius proxies for the components of `σ_k(δ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusBounds {
    pub k: usize,
    pub delta: f64,
    /// Lower proxy `r_k^{(j)}` per zero.
    pub inner: Vec<f64>,
    /// Upper proxy `R_k^{(j)}` per zero.
    pub outer: Vec<f64>,
    pub inner_min: f64,
    pub outer_max: f64,
    /// Some zero had vanishing derivative; its proxies are infinite.
    pub degenerate: bool,
}

pub fn radius_bounds(band: &BandData, delta: f64) -> Result<RadiusBounds> {
    if !(delta > 0.0 && delta <= DELTA_MAX) {
        return Err(invalid("delta", "must lie in (0, 0.1]"));
    }
    let (cr, cout) = (inner_prefactor(delta), outer_prefactor(delta));
    let degenerate = band.derivatives.contains(&0.0);
    let inner: Vec<f64> = band.derivatives.iter().map(|&d| 1.0 / (cr * d)).collect();
    let outer: Vec<f64> = band.derivatives.iter().map(|&d| 1.0 / (cout * d)).collect();
    Ok(RadiusBounds {
        k: band.k,
        delta,
        inner_min: inner.iter().cloned().fold(f64::INFINITY, f64::min),
        outer_max: outer.iter().cloned().fold(0.0, f64::max),
        inner,
        outer,
        degenerate,
    })
}

/// `log φ / s` with `s` the least-squares slope of `log(1/R_k)` against `k`.
pub fn upper_exponent_from_radii(ks: &[usize], outer: &[f64]) -> Result<f64> {
    if ks.len() != outer.len() {
        return Err(invalid("outer", "length must match k list"));
    }
    let usable: Vec<(f64, f64)> =
        ks.iter().zip(outer).filter(|(_, r)| r.is_finite() && **r > 0.0).map(|(&k, &r)| (k as f64, -r.ln())).collect();
    if usable.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: usable.len() });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = usable.into_iter().unzip();
    let (slope, _, _) = least_squares(&xs, &ys);
    if !(slope > 0.0) {
        return Err(invalid("outer", "radii do not shrink along k"));
    }
    Ok(PHI.ln() / slope)
}

/// Finite-`k` surrogate of the Fibonacci upper transport exponent.
pub fn upper_exponent_estimate(lambda: f64, delta: f64, ks: std::ops::RangeInclusive<usize>) -> Result<f64> {
    let ks: Vec<usize> = ks.collect();
    let mut outer = Vec::with_capacity(ks.len());
    for &k in &ks {
        let band = band_zeros(lambda, k)?;
        outer.push(radius_bounds(&band, delta)?.outer_max);
    }
    upper_exponent_from_radii(&ks, &outer)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaConstant {
    pub lambda: f64,
    /// Largest real root of `x³ − (2+λ)x − 1`.
    pub cubic_root: f64,
    pub eta: f64,
    /// `1/(1+η)`.
    pub exponent: f64,
}

pub fn eta_constant(lambda: f64) -> Result<EtaConstant> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", "must be positive"));
    }
    let cubic = |x: f64| x * x * x - (2.0 + lambda) * x - 1.0;
    // cubic(1) < 0 and cubic(3+λ) > 0; the largest root exceeds √((2+λ)/3)
    let (mut a, mut b) = (((2.0 + lambda) / 3.0).sqrt(), 3.0 + lambda);
    while b - a > 1e-13 {
        let m = 0.5 * (a + b);
        if cubic(m) > 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    let root = 0.5 * (a + b);
    let eta = 2.0 * ((5.0 + 2.0 * lambda).sqrt() * (3.0 + lambda) * root).ln() / PHI.ln();
    Ok(EtaConstant { lambda, cubic_root: root, eta, exponent: 1.0 / (1.0 + eta) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fibonacci_lengths() {
        let q: Vec<u64> = (-1..7).map(fibonacci_length).collect();
        assert_eq!(q, vec![0, 1, 1, 2, 3, 5, 8, 13]);
    }

    #[test]
    fn fricke_algebra() {
        assert_eq!(fricke_invariant([1.0, 1.0, 1.0]), 1.0);
        assert_eq!(fricke_invariant([2.0, 2.0, 2.0]), -4.0);
    }

    #[test]
    fn normalization_is_half_trace() {
        assert_eq!(resolve_normalization(), Normalization::HalfTrace);
    }

    #[test]
    fn orbit_matches_direct_products() {
        let orbit = trace_orbit(1.0, 0.0, 14).unwrap();
        assert!(orbit.direct_mismatch <= 1e-8, "{}", orbit.direct_mismatch);
        assert_eq!(orbit.trace(-1), 2.0);
        assert_eq!(orbit.trace(1), -1.0);
        assert_eq!(orbit.trace(2), -2.0);
    }

    #[test]
    fn free_orbit_sits_on_unit_surface() {
        let orbit = trace_orbit(0.0, 0.8, 12).unwrap();
        for &v in &orbit.fricke {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_counts() {
        for (lambda, k, q) in [(1.0, 1, 1), (1.0, 2, 2), (1.0, 3, 3), (1.0, 5, 8), (0.1, 8, 34), (4.0, 12, 233)] {
            let band = band_zeros(lambda, k).unwrap();
            assert_eq!(band.zeros.len() as u64, q);
            assert!(band.zeros.windows(2).all(|w| w[0] < w[1]));
            for &e in &band.zeros {
                assert!(trace_value(lambda, e, k).abs() < 1e-6 * trace_derivative(lambda, e, k).abs().max(1.0));
            }
        }
    }

    #[test]
    fn derivative_against_finite_difference() {
        let h = 1e-6;
        for (lambda, e, k) in [(1.0, 0.3, 10), (0.0, 0.7, 9)] {
            let fd = (trace_value(lambda, e + h, k) - trace_value(lambda, e - h, k)) / (2.0 * h);
            let d = trace_derivative(lambda, e, k);
            assert!((fd - d).abs() <= 1e-5 * d.abs().max(1.0), "{fd} vs {d}");
        }
    }

    #[test]
    fn prefactors_at_tenth() {
        assert!((outer_prefactor(0.1) - 5.739e-3).abs() < 1e-6);
        assert!((inner_prefactor(0.1) - 4.715).abs() < 1e-3);
    }

    #[test]
    fn radius_proxies_are_ordered() {
        let band = band_zeros(1.0, 10).unwrap();
        let r = radius_bounds(&band, 0.1).unwrap();
        assert!(r.inner.iter().zip(&r.outer).all(|(a, b)| a <= b));
        assert!(radius_bounds(&band, 0.2).is_err());
    }

    #[test]
    fn lyapunov_proxy_settles() {
        let p: Vec<f64> = (8..=14).map(|k| band_zeros(1.0, k).unwrap().lyapunov_proxy()).collect();
        // the sequence wobbles with the period of the trace map; compare mean
        // step sizes over the two halves
        let d: Vec<f64> = p.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let early: f64 = d[..3].iter().sum();
        let late: f64 = d[3..].iter().sum();
        assert!(late < early, "{p:?}");
    }

    #[test]
    fn synthetic_radii() {
        let s = 0.4;
        let ks: Vec<usize> = (5..10).collect();
        let radii: Vec<f64> = ks.iter().map(|&k| PHI.powf(-s * k as f64)).collect();
        assert!((upper_exponent_from_radii(&ks, &radii).unwrap() - 1.0 / s).abs() < 1e-12);
        assert!(upper_exponent_from_radii(&ks[..1], &radii[..1]).is_err());
    }

    #[test]
    fn upper_exponent_decreases_with_coupling() {
        let values: Vec<f64> =
            [1.0, 2.0, 4.0].iter().map(|&l| upper_exponent_estimate(l, 0.05, 8..=13).unwrap()).collect();
        assert!(values[0] > 0.0 && values[0] < 1.0, "{values:?}");
        assert!(values[1] < values[0] && values[2] < values[1], "{values:?}");
    }

    #[test]
    fn eta_values() {
        let eta = eta_constant(1.0).unwrap();
        let root = 2.0 * (std::f64::consts::PI / 9.0).cos();
        assert!((eta.cubic_root - root).abs() < 1e-12);
        assert!(eta_constant(2.0).unwrap().eta > eta.eta);
        assert!(eta_constant(0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn fricke_constant_along_orbits(lambda in 0.0..3.0f64, e in -3.0..3.0f64) {
            let orbit = trace_orbit(lambda, e, 14).unwrap();
            let i0 = orbit.fricke[0];
            prop_assert!((i0 - (1.0 + lambda * lambda / 4.0)).abs() < 1e-12);
            prop_assert!(orbit.fricke_drift() <= 1e-8 * i0.abs().max(1.0));
        }

        #[test]
        fn orbit_agrees_with_float_recursion(lambda in 0.0..3.0f64, e in -3.0..3.0f64) {
            let orbit = trace_orbit(lambda, e, 10).unwrap();
            let (x, _, _) = real_traces(lambda, e, 10);
            for k in 0..=11 {
                let exact = orbit.trace(k);
                prop_assert!((x[(k + 1) as usize] - exact).abs() <= 1e-8 * exact.abs().max(1.0));
            }
        }

        #[test]
        fn derivative_fd(lambda in 0.0..2.0f64, e in -2.5..2.5f64, k in 2usize..=12) {
            let h = 1e-6;
            let fd = (trace_value(lambda, e + h, k) - trace_value(lambda, e - h, k)) / (2.0 * h);
            let d = trace_derivative(lambda, e, k);
            let curv = (trace_value(lambda, e + 1e-3, k) - 2.0 * trace_value(lambda, e, k)
                + trace_value(lambda, e - 1e-3, k)).abs() / 1e-6;
            prop_assume!(curv * h < 1e-3 * d.abs().max(1.0));
            prop_assert!((fd - d).abs() <= 1e-5 * d.abs().max(1.0));
        }

        #[test]
        fn derivative_is_linear_in_seeds(lambda in 0.0..2.0f64, e in -2.5..2.5f64, k in 2usize..=12) {
            let (x, _) = full_traces(lambda, e, k);
            let mut dx = vec![0.0, 2.0, 2.0];
            for j in 1..=k {
                let v = dx[j + 1] * x[j] + x[j + 1] * dx[j] - dx[j - 1];
                dx.push(v);
            }
            let d = trace_derivative(lambda, e, k);
            prop_assert!((dx[k + 1] - 2.0 * d).abs() <= 1e-9 * d.abs().max(1.0));
        }
    }
}
