//! Transfer-matrix cocycle `M(n, k, z)` and the scans built on it.

use std::ops::Mul;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::PotentialSpec;
use crate::numerics::Dyadic;

/// Norms above this are reported as "large" and stop being propagated exactly.
pub const SATURATION: f64 = 1e12;

/// A 2×2 complex matrix `[[a, b], [c, d]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

impl TransferMatrix {
    pub const IDENTITY: TransferMatrix = TransferMatrix { a: ONE, b: ZERO, c: ZERO, d: ONE };

    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Self { a, b, c, d }
    }

    pub fn from_real(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self::new(a.into(), b.into(), c.into(), d.into())
    }

    /// One step `A = [[z − w, −1], [1, 0]]` for potential value `w`.
    #[inline]
    pub fn step(z: Complex64, w: f64) -> Self {
        Self { a: z - w, b: -ONE, c: ONE, d: ZERO }
    }

    /// `A⁻¹ = [[0, 1], [−1, z − w]]`.
    #[inline]
    pub fn step_inverse(z: Complex64, w: f64) -> Self {
        Self { a: ZERO, b: ONE, c: -ONE, d: z - w }
    }

    pub fn det(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> Complex64 {
        self.a + self.d
    }

    pub fn frobenius_sqr(&self) -> f64 {
        self.a.norm_sqr() + self.b.norm_sqr() + self.c.norm_sqr() + self.d.norm_sqr()
    }

    /// Operator norm (largest singular value), in closed form.
    pub fn norm(&self) -> f64 {
        let f = self.frobenius_sqr();
        let det = self.det().norm();
        let half = 0.5 * f;
        let disc = (half * half - det * det).max(0.0);
        (half + disc.sqrt()).sqrt()
    }

    pub fn inverse(&self) -> Self {
        let det = self.det();
        Self { a: self.d / det, b: -self.b / det, c: -self.c / det, d: self.a / det }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { a: self.a * s, b: self.b * s, c: self.c * s, d: self.d * s }
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        [self.a - other.a, self.b - other.b, self.c - other.c, self.d - other.d]
            .iter()
            .fold(0.0, |m, x| m.max(x.norm()))
    }

    pub fn max_abs(&self) -> f64 {
        [self.a, self.b, self.c, self.d].iter().fold(0.0, |m, x| m.max(x.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }
}

impl Mul for TransferMatrix {
    type Output = TransferMatrix;

    #[inline]
    fn mul(self, r: TransferMatrix) -> TransferMatrix {
        TransferMatrix {
            a: self.a * r.a + self.b * r.c,
            b: self.a * r.b + self.b * r.d,
            c: self.c * r.a + self.d * r.c,
            d: self.c * r.b + self.d * r.d,
        }
    }
}

/// `A(n, z)`.
pub fn step_matrix(spec: &PotentialSpec, n: i64, z: Complex64) -> TransferMatrix {
    TransferMatrix::step(z, spec.value(n))
}

/// A cocycle value together with its overflow guard.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transfer {
    pub matrix: TransferMatrix,
    /// Some intermediate norm exceeded [`SATURATION`].
    pub saturated: bool,
}

/// `M(n, k, z)`: `A(n)⋯A(k+1)` for `n > k`, the identity for `n = k`, and
/// `A⁻¹(n+1)⋯A⁻¹(k)` for `n < k`.
pub fn transfer_product(spec: &PotentialSpec, n: i64, k: i64, z: Complex64) -> Transfer {
    let mut m = TransferMatrix::IDENTITY;
    let mut saturated = false;
    if n > k {
        for (w, _) in spec.values(k + 1, n).into_iter().zip(k + 1..=n) {
            m = TransferMatrix::step(z, w) * m;
            saturated |= m.norm() > SATURATION || !m.is_finite();
        }
    } else if n < k {
        let ws = spec.values(n + 1, k);
        for &w in ws.iter().rev() {
            m = TransferMatrix::step_inverse(z, w) * m;
            saturated |= m.norm() > SATURATION || !m.is_finite();
        }
    }
    Transfer { matrix: m, saturated }
}

#[derive(Clone, Debug)]
struct ExactComplex {
    re: Dyadic,
    im: Dyadic,
}

impl ExactComplex {
    fn from(z: Complex64) -> Self {
        Self { re: Dyadic::from_f64(z.re), im: Dyadic::from_f64(z.im) }
    }

    fn zero() -> Self {
        Self::from(ZERO)
    }

    fn one() -> Self {
        Self::from(ONE)
    }

    fn mul(&self, o: &Self) -> Self {
        Self { re: self.re.mul(&o.re).sub(&self.im.mul(&o.im)), im: self.re.mul(&o.im).add(&self.im.mul(&o.re)) }
    }

    fn sub(&self, o: &Self) -> Self {
        Self { re: self.re.sub(&o.re), im: self.im.sub(&o.im) }
    }

    fn to_complex(&self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }
}

/// `M(n, k, z)` evaluated in exact dyadic arithmetic from the `f64` inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactTransfer {
    /// The exact product rounded entrywise.
    pub matrix: TransferMatrix,
    /// `|det M − 1|` of the exact product.
    pub det_residual: f64,
}

/// Same cocycle as [`transfer_product`] without rounding. A stored `f64`
/// matrix with entries of size `X` only carries its determinant to about
/// `X² · 2⁻⁵³`, so unimodularity is checked here.
pub fn exact_transfer_product(spec: &PotentialSpec, n: i64, k: i64, z: Complex64) -> ExactTransfer {
    let zz = ExactComplex::from(z);
    let (mut a, mut b, mut c, mut d) =
        (ExactComplex::one(), ExactComplex::zero(), ExactComplex::zero(), ExactComplex::one());
    if n > k {
        for w in spec.values(k + 1, n) {
            let s = zz.sub(&ExactComplex::from(w.into()));
            // [[s, −1], [1, 0]] · [[a, b], [c, d]]
            let (na, nb) = (s.mul(&a).sub(&c), s.mul(&b).sub(&d));
            (c, d) = (a, b);
            (a, b) = (na, nb);
        }
    } else if n < k {
        for &w in spec.values(n + 1, k).iter().rev() {
            let s = zz.sub(&ExactComplex::from(w.into()));
            // [[0, 1], [−1, s]] · [[a, b], [c, d]]
            let (nc, nd) = (s.mul(&c).sub(&a), s.mul(&d).sub(&b));
            (a, b) = (c, d);
            (c, d) = (nc, nd);
        }
    }
    let det = a.mul(&d).sub(&b.mul(&c)).sub(&ExactComplex::one());
    let det_residual = det.re.to_f64().hypot(det.im.to_f64());
    let matrix = TransferMatrix::new(a.to_complex(), b.to_complex(), c.to_complex(), d.to_complex());
    ExactTransfer { matrix, det_residual }
}

/// Running maxima of `‖M(n, k, z)‖` over a site range.
#[derive(Clone, Debug, PartialEq)]
pub struct NormScan {
    pub anchor: i64,
    pub lo: i64,
    pub hi: i64,
    pub z: Complex64,
    /// `running_max[i]` is the max of `‖M(n', k, z)‖` over `n'` between `k`
    /// and `lo + i` inclusive.
    pub running_max: Vec<f64>,
    pub max: f64,
    pub saturated: bool,
}

impl NormScan {
    pub fn at(&self, n: i64) -> f64 {
        self.running_max[(n - self.lo) as usize]
    }
}

/// Max of `‖M(n, 0, z)‖` over `0 ≤ n ≤ ws.len()` where `ws = W(1..=N)`; one
/// multiply per step, stopping at saturation.
pub fn forward_max_norm(ws: &[f64], z: Complex64) -> f64 {
    let mut m = TransferMatrix::IDENTITY;
    let mut best: f64 = 1.0;
    for &w in ws {
        m = TransferMatrix::step(z, w) * m;
        let nrm = m.norm();
        if nrm > best {
            best = nrm;
            if best > SATURATION {
                return best;
            }
        }
    }
    best
}

/// Max of `‖M(n, k, z)‖` over `k − N ≤ n ≤ k` where `ws = W(k−N+1..=k)`.
pub fn backward_max_norm(ws: &[f64], z: Complex64) -> f64 {
    let mut m = TransferMatrix::IDENTITY;
    let mut best: f64 = 1.0;
    for &w in ws.iter().rev() {
        m = TransferMatrix::step_inverse(z, w) * m;
        let nrm = m.norm();
        if nrm > best {
            best = nrm;
            if best > SATURATION {
                return best;
            }
        }
    }
    best
}

/// Operator norms of `M(n, k, z)` for `n` in `lo..=hi`.
pub fn norm_scan(spec: &PotentialSpec, anchor: i64, lo: i64, hi: i64, z: Complex64) -> Result<NormScan> {
    if lo > hi {
        return Err(invalid("range", "empty range"));
    }
    if anchor < lo - 1 || anchor > hi + 1 {
        return Err(invalid("range", "range must contain the anchor or abut it"));
    }
    let mut running_max = vec![0.0; (hi - lo + 1) as usize];
    let mut saturated = false;
    let idx = |n: i64| (n - lo) as usize;
    if (lo..=hi).contains(&anchor) {
        running_max[idx(anchor)] = 1.0;
    }
    // forward side
    if hi > anchor {
        let ws = spec.values(anchor + 1, hi);
        let mut m = TransferMatrix::IDENTITY;
        let mut best: f64 = 1.0;
        for (i, &w) in ws.iter().enumerate() {
            let n = anchor + 1 + i as i64;
            if !saturated || best <= SATURATION {
                m = TransferMatrix::step(z, w) * m;
                best = best.max(m.norm());
            }
            if best > SATURATION {
                saturated = true;
            }
            if n >= lo {
                running_max[idx(n)] = best;
            }
        }
    }
    // backward side
    if lo < anchor {
        let ws = spec.values(lo + 1, anchor);
        let mut m = TransferMatrix::IDENTITY;
        let mut best: f64 = 1.0;
        let mut side_saturated = false;
        for (i, &w) in ws.iter().rev().enumerate() {
            let n = anchor - 1 - i as i64;
            if !side_saturated {
                m = TransferMatrix::step_inverse(z, w) * m;
                best = best.max(m.norm());
            }
            if best > SATURATION {
                side_saturated = true;
            }
            if n <= hi {
                running_max[idx(n)] = best;
            }
        }
        saturated |= side_saturated;
    }
    let max = running_max.iter().cloned().fold(0.0, f64::max);
    Ok(NormScan { anchor, lo, hi, z, running_max, max, saturated })
}

/// `(1/n) log ‖M(n, 0, E)‖`, renormalizing the propagated matrix every step.
pub fn lyapunov_estimate(spec: &PotentialSpec, energy: f64, n_max: usize) -> Result<f64> {
    if n_max < 100 {
        return Err(invalid("n_max", "need at least 100 steps"));
    }
    let z = Complex64::new(energy, 0.0);
    let mut m = TransferMatrix::IDENTITY;
    let mut log_norm = 0.0;
    for w in spec.values(1, n_max as i64) {
        m = TransferMatrix::step(z, w) * m;
        let s = m.norm();
        log_norm += s.ln();
        m = m.scale(1.0 / s);
    }
    Ok(log_norm / n_max as f64)
}

/// A family `ω ↦ H(ω)` whose forward transfer-matrix growth can be queried.
pub trait NormFamily: Sync {
    /// `sup_n |W(n, ω)|` uniformly in `ω`.
    fn bound(&self) -> f64;

    /// `max_{0≤n≤n_max} ‖M(n, 0, z, ω)‖` for every `z` in `energies`.
    fn forward_max_norms(&self, omega: f64, n_max: usize, energies: &[Complex64]) -> Result<Vec<f64>>;
}

/// A dynamically defined potential with its phase varied.
#[derive(Clone, Debug)]
pub struct PhaseFamily {
    base: PotentialSpec,
}

impl PhaseFamily {
    pub fn new(base: PotentialSpec) -> Result<Self> {
        if !base.is_dynamical() {
            return Err(Error::NotDynamical(base.family_name()));
        }
        Ok(Self { base })
    }

    pub fn base(&self) -> &PotentialSpec {
        &self.base
    }
}

impl NormFamily for PhaseFamily {
    fn bound(&self) -> f64 {
        self.base.bound()
    }

    fn forward_max_norms(&self, omega: f64, n_max: usize, energies: &[Complex64]) -> Result<Vec<f64>> {
        let spec = self.base.with_phase(omega)?;
        let ws = spec.values(1, n_max as i64);
        Ok(energies.par_iter().map(|&z| forward_max_norm(&ws, z)).collect())
    }
}

/// `j / count` for `j = 0..count`.
pub fn equidistributed_phases(count: usize) -> Vec<f64> {
    (0..count).map(|j| j as f64 / count as f64).collect()
}

/// The center plus `boundary` equally spaced points on the circle of the given radius.
pub fn disc_samples(center: f64, radius: f64, boundary: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(center, 0.0)];
    for j in 0..boundary {
        let angle = 2.0 * std::f64::consts::PI * j as f64 / boundary as f64;
        out.push(Complex64::new(center, 0.0) + Complex64::from_polar(radius, angle));
    }
    out
}

/// Sampled surrogate of `Φ_{α,m}(E, T)`: the minimum over the given phases and
/// over `z` on the disc `|z − E| ≤ T^{−α}` of `T^{−m} max_{0≤n≤T^α} ‖M(n,0,z,ω)‖`.
/// Since the true infimum runs over a continuum, this is an upper bound on it.
pub fn phi_statistic(
    family: &dyn NormFamily,
    energy: f64,
    time: f64,
    alpha: f64,
    m: f64,
    phases: &[f64],
    disc_points: usize,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1]"));
    }
    if !(m > 1.0) {
        return Err(invalid("m", "must exceed 1"));
    }
    if phases.is_empty() {
        return Err(Error::EmptySamples("phases"));
    }
    let zs = disc_samples(energy, time.powf(-alpha), disc_points);
    let n_max = time.powf(alpha).floor() as usize;
    let mut best = f64::INFINITY;
    for &omega in phases {
        for v in family.forward_max_norms(omega, n_max, &zs)? {
            best = best.min(v);
        }
    }
    Ok(time.powf(-m) * best)
}

/// Sup norm of the forward cocycle at each energy of a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundedEnergyScan {
    pub n_max: usize,
    pub threshold: f64,
    pub energies: Vec<f64>,
    pub sup_norms: Vec<f64>,
    /// Indices of local minima with sup norm below `threshold`.
    pub candidates: Vec<usize>,
}

/// `sup_{0≤n≤n_max} ‖M(n, 0, E)‖` on a grid, flagging low local minima as
/// candidate energies with bounded transfer matrices.
pub fn bounded_energy_scan(
    spec: &PotentialSpec,
    energies: &[f64],
    n_max: usize,
    threshold: f64,
) -> Result<BoundedEnergyScan> {
    if energies.is_empty() {
        return Err(Error::EmptySamples("energy grid"));
    }
    let ws = spec.values(1, n_max as i64);
    let sup_norms: Vec<f64> = energies.par_iter().map(|&e| forward_max_norm(&ws, Complex64::new(e, 0.0))).collect();
    let candidates = (0..sup_norms.len())
        .filter(|&i| {
            let v = sup_norms[i];
            let left = i == 0 || sup_norms[i - 1] >= v;
            let right = i + 1 == sup_norms.len() || sup_norms[i + 1] >= v;
            v < threshold && left && right
        })
        .collect();
    Ok(BoundedEnergyScan { n_max, threshold, energies: energies.to_vec(), sup_norms, candidates })
}

/// Single-block transfer matrix `A(w_{L−1})⋯A(w_0)` at real energy.
pub fn block_transfer(block: &[f64], energy: f64) -> TransferMatrix {
    let z = Complex64::new(energy, 0.0);
    block.iter().fold(TransferMatrix::IDENTITY, |m, &w| TransferMatrix::step(z, w) * m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalEnergyReport {
    pub energy: f64,
    pub critical: bool,
    pub commutator_norm: f64,
    pub trace_plus: f64,
    pub trace_minus: f64,
}

/// Whether `energy` is critical for the two polymer blocks: the block transfer
/// matrices commute and each one is either elliptic (`|tr| < 2`) or `±Id`.
pub fn critical_energy_test(plus: &[f64], minus: &[f64], energy: f64, tol: f64) -> Result<CriticalEnergyReport> {
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let tp = block_transfer(plus, energy);
    let tm = block_transfer(minus, energy);
    let (c, d) = (tp * tm, tm * tp);
    let commutator_norm = TransferMatrix::new(c.a - d.a, c.b - d.b, c.c - d.c, c.d - d.d).norm();
    let admissible = |t: &TransferMatrix| {
        let plus_id = t.max_abs_diff(&TransferMatrix::IDENTITY) <= tol;
        let minus_id = t.max_abs_diff(&TransferMatrix::IDENTITY.scale(-1.0)) <= tol;
        t.trace().re.abs() < 2.0 || plus_id || minus_id
    };
    let critical = commutator_norm <= tol && admissible(&tp) && admissible(&tm);
    Ok(CriticalEnergyReport {
        energy,
        critical,
        commutator_norm,
        trace_plus: tp.trace().re,
        trace_minus: tm.trace().re,
    })
}
