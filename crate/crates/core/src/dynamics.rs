//! Time evolution, exponentially time-averaged site probabilities
//! `a(ψ, n, T) = (2/T) ∫₀^∞ e^{−2t/T} |⟨e^{−itH}ψ, δ_n⟩|² dt`, outside
//! probabilities and moments of the position operator.
//!
//! Three independent routes compute `a`: the resolvent identity (production),
//! Gauss–Legendre quadrature in time, and a closed form in the eigenbasis.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{
    build_truncated, choose_box, BoxPolicy, EigenSystem, PotentialSpec, TruncatedHamiltonian, WavePacket,
};
use crate::numerics::{deterministic_sum, solve_shifted_tridiagonal, Quadrature};

/// Largest half-width accepted by the eigen-exact route.
pub const EIGEN_EXACT_MAX_L: usize = 300;

/// Relative weight of `e^{−2t/T}` dropped beyond the quadrature horizon.
pub const HORIZON_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Resolvent,
    TimeQuadrature,
    EigenExact,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Resolvent => "resolvent",
            Method::TimeQuadrature => "time-quadrature",
            Method::EigenExact => "eigen-exact",
        }
    }
}

/// `a(ψ, n, T)` on the window `|n| ≤ L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeAverageProfile {
    pub time: f64,
    pub half_width: usize,
    pub method: Method,
    /// `values[n + L]`.
    pub values: Vec<f64>,
    pub norm_sqr: f64,
    /// `|Σ a − ‖ψ‖²|` plus the mass within two sites of the box edge.
    pub leakage: f64,
    /// Discretization tolerance of the method (relative to `‖ψ‖²`).
    pub tolerance: f64,
}

/// Outside probabilities `P_r = Σ_{n≥N} a`, `P_l = Σ_{n≤−N} a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutsideProbability {
    pub left: f64,
    pub right: f64,
    pub total: f64,
    pub error_bar: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moment {
    pub p: f64,
    pub value: f64,
    pub error_bar: f64,
}

impl TimeAverageProfile {
    pub fn get(&self, n: i64) -> f64 {
        let l = self.half_width as i64;
        if n.abs() > l {
            0.0
        } else {
            self.values[(n + l) as usize]
        }
    }

    pub fn sites(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let l = self.half_width as i64;
        self.values.iter().enumerate().map(move |(i, &a)| (i as i64 - l, a))
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Sum of `|Σ a − ‖ψ‖²|` allowance: `max(leakage, tolerance·‖ψ‖²)`.
    pub fn error_bound(&self) -> f64 {
        self.leakage.max(self.tolerance * self.norm_sqr)
    }

    /// Outside probabilities at distance `n ≥ ⌈N⌉` (both sums include `n = 0`
    /// when `N = 0`).
    pub fn outside_probability(&self, distance: f64) -> Result<OutsideProbability> {
        if !(distance >= 0.0) {
            return Err(invalid("N", "must be non-negative"));
        }
        if distance > self.half_width as f64 {
            return Err(invalid("N", "exceeds the window half-width"));
        }
        let n0 = distance.ceil() as i64;
        let mut left = 0.0;
        let mut right = 0.0;
        for (n, a) in self.sites() {
            if n >= n0 {
                right += a;
            }
            if n <= -n0 {
                left += a;
            }
        }
        Ok(OutsideProbability { left, right, total: left + right, error_bar: self.error_bound() })
    }

    /// `Σ_n |n|^p a(n)` with error bar `L^p · leakage`.
    pub fn moment(&self, p: f64) -> Result<Moment> {
        if !(p > 0.0) {
            return Err(invalid("p", "must be positive"));
        }
        let value = self.sites().map(|(n, a)| (n.unsigned_abs() as f64).powf(p) * a).sum();
        let error_bar = (self.half_width as f64).powf(p) * self.error_bound();
        Ok(Moment { p, value, error_bar })
    }
}

fn edge_mass(values: &[f64]) -> f64 {
    let n = values.len();
    let k = 3.min(n);
    values[..k].iter().sum::<f64>() + values[n - k..].iter().sum::<f64>()
}

fn finish(
    time: f64,
    half_width: usize,
    method: Method,
    values: Vec<f64>,
    norm_sqr: f64,
    tolerance: f64,
) -> TimeAverageProfile {
    let leakage = (values.iter().sum::<f64>() - norm_sqr).abs() + edge_mass(&values);
    TimeAverageProfile { time, half_width, method, values, norm_sqr, leakage, tolerance }
}

/// Energy nodes for the resolvent route: a trapezoid rule on `[−K', K']` plus
/// Gauss–Legendre rules for the tails after the substitution `E = ±K'/s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrid {
    pub half_span: f64,
    pub spacing: f64,
    /// Gauss–Legendre panels (16 nodes each) per tail.
    pub tail_panels: usize,
}

impl EnergyGrid {
    /// `K' = B + 3`, spacing `1/(4T)`.
    pub fn standard(bound: f64, time: f64) -> Self {
        Self { half_span: bound + 3.0, spacing: 0.25 / time, tail_panels: 4 }
    }

    pub fn validate(&self, bound: f64, time: f64) -> Result<()> {
        if !(self.half_span >= bound + 3.0 - 1e-12) {
            return Err(invalid("energy_grid", "half span must be at least B + 3"));
        }
        if !(self.spacing > 0.0 && self.spacing <= 0.25 / time * (1.0 + 1e-12)) {
            return Err(invalid("energy_grid", "spacing must be positive and at most 1/(4T)"));
        }
        if self.tail_panels == 0 {
            return Err(invalid("energy_grid", "need at least one tail panel"));
        }
        Ok(())
    }

    /// Nodes and weights covering the real line.
    pub fn quadrature(&self) -> Quadrature {
        let k = self.half_span;
        let mut q = Quadrature::trapezoid(-k, k, self.spacing);
        let tail = Quadrature::composite_gauss(0.0, 1.0, self.tail_panels, 16);
        for sign in [-1.0, 1.0] {
            let mapped = Quadrature {
                nodes: tail.nodes.iter().map(|s| sign * k / s).collect(),
                weights: tail.nodes.iter().zip(&tail.weights).map(|(s, w)| w * k / (s * s)).collect(),
            };
            q.extend(mapped);
        }
        q
    }
}

/// Resolvent route: `a(n) = (1/πT) ∫ |((H_L − E − i/T)^{−1} ψ)(n)|² dE`, one
/// tridiagonal solve per energy node.
pub fn time_average_resolvent(
    state: &WavePacket,
    spec: &PotentialSpec,
    time: f64,
    half_width: usize,
    grid: &EnergyGrid,
) -> Result<TimeAverageProfile> {
    check_time(time)?;
    grid.validate(spec.bound(), time)?;
    let h = build_truncated(spec, half_width)?;
    let rhs = h.embed(state)?;
    let q = grid.quadrature();
    let eps = 1.0 / time;
    let dim = h.dim();
    let prefactor = 1.0 / (std::f64::consts::PI * time);
    let values = deterministic_sum(
        q.len(),
        dim,
        || (Vec::with_capacity(dim), Vec::with_capacity(dim)),
        |(pivots, out), j, acc| {
            let z = Complex64::new(q.nodes[j], eps);
            solve_shifted_tridiagonal(h.diagonal(), z, &rhs, pivots, out)?;
            let w = q.weights[j] * prefactor;
            for (a, u) in acc.iter_mut().zip(out.iter()) {
                *a += w * u.norm_sqr();
            }
            Ok(())
        },
    )?;
    // Euler–Maclaurin endpoint term of the trapezoid rule, −h²/12 (f'(K') − f'(−K')),
    // with f' from d/dE (H − z)^{−1}ψ = (H − z)^{−2}ψ
    let mut values = values;
    let h_step = q.nodes[1] - q.nodes[0];
    let (mut pivots, mut u, mut du) = (Vec::new(), Vec::new(), Vec::new());
    for (sign, e) in [(1.0, grid.half_span), (-1.0, -grid.half_span)] {
        let z = Complex64::new(e, eps);
        solve_shifted_tridiagonal(h.diagonal(), z, &rhs, &mut pivots, &mut u)?;
        solve_shifted_tridiagonal(h.diagonal(), z, &u, &mut pivots, &mut du)?;
        for ((a, u), du) in values.iter_mut().zip(&u).zip(&du) {
            let derivative = prefactor * 2.0 * (u.conj() * du).re;
            *a -= sign * h_step * h_step / 12.0 * derivative;
        }
    }
    for a in values.iter_mut() {
        *a = a.max(0.0);
    }
    Ok(finish(time, half_width, Method::Resolvent, values, state.norm_sqr(), 1e-8))
}

fn check_time(time: f64) -> Result<()> {
    if !(time > 0.0 && time.is_finite()) {
        return Err(invalid("T", "must be positive and finite"));
    }
    Ok(())
}

/// Eigendecomposition of `H_L`, computed once and reused for every time.
#[derive(Clone, Debug)]
pub struct Propagator {
    hamiltonian: TruncatedHamiltonian,
    eigen: EigenSystem,
}

impl Propagator {
    pub fn new(spec: &PotentialSpec, half_width: usize) -> Result<Self> {
        let hamiltonian = build_truncated(spec, half_width)?;
        let eigen = hamiltonian.eigen();
        Ok(Self { hamiltonian, eigen })
    }

    pub fn hamiltonian(&self) -> &TruncatedHamiltonian {
        &self.hamiltonian
    }

    pub fn eigen(&self) -> &EigenSystem {
        &self.eigen
    }

    pub fn half_width(&self) -> usize {
        self.hamiltonian.half_width()
    }

    /// Expansion coefficients `c_j = ⟨φ_j, ψ⟩` as (real, imaginary) parts.
    fn coefficients(&self, state: &WavePacket) -> Result<(DVector<f64>, DVector<f64>)> {
        let v = self.hamiltonian.embed(state)?;
        let re = DVector::from_iterator(v.len(), v.iter().map(|c| c.re));
        let im = DVector::from_iterator(v.len(), v.iter().map(|c| c.im));
        Ok((self.eigen.vectors.tr_mul(&re), self.eigen.vectors.tr_mul(&im)))
    }

    fn evolve_coefficients(&self, c: &(DVector<f64>, DVector<f64>), t: f64) -> (DVector<f64>, DVector<f64>) {
        let n = c.0.len();
        let mut re = DVector::zeros(n);
        let mut im = DVector::zeros(n);
        for j in 0..n {
            let phase = Complex64::from_polar(1.0, -self.eigen.values[j] * t);
            let d = phase * Complex64::new(c.0[j], c.1[j]);
            re[j] = d.re;
            im[j] = d.im;
        }
        (&self.eigen.vectors * re, &self.eigen.vectors * im)
    }

    /// `e^{−itH_L} ψ` on the box, indexed by `n + L`.
    pub fn evolve_dense(&self, state: &WavePacket, t: f64) -> Result<Vec<Complex64>> {
        if !(t >= 0.0) {
            return Err(invalid("t", "must be non-negative"));
        }
        let c = self.coefficients(state)?;
        let (re, im) = self.evolve_coefficients(&c, t);
        Ok(re.iter().zip(im.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect())
    }

    pub fn evolve(&self, state: &WavePacket, t: f64) -> Result<WavePacket> {
        let v = self.evolve_dense(state, t)?;
        WavePacket::new(-(self.half_width() as i64), v)
    }

    /// Gauss–Legendre quadrature of the time average up to
    /// `t_max = (T/2) ln(1/HORIZON_TOL)`.
    pub fn time_average_quadrature(&self, state: &WavePacket, time: f64) -> Result<TimeAverageProfile> {
        check_time(time)?;
        let c = self.coefficients(state)?;
        let t_max = 0.5 * time * (1.0 / HORIZON_TOL).ln();
        let width = self.eigen.values.last().unwrap() - self.eigen.values[0];
        // keep the phase change per 8-node panel at most 3 radians
        let panels = 24usize.max((t_max * width / 3.0).ceil() as usize);
        let q = Quadrature::composite_gauss(0.0, t_max, panels, 8);
        let dim = self.hamiltonian.dim();
        let values = deterministic_sum(
            q.len(),
            dim,
            || (),
            |_, j, acc| {
                let t = q.nodes[j];
                let w = q.weights[j] * (2.0 / time) * (-2.0 * t / time).exp();
                let (re, im) = self.evolve_coefficients(&c, t);
                for (i, a) in acc.iter_mut().enumerate() {
                    *a += w * (re[i] * re[i] + im[i] * im[i]);
                }
                Ok(())
            },
        )?;
        let profile = finish(time, self.half_width(), Method::TimeQuadrature, values, state.norm_sqr(), HORIZON_TOL);
        Ok(profile)
    }

    /// Closed form `a(n) = Re Σ_{jk} c_j c̄_k φ_j(n) φ_k(n) / (1 + iT(E_j − E_k)/2)`.
    pub fn time_average_eigen_exact(&self, state: &WavePacket, time: f64) -> Result<TimeAverageProfile> {
        check_time(time)?;
        let l = self.half_width();
        if l > EIGEN_EXACT_MAX_L {
            return Err(Error::BoxTooLarge { half_width: l, limit: EIGEN_EXACT_MAX_L });
        }
        let (cre, cim) = self.coefficients(state)?;
        let dim = self.hamiltonian.dim();
        let e = &self.eigen.values;
        let vecs = &self.eigen.vectors;
        let values: Vec<f64> = (0..dim)
            .into_par_iter()
            .map(|row| {
                let v: Vec<Complex64> = (0..dim).map(|j| Complex64::new(cre[j], cim[j]) * vecs[(row, j)]).collect();
                let mut sum = 0.0;
                for j in 0..dim {
                    sum += v[j].norm_sqr();
                    let mut cross = Complex64::new(0.0, 0.0);
                    for k in (j + 1)..dim {
                        let kernel = Complex64::new(1.0, 0.5 * time * (e[j] - e[k])).inv();
                        cross += v[k].conj() * kernel;
                    }
                    sum += 2.0 * (v[j] * cross).re;
                }
                sum.max(0.0)
            })
            .collect();
        Ok(finish(time, l, Method::EigenExact, values, state.norm_sqr(), 1e-12))
    }
}

/// `e^{−itH_L}ψ` through the eigendecomposition of `H_L`.
pub fn evolve(state: &WavePacket, spec: &PotentialSpec, t: f64, half_width: usize) -> Result<WavePacket> {
    Propagator::new(spec, half_width)?.evolve(state, t)
}

pub fn time_average_quadrature(
    state: &WavePacket,
    spec: &PotentialSpec,
    time: f64,
    half_width: usize,
) -> Result<TimeAverageProfile> {
    Propagator::new(spec, half_width)?.time_average_quadrature(state, time)
}

pub fn time_average_eigen_exact(
    state: &WavePacket,
    spec: &PotentialSpec,
    time: f64,
    half_width: usize,
) -> Result<TimeAverageProfile> {
    if half_width > EIGEN_EXACT_MAX_L {
        return Err(Error::BoxTooLarge { half_width, limit: EIGEN_EXACT_MAX_L });
    }
    Propagator::new(spec, half_width)?.time_average_eigen_exact(state, time)
}

/// Dispatches on `method`; the resolvent route uses the standard grid.
pub fn time_average(
    state: &WavePacket,
    spec: &PotentialSpec,
    time: f64,
    half_width: usize,
    method: Method,
) -> Result<TimeAverageProfile> {
    match method {
        Method::Resolvent => {
            time_average_resolvent(state, spec, time, half_width, &EnergyGrid::standard(spec.bound(), time))
        }
        Method::TimeQuadrature => time_average_quadrature(state, spec, time, half_width),
        Method::EigenExact => time_average_eigen_exact(state, spec, time, half_width),
    }
}

/// Sum of `|a₁(n) − a₂(n)|` over the common window.
pub fn profile_distance(a: &TimeAverageProfile, b: &TimeAverageProfile) -> f64 {
    let l = a.half_width.max(b.half_width) as i64;
    (-l..=l).map(|n| (a.get(n) - b.get(n)).abs()).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEntry {
    pub time: f64,
    pub p: f64,
    pub moment: f64,
    pub error_bar: f64,
    pub method: Method,
    pub half_width: usize,
}

/// `⟨|X_ψ|^p⟩(T)` for a set of profiles and exponents.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub entries: Vec<MomentEntry>,
}

impl MomentTable {
    pub fn from_profiles(profiles: &[TimeAverageProfile], ps: &[f64]) -> Result<Self> {
        let mut entries = Vec::with_capacity(profiles.len() * ps.len());
        for profile in profiles {
            for &p in ps {
                let m = profile.moment(p)?;
                entries.push(MomentEntry {
                    time: profile.time,
                    p,
                    moment: m.value,
                    error_bar: m.error_bar,
                    method: profile.method,
                    half_width: profile.half_width,
                });
            }
        }
        Ok(Self { entries })
    }

    /// `(T, moment)` pairs for one exponent, in table order.
    pub fn series(&self, p: f64) -> Vec<(f64, f64)> {
        self.entries.iter().filter(|e| e.p == p).map(|e| (e.time, e.moment)).collect()
    }
}

/// How profiles are produced along a time grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub method: Method,
    /// Fixed half-width; when absent the box is chosen per `T` by [`choose_box`].
    pub half_width: Option<usize>,
    pub box_policy: BoxPolicy,
    pub box_tol: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self { method: Method::Resolvent, half_width: None, box_policy: BoxPolicy::default(), box_tol: 1e-8 }
    }
}

impl ProfileConfig {
    pub fn fixed(method: Method, half_width: usize) -> Self {
        Self { method, half_width: Some(half_width), ..Self::default() }
    }

    pub fn half_width_for(&self, spec: &PotentialSpec, state: &WavePacket, time: f64) -> Result<usize> {
        match self.half_width {
            Some(l) => Ok(l),
            None => choose_box(spec, state, time, self.box_tol, self.box_policy),
        }
    }
}

/// One profile per time, in order.
pub fn profiles_over_times(
    state: &WavePacket,
    spec: &PotentialSpec,
    times: &[f64],
    config: &ProfileConfig,
) -> Result<Vec<TimeAverageProfile>> {
    times
        .iter()
        .map(|&t| {
            let l = config.half_width_for(spec, state, t)?;
            time_average(state, spec, t, l, config.method)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::GOLDEN_THETA;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn evolve_at_zero_time_is_identity() {
        let psi = WavePacket::from_sites(&[(-1, c(0.6, 0.0)), (2, c(0.0, 0.8))]).unwrap();
        let out = evolve(&psi, &PotentialSpec::fibonacci(1.0), 0.0, 20).unwrap();
        for n in -20..=20 {
            assert!((out.get(n) - psi.get(n)).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_potential_only_adds_phase() {
        let psi = WavePacket::from_sites(&[(0, c(1.0, 0.0)), (1, c(0.5, -0.5))]).unwrap();
        let free = evolve(&psi, &PotentialSpec::free(), 3.0, 40).unwrap();
        let shifted = evolve(&psi, &PotentialSpec::constant(0.7), 3.0, 40).unwrap();
        for n in -40..=40 {
            assert!((free.get(n).norm_sqr() - shifted.get(n).norm_sqr()).abs() < 1e-12);
        }
    }

    #[test]
    fn evolution_rejects_states_outside_box() {
        assert!(evolve(&WavePacket::delta(30), &PotentialSpec::free(), 1.0, 10).is_err());
    }

    #[test]
    fn short_time_average_stays_put() {
        let p = time_average_quadrature(&WavePacket::delta(0), &PotentialSpec::free(), 0.05, 20).unwrap();
        assert!((p.get(0) - 1.0).abs() < 1e-2);
    }

    #[test]
    fn stationary_state() {
        let prop = Propagator::new(&PotentialSpec::fibonacci(1.0), 10).unwrap();
        let j = 7;
        let coeffs: Vec<Complex64> = prop.eigen().vectors.column(j).iter().map(|&x| c(x, 0.0)).collect();
        let psi = WavePacket::new(-10, coeffs).unwrap();
        for time in [1.0, 50.0] {
            let p = prop.time_average_eigen_exact(&psi, time).unwrap();
            for (n, a) in p.sites() {
                assert!((a - psi.get(n).norm_sqr()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn three_site_closed_form() {
        // free path on three sites: eigenvalues 0, ±√2; δ₀ has weight ½ on
        // each of ±√2, so ψ(t,0) = cos(√2 t) and |ψ|² = ½ + ½cos(2√2 t)
        let time: f64 = 3.0;
        let p = time_average_eigen_exact(&WavePacket::delta(0), &PotentialSpec::free(), time, 1).unwrap();
        let omega = 2.0 * 2f64.sqrt();
        let expected = 0.5 + 0.5 / (1.0 + (time * omega / 2.0).powi(2));
        assert!((p.get(0) - expected).abs() < 1e-13, "{} vs {expected}", p.get(0));
    }

    #[test]
    fn eigen_exact_guard() {
        assert!(matches!(
            time_average_eigen_exact(&WavePacket::delta(0), &PotentialSpec::free(), 1.0, 301),
            Err(Error::BoxTooLarge { .. })
        ));
    }

    #[test]
    fn three_routes_agree() {
        let spec = PotentialSpec::fibonacci(1.0);
        let psi = WavePacket::from_sites(&[(0, c(0.8, 0.0)), (3, c(0.0, 0.6))]).unwrap();
        let prop = Propagator::new(&spec, 60).unwrap();
        let exact = prop.time_average_eigen_exact(&psi, 8.0).unwrap();
        let quad = prop.time_average_quadrature(&psi, 8.0).unwrap();
        let res = time_average(&psi, &spec, 8.0, 60, Method::Resolvent).unwrap();
        assert!(profile_distance(&exact, &quad) < 1e-6);
        assert!(profile_distance(&exact, &res) < 1e-6, "{}", profile_distance(&exact, &res));
        assert!((res.total() - 1.0).abs() < 1e-8, "{}", res.total() - 1.0);
    }

    #[test]
    fn moments_and_outside_probabilities() {
        let profile = TimeAverageProfile {
            time: 1.0,
            half_width: 3,
            method: Method::EigenExact,
            values: vec![0.0, 0.5, 0.0, 0.0, 0.0, 0.5, 0.0],
            norm_sqr: 1.0,
            leakage: 0.0,
            tolerance: 0.0,
        };
        assert_eq!(profile.moment(2.0).unwrap().value, 4.0);
        let at0 = profile.outside_probability(0.0).unwrap();
        assert_eq!(at0.total, 1.0 + profile.get(0));
        assert_eq!(profile.outside_probability(2.0).unwrap().total, 1.0);
        assert_eq!(profile.outside_probability(2.5).unwrap().total, 0.0);
        assert!(profile.outside_probability(4.0).is_err());
        let mut point = profile.clone();
        point.values = vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        assert_eq!(point.moment(3.0).unwrap().value, 0.0);
    }

    #[test]
    fn free_light_cone() {
        let spec = PotentialSpec::free();
        let p = time_average(&WavePacket::delta(0), &spec, 10.0, 400, Method::Resolvent).unwrap();
        // speed 2, weight e^{−2t/T}: at distance 2·t with t = 15 T the weight is e^{−30}
        let far = p.outside_probability(300.0).unwrap();
        assert!(far.total < 1e-6, "{}", far.total);
    }

    #[test]
    fn free_second_moment_grows_quadratically() {
        let spec = PotentialSpec::free();
        let times = [10.0, 20.0, 40.0, 80.0];
        let logs: Vec<(f64, f64)> = times
            .iter()
            .map(|&t| {
                let p = time_average(&WavePacket::delta(0), &spec, t, 2000, Method::Resolvent).unwrap();
                (t.ln(), p.moment(2.0).unwrap().value.ln())
            })
            .collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = logs.into_iter().unzip();
        let (slope, _, _) = crate::numerics::least_squares(&xs, &ys);
        assert!((slope - 2.0).abs() < 0.1, "{slope}");
    }

    #[test]
    fn grid_validation() {
        let g = EnergyGrid { half_span: 4.0, spacing: 0.025, tail_panels: 4 };
        assert!(g.validate(1.0, 10.0).is_ok());
        assert!(g.validate(1.5, 10.0).is_err());
        assert!(g.validate(1.0, 20.0).is_err());
        let q = g.quadrature();
        // total weight of the tails is infinite in principle; check the core part
        assert_eq!(q.nodes.iter().filter(|e| e.abs() <= 4.0).count(), 321);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn unitarity(t in 0.0..20.0f64, lambda in 0.0..2.0f64, a in -1.0..1.0f64, b in -1.0..1.0f64) {
            prop_assume!(a.abs() + b.abs() > 0.1);
            let psi = WavePacket::from_sites(&[(0, c(a, 0.0)), (1, c(0.0, b))]).unwrap();
            let out = evolve(&psi, &PotentialSpec::fibonacci(lambda), t, 30).unwrap();
            prop_assert!((out.norm_sqr() - psi.norm_sqr()).abs() < 1e-10);
        }

        #[test]
        fn profiles_are_nonnegative_and_normalized(time in 0.5..20.0f64, lambda in 0.0..2.0f64) {
            let spec = PotentialSpec::almost_mathieu(lambda, GOLDEN_THETA, 0.1).unwrap();
            let psi = WavePacket::from_sites(&[(-1, c(0.3, 0.1)), (2, c(-0.5, 0.2))]).unwrap();
            let p = time_average(&psi, &spec, time, 120, Method::Resolvent).unwrap();
            prop_assert!(p.values.iter().all(|&a| a >= 0.0));
            prop_assert!((p.total() - p.norm_sqr).abs() <= p.error_bound() + 1e-9);
            for k in 0..20 {
                let lo = p.outside_probability(k as f64 + 1.0).unwrap().total;
                let hi = p.outside_probability(k as f64).unwrap().total;
                prop_assert!(lo <= hi + 1e-12);
            }
        }

        #[test]
        fn parity_for_even_potentials(values in proptest::collection::vec(-1.0..1.0f64, 41), time in 1.0..10.0f64) {
            // mirror the random half so W(−n) = W(n)
            let mut table = values.clone();
            table.reverse();
            table.extend_from_slice(&values[1..]);
            let spec = PotentialSpec::table(-40, table).unwrap();
            let psi = WavePacket::from_sites(&[(-2, c(0.5, 0.0)), (0, c(1.0, 0.0)), (2, c(0.5, 0.0))]).unwrap();
            let p = time_average(&psi, &spec, time, 40, Method::Resolvent).unwrap();
            for n in 1..=40 {
                prop_assert!((p.get(n) - p.get(-n)).abs() < 1e-9);
            }
        }
    }
}
