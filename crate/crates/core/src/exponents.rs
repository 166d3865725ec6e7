//! Finite-scale estimators of transport exponents, the sublinearity check,
//! the upper-bound premise scan and the lower-bound certificate.
//!
//! Every quantity here is a surrogate of a `liminf`/`limsup` as `T → ∞`; the
//! windows and fits are fixed and reported rather than tuned.

use num_complex::Complex64;
use num_traits::Num;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{profiles_over_times, time_average, Method, MomentTable, ProfileConfig, Propagator};
use crate::error::{invalid, Error, Result};
use crate::lattice::{PotentialSpec, WavePacket};
use crate::numerics::{least_squares, Quadrature};
use crate::transfer::{backward_max_norm, forward_max_norm, norm_scan, transfer_product, NormFamily};

/// Floor applied to outside probabilities before taking logarithms.
pub const PROBABILITY_FLOOR: f64 = 1e-14;

/// `count` geometrically spaced times from `start` to `stop`.
pub fn geometric_grid(start: f64, stop: f64, count: usize) -> Result<Vec<f64>> {
    if !(start > 0.0 && stop > start) {
        return Err(invalid("time grid", "need 0 < start < stop"));
    }
    if count < 2 {
        return Err(invalid("time grid", "need at least two points"));
    }
    let ratio = (stop / start).ln() / (count - 1) as f64;
    Ok((0..count).map(|i| if i + 1 == count { stop } else { start * (ratio * i as f64).exp() }).collect())
}

fn check_geometric(times: &[f64], min_points: usize) -> Result<()> {
    if times.len() < min_points {
        return Err(Error::TooFewPoints { needed: min_points, got: times.len() });
    }
    if times.iter().any(|&t| !(t > 0.0)) {
        return Err(invalid("time grid", "times must be positive"));
    }
    let logs: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let step = logs[1] - logs[0];
    if !(step > 0.0) || logs.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step.abs().max(1.0)) {
        return Err(invalid("time grid", "must be geometric and increasing"));
    }
    Ok(())
}

/// Index of the first point of the upper half of a grid of `len` points.
fn upper_half_start(len: usize) -> usize {
    len / 2
}

/// Power-law fit of `⟨|X|^p⟩(T)` on a geometric grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub p: f64,
    pub times: Vec<f64>,
    pub moments: Vec<f64>,
    /// Least-squares slope of `log M` against `p log T` over the full grid.
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    /// First grid index of the upper half used for the proxies.
    pub window_start: usize,
    /// Least-squares slope over the upper half.
    pub window_slope: f64,
    /// Smallest two-point slope over the upper half (`β⁻` proxy).
    pub beta_minus_proxy: f64,
    /// Largest two-point slope over the upper half (`β⁺` proxy).
    pub beta_plus_proxy: f64,
}

/// Fits a moment series; works on any positive series.
pub fn fit_moments(times: &[f64], moments: &[f64], p: f64) -> Result<ExponentFit> {
    if times.len() != moments.len() {
        return Err(invalid("moments", "length must match the time grid"));
    }
    if !(p > 0.0) {
        return Err(invalid("p", "must be positive"));
    }
    check_geometric(times, 3)?;
    if moments.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
        return Err(invalid("moments", "must be positive and finite"));
    }
    let xs: Vec<f64> = times.iter().map(|t| p * t.ln()).collect();
    let ys: Vec<f64> = moments.iter().map(|m| m.ln()).collect();
    let (slope, intercept, residual) = least_squares(&xs, &ys);
    let start = upper_half_start(times.len()).min(times.len() - 2);
    let (window_slope, _, _) = least_squares(&xs[start..], &ys[start..]);
    let local: Vec<f64> = (start..times.len() - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
    let beta_minus_proxy = local.iter().cloned().fold(f64::INFINITY, f64::min);
    let beta_plus_proxy = local.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(ExponentFit {
        p,
        times: times.to_vec(),
        moments: moments.to_vec(),
        slope,
        intercept,
        residual,
        window_start: start,
        window_slope,
        beta_minus_proxy,
        beta_plus_proxy,
    })
}

/// Moment fits for several `p` sharing one set of profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentFits {
    pub table: MomentTable,
    pub fits: Vec<ExponentFit>,
    /// Largest leakage over the grid.
    pub max_leakage: f64,
}

pub fn beta_fits(
    spec: &PotentialSpec,
    state: &WavePacket,
    ps: &[f64],
    times: &[f64],
    config: &ProfileConfig,
) -> Result<MomentFits> {
    check_geometric(times, 6)?;
    if ps.is_empty() {
        return Err(Error::EmptySamples("p list"));
    }
    let profiles = profiles_over_times(state, spec, times, config)?;
    let table = MomentTable::from_profiles(&profiles, ps)?;
    let fits = ps
        .iter()
        .map(|&p| {
            let series: Vec<f64> = table.series(p).into_iter().map(|(_, m)| m).collect();
            fit_moments(times, &series, p)
        })
        .collect::<Result<_>>()?;
    let max_leakage = profiles.iter().map(|p| p.leakage).fold(0.0, f64::max);
    Ok(MomentFits { table, fits, max_leakage })
}

/// Single-`p` form of [`beta_fits`].
pub fn beta_fit(
    spec: &PotentialSpec,
    state: &WavePacket,
    p: f64,
    times: &[f64],
    config: &ProfileConfig,
) -> Result<ExponentFit> {
    Ok(beta_fits(spec, state, &[p], times, config)?.fits.remove(0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SAlphaFit {
    pub alpha: f64,
    pub times: Vec<f64>,
    /// `P(T^α, T)`, floored at [`PROBABILITY_FLOOR`].
    pub outside: Vec<f64>,
    pub floored: Vec<bool>,
    pub window_start: usize,
    /// `−min log P / log T` over the upper half.
    pub s_minus: f64,
    /// `−max log P / log T` over the upper half.
    pub s_plus: f64,
}

/// `S±` proxies from a series of outside probabilities.
pub fn fit_outside(times: &[f64], outside: &[f64], alpha: f64) -> Result<SAlphaFit> {
    if times.len() != outside.len() {
        return Err(invalid("outside", "length must match the time grid"));
    }
    check_geometric(times, 3)?;
    if times.iter().any(|&t| t <= 1.0) {
        return Err(invalid("time grid", "times must exceed 1 for log P / log T"));
    }
    let floored: Vec<bool> = outside.iter().map(|&p| !(p >= PROBABILITY_FLOOR)).collect();
    let clamped: Vec<f64> = outside.iter().map(|&p| p.max(PROBABILITY_FLOOR)).collect();
    let start = upper_half_start(times.len());
    let ratios: Vec<f64> = (start..times.len()).map(|i| clamped[i].ln() / times[i].ln()).collect();
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(SAlphaFit {
        alpha,
        times: times.to_vec(),
        outside: clamped,
        floored,
        window_start: start,
        s_minus: -min,
        s_plus: -max,
    })
}

pub fn s_alpha_fit(
    spec: &PotentialSpec,
    state: &WavePacket,
    alpha: f64,
    times: &[f64],
    config: &ProfileConfig,
) -> Result<SAlphaFit> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1]"));
    }
    check_geometric(times, 6)?;
    let profiles = profiles_over_times(state, spec, times, config)?;
    let outside =
        profiles.iter().map(|p| Ok(p.outside_probability(p.time.powf(alpha))?.total)).collect::<Result<Vec<f64>>>()?;
    fit_outside(times, &outside, alpha)
}

/// Outcome of the sublinearity check for `ψ = xψ₁ + yψ₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SublinearityReport {
    pub x: f64,
    pub y: f64,
    pub p: f64,
    pub proxy_first: f64,
    pub proxy_second: f64,
    pub proxy_mix: f64,
    pub slack: f64,
    pub proxy_ok: bool,
    /// Largest `|ψ(t,n)|² − 2x²|ψ₁(t,n)|² − 2y²|ψ₂(t,n)|²` over the samples.
    pub pointwise_max_excess: f64,
    pub pointwise_samples: usize,
    pub pointwise_ok: bool,
}

/// Settings for the sublinearity check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SublinearityConfig {
    pub slack: f64,
    /// Half-width of the box used for the pointwise samples.
    pub pointwise_half_width: usize,
    /// Number of sampled times, spread uniformly over `[0, T_max]`.
    pub pointwise_times: usize,
}

impl Default for SublinearityConfig {
    fn default() -> Self {
        Self { slack: 0.05, pointwise_half_width: 150, pointwise_times: 40 }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn sublinearity_check(
    spec: &PotentialSpec,
    first: &WavePacket,
    second: &WavePacket,
    x: f64,
    y: f64,
    p: f64,
    times: &[f64],
    profile: &ProfileConfig,
    config: &SublinearityConfig,
) -> Result<SublinearityReport> {
    let mix = first.combine(x, second, y)?;
    let proxy = |s: &WavePacket| -> Result<f64> {
        if s.norm_sqr() == 0.0 {
            return Err(Error::ZeroState);
        }
        Ok(beta_fit(spec, s, p, times, profile)?.beta_plus_proxy)
    };
    let proxy_first = proxy(first)?;
    let proxy_second = if y == 0.0 { proxy_first } else { proxy(second)? };
    let proxy_mix = proxy(&mix)?;
    let proxy_ok = proxy_mix <= proxy_first.max(proxy_second) + config.slack;

    let prop = Propagator::new(spec, config.pointwise_half_width)?;
    let t_max = *times.last().unwrap();
    let mut excess = f64::NEG_INFINITY;
    let mut samples = 0;
    for i in 0..config.pointwise_times {
        let t = t_max * i as f64 / (config.pointwise_times.max(2) - 1) as f64;
        let a = prop.evolve_dense(&mix, t)?;
        let b = prop.evolve_dense(first, t)?;
        let c = prop.evolve_dense(second, t)?;
        for ((a, b), c) in a.iter().zip(&b).zip(&c) {
            let bound = 2.0 * x * x * b.norm_sqr() + 2.0 * y * y * c.norm_sqr();
            excess = excess.max(a.norm_sqr() - bound);
            samples += 1;
        }
    }
    Ok(SublinearityReport {
        x,
        y,
        p,
        proxy_first,
        proxy_second,
        proxy_mix,
        slack: config.slack,
        proxy_ok,
        pointwise_max_excess: excess,
        pointwise_samples: samples,
        pointwise_ok: excess <= 1e-12,
    })
}

/// `1/(1+α) − (1+4α)/(p(1+α))`, generic so it can run on exact rationals.
pub fn corollary_beta_bound<T: Num + Copy>(alpha: T, p: T) -> T {
    let one = T::one();
    let four = one + one + one + one;
    one / (one + alpha) - (one + four * alpha) / (p * (one + alpha))
}

/// Exponent `(p − 3α)/(1+α)` of the moment lower bound `|B(T)| T^{(p−3α)/(1+α)}`.
pub fn moment_bound_exponent<T: Num + Copy>(alpha: T, p: T) -> T {
    let one = T::one();
    let three = one + one + one;
    (p - three * alpha) / (one + alpha)
}

/// Lower bound on `β⁻(ψ, p)` when `|B(T)| ≍ T^{−b}`: the moment exponent
/// minus `b`, divided by `p`. With `b = 1` (a single energy) this is
/// [`corollary_beta_bound`].
pub fn beta_bound_from_moments<T: Num + Copy>(alpha: T, p: T, b: T) -> T {
    (moment_bound_exponent(alpha, p) - b) / p
}

/// Per-`T` values of the premise scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PremiseScan {
    pub alpha: f64,
    pub m: f64,
    pub c: f64,
    pub k_span: f64,
    pub times: Vec<f64>,
    /// `n_max = ⌊C T^α / 2⌋` per time.
    pub n_max: Vec<usize>,
    /// `values[i][j]` for time `i` and phase `j`.
    pub per_phase: Vec<Vec<f64>>,
    /// Maximum over phases per time.
    pub values: Vec<f64>,
}

fn check_premise_params(alpha: f64, m: f64, c: f64, times: &[f64]) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1)"));
    }
    if !(m > 1.0) {
        return Err(invalid("m", "must exceed 1"));
    }
    if !(c > 0.0) {
        return Err(invalid("c", "must be positive"));
    }
    if times.is_empty() || times.iter().any(|&t| !(t > 0.0)) {
        return Err(invalid("time grid", "need positive times"));
    }
    Ok(())
}

/// `T^m ∫_{−K}^{K} (max_{0≤n≤CT^α/2} ‖M(n, 0, E + i/T, ω)‖)^{−2} dE` with
/// `K = B + 3`, maximized over the phases.
pub fn upper_bound_premise_scan(
    family: &dyn NormFamily,
    alpha: f64,
    m: f64,
    c: f64,
    times: &[f64],
    phases: &[f64],
) -> Result<PremiseScan> {
    check_premise_params(alpha, m, c, times)?;
    if phases.is_empty() {
        return Err(Error::EmptySamples("phases"));
    }
    let k_span = family.bound() + 3.0;
    let mut per_phase = Vec::with_capacity(times.len());
    let mut n_maxes = Vec::with_capacity(times.len());
    for &t in times {
        let n_max = (c * t.powf(alpha) / 2.0).floor() as usize;
        let q = Quadrature::trapezoid(-k_span, k_span, 0.25 / t);
        let zs: Vec<Complex64> = q.nodes.iter().map(|&e| Complex64::new(e, 1.0 / t)).collect();
        let row = phases
            .iter()
            .map(|&omega| {
                let norms = family.forward_max_norms(omega, n_max, &zs)?;
                let integral: f64 = norms.iter().zip(&q.weights).map(|(nrm, w)| w / (nrm * nrm)).sum();
                Ok(t.powf(m) * integral)
            })
            .collect::<Result<Vec<f64>>>()?;
        per_phase.push(row);
        n_maxes.push(n_max);
    }
    let values = per_phase.iter().map(|r| r.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
    Ok(PremiseScan { alpha, m, c, k_span, times: times.to_vec(), n_max: n_maxes, per_phase, values })
}

/// Two-sided premises for a fixed potential: per time, the maximum over
/// anchors `|k| < CT^α/2` of `T^m ∫ (max_{k≤n≤CT^α} ‖M(n,k)‖)^{−2} dE` and of
/// the mirror quantity with `−CT^α ≤ n ≤ k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedPremiseScan {
    pub alpha: f64,
    pub m: f64,
    pub c: f64,
    pub k_span: f64,
    pub times: Vec<f64>,
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
}

pub fn two_sided_premise_scan(
    spec: &PotentialSpec,
    alpha: f64,
    m: f64,
    c: f64,
    times: &[f64],
) -> Result<TwoSidedPremiseScan> {
    check_premise_params(alpha, m, c, times)?;
    let k_span = spec.bound() + 3.0;
    let mut forward = Vec::with_capacity(times.len());
    let mut backward = Vec::with_capacity(times.len());
    for &t in times {
        let reach = c * t.powf(alpha);
        let n_far = reach.floor() as i64;
        let half = reach / 2.0;
        let k_lim = if half.fract() == 0.0 { half as i64 - 1 } else { half.floor() as i64 };
        let ws = spec.values(-n_far, n_far);
        let at = |n: i64| (n + n_far) as usize;
        let q = Quadrature::trapezoid(-k_span, k_span, 0.25 / t);
        let (f, b) = (-k_lim..=k_lim)
            .into_par_iter()
            .map(|k| {
                let fw = &ws[at(k + 1).min(ws.len())..=at(n_far)];
                let bw = &ws[at(-n_far + 1)..at(k + 1)];
                let mut f = 0.0;
                let mut b = 0.0;
                for (&e, &w) in q.nodes.iter().zip(&q.weights) {
                    let z = Complex64::new(e, 1.0 / t);
                    f += w / forward_max_norm(fw, z).powi(2);
                    b += w / backward_max_norm(bw, z).powi(2);
                }
                (f, b)
            })
            .reduce(|| (f64::NEG_INFINITY, f64::NEG_INFINITY), |x, y| (x.0.max(y.0), x.1.max(y.1)));
        forward.push(t.powf(m) * f);
        backward.push(t.powf(m) * b);
    }
    Ok(TwoSidedPremiseScan { alpha, m, c, k_span, times: times.to_vec(), forward, backward })
}

/// Which seeds build the generalized eigenfunction `v_E`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedChoice {
    /// `v(a) = 1, v(a−1) = 0` at the left support edge `a`.
    Primary,
    /// Per energy, the larger of the primary profile and the one seeded with
    /// `v(a) = 0, v(a−1) = 1`.
    BestOfTwo,
}

/// `|⟨ψ, v_E⟩|` on an energy grid, with `v_E` normalized by `‖(v(1), v(0))‖ = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerProductProfile {
    pub energies: Vec<f64>,
    pub values: Vec<f64>,
    pub seeds: SeedChoice,
    /// Number of sites from the left to the right support edge.
    pub support_width: usize,
}

/// The sublevel set `{E : |⟨ψ, v_E⟩| < ε₀}` on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sublevel {
    pub epsilon: f64,
    pub intervals: Vec<(f64, f64)>,
    /// Bound on the number of components: the numerator is a polynomial in
    /// `E` of degree below the support width.
    pub count_bound: usize,
    pub within_bound: bool,
}

impl InnerProductProfile {
    pub fn sublevel(&self, epsilon: f64) -> Sublevel {
        let mut intervals = Vec::new();
        let mut open: Option<usize> = None;
        for (i, &v) in self.values.iter().enumerate() {
            match (v < epsilon, open) {
                (true, None) => open = Some(i),
                (false, Some(s)) => {
                    intervals.push((self.energies[s], self.energies[i - 1]));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(s) = open {
            intervals.push((self.energies[s], *self.energies.last().unwrap()));
        }
        let count_bound = self.support_width.max(1);
        let within_bound = intervals.len() <= count_bound;
        Sublevel { epsilon, intervals, count_bound, within_bound }
    }
}

fn seeded_inner_product(spec: &PotentialSpec, state: &WavePacket, energy: f64, seed: [f64; 2]) -> f64 {
    let (lo, hi) = state.support();
    let potential = spec.values(lo, hi);
    // seed = (v(a), v(a−1)) with a = lo
    let (mut cur, mut prev) = (seed[0], seed[1]);
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, n) in (lo..=hi).enumerate() {
        acc += state.get(n).conj() * cur;
        let next = (energy - potential[i]) * cur - prev;
        prev = cur;
        cur = next;
    }
    let v0 =
        transfer_product(spec, 0, lo - 1, Complex64::new(energy, 0.0)).matrix.apply([seed[0].into(), seed[1].into()]);
    let norm = (v0[0].norm_sqr() + v0[1].norm_sqr()).sqrt();
    acc.norm() / norm
}

pub fn inner_product_profile(
    spec: &PotentialSpec,
    state: &WavePacket,
    energies: &[f64],
    seeds: SeedChoice,
) -> Result<InnerProductProfile> {
    if energies.is_empty() {
        return Err(Error::EmptySamples("energy grid"));
    }
    let values = energies
        .par_iter()
        .map(|&e| {
            let primary = seeded_inner_product(spec, state, e, [1.0, 0.0]);
            match seeds {
                SeedChoice::Primary => primary,
                SeedChoice::BestOfTwo => primary.max(seeded_inner_product(spec, state, e, [0.0, 1.0])),
            }
        })
        .collect();
    let (lo, hi) = state.support();
    Ok(InnerProductProfile { energies: energies.to_vec(), values, seeds, support_width: (hi - lo + 1) as usize })
}

/// Energy sampling of the certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateSampling {
    /// Interior points per interval (endpoints are added).
    pub points_per_interval: usize,
    /// Extra points inserted on each side of a failed sample.
    pub refine: usize,
    pub seeds: SeedChoice,
    /// Half-width for the optional measurement of `P(ψ, N/2, T)`.
    pub measure_half_width: Option<usize>,
}

impl Default for CertificateSampling {
    fn default() -> Self {
        Self { points_per_interval: 64, refine: 4, seeds: SeedChoice::BestOfTwo, measure_half_width: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub energy: f64,
    pub norm_right: f64,
    pub norm_left: f64,
    pub norm_limit: f64,
    pub inner_product: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub alpha: f64,
    pub c: f64,
    pub epsilon: f64,
    pub intervals: Vec<(f64, f64)>,
    pub time: f64,
    /// `N = T^{1/(1+α)}`.
    pub scale: f64,
    /// Support radius `s` with `supp ψ ⊂ [−s, s]`; norms are anchored at `±(s+1)`.
    pub support_radius: u64,
    /// Merged `1/T`-fattening of the intervals.
    pub fattened: Vec<(f64, f64)>,
    pub fattened_length: f64,
    pub checks: Vec<CertificateCheck>,
    pub passed: bool,
    pub witness: Option<f64>,
    /// `|B(T)| N^{1−2α} / T`: the predicted shape of `P(ψ, N/2, T)` up to `Ĉ`.
    pub outside_shape: f64,
    /// `(p, (p − 3α)/(1+α), 1/(1+α) − (1+4α)/(p(1+α)))` per requested `p`.
    pub exponents: Vec<(f64, f64, f64)>,
    /// Measured `P(ψ, N/2, T)` and the ratio `P / outside_shape`.
    pub measured: Option<(f64, f64)>,
    /// Pairwise transfer bounds follow from the anchored ones by the cocycle
    /// property at the cost of a factor `C²`.
    pub note: String,
}

/// Merges `[a − w, b + w]` over the intervals.
pub fn fatten(intervals: &[(f64, f64)], width: f64) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = intervals.iter().map(|&(a, b)| (a - width, b + width)).collect();
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn lower_bound_certificate(
    spec: &PotentialSpec,
    state: &WavePacket,
    intervals: &[(f64, f64)],
    alpha: f64,
    c: f64,
    epsilon: Option<f64>,
    time: f64,
    ps: &[f64],
    sampling: &CertificateSampling,
) -> Result<Certificate> {
    if intervals.is_empty() {
        return Err(Error::EmptySamples("intervals"));
    }
    if intervals.iter().any(|&(a, b)| !(a <= b)) {
        return Err(invalid("intervals", "need a ≤ b"));
    }
    if !(alpha >= 0.0) || !(c > 0.0) || !(time > 1.0) {
        return Err(invalid("certificate", "need α ≥ 0, C > 0, T > 1"));
    }
    let k = spec.bound() + 3.0;
    if intervals.iter().any(|&(a, b)| a < -k || b > k) {
        return Err(invalid("intervals", "must lie inside [−K, K]"));
    }
    let s = state.support_radius();
    let scale = time.powf(1.0 / (1.0 + alpha));
    let reach = scale.floor() as i64;
    let limit = c * scale.powf(alpha);

    let mut energies = Vec::new();
    for &(a, b) in intervals {
        if a == b {
            energies.push(a);
            continue;
        }
        let n = sampling.points_per_interval + 1;
        energies.extend((0..=n).map(|i| a + (b - a) * i as f64 / n as f64));
    }
    let eps_profile = inner_product_profile(spec, state, &energies, sampling.seeds)?;
    let epsilon = match epsilon {
        Some(e) => e,
        None => 0.5 * eps_profile.values.iter().cloned().fold(0.0, f64::max),
    };
    let anchor = s as i64 + 1;
    let check = |e: f64| -> Result<CertificateCheck> {
        let z = Complex64::new(e, 0.0);
        let right = norm_scan(spec, anchor, -reach, reach.max(anchor), z)?;
        let left = norm_scan(spec, -anchor, (-reach).min(-anchor), reach, z)?;
        let inner = inner_product_profile(spec, state, &[e], sampling.seeds)?.values[0];
        let passed = right.max <= limit && left.max <= limit && !right.saturated && !left.saturated && inner > epsilon;
        Ok(CertificateCheck {
            energy: e,
            norm_right: right.max,
            norm_left: left.max,
            norm_limit: limit,
            inner_product: inner,
            passed,
        })
    };
    let mut checks = energies.par_iter().map(|&e| check(e)).collect::<Result<Vec<_>>>()?;
    // refine around failures to localize the witness
    let failed: Vec<usize> = (0..checks.len()).filter(|&i| !checks[i].passed).collect();
    for i in failed {
        let e = checks[i].energy;
        let lo = if i > 0 { checks[i - 1].energy } else { e };
        let hi = if i + 1 < energies.len() { energies[i + 1] } else { e };
        for j in 1..=sampling.refine {
            let f = j as f64 / (sampling.refine + 1) as f64;
            for x in [e + (lo - e) * f, e + (hi - e) * f] {
                if x != e {
                    checks.push(check(x)?);
                }
            }
        }
    }
    checks.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    let passed = checks.iter().all(|c| c.passed);
    let witness = checks.iter().find(|c| !c.passed).map(|c| c.energy);
    let fattened = fatten(intervals, 1.0 / time);
    let fattened_length = fattened.iter().map(|(a, b)| b - a).sum();
    let outside_shape = fattened_length * scale.powf(1.0 - 2.0 * alpha) / time;
    let exponents = ps.iter().map(|&p| (p, moment_bound_exponent(alpha, p), corollary_beta_bound(alpha, p))).collect();
    let measured = match sampling.measure_half_width {
        Some(l) => {
            let profile = time_average(state, spec, time, l, Method::Resolvent)?;
            let pr = profile.outside_probability(scale / 2.0)?.total;
            Some((pr, pr / outside_shape))
        }
        None => None,
    };
    Ok(Certificate {
        alpha,
        c,
        epsilon,
        intervals: intervals.to_vec(),
        time,
        scale,
        support_radius: s,
        fattened,
        fattened_length,
        checks,
        passed,
        witness,
        outside_shape,
        exponents,
        measured,
        note: "norms checked at anchors ±(s+1); pairwise bounds follow with C replaced by C²".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{PolymerBlocks, GOLDEN_THETA};
    use crate::transfer::{equidistributed_phases, PhaseFamily};
    use num_rational::Ratio;
    use proptest::prelude::*;

    #[test]
    fn grid() {
        let g = geometric_grid(10.0, 200.0, 6).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], 10.0);
        assert_eq!(g[5], 200.0);
        assert!(check_geometric(&g, 6).is_ok());
        assert!(check_geometric(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 6).is_err());
        assert!(geometric_grid(5.0, 1.0, 4).is_err());
    }

    #[test]
    fn synthetic_power_law() {
        let times = geometric_grid(10.0, 1000.0, 8).unwrap();
        let moments: Vec<f64> = times.iter().map(|t| 3.0 * t.powf(0.7 * 2.0)).collect();
        let fit = fit_moments(&times, &moments, 2.0).unwrap();
        for v in [fit.slope, fit.window_slope, fit.beta_minus_proxy, fit.beta_plus_proxy] {
            assert!((v - 0.7).abs() < 1e-12);
        }
        assert!(fit.residual < 1e-10);
    }

    #[test]
    fn synthetic_outside_probability() {
        let times = geometric_grid(10.0, 1000.0, 8).unwrap();
        let p: Vec<f64> = times.iter().map(|t| t.powi(-2)).collect();
        let fit = fit_outside(&times, &p, 0.5).unwrap();
        assert!((fit.s_minus - 2.0).abs() < 1e-12 && (fit.s_plus - 2.0).abs() < 1e-12);
        let tiny = vec![1e-20; times.len()];
        let fit = fit_outside(&times, &tiny, 0.5).unwrap();
        assert!(fit.floored.iter().all(|&f| f));
    }

    #[test]
    fn corollary_exact_arithmetic() {
        for p in 1..20i64 {
            let p = Ratio::from_integer(p);
            let zero = Ratio::from_integer(0);
            let one = Ratio::from_integer(1);
            assert_eq!(corollary_beta_bound(zero, p), one - one / p);
            let half = Ratio::new(1, 2);
            assert_eq!(corollary_beta_bound(one, p), half - Ratio::from_integer(5) / (Ratio::from_integer(2) * p));
            assert_eq!(beta_bound_from_moments(one, p, one), corollary_beta_bound(one, p));
        }
        assert!((corollary_beta_bound(1.0f64, 2.0) + 0.75).abs() < 1e-15);
    }

    struct Exponential(f64);

    impl NormFamily for Exponential {
        fn bound(&self) -> f64 {
            1.0
        }
        fn forward_max_norms(&self, _: f64, n_max: usize, zs: &[Complex64]) -> Result<Vec<f64>> {
            Ok(vec![(self.0 * n_max as f64).exp(); zs.len()])
        }
    }

    #[test]
    fn premise_scan_closed_form() {
        let fam = Exponential(0.3);
        // C T^α / 2 = 8 exactly: T = 256, α = 0.5, C = 1
        let scan = upper_bound_premise_scan(&fam, 0.5, 2.0, 1.0, &[256.0], &[0.0, 0.5]).unwrap();
        let expected = 256f64.powi(2) * 2.0 * 4.0 * (-2.0 * 0.3 * 8.0f64).exp();
        assert!((scan.values[0] / expected - 1.0).abs() < 1e-10);
        assert!(upper_bound_premise_scan(&fam, 1.5, 2.0, 1.0, &[256.0], &[0.0]).is_err());
    }

    #[test]
    fn premise_scan_free_does_not_decay() {
        let fam = PhaseFamily::new(PotentialSpec::sturmian(0.0, GOLDEN_THETA, 0.0).unwrap()).unwrap();
        let scan = upper_bound_premise_scan(&fam, 0.5, 2.0, 1.0, &[25.0, 400.0], &equidistributed_phases(4)).unwrap();
        assert!(scan.values[1] > scan.values[0]);
    }

    #[test]
    fn two_sided_scan_runs() {
        let amo = PotentialSpec::almost_mathieu(5.0, GOLDEN_THETA, 0.0).unwrap();
        let scan = two_sided_premise_scan(&amo, 0.2, 2.0, 10.0, &[25.0, 400.0]).unwrap();
        assert!(scan.forward[1] < scan.forward[0] && scan.backward[1] < scan.backward[0]);
        let free = PotentialSpec::free();
        let scan = two_sided_premise_scan(&free, 0.5, 2.0, 1.0, &[25.0, 400.0]).unwrap();
        assert!(scan.forward[1] > scan.forward[0]);
    }

    #[test]
    fn delta_inner_product() {
        let spec = PotentialSpec::fibonacci(1.0);
        let e: Vec<f64> = (0..50).map(|i| -3.0 + 0.12 * i as f64).collect();
        let prof = inner_product_profile(&spec, &WavePacket::delta(0), &e, SeedChoice::Primary).unwrap();
        let w0 = spec.value(0);
        for (en, v) in e.iter().zip(&prof.values) {
            // v(0) = 1, v(1) = E − W(0)
            let expected = 1.0 / (1.0 + (en - w0).powi(2)).sqrt();
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn two_site_states_never_vanish() {
        let spec = PotentialSpec::polymer(PolymerBlocks::dimer(0.5, 3)).unwrap();
        let psi = WavePacket::from_sites(&[(0, Complex64::new(0.3, -0.2)), (1, Complex64::new(-0.7, 0.1))]).unwrap();
        let e: Vec<f64> = (0..200).map(|i| -3.0 + 0.03 * i as f64).collect();
        let prof = inner_product_profile(&spec, &psi, &e, SeedChoice::BestOfTwo).unwrap();
        assert!(prof.values.iter().all(|&v| v > 1e-3));
    }

    #[test]
    fn fattening() {
        let f = fatten(&[(0.0, 0.0)], 0.01);
        assert!(((f[0].1 - f[0].0) - 0.02).abs() < 1e-15);
        let f = fatten(&[(0.0, 1.0), (1.01, 2.0), (3.0, 3.5)], 0.01);
        assert_eq!(f.len(), 2);
    }

    #[test]
    fn dimer_certificate() {
        let spec = PotentialSpec::polymer(PolymerBlocks::dimer(0.5, 11)).unwrap();
        let psi = WavePacket::from_sites(&[(0, Complex64::new(0.6, 0.0)), (1, Complex64::new(0.0, 0.8))]).unwrap();
        let cert = lower_bound_certificate(
            &spec,
            &psi,
            &[(0.48, 0.52)],
            0.0,
            10.0,
            None,
            100.0,
            &[2.0],
            &CertificateSampling::default(),
        )
        .unwrap();
        assert!(cert.passed, "{:?}", cert.witness);
        assert!(cert.fattened_length >= 2.0 / 100.0);
        assert_eq!(cert.exponents[0].2, 0.5);
    }

    #[test]
    fn certificate_reports_witness() {
        let spec = PotentialSpec::fibonacci(2.0);
        let cert = lower_bound_certificate(
            &spec,
            &WavePacket::delta(0),
            &[(3.5, 3.6)],
            0.0,
            2.0,
            None,
            100.0,
            &[2.0],
            &CertificateSampling::default(),
        )
        .unwrap();
        assert!(!cert.passed && cert.witness.is_some());
    }

    #[test]
    fn point_set_fattening() {
        let spec = PotentialSpec::polymer(PolymerBlocks::dimer(0.5, 1)).unwrap();
        let cert = lower_bound_certificate(
            &spec,
            &WavePacket::delta(0),
            &[(0.5, 0.5)],
            0.0,
            10.0,
            None,
            50.0,
            &[2.0],
            &CertificateSampling::default(),
        )
        .unwrap();
        assert!((cert.fattened_length - 2.0 / 50.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn window_slope_between_proxies(noise in proptest::collection::vec(-0.3..0.3f64, 8), s in 0.1..1.5f64) {
            let times = geometric_grid(10.0, 1000.0, 8).unwrap();
            let moments: Vec<f64> = times.iter().zip(&noise).map(|(t, n)| t.powf(2.0 * s) * n.exp()).collect();
            let fit = fit_moments(&times, &moments, 2.0).unwrap();
            prop_assert!(fit.beta_minus_proxy <= fit.window_slope + 1e-12);
            prop_assert!(fit.window_slope <= fit.beta_plus_proxy + 1e-12);
            prop_assert!(fit.slope.is_finite());
        }

        #[test]
        fn synthetic_exponents_are_recovered(beta in 0.05..1.0f64, p in 0.5..6.0f64, c in 0.1..10.0f64) {
            let times = geometric_grid(5.0, 5000.0, 7).unwrap();
            let moments: Vec<f64> = times.iter().map(|t| c * t.powf(beta * p)).collect();
            let fit = fit_moments(&times, &moments, p).unwrap();
            prop_assert!((fit.slope - beta).abs() < 1e-12);
            prop_assert!((fit.beta_plus_proxy - beta).abs() < 1e-12);
        }

        #[test]
        fn inner_product_sublevel_count(coeffs in proptest::collection::vec(-1.0..1.0f64, 7)) {
            prop_assume!(coeffs.iter().any(|c| c.abs() > 0.1));
            let psi = WavePacket::new(-3, coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect()).unwrap();
            let e: Vec<f64> = (0..=600).map(|i| -3.0 + 0.01 * i as f64).collect();
            let prof = inner_product_profile(&PotentialSpec::free(), &psi, &e, SeedChoice::Primary).unwrap();
            // zeros of the numerator: sign changes of the real inner product
            let max = prof.values.iter().cloned().fold(0.0, f64::max);
            let sub = prof.sublevel(0.05 * max);
            prop_assert!(sub.intervals.len() <= 7);
        }
    }
}
