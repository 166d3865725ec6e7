//! Potentials, wavepackets, the Hamiltonian action and finite-box truncation.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::potentials::{
    polymer_sequence, quasiperiodic_value, sturmian_value, PolymerBlocks, Sampler, SubstitutionRules,
};

/// A potential `W: ℤ → ℝ` from one of the supported families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `λ(⌊(n+1)θ+ω⌋ − ⌊nθ+ω⌋)`.
    Sturmian {
        coupling: f64,
        theta: f64,
        phase: f64,
    },
    /// `λ f(nθ + ω mod 1)`.
    Quasiperiodic {
        sampler: Sampler,
        coupling: f64,
        theta: f64,
        phase: f64,
    },
    /// `λ ω_n` along a substitution fixed point.
    Substitution {
        rules: SubstitutionRules,
        coupling: f64,
    },
    /// Random concatenation of two blocks.
    Polymer {
        blocks: PolymerBlocks,
    },
    Constant {
        value: f64,
    },
    /// Explicit values starting at `offset`, zero elsewhere.
    Table {
        offset: i64,
        values: Vec<f64>,
    },
}

impl PotentialSpec {
    pub fn sturmian(coupling: f64, theta: f64, phase: f64) -> Result<Self> {
        let spec = PotentialSpec::Sturmian { coupling, theta, phase };
        spec.validate()?;
        Ok(spec)
    }

    /// The Fibonacci Hamiltonian: golden-mean Sturmian potential.
    pub fn fibonacci(coupling: f64) -> Self {
        PotentialSpec::Sturmian { coupling, theta: crate::potentials::GOLDEN_THETA, phase: 0.0 }
    }

    pub fn quasiperiodic(sampler: Sampler, coupling: f64, theta: f64, phase: f64) -> Result<Self> {
        let spec = PotentialSpec::Quasiperiodic { sampler, coupling, theta, phase };
        spec.validate()?;
        Ok(spec)
    }

    /// `W(n) = λ·2cos(2π(nθ + ω))`.
    pub fn almost_mathieu(coupling: f64, theta: f64, phase: f64) -> Result<Self> {
        Self::quasiperiodic(Sampler::Cosine, coupling, theta, phase)
    }

    pub fn substitution(rules: SubstitutionRules, coupling: f64) -> Result<Self> {
        let spec = PotentialSpec::Substitution { rules, coupling };
        spec.validate()?;
        Ok(spec)
    }

    pub fn polymer(blocks: PolymerBlocks) -> Result<Self> {
        let spec = PotentialSpec::Polymer { blocks };
        spec.validate()?;
        Ok(spec)
    }

    pub fn constant(value: f64) -> Self {
        PotentialSpec::Constant { value }
    }

    pub fn free() -> Self {
        PotentialSpec::Constant { value: 0.0 }
    }

    pub fn table(offset: i64, values: Vec<f64>) -> Result<Self> {
        let spec = PotentialSpec::Table { offset, values };
        spec.validate()?;
        Ok(spec)
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            PotentialSpec::Sturmian { .. } => "sturmian",
            PotentialSpec::Quasiperiodic { .. } => "quasiperiodic",
            PotentialSpec::Substitution { .. } => "substitution",
            PotentialSpec::Polymer { .. } => "polymer",
            PotentialSpec::Constant { .. } => "constant",
            PotentialSpec::Table { .. } => "table",
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn coupling_ok(c: f64) -> Result<()> {
            if c.is_finite() && c >= 0.0 {
                Ok(())
            } else {
                Err(invalid("lambda", format!("coupling must be finite and non-negative, got {c}")))
            }
        }
        fn circle_ok(theta: f64, phase: f64) -> Result<()> {
            if !(theta > 0.0 && theta < 1.0) {
                return Err(invalid("theta", format!("frequency must lie in (0, 1), got {theta}")));
            }
            if !(0.0..1.0).contains(&phase) {
                return Err(invalid("omega", format!("phase must lie in [0, 1), got {phase}")));
            }
            Ok(())
        }
        match self {
            PotentialSpec::Sturmian { coupling, theta, phase } => {
                coupling_ok(*coupling)?;
                circle_ok(*theta, *phase)
            }
            PotentialSpec::Quasiperiodic { coupling, theta, phase, .. } => {
                coupling_ok(*coupling)?;
                circle_ok(*theta, *phase)
            }
            PotentialSpec::Substitution { rules, coupling } => {
                coupling_ok(*coupling)?;
                rules.validate()
            }
            PotentialSpec::Polymer { blocks } => blocks.validate(),
            PotentialSpec::Constant { value } => {
                if value.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("value", "must be finite"))
                }
            }
            PotentialSpec::Table { values, .. } => {
                if values.iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(invalid("table", "values must be finite"))
                }
            }
        }
    }

    /// `B = sup_n |W(n)|`.
    pub fn bound(&self) -> f64 {
        match self {
            PotentialSpec::Sturmian { coupling, .. } => *coupling,
            PotentialSpec::Quasiperiodic { sampler, coupling, .. } => coupling * sampler.sup(),
            PotentialSpec::Substitution { coupling, .. } => *coupling,
            PotentialSpec::Polymer { blocks } => blocks.sup(),
            PotentialSpec::Constant { value } => value.abs(),
            PotentialSpec::Table { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    pub fn value(&self, n: i64) -> f64 {
        match self {
            PotentialSpec::Sturmian { coupling, theta, phase } => sturmian_value(*coupling, *theta, *phase, n),
            PotentialSpec::Quasiperiodic { sampler, coupling, theta, phase } => {
                quasiperiodic_value(*sampler, *coupling, *theta, *phase, n)
            }
            PotentialSpec::Substitution { rules, coupling } => coupling * rules.two_sided_symbol(n) as f64,
            PotentialSpec::Polymer { blocks } => polymer_sequence(blocks, n, n)[0],
            PotentialSpec::Constant { value } => *value,
            PotentialSpec::Table { offset, values } => {
                let i = n - offset;
                if i >= 0 && (i as usize) < values.len() {
                    values[i as usize]
                } else {
                    0.0
                }
            }
        }
    }

    /// Values on `lo..=hi`.
    pub fn values(&self, lo: i64, hi: i64) -> Vec<f64> {
        match self {
            PotentialSpec::Polymer { blocks } => polymer_sequence(blocks, lo, hi),
            _ => (lo..=hi).map(|n| self.value(n)).collect(),
        }
    }

    /// Whether the family is generated by a circle rotation with a phase.
    pub fn is_dynamical(&self) -> bool {
        matches!(self, PotentialSpec::Sturmian { .. } | PotentialSpec::Quasiperiodic { .. })
    }

    pub fn phase(&self) -> Option<f64> {
        match self {
            PotentialSpec::Sturmian { phase, .. } | PotentialSpec::Quasiperiodic { phase, .. } => Some(*phase),
            _ => None,
        }
    }

    pub fn frequency(&self) -> Option<f64> {
        match self {
            PotentialSpec::Sturmian { theta, .. } | PotentialSpec::Quasiperiodic { theta, .. } => Some(*theta),
            _ => None,
        }
    }

    /// The same dynamically defined family member at phase `omega`.
    pub fn with_phase(&self, omega: f64) -> Result<Self> {
        let omega = omega.rem_euclid(1.0);
        match self {
            PotentialSpec::Sturmian { coupling, theta, .. } => Self::sturmian(*coupling, *theta, omega),
            PotentialSpec::Quasiperiodic { sampler, coupling, theta, .. } => {
                Self::quasiperiodic(*sampler, *coupling, *theta, omega)
            }
            other => Err(Error::NotDynamical(other.family_name())),
        }
    }
}

/// Bounds for exponentially decaying states: `|ψ(n)| ≤ D e^{−a|n|}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decay {
    pub prefactor: f64,
    pub rate: f64,
}

/// A finitely stored state `ψ` with `ψ(offset + i) = coefficients[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WavePacket {
    offset: i64,
    coefficients: Vec<Complex64>,
    decay: Option<Decay>,
}

impl WavePacket {
    pub fn new(offset: i64, coefficients: Vec<Complex64>) -> Result<Self> {
        let state = Self { offset, coefficients, decay: None };
        if !(state.norm_sqr() > 0.0) {
            return Err(Error::ZeroState);
        }
        Ok(state)
    }

    /// `δ_n`.
    pub fn delta(site: i64) -> Self {
        Self { offset: site, coefficients: vec![Complex64::new(1.0, 0.0)], decay: None }
    }

    /// Builds a state from `(site, amplitude)` pairs; repeated sites add up.
    pub fn from_sites(sites: &[(i64, Complex64)]) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::ZeroState);
        }
        let lo = sites.iter().map(|s| s.0).min().unwrap();
        let hi = sites.iter().map(|s| s.0).max().unwrap();
        let mut coefficients = vec![Complex64::new(0.0, 0.0); (hi - lo + 1) as usize];
        for &(n, c) in sites {
            coefficients[(n - lo) as usize] += c;
        }
        Self::new(lo, coefficients)
    }

    /// Attaches a decay descriptor after checking it on the stored window.
    pub fn with_decay(mut self, decay: Decay) -> Result<Self> {
        if !(decay.prefactor > 0.0 && decay.rate > 0.0) {
            return Err(invalid("decay", "D and a must be positive"));
        }
        for (n, c) in self.iter() {
            if c.norm() > decay.prefactor * (-decay.rate * n.unsigned_abs() as f64).exp() * (1.0 + 1e-12) {
                return Err(invalid("decay", format!("|ψ({n})| exceeds D·e^(−a|n|)")));
            }
        }
        self.decay = Some(decay);
        Ok(self)
    }

    pub fn decay(&self) -> Option<Decay> {
        self.decay
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// First and last stored site.
    pub fn support(&self) -> (i64, i64) {
        (self.offset, self.offset + self.coefficients.len() as i64 - 1)
    }

    /// Smallest `s` with the stored window inside `[−s, s]`.
    pub fn support_radius(&self) -> u64 {
        let (lo, hi) = self.support();
        lo.unsigned_abs().max(hi.unsigned_abs())
    }

    pub fn get(&self, n: i64) -> Complex64 {
        let i = n - self.offset;
        if i >= 0 && (i as usize) < self.coefficients.len() {
            self.coefficients[i as usize]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.coefficients.iter().enumerate().map(move |(i, &c)| (self.offset + i as i64, c))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `x·self + y·other`.
    pub fn combine(&self, x: f64, other: &WavePacket, y: f64) -> Result<WavePacket> {
        let lo = self.support().0.min(other.support().0);
        let hi = self.support().1.max(other.support().1);
        let coefficients = (lo..=hi).map(|n| self.get(n) * x + other.get(n) * y).collect();
        WavePacket::new(lo, coefficients)
    }
}

/// `(Hψ)(n) = ψ(n+1) + ψ(n−1) + W(n)ψ(n)`.
pub fn apply_hamiltonian(state: &WavePacket, spec: &PotentialSpec) -> WavePacket {
    let (lo, hi) = state.support();
    let potential = spec.values(lo - 1, hi + 1);
    let coefficients =
        (lo - 1..=hi + 1).zip(potential).map(|(n, w)| state.get(n + 1) + state.get(n - 1) + state.get(n) * w).collect();
    WavePacket { offset: lo - 1, coefficients, decay: None }
}

/// Energy `z = E + iε` with `ε ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexEnergy {
    pub real: f64,
    pub imag: f64,
}

impl ComplexEnergy {
    pub fn new(real: f64, imag: f64) -> Result<Self> {
        if !(imag >= 0.0) {
            return Err(invalid("epsilon", "imaginary part must be non-negative"));
        }
        Ok(Self { real, imag })
    }

    /// `E + i/T`.
    pub fn at_time_scale(real: f64, time: f64) -> Self {
        Self { real, imag: 1.0 / time }
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.real, self.imag)
    }
}

/// `H` restricted to `[−L, L]` with Dirichlet boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedHamiltonian {
    half_width: usize,
    diagonal: Vec<f64>,
}

/// Restricts `spec` to the box `[−L, L]`.
pub fn build_truncated(spec: &PotentialSpec, half_width: usize) -> Result<TruncatedHamiltonian> {
    if half_width < 1 {
        return Err(invalid("L", "half-width must be at least 1"));
    }
    let l = half_width as i64;
    Ok(TruncatedHamiltonian { half_width, diagonal: spec.values(-l, l) })
}

impl TruncatedHamiltonian {
    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// Site of row `i`.
    pub fn site(&self, row: usize) -> i64 {
        row as i64 - self.half_width as i64
    }

    /// `ψ` as a dense vector on the box; rejects states that do not fit.
    pub fn embed(&self, state: &WavePacket) -> Result<Vec<Complex64>> {
        let (lo, hi) = state.support();
        let l = self.half_width as i64;
        if lo < -l || hi > l {
            return Err(Error::SupportOutsideBox { lo, hi, half_width: self.half_width });
        }
        let mut v = vec![Complex64::new(0.0, 0.0); self.dim()];
        for (n, c) in state.iter() {
            v[(n + l) as usize] = c;
        }
        Ok(v)
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = self.diagonal[i] * v[i];
                if i > 0 {
                    s += v[i - 1];
                }
                if i + 1 < n {
                    s += v[i + 1];
                }
                s
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diagonal[i]
            } else if i.abs_diff(j) == 1 {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Full eigendecomposition with eigenvalues in ascending order.
    pub fn eigen(&self) -> EigenSystem {
        let SymmetricEigen { eigenvalues, eigenvectors } = SymmetricEigen::new(self.to_dense());
        let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));
        let values: Vec<f64> = order.iter().map(|&j| eigenvalues[j]).collect();
        let vectors = eigenvectors.select_columns(&order);
        EigenSystem { values, vectors }
    }
}

/// Eigenpairs of a truncated Hamiltonian; column `j` of `vectors` belongs to `values[j]`.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Parameters of the box-size rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxPolicy {
    pub c_box: f64,
    pub margin: usize,
}

impl Default for BoxPolicy {
    fn default() -> Self {
        Self { c_box: 1.5, margin: 16 }
    }
}

/// Half-width `L = ⌈c_box (2+B) T_max ln(1/tol)⌉ + s + margin` large enough that
/// the mass reaching the box edge up to the time scale `T_max` stays below `tol`.
pub fn choose_box(spec: &PotentialSpec, state: &WavePacket, t_max: f64, tol: f64, policy: BoxPolicy) -> Result<usize> {
    if !(t_max > 0.0) {
        return Err(invalid("T_max", "must be positive"));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(invalid("tol", "must lie in (0, 1)"));
    }
    let spread = (policy.c_box * (2.0 + spec.bound()) * t_max * (1.0 / tol).ln()).ceil() as usize;
    Ok(spread + state.support_radius() as usize + policy.margin)
}
