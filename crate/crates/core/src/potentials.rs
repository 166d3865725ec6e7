//! Generators for the aperiodic and random potential families.
//!
//! Every generator is a pure function of its parameters: the same inputs give
//! the same values at every integer site, positive or negative.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// The golden-mean frequency `(√5 − 1)/2`.
pub const GOLDEN_THETA: f64 = 0.618_033_988_749_894_8;

/// `floor(n·θ + ω)` evaluated with a compensated product and sum, so that
/// arguments within a few ulps of an integer are classified correctly.
pub fn compensated_floor(n: i64, theta: f64, omega: f64) -> i64 {
    let (hi, lo) = compensated_affine(n, theta, omega);
    let f = hi.floor();
    // hi - floor(hi) is exact in binary floating point
    let r = (hi - f) + lo;
    let f = f as i64;
    if r < 0.0 {
        f - 1
    } else if r >= 1.0 {
        f + 1
    } else {
        f
    }
}

/// Fractional part of `n·θ + ω` with the same compensation as
/// [`compensated_floor`].
pub fn compensated_fract(n: i64, theta: f64, omega: f64) -> f64 {
    let (hi, lo) = compensated_affine(n, theta, omega);
    let f = hi.floor();
    let r = (hi - f) + lo;
    r.rem_euclid(1.0)
}

fn compensated_affine(n: i64, theta: f64, omega: f64) -> (f64, f64) {
    let nf = n as f64;
    let p = nf * theta;
    let p_err = nf.mul_add(theta, -p);
    let s = p + omega;
    let bb = s - p;
    let s_err = (p - (s - bb)) + (omega - bb);
    (s, p_err + s_err)
}

/// `λ·(⌊(n+1)θ+ω⌋ − ⌊nθ+ω⌋)`; the value is either `0` or `λ`.
pub fn sturmian_value(coupling: f64, theta: f64, omega: f64, n: i64) -> f64 {
    let jump = compensated_floor(n + 1, theta, omega) - compensated_floor(n, theta, omega);
    coupling * jump as f64
}

/// Named sampling functions on the circle `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// `f(x) = 2cos(2πx)`: the almost Mathieu operator.
    Cosine,
    /// `f(x) = √x`: Hölder-1/2 with a single jump at `x = 0`.
    Sqrt,
}

impl Sampler {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "cosine" => Ok(Sampler::Cosine),
            "sqrt" => Ok(Sampler::Sqrt),
            other => Err(invalid("sampler", format!("unknown sampler `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Sampler::Cosine => "cosine",
            Sampler::Sqrt => "sqrt",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Sampler::Cosine => 2.0 * (2.0 * std::f64::consts::PI * x).cos(),
            Sampler::Sqrt => x.sqrt(),
        }
    }

    /// `sup |f|` on the circle.
    pub fn sup(self) -> f64 {
        match self {
            Sampler::Cosine => 2.0,
            Sampler::Sqrt => 1.0,
        }
    }
}

/// `λ·f(nθ + ω mod 1)`.
pub fn quasiperiodic_value(sampler: Sampler, coupling: f64, theta: f64, omega: f64, n: i64) -> f64 {
    coupling * sampler.eval(compensated_fract(n, theta, omega))
}

/// How the one-sided fixed point is continued to negative sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoSided {
    /// `…000ω⁺`: every negative site carries symbol 0.
    ZeroPadded,
    /// `ω(−n) = ω(n − 1)`.
    Mirrored,
}

/// A two-letter substitution `0 → S(0)`, `1 → S(1)` with a seed symbol.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutionRules {
    images: [Vec<u8>; 2],
    seed: u8,
    two_sided: TwoSided,
}

impl SubstitutionRules {
    pub fn new(image0: Vec<u8>, image1: Vec<u8>, seed: u8, two_sided: TwoSided) -> Result<Self> {
        let rules = Self { images: [image0, image1], seed, two_sided };
        rules.validate()?;
        Ok(rules)
    }

    /// `0 → 01`, `1 → 00`, continued by zeros to the left.
    pub fn period_doubling() -> Self {
        Self { images: [vec![0, 1], vec![0, 0]], seed: 0, two_sided: TwoSided::ZeroPadded }
    }

    /// `0 → 01`, `1 → 10`, mirrored to the left.
    pub fn thue_morse() -> Self {
        Self { images: [vec![0, 1], vec![1, 0]], seed: 0, two_sided: TwoSided::Mirrored }
    }

    pub fn image(&self, symbol: u8) -> &[u8] {
        &self.images[symbol as usize]
    }

    pub fn seed(&self) -> u8 {
        self.seed
    }

    pub fn two_sided(&self) -> TwoSided {
        self.two_sided
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > 1 {
            return Err(invalid("seed", "seed symbol must be 0 or 1"));
        }
        for img in &self.images {
            if img.is_empty() {
                return Err(Error::NoFixedPoint("empty image".into()));
            }
            if img.iter().any(|&s| s > 1) {
                return Err(invalid("image", "symbols must be 0 or 1"));
            }
        }
        if self.images[self.seed as usize][0] != self.seed {
            return Err(Error::NoFixedPoint(format!("S({}) does not begin with {}", self.seed, self.seed)));
        }
        // the prefix must keep growing for the iteration to converge
        let lens = self.level_lengths(40);
        if lens.last().is_none_or(|l| l[self.seed as usize] < 2) {
            return Err(Error::NoFixedPoint("iterates do not grow".into()));
        }
        Ok(())
    }

    /// `|S^j(a)|` for `j = 0..=levels`, saturating.
    fn level_lengths(&self, levels: usize) -> Vec<[u64; 2]> {
        let mut out = vec![[1u64, 1u64]];
        for _ in 0..levels {
            let prev = *out.last().unwrap();
            let mut next = [0u64; 2];
            for (a, n) in next.iter_mut().enumerate() {
                *n = self.images[a].iter().fold(0u64, |acc, &b| acc.saturating_add(prev[b as usize]));
            }
            out.push(next);
        }
        out
    }

    /// Symbol at position `index` of the one-sided fixed point, by descending
    /// the substitution tree; costs `O(log index)`.
    pub fn symbol_at(&self, index: u64) -> u8 {
        let lens = self.level_lengths(64);
        let mut level =
            lens.iter().position(|l| l[self.seed as usize] > index).expect("index beyond saturating length");
        let mut symbol = self.seed;
        let mut pos = index;
        while level > 0 {
            let below = &lens[level - 1];
            for &b in self.image(symbol) {
                let l = below[b as usize];
                if pos < l {
                    symbol = b;
                    break;
                }
                pos -= l;
            }
            level -= 1;
        }
        symbol
    }

    /// Symbol at an arbitrary integer site of the two-sided extension.
    pub fn two_sided_symbol(&self, site: i64) -> u8 {
        if site >= 0 {
            self.symbol_at(site as u64)
        } else {
            match self.two_sided {
                TwoSided::ZeroPadded => 0,
                TwoSided::Mirrored => self.symbol_at((-site - 1) as u64),
            }
        }
    }
}

/// The first `length` symbols of the fixed point of `rules`.
pub fn substitution_word(rules: &SubstitutionRules, length: usize) -> Result<Vec<u8>> {
    if length == 0 {
        return Err(invalid("length", "must be at least 1"));
    }
    rules.validate()?;
    let mut word = vec![rules.seed];
    while word.len() < length {
        let next: Vec<u8> = word.iter().flat_map(|&s| rules.image(s).iter().copied()).collect();
        word = next;
    }
    word.truncate(length);
    Ok(word)
}

/// Two finite blocks concatenated by independent coin flips.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolymerBlocks {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    /// Probability of choosing `plus`.
    pub bernoulli: f64,
    pub seed: u64,
}

impl PolymerBlocks {
    pub fn new(plus: Vec<f64>, minus: Vec<f64>, bernoulli: f64, seed: u64) -> Result<Self> {
        let blocks = Self { plus, minus, bernoulli, seed };
        blocks.validate()?;
        Ok(blocks)
    }

    /// The random dimer: `(λ, λ)` and `(−λ, −λ)` with equal weights.
    pub fn dimer(coupling: f64, seed: u64) -> Self {
        Self { plus: vec![coupling; 2], minus: vec![-coupling; 2], bernoulli: 0.5, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.plus.is_empty() || self.minus.is_empty() {
            return Err(invalid("blocks", "both polymer blocks must be non-empty"));
        }
        if !(self.bernoulli > 0.0 && self.bernoulli < 1.0) {
            return Err(invalid("bernoulli", "must lie in (0, 1)"));
        }
        if self.plus.iter().chain(&self.minus).any(|v| !v.is_finite()) {
            return Err(invalid("blocks", "values must be finite"));
        }
        Ok(())
    }

    /// Whether block `l` is the `plus` block. Random access into the ChaCha
    /// stream keeps this a pure function of `(seed, l)`.
    pub fn is_plus(&self, block: i64) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let zigzag = ((block << 1) ^ (block >> 63)) as u64;
        rng.set_word_pos(zigzag as u128 * 2);
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        u < self.bernoulli
    }

    fn block(&self, l: i64) -> &[f64] {
        if self.is_plus(l) {
            &self.plus
        } else {
            &self.minus
        }
    }

    pub fn sup(&self) -> f64 {
        self.plus.iter().chain(&self.minus).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Potential values on `lo..=hi`. Block 0 starts exactly at site 0; blocks
/// with negative index tile the negative half-line.
pub fn polymer_sequence(blocks: &PolymerBlocks, lo: i64, hi: i64) -> Vec<f64> {
    if hi < lo {
        return Vec::new();
    }
    let mut out = Vec::with_capacity((hi - lo + 1) as usize);
    if blocks.plus.len() == blocks.minus.len() {
        let len = blocks.plus.len() as i64;
        let mut cache: Option<(i64, &[f64])> = None;
        for n in lo..=hi {
            let l = n.div_euclid(len);
            let b = match cache {
                Some((cl, b)) if cl == l => b,
                _ => {
                    let b = blocks.block(l);
                    cache = Some((l, b));
                    b
                }
            };
            out.push(b[n.rem_euclid(len) as usize]);
        }
        return out;
    }
    // unequal lengths: locate the block containing `lo` by walking from 0
    let (mut l, mut start) = if lo >= 0 {
        let (mut l, mut start) = (0i64, 0i64);
        loop {
            let len = blocks.block(l).len() as i64;
            if lo < start + len {
                break (l, start);
            }
            start += len;
            l += 1;
        }
    } else {
        let (mut l, mut end) = (-1i64, 0i64);
        loop {
            let len = blocks.block(l).len() as i64;
            if lo >= end - len {
                break (l, end - len);
            }
            end -= len;
            l -= 1;
        }
    };
    let mut n = lo;
    while n <= hi {
        let b = blocks.block(l);
        let offset = (n - start) as usize;
        for &v in &b[offset..] {
            if n > hi {
                break;
            }
            out.push(v);
            n += 1;
        }
        start += b.len() as i64;
        l += 1;
    }
    out
}
