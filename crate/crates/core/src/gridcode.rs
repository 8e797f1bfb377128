//! Noise-free grid-code arithmetic.
//!
//! A value `x` is represented by the phases `e(x)/λ_j mod 1` over a set of
//! pairwise-coprime moduli `λ_j`. Maximum-likelihood decoding picks the
//! candidate whose phases interfere constructively with the observed ones.
//! Everything here is exact and deterministic; the noisy neural counterparts
//! in [`crate::neural`] are checked against these functions.

use std::f64::consts::TAU;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridCodeError {
    #[error("grid code needs at least one modulus")]
    NoModuli,
    #[error("modulus must be at least 2, got {0}")]
    ModulusTooSmall(u64),
    #[error("moduli {0} and {1} are not relatively prime")]
    NotCoprime(u64, u64),
    #[error("domain size {domain} exceeds the product of the moduli ({product})")]
    DomainTooLarge { domain: u64, product: u128 },
    #[error("domain size must be positive")]
    EmptyDomain,
    #[error("candidate set is empty")]
    NoCandidates,
    #[error("candidate values must be strictly increasing")]
    CandidatesUnsorted,
    #[error("candidate {value} lies outside [0, {domain})")]
    CandidateOutOfRange { value: i64, domain: u64 },
    #[error("{0} is not a candidate value of this code")]
    NotACandidate(i64),
    #[error("encoder function is undefined at {0}")]
    EncoderUndefined(i64),
    #[error("expected {expected} phases, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("phase {0} is not in [0, 1)")]
    PhaseOutOfRange(f64),
    #[error("encoder table has {domain} inputs but {values} outputs")]
    MalformedTable { domain: usize, values: usize },
}

pub type Result<T> = std::result::Result<T, GridCodeError>;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// The `m` smallest primes that are at least 3.
pub fn smallest_odd_primes(m: usize) -> Vec<u64> {
    primes_from(3, m)
}

/// The `m` smallest primes `≥ start`.
pub fn primes_from(start: u64, m: usize) -> Vec<u64> {
    let is_prime = |n: u64| n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0);
    (start..).filter(|&n| is_prime(n)).take(m).collect()
}

/// Reduce `value / modulus` to a phase in `[0, 1)`.
///
/// `rem_euclid` on integer-valued floats is exact, so integer encodings up
/// to 2^53 produce exact residues.
pub fn phase_of(value: f64, modulus: u64) -> f64 {
    let lambda = modulus as f64;
    let phase = value.rem_euclid(lambda) / lambda;
    if phase >= 1.0 {
        0.0
    } else {
        phase
    }
}

/// Map a phase to its representative in `(-1/2, 1/2]`.
pub fn centered(phase: f64) -> f64 {
    let p = phase.rem_euclid(1.0);
    if p > 0.5 {
        p - 1.0
    } else {
        p
    }
}

/// Shortest distance between two phases on the unit circle.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    centered(a - b).abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCode {
    moduli: Vec<u64>,
    domain_size: u64,
    candidates: Vec<i64>,
}

impl GridCode {
    /// Code over `moduli` with candidate set `0..domain_size`.
    pub fn new(moduli: Vec<u64>, domain_size: u64) -> Result<Self> {
        let candidates = (0..domain_size as i64).collect();
        Self::with_candidates(moduli, domain_size, candidates)
    }

    /// Code whose domain is the full range `0..Π λ_j`.
    pub fn full_range(moduli: Vec<u64>) -> Result<Self> {
        let product = checked_product(&moduli);
        let domain = u64::try_from(product).map_err(|_| GridCodeError::DomainTooLarge {
            domain: u64::MAX,
            product,
        })?;
        Self::new(moduli, domain)
    }

    pub fn with_candidates(moduli: Vec<u64>, domain_size: u64, candidates: Vec<i64>) -> Result<Self> {
        if moduli.is_empty() {
            return Err(GridCodeError::NoModuli);
        }
        if let Some(&bad) = moduli.iter().find(|&&m| m < 2) {
            return Err(GridCodeError::ModulusTooSmall(bad));
        }
        for (i, &a) in moduli.iter().enumerate() {
            for &b in &moduli[i + 1..] {
                if gcd(a, b) != 1 {
                    return Err(GridCodeError::NotCoprime(a, b));
                }
            }
        }
        if domain_size == 0 {
            return Err(GridCodeError::EmptyDomain);
        }
        let product = checked_product(&moduli);
        if u128::from(domain_size) > product {
            return Err(GridCodeError::DomainTooLarge { domain: domain_size, product });
        }
        if candidates.is_empty() {
            return Err(GridCodeError::NoCandidates);
        }
        if candidates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GridCodeError::CandidatesUnsorted);
        }
        if let Some(&value) = candidates
            .iter()
            .find(|&&x| x < 0 || x as u64 >= domain_size)
        {
            return Err(GridCodeError::CandidateOutOfRange { value, domain: domain_size });
        }
        Ok(Self { moduli, domain_size, candidates })
    }

    pub fn moduli(&self) -> &[u64] {
        &self.moduli
    }

    pub fn num_moduli(&self) -> usize {
        self.moduli.len()
    }

    pub fn domain_size(&self) -> u64 {
        self.domain_size
    }

    pub fn candidates(&self) -> &[i64] {
        &self.candidates
    }

    /// Product of the moduli, saturating at `u128::MAX`.
    pub fn product(&self) -> u128 {
        checked_product(&self.moduli)
    }

    pub fn index_of(&self, x: i64) -> Option<usize> {
        self.candidates.binary_search(&x).ok()
    }

    /// Phases `x/λ_j mod 1` of a candidate (the decoder's reference pattern).
    pub fn reference_phases(&self, x: i64) -> Vec<f64> {
        self.moduli.iter().map(|&m| phase_of(x as f64, m)).collect()
    }

    /// Largest noiseless score any candidate reaches on another candidate's
    /// codeword, `max_{k≠l} Σ_j cos(2π(x_k − x_l)/λ_j)`.
    ///
    /// `None` for single-candidate codes.
    pub fn max_cross_score(&self) -> Option<f64> {
        let refs: Vec<Vec<f64>> = self.candidates.iter().map(|&x| self.reference_phases(x)).collect();
        let mut best: Option<f64> = None;
        for (k, a) in refs.iter().enumerate() {
            for b in &refs[k + 1..] {
                let s: f64 = a.iter().zip(b).map(|(pa, pb)| (TAU * (pa - pb)).cos()).sum();
                best = Some(best.map_or(s, |m: f64| m.max(s)));
            }
        }
        best
    }
}

fn checked_product(moduli: &[u64]) -> u128 {
    moduli
        .iter()
        .try_fold(1u128, |acc, &m| acc.checked_mul(u128::from(m)))
        .unwrap_or(u128::MAX)
}

/// Pick an integer level `c` so that the multiples `0, c, …, span·c` are as
/// far apart in codespace as possible.
///
/// Minimises `max_{d=1..span} Σ_j cos(2π d c / λ_j)` over `1 ≤ c ≤ limit`,
/// where `limit` keeps `span·c` below both the moduli product and 2^18.
/// Boolean networks carry bit `b` as the integer `b·c`, so a two-input gate
/// decodes over `{0, c, 2c}`.
pub fn separating_level(moduli: &[u64], span: u64) -> i64 {
    let product = checked_product(moduli);
    let cap = ((product.saturating_sub(1)) / u128::from(span.max(1))).min(1 << 18) as u64;
    let tables: Vec<Vec<f64>> = moduli
        .iter()
        .map(|&m| (0..m).map(|r| (TAU * r as f64 / m as f64).cos()).collect())
        .collect();
    let mut best = (f64::INFINITY, 1u64);
    for c in 1..=cap.max(1) {
        let worst = (1..=span)
            .map(|d| {
                moduli
                    .iter()
                    .zip(&tables)
                    .map(|(&m, t)| t[((d * c) % m) as usize])
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if worst < best.0 - 1e-12 {
            best = (worst, c);
        }
    }
    best.1 as i64
}

/// The map `e` applied before reduction into phases.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderFn {
    /// Plain grid code, `e(x) = x`.
    Identity,
    /// Explicit table over a sorted domain.
    Table { domain: Vec<i64>, values: Vec<f64> },
}

impl EncoderFn {
    pub fn table(domain: Vec<i64>, values: Vec<f64>) -> Result<Self> {
        if domain.len() != values.len() {
            return Err(GridCodeError::MalformedTable { domain: domain.len(), values: values.len() });
        }
        if domain.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GridCodeError::CandidatesUnsorted);
        }
        Ok(Self::Table { domain, values })
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Self::Identity)
    }

    pub fn eval(&self, x: i64) -> Option<f64> {
        match self {
            Self::Identity => Some(x as f64),
            Self::Table { domain, values } => domain.binary_search(&x).ok().map(|i| values[i]),
        }
    }

    pub fn try_eval(&self, x: i64) -> Result<f64> {
        self.eval(x).ok_or(GridCodeError::EncoderUndefined(x))
    }

    /// Rescale both domain and image by `level`: `e'(level·x) = level·e(x)`.
    pub fn scaled(&self, level: i64) -> Self {
        match self {
            Self::Identity => Self::Identity,
            Self::Table { domain, values } => Self::Table {
                domain: domain.iter().map(|&d| d * level).collect(),
                values: values.iter().map(|&v| v * level as f64).collect(),
            },
        }
    }
}

/// A vector of phases in `[0, 1)`, one per modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct Codeword {
    phases: Vec<f64>,
}

impl Codeword {
    pub fn new(phases: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = phases.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(GridCodeError::PhaseOutOfRange(bad));
        }
        Ok(Self { phases })
    }

    /// Reduce arbitrary real activations mod 1.
    pub fn from_unreduced(values: impl IntoIterator<Item = f64>) -> Self {
        let phases = values
            .into_iter()
            .map(|v| {
                let p = v.rem_euclid(1.0);
                if p >= 1.0 {
                    0.0
                } else {
                    p
                }
            })
            .collect();
        Self { phases }
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// Largest per-modulus circular distance to `other`.
    pub fn max_distance(&self, other: &Codeword) -> f64 {
        self.phases
            .iter()
            .zip(&other.phases)
            .map(|(&a, &b)| circular_distance(a, b))
            .fold(0.0, f64::max)
    }
}

fn check_len(phi: &Codeword, code: &GridCode) -> Result<()> {
    if phi.len() != code.num_moduli() {
        return Err(GridCodeError::LengthMismatch { expected: code.num_moduli(), got: phi.len() });
    }
    Ok(())
}

/// `Enc(x) = { e(x)/λ_j mod 1 }`.
pub fn encode(x: i64, e: &EncoderFn, code: &GridCode) -> Result<Codeword> {
    if code.index_of(x).is_none() {
        return Err(GridCodeError::NotACandidate(x));
    }
    let value = e.try_eval(x)?;
    Ok(Codeword { phases: code.moduli.iter().map(|&m| phase_of(value, m)).collect() })
}

/// Constructive-interference score `Σ_j cos(2π(x/λ_j − φ_j))`.
pub fn score(x: i64, phi: &Codeword, code: &GridCode) -> Result<f64> {
    if code.index_of(x).is_none() {
        return Err(GridCodeError::NotACandidate(x));
    }
    check_len(phi, code)?;
    Ok(score_unchecked(x, phi.phases(), code.moduli()))
}

pub(crate) fn score_unchecked(x: i64, phases: &[f64], moduli: &[u64]) -> f64 {
    moduli
        .iter()
        .zip(phases)
        .map(|(&m, &p)| (TAU * (phase_of(x as f64, m) - p)).cos())
        .sum()
}

/// Exact argmax decoder; ties go to the lowest candidate.
pub fn mle_decode_oracle(phi: &Codeword, code: &GridCode) -> Result<i64> {
    check_len(phi, code)?;
    let mut best: Option<(f64, i64)> = None;
    for &x in code.candidates() {
        let s = score_unchecked(x, phi.phases(), code.moduli());
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, x));
        }
    }
    best.map(|(_, x)| x).ok_or(GridCodeError::NoCandidates)
}

/// Apply integer logical weights in codespace: `φ_j = Σ_i a_i φ_j^(i) mod 1`.
pub fn codespace_weighted_sum(codewords: &[Codeword], weights: &[i64], code: &GridCode) -> Result<Codeword> {
    if codewords.len() != weights.len() {
        return Err(GridCodeError::LengthMismatch { expected: weights.len(), got: codewords.len() });
    }
    for c in codewords {
        check_len(c, code)?;
    }
    let m = code.num_moduli();
    Ok(Codeword::from_unreduced((0..m).map(|j| {
        codewords
            .iter()
            .zip(weights)
            .map(|(c, &a)| a as f64 * c.phases[j])
            .sum::<f64>()
    })))
}
