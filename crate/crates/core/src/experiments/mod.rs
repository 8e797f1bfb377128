//! Monte Carlo estimation of logical error rates.
//!
//! Trial `t` of input assignment `i` always draws from stream `(seed, (t, i))`,
//! whatever the noise level, `M` or thread count. Error counts are integers
//! summed per grid point, so results never depend on scheduling, and sweeps
//! over `σ` share common random numbers.

pub mod output;
pub mod stats;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::circuits::{build_multiplier, compile, multiplier_bits, LogicalNetwork};
use crate::digital_ft::ep_threshold;
use crate::gridcode::{self, mle_decode_oracle, GridCode};
use crate::neural::{
    logical_neuron_decode, neural_decode, neural_encode_with, BitCode, Gate, LogicalNeuronSpec, OneHotState,
};
use crate::noise::{NoiseModel, RngStream, StreamId};
use stats::{linear_fit, wilson_interval, LinearFit};

pub use output::{phase_diagram_svg, write_csv, write_meta, CsvRow};

/// Distinct random candidates per decode-roundtrip trial.
pub const ROUNDTRIP_CANDIDATES: usize = 8;

/// Roundtrip moduli are the primes above this, so that random candidates
/// have effectively continuous, independent phases at every `M`.
pub const ROUNDTRIP_MODULUS_FLOOR: u64 = 1000;

/// Upper end of the moduli search.
pub const MAX_MODULI: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    /// Neural NAND gate fed by noisy input encoders; worst case of the four
    /// input pairs.
    Nand,
    /// Compiled two-bit multiplier; worst case of the sixteen input pairs.
    Multiplier,
    /// Encode/decode of a random value against random wrong candidates
    /// drawn from a large range.
    Roundtrip,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Nand => "nand",
            Target::Multiplier => "multiplier",
            Target::Roundtrip => "roundtrip",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    /// Errors at the worst input assignment.
    pub errors: u64,
    /// Trials per input assignment.
    pub trials: u64,
    pub error: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub worst_input: usize,
    pub neurons: usize,
}

impl Estimate {
    fn from_counts(counts: &[u64], trials: u64, confidence: f64, neurons: usize) -> Self {
        let (worst_input, &errors) =
            counts.iter().enumerate().rev().max_by_key(|&(_, c)| c).expect("at least one input");
        let (ci_lo, ci_hi) = wilson_interval(errors, trials, confidence);
        Self { errors, trials, error: errors as f64 / trials as f64, ci_lo, ci_hi, worst_input, neurons }
    }
}

/// A target instantiated at fixed `(M, R)`, ready for repeated trials.
pub enum Experiment {
    Nand { bits: BitCode, spec: LogicalNeuronSpec, repetitions: usize },
    Multiplier { network: LogicalNetwork },
    Roundtrip { moduli: Vec<u64>, repetitions: usize, candidates: usize, range: i64 },
}

impl Experiment {
    pub fn new(target: Target, m: usize, repetitions: usize) -> Self {
        match target {
            Target::Nand => {
                let bits = BitCode::with_moduli_count(m).expect("prime moduli");
                let spec = bits.gate_spec(Gate::Nand, repetitions).expect("valid gate");
                Experiment::Nand { bits, spec, repetitions }
            }
            Target::Multiplier => {
                let bits = BitCode::with_moduli_count(m).expect("prime moduli");
                Experiment::Multiplier { network: compile(&build_multiplier(), &bits, repetitions).expect("valid") }
            }
            Target::Roundtrip => {
                let moduli = gridcode::primes_from(ROUNDTRIP_MODULUS_FLOOR, m);
                let product = moduli.iter().fold(1u128, |acc, &l| acc.saturating_mul(l as u128));
                let range = product.min(1u128 << 53) as i64;
                let candidates = ROUNDTRIP_CANDIDATES;
                Experiment::Roundtrip { moduli, repetitions, candidates, range }
            }
        }
    }

    pub fn num_inputs(&self) -> usize {
        match self {
            Experiment::Nand { .. } => 4,
            Experiment::Multiplier { .. } => 16,
            Experiment::Roundtrip { .. } => 1,
        }
    }

    /// Physical neurons in the tested object (the roundtrip counts its
    /// encoder and decoder).
    pub fn neurons(&self) -> usize {
        match self {
            Experiment::Nand { spec, .. } => spec.physical_neurons(),
            Experiment::Multiplier { network } => network.physical_neurons(),
            Experiment::Roundtrip { moduli, repetitions, candidates, .. } => {
                let k = *candidates;
                let (m, r) = (moduli.len(), *repetitions);
                let steps = if r > 1 { r } else { m };
                m * r + k * m + k + k * steps
            }
        }
    }

    /// Whether trial `t` at input `input` fails.
    pub fn trial_fails(&self, input: usize, t: u64, noise: &NoiseModel, seed: u64) -> bool {
        let mut rng = RngStream::new(seed, StreamId::new(t, input as u64));
        match self {
            Experiment::Nand { bits, spec, repetitions } => {
                let (a, b) = (input & 1 == 1, input & 2 == 2);
                let inputs = [bits.encode_input(a, *repetitions, noise, &mut rng), bits.encode_input(b, *repetitions, noise, &mut rng)];
                let state = logical_neuron_decode(&inputs, spec, noise, &mut rng).expect("shapes");
                !state.is_exactly(usize::from(a) + usize::from(b))
            }
            Experiment::Multiplier { network } => {
                let (a, b) = ((input & 3) as u8, (input >> 2) as u8);
                let bits = multiplier_bits(a, b);
                let expected = network.circuit().eval(&bits);
                !network.evaluate(&bits, noise, &mut rng).expect("shapes").matches(&expected)
            }
            Experiment::Roundtrip { .. } => !self.roundtrip_trial(&mut rng, noise).0,
        }
    }

    /// `(neural decoder correct, MLE on the same noisy phases correct)`.
    pub fn roundtrip_trial(&self, rng: &mut RngStream, noise: &NoiseModel) -> (bool, bool) {
        let Experiment::Roundtrip { moduli, repetitions, candidates, range } = self else {
            panic!("not a roundtrip experiment");
        };
        let mut values: Vec<i64> = Vec::with_capacity(*candidates);
        while values.len() < *candidates {
            let v = rng.below(*range as u64) as i64;
            if !values.contains(&v) {
                values.push(v);
            }
        }
        let truth = values[0];
        values.sort_unstable();
        let k = values.iter().position(|&v| v == truth).unwrap();
        let code = GridCode::with_candidates(moduli.clone(), *range as u64, values).expect("valid candidates");
        let spec = LogicalNeuronSpec::decoder(code.clone(), *repetitions).expect("valid").with_wrong_reference(0.0);
        let clean = OneHotState::clean(k, *candidates, *repetitions);
        let bundle = neural_encode_with(&clean, &gridcode::EncoderFn::Identity, &code, noise, rng).expect("shapes");
        let mle_ok = mle_decode_oracle(&bundle.mean_codeword(), &code).expect("valid") == truth;
        let neural_ok = neural_decode(&bundle, &spec, noise, rng).expect("shapes").is_exactly(k);
        (neural_ok, mle_ok)
    }

    pub fn estimate(&self, noise: &NoiseModel, trials: u64, seed: u64, confidence: f64) -> Estimate {
        let counts: Vec<u64> = (0..self.num_inputs())
            .map(|input| {
                (0..trials).into_par_iter().filter(|&t| self.trial_fails(input, t, noise, seed)).count() as u64
            })
            .collect();
        Estimate::from_counts(&counts, trials, confidence, self.neurons())
    }
}

/// Worst-case logical error of `target` at one noise point.
pub fn estimate_logical_error(
    target: Target,
    noise: &NoiseModel,
    m: usize,
    repetitions: usize,
    trials: u64,
    seed: u64,
    confidence: f64,
) -> Estimate {
    Experiment::new(target, m, repetitions).estimate(noise, trials, seed, confidence)
}

/// One row of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub p: f64,
    pub sigma: f64,
    pub m: usize,
    pub repetitions: usize,
    pub eps: Option<f64>,
    pub estimate: Estimate,
    pub censored: bool,
}

impl SweepPoint {
    pub fn csv_row(&self) -> CsvRow {
        CsvRow {
            p: self.p,
            sigma: self.sigma,
            m: self.m,
            r: self.repetitions,
            trials: self.estimate.trials,
            error: self.estimate.error,
            ci_lo: self.estimate.ci_lo,
            ci_hi: self.estimate.ci_hi,
            neurons: self.estimate.neurons,
            censored: self.censored,
            eps: self.eps,
        }
    }
}

/// 1-D sweep over `sigmas` at fixed `p`, or any explicit point list.
pub fn sweep(
    target: Target,
    points: &[(f64, f64)],
    m: usize,
    repetitions: usize,
    trials: u64,
    seed: u64,
    confidence: f64,
    progress: &dyn Fn(&SweepPoint),
) -> Vec<SweepPoint> {
    let experiment = Experiment::new(target, m, repetitions);
    points
        .iter()
        .map(|&(p, sigma)| {
            let noise = NoiseModel::new(sigma, p).expect("validated grid");
            let point = SweepPoint {
                p,
                sigma,
                m,
                repetitions,
                eps: None,
                estimate: experiment.estimate(&noise, trials, seed, confidence),
                censored: false,
            };
            progress(&point);
            point
        })
        .collect()
}

/// Smallest `M ≤ max_m` with worst-case error `≤ eps`, found by bisection
/// over a cache of estimates at integer `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalModuli {
    pub sigma: f64,
    pub eps: f64,
    /// `None` when even `max_m` misses the target.
    pub m: Option<usize>,
    /// Log-linear interpolation between `M−1` and `M`.
    pub m_frac: f64,
    pub estimate: Estimate,
    pub neurons_frac: f64,
}

pub struct ModuliSearch<'a> {
    pub target: Target,
    pub noise: NoiseModel,
    pub repetitions: usize,
    pub trials: u64,
    pub seed: u64,
    pub confidence: f64,
    pub max_m: usize,
    cache: BTreeMap<usize, Estimate>,
    progress: &'a dyn Fn(usize, &Estimate),
}

impl<'a> ModuliSearch<'a> {
    pub fn new(
        target: Target,
        noise: NoiseModel,
        repetitions: usize,
        trials: u64,
        seed: u64,
        confidence: f64,
        progress: &'a dyn Fn(usize, &Estimate),
    ) -> Self {
        Self { target, noise, repetitions, trials, seed, confidence, max_m: MAX_MODULI, cache: BTreeMap::new(), progress }
    }

    pub fn estimate_at(&mut self, m: usize) -> Estimate {
        if let Some(e) = self.cache.get(&m) {
            return *e;
        }
        let e = Experiment::new(self.target, m, self.repetitions).estimate(&self.noise, self.trials, self.seed, self.confidence);
        (self.progress)(m, &e);
        self.cache.insert(m, e);
        e
    }

    pub fn minimal(&mut self, eps: f64) -> MinimalModuli {
        let sigma = self.noise.sigma();
        let top = self.estimate_at(self.max_m);
        if top.error > eps {
            return MinimalModuli { sigma, eps, m: None, m_frac: self.max_m as f64, estimate: top, neurons_frac: top.neurons as f64 };
        }
        // Reuse cached bracketing points before bisecting.
        let passing = |e: &Estimate| e.error <= eps;
        let mut hi = self.max_m;
        let mut lo = 0;
        for (&m, e) in &self.cache {
            if passing(e) {
                hi = hi.min(m);
            }
        }
        for (&m, e) in &self.cache {
            if !passing(e) && m < hi {
                lo = lo.max(m);
            }
        }
        if lo == 0 {
            let first = self.estimate_at(1);
            if passing(&first) {
                return MinimalModuli { sigma, eps, m: Some(1), m_frac: 1.0, estimate: first, neurons_frac: first.neurons as f64 };
            }
            lo = 1;
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if passing(&self.estimate_at(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let fail = self.cache[&lo];
        let pass = self.cache[&hi];
        let floor = 0.5 / self.trials as f64;
        let (lf, lp) = (fail.error.max(floor).ln(), pass.error.max(floor).ln());
        let t = if lf > lp { ((lf - eps.ln()) / (lf - lp)).clamp(0.0, 1.0) } else { 1.0 };
        let m_frac = lo as f64 + t;
        let neurons_frac = fail.neurons as f64 + t * (pass.neurons as f64 - fail.neurons as f64);
        MinimalModuli { sigma, eps, m: Some(hi), m_frac, estimate: pass, neurons_frac }
    }
}

/// `M*(σ, ε)` for every grid pair.
pub fn minimal_moduli_grid(
    target: Target,
    sigmas: &[f64],
    epss: &[f64],
    repetitions: usize,
    trials: u64,
    seed: u64,
    confidence: f64,
    progress: &dyn Fn(f64, usize, &Estimate),
) -> Vec<MinimalModuli> {
    let mut out = Vec::new();
    for &sigma in sigmas {
        let report = |m: usize, e: &Estimate| progress(sigma, m, e);
        let mut search =
            ModuliSearch::new(target, NoiseModel::new(sigma, 0.0).expect("valid sigma"), repetitions, trials, seed, confidence, &report);
        for &eps in epss {
            out.push(search.minimal(eps));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MofEpsFit {
    pub points: Vec<MinimalModuli>,
    /// Slope of `log M − log((1+2σ²) log(1/ε))` against `σ²`.
    pub a: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub a_se: f64,
    /// `a` estimated from each positive `σ` relative to the `σ = 0` column.
    pub a_per_sigma: Vec<(f64, f64)>,
    /// `M*` against `log(1/ε)` at `σ = 0`.
    pub sigma0_fit: Option<LinearFit>,
}

impl MofEpsFit {
    /// `(max − min)/mean` of the per-`σ` estimates.
    pub fn a_relative_spread(&self) -> f64 {
        let vals: Vec<f64> = self.a_per_sigma.iter().map(|&(_, a)| a).collect();
        let max = vals.iter().copied().fold(f64::MIN, f64::max);
        let min = vals.iter().copied().fold(f64::MAX, f64::min);
        (max - min) / (vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

fn scaled_log_m(point: &MinimalModuli) -> f64 {
    point.m_frac.ln() - ((1.0 + 2.0 * point.sigma * point.sigma) * (1.0 / point.eps).ln()).ln()
}

/// Fit the moduli-scaling law on the decode-roundtrip target.
pub fn fit_m_of_eps(
    sigmas: &[f64],
    epss: &[f64],
    trials: u64,
    seed: u64,
    confidence: f64,
    progress: &dyn Fn(f64, usize, &Estimate),
) -> MofEpsFit {
    let points = minimal_moduli_grid(Target::Roundtrip, sigmas, epss, 1, trials, seed, confidence, progress);
    fit_scaling(points)
}

pub fn fit_scaling(points: Vec<MinimalModuli>) -> MofEpsFit {
    let usable: Vec<&MinimalModuli> = points.iter().filter(|p| p.m.is_some()).collect();
    let xs: Vec<f64> = usable.iter().map(|p| p.sigma * p.sigma).collect();
    let ys: Vec<f64> = usable.iter().map(|p| scaled_log_m(p)).collect();
    let fit = linear_fit(&xs, &ys);

    let zero: Vec<&MinimalModuli> = usable.iter().copied().filter(|p| p.sigma == 0.0).collect();
    let mut a_per_sigma = Vec::new();
    let mut sigmas: Vec<f64> = usable.iter().map(|p| p.sigma).filter(|&s| s > 0.0).collect();
    sigmas.dedup();
    for sigma in sigmas {
        let diffs: Vec<f64> = usable
            .iter()
            .filter(|p| p.sigma == sigma)
            .filter_map(|p| zero.iter().find(|z| z.eps == p.eps).map(|z| scaled_log_m(p) - scaled_log_m(z)))
            .collect();
        if !diffs.is_empty() {
            a_per_sigma.push((sigma, diffs.iter().sum::<f64>() / diffs.len() as f64 / (sigma * sigma)));
        }
    }
    let sigma0_fit = (zero.len() >= 2).then(|| {
        linear_fit(
            &zero.iter().map(|p| (1.0 / p.eps).ln()).collect::<Vec<_>>(),
            &zero.iter().map(|p| p.m_frac).collect::<Vec<_>>(),
        )
    });
    MofEpsFit { a: fit.slope, intercept: fit.intercept, r_squared: fit.r_squared, a_se: fit.slope_se, a_per_sigma, sigma0_fit, points }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronScaling {
    pub points: Vec<MinimalModuli>,
    /// Per `ε`: fit of `log(neurons)` against `σ²`.
    pub by_eps: Vec<(f64, LinearFit)>,
    /// Fit of `neurons` against `log(1/ε)` at `σ = 0`, when it is not
    /// degenerate.
    pub sigma0_fit: Option<LinearFit>,
}

/// Physical neurons of the minimal-`M` multiplier for each `(σ, ε)`.
pub fn neurons_vs_error_scaling(
    sigmas: &[f64],
    epss: &[f64],
    trials: u64,
    seed: u64,
    confidence: f64,
    progress: &dyn Fn(f64, usize, &Estimate),
) -> NeuronScaling {
    let points = minimal_moduli_grid(Target::Multiplier, sigmas, epss, 1, trials, seed, confidence, progress);
    let usable = |p: &&MinimalModuli| p.m.is_some();
    let by_eps = epss
        .iter()
        .filter_map(|&eps| {
            let row: Vec<&MinimalModuli> = points.iter().filter(usable).filter(|p| p.eps == eps).collect();
            (row.len() >= 2).then(|| {
                let xs: Vec<f64> = row.iter().map(|p| p.sigma * p.sigma).collect();
                let ys: Vec<f64> = row.iter().map(|p| p.neurons_frac.ln()).collect();
                (eps, linear_fit(&xs, &ys))
            })
        })
        .collect();
    let zero: Vec<&MinimalModuli> = points.iter().filter(usable).filter(|p| p.sigma == 0.0).collect();
    let sigma0_fit = (zero.len() >= 2 && zero.iter().any(|p| p.neurons_frac != zero[0].neurons_frac)).then(|| {
        linear_fit(
            &zero.iter().map(|p| (1.0 / p.eps).ln()).collect::<Vec<_>>(),
            &zero.iter().map(|p| p.neurons_frac).collect::<Vec<_>>(),
        )
    });
    NeuronScaling { points, by_eps, sigma0_fit }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagram {
    pub ps: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Row-major: `points[i * ps.len() + j]` is `(sigmas[i], ps[j])`.
    pub points: Vec<SweepPoint>,
    pub eps0: f64,
    /// Interpolated `ε = ε₀` crossings, `(p, σ)`.
    pub boundary: Vec<(f64, f64)>,
}

impl PhaseDiagram {
    pub fn at(&self, sigma_index: usize, p_index: usize) -> &SweepPoint {
        &self.points[sigma_index * self.ps.len() + p_index]
    }

    pub fn is_tolerant(&self, point: &SweepPoint) -> bool {
        point.estimate.error < self.eps0
    }

    /// Crossing along `σ` at the `p` column `p_index`.
    pub fn sigma_crossing(&self, p_index: usize) -> Option<f64> {
        let errors: Vec<f64> = (0..self.sigmas.len()).map(|i| self.at(i, p_index).estimate.error).collect();
        crossing(&self.sigmas, &errors, self.eps0)
    }

    /// Crossing along `p` at the `σ` row `sigma_index`.
    pub fn p_crossing(&self, sigma_index: usize) -> Option<f64> {
        let errors: Vec<f64> = (0..self.ps.len()).map(|j| self.at(sigma_index, j).estimate.error).collect();
        crossing(&self.ps, &errors, self.eps0)
    }
}

/// First upward crossing of `level`, linearly interpolated.
pub fn crossing(xs: &[f64], ys: &[f64], level: f64) -> Option<f64> {
    (1..xs.len()).find(|&i| ys[i - 1] < level && ys[i] >= level).map(|i| {
        let t = (level - ys[i - 1]) / (ys[i] - ys[i - 1]);
        xs[i - 1] + t * (xs[i] - xs[i - 1])
    })
}

/// NAND error over a `(p, σ)` grid, classified against the multiplexing
/// threshold.
pub fn phase_diagram(
    ps: &[f64],
    sigmas: &[f64],
    m: usize,
    repetitions: usize,
    trials: u64,
    seed: u64,
    confidence: f64,
    progress: &dyn Fn(&SweepPoint),
) -> PhaseDiagram {
    let grid: Vec<(f64, f64)> = sigmas.iter().flat_map(|&s| ps.iter().map(move |&p| (p, s))).collect();
    let points = sweep(Target::Nand, &grid, m, repetitions, trials, seed, confidence, progress);
    let mut diagram =
        PhaseDiagram { ps: ps.to_vec(), sigmas: sigmas.to_vec(), points, eps0: ep_threshold(), boundary: Vec::new() };
    let mut boundary = Vec::new();
    for i in 0..sigmas.len() {
        if let Some(p) = diagram.p_crossing(i) {
            boundary.push((p, sigmas[i]));
        }
    }
    for j in 0..ps.len() {
        if let Some(s) = diagram.sigma_crossing(j) {
            boundary.push((ps[j], s));
        }
    }
    boundary.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    boundary.dedup();
    diagram.boundary = boundary;
    diagram
}
