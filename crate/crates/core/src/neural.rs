//! Physical neurons and the logical-neuron construction.
//!
//! A logical neuron takes grid-coded inputs, applies its integer weights in
//! codespace, decodes the result into a one-hot layer with a bank of
//! cosine-tuned neurons, and re-encodes through an encoder function that
//! implements the logical activation. Every physical neuron adds Gaussian
//! output noise and every synapse may fail.
//!
//! With `R > 1` each phase neuron exists in `R` replicas. The replicas carry
//! unreduced linear activations; the decoder's cosine neurons average them in
//! their dendrites before the periodic nonlinearity, so independent replica
//! noise shrinks as `1/√R`. The one-hot layer is replicated alongside, one
//! step neuron per encoder replica, so that jitter on the binary outputs also
//! averages out downstream.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::gridcode::{self, centered, phase_of, Codeword, EncoderFn, GridCode, GridCodeError};
use crate::noise::{attenuation_factor, sample_output_noise, sample_synapse, NoiseModel, RngStream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuralError {
    #[error(transparent)]
    Code(#[from] GridCodeError),
    #[error("repetition count must be at least 1")]
    NoRepetitions,
    #[error("logical neuron needs at least one weight")]
    NoWeights,
    #[error("expected {expected} input codewords, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("bundle shape {got:?} does not match (moduli, replicas) = {expected:?}")]
    Shape { expected: (usize, usize), got: (usize, usize) },
    #[error("one-hot layer has {got} candidates, encoder domain has {expected}")]
    StateSize { expected: usize, got: usize },
    #[error("copy count must be at least 1")]
    NoCopies,
    #[error("fan-in cap must be at least 2")]
    BadFanInCap,
    #[error("unknown gate {0:?}")]
    UnknownGate(String),
}

pub type Result<T> = std::result::Result<T, NeuralError>;

/// Two-input Boolean gates available at the logical-neuron layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    And,
    Or,
    Xor,
    Nand,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::And, Gate::Or, Gate::Xor, Gate::Nand];

    pub fn eval(self, a: bool, b: bool) -> bool {
        match self {
            Gate::And => a && b,
            Gate::Or => a || b,
            Gate::Xor => a != b,
            Gate::Nand => !(a && b),
        }
    }

    /// Output as a function of the number of true inputs. All four gates are
    /// symmetric, which is what lets unit weights work.
    pub fn of_sum(self, ones: usize) -> bool {
        self.eval(ones >= 1, ones >= 2)
    }

    pub fn name(self) -> &'static str {
        match self {
            Gate::And => "AND",
            Gate::Or => "OR",
            Gate::Xor => "XOR",
            Gate::Nand => "NAND",
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Gate {
    type Err = NeuralError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AND" => Ok(Gate::And),
            "OR" => Ok(Gate::Or),
            "XOR" => Ok(Gate::Xor),
            "NAND" => Ok(Gate::Nand),
            _ => Err(NeuralError::UnknownGate(s.to_string())),
        }
    }
}

/// Encoder function realising `gate` over the input sums `{0, 1, 2}`.
pub fn gate_encoder_fn(gate: Gate) -> EncoderFn {
    let values = (0..3).map(|s| if gate.of_sum(s) { 1.0 } else { 0.0 }).collect();
    EncoderFn::table(vec![0, 1, 2], values).expect("static table")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// Identity; phase-carrying neurons leave reduction mod 1 to the
    /// periodic decoder.
    Linear,
    /// Fires (outputs 1) iff the input exceeds the threshold.
    Step { threshold: f64 },
    Relu,
    /// `cos(2π(offset − input))`, the decoder's tuning curve.
    Cosine { offset: f64 },
}

impl Activation {
    pub fn apply(self, input: f64) -> f64 {
        match self {
            Activation::Linear => input,
            Activation::Step { threshold } => {
                if input > threshold {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Relu => input.max(0.0),
            Activation::Cosine { offset } => (TAU * (offset - input)).cos(),
        }
    }
}

/// Reference implementation of a single noisy neuron:
/// `activation(Σ mask_i w_i x_i + bias) + ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalNeuron {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub activation: Activation,
}

impl PhysicalNeuron {
    pub fn new(weights: Vec<f64>, bias: f64, activation: Activation) -> Self {
        Self { weights, bias, activation }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.len()
    }

    pub fn fire(&self, inputs: &[f64], noise: &NoiseModel, rng: &mut RngStream) -> f64 {
        debug_assert_eq!(inputs.len(), self.weights.len());
        let drive: f64 = self
            .weights
            .iter()
            .zip(inputs)
            .map(|(w, x)| if sample_synapse(rng, noise) { w * x } else { 0.0 })
            .sum();
        self.activation.apply(drive + self.bias) + sample_output_noise(rng, noise)
    }
}

/// `M × R` replica activations, modulus-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseBundle {
    moduli: usize,
    replicas: usize,
    values: Vec<f64>,
}

impl PhaseBundle {
    pub fn new(moduli: usize, replicas: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), moduli * replicas, "bundle size");
        Self { moduli, replicas, values }
    }

    /// Single-replica bundle holding the centred phases of `phi`.
    pub fn from_codeword(phi: &Codeword) -> Self {
        Self::new(phi.len(), 1, phi.phases().iter().map(|&p| centered(p)).collect())
    }

    pub fn num_moduli(&self) -> usize {
        self.moduli
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.moduli, self.replicas)
    }

    pub fn replica_values(&self, modulus: usize) -> &[f64] {
        &self.values[modulus * self.replicas..(modulus + 1) * self.replicas]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Noiseless readout: per-modulus linear mean of the replicas, mod 1.
    pub fn mean_codeword(&self) -> Codeword {
        Codeword::from_unreduced(
            (0..self.moduli).map(|j| self.replica_values(j).iter().sum::<f64>() / self.replicas as f64),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeStatus {
    Single(usize),
    Silent,
    Multiple(usize),
}

impl DecodeStatus {
    pub fn is_anomalous(self) -> bool {
        !matches!(self, DecodeStatus::Single(_))
    }
}

/// The decoder's one-hot output layer: `width` step neurons per candidate
/// feeding an encoder of `replicas` repetitions. With repetition the width
/// is `R` and replica `r` of every phase reads step replica `r`; without,
/// each of the `M` encoder phase neurons reads a step neuron of its own.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotState {
    candidates: usize,
    replicas: usize,
    width: usize,
    fired: Vec<bool>,
    activations: Vec<f64>,
    scores: Vec<f64>,
    delivery: f64,
}

impl OneHotState {
    /// Exact one-hot at `index` (circuit inputs).
    pub fn clean(index: usize, candidates: usize, replicas: usize) -> Self {
        let fired: Vec<bool> = (0..candidates * replicas).map(|i| i / replicas == index).collect();
        let activations = fired.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
        Self { candidates, replicas, width: replicas, fired, activations, scores: Vec::new(), delivery: 1.0 }
    }

    pub fn num_candidates(&self) -> usize {
        self.candidates
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }

    /// Step neurons per candidate.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Noisy output of step neuron `i` for candidate `k`.
    pub fn activation(&self, k: usize, i: usize) -> f64 {
        self.activations[k * self.width + i]
    }

    /// Step neuron read by encoder phase neuron `(j, rep)`.
    fn step_for(&self, j: usize, rep: usize) -> usize {
        if self.width == self.replicas { rep } else { j % self.width }
    }

    /// Averaged step activation per candidate.
    pub fn mean_activations(&self) -> Vec<f64> {
        (0..self.candidates)
            .map(|k| self.activations[k * self.width..(k + 1) * self.width].iter().sum::<f64>() / self.width as f64)
            .collect()
    }

    /// Score-neuron outputs, empty for clean input states.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Expected fraction of step neurons that receive their drive.
    pub fn delivery(&self) -> f64 {
        self.delivery
    }

    /// Candidate `k` counts as fired when more than half of its step neurons
    /// expected to receive drive did. Downstream encoders normalise by the
    /// same delivery fraction.
    pub fn decision(&self) -> Vec<bool> {
        let half = self.delivery * self.width as f64 / 2.0;
        (0..self.candidates)
            .map(|k| {
                let n = self.fired[k * self.width..(k + 1) * self.width].iter().filter(|&&f| f).count();
                n as f64 > half
            })
            .collect()
    }

    pub fn status(&self) -> DecodeStatus {
        let decision = self.decision();
        let count = decision.iter().filter(|&&f| f).count();
        match count {
            0 => DecodeStatus::Silent,
            1 => DecodeStatus::Single(decision.iter().position(|&f| f).unwrap()),
            n => DecodeStatus::Multiple(n),
        }
    }

    /// `true` iff exactly candidate `k` fired.
    pub fn is_exactly(&self, k: usize) -> bool {
        self.status() == DecodeStatus::Single(k)
    }
}

/// Everything needed to build one logical neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicalNeuronSpec {
    code: GridCode,
    weights: Vec<i64>,
    encoder: EncoderFn,
    repetitions: usize,
    fan_in_cap: Option<usize>,
    wrong_reference: f64,
    phase_noise_stages: f64,
    /// `x_k/λ_j mod 1`, candidate-major.
    reference: Vec<f64>,
    /// Centred `e(x_k)/λ_j mod 1`, candidate-major.
    encoder_weights: Vec<f64>,
}

impl LogicalNeuronSpec {
    /// `code` supplies the moduli and the decoder's candidate set; the
    /// encoder must be defined on every candidate.
    pub fn new(code: GridCode, weights: Vec<i64>, encoder: EncoderFn, repetitions: usize) -> Result<Self> {
        if repetitions == 0 {
            return Err(NeuralError::NoRepetitions);
        }
        if weights.is_empty() {
            return Err(NeuralError::NoWeights);
        }
        let mut reference = Vec::new();
        let mut encoder_weights = Vec::new();
        for &x in code.candidates() {
            let e = encoder.try_eval(x)?;
            for &m in code.moduli() {
                reference.push(phase_of(x as f64, m));
                encoder_weights.push(centered(phase_of(e, m)));
            }
        }
        let wrong_reference = code.max_cross_score().unwrap_or(0.0);
        let phase_noise_stages = 1.0 + weights.iter().map(|&a| (a * a) as f64).sum::<f64>();
        Ok(Self {
            code,
            weights,
            encoder,
            repetitions,
            fan_in_cap: None,
            wrong_reference,
            phase_noise_stages,
            reference,
            encoder_weights,
        })
    }

    /// Pure decoder over `code` (identity encoder, single unit weight) whose
    /// input is a freshly encoded codeword.
    pub fn decoder(code: GridCode, repetitions: usize) -> Result<Self> {
        Ok(Self::new(code, vec![1], EncoderFn::Identity, repetitions)?.with_phase_noise_stages(1.0))
    }

    pub fn with_fan_in_cap(mut self, cap: Option<usize>) -> Result<Self> {
        if matches!(cap, Some(c) if c < 2) {
            return Err(NeuralError::BadFanInCap);
        }
        self.fan_in_cap = cap;
        Ok(self)
    }

    /// Override the expected best wrong-candidate score used to place the
    /// threshold (0 for codes whose wrong candidates look like random phases).
    pub fn with_wrong_reference(mut self, reference: f64) -> Self {
        self.wrong_reference = reference;
        self
    }

    /// Number of independent `σ²` contributions assumed on each replica
    /// of the decoder input; only used to tune the threshold.
    pub fn with_phase_noise_stages(mut self, stages: f64) -> Self {
        self.phase_noise_stages = stages;
        self
    }

    pub fn code(&self) -> &GridCode {
        &self.code
    }

    pub fn weights(&self) -> &[i64] {
        &self.weights
    }

    pub fn encoder(&self) -> &EncoderFn {
        &self.encoder
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions
    }

    pub fn fan_in_cap(&self) -> Option<usize> {
        self.fan_in_cap
    }

    pub fn num_moduli(&self) -> usize {
        self.code.num_moduli()
    }

    pub fn num_candidates(&self) -> usize {
        self.code.candidates().len()
    }

    /// Post-averaging phase noise the threshold is tuned for.
    pub fn effective_sigma(&self, noise: &NoiseModel) -> f64 {
        noise.sigma() * (self.phase_noise_stages / self.repetitions as f64).sqrt()
    }

    /// Step threshold: midpoint between the expected score of the true
    /// candidate and of the best wrong one, `a(σ_eff)·M` and
    /// `a(σ_eff)·w_ref`. Score weights are failure-compensated; with a single
    /// replica the phase synapses are not, which scales both by `1−p`.
    pub fn threshold(&self, noise: &NoiseModel) -> f64 {
        let m = self.num_moduli() as f64;
        let delivered = if self.repetitions == 1 { noise.survival() } else { 1.0 };
        delivered * attenuation_factor(self.effective_sigma(noise)) * (m + self.wrong_reference) / 2.0
    }

    fn tree_nodes(&self, fan_in: usize) -> usize {
        let Some(cap) = self.fan_in_cap else { return 0 };
        let (mut n, mut total) = (fan_in, 0);
        while n > cap {
            n = n.div_ceil(cap);
            total += n;
        }
        total
    }

    /// Step neurons per candidate: `R` with repetition, else one per
    /// encoder phase neuron.
    pub fn step_width(&self) -> usize {
        if self.repetitions > 1 { self.repetitions } else { self.num_moduli() }
    }

    /// Physical neurons in the decoder: cosine neurons, score neurons, the
    /// step layer and any adder-tree nodes.
    pub fn decoder_neurons(&self) -> usize {
        let (k, m, r) = (self.num_candidates(), self.num_moduli(), self.repetitions);
        k * m * (1 + self.tree_nodes(r)) + k * (1 + self.tree_nodes(m)) + k * self.step_width()
    }

    pub fn encoder_neurons(&self) -> usize {
        self.num_moduli() * self.repetitions
    }

    pub fn sum_neurons(&self) -> usize {
        self.num_moduli() * self.repetitions
    }

    /// Sum stage, decoder and encoder.
    pub fn physical_neurons(&self) -> usize {
        self.sum_neurons() + self.decoder_neurons() + self.encoder_neurons()
    }
}

/// Masked weighted sum `Σ mask_i w_i x_i / comp` followed, when the fan-in
/// exceeds `cap`, by a balanced tree of noisy mean neurons.
fn dendrite(
    items: &[(f64, f64)],
    compensation: f64,
    cap: Option<usize>,
    noise: &NoiseModel,
    rng: &mut RngStream,
) -> f64 {
    match cap {
        Some(c) if items.len() > c => {
            let level: Vec<(f64, f64)> = items
                .chunks(c)
                .map(|chunk| {
                    let total: f64 = chunk.iter().map(|&(_, w)| w).sum();
                    let normalised: Vec<(f64, f64)> = chunk.iter().map(|&(v, w)| (v, w / total)).collect();
                    let out = dendrite(&normalised, compensation, None, noise, rng) + sample_output_noise(rng, noise);
                    (out, total)
                })
                .collect();
            dendrite(&level, compensation, cap, noise, rng)
        }
        _ => {
            let p = noise.p_fail();
            let sum: f64 = if p == 0.0 {
                items.iter().map(|&(v, w)| v * w).sum()
            } else {
                items.iter().map(|&(v, w)| if sample_synapse(rng, noise) { v * w } else { 0.0 }).sum()
            };
            sum / compensation
        }
    }
}

/// Compensation for phase-carrying synapses. A lone replica cannot be
/// rescaled without corrupting its phase, so only averaged paths compensate.
fn phase_compensation(noise: &NoiseModel, replicas: usize) -> f64 {
    if replicas > 1 {
        noise.survival()
    } else {
        1.0
    }
}

fn decode_layers(
    input: &PhaseBundle,
    spec: &LogicalNeuronSpec,
    noise: &NoiseModel,
    threshold: f64,
    rng: &mut RngStream,
) -> OneHotState {
    let (m, r) = input.shape();
    let k_count = spec.num_candidates();
    let comp = phase_compensation(noise, r);
    let score_comp = if noise.p_fail() < 1.0 { noise.survival() } else { 1.0 };

    // With reliable synapses every cosine neuron of modulus j sees the same
    // dendritic mean, so it is computed once.
    let shared: Option<Vec<f64>> = (noise.p_fail() == 0.0 && spec.fan_in_cap.is_none_or(|c| r <= c)).then(|| {
        (0..m).map(|j| input.replica_values(j).iter().sum::<f64>() / (r as f64 * comp)).collect()
    });
    let uniform = 1.0 / r as f64;

    let mut scores = Vec::with_capacity(k_count);
    let mut cos_items: Vec<(f64, f64)> = Vec::with_capacity(m);
    let mut replica_items: Vec<(f64, f64)> = Vec::with_capacity(r);
    for k in 0..k_count {
        cos_items.clear();
        for j in 0..m {
            let mean = match &shared {
                Some(means) => means[j],
                None => {
                    replica_items.clear();
                    replica_items.extend(input.replica_values(j).iter().map(|&v| (v, uniform)));
                    dendrite(&replica_items, comp, spec.fan_in_cap, noise, rng)
                }
            };
            let out = (TAU * (spec.reference[k * m + j] - mean)).cos() + sample_output_noise(rng, noise);
            cos_items.push((out, 1.0));
        }
        let score = dendrite(&cos_items, score_comp, spec.fan_in_cap, noise, rng) + sample_output_noise(rng, noise);
        scores.push(score);
    }

    let width = spec.step_width();
    let mut fired = Vec::with_capacity(k_count * width);
    let mut activations = Vec::with_capacity(k_count * width);
    for &score in &scores {
        for _ in 0..width {
            let drive = if sample_synapse(rng, noise) { score } else { 0.0 };
            let f = drive > threshold;
            fired.push(f);
            activations.push(if f { 1.0 } else { 0.0 } + sample_output_noise(rng, noise));
        }
    }
    OneHotState { candidates: k_count, replicas: r, width, fired, activations, scores, delivery: noise.survival() }
}

/// Noisy grid decoder: cosine neurons per (candidate, modulus), a score
/// neuron per candidate, then step neurons with the tuned threshold.
/// Zero or multiple firings are returned as-is.
pub fn neural_decode(
    input: &PhaseBundle,
    spec: &LogicalNeuronSpec,
    noise: &NoiseModel,
    rng: &mut RngStream,
) -> Result<OneHotState> {
    let expected = (spec.num_moduli(), spec.repetitions);
    if input.shape() != expected {
        return Err(NeuralError::Shape { expected, got: input.shape() });
    }
    Ok(decode_layers(input, spec, noise, spec.threshold(noise), rng))
}

/// Noiseless readout of a (noisy) bundle: the same decoder built from
/// perfect neurons, with the threshold still tuned for `tuned_for`.
pub fn readout_decode(input: &PhaseBundle, spec: &LogicalNeuronSpec, tuned_for: &NoiseModel) -> Result<OneHotState> {
    let expected = (spec.num_moduli(), spec.repetitions);
    if input.shape() != expected {
        return Err(NeuralError::Shape { expected, got: input.shape() });
    }
    let mut unused = RngStream::new(0, crate::noise::StreamId::new(0, 0));
    Ok(decode_layers(input, spec, &NoiseModel::noiseless(), spec.threshold(tuned_for), &mut unused))
}

/// Noisy encoder: phase neuron `(j, r)` reads its step neuron of every
/// candidate with weight `e(x_k)/λ_j mod 1`.
pub fn neural_encode(
    state: &OneHotState,
    spec: &LogicalNeuronSpec,
    noise: &NoiseModel,
    rng: &mut RngStream,
) -> Result<PhaseBundle> {
    if state.candidates != spec.num_candidates() {
        return Err(NeuralError::StateSize { expected: spec.num_candidates(), got: state.candidates });
    }
    Ok(encode_state(state, &spec.encoder_weights, spec.num_moduli(), noise, rng))
}

fn encode_state(state: &OneHotState, weights: &[f64], m: usize, noise: &NoiseModel, rng: &mut RngStream) -> PhaseBundle {
    let (k_count, r) = (state.candidates, state.replicas);
    let comp = if r > 1 { noise.survival() * state.delivery } else { 1.0 };
    let reliable = noise.p_fail() == 0.0;
    let mut values = Vec::with_capacity(m * r);
    for j in 0..m {
        for rep in 0..r {
            let mut drive = 0.0;
            for k in 0..k_count {
                if reliable || sample_synapse(rng, noise) {
                    drive += state.activation(k, state.step_for(j, rep)) * weights[k * m + j];
                }
            }
            values.push(drive / comp + sample_output_noise(rng, noise));
        }
    }
    PhaseBundle::new(m, r, values)
}

/// Encode a one-hot state with an explicit encoder function over `code`'s
/// candidates (used for circuit inputs and ad-hoc experiments).
pub fn neural_encode_with(
    state: &OneHotState,
    e: &EncoderFn,
    code: &GridCode,
    noise: &NoiseModel,
    rng: &mut RngStream,
) -> Result<PhaseBundle> {
    let k_count = code.candidates().len();
    if state.candidates != k_count {
        return Err(NeuralError::StateSize { expected: k_count, got: state.candidates });
    }
    let mut weights = Vec::with_capacity(k_count * code.num_moduli());
    for &x in code.candidates() {
        let v = e.try_eval(x)?;
        weights.extend(code.moduli().iter().map(|&m| centered(phase_of(v, m))));
    }
    Ok(encode_state(state, &weights, code.num_moduli(), noise, rng))
}

/// Codespace weighted sum: replica `r` of output phase `j` sums replica `r`
/// of every input.
fn weighted_sum(inputs: &[PhaseBundle], weights: &[i64], noise: &NoiseModel, rng: &mut RngStream) -> PhaseBundle {
    let (m, r) = inputs[0].shape();
    let comp = phase_compensation(noise, r);
    let reliable = noise.p_fail() == 0.0;
    let mut values = Vec::with_capacity(m * r);
    for idx in 0..m * r {
        let mut drive = 0.0;
        for (bundle, &a) in inputs.iter().zip(weights) {
            if reliable || sample_synapse(rng, noise) {
                drive += a as f64 * bundle.values[idx];
            }
        }
        values.push(drive / comp + sample_output_noise(rng, noise));
    }
    PhaseBundle::new(m, r, values)
}

fn check_inputs(inputs: &[PhaseBundle], spec: &LogicalNeuronSpec) -> Result<()> {
    if inputs.len() != spec.weights.len() {
        return Err(NeuralError::InputCount { expected: spec.weights.len(), got: inputs.len() });
    }
    let expected = (spec.num_moduli(), spec.repetitions);
    for b in inputs {
        if b.shape() != expected {
            return Err(NeuralError::Shape { expected, got: b.shape() });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronOutput {
    pub state: OneHotState,
    pub output: PhaseBundle,
}

/// Weighted sum and decode only; the encoder stage is skipped.
pub fn logical_neuron_decode(
    inputs: &[PhaseBundle],
    spec: &LogicalNeuronSpec,
    noise: &NoiseModel,
    rng: &mut RngStream,
) -> Result<OneHotState> {
    check_inputs(inputs, spec)?;
    let summed = weighted_sum(inputs, &spec.weights, noise, rng);
    Ok(decode_layers(&summed, spec, noise, spec.threshold(noise), rng))
}

/// Full logical neuron: codespace sum, decode, re-encode through `e`.
pub fn logical_neuron_forward(
    inputs: &[PhaseBundle],
    spec: &LogicalNeuronSpec,
    noise: &NoiseModel,
    rng: &mut RngStream,
) -> Result<NeuronOutput> {
    let state = logical_neuron_decode(inputs, spec, noise, rng)?;
    let output = encode_state(&state, &spec.encoder_weights, spec.num_moduli(), noise, rng);
    Ok(NeuronOutput { state, output })
}

/// Error-corrected fan-out: one decode, `n_copies` independent encodes.
pub fn copy_codeword(
    phi: &PhaseBundle,
    n_copies: usize,
    spec: &LogicalNeuronSpec,
    noise: &NoiseModel,
    rng: &mut RngStream,
) -> Result<Vec<PhaseBundle>> {
    if n_copies == 0 {
        return Err(NeuralError::NoCopies);
    }
    let state = neural_decode(phi, spec, noise, rng)?;
    Ok((0..n_copies)
        .map(|_| encode_state(&state, &spec.encoder_weights, spec.num_moduli(), noise, rng))
        .collect())
}

/// Replicate each phase neuron `R` times; every replica is a noisy linear
/// neuron reading the original phase. `R = 1` passes the codeword through.
pub fn repetition_expand(phi: &Codeword, replicas: usize, noise: &NoiseModel, rng: &mut RngStream) -> Result<PhaseBundle> {
    if replicas == 0 {
        return Err(NeuralError::NoRepetitions);
    }
    if replicas == 1 {
        return Ok(PhaseBundle::from_codeword(phi));
    }
    let comp = noise.survival();
    let mut values = Vec::with_capacity(phi.len() * replicas);
    for &p in phi.phases() {
        let base = centered(p);
        for _ in 0..replicas {
            let drive = if sample_synapse(rng, noise) { base / comp } else { 0.0 };
            values.push(drive + sample_output_noise(rng, noise));
        }
    }
    Ok(PhaseBundle::new(phi.len(), replicas, values))
}

/// Collapse replicas with one noisy averaging neuron per modulus
/// (failure-compensated weights `1/((1−p)R)`), then reduce mod 1.
pub fn repetition_average(bundle: &PhaseBundle, noise: &NoiseModel, rng: &mut RngStream) -> Codeword {
    let r = bundle.replicas;
    if r == 1 {
        return Codeword::from_unreduced(bundle.values.iter().copied());
    }
    let comp = noise.survival();
    let uniform = 1.0 / r as f64;
    let means: Vec<f64> = (0..bundle.moduli)
        .map(|j| {
            let items: Vec<(f64, f64)> = bundle.replica_values(j).iter().map(|&v| (v, uniform)).collect();
            dendrite(&items, comp, None, noise, rng) + sample_output_noise(rng, noise)
        })
        .collect();
    Codeword::from_unreduced(means)
}

/// Grid-code family for Boolean networks: bit `b` is carried as the integer
/// `b·level`, with `level` chosen by [`gridcode::separating_level`].
#[derive(Debug, Clone, PartialEq)]
pub struct BitCode {
    moduli: Vec<u64>,
    level: i64,
}

impl BitCode {
    pub fn new(moduli: Vec<u64>) -> Result<Self> {
        let level = gridcode::separating_level(&moduli, 2);
        let code = Self { moduli, level };
        code.sum_code()?;
        Ok(code)
    }

    /// The `m` smallest odd primes.
    pub fn with_moduli_count(m: usize) -> Result<Self> {
        Self::new(gridcode::smallest_odd_primes(m))
    }

    pub fn moduli(&self) -> &[u64] {
        &self.moduli
    }

    pub fn num_moduli(&self) -> usize {
        self.moduli.len()
    }

    pub fn level(&self) -> i64 {
        self.level
    }

    /// Candidates `{0, c}`.
    pub fn bit_code(&self) -> Result<GridCode> {
        Ok(GridCode::with_candidates(self.moduli.clone(), 2 * self.level as u64 + 1, vec![0, self.level])?)
    }

    /// Candidates `{0, c, 2c}` reached by summing two bits.
    pub fn sum_code(&self) -> Result<GridCode> {
        let c = self.level;
        Ok(GridCode::with_candidates(self.moduli.clone(), 2 * c as u64 + 1, vec![0, c, 2 * c])?)
    }

    pub fn encode_bit(&self, bit: bool) -> Codeword {
        let code = self.bit_code().expect("validated at construction");
        gridcode::encode(if bit { self.level } else { 0 }, &EncoderFn::Identity, &code).expect("candidate")
    }

    /// Read a (noiseless) codeword back as a bit by exact MLE.
    pub fn decode_bit(&self, phi: &Codeword) -> Result<bool> {
        let code = self.bit_code()?;
        Ok(gridcode::mle_decode_oracle(phi, &code)? == self.level)
    }

    pub fn gate_spec(&self, gate: Gate, repetitions: usize) -> Result<LogicalNeuronSpec> {
        let encoder = gate_encoder_fn(gate).scaled(self.level);
        LogicalNeuronSpec::new(self.sum_code()?, vec![1, 1], encoder, repetitions)
    }

    /// Decoder over `{0, c}` re-encoding through the identity; its input is
    /// a single encoder stage.
    pub fn copy_spec(&self, repetitions: usize) -> Result<LogicalNeuronSpec> {
        Ok(LogicalNeuronSpec::new(self.bit_code()?, vec![1], EncoderFn::Identity, repetitions)?
            .with_phase_noise_stages(1.0))
    }

    /// Clean one-hot input for `bit`.
    pub fn input_state(&self, bit: bool, repetitions: usize) -> OneHotState {
        OneHotState::clean(usize::from(bit), 2, repetitions)
    }

    /// Noisy input encoders: the phase neurons carrying input `bit`.
    pub fn encode_input(&self, bit: bool, repetitions: usize, noise: &NoiseModel, rng: &mut RngStream) -> PhaseBundle {
        let code = self.bit_code().expect("validated at construction");
        neural_encode_with(&self.input_state(bit, repetitions), &EncoderFn::Identity, &code, noise, rng)
            .expect("shapes agree")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridcode::{encode, mle_decode_oracle};
    use crate::noise::StreamId;

    fn rng(seed: u64) -> RngStream {
        RngStream::new(seed, StreamId::new(0, 0))
    }

    fn code_357() -> GridCode {
        GridCode::new(vec![3, 5, 7], 105).unwrap()
    }

    #[test]
    fn physical_neuron_reference() {
        let mut r = rng(1);
        let quiet = NoiseModel::noiseless();
        let relu = PhysicalNeuron::new(vec![1.0, -2.0], 0.5, Activation::Relu);
        assert_eq!(relu.fire(&[1.0, 1.0], &quiet, &mut r), 0.0);
        assert_eq!(relu.fire(&[3.0, 1.0], &quiet, &mut r), 1.5);
        let step = PhysicalNeuron::new(vec![1.0], 0.0, Activation::Step { threshold: 0.5 });
        assert_eq!(step.fire(&[0.6], &quiet, &mut r), 1.0);
        let dead = NoiseModel::new(0.0, 1.0).unwrap();
        assert_eq!(step.fire(&[0.6], &dead, &mut r), 0.0);
        let cosine = PhysicalNeuron::new(vec![1.0], 0.0, Activation::Cosine { offset: 0.25 });
        assert!((cosine.fire(&[0.25], &quiet, &mut r) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_decode_357() {
        let code = code_357();
        let spec = LogicalNeuronSpec::decoder(code.clone(), 1).unwrap();
        let quiet = NoiseModel::noiseless();
        for x in 0..105 {
            let phi = encode(x, &EncoderFn::Identity, &code).unwrap();
            let state = neural_decode(&PhaseBundle::from_codeword(&phi), &spec, &quiet, &mut rng(2)).unwrap();
            assert!(state.is_exactly(x as usize), "x={x}: {:?}", state.status());
            // One-hot activations are exactly 0/1.
            let acts = state.mean_activations();
            assert!(acts.iter().enumerate().all(|(k, &a)| a == if k == x as usize { 1.0 } else { 0.0 }));
        }
    }

    #[test]
    fn total_failure_silences_decoder() {
        let code = code_357();
        let spec = LogicalNeuronSpec::decoder(code.clone(), 1).unwrap();
        let dead = NoiseModel::new(0.0, 1.0).unwrap();
        let phi = encode(4, &EncoderFn::Identity, &code).unwrap();
        let state = neural_decode(&PhaseBundle::from_codeword(&phi), &spec, &dead, &mut rng(3)).unwrap();
        assert!(state.scores().iter().all(|&s| s == 0.0));
        assert_eq!(state.status(), DecodeStatus::Silent);
    }

    #[test]
    fn noisy_decode_tracks_mle_on_the_same_phases() {
        // σ = 0.05 with ten moduli: compare the step decoder against exact
        // MLE applied to the very same noisy phases.
        let moduli = gridcode::smallest_odd_primes(10);
        let code = GridCode::with_candidates(moduli.clone(), 1000, (0..40).map(|k| k * 23 + 7).collect()).unwrap();
        let spec = LogicalNeuronSpec::decoder(code.clone(), 1).unwrap();
        let noise = NoiseModel::new(0.05, 0.0).unwrap();
        let trials = 10_000;
        let (mut neural_err, mut mle_err) = (0, 0);
        for t in 0..trials {
            let mut r = RngStream::new(11, StreamId::new(t, 0));
            let k = (t % 40) as usize;
            let x = code.candidates()[k];
            let clean = encode(x, &EncoderFn::Identity, &code).unwrap();
            let noisy = Codeword::from_unreduced(clean.phases().iter().map(|p| p + sample_output_noise(&mut r, &noise)));
            if mle_decode_oracle(&noisy, &code).unwrap() != x {
                mle_err += 1;
            }
            let state = neural_decode(&PhaseBundle::from_codeword(&noisy), &spec, &noise, &mut r).unwrap();
            if !state.is_exactly(k) {
                neural_err += 1;
            }
        }
        // The step decoder only relaxes the argmax; both rates are tiny here.
        let se = |e: usize| ((e.max(1) as f64) / trials as f64 / trials as f64).sqrt();
        let (pn, pm) = (neural_err as f64 / trials as f64, mle_err as f64 / trials as f64);
        assert!(pn >= pm - 3.0 * se(mle_err));
        assert!(pn - pm < 3.0 * se(neural_err) + 0.01, "neural {pn} mle {pm}");
    }

    #[test]
    fn neural_encode_examples() {
        let code = code_357();
        let quiet = NoiseModel::noiseless();
        let state = OneHotState::clean(4, 105, 1);
        let out = neural_encode_with(&state, &EncoderFn::Identity, &code, &quiet, &mut rng(4)).unwrap();
        assert!(out.mean_codeword().max_distance(&encode(4, &EncoderFn::Identity, &code).unwrap()) < 1e-12);

        let mut silent = state.clone();
        silent.activations.iter_mut().for_each(|a| *a = 0.0);
        let zero = neural_encode_with(&silent, &EncoderFn::Identity, &code, &quiet, &mut rng(4)).unwrap();
        assert!(zero.mean_codeword().phases().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn neural_encode_noise_is_gaussian() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let code = code_357();
        let noise = NoiseModel::new(0.1, 0.0).unwrap();
        let target = encode(4, &EncoderFn::Identity, &code).unwrap();
        let mut errors: Vec<f64> = (0..10_000)
            .map(|t| {
                let mut r = RngStream::new(5, StreamId::new(t, 0));
                let out =
                    neural_encode_with(&OneHotState::clean(4, 105, 1), &EncoderFn::Identity, &code, &noise, &mut r)
                        .unwrap();
                centered(out.mean_codeword().phases()[1] - target.phases()[1])
            })
            .collect();
        errors.sort_by(f64::total_cmp);
        let normal = Normal::new(0.0, 0.1).unwrap();
        let n = errors.len() as f64;
        let ks = errors
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let c = normal.cdf(e);
                (c - i as f64 / n).abs().max((c - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value 1.628/√n
        assert!(ks < 1.628 / n.sqrt(), "KS {ks}");
    }

    #[test]
    fn gate_truth_tables_noiseless() {
        let bits = BitCode::with_moduli_count(5).unwrap();
        let quiet = NoiseModel::noiseless();
        for gate in Gate::ALL {
            let spec = bits.gate_spec(gate, 1).unwrap();
            for a in [false, true] {
                for b in [false, true] {
                    let mut r = rng(6);
                    let inputs = [bits.encode_input(a, 1, &quiet, &mut r), bits.encode_input(b, 1, &quiet, &mut r)];
                    let out = logical_neuron_forward(&inputs, &spec, &quiet, &mut r).unwrap();
                    assert!(out.state.is_exactly(usize::from(a) + usize::from(b)));
                    let decoded = bits.decode_bit(&out.output.mean_codeword()).unwrap();
                    assert_eq!(decoded, gate.eval(a, b), "{gate} {a} {b}");
                    let exact = bits.encode_bit(gate.eval(a, b));
                    assert!(out.output.mean_codeword().max_distance(&exact) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn gate_encoder_tables() {
        let table = |g| (0..3).map(|s| gate_encoder_fn(g).eval(s).unwrap()).collect::<Vec<_>>();
        assert_eq!(table(Gate::And), vec![0.0, 0.0, 1.0]);
        assert_eq!(table(Gate::Or), vec![0.0, 1.0, 1.0]);
        assert_eq!(table(Gate::Xor), vec![0.0, 1.0, 0.0]);
        assert_eq!(table(Gate::Nand), vec![1.0, 1.0, 0.0]);
        assert!(matches!("NOR".parse::<Gate>(), Err(NeuralError::UnknownGate(_))));
        assert_eq!("nand".parse::<Gate>().unwrap(), Gate::Nand);
    }

    #[test]
    fn copies_are_exact_without_noise() {
        let bits = BitCode::with_moduli_count(4).unwrap();
        let quiet = NoiseModel::noiseless();
        let spec = bits.copy_spec(1).unwrap();
        let phi = PhaseBundle::from_codeword(&bits.encode_bit(true));
        let one = copy_codeword(&phi, 1, &spec, &quiet, &mut rng(7)).unwrap();
        assert!(one[0].mean_codeword().max_distance(&bits.encode_bit(true)) < 1e-12);
        let three = copy_codeword(&phi, 3, &spec, &quiet, &mut rng(7)).unwrap();
        assert_eq!(three.len(), 3);
        assert!(three.iter().all(|c| c == &three[0]));
        assert!(copy_codeword(&phi, 0, &spec, &quiet, &mut rng(7)).is_err());
    }

    #[test]
    fn copies_carry_independent_noise() {
        // Residuals of each copy around the noiseless encode of the shared
        // one-hot state are uncorrelated.
        let bits = BitCode::with_moduli_count(10).unwrap();
        let noise = NoiseModel::new(0.2, 0.0).unwrap();
        let quiet = NoiseModel::noiseless();
        let spec = bits.copy_spec(1).unwrap();
        let input = PhaseBundle::from_codeword(&bits.encode_bit(true));
        let trials = 10_000;
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for t in 0..trials {
            let mut r = RngStream::new(8, StreamId::new(t, 0));
            let state = neural_decode(&input, &spec, &noise, &mut r).unwrap();
            let centre = neural_encode(&state, &spec, &quiet, &mut r).unwrap().values()[3];
            let a = neural_encode(&state, &spec, &noise, &mut r).unwrap().values()[3];
            let b = neural_encode(&state, &spec, &noise, &mut r).unwrap().values()[3];
            xs.push(a - centre);
            ys.push(b - centre);
        }
        let n = trials as f64;
        let dot: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let (sx, sy): (f64, f64) = (xs.iter().map(|x| x * x).sum(), ys.iter().map(|y| y * y).sum());
        let corr = dot / (sx * sy).sqrt();
        assert!(corr.abs() < 3.0 / n.sqrt(), "corr {corr}");
        assert!((sx / n).sqrt() > 0.19 && (sx / n).sqrt() < 0.21);
    }

    #[test]
    fn repetition_identity_and_exact_average() {
        let code = code_357();
        let phi = encode(40, &EncoderFn::Identity, &code).unwrap();
        let quiet = NoiseModel::noiseless();
        let one = repetition_expand(&phi, 1, &quiet, &mut rng(9)).unwrap();
        assert!(repetition_average(&one, &quiet, &mut rng(9)).max_distance(&phi) < 1e-12);
        let many = repetition_expand(&phi, 50, &quiet, &mut rng(9)).unwrap();
        assert!(repetition_average(&many, &quiet, &mut rng(9)).max_distance(&phi) < 1e-12);
    }

    #[test]
    fn compensated_average_under_failure() {
        let phases = [0.2, 0.35, 0.45];
        let (p, r) = (0.5, 1000);
        let noise = NoiseModel::new(0.0, p).unwrap();
        let values = phases.iter().flat_map(|&v| std::iter::repeat_n(v, r)).collect();
        let bundle = PhaseBundle::new(3, r, values);
        for t in 0..20 {
            let mut s = RngStream::new(10, StreamId::new(t, 0));
            let avg = repetition_average(&bundle, &noise, &mut s);
            for (a, &v) in avg.phases().iter().zip(&phases) {
                let bound = 3.0 * (p / ((1.0 - p) * r as f64)).sqrt() * v;
                assert!(circular_distance(*a, v) < bound, "{a} vs {v}");
            }
        }
    }

    use crate::gridcode::circular_distance;

    #[test]
    fn averaged_noise_scales_as_inverse_sqrt_r() {
        // σ = 1: averaged phase error std should fall as R^-1/2. The
        // averaging neuron's own σ is removed by measuring replica means
        // directly (the noiseless readout).
        let phi = Codeword::new(vec![0.3]).unwrap();
        let noise = NoiseModel::new(1.0, 0.0).unwrap();
        let rs = [10usize, 100, 1000];
        let mut points = Vec::new();
        for &r in &rs {
            let errs: Vec<f64> = (0..400)
                .map(|t| {
                    let mut s = RngStream::new(12, StreamId::new(t, r as u64));
                    let b = repetition_expand(&phi, r, &noise, &mut s).unwrap();
                    b.replica_values(0).iter().sum::<f64>() / r as f64 - 0.3
                })
                .collect();
            let std = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
            points.push(((r as f64).ln(), std.ln()));
        }
        let slope = crate::experiments::stats::linear_fit(
            &points.iter().map(|p| p.0).collect::<Vec<_>>(),
            &points.iter().map(|p| p.1).collect::<Vec<_>>(),
        )
        .slope;
        assert!((slope + 0.5).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn mean_score_separation() {
        // Expected score at the true candidate is (1−p)·M·a(σ) with one
        // replica; random wrong candidates average 0 with variance
        // ≤ M/2 + Mσ², inflated by the compensated score weights.
        let moduli = gridcode::smallest_odd_primes(8);
        let noise = NoiseModel::new(0.15, 0.2).unwrap();
        let m = moduli.len() as f64;
        let product: u64 = moduli.iter().product();
        let trials = 4000u64;
        let (mut true_scores, mut wrong_scores) = (Vec::new(), Vec::new());
        for t in 0..trials {
            let mut s = RngStream::new(13, StreamId::new(t, 0));
            let a = s.below(product) as i64;
            let b = s.below(product) as i64;
            let (lo, hi) = (a.min(b), a.max(b));
            if lo == hi {
                continue;
            }
            let code = GridCode::with_candidates(moduli.clone(), product, vec![lo, hi]).unwrap();
            let spec = LogicalNeuronSpec::decoder(code.clone(), 1).unwrap();
            let phi = encode(lo, &EncoderFn::Identity, &code).unwrap();
            let noisy = Codeword::from_unreduced(phi.phases().iter().map(|p| p + sample_output_noise(&mut s, &noise)));
            let state = neural_decode(&PhaseBundle::from_codeword(&noisy), &spec, &noise, &mut s).unwrap();
            true_scores.push(state.scores()[0]);
            wrong_scores.push(state.scores()[1]);
        }
        let stats = |v: &[f64]| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, var, (var / n).sqrt())
        };
        let (mt, _, set) = stats(&true_scores);
        let expected = 0.8 * m * attenuation_factor(0.15);
        assert!((mt - expected).abs() < 3.0 * set, "true mean {mt} vs {expected}");
        let (mw, vw, sew) = stats(&wrong_scores);
        assert!(mw.abs() < 3.0 * sew, "wrong mean {mw}");
        // Failures and compensation inflate the variance by 1/(1-p).
        assert!(vw <= (m / 2.0 + m * 0.15f64.powi(2)) / 0.8 + 1.0, "wrong var {vw}");
    }

    #[test]
    fn shape_errors() {
        let bits = BitCode::with_moduli_count(3).unwrap();
        let spec = bits.gate_spec(Gate::And, 2).unwrap();
        let quiet = NoiseModel::noiseless();
        let one = PhaseBundle::from_codeword(&bits.encode_bit(true));
        assert!(matches!(
            logical_neuron_forward(&[one.clone(), one.clone()], &spec, &quiet, &mut rng(1)),
            Err(NeuralError::Shape { .. })
        ));
        assert!(matches!(
            logical_neuron_forward(&[one], &spec, &quiet, &mut rng(1)),
            Err(NeuralError::InputCount { .. })
        ));
        assert!(LogicalNeuronSpec::new(bits.sum_code().unwrap(), vec![1], EncoderFn::Identity, 0).is_err());
    }

    #[test]
    fn fan_in_cap_preserves_noiseless_result() {
        let bits = BitCode::with_moduli_count(6).unwrap();
        let quiet = NoiseModel::noiseless();
        let spec = bits.gate_spec(Gate::Xor, 40).unwrap().with_fan_in_cap(Some(4)).unwrap();
        let mut r = rng(14);
        let inputs = [bits.encode_input(true, 40, &quiet, &mut r), bits.encode_input(false, 40, &quiet, &mut r)];
        let out = logical_neuron_forward(&inputs, &spec, &quiet, &mut r).unwrap();
        assert!(out.state.is_exactly(1));
        assert!(bits.decode_bit(&out.output.mean_codeword()).unwrap());
        // 40 → 10 → 3 → 1 for cosine dendrites, 6 → 2 for scores.
        let uncapped = bits.gate_spec(Gate::Xor, 40).unwrap();
        assert_eq!(spec.decoder_neurons(), uncapped.decoder_neurons() + 3 * 6 * 13 + 3 * 2);
        assert!(spec.clone().with_fan_in_cap(Some(1)).is_err());
    }
}
