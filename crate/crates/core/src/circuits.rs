//! Boolean circuits compiled onto logical neurons.

use std::fmt;

use crate::digital_ft::{Formula, FormulaError};
use crate::neural::{
    copy_codeword, logical_neuron_forward, readout_decode, BitCode, DecodeStatus, Gate, LogicalNeuronSpec,
    NeuralError, PhaseBundle,
};
use crate::noise::{NoiseModel, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Wire {
    Input(usize),
    Gate(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateNode {
    pub gate: Gate,
    pub inputs: [Wire; 2],
}

/// Gates in topological order over named inputs, with named outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    inputs: Vec<String>,
    gates: Vec<GateNode>,
    outputs: Vec<(String, Wire)>,
}

impl Circuit {
    pub fn new(inputs: Vec<String>) -> Self {
        Self { inputs, gates: Vec::new(), outputs: Vec::new() }
    }

    pub fn input(&self, name: &str) -> Option<Wire> {
        self.inputs.iter().position(|i| i == name).map(Wire::Input)
    }

    pub fn add_gate(&mut self, gate: Gate, a: Wire, b: Wire) -> Wire {
        for w in [a, b] {
            match w {
                Wire::Input(i) => assert!(i < self.inputs.len(), "input {i} out of range"),
                Wire::Gate(g) => assert!(g < self.gates.len(), "gate {g} not yet defined"),
            }
        }
        self.gates.push(GateNode { gate, inputs: [a, b] });
        Wire::Gate(self.gates.len() - 1)
    }

    pub fn add_output(&mut self, name: &str, wire: Wire) {
        self.outputs.push((name.to_string(), wire));
    }

    /// Single-output circuit from a formula. With `inputs = None` the
    /// formula's own variables are used, in order of appearance.
    pub fn from_formula(formula: &Formula, inputs: Option<&[String]>) -> Result<Self, FormulaError> {
        let inputs = match inputs {
            Some(list) => {
                if let Some(v) = formula.variables().into_iter().find(|v| !list.contains(v)) {
                    return Err(FormulaError::UndefinedInput(v));
                }
                list.to_vec()
            }
            None => formula.variables(),
        };
        let mut circuit = Circuit::new(inputs);
        let out = circuit.lower(formula);
        circuit.add_output("out", out);
        Ok(circuit)
    }

    fn lower(&mut self, f: &Formula) -> Wire {
        match f {
            Formula::Var(v) => self.input(v).expect("checked"),
            Formula::Gate(g, a, b) => {
                let wa = self.lower(a);
                let wb = self.lower(b);
                self.add_gate(*g, wa, wb)
            }
        }
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn gates(&self) -> &[GateNode] {
        &self.gates
    }

    pub fn outputs(&self) -> &[(String, Wire)] {
        &self.outputs
    }

    pub fn eval(&self, bits: &[bool]) -> Vec<bool> {
        assert_eq!(bits.len(), self.inputs.len(), "input arity");
        let mut values = Vec::with_capacity(self.gates.len());
        let read = |w: Wire, values: &[bool]| match w {
            Wire::Input(i) => bits[i],
            Wire::Gate(g) => values[g],
        };
        for node in &self.gates {
            let v = node.gate.eval(read(node.inputs[0], &values), read(node.inputs[1], &values));
            values.push(v);
        }
        self.outputs.iter().map(|&(_, w)| read(w, &values)).collect()
    }

    /// Consumers of each wire: gate inputs plus output taps.
    fn uses(&self) -> (Vec<usize>, Vec<usize>) {
        let mut input_uses = vec![0; self.inputs.len()];
        let mut gate_uses = vec![0; self.gates.len()];
        let wires = self.gates.iter().flat_map(|g| g.inputs).chain(self.outputs.iter().map(|&(_, w)| w));
        for w in wires {
            match w {
                Wire::Input(i) => input_uses[i] += 1,
                Wire::Gate(g) => gate_uses[g] += 1,
            }
        }
        (input_uses, gate_uses)
    }
}

/// Two-bit multiplier `(a1 a0) × (b1 b0) = (c3 c2 c1 c0)`; bit 0 is the
/// least significant. Partial products are ANDs, the middle columns a two
/// half-adder chain.
pub fn build_multiplier() -> Circuit {
    let mut c = Circuit::new(["a0", "a1", "b0", "b1"].map(String::from).to_vec());
    let [a0, a1, b0, b1] = [0, 1, 2, 3].map(Wire::Input);
    let p00 = c.add_gate(Gate::And, a0, b0);
    let p10 = c.add_gate(Gate::And, a1, b0);
    let p01 = c.add_gate(Gate::And, a0, b1);
    let p11 = c.add_gate(Gate::And, a1, b1);
    let c1 = c.add_gate(Gate::Xor, p10, p01);
    let carry = c.add_gate(Gate::And, p10, p01);
    let c2 = c.add_gate(Gate::Xor, p11, carry);
    let c3 = c.add_gate(Gate::And, p11, carry);
    for (name, w) in [("c0", p00), ("c1", c1), ("c2", c2), ("c3", c3)] {
        c.add_output(name, w);
    }
    c
}

/// Bits for the multiplier inputs `(a0, a1, b0, b1)`.
pub fn multiplier_bits(a: u8, b: u8) -> [bool; 4] {
    [a & 1 == 1, a & 2 == 2, b & 1 == 1, b & 2 == 2]
}

/// A circuit compiled onto logical neurons over a [`BitCode`].
#[derive(Debug, Clone)]
pub struct LogicalNetwork {
    circuit: Circuit,
    bits: BitCode,
    repetitions: usize,
    gate_specs: Vec<LogicalNeuronSpec>,
    copy_spec: LogicalNeuronSpec,
    input_uses: Vec<usize>,
    gate_uses: Vec<usize>,
}

/// Noisy forward-pass result.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutput {
    pub bits: Vec<bool>,
    pub status: Vec<DecodeStatus>,
}

impl NetworkOutput {
    /// Every output decoded to exactly the expected bit.
    pub fn matches(&self, expected: &[bool]) -> bool {
        self.status.iter().zip(expected).all(|(s, &e)| *s == DecodeStatus::Single(usize::from(e)))
    }
}

/// Compile: one logical neuron per gate, a copy gadget for every gate
/// output with more than one consumer, one encoder per input use.
pub fn compile(circuit: &Circuit, bits: &BitCode, repetitions: usize) -> Result<LogicalNetwork, NeuralError> {
    let gate_specs = circuit
        .gates
        .iter()
        .map(|g| bits.gate_spec(g.gate, repetitions))
        .collect::<Result<Vec<_>, _>>()?;
    let copy_spec = bits.copy_spec(repetitions)?;
    let (input_uses, gate_uses) = circuit.uses();
    Ok(LogicalNetwork {
        circuit: circuit.clone(),
        bits: bits.clone(),
        repetitions,
        gate_specs,
        copy_spec,
        input_uses,
        gate_uses,
    })
}

/// Compile a formula; inputs come from the formula unless given.
pub fn compile_formula(
    formula: &Formula,
    inputs: Option<&[String]>,
    bits: &BitCode,
    repetitions: usize,
) -> Result<LogicalNetwork, CompileError> {
    let circuit = Circuit::from_formula(formula, inputs)?;
    Ok(compile(&circuit, bits, repetitions)?)
}

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkStats {
    pub inputs: usize,
    pub outputs: usize,
    pub gates: usize,
    pub copy_gadgets: usize,
    pub input_encoders: usize,
    /// Logical nodes: input encoders, gates and copy gadgets.
    pub nodes: usize,
    /// Codeword-carrying edges between logical nodes and to output taps.
    pub edges: usize,
    pub physical_neurons: usize,
}

impl fmt::Display for NetworkStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "inputs = {}", self.inputs)?;
        writeln!(f, "outputs = {}", self.outputs)?;
        writeln!(f, "gates = {}", self.gates)?;
        writeln!(f, "copy_gadgets = {}", self.copy_gadgets)?;
        writeln!(f, "input_encoders = {}", self.input_encoders)?;
        writeln!(f, "nodes = {}", self.nodes)?;
        writeln!(f, "edges = {}", self.edges)?;
        write!(f, "physical_neurons = {}", self.physical_neurons)
    }
}

impl LogicalNetwork {
    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn bit_code(&self) -> &BitCode {
        &self.bits
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions
    }

    pub fn stats(&self) -> NetworkStats {
        let m = self.bits.num_moduli();
        let r = self.repetitions;
        let input_encoders: usize = self.input_uses.iter().sum();
        let copies: Vec<usize> = self.gate_uses.iter().copied().filter(|&u| u > 1).collect();
        let gate_neurons: usize = self.gate_specs.iter().map(LogicalNeuronSpec::physical_neurons).sum();
        let copy_neurons: usize =
            copies.iter().map(|&u| self.copy_spec.decoder_neurons() + u * self.copy_spec.encoder_neurons()).sum();
        let gate_edges: usize = self.gate_uses.iter().map(|&u| if u > 1 { 1 + u } else { u }).sum();
        NetworkStats {
            inputs: self.circuit.inputs.len(),
            outputs: self.circuit.outputs.len(),
            gates: self.circuit.gates.len(),
            copy_gadgets: copies.len(),
            input_encoders,
            nodes: input_encoders + self.circuit.gates.len() + copies.len(),
            edges: input_encoders + gate_edges,
            physical_neurons: input_encoders * m * r + gate_neurons + copy_neurons,
        }
    }

    pub fn physical_neurons(&self) -> usize {
        self.stats().physical_neurons
    }

    /// Noisy forward pass. Each output is read by a noiseless decoder whose
    /// threshold is tuned to the phase noise of a single encoder stage.
    pub fn evaluate(&self, input: &[bool], noise: &NoiseModel, rng: &mut RngStream) -> Result<NetworkOutput, NeuralError> {
        assert_eq!(input.len(), self.circuit.inputs.len(), "input arity");
        let r = self.repetitions;
        let mut input_wires: Vec<Vec<PhaseBundle>> = input
            .iter()
            .zip(&self.input_uses)
            .map(|(&bit, &uses)| (0..uses).map(|_| self.bits.encode_input(bit, r, noise, rng)).collect())
            .collect();
        let mut gate_wires: Vec<Vec<PhaseBundle>> = Vec::with_capacity(self.circuit.gates.len());
        let mut take = |w: Wire, gate_wires: &mut Vec<Vec<PhaseBundle>>| match w {
            Wire::Input(i) => input_wires[i].pop().expect("input use"),
            Wire::Gate(g) => gate_wires[g].pop().expect("gate use"),
        };
        for (node, (spec, &uses)) in self.circuit.gates.iter().zip(self.gate_specs.iter().zip(&self.gate_uses)) {
            let a = take(node.inputs[0], &mut gate_wires);
            let b = take(node.inputs[1], &mut gate_wires);
            let out = logical_neuron_forward(&[a, b], spec, noise, rng)?.output;
            let copies = if uses > 1 { copy_codeword(&out, uses, &self.copy_spec, noise, rng)? } else { vec![out] };
            gate_wires.push(copies);
        }
        let mut bits = Vec::new();
        let mut status = Vec::new();
        for &(_, w) in &self.circuit.outputs {
            let bundle = take(w, &mut gate_wires);
            let s = readout_decode(&bundle, &self.copy_spec, noise)?.status();
            bits.push(s == DecodeStatus::Single(1));
            status.push(s);
        }
        Ok(NetworkOutput { bits, status })
    }
}
