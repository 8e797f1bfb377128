//! Logical gates from encoder functions: truth tables of AND, OR, XOR and
//! NAND logical neurons, noiseless and under noise.

use gridft::neural::{logical_neuron_forward, readout_decode, BitCode, DecodeStatus, Gate};
use gridft::noise::{NoiseModel, RngStream, StreamId};

fn main() {
    let bits = BitCode::with_moduli_count(10).unwrap();
    println!("moduli {:?}, bit level c = {}", bits.moduli(), bits.level());
    let readout = bits.copy_spec(1).unwrap();
    for (noise, trials) in [(NoiseModel::noiseless(), 1u64), (NoiseModel::new(0.08, 0.0).unwrap(), 2000)] {
        println!("sigma = {}, p = {}:", noise.sigma(), noise.p_fail());
        for gate in Gate::ALL {
            let spec = bits.gate_spec(gate, 1).unwrap();
            let mut row = Vec::new();
            for (i, (a, b)) in [(false, false), (false, true), (true, false), (true, true)].into_iter().enumerate() {
                let mut wrong = 0;
                let mut out = false;
                for t in 0..trials {
                    let mut rng = RngStream::new(5, StreamId::new(t, i as u64));
                    let inputs = [bits.encode_input(a, 1, &noise, &mut rng), bits.encode_input(b, 1, &noise, &mut rng)];
                    let y = logical_neuron_forward(&inputs, &spec, &noise, &mut rng).unwrap().output;
                    let status = readout_decode(&y, &readout, &noise).unwrap().status();
                    out = status == DecodeStatus::Single(1);
                    wrong += u64::from(status != DecodeStatus::Single(usize::from(gate.eval(a, b))));
                }
                row.push(if trials == 1 { format!("{}", u8::from(out)) } else { format!("{:.3}", wrong as f64 / trials as f64) });
            }
            println!("  {:<4} 00 01 10 11 -> {}", gate.name(), row.join(" "));
        }
    }
}
