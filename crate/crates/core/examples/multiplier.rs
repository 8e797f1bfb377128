//! The two-bit multiplier compiled onto logical neurons: network size,
//! noiseless products, and error under noise as the moduli count grows.

use gridft::circuits::{build_multiplier, compile, multiplier_bits};
use gridft::experiments::{estimate_logical_error, Target};
use gridft::neural::BitCode;
use gridft::noise::{NoiseModel, RngStream, StreamId};

fn main() {
    let circuit = build_multiplier();
    let net = compile(&circuit, &BitCode::with_moduli_count(5).unwrap(), 1).unwrap();
    println!("{}", net.stats());

    let quiet = NoiseModel::noiseless();
    let mut rng = RngStream::new(0, StreamId::new(0, 0));
    for a in 0..4u8 {
        let row: Vec<String> = (0..4u8)
            .map(|b| {
                let out = net.evaluate(&multiplier_bits(a, b), &quiet, &mut rng).unwrap();
                let product: u8 = out.bits.iter().enumerate().map(|(i, &bit)| u8::from(bit) << i).sum();
                format!("{a}x{b}={product:<2}")
            })
            .collect();
        println!("{}", row.join("  "));
    }

    let noise = NoiseModel::new(0.1, 0.0).unwrap();
    println!("sigma = 0.1, worst case over the 16 inputs:");
    for m in [5, 10, 20, 30] {
        let e = estimate_logical_error(Target::Multiplier, &noise, m, 1, 300, 1, 0.95);
        println!("  M = {m:>2}: {:>5} neurons, error {:.3} [{:.3}, {:.3}]", e.neurons, e.error, e.ci_lo, e.ci_hi);
    }
}
