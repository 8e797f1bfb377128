//! Digital baselines: multiplexed NAND below and above the per-gate error
//! threshold, the concatenated ReLU, and repetition against analog noise.

use gridft::digital_ft::{
    analog_repetition_residual, ep_nand_concatenate, ep_threshold, vn_concatenate_relu, Formula, RepetitionScheme,
};
use gridft::experiments::stats::wilson_interval;
use gridft::noise::{RngStream, StreamId};

fn main() {
    let trials = 20_000;
    println!("threshold (3 - sqrt 7)/4 = {:.6}", ep_threshold());

    let nand = Formula::parse("(NAND a b)").unwrap();
    for eps in [0.04, 0.2] {
        println!("gate error {eps}:");
        for level in 0..=3 {
            let net = ep_nand_concatenate(&nand, level, 7).unwrap();
            let errors = net.worst_case_errors(|b| !(b[0] && b[1]), eps, trials, 1);
            let (lo, hi) = wilson_interval(errors, trials, 0.99);
            println!(
                "  level {level}: bundle {:>2}, {:>3} NANDs, error {:.4} [{lo:.4}, {hi:.4}]",
                net.bundle_size(),
                net.nand_count(),
                errors as f64 / trials as f64
            );
        }
    }

    let mut rng = RngStream::new(3, StreamId::new(0, 0));
    println!("concatenated ReLU at p = 0.05, input 1.0:");
    for level in 0..=3 {
        let relu = vn_concatenate_relu(level);
        let wrong = (0..trials).filter(|_| (relu.eval(1.0, 0.05, &mut rng) - 1.0).abs() > 1e-9).count();
        println!("  level {level}: {:>3} units, error {:.4}", relu.physical_units(), wrong as f64 / trials as f64);
    }

    println!("residual std of N replicas with sigma 1:");
    for n in [1, 4, 16, 64, 256] {
        let mean = analog_repetition_residual(n, 1.0, RepetitionScheme::Mean, 4000, 5);
        let median = analog_repetition_residual(n, 1.0, RepetitionScheme::Median, 4000, 5);
        println!("  N = {n:>3}: mean {mean:.4}, median {median:.4}, 1/sqrt N {:.4}", 1.0 / (n as f64).sqrt());
    }
}
