//! Repetition inside the grid code. The mean of R noisy replicas of a phase
//! shrinks its error like R^-1/2; a physical averaging neuron adds its own
//! sigma on top. R = 3000 keeps a NAND reliable where R = 1 fails.

use gridft::experiments::{estimate_logical_error, stats::linear_fit, Target};
use gridft::gridcode::{centered, encode, EncoderFn, GridCode};
use gridft::neural::{repetition_average, repetition_expand};
use gridft::noise::{NoiseModel, RngStream, StreamId};

fn main() {
    let code = GridCode::full_range(vec![3, 5, 7, 11]).unwrap();
    let clean = encode(100, &EncoderFn::Identity, &code).unwrap();
    let noise = NoiseModel::new(0.05, 0.0).unwrap();
    let rms = |a: &[f64], sum2: &mut f64| {
        for (x, y) in a.iter().zip(clean.phases()) {
            *sum2 += centered(x - y).powi(2);
        }
    };
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for r in [4usize, 16, 64, 256, 1024] {
        let (mut ideal, mut neural) = (0.0, 0.0);
        let trials = 200;
        for t in 0..trials {
            let mut rng = RngStream::new(2, StreamId::new(t, r as u64));
            let bundle = repetition_expand(&clean, r, &noise, &mut rng).unwrap();
            rms(bundle.mean_codeword().phases(), &mut ideal);
            rms(repetition_average(&bundle, &noise, &mut rng).phases(), &mut neural);
        }
        let n = (trials as usize * clean.len()) as f64;
        let (ideal, neural) = ((ideal / n).sqrt(), (neural / n).sqrt());
        println!("R = {r:>4}: replica mean error {ideal:.5}, averaging neuron output error {neural:.5}");
        xs.push((r as f64).ln());
        ys.push(ideal.ln());
    }
    println!("log-log slope {:.3}", linear_fit(&xs, &ys).slope);

    let noise = NoiseModel::new(0.5, 0.5).unwrap();
    for r in [1, 3000] {
        let e = estimate_logical_error(Target::Nand, &noise, 10, r, 200, 1, 0.95);
        println!("NAND at sigma 0.5, p 0.5, M 10, R = {r:>4}: error {:.3} with {} neurons", e.error, e.neurons);
    }
}
