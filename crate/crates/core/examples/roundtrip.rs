//! Grid-code roundtrip over moduli 3, 5, 7: exact when noiseless, then the
//! neural decoder against maximum-likelihood decoding as noise grows.

use gridft::gridcode::{encode, mle_decode_oracle, Codeword, EncoderFn, GridCode};
use gridft::neural::{neural_decode, neural_encode_with, LogicalNeuronSpec, OneHotState};
use gridft::noise::{NoiseModel, RngStream, StreamId};

fn main() {
    let code = GridCode::full_range(vec![3, 5, 7]).unwrap();
    let k = code.candidates().len();
    let exact = code
        .candidates()
        .iter()
        .all(|&x| mle_decode_oracle(&encode(x, &EncoderFn::Identity, &code).unwrap(), &code).unwrap() == x);
    println!("{k} candidates, noiseless MLE roundtrip exact: {exact}");
    println!("phases of 52: {:?}", encode(52, &EncoderFn::Identity, &code).unwrap().phases());

    let decoder = LogicalNeuronSpec::decoder(code.clone(), 1).unwrap();
    let trials = 200u64;
    println!("sigma   neural   MLE");
    for sigma in [0.0, 0.02, 0.04, 0.06, 0.08, 0.1] {
        let noise = NoiseModel::new(sigma, 0.0).unwrap();
        let (mut neural_err, mut mle_err) = (0u64, 0u64);
        for (i, &x) in code.candidates().iter().enumerate() {
            for t in 0..trials {
                let mut rng = RngStream::new(11, StreamId::new(t, i as u64));
                let bundle = neural_encode_with(&OneHotState::clean(i, k, 1), &EncoderFn::Identity, &code, &noise, &mut rng)
                    .unwrap();
                let noisy: Codeword = bundle.mean_codeword();
                mle_err += u64::from(mle_decode_oracle(&noisy, &code).unwrap() != x);
                neural_err += u64::from(!neural_decode(&bundle, &decoder, &noise, &mut rng).unwrap().is_exactly(i));
            }
        }
        let n = (trials * k as u64) as f64;
        println!("{sigma:<6}  {:.4}   {:.4}", neural_err as f64 / n, mle_err as f64 / n);
    }
}
