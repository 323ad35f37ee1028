#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sliceprofile::tensorcore::{Tape, Tensor, Var};
use sliceprofile::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `[-1, 1)`.
pub fn random_tensor(shape: &[usize], r: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, with a floor so two zero vectors compare equal.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-12)
}

/// Relative error between the tape gradient of `Σ wᵢ·out_i` (fixed random `w`)
/// and central differences with `h = 1e-5`, over every input element.
pub fn fd_relative_error(inputs: &[Tensor], build: &dyn Fn(&mut Tape, &[Var]) -> Result<Var>, seed: u64) -> f64 {
    let h = 1e-5;
    let eval = |values: &[Tensor], weights: Option<&Tensor>| -> (f64, Tensor, Vec<Tensor>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = build(&mut tape, &vars).unwrap();
        let w = match weights {
            Some(w) => w.clone(),
            None => random_tensor(&[tape.value(out).len()], &mut rng(seed ^ 0x5eed)),
        };
        let loss = tape.dot_const(out, w.clone()).unwrap();
        let grads = tape.backward(loss).unwrap();
        let g = vars.iter().map(|v| grads.get(*v).unwrap().clone()).collect();
        (tape.value(loss).item(), w, g)
    };
    let (_, w, analytic) = eval(inputs, None);
    let mut numeric = Vec::new();
    for (i, t) in inputs.iter().enumerate() {
        for j in 0..t.len() {
            let mut shifted = inputs.to_vec();
            shifted[i].data_mut()[j] = t.data()[j] + h;
            let plus = eval(&shifted, Some(&w)).0;
            shifted[i].data_mut()[j] = t.data()[j] - h;
            let minus = eval(&shifted, Some(&w)).0;
            numeric.push((plus - minus) / (2.0 * h));
        }
    }
    let analytic: Vec<f64> = analytic.iter().flat_map(|g| g.data().to_vec()).collect();
    relative_error(&analytic, &numeric)
}
