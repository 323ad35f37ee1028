use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Floor applied to norms and to the spectral estimate.
pub const SPECTRAL_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SpectralNorm {
    /// `weight / sigma`, same shape as the input weight.
    pub weight: Tensor,
    /// Updated left singular vector estimate, length `out`.
    pub u: Tensor,
    /// Right singular vector estimate, length `in * k`.
    pub v: Tensor,
    pub sigma: f64,
}

fn normalized(mut x: Vec<f64>) -> Vec<f64> {
    let n = x.iter().map(|a| a * a).sum::<f64>().sqrt().max(SPECTRAL_EPS);
    x.iter_mut().for_each(|a| *a /= n);
    x
}

/// Power-iteration spectral normalization of a weight viewed as an
/// `[out, in·k]` matrix.
///
/// `u` and `v` are treated as constants; the caller is responsible for
/// persisting the returned `u` between calls.
pub fn spectral_normalize(weight: &Tensor, u: &Tensor, power_iters: usize) -> Result<SpectralNorm> {
    if power_iters == 0 {
        return Err(Error::Argument(
            "spectral_normalize needs at least one power iteration".into(),
        ));
    }
    let rows = weight.shape()[0];
    let cols = weight.len() / rows;
    if u.len() != rows {
        return Err(Error::dim(
            "spectral_normalize",
            format!("u has length {} but weight has {rows} rows", u.len()),
        ));
    }
    if u.sq_norm() <= 0.0 {
        return Err(Error::Argument("spectral_normalize needs a nonzero u".into()));
    }
    let w = weight.data();
    let mut u = u.data().to_vec();
    let mut v = vec![0.0; cols];
    for _ in 0..power_iters {
        let mut wtu = vec![0.0; cols];
        for (r, &ur) in u.iter().enumerate() {
            for (acc, &wrc) in wtu.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                *acc += wrc * ur;
            }
        }
        v = normalized(wtu);
        let wv: Vec<f64> = (0..rows)
            .map(|r| w[r * cols..(r + 1) * cols].iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect();
        u = normalized(wv);
    }
    let sigma: f64 = (0..rows)
        .map(|r| {
            u[r] * w[r * cols..(r + 1) * cols]
                .iter()
                .zip(&v)
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .sum();
    let sigma = sigma.max(SPECTRAL_EPS);
    Ok(SpectralNorm {
        weight: weight.map(|x| x / sigma),
        u: Tensor::from_vec(u),
        v: Tensor::from_vec(v),
        sigma,
    })
}
