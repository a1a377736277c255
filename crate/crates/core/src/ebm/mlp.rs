//! The closure network: feature difference in, per-subpopulation pressure response out.

use super::params::{EbmParams, HIDDEN, N_FEATURES, N_OUT};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `z * sigmoid(z)`.
pub fn swish(z: f64) -> f64 {
    z * sigmoid(z)
}

pub fn swish_derivative(z: f64) -> f64 {
    let s = sigmoid(z);
    s + z * s * (1.0 - s)
}

fn affine<const IN: usize, const OUT: usize>(w: &[f64], b: &[f64], x: &[f64; IN]) -> [f64; OUT] {
    let mut out = [0.0; OUT];
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * IN..(r + 1) * IN];
        *o = b[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
    out
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone, Copy)]
pub struct MlpTrace {
    pub input: [f64; N_FEATURES],
    pub z1: [f64; HIDDEN],
    pub h1: [f64; HIDDEN],
    pub z2: [f64; HIDDEN],
    pub h2: [f64; HIDDEN],
    pub out: [f64; N_OUT],
}

pub fn phi(dy: &[f64; N_FEATURES], params: &EbmParams) -> [f64; N_OUT] {
    phi_traced(dy, params).out
}

pub fn phi_traced(dy: &[f64; N_FEATURES], params: &EbmParams) -> MlpTrace {
    let z1: [f64; HIDDEN] = affine(params.w1(), params.b1(), dy);
    let h1 = z1.map(swish);
    let z2: [f64; HIDDEN] = affine(params.w2(), params.b2(), &h1);
    let h2 = z2.map(swish);
    let out: [f64; N_OUT] = affine(params.w3(), params.b3(), &h2);
    MlpTrace {
        input: *dy,
        z1,
        h1,
        z2,
        h2,
        out,
    }
}

/// Vector-Jacobian product: accumulates d(out . g_out)/d(weights) into `grad`
/// and returns d(out . g_out)/d(input).
pub fn phi_backward(
    trace: &MlpTrace,
    g_out: &[f64; N_OUT],
    params: &EbmParams,
    grad: &mut EbmParams,
) -> [f64; N_FEATURES] {
    let w3 = params.w3();
    let mut g_h2 = [0.0; HIDDEN];
    {
        let gw3 = grad.w3_mut();
        for r in 0..N_OUT {
            for c in 0..HIDDEN {
                gw3[r * HIDDEN + c] += g_out[r] * trace.h2[c];
                g_h2[c] += g_out[r] * w3[r * HIDDEN + c];
            }
        }
    }
    for (gb, g) in grad.b3_mut().iter_mut().zip(g_out) {
        *gb += g;
    }

    let g_z2: [f64; HIDDEN] = std::array::from_fn(|k| g_h2[k] * swish_derivative(trace.z2[k]));
    let w2 = params.w2();
    let mut g_h1 = [0.0; HIDDEN];
    {
        let gw2 = grad.w2_mut();
        for r in 0..HIDDEN {
            for c in 0..HIDDEN {
                gw2[r * HIDDEN + c] += g_z2[r] * trace.h1[c];
                g_h1[c] += g_z2[r] * w2[r * HIDDEN + c];
            }
        }
    }
    for (gb, g) in grad.b2_mut().iter_mut().zip(&g_z2) {
        *gb += g;
    }

    let g_z1: [f64; HIDDEN] = std::array::from_fn(|k| g_h1[k] * swish_derivative(trace.z1[k]));
    let w1 = params.w1();
    let mut g_in = [0.0; N_FEATURES];
    {
        let gw1 = grad.w1_mut();
        for r in 0..HIDDEN {
            for c in 0..N_FEATURES {
                gw1[r * N_FEATURES + c] += g_z1[r] * trace.input[c];
                g_in[c] += g_z1[r] * w1[r * N_FEATURES + c];
            }
        }
    }
    for (gb, g) in grad.b1_mut().iter_mut().zip(&g_z1) {
        *gb += g;
    }
    g_in
}
