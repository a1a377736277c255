use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

pub const N_FEATURES: usize = 5;
pub const N_OUT: usize = 3;
pub const HIDDEN: usize = 5;

const W1: usize = 0;
const B1: usize = W1 + HIDDEN * N_FEATURES;
const W2: usize = B1 + HIDDEN;
const B2: usize = W2 + HIDDEN * HIDDEN;
const W3: usize = B2 + HIDDEN;
const B3: usize = W3 + N_OUT * HIDDEN;

/// Scalar count of the closure network (two 5-wide swish layers, linear 3-wide head).
pub const MLP_PARAMS: usize = B3 + N_OUT;

pub const FORMAT_VERSION: u32 = 1;

/// Total learnable scalars: the network plus one latent feature per node.
pub fn param_count(n_nodes: usize) -> usize {
    MLP_PARAMS + n_nodes
}

/// Flat parameter vector.
///
/// Layout: L1 weights (5x5, row-major, row = output unit), L1 bias, L2 weights,
/// L2 bias, L3 weights (3x5), L3 bias, then the latent feature of each node.
/// Gradients use the same type and layout.
#[derive(Debug, Clone, PartialEq)]
pub struct EbmParams {
    values: Vec<f64>,
}

impl EbmParams {
    pub fn zeros(n_nodes: usize) -> Self {
        Self {
            values: vec![0.0; param_count(n_nodes)],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.len() < MLP_PARAMS {
            return Err(Error::Contract(format!(
                "parameter vector has {} values, need at least {MLP_PARAMS}",
                values.len()
            )));
        }
        Ok(Self { values })
    }

    /// Glorot-uniform weights, zero biases, zero latent features.
    pub fn init<R: Rng + ?Sized>(n_nodes: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(n_nodes);
        for (range, fan_in, fan_out) in [
            (W1..B1, N_FEATURES, HIDDEN),
            (W2..B2, HIDDEN, HIDDEN),
            (W3..B3, HIDDEN, N_OUT),
        ] {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut p.values[range] {
                *w = rng.random_range(-limit..limit);
            }
        }
        p
    }

    pub fn n_nodes(&self) -> usize {
        self.values.len() - MLP_PARAMS
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn w1(&self) -> &[f64] {
        &self.values[W1..B1]
    }
    pub fn b1(&self) -> &[f64] {
        &self.values[B1..W2]
    }
    pub fn w2(&self) -> &[f64] {
        &self.values[W2..B2]
    }
    pub fn b2(&self) -> &[f64] {
        &self.values[B2..W3]
    }
    pub fn w3(&self) -> &[f64] {
        &self.values[W3..B3]
    }
    pub fn b3(&self) -> &[f64] {
        &self.values[B3..MLP_PARAMS]
    }
    pub fn latent(&self) -> &[f64] {
        &self.values[MLP_PARAMS..]
    }

    pub fn w1_mut(&mut self) -> &mut [f64] {
        &mut self.values[W1..B1]
    }
    pub fn b1_mut(&mut self) -> &mut [f64] {
        &mut self.values[B1..W2]
    }
    pub fn w2_mut(&mut self) -> &mut [f64] {
        &mut self.values[W2..B2]
    }
    pub fn b2_mut(&mut self) -> &mut [f64] {
        &mut self.values[B2..W3]
    }
    pub fn w3_mut(&mut self) -> &mut [f64] {
        &mut self.values[W3..B3]
    }
    pub fn b3_mut(&mut self) -> &mut [f64] {
        &mut self.values[B3..MLP_PARAMS]
    }
    pub fn latent_mut(&mut self) -> &mut [f64] {
        &mut self.values[MLP_PARAMS..]
    }

    /// `self += scale * other`, elementwise.
    pub fn axpy(&mut self, scale: f64, other: &EbmParams) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    /// Header line then one value per line, in layout order. Values use
    /// Rust's shortest round-trip formatting so reloading is bit-exact.
    pub fn to_text(&self) -> String {
        let mut out = format!("ebm-params v{FORMAT_VERSION} n_nodes={}\n", self.n_nodes());
        for v in &self.values {
            let _ = writeln!(out, "{v:?}");
        }
        out
    }

    pub fn from_text(text: &str, source: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse(source, 1, "empty parameter file"))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("ebm-params") {
            return Err(Error::parse(source, 1, "missing 'ebm-params' header"));
        }
        match parts.next() {
            Some(v) if v == format!("v{FORMAT_VERSION}") => {}
            other => return Err(Error::parse(source, 1, format!("unsupported format version {other:?}"))),
        }
        let n_nodes: usize = parts
            .next()
            .and_then(|s| s.strip_prefix("n_nodes="))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(source, 1, "missing n_nodes=<count>"))?;
        let mut values = Vec::with_capacity(param_count(n_nodes));
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| Error::parse(source, i + 1, format!("not a number: {line:?}")))?;
            values.push(v);
        }
        if values.len() != param_count(n_nodes) {
            return Err(Error::parse(
                source,
                text.lines().count(),
                format!("expected {} values, found {}", param_count(n_nodes), values.len()),
            ));
        }
        Ok(Self { values })
    }
}
