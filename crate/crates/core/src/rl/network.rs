//! Two-layer dense Q-network (`dense -> ReLU -> dense`) with an analytic
//! backward pass for the squared TD loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    inputs: usize,
    hidden: usize,
    outputs: usize,
    /// `w1 (hidden x inputs) | b1 (hidden) | w2 (outputs x hidden) | b2 (outputs)`, row-major.
    params: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Gradient {
    pub loss: f64,
    pub mean_abs_q: f64,
    pub grads: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
struct Trace {
    pre: Vec<f64>,
    hidden: Vec<f64>,
}

impl QNetwork {
    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        let len = hidden * inputs + hidden + outputs * hidden + outputs;
        QNetwork {
            inputs,
            hidden,
            outputs,
            params: vec![0.0; len],
        }
    }

    /// He-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(inputs: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        let mut net = QNetwork::zeros(inputs, hidden, outputs);
        let lim1 = (6.0 / inputs as f64).sqrt();
        let lim2 = (6.0 / hidden as f64).sqrt();
        let (w1, w2) = (net.w1_range(), net.w2_range());
        for p in &mut net.params[w1] {
            *p = rng.random_range(-lim1..lim1);
        }
        for p in &mut net.params[w2] {
            *p = rng.random_range(-lim2..lim2) * 0.1;
        }
        net
    }

    pub fn from_parts(
        inputs: usize,
        hidden: usize,
        outputs: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        let net = QNetwork::zeros(inputs, hidden, outputs);
        if params.len() != net.params.len() {
            return Err(Error::WeightMismatch(format!(
                "expected {} parameters for {inputs}x{hidden}x{outputs}, got {}",
                net.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::WeightMismatch("non-finite weight".into()));
        }
        Ok(QNetwork { params, ..net })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn w1_range(&self) -> std::ops::Range<usize> {
        0..self.hidden * self.inputs
    }

    pub fn b1_range(&self) -> std::ops::Range<usize> {
        let s = self.hidden * self.inputs;
        s..s + self.hidden
    }

    pub fn w2_range(&self) -> std::ops::Range<usize> {
        let s = self.b1_range().end;
        s..s + self.outputs * self.hidden
    }

    pub fn b2_range(&self) -> std::ops::Range<usize> {
        let s = self.w2_range().end;
        s..s + self.outputs
    }

    fn trace(&self, x: &[f64]) -> (Trace, Vec<f64>) {
        debug_assert_eq!(x.len(), self.inputs);
        let w1 = &self.params[self.w1_range()];
        let b1 = &self.params[self.b1_range()];
        let w2 = &self.params[self.w2_range()];
        let b2 = &self.params[self.b2_range()];
        let pre: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &w1[j * self.inputs..(j + 1) * self.inputs];
                b1[j] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()
            })
            .collect();
        let hidden: Vec<f64> = pre.iter().map(|z| z.max(0.0)).collect();
        let out = (0..self.outputs)
            .map(|k| {
                let row = &w2[k * self.hidden..(k + 1) * self.hidden];
                b2[k] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect();
        (Trace { pre, hidden }, out)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).1
    }

    /// Accumulate `d_out * dQ(x, action)/dθ` into `grads`.
    fn backward_into(&self, x: &[f64], trace: &Trace, action: usize, d_out: f64, grads: &mut [f64]) {
        let w2 = &self.params[self.w2_range()];
        let (w1r, b1r, w2r, b2r) = (
            self.w1_range(),
            self.b1_range(),
            self.w2_range(),
            self.b2_range(),
        );
        grads[b2r.start + action] += d_out;
        for j in 0..self.hidden {
            grads[w2r.start + action * self.hidden + j] += d_out * trace.hidden[j];
            // ReLU derivative is taken as 0 at a pre-activation of exactly 0.
            if trace.pre[j] > 0.0 {
                let d_pre = d_out * w2[action * self.hidden + j];
                grads[b1r.start + j] += d_pre;
                let row = w1r.start + j * self.inputs;
                for (i, xi) in x.iter().enumerate() {
                    grads[row + i] += d_pre * xi;
                }
            }
        }
    }

    /// Gradient of `mean_i (Q(x_i, a_i) - y_i)^2` with the targets `y_i` held fixed.
    /// Also returns the mean loss and the mean `|Q(x_i, .)|`.
    pub fn squared_error_gradient(&self, samples: &[(&[f64], usize, f64)]) -> Gradient {
        let mut grads = vec![0.0; self.params.len()];
        let n = samples.len() as f64;
        let mut loss = 0.0;
        let mut abs_q = 0.0;
        for &(x, a, y) in samples {
            let (trace, q) = self.trace(x);
            abs_q += q.iter().map(|v| v.abs()).sum::<f64>() / (q.len() as f64 * n);
            let delta = q[a] - y;
            loss += delta * delta / n;
            self.backward_into(x, &trace, a, 2.0 * delta / n, &mut grads);
        }
        Gradient {
            loss,
            mean_abs_q: abs_q,
            grads,
        }
    }

    /// Order-sensitive digest of the weights, used to compare runs.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}
