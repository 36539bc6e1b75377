//! Fully connected feed-forward network: tanh hidden layers, linear output,
//! trained by plain mini-batch gradient descent on squared error.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{TargetScaler, N_FEATURES};
use crate::math::{sqrt, tanh};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnSettings {
    pub batch: usize,
    pub step: f64,
    /// Multiplicative step decay applied after every epoch.
    pub decay: f64,
    pub epochs: usize,
}

impl Default for AnnSettings {
    fn default() -> Self {
        AnnSettings { batch: 16, step: 1e-2, decay: 0.99, epochs: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnModel {
    pub layers: Vec<Layer>,
    pub target: TargetScaler,
}

impl AnnModel {
    /// Activations of every layer; the last entry is the single output.
    fn activations(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(z.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.forward(&acts[k], &mut out);
            if k < last {
                for v in &mut out {
                    *v = tanh(*v);
                }
            }
            acts.push(out);
        }
        acts
    }

    pub fn output(&self, z: &[f64; N_FEATURES]) -> f64 {
        self.activations(z).last().map_or(0.0, |o| o[0])
    }

    pub fn predict(&self, z: &[f64; N_FEATURES]) -> f64 {
        self.target.inverse(self.output(z))
    }
}

fn init(hidden: &[usize], key: StreamKey) -> Vec<Layer> {
    let mut rng = key.rng();
    let mut sizes = vec![N_FEATURES];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    sizes
        .windows(2)
        .map(|w| {
            let (inputs, outputs) = (w[0], w[1]);
            let scale = 1.0 / sqrt(inputs as f64);
            let weights = (0..inputs * outputs)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    g * scale
                })
                .collect();
            Layer { inputs, outputs, weights, bias: vec![0.0; outputs] }
        })
        .collect()
}

type Grads = Vec<(Vec<f64>, Vec<f64>)>;

fn zero_grads(model: &AnnModel) -> Grads {
    model.layers.iter().map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()])).collect()
}

/// Add the gradient of `sum_i 1/2 (out(z_i) - t_i)^2` over `batch` to `grads`.
fn accumulate_gradient(model: &AnnModel, z: &[[f64; N_FEATURES]], t: &[f64], batch: &[usize], grads: &mut Grads) {
    for &i in batch {
        let acts = model.activations(&z[i]);
        let mut delta = vec![acts[acts.len() - 1][0] - t[i]];
        for k in (0..model.layers.len()).rev() {
            let layer = &model.layers[k];
            let input = &acts[k];
            let (gw, gb) = &mut grads[k];
            for o in 0..layer.outputs {
                gb[o] += delta[o];
                for (g, x) in gw[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(input) {
                    *g += delta[o] * x;
                }
            }
            if k > 0 {
                // input[j] is a tanh activation here, so tanh' = 1 - input^2
                delta = (0..layer.inputs)
                    .map(|j| {
                        let back: f64 =
                            (0..layer.outputs).map(|o| layer.weights[o * layer.inputs + j] * delta[o]).sum();
                        back * (1.0 - input[j] * input[j])
                    })
                    .collect();
            }
        }
    }
}

pub(super) fn fit(
    z: &[[f64; N_FEATURES]],
    y: &[f64],
    hidden: &[usize],
    settings: &AnnSettings,
    seed: u64,
) -> AnnModel {
    let key = StreamKey::new(seed).with_str("ann");
    let target = TargetScaler::fit(y);
    let t: Vec<f64> = y.iter().map(|v| target.forward(*v)).collect();
    let mut model = AnnModel { layers: init(hidden, key.with_str("init")), target };
    let mut shuffle = key.with_str("shuffle").rng();
    let mut order: Vec<usize> = (0..z.len()).collect();
    let mut step = settings.step;
    let mut grads = zero_grads(&model);

    for _ in 0..settings.epochs {
        order.shuffle(&mut shuffle);
        for batch in order.chunks(settings.batch.max(1)) {
            for (gw, gb) in &mut grads {
                gw.iter_mut().for_each(|v| *v = 0.0);
                gb.iter_mut().for_each(|v| *v = 0.0);
            }
            accumulate_gradient(&model, z, &t, batch, &mut grads);
            let lr = step / batch.len() as f64;
            for (layer, (gw, gb)) in model.layers.iter_mut().zip(&grads) {
                for (w, g) in layer.weights.iter_mut().zip(gw) {
                    *w -= lr * g;
                }
                for (b, g) in layer.bias.iter_mut().zip(gb) {
                    *b -= lr * g;
                }
            }
        }
        step *= settings.decay;
    }
    model
}
