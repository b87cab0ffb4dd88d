//! Diagonal Gaussian policies with analytic score functions.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;

/// Mean-network architecture. The MLP has one tanh hidden layer; the linear
/// map has no bias (environments append a constant feature when needed).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Arch {
    Linear { input: usize, output: usize },
    Mlp { input: usize, hidden: usize, output: usize },
}

impl Arch {
    pub fn input(&self) -> usize {
        match *self {
            Arch::Linear { input, .. } | Arch::Mlp { input, .. } => input,
        }
    }

    pub fn output(&self) -> usize {
        match *self {
            Arch::Linear { output, .. } | Arch::Mlp { output, .. } => output,
        }
    }

    /// Length of the flat mean-network parameter vector.
    pub fn theta_len(&self) -> usize {
        match *self {
            Arch::Linear { input, output } => input * output,
            Arch::Mlp {
                input,
                hidden,
                output,
            } => hidden * input + hidden + output * hidden + output,
        }
    }
}

/// Layout of `theta`:
/// linear `W[out][in]`; MLP `W1[hidden][in] ++ b1 ++ W2[out][hidden] ++ b2`,
/// all row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub arch: Arch,
    pub theta: Vec<f64>,
    pub log_std: Vec<f64>,
}

/// Hidden activations kept for the backward pass.
struct Forward {
    hidden: Vec<f64>,
    mean: Vec<f64>,
}

impl PolicyParams {
    /// He-uniform weights, zero biases; a linear map uses a `1/sqrt(fan_in)`
    /// range so the initial steering stays moderate.
    pub fn init(arch: Arch, log_std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |n: usize, limit: f64| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-limit..=limit)).collect()
        };
        let theta = match arch {
            Arch::Linear { input, output } => uniform(input * output, 1.0 / (input as f64).sqrt()),
            Arch::Mlp {
                input,
                hidden,
                output,
            } => {
                let mut t = uniform(hidden * input, (6.0 / input as f64).sqrt());
                t.extend(std::iter::repeat_n(0.0, hidden));
                t.extend(uniform(output * hidden, (6.0 / hidden as f64).sqrt()));
                t.extend(std::iter::repeat_n(0.0, output));
                t
            }
        };
        PolicyParams {
            arch,
            theta,
            log_std: vec![log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); arch.output()],
        }
    }

    pub fn zeros(arch: Arch, log_std: f64) -> Self {
        PolicyParams {
            arch,
            theta: vec![0.0; arch.theta_len()],
            log_std: vec![log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); arch.output()],
        }
    }

    /// Validates lengths and finiteness.
    pub fn new(arch: Arch, theta: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if theta.len() != arch.theta_len() || log_std.len() != arch.output() {
            return Err(Error::DimensionMismatch(format!(
                "arch needs {} weights and {} log-stds, got {} and {}",
                arch.theta_len(),
                arch.output(),
                theta.len(),
                log_std.len()
            )));
        }
        let p = PolicyParams {
            arch,
            theta,
            log_std: log_std
                .into_iter()
                .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
                .collect(),
        };
        if !p.is_finite() {
            return Err(Error::NonFiniteState);
        }
        Ok(p)
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input()
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output()
    }

    pub fn num_params(&self) -> usize {
        self.theta.len() + self.log_std.len()
    }

    /// `theta ++ log_std`, the layout of [`PolicyParams::grad_log_prob`].
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.theta.clone();
        v.extend_from_slice(&self.log_std);
        v
    }

    /// Inverse of [`PolicyParams::flat`]; log-stds are clamped.
    pub fn set_flat(&mut self, flat: &[f64]) {
        let n = self.theta.len();
        self.theta.copy_from_slice(&flat[..n]);
        for (dst, &v) in self.log_std.iter_mut().zip(&flat[n..]) {
            *dst = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(&self.log_std).all(|v| v.is_finite())
    }

    fn check_input(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "observation has {} entries, policy expects {}",
                obs.len(),
                self.input_dim()
            )));
        }
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState);
        }
        Ok(())
    }

    fn forward(&self, obs: &[f64]) -> Forward {
        match self.arch {
            Arch::Linear { input, output } => Forward {
                hidden: Vec::new(),
                mean: (0..output)
                    .map(|o| dot(&self.theta[o * input..(o + 1) * input], obs))
                    .collect(),
            },
            Arch::Mlp {
                input,
                hidden,
                output,
            } => {
                let (w1, rest) = self.theta.split_at(hidden * input);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(output * hidden);
                let h: Vec<f64> = (0..hidden)
                    .map(|j| (dot(&w1[j * input..(j + 1) * input], obs) + b1[j]).tanh())
                    .collect();
                let mean = (0..output)
                    .map(|o| dot(&w2[o * hidden..(o + 1) * hidden], &h) + b2[o])
                    .collect();
                Forward { hidden: h, mean }
            }
        }
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.check_input(obs)?;
        Ok(self.forward(obs).mean)
    }

    /// Samples `mean + exp(log_std) * noise` and returns it with its exact
    /// log density.
    pub fn act(&self, obs: &[f64], noise: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_input(obs)?;
        if noise.len() != self.output_dim() {
            return Err(Error::DimensionMismatch(format!(
                "noise has {} entries, policy emits {}",
                noise.len(),
                self.output_dim()
            )));
        }
        let mean = self.forward(obs).mean;
        let action: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .zip(noise)
            .map(|((m, ls), e)| m + ls.exp() * e)
            .collect();
        let logp = gaussian_log_density(&mean, &self.log_std, &action);
        Ok((action, logp))
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        self.check_input(obs)?;
        Ok(gaussian_log_density(&self.forward(obs).mean, &self.log_std, action))
    }

    /// `∂ log π(action | obs) / ∂ (theta ++ log_std)`.
    pub fn grad_log_prob(&self, obs: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        self.check_input(obs)?;
        let fwd = self.forward(obs);
        let out = self.output_dim();
        let mut dmean = vec![0.0; out];
        let mut grad = vec![0.0; self.num_params()];
        let n = self.theta.len();
        for o in 0..out {
            let var = (2.0 * self.log_std[o]).exp();
            let diff = action[o] - fwd.mean[o];
            dmean[o] = diff / var;
            grad[n + o] = diff * diff / var - 1.0;
        }
        match self.arch {
            Arch::Linear { input, output } => {
                for o in 0..output {
                    for i in 0..input {
                        grad[o * input + i] = dmean[o] * obs[i];
                    }
                }
            }
            Arch::Mlp {
                input,
                hidden,
                output,
            } => {
                let w2 = &self.theta[hidden * input + hidden..hidden * input + hidden + output * hidden];
                let b1_at = hidden * input;
                let w2_at = b1_at + hidden;
                let b2_at = w2_at + output * hidden;
                for o in 0..output {
                    for j in 0..hidden {
                        grad[w2_at + o * hidden + j] = dmean[o] * fwd.hidden[j];
                    }
                    grad[b2_at + o] = dmean[o];
                }
                for j in 0..hidden {
                    let back: f64 = (0..output).map(|o| dmean[o] * w2[o * hidden + j]).sum();
                    let dpre = back * (1.0 - fwd.hidden[j] * fwd.hidden[j]);
                    for i in 0..input {
                        grad[j * input + i] = dpre * obs[i];
                    }
                    grad[b1_at + j] = dpre;
                }
            }
        }
        Ok(grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Log density of a diagonal Gaussian.
pub fn gaussian_log_density(mean: &[f64], log_std: &[f64], x: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(x)
        .map(|((m, ls), v)| {
            let z = (v - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}
