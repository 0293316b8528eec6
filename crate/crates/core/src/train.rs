//! Desk-scale SGD training for the vanilla cell. The surrogate is softmax
//! cross-entropy on the final-step output; the ramp risk is evaluated for
//! logging but never differentiated.

use crate::cells::{vanilla_forward, ActivationSpec, ModelWeights};
use crate::data::SequenceDataset;
use crate::error::{invalid, Result};
use crate::linalg::{scale_spectral, spectral_norm, Matrix};
use crate::margin::{empirical_ramp_risk, zero_one_error};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SPECTRAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Margin scale used only for the logged ramp risk.
    pub gamma: f64,
    /// If set, U is rescaled to this spectral norm after every epoch.
    pub target_b_u: Option<f64>,
    pub d_h: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) {
            return Err(invalid("train config: learning rate must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(invalid("train config: batch size must be >= 1"));
        }
        if !(self.gamma > 0.0) {
            return Err(invalid("train config: gamma must be positive"));
        }
        if self.d_h == 0 {
            return Err(invalid("train config: d_h must be >= 1"));
        }
        if let Some(b) = self.target_b_u {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(invalid("train config: target spectral norm must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub surrogate_loss: f64,
    pub ramp_risk: f64,
    pub zero_one_error: f64,
    pub b_u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: ModelWeights<f64>,
    pub log: Vec<EpochStats>,
    /// Epoch at which the surrogate loss left the finite range, if any;
    /// the returned weights are the last finite state.
    pub diverged_at: Option<usize>,
}

pub struct Gradients {
    pub loss: f64,
    pub d_u: Matrix<f64>,
    pub d_v: Matrix<f64>,
    pub d_w: Matrix<f64>,
}

fn softmax(y: &[f64]) -> Vec<f64> {
    let mx = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = y.iter().map(|v| (v - mx).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

/// Average final-step cross-entropy loss and its gradients over a batch,
/// computed by analytic backpropagation through time.
pub fn batch_gradients(
    w: &ModelWeights<f64>,
    batch: &[(&Vec<Vec<f64>>, usize)],
) -> Result<Gradients> {
    let (u, v, wm) = match w {
        ModelWeights::Vanilla { u, v, w } => (u, v, w),
        _ => return Err(invalid("batch_gradients: vanilla weights only")),
    };
    if batch.is_empty() {
        return Err(invalid("batch_gradients: empty batch"));
    }
    let act_h = ActivationSpec::tanh();
    let act_y = ActivationSpec::identity();
    let d_h = u.rows();
    let k = v.rows();
    let mut d_u = Matrix::zeros(d_h, d_h);
    let mut d_v = Matrix::zeros(k, d_h);
    let mut d_w = Matrix::zeros(d_h, wm.cols());
    let mut total_loss = 0.0;
    for (seq, z) in batch {
        if *z < 1 || *z > k {
            return Err(invalid("batch_gradients: label out of range"));
        }
        let traj = vanilla_forward(w, seq, &act_h, &act_y)?;
        let t_len = seq.len();
        let y = &traj.outputs[t_len - 1];
        let p = softmax(y);
        total_loss -= p[*z - 1].ln();
        // dL/dy = p - e_z
        let mut dy = p;
        dy[*z - 1] -= 1.0;
        let h_last = &traj.hidden[t_len - 1];
        for r in 0..k {
            for c in 0..d_h {
                d_v.set(r, c, d_v.get(r, c) + dy[r] * h_last[c]);
            }
        }
        // dh_T = V^T dy, then walk backwards through tanh pre-activations
        let mut dh = v.matvec_t(&dy);
        for t in (0..t_len).rev() {
            let h = &traj.hidden[t];
            let da: Vec<f64> = dh.iter().zip(h).map(|(g, hv)| g * (1.0 - hv * hv)).collect();
            let h_prev: Vec<f64> = if t == 0 {
                vec![0.0; d_h]
            } else {
                traj.hidden[t - 1].clone()
            };
            for r in 0..d_h {
                for c in 0..d_h {
                    d_u.set(r, c, d_u.get(r, c) + da[r] * h_prev[c]);
                }
                for c in 0..wm.cols() {
                    d_w.set(r, c, d_w.get(r, c) + da[r] * seq[t][c]);
                }
            }
            dh = u.matvec_t(&da);
        }
    }
    let n = batch.len() as f64;
    Ok(Gradients {
        loss: total_loss / n,
        d_u: d_u.scale(1.0 / n),
        d_v: d_v.scale(1.0 / n),
        d_w: d_w.scale(1.0 / n),
    })
}

fn eval_epoch(
    w: &ModelWeights<f64>,
    data: &SequenceDataset,
    gamma: f64,
    epoch: usize,
    surrogate: f64,
) -> Result<EpochStats> {
    let act_h = ActivationSpec::tanh();
    let act_y = ActivationSpec::identity();
    let mut outputs = Vec::with_capacity(data.m);
    for (seq, zs) in data.inputs.iter().zip(&data.labels) {
        let traj = vanilla_forward(w, seq, &act_h, &act_y)?;
        outputs.push((traj.outputs.last().expect("nonempty").clone(), *zs.last().expect("nonempty")));
    }
    let b_u = match w {
        ModelWeights::Vanilla { u, .. } => spectral_norm(u, SPECTRAL_TOL)?,
        _ => unreachable!("vanilla only"),
    };
    Ok(EpochStats {
        epoch,
        surrogate_loss: surrogate,
        ramp_risk: empirical_ramp_risk(&outputs, gamma)?,
        zero_one_error: zero_one_error(&outputs)?,
        b_u,
    })
}

/// Initial weights: small uniform entries so tanh starts near its linear range.
pub fn init_weights(d_x: usize, d_h: usize, k_classes: usize, seed: u64) -> ModelWeights<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1417);
    let mk = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
        use rand::Rng;
        let entries: Vec<f64> = (0..r * c).map(|_| rng.gen_range(-0.3..0.3)).collect();
        Matrix::new(r, c, entries).expect("init matrix")
    };
    ModelWeights::Vanilla {
        u: mk(&mut rng, d_h, d_h),
        v: mk(&mut rng, k_classes, d_h),
        w: mk(&mut rng, d_h, d_x),
    }
}

/// Mini-batch SGD on the final-step cross-entropy surrogate. The label of
/// each sequence is its final-step label. On divergence the last finite
/// state is returned with `diverged_at` set.
pub fn train_vanilla(data: &SequenceDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    data.validate()?;
    let mut w = init_weights(data.d_x, cfg.d_h, data.k_classes, cfg.seed);
    if let Some(b) = cfg.target_b_u {
        w = rescale_u(w, b)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5d6);
    let mut log = Vec::with_capacity(cfg.epochs + 1);
    let full: Vec<(&Vec<Vec<f64>>, usize)> = data
        .inputs
        .iter()
        .zip(&data.labels)
        .map(|(seq, zs)| (seq, *zs.last().expect("nonempty")))
        .collect();
    let init_loss = batch_gradients(&w, &full)?.loss;
    log.push(eval_epoch(&w, data, cfg.gamma, 0, init_loss)?);
    let mut order: Vec<usize> = (0..data.m).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        let mut next = w.clone();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&Vec<Vec<f64>>, usize)> = chunk
                .iter()
                .map(|&i| (&data.inputs[i], *data.labels[i].last().expect("nonempty")))
                .collect();
            let g = batch_gradients(&next, &batch)?;
            if !g.loss.is_finite() {
                return Ok(TrainOutcome {
                    weights: w,
                    log,
                    diverged_at: Some(epoch),
                });
            }
            epoch_loss += g.loss;
            batches += 1;
            next = sgd_step(next, &g, cfg.learning_rate)?;
        }
        if let Some(b) = cfg.target_b_u {
            next = rescale_u(next, b)?;
        }
        if !weights_finite(&next) {
            return Ok(TrainOutcome {
                weights: w,
                log,
                diverged_at: Some(epoch),
            });
        }
        w = next;
        log.push(eval_epoch(&w, data, cfg.gamma, epoch, epoch_loss / batches as f64)?);
    }
    Ok(TrainOutcome {
        weights: w,
        log,
        diverged_at: None,
    })
}

fn weights_finite(w: &ModelWeights<f64>) -> bool {
    match w {
        ModelWeights::Vanilla { u, v, w } => u.is_finite() && v.is_finite() && w.is_finite(),
        _ => false,
    }
}

fn sgd_step(w: ModelWeights<f64>, g: &Gradients, lr: f64) -> Result<ModelWeights<f64>> {
    let (u, v, wm) = match w {
        ModelWeights::Vanilla { u, v, w } => (u, v, w),
        _ => return Err(invalid("sgd_step: vanilla weights only")),
    };
    Ok(ModelWeights::Vanilla {
        u: u.sub(&g.d_u.scale(lr))?,
        v: v.sub(&g.d_v.scale(lr))?,
        w: wm.sub(&g.d_w.scale(lr))?,
    })
}

fn rescale_u(w: ModelWeights<f64>, target: f64) -> Result<ModelWeights<f64>> {
    let (u, v, wm) = match w {
        ModelWeights::Vanilla { u, v, w } => (u, v, w),
        _ => return Err(invalid("rescale_u: vanilla weights only")),
    };
    Ok(ModelWeights::Vanilla {
        u: scale_spectral(&u, target)?,
        v,
        w: wm,
    })
}
