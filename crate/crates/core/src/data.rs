//! Labeled sequence datasets and synthetic generators.

use crate::cells::{vanilla_forward, ActivationSpec, ModelWeights};
use crate::error::{invalid, Result};
use crate::linalg::{norm2, Matrix};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// m labeled sequences with per-step inputs of norm at most `b_x` and
/// per-step labels in 1..=k_classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub m: usize,
    pub t_len: usize,
    pub d_x: usize,
    pub k_classes: usize,
    pub b_x: f64,
    /// m x t_len x d_x.
    pub inputs: Vec<Vec<Vec<f64>>>,
    /// m x t_len, 1-based labels.
    pub labels: Vec<Vec<usize>>,
    pub seed: u64,
}

impl SequenceDataset {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.t_len == 0 || self.d_x == 0 {
            return Err(invalid("dataset dimensions must be positive"));
        }
        if self.k_classes < 2 {
            return Err(invalid("dataset needs at least 2 classes"));
        }
        if self.inputs.len() != self.m || self.labels.len() != self.m {
            return Err(invalid("dataset sequence count mismatch"));
        }
        if !(self.b_x > 0.0 && self.b_x.is_finite()) {
            return Err(invalid("dataset input norm budget must be positive"));
        }
        for (i, (xs, zs)) in self.inputs.iter().zip(&self.labels).enumerate() {
            if xs.len() != self.t_len || zs.len() != self.t_len {
                return Err(invalid(format!("sequence {i} has wrong length")));
            }
            for (t, x) in xs.iter().enumerate() {
                if x.len() != self.d_x {
                    return Err(invalid(format!("input ({i},{t}) has wrong dimension")));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(invalid(format!("input ({i},{t}) is non-finite")));
                }
                if norm2(x) > self.b_x * (1.0 + 1e-12) {
                    return Err(invalid(format!(
                        "input ({i},{t}) exceeds norm budget {}",
                        self.b_x
                    )));
                }
            }
            for (t, z) in zs.iter().enumerate() {
                if *z < 1 || *z > self.k_classes {
                    return Err(invalid(format!("label ({i},{t}) out of range")));
                }
            }
        }
        Ok(())
    }

    /// Maximum input norm actually present.
    pub fn max_input_norm(&self) -> f64 {
        self.inputs
            .iter()
            .flatten()
            .map(|x| norm2(x))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelRule {
    /// Argmax output of a fixed random vanilla RNN.
    Teacher,
    /// Sign of a fixed linear functional of the input prefix sum.
    RunningSign,
}

fn random_unit_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm2(&v);
        if n > 1e-6 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix<f64> {
    let entries: Vec<f64> = (0..rows * cols)
        .map(|_| rng.gen_range(-scale..scale))
        .collect();
    Matrix::new(rows, cols, entries).expect("random matrix construction")
}

/// A fixed random teacher network drawn deterministically from the seed.
pub fn teacher_weights(seed: u64, d_x: usize, k_classes: usize) -> ModelWeights<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7ea0_cafe);
    let d_h = 4.max(d_x);
    ModelWeights::Vanilla {
        u: random_matrix(&mut rng, d_h, d_h, 0.4),
        v: random_matrix(&mut rng, k_classes, d_h, 1.0),
        w: random_matrix(&mut rng, d_h, d_x, 1.0),
    }
}

/// Deterministic synthetic dataset; every input is normalized to unit norm.
pub fn gen_synthetic(
    m: usize,
    t_len: usize,
    d_x: usize,
    k_classes: usize,
    rule: LabelRule,
    seed: u64,
) -> Result<SequenceDataset> {
    if m == 0 || t_len == 0 || d_x == 0 {
        return Err(invalid("gen_synthetic: m, T, d_x must be positive"));
    }
    if k_classes < 2 {
        return Err(invalid("gen_synthetic: need at least 2 classes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(m);
    for _ in 0..m {
        let seq: Vec<Vec<f64>> = (0..t_len).map(|_| random_unit_vec(&mut rng, d_x)).collect();
        inputs.push(seq);
    }
    let labels = match rule {
        LabelRule::Teacher => {
            let teacher = teacher_weights(seed, d_x, k_classes);
            let act_h = ActivationSpec::tanh();
            let act_y = ActivationSpec::identity();
            let mut labels = Vec::with_capacity(m);
            for seq in &inputs {
                let traj = vanilla_forward(&teacher, seq, &act_h, &act_y)?;
                let zs: Vec<usize> = traj
                    .outputs
                    .iter()
                    .map(|y| {
                        let mut best = 0usize;
                        for (j, v) in y.iter().enumerate() {
                            if *v > y[best] {
                                best = j;
                            }
                        }
                        best + 1
                    })
                    .collect();
                labels.push(zs);
            }
            labels
        }
        LabelRule::RunningSign => {
            // classes 1 and 2 only; higher K is allowed but unused by this rule
            let probe = random_unit_vec(&mut rng, d_x);
            inputs
                .iter()
                .map(|seq| {
                    let mut acc = 0.0;
                    seq.iter()
                        .map(|x| {
                            acc += x.iter().zip(&probe).map(|(a, b)| a * b).sum::<f64>();
                            if acc >= 0.0 {
                                1
                            } else {
                                2
                            }
                        })
                        .collect()
                })
                .collect()
        }
    };
    let ds = SequenceDataset {
        m,
        t_len,
        d_x,
        k_classes,
        b_x: 1.0,
        inputs,
        labels,
        seed,
    };
    ds.validate()?;
    Ok(ds)
}
