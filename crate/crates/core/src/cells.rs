//! Forward computation of the four recurrent cell families.

use crate::error::{invalid, Result};
use crate::linalg::{hadamard, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Tanh,
    Sigmoid,
    Relu,
    Identity,
}

/// Entrywise activation with its Lipschitz constant and output bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationSpec<F: Scalar> {
    pub kind: ActivationKind,
    pub rho: F,
    pub b: F,
}

impl<F: Scalar> ActivationSpec<F> {
    pub fn tanh() -> Self {
        Self {
            kind: ActivationKind::Tanh,
            rho: F::one(),
            b: F::one(),
        }
    }

    pub fn sigmoid() -> Self {
        Self {
            kind: ActivationKind::Sigmoid,
            rho: F::lit(0.25),
            b: F::one(),
        }
    }

    pub fn relu() -> Self {
        Self {
            kind: ActivationKind::Relu,
            rho: F::one(),
            b: F::infinity(),
        }
    }

    pub fn identity() -> Self {
        Self {
            kind: ActivationKind::Identity,
            rho: F::one(),
            b: F::infinity(),
        }
    }

    /// True for kinds usable as sigma_h / sigma_y (requires sigma(0) = 0).
    pub fn zero_preserving(&self) -> bool {
        !matches!(self.kind, ActivationKind::Sigmoid)
    }

    pub fn apply_scalar(&self, x: F) -> F {
        match self.kind {
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Sigmoid => (F::one() + (-x).exp()).recip(),
            ActivationKind::Relu => x.max(F::zero()),
            ActivationKind::Identity => x,
        }
    }

    pub fn apply(&self, v: &[F]) -> Vec<F> {
        v.iter().map(|x| self.apply_scalar(*x)).collect()
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Relu => "relu",
            ActivationKind::Identity => "identity",
        }
    }
}

/// Weight matrices for one model, tagged by cell family.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelWeights<F: Scalar> {
    Vanilla {
        u: Matrix<F>,
        v: Matrix<F>,
        w: Matrix<F>,
    },
    Mgu {
        w_r: Matrix<F>,
        w_h: Matrix<F>,
        u_r: Matrix<F>,
        u_h: Matrix<F>,
        v: Matrix<F>,
    },
    Lstm {
        w_g: Matrix<F>,
        w_r: Matrix<F>,
        w_o: Matrix<F>,
        w_c: Matrix<F>,
        u_g: Matrix<F>,
        u_r: Matrix<F>,
        u_o: Matrix<F>,
        u_c: Matrix<F>,
        v: Matrix<F>,
    },
    Conv {
        /// k x k filter banks; column vectors are the filters.
        filters_u: Matrix<F>,
        filters_v: Matrix<F>,
        filters_w: Matrix<F>,
        data_dim: usize,
        classes: usize,
    },
}

impl<F: Scalar> ModelWeights<F> {
    pub fn cell_name(&self) -> &'static str {
        match self {
            ModelWeights::Vanilla { .. } => "vanilla",
            ModelWeights::Mgu { .. } => "mgu",
            ModelWeights::Lstm { .. } => "lstm",
            ModelWeights::Conv { .. } => "conv",
        }
    }

    /// (d_x, d_h, d_y) for the recurrent families; (d, k, K) for conv.
    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            ModelWeights::Vanilla { u, v, w } => (w.cols(), u.rows(), v.rows()),
            ModelWeights::Mgu { w_h, u_h, v, .. } => (w_h.cols(), u_h.rows(), v.rows()),
            ModelWeights::Lstm { w_c, u_c, v, .. } => (w_c.cols(), u_c.rows(), v.rows()),
            ModelWeights::Conv {
                filters_u,
                data_dim,
                classes,
                ..
            } => (*data_dim, filters_u.rows(), *classes),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_sq = |m: &Matrix<F>, dh: usize, name: &str| -> Result<()> {
            if m.rows() != dh || m.cols() != dh {
                return Err(invalid(format!("{name} must be {dh}x{dh}")));
            }
            Ok(())
        };
        let check = |m: &Matrix<F>, r: usize, c: usize, name: &str| -> Result<()> {
            if m.rows() != r || m.cols() != c {
                return Err(invalid(format!("{name} must be {r}x{c}")));
            }
            Ok(())
        };
        match self {
            ModelWeights::Vanilla { u, v, w } => {
                let dh = u.rows();
                check_sq(u, dh, "U")?;
                check(w, dh, w.cols(), "W")?;
                check(v, v.rows(), dh, "V")
            }
            ModelWeights::Mgu { w_r, w_h, u_r, u_h, v } => {
                let dh = u_h.rows();
                let dx = w_h.cols();
                check_sq(u_h, dh, "U_h")?;
                check_sq(u_r, dh, "U_r")?;
                check(w_h, dh, dx, "W_h")?;
                check(w_r, dh, dx, "W_r")?;
                check(v, v.rows(), dh, "V")
            }
            ModelWeights::Lstm {
                w_g,
                w_r,
                w_o,
                w_c,
                u_g,
                u_r,
                u_o,
                u_c,
                v,
            } => {
                let dh = u_c.rows();
                let dx = w_c.cols();
                for (m, name) in [(u_g, "U_g"), (u_r, "U_r"), (u_o, "U_o"), (u_c, "U_c")] {
                    check_sq(m, dh, name)?;
                }
                for (m, name) in [(w_g, "W_g"), (w_r, "W_r"), (w_o, "W_o"), (w_c, "W_c")] {
                    check(m, dh, dx, name)?;
                }
                check(v, v.rows(), dh, "V")
            }
            ModelWeights::Conv {
                filters_u,
                filters_v,
                filters_w,
                data_dim,
                classes,
            } => {
                let k = filters_u.rows();
                for (m, name) in [(filters_u, "U"), (filters_v, "V"), (filters_w, "W")] {
                    check(m, k, k, name)?;
                }
                if k > *data_dim {
                    return Err(invalid("conv: filter size k exceeds data dimension d"));
                }
                if *classes < 2 || *classes > *data_dim {
                    return Err(invalid("conv: need 2 <= K <= d"));
                }
                Ok(())
            }
        }
    }
}

/// States, gates, and outputs recorded along one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<F: Scalar> {
    pub hidden: Vec<Vec<F>>,
    pub cell: Vec<Vec<F>>,
    pub gates_g: Vec<Vec<F>>,
    pub gates_r: Vec<Vec<F>>,
    pub gates_o: Vec<Vec<F>>,
    pub outputs: Vec<Vec<F>>,
}

impl<F: Scalar> Default for Trajectory<F> {
    fn default() -> Self {
        Self {
            hidden: Vec::new(),
            cell: Vec::new(),
            gates_g: Vec::new(),
            gates_r: Vec::new(),
            gates_o: Vec::new(),
            outputs: Vec::new(),
        }
    }
}

fn add<F: Scalar>(a: &[F], b: &[F]) -> Vec<F> {
    a.iter().zip(b).map(|(x, y)| *x + *y).collect()
}

fn check_inputs<F: Scalar>(xs: &[Vec<F>], dx: usize) -> Result<()> {
    for (t, x) in xs.iter().enumerate() {
        if x.len() != dx {
            return Err(invalid(format!(
                "input at step {} has length {}, expected {dx}",
                t + 1,
                x.len()
            )));
        }
        if x.iter().any(|e| !e.is_finite()) {
            return Err(invalid(format!("non-finite input at step {}", t + 1)));
        }
    }
    Ok(())
}

/// h_t = sigma_h(U h_{t-1} + W x_t), y_t = sigma_y(V h_t), h_0 = 0.
pub fn vanilla_forward<F: Scalar>(
    weights: &ModelWeights<F>,
    xs: &[Vec<F>],
    act_h: &ActivationSpec<F>,
    act_y: &ActivationSpec<F>,
) -> Result<Trajectory<F>> {
    let (u, v, w) = match weights {
        ModelWeights::Vanilla { u, v, w } => (u, v, w),
        other => {
            return Err(invalid(format!(
                "vanilla_forward on {} weights",
                other.cell_name()
            )))
        }
    };
    weights.validate()?;
    check_inputs(xs, w.cols())?;
    if !act_h.zero_preserving() || !act_y.zero_preserving() {
        return Err(invalid("sigma_h and sigma_y must satisfy sigma(0) = 0"));
    }
    let mut traj = Trajectory::default();
    let mut h = vec![F::zero(); u.rows()];
    for x in xs {
        let pre = add(&u.matvec(&h), &w.matvec(x));
        h = act_h.apply(&pre);
        traj.outputs.push(act_y.apply(&v.matvec(&h)));
        traj.hidden.push(h.clone());
    }
    Ok(traj)
}

/// MGU: r_t = sigmoid(W_r x_t + U_r h_{t-1}),
/// h~_t = tanh(W_h x_t + U_h (r_t o h_{t-1})),
/// h_t = (1 - r_t) o h_{t-1} + r_t o h~_t, y_t = sigma_y(V h_t).
pub fn mgu_forward<F: Scalar>(
    weights: &ModelWeights<F>,
    xs: &[Vec<F>],
    act_y: &ActivationSpec<F>,
) -> Result<Trajectory<F>> {
    let (w_r, w_h, u_r, u_h, v) = match weights {
        ModelWeights::Mgu { w_r, w_h, u_r, u_h, v } => (w_r, w_h, u_r, u_h, v),
        other => {
            return Err(invalid(format!(
                "mgu_forward on {} weights",
                other.cell_name()
            )))
        }
    };
    weights.validate()?;
    check_inputs(xs, w_h.cols())?;
    if !act_y.zero_preserving() {
        return Err(invalid("sigma_y must satisfy sigma(0) = 0"));
    }
    let gate = ActivationSpec::sigmoid();
    let cand = ActivationSpec::tanh();
    let mut traj = Trajectory::default();
    let mut h = vec![F::zero(); u_h.rows()];
    for x in xs {
        let r = gate.apply(&add(&w_r.matvec(x), &u_r.matvec(&h)));
        let gated = hadamard(&r, &h)?;
        let h_cand = cand.apply(&add(&w_h.matvec(x), &u_h.matvec(&gated)));
        let mut next = vec![F::zero(); h.len()];
        for i in 0..h.len() {
            next[i] = (F::one() - r[i]) * h[i] + r[i] * h_cand[i];
        }
        h = next;
        traj.outputs.push(act_y.apply(&v.matvec(&h)));
        traj.gates_r.push(r);
        traj.hidden.push(h.clone());
    }
    Ok(traj)
}

/// LSTM with gates g (forget), r (input), o (output), h_0 = c_0 = 0.
pub fn lstm_forward<F: Scalar>(
    weights: &ModelWeights<F>,
    xs: &[Vec<F>],
    act_y: &ActivationSpec<F>,
) -> Result<Trajectory<F>> {
    let (w_g, w_r, w_o, w_c, u_g, u_r, u_o, u_c, v) = match weights {
        ModelWeights::Lstm {
            w_g,
            w_r,
            w_o,
            w_c,
            u_g,
            u_r,
            u_o,
            u_c,
            v,
        } => (w_g, w_r, w_o, w_c, u_g, u_r, u_o, u_c, v),
        other => {
            return Err(invalid(format!(
                "lstm_forward on {} weights",
                other.cell_name()
            )))
        }
    };
    weights.validate()?;
    check_inputs(xs, w_c.cols())?;
    if !act_y.zero_preserving() {
        return Err(invalid("sigma_y must satisfy sigma(0) = 0"));
    }
    let gate = ActivationSpec::sigmoid();
    let cand = ActivationSpec::tanh();
    let mut traj = Trajectory::default();
    let dh = u_c.rows();
    let mut h = vec![F::zero(); dh];
    let mut c = vec![F::zero(); dh];
    for x in xs {
        let g = gate.apply(&add(&w_g.matvec(x), &u_g.matvec(&h)));
        let r = gate.apply(&add(&w_r.matvec(x), &u_r.matvec(&h)));
        let o = gate.apply(&add(&w_o.matvec(x), &u_o.matvec(&h)));
        let c_cand = cand.apply(&add(&w_c.matvec(x), &u_c.matvec(&h)));
        let mut c_next = vec![F::zero(); dh];
        for i in 0..dh {
            c_next[i] = g[i] * c[i] + r[i] * c_cand[i];
        }
        c = c_next;
        let mut h_next = vec![F::zero(); dh];
        for i in 0..dh {
            h_next[i] = o[i] * c[i].tanh();
        }
        h = h_next;
        traj.outputs.push(act_y.apply(&v.matvec(&h)));
        traj.gates_g.push(g);
        traj.gates_r.push(r);
        traj.gates_o.push(o);
        traj.cell.push(c.clone());
        traj.hidden.push(h.clone());
    }
    Ok(traj)
}

/// Stacked sliding-window operator W_I ((k d) x (d + k - 1), trailing zero
/// padding) and the channel-average pooling P = (1/k)[I ... I] (d x k d),
/// so that `I * x = P W_I pad(x)` has dimension d.
pub fn build_conv_operator<F: Scalar>(
    filters: &Matrix<F>,
    d: usize,
) -> Result<(Matrix<F>, Matrix<F>)> {
    let k = filters.rows();
    if filters.cols() != k {
        return Err(invalid("filter bank must be square (k x k)"));
    }
    if k > d {
        return Err(invalid("filter size k exceeds data dimension d"));
    }
    if !filters.is_finite() {
        return Err(invalid("filter bank must be finite"));
    }
    let padded = d + k - 1;
    let mut w_op = Matrix::zeros(k * d, padded);
    for ch in 0..k {
        for row in 0..d {
            for a in 0..k {
                w_op.set(ch * d + row, row + a, filters.get(a, ch));
            }
        }
    }
    let mut pool = Matrix::zeros(d, k * d);
    let inv_k = F::from_usize(k).unwrap().recip();
    for ch in 0..k {
        for i in 0..d {
            pool.set(i, ch * d + i, inv_k);
        }
    }
    Ok((w_op, pool))
}

/// Direct evaluation of `I * x` without materializing the operator matrices.
pub fn conv_apply<F: Scalar>(filters: &Matrix<F>, x: &[F]) -> Result<Vec<F>> {
    let k = filters.rows();
    let d = x.len();
    if k > d {
        return Err(invalid("filter size k exceeds input dimension"));
    }
    let inv_k = F::from_usize(k).unwrap().recip();
    let mut out = vec![F::zero(); d];
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = F::zero();
        for ch in 0..k {
            for a in 0..k {
                if j + a < d {
                    acc += filters.get(a, ch) * x[j + a];
                }
            }
        }
        *o = acc * inv_k;
    }
    Ok(out)
}

/// Blockwise average over K contiguous blocks; the last block absorbs the
/// remainder when K does not divide d.
pub fn block_pool<F: Scalar>(v: &[F], classes: usize) -> Result<Vec<F>> {
    let d = v.len();
    if classes == 0 || classes > d {
        return Err(invalid("block_pool: need 1 <= K <= d"));
    }
    let base = d / classes;
    let mut out = Vec::with_capacity(classes);
    for kidx in 0..classes {
        let start = kidx * base;
        let end = if kidx + 1 == classes { d } else { start + base };
        let len = F::from_usize(end - start).unwrap();
        let sum: F = v[start..end].iter().copied().sum();
        out.push(sum / len);
    }
    Ok(out)
}

/// Conv RNN: h_t = sigma_h(U * h_{t-1} + W * x_t), y_t = sigma_y(pool_K(V * h_t)).
pub fn conv_forward<F: Scalar>(
    weights: &ModelWeights<F>,
    xs: &[Vec<F>],
    act_h: &ActivationSpec<F>,
    act_y: &ActivationSpec<F>,
) -> Result<Trajectory<F>> {
    let (fu, fv, fw, d, classes) = match weights {
        ModelWeights::Conv {
            filters_u,
            filters_v,
            filters_w,
            data_dim,
            classes,
        } => (filters_u, filters_v, filters_w, *data_dim, *classes),
        other => {
            return Err(invalid(format!(
                "conv_forward on {} weights",
                other.cell_name()
            )))
        }
    };
    weights.validate()?;
    check_inputs(xs, d)?;
    if !act_h.zero_preserving() || !act_y.zero_preserving() {
        return Err(invalid("sigma_h and sigma_y must satisfy sigma(0) = 0"));
    }
    let mut traj = Trajectory::default();
    let mut h = vec![F::zero(); d];
    for x in xs {
        let pre = add(&conv_apply(fu, &h)?, &conv_apply(fw, x)?);
        h = act_h.apply(&pre);
        let conv_out = conv_apply(fv, &h)?;
        traj.outputs.push(act_y.apply(&block_pool(&conv_out, classes)?));
        traj.hidden.push(h.clone());
    }
    Ok(traj)
}
