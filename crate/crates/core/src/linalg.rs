//! Dense row-major matrices and the scalar helpers the bound evaluators use.

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F: Scalar> {
    rows: usize,
    cols: usize,
    entries: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn new(rows: usize, cols: usize, entries: Vec<F>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("matrix dimensions must be positive"));
        }
        if entries.len() != rows * cols {
            return Err(invalid(format!(
                "matrix entry count {} does not match {}x{}",
                entries.len(),
                rows,
                cols
            )));
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(invalid("matrix entries must be finite"));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.entries[i * n + i] = F::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(invalid("matrix needs at least one row"));
        }
        let c = rows[0].len();
        if rows.iter().any(|row| row.len() != c) {
            return Err(invalid("ragged rows"));
        }
        Self::new(r, c, rows.iter().flatten().copied().collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[F] {
        &self.entries
    }

    pub fn get(&self, r: usize, c: usize) -> F {
        self.entries[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.entries[r * self.cols + c] = v;
    }

    /// `self * v`; panics on dimension mismatch (callers validate).
    pub fn matvec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(v.len(), self.cols, "matvec dimension mismatch");
        let mut out = vec![F::zero(); self.rows];
        for r in 0..self.rows {
            let row = &self.entries[r * self.cols..(r + 1) * self.cols];
            let mut acc = F::zero();
            for (a, b) in row.iter().zip(v) {
                acc += *a * *b;
            }
            out[r] = acc;
        }
        out
    }

    /// `self^T * v`.
    pub fn matvec_t(&self, v: &[F]) -> Vec<F> {
        assert_eq!(v.len(), self.rows, "matvec_t dimension mismatch");
        let mut out = vec![F::zero(); self.cols];
        for r in 0..self.rows {
            let row = &self.entries[r * self.cols..(r + 1) * self.cols];
            let vr = v[r];
            for (o, a) in out.iter_mut().zip(row) {
                *o += *a * vr;
            }
        }
        out
    }

    pub fn scale(&self, s: F) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|e| *e * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(invalid("matrix shape mismatch in subtraction"));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| *a - *b)
                .collect(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.is_finite())
    }
}

pub fn norm2<F: Scalar>(v: &[F]) -> F {
    v.iter().map(|x| *x * *x).sum::<F>().sqrt()
}

pub fn norm_inf<F: Scalar>(v: &[F]) -> F {
    v.iter().fold(F::zero(), |acc, x| acc.max(x.abs()))
}

/// Entrywise product of two equal-length vectors.
pub fn hadamard<F: Scalar>(u: &[F], v: &[F]) -> Result<Vec<F>> {
    if u.len() != v.len() {
        return Err(invalid(format!(
            "hadamard length mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    Ok(u.iter().zip(v).map(|(a, b)| *a * *b).collect())
}

/// Frobenius norm.
pub fn frobenius_norm<F: Scalar>(m: &Matrix<F>) -> F {
    norm2(m.entries())
}

/// (2,1) norm: sum of column Euclidean norms.
pub fn two_one_norm<F: Scalar>(m: &Matrix<F>) -> F {
    let mut total = F::zero();
    for c in 0..m.cols() {
        let mut acc = F::zero();
        for r in 0..m.rows() {
            let e = m.get(r, c);
            acc += e * e;
        }
        total += acc.sqrt();
    }
    total
}

const MAX_POWER_ITERS: usize = 10_000;

/// Largest singular value via power iteration on `M^T M`.
///
/// Deterministic: the start vector is the normalized all-ones vector, with a
/// fixed graded fallback if that vector lies in the null space.
pub fn spectral_norm<F: Scalar>(m: &Matrix<F>, tol: F) -> Result<F> {
    if !m.is_finite() {
        return Err(invalid("spectral_norm: non-finite entries"));
    }
    if tol <= F::zero() || tol > F::lit(1e-3) {
        return Err(invalid("spectral_norm: tol must lie in (0, 1e-3]"));
    }
    let fro = frobenius_norm(m);
    if fro == F::zero() {
        return Ok(F::zero());
    }
    let n = m.cols();
    let mut v: Vec<F> = vec![F::one(); n];
    normalize(&mut v);
    let mut lambda_prev = F::zero();
    for iter in 0..MAX_POWER_ITERS {
        // w = M^T (M v); Rayleigh quotient of M^T M at v is v.w
        let mv = m.matvec(&v);
        let w = m.matvec_t(&mv);
        let lambda = dot(&v, &w);
        let wn = norm2(&w);
        if wn <= fro * fro * F::lit(1e-30) {
            if iter == 0 {
                // all-ones start annihilated; retry with a graded vector
                for (i, x) in v.iter_mut().enumerate() {
                    *x = F::one() + F::lit(1e-3) * F::from_usize(i + 1).unwrap();
                }
                normalize(&mut v);
                continue;
            }
            return Ok(lambda.max(F::zero()).sqrt());
        }
        if iter > 0 {
            let diff = (lambda - lambda_prev).abs();
            if diff <= tol * lambda.abs().max(F::min_positive_value()) {
                return Ok(lambda.max(F::zero()).sqrt());
            }
        }
        lambda_prev = lambda;
        v = w;
        let inv = wn.recip();
        for x in v.iter_mut() {
            *x *= inv;
        }
    }
    Ok(lambda_prev.max(F::zero()).sqrt())
}

/// Rescales `m` so its spectral norm equals `target` (a positive multiple of `m`).
pub fn scale_spectral<F: Scalar>(m: &Matrix<F>, target: F) -> Result<Matrix<F>> {
    if target < F::zero() || !target.is_finite() {
        return Err(invalid("scale_spectral: target must be finite and >= 0"));
    }
    if target == F::zero() {
        return Ok(Matrix::zeros(m.rows(), m.cols()));
    }
    let sn = spectral_norm(m, F::lit(1e-12))?;
    if sn == F::zero() {
        return Err(invalid("scale_spectral: zero matrix with positive target"));
    }
    Ok(m.scale(target / sn))
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn normalize<F: Scalar>(v: &mut [F]) {
    let n = norm2(v);
    if n > F::zero() {
        let inv = n.recip();
        for x in v.iter_mut() {
            *x *= inv;
        }
    }
}

/// Partial geometric sum `1 + base + ... + base^(steps-1)`, kept evaluable in
/// the log domain when `base^steps` overflows the floating range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeomRatio<F: Scalar> {
    pub base: F,
    pub steps: u32,
    /// `(base^steps - 1)/(base - 1)`; infinite when the log domain kicked in.
    pub value: F,
    /// Natural log of the value, always finite for steps >= 1.
    pub log_value: F,
    pub computed_in_log_domain: bool,
}

const UNIT_BASE_EPS: f64 = 1e-12;
/// Switch to log-domain bookkeeping once base^steps would pass this magnitude.
const LOG_DOMAIN_CAP: f64 = 1e300;

/// `(base^steps - 1)/(base - 1)`, defined as `steps` at `base = 1`.
pub fn geometric_ratio<F: Scalar>(base: F, steps: u32) -> Result<GeomRatio<F>> {
    if steps == 0 {
        return Err(invalid("geometric_ratio: steps must be >= 1"));
    }
    if !(base >= F::zero()) || !base.is_finite() {
        return Err(invalid("geometric_ratio: base must be finite and >= 0"));
    }
    let t = F::from_u32(steps).unwrap();
    if (base - F::one()).abs() <= F::lit(UNIT_BASE_EPS) {
        return Ok(GeomRatio {
            base,
            steps,
            value: t,
            log_value: t.ln(),
            computed_in_log_domain: false,
        });
    }
    let cap_ln = match F::from_f64(LOG_DOMAIN_CAP) {
        Some(c) if c.is_finite() => c.ln(),
        _ => F::max_value().ln() * F::lit(0.98),
    };
    if base > F::one() && t * base.ln() > cap_ln {
        // ln((b^t - 1)/(b - 1)) = t ln b + ln(1 - b^-t) - ln(b - 1);
        // b^-t underflows to 0 here, so the middle term vanishes.
        let log_value = t * base.ln() - (base - F::one()).ln();
        return Ok(GeomRatio {
            base,
            steps,
            value: F::infinity(),
            log_value,
            computed_in_log_domain: true,
        });
    }
    let value = (base.powi(steps as i32) - F::one()) / (base - F::one());
    Ok(GeomRatio {
        base,
        steps,
        value,
        log_value: value.ln(),
        computed_in_log_domain: false,
    })
}
