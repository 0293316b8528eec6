//! Functional margin, ramp loss, and the empirical risks built on them.

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// y_z - max_{j != z} y_j. Labels are 1-based.
pub fn margin<F: Scalar>(y: &[F], z: usize) -> Result<F> {
    if y.len() < 2 {
        return Err(invalid("margin: need at least 2 classes"));
    }
    if z < 1 || z > y.len() {
        return Err(invalid(format!(
            "margin: label {z} out of range 1..={}",
            y.len()
        )));
    }
    let zi = z - 1;
    let mut best_other = F::neg_infinity();
    for (j, v) in y.iter().enumerate() {
        if j != zi && *v > best_other {
            best_other = *v;
        }
    }
    Ok(y[zi] - best_other)
}

/// 1 for a > 0, 1 + a/gamma on [-gamma, 0], 0 below -gamma.
pub fn ramp_loss<F: Scalar>(a: F, gamma: F) -> Result<F> {
    if !(gamma > F::zero()) {
        return Err(invalid("ramp_loss: gamma must be positive"));
    }
    Ok(if a > F::zero() {
        F::one()
    } else if a < -gamma {
        F::zero()
    } else {
        F::one() + a / gamma
    })
}

/// Mean of ramp_loss(-margin(y, z), gamma) over the outputs.
pub fn empirical_ramp_risk<F: Scalar>(outputs: &[(Vec<F>, usize)], gamma: F) -> Result<F> {
    if outputs.is_empty() {
        return Err(invalid("empirical_ramp_risk: empty output list"));
    }
    let mut acc = F::zero();
    for (y, z) in outputs {
        acc += ramp_loss(-margin(y, *z)?, gamma)?;
    }
    Ok(acc / F::from_usize(outputs.len()).unwrap())
}

/// Fraction with argmax_j y_j != z. Argmax ties count as errors.
pub fn zero_one_error<F: Scalar>(outputs: &[(Vec<F>, usize)]) -> Result<F> {
    if outputs.is_empty() {
        return Err(invalid("zero_one_error: empty output list"));
    }
    let mut errors = 0usize;
    for (y, z) in outputs {
        // margin > 0 iff the label strictly beats every competitor
        if margin(y, *z)? <= F::zero() {
            errors += 1;
        }
    }
    Ok(F::from_usize(errors).unwrap() / F::from_usize(outputs.len()).unwrap())
}
