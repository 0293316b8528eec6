//! CSV serialization for bound and verification reports. Newlines are
//! `\n`; the decimal separator is `.`.

use crate::bounds::BoundReport;
use crate::verify::TrialReport;
use std::fmt::Write as _;

pub const BOUNDS_HEADER: &str = "bound_id,value,log_value,overflow,regime,d,t,m,gamma,order_only";
pub const VERIFY_HEADER: &str = "trial_kind,trials,violations,worst_ratio,seed";

fn csv_f64(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn bounds_csv(reports: &[BoundReport]) -> String {
    let mut out = String::from(BOUNDS_HEADER);
    out.push('\n');
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.bound_id,
            csv_f64(r.value),
            csv_f64(r.log_value),
            r.overflow,
            r.regime.label(),
            csv_f64(r.d),
            r.t,
            r.m,
            csv_f64(r.gamma),
            r.order_only
        )
        .expect("string write");
    }
    out
}

pub fn verify_csv(reports: &[TrialReport]) -> String {
    let mut out = String::from(VERIFY_HEADER);
    out.push('\n');
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.trial_kind,
            r.trials,
            r.violations,
            csv_f64(r.worst_ratio),
            r.seed
        )
        .expect("string write");
    }
    out
}
