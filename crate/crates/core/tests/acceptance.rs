//! End-to-end acceptance gate. Each test covers one acceptance criterion and
//! prints a single pass line when it holds.

use rnncert::audit::{audit, round_display};
use rnncert::bounds::{
    class_range, closed_form_chaining, comparison_bounds, covering_log_margin, dudley_erc,
    vanilla_erc_bound, BoundQuery,
};
use rnncert::cells::ModelWeights;
use rnncert::data::{gen_synthetic, LabelRule};
use rnncert::linalg::{geometric_ratio, Matrix};
use rnncert::margin::margin;
use rnncert::train::{batch_gradients, init_weights, train_vanilla, TrainConfig};
use rnncert::verify::{
    erc_exact_from_responses, estimate_erc_mc, verify_conv_orthogonality, verify_hidden_norm,
    verify_margin_lipschitz, verify_output_lipschitz, CellKind, ClassCaps, VerifyConfig,
};

fn diag_vanilla(b_u: f64, b_v: f64, b_w: f64, d: usize) -> ModelWeights<f64> {
    let scaled = |s: f64| {
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            m.set(i, i, s);
        }
        m
    };
    ModelWeights::Vanilla {
        u: scaled(b_u),
        v: scaled(b_v),
        w: scaled(b_w),
    }
}

fn query(w: &ModelWeights<f64>, t: u32, m: usize, gamma: f64) -> BoundQuery {
    BoundQuery {
        profile: audit(w).unwrap(),
        rho_h: 1.0,
        rho_y: 1.0,
        b: 1.0,
        t,
        m,
        gamma,
        delta: 0.05,
        k_classes: 2,
    }
}

#[test]
fn criterion_1_audit_arithmetic() {
    // stable rank 13.6823 / 2.6801 and column-norm ratio 154.5439 / 13.6823
    // realized by concrete 128x128 matrices and read back through the audit
    let d = 128;
    let top: f64 = 2.6801;
    let fro: f64 = 13.6823;
    let rest = ((fro.powi(2) - top.powi(2)) / (d as f64 - 1.0)).sqrt();
    let mut u = Matrix::zeros(d, d);
    u.set(0, 0, top);
    for i in 1..d {
        u.set(i, i, rest);
    }
    let p = audit(&ModelWeights::Vanilla {
        u,
        v: Matrix::identity(d),
        w: Matrix::identity(d),
    })
    .unwrap();
    let sr = p.get("U").unwrap().stable_rank();
    assert_eq!(round_display(sr, 4), 5.1051);
    assert_eq!(round_display(sr, 1), 5.1);

    let m_target: f64 = 154.5439;
    let s = m_target / 64.0;
    let qq = fro.powi(2) / 64.0;
    let disc = (2.0 * qq - s * s).sqrt();
    let (c1, c2) = ((s + disc) / 2.0, (s - disc) / 2.0);
    let mut u2 = Matrix::zeros(d, d);
    for i in 0..64 {
        u2.set(i, i, c1);
    }
    for i in 64..d {
        u2.set(i, i, c2);
    }
    let p2 = audit(&ModelWeights::Vanilla {
        u: u2,
        v: Matrix::identity(d),
        w: Matrix::identity(d),
    })
    .unwrap();
    let n = p2.get("U").unwrap();
    let ratio = n.two_one / n.frobenius;
    assert_eq!(round_display(ratio, 4), 11.2952);
    assert_eq!(round_display(ratio, 1), 11.3);
    println!("criterion 1 (audit arithmetic 5.1 and 11.3): PASS");
}

#[test]
fn criterion_2_comparison_ordering() {
    let ds = gen_synthetic(40, 20, 3, 2, LabelRule::RunningSign, 11).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.3,
        epochs: 60,
        batch_size: 8,
        gamma: 0.5,
        target_b_u: Some(1.2),
        d_h: 16,
        seed: 3,
    };
    let out = train_vanilla(&ds, &cfg).unwrap();
    assert!(out.diverged_at.is_none());
    let profile = audit(&out.weights).unwrap();
    let b_u = profile.spectral("U").unwrap();
    assert!(b_u > 1.0, "audited B_U {b_u}");
    let half_sqrt_d = (profile.d_max as f64).sqrt() / 2.0;
    for sym in ["U", "V", "W"] {
        let sr = profile.get(sym).unwrap().stable_rank();
        assert!(sr < half_sqrt_d, "{sym} stable rank {sr} vs {half_sqrt_d}");
    }
    let q = query(&out.weights, 25, 1000, 1.0);
    let [ours, b1, b2, b3] = comparison_bounds(&q).unwrap();
    assert!(ours.value < b3.value, "{} vs {}", ours.value, b3.value);
    assert!(b3.value <= b2.value, "{} vs {}", b3.value, b2.value);
    assert!(ours.value / b1.value < 1e-3, "ratio {}", ours.value / b1.value);
    println!("criterion 2 (comparison ordering on trained model): PASS");
}

fn log_log_slope(b_u: f64, b_w: f64) -> f64 {
    let ts: Vec<u32> = (4..=10).map(|k| 1u32 << k).collect();
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| {
            let w = diag_vanilla(b_u, 1.0, b_w, 16);
            let q = query(&w, t, 1000, 1.0);
            let [ours, ..] = comparison_bounds(&q).unwrap();
            ((t as f64).ln(), ours.log_value)
        })
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[test]
fn criterion_3_regime_slopes() {
    // parameters keep the min branches away from saturation over t <= 1024
    let s1 = log_log_slope(0.9, 1.0);
    let s2 = log_log_slope(1.0, 1e-4);
    let s3 = log_log_slope(1.2, 1.0);
    assert!(s1 <= 0.2, "regime I slope {s1}");
    assert!((0.85..=1.2).contains(&s2), "regime II slope {s2}");
    assert!((0.4..=0.65).contains(&s3), "regime III slope {s3}");
    println!(
        "criterion 3 (regime slopes I={s1:.3} II={s2:.3} III={s3:.3}): PASS"
    );
}

#[test]
fn criterion_4_verification_suites() {
    let trials = 1000;
    for kind in [CellKind::Vanilla, CellKind::Mgu, CellKind::Lstm, CellKind::Conv] {
        let cfg = VerifyConfig::for_cell(kind, trials, 7);
        let h = verify_hidden_norm(kind, &cfg).unwrap();
        assert_eq!(h.violations, 0, "{}: worst {}", h.trial_kind, h.worst_ratio);
        let l = verify_output_lipschitz(kind, &cfg).unwrap();
        assert_eq!(l.violations, 0, "{}: worst {}", l.trial_kind, l.worst_ratio);
    }
    let c = verify_conv_orthogonality(2, 6, 100, 7).unwrap();
    assert_eq!(c.violations, 0);
    println!("criterion 4 (hidden-norm and Lipschitz suites, 1000 trials each): PASS");
}

#[test]
fn criterion_5_margin_dual() {
    let (safe, _printed) = verify_margin_lipschitz(10_000, 3, 5).unwrap();
    assert_eq!(safe.violations, 0);
    // the documented counterexample to the printed single-factor form
    let y: Vec<f64> = vec![1.0, -1.0];
    let y2: Vec<f64> = vec![-1.0, 1.0];
    let dm: f64 = (margin(&y, 1).unwrap() - margin(&y2, 1).unwrap()).abs();
    let dy = (2.0f64 * 2.0 + 2.0 * 2.0).sqrt();
    assert!(dm > dy, "printed single-factor form holds unexpectedly");
    assert!(dm <= 2.0 * dy);
    println!(
        "criterion 5 (margin dual: factor-2 clean over 10000 trials; \
         (1,-1)/(-1,1) violates the printed form as documented): PASS"
    );
}

#[test]
fn criterion_6_erc_sandwich() {
    let ds = gen_synthetic(20, 3, 2, 2, LabelRule::RunningSign, 29).unwrap();
    let caps = ClassCaps {
        d_h: 2,
        b_u: 1.0,
        b_v: 1.0,
        b_w: 1.0,
    };
    let est = estimate_erc_mc(&caps, &ds, 1.0, 200, 500, 31, false).unwrap();
    let w = diag_vanilla(1.0, 1.0, 1.0, 2);
    let q = query(&w, 3, 20, 1.0);
    let bound = vanilla_erc_bound(&q).unwrap();
    assert!(est.estimate <= bound.value, "{} vs {}", est.estimate, bound.value);
    let exact = erc_exact_from_responses(&[vec![1.0; 4], vec![-1.0; 4]]).unwrap();
    assert_eq!(exact, 0.375);
    println!("criterion 6 (ERC sandwich and exact 0.375): PASS");
}

#[test]
fn criterion_7_gradient_check() {
    use rand::Rng;
    use rand::SeedableRng;
    for seed in 0..10u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31) ^ 0xace);
        let d_x = 2;
        let d_h = rng.gen_range(1..=4);
        let k = 3;
        let t_len = rng.gen_range(1..=5);
        let w = init_weights(d_x, d_h, k, seed ^ 0xbeef);
        let seq: Vec<Vec<f64>> = (0..t_len)
            .map(|_| (0..d_x).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let z = rng.gen_range(1..=k);
        let batch = vec![(&seq, z)];
        let g = batch_gradients(&w, &batch).unwrap();
        let grads = [&g.d_u, &g.d_v, &g.d_w];
        let eps = 1e-5;
        for mat_idx in 0..3 {
            for r in 0..grads[mat_idx].rows() {
                for c in 0..grads[mat_idx].cols() {
                    let shift = |delta: f64| -> f64 {
                        let mut wc = w.clone();
                        if let ModelWeights::Vanilla { u, v, w } = &mut wc {
                            let m = [u, v, w];
                            let mat = &mut *m.into_iter().nth(mat_idx).unwrap();
                            mat.set(r, c, mat.get(r, c) + delta);
                        }
                        batch_gradients(&wc, &batch).unwrap().loss
                    };
                    let fd = (shift(eps) - shift(-eps)) / (2.0 * eps);
                    let an = grads[mat_idx].get(r, c);
                    let denom = an.abs().max(fd.abs()).max(1e-4);
                    assert!(
                        (fd - an).abs() / denom <= 1e-5,
                        "seed {seed} mat {mat_idx} ({r},{c}): fd {fd} vs {an}"
                    );
                }
            }
        }
    }
    println!("criterion 7 (BPTT vs central finite differences, 10 seeds): PASS");
}

#[test]
fn criterion_8_closed_form_consistency() {
    // 100-point grid over (B_U, t, m, gamma)
    let mut checked = 0;
    for &b_u in &[0.5, 0.9, 1.0, 1.1, 2.0] {
        for &t in &[1u32, 3, 8, 20] {
            for &(m, gamma) in &[(25usize, 0.5), (100, 1.0), (400, 1.0), (900, 2.0), (1600, 0.25)] {
                let w = diag_vanilla(b_u, 1.0, 1.0, 2);
                let q = query(&w, t, m, gamma);
                let r = class_range(&q).unwrap();
                let qq = q.clone();
                let numeric = dudley_erc(
                    move |eps| covering_log_margin(&qq, eps).unwrap_or(f64::INFINITY),
                    r,
                    m,
                )
                .unwrap();
                let closed = closed_form_chaining(&q).unwrap();
                assert!(
                    numeric <= closed * (1.0 + 1e-9),
                    "b_u={b_u} t={t} m={m} gamma={gamma}: {numeric} vs {closed}"
                );
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 100);
    // continuity of the geometric ratio at the critical base
    for t in [1u32, 2, 10, 100, 1000] {
        let lo: f64 = geometric_ratio(1.0f64 - 1e-13, t).unwrap().value;
        let hi: f64 = geometric_ratio(1.0f64 + 1e-13, t).unwrap().value;
        let at: f64 = geometric_ratio(1.0f64, t).unwrap().value;
        assert!((lo - at).abs() <= 1e-9 * at);
        assert!((hi - at).abs() <= 1e-9 * at);
        assert_eq!(at, t as f64);
    }
    println!("criterion 8 (Dudley vs closed form on 100 points; ratio continuity): PASS");
}

#[test]
fn criterion_9_scale_note() {
    // The original large-corpus experiment is out of desk-scale reach; the
    // orderings and asymptotic orders above stand in for it by design.
    println!(
        "criterion 9 (note): large-scale experiment replaced by ordering and \
         asymptotic checks per criteria 2-3; proof machinery covered by 4-8"
    );
}
