use dml_core::data::{make_split, Column, ColumnRole};
use dml_core::dml::{aipw_from_predictions, cross_fit, estimate_plr_no_split, plr_residuals};
use dml_core::{
    estimate_ols_adjusted, estimate_pliv, estimate_plr_dml2, AggregateEstimate, Dataset, DmlConfig, EstimateRecord,
    Family, LearnerSpec,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_dataset(seed: u64, n: usize, p: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let w: Vec<f64> = (0..n)
        .map(|i| cols.iter().map(|c| c[i]).sum::<f64>() * 0.5 + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 1.5 * w[i] - cols.iter().map(|c| c[i].powi(2)).sum::<f64>() + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut columns = vec![
        Column::new("y", y, ColumnRole::Outcome),
        Column::new("w", w, ColumnRole::Treatment),
    ];
    for (j, c) in cols.drain(..).enumerate() {
        columns.push(Column::new(format!("x{j}"), c, ColumnRole::Covariate));
    }
    Dataset::new(columns).unwrap()
}

/// Coefficient on W from the normal equations of Y on (1, W, X), solved by
/// Gauss-Jordan elimination with partial pivoting.
fn normal_equations_coef(d: &Dataset) -> f64 {
    let n = d.n_rows();
    let x = d.covariates().unwrap();
    let p = x.ncols() + 2;
    let row = |i: usize| {
        let mut r = vec![1.0, d.treatment()[i]];
        r.extend(x.row(i).iter());
        r
    };
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..n {
        let r = row(i);
        for j in 0..p {
            for k in 0..p {
                a[j][k] += r[j] * r[k];
            }
            a[j][p] += r[j] * d.outcome()[i];
        }
    }
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap()).unwrap();
        a.swap(c, piv);
        for r in 0..p {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=p {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    a[1][p] / a[1][1]
}

#[test]
fn partition_covers_every_row_once() {
    for (n, k) in [(10, 2), (101, 5), (37, 10)] {
        let plan = make_split(n, k, 3).unwrap();
        let mut seen = vec![0; n];
        for f in 0..k {
            for r in plan.fold_rows(f) {
                seen[r] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }
}

#[test]
fn cross_fit_predictions_are_out_of_fold() {
    let d = random_dataset(1, 90, 3);
    let plan = make_split(90, 5, 4).unwrap();
    let cf = cross_fit(&d.covariates().unwrap(), d.outcome(), &plan, &LearnerSpec::ols(), 4, 0).unwrap();
    for i in 0..90 {
        assert_eq!(cf.predicted_by[i], plan.assignments()[i]);
        assert!(!cf.training_rows[cf.predicted_by[i]].contains(&i));
    }
}

#[test]
fn pliv_with_instrument_equal_to_treatment_is_dml2() {
    let d = random_dataset(2, 400, 3);
    let w = d.treatment().to_vec();
    let d = d.with_column(Column::new("z", w, ColumnRole::Instrument)).unwrap();
    let cfg = DmlConfig::plr(LearnerSpec::ols()).with_seed(8);
    let iv = estimate_pliv(&d, &cfg.clone().with_family(Family::Pliv)).unwrap();
    let plr = estimate_plr_dml2(&d, &cfg).unwrap();
    assert!((iv.theta_hat - plr.theta_hat).abs() < 1e-10);
}

#[test]
fn residual_identity_holds_bitwise() {
    let d = random_dataset(3, 120, 2);
    let r = plr_residuals(&d, &DmlConfig::plr(LearnerSpec::ols()), 17).unwrap();
    for i in 0..120 {
        assert_eq!(r.v_y[i].to_bits(), (d.outcome()[i] - r.y_hat[i]).to_bits());
        assert_eq!(r.v_w[i].to_bits(), (d.treatment()[i] - r.w_hat[i]).to_bits());
    }
}

fn record(theta: f64) -> EstimateRecord {
    EstimateRecord {
        theta_hat: theta,
        std_error: theta.abs(),
        per_fold_thetas: vec![],
        mse_w: None,
        mse_y: None,
        mse_z: None,
        n_trimmed: 0,
        repetition_seed: 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn no_split_ols_matches_frisch_waugh(seed in any::<u64>(), n in 20usize..120, p in 1usize..5) {
        let d = random_dataset(seed, n, p);
        let cfg = DmlConfig::plr(LearnerSpec::ols());
        let r = estimate_plr_no_split(&d, &cfg).unwrap();
        let oracle = normal_equations_coef(&d);
        prop_assert!((r.theta_hat - oracle).abs() < 1e-8, "{} vs {}", r.theta_hat, oracle);
        prop_assert!((estimate_ols_adjusted(&d).unwrap().theta_hat - oracle).abs() < 1e-8);
    }

    #[test]
    fn median_ignores_repetition_order(v in prop::collection::vec(-5.0f64..5.0, 1..30), rot in 0usize..30) {
        let a = AggregateEstimate::from_records(v.iter().map(|&t| record(t)).collect()).unwrap();
        let mut w = v.clone();
        let r = rot % w.len();
        w.rotate_left(r);
        w.reverse();
        let b = AggregateEstimate::from_records(w.iter().map(|&t| record(t)).collect()).unwrap();
        prop_assert_eq!(a.median_theta, b.median_theta);
        prop_assert_eq!(a.median_se, b.median_se);
        if v.len() == 1 {
            prop_assert_eq!(a.median_theta, v[0]);
        }
    }

    #[test]
    fn trimming_counts_rows_outside_band(seed in any::<u64>(), n in 2usize..80, t in 0.0f64..0.45) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let w: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.5))).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mu1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mu0: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let outside = e.iter().filter(|&&v| v < t || v > 1.0 - t).count();
        match aipw_from_predictions(&y, &w, &mu1, &mu0, &e, t) {
            Ok((ate, _, trimmed)) => {
                prop_assert_eq!(trimmed, outside);
                let kept: Vec<usize> = (0..n).filter(|&i| e[i] >= t && e[i] <= 1.0 - t).collect();
                let oracle = kept
                    .iter()
                    .map(|&i| mu1[i] - mu0[i] + w[i] * (y[i] - mu1[i]) / e[i] - (1.0 - w[i]) * (y[i] - mu0[i]) / (1.0 - e[i]))
                    .sum::<f64>()
                    / kept.len() as f64;
                prop_assert!((ate - oracle).abs() < 1e-12 * oracle.abs().max(1.0));
            }
            Err(_) => prop_assert_eq!(outside, n),
        }
    }

    #[test]
    fn aipw_residual_free_inputs_return_mean_difference(seed in any::<u64>(), n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu1: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mu0: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
        let w: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.5))).collect();
        let y: Vec<f64> = (0..n).map(|i| if w[i] == 1.0 { mu1[i] } else { mu0[i] }).collect();
        let (ate, _, _) = aipw_from_predictions(&y, &w, &mu1, &mu0, &e, 0.01).unwrap();
        let oracle = (0..n).map(|i| mu1[i] - mu0[i]).sum::<f64>() / n as f64;
        prop_assert!((ate - oracle).abs() <= 1e-13 * oracle.abs().max(1.0));
    }
}
