use dml_core::simulation::{generate, CoefficientLaw, DgpSpec, FunctionalForm};
use dml_core::{estimate_simple_ols, ColumnRole};
use proptest::prelude::*;

/// Type-7 quartiles and lower-step tie rule, computed independently.
fn oracle_step(x: &[f64], levels: [f64; 4]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        let h = (s.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(s.len() - 1);
        s[lo] + (h - lo as f64) * (s[hi] - s[lo])
    };
    let (q1, q2, q3) = (q(0.25), q(0.5), q(0.75));
    x.iter()
        .map(|&v| {
            if v <= q1 {
                levels[0]
            } else if v <= q2 {
                levels[1]
            } else if v <= q3 {
                levels[2]
            } else {
                levels[3]
            }
        })
        .collect()
}

#[test]
fn baseline_equations_reproduce_emitted_columns_bit_exactly() {
    for seed in [1u64, 7, 42] {
        let draw = generate(&DgpSpec::baseline(500, seed)).unwrap();
        let d = &draw.dataset;
        let x: Vec<&[f64]> = (1..=4).map(|j| d.column(&format!("x{j}")).unwrap().values.as_slice()).collect();
        let step = oracle_step(x[2], [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0]);
        let c = &draw.confounders;
        assert!(c.delta.iter().chain(&c.gamma).all(|&v| v == 0.1));
        for i in 0..500 {
            let terms = [x[0][i], x[1][i] * x[1][i], x[0][i] * x[1][i], step[i], x[3][i] * x[3][i] * x[3][i]];
            let mut w = draw.alpha0;
            for (t, dl) in terms.iter().zip(&c.delta) {
                w += dl * t;
            }
            w += draw.eps0[i];
            let mut y = draw.alpha1 + 1.0 * w;
            for (t, g) in terms.iter().zip(&c.gamma) {
                y += g * t;
            }
            y += draw.eps1[i];
            assert_eq!(w.to_bits(), d.treatment()[i].to_bits());
            assert_eq!(y.to_bits(), d.outcome()[i].to_bits());
        }
    }
}

#[test]
fn covariate_columns_are_the_latent_draw() {
    let draw = generate(&DgpSpec::baseline(100, 3)).unwrap();
    for j in 0..4 {
        let col = &draw.dataset.column(&format!("x{}", j + 1)).unwrap().values;
        assert_eq!(col.as_slice(), draw.latent.column(j).to_vec().as_slice());
    }
}

#[test]
fn zero_confounding_leaves_simple_ols_unbiased() {
    let mut spec = DgpSpec::baseline(5000, 11);
    spec.coefficient_law = CoefficientLaw::Fixed(0.0);
    let draw = generate(&spec).unwrap();
    let r = estimate_simple_ols(&draw.dataset).unwrap();
    assert!((r.theta_hat - 1.0).abs() < 4.0 * r.std_error);
    let w = draw.dataset.treatment();
    let x1 = &draw.dataset.column("x1").unwrap().values;
    let corr = pearson(w, x1);
    assert!(corr.abs() < 0.06, "{corr}");
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Partial correlation of `x` and `a` given `b`.
fn partial(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let (rxa, rxb, rab) = (pearson(x, a), pearson(x, b), pearson(a, b));
    (rxa - rxb * rab) / ((1.0 - rxb * rxb) * (1.0 - rab * rab)).sqrt()
}

#[test]
fn colliders_depend_on_both_treatment_and_outcome() {
    let mut spec = DgpSpec::baseline(10_000, 5);
    spec.colliders_instead = true;
    let draw = generate(&spec).unwrap();
    let d = &draw.dataset;
    assert_eq!(d.covariate_names(), vec!["xcoll1", "xcoll2", "xcoll3", "xcoll4", "xcoll5"]);
    let (w, y) = (d.treatment(), d.outcome());
    let c = &d.column("xcoll1").unwrap().values;
    assert!(partial(c, w, y).abs() > 0.05);
    assert!(partial(c, y, w).abs() > 0.05);
}

#[test]
fn hidden_confounder_is_not_emitted() {
    let mut spec = DgpSpec::baseline(50, 2);
    spec.unobserved_confounder = true;
    let draw = generate(&spec).unwrap();
    assert_eq!(draw.dataset.n_covariates(), 4);
    assert_eq!(draw.latent.ncols(), 5);
    assert!(draw.dataset.columns().iter().all(|c| c.role != ColumnRole::Instrument));
    let sigma = draw.sigma();
    assert_eq!(sigma[[4, 4]], 1.0);
    assert!((0..4).all(|j| sigma[[4, j]] == 0.0 && sigma[[j, 4]] == 0.0));
}

#[test]
fn hidden_confounder_is_independent_of_the_covariates() {
    let mut spec = DgpSpec::baseline(20_000, 11);
    spec.unobserved_confounder = true;
    let draw = generate(&spec).unwrap();
    let u = draw.latent.column(4).to_vec();
    for j in 0..4 {
        let x = draw.latent.column(j).to_vec();
        assert!(pearson(&x, &u).abs() < 0.04, "column {j}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn identical_specs_give_identical_draws(seed in any::<u64>(), p in 1usize..8, form in 0usize..6) {
        let forms = [
            FunctionalForm::Linear,
            FunctionalForm::Ushaped,
            FunctionalForm::Step,
            FunctionalForm::Cubic,
            FunctionalForm::RandomPerConfounder,
            FunctionalForm::Interactions,
        ];
        let form = if p < 2 && form == 5 { FunctionalForm::Linear } else { forms[form] };
        let spec = DgpSpec::extended(60, p, form, seed);
        prop_assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn same_sign_and_decay(seed in any::<u64>(), p in 1usize..12, mult in 1u32..5) {
        let mut spec = DgpSpec::extended(20, p, FunctionalForm::Linear, seed);
        spec.conf_strength_multiplier = mult;
        let draw = generate(&spec).unwrap();
        let c = &draw.confounders;
        for j in 0..p {
            prop_assert_eq!(c.gamma[j].signum(), c.delta[j].signum());
            let decay = 1.0 / (j + 1) as f64;
            prop_assert_eq!(c.delta[j].abs(), draw.delta_magnitude[j] * decay);
            prop_assert_eq!(c.gamma[j].abs(), draw.gamma_magnitude[j] * decay * f64::from(mult));
        }
    }

    #[test]
    fn step_form_has_four_balanced_levels(seed in any::<u64>(), n in 40usize..300) {
        let spec = DgpSpec::extended(n, 1, FunctionalForm::Step, seed);
        let draw = generate(&spec).unwrap();
        let t = draw.confounders.terms.column(0).to_vec();
        for level in [-3.0, -1.0, 1.0, 3.0] {
            let c = t.iter().filter(|&&v| v == level).count() as f64;
            prop_assert!((c - n as f64 / 4.0).abs() <= 1.0 + 1e-9, "level {} count {}", level, c);
        }
    }
}
