use dml_core::application::{apply_recipe, column_mean, load_housing, RecipeName, SpecRecipe};
use dml_core::{estimate_naive_ml, estimate_ols_adjusted, estimate_simple_ols, Dataset, LearnerKind, LearnerSpec};

fn housing() -> Dataset {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data");
    load_housing(format!("{root}/housing.csv"), format!("{root}/housing_schema.json")).unwrap()
}

fn recipe(d: &Dataset, name: RecipeName) -> Dataset {
    apply_recipe(d, &SpecRecipe::new(name)).unwrap()
}

#[test]
fn descriptives_match_published_table() {
    let d = housing();
    assert_eq!(d.n_rows(), 506);
    assert!((column_mean(&d, "nox").unwrap() - 5.54).abs() <= 0.01);
    assert!((column_mean(&d, "medv").unwrap() - 22532.0).abs() <= 1.0);
}

#[test]
fn hedonic_ols_row() {
    let hr = recipe(&housing(), RecipeName::Hr);
    assert_eq!(hr.n_covariates(), 12);
    let r = estimate_ols_adjusted(&hr).unwrap();
    assert!((r.theta_hat - -0.0064).abs() <= 1e-4, "{}", r.theta_hat);
    assert!((r.std_error - 0.0011).abs() <= 1e-4, "{}", r.std_error);
}

#[test]
fn simple_and_raw_ols_rows() {
    let raw = recipe(&housing(), RecipeName::Raw);
    let simple = estimate_simple_ols(&raw).unwrap();
    assert!((simple.theta_hat - -0.0146).abs() <= 1e-4);
    assert!((simple.std_error - 0.0011).abs() <= 1e-4);
    let ols = estimate_ols_adjusted(&raw).unwrap();
    assert!((ols.theta_hat - -0.0058).abs() <= 1e-4, "{}", ols.theta_hat);
    assert!((ols.std_error - 0.0011).abs() <= 1e-4);
}

#[test]
fn outcome_is_log_of_scaled_value() {
    let d = housing();
    let hr = recipe(&d, RecipeName::Hr);
    let medv = &d.column("medv").unwrap().values;
    for (l, m) in hr.outcome().iter().zip(medv) {
        assert!((l.exp() - m).abs() / m < 1e-12);
    }
    let nox = &d.column("nox").unwrap().values;
    for (t, x) in hr.treatment().iter().zip(nox) {
        assert_eq!(*t, x * x);
    }
}

#[test]
fn raw_recipe_keeps_values_bit_identical() {
    let d = housing();
    let raw = recipe(&d, RecipeName::Raw);
    for name in raw.covariate_names() {
        let a = &raw.column(name).unwrap().values;
        let b = &d.column(name).unwrap().values;
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()), "{name}");
    }
}

#[test]
fn recipes_are_deterministic_and_idempotent() {
    let d = housing();
    for name in [RecipeName::Hr, RecipeName::Raw, RecipeName::Flex] {
        let r = SpecRecipe::new(name);
        let once = apply_recipe(&d, &r).unwrap();
        assert_eq!(once, apply_recipe(&d, &r).unwrap());
        assert_eq!(once, apply_recipe(&once, &r).unwrap());
    }
    assert_eq!(recipe(&d, RecipeName::Flex).n_covariates(), 89);
}

#[test]
fn naive_boosting_row() {
    let raw = recipe(&housing(), RecipeName::Raw);
    let spec = LearnerSpec::default_for(LearnerKind::GradientBoost).with_seed(42);
    let r = estimate_naive_ml(&raw, &spec).unwrap();
    assert!((-0.016..=-0.011).contains(&r.theta_hat), "{}", r.theta_hat);
}
