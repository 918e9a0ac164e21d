//! Synthetic data-generating processes: the fixed-coefficient baseline, the
//! functional-form variants and the case grids used for Monte-Carlo studies.

use ndarray::{s, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnRole, Dataset};
use crate::error::{DmlError, Result};
use crate::metrics::quantile_sorted;
use crate::seeding::derive_seed;

/// Step levels of the baseline treatment and outcome equations.
pub const BASELINE_STEPS: [f64; 4] = [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0];
/// Step levels of the step functional form.
pub const FORM_STEPS: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];
/// Coefficient of the hidden confounder in both equations.
pub const UNOBSERVED_COEFFICIENT: f64 = 0.5;
/// Number of collider columns.
pub const N_COLLIDERS: usize = 5;
/// Standard deviation of the entries of the covariance factor.
pub const FACTOR_SD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law", content = "value")]
pub enum CoefficientLaw {
    Fixed(f64),
    StdNormalSameSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalForm {
    Linear,
    Ushaped,
    Interactions,
    Step,
    Cubic,
    RandomPerConfounder,
    BaselineMix,
}

impl FunctionalForm {
    pub fn name(self) -> &'static str {
        match self {
            FunctionalForm::Linear => "linear",
            FunctionalForm::Ushaped => "ushaped",
            FunctionalForm::Interactions => "interactions",
            FunctionalForm::Step => "step",
            FunctionalForm::Cubic => "cubic",
            FunctionalForm::RandomPerConfounder => "random",
            FunctionalForm::BaselineMix => "baseline",
        }
    }
}

/// Form resolved for a single column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnForm {
    Linear,
    Ushaped,
    Interaction { partner: usize },
    Step,
    Cubic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpSpec {
    pub n: usize,
    pub p_conf: usize,
    pub beta: f64,
    pub coefficient_law: CoefficientLaw,
    pub conf_strength_multiplier: u32,
    pub functional_form: FunctionalForm,
    pub n_noise: usize,
    pub n_outcome_only: usize,
    pub n_treatment_only: usize,
    pub unobserved_confounder: bool,
    pub colliders_instead: bool,
    /// Bernoulli treatment with a logistic propensity and a constant effect `beta`.
    pub binary_treatment: bool,
    /// Adds an exogenous standard normal instrument entering W with this coefficient.
    pub instrument_strength: Option<f64>,
    pub seed: u64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        DgpSpec::baseline(1000, 0)
    }
}

impl DgpSpec {
    /// Four confounders with fixed coefficients 0.1 and the mixed baseline terms.
    pub fn baseline(n: usize, seed: u64) -> Self {
        DgpSpec {
            n,
            p_conf: 4,
            beta: 1.0,
            coefficient_law: CoefficientLaw::Fixed(0.1),
            conf_strength_multiplier: 1,
            functional_form: FunctionalForm::BaselineMix,
            n_noise: 0,
            n_outcome_only: 0,
            n_treatment_only: 0,
            unobserved_confounder: false,
            colliders_instead: false,
            binary_treatment: false,
            instrument_strength: None,
            seed,
        }
    }

    /// Randomly drawn same-sign coefficients with `1/j` decay.
    pub fn extended(n: usize, p_conf: usize, form: FunctionalForm, seed: u64) -> Self {
        DgpSpec {
            p_conf,
            coefficient_law: CoefficientLaw::StdNormalSameSign,
            functional_form: form,
            ..DgpSpec::baseline(n, seed)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(DmlError::config(format!("n must be >= 4, got {}", self.n)));
        }
        if self.p_conf < 1 {
            return Err(DmlError::config("p_conf must be >= 1"));
        }
        if self.conf_strength_multiplier < 1 {
            return Err(DmlError::config("confounding multiplier must be >= 1"));
        }
        if !self.beta.is_finite() {
            return Err(DmlError::config("beta must be finite"));
        }
        if let CoefficientLaw::Fixed(c) = self.coefficient_law {
            if !c.is_finite() {
                return Err(DmlError::config("fixed coefficient must be finite"));
            }
        }
        if self.colliders_instead && self.unobserved_confounder {
            return Err(DmlError::config(
                "colliders and an unobserved confounder cannot be combined",
            ));
        }
        if self.functional_form == FunctionalForm::BaselineMix {
            if !self.colliders_instead && self.p_conf != 4 {
                return Err(DmlError::config("the baseline mix needs exactly 4 confounders"));
            }
            for (what, m) in [("outcome-only", self.n_outcome_only), ("treatment-only", self.n_treatment_only)] {
                if m != 0 && m != 4 {
                    return Err(DmlError::config(format!(
                        "with the baseline mix the {what} block must have 0 or 4 columns, got {m}"
                    )));
                }
            }
        }
        if self.functional_form == FunctionalForm::Interactions && self.p_conf < 2 && !self.colliders_instead {
            return Err(DmlError::config("interactions need at least 2 confounders"));
        }
        Ok(())
    }

    fn block_sizes(&self) -> Blocks {
        let conf = if self.colliders_instead { 0 } else { self.p_conf };
        Blocks {
            conf,
            noise: self.n_noise,
            xp: self.n_outcome_only,
            xz: self.n_treatment_only,
            u: usize::from(self.unobserved_confounder),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Blocks {
    conf: usize,
    noise: usize,
    xp: usize,
    xz: usize,
    u: usize,
}

impl Blocks {
    fn total(&self) -> usize {
        self.conf + self.noise + self.xp + self.xz + self.u
    }
}

/// Terms and coefficients of one block of covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDraw {
    /// First latent column of the block.
    pub offset: usize,
    pub width: usize,
    /// Resolved per-column forms; empty for the baseline mix.
    pub forms: Vec<ColumnForm>,
    /// Transformed terms entering the equations, one column per coefficient.
    pub terms: Array2<f64>,
    /// Outcome-equation coefficients (zero when the block skips the outcome).
    pub gamma: Vec<f64>,
    /// Treatment-equation coefficients (zero when the block skips the treatment).
    pub delta: Vec<f64>,
}

/// Everything drawn for one dataset, sufficient to re-evaluate W and Y.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpDraw {
    pub spec: DgpSpec,
    pub dataset: Dataset,
    pub true_beta: f64,
    /// Covariance factor; the latent covariates have covariance `A'A`. The
    /// hidden confounder is an independent standard normal, so its row and
    /// column of `A` are the unit vector.
    pub factor: Array2<f64>,
    /// Latent covariates in block order: confounders, noise, outcome-only,
    /// treatment-only, hidden confounder.
    pub latent: Array2<f64>,
    pub confounders: BlockDraw,
    pub outcome_only: BlockDraw,
    pub treatment_only: BlockDraw,
    /// Same-sign magnitudes before decay and multiplier, per confounder term.
    pub gamma_magnitude: Vec<f64>,
    pub delta_magnitude: Vec<f64>,
    pub alpha0: f64,
    pub alpha1: f64,
    pub eps0: Vec<f64>,
    pub eps1: Vec<f64>,
    pub instrument: Option<Vec<f64>>,
    /// Treatment probabilities for the binary design.
    pub propensity: Option<Vec<f64>>,
    pub collider_noise: Option<Array2<f64>>,
}

impl DgpDraw {
    /// Sample covariance `A'A` of the latent covariates.
    pub fn sigma(&self) -> Array2<f64> {
        self.factor.t().dot(&self.factor)
    }
}

/// `n x d` draw from `N(0, A'A)` where `A` has i.i.d. `N(0, 0.5^2)` entries.
/// Returns the sample and `A`.
pub fn draw_covariates<R: Rng>(n: usize, d: usize, rng: &mut R) -> (Array2<f64>, Array2<f64>) {
    let normal = Normal::new(0.0, FACTOR_SD).expect("valid sd");
    let a = Array2::from_shape_fn((d, d), |_| normal.sample(rng));
    let z = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    (z.dot(&a), a)
}

/// Maps values to `levels` by sample quartiles (type 7); a value equal to a
/// quartile takes the lower level.
pub fn step_map(x: ArrayView1<f64>, levels: [f64; 4]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let q = [
        quantile_sorted(&s, 0.25),
        quantile_sorted(&s, 0.5),
        quantile_sorted(&s, 0.75),
    ];
    x.iter()
        .map(|&v| {
            let k = q.iter().take_while(|&&qk| v > qk).count();
            levels[k]
        })
        .collect()
}

/// Per-column forms for `p` columns. The random mode picks each of the five
/// single forms with probability 0.2; a lone column drawn as an interaction
/// is paired with itself.
pub fn resolve_forms<R: Rng>(p: usize, form: FunctionalForm, rng: &mut R) -> Result<Vec<ColumnForm>> {
    let partner = |i: usize, rng: &mut R| {
        if p < 2 {
            return i;
        }
        let j = rng.random_range(0..p - 1);
        if j >= i {
            j + 1
        } else {
            j
        }
    };
    let single = |f: FunctionalForm| match f {
        FunctionalForm::Linear => ColumnForm::Linear,
        FunctionalForm::Ushaped => ColumnForm::Ushaped,
        FunctionalForm::Step => ColumnForm::Step,
        FunctionalForm::Cubic => ColumnForm::Cubic,
        _ => unreachable!(),
    };
    match form {
        FunctionalForm::Interactions => {
            if p < 2 {
                return Err(DmlError::config("interactions need at least 2 columns"));
            }
            Ok((0..p)
                .map(|i| ColumnForm::Interaction {
                    partner: partner(i, rng),
                })
                .collect())
        }
        FunctionalForm::RandomPerConfounder => Ok((0..p)
            .map(|i| match rng.random_range(0..5) {
                0 => ColumnForm::Linear,
                1 => ColumnForm::Ushaped,
                2 => ColumnForm::Interaction {
                    partner: partner(i, rng),
                },
                3 => ColumnForm::Step,
                _ => ColumnForm::Cubic,
            })
            .collect()),
        FunctionalForm::BaselineMix => Err(DmlError::config(
            "the baseline mix has no per-column form",
        )),
        f => Ok(vec![single(f); p]),
    }
}

/// Applies resolved forms column by column; interactions use the untransformed partner.
pub fn evaluate_forms(x: &Array2<f64>, forms: &[ColumnForm]) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), forms.len()));
    for (j, f) in forms.iter().enumerate() {
        let col = x.column(j);
        match *f {
            ColumnForm::Linear => out.column_mut(j).assign(&col),
            ColumnForm::Ushaped => out.column_mut(j).assign(&col.mapv(|v| v * v)),
            ColumnForm::Interaction { partner } => {
                let other = x.column(partner);
                for i in 0..x.nrows() {
                    out[[i, j]] = col[i] * other[i];
                }
            }
            ColumnForm::Step => {
                for (i, v) in step_map(col, FORM_STEPS).into_iter().enumerate() {
                    out[[i, j]] = v;
                }
            }
            ColumnForm::Cubic => out.column_mut(j).assign(&col.mapv(|v| 0.25 * v * v * v)),
        }
    }
    out
}

/// The five baseline terms `x1, x2^2, x1*x2, step(x3), x4^3` of a 4-column block.
pub fn baseline_terms(x: &Array2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != 4 {
        return Err(DmlError::Shape {
            context: "baseline terms",
            expected: 4,
            found: x.ncols(),
        });
    }
    let step = step_map(x.column(2), BASELINE_STEPS);
    Ok(Array2::from_shape_fn((x.nrows(), 5), |(i, t)| match t {
        0 => x[[i, 0]],
        1 => x[[i, 1]] * x[[i, 1]],
        2 => x[[i, 0]] * x[[i, 1]],
        3 => step[i],
        _ => x[[i, 3]] * x[[i, 3]] * x[[i, 3]],
    }))
}

/// Transforms a matrix with a functional form; the baseline mix yields five terms.
pub fn apply_functional_form<R: Rng>(x: &Array2<f64>, form: FunctionalForm, rng: &mut R) -> Result<Array2<f64>> {
    if form == FunctionalForm::BaselineMix {
        return baseline_terms(x);
    }
    let forms = resolve_forms(x.ncols(), form, rng)?;
    Ok(evaluate_forms(x, &forms))
}

fn block_terms<R: Rng>(
    x: &Array2<f64>,
    form: FunctionalForm,
    rng: &mut R,
) -> Result<(Vec<ColumnForm>, Array2<f64>)> {
    if x.ncols() == 0 {
        return Ok((Vec::new(), Array2::zeros((x.nrows(), 0))));
    }
    if form == FunctionalForm::BaselineMix {
        return Ok((Vec::new(), baseline_terms(x)?));
    }
    let forms = resolve_forms(x.ncols(), form, rng)?;
    let terms = evaluate_forms(x, &forms);
    Ok((forms, terms))
}

/// `(gamma, delta, gamma magnitudes, delta magnitudes)` for `t` terms.
fn draw_coefficients<R: Rng>(t: usize, law: CoefficientLaw, multiplier: u32, rng: &mut R) -> [Vec<f64>; 4] {
    let mult = f64::from(multiplier);
    match law {
        CoefficientLaw::Fixed(c) => [vec![c * mult; t], vec![c; t], vec![c.abs(); t], vec![c.abs(); t]],
        CoefficientLaw::StdNormalSameSign => {
            let (mut g, mut d, mut gm, mut dm) = (vec![], vec![], vec![], vec![]);
            for j in 1..=t {
                let mag_g = rng.sample::<f64, _>(StandardNormal).abs();
                let mag_d = rng.sample::<f64, _>(StandardNormal).abs();
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let decay = 1.0 / j as f64;
                g.push(sign * mag_g * decay * mult);
                d.push(sign * mag_d * decay);
                gm.push(mag_g);
                dm.push(mag_d);
            }
            [g, d, gm, dm]
        }
    }
}

fn slice_cols(x: &Array2<f64>, from: usize, width: usize) -> Array2<f64> {
    x.slice(ndarray::s![.., from..from + width]).to_owned()
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Draws one dataset. Equal specs give bit-identical draws.
///
/// Sums are accumulated left to right in the order: intercept, confounder
/// terms, outcome-only or treatment-only terms, hidden confounder,
/// instrument, noise.
pub fn generate(spec: &DgpSpec) -> Result<DgpDraw> {
    spec.validate()?;
    let n = spec.n;
    let b = spec.block_sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let observed = b.total() - b.u;
    let (mut latent, mut factor) = if observed > 0 {
        draw_covariates(n, observed, &mut rng)
    } else {
        (Array2::zeros((n, 0)), Array2::zeros((0, 0)))
    };
    if b.u == 1 {
        let u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        latent.push_column(ArrayView1::from(&u)).expect("row count matches");
        let mut a = Array2::zeros((observed + 1, observed + 1));
        a.slice_mut(s![..observed, ..observed]).assign(&factor);
        a[[observed, observed]] = 1.0;
        factor = a;
    }

    let conf_x = slice_cols(&latent, 0, b.conf);
    let (conf_forms, conf_terms) = block_terms(&conf_x, spec.functional_form, &mut rng)?;
    let xp_off = b.conf + b.noise;
    let xz_off = xp_off + b.xp;
    let u_off = xz_off + b.xz;
    let (xp_forms, xp_terms) = block_terms(&slice_cols(&latent, xp_off, b.xp), spec.functional_form, &mut rng)?;
    let (xz_forms, xz_terms) = block_terms(&slice_cols(&latent, xz_off, b.xz), spec.functional_form, &mut rng)?;

    let [gamma, delta, gamma_magnitude, delta_magnitude] =
        draw_coefficients(conf_terms.ncols(), spec.coefficient_law, spec.conf_strength_multiplier, &mut rng);
    let [gamma_p, ..] = draw_coefficients(xp_terms.ncols(), spec.coefficient_law, 1, &mut rng);
    let [_, delta_z, ..] = draw_coefficients(xz_terms.ncols(), spec.coefficient_law, 1, &mut rng);

    let alpha0: f64 = rng.sample(StandardNormal);
    let alpha1: f64 = rng.sample(StandardNormal);
    let eps0: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let eps1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let instrument: Option<Vec<f64>> = spec
        .instrument_strength
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect());

    let mut w = vec![0.0; n];
    let mut propensity = spec.binary_treatment.then(|| vec![0.0; n]);
    for i in 0..n {
        let mut v = alpha0;
        for (j, d) in delta.iter().enumerate() {
            v += d * conf_terms[[i, j]];
        }
        for (j, d) in delta_z.iter().enumerate() {
            v += d * xz_terms[[i, j]];
        }
        if b.u == 1 {
            v += UNOBSERVED_COEFFICIENT * latent[[i, u_off]];
        }
        if let (Some(s), Some(z)) = (spec.instrument_strength, &instrument) {
            v += s * z[i];
        }
        w[i] = match &mut propensity {
            Some(p) => {
                p[i] = sigmoid(v);
                0.0
            }
            None => v + eps0[i],
        };
    }
    if let Some(p) = &propensity {
        for i in 0..n {
            w[i] = f64::from(rng.random::<f64>() < p[i]);
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut v = alpha1 + spec.beta * w[i];
        for (j, g) in gamma.iter().enumerate() {
            v += g * conf_terms[[i, j]];
        }
        for (j, g) in gamma_p.iter().enumerate() {
            v += g * xp_terms[[i, j]];
        }
        if b.u == 1 {
            v += UNOBSERVED_COEFFICIENT * latent[[i, u_off]];
        }
        y[i] = v + eps1[i];
    }

    let mut columns = vec![
        Column::new("y", y.clone(), ColumnRole::Outcome),
        Column::new("w", w.clone(), ColumnRole::Treatment),
    ];
    if let Some(z) = &instrument {
        columns.push(Column::new("z", z.clone(), ColumnRole::Instrument));
    }
    let mut push_block = |prefix: &str, off: usize, width: usize| {
        for j in 0..width {
            columns.push(Column::new(
                format!("{prefix}{}", j + 1),
                latent.column(off + j).to_vec(),
                ColumnRole::Covariate,
            ));
        }
    };
    push_block("x", 0, b.conf);
    push_block("e", b.conf, b.noise);
    push_block("xp", xp_off, b.xp);
    push_block("xz", xz_off, b.xz);

    let collider_noise = if spec.colliders_instead {
        let noise = Array2::from_shape_fn((n, N_COLLIDERS), |_| rng.sample::<f64, _>(StandardNormal));
        for (k, col) in collider_columns(&w, &y, &noise).into_iter().enumerate() {
            columns.push(Column::new(format!("xcoll{}", k + 1), col, ColumnRole::Covariate));
        }
        Some(noise)
    } else {
        None
    };

    let block = |offset, width, forms, terms, gamma: Vec<f64>, delta: Vec<f64>| BlockDraw {
        offset,
        width,
        forms,
        terms,
        gamma,
        delta,
    };
    let (np, nz) = (xp_terms.ncols(), xz_terms.ncols());
    Ok(DgpDraw {
        spec: spec.clone(),
        dataset: Dataset::new(columns)?,
        true_beta: spec.beta,
        factor,
        confounders: block(0, b.conf, conf_forms, conf_terms, gamma, delta),
        outcome_only: block(xp_off, b.xp, xp_forms, xp_terms, gamma_p, vec![0.0; np]),
        treatment_only: block(xz_off, b.xz, xz_forms, xz_terms, vec![0.0; nz], delta_z),
        latent,
        gamma_magnitude,
        delta_magnitude,
        alpha0,
        alpha1,
        eps0,
        eps1,
        instrument,
        propensity,
        collider_noise,
    })
}

/// Collider columns caused by treatment and outcome through the baseline
/// forms: `w + y`, `w^2 + y^2`, `w*y`, `step(w) + step(y)`, `w^3 + y^3`, each
/// plus standard normal noise.
pub fn collider_columns(w: &[f64], y: &[f64], noise: &Array2<f64>) -> Vec<Vec<f64>> {
    let sw = step_map(ArrayView1::from(w), BASELINE_STEPS);
    let sy = step_map(ArrayView1::from(y), BASELINE_STEPS);
    (0..N_COLLIDERS)
        .map(|k| {
            (0..w.len())
                .map(|i| {
                    let (a, b) = (w[i], y[i]);
                    let base = match k {
                        0 => a + b,
                        1 => a * a + b * b,
                        2 => a * b,
                        3 => sw[i] + sy[i],
                        _ => a * a * a + b * b * b,
                    };
                    base + noise[[i, k]]
                })
                .collect()
        })
        .collect()
}

/// Seed of Monte-Carlo replication `rep` of a cell.
pub fn replication_seed(base: u64, rep: usize) -> u64 {
    derive_seed(base ^ 0x005e_ed0f_d670_u64, rep as u64)
}

/// One grid point of a case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseCell {
    pub label: String,
    pub spec: DgpSpec,
    /// Fold count fixed by the grid; otherwise the runner's default applies.
    #[serde(default)]
    pub folds: Option<usize>,
    /// Repetition count fixed by the grid.
    #[serde(default)]
    pub repetitions: Option<usize>,
    /// Covariate-name prefixes removed before estimation.
    #[serde(default)]
    pub drop_prefixes: Vec<String>,
}

impl CaseCell {
    fn new(label: impl Into<String>, spec: DgpSpec) -> Self {
        CaseCell {
            label: label.into(),
            spec,
            folds: None,
            repetitions: None,
            drop_prefixes: Vec::new(),
        }
    }

    /// Generates replication `rep` and removes the dropped covariates.
    pub fn dataset(&self, rep: usize) -> Result<(DgpDraw, Dataset)> {
        let spec = self.spec.clone().with_seed(replication_seed(self.spec.seed, rep));
        let draw = generate(&spec)?;
        let d = draw.dataset.without_columns(|c| {
            c.role == ColumnRole::Covariate
                && self.drop_prefixes.iter().any(|p| {
                    c.name.strip_prefix(p.as_str()).is_some_and(|rest| rest.chars().all(|ch| ch.is_ascii_digit()))
                })
        })?;
        Ok((draw, d))
    }
}

/// Cells and estimator grid of a simulation case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSuite {
    pub case: String,
    pub replications: usize,
    pub methods: Vec<String>,
    pub cells: Vec<CaseCell>,
}

pub const ALL_METHODS: [&str; 9] = [
    "simple_ols",
    "ols",
    "naive_gb",
    "dml_ols",
    "dml_lasso",
    "dml_spline",
    "dml_rf",
    "dml_gb",
    "dml_mlp",
];

pub const DEFAULT_REPLICATIONS: usize = 100;
pub const CASE4_SIZES: [usize; 9] = [20, 50, 100, 200, 500, 1000, 2000, 5000, 10000];
const SMALL_SIZES: [usize; 4] = [20, 100, 500, 1000];

/// Baseline suite: one cell at `n = 1000` with all nine methods.
pub fn baseline_suite(seed: u64) -> CaseSuite {
    CaseSuite {
        case: "baseline".into(),
        replications: DEFAULT_REPLICATIONS,
        methods: ALL_METHODS.iter().map(|s| s.to_string()).collect(),
        cells: vec![CaseCell::new("baseline", DgpSpec::baseline(1000, seed))],
    }
}

/// Grid of case `id` (1 to 11). DML with OLS learners is left out of the
/// extended cases.
pub fn case_suite(id: u32, seed: u64) -> Result<CaseSuite> {
    use FunctionalForm::*;
    let ext = |n, p, form| DgpSpec::extended(n, p, form, seed);
    let base = DgpSpec::baseline(1000, seed);
    let cells: Vec<CaseCell> = match id {
        1 => [Linear, Ushaped, Interactions, Step, Cubic, RandomPerConfounder]
            .into_iter()
            .map(|f| CaseCell::new(f.name(), ext(1000, 5, f)))
            .collect(),
        2 => (1..=5)
            .map(|m| {
                let mut s = ext(1000, 5, RandomPerConfounder);
                s.conf_strength_multiplier = m;
                CaseCell::new(format!("multiplier={m}"), s)
            })
            .collect(),
        3 => [1, 2, 5, 10, 20, 50]
            .into_iter()
            .map(|p| CaseCell::new(format!("p_conf={p}"), ext(1000, p, RandomPerConfounder)))
            .collect(),
        4 => [RandomPerConfounder, Linear]
            .into_iter()
            .flat_map(|f| {
                CASE4_SIZES
                    .into_iter()
                    .map(move |n| CaseCell::new(format!("{}/n={n}", f.name()), DgpSpec::extended(n, 5, f, seed)))
            })
            .collect(),
        5 => [0, 2, 5, 10, 20]
            .into_iter()
            .map(|k| {
                let mut s = ext(1000, 5, RandomPerConfounder);
                s.n_noise = k;
                CaseCell::new(format!("n_noise={k}"), s)
            })
            .collect(),
        6 | 7 => {
            let mut s = base.clone();
            let prefix = if id == 6 {
                s.n_outcome_only = 4;
                "xp"
            } else {
                s.n_treatment_only = 4;
                "xz"
            };
            let mut without = CaseCell::new(format!("without_{prefix}"), s.clone());
            without.drop_prefixes = vec![prefix.to_string()];
            vec![CaseCell::new(format!("with_{prefix}"), s), without]
        }
        8 => {
            let mut hidden = base.clone();
            hidden.unobserved_confounder = true;
            vec![CaseCell::new("observed", base), CaseCell::new("unobserved", hidden)]
        }
        9 => {
            let mut coll = base.clone();
            coll.colliders_instead = true;
            vec![CaseCell::new("confounders", base), CaseCell::new("colliders", coll)]
        }
        10 => SMALL_SIZES
            .into_iter()
            .flat_map(|n| {
                [2, 5, 10].into_iter().map(move |k| {
                    let mut c = CaseCell::new(format!("n={n}/K={k}"), DgpSpec::extended(n, 5, RandomPerConfounder, seed));
                    c.folds = Some(k);
                    c
                })
            })
            .collect(),
        11 => SMALL_SIZES
            .into_iter()
            .flat_map(|n| {
                [1, 5, 9, 19, 49].into_iter().map(move |s| {
                    let mut c = CaseCell::new(format!("n={n}/S={s}"), DgpSpec::extended(n, 5, RandomPerConfounder, seed));
                    c.repetitions = Some(s);
                    c
                })
            })
            .collect(),
        _ => return Err(DmlError::config(format!("unknown case id {id}; expected 1 to 11"))),
    };
    Ok(CaseSuite {
        case: format!("case{id}"),
        replications: DEFAULT_REPLICATIONS,
        methods: ALL_METHODS
            .iter()
            .filter(|m| **m != "dml_ols")
            .map(|s| s.to_string())
            .collect(),
        cells,
    })
}

impl CaseSuite {
    /// Keeps only cells whose sample size is in `sizes`, when given.
    pub fn restrict_sizes(mut self, sizes: &[usize]) -> Self {
        if !sizes.is_empty() {
            self.cells.retain(|c| sizes.contains(&c.spec.n));
        }
        self
    }
}
