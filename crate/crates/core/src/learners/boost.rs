use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, TrainingData, Tree, TreeConfig};
use super::{tuning_folds, TuningReport};
use crate::error::{DmlError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// L2 penalty on leaf values.
    pub l2: f64,
    pub max_rounds: usize,
    pub patience: usize,
    pub folds: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            learning_rate: 0.3,
            max_depth: 6,
            min_leaf: 1,
            l2: 1.0,
            max_rounds: 200,
            patience: 10,
            folds: 5,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(DmlError::config(format!(
                "learning rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.max_depth < 1 || self.min_leaf < 1 || self.patience < 1 {
            return Err(DmlError::config("boosting depth, min_leaf and patience must be >= 1"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(DmlError::config(format!("boosting l2 must be finite and >= 0, got {}", self.l2)));
        }
        if self.folds < 2 {
            return Err(DmlError::config("boosting CV folds must be >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    base: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
    n_features: usize,
    y_min: f64,
    y_max: f64,
    /// Unclamped training MSE after each round, starting with round 0.
    pub train_mse: Vec<f64>,
}

impl BoostModel {
    pub fn feature_count(&self) -> usize {
        self.n_features
    }

    pub fn rounds(&self) -> usize {
        self.trees.len()
    }

    pub fn base_score(&self) -> f64 {
        self.base
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.predict_rounds(x, self.trees.len())
    }

    /// Prediction using only the first `rounds` trees.
    pub fn predict_rounds(&self, x: ArrayView2<f64>, rounds: usize) -> Array1<f64> {
        (0..x.nrows())
            .map(|i| {
                let boost: f64 = self.trees[..rounds.min(self.trees.len())]
                    .iter()
                    .map(|t| t.predict_row(x, i))
                    .sum();
                (self.base + self.learning_rate * boost).clamp(self.y_min, self.y_max)
            })
            .collect()
    }
}

fn range(y: impl Iterator<Item = f64>) -> (f64, f64) {
    y.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Additive state of one boosting run on a subset of rows.
struct Booster<'a> {
    data: &'a TrainingData,
    y: &'a [f64],
    counts: Vec<u32>,
    score: Vec<f64>,
    residual: Vec<f64>,
    lr: f64,
    cfg: TreeConfig,
}

impl<'a> Booster<'a> {
    fn new(data: &'a TrainingData, y: &'a [f64], rows: &[usize], params: &BoostParams) -> (Self, f64) {
        let n = y.len();
        let mut counts = vec![0u32; n];
        let mut base = 0.0;
        for (k, &i) in rows.iter().enumerate() {
            counts[i] = 1;
            base += (y[i] - base) / (k + 1) as f64;
        }
        let booster = Booster {
            data,
            y,
            counts,
            score: vec![base; n],
            residual: vec![0.0; n],
            lr: params.learning_rate,
            cfg: TreeConfig {
                max_depth: params.max_depth,
                min_leaf: params.min_leaf,
                mtry: usize::MAX,
                l2: params.l2,
            },
        };
        (booster, base)
    }

    fn round(&mut self) -> Tree {
        for i in 0..self.y.len() {
            self.residual[i] = self.y[i] - self.score[i];
        }
        // All features are searched; the generator is never drawn from.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tree = grow(self.data, &self.residual, &self.counts, &self.cfg, &mut rng);
        for i in 0..self.y.len() {
            self.score[i] += self.lr * self.data.predict(&tree, i);
        }
        tree
    }
}

/// Squared-error gradient boosting. The number of rounds is chosen by K-fold
/// CV run in lockstep with early stopping; round 0 is the mean-only model.
pub fn fit_gradient_boost(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &BoostParams,
    seed: u64,
) -> Result<(BoostModel, TuningReport)> {
    let (n, p) = x.dim();
    if n < 10 {
        return Err(DmlError::config(format!(
            "gradient boosting needs at least 10 rows, got {n}"
        )));
    }
    let data = TrainingData::new(x);
    let target = y.to_vec();

    let folds = tuning_folds(n, params.folds, seed)?;
    let mut runs: Vec<(Booster, Vec<usize>, (f64, f64))> = folds
        .iter()
        .map(|(train, test)| {
            let (b, _) = Booster::new(&data, &target, train, params);
            let bounds = range(train.iter().map(|&i| target[i]));
            (b, test.clone(), bounds)
        })
        .collect();
    let cv_error = |runs: &[(Booster, Vec<usize>, (f64, f64))]| -> f64 {
        runs.iter()
            .map(|(b, test, (lo, hi))| {
                test.iter()
                    .map(|&i| {
                        let r = target[i] - b.score[i].clamp(*lo, *hi);
                        r * r
                    })
                    .sum::<f64>()
                    / test.len() as f64
            })
            .sum::<f64>()
            / runs.len() as f64
    };

    let mut errors = vec![cv_error(&runs)];
    let mut best = 0usize;
    if errors[0] > 0.0 {
        for round in 1..=params.max_rounds {
            let mut stalled = true;
            for (b, ..) in runs.iter_mut() {
                let tree = b.round();
                stalled &= tree.nodes() == [super::tree::Node::Leaf(0.0)];
            }
            let err = cv_error(&runs);
            errors.push(err);
            if err < errors[best] {
                best = round;
            }
            if stalled || round - best >= params.patience {
                break;
            }
        }
    }
    let report = TuningReport::select(
        "rounds",
        (0..errors.len()).map(|r| r as f64).collect(),
        errors,
    );
    let rounds = report.chosen as usize;

    let all: Vec<usize> = (0..n).collect();
    let (mut booster, base) = Booster::new(&data, &target, &all, params);
    let sse = |s: &[f64]| s.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
    let mut train_mse = vec![sse(&booster.score)];
    let mut trees = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        trees.push(booster.round());
        train_mse.push(sse(&booster.score));
    }
    let (y_min, y_max) = range(target.iter().copied());
    Ok((
        BoostModel {
            base,
            learning_rate: params.learning_rate,
            trees,
            n_features: p,
            y_min,
            y_max,
            train_mse,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn round_zero_is_the_mean() {
        let x = Array2::from_shape_fn((20, 1), |(i, _)| i as f64);
        let y: Array1<f64> = (0..20).map(|i| (i % 3) as f64).collect();
        let (m, _) = fit_gradient_boost(x.view(), y.view(), &BoostParams::default(), 0).unwrap();
        let mean = y.sum() / 20.0;
        assert!((m.base_score() - mean).abs() < 1e-12);
        assert!(m.predict_rounds(x.view(), 0).iter().all(|&v| (v - mean).abs() < 1e-12));
    }

    #[test]
    fn constant_target_stops_immediately() {
        let x = Array2::from_shape_fn((30, 2), |(i, j)| (i + j) as f64);
        let y = Array1::from_elem(30, -1.3);
        let (m, report) = fit_gradient_boost(x.view(), y.view(), &BoostParams::default(), 0).unwrap();
        assert_eq!(m.rounds(), 0);
        assert_eq!(report.candidates, vec![0.0]);
        assert!(m.predict(x.view()).iter().all(|&v| v == -1.3));
    }

    #[test]
    fn plateau_target_reaches_noise_floor() {
        let sigma = 0.5;
        let gen = |seed: u64, n: usize| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Array2<f64> = Array2::from_shape_fn((n, 1), |_| rng.random_range(0.0..4.0));
            let y: Array1<f64> = (0..n)
                .map(|i| [-3.0, -1.0, 1.0, 3.0][x[[i, 0]].floor() as usize] + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            (x, y)
        };
        let (x, y) = gen(1, 2000);
        let (xt, yt) = gen(2, 5000);
        let (m, _) = fit_gradient_boost(x.view(), y.view(), &BoostParams::default(), 1).unwrap();
        let p = m.predict(xt.view());
        let mse = p.iter().zip(&yt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 5000.0;
        assert!(mse < 1.15 * sigma * sigma, "mse {mse}");
    }

    #[test]
    fn chosen_round_attains_minimum_cv_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array2::from_shape_fn((200, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let y: Array1<f64> = (0..200).map(|i| x[[i, 0]].sin() + rng.sample::<f64, _>(StandardNormal)).collect();
        let (m, report) = fit_gradient_boost(x.view(), y.view(), &BoostParams::default(), 8).unwrap();
        let min = report.errors.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(report.errors[report.chosen_index()], min);
        assert_eq!(m.rounds() as f64, report.chosen);
        assert!(report.candidates.len() <= 201);
    }

    #[test]
    fn too_few_rows_rejected() {
        let x = Array2::<f64>::zeros((9, 1));
        let y = Array1::<f64>::zeros(9);
        assert!(fit_gradient_boost(x.view(), y.view(), &BoostParams::default(), 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn training_mse_never_increases_and_predictions_in_range(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((40, 2), |_| rng.sample::<f64, _>(StandardNormal));
            let y: Array1<f64> = (0..40).map(|i| x[[i, 0]] * x[[i, 1]] + rng.sample::<f64, _>(StandardNormal)).collect();
            let (m, _) = fit_gradient_boost(x.view(), y.view(), &BoostParams::default(), seed).unwrap();
            for w in m.train_mse.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
            let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let probe = Array2::from_shape_fn((30, 2), |_| 4.0 * rng.sample::<f64, _>(StandardNormal));
            for v in m.predict(probe.view()) {
                prop_assert!(v >= lo && v <= hi);
            }
        }
    }
}
