use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, TrainingData, Tree, TreeConfig};
use super::TuningReport;
use crate::error::{DmlError, Result};
use crate::seeding::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Minimum number of bootstrap entries in each child of a split.
    pub min_leaf: usize,
    /// Explicit mtry candidates; the default set is derived from the feature count.
    pub mtry_candidates: Option<Vec<usize>>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            min_leaf: 5,
            mtry_candidates: None,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(DmlError::config("random forest needs at least one tree"));
        }
        if self.min_leaf < 1 {
            return Err(DmlError::config("random forest min_leaf must be >= 1"));
        }
        if let Some(c) = &self.mtry_candidates {
            if c.is_empty() || c.contains(&0) {
                return Err(DmlError::config("mtry candidates must be non-empty and positive"));
            }
        }
        Ok(())
    }
}

/// `{p/3, sqrt(p), p/2, p}` rounded down, at least 1, deduplicated, ascending.
pub fn default_mtry(p: usize) -> Vec<usize> {
    let mut c = vec![p / 3, (p as f64).sqrt().floor() as usize, p / 2, p];
    for v in c.iter_mut() {
        *v = (*v).max(1);
    }
    c.sort_unstable();
    c.dedup();
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<Tree>,
    n_features: usize,
    pub mtry: usize,
    pub oob_mse: f64,
    y_min: f64,
    y_max: f64,
}

impl ForestModel {
    pub fn feature_count(&self) -> usize {
        self.n_features
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        (0..x.nrows())
            .map(|i| {
                let mut avg = 0.0;
                for (t, tree) in self.trees.iter().enumerate() {
                    avg += (tree.predict_row(x, i) - avg) / (t + 1) as f64;
                }
                avg.clamp(self.y_min, self.y_max)
            })
            .collect()
    }
}

/// Bagged regression forest with `mtry` tuned by out-of-bag error. Every
/// candidate sees the same bootstrap samples.
pub fn fit_random_forest(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &ForestParams,
    seed: u64,
) -> Result<(ForestModel, TuningReport)> {
    let (n, p) = x.dim();
    if n < 2 {
        return Err(DmlError::config("random forest needs at least 2 rows"));
    }
    let mut candidates = params.mtry_candidates.clone().unwrap_or_else(|| default_mtry(p));
    for c in candidates.iter_mut() {
        *c = (*c).min(p.max(1));
    }
    candidates.sort_unstable();
    candidates.dedup();

    let data = TrainingData::new(x);
    let target = y.to_vec();
    let y_min = target.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = target.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut errors = Vec::with_capacity(candidates.len());
    let mut best: Option<(f64, usize, Vec<Tree>)> = None;
    let mut counts = vec![0u32; n];
    for &mtry in &candidates {
        let cfg = TreeConfig {
            max_depth: usize::MAX,
            min_leaf: params.min_leaf,
            mtry,
            l2: 0.0,
        };
        let mut oob_sum = vec![0.0; n];
        let mut oob_cnt = vec![0u32; n];
        let mut trees = Vec::with_capacity(params.n_trees);
        for t in 0..params.n_trees {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            counts.iter_mut().for_each(|c| *c = 0);
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1;
            }
            let tree = grow(&data, &target, &counts, &cfg, &mut rng);
            for i in (0..n).filter(|&i| counts[i] == 0) {
                oob_sum[i] += data.predict(&tree, i);
                oob_cnt[i] += 1;
            }
            trees.push(tree);
        }
        let (mut sse, mut m) = (0.0, 0usize);
        for i in 0..n {
            if oob_cnt[i] > 0 {
                let r = target[i] - oob_sum[i] / oob_cnt[i] as f64;
                sse += r * r;
                m += 1;
            }
        }
        let err = if m > 0 { sse / m as f64 } else { f64::NAN };
        errors.push(err);
        // Ties keep the smallest mtry.
        let better = match &best {
            None => true,
            Some((e, ..)) => err < *e || (!e.is_finite() && err.is_finite()),
        };
        if better {
            best = Some((err, mtry, trees));
        }
    }
    let report = TuningReport::select(
        "mtry",
        candidates.iter().map(|&c| c as f64).collect(),
        errors,
    );
    let (oob_mse, mtry, trees) = best.expect("at least one candidate");
    debug_assert_eq!(report.chosen, mtry as f64);
    Ok((
        ForestModel {
            trees,
            n_features: p,
            mtry,
            oob_mse,
            y_min,
            y_max,
        },
        report,
    ))
}
