//! Greedy CART regression trees shared by the forest and boosting learners.
//!
//! Each feature's rows are sorted once per fit. A tree then works on
//! "entries" (one per bootstrap copy of a row) laid out in per-feature order
//! arrays; a node owns the same contiguous range `[lo, hi)` of every order
//! array, and splitting is a stable partition of that range.

use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(f64),
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn is_stump_leaf(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, left as usize).max(walk(nodes, right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// Prediction for row `i` of `x`.
    pub fn predict_row(&self, x: ArrayView2<f64>, i: usize) -> f64 {
        let mut node = 0usize;
        loop {
            match self.nodes[node] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[[i, feature as usize]] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    fn predict_cols(&self, cols: &[Vec<f64>], i: usize) -> f64 {
        let mut node = 0usize;
        loop {
            match self.nodes[node] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if cols[feature as usize][i] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeConfig {
    pub max_depth: usize,
    /// Minimum number of entries in each child of a split.
    pub min_leaf: usize,
    /// Features examined per split; values `>= p` mean all features.
    pub mtry: usize,
    /// L2 penalty on leaf values: a leaf predicts `sum / (count + l2)`.
    pub l2: f64,
}

/// Column-major copy of the training features with per-feature row orders.
pub struct TrainingData {
    pub cols: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
}

impl TrainingData {
    pub fn new(x: ArrayView2<f64>) -> Self {
        let cols: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
        let order = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..c.len() as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]));
                idx
            })
            .collect();
        TrainingData { cols, order }
    }

    pub fn n_rows(&self) -> usize {
        self.cols.first().map_or(0, |c| c.len())
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }

    /// Prediction of `tree` for training row `i`.
    pub fn predict(&self, tree: &Tree, i: usize) -> f64 {
        tree.predict_cols(&self.cols, i)
    }
}

/// Grows one tree on `target`, where `counts[i]` is the multiplicity of row
/// `i` in the sample (0 excludes it). `rng` is only consulted when `mtry`
/// is smaller than the feature count.
pub fn grow<R: Rng>(
    data: &TrainingData,
    target: &[f64],
    counts: &[u32],
    cfg: &TreeConfig,
    rng: &mut R,
) -> Tree {
    let p = data.n_features();
    let n = data.n_rows();
    debug_assert_eq!(target.len(), n);
    debug_assert_eq!(counts.len(), n);

    let mut first = vec![0u32; n];
    let mut entry_row: Vec<u32> = Vec::new();
    for i in 0..n {
        first[i] = entry_row.len() as u32;
        for _ in 0..counts[i] {
            entry_row.push(i as u32);
        }
    }
    let m_total = entry_row.len();
    if m_total == 0 {
        return Tree {
            nodes: vec![Node::Leaf(0.0)],
        };
    }
    let mut orders: Vec<Vec<u32>> = data
        .order
        .iter()
        .map(|ord| {
            let mut o = Vec::with_capacity(m_total);
            for &row in ord {
                let r = row as usize;
                for e in first[r]..first[r] + counts[r] {
                    o.push(e);
                }
            }
            o
        })
        .collect();
    let y: Vec<f64> = entry_row.iter().map(|&r| target[r as usize]).collect();

    let mut go_left = vec![false; m_total];
    let mut scratch: Vec<u32> = Vec::with_capacity(m_total);
    let mut features: Vec<usize> = (0..p).collect();
    let mtry = cfg.mtry.clamp(1, p.max(1));

    let mut nodes = vec![Node::Leaf(0.0)];
    let mut stack = vec![(0usize, 0usize, m_total, 0usize)];
    while let Some((id, lo, hi, depth)) = stack.pop() {
        let m = hi - lo;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut running = 0.0;
        for (k, &e) in orders[0][lo..hi].iter().enumerate() {
            let v = y[e as usize];
            sum += v;
            sumsq += v * v;
            running += (v - running) / (k + 1) as f64;
        }

        let mut best: Option<(f64, usize, usize, f64)> = None;
        if depth < cfg.max_depth && m >= 2 * cfg.min_leaf.max(1) && p > 0 {
            if mtry < p {
                for i in 0..mtry {
                    let j = rng.random_range(i..p);
                    features.swap(i, j);
                }
            }
            let parent = sum * sum / (m as f64 + cfg.l2);
            for &f in &features[..if mtry < p { mtry } else { p }] {
                let col = &data.cols[f];
                let ord = &orders[f][lo..hi];
                let mut left_sum = 0.0;
                for k in 0..m - 1 {
                    let e = ord[k] as usize;
                    left_sum += y[e];
                    let n_left = k + 1;
                    let n_right = m - n_left;
                    if n_left < cfg.min_leaf || n_right < cfg.min_leaf {
                        continue;
                    }
                    let a = col[entry_row[e] as usize];
                    let b = col[entry_row[ord[k + 1] as usize] as usize];
                    if !(a < b) {
                        continue;
                    }
                    let right_sum = sum - left_sum;
                    let gain = left_sum * left_sum / (n_left as f64 + cfg.l2)
                        + right_sum * right_sum / (n_right as f64 + cfg.l2)
                        - parent;
                    if best.is_none_or(|(g, ..)| gain > g) {
                        let mid = 0.5 * (a + b);
                        let threshold = if mid >= a && mid < b { mid } else { a };
                        best = Some((gain, f, n_left, threshold));
                    }
                }
            }
        }

        match best {
            Some((gain, f, n_left, threshold)) if gain > 1e-12 * sumsq && gain > 0.0 => {
                for &e in &orders[f][lo..lo + n_left] {
                    go_left[e as usize] = true;
                }
                for ord in orders.iter_mut() {
                    scratch.clear();
                    scratch.extend(ord[lo..hi].iter().filter(|&&e| go_left[e as usize]));
                    scratch.extend(ord[lo..hi].iter().filter(|&&e| !go_left[e as usize]));
                    ord[lo..hi].copy_from_slice(&scratch);
                }
                for &e in &orders[0][lo..lo + n_left] {
                    go_left[e as usize] = false;
                }
                let left = nodes.len();
                nodes.push(Node::Leaf(0.0));
                nodes.push(Node::Leaf(0.0));
                nodes[id] = Node::Split {
                    feature: f as u32,
                    threshold,
                    left: left as u32,
                    right: left as u32 + 1,
                };
                stack.push((left + 1, lo + n_left, hi, depth + 1));
                stack.push((left, lo, lo + n_left, depth + 1));
            }
            _ if cfg.l2 > 0.0 => nodes[id] = Node::Leaf(sum / (m as f64 + cfg.l2)),
            _ => nodes[id] = Node::Leaf(running),
        }
    }
    Tree { nodes }
}
