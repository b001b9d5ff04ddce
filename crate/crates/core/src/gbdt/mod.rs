//! Second-order gradient boosting on logistic loss.
//!
//! Splits are found by exact greedy search over per-feature sorted row
//! lists. Rows with equal feature values are ordered by their full content,
//! so the trees do not depend on the order rows are supplied in. A row goes
//! left when `x[feature] <= threshold`; thresholds are the largest training
//! value on the left side.

mod cv;
mod metrics;

pub use cv::{
    compare_ranking_variables, cross_validate, default_grid, format_ranking_report, grid_search_cv,
    stratified_folds, CvResult, GridSearchResult, RankingComparison, RankingRow, REFERENCE_RANKING_ACCURACY,
};
pub use metrics::{classification_metrics, format_table1, ClassMetrics, ConfusionMatrix, MetricsReport, Table1Row};

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;

pub const MODEL_FORMAT: &str = "tactica-gbdt";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbdtHyperParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Minimum hessian sum in each child.
    pub min_child_weight: f64,
    pub l2_lambda: f64,
    /// Minimum gain for a split.
    pub gamma: f64,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbdtHyperParams {
    fn default() -> Self {
        GbdtHyperParams {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_child_weight: 1.0,
            l2_lambda: 1.0,
            gamma: 0.0,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbdtHyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.n_trees < 1 {
            return bad("n_trees must be >= 1".into());
        }
        if self.max_depth < 1 {
            return bad("max_depth must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate must lie in (0, 1], got {}", self.learning_rate));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad(format!("subsample must lie in (0, 1], got {}", self.subsample));
        }
        if !(self.min_child_weight >= 0.0 && self.l2_lambda >= 0.0 && self.gamma >= 0.0) {
            return bad("min_child_weight, l2_lambda and gamma must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Training rows that reached this node.
        cover: f64,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

/// Regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value, cover }],
        }
    }

    /// Index of the leaf a row lands in.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        match &self.nodes[self.leaf_index(row)] {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Node indices visited by a row, root first.
    pub fn decision_path(&self, row: &[f64]) -> Vec<usize> {
        let mut path = vec![0];
        let mut i = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } = &self.nodes[i]
        {
            i = if row[*feature] <= *threshold { *left } else { *right };
            path.push(i);
        }
        path
    }

    /// Cover-weighted mean leaf value.
    pub fn expected_value(&self) -> f64 {
        let root = self.nodes[0].cover();
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { value, cover } => Some(value * cover / root),
                Node::Split { .. } => None,
            })
            .sum()
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    /// Children point forward, every split has two children, covers add up.
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Model("empty tree".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if !(n.cover().is_finite() && n.cover() > 0.0) {
                return Err(Error::Model(format!("node {i} lacks a positive cover count")));
            }
            if let Node::Split {
                feature, left, right, ..
            } = n
            {
                if *left <= i || *right <= i || *left >= self.nodes.len() || *right >= self.nodes.len() || left == right {
                    return Err(Error::Model(format!("node {i} has invalid children")));
                }
                if *feature >= n_features {
                    return Err(Error::Model(format!("node {i} uses feature {feature} of {n_features}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub format: String,
    pub version: u32,
    pub columns: Vec<String>,
    /// Log-odds of the training success rate.
    pub base_score: f64,
    pub hyperparameters: GbdtHyperParams,
    /// Imputation medians, used for non-finite inputs at inference.
    pub medians: Vec<f64>,
    /// Full-sample training logloss after each boosting round.
    pub training_logloss: Vec<f64>,
    pub trees: Vec<Tree>,
}

pub fn sigmoid(m: f64) -> f64 {
    1.0 / (1.0 + (-m).exp())
}

fn logloss(labels: &[u8], margins: &[f64]) -> f64 {
    let n = labels.len() as f64;
    labels
        .iter()
        .zip(margins)
        .map(|(&y, &m)| {
            // log(1 + e^m) - y m, evaluated stably.
            let softplus = if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
            softplus - f64::from(y) * m
        })
        .sum::<f64>()
        / n
}

impl GbdtModel {
    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    /// Fill non-finite inputs with the stored medians.
    pub fn resolve_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_features() {
            return Err(Error::Model(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.n_features()
            )));
        }
        Ok(row
            .iter()
            .zip(&self.medians)
            .map(|(v, m)| if v.is_finite() { *v } else { *m })
            .collect())
    }

    /// base_score plus the outputs of the first `n_trees` trees, on a resolved row.
    pub fn margin_with(&self, row: &[f64], n_trees: usize) -> f64 {
        self.base_score + self.trees.iter().take(n_trees).map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn margin(&self, row: &[f64]) -> Result<f64> {
        let row = self.resolve_row(row)?;
        Ok(self.margin_with(&row, self.trees.len()))
    }

    pub fn check_columns(&self, columns: &[String]) -> Result<()> {
        if columns != self.columns.as_slice() {
            return Err(Error::Model(format!(
                "feature columns do not match the model ({} vs {} columns)",
                columns.len(),
                self.columns.len()
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "unsupported model format {} v{}",
                self.format, self.version
            )));
        }
        if self.medians.len() != self.columns.len() {
            return Err(Error::Model("medians do not match columns".into()));
        }
        for t in &self.trees {
            t.validate(self.columns.len())?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let model: GbdtModel = serde_json::from_reader(BufReader::new(file))?;
        model.validate()?;
        Ok(model)
    }
}

/// Success probability for one row, strictly inside (0, 1).
pub fn predict_proba(model: &GbdtModel, row: &[f64]) -> Result<f64> {
    let p = sigmoid(model.margin(row)?);
    Ok(p.clamp(f64::EPSILON, 1.0 - f64::EPSILON))
}

pub fn predict_table(model: &GbdtModel, table: &FeatureTable) -> Result<Vec<f64>> {
    model.check_columns(&table.columns)?;
    table.samples.iter().map(|s| predict_proba(model, &s.values)).collect()
}

/// Train on an imputed feature table.
pub fn train_gbdt(table: &FeatureTable, hp: &GbdtHyperParams) -> Result<GbdtModel> {
    let medians = table.observed_medians()?;
    train_rows(&table.rows(), &table.labels(), &table.columns, medians, hp)
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Builder<'a> {
    cols: &'a [Vec<f64>],
    grad: Vec<f64>,
    hess: Vec<f64>,
    hp: &'a GbdtHyperParams,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
}

impl Builder<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.hp.l2_lambda;
        if denom <= 0.0 {
            0.0
        } else {
            g * g / denom
        }
    }

    fn find_split(&self, lists: &[Vec<usize>], g_total: f64, h_total: f64) -> Option<Split> {
        let parent = self.score(g_total, h_total);
        let mut best: Option<Split> = None;
        for (j, list) in lists.iter().enumerate() {
            let col = &self.cols[j];
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..list.len().saturating_sub(1) {
                let r = list[k];
                gl += self.grad[r];
                hl += self.hess[r];
                let (x, x_next) = (col[r], col[list[k + 1]]);
                if x >= x_next {
                    continue;
                }
                let (gr, hr) = (g_total - gl, h_total - hl);
                if hl < self.hp.min_child_weight || hr < self.hp.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent) - self.hp.gamma;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Split {
                        feature: j,
                        threshold: x,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, lists: Vec<Vec<usize>>, depth: usize) -> usize {
        let idx = self.nodes.len();
        let (mut g, mut h) = (0.0, 0.0);
        for &r in &lists[0] {
            g += self.grad[r];
            h += self.hess[r];
        }
        let cover = lists[0].len() as f64;
        let leaf_value = {
            let denom = h + self.hp.l2_lambda;
            if denom > 0.0 {
                -g / denom * self.hp.learning_rate
            } else {
                0.0
            }
        };
        self.nodes.push(Node::Leaf {
            value: leaf_value,
            cover,
        });
        if depth >= self.hp.max_depth || lists[0].len() < 2 {
            return idx;
        }
        let Some(split) = self.find_split(&lists, g, h) else {
            return idx;
        };
        let col = &self.cols[split.feature];
        for &r in &lists[0] {
            self.goes_left[r] = col[r] <= split.threshold;
        }
        let mut left_lists = Vec::with_capacity(lists.len());
        let mut right_lists = Vec::with_capacity(lists.len());
        for list in lists {
            let (l, r): (Vec<usize>, Vec<usize>) = list.into_iter().partition(|&r| self.goes_left[r]);
            left_lists.push(l);
            right_lists.push(r);
        }
        let left = self.build(left_lists, depth + 1);
        let right = self.build(right_lists, depth + 1);
        self.nodes[idx] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            cover,
        };
        idx
    }
}

/// Compare two rows by their full content (features, then label).
fn content_order(cols: &[Vec<f64>], labels: &[u8], a: usize, b: usize) -> Ordering {
    for col in cols {
        let o = col[a].total_cmp(&col[b]);
        if o != Ordering::Equal {
            return o;
        }
    }
    labels[a].cmp(&labels[b])
}

/// Train on row-major data with binary labels.
pub fn train_rows(
    rows: &[Vec<f64>],
    labels: &[u8],
    columns: &[String],
    medians: Vec<f64>,
    hp: &GbdtHyperParams,
) -> Result<GbdtModel> {
    hp.validate()?;
    let n = rows.len();
    let f = columns.len();
    if n < 2 {
        return Err(Error::Data(format!("training needs at least 2 rows, got {n}")));
    }
    if labels.len() != n {
        return Err(Error::Data("labels and rows differ in length".into()));
    }
    if rows.iter().any(|r| r.len() != f) {
        return Err(Error::Data("row width does not match the column count".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("training data contains non-finite values; impute first".into()));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::Data("labels must be 0 or 1".into()));
    }
    if positives == 0 || positives == n {
        return Err(Error::Data("training data contains a single class".into()));
    }
    let mean = positives as f64 / n as f64;
    let base_score = (mean / (1.0 - mean)).ln();

    let cols: Vec<Vec<f64>> = (0..f).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let presorted: Vec<Vec<usize>> = (0..f)
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| {
                cols[j][a]
                    .total_cmp(&cols[j][b])
                    .then_with(|| content_order(&cols, labels, a, b))
            });
            idx
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut margins = vec![base_score; n];
    let mut trees = Vec::with_capacity(hp.n_trees);
    let mut history = Vec::with_capacity(hp.n_trees);
    let sample_size = ((hp.subsample * n as f64).round() as usize).clamp(1, n);
    let mut in_sample = vec![true; n];
    for _ in 0..hp.n_trees {
        if sample_size < n {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            in_sample.iter_mut().for_each(|s| *s = false);
            for &i in &idx[..sample_size] {
                in_sample[i] = true;
            }
        }
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - f64::from(labels[i]);
            hess[i] = p * (1.0 - p);
        }
        let lists: Vec<Vec<usize>> = presorted
            .iter()
            .map(|l| l.iter().copied().filter(|&r| in_sample[r]).collect())
            .collect();
        let mut builder = Builder {
            cols: &cols,
            grad,
            hess,
            hp,
            nodes: Vec::new(),
            goes_left: vec![false; n],
        };
        builder.build(lists, 0);
        let tree = Tree { nodes: builder.nodes };
        for (i, m) in margins.iter_mut().enumerate() {
            *m += tree.predict(&rows[i]);
        }
        history.push(logloss(labels, &margins));
        trees.push(tree);
    }
    Ok(GbdtModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        columns: columns.to_vec(),
        base_score,
        hyperparameters: *hp,
        medians,
        training_logloss: history,
        trees,
    })
}

/// Logloss of the base score alone, the reference for round 1.
pub fn initial_logloss(model: &GbdtModel, n: usize, labels: &[u8]) -> f64 {
    logloss(labels, &vec![model.base_score; n])
}
