//! Exact Shapley attribution for the boosted trees.
//!
//! [`tree_shap`] is the polynomial-time path-dependent algorithm: each tree
//! is walked once while tracking, for every feature on the current path,
//! the weight of feature subsets that would reach the node. Features absent
//! from a coalition are marginalized by following both children in
//! proportion to their training cover. [`brute_force_shapley`] evaluates
//! the same value function over all 2^M coalitions and serves as its
//! oracle. Attributions are in margin (log-odds) units.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::gbdt::{GbdtModel, Node, Tree};

/// Largest feature count accepted by the exhaustive oracle.
pub const BRUTE_FORCE_MAX_FEATURES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    /// base_score plus every tree's cover-weighted expected output.
    pub base_value: f64,
    pub values: Vec<f64>,
    /// Model margin for the explained row.
    pub margin: f64,
}

impl ShapExplanation {
    pub fn reconstructed(&self) -> f64 {
        self.base_value + self.values.iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    weight: f64,
}

fn extend_path(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: Option<usize>) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    });
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one_fraction * path[i].weight * (i + 1) as f64 / d1;
        path[i].weight = zero_fraction * path[i].weight * (depth - i) as f64 / d1;
    }
}

fn unwind_path(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next_one * d1 / ((i + 1) as f64 * one);
            next_one = tmp - path[i].weight * zero * (depth - i) as f64 / d1;
        } else {
            path[i].weight = path[i].weight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

fn unwound_path_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one = path[depth].weight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next_one * d1 / ((i + 1) as f64 * one);
            total += tmp;
            next_one = path[i].weight - tmp * zero * (depth - i) as f64 / d1;
        } else {
            total += path[i].weight / zero * d1 / (depth - i) as f64;
        }
    }
    total
}

fn recurse(
    tree: &Tree,
    row: &[f64],
    phi: &mut [f64],
    node: usize,
    mut path: Vec<PathElement>,
    zero_fraction: f64,
    one_fraction: f64,
    feature: Option<usize>,
) {
    extend_path(&mut path, zero_fraction, one_fraction, feature);
    match &tree.nodes[node] {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_path_sum(&path, i);
                let el = path[i];
                if let Some(f) = el.feature {
                    phi[f] += w * (el.one_fraction - el.zero_fraction) * value;
                }
            }
        }
        Node::Split {
            feature: split,
            threshold,
            left,
            right,
            cover,
        } => {
            let (hot, cold) = if row[*split] <= *threshold {
                (*left, *right)
            } else {
                (*right, *left)
            };
            let hot_zero = tree.nodes[hot].cover() / cover;
            let cold_zero = tree.nodes[cold].cover() / cover;
            let (mut incoming_zero, mut incoming_one) = (1.0, 1.0);
            if let Some(k) = path.iter().position(|e| e.feature == Some(*split)) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind_path(&mut path, k);
            }
            recurse(
                tree,
                row,
                phi,
                hot,
                path.clone(),
                hot_zero * incoming_zero,
                incoming_one,
                Some(*split),
            );
            recurse(tree, row, phi, cold, path, cold_zero * incoming_zero, 0.0, Some(*split));
        }
    }
}

/// Attribution of one tree's output for a row.
pub fn tree_shap_single(tree: &Tree, row: &[f64], n_features: usize) -> Vec<f64> {
    let mut phi = vec![0.0; n_features];
    recurse(tree, row, &mut phi, 0, Vec::new(), 1.0, 1.0, None);
    phi
}

fn check_model(model: &GbdtModel, row: &[f64]) -> Result<()> {
    if row.len() != model.n_features() {
        return Err(Error::Model(format!(
            "row has {} values, model expects {}",
            row.len(),
            model.n_features()
        )));
    }
    for t in &model.trees {
        if t.nodes.iter().any(|n| !(n.cover() > 0.0)) {
            return Err(Error::Model("tree lacks cover counts; retrain to record them".into()));
        }
    }
    Ok(())
}

/// Exact path-dependent Shapley values of the model margin for `row`.
pub fn tree_shap(model: &GbdtModel, row: &[f64]) -> Result<ShapExplanation> {
    check_model(model, row)?;
    let row = model.resolve_row(row)?;
    let mut values = vec![0.0; model.n_features()];
    let mut base_value = model.base_score;
    for tree in &model.trees {
        base_value += tree.expected_value();
        for (v, p) in values.iter_mut().zip(tree_shap_single(tree, &row, model.n_features())) {
            *v += p;
        }
    }
    Ok(ShapExplanation {
        base_value,
        values,
        margin: model.margin_with(&row, model.trees.len()),
    })
}

/// Expected tree output when only features in `known` (bit mask) are fixed
/// to the row's values.
fn conditional_expectation(tree: &Tree, row: &[f64], known: u32, node: usize) -> f64 {
    match &tree.nodes[node] {
        Node::Leaf { value, .. } => *value,
        Node::Split {
            feature,
            threshold,
            left,
            right,
            cover,
        } => {
            if known & (1 << feature) != 0 {
                let next = if row[*feature] <= *threshold { *left } else { *right };
                conditional_expectation(tree, row, known, next)
            } else {
                (tree.nodes[*left].cover() * conditional_expectation(tree, row, known, *left)
                    + tree.nodes[*right].cover() * conditional_expectation(tree, row, known, *right))
                    / cover
            }
        }
    }
}

/// Shapley values by enumerating every coalition of features.
///
/// Uses the same cover-weighted value function as [`tree_shap`]; cost is
/// exponential in the feature count, which is capped at 12.
pub fn brute_force_shapley(model: &GbdtModel, row: &[f64]) -> Result<Vec<f64>> {
    let m = model.n_features();
    if m > BRUTE_FORCE_MAX_FEATURES {
        return Err(Error::InvalidParam(format!(
            "brute-force Shapley supports at most {BRUTE_FORCE_MAX_FEATURES} features, got {m}"
        )));
    }
    check_model(model, row)?;
    let row = model.resolve_row(row)?;
    let subsets = 1usize << m;
    let value: Vec<f64> = (0..subsets)
        .map(|s| {
            model
                .trees
                .iter()
                .map(|t| conditional_expectation(t, &row, s as u32, 0))
                .sum::<f64>()
        })
        .collect();
    // weight[k] = k! (m - k - 1)! / m!
    let mut fact = vec![1.0f64; m + 1];
    for i in 1..=m {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for s in (0..subsets).filter(|s| s & bit == 0) {
            let k = s.count_ones() as usize;
            let w = fact[k] * fact[m - k - 1] / fact[m];
            *p += w * (value[s | bit] - value[s]);
        }
    }
    Ok(phi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean_abs_shap: f64,
    /// 1 = most important.
    pub rank: usize,
    /// Signed attribution quantiles at [`SUMMARY_QUANTILES`].
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSummary {
    /// In column order.
    pub features: Vec<FeatureImportance>,
}

pub const SUMMARY_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl ImportanceSummary {
    /// Features ordered by rank.
    pub fn ranked(&self) -> Vec<&FeatureImportance> {
        let mut v: Vec<&FeatureImportance> = self.features.iter().collect();
        v.sort_by_key(|f| f.rank);
        v
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["feature".to_string(), "mean_abs_shap".to_string(), "rank".to_string()];
        header.extend(SUMMARY_QUANTILES.iter().map(|q| format!("q{:02}", (q * 100.0).round() as u32)));
        w.write_record(&header)?;
        for f in self.ranked() {
            let mut rec = vec![f.feature.clone(), f.mean_abs_shap.to_string(), f.rank.to_string()];
            rec.extend(f.quantiles.iter().map(|q| q.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Explain every row of a table.
pub fn explain_table(model: &GbdtModel, table: &FeatureTable) -> Result<Vec<ShapExplanation>> {
    model.check_columns(&table.columns)?;
    table.samples.iter().map(|s| tree_shap(model, &s.values)).collect()
}

pub fn summarize(columns: &[String], explanations: &[ShapExplanation]) -> ImportanceSummary {
    let m = columns.len();
    let n = explanations.len().max(1) as f64;
    let mut features: Vec<FeatureImportance> = (0..m)
        .map(|j| {
            let mut col: Vec<f64> = explanations.iter().map(|e| e.values[j]).collect();
            let mean_abs = col.iter().map(|v| v.abs()).sum::<f64>() / n;
            col.sort_by(f64::total_cmp);
            FeatureImportance {
                feature: columns[j].clone(),
                mean_abs_shap: mean_abs,
                rank: 0,
                quantiles: SUMMARY_QUANTILES.iter().map(|q| quantile(&col, *q)).collect(),
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        features[b]
            .mean_abs_shap
            .total_cmp(&features[a].mean_abs_shap)
            .then(a.cmp(&b))
    });
    for (r, j) in order.into_iter().enumerate() {
        features[j].rank = r + 1;
    }
    ImportanceSummary { features }
}

/// Mean |phi| per feature over a table, ranked.
pub fn shap_summary(model: &GbdtModel, table: &FeatureTable) -> Result<ImportanceSummary> {
    let ex = explain_table(model, table)?;
    Ok(summarize(&model.columns, &ex))
}

/// Per-row dump: event_id, base_value, one phi column per feature, margin.
pub fn write_row_attributions(path: &Path, table: &FeatureTable, explanations: &[ShapExplanation]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["event_id".to_string(), "base_value".to_string()];
    header.extend(table.columns.iter().map(|c| format!("phi_{c}")));
    header.push("margin".to_string());
    w.write_record(&header)?;
    for (s, e) in table.samples.iter().zip(explanations) {
        let mut rec = vec![s.event_id.clone(), e.base_value.to_string()];
        rec.extend(e.values.iter().map(|v| v.to_string()));
        rec.push(e.margin.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let mut inner = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::{GbdtHyperParams, MODEL_FORMAT, MODEL_VERSION};

    fn model(trees: Vec<Tree>, m: usize, base: f64) -> GbdtModel {
        GbdtModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            columns: (0..m).map(|j| format!("f{j}")).collect(),
            base_score: base,
            hyperparameters: GbdtHyperParams::default(),
            medians: vec![0.0; m],
            training_logloss: vec![],
            trees,
        }
    }

    fn stump(feature: usize, threshold: f64, lo: f64, hi: f64, c_lo: f64, c_hi: f64) -> Tree {
        Tree {
            nodes: vec![
                Node::Split {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                    cover: c_lo + c_hi,
                },
                Node::Leaf { value: lo, cover: c_lo },
                Node::Leaf { value: hi, cover: c_hi },
            ],
        }
    }

    #[test]
    fn single_leaf_has_no_attribution() {
        let m = model(vec![Tree::leaf(0.4, 10.0)], 3, -0.1);
        let e = tree_shap(&m, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.values, vec![0.0; 3]);
        assert!((e.base_value - 0.3).abs() < 1e-15);
    }

    #[test]
    fn stump_attributes_everything_to_its_feature() {
        let m = model(vec![stump(1, 0.5, -1.0, 2.0, 3.0, 1.0)], 3, 0.0);
        let e = tree_shap(&m, &[0.0, 1.0, 0.0]).unwrap();
        assert!((e.base_value - (-1.0 * 0.75 + 2.0 * 0.25)).abs() < 1e-15);
        assert!((e.values[1] - 2.25).abs() < 1e-12, "{:?}", e.values);
        assert_eq!(e.values[0], 0.0);
        assert_eq!(e.values[2], 0.0);
    }

    #[test]
    fn single_feature_oracle() {
        let m = model(vec![stump(0, 0.5, -1.0, 2.0, 3.0, 1.0)], 1, 0.3);
        let phi = brute_force_shapley(&m, &[1.0]).unwrap();
        let margin = m.margin(&[1.0]).unwrap();
        let expected = m.base_score + m.trees[0].expected_value();
        assert!((phi[0] - (margin - expected)).abs() < 1e-12);
    }

    #[test]
    fn duplicate_features_share_credit() {
        let m = model(
            vec![stump(0, 0.5, -1.0, 1.0, 2.0, 2.0), stump(1, 0.5, -1.0, 1.0, 2.0, 2.0)],
            2,
            0.0,
        );
        let phi = brute_force_shapley(&m, &[1.0, 1.0]).unwrap();
        assert!((phi[0] - phi[1]).abs() < 1e-15);
    }

    #[test]
    fn brute_force_rejects_wide_models() {
        let m = model(vec![Tree::leaf(0.0, 1.0)], 13, 0.0);
        assert!(brute_force_shapley(&m, &[0.0; 13]).is_err());
    }

    #[test]
    fn missing_covers_rejected() {
        let m = model(vec![stump(0, 0.5, -1.0, 1.0, 0.0, 0.0)], 1, 0.0);
        assert!(tree_shap(&m, &[0.0]).is_err());
    }

    #[test]
    fn summary_of_one_row_is_abs_phi() {
        let m = model(vec![stump(1, 0.5, -1.0, 2.0, 3.0, 1.0)], 2, 0.0);
        let table = FeatureTable {
            columns: m.columns.clone(),
            samples: vec![crate::features::PassSample {
                event_id: "x".into(),
                label: 1,
                selected: vec![],
                values: vec![0.0, 0.0],
                imputed: vec![false, false],
            }],
        };
        let s = shap_summary(&m, &table).unwrap();
        let e = tree_shap(&m, &[0.0, 0.0]).unwrap();
        assert_eq!(s.features[1].mean_abs_shap, e.values[1].abs());
        assert_eq!(s.features[1].rank, 1);
        assert_eq!(s.features[0].mean_abs_shap, 0.0);
    }

    #[test]
    fn constant_model_has_zero_importance() {
        let m = model(vec![Tree::leaf(0.2, 5.0)], 2, 0.0);
        let table = FeatureTable {
            columns: m.columns.clone(),
            samples: (0..3)
                .map(|i| crate::features::PassSample {
                    event_id: i.to_string(),
                    label: 1,
                    selected: vec![],
                    values: vec![i as f64, 1.0],
                    imputed: vec![false, false],
                })
                .collect(),
        };
        let s = shap_summary(&m, &table).unwrap();
        assert!(s.features.iter().all(|f| f.mean_abs_shap == 0.0));
        assert_eq!(s.ranked()[0].feature, "f0");
    }
}
