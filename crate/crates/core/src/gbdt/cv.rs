//! Stratified k-fold cross-validation, grid search and the comparison of
//! receiver-ranking variables.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{classification_metrics, MetricsReport};
use super::{predict_table, train_gbdt, GbdtHyperParams};
use crate::error::{Error, Result};
use crate::features::{build_dataset_from, EventFeatures, FeatureParams, FeatureTable, InfiniteRanking, RankingVariable};

/// Fold index for every row. Each class is shuffled under `seed` and dealt
/// round-robin, continuing where the previous class stopped, so per-fold
/// class counts differ by at most one.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidParam(format!("k must be >= 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(Error::Data(format!(
                "cannot stratify: class {class} has {} samples for {k} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for i in idx {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub hyperparameters: GbdtHyperParams,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    /// Metrics over the pooled out-of-fold predictions.
    pub pooled: MetricsReport,
}

/// k-fold CV of one configuration. Imputation medians are recomputed from
/// each training fold and applied to both sides of the split.
pub fn cross_validate(
    table: &FeatureTable,
    hp: &GbdtHyperParams,
    folds: &[usize],
    k: usize,
    threshold: f64,
) -> Result<CvResult> {
    let labels = table.labels();
    let mut oof = vec![0.0; table.len()];
    let mut fold_accuracy = Vec::with_capacity(k);
    for fold in 0..k {
        let train_idx: Vec<usize> = (0..table.len()).filter(|&i| folds[i] != fold).collect();
        let valid_idx: Vec<usize> = (0..table.len()).filter(|&i| folds[i] == fold).collect();
        if valid_idx.is_empty() {
            return Err(Error::Data(format!("fold {fold} is empty")));
        }
        let train = table.subset(&train_idx);
        let medians = train.observed_medians()?;
        let train = train.reimputed(&medians);
        let valid = table.subset(&valid_idx).reimputed(&medians);
        let model = train_gbdt(&train, hp)?;
        let probs = predict_table(&model, &valid)?;
        let report = classification_metrics(&valid.labels(), &probs, threshold)?;
        fold_accuracy.push(report.accuracy);
        for (i, p) in valid_idx.iter().zip(probs) {
            oof[*i] = p;
        }
    }
    let mean_accuracy = fold_accuracy.iter().sum::<f64>() / k as f64;
    Ok(CvResult {
        hyperparameters: *hp,
        fold_accuracy,
        mean_accuracy,
        pooled: classification_metrics(&labels, &oof, threshold)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_index: usize,
    pub best: GbdtHyperParams,
    pub results: Vec<CvResult>,
}

impl GridSearchResult {
    pub fn best_result(&self) -> &CvResult {
        &self.results[self.best_index]
    }
}

/// Pick the configuration with the highest mean CV accuracy; ties go to the
/// earlier grid entry. All configurations share one fold assignment.
pub fn grid_search_cv(
    table: &FeatureTable,
    grid: &[GbdtHyperParams],
    k: usize,
    seed: u64,
    threshold: f64,
) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::InvalidParam("hyperparameter grid is empty".into()));
    }
    let folds = stratified_folds(&table.labels(), k, seed)?;
    let mut results = Vec::with_capacity(grid.len());
    let mut best_index = 0;
    for (i, hp) in grid.iter().enumerate() {
        let r = cross_validate(table, hp, &folds, k, threshold)?;
        log::info!(
            "grid {}/{}: depth {} lr {} trees {} -> mean accuracy {:.4}",
            i + 1,
            grid.len(),
            hp.max_depth,
            hp.learning_rate,
            hp.n_trees,
            r.mean_accuracy
        );
        if r.mean_accuracy > results.get(best_index).map_or(f64::NEG_INFINITY, |b: &CvResult| b.mean_accuracy) {
            best_index = i;
        }
        results.push(r);
    }
    Ok(GridSearchResult {
        best_index,
        best: grid[best_index],
        results,
    })
}

/// max_depth {3, 5} x learning_rate {0.1, 0.3} x n_trees {50, 100, 200},
/// lambda 1, gamma 0, no subsampling.
pub fn default_grid(seed: u64) -> Vec<GbdtHyperParams> {
    let mut grid = Vec::new();
    for max_depth in [3, 5] {
        for learning_rate in [0.1, 0.3] {
            for n_trees in [50, 100, 200] {
                grid.push(GbdtHyperParams {
                    n_trees,
                    max_depth,
                    learning_rate,
                    min_child_weight: 1.0,
                    l2_lambda: 1.0,
                    gamma: 0.0,
                    subsample: 1.0,
                    seed,
                });
            }
        }
    }
    grid
}

/// Mean CV accuracies reported for n = 3 on the licensed league corpus,
/// kept as a reference column.
pub const REFERENCE_RANKING_ACCURACY: [(RankingVariable, f64); 4] = [
    (RankingVariable::FastSpaceVel, 0.512),
    (RankingVariable::DistBall, 0.559),
    (RankingVariable::TimeToPlayer, 0.538),
    (RankingVariable::TimeToPassline, 0.521),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub variable: RankingVariable,
    pub mean_accuracy: f64,
    pub best: GbdtHyperParams,
    pub reference_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingComparison {
    pub n: usize,
    pub infinite_ranking: InfiniteRanking,
    pub rows: Vec<RankingRow>,
    pub best: RankingVariable,
}

/// Build one dataset per ranking variable and grid-search each.
pub fn compare_ranking_variables(
    events: &[EventFeatures],
    params: &FeatureParams,
    grid: &[GbdtHyperParams],
    k: usize,
    seed: u64,
    threshold: f64,
) -> Result<RankingComparison> {
    let mut rows = Vec::with_capacity(4);
    for variable in RankingVariable::ALL {
        let p = FeatureParams {
            ranking: variable,
            ..*params
        };
        let (table, _) = build_dataset_from(events, &p)?;
        let gs = grid_search_cv(&table, grid, k, seed, threshold)?;
        let reference = REFERENCE_RANKING_ACCURACY
            .iter()
            .find(|(v, _)| *v == variable)
            .map(|(_, a)| *a)
            .unwrap_or(f64::NAN);
        rows.push(RankingRow {
            variable,
            mean_accuracy: gs.best_result().mean_accuracy,
            best: gs.best,
            reference_accuracy: reference,
        });
    }
    let best = rows
        .iter()
        .fold(None::<&RankingRow>, |acc, r| match acc {
            Some(b) if b.mean_accuracy >= r.mean_accuracy => Some(b),
            _ => Some(r),
        })
        .map(|r| r.variable)
        .expect("four rows");
    Ok(RankingComparison {
        n: params.n,
        infinite_ranking: params.infinite_ranking,
        rows,
        best,
    })
}

pub fn format_ranking_report(c: &RankingComparison) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n = {}  (+inf ranked {:?})", c.n, c.infinite_ranking);
    let _ = writeln!(out, "{:<18} {:>13} {:>10}", "ranking variable", "cv accuracy", "reference");
    for r in &c.rows {
        let mark = if r.variable == c.best { " *" } else { "" };
        let _ = writeln!(
            out,
            "{:<18} {:>13.4} {:>10.3}{}",
            r.variable.as_str(),
            r.mean_accuracy,
            r.reference_accuracy,
            mark
        );
    }
    out
}
