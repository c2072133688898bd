//! Hyperparameter search over the finite grid, one study per fold.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::{AttentionSettings, ProductType};
use crate::error::{Error, Result};
use crate::models::*;
use crate::rng::{derive_seed, SeededRng};
use crate::training::{fit, PreparedFold, RunStatus, TrainSettings};

/// One point of the grid: architecture plus optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub model: ModelConfig,
    pub lr: f64,
    pub lr_step: usize,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !LEARNING_RATES.contains(&self.lr) {
            return Err(Error::OutOfSpace {
                axis: "lr".into(),
                value: self.lr.to_string(),
            });
        }
        if !LR_STEPS.contains(&self.lr_step) {
            return Err(Error::OutOfSpace {
                axis: "lr_step".into(),
                value: self.lr_step.to_string(),
            });
        }
        Ok(())
    }

    /// Grid coordinates, used to find neighbours.
    fn coords(&self) -> Vec<u64> {
        let m = &self.model;
        let mut c = vec![
            m.mlp_layers.iter().fold(0u64, |h, &x| h * 4099 + x as u64),
            m.dropout.to_bits(),
            self.lr.to_bits(),
            self.lr_step as u64,
            m.embedding_size as u64,
        ];
        if let Some(p) = &m.product {
            c.extend([p.product_type as u64, p.output_size as u64]);
        }
        if let Some(a) = &m.attention {
            c.extend([
                a.n_layers as u64,
                a.n_heads as u64,
                a.dropout.to_bits(),
                a.leaky_activation as u64,
                a.residual as u64,
            ]);
        }
        c
    }
}

/// The search grid for one family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub family: Family,
    #[serde(default)]
    pub raw_numeric_input: bool,
}

impl SearchSpace {
    pub fn new(family: Family) -> Self {
        SearchSpace {
            family,
            raw_numeric_input: false,
        }
    }

    /// Every point, in a fixed order.
    pub fn points(&self) -> Vec<Hyperparams> {
        let mut shared = Vec::with_capacity(144);
        for layers in MLP_LAYER_PRESETS {
            for dropout in DROPOUTS {
                for lr in LEARNING_RATES {
                    for lr_step in LR_STEPS {
                        let mut model = ModelConfig::default_for(self.family);
                        model.mlp_layers = layers.to_vec();
                        model.dropout = dropout;
                        model.raw_numeric_input = self.raw_numeric_input;
                        shared.push(Hyperparams { model, lr, lr_step });
                    }
                }
            }
        }
        match self.family {
            Family::MlpPlus => shared,
            Family::Pnn => {
                let mut out = Vec::with_capacity(shared.len() * 12);
                for base in &shared {
                    for product_type in ProductType::ALL {
                        for output_size in PRODUCT_OUTPUT_SIZES {
                            let mut p = base.clone();
                            p.model.product = Some(ProductSettings {
                                product_type,
                                output_size,
                            });
                            out.push(p);
                        }
                    }
                }
                out
            }
            Family::Autoint => {
                let mut out = Vec::with_capacity(shared.len() * 96);
                for base in &shared {
                    for m in EMBEDDING_SIZES {
                        for n_layers in ATTENTION_LAYERS {
                            for n_heads in ATTENTION_HEADS {
                                for dropout in ATTENTION_DROPOUTS {
                                    for leaky_activation in [false, true] {
                                        for residual in [true, false] {
                                            let mut p = base.clone();
                                            p.model.embedding_size = m;
                                            p.model.attention = Some(AttentionSettings {
                                                n_layers,
                                                n_heads,
                                                dropout,
                                                leaky_activation,
                                                residual,
                                            });
                                            out.push(p);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                out
            }
        }
    }

    /// The first `n` points the random sampler visits for `seed`.
    pub fn random_sequence(&self, seed: u64, n: usize) -> Vec<Hyperparams> {
        let grid = self.points();
        shuffled_order(grid.len(), seed).into_iter().take(n).map(|i| grid[i].clone()).collect()
    }
}

fn shuffled_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    order
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Sampler {
    /// Uniform without replacement.
    Random,
    /// Random for `startup` trials, then a random unvisited grid neighbour
    /// (one axis changed) of the best trial so far.
    Neighbor { startup: usize },
}

impl Sampler {
    pub fn name(&self) -> &'static str {
        match self {
            Sampler::Random => "random-search",
            Sampler::Neighbor { .. } => "neighbor-surrogate",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub params: Hyperparams,
    pub seed: u64,
    pub best_epoch: Option<usize>,
    pub val_auroc: Option<f64>,
    pub holdout_auroc: Option<f64>,
    #[serde(flatten)]
    pub status: RunStatus,
}

impl TrialRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub n_trials: usize,
    pub seed: u64,
    pub sampler: Sampler,
    pub batch_size: usize,
    pub ghost_size: usize,
    pub max_epochs: usize,
    pub jobs: usize,
}

impl StudyOptions {
    pub const DEFAULT_TRIALS: usize = 20;

    pub fn new(batch_size: usize, ghost_size: usize, seed: u64) -> Self {
        StudyOptions {
            n_trials: Self::DEFAULT_TRIALS,
            seed,
            sampler: Sampler::Random,
            batch_size,
            ghost_size,
            max_epochs: crate::training::MAX_EPOCHS,
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub records: Vec<TrialRecord>,
    pub best: TrialRecord,
}

/// Picks the next point. `visited` holds grid indices already used.
fn next_point(
    sampler: Sampler,
    grid: &[Hyperparams],
    order: &[usize],
    visited: &HashSet<usize>,
    done: &[TrialRecord],
    rng: &mut SeededRng,
) -> usize {
    let random = || *order.iter().find(|i| !visited.contains(i)).expect("grid exhausted");
    let Sampler::Neighbor { startup } = sampler else { return random() };
    let best = done
        .iter()
        .filter(|r| r.is_ok() && r.val_auroc.is_some())
        .fold(None::<&TrialRecord>, |b, r| match b {
            Some(b) if b.val_auroc >= r.val_auroc => Some(b),
            _ => Some(r),
        });
    let (true, Some(best)) = (done.len() >= startup, best) else { return random() };
    let center = best.params.coords();
    let neighbours: Vec<usize> = (0..grid.len())
        .filter(|i| !visited.contains(i))
        .filter(|&i| {
            let c = grid[i].coords();
            c.len() == center.len() && c.iter().zip(&center).filter(|(a, b)| a != b).count() == 1
        })
        .collect();
    if neighbours.is_empty() {
        random()
    } else {
        neighbours[rng.below(neighbours.len())]
    }
}

fn run_trial(trial: usize, params: Hyperparams, fold: &PreparedFold, opts: &StudyOptions) -> Result<TrialRecord> {
    let seed = derive_seed(opts.seed, trial as u64);
    let mut settings = TrainSettings::new(opts.batch_size, opts.ghost_size, params.lr, params.lr_step, seed);
    settings.max_epochs = opts.max_epochs;
    let (_, out) = fit(&params.model, fold, &settings)?;
    Ok(TrialRecord {
        trial,
        params,
        seed,
        best_epoch: out.best_epoch,
        val_auroc: out.best_val_auroc,
        holdout_auroc: out.holdout_auroc,
        status: out.status,
    })
}

/// Runs (or resumes) a study. `previous` are records of an interrupted run
/// with the same options; `on_record` sees every new record in trial order.
pub fn run_study(
    space: &SearchSpace,
    fold: &PreparedFold,
    opts: &StudyOptions,
    previous: &[TrialRecord],
    mut on_record: impl FnMut(&TrialRecord) -> Result<()>,
) -> Result<StudyResult> {
    let grid = space.points();
    if opts.n_trials > grid.len() {
        return Err(Error::Config(format!("{} trials exceed the {} grid points", opts.n_trials, grid.len())));
    }
    let order = shuffled_order(grid.len(), opts.seed);
    let mut rng = SeededRng::new(derive_seed(opts.seed, u64::MAX));
    let mut visited = HashSet::new();
    let mut records: Vec<TrialRecord> = Vec::with_capacity(opts.n_trials);

    // replay the sampler over completed trials so resumed studies continue
    // the same sequence
    for (t, prev) in previous.iter().take(opts.n_trials).enumerate() {
        let i = next_point(opts.sampler, &grid, &order, &visited, &records, &mut rng);
        if prev.trial != t || prev.params != grid[i] {
            return Err(Error::Config(format!("trial log does not match this study at trial {t}")));
        }
        visited.insert(i);
        records.push(prev.clone());
    }

    let parallel = matches!(opts.sampler, Sampler::Random) && opts.jobs > 1;
    while records.len() < opts.n_trials {
        let width = if parallel { opts.jobs.min(opts.n_trials - records.len()) } else { 1 };
        let mut wave = Vec::with_capacity(width);
        for k in 0..width {
            let i = next_point(opts.sampler, &grid, &order, &visited, &records, &mut rng);
            visited.insert(i);
            wave.push((records.len() + k, grid[i].clone()));
        }
        let done: Vec<Result<TrialRecord>> = if parallel {
            wave.into_par_iter().map(|(t, p)| run_trial(t, p, fold, opts)).collect()
        } else {
            wave.into_iter().map(|(t, p)| run_trial(t, p, fold, opts)).collect()
        };
        for r in done {
            let r = r?;
            log::info!("trial {} val {:?} holdout {:?}", r.trial, r.val_auroc, r.holdout_auroc);
            on_record(&r)?;
            records.push(r);
        }
    }

    let best = best_trial(&records).ok_or(Error::StudyFailed(records.len()))?.clone();
    Ok(StudyResult { records, best })
}

/// Highest validation AUROC among successful trials; earliest wins ties.
pub fn best_trial(records: &[TrialRecord]) -> Option<&TrialRecord> {
    records
        .iter()
        .filter(|r| r.is_ok() && r.val_auroc.is_some())
        .fold(None, |best: Option<&TrialRecord>, r| match best {
            Some(b) if b.val_auroc >= r.val_auroc => Some(b),
            _ => Some(r),
        })
}

/// One holdout score to aggregate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub dataset: String,
    pub model: String,
    pub seed: u64,
    pub fold: usize,
    pub holdout_auroc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub n: usize,
    /// Percent.
    pub mean: f64,
    /// Percent, sample standard deviation; `None` for a single score.
    pub sd: Option<f64>,
}

impl SummaryCell {
    pub fn display(&self) -> String {
        match self.sd {
            Some(sd) => format!("{:.1} ± {:.1}", self.mean, sd),
            None => format!("{:.1}", self.mean),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// dataset -> model -> cell
    pub cells: BTreeMap<String, BTreeMap<String, SummaryCell>>,
    /// model -> unweighted mean over datasets of the per-dataset means (percent)
    pub overall: BTreeMap<String, f64>,
}

fn sorted_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean and sample sd of holdout AUROC per (dataset, model), in percent.
/// Inputs are sorted before summation, so order never matters.
pub fn aggregate_results(scores: &[FoldScore]) -> Summary {
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for s in scores {
        groups
            .entry((s.dataset.clone(), s.model.clone()))
            .or_default()
            .push(100.0 * s.holdout_auroc);
    }
    let mut cells: BTreeMap<String, BTreeMap<String, SummaryCell>> = BTreeMap::new();
    let mut per_model: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ((dataset, model), mut v) in groups {
        let n = v.len();
        let mean = sorted_mean(&mut v);
        let sd = (n > 1).then(|| {
            let mut sq: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
            sq.sort_by(f64::total_cmp);
            (sq.iter().sum::<f64>() / (n - 1) as f64).sqrt()
        });
        per_model.entry(model.clone()).or_default().push(mean);
        cells.entry(dataset).or_default().insert(model, SummaryCell { n, mean, sd });
    }
    let overall = per_model.into_iter().map(|(m, mut v)| (m, sorted_mean(&mut v))).collect();
    Summary { cells, overall }
}

impl Summary {
    /// Dataset rows, one `mean ± sd` column per model, and a mean row.
    pub fn to_csv(&self) -> String {
        let models: Vec<&String> = self.overall.keys().collect();
        let mut out = String::from("dataset");
        for m in &models {
            out.push(',');
            out.push_str(m);
        }
        out.push('\n');
        for (dataset, row) in &self.cells {
            out.push_str(dataset);
            for m in &models {
                out.push(',');
                if let Some(c) = row.get(*m) {
                    out.push_str(&c.display());
                }
            }
            out.push('\n');
        }
        out.push_str("Mean");
        for m in &models {
            out.push_str(&format!(",{:.1}", self.overall[*m]));
        }
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes_and_validity() {
        assert_eq!(SearchSpace::new(Family::MlpPlus).points().len(), 144);
        assert_eq!(SearchSpace::new(Family::Pnn).points().len(), 144 * 12);
        let auto = SearchSpace::new(Family::Autoint).points();
        assert_eq!(auto.len(), 144 * 96);
        for f in Family::ALL {
            let pts = SearchSpace::new(f).points();
            for p in &pts {
                p.validate().unwrap();
            }
            let distinct: HashSet<Vec<u64>> = pts.iter().map(|p| p.coords()).collect();
            assert_eq!(distinct.len(), pts.len());
        }
    }

    fn score(dataset: &str, v: f64) -> FoldScore {
        FoldScore {
            dataset: dataset.into(),
            model: "mlp-plus".into(),
            seed: 0,
            fold: 0,
            holdout_auroc: v,
        }
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate_results(&[score("a", 0.924)]);
        assert_eq!(s.cells["a"]["mlp-plus"].display(), "92.4");
        let s = aggregate_results(&[score("a", 0.92), score("a", 0.94)]);
        let c = &s.cells["a"]["mlp-plus"];
        assert!((c.mean - 93.0).abs() < 1e-9 && (c.sd.unwrap() - 1.0 * 2f64.sqrt()).abs() < 1e-9);
        let s = aggregate_results(&[score("a", 0.9), score("b", 0.8), score("c", 0.7)]);
        assert!((s.overall["mlp-plus"] - 80.0).abs() < 1e-9);
        assert!(s.to_csv().ends_with("Mean,80.0\n"));
    }

    #[test]
    fn aggregate_is_order_invariant() {
        let mut scores: Vec<FoldScore> = (0..10).map(|i| score(["a", "b"][i % 2], 0.8 + 0.013 * i as f64)).collect();
        let a = aggregate_results(&scores);
        scores.reverse();
        scores.swap(1, 6);
        assert_eq!(a, aggregate_results(&scores));
    }
}
