use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::source::{self, DataRef, Source};
use super::*;
use crate::checkpoint::{self, read_json, write_atomic, write_json_atomic};
use crate::data::{make_folds, FoldSplit};
use crate::hpo::{aggregate_results, run_study, FoldScore, Hyperparams, Sampler, SearchSpace, StudyOptions, TrialRecord};
use crate::interpret::{gate_passage_stats, suggest_and_apply_drops};
use crate::models::ModelConfig;
use crate::tensor::Module;
use crate::training::{epoch_log_csv, fit, prepare_fold, RunStatus, TrainSettings};

const DEFAULT_LR: f64 = 0.01;
const DEFAULT_LR_STEP: usize = 10;

/// Skip/gate flags of the three ablation scenarios, full model first.
pub const SCENARIOS: [(bool, bool); 3] = [(true, true), (true, false), (false, false)];

pub fn scenario_label(use_skip: bool, use_gate: bool) -> String {
    let t = |b: bool| if b { 'T' } else { 'F' };
    format!("skip={} gate={}", t(use_skip), t(use_gate))
}

/// `result.json` of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub dataset: DataRef,
    pub params: Hyperparams,
    pub settings: TrainSettings,
    pub fold: usize,
    pub seed: u64,
    pub n_params: usize,
    pub best_epoch: Option<usize>,
    pub val_auroc: Option<f64>,
    pub holdout_auroc: Option<f64>,
    #[serde(flatten)]
    pub status: RunStatus,
}

/// `study.json` of one (dataset, family, fold, seed) study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub dataset: String,
    pub family: Family,
    pub fold: usize,
    pub seed: u64,
    /// Seeded search over the finite grid; not a TPE implementation.
    pub sampler: String,
    pub n_trials: usize,
    pub n_failed: usize,
    pub best: TrialRecord,
}

/// One line of the ablation `runs.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub dataset: String,
    pub family: Family,
    pub use_skip: bool,
    pub use_gate: bool,
    pub fold: usize,
    pub seed: u64,
    pub best_epoch: Option<usize>,
    pub val_auroc: Option<f64>,
    pub holdout_auroc: Option<f64>,
    #[serde(flatten)]
    pub status: RunStatus,
}

#[derive(Serialize)]
struct Metadata {
    command: &'static str,
    version: &'static str,
    argv: Vec<String>,
    started_unix: u64,
    finished_unix: u64,
    wall_seconds: f64,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_metadata(dir: &Path, command: &'static str, started: u64, clock: Instant) -> CliResult<()> {
    let meta = Metadata {
        command,
        version: env!("CARGO_PKG_VERSION"),
        argv: std::env::args().collect(),
        started_unix: started,
        finished_unix: unix_now(),
        wall_seconds: clock.elapsed().as_secs_f64(),
    };
    Ok(write_json_atomic(&dir.join("metadata.json"), &meta)?)
}

fn jsonl<T: Serialize>(items: &[T]) -> CliResult<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).map_err(Error::from)?);
        out.push('\n');
    }
    Ok(out)
}

fn read_hyperparams(path: &Path) -> CliResult<Hyperparams> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let hp: Hyperparams =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    hp.validate()?;
    Ok(hp)
}

/// Hyperparameters for `family` from flags, or from the given config file.
fn hyperparams(family: Option<Family>, file: Option<&PathBuf>, args: &ModelArgs) -> CliResult<Hyperparams> {
    let mut hp = match file {
        Some(path) => {
            let hp = read_hyperparams(path)?;
            if family.is_some_and(|f| f != hp.model.family) {
                return Err(CliError::Usage(format!(
                    "--family {} disagrees with {} in {}",
                    family.unwrap(),
                    hp.model.family,
                    path.display()
                )));
            }
            hp
        }
        None => {
            let family = family.ok_or_else(|| CliError::Usage("--family or --config is required".into()))?;
            Hyperparams {
                model: ModelConfig::default_for(family),
                lr: DEFAULT_LR,
                lr_step: DEFAULT_LR_STEP,
            }
        }
    };
    if let Some(lr) = args.lr {
        hp.lr = lr;
    }
    if let Some(step) = args.lr_step {
        hp.lr_step = step;
    }
    if args.raw_numeric {
        hp.model.raw_numeric_input = true;
    }
    hp.validate()?;
    Ok(hp)
}

fn settings_for(src: &DataRef, hp: &Hyperparams, seed: u64, max_epochs: usize) -> TrainSettings {
    let mut s = TrainSettings::new(src.batch_size, src.ghost_size, hp.lr, hp.lr_step, seed);
    s.max_epochs = max_epochs;
    s
}

fn fold_of(src: &Source, seed: u64, fold: usize) -> CliResult<FoldSplit> {
    Ok(make_folds(src.data.n_rows(), seed)?.swap_remove(fold))
}

fn print_summary(scores: &[FoldScore], dir: &Path) -> CliResult<()> {
    if scores.is_empty() {
        return Ok(());
    }
    let summary = aggregate_results(scores);
    write_json_atomic(&dir.join("summary.json"), &summary)?;
    let csv = summary.to_csv();
    write_atomic(&dir.join("summary.csv"), csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}

pub fn cmd_train(args: &TrainArgs, root: &Path) -> CliResult<Vec<RunResult>> {
    let (started, clock) = (unix_now(), Instant::now());
    if args.model.config.len() > 1 {
        return Err(CliError::Usage("train takes at most one --config".into()));
    }
    let hp = hyperparams(args.family, args.model.config.first(), &args.model)?;
    let refs = source::resolve(&args.data)?;
    let id = run_id(&("train", &refs, &hp, &args.split.folds, &args.split.seeds, args.split.max_epochs));
    let dir = root.join("train").join(&id);
    let sources: Vec<Source> = refs.iter().map(source::load).collect::<CliResult<_>>()?;
    log::info!("train run {id} -> {}", dir.display());

    let mut tasks = Vec::new();
    for (i, _) in sources.iter().enumerate() {
        for &seed in &args.split.seeds {
            for &fold in &args.split.folds.0 {
                tasks.push((i, seed, fold));
            }
        }
    }
    let results: Vec<RunResult> = tasks
        .par_iter()
        .map(|&(i, seed, fold)| {
            let src = &sources[i];
            let split = fold_of(src, seed, fold)?;
            let prepared = prepare_fold(&src.data, &split)?;
            let settings = settings_for(&src.data_ref, &hp, seed, args.split.max_epochs);
            let (model, outcome) = fit(&hp.model, &prepared, &settings)?;
            let run_dir = dir.join(&src.data_ref.name).join(format!("fold{fold}-seed{seed}"));
            checkpoint::save(&run_dir.join("checkpoint"), &model, &prepared.schema)?;
            write_atomic(&run_dir.join("epochs.csv"), epoch_log_csv(&outcome.logs).as_bytes())?;
            write_json_atomic(&run_dir.join("fold.json"), &split)?;
            let result = RunResult {
                dataset: src.data_ref.clone(),
                params: hp.clone(),
                settings,
                fold,
                seed,
                n_params: model.num_trainable(),
                best_epoch: outcome.best_epoch,
                val_auroc: outcome.best_val_auroc,
                holdout_auroc: outcome.holdout_auroc,
                status: outcome.status,
            };
            write_json_atomic(&run_dir.join("result.json"), &result)?;
            println!(
                "{} fold {fold} seed {seed}: best epoch {:?}, validation {:?}, holdout {:?}",
                src.data_ref.name, result.best_epoch, result.val_auroc, result.holdout_auroc
            );
            Ok(result)
        })
        .collect::<CliResult<_>>()?;

    let scores: Vec<FoldScore> = results
        .iter()
        .filter_map(|r| {
            Some(FoldScore {
                dataset: r.dataset.name.clone(),
                model: r.params.model.family.to_string(),
                seed: r.seed,
                fold: r.fold,
                holdout_auroc: r.holdout_auroc?,
            })
        })
        .collect();
    print_summary(&scores, &dir)?;
    write_metadata(&dir, "train", started, clock)?;
    if let Some(r) = results.iter().find(|r| r.status != RunStatus::Ok) {
        return Err(CliError::Runtime(format!(
            "{} fold {} seed {} failed: {:?}",
            r.dataset.name, r.fold, r.seed, r.status
        )));
    }
    Ok(results)
}

/// Complete records of an interrupted study; a torn last line is ignored.
fn read_trials(path: &Path) -> CliResult<Vec<TrialRecord>> {
    let Ok(text) = fs::read_to_string(path) else { return Ok(Vec::new()) };
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) => break,
        }
    }
    Ok(out)
}

pub fn cmd_hpo(args: &HpoArgs, root: &Path, jobs: usize) -> CliResult<Vec<StudySummary>> {
    let (started, clock) = (unix_now(), Instant::now());
    let sampler = match args.sampler {
        SamplerArg::Random => Sampler::Random,
        SamplerArg::Neighbor => Sampler::Neighbor { startup: args.startup },
    };
    let refs = source::resolve(&args.data)?;
    let id = run_id(&(
        "hpo",
        &refs,
        &args.family,
        args.trials,
        sampler,
        args.raw_numeric,
        &args.split.folds,
        &args.split.seeds,
        args.split.max_epochs,
    ));
    let dir = root.join("hpo").join(&id);
    let sources: Vec<Source> = refs.iter().map(source::load).collect::<CliResult<_>>()?;
    log::info!("hpo run {id} -> {}", dir.display());

    let mut studies = Vec::new();
    for src in &sources {
        for &family in &args.family {
            let space = SearchSpace {
                family,
                raw_numeric_input: args.raw_numeric && family == Family::MlpPlus,
            };
            for &seed in &args.split.seeds {
                for &fold in &args.split.folds.0 {
                    let study_dir = dir
                        .join(&src.data_ref.name)
                        .join(family.to_string())
                        .join(format!("fold{fold}-seed{seed}"));
                    let split = fold_of(src, seed, fold)?;
                    let prepared = prepare_fold(&src.data, &split)?;
                    let opts = StudyOptions {
                        n_trials: args.trials,
                        seed,
                        sampler,
                        batch_size: src.data_ref.batch_size,
                        ghost_size: src.data_ref.ghost_size,
                        max_epochs: args.split.max_epochs,
                        jobs,
                    };
                    let log_path = study_dir.join("trials.jsonl");
                    let previous = read_trials(&log_path)?;
                    if !previous.is_empty() {
                        log::info!("resuming {} after {} trials", study_dir.display(), previous.len());
                    }
                    let mut lines = jsonl(&previous[..previous.len().min(args.trials)])?;
                    let result = run_study(&space, &prepared, &opts, &previous, |r| {
                        lines.push_str(&serde_json::to_string(r)?);
                        lines.push('\n');
                        write_atomic(&log_path, lines.as_bytes())
                    })?;
                    write_json_atomic(&study_dir.join("fold.json"), &split)?;
                    let summary = StudySummary {
                        dataset: src.data_ref.name.clone(),
                        family,
                        fold,
                        seed,
                        sampler: sampler.name().into(),
                        n_trials: result.records.len(),
                        n_failed: result.records.iter().filter(|r| !r.is_ok()).count(),
                        best: result.best,
                    };
                    write_json_atomic(&study_dir.join("study.json"), &summary)?;
                    println!(
                        "{} {family} fold {fold} seed {seed}: best trial {} validation {:?} holdout {:?}",
                        summary.dataset, summary.best.trial, summary.best.val_auroc, summary.best.holdout_auroc
                    );
                    studies.push(summary);
                }
            }
        }
    }
    let scores: Vec<FoldScore> = studies
        .iter()
        .filter_map(|s| {
            Some(FoldScore {
                dataset: s.dataset.clone(),
                model: s.family.to_string(),
                seed: s.seed,
                fold: s.fold,
                holdout_auroc: s.best.holdout_auroc?,
            })
        })
        .collect();
    print_summary(&scores, &dir)?;
    write_metadata(&dir, "hpo", started, clock)?;
    Ok(studies)
}

/// Table of mean holdout AUROC percent: dataset rows, one column per
/// (family, scenario), and a mean row over datasets.
pub fn ablation_csv(runs: &[AblationRun], families: &[Family]) -> String {
    let mut cells: BTreeMap<(String, Family, bool, bool), Vec<f64>> = BTreeMap::new();
    for r in runs {
        if let Some(h) = r.holdout_auroc {
            cells
                .entry((r.dataset.clone(), r.family, r.use_skip, r.use_gate))
                .or_default()
                .push(100.0 * h);
        }
    }
    let mut datasets: Vec<&String> = runs.iter().map(|r| &r.dataset).collect();
    datasets.dedup();
    let columns: Vec<(Family, bool, bool)> = families
        .iter()
        .flat_map(|&f| SCENARIOS.iter().map(move |&(s, g)| (f, s, g)))
        .collect();
    let mut out = String::from("dataset");
    for (f, s, g) in &columns {
        out.push_str(&format!(",{f} {}", scenario_label(*s, *g)));
    }
    out.push('\n');
    let mean = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v.iter().sum::<f64>() / v.len() as f64
    };
    let mut per_column: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    for d in &datasets {
        out.push_str(d);
        for (c, (f, s, g)) in columns.iter().enumerate() {
            out.push(',');
            if let Some(v) = cells.get_mut(&((*d).clone(), *f, *s, *g)) {
                let m = mean(v);
                per_column[c].push(m);
                out.push_str(&format!("{m:.1}"));
            }
        }
        out.push('\n');
    }
    out.push_str("Mean");
    for v in per_column.iter_mut() {
        out.push(',');
        if !v.is_empty() {
            out.push_str(&format!("{:.1}", mean(v)));
        }
    }
    out.push('\n');
    out
}

pub fn cmd_ablate(args: &AblateArgs, root: &Path) -> CliResult<Vec<AblationRun>> {
    let (started, clock) = (unix_now(), Instant::now());
    let configs: Vec<Hyperparams> = args.model.config.iter().map(|p| read_hyperparams(p)).collect::<CliResult<_>>()?;
    let families: Vec<Family> = if !args.family.is_empty() {
        args.family.clone()
    } else if !configs.is_empty() {
        configs.iter().map(|c| c.model.family).collect()
    } else {
        Family::ALL.to_vec()
    };
    let mut base: Vec<Hyperparams> = Vec::new();
    for &f in &families {
        let file = args
            .model
            .config
            .iter()
            .zip(&configs)
            .find(|(_, c)| c.model.family == f)
            .map(|(p, _)| p);
        let mut flags = args.model.clone();
        flags.raw_numeric &= f == Family::MlpPlus;
        base.push(hyperparams(Some(f), file, &flags)?);
    }
    let refs = source::resolve(&args.data)?;
    let id = run_id(&("ablate", &refs, &base, &args.split.folds, &args.split.seeds, args.split.max_epochs));
    let dir = root.join("ablate").join(&id);
    let sources: Vec<Source> = refs.iter().map(source::load).collect::<CliResult<_>>()?;
    log::info!("ablate run {id} -> {}", dir.display());

    let mut tasks = Vec::new();
    for (i, _) in sources.iter().enumerate() {
        for (h, _) in base.iter().enumerate() {
            for (sk, gt) in SCENARIOS {
                for &seed in &args.split.seeds {
                    for &fold in &args.split.folds.0 {
                        tasks.push((i, h, sk, gt, seed, fold));
                    }
                }
            }
        }
    }
    let runs: Vec<AblationRun> = tasks
        .par_iter()
        .map(|&(i, h, use_skip, use_gate, seed, fold)| {
            let src = &sources[i];
            let hp = &base[h];
            let split = fold_of(src, seed, fold)?;
            let prepared = prepare_fold(&src.data, &split)?;
            let settings = settings_for(&src.data_ref, hp, seed, args.split.max_epochs);
            let config = hp.model.clone().with_ablation(use_skip, use_gate);
            let (_, outcome) = fit(&config, &prepared, &settings)?;
            log::info!(
                "{} {} {} fold {fold} seed {seed}: holdout {:?}",
                src.data_ref.name,
                hp.model.family,
                scenario_label(use_skip, use_gate),
                outcome.holdout_auroc
            );
            Ok(AblationRun {
                dataset: src.data_ref.name.clone(),
                family: hp.model.family,
                use_skip,
                use_gate,
                fold,
                seed,
                best_epoch: outcome.best_epoch,
                val_auroc: outcome.best_val_auroc,
                holdout_auroc: outcome.holdout_auroc,
                status: outcome.status,
            })
        })
        .collect::<CliResult<_>>()?;
    write_atomic(&dir.join("runs.jsonl"), jsonl(&runs)?.as_bytes())?;
    let csv = ablation_csv(&runs, &families);
    write_atomic(&dir.join("ablation.csv"), csv.as_bytes())?;
    write_json_atomic(&dir.join("configs.json"), &base)?;
    print!("{csv}");
    write_metadata(&dir, "ablate", started, clock)?;
    Ok(runs)
}

pub fn cmd_inspect_gates(args: &InspectArgs, root: &Path) -> CliResult<crate::interpret::GateReport> {
    let (started, clock) = (unix_now(), Instant::now());
    if !args.checkpoint.join(checkpoint::MANIFEST).is_file() {
        return Err(CliError::Usage(format!("no checkpoint at {}", args.checkpoint.display())));
    }
    let (model, schema) = checkpoint::load(&args.checkpoint)?;
    let result_path = args.checkpoint.parent().map(|p| p.join("result.json"));
    let recorded: Option<RunResult> = match &result_path {
        Some(p) if p.is_file() => Some(read_json(p)?),
        _ => None,
    };
    let data_ref = if args.data.csv.is_some() || !args.data.dataset.is_empty() {
        let mut refs = source::resolve(&args.data)?;
        if refs.len() != 1 {
            return Err(CliError::Usage("inspect-gates takes one dataset".into()));
        }
        refs.remove(0)
    } else {
        recorded
            .as_ref()
            .map(|r| r.dataset.clone())
            .ok_or_else(|| CliError::Usage("no result.json beside the checkpoint; pass --dataset or --csv".into()))?
    };
    let fold = args.fold.or(recorded.as_ref().map(|r| r.fold));
    let seed = args.seed.or(recorded.as_ref().map(|r| r.seed));
    let (Some(fold), Some(seed)) = (fold, seed) else {
        return Err(CliError::Usage("pass --fold and --seed".into()));
    };
    if fold >= crate::data::N_FOLDS {
        return Err(CliError::Usage(format!("fold {fold} is outside 0..{}", crate::data::N_FOLDS)));
    }
    let src = source::load(&data_ref)?;
    let split = fold_of(&src, seed, fold)?;
    let all = schema.encode(&src.data)?;
    let rows = all.gather(&split.train).concat(&all.gather(&split.validation));
    let report = gate_passage_stats(&model, &rows, args.chunk)?;

    let params = fs::read(args.checkpoint.join(checkpoint::PARAMS)).map_err(Error::from)?;
    let digest: String = sha2::Sha256::digest(&params)[..8].iter().map(|b| format!("{b:02x}")).collect();
    let id = run_id(&("inspect-gates", &digest, &model.config, &data_ref, fold, seed, args.apply_drops));
    let dir = root.join("inspect-gates").join(&id);
    write_atomic(&dir.join("gates.csv"), report.to_csv().as_bytes())?;
    write_atomic(&dir.join("gates_units.csv"), report.units_csv().as_bytes())?;
    write_json_atomic(&dir.join("gates.json"), &report)?;
    print!("{}", report.to_csv());
    println!("drop candidates: {:?}", report.drop_candidates);

    if args.apply_drops {
        let recorded = recorded
            .ok_or_else(|| CliError::Usage("--apply-drops needs the run's result.json beside the checkpoint".into()))?;
        let before = recorded
            .holdout_auroc
            .ok_or_else(|| CliError::Runtime("the recorded run has no holdout AUROC".into()))?;
        let (_, cmp) = suggest_and_apply_drops(&report, &src.data, &split, &recorded.params.model, &recorded.settings, before)?;
        write_json_atomic(&dir.join("drops.json"), &cmp)?;
        if cmp.no_op {
            println!("no drop candidates; nothing refit");
        } else {
            println!(
                "dropped {:?}: holdout {:.4} -> {:.4} ({:+.4})",
                cmp.dropped, cmp.before_holdout_auroc, cmp.after_holdout_auroc, cmp.delta
            );
        }
    }
    write_metadata(&dir, "inspect-gates", started, clock)?;
    Ok(report)
}
