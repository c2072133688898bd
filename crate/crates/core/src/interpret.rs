//! Leaky-gate passage analysis for MLP+ models.
//!
//! A gate output is "positive" when the column value passed through the
//! gate and "non-positive" when it leaked through at the slope. Two gates
//! agree on a row when both outputs are positive or both are non-positive.

use serde::{Deserialize, Serialize};

use crate::data::{Batch, Dataset, FoldSplit};
use crate::error::{Error, Result};
use crate::models::{ModelConfig, TabularModel};
use crate::tensor::Graph;
use crate::training::{fit, prepare_fold, PreparedFold, TrainSettings};

/// Statistics for one gate input unit (an un-embedded column or one
/// embedding dimension), or the roll-up of a column's units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateRow {
    pub column: String,
    /// Embedding dimension; `None` for an un-embedded column or a roll-up.
    pub dim: Option<usize>,
    pub main_pct: f64,
    /// `None` when the model has no skip path.
    pub skip_pct: Option<f64>,
    pub agreement_pct: Option<f64>,
}

impl GateRow {
    fn closed_everywhere(&self) -> bool {
        self.main_pct == 0.0 && self.skip_pct.map_or(true, |s| s == 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub n_rows: usize,
    /// Per unit, in gate order.
    pub units: Vec<GateRow>,
    /// Per column, by descending agreement (schema order on ties). A
    /// column's percent-positive is the max over its units and its
    /// agreement is the mean over its units.
    pub columns: Vec<GateRow>,
    /// Columns with 0% positive at every gate, schema order.
    pub drop_candidates: Vec<String>,
}

fn pct(count: usize, n: usize) -> f64 {
    100.0 * count as f64 / n as f64
}

/// Counts positive gate outputs over `rows` in eval mode. Positivity is
/// counted twice, from the pre-activation and from the gate output, and
/// the two counts must agree.
pub fn gate_passage_stats(model: &TabularModel, rows: &Batch, chunk: usize) -> Result<GateReport> {
    if rows.rows == 0 {
        return Err(Error::Data("gate analysis needs at least one row".into()));
    }
    let spans = model.embed.column_spans();
    let width = model.embed.flat_width();
    let mut main_pos = vec![0usize; width];
    let mut skip_pos = vec![0usize; width];
    let mut agree = vec![0usize; width];
    let mut has_skip = false;
    let ids: Vec<usize> = (0..rows.rows).collect();
    for part in ids.chunks(chunk.max(1)) {
        let batch = rows.gather(part);
        let g = Graph::no_grad();
        let gates = model.gate_trace(&g, &batch)?;
        let main = gates.main.expect("gate_trace checks the main gate");
        let main = count_positive(&main.pre.value(), &main.out.value(), width)?;
        let skip = match gates.skip {
            Some(s) => {
                has_skip = true;
                Some(count_positive(&s.pre.value(), &s.out.value(), width)?)
            }
            None => None,
        };
        for r in 0..batch.rows {
            for u in 0..width {
                let m = main[r * width + u];
                main_pos[u] += m as usize;
                if let Some(s) = &skip {
                    let s = s[r * width + u];
                    skip_pos[u] += s as usize;
                    agree[u] += (m == s) as usize;
                }
            }
        }
    }

    let n = rows.rows;
    let names = &model.layout().names;
    let mut units = Vec::with_capacity(width);
    let mut columns = Vec::with_capacity(spans.len());
    for (name, &(s, e)) in names.iter().zip(&spans) {
        let embedded = e - s > 1 || !model.embed.raw_numeric();
        let col: Vec<GateRow> = (s..e)
            .map(|u| GateRow {
                column: name.clone(),
                dim: embedded.then_some(u - s),
                main_pct: pct(main_pos[u], n),
                skip_pct: has_skip.then(|| pct(skip_pos[u], n)),
                agreement_pct: has_skip.then(|| pct(agree[u], n)),
            })
            .collect();
        let max = |f: fn(&GateRow) -> Option<f64>| col.iter().filter_map(f).fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
        columns.push(GateRow {
            column: name.clone(),
            dim: None,
            main_pct: max(|r| Some(r.main_pct)).expect("non-empty span"),
            skip_pct: max(|r| r.skip_pct),
            agreement_pct: has_skip
                .then(|| col.iter().filter_map(|r| r.agreement_pct).sum::<f64>() / col.len() as f64),
        });
        units.extend(col);
    }
    let drop_candidates = columns
        .iter()
        .filter(|c| c.closed_everywhere())
        .map(|c| c.column.clone())
        .collect();
    columns.sort_by(|a, b| {
        let key = |r: &GateRow| r.agreement_pct.unwrap_or(0.0);
        key(b).total_cmp(&key(a))
    });
    Ok(GateReport {
        n_rows: n,
        units,
        columns,
        drop_candidates,
    })
}

fn count_positive(pre: &[f64], out: &[f64], width: usize) -> Result<Vec<bool>> {
    debug_assert_eq!(pre.len() % width, 0);
    let from_pre: Vec<bool> = pre.iter().map(|&v| v > 0.0).collect();
    let from_out: Vec<bool> = out.iter().map(|&v| v > 0.0).collect();
    if from_pre != from_out {
        return Err(Error::op("gate", "pre-activation and output signs disagree"));
    }
    Ok(from_out)
}

/// Train plus validation rows, the population the analysis runs on.
pub fn inspection_rows(fold: &PreparedFold) -> Batch {
    fold.train.concat(&fold.validation)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v:.1}"))
}

impl GateReport {
    /// `column,main_gate_pct,skip_gate_pct,agreement_pct`, one row per column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("column,main_gate_pct,skip_gate_pct,agreement_pct\n");
        for r in &self.columns {
            out.push_str(&format!(
                "{},{:.1},{},{}\n",
                csv_field(&r.column),
                r.main_pct,
                fmt_opt(r.skip_pct),
                fmt_opt(r.agreement_pct)
            ));
        }
        out
    }

    /// Same layout with a `dim` column, one row per gate unit.
    pub fn units_csv(&self) -> String {
        let mut out = String::from("column,dim,main_gate_pct,skip_gate_pct,agreement_pct\n");
        for r in &self.units {
            out.push_str(&format!(
                "{},{},{:.1},{},{}\n",
                csv_field(&r.column),
                r.dim.map_or(String::new(), |d| d.to_string()),
                r.main_pct,
                fmt_opt(r.skip_pct),
                fmt_opt(r.agreement_pct)
            ));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropComparison {
    pub dropped: Vec<String>,
    pub no_op: bool,
    pub before_holdout_auroc: f64,
    pub after_holdout_auroc: f64,
    pub delta: f64,
    pub after_best_epoch: Option<usize>,
}

/// Drops the report's candidates from `data` and refits on the same fold
/// with the same config and settings. With no candidates nothing is refit
/// and the original dataset is returned.
pub fn suggest_and_apply_drops(
    report: &GateReport,
    data: &Dataset,
    fold: &FoldSplit,
    config: &ModelConfig,
    settings: &TrainSettings,
    before_holdout_auroc: f64,
) -> Result<(Dataset, DropComparison)> {
    if report.drop_candidates.is_empty() {
        return Ok((
            data.clone(),
            DropComparison {
                dropped: Vec::new(),
                no_op: true,
                before_holdout_auroc,
                after_holdout_auroc: before_holdout_auroc,
                delta: 0.0,
                after_best_epoch: None,
            },
        ));
    }
    let reduced = data.drop_columns(&report.drop_candidates)?;
    let prepared = prepare_fold(&reduced, fold)?;
    let (_, outcome) = fit(config, &prepared, settings)?;
    let after = outcome
        .holdout_auroc
        .ok_or_else(|| Error::Metric(format!("refit failed: {:?}", outcome.status)))?;
    Ok((
        reduced,
        DropComparison {
            dropped: report.drop_candidates.clone(),
            no_op: false,
            before_holdout_auroc,
            after_holdout_auroc: after,
            delta: after - before_holdout_auroc,
            after_best_epoch: outcome.best_epoch,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FieldLayout;
    use crate::models::Family;
    use crate::rng::SeededRng;
    use crate::tensor::Module;

    fn model(raw: bool, skip: bool, gate: bool) -> TabularModel {
        let mut c = ModelConfig::default_for(Family::MlpPlus).with_ablation(skip, gate);
        c.raw_numeric_input = raw;
        let layout = FieldLayout::new(vec![("a".into(), None), ("b".into(), None), ("c".into(), Some(3))]);
        TabularModel::new(&c, &layout, 3).unwrap()
    }

    fn batch(n: usize) -> Batch {
        let mut rng = SeededRng::new(9);
        Batch {
            rows: n,
            cat: (0..n).map(|_| rng.below(3)).collect(),
            num: (0..2 * n).map(|_| rng.normal()).collect(),
            labels: (0..n).map(|i| i % 2).collect(),
        }
    }

    fn set(model: &mut TabularModel, name: &str, unit: usize, v: f64) {
        let p = model.params_mut().into_iter().find(|p| p.name() == name).unwrap();
        p.value[unit] = v;
    }

    #[test]
    fn closed_gate_gives_zero_and_candidate() {
        let mut m = model(true, true, true);
        for gate in ["mlp_plus.gate", "mlp_plus.skip_gate"] {
            set(&mut m, &format!("{gate}.w"), 1, 0.0);
            set(&mut m, &format!("{gate}.b"), 1, -1.0);
        }
        let r = gate_passage_stats(&m, &batch(50), 7).unwrap();
        assert_eq!(r.units.len(), 2 + 8);
        let b = r.columns.iter().find(|c| c.column == "b").unwrap();
        assert_eq!((b.main_pct, b.skip_pct, b.agreement_pct), (0.0, Some(0.0), Some(100.0)));
        assert_eq!(r.drop_candidates, vec!["b".to_string()]);
    }

    #[test]
    fn open_gates_agree_fully_and_full_disagreement_is_zero() {
        let mut m = model(true, true, true);
        // column a: main always open, skip always closed
        set(&mut m, "mlp_plus.gate.w", 0, 0.0);
        set(&mut m, "mlp_plus.gate.b", 0, 1.0);
        set(&mut m, "mlp_plus.skip_gate.w", 0, 0.0);
        set(&mut m, "mlp_plus.skip_gate.b", 0, -1.0);
        let r = gate_passage_stats(&m, &batch(40), 64).unwrap();
        let a = r.columns.iter().find(|c| c.column == "a").unwrap();
        assert_eq!((a.main_pct, a.skip_pct, a.agreement_pct), (100.0, Some(0.0), Some(0.0)));
        assert_eq!(r.columns.last().unwrap().column, "a");
        // fresh gates are identical, so every other unit agrees everywhere
        for u in r.units.iter().filter(|u| u.column != "a") {
            assert_eq!(u.agreement_pct, Some(100.0));
        }
        assert!(r.drop_candidates.is_empty());
    }

    #[test]
    fn embedded_report_rolls_up_by_max() {
        let m = model(false, true, true);
        let r = gate_passage_stats(&m, &batch(30), 30).unwrap();
        assert_eq!(r.units.len(), 3 * 8);
        for c in &r.columns {
            let max = r.units.iter().filter(|u| u.column == c.column).map(|u| u.main_pct).fold(0.0, f64::max);
            assert_eq!(c.main_pct, max);
        }
        assert!(r.units.iter().all(|u| u.dim.is_some()));
    }

    #[test]
    fn chunking_and_repeats_do_not_change_the_report() {
        let m = model(true, true, true);
        let b = batch(33);
        let a = gate_passage_stats(&m, &b, 5).unwrap();
        assert_eq!(a, gate_passage_stats(&m, &b, 100).unwrap());
        assert_eq!(a, gate_passage_stats(&m, &b, 5).unwrap());
    }

    #[test]
    fn ablated_gates_are_an_error() {
        let m = model(true, true, false);
        assert!(gate_passage_stats(&m, &batch(4), 4).is_err());
        let r = gate_passage_stats(&model(true, false, true), &batch(4), 4).unwrap();
        assert!(r.columns.iter().all(|c| c.skip_pct.is_none() && c.agreement_pct.is_none()));
    }

    #[test]
    fn csv_layout() {
        let r = gate_passage_stats(&model(true, true, true), &batch(10), 10).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("column,main_gate_pct,skip_gate_pct,agreement_pct\n"));
        assert_eq!(csv.lines().count(), 1 + 3);
    }
}
