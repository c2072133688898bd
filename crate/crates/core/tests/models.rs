mod support;

use std::collections::HashMap;

use support::oracles::ablation_ordering_checked;
use tabular_nn::data::{Batch, FieldLayout};
use tabular_nn::hpo::SearchSpace;
use tabular_nn::layers::Ctx;
use tabular_nn::models::{param_count, Family, ModelConfig, TabularModel};
use tabular_nn::rng::SeededRng;
use tabular_nn::tensor::{Graph, Module};

fn batch(layout: &FieldLayout, rows: usize, seed: u64) -> Batch {
    let mut rng = SeededRng::new(seed);
    let mut cat = Vec::new();
    let mut num = Vec::new();
    for _ in 0..rows {
        for c in &layout.cardinalities {
            match c {
                Some(k) => cat.push(rng.below(*k)),
                None => num.push(rng.normal()),
            }
        }
    }
    Batch {
        rows,
        cat,
        num,
        labels: (0..rows).map(|i| i % 2).collect(),
    }
}

fn logits(model: &mut TabularModel, b: &Batch) -> Vec<f64> {
    let g = Graph::no_grad();
    model.forward(&g, b, &mut Ctx::eval()).unwrap().value()
}

/// Rank of field `f` among the fields of the same kind.
fn kind_rank(layout: &FieldLayout, f: usize) -> usize {
    let cat = layout.cardinalities[f].is_some();
    (0..f).filter(|&i| layout.cardinalities[i].is_some() == cat).count()
}

/// Rows of the stacked categorical table owned by each categorical field.
fn cat_blocks(layout: &FieldLayout) -> Vec<(usize, usize)> {
    let mut start = 0;
    layout
        .categorical_fields()
        .iter()
        .map(|&f| {
            let c = layout.cardinalities[f].unwrap();
            start += c;
            (start - c, start)
        })
        .collect()
}

/// Parameters whose leading axis runs over the flat gate input.
const INPUT_SIDE: [&str; 6] = [".gate.w", ".gate.b", "skip_gate.w", "skip_gate.b", ".mlp.0.linear.weight", ".skip.weight"];

/// Builds the field-permuted twin of `a`: new field `k` is old field
/// `perm[k]`, and every parameter is rearranged to match.
fn permuted_twin(a: &TabularModel, perm: &[usize]) -> TabularModel {
    let old = a.layout().clone();
    let new = FieldLayout::new(
        perm.iter()
            .map(|&p| (old.names[p].clone(), old.cardinalities[p]))
            .collect(),
    );
    let mut b = TabularModel::new(&a.config, &new, 999).unwrap();
    let (spans_a, spans_b) = (a.embed.column_spans(), b.embed.column_spans());
    let flat = a.embed.flat_width();
    // flat unit in b -> flat unit in a
    let mut unit_map = vec![0; flat];
    for (k, &p) in perm.iter().enumerate() {
        for u in 0..spans_b[k].1 - spans_b[k].0 {
            unit_map[spans_b[k].0 + u] = spans_a[p].0 + u;
        }
    }
    let a_params: HashMap<String, (Vec<usize>, Vec<f64>)> = a
        .params()
        .iter()
        .map(|p| (p.name().to_string(), (p.shape().to_vec(), p.value.clone())))
        .collect();
    let (blocks_a, blocks_b) = (cat_blocks(&old), cat_blocks(&new));
    for p in b.params_mut() {
        let (shape, value) = &a_params[p.name()];
        assert_eq!(shape.as_slice(), p.shape(), "{}", p.name());
        let row = if shape.len() > 1 { shape[1..].iter().product() } else { 1 };
        let copy_row = |dst: &mut Vec<f64>, to: usize, from: usize| {
            dst[to * row..(to + 1) * row].copy_from_slice(&value[from * row..(from + 1) * row])
        };
        if p.name() == "embed.numeric" {
            for (k, &f) in new.numeric_fields().iter().enumerate() {
                copy_row(&mut p.value, k, kind_rank(&old, perm[f]));
            }
        } else if p.name() == "embed.categorical" {
            for (k, &f) in new.categorical_fields().iter().enumerate() {
                let (s, e) = blocks_a[kind_rank(&old, perm[f])];
                let d = blocks_b[k].0;
                for r in 0..e - s {
                    copy_row(&mut p.value, d + r, s + r);
                }
            }
        } else if INPUT_SIDE.iter().any(|n| p.name().ends_with(n)) {
            for (to, &from) in unit_map.iter().enumerate() {
                copy_row(&mut p.value, to, from);
            }
        } else {
            p.value.clone_from(value);
        }
    }
    b
}

fn permute_batch(layout: &FieldLayout, x: &Batch, perm: &[usize]) -> Batch {
    let (nc, nn) = (layout.categorical_fields().len(), layout.numeric_fields().len());
    let mut out = Batch {
        rows: x.rows,
        cat: Vec::new(),
        num: Vec::new(),
        labels: x.labels.clone(),
    };
    for r in 0..x.rows {
        for &p in perm {
            let k = kind_rank(layout, p);
            match layout.cardinalities[p] {
                Some(_) => out.cat.push(x.cat[r * nc + k]),
                None => out.num.push(x.num[r * nn + k]),
            }
        }
    }
    out
}

#[test]
fn permuting_fields_with_permuted_initialization_keeps_logits() {
    let layout = FieldLayout::new(vec![
        ("a".into(), None),
        ("b".into(), Some(4)),
        ("c".into(), None),
        ("d".into(), Some(2)),
        ("e".into(), None),
    ]);
    let perm = [3, 0, 4, 1, 2];
    for raw in [false, true] {
        let mut config = ModelConfig::default_for(Family::MlpPlus);
        config.raw_numeric_input = raw;
        let mut a = TabularModel::new(&config, &layout, 5).unwrap();
        let mut b = permuted_twin(&a, &perm);
        let x = batch(&layout, 16, 8);
        let (la, lb) = (logits(&mut a, &x), logits(&mut b, &permute_batch(&layout, &x, &perm)));
        for (p, q) in la.iter().zip(&lb) {
            // the first layer sums its inputs in a different order
            assert!((p - q).abs() < 1e-12, "raw={raw}: {p} vs {q}");
        }
    }
}

#[test]
fn eval_forward_is_pure() {
    let layout = FieldLayout::new(vec![("a".into(), None), ("b".into(), Some(3)), ("c".into(), None)]);
    for family in Family::ALL {
        let mut model = TabularModel::new(&ModelConfig::default_for(family), &layout, 2).unwrap();
        let before: Vec<Vec<f64>> = model.params().iter().map(|p| p.value.clone()).collect();
        let x = batch(&layout, 9, 4);
        let first = logits(&mut model, &x);
        assert_eq!(first, logits(&mut model, &x));
        let after: Vec<Vec<f64>> = model.params().iter().map(|p| p.value.clone()).collect();
        assert_eq!(before, after, "{family}");
    }
}

#[test]
fn ablation_parameter_counts_are_strictly_ordered_on_the_grid() {
    assert!(ablation_ordering_checked() > 4 * (144 + 144 + 1728 + 13824) - 1);
}

#[test]
fn closed_form_matches_built_models_on_sampled_grid_points() {
    let layout = FieldLayout::new(vec![("a".into(), None), ("b".into(), Some(5)), ("c".into(), None), ("d".into(), Some(3))]);
    let mut rng = SeededRng::new(17);
    for family in Family::ALL {
        let points = SearchSpace::new(family).points();
        for _ in 0..8 {
            let p = &points[rng.below(points.len())];
            for (s, g) in [(true, true), (true, false), (false, false)] {
                let config = p.model.clone().with_ablation(s, g);
                let model = TabularModel::new(&config, &layout, 1).unwrap();
                assert_eq!(model.num_trainable(), param_count(&config, 2, 2, 8), "{family}");
            }
        }
    }
}
