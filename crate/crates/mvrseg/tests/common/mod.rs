//! Shared oracles for the integration tests: central finite differences
//! against the analytic gradients, and random problem instances.

use std::ops::Range;

use rand::Rng;

use mvrseg::segment::TokenSeq;
use mvrseg::trainer::{ExampleViews, Gradients, Task, ToyModel};

pub const FD_STEP: f64 = 1e-5;

/// Central-finite-difference gradient of `f` with respect to every
/// parameter of `model`.
pub fn numeric_gradients<F>(model: &ToyModel, f: F) -> Gradients
where
    F: Fn(&ToyModel) -> f64,
{
    let mut grads = Gradients::zeros_like(model);
    let mut probe = model.clone();
    let diff = |m: &mut ToyModel, get: &dyn Fn(&mut ToyModel) -> &mut f64| -> f64 {
        let orig = *get(m);
        *get(m) = orig + FD_STEP;
        let hi = f(m);
        *get(m) = orig - FD_STEP;
        let lo = f(m);
        *get(m) = orig;
        (hi - lo) / (2.0 * FD_STEP)
    };
    for i in 0..grads.embed.len() {
        for k in 0..grads.embed[i].len() {
            grads.embed[i][k] = diff(&mut probe, &|m| &mut m.embed[i][k]);
        }
    }
    for k in 0..grads.out_w.len() {
        for c in 0..grads.out_w[k].len() {
            grads.out_w[k][c] = diff(&mut probe, &|m| &mut m.out_w[k][c]);
        }
    }
    for c in 0..grads.out_b.len() {
        grads.out_b[c] = diff(&mut probe, &|m| &mut m.out_b[c]);
    }
    grads
}

/// Largest relative disagreement between two parameter-shaped gradients.
/// The denominator floor keeps near-zero entries from inflating the
/// ratio past the finite-difference noise floor.
pub fn max_rel_err(analytic: &Gradients, numeric: &Gradients) -> f64 {
    let pairs = analytic
        .embed
        .iter()
        .flatten()
        .zip(numeric.embed.iter().flatten())
        .chain(
            analytic
                .out_w
                .iter()
                .flatten()
                .zip(numeric.out_w.iter().flatten()),
        )
        .chain(analytic.out_b.iter().zip(numeric.out_b.iter()));
    pairs
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

/// A random piece inventory of `extra` pieces beyond `<unk>`.
pub fn random_inventory<R: Rng>(rng: &mut R, extra: usize) -> Vec<String> {
    let mut out = vec!["<unk>".to_string()];
    for i in 0..extra {
        let c = (b'a' + (i % 26) as u8) as char;
        out.push(format!("{c}{}", i / 26));
        let _ = rng; // inventory shape only depends on `extra`
    }
    out
}

/// A random token sequence over `inventory` with `words` words of 1-3
/// pieces each.
pub fn random_token_seq<R: Rng>(rng: &mut R, inventory: &[String], words: usize) -> TokenSeq {
    let mut pieces = Vec::new();
    let mut word_spans: Vec<Range<usize>> = Vec::new();
    for _ in 0..words {
        let start = pieces.len();
        for _ in 0..rng.gen_range(1..=3) {
            pieces.push(inventory[rng.gen_range(0..inventory.len())].clone());
        }
        word_spans.push(start..pieces.len());
    }
    TokenSeq { pieces, word_spans }
}

/// A random (model, views) gradient-check instance. Classification
/// instances carry one label; tagging instances label every word and
/// use the same word count in both views so words stay shared.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    task: Task,
    num_classes: usize,
) -> (ToyModel, ExampleViews) {
    let extra = rng.gen_range(4..=10);
    let inventory = random_inventory(rng, extra);
    let dim = rng.gen_range(2..=4);
    let mut model = ToyModel::new(&inventory, dim, num_classes).expect("valid instance");
    model.randomize(rng, 0.5);
    let words = rng.gen_range(1..=3);
    let det = random_token_seq(rng, &inventory, words);
    let prob = random_token_seq(rng, &inventory, words);
    let labels = match task {
        Task::Classification => vec![rng.gen_range(0..num_classes)],
        Task::Tagging => (0..words).map(|_| rng.gen_range(0..num_classes)).collect(),
    };
    let views = ExampleViews {
        task,
        det,
        prob,
        labels,
    };
    (model, views)
}
