//! Scores computed by enumerating every element explicitly, with no sets.

use clean_core::{Mention, ScorePolicy, SentenceSpan};

fn admitted(m: &Mention, policy: ScorePolicy) -> bool {
    policy == ScorePolicy::IgnoreAssertion || !m.assertion.is_negated()
}

fn universe(gold: &[Mention], pred: &[Mention]) -> Vec<String> {
    let mut all: Vec<String> = gold.iter().chain(pred).map(|m| m.element_id.clone()).collect();
    all.sort();
    all.dedup();
    all
}

/// Confusion counts over the elements present on either side, restricted to
/// mentions accepted by `keep`.
fn counts(gold: &[Mention], pred: &[Mention], keep: &dyn Fn(&Mention) -> bool) -> (usize, usize, usize) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for element in universe(gold, pred) {
        let in_gold = gold.iter().any(|m| m.element_id == element && keep(m));
        let in_pred = pred.iter().any(|m| m.element_id == element && keep(m));
        match (in_gold, in_pred) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    (tp, fp, fn_)
}

fn from_counts(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let (gold_n, pred_n) = (tp + fn_, tp + fp);
    if gold_n == 0 && pred_n == 0 {
        return (1.0, 1.0, 1.0);
    }
    if gold_n == 0 || pred_n == 0 {
        return (0.0, 0.0, 0.0);
    }
    let p = tp as f64 / pred_n as f64;
    let r = tp as f64 / gold_n as f64;
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

pub fn note_level(gold: &[Mention], pred: &[Mention], policy: ScorePolicy) -> (f64, f64, f64) {
    let (tp, fp, fn_) = counts(gold, pred, &|m| admitted(m, policy));
    from_counts(tp, fp, fn_)
}

/// `(P, R, F1, counted sentences)`.
pub fn sentence_level(
    gold: &[Mention],
    pred: &[Mention],
    sentences: &[SentenceSpan],
    policy: ScorePolicy,
) -> (f64, f64, f64, usize) {
    let (mut sp, mut sr, mut sf, mut counted) = (0.0, 0.0, 0.0, 0);
    for s in sentences {
        let inside = |m: &Mention| admitted(m, policy) && s.start <= m.start && m.start < s.end;
        let (tp, fp, fn_) = counts(gold, pred, &inside);
        if tp + fp + fn_ == 0 {
            continue;
        }
        let (p, r, f) = from_counts(tp, fp, fn_);
        sp += p;
        sr += r;
        sf += f;
        counted += 1;
    }
    if counted == 0 {
        return (1.0, 1.0, 1.0, 0);
    }
    let n = counted as f64;
    (sp / n, sr / n, sf / n, counted)
}

/// F1 from counts without going through P and R.
pub fn f1_direct(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

pub fn note_counts(gold: &[Mention], pred: &[Mention], policy: ScorePolicy) -> (usize, usize, usize) {
    counts(gold, pred, &|m| admitted(m, policy))
}
