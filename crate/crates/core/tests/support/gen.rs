use clean_core::{ingest_note, Assertion, ClinicalNote, Mention, ScorePolicy, SentenceSpan, ToolOutput};
use rand::seq::IndexedRandom;
use rand::Rng;

pub fn mention(element: &str, start: usize, end: usize, negated: bool) -> Mention {
    Mention {
        element_id: element.to_string(),
        start,
        end,
        surface: String::new(),
        assertion: if negated { Assertion::Negated } else { Assertion::Affirmed },
        source: String::new(),
    }
}

/// One randomized scoring problem.
#[derive(Debug, Clone)]
pub struct MetricInstance {
    pub note: ClinicalNote,
    pub sentences: Vec<SentenceSpan>,
    pub gold: Vec<Mention>,
    pub pred: Vec<Mention>,
    pub policy: ScorePolicy,
}

/// Up to 10 elements, 5 sentences and 20 mentions. Sentence spans are built
/// alongside the text, so they are known exactly.
pub fn metric_instance(rng: &mut impl Rng) -> MetricInstance {
    let n_sentences = rng.random_range(1..=5);
    let mut text = String::new();
    let mut sentences = Vec::new();
    for index in 0..n_sentences {
        if index > 0 {
            text.push(' ');
        }
        let start = text.len();
        let words = rng.random_range(1..=6);
        let body: Vec<&str> = (0..words).map(|_| *["aa", "bbb", "cccc", "d"].choose(rng).unwrap()).collect();
        text.push_str(&body.join(" "));
        text.push('.');
        sentences.push(SentenceSpan { index, start, end: text.len() });
    }
    let universe = rng.random_range(1..=10);
    let total = rng.random_range(0..=20);
    let gold_n = rng.random_range(0..=total);
    let random_mention = |rng: &mut dyn rand::RngCore| {
        let s = sentences[rng.random_range(0..sentences.len())];
        let start = rng.random_range(s.start..s.end);
        let end = rng.random_range(start + 1..=s.end);
        mention(&format!("e{}", rng.random_range(0..universe)), start, end, rng.random_bool(0.3))
    };
    let gold = (0..gold_n).map(|_| random_mention(rng)).collect();
    let pred = (0..total - gold_n).map(|_| random_mention(rng)).collect();
    let policy = if rng.random_bool(0.5) { ScorePolicy::IgnoreAssertion } else { ScorePolicy::AffirmedOnly };
    MetricInstance { note: ingest_note(text.as_bytes(), "inst").unwrap(), sentences, gold, pred, policy }
}

/// Random outputs of `tools` annotators over a note of `len` chars, using
/// elements `e0..e{elements}`.
pub fn tool_outputs(rng: &mut impl Rng, tools: usize, len: usize, elements: usize) -> Vec<ToolOutput> {
    (0..tools)
        .map(|t| {
            let n = rng.random_range(0..=8);
            let mentions = (0..n)
                .map(|_| {
                    let start = rng.random_range(0..len - 1);
                    let end = rng.random_range(start + 1..=(start + 12).min(len));
                    mention(&format!("e{}", rng.random_range(0..elements)), start, end, rng.random_bool(0.3))
                })
                .collect();
            ToolOutput::new(format!("tool{t}"), "n", mentions)
        })
        .collect()
}

const PIECES: &[&str] = &[
    "Pt", "with", "CHF", "café", "naïve", "façade", "señor", "Zürich", "β-blocker", "→", "日本語", "🫀", "edema", "BNP",
    "30%", "mg", "Ø", "crème", "ü", "\t", "\n", "  ",
];

/// A note mixing ASCII, accented, CJK and astral-plane characters, so char
/// and byte offsets disagree.
pub fn unicode_note(rng: &mut impl Rng, id: &str) -> ClinicalNote {
    let n = rng.random_range(1..40);
    let mut text = String::from("x");
    for _ in 0..n {
        text.push_str(PIECES.choose(rng).unwrap());
        text.push(' ');
    }
    ingest_note(text.as_bytes(), id).unwrap()
}

/// Mentions with random spans over `note`, surfaces filled from the text.
pub fn mentions_on(rng: &mut impl Rng, note: &ClinicalNote, elements: &[&str], max: usize) -> Vec<Mention> {
    let len = note.char_len();
    (0..rng.random_range(0..=max))
        .map(|_| {
            let start = rng.random_range(0..len);
            let end = rng.random_range(start + 1..=len);
            let mut m = mention(elements.choose(rng).unwrap(), start, end, rng.random_bool(0.4));
            m.surface = note.slice(start, end).unwrap().to_string();
            m
        })
        .collect()
}
