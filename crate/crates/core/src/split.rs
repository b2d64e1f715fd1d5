//! Seeded stratified splits and the manifest format that records them.
//!
//! Manifest layout: a header line `# seed=<seed> k=<k>`, then one
//! `note-id<TAB>set-index` line per note in corpus order.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, CorpusError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub seed: u64,
    /// Note ids of each set, in corpus order.
    pub sets: Vec<Vec<String>>,
    /// `(note id, set index)` in corpus order.
    pub assignment: Vec<(String, usize)>,
}

/// Shuffle each stratum with a seeded ChaCha8 generator and deal its notes
/// round-robin into `k` sets.
///
/// Strata are processed in label order. The dealing position carries over
/// from one stratum to the next, so stratum remainders land on different
/// sets instead of piling onto set 0.
pub fn stratified_split(
    corpus: &Corpus,
    strata: &HashMap<String, String>,
    k: usize,
    seed: u64,
) -> Result<Split, CorpusError> {
    if k == 0 {
        return Err(CorpusError::InvalidK(k));
    }
    let mut by_label: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for note in corpus.notes() {
        let label = strata.get(note.id()).ok_or_else(|| CorpusError::MissingStratumLabel(note.id().to_string()))?;
        by_label.entry(label).or_default().push(note.id());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set_of: HashMap<&str, usize> = HashMap::new();
    let mut dealer = 0;
    for ids in by_label.values_mut() {
        ids.shuffle(&mut rng);
        for id in ids.iter() {
            set_of.insert(id, dealer % k);
            dealer += 1;
        }
    }

    let mut sets = vec![Vec::new(); k];
    let mut assignment = Vec::with_capacity(corpus.len());
    for note in corpus.notes() {
        let set = set_of[note.id()];
        sets[set].push(note.id().to_string());
        assignment.push((note.id().to_string(), set));
    }
    Ok(Split { seed, sets, assignment })
}

impl Split {
    pub fn k(&self) -> usize {
        self.sets.len()
    }

    pub fn to_manifest(&self) -> String {
        let mut out = format!("# seed={} k={}\n", self.seed, self.k());
        for (id, set) in &self.assignment {
            let _ = writeln!(out, "{id}\t{set}");
        }
        out
    }
}

/// Parse a `note-id<TAB>label` strata file. Blank lines and `#` comments are skipped.
pub fn parse_strata(text: &str) -> Result<HashMap<String, String>, (usize, String)> {
    let mut strata = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((id, label)) = line.split_once('\t') else {
            return Err((i + 1, "expected note-id<TAB>label".into()));
        };
        if id.is_empty() || label.is_empty() {
            return Err((i + 1, "empty note id or label".into()));
        }
        if strata.insert(id.to_string(), label.to_string()).is_some() {
            return Err((i + 1, format!("note {id:?} labeled twice")));
        }
    }
    Ok(strata)
}
