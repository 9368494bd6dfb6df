//! Synthetic readers and recognizers with known ground truth, plus the
//! exhaustive alignment oracle used by the property tests.
//!
//! Randomness comes from ChaCha8 seeded with the model seed; every
//! utterance draws from its own stream (the utterance's position in the
//! prompt set), so corpora do not depend on generation order.

use std::collections::HashSet;

use indexmap::IndexMap;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align;
use crate::corpus::{normalize_token, Role, Token, Utterance, UtteranceSet};

/// Word and grapheme limits of the exhaustive oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_words: usize,
    pub max_graphemes: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_words: 8,
            max_graphemes: 6,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("input exceeds oracle limits ({max_words} words, {max_graphemes} graphemes per word)")]
    SizeLimit { max_words: usize, max_graphemes: usize },
    #[error("invalid error model: {0}")]
    InvalidModel(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub p_omission: f64,
    pub p_substitution: f64,
    pub p_restart: f64,
    pub p_filler: f64,
    pub filler_vocabulary: Vec<String>,
    pub substitution_edits: usize,
    pub seed: u64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        ErrorModel {
            p_omission: 0.0,
            p_substitution: 0.0,
            p_restart: 0.0,
            p_filler: 0.0,
            filler_vocabulary: vec!["uh".to_string()],
            substitution_edits: 1,
            seed: 0,
        }
    }
}

impl ErrorModel {
    pub fn validate(&self) -> Result<(), SimError> {
        for (name, p) in [
            ("p_omission", self.p_omission),
            ("p_substitution", self.p_substitution),
            ("p_restart", self.p_restart),
            ("p_filler", self.p_filler),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::InvalidModel(format!("{name} = {p} is not in [0, 1]")));
            }
        }
        if self.filler_vocabulary.is_empty() {
            return Err(SimError::InvalidModel("filler vocabulary is empty".into()));
        }
        if let Some(bad) = self
            .filler_vocabulary
            .iter()
            .find(|f| normalize_token(f).map(|t| t.as_str() != f.as_str()).unwrap_or(true))
        {
            return Err(SimError::InvalidModel(format!("filler {bad:?} is not a normalized token")));
        }
        if self.substitution_edits == 0 {
            return Err(SimError::InvalidModel("substitution_edits must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, spec: &str) -> Result<(), SimError> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| SimError::InvalidModel(format!("expected KEY=VALUE, got {spec:?}")))?;
        let bad = |what: &str| SimError::InvalidModel(format!("{key}: {value:?} is not {what}"));
        let prob = || value.trim().parse::<f64>().map_err(|_| bad("a number"));
        match key.trim() {
            "p_omission" => self.p_omission = prob()?,
            "p_substitution" => self.p_substitution = prob()?,
            "p_restart" => self.p_restart = prob()?,
            "p_filler" => self.p_filler = prob()?,
            "fillers" | "filler_vocabulary" => {
                self.filler_vocabulary = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
            }
            "substitution_edits" => {
                self.substitution_edits = value.trim().parse().map_err(|_| bad("an integer"))?
            }
            "seed" => self.seed = value.trim().parse().map_err(|_| bad("an integer"))?,
            other => return Err(SimError::InvalidModel(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    fn is_zero(&self) -> bool {
        self.p_omission == 0.0 && self.p_substitution == 0.0 && self.p_restart == 0.0 && self.p_filler == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthLabel {
    Correct,
    Omitted,
    Substituted,
}

impl TruthLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            TruthLabel::Correct => "correct",
            TruthLabel::Omitted => "omitted",
            TruthLabel::Substituted => "substituted",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Omit { ref_index: usize },
    Substitute { ref_index: usize, token: Token },
    Filler { ref_index: usize, token: Token },
    Restart { ref_index: usize, fragment: Token },
    Read { ref_index: usize, token: Token },
}

/// Tokens emitted by an event log, in order.
pub fn replay(events: &[Event]) -> Vec<Token> {
    events
        .iter()
        .filter_map(|e| match e {
            Event::Omit { .. } => None,
            Event::Substitute { token, .. }
            | Event::Filler { token, .. }
            | Event::Read { token, .. } => Some(token.clone()),
            Event::Restart { fragment, .. } => Some(fragment.clone()),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatedReading {
    pub utterance: Utterance,
    pub ground_truth: Vec<TruthLabel>,
    pub event_log: Vec<Event>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn token(s: &str) -> Token {
    normalize_token(s).expect("generated text is a valid token")
}

const LETTERS: &[char] = &[
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r', 's',
    't', 'u', 'v', 'w', 'x', 'y', 'z',
];

/// Applies 1..=`max_edits` random grapheme edits, re-rolling until the result
/// is none of the `forbidden` tokens.
fn mutate(word: &Token, max_edits: usize, forbidden: &HashSet<&str>, rng: &mut impl Rng) -> Token {
    for _ in 0..1000 {
        let mut chars: Vec<char> = word.as_str().chars().collect();
        let edits = rng.random_range(1..=max_edits);
        for _ in 0..edits {
            let letter = LETTERS[rng.random_range(0..LETTERS.len())];
            match rng.random_range(0..3) {
                0 => {
                    let at = rng.random_range(0..=chars.len());
                    chars.insert(at, letter);
                }
                1 if chars.len() > 1 => {
                    let at = rng.random_range(0..chars.len());
                    chars.remove(at);
                }
                _ => {
                    let at = rng.random_range(0..chars.len());
                    chars[at] = letter;
                }
            }
        }
        let candidate: String = chars.into_iter().collect();
        if !forbidden.contains(candidate.as_str()) {
            return token(&candidate);
        }
    }
    let mut fallback = word.as_str().to_string();
    while forbidden.contains(fallback.as_str()) {
        fallback.push('x');
    }
    token(&fallback)
}

fn pick_filler(model: &ErrorModel, vocabulary: &HashSet<&str>, rng: &mut impl Rng) -> Token {
    let mut filler = model.filler_vocabulary[rng.random_range(0..model.filler_vocabulary.len())].clone();
    while vocabulary.contains(filler.as_str()) {
        filler.push('h');
    }
    token(&filler)
}

fn simulate_with(prompt: &Utterance, model: &ErrorModel, rng: &mut impl Rng) -> SimulatedReading {
    let vocabulary: HashSet<&str> = prompt.tokens.iter().map(Token::as_str).collect();
    let mut events = Vec::new();
    let mut labels = Vec::with_capacity(prompt.len());
    for (ref_index, word) in prompt.tokens.iter().enumerate() {
        if rng.random::<f64>() < model.p_omission {
            events.push(Event::Omit { ref_index });
            labels.push(TruthLabel::Omitted);
            continue;
        }
        if rng.random::<f64>() < model.p_substitution {
            let token = mutate(word, model.substitution_edits, &vocabulary, rng);
            events.push(Event::Substitute { ref_index, token });
            labels.push(TruthLabel::Substituted);
            continue;
        }
        if rng.random::<f64>() < model.p_filler {
            let token = pick_filler(model, &vocabulary, rng);
            events.push(Event::Filler { ref_index, token });
        }
        if rng.random::<f64>() < model.p_restart {
            let chars: Vec<char> = word.as_str().chars().collect();
            let keep = rng.random_range(1..=chars.len());
            let fragment = token(&chars[..keep].iter().collect::<String>());
            events.push(Event::Restart { ref_index, fragment });
        }
        events.push(Event::Read {
            ref_index,
            token: word.clone(),
        });
        labels.push(TruthLabel::Correct);
    }
    SimulatedReading {
        utterance: Utterance::new(prompt.id.clone(), replay(&events)),
        ground_truth: labels,
        event_log: events,
    }
}

/// Simulates one child reading of `prompt`.
///
/// Each prompt word is independently omitted, substituted by a near miss
/// that is not a prompt word, or read correctly. A correct reading may be
/// preceded by a filler and then by a restart fragment (a prefix of the word,
/// possibly the whole word).
pub fn simulate_reading(prompt: &Utterance, model: &ErrorModel) -> SimulatedReading {
    simulate_with(prompt, model, &mut rng_for(model.seed, 0))
}

/// Recognition errors layered over a spoken utterance: omissions and
/// substitutions only.
fn recognize(
    spoken: &Utterance,
    prompt: &Utterance,
    model: &ErrorModel,
    rng: &mut impl Rng,
) -> Utterance {
    let vocabulary: HashSet<&str> = prompt.tokens.iter().map(Token::as_str).collect();
    let mut tokens = Vec::with_capacity(spoken.len());
    for word in &spoken.tokens {
        if rng.random::<f64>() < model.p_omission {
            continue;
        }
        if rng.random::<f64>() < model.p_substitution {
            tokens.push(mutate(word, model.substitution_edits, &vocabulary, rng));
        } else {
            tokens.push(word.clone());
        }
    }
    Utterance::new(spoken.id.clone(), tokens)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedCorpus {
    pub manual: UtteranceSet,
    pub hypothesis: UtteranceSet,
    pub truth: IndexMap<String, Vec<TruthLabel>>,
}

/// Generates manual transcripts with `reader_model` and ASR hypotheses by a
/// second pass with `asr_model` over each manual transcript.
pub fn generate_corpus(
    prompts: &UtteranceSet,
    reader_model: &ErrorModel,
    asr_model: &ErrorModel,
) -> Result<SimulatedCorpus, SimError> {
    reader_model.validate()?;
    asr_model.validate()?;
    let mut manual = Vec::with_capacity(prompts.len());
    let mut hypothesis = Vec::with_capacity(prompts.len());
    let mut truth = IndexMap::with_capacity(prompts.len());
    for (index, prompt) in prompts.iter().enumerate() {
        let reading = simulate_with(prompt, reader_model, &mut rng_for(reader_model.seed, index as u64));
        let hyp = if asr_model.is_zero() {
            reading.utterance.clone()
        } else {
            recognize(
                &reading.utterance,
                prompt,
                asr_model,
                &mut rng_for(asr_model.seed, index as u64),
            )
        };
        truth.insert(prompt.id.clone(), reading.ground_truth);
        manual.push(reading.utterance);
        hypothesis.push(hyp);
    }
    let manual = UtteranceSet::from_utterances(Role::Manual, manual).expect("ids come from a set");
    let hypothesis =
        UtteranceSet::from_utterances(Role::Hypothesis, hypothesis).expect("ids come from a set");
    Ok(SimulatedCorpus {
        manual,
        hypothesis,
        truth,
    })
}

/// `utt_id<TAB>ref_index<TAB>label` lines.
pub fn format_truth(truth: &IndexMap<String, Vec<TruthLabel>>) -> String {
    let mut out = String::new();
    for (id, labels) in truth {
        for (i, label) in labels.iter().enumerate() {
            out.push_str(&format!("{id}\t{i}\t{}\n", label.as_str()));
        }
    }
    out
}

const ONSETS: &[&str] = &["b", "d", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "st", "kl", "br"];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "aa", "ee", "oo", "ij", "ou"];
const CODAS: &[&str] = &["", "", "n", "k", "t", "s", "l", "r"];

/// A seeded prompt set of Dutch-like pseudo-words, with no word repeated
/// inside an utterance.
pub fn random_prompts(n_utterances: usize, words: std::ops::RangeInclusive<usize>, seed: u64) -> UtteranceSet {
    let mut set = UtteranceSet::new(Role::Prompt);
    for u in 0..n_utterances {
        let mut rng = rng_for(seed, u as u64);
        let n = rng.random_range(words.clone()).max(1);
        let mut seen = HashSet::new();
        let mut tokens = Vec::with_capacity(n);
        while tokens.len() < n {
            let syllables = rng.random_range(1..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
                w.push_str(NUCLEI[rng.random_range(0..NUCLEI.len())]);
                w.push_str(CODAS[rng.random_range(0..CODAS.len())]);
            }
            if seen.insert(w.clone()) {
                tokens.push(token(&w));
            }
        }
        set.insert(Utterance::new(format!("utt{u:05}"), tokens))
            .expect("generated ids are unique");
    }
    set
}

/// Random tokens over a small alphabet, for oracle comparisons.
pub fn random_tokens(rng: &mut impl Rng, max_words: usize, max_graphemes: usize, alphabet: &[char]) -> Vec<Token> {
    let n = rng.random_range(0..=max_words);
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..=max_graphemes);
            let s: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
            token(&s)
        })
        .collect()
}

/// Textbook full-matrix Levenshtein, kept separate from the aligner's own.
fn oracle_grapheme_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + if a[i - 1] == b[j - 1] { 0 } else { 1 };
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn exhaustive(i: usize, j: usize, sub: &[Vec<usize>], del: &[usize], ins: &[usize]) -> usize {
    let (n, m) = (del.len(), ins.len());
    if i == n {
        return ins[j..].iter().sum();
    }
    if j == m {
        return del[i..].iter().sum();
    }
    let diagonal = sub[i][j] + exhaustive(i + 1, j + 1, sub, del, ins);
    let deletion = del[i] + exhaustive(i + 1, j, sub, del, ins);
    let insertion = ins[j] + exhaustive(i, j + 1, sub, del, ins);
    diagonal.min(deletion).min(insertion)
}

/// Minimum alignment cost over every monotone word alignment, by plain
/// recursion over all paths.
pub fn brute_force_align(reference: &Utterance, hypothesis: &Utterance) -> Result<usize, SimError> {
    brute_force_align_with_limits(reference, hypothesis, OracleLimits::default())
}

pub fn brute_force_align_with_limits(
    reference: &Utterance,
    hypothesis: &Utterance,
    limits: OracleLimits,
) -> Result<usize, SimError> {
    let too_long = |u: &Utterance| {
        u.len() > limits.max_words || u.tokens.iter().any(|t| t.len() > limits.max_graphemes)
    };
    if too_long(reference) || too_long(hypothesis) {
        return Err(SimError::SizeLimit {
            max_words: limits.max_words,
            max_graphemes: limits.max_graphemes,
        });
    }
    let sub: Vec<Vec<usize>> = reference
        .tokens
        .iter()
        .map(|r| {
            hypothesis
                .tokens
                .iter()
                .map(|h| oracle_grapheme_distance(r.as_str(), h.as_str()))
                .collect()
        })
        .collect();
    let del: Vec<usize> = reference.tokens.iter().map(|t| t.len() + 1).collect();
    let ins: Vec<usize> = hypothesis.tokens.iter().map(|t| t.len() + 1).collect();
    Ok(exhaustive(0, 0, &sub, &del, &ins))
}

/// Total distance from the aligner, for side-by-side use with the oracle.
pub fn dp_distance(reference: &Utterance, hypothesis: &Utterance) -> usize {
    align::align_words(reference, hypothesis).total_distance
}
