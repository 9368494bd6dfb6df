//! Input artifacts: tokens, utterances, utterance sets and confidence records.
//!
//! All text formats are UTF-8, one record per line, TAB-separated, with
//! `#`-prefixed comment lines and blank lines ignored:
//!
//! * utterance files: `utt_id<TAB>text`
//! * confidence files: `utt_id<TAB>word_index<TAB>word<TAB>score`

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::align;
use crate::metrics::{self, MetricsError};

/// Characters removed from every token during normalization.
pub const PUNCTUATION: &[char] = &['.', ',', ';', ':', '!', '?', '"', '(', ')'];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("token is empty after normalization: {0:?}")]
    EmptyToken(String),
    #[error("line {0}: expected a TAB-separated record")]
    MalformedLine(usize),
    #[error("line {line}: {message}")]
    BadField { line: usize, message: String },
    #[error("duplicate utterance id {0:?}")]
    DuplicateId(String),
    #[error("prompt {0:?} has no words")]
    EmptyPrompt(String),
    #[error("unknown utterance {0:?}")]
    UnknownUtterance(String),
    #[error("utterance {0:?}: word index {1} out of range")]
    IndexOutOfRange(String, usize),
    #[error("utterance {0:?}: word at index {1} does not match the prompt")]
    WordMismatch(String, usize),
    #[error("line {line}: {source}")]
    Score {
        line: usize,
        #[source]
        source: MetricsError,
    },
    #[error("no prompts to segment against")]
    NoPrompts,
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<CorpusError>,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    fn in_file(self, path: &Path) -> Self {
        CorpusError::InFile {
            path: path.to_path_buf(),
            source: Box::new(self),
        }
    }
}

/// A normalized orthographic word.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(String);

impl Token {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Number of graphemes (unicode scalar values).
    pub fn len(&self) -> usize {
        self.0.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Lowercases, NFC-normalizes and strips whitespace and punctuation.
pub fn normalize_token(raw: &str) -> Result<Token, CorpusError> {
    // Composition can turn a character into punctuation, so compose first.
    let composed: String = raw.nfc().collect::<String>().to_lowercase();
    let lowered: String = composed
        .nfc()
        .filter(|c| !c.is_whitespace() && !PUNCTUATION.contains(c))
        .nfc()
        .collect();
    if lowered.is_empty() {
        return Err(CorpusError::EmptyToken(raw.to_string()));
    }
    Ok(Token(lowered))
}

/// Splits text on whitespace and normalizes each word. Words that consist
/// only of punctuation are dropped.
pub fn tokenize(text: &str) -> Vec<Token> {
    text.split_whitespace()
        .filter_map(|w| normalize_token(w).ok())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub tokens: Vec<Token>,
}

impl Utterance {
    pub fn new(id: impl Into<String>, tokens: Vec<Token>) -> Self {
        Utterance {
            id: id.into(),
            tokens,
        }
    }

    /// Builds an utterance by tokenizing `text`.
    pub fn from_text(id: impl Into<String>, text: &str) -> Self {
        Utterance::new(id, tokenize(text))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Space-joined token text.
    pub fn text(&self) -> String {
        let words: Vec<&str> = self.tokens.iter().map(Token::as_str).collect();
        words.join(" ")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Prompt,
    Manual,
    Hypothesis,
}

/// Id-keyed utterances in insertion order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UtteranceSet {
    role: Role,
    utterances: IndexMap<String, Utterance>,
}

impl UtteranceSet {
    pub fn new(role: Role) -> Self {
        UtteranceSet {
            role,
            utterances: IndexMap::new(),
        }
    }

    pub fn from_utterances(
        role: Role,
        utterances: impl IntoIterator<Item = Utterance>,
    ) -> Result<Self, CorpusError> {
        let mut set = UtteranceSet::new(role);
        for u in utterances {
            set.insert(u)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, utterance: Utterance) -> Result<(), CorpusError> {
        if self.role == Role::Prompt && utterance.is_empty() {
            return Err(CorpusError::EmptyPrompt(utterance.id));
        }
        if self.utterances.contains_key(&utterance.id) {
            return Err(CorpusError::DuplicateId(utterance.id));
        }
        self.utterances.insert(utterance.id.clone(), utterance);
        Ok(())
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.utterances.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Utterance> {
        self.utterances.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.utterances.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Total number of tokens over all utterances.
    pub fn word_count(&self) -> usize {
        self.iter().map(Utterance::len).sum()
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

/// Parses `utt_id<TAB>text` records.
pub fn parse_utterances(text: &str, role: Role) -> Result<UtteranceSet, CorpusError> {
    let mut set = UtteranceSet::new(role);
    for (line_no, line) in content_lines(text) {
        let (id, body) = line
            .split_once('\t')
            .ok_or(CorpusError::MalformedLine(line_no))?;
        let id = id.trim();
        if id.is_empty() {
            return Err(CorpusError::MalformedLine(line_no));
        }
        set.insert(Utterance::from_text(id, body))?;
    }
    Ok(set)
}

pub fn parse_utterance_file(path: &Path, role: Role) -> Result<UtteranceSet, CorpusError> {
    let text = read_file(path)?;
    parse_utterances(&text, role).map_err(|e| e.in_file(path))
}

fn read_file(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A clamped per-word confidence score attached to a prompt word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRecord {
    pub utterance_id: String,
    pub word_index: usize,
    pub word: Token,
    pub raw_score: f64,
    pub score: f64,
}

/// Parses `utt_id<TAB>word_index<TAB>word<TAB>score` records and checks
/// each one against the prompt it refers to.
pub fn parse_confidences(
    text: &str,
    prompts: &UtteranceSet,
) -> Result<Vec<ConfidenceRecord>, CorpusError> {
    let mut records = Vec::new();
    for (line_no, line) in content_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(CorpusError::MalformedLine(line_no));
        }
        let id = fields[0].trim();
        let word_index: usize = fields[1].trim().parse().map_err(|_| CorpusError::BadField {
            line: line_no,
            message: format!("word index {:?} is not a non-negative integer", fields[1]),
        })?;
        let raw_score: f64 = fields[3].trim().parse().map_err(|_| CorpusError::BadField {
            line: line_no,
            message: format!("score {:?} is not a number", fields[3]),
        })?;
        let prompt = prompts
            .get(id)
            .ok_or_else(|| CorpusError::UnknownUtterance(id.to_string()))?;
        let expected = prompt
            .tokens
            .get(word_index)
            .ok_or_else(|| CorpusError::IndexOutOfRange(id.to_string(), word_index))?;
        let word = normalize_token(fields[2])
            .map_err(|_| CorpusError::WordMismatch(id.to_string(), word_index))?;
        if &word != expected {
            return Err(CorpusError::WordMismatch(id.to_string(), word_index));
        }
        let score = metrics::clamp_confidence(raw_score).map_err(|source| CorpusError::Score {
            line: line_no,
            source,
        })?;
        records.push(ConfidenceRecord {
            utterance_id: id.to_string(),
            word_index,
            word,
            raw_score,
            score,
        });
    }
    Ok(records)
}

pub fn parse_confidence_file(
    path: &Path,
    prompts: &UtteranceSet,
) -> Result<Vec<ConfidenceRecord>, CorpusError> {
    let text = read_file(path)?;
    parse_confidences(&text, prompts).map_err(|e| e.in_file(path))
}

/// Splits a continuous transcript into one span per prompt, in prompt order.
///
/// Cut points minimize the summed word-level alignment cost of each prompt
/// against its span. Among optimal segmentations the last boundary is placed
/// as early as possible, then the one before it, and so on.
pub fn segment_transcript(
    full_text: &str,
    prompts: &UtteranceSet,
) -> Result<UtteranceSet, CorpusError> {
    segment_tokens(&tokenize(full_text), prompts)
}

pub fn segment_tokens(stream: &[Token], prompts: &UtteranceSet) -> Result<UtteranceSet, CorpusError> {
    if prompts.is_empty() {
        return Err(CorpusError::NoPrompts);
    }
    let m = stream.len();
    let prompt_list: Vec<&Utterance> = prompts.iter().collect();

    // entry[k][j]: best cost of aligning prompts 0..k against stream[..j].
    let mut entry: Vec<Vec<usize>> = Vec::with_capacity(prompt_list.len() + 1);
    let mut first = vec![usize::MAX; m + 1];
    first[0] = 0;
    entry.push(first);
    for prompt in &prompt_list {
        let prev = entry.last().expect("entry row");
        entry.push(forward_segment(&prompt.tokens, stream, prev));
    }

    // Walk boundaries right to left, choosing the smallest feasible start.
    let mut cuts = vec![0usize; prompt_list.len() + 1];
    cuts[prompt_list.len()] = m;
    for k in (0..prompt_list.len()).rev() {
        let end = cuts[k + 1];
        let target = entry[k + 1][end];
        let span_costs = suffix_costs(&prompt_list[k].tokens, &stream[..end]);
        let start = (0..=end)
            .find(|&i| {
                entry[k][i] != usize::MAX && entry[k][i] + span_costs[i] == target
            })
            .expect("optimal segmentation has a feasible start");
        cuts[k] = start;
    }

    let mut out = UtteranceSet::new(Role::Manual);
    for (k, prompt) in prompt_list.iter().enumerate() {
        out.insert(Utterance::new(
            prompt.id.clone(),
            stream[cuts[k]..cuts[k + 1]].to_vec(),
        ))?;
    }
    Ok(out)
}

/// Alignment DP for one prompt where the row before the first prompt word
/// starts from the best cost of every possible cut. Returns the cost of
/// finishing this prompt at each stream position.
fn forward_segment(prompt: &[Token], stream: &[Token], entry: &[usize]) -> Vec<usize> {
    let m = stream.len();
    let mut row = vec![usize::MAX; m + 1];
    for j in 0..=m {
        let mut best = entry[j];
        if j > 0 && row[j - 1] != usize::MAX {
            best = best.min(row[j - 1] + align::indel_cost(&stream[j - 1]));
        }
        row[j] = best;
    }
    for word in prompt {
        let mut next = vec![usize::MAX; m + 1];
        for j in 0..=m {
            let mut best = usize::MAX;
            if row[j] != usize::MAX {
                best = row[j] + align::indel_cost(word);
            }
            if j > 0 {
                if row[j - 1] != usize::MAX {
                    best = best.min(row[j - 1] + align::substitution_cost(word, &stream[j - 1]));
                }
                if next[j - 1] != usize::MAX {
                    best = best.min(next[j - 1] + align::indel_cost(&stream[j - 1]));
                }
            }
            next[j] = best;
        }
        row = next;
    }
    row
}

/// `out[i]` is the alignment cost of `prompt` against `span[i..]`.
fn suffix_costs(prompt: &[Token], span: &[Token]) -> Vec<usize> {
    let m = span.len();
    // row[j]: cost of prompt[r..] against span[j..], built from r = n down to 0.
    let mut row = vec![0usize; m + 1];
    for j in (0..m).rev() {
        row[j] = row[j + 1] + align::indel_cost(&span[j]);
    }
    for word in prompt.iter().rev() {
        let mut next = vec![0usize; m + 1];
        next[m] = row[m] + align::indel_cost(word);
        for j in (0..m).rev() {
            next[j] = (row[j] + align::indel_cost(word))
                .min(row[j + 1] + align::substitution_cost(word, &span[j]))
                .min(next[j + 1] + align::indel_cost(&span[j]));
        }
        row = next;
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(s: &str) -> Token {
        normalize_token(s).unwrap()
    }

    fn prompts(lines: &str) -> UtteranceSet {
        parse_utterances(lines, Role::Prompt).unwrap()
    }

    #[test]
    fn normalizes_case_punctuation_and_whitespace() {
        assert_eq!(tok("Wanneer").as_str(), "wanneer");
        assert_eq!(tok("opnieuw.").as_str(), "opnieuw");
        assert_eq!(tok("  ze ").as_str(), "ze");
        assert_eq!(tok("(\"Hallo!\")").as_str(), "hallo");
        assert!(matches!(normalize_token(" .,; "), Err(CorpusError::EmptyToken(_))));
    }

    #[test]
    fn composes_to_nfc() {
        let decomposed = "idee\u{0308}n";
        assert_eq!(tok(decomposed).as_str(), "ideën");
        assert_eq!(tok(decomposed), tok("ideën"));
    }

    #[test]
    fn punctuation_revealed_by_composition_is_stripped() {
        // U+037E composes to an ASCII semicolon.
        assert!(matches!(normalize_token("\u{037E}"), Err(CorpusError::EmptyToken(_))));
        assert_eq!(tok("ja\u{037E}").as_str(), "ja");
    }

    #[test]
    fn parses_restart_prompt() {
        let set = prompts("u1\twanneer ze klaar is klappen we opnieuw\n");
        assert_eq!(set.get("u1").unwrap().len(), 7);
    }

    #[test]
    fn empty_hypothesis_is_allowed() {
        let set = parse_utterances("u2\t\n", Role::Hypothesis).unwrap();
        assert!(set.get("u2").unwrap().is_empty());
    }

    #[test]
    fn empty_prompt_is_rejected() {
        let err = parse_utterances("u2\t . \n", Role::Prompt).unwrap_err();
        assert!(matches!(err, CorpusError::EmptyPrompt(id) if id == "u2"));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let err = parse_utterances("u1\ta\nu1\tb\n", Role::Manual).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId(id) if id == "u1"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_utterances("# header\n\nu1\ta\nu2 b\n", Role::Manual).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine(4)));
    }

    #[test]
    fn comments_and_order() {
        let set = parse_utterances("# c\nb\tx\n\na\ty\n", Role::Manual).unwrap();
        assert_eq!(set.ids().collect::<Vec<_>>(), vec!["b", "a"]);
    }

    #[test]
    fn confidence_records_are_clamped_and_checked() {
        let p = prompts("u1\twanneer ze klaar is klappen we opnieuw\n");
        let recs = parse_confidences("u1\t0\twanneer\t0.98\nu1\t1\tze\t1.07\nu1\t2\tklaar\t-0.03\n", &p)
            .unwrap();
        assert_eq!(recs[0].score, 0.98);
        assert_eq!(recs[1].score, 1.0);
        assert_eq!(recs[1].raw_score, 1.07);
        assert_eq!(recs[2].score, 0.0);

        let err = parse_confidences("u1\t9\twe\t0.5\n", &p).unwrap_err();
        assert!(matches!(err, CorpusError::IndexOutOfRange(_, 9)));
        let err = parse_confidences("u1\t1\twe\t0.5\n", &p).unwrap_err();
        assert!(matches!(err, CorpusError::WordMismatch(_, 1)));
        let err = parse_confidences("u9\t1\twe\t0.5\n", &p).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownUtterance(_)));
        let err = parse_confidences("u1\t1\tze\tNaN\n", &p).unwrap_err();
        assert!(matches!(err, CorpusError::Score { line: 1, .. }));
        let err = parse_confidences("u1\t1\tze\n", &p).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine(1)));
    }

    #[test]
    fn segmentation_of_exact_concatenation() {
        let p = prompts("u1\tde kat\nu2\tzit op\nu3\tde mat\n");
        let seg = segment_transcript("de kat zit op de mat", &p).unwrap();
        for u in p.iter() {
            assert_eq!(seg.get(&u.id).unwrap().tokens, u.tokens);
        }
    }

    #[test]
    fn segmentation_assigns_filler_to_its_prompt() {
        let p = prompts("u1\ta b\nu2\tc d\n");
        let seg = segment_transcript("a uh b c d", &p).unwrap();
        assert_eq!(seg.get("u1").unwrap().text(), "a uh b");
        assert_eq!(seg.get("u2").unwrap().text(), "c d");
    }

    #[test]
    fn segmentation_of_empty_stream() {
        let p = prompts("u1\ta\nu2\tb\n");
        let seg = segment_transcript("", &p).unwrap();
        assert!(seg.iter().all(Utterance::is_empty));
        assert_eq!(seg.len(), 2);
    }

    #[test]
    fn segmentation_without_prompts() {
        let p = UtteranceSet::new(Role::Prompt);
        assert!(matches!(segment_transcript("a", &p), Err(CorpusError::NoPrompts)));
    }

    #[test]
    fn segmentation_tie_takes_earliest_cut() {
        // "x" between the prompts costs the same on either side.
        let p = prompts("u1\ta\nu2\tb\n");
        let seg = segment_transcript("a x b", &p).unwrap();
        assert_eq!(seg.get("u1").unwrap().text(), "a");
        assert_eq!(seg.get("u2").unwrap().text(), "x b");
    }
}
