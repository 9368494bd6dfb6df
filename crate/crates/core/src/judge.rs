//! Per-word correctness judgments and reading error sets.
//!
//! Verdicts come from a backward matcher that tolerates restarts and
//! partial words; distances come from [`align::align_words`]. The two are
//! computed independently over the same prompt/hypothesis pair.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{self, WordAlignment};
use crate::corpus::{Token, Utterance, UtteranceSet};

pub const DEFAULT_EXCLUSION_THRESHOLD: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum JudgeError {
    #[error("no utterance {0:?} to compare against the prompt")]
    MissingUtterance(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub ref_index: usize,
    pub word: Token,
    pub correct: bool,
    pub matched_hyp_index: Option<usize>,
}

/// Judges every prompt word, scanning from the end of the hypothesis
/// backwards.
///
/// A prompt word is correct when an exact instance of it occurs before the
/// instance matched for the following prompt word. Misses leave the search
/// window unchanged, so one omission cannot cascade.
pub fn judge_correctness(prompt: &Utterance, hypothesis: &Utterance) -> Vec<Judgment> {
    let mut cursor = hypothesis.len();
    let mut out: Vec<Judgment> = prompt
        .tokens
        .iter()
        .enumerate()
        .rev()
        .map(|(ref_index, word)| {
            let found = hypothesis.tokens[..cursor].iter().rposition(|t| t == word);
            if let Some(j) = found {
                cursor = j;
            }
            Judgment {
                ref_index,
                word: word.clone(),
                correct: found.is_some(),
                matched_hyp_index: found,
            }
        })
        .collect();
    out.reverse();
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceAssessment {
    pub utterance_id: String,
    pub judgments: Vec<Judgment>,
    pub total_distance: usize,
    pub excluded: bool,
    #[serde(skip)]
    pub alignment: WordAlignment,
}

impl UtteranceAssessment {
    pub fn incorrect_count(&self) -> usize {
        self.judgments.iter().filter(|j| !j.correct).count()
    }

    pub fn has_error(&self) -> bool {
        self.judgments.iter().any(|j| !j.correct)
    }

    /// Re-flags the assessment for another threshold. Verdicts are untouched.
    pub fn apply_threshold(&mut self, exclusion_threshold: usize) {
        self.excluded = self.total_distance >= exclusion_threshold;
    }
}

pub fn assess_utterance(
    prompt: &Utterance,
    hypothesis: &Utterance,
    exclusion_threshold: usize,
) -> UtteranceAssessment {
    let alignment = align::align_words(prompt, hypothesis);
    let total_distance = alignment.total_distance;
    UtteranceAssessment {
        utterance_id: prompt.id.clone(),
        judgments: judge_correctness(prompt, hypothesis),
        total_distance,
        excluded: total_distance >= exclusion_threshold,
        alignment,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    /// Prompt against manual transcript.
    #[serde(rename = "REM")]
    Manual,
    /// Prompt against ASR hypothesis.
    #[serde(rename = "REA")]
    Automatic,
}

/// Word and sentence counts over a reading error set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub words: usize,
    pub incorrect_words: usize,
    pub sentences: usize,
    pub error_sentences: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReadingErrorSet {
    pub source: Source,
    pub exclusion_threshold: usize,
    pub assessments: IndexMap<String, UtteranceAssessment>,
}

impl ReadingErrorSet {
    pub fn get(&self, id: &str) -> Option<&UtteranceAssessment> {
        self.assessments.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &UtteranceAssessment> {
        self.assessments.values()
    }

    /// Counts over every assessment, excluded or not.
    pub fn counts(&self) -> ErrorCounts {
        self.iter().fold(ErrorCounts::default(), |mut c, a| {
            c.words += a.judgments.len();
            c.incorrect_words += a.incorrect_count();
            c.sentences += 1;
            c.error_sentences += usize::from(a.has_error());
            c
        })
    }

    pub fn excluded_count(&self) -> usize {
        self.iter().filter(|a| a.excluded).count()
    }
}

pub fn build_error_set(
    prompts: &UtteranceSet,
    other: &UtteranceSet,
    source: Source,
    exclusion_threshold: usize,
) -> Result<ReadingErrorSet, JudgeError> {
    let mut assessments = IndexMap::with_capacity(prompts.len());
    for prompt in prompts.iter() {
        let hyp = other
            .get(&prompt.id)
            .ok_or_else(|| JudgeError::MissingUtterance(prompt.id.clone()))?;
        assessments.insert(
            prompt.id.clone(),
            assess_utterance(prompt, hyp, exclusion_threshold),
        );
    }
    Ok(ReadingErrorSet {
        source,
        exclusion_threshold,
        assessments,
    })
}

/// `utt_id<TAB>ref_index<TAB>word<TAB>{C|I}<TAB>matched_hyp_index|-` lines.
pub fn format_judgments(set: &ReadingErrorSet) -> String {
    let mut out = String::new();
    for a in set.iter() {
        for j in &a.judgments {
            let matched = j
                .matched_hyp_index
                .map_or_else(|| "-".to_string(), |i| i.to_string());
            let verdict = if j.correct { 'C' } else { 'I' };
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                a.utterance_id, j.ref_index, j.word, verdict, matched
            )
            .expect("write to string");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_utterances, Role};

    fn utt(text: &str) -> Utterance {
        Utterance::from_text("u", text)
    }

    #[test]
    fn restart_example_is_all_correct() {
        let p = utt("wanneer ze klaar is klappen we opnieuw");
        let h = utt("wanneer uh ze k klaar is klap klappen we opnieuw");
        let js = judge_correctness(&p, &h);
        assert!(js.iter().all(|j| j.correct));
        let matched: Vec<usize> = js.iter().map(|j| j.matched_hyp_index.unwrap()).collect();
        assert_eq!(matched, vec![0, 2, 4, 5, 7, 8, 9]);
    }

    #[test]
    fn identity_matches_in_order() {
        let p = utt("de kat de hond");
        let js = judge_correctness(&p, &p);
        let matched: Vec<_> = js.iter().map(|j| j.matched_hyp_index).collect();
        assert_eq!(matched, vec![Some(0), Some(1), Some(2), Some(3)]);
    }

    #[test]
    fn swapped_words() {
        let js = judge_correctness(&utt("a b"), &utt("b a"));
        assert!(!js[0].correct);
        assert_eq!(js[0].matched_hyp_index, None);
        assert!(js[1].correct);
        assert_eq!(js[1].matched_hyp_index, Some(0));
    }

    #[test]
    fn miss_does_not_shrink_window() {
        let js = judge_correctness(&utt("de kat zit"), &utt("de kat"));
        assert_eq!(
            js.iter().map(|j| j.correct).collect::<Vec<_>>(),
            vec![true, true, false]
        );
    }

    #[test]
    fn exclusion_threshold_is_inclusive() {
        let p = utt("wanneer ze klaar is klappen we opnieuw");
        let h = utt("wanneer uh ze k klaar is klap klappen we opnieuw");
        assert!(!assess_utterance(&p, &h, 20).excluded);
        assert!(assess_utterance(&p, &h, 10).excluded);
        assert!(!assess_utterance(&p, &h, 11).excluded);
    }

    #[test]
    fn empty_hypothesis() {
        let a = assess_utterance(&utt("de kat zit"), &utt(""), 20);
        assert_eq!(a.incorrect_count(), 3);
        assert_eq!(a.total_distance, 3 + 4 + 4);
    }

    #[test]
    fn threshold_changes_only_the_flag() {
        let mut a = assess_utterance(&utt("de kat"), &utt("de hond"), 20);
        let before = a.judgments.clone();
        a.apply_threshold(1);
        assert!(a.excluded);
        assert_eq!(a.judgments, before);
    }

    #[test]
    fn error_set_counts() {
        let prompts = parse_utterances("u1\ta b c d e\nu2\tf g h\n", Role::Prompt).unwrap();
        let manual = parse_utterances("u1\ta b c e\nu2\tf g h\n", Role::Manual).unwrap();
        let set = build_error_set(&prompts, &manual, Source::Manual, 20).unwrap();
        assert_eq!(
            set.counts(),
            ErrorCounts {
                words: 8,
                incorrect_words: 1,
                sentences: 2,
                error_sentences: 1
            }
        );
        let same = build_error_set(&prompts, &prompts, Source::Manual, 20).unwrap();
        assert_eq!(same.counts().incorrect_words, 0);
        assert_eq!(same.counts().error_sentences, 0);
    }

    #[test]
    fn missing_utterance() {
        let prompts = parse_utterances("u1\ta\nu2\tb\n", Role::Prompt).unwrap();
        let manual = parse_utterances("u1\ta\n", Role::Manual).unwrap();
        assert_eq!(
            build_error_set(&prompts, &manual, Source::Manual, 20).unwrap_err(),
            JudgeError::MissingUtterance("u2".into())
        );
    }

    #[test]
    fn judgment_dump_format() {
        let prompts = parse_utterances("u1\ta b\n", Role::Prompt).unwrap();
        let hyp = parse_utterances("u1\tb\n", Role::Hypothesis).unwrap();
        let set = build_error_set(&prompts, &hyp, Source::Automatic, 20).unwrap();
        assert_eq!(format_judgments(&set), "u1\t0\ta\tI\t-\nu1\t1\tb\tC\t0\n");
    }
}
