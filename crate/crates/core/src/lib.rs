//! Automatic assessment of oral reading accuracy.
//!
//! Reading prompts are aligned against manual transcripts and ASR
//! hypotheses, prompt words are judged correct or incorrect with
//! restart-aware backward matching, and the resulting verdicts are compared
//! through error rates, agreement metrics and confidence correlations.
//!
//! * [`corpus`]: tokens, utterance files, confidence files, transcript segmentation
//! * [`align`]: word alignment with grapheme substitution costs
//! * [`judge`]: per-word verdicts and reading error sets
//! * [`metrics`]: WER/SER/ACC, confusion matrices, MCC, correlations
//! * [`report`]: pipeline and CSV/JSON emission
//! * [`simreader`]: synthetic readers and the exhaustive alignment oracle

pub mod align;
pub mod corpus;
pub mod judge;
pub mod metrics;
pub mod report;
pub mod simreader;

pub use align::{align_words, grapheme_distance, render_alignment, EditOp, OpKind, WordAlignment};
pub use corpus::{normalize_token, Role, Token, Utterance, UtteranceSet};
pub use judge::{assess_utterance, build_error_set, judge_correctness, Judgment, ReadingErrorSet, Source};
pub use metrics::{agreement, ConfusionMatrix};
