//! Error rates, REM/REA agreement and confidence correlations.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::corpus::{ConfidenceRecord, Token, UtteranceSet};
use crate::judge::ReadingErrorSet;

/// Two-sided 95% normal quantile used for Fisher z intervals.
pub const Z_95: f64 = 1.96;
/// Two-sided significance level behind `p_below_001`.
pub const ALPHA_001: f64 = 0.001;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no hypothesis for utterance {0:?}")]
    MissingUtterance(String),
    #[error("reference set has no words")]
    EmptyCorpus,
    #[error("utterance {0:?} differs in shape between the two sets")]
    ShapeMismatch(String),
    #[error("degenerate confusion matrix: {0} is zero")]
    DegenerateMatrix(&'static str),
    #[error("confidence score {0} is not finite")]
    NonFinite(f64),
    #[error("no confidence records for the utterance")]
    EmptyUtterance,
    #[error("degenerate sample: {0}")]
    DegenerateSample(&'static str),
}

/// Counts from one uniform-cost word alignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordErrorCounts {
    pub hits: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl WordErrorCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Minimal S+D+I alignment with unit costs. Ties prefer match, then
/// substitution, then deletion, then insertion, walking back from the end.
pub fn word_error_counts(reference: &[Token], hypothesis: &[Token]) -> WordErrorCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    let width = m + 1;
    let mut t = vec![0usize; (n + 1) * width];
    for (j, cell) in t[..width].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        t[i * width] = i;
        for j in 1..=m {
            let diag = t[(i - 1) * width + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            t[i * width + j] = diag
                .min(t[(i - 1) * width + j] + 1)
                .min(t[i * width + j - 1] + 1);
        }
    }
    let mut c = WordErrorCounts::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = t[i * width + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if t[(i - 1) * width + j - 1] + usize::from(!same) == here {
                if same {
                    c.hits += 1;
                } else {
                    c.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && t[(i - 1) * width + j] + 1 == here {
            c.deletions += 1;
            i -= 1;
        } else {
            c.insertions += 1;
            j -= 1;
        }
    }
    c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRateReport {
    pub n_ref_words: usize,
    pub hits: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub n_sentences: usize,
    pub error_sentences: usize,
    pub wer: f64,
    pub ser: f64,
    pub acc: f64,
}

/// Scores every reference utterance against the hypothesis with the same id.
pub fn score_error_rates(
    refs: &UtteranceSet,
    hyps: &UtteranceSet,
) -> Result<ErrorRateReport, MetricsError> {
    let mut ids: Vec<&str> = refs.ids().collect();
    ids.sort_unstable();
    let mut total = WordErrorCounts::default();
    let (mut n_ref_words, mut error_sentences) = (0usize, 0usize);
    for id in &ids {
        let r = refs.get(id).expect("id from refs");
        let h = hyps
            .get(id)
            .ok_or_else(|| MetricsError::MissingUtterance(id.to_string()))?;
        let c = word_error_counts(&r.tokens, &h.tokens);
        n_ref_words += r.len();
        error_sentences += usize::from(c.errors() > 0);
        total.hits += c.hits;
        total.substitutions += c.substitutions;
        total.deletions += c.deletions;
        total.insertions += c.insertions;
    }
    if n_ref_words == 0 {
        return Err(MetricsError::EmptyCorpus);
    }
    let n = n_ref_words as f64;
    Ok(ErrorRateReport {
        n_ref_words,
        hits: total.hits,
        substitutions: total.substitutions,
        deletions: total.deletions,
        insertions: total.insertions,
        n_sentences: ids.len(),
        error_sentences,
        wer: 100.0 * total.errors() as f64 / n,
        ser: 100.0 * error_sentences as f64 / ids.len() as f64,
        acc: 100.0 * total.hits as f64 / n,
    })
}

/// Percentage of items that are not correct.
pub fn error_rate_pct(n: usize, n_correct: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    100.0 * (n - n_correct.min(n)) as f64 / n as f64
}

/// Mean and sample standard deviation; `None` for an empty sample. The SD of
/// a single value is reported as 0.
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

/// REM-vs-REA word verdicts with "correct" as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// REA correct, REM correct.
    pub tp: usize,
    /// REA correct, REM incorrect.
    pub fp: usize,
    /// REA incorrect, REM correct.
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// REA incorrect, REM incorrect.
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, rea_correct: bool, rem_correct: bool) {
        match (rea_correct, rem_correct) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// Cell shares of the total in percent, ordered tp, fp, fn, tn.
    pub fn percentages(&self) -> [f64; 4] {
        let n = self.total().max(1) as f64;
        [self.tp, self.fp, self.fn_, self.tn].map(|c| 100.0 * c as f64 / n)
    }

    pub fn precision(&self) -> Result<f64, MetricsError> {
        ratio(self.tp, self.tp + self.fp, "tp+fp")
    }

    pub fn recall(&self) -> Result<f64, MetricsError> {
        ratio(self.tp, self.tp + self.fn_, "tp+fn")
    }

    pub fn specificity(&self) -> Result<f64, MetricsError> {
        ratio(self.tn, self.tn + self.fp, "tn+fp")
    }

    /// Matthews correlation coefficient; 0 when any marginal is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, fp, fn_, tn) = (self.tp as f64, self.fp as f64, self.fn_ as f64, self.tn as f64);
        let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if denom == 0.0 {
            return 0.0;
        }
        (tp * tn - fp * fn_) / denom.sqrt()
    }
}

fn ratio(num: usize, den: usize, name: &'static str) -> Result<f64, MetricsError> {
    if den == 0 {
        return Err(MetricsError::DegenerateMatrix(name));
    }
    Ok(num as f64 / den as f64)
}

/// Pairs REM and REA verdicts word by word. Utterances excluded in either
/// set are skipped.
pub fn build_confusion(
    rem: &ReadingErrorSet,
    rea: &ReadingErrorSet,
) -> Result<ConfusionMatrix, MetricsError> {
    if rem.assessments.len() != rea.assessments.len() {
        let odd = rem
            .assessments
            .keys()
            .chain(rea.assessments.keys())
            .find(|id| rem.get(id).is_none() || rea.get(id).is_none())
            .cloned()
            .unwrap_or_default();
        return Err(MetricsError::ShapeMismatch(odd));
    }
    let mut cm = ConfusionMatrix::default();
    for m in rem.iter() {
        let a = rea
            .get(&m.utterance_id)
            .ok_or_else(|| MetricsError::ShapeMismatch(m.utterance_id.clone()))?;
        if a.judgments.len() != m.judgments.len() {
            return Err(MetricsError::ShapeMismatch(m.utterance_id.clone()));
        }
        if m.excluded || a.excluded {
            continue;
        }
        for (jm, ja) in m.judgments.iter().zip(&a.judgments) {
            cm.add(ja.correct, jm.correct);
        }
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
    pub mcc: f64,
}

pub fn agreement(cm: &ConfusionMatrix) -> Result<AgreementReport, MetricsError> {
    let precision = cm.precision()?;
    let recall = cm.recall()?;
    let specificity = cm.specificity()?;
    if precision + recall == 0.0 {
        return Err(MetricsError::DegenerateMatrix("precision+recall"));
    }
    Ok(AgreementReport {
        precision,
        recall,
        specificity,
        f1: 2.0 * precision * recall / (precision + recall),
        mcc: cm.mcc(),
    })
}

/// Clamps a confidence score into [0, 1].
pub fn clamp_confidence(raw: f64) -> Result<f64, MetricsError> {
    if !raw.is_finite() {
        return Err(MetricsError::NonFinite(raw));
    }
    Ok(raw.clamp(0.0, 1.0))
}

/// Mean of the clamped word scores of one utterance.
pub fn utterance_confidence(records: &[ConfidenceRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyUtterance);
    }
    Ok(records.iter().map(|r| r.score).sum::<f64>() / records.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub r: f64,
    pub n: usize,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_below_001: bool,
}

impl CorrelationReport {
    fn from_r(r: f64, n: usize) -> Self {
        let r = r.clamp(-1.0, 1.0);
        let z = r.atanh();
        let half = Z_95 / ((n - 3) as f64).sqrt();
        let df = (n - 2) as f64;
        let p_below_001 = if r.abs() == 1.0 {
            true
        } else {
            let t = r * (df / (1.0 - r * r)).sqrt();
            let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 2");
            t.abs() > dist.inverse_cdf(1.0 - ALPHA_001 / 2.0)
        };
        CorrelationReport {
            r,
            n,
            ci_low: (z - half).tanh(),
            ci_high: (z + half).tanh(),
            p_below_001,
        }
    }
}

/// Sample Pearson correlation with Fisher z interval.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationReport, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::DegenerateSample("samples differ in length"));
    }
    let n = x.len();
    if n < 4 {
        return Err(MetricsError::DegenerateSample("fewer than 4 observations"));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::DegenerateSample("zero variance"));
    }
    Ok(CorrelationReport::from_r(sxy / (sxx * syy).sqrt(), n))
}

/// Point-biserial correlation of scores against a binary outcome, from the
/// group means: r = (M1 - M0) / s * sqrt(p q) with s the population SD.
pub fn point_biserial(scores: &[f64], correct: &[bool]) -> Result<CorrelationReport, MetricsError> {
    if scores.len() != correct.len() {
        return Err(MetricsError::DegenerateSample("samples differ in length"));
    }
    let n = scores.len();
    if n < 4 {
        return Err(MetricsError::DegenerateSample("fewer than 4 observations"));
    }
    let (mut sum1, mut n1, mut sum0) = (0.0, 0usize, 0.0);
    for (&s, &c) in scores.iter().zip(correct) {
        if c {
            sum1 += s;
            n1 += 1;
        } else {
            sum0 += s;
        }
    }
    let n0 = n - n1;
    if n1 == 0 || n0 == 0 {
        return Err(MetricsError::DegenerateSample("only one class present"));
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return Err(MetricsError::DegenerateSample("zero variance"));
    }
    let (p, q) = (n1 as f64 / n as f64, n0 as f64 / n as f64);
    let r = (sum1 / n1 as f64 - sum0 / n0 as f64) / var.sqrt() * (p * q).sqrt();
    Ok(CorrelationReport::from_r(r, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_utterances, tokenize, Role};
    use crate::judge::{build_error_set, Source};

    fn set(text: &str, role: Role) -> UtteranceSet {
        parse_utterances(text, role).unwrap()
    }

    #[test]
    fn identical_sets_score_perfectly() {
        let r = set("u1\ta b c\nu2\td e\n", Role::Prompt);
        let rep = score_error_rates(&r, &r).unwrap();
        assert_eq!((rep.wer, rep.ser, rep.acc), (0.0, 0.0, 100.0));
    }

    #[test]
    fn insertion_only() {
        let r = set("u1\ta b c\n", Role::Prompt);
        let h = set("u1\ta x b c\n", Role::Hypothesis);
        let rep = score_error_rates(&r, &h).unwrap();
        assert_eq!(
            (rep.hits, rep.substitutions, rep.deletions, rep.insertions),
            (3, 0, 0, 1)
        );
        assert!((rep.wer - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(rep.acc, 100.0);
        assert_eq!(rep.ser, 100.0);
    }

    #[test]
    fn error_counts_mixed() {
        let c = word_error_counts(&tokenize("a b c d"), &tokenize("a x c"));
        assert_eq!(
            c,
            WordErrorCounts {
                hits: 2,
                substitutions: 1,
                deletions: 1,
                insertions: 0
            }
        );
    }

    #[test]
    fn missing_hypothesis_and_empty_corpus() {
        let r = set("u1\ta\n", Role::Prompt);
        let h = set("u2\ta\n", Role::Hypothesis);
        assert_eq!(
            score_error_rates(&r, &h),
            Err(MetricsError::MissingUtterance("u1".into()))
        );
        let empty = UtteranceSet::new(Role::Manual);
        assert_eq!(score_error_rates(&empty, &h), Err(MetricsError::EmptyCorpus));
    }

    #[test]
    fn reference_confusion_counts() {
        let cm = ConfusionMatrix::new(12706, 166, 72, 205);
        let a = agreement(&cm).unwrap();
        assert!((a.precision - 0.987).abs() < 5e-4);
        assert!((a.recall - 0.994).abs() < 5e-4);
        assert!((a.f1 - 0.991).abs() < 5e-4);
        // 205 / 371; the published table rounds this cell to .554.
        assert!((a.specificity - 205.0 / 371.0).abs() < 1e-15);
        assert!((a.mcc - 0.6306).abs() < 1e-4);
        let pct = cm.percentages();
        assert!((pct[0] - 96.63).abs() < 0.01);
        assert!((pct[3] - 1.56).abs() < 0.01);
    }

    #[test]
    fn degenerate_and_perfect_matrices() {
        let cm = ConfusionMatrix::new(10, 0, 0, 0);
        assert_eq!(agreement(&cm), Err(MetricsError::DegenerateMatrix("tn+fp")));
        assert_eq!(cm.mcc(), 0.0);
        assert_eq!(cm.precision(), Ok(1.0));

        let a = agreement(&ConfusionMatrix::new(1, 0, 0, 1)).unwrap();
        assert_eq!(
            (a.precision, a.recall, a.specificity, a.f1, a.mcc),
            (1.0, 1.0, 1.0, 1.0, 1.0)
        );
        assert_eq!(
            agreement(&ConfusionMatrix::new(0, 1, 1, 0)),
            Err(MetricsError::DegenerateMatrix("precision+recall"))
        );
    }

    #[test]
    fn confusion_from_error_sets() {
        let prompts = set("u1\ta b c\nu2\td e\nu3\tf\n", Role::Prompt);
        let manual = set("u1\ta c\nu2\td e\nu3\tf\n", Role::Manual);
        let hyp = set("u1\ta b c\nu2\td\nu3\tqqqqqqqqqqqqqqqqqqqqqqqqqq\n", Role::Hypothesis);
        let rem = build_error_set(&prompts, &manual, Source::Manual, 20).unwrap();
        let rea = build_error_set(&prompts, &hyp, Source::Automatic, 20).unwrap();
        assert!(rea.get("u3").unwrap().excluded);
        let cm = build_confusion(&rem, &rea).unwrap();
        // u1: a tp, b fp, c tp; u2: d tp, e fn; u3 skipped.
        assert_eq!(cm, ConfusionMatrix::new(3, 1, 1, 0));

        let short = set("u1\ta b c\n", Role::Prompt);
        let rea_short = build_error_set(&short, &hyp, Source::Automatic, 20).unwrap();
        assert!(matches!(
            build_confusion(&rem, &rea_short),
            Err(MetricsError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn clamping() {
        assert_eq!(clamp_confidence(-0.03), Ok(0.0));
        assert_eq!(clamp_confidence(1.07), Ok(1.0));
        assert_eq!(clamp_confidence(0.5), Ok(0.5));
        assert!(matches!(clamp_confidence(f64::NAN), Err(MetricsError::NonFinite(_))));
        assert!(matches!(clamp_confidence(f64::INFINITY), Err(MetricsError::NonFinite(_))));
    }

    fn rec(score: f64) -> ConfidenceRecord {
        ConfidenceRecord {
            utterance_id: "u".into(),
            word_index: 0,
            word: tokenize("a").remove(0),
            raw_score: score,
            score,
        }
    }

    #[test]
    fn utterance_means() {
        assert_eq!(utterance_confidence(&[rec(0.5)]), Ok(0.5));
        assert_eq!(utterance_confidence(&[rec(0.0), rec(1.0)]), Ok(0.5));
        let m = utterance_confidence(&[rec(0.2), rec(0.4), rec(0.6)]).unwrap();
        assert!((m - 0.4).abs() < 1e-12);
        assert_eq!(utterance_confidence(&[]), Err(MetricsError::EmptyUtterance));
    }

    #[test]
    fn correlation_examples() {
        let r = point_biserial(&[1.0, 1.0, 0.0, 0.0], &[true, true, false, false]).unwrap();
        assert!((r.r - 1.0).abs() < 1e-12);
        // Not perfectly linear in the class: r = 0.7 / sqrt(0.125) * 0.5 = 7 / (5 sqrt 2).
        let r = point_biserial(&[0.9, 0.1, 0.8, 0.2], &[true, false, true, false]).unwrap();
        assert!((r.r - 7.0 / (5.0 * 2f64.sqrt())).abs() < 1e-12);

        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap().r - 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &y).unwrap().r + 1.0).abs() < 1e-12);
        let r = pearson(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r.r - 0.8).abs() < 1e-12);
        assert!(r.ci_low <= r.r && r.r <= r.ci_high);
        assert!(!r.p_below_001);
    }

    #[test]
    fn fisher_interval_and_significance() {
        // n = 103: half width 1.96 / 10 in z units.
        let rep = CorrelationReport::from_r(0.5, 103);
        let z = 0.5f64.atanh();
        assert!((rep.ci_low - (z - 0.196).tanh()).abs() < 1e-15);
        assert!((rep.ci_high - (z + 0.196).tanh()).abs() < 1e-15);
        assert!(rep.p_below_001);
        // t(8) two-sided .001 critical value is 5.041; r = 0.87 gives t = 4.99.
        assert!(!CorrelationReport::from_r(0.87, 10).p_below_001);
        assert!(CorrelationReport::from_r(0.875, 10).p_below_001);
    }

    #[test]
    fn degenerate_samples() {
        assert!(point_biserial(&[0.1, 0.2, 0.3], &[true, false, true]).is_err());
        assert!(point_biserial(&[0.1, 0.2, 0.3, 0.4], &[true; 4]).is_err());
        assert!(point_biserial(&[0.5; 4], &[true, false, true, false]).is_err());
        assert!(pearson(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn summary_helpers() {
        assert!((error_rate_pct(13149, 12778) - 2.8215).abs() < 1e-4);
        let (m, sd) = mean_sd(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m, sd), (2.0, 1.0));
        assert_eq!(mean_sd(&[]), None);
    }
}
