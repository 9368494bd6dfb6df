//! Pipeline orchestration and result emission.
//!
//! [`run_pipeline`] turns a [`RunConfig`] into an [`AssessmentBundle`];
//! [`emit`] writes the bundle as CSV tables (reals rounded to 3 decimals),
//! a full-precision `bundle.json`, and optional alignment/judgment dumps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align;
use crate::corpus::{self, ConfidenceRecord, CorpusError, Role, UtteranceSet};
use crate::judge::{self, ErrorCounts, JudgeError, ReadingErrorSet, Source, DEFAULT_EXCLUSION_THRESHOLD};
use crate::metrics::{
    self, AgreementReport, ConfusionMatrix, CorrelationReport, ErrorRateReport, MetricsError,
};
use crate::simreader::{self, SimError, SimulatedCorpus};

/// Label under which the manual transcript's dumps are written.
pub const MANUAL_LABEL: &str = "manual";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{}: {source}", path.display())]
    Judge {
        path: PathBuf,
        #[source]
        source: JudgeError,
    },
    #[error("{}: {source}", path.display())]
    Metrics {
        path: PathBuf,
        #[source]
        source: MetricsError,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("degenerate statistics: {0}")]
    Degenerate(String),
}

impl ReportError {
    /// Process exit status: 2 for degenerate statistics, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Degenerate(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    pub prompt_path: PathBuf,
    pub manual_path: Option<PathBuf>,
    pub hypothesis_paths: BTreeMap<String, PathBuf>,
    pub confidence_paths: BTreeMap<String, PathBuf>,
    pub exclusion_threshold: usize,
    pub output_dir: PathBuf,
    pub emit_alignments: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ReportError> {
        if self.manual_path.is_none() && self.hypothesis_paths.is_empty() {
            return Err(ReportError::Config(
                "need a manual transcript or at least one hypothesis".into(),
            ));
        }
        if self.exclusion_threshold == 0 {
            return Err(ReportError::Config("exclusion threshold must be at least 1".into()));
        }
        for label in self.hypothesis_paths.keys() {
            validate_label(label)?;
        }
        if let Some(label) = self
            .confidence_paths
            .keys()
            .find(|l| !self.hypothesis_paths.contains_key(*l))
        {
            return Err(ReportError::Config(format!(
                "confidence label {label:?} has no matching hypothesis"
            )));
        }
        Ok(())
    }
}

fn validate_label(label: &str) -> Result<(), ReportError> {
    let ok = !label.is_empty()
        && label != MANUAL_LABEL
        && label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(ReportError::Config(format!(
            "label {label:?} must be [A-Za-z0-9_.-]+ and not {MANUAL_LABEL:?}"
        )))
    }
}

/// Settings read from a TOML config file. Relative paths are resolved
/// against the file's directory.
#[derive(Clone, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub prompts: Option<PathBuf>,
    pub manual: Option<PathBuf>,
    #[serde(default)]
    pub hyp: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub conf: BTreeMap<String, PathBuf>,
    pub threshold: Option<usize>,
    pub out: Option<PathBuf>,
    pub dump_alignments: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: ConfigFile = toml::from_str(&text)
            .map_err(|e| ReportError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.prompts.iter_mut().for_each(resolve);
        cfg.manual.iter_mut().for_each(resolve);
        cfg.out.iter_mut().for_each(resolve);
        cfg.hyp.values_mut().for_each(resolve);
        cfg.conf.values_mut().for_each(resolve);
        Ok(cfg)
    }

    /// Layers `overrides` on top of `self`; map entries merge per label.
    pub fn merge(mut self, overrides: ConfigFile) -> ConfigFile {
        self.prompts = overrides.prompts.or(self.prompts);
        self.manual = overrides.manual.or(self.manual);
        self.threshold = overrides.threshold.or(self.threshold);
        self.out = overrides.out.or(self.out);
        self.dump_alignments = overrides.dump_alignments.or(self.dump_alignments);
        self.hyp.extend(overrides.hyp);
        self.conf.extend(overrides.conf);
        self
    }

    pub fn into_run_config(self) -> Result<RunConfig, ReportError> {
        let config = RunConfig {
            prompt_path: self
                .prompts
                .ok_or_else(|| ReportError::Config("prompts path is required".into()))?,
            manual_path: self.manual,
            hypothesis_paths: self.hyp,
            confidence_paths: self.conf,
            exclusion_threshold: self.threshold.unwrap_or(DEFAULT_EXCLUSION_THRESHOLD),
            output_dir: self
                .out
                .ok_or_else(|| ReportError::Config("output directory is required".into()))?,
            emit_alignments: self.dump_alignments.unwrap_or(false),
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub item: String,
    pub n: usize,
    pub n_correct: usize,
    pub error_rate_pct: f64,
    pub dist_mean: Option<f64>,
    pub dist_sd: Option<f64>,
}

impl BaselineRow {
    /// Row from counts and the distances of the incorrect items.
    pub fn from_counts(item: &str, n: usize, n_correct: usize, distances: &[f64]) -> Self {
        let stats = metrics::mean_sd(distances);
        BaselineRow {
            item: item.to_string(),
            n,
            n_correct,
            error_rate_pct: metrics::error_rate_pct(n, n_correct),
            dist_mean: stats.map(|s| s.0),
            dist_sd: stats.map(|s| s.1),
        }
    }
}

/// Prompt vs manual transcript statistics over all utterances, before
/// exclusion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub words: BaselineRow,
    pub sentences: BaselineRow,
    pub exclusion_threshold: usize,
    pub excluded_utterances: usize,
}

impl Baseline {
    pub fn from_error_set(rem: &ReadingErrorSet) -> Self {
        let counts = rem.counts();
        let mut word_dist = Vec::new();
        let mut sentence_dist = Vec::new();
        for a in rem.iter() {
            for j in a.judgments.iter().filter(|j| !j.correct) {
                word_dist.push(a.alignment.per_ref_word_distance[j.ref_index] as f64);
            }
            if a.has_error() {
                sentence_dist.push(a.total_distance as f64);
            }
        }
        Baseline {
            words: BaselineRow::from_counts(
                "words",
                counts.words,
                counts.words - counts.incorrect_words,
                &word_dist,
            ),
            sentences: BaselineRow::from_counts(
                "sentences",
                counts.sentences,
                counts.sentences - counts.error_sentences,
                &sentence_dist,
            ),
            exclusion_threshold: rem.exclusion_threshold,
            excluded_utterances: rem.excluded_count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionSummary {
    pub matrix: ConfusionMatrix,
    pub total: usize,
    pub tp_pct: f64,
    pub fp_pct: f64,
    pub fn_pct: f64,
    pub tn_pct: f64,
}

impl ConfusionSummary {
    pub fn new(matrix: ConfusionMatrix) -> Self {
        let [tp_pct, fp_pct, fn_pct, tn_pct] = matrix.percentages();
        ConfusionSummary {
            matrix,
            total: matrix.total(),
            tp_pct,
            fp_pct,
            fn_pct,
            tn_pct,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    /// Word confidence against REM correctness.
    pub a_cor: Option<CorrelationReport>,
    /// Word confidence against REM per-word distance.
    pub a_dist: Option<CorrelationReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub label: String,
    pub rea_counts: ErrorCounts,
    pub rea_excluded_utterances: usize,
    pub error_rates_vs_prompts: ErrorRateReport,
    pub error_rates_vs_manual: Option<ErrorRateReport>,
    pub confusion: Option<ConfusionSummary>,
    pub agreement: Option<AgreementReport>,
    pub correlations: Option<Correlations>,
    pub utterance_confidence: Option<BTreeMap<String, f64>>,
    pub notes: Vec<String>,
}

/// Alignment and judgment dumps for one label.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dump {
    pub alignments: String,
    pub judgments: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssessmentBundle {
    pub baseline: Option<Baseline>,
    pub systems: Vec<SystemReport>,
    pub notes: Vec<String>,
    /// True when some statistic could not be computed from its inputs.
    pub degenerate_statistics: bool,
    #[serde(skip)]
    pub dumps: BTreeMap<String, Dump>,
}

fn dump_for(prompts: &UtteranceSet, other: &UtteranceSet, set: &ReadingErrorSet) -> Dump {
    let mut alignments = String::new();
    for a in set.iter() {
        let p = prompts.get(&a.utterance_id).expect("assessed prompt");
        let h = other.get(&a.utterance_id).expect("assessed hypothesis");
        let (r, hl) = align::render_alignment(p, h, &a.alignment).expect("alignment built from this pair");
        alignments.push_str(&align::format_alignment_block(&a.utterance_id, &r, &hl));
    }
    Dump {
        alignments,
        judgments: judge::format_judgments(set),
    }
}

fn correlate(
    records: &[ConfidenceRecord],
    rem: &ReadingErrorSet,
    rea: &ReadingErrorSet,
    notes: &mut Vec<String>,
    degenerate: &mut bool,
) -> Correlations {
    let mut scores = Vec::new();
    let mut correct = Vec::new();
    let mut distance = Vec::new();
    for rec in records {
        let (Some(m), Some(a)) = (rem.get(&rec.utterance_id), rea.get(&rec.utterance_id)) else {
            continue;
        };
        if m.excluded || a.excluded {
            continue;
        }
        scores.push(rec.score);
        correct.push(m.judgments[rec.word_index].correct);
        distance.push(m.alignment.per_ref_word_distance[rec.word_index] as f64);
    }
    let mut attempt = |name: &str, r: Result<CorrelationReport, MetricsError>| match r {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("{name} not computed: {e}"));
            *degenerate = true;
            None
        }
    };
    Correlations {
        a_cor: attempt("point-biserial correlation", metrics::point_biserial(&scores, &correct)),
        a_dist: attempt("distance correlation", metrics::pearson(&scores, &distance)),
    }
}

pub fn run_pipeline(config: &RunConfig) -> Result<AssessmentBundle, ReportError> {
    config.validate()?;
    let threshold = config.exclusion_threshold;
    let prompts = corpus::parse_utterance_file(&config.prompt_path, Role::Prompt)?;
    let mut notes = Vec::new();
    let mut dumps = BTreeMap::new();
    let mut degenerate = false;

    let manual = match &config.manual_path {
        Some(path) => {
            let set = corpus::parse_utterance_file(path, Role::Manual)?;
            let rem = judge::build_error_set(&prompts, &set, Source::Manual, threshold)
                .map_err(|source| ReportError::Judge {
                    path: path.clone(),
                    source,
                })?;
            if config.emit_alignments {
                dumps.insert(MANUAL_LABEL.to_string(), dump_for(&prompts, &set, &rem));
            }
            Some((path, set, rem))
        }
        None => {
            notes.push(
                "no manual transcript: baseline, agreement and correlations are not available".into(),
            );
            None
        }
    };

    let mut systems = Vec::with_capacity(config.hypothesis_paths.len());
    for (label, path) in &config.hypothesis_paths {
        let hyp = corpus::parse_utterance_file(path, Role::Hypothesis)?;
        let metrics_err = |source| ReportError::Metrics {
            path: path.clone(),
            source,
        };
        let rea = judge::build_error_set(&prompts, &hyp, Source::Automatic, threshold).map_err(
            |source| ReportError::Judge {
                path: path.clone(),
                source,
            },
        )?;
        if config.emit_alignments {
            dumps.insert(label.clone(), dump_for(&prompts, &hyp, &rea));
        }
        let mut sys_notes = Vec::new();
        let error_rates_vs_prompts = metrics::score_error_rates(&prompts, &hyp).map_err(metrics_err)?;
        let error_rates_vs_manual = match &manual {
            Some((_, set, _)) => Some(metrics::score_error_rates(set, &hyp).map_err(metrics_err)?),
            None => None,
        };

        let (confusion, agreement) = match &manual {
            Some((manual_path, _, rem)) => {
                let cm = metrics::build_confusion(rem, &rea).map_err(|source| ReportError::Metrics {
                    path: (*manual_path).clone(),
                    source,
                })?;
                let agreement = match metrics::agreement(&cm) {
                    Ok(a) => Some(a),
                    Err(e) => {
                        sys_notes.push(format!("agreement not computed: {e}"));
                        degenerate = true;
                        None
                    }
                };
                (Some(ConfusionSummary::new(cm)), agreement)
            }
            None => (None, None),
        };

        let (correlations, utterance_confidence) = match config.confidence_paths.get(label) {
            Some(conf_path) => {
                let records = corpus::parse_confidence_file(conf_path, &prompts)?;
                let mut grouped: BTreeMap<String, Vec<ConfidenceRecord>> = BTreeMap::new();
                for r in &records {
                    grouped.entry(r.utterance_id.clone()).or_default().push(r.clone());
                }
                let per_utt = grouped
                    .iter()
                    .map(|(id, rs)| {
                        metrics::utterance_confidence(rs).map(|m| (id.clone(), m))
                    })
                    .collect::<Result<BTreeMap<_, _>, _>>()
                    .expect("groups are non-empty");
                let correlations = match &manual {
                    Some((_, _, rem)) => {
                        Some(correlate(&records, rem, &rea, &mut sys_notes, &mut degenerate))
                    }
                    None => {
                        sys_notes.push("correlations need a manual transcript".into());
                        None
                    }
                };
                (correlations, Some(per_utt))
            }
            None => {
                sys_notes.push("no confidence scores: correlations skipped".into());
                (None, None)
            }
        };

        systems.push(SystemReport {
            label: label.clone(),
            rea_counts: rea.counts(),
            rea_excluded_utterances: rea.excluded_count(),
            error_rates_vs_prompts,
            error_rates_vs_manual,
            confusion,
            agreement,
            correlations,
            utterance_confidence,
            notes: sys_notes,
        });
    }

    Ok(AssessmentBundle {
        baseline: manual.as_ref().map(|(_, _, rem)| Baseline::from_error_set(rem)),
        systems,
        notes,
        degenerate_statistics: degenerate,
        dumps,
    })
}

fn fmt3(x: f64) -> String {
    format!("{x:.3}")
}

fn opt3(x: Option<f64>) -> String {
    x.map(fmt3).unwrap_or_default()
}

fn baseline_csv(b: &Baseline) -> String {
    let mut out = String::from("item,n,n_correct,error_rate_pct,dist_mean,dist_sd\n");
    for row in [&b.words, &b.sentences] {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.item,
            row.n,
            row.n_correct,
            fmt3(row.error_rate_pct),
            opt3(row.dist_mean),
            opt3(row.dist_sd)
        );
    }
    out
}

fn error_rates_csv(systems: &[SystemReport]) -> String {
    let mut out = String::from(
        "system,ground_truth,n_ref_words,hits,substitutions,deletions,insertions,n_sentences,error_sentences,wer,ser,acc\n",
    );
    for s in systems {
        let rows = [("prompts", Some(&s.error_rates_vs_prompts)), ("manual", s.error_rates_vs_manual.as_ref())];
        for (truth, rep) in rows {
            let Some(r) = rep else { continue };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                s.label,
                truth,
                r.n_ref_words,
                r.hits,
                r.substitutions,
                r.deletions,
                r.insertions,
                r.n_sentences,
                r.error_sentences,
                fmt3(r.wer),
                fmt3(r.ser),
                fmt3(r.acc)
            );
        }
    }
    out
}

fn agreement_csv(systems: &[SystemReport]) -> String {
    let mut out = String::from("system,tp,fp,fn,tn,precision,recall,f1,specificity,mcc\n");
    for s in systems {
        let Some(c) = &s.confusion else { continue };
        let m = &c.matrix;
        let a = s.agreement.as_ref();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.label,
            m.tp,
            m.fp,
            m.fn_,
            m.tn,
            opt3(a.map(|a| a.precision)),
            opt3(a.map(|a| a.recall)),
            opt3(a.map(|a| a.f1)),
            opt3(a.map(|a| a.specificity)),
            opt3(a.map(|a| a.mcc))
        );
    }
    out
}

/// Long-format confusion table: one row per (REA, REM) cell.
pub fn confusion_csv(c: &ConfusionSummary) -> String {
    let m = &c.matrix;
    let mut out = String::from("rea,rem,count,percent\n");
    for (rea, rem, count, pct) in [
        ("incorrect", "incorrect", m.tn, c.tn_pct),
        ("incorrect", "correct", m.fn_, c.fn_pct),
        ("correct", "incorrect", m.fp, c.fp_pct),
        ("correct", "correct", m.tp, c.tp_pct),
    ] {
        let _ = writeln!(out, "{rea},{rem},{count},{}", fmt3(pct));
    }
    out
}

fn correlation_cells(r: Option<&CorrelationReport>) -> String {
    match r {
        Some(r) => format!(
            "{},{},{},{},{}",
            r.n,
            fmt3(r.r),
            fmt3(r.ci_low),
            fmt3(r.ci_high),
            r.p_below_001
        ),
        None => ",,,,".to_string(),
    }
}

fn correlations_csv(systems: &[SystemReport]) -> String {
    let mut out = String::from(
        "system,a_cor_n,a_cor_r,a_cor_ci_low,a_cor_ci_high,a_cor_p_below_001,a_dist_n,a_dist_r,a_dist_ci_low,a_dist_ci_high,a_dist_p_below_001\n",
    );
    for s in systems {
        let Some(c) = &s.correlations else { continue };
        let _ = writeln!(
            out,
            "{},{},{}",
            s.label,
            correlation_cells(c.a_cor.as_ref()),
            correlation_cells(c.a_dist.as_ref())
        );
    }
    out
}

fn write(dir: &Path, name: &str, contents: &str, manifest: &mut Vec<PathBuf>) -> Result<(), ReportError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_err(&path))?;
    manifest.push(PathBuf::from(name));
    Ok(())
}

/// Writes every table the bundle holds and returns the written file names,
/// relative to `output_dir`.
pub fn emit(bundle: &AssessmentBundle, output_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(output_dir).map_err(io_err(output_dir))?;
    let mut manifest = Vec::new();
    if let Some(b) = &bundle.baseline {
        write(output_dir, "baseline.csv", &baseline_csv(b), &mut manifest)?;
    }
    if !bundle.systems.is_empty() {
        write(output_dir, "error_rates.csv", &error_rates_csv(&bundle.systems), &mut manifest)?;
    }
    if bundle.systems.iter().any(|s| s.confusion.is_some()) {
        write(output_dir, "agreement.csv", &agreement_csv(&bundle.systems), &mut manifest)?;
        for s in &bundle.systems {
            if let Some(c) = &s.confusion {
                write(output_dir, &format!("confusion_{}.csv", s.label), &confusion_csv(c), &mut manifest)?;
            }
        }
    }
    if bundle.systems.iter().any(|s| s.correlations.is_some()) {
        write(output_dir, "correlations.csv", &correlations_csv(&bundle.systems), &mut manifest)?;
    }
    let json = serde_json::to_string_pretty(bundle).expect("bundle serializes") + "\n";
    write(output_dir, "bundle.json", &json, &mut manifest)?;
    for (label, dump) in &bundle.dumps {
        write(output_dir, &format!("alignments_{label}.txt"), &dump.alignments, &mut manifest)?;
        write(output_dir, &format!("judgments_{label}.tsv"), &dump.judgments, &mut manifest)?;
    }
    Ok(manifest)
}

/// `utt_id<TAB>text` lines, readable by [`corpus::parse_utterances`].
pub fn format_utterances(set: &UtteranceSet) -> String {
    let mut out = String::new();
    for u in set.iter() {
        let _ = writeln!(out, "{}\t{}", u.id, u.text());
    }
    out
}

pub fn write_utterance_file(set: &UtteranceSet, path: &Path) -> Result<(), ReportError> {
    fs::write(path, format_utterances(set)).map_err(io_err(path))
}

/// Writes `manual.tsv`, `hypothesis.tsv` and `truth.tsv`.
pub fn write_simulated(corpus: &SimulatedCorpus, output_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(output_dir).map_err(io_err(output_dir))?;
    let mut manifest = Vec::new();
    write(output_dir, "manual.tsv", &format_utterances(&corpus.manual), &mut manifest)?;
    write(output_dir, "hypothesis.tsv", &format_utterances(&corpus.hypothesis), &mut manifest)?;
    write(output_dir, "truth.tsv", &simreader::format_truth(&corpus.truth), &mut manifest)?;
    Ok(manifest)
}
