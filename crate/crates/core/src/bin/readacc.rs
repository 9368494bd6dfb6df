use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use readacc::corpus::{self, Role};
use readacc::judge::{self, Source, DEFAULT_EXCLUSION_THRESHOLD};
use readacc::metrics;
use readacc::report::{self, ConfigFile, ReportError};
use readacc::simreader::{self, ErrorModel};
use readacc::align;

#[derive(Parser)]
#[command(name = "readacc", version, about = "Oral reading accuracy assessment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full assessment and write all tables.
    Assess(AssessArgs),
    /// Align two utterance files and print the alignment dump.
    Align {
        reference: PathBuf,
        hypothesis: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Judge prompt words against a transcript or hypothesis.
    Judge {
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EXCLUSION_THRESHOLD)]
        threshold: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// WER, SER and ACC of a hypothesis file against a reference file.
    Score {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic manual/hypothesis corpus for a prompt file.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct AssessArgs {
    /// TOML file with the same settings; flags given here take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    prompts: Option<PathBuf>,
    #[arg(long)]
    manual: Option<PathBuf>,
    /// LABEL=PATH, repeatable.
    #[arg(long = "hyp", value_parser = parse_labeled)]
    hyp: Vec<(String, PathBuf)>,
    /// LABEL=PATH, repeatable.
    #[arg(long = "conf", value_parser = parse_labeled)]
    conf: Vec<(String, PathBuf)>,
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dump_alignments: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    prompts: PathBuf,
    /// KEY=VAL settings of the reader error model.
    #[arg(long = "reader-spec", num_args = 1..)]
    reader_spec: Vec<String>,
    /// KEY=VAL settings of the recognizer error model.
    #[arg(long = "asr-spec", num_args = 1..)]
    asr_spec: Vec<String>,
    /// Reader seed; the recognizer uses seed + 1 unless its spec sets one.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_labeled(s: &str) -> Result<(String, PathBuf), String> {
    let (label, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected LABEL=PATH, got {s:?}"))?;
    Ok((label.to_string(), PathBuf::from(path)))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), ReportError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| ReportError::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn assess(args: AssessArgs) -> Result<(), ReportError> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let overrides = ConfigFile {
        prompts: args.prompts,
        manual: args.manual,
        hyp: args.hyp.into_iter().collect::<BTreeMap<_, _>>(),
        conf: args.conf.into_iter().collect::<BTreeMap<_, _>>(),
        threshold: args.threshold,
        out: args.out,
        dump_alignments: args.dump_alignments.then_some(true),
    };
    let config = file.merge(overrides).into_run_config()?;
    let bundle = report::run_pipeline(&config)?;
    let manifest = report::emit(&bundle, &config.output_dir)?;
    for name in &manifest {
        println!("{}", config.output_dir.join(name).display());
    }
    if bundle.degenerate_statistics {
        let notes: Vec<&str> = bundle
            .systems
            .iter()
            .flat_map(|s| s.notes.iter().map(String::as_str))
            .filter(|n| n.contains("not computed"))
            .collect();
        return Err(ReportError::Degenerate(notes.join("; ")));
    }
    Ok(())
}

fn align_files(reference: &Path, hypothesis: &Path, out: Option<&Path>) -> Result<(), ReportError> {
    let refs = corpus::parse_utterance_file(reference, Role::Prompt)?;
    let hyps = corpus::parse_utterance_file(hypothesis, Role::Hypothesis)?;
    let mut text = String::new();
    for r in refs.iter() {
        let h = hyps.get(&r.id).ok_or_else(|| ReportError::Judge {
            path: hypothesis.to_path_buf(),
            source: judge::JudgeError::MissingUtterance(r.id.clone()),
        })?;
        let a = align::align_words(r, h);
        let (rl, hl) = align::render_alignment(r, h, &a).expect("alignment of this pair");
        text.push_str(&align::format_alignment_block(&r.id, &rl, &hl));
    }
    write_or_print(out, &text)
}

fn judge_files(prompts: &Path, hyp: &Path, threshold: usize, out: Option<&Path>) -> Result<(), ReportError> {
    if threshold == 0 {
        return Err(ReportError::Config("exclusion threshold must be at least 1".into()));
    }
    let p = corpus::parse_utterance_file(prompts, Role::Prompt)?;
    let h = corpus::parse_utterance_file(hyp, Role::Hypothesis)?;
    let set = judge::build_error_set(&p, &h, Source::Automatic, threshold).map_err(|source| {
        ReportError::Judge {
            path: hyp.to_path_buf(),
            source,
        }
    })?;
    write_or_print(out, &judge::format_judgments(&set))
}

fn score_files(reference: &Path, hyp: &Path, json: bool) -> Result<(), ReportError> {
    let r = corpus::parse_utterance_file(reference, Role::Manual)?;
    let h = corpus::parse_utterance_file(hyp, Role::Hypothesis)?;
    let rep = metrics::score_error_rates(&r, &h).map_err(|source| ReportError::Metrics {
        path: hyp.to_path_buf(),
        source,
    })?;
    if json {
        println!("{}", serde_json::to_string_pretty(&rep).expect("report serializes"));
    } else {
        println!(
            "N={} H={} S={} D={} I={} sentences={} error_sentences={}",
            rep.n_ref_words,
            rep.hits,
            rep.substitutions,
            rep.deletions,
            rep.insertions,
            rep.n_sentences,
            rep.error_sentences
        );
        println!("WER={:.1}% SER={:.1}% ACC={:.1}%", rep.wer, rep.ser, rep.acc);
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), ReportError> {
    let prompts = corpus::parse_utterance_file(&args.prompts, Role::Prompt)?;
    let mut reader = ErrorModel {
        seed: args.seed,
        ..ErrorModel::default()
    };
    for spec in &args.reader_spec {
        reader.set(spec)?;
    }
    let mut asr = ErrorModel {
        seed: args.seed.wrapping_add(1),
        ..ErrorModel::default()
    };
    for spec in &args.asr_spec {
        asr.set(spec)?;
    }
    let corpus = simreader::generate_corpus(&prompts, &reader, &asr)?;
    for name in report::write_simulated(&corpus, &args.out)? {
        println!("{}", args.out.join(name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Assess(args) => assess(args),
        Command::Align {
            reference,
            hypothesis,
            out,
        } => align_files(&reference, &hypothesis, out.as_deref()),
        Command::Judge {
            prompts,
            hyp,
            threshold,
            out,
        } => judge_files(&prompts, &hyp, threshold, out.as_deref()),
        Command::Score {
            reference,
            hyp,
            json,
        } => score_files(&reference, &hyp, json),
        Command::Simulate(args) => simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
