//! The `lowres-mt` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
//! Machine-readable output goes to stdout, diagnostics to stderr.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::builder::TypedValueParser;
use clap::{Args, Parser, Subcommand};

use crate::attention::{self, BenchOptions, Precision};
use crate::bleu::{self, BleuConfig};
use crate::corpus::{self, CorpusError};
use crate::pipeline::{self, PipelineConfig, PipelineError, PipelineInputs};
use crate::subword::{self, SubwordError, DEFAULT_META, DEFAULT_VOCAB_SIZE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let inner = match &e {
            PipelineError::Iteration { source, .. } => source.as_ref(),
            other => other,
        };
        match inner {
            PipelineError::Config(_) => CliError::Usage(e.to_string()),
            PipelineError::Sink(_) => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lowres-mt", version, about = "Low-resource MT toolkit: BPE, BLEU, tiled attention, backtranslation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a BPE subword model on one or more corpus files.
    TrainTokenizer(TrainTokenizerArgs),
    /// Encode stdin sentences (one per line) into space-separated token ids.
    Encode(EncodeArgs),
    /// Decode space-separated token ids from stdin back into text.
    Decode(DecodeArgs),
    /// Score a candidate file against one or more reference files.
    Bleu(BleuArgs),
    /// Time the naive and tiled attention kernels and emit a CSV report.
    AttentionBench(BenchArgs),
    /// Run the iterative backtranslation pipeline.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct TrainTokenizerArgs {
    /// Corpus files, one sentence per line; all are merged before training.
    #[arg(long = "input", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_VOCAB_SIZE, value_parser = clap::value_parser!(u32).range(1..).map(|v| v as usize))]
    vocab_size: usize,
    /// Where to write the model file.
    #[arg(long)]
    output: PathBuf,
    /// Word-boundary marker.
    #[arg(long, default_value_t = DEFAULT_META)]
    meta: char,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Wrap each sentence in <s> ... </s>.
    #[arg(long)]
    bos_eos: bool,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Args)]
struct BleuArgs {
    #[arg(long)]
    candidate: PathBuf,
    /// Reference files, line-aligned with the candidate file.
    #[arg(long = "reference", required = true, num_args = 1..)]
    references: Vec<PathBuf>,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..).map(|v| v as usize))]
    max_n: usize,
    /// `none` or `epsilon:<value>`.
    #[arg(long, default_value = "none")]
    smoothing: String,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated `NxD` sizes.
    #[arg(long, default_value = "64x16,256x64")]
    sizes: String,
    /// Comma-separated `ROWSxCOLS` tile shapes.
    #[arg(long, default_value = "16x16,64x64")]
    tiles: String,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..).map(|v| v as usize))]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `f64` or `f32`.
    #[arg(long, default_value = "f64")]
    precision: String,
    /// Report wall_ns as 0 so the output is reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// `key = value` config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    mono_source: PathBuf,
    #[arg(long)]
    mono_target: PathBuf,
    /// Held-out source file; without it the corpus is split.
    #[arg(long, requires = "test_target")]
    test_source: Option<PathBuf>,
    #[arg(long, requires = "test_source")]
    test_target: Option<PathBuf>,
    /// Also write the iteration reports to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(rendered.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = stderr.write_all(rendered.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::TrainTokenizer(a) => train_tokenizer(a, stdout),
        Command::Encode(a) => encode(a, stdin, stdout),
        Command::Decode(a) => decode(a, stdin, stdout),
        Command::Bleu(a) => bleu_cmd(a, stdout),
        Command::AttentionBench(a) => bench(a, stdout),
        Command::Pipeline(a) => pipeline_cmd(a, stdout, stderr),
    };
    let result = result.and_then(|()| stdout.flush().map_err(CliError::from));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn subword_error(e: SubwordError) -> CliError {
    match e {
        SubwordError::VocabTooSmall { .. } => CliError::Usage(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

fn train_tokenizer(args: TrainTokenizerArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut sentences = Vec::new();
    for path in &args.inputs {
        sentences.extend(corpus::read_lines(path)?.iter().map(|l| corpus::normalize(l)));
    }
    let model = subword::train_bpe(&sentences, args.vocab_size, args.meta).map_err(subword_error)?;
    subword::save_model(&model, &args.output).map_err(subword_error)?;
    writeln!(
        out,
        "tokens={} merges={}",
        model.vocabulary().len(),
        model.merges().len()
    )?;
    Ok(())
}

fn encode(args: EncodeArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let model = subword::load_model(&args.model).map_err(|e| CliError::Data(e.to_string()))?;
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| CliError::Data(format!("stdin line {}: {e}", i + 1)))?;
        let seq = model.encode(&corpus::normalize(&line), args.bos_eos);
        let ids: Vec<String> = seq.ids.iter().map(u32::to_string).collect();
        writeln!(out, "{}", ids.join(" "))?;
    }
    Ok(())
}

fn decode(args: DecodeArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let model = subword::load_model(&args.model).map_err(|e| CliError::Data(e.to_string()))?;
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CliError::Data(format!("stdin line {line_no}: {e}")))?;
        let ids = line
            .split_whitespace()
            .enumerate()
            .map(|(pos, tok)| {
                tok.parse::<u32>()
                    .map_err(|_| CliError::Data(format!("line {line_no}, position {pos}: `{tok}` is not a token id")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let text = model
            .decode_ids(&ids)
            .map_err(|e| CliError::Data(format!("line {line_no}: {e}")))?;
        writeln!(out, "{text}")?;
    }
    Ok(())
}

fn read_existing(path: &Path, role: &str) -> Result<Vec<String>, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("{role} file not found: {}", path.display())));
    }
    Ok(corpus::read_lines(path)?)
}

fn bleu_cmd(args: BleuArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let smoothing = pipeline::parse_smoothing(&args.smoothing)
        .ok_or_else(|| CliError::Usage(format!("bad --smoothing `{}`", args.smoothing)))?;
    let config = BleuConfig::uniform(args.max_n)
        .with_smoothing(smoothing)
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let candidates = read_existing(&args.candidate, "candidate")?;
    let mut reference_files = Vec::with_capacity(args.references.len());
    for path in &args.references {
        let lines = read_existing(path, "reference")?;
        if lines.len() != candidates.len() {
            return Err(CliError::Data(format!(
                "line count mismatch: {} has {} lines, {} has {}",
                args.candidate.display(),
                candidates.len(),
                path.display(),
                lines.len()
            )));
        }
        reference_files.push(lines);
    }

    let cand_tokens: Vec<Vec<String>> = candidates
        .iter()
        .map(|l| bleu::tokenize(&corpus::normalize(l)))
        .collect();
    let ref_tokens: Vec<Vec<Vec<String>>> = (0..candidates.len())
        .map(|i| {
            reference_files
                .iter()
                .map(|f| bleu::tokenize(&corpus::normalize(&f[i])))
                .collect()
        })
        .collect();
    let report = bleu::corpus_bleu(&cand_tokens, &ref_tokens, &config).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(out, "{}", report.display_score())?;
    writeln!(out, "{}", report.to_json())?;
    Ok(())
}

fn parse_dims(list: &str, flag: &str) -> Result<Vec<(usize, usize)>, CliError> {
    let bad = || CliError::Usage(format!("--{flag}: expected comma-separated AxB positive pairs, got `{list}`"));
    let dims = list
        .split(',')
        .map(|item| {
            let (a, b) = item.trim().split_once('x').ok_or_else(bad)?;
            let a: usize = a.parse().map_err(|_| bad())?;
            let b: usize = b.parse().map_err(|_| bad())?;
            if a == 0 || b == 0 {
                return Err(bad());
            }
            Ok((a, b))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if dims.is_empty() {
        return Err(bad());
    }
    Ok(dims)
}

fn bench(args: BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let sizes = parse_dims(&args.sizes, "sizes")?;
    let tiles = parse_dims(&args.tiles, "tiles")?;
    let precision = match args.precision.as_str() {
        "f64" => Precision::F64,
        "f32" => Precision::F32,
        other => return Err(CliError::Usage(format!("--precision must be f64 or f32, got `{other}`"))),
    };
    let opts = BenchOptions {
        repeats: args.repeats,
        seed: args.seed,
        precision,
        timing: !args.no_timing,
    };
    let rows = attention::attention_bench(&sizes, &tiles, &opts).map_err(|e| CliError::Usage(e.to_string()))?;
    out.write_all(attention::bench_csv(&rows).as_bytes())?;
    Ok(())
}

fn pipeline_cmd(args: PipelineArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let config = match &args.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| CliError::Usage(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    let inputs = PipelineInputs {
        source: args.source,
        target: args.target,
        mono_source: args.mono_source,
        mono_target: args.mono_target,
        test: args.test_source.zip(args.test_target),
    };
    let mut report_file = match &args.report {
        Some(path) => Some(BufWriter::new(File::create(path).map_err(|e| {
            CliError::Internal(format!("{}: {e}", path.display()))
        })?)),
        None => None,
    };
    let run = pipeline::run_pipeline(&inputs, &config, |report| {
        let line = report.to_json_line();
        writeln!(out, "{line}")?;
        if let Some(f) = report_file.as_mut() {
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        writeln!(err, "{report}")
    })?;
    writeln!(
        err,
        "done: {} iterations, train {} -> {}, held-out {}",
        run.reports.len(),
        run.initial_train_size,
        run.state.train.len(),
        run.test_size
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str], stdin: &str) -> (i32, String, String) {
        let mut input = io::Cursor::new(stdin.as_bytes().to_vec());
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut full = vec!["lowres-mt"];
        full.extend_from_slice(args);
        let code = run(full, &mut input, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn help_is_success() {
        let (code, out, _) = run_args(&["--help"], "");
        assert_eq!(code, 0);
        for sub in ["train-tokenizer", "encode", "decode", "bleu", "attention-bench", "pipeline"] {
            assert!(out.contains(sub), "{sub} missing from help");
            assert_eq!(run_args(&[sub, "--help"], "").0, 0);
        }
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(run_args(&["frobnicate"], "").0, EXIT_USAGE);
    }

    #[test]
    fn vocab_size_flag_validation() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("c.txt");
        std::fs::write(&corpus, "ab ab\n").unwrap();
        let model = dir.path().join("m");
        let (m, c) = (model.to_str().unwrap(), corpus.to_str().unwrap());
        assert_eq!(run_args(&["train-tokenizer", "--input", c, "--vocab-size", "0", "--output", m], "").0, EXIT_USAGE);
        assert_eq!(run_args(&["train-tokenizer", "--input", c, "--vocab-size", "5", "--output", m], "").0, EXIT_USAGE);
        let (code, out, _) = run_args(&["train-tokenizer", "--input", c, "--vocab-size", "16000", "--output", m], "");
        assert_eq!(code, 0);
        assert_eq!(out, "tokens=9 merges=2\n");
    }

    #[test]
    fn parse_dims_cases() {
        assert_eq!(parse_dims("64x16, 8x2", "sizes").unwrap(), [(64, 16), (8, 2)]);
        for bad in ["", "64", "0x4", "4x", "ax4", "4x4,"] {
            assert!(parse_dims(bad, "sizes").is_err(), "{bad}");
        }
    }

    #[test]
    fn bench_bad_sizes_exit_one() {
        assert_eq!(run_args(&["attention-bench", "--sizes", "12"], "").0, EXIT_USAGE);
        assert_eq!(run_args(&["attention-bench", "--precision", "f16"], "").0, EXIT_USAGE);
    }
}
