//! Command-line front end: `stats`, `synth` and `run`.
//!
//! Exit codes: 0 on success, 1 when training or evaluation fails, 2 for bad
//! input files, configs or arguments.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::corpus::{
    compute_stats, generate_synthetic, interaction_frequencies, load_transcripts, Corpus,
    SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::eval::{parse_windows, run_experiment, ExperimentConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "turntaking", version, about = "Next-speaker prediction for multi-party dialogue")]
pub struct Cli {
    /// Override the seed of the spec or config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for report files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Lookback windows, comma separated (e.g. `1,2`).
    #[arg(long = "w", global = true, value_name = "LIST")]
    pub windows: Option<String>,
    /// Only print errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print corpus statistics and the agent interaction matrix.
    Stats { corpus: PathBuf },
    /// Generate a synthetic corpus from a spec file.
    Synth { spec: PathBuf, out: PathBuf },
    /// Run an experiment config and print the comparison tables.
    Run { config: PathBuf },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = if cli.quiet { "error" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Stats { corpus } => {
            let corpus = load_transcripts(corpus)?;
            print(cli, &render_stats(&corpus));
            Ok(())
        }
        Command::Synth { spec, out } => {
            let mut spec = SyntheticSpec::load(spec)?;
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let corpus = generate_synthetic(&spec)?;
            let mut buf = Vec::new();
            corpus.write_jsonl(&mut buf).map_err(|e| Error::io(out, e))?;
            write_atomic(out, &buf)?;
            if !cli.quiet {
                println!("wrote {} dialogues to {}", corpus.len(), out.display());
            }
            Ok(())
        }
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::load(config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(out) = &cli.out {
                cfg.out = Some(out.clone());
            }
            if let Some(w) = &cli.windows {
                cfg.windows = parse_windows(w)?;
            }
            cfg.validate()?;
            let report = run_experiment(&cfg)?;
            let tables = report.render_tables();
            if let Some(dir) = &cfg.out {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                write_atomic(&dir.join("report.jsonl"), report.to_jsonl().as_bytes())?;
                write_atomic(&dir.join("report.txt"), tables.as_bytes())?;
            }
            print(cli, &tables);
            Ok(())
        }
    }
}

fn print(cli: &Cli, text: &str) {
    if !cli.quiet {
        print!("{text}");
    }
}

/// Summary counts and the next-speaker frequency matrix.
pub fn render_stats(corpus: &Corpus) -> String {
    let s = compute_stats(corpus);
    let mut out = String::new();
    let rows: [(&str, String); 5] = [
        ("utterances", s.utterance_count.to_string()),
        ("dialogues", s.dialogue_count.to_string()),
        ("avg agents per dialogue", format!("{:.2}", s.avg_agents_per_dialogue)),
        ("avg utterances per dialogue", format!("{:.2}", s.avg_utterances_per_dialogue)),
        ("avg utterance length (words)", format!("{:.2}", s.avg_utterance_length_words)),
    ];
    for (k, v) in rows {
        writeln!(out, "{k:<30} {v:>10}").unwrap();
    }
    let m = interaction_frequencies(corpus);
    let width = m.agents.iter().map(String::len).max().unwrap_or(1).max(6);
    writeln!(out, "\nnext-speaker frequencies (row speaks, column speaks next)").unwrap();
    write!(out, "{:width$}", "").unwrap();
    for a in &m.agents {
        write!(out, " {a:>width$}").unwrap();
    }
    out.push('\n');
    for (a, row) in m.agents.iter().zip(&m.freq) {
        write!(out, "{a:width$}").unwrap();
        for v in row {
            let cell = v.map_or("-".to_string(), |f| format!("{f:.3}"));
            write!(out, " {cell:>width$}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Writes to a temporary file in the same directory, then renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidConfig(format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let io = |e| Error::io(path, e);
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}
