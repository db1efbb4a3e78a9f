mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{EnvOverrides, RunConfig};

/// Turns multi-modal sensor streams into activity log entries and summaries.
#[derive(Debug, Parser)]
#[command(
    name = "dailylog",
    version,
    after_help = "Config file format: see example.toml (every key optional)."
)]
struct Cli {
    /// Run configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every random choice; overrides synth.seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads for per-window processing; overrides workers.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Output path; stdout when omitted (run: the log store).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Chat completions endpoint; selects the http_chat backend.
    #[arg(
        long,
        global = true,
        env = "DAILYLOG_LLM_URL",
        value_name = "URL",
        hide_env_values = true
    )]
    llm_url: Option<String>,
    /// Reverse geocoding endpoint; the gazetteer stays as fallback.
    #[arg(
        long,
        global = true,
        env = "DAILYLOG_GEOCODE_URL",
        value_name = "URL",
        hide_env_values = true
    )]
    geocode_url: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Process a sensor stream into log entries and a summary.
    Run(RunArgs),
    /// Generate a labelled synthetic stream.
    Synth(SynthArgs),
    /// Score predicted activity labels against ground truth.
    Eval(EvalArgs),
    /// Summarize the trailing window of a log store.
    Summarize(SummarizeArgs),
    /// Dump per-window feature vectors for a stream.
    Features(FeaturesArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Sensor stream; overrides paths.input.
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Length of the generated stream.
    #[arg(long, default_value_t = 24.0, value_name = "H")]
    hours: f64,
    /// Emit raw sensor records (input for `run`) instead of labelled samples.
    #[arg(long)]
    records: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Predicted labels: one per line, or JSONL objects with an "activity" field.
    pred: PathBuf,
    /// Ground-truth labels in the same format.
    truth: PathBuf,
}

#[derive(Debug, Args)]
struct SummarizeArgs {
    /// Log store; overrides paths.log.
    #[arg(long, value_name = "PATH")]
    log: Option<PathBuf>,
    /// Plain-text report instead of JSON.
    #[arg(long)]
    text: bool,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    /// Sensor stream; overrides paths.input.
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
}

/// A failure reported as JSON on stderr. Exit code 2 marks bad configuration or input.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub path: Option<PathBuf>,
    pub code: u8,
}

impl CliError {
    pub fn config(message: String) -> Self {
        CliError {
            kind: "invalid_config",
            message,
            path: None,
            code: 2,
        }
    }

    pub fn config_at(path: &Path, message: String) -> Self {
        CliError {
            path: Some(path.to_path_buf()),
            message: format!("{}: {message}", path.display()),
            ..Self::config(String::new())
        }
    }

    pub fn input_at(path: &Path, message: String) -> Self {
        CliError {
            kind: "invalid_input",
            message: format!("{}: {message}", path.display()),
            path: Some(path.to_path_buf()),
            code: 2,
        }
    }

    pub fn missing(what: &str, path: &Path) -> Self {
        CliError {
            kind: "missing_file",
            message: format!("{what}: no such file: {}", path.display()),
            path: Some(path.to_path_buf()),
            code: 2,
        }
    }

    pub fn io(what: &str, path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            return Self::missing(what, path);
        }
        CliError {
            kind: "io",
            message: format!("{what}: {}: {e}", path.display()),
            path: Some(path.to_path_buf()),
            code: 1,
        }
    }

    pub fn runtime(message: String) -> Self {
        CliError {
            kind: "runtime",
            message,
            path: None,
            code: 1,
        }
    }

    fn to_json(&self) -> String {
        let mut err = json!({ "kind": self.kind, "message": self.message });
        if let Some(p) = &self.path {
            err["path"] = json!(p.display().to_string());
        }
        json!({ "error": err }).to_string()
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply_env(&EnvOverrides {
        llm_url: cli.llm_url,
        geocode_url: cli.geocode_url,
    });
    if let Some(seed) = cli.seed {
        cfg.synth.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::Run(a) => commands::run(&cfg, a.input.as_deref(), out),
        Command::Synth(a) => commands::synth(&cfg, a.hours, a.records, out),
        Command::Eval(a) => commands::eval(&a.pred, &a.truth, out),
        Command::Summarize(a) => commands::summarize(&cfg, a.log.as_deref(), a.text, out),
        Command::Features(a) => commands::features(&cfg, a.input.as_deref(), out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn error_json_names_the_path() {
        let e = CliError::missing("paths.input", Path::new("/x/y.jsonl"));
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["error"]["kind"], "missing_file");
        assert_eq!(v["error"]["path"], "/x/y.jsonl");
        assert_eq!(e.code, 2);
    }
}
