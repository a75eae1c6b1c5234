use clap::Parser;
use kwc_core::config::{parse_config, Mode};
use kwc_core::run::{error_json, run, write_json};
use kwc_core::KwcError;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Forward, optimal-control and continuation runs for the regularized KWC model.
#[derive(Parser, Debug)]
#[command(name = "kwc", version)]
struct Cli {
    /// solve | optimize | eps-continuation | constraint-continuation | diagnostics
    #[arg(value_parser = parse_mode)]
    mode: Mode,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for `random(...)` profiles (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: KwcError| e.to_string())
}

fn fail(out: &Path, mode: Mode, e: &KwcError) -> ExitCode {
    eprintln!("kwc {mode}: {e}");
    if std::fs::create_dir_all(out).is_ok() {
        let _ = write_json(&out.join("error.json"), &error_json(Some(mode), e));
    }
    match e {
        KwcError::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let fallback = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut cfg = match parse_config(&cli.config) {
        Ok(c) => c,
        Err(e) => return fail(&fallback, cli.mode, &e),
    };
    if let Some(m) = cfg.mode {
        if m != cli.mode {
            let e = KwcError::Config(format!("config file sets mode = {m}, command line asks for {}", cli.mode));
            return fail(&fallback, cli.mode, &e);
        }
    }
    cfg.mode = Some(cli.mode);
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    let out = cfg.output.dir.clone();
    match run(&cfg, &out) {
        Ok(s) => {
            println!("kwc {}: wrote {} files to {}", s.mode, s.files.len(), out.display());
            for (k, v) in &s.metrics {
                println!("  {k} = {v}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&out, cli.mode, &e),
    }
}
