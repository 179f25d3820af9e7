//! Command-line front-end for the `tsbias` library.
//!
//! Every subcommand computes all of its outputs in memory, then writes each
//! declared file atomically and prints a one-line JSON summary to stdout.

pub mod args;
mod cmd;
pub mod error;
pub mod params;
pub mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::Parser;
use serde::Serialize;
use serde_json::{json, Map, Value};
use tsbias::modelio::{self, Record};
use tsbias::Exec;

use crate::args::{Cli, Command};
use crate::error::{Error, Result};
use crate::params::Params;

pub const SEED_ENV: &str = "TSBIAS_SEED";

/// Resolved global settings shared by every subcommand.
pub struct Ctx {
    pub params: Params,
    pub seed: u64,
    pub exec: Exec,
}

/// Files produced by a subcommand, written only once it has fully succeeded.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, path: &Path, bytes: impl Into<Vec<u8>>) {
        self.files.push((path.to_path_buf(), bytes.into()));
    }

    pub fn records<R: Record>(&mut self, path: &Path, batch: &[R]) -> Result<()> {
        let text = modelio::encode_records(batch)?;
        self.add(path, text);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Usage(e.to_string()))?;
        text.push('\n');
        self.add(path, text);
        Ok(())
    }

    fn paths(&self) -> Vec<&Path> {
        self.files.iter().map(|(p, _)| p.as_path()).collect()
    }

    fn commit(&self) -> Result<()> {
        for (path, bytes) in &self.files {
            modelio::write_atomic(path, bytes).map_err(|e| Error::at(path, e))?;
        }
        Ok(())
    }
}

/// Parses `argv`, runs one subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn resolve_seed(cli_seed: Option<u64>, params: &Params) -> Result<u64> {
    if let Ok(raw) = std::env::var(SEED_ENV) {
        return raw.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}='{raw}' is not an unsigned integer")));
    }
    Ok(params.opt("seed", cli_seed)?.unwrap_or(0))
}

fn execute(cli: Cli) -> Result<Value> {
    let params = Params::load(cli.config.as_deref())?;
    let seed = resolve_seed(cli.seed, &params)?;
    let sequential = cli.sequential || params.global::<bool>("sequential")?.unwrap_or(false);
    if let Some(n) = params.opt("threads", cli.threads)? {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        tsbias::par::set_threads(n)?;
    }
    let exec = if sequential { Exec::Sequential } else { Exec::Parallel };
    let ctx = Ctx { params, seed, exec };

    let mut out = Outputs::default();
    let (name, mut summary) = match cli.command {
        Command::Gen(a) => ("gen", cmd::gen::run(&ctx, a, &mut out)?),
        Command::Probe(p) => cmd::probe::run(&ctx, p, &mut out)?,
        Command::Eval(e) => cmd::eval::run(&ctx, e, &mut out)?,
        Command::Report(a) => ("report", cmd::report::run(&ctx, a, &mut out)?),
    };
    ctx.params.finish()?;
    let mut seen = std::collections::BTreeSet::new();
    for p in out.paths() {
        if !seen.insert(p) {
            return Err(Error::Usage(format!("{} is declared as two different outputs", p.display())));
        }
    }
    out.commit()?;

    let mut line = Map::new();
    line.insert("command".into(), json!(name));
    line.insert("seed".into(), json!(ctx.seed));
    line.insert("outputs".into(), json!(out.paths().iter().map(|p| p.display().to_string()).collect::<Vec<_>>()));
    line.append(&mut summary);
    Ok(Value::Object(line))
}

/// Fails if an input path is also a declared output.
pub(crate) fn check_distinct(inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    for i in inputs {
        if outputs.contains(i) {
            return Err(Error::Usage(format!("{} is used as both input and output", i.display())));
        }
    }
    Ok(())
}

pub(crate) fn read_records<R: Record>(path: &Path) -> Result<Vec<R>> {
    modelio::read_records_file(path).map_err(|e| Error::at(path, e))
}

pub(crate) fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}
