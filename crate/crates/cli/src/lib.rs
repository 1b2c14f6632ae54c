// SPDX-License-Identifier: Apache-2.0

//! The `sanet` command-line front end.

pub mod args;
pub mod commands;
pub mod manifest;
pub mod render;
pub mod sources;

use std::process::ExitCode;

use sanet_core::Error;

use crate::args::Cli;
use crate::manifest::{checksum_tree, RunDir, RunManifest};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

pub fn exit_code_for(err: &Error) -> u8 {
    if err.is_usage() {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

/// Runs one command and writes its manifest. Runs that fail before
/// producing any file leave no run directory behind.
pub fn run(cli: &Cli) -> ExitCode {
    let started = chrono::Utc::now();
    let name = cli.command.name();
    let mut dir = RunDir::new(cli.out.as_deref(), name, started);
    let mut seed = cli.seed.unwrap_or(0);
    let result = commands::dispatch(cli, &mut dir, &mut seed);

    let (status, error, code) = match &result {
        Ok(outcome) => {
            seed = outcome.seed;
            println!("{}", outcome.summary.trim_end());
            ("ok", None, 0)
        }
        Err(e) => {
            eprintln!("sanet {name}: {e}");
            ("failed", Some(e.to_string()), exit_code_for(e))
        }
    };
    if !dir.is_created() {
        return ExitCode::from(code);
    }
    let manifest = checksum_tree(dir.path()).and_then(|artifacts| {
        RunManifest {
            command: name.into(),
            config_path: cli.config.clone(),
            seed,
            output_dir: dir.path().to_path_buf(),
            created_at: started.to_rfc3339(),
            status: status.into(),
            error,
            artifacts,
        }
        .write(dir.path())
    });
    match manifest {
        Ok(path) => {
            eprintln!("manifest: {}", path.display());
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("sanet {name}: could not write manifest: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
