// SPDX-License-Identifier: Apache-2.0

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    sanet_cli::run(&sanet_cli::args::Cli::parse())
}
