use std::process::ExitCode;

use clap::Parser;

use curvlab_cli::report::write_atomic;
use curvlab_cli::{exit, init_threads, run, Cli, ExperimentConfig};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::ERROR } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    ExitCode::from(execute(&cli) as u8)
}

fn execute(cli: &Cli) -> i32 {
    let outcome = init_threads()
        .and_then(|_| ExperimentConfig::from_command(&cli.command))
        .and_then(|config| run(&config).map(|report| (config, report)));
    let (config, report) = match outcome {
        Ok(pair) => pair,
        Err(e) => {
            eprintln!("error: {e}");
            return exit::ERROR;
        }
    };

    // emit-model: --out names the tensor document; the report never goes to a file.
    if config.command == "emit-model" {
        match &report.artifact {
            Some(doc) => print!("{doc}"),
            None if !config.quiet => print!("{}", report.summary()),
            None => {}
        }
        return report.exit_code();
    }

    let json = match report.to_json() {
        Ok(j) => j,
        Err(e) => {
            eprintln!("error: {e}");
            return exit::ERROR;
        }
    };
    match &config.out {
        Some(path) => {
            if let Err(e) = write_atomic(path, &json) {
                eprintln!("error: writing {}: {e}", path.display());
                return exit::ERROR;
            }
            if !config.quiet {
                print!("{}", report.summary());
            }
        }
        None => print!("{json}"),
    }
    for e in &report.errors {
        eprintln!("error: {}: {}", e.item, e.message);
    }
    report.exit_code()
}
