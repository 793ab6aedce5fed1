use clap::Parser;
use coset_cli::{execute, json, RunConfig};
use std::process::ExitCode;

fn main() -> ExitCode {
    let cfg = RunConfig::parse();
    let (value, code) = match execute(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("coset: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let text = json::render(&value);
    match &cfg.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("coset: {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::from(code as u8)
}
