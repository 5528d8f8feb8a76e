//! Stub compile/run tool for exercising the eval harness without a Kotlin
//! toolchain. Scans the program file for `//VERDICT:<KIND>` markers and maps
//! them to exit behaviors; the protocol table lives in `kotcorpus::eval::stub`.
//!
//! Usage: `stubrunner compile <file>` | `stubrunner run <file>`

use std::process::ExitCode;

use kotcorpus::eval::stub;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if args.len() != 3 {
        eprintln!("usage: stubrunner <compile|run> <program-file>");
        return ExitCode::from(64);
    }
    let text = match std::fs::read_to_string(&args[2]) {
        Ok(text) => text,
        Err(error) => {
            eprintln!("stubrunner: cannot read {}: {error}", args[2]);
            return ExitCode::from(66);
        }
    };
    let behavior = match args[1].as_str() {
        "compile" => stub::compile_step(&text),
        "run" => stub::run_step(&text),
        other => {
            eprintln!("stubrunner: unknown mode {other}");
            return ExitCode::from(64);
        }
    };
    if behavior.sleep_secs > 0 {
        std::thread::sleep(std::time::Duration::from_secs(behavior.sleep_secs));
    }
    if let Some(diagnostic) = behavior.stderr {
        eprintln!("{diagnostic}");
    }
    ExitCode::from(behavior.exit_code as u8)
}
