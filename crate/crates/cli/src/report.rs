//! JSON report envelope, error objects and exit codes.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use epibundle_core::{Error, ExtReal};
use serde_json::{json, Value};

pub const SCHEMA: u32 = 1;

pub const EXIT_OK: u8 = 0;
pub const EXIT_MISMATCH: u8 = 1;
pub const EXIT_ARGUMENT: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

pub struct Outcome {
    pub doc: Value,
    pub json: Option<PathBuf>,
    pub exit: u8,
}

pub fn success(command: &str, config: Value, seed: u64, verdicts: Value, evidence: Value, json: Option<PathBuf>) -> Outcome {
    Outcome {
        doc: json!({
            "schema": SCHEMA,
            "tool": "epibundle",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": seed,
            "config": config,
            "verdicts": verdicts,
            "evidence": evidence,
        }),
        json,
        exit: EXIT_OK,
    }
}

pub fn exit_code(err: &Error) -> u8 {
    if err.is_argument_class() {
        EXIT_ARGUMENT
    } else {
        EXIT_NUMERIC
    }
}

pub fn failure(command: &str, err: &Error, json: Option<PathBuf>) -> Outcome {
    Outcome {
        doc: json!({
            "schema": SCHEMA,
            "tool": "epibundle",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "error": {
                "kind": err.kind(),
                "message": err.to_string(),
            },
        }),
        json,
        exit: exit_code(err),
    }
}

/// `f64` with IEEE infinities written as `"+inf"` / `"-inf"`.
pub fn ext(x: f64) -> Value {
    serde_json::to_value(ExtReal::from_f64_or_inf(x)).expect("extended reals serialize")
}

pub fn write_json(doc: &Value, path: Option<&Path>) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(doc).expect("reports serialize") + "\n";
    match path {
        Some(p) => std::fs::write(p, text),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes())
        }
    }
}

pub fn finish(outcome: Outcome) -> ExitCode {
    if let Some(err) = outcome.doc.get("error") {
        eprintln!("epibundle: {}", err["message"].as_str().unwrap_or("error"));
    }
    if let Err(e) = write_json(&outcome.doc, outcome.json.as_deref()) {
        eprintln!("epibundle: cannot write report: {e}");
        return ExitCode::from(EXIT_ARGUMENT);
    }
    ExitCode::from(outcome.exit)
}
