//! Reading sources, worlds and documents.

use crate::Failure;
use serde_json::Value as Json;
use sgl::analyze::{compile as compile_unit, Program};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Env(format!("{}: {e}", path.display())))
}

pub fn read_json(path: &Path) -> Result<Json, Failure> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

/// Writes pretty JSON to `dest`, or to stdout when `dest` is `-`.
pub fn write_json(dest: &str, doc: &Json) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(doc).expect("JSON values always serialize");
    if dest == "-" {
        println!("{text}");
        return Ok(());
    }
    let mut f = fs::File::create(dest).map_err(|e| Failure::Env(format!("{dest}: {e}")))?;
    writeln!(f, "{text}").map_err(|e| Failure::Env(format!("{dest}: {e}")))
}

/// Concatenates the files into one unit and compiles it. Diagnostics are
/// printed to stderr as `file:line:col`; warnings never fail the build.
pub fn compile(paths: &[PathBuf]) -> Result<Program, Failure> {
    let mut text = String::new();
    // (first line of the file in the unit, path)
    let mut starts: Vec<(u32, &Path)> = Vec::new();
    let mut line = 1u32;
    for p in paths {
        let body = read(p)?;
        starts.push((line, p));
        text.push_str(&body);
        if !body.ends_with('\n') {
            text.push('\n');
        }
        line += body.lines().count().max(1) as u32;
    }
    let locate = |l: u32| -> (String, u32) {
        match starts.iter().rev().find(|(s, _)| *s <= l) {
            Some((s, p)) => (p.display().to_string(), l - s + 1),
            None => ("<unit>".into(), l),
        }
    };
    let report = |d: &sgl::diag::Diagnostic| {
        let (file, l) = locate(d.line);
        let sev = if d.is_error() { "error" } else { "warning" };
        eprintln!("{file}:{l}:{}: {sev}[{}]: {}", d.column, d.code, d.message);
    };
    match compile_unit(&text) {
        Ok(p) => {
            p.warnings.iter().for_each(report);
            Ok(p)
        }
        Err(ds) => {
            ds.0.iter().for_each(report);
            let n = ds.errors().count();
            Err(Failure::Input(format!("{n} error{} in the program", if n == 1 { "" } else { "s" })))
        }
    }
}
