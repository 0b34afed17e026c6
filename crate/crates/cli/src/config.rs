//! `--config FILE` support: each `key=value` line becomes `--key value`,
//! placed right after the subcommand so explicit flags (which come later)
//! take precedence.

use std::ffi::OsString;
use std::fs;

use crate::Failure;

const SUBCOMMANDS: [&str; 6] = ["mine", "split", "train", "generate", "eval", "sweep"];

/// Parses a config file body into flag/value pairs.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
        let key = key.trim();
        if key.is_empty() || key == "config" || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(format!("line {}: invalid key '{key}'", i + 1));
        }
        out.push((key.replace('_', "-"), value.trim().to_string()));
    }
    Ok(out)
}

/// Removes `--config PATH` from `args` and splices in the file's options.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        if arg == "--config" {
            let value = iter
                .next()
                .ok_or_else(|| Failure::usage("--config requires a file path"))?;
            path = Some(value);
        } else if let Some(value) = arg.to_str().and_then(|s| s.strip_prefix("--config=")) {
            path = Some(value.into());
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| Failure::io(format!("cannot read config {}: {e}", path.to_string_lossy())))?;
    let pairs = parse_config(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.to_string_lossy())))?;
    let at = rest
        .iter()
        .position(|a| a.to_str().is_some_and(|s| SUBCOMMANDS.contains(&s)))
        .ok_or_else(|| Failure::usage("--config needs a subcommand"))?;
    let injected = pairs
        .into_iter()
        .flat_map(|(k, v)| [OsString::from(format!("--{k}")), OsString::from(v)]);
    rest.splice(at + 1..at + 1, injected);
    Ok(rest)
}
