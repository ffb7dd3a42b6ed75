//! `--config` files: one `key = value` per line, keys named after long flags.
//! File settings are inserted ahead of the command-line flags so that flags
//! given on the command line win.

use std::ffi::OsString;
use std::path::Path;

use crate::CliError;

/// Parses `key = value` lines. Blank lines and `#` comments are skipped; a
/// bare `key` becomes a value-less switch.
pub fn parse_config(text: &str) -> Result<Vec<(String, Option<String>)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), Some(v.trim())),
            None => (line, None),
        };
        let key = key.trim_start_matches("--");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(CliError::Config {
                line: i + 1,
                reason: format!("bad key in `{raw}`"),
            });
        }
        if key == "config" {
            return Err(CliError::Config {
                line: i + 1,
                reason: "nested config files are not supported".into(),
            });
        }
        let value = value.map(|v| v.trim_matches('"').to_string());
        out.push((key.to_string(), value));
    }
    Ok(out)
}

/// Expands `--config <file>` (or `--config=<file>`) into flags placed right
/// after the subcommand name.
pub fn expand_config_args(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config_path = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        match a.to_str() {
            Some("--config") => {
                let path = it.next().ok_or_else(|| CliError::Usage("--config needs a path".into()))?;
                config_path = Some(path);
            }
            Some(s) if s.starts_with("--config=") => config_path = Some(OsString::from(&s["--config=".len()..])),
            _ => rest.push(a),
        }
    }
    let Some(path) = config_path else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(Path::new(&path))?;
    let mut injected = Vec::new();
    for (key, value) in parse_config(&text)? {
        injected.push(OsString::from(format!("--{key}")));
        if let Some(v) = value {
            injected.push(OsString::from(v));
        }
    }
    // position of the subcommand: first argument after the binary that is not a flag
    let at = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(rest.len(), |p| p + 2);
    let mut out = rest[..at.min(rest.len())].to_vec();
    out.extend(injected);
    out.extend_from_slice(&rest[at.min(rest.len())..]);
    Ok(out)
}
