//! `key=value` config files. Keys are long flag names without dashes;
//! anything given on the command line wins.

use std::ffi::OsString;
use std::path::Path;

use clap::CommandFactory;

use crate::args::Cli;

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
    }
    None
}

fn has_flag(argv: &[OsString], long: &str) -> bool {
    let flag = format!("--{long}");
    let eq = format!("{flag}=");
    argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&eq)
    })
}

/// Append config-file settings that the command line does not already set.
pub fn merge(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| format!("cannot read config {}: {e}", path.to_string_lossy()))?;

    let cmd = Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|c| c.get_name().to_string()).collect();
    let sub_name = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().to_string())
        .find(|a| names.contains(a));
    let sub = sub_name.as_deref().and_then(|n| cmd.find_subcommand(n));

    let mut extra = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("config line {}: expected key=value", lineno + 1));
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" || has_flag(&argv, &key) {
            continue;
        }
        let arg = sub
            .and_then(|s| s.get_arguments().find(|a| a.get_long() == Some(key.as_str())))
            .or_else(|| cmd.get_arguments().find(|a| a.get_long() == Some(key.as_str())))
            .ok_or_else(|| format!("config line {}: unknown option `{key}`", lineno + 1))?;
        if arg.get_action().takes_values() {
            extra.push(OsString::from(format!("--{key}")));
            extra.push(OsString::from(value));
        } else {
            match value {
                "true" | "yes" | "1" => extra.push(OsString::from(format!("--{key}"))),
                "false" | "no" | "0" => {}
                _ => return Err(format!("config line {}: `{key}` expects true or false", lineno + 1)),
            }
        }
    }
    let mut out = argv;
    out.extend(extra);
    Ok(out)
}
