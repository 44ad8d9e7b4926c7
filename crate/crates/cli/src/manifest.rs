//! `manifest.json`: effective parameters, seed, version and outputs.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::Serialize;
use serde_json::Value;

use crate::args::Cli;
use crate::commands::Outcome;
use crate::CliError;

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    parameters: BTreeMap<String, Value>,
    seed: Option<u64>,
    outputs: &'a [String],
    results: &'a BTreeMap<String, Value>,
    created_unix: u64,
}

fn parameters(m: &ArgMatches) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    for id in m.ids() {
        let name = id.as_str();
        // flattened argument structs show up as group ids named after the struct
        if name == "verbose" || name.starts_with(|c: char| c.is_ascii_uppercase()) {
            continue;
        }
        let Ok(Some(raw)) = m.try_get_raw(name) else { continue };
        let vals: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
        let value = match vals.len() {
            1 => Value::String(vals[0].clone()),
            _ => Value::from(vals),
        };
        let source = match m.value_source(name) {
            Some(ValueSource::DefaultValue) => "default",
            Some(ValueSource::EnvVariable) => "env",
            _ => "given",
        };
        out.insert(name.to_string(), serde_json::json!({ "value": value, "source": source }));
    }
    out
}

pub fn write(cli: &Cli, sub: &str, m: &ArgMatches, outcome: &Outcome) -> Result<(), CliError> {
    let manifest = Manifest {
        tool: "ngk",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: sub,
        parameters: parameters(m),
        seed: outcome.seed,
        outputs: &outcome.outputs,
        results: &outcome.results,
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    let path = cli.out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::write(&path, text + "\n")
        .map_err(|e| CliError::Core(ngk::NgkError::Output(format!("{}: {e}", path.display()))))
}
