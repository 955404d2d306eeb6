//! `--config FILE`: TOML keys become long flags inserted right after the
//! subcommand, so flags given on the command line still win. Keys backed by
//! an environment variable that is set are skipped, giving the precedence
//! flags > environment > config file > defaults.

use std::ffi::OsString;
use std::path::Path;

use massimp::{Error, Result};

const SUBCOMMANDS: [&str; 5] = ["fit", "impute", "estimate", "bootstrap", "simulate"];
const ENV_KEYS: [(&str, &str); 2] = [("seed", "MASSIMP_SEED"), ("threads", "MASSIMP_THREADS")];

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(arg) = it.next() {
        let s = arg.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

fn render(key: &str, value: &toml::Value) -> Result<Option<String>> {
    Ok(Some(match value {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(_) => return Ok(None),
        toml::Value::Array(items) => items
            .iter()
            .map(|v| match render(key, v) {
                Ok(Some(s)) => Ok(s),
                _ => Err(Error::InvalidArgument(format!(
                    "config key `{key}`: unsupported array element"
                ))),
            })
            .collect::<Result<Vec<_>>>()?
            .join(","),
        _ => return Err(Error::InvalidArgument(format!("config key `{key}`: unsupported value"))),
    }))
}

/// Flags for the entries of a TOML document.
pub fn flags_from_toml(text: &str) -> Result<Vec<OsString>> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::InvalidArgument(format!("config file: {}", e.message())))?;
    let mut flags = Vec::new();
    for (key, value) in &table {
        if key == "config" {
            continue;
        }
        if ENV_KEYS
            .iter()
            .any(|(k, env)| k == key && std::env::var_os(env).is_some())
        {
            continue;
        }
        let flag = if key == "L" { key.clone() } else { key.replace('_', "-") };
        match (value, render(key, value)?) {
            (toml::Value::Boolean(true), _) => flags.push(format!("--{flag}").into()),
            (toml::Value::Boolean(false), _) => {}
            (_, Some(v)) => {
                flags.push(format!("--{flag}").into());
                flags.push(v.into());
            }
            (_, None) => {}
        }
    }
    Ok(flags)
}

/// `argv` with the config file's flags spliced in after the subcommand.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(Path::new(&path))?;
    let flags = flags_from_toml(&text)?;
    let Some(pos) = argv
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
    else {
        return Ok(argv);
    };
    let mut out = argv[..=pos].to_vec();
    out.extend(flags);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}
