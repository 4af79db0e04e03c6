//! `key=value` run configs merged beneath command-line flags.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use clap::{ArgMatches, Command};

use crate::error::{Error, Result};

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected key=value, got `{line}`", n + 1)));
        };
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(Error::at_path(path))?;
    parse_config(&text)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Rewrites `argv` so that entries of the `--config` file (if any) precede
/// the user's own flags for the same subcommand; with `args_override_self`
/// the later, user-given values win.
pub fn expand_config(cmd: &Command, argv: Vec<OsString>) -> Result<Vec<OsString>> {
    if argv.len() < 2 {
        return Ok(argv);
    }
    let Some(sub) = cmd.find_subcommand(argv[1].to_string_lossy().as_ref()) else {
        return Ok(argv);
    };
    let Some(path) = config_path(&argv[2..]) else {
        return Ok(argv);
    };
    let mut out: Vec<OsString> = argv[..2].to_vec();
    for (key, value) in read_config(Path::new(&path))? {
        let long = key.replace('_', "-");
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(long.as_str()))
            .ok_or_else(|| Error::Config(format!("unknown key `{key}` for `{}`", sub.get_name())))?;
        if long == "config" {
            return Err(Error::Config("config files cannot include other config files".into()));
        }
        if arg.get_action().takes_values() {
            out.push(format!("--{long}={value}").into());
        } else {
            match value.as_str() {
                "true" => out.push(format!("--{long}").into()),
                "false" => {}
                _ => return Err(Error::Config(format!("`{key}` takes true or false, got `{value}`"))),
            }
        }
    }
    out.extend_from_slice(&argv[2..]);
    Ok(out)
}

/// Every option of `sub` with its effective value (defaults included), in
/// the format [`parse_config`] reads back.
pub fn resolved_config(sub: &Command, matches: &ArgMatches) -> String {
    let mut out = String::new();
    for arg in sub.get_arguments() {
        let id = arg.get_id().as_str();
        let Some(long) = arg.get_long() else {
            continue;
        };
        if matches!(id, "help" | "version" | "config") {
            continue;
        }
        if let Ok(Some(values)) = matches.try_get_raw(id) {
            let joined: Vec<String> = values.map(|v| v.to_string_lossy().into_owned()).collect();
            let _ = writeln!(out, "{}={}", long.replace('-', "_"), joined.join(","));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_comments() {
        let pairs = parse_config("# run\nepochs = 3\n\nthreshold=soft\n").unwrap();
        assert_eq!(pairs, vec![("epochs".into(), "3".into()), ("threshold".into(), "soft".into())]);
        assert!(parse_config("epochs").is_err());
        assert!(parse_config("=3").is_err());
    }
}
