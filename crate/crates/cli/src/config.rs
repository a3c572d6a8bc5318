//! `key=value` option files merged underneath command-line flags.

use std::collections::BTreeSet;

use crate::CliError;

/// Parses `key=value` lines; `#` starts a comment. A value of `true` stands
/// for a bare switch.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("config line {}: expected key=value", i + 1)));
        };
        let key = k.trim().trim_start_matches("--").to_string();
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Appends config entries whose flag is absent from `args`, so flags given
/// on the command line win. `args[0]` is the program and `args[1]` the
/// subcommand.
pub fn merge(args: &[String], entries: &[(String, String)]) -> Vec<String> {
    let present: BTreeSet<&str> = args
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a))
        .collect();
    let mut out = args.to_vec();
    for (k, v) in entries {
        if k == "config" || present.contains(k.as_str()) {
            continue;
        }
        if v == "true" {
            out.push(format!("--{k}"));
        } else if v != "false" {
            out.push(format!("--{k}"));
            out.push(v.clone());
        }
    }
    out
}

/// Removes `--config PATH` / `--config=PATH` from `args`, returning the path.
pub fn take_config_flag(args: &mut Vec<String>) -> Result<Option<String>, CliError> {
    let mut i = 0;
    while i < args.len() {
        if args[i] == "--config" {
            if i + 1 >= args.len() {
                return Err(CliError::Usage("--config needs a path".into()));
            }
            let path = args.remove(i + 1);
            args.remove(i);
            return Ok(Some(path));
        }
        if let Some(p) = args[i].strip_prefix("--config=") {
            let p = p.to_string();
            args.remove(i);
            return Ok(Some(p));
        }
        i += 1;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn command_line_overrides_config() {
        let entries = parse("seed = 3\n# comment\ncount=10\nemit-maps=true\nverbose=false\n").unwrap();
        let merged = merge(&v(&["imprint", "gen", "--seed", "9"]), &entries);
        assert_eq!(merged, v(&["imprint", "gen", "--seed", "9", "--count", "10", "--emit-maps"]));
    }

    #[test]
    fn malformed_line_is_usage_error() {
        assert!(matches!(parse("novalue"), Err(CliError::Usage(_))));
    }

    #[test]
    fn config_flag_is_extracted() {
        let mut a = v(&["imprint", "gen", "--config", "x.cfg", "--seed", "1"]);
        assert_eq!(take_config_flag(&mut a).unwrap().as_deref(), Some("x.cfg"));
        assert_eq!(a, v(&["imprint", "gen", "--seed", "1"]));
    }
}
