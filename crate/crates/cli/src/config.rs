//! TOML config files mirroring command-line flags.
//!
//! Top-level keys apply to every subcommand that has a flag of that name;
//! keys inside a `[subcommand]` table apply to that subcommand only. A key
//! is turned into `--key value` (arrays repeat the flag, `true` booleans
//! become bare switches) and is dropped when the flag already appears on
//! the command line, so flags always win.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::Path;

use clap::{ArgAction, Command};

use crate::UsageError;

/// Removes `--config PATH` / `--config=PATH` from `args`, returning the path.
pub fn take_config_flag(args: &mut Vec<OsString>) -> Result<Option<OsString>, UsageError> {
    let mut found = None;
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy().into_owned();
        if s == "--" {
            break;
        }
        if s == "--config" {
            if i + 1 >= args.len() {
                return Err(UsageError("--config needs a path".into()));
            }
            found = Some(args.remove(i + 1));
            args.remove(i);
            continue;
        }
        if let Some(v) = s.strip_prefix("--config=") {
            found = Some(OsString::from(v));
            args.remove(i);
            continue;
        }
        i += 1;
    }
    Ok(found)
}

/// Index of the subcommand token: the first argument that names one.
fn subcommand_index(cmd: &Command, args: &[OsString]) -> Option<(usize, String)> {
    args.iter().enumerate().skip(1).find_map(|(i, a)| {
        let s = a.to_str()?;
        cmd.find_subcommand(s).map(|_| (i, s.to_string()))
    })
}

fn scalar(key: &str, v: &toml::Value) -> Result<String, UsageError> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        _ => Err(UsageError(format!("config key {key:?}: expected a string or number"))),
    }
}

/// Inserts config-file flags right after the subcommand token.
pub fn apply_config(cmd: &Command, args: &mut Vec<OsString>, path: &Path) -> Result<(), UsageError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table = text.parse().map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
    let Some((at, name)) = subcommand_index(cmd, args) else {
        return Ok(());
    };
    let sub = cmd.find_subcommand(&name).expect("found above");

    let given: BTreeSet<String> = args[at + 1..]
        .iter()
        .filter_map(|a| a.to_str()?.strip_prefix("--"))
        .map(|s| s.split('=').next().unwrap_or(s).to_string())
        .collect();

    let mut entries: Vec<(String, toml::Value, bool)> = Vec::new();
    for (k, v) in &table {
        match v {
            toml::Value::Table(section) => {
                if cmd.find_subcommand(k).is_none() {
                    return Err(UsageError(format!("config: unknown section [{k}]")));
                }
                if *k == name {
                    entries.extend(section.iter().map(|(k, v)| (k.clone(), v.clone(), true)));
                }
            }
            _ => entries.push((k.clone(), v.clone(), false)),
        }
    }

    let mut injected = Vec::new();
    for (key, value, scoped) in entries {
        let flag = key.replace('_', "-");
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(flag.as_str())) else {
            let known_elsewhere =
                cmd.get_subcommands().any(|s| s.get_arguments().any(|a| a.get_long() == Some(flag.as_str())));
            if scoped || !known_elsewhere {
                return Err(UsageError(format!("config: unknown key {key:?} for {name}")));
            }
            continue;
        };
        if given.contains(&flag) {
            continue;
        }
        match (arg.get_action(), &value) {
            (ArgAction::SetTrue, toml::Value::Boolean(b)) => {
                if *b {
                    injected.push(OsString::from(format!("--{flag}")));
                }
            }
            (ArgAction::SetTrue, _) => return Err(UsageError(format!("config key {key:?} must be a boolean"))),
            (_, toml::Value::Array(items)) => {
                for item in items {
                    injected.push(OsString::from(format!("--{flag}")));
                    injected.push(OsString::from(scalar(&key, item)?));
                }
            }
            _ => {
                injected.push(OsString::from(format!("--{flag}")));
                injected.push(OsString::from(scalar(&key, &value)?));
            }
        }
    }
    args.splice(at + 1..at + 1, injected);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::{Arg, ArgAction};

    fn cmd() -> Command {
        Command::new("ilk")
            .subcommand(
                Command::new("evaluate")
                    .arg(Arg::new("seed").long("seed"))
                    .arg(Arg::new("estimator").long("estimator").action(ArgAction::Append))
                    .arg(Arg::new("pooled").long("pooled").action(ArgAction::SetTrue)),
            )
            .subcommand(Command::new("synth").arg(Arg::new("n").long("n")))
    }

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    fn run(toml: &str, args: &[&str]) -> Result<Vec<OsString>, UsageError> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, toml).unwrap();
        let mut a = os(args);
        apply_config(&cmd(), &mut a, &p)?;
        Ok(a)
    }

    #[test]
    fn flags_override_file() {
        let a = run(
            "seed = 3\nn = 4\n[evaluate]\nestimator = [\"gw\", \"dn\"]\npooled = true\n",
            &["ilk", "evaluate", "--seed", "9"],
        )
        .unwrap();
        assert_eq!(a, os(&["ilk", "evaluate", "--estimator", "gw", "--estimator", "dn", "--pooled", "--seed", "9"]));
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(run("bogus = 1\n", &["ilk", "evaluate"]).is_err());
        assert!(run("[evaluate]\nn = 1\n", &["ilk", "evaluate"]).is_err());
        assert!(run("[nope]\nn = 1\n", &["ilk", "evaluate"]).is_err());
        assert!(run("[evaluate]\npooled = 1\n", &["ilk", "evaluate"]).is_err());
    }

    #[test]
    fn config_flag_is_extracted() {
        let mut a = os(&["ilk", "--config", "x.toml", "synth", "--config=y.toml"]);
        assert_eq!(take_config_flag(&mut a).unwrap(), Some(OsString::from("y.toml")));
        assert_eq!(a, os(&["ilk", "synth"]));
        assert!(take_config_flag(&mut os(&["ilk", "--config"])).is_err());
    }
}
