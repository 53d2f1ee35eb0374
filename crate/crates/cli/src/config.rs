//! Flat `key=value` run configuration.
//!
//! Every subcommand declares its keys in a table. The same table drives the
//! command-line flags (`--key value`) and the accepted config-file keys, so
//! a resolved snapshot written by one run can be passed back through
//! `--config` to repeat it. Precedence: table default, then config file,
//! then flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::error::CliError;

pub const SNAPSHOT_FILE: &str = "resolved_config.txt";

/// One configurable key of a subcommand.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
    /// Boolean switch: `--name` alone means `true`.
    pub switch: bool,
}

pub const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help, switch: false }
}

pub const fn switch(name: &'static str, help: &'static str) -> Key {
    Key { name, default: "false", help, switch: true }
}

/// Adds one flag per key plus `--config` to a subcommand.
pub fn with_keys(mut cmd: Command, keys: &[Key]) -> Command {
    cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("Read key=value settings from FILE before applying flags"),
    );
    for k in keys {
        let mut arg = Arg::new(k.name).long(k.name).help(format!("{} [default: {}]", k.help, display_default(k)));
        if k.switch {
            arg = arg
                .value_name("BOOL")
                .num_args(0..=1)
                .default_missing_value("true")
                .action(ArgAction::Set);
        } else {
            arg = arg.value_name("VALUE").action(ArgAction::Set);
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

fn display_default(k: &Key) -> &str {
    if k.default.is_empty() {
        "none"
    } else {
        k.default
    }
}

/// Resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    values: BTreeMap<String, String>,
}

/// Parses `key=value` lines; `#` starts a comment line.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", n + 1))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(format!("line {}: empty key", n + 1));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key `{k}`", n + 1));
        }
    }
    Ok(out)
}

impl RunConfig {
    /// Defaults only.
    pub fn defaults(command: &str, keys: &[Key]) -> Self {
        Self {
            command: command.to_string(),
            values: keys.iter().map(|k| (k.name.to_string(), k.default.to_string())).collect(),
        }
    }

    /// Applies file and flag overrides on top of the defaults.
    pub fn resolve(command: &str, keys: &[Key], matches: &ArgMatches) -> Result<Self, CliError> {
        let mut cfg = Self::defaults(command, keys);
        if let Some(path) = matches.get_one::<String>("config") {
            let path = Path::new(path);
            let text = std::fs::read_to_string(path).map_err(|_| CliError::MissingInput(path.to_path_buf()))?;
            let file = parse_config_text(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            cfg.merge(file)?;
        }
        for k in keys {
            if matches.value_source(k.name) == Some(clap::parser::ValueSource::CommandLine) {
                let v = matches.get_one::<String>(k.name).expect("flag has a value");
                cfg.values.insert(k.name.to_string(), v.clone());
            }
        }
        Ok(cfg)
    }

    /// Overrides from a parsed config file. A `command` entry must name this
    /// subcommand; any other unknown key is an error.
    pub fn merge(&mut self, file: BTreeMap<String, String>) -> Result<(), CliError> {
        for (k, v) in file {
            if k == "command" {
                if v != self.command {
                    return Err(CliError::Usage(format!(
                        "config file is for `{v}`, not `{}`",
                        self.command
                    )));
                }
                continue;
            }
            match self.values.get_mut(&k) {
                Some(slot) => *slot = v,
                None => return Err(CliError::Usage(format!("unknown key `{k}` for `{}`", self.command))),
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        assert!(self.values.contains_key(key), "unknown key {key}");
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("undeclared key {key}"))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| CliError::Usage(format!("`{key}`: cannot parse `{raw}`")))
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(CliError::Usage(format!("`{key}`: expected true or false, got `{other}`"))),
        }
    }

    /// A path that may be left empty.
    pub fn optional_path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.raw(key);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    pub fn required_path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.optional_path(key)
            .ok_or_else(|| CliError::Usage(format!("`--{key}` is required")))
    }

    /// Snapshot text: a comment line, `command=…`, then every key in
    /// sorted order.
    pub fn to_text(&self) -> String {
        let mut s = format!("# resolved configuration for `ecflow {}`\ncommand={}\n", self.command, self.command);
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn write_snapshot(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(SNAPSHOT_FILE);
        std::fs::write(&path, self.to_text()).map_err(|source| CliError::Output { path: path.clone(), source })?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEYS: &[Key] = &[key("seed", "0", "seed"), key("out", "", "dir"), switch("fast", "go fast")];

    fn matches(args: &[&str]) -> ArgMatches {
        with_keys(Command::new("t"), KEYS).get_matches_from(std::iter::once("t").chain(args.iter().copied()))
    }

    #[test]
    fn flags_override_file_which_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.txt");
        std::fs::write(&file, "# comment\nseed = 4\nout=a\n").unwrap();
        let m = matches(&["--config", file.to_str().unwrap(), "--out", "b", "--fast"]);
        let cfg = RunConfig::resolve("t", KEYS, &m).unwrap();
        assert_eq!(cfg.raw("seed"), "4");
        assert_eq!(cfg.raw("out"), "b");
        assert!(cfg.flag("fast").unwrap());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = RunConfig::defaults("t", KEYS);
        cfg.set("seed", 9);
        let back = parse_config_text(&cfg.to_text()).unwrap();
        let mut again = RunConfig::defaults("t", KEYS);
        again.merge(back).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn bad_files_are_usage_errors() {
        assert!(parse_config_text("novalue").is_err());
        assert!(parse_config_text("a=1\na=2").is_err());
        let mut cfg = RunConfig::defaults("t", KEYS);
        let unknown = parse_config_text("color=red").unwrap();
        assert!(matches!(cfg.merge(unknown), Err(CliError::Usage(_))));
        let other = parse_config_text("command=train").unwrap();
        assert!(matches!(cfg.merge(other), Err(CliError::Usage(_))));
        assert!(matches!(cfg.parse::<u64>("out"), Err(CliError::Usage(_))));
    }
}
