//! `key=value` config files, merged into the argument list as flags that the
//! command line has not already set.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::{Arg, Command};

pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value, got `{line}`", i + 1))?;
        out.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

fn long_flag_value(args: &[String], name: &str) -> Option<String> {
    let flag = format!("--{name}");
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if *a == flag {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix(&format!("{flag}=")) {
            return Some(v.to_string());
        }
    }
    None
}

fn mentions(args: &[String], name: &str) -> bool {
    let flag = format!("--{name}");
    args.iter()
        .any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
}

fn find_arg<'a>(root: &'a Command, sub: &'a Command, name: &str) -> Option<&'a Arg> {
    sub.get_arguments()
        .chain(root.get_arguments())
        .find(|a| a.get_long() == Some(name))
}

/// Index of the subcommand token, skipping the values of global options.
fn subcommand_position(root: &Command, args: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        if let Some(long) = a.strip_prefix("--") {
            let takes_value = root
                .get_arguments()
                .find(|x| x.get_long() == Some(long))
                .is_some_and(|x| x.get_action().takes_values());
            i += if takes_value { 2 } else { 1 };
            continue;
        }
        if a.starts_with('-') {
            i += 1;
            continue;
        }
        return root.find_subcommand(a).map(|_| i);
    }
    None
}

/// Returns `args` with the entries of the `--config` file spliced in after
/// the subcommand name. Keys are long flag names (`_` and `-` are
/// interchangeable); boolean flags take `true` or `false`.
pub fn merge(root: &Command, args: Vec<String>) -> Result<Vec<OsString>, String> {
    let Some(path) = long_flag_value(&args, "config") else {
        return Ok(args.into_iter().map(OsString::from).collect());
    };
    let text = fs::read_to_string(Path::new(&path))
        .map_err(|e| format!("cannot read config file {path}: {e}"))?;
    let entries = parse_kv(&text).map_err(|e| format!("config file {path}: {e}"))?;
    let Some(pos) = subcommand_position(root, &args) else {
        return Ok(args.into_iter().map(OsString::from).collect());
    };
    let sub = root.find_subcommand(&args[pos]).expect("checked above");
    let mut injected = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            return Err(format!("config file {path}: nested `config` key"));
        }
        let arg = find_arg(root, sub, &key).ok_or_else(|| {
            format!(
                "config file {path}: `{key}` is not an option of `{}`",
                sub.get_name()
            )
        })?;
        if mentions(&args, &key) {
            continue;
        }
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}={value}"));
        } else {
            match value.as_str() {
                "true" => injected.push(format!("--{key}")),
                "false" => {}
                other => {
                    return Err(format!(
                        "config file {path}: `{key}` expects true or false, got `{other}`"
                    ))
                }
            }
        }
    }
    let mut out: Vec<String> = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out.into_iter().map(OsString::from).collect())
}
