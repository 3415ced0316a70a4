//! Dialog text files.
//!
//! ```text
//! 1 hi<TAB>hello what can i help you with today
//! 2 <SILENCE><TAB>api_call british london six expensive
//! 3 resto_x r_phone resto_x_phone
//!
//! 1 next dialog ...
//! ```
//!
//! A line with a tab holds a user utterance and the bot reply; a line without
//! one is an API-result fact. Numbering restarts at 1 for every dialog and
//! dialogs are separated by a blank line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::dialog::{Dialog, Turn, TurnKind};
use crate::error::{Error, Result};

pub fn format_dialogs(dialogs: &[Dialog]) -> Result<String> {
    let mut out = String::new();
    for (d, dialog) in dialogs.iter().enumerate() {
        let mut line = 1;
        let mut i = 0;
        let turns = &dialog.turns;
        while i < turns.len() {
            let turn = &turns[i];
            if turn.text.contains(['\t', '\n']) {
                return Err(Error::InvalidInput(format!(
                    "dialog {d}, turn {i}: text contains a tab or newline"
                )));
            }
            match turn.kind {
                TurnKind::ApiResult => {
                    writeln!(out, "{line} {}", turn.text).unwrap();
                    i += 1;
                }
                _ if turn.is_user_utterance() => {
                    let Some(reply) = turns.get(i + 1).filter(|t| t.is_bot()) else {
                        return Err(Error::InvalidInput(format!(
                            "dialog {d}, turn {i}: user utterance without a bot reply"
                        )));
                    };
                    if reply.text.contains(['\t', '\n']) {
                        return Err(Error::InvalidInput(format!(
                            "dialog {d}, turn {}: text contains a tab or newline",
                            i + 1
                        )));
                    }
                    writeln!(out, "{line} {}\t{}", turn.text, reply.text).unwrap();
                    i += 2;
                }
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "dialog {d}, turn {i}: bot turn without a preceding user utterance"
                    )))
                }
            }
            line += 1;
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dialogs(path: &Path, dialogs: &[Dialog]) -> Result<()> {
    fs::write(path, format_dialogs(dialogs)?)?;
    Ok(())
}

/// Parses dialog text. `origin` is only used in error messages.
pub fn parse_dialogs(text: &str, origin: &Path) -> Result<Vec<Dialog>> {
    let mut dialogs = Vec::new();
    let mut turns: Vec<Turn> = Vec::new();
    let mut expected = 1usize;
    for (n, raw) in text.lines().enumerate() {
        let lineno = n + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if !turns.is_empty() {
                dialogs.push(Dialog::new(std::mem::take(&mut turns)));
            }
            expected = 1;
            continue;
        }
        let (num, rest) = line
            .split_once(' ')
            .ok_or_else(|| Error::parse(origin, lineno, "expected `<index> <text>`"))?;
        let index: usize = num
            .parse()
            .map_err(|_| Error::parse(origin, lineno, format!("bad line index `{num}`")))?;
        if index != expected {
            return Err(Error::parse(
                origin,
                lineno,
                format!("line index {index}, expected {expected}"),
            ));
        }
        expected += 1;
        match rest.split_once('\t') {
            Some((user, bot)) => {
                if user.is_empty() || bot.is_empty() || bot.contains('\t') {
                    return Err(Error::parse(
                        origin,
                        lineno,
                        "expected exactly `<user text><TAB><bot text>`",
                    ));
                }
                turns.push(Turn::user(user));
                turns.push(Turn::bot(bot));
            }
            None => {
                if rest.trim().is_empty() {
                    return Err(Error::parse(origin, lineno, "empty API result line"));
                }
                turns.push(Turn::api_result(rest));
            }
        }
    }
    if !turns.is_empty() {
        dialogs.push(Dialog::new(turns));
    }
    Ok(dialogs)
}

pub fn read_dialogs(path: &Path) -> Result<Vec<Dialog>> {
    let text = fs::read_to_string(path)?;
    parse_dialogs(&text, path)
}
