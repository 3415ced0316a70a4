//! Plain-text REPL: the user types turns, the model answers with its top
//! candidate, and API calls are run against the knowledge bases.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use restobench::benchmark::Benchmark;
use restobench::checkpoint::Model;
use restobench::corpus::{Dialog, Speaker, Turn, TurnKind, SILENCE};
use restobench::eval::{ranking, Ranker};
use restobench::kb::ApiQuery;
use restobench::memnn::{AttentionTrace, MemRanker};
use restobench::simulator::SplitName;

use crate::commands::{load_benchmark, make_ranker, model_kind, prepare, task, Owned};
use crate::config::RunConfig;
use crate::CliError;

pub const QUIT: &str = "\\quit";
const TOP: usize = 5;

/// The session state: everything said so far.
#[derive(Debug, Default)]
pub struct History {
    pub turns: Vec<Turn>,
}

impl History {
    /// History plus a placeholder bot turn, so the last example of the dialog
    /// is the pending prediction.
    fn pending(&self, placeholder: &str) -> Dialog {
        let mut turns = self.turns.clone();
        turns.push(Turn::bot(placeholder));
        Dialog::new(turns)
    }

    /// Number of memory slots before the pending prediction.
    fn memory_len(&self) -> usize {
        match self.turns.last() {
            Some(t) if t.is_user_utterance() => self.turns.len() - 1,
            _ => self.turns.len(),
        }
    }
}

/// Attention table in the style of printed model inspections: one row per
/// memory slot, one column per hop.
pub fn attention_table(memory: &[Turn], trace: &AttentionTrace) -> String {
    let mut out = String::from("time  locutor  ");
    let width = memory.iter().map(|t| t.text.len()).max().unwrap_or(0).max(14);
    let _ = write!(out, "{:<width$}", "dialog history");
    for h in 1..=trace.hops.len() {
        let _ = write!(out, "  hop #{h}");
    }
    out.push('\n');
    for (i, t) in memory.iter().enumerate() {
        let who = match (t.speaker, t.kind) {
            (_, TurnKind::ApiResult) => "api",
            (Speaker::User, _) => "user",
            (Speaker::Bot, _) => "bot",
        };
        let _ = write!(out, "{:<4}  {who:<7}  {:<width$}", i + 1, t.text);
        for hop in &trace.hops {
            let _ = write!(out, "  {:>6.3}", hop.get(i).copied().unwrap_or(0.0));
        }
        out.push('\n');
    }
    out
}

fn respond(
    ranker: &dyn Ranker,
    mem: Option<&MemRanker>,
    bench: &Benchmark,
    history: &mut History,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cands = &bench.candidates;
    let dialog = history.pending(cands.get(0));
    let (scores, trace) = match mem {
        Some(m) => {
            let (s, t) = m.score_history(&dialog)?.pop().expect("pending example exists");
            (s, Some(t))
        }
        None => (ranker.score_dialog(&dialog)?.pop().expect("pending example exists"), None),
    };
    let order = ranking(&scores);
    for (r, &j) in order.iter().take(TOP).enumerate() {
        writeln!(out, "  {}. {:>9.4}  {}", r + 1, scores[j], cands.get(j))?;
    }
    if let Some(trace) = trace {
        if !trace.hops.is_empty() && history.memory_len() > 0 {
            out.write_all(attention_table(&history.turns[..history.memory_len()], &trace).as_bytes())?;
        }
    }
    let reply = cands.get(order[0]).to_string();
    writeln!(out, "bot: {reply}")?;
    history.turns.push(Turn::bot(reply.clone()));
    if let Some(q) = ApiQuery::parse(&reply) {
        let facts: Vec<_> = bench.kb.query(&q).into_iter().chain(bench.kb_oov.query(&q)).collect();
        if facts.is_empty() {
            writeln!(out, "api: no matching restaurant")?;
        }
        for f in facts {
            let line = f.to_string();
            writeln!(out, "api: {line}")?;
            history.turns.push(Turn::api_result(line));
        }
    }
    Ok(())
}

/// Runs the REPL until `\quit` or end of input. An empty line stands for
/// the user staying silent.
pub fn run(mut cfg: RunConfig, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let kind = model_kind(&cfg)?;
    let task = task(&cfg)?;
    let bench = load_benchmark(&cfg)?;
    let (owned, res, feats) = prepare(&mut cfg, kind, task, &bench)?;
    let ranker = make_ranker(kind, &owned, &res, feats, bench.dialogs(task, SplitName::Train)?)?;
    let mem = match &owned {
        Owned::Learned(Model::MemNN(m)) => Some(m.ranker(&res)),
        _ => None,
    };
    writeln!(out, "{} on task {task}; type {QUIT} to leave, an empty line to stay silent", ranker.name())?;
    let mut history = History::default();
    let mut line = String::new();
    loop {
        write!(out, "you: ")?;
        out.flush()?;
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let text = line.trim();
        if text == QUIT {
            return Ok(());
        }
        let text = if text.is_empty() { SILENCE.to_string() } else { text.to_lowercase() };
        history.turns.push(Turn::user(text));
        respond(ranker.as_ref(), mem.as_ref(), &bench, &mut history, out)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_one_row_per_slot_and_one_column_per_hop() {
        let memory = vec![Turn::user("hi"), Turn::bot("hello what can i help you with today")];
        let trace = AttentionTrace {
            hops: vec![vec![0.25, 0.75], vec![0.5, 0.5]],
        };
        let t = attention_table(&memory, &trace);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].ends_with("hop #2"));
        assert!(lines[2].contains("0.750") && lines[2].contains("0.500"));
    }
}
