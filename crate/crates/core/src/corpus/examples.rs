use super::dialog::{Dialog, Turn};

/// One prediction point: everything said before a bot turn, and that turn.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    /// All turns before the response, including the current user utterance.
    pub history: &'a [Turn],
    /// The latest user utterance, which the models use as their input.
    pub input: &'a str,
    pub gold: &'a str,
}

impl<'a> Example<'a> {
    /// History without the trailing input utterance: the memory contents.
    pub fn memory(&self) -> &'a [Turn] {
        match self.history.last() {
            Some(t) if t.is_user_utterance() => &self.history[..self.history.len() - 1],
            _ => self.history,
        }
    }
}

/// One example per bot turn, in dialog order.
pub fn to_examples(dialog: &Dialog) -> Vec<Example<'_>> {
    dialog
        .bot_turn_indices()
        .map(|t| example_at(dialog, t))
        .collect()
}

pub(crate) fn example_at(dialog: &Dialog, t: usize) -> Example<'_> {
    let history = &dialog.turns[..t];
    let input = history
        .iter()
        .rev()
        .find(|turn| turn.is_user_utterance())
        .map(|turn| turn.text.as_str())
        .unwrap_or("");
    Example {
        history,
        input,
        gold: &dialog.turns[t].text,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_example_per_bot_turn_with_nested_histories() {
        let d = Dialog::new(vec![
            Turn::user("hi"),
            Turn::bot("hello what can i help you with today"),
            Turn::user("may i have a table"),
            Turn::bot("i'm on it"),
            Turn::api_result("resto_a r_rating 3"),
            Turn::user("<SILENCE>"),
            Turn::bot("api_call british london six expensive"),
        ]);
        let ex = to_examples(&d);
        assert_eq!(ex.len(), 3);
        assert_eq!(ex[2].gold, "api_call british london six expensive");
        assert_eq!(ex[2].input, "<SILENCE>");
        assert_eq!(ex[2].memory().len(), 5);
        for w in ex.windows(2) {
            assert!(w[1].history.starts_with(w[0].history));
            assert!(w[1].history.len() > w[0].history.len());
        }
    }
}
