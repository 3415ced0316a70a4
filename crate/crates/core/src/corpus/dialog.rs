use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SILENCE: &str = "<SILENCE>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    User,
    Bot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TurnKind {
    Utterance,
    ApiCall,
    ApiResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub kind: TurnKind,
    pub text: String,
}

impl Turn {
    pub fn user(text: impl Into<String>) -> Turn {
        Turn {
            speaker: Speaker::User,
            kind: TurnKind::Utterance,
            text: text.into(),
        }
    }

    /// A bot turn; texts starting with `api_call` become API-call turns.
    pub fn bot(text: impl Into<String>) -> Turn {
        let text = text.into();
        let kind = if text.starts_with("api_call") {
            TurnKind::ApiCall
        } else {
            TurnKind::Utterance
        };
        Turn {
            speaker: Speaker::Bot,
            kind,
            text,
        }
    }

    /// An API-result fact. Stored on the user side of the conversation.
    pub fn api_result(text: impl Into<String>) -> Turn {
        Turn {
            speaker: Speaker::User,
            kind: TurnKind::ApiResult,
            text: text.into(),
        }
    }

    pub fn is_bot(&self) -> bool {
        self.speaker == Speaker::Bot
    }

    pub fn is_user_utterance(&self) -> bool {
        self.speaker == Speaker::User && self.kind == TurnKind::Utterance
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dialog {
    pub turns: Vec<Turn>,
}

impl Dialog {
    pub fn new(turns: Vec<Turn>) -> Dialog {
        Dialog { turns }
    }

    pub fn bot_turn_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.turns
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_bot())
            .map(|(i, _)| i)
    }

    pub fn num_bot_turns(&self) -> usize {
        self.turns.iter().filter(|t| t.is_bot()).count()
    }

    /// Checks the structural invariants: API calls are bot-side, results are
    /// user-side, every bot turn directly follows a user utterance, and the
    /// dialog ends with a bot turn.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        let Some(last) = self.turns.last() else {
            return bad("empty dialog".into());
        };
        if !last.is_bot() {
            return bad("dialog does not end with a bot turn".into());
        }
        for (i, t) in self.turns.iter().enumerate() {
            match (t.speaker, t.kind) {
                (Speaker::User, TurnKind::ApiCall) => return bad(format!("turn {i}: user api_call")),
                (Speaker::Bot, TurnKind::ApiResult) => {
                    return bad(format!("turn {i}: bot-side api result"))
                }
                _ => {}
            }
            if t.is_bot() && (i == 0 || !self.turns[i - 1].is_user_utterance()) {
                return bad(format!("turn {i}: bot turn not preceded by a user utterance"));
            }
        }
        Ok(())
    }
}
