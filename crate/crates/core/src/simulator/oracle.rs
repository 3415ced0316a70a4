//! The hand-coded policy: it reads a dialog history back through the
//! templates and decides the next bot turn by rule.

use std::collections::HashMap;

use super::patterns::{BotAct, BotIntent, Field, PatternSet, Slot, UserAct, UserIntent};
use crate::corpus::{Turn, TurnKind};
use crate::error::{Error, Result};
use crate::kb::{EntityIndex, Fact, KnowledgeBase, Relation};

#[derive(Debug, Clone)]
pub struct OracleBot {
    patterns: PatternSet,
    index: EntityIndex,
}

#[derive(Default)]
struct State {
    fields: [Option<String>; 4],
    last_bot: Option<BotAct>,
    /// User act that the last bot turn answered.
    trigger: Option<UserIntent>,
    user: Option<UserAct>,
    /// (rating, name) of every restaurant returned since the latest API call.
    results: Vec<(u8, String)>,
    proposed: Vec<String>,
    booked: Option<String>,
    phones: HashMap<String, String>,
    addresses: HashMap<String, String>,
}

fn no_rule(msg: impl Into<String>) -> Error {
    Error::NoRuleFired(msg.into())
}

impl OracleBot {
    pub fn new(patterns: PatternSet, kbs: &[&KnowledgeBase]) -> Result<OracleBot> {
        Ok(OracleBot {
            patterns,
            index: EntityIndex::new(kbs)?,
        })
    }

    pub fn with_index(patterns: PatternSet, index: EntityIndex) -> OracleBot {
        OracleBot { patterns, index }
    }

    pub fn patterns(&self) -> &PatternSet {
        &self.patterns
    }

    fn replay(&self, history: &[Turn]) -> Result<State> {
        let mut st = State::default();
        for turn in history {
            match (turn.is_bot(), turn.kind) {
                (false, TurnKind::ApiResult) => {
                    let f = Fact::parse(&turn.text).ok_or_else(|| no_rule(format!("unreadable fact `{}`", turn.text)))?;
                    match f.relation {
                        Relation::Rating => {
                            let rating = f.value.parse().map_err(|_| no_rule(format!("bad rating `{}`", f.value)))?;
                            st.results.push((rating, f.subject));
                        }
                        Relation::Phone => {
                            st.phones.insert(f.subject, f.value);
                        }
                        Relation::Address => {
                            st.addresses.insert(f.subject, f.value);
                        }
                        _ => {}
                    }
                }
                (false, _) => {
                    let act = self
                        .patterns
                        .parse_user(&turn.text, &self.index)
                        .ok_or_else(|| no_rule(format!("unrecognized user turn `{}`", turn.text)))?;
                    st.absorb_user(&act);
                    st.user = Some(act);
                }
                (true, _) => {
                    let act = self
                        .patterns
                        .parse_bot(&turn.text, &self.index)
                        .ok_or_else(|| no_rule(format!("unrecognized bot turn `{}`", turn.text)))?;
                    match act.intent {
                        BotIntent::ApiCall => {
                            st.results.clear();
                            st.proposed.clear();
                        }
                        BotIntent::Propose => st.proposed.extend(act.slot(Slot::Name).map(str::to_string)),
                        _ => {}
                    }
                    st.trigger = st.user.take().map(|u| u.intent);
                    st.last_bot = Some(act);
                }
            }
        }
        Ok(st)
    }

    /// The next bot turn after `history`, which must end with a user utterance.
    pub fn respond(&self, history: &[Turn]) -> Result<String> {
        if !history.last().is_some_and(Turn::is_user_utterance) {
            return Err(no_rule("history does not end with a user utterance"));
        }
        let st = self.replay(history)?;
        let user = st.user.as_ref().ok_or_else(|| no_rule("no user turn"))?;
        let last = st.last_bot.as_ref().map(|b| b.intent);
        let intent = self.decide(&st, user.intent, last)?;
        let slots = self.fill(&st, intent)?;
        let slots: Vec<(Slot, &str)> = slots.iter().map(|(s, v)| (*s, v.as_str())).collect();
        Ok(self.patterns.bot(intent, &slots))
    }

    fn decide(&self, st: &State, user: UserIntent, last: Option<BotIntent>) -> Result<BotIntent> {
        use BotIntent as B;
        use UserIntent as U;
        let intent = match (user, last) {
            (U::Greet, _) => B::Greet,
            (U::Request, _) => B::OnIt,
            (U::BookAt, _) => B::Reserve,
            (U::Silence, Some(B::OnIt))
            | (U::AnswerCuisine | U::AnswerLocation | U::AnswerPartySize | U::AnswerPrice, _) => {
                st.next_question()
            }
            (U::Silence, Some(B::LookOptions)) => B::ApiCall,
            (U::Silence, Some(B::ApiCall | B::OtherOption)) => {
                if st.next_option().is_some() {
                    B::Propose
                } else if st.results.is_empty() {
                    B::NoMatch
                } else {
                    B::NoMoreOptions
                }
            }
            (U::Silence, Some(B::GivePhone)) if st.trigger == Some(U::AskBoth) => B::GiveAddress,
            (U::UpdateCuisine | U::UpdateLocation | U::UpdatePartySize | U::UpdatePrice, _) => B::AskUpdate,
            (U::NoUpdate, Some(B::AskUpdate)) => B::LookOptions,
            (U::Reject, Some(B::Propose)) => B::OtherOption,
            (U::Accept, Some(B::Propose)) => B::Reserve,
            (U::AskPhone | U::AskBoth, _) if st.booked.is_some() => B::GivePhone,
            (U::AskAddress, _) if st.booked.is_some() => B::GiveAddress,
            (U::AskPhone | U::AskBoth | U::AskAddress, _) => B::NoBooking,
            (U::Thanks, _) => B::AnythingElse,
            (U::Close, Some(B::AnythingElse)) => B::Welcome,
            (U::Close, _) => B::Goodbye,
            (u, b) => {
                return Err(no_rule(format!(
                    "no rule for user `{}` after bot `{}`",
                    u.as_str(),
                    b.map_or("<start>", BotIntent::as_str)
                )))
            }
        };
        Ok(intent)
    }

    fn fill(&self, st: &State, intent: BotIntent) -> Result<Vec<(Slot, String)>> {
        let booked = || st.booked.clone().ok_or_else(|| no_rule("no restaurant booked"));
        Ok(match intent {
            BotIntent::ApiCall => {
                let mut slots = Vec::new();
                for f in Field::ASK_ORDER {
                    let v = st.fields[f.index()]
                        .clone()
                        .ok_or_else(|| no_rule(format!("api call with unknown {f:?}")))?;
                    slots.push((f.slot(), v));
                }
                slots
            }
            BotIntent::Propose => vec![(Slot::Name, st.next_option().expect("checked in decide").to_string())],
            BotIntent::GivePhone => {
                let name = booked()?;
                let phone = st.phones.get(&name).ok_or_else(|| no_rule(format!("no phone fact for {name}")))?;
                vec![(Slot::Phone, phone.clone())]
            }
            BotIntent::GiveAddress => {
                let name = booked()?;
                let address = st
                    .addresses
                    .get(&name)
                    .ok_or_else(|| no_rule(format!("no address fact for {name}")))?;
                vec![(Slot::Address, address.clone())]
            }
            _ => Vec::new(),
        })
    }
}

impl State {
    fn absorb_user(&mut self, act: &UserAct) {
        match act.intent {
            UserIntent::BookAt => self.booked = act.slot(Slot::Name).map(str::to_string),
            UserIntent::Accept => self.booked = self.proposed.last().cloned(),
            _ => {
                for (slot, value) in &act.slots {
                    if let Some(f) = Field::from_slot(*slot) {
                        self.fields[f.index()] = Some(value.clone());
                    }
                }
            }
        }
    }

    fn next_question(&self) -> BotIntent {
        Field::ASK_ORDER
            .into_iter()
            .find(|f| self.fields[f.index()].is_none())
            .map_or(BotIntent::LookOptions, BotIntent::ask)
    }

    /// Best-rated restaurant of the latest results not yet proposed.
    fn next_option(&self) -> Option<&str> {
        let mut ranked: Vec<&(u8, String)> = self.results.iter().collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        ranked
            .into_iter()
            .map(|(_, n)| n.as_str())
            .find(|n| !self.proposed.iter().any(|p| p == n))
    }
}

/// Convenience wrapper building the oracle from the shipped patterns.
pub fn oracle_bot(history: &[Turn], kbs: &[&KnowledgeBase]) -> Result<String> {
    OracleBot::new(PatternSet::default_set(), kbs)?.respond(history)
}
