//! Natural-language templates for both sides of the conversation, and the
//! matcher that maps an utterance back to its intent and slot values.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kb::{EntityIndex, EntityType};

/// The pattern file shipped with this crate.
pub const DEFAULT_PATTERNS: &str = include_str!("../../assets/patterns.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Cuisine,
    Location,
    PartySize,
    Price,
    Name,
    Phone,
    Address,
}

impl Slot {
    fn parse(s: &str) -> Option<Slot> {
        Some(match s {
            "cuisine" => Slot::Cuisine,
            "location" => Slot::Location,
            "party_size" => Slot::PartySize,
            "price" => Slot::Price,
            "name" => Slot::Name,
            "phone" => Slot::Phone,
            "address" => Slot::Address,
            _ => return None,
        })
    }

    /// Entity type a captured word must have; names are untyped.
    pub fn entity_type(self) -> Option<EntityType> {
        match self {
            Slot::Cuisine => Some(EntityType::Cuisine),
            Slot::Location => Some(EntityType::Location),
            Slot::PartySize => Some(EntityType::PartySize),
            Slot::Price => Some(EntityType::Price),
            Slot::Phone => Some(EntityType::Phone),
            Slot::Address => Some(EntityType::Address),
            Slot::Name => None,
        }
    }
}

/// The four request fields, in the order the bot asks for them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    Cuisine,
    Location,
    PartySize,
    Price,
}

impl Field {
    pub const ASK_ORDER: [Field; 4] = [Field::Cuisine, Field::Location, Field::PartySize, Field::Price];

    pub fn slot(self) -> Slot {
        match self {
            Field::Cuisine => Slot::Cuisine,
            Field::Location => Slot::Location,
            Field::PartySize => Slot::PartySize,
            Field::Price => Slot::Price,
        }
    }

    pub fn from_slot(slot: Slot) -> Option<Field> {
        match slot {
            Slot::Cuisine => Some(Field::Cuisine),
            Slot::Location => Some(Field::Location),
            Slot::PartySize => Some(Field::PartySize),
            Slot::Price => Some(Field::Price),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

macro_rules! intents {
    ($name:ident { $($variant:ident => $text:literal),* $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name { $($variant),* }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),*];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),* }
            }

            pub fn parse(s: &str) -> Option<$name> {
                match s { $($text => Some($name::$variant),)* _ => None }
            }
        }
    };
}

intents!(UserIntent {
    Greet => "user.greet",
    Request => "user.request",
    RequestCuisine => "user.request_cuisine",
    RequestLocation => "user.request_location",
    RequestPartySize => "user.request_party_size",
    RequestPrice => "user.request_price",
    AnswerCuisine => "user.answer_cuisine",
    AnswerLocation => "user.answer_location",
    AnswerPartySize => "user.answer_party_size",
    AnswerPrice => "user.answer_price",
    UpdateCuisine => "user.update_cuisine",
    UpdateLocation => "user.update_location",
    UpdatePartySize => "user.update_party_size",
    UpdatePrice => "user.update_price",
    NoUpdate => "user.no_update",
    Silence => "user.silence",
    Reject => "user.reject",
    Accept => "user.accept",
    BookAt => "user.book_at",
    AskPhone => "user.ask_phone",
    AskAddress => "user.ask_address",
    AskBoth => "user.ask_both",
    Thanks => "user.thanks",
    Close => "user.close",
});

intents!(BotIntent {
    Greet => "bot.greet",
    OnIt => "bot.on_it",
    AskCuisine => "bot.ask_cuisine",
    AskLocation => "bot.ask_location",
    AskPartySize => "bot.ask_party_size",
    AskPrice => "bot.ask_price",
    LookOptions => "bot.look_options",
    ApiCall => "bot.api_call",
    AskUpdate => "bot.ask_update",
    Propose => "bot.propose",
    OtherOption => "bot.other_option",
    Reserve => "bot.reserve",
    GivePhone => "bot.give_phone",
    GiveAddress => "bot.give_address",
    AnythingElse => "bot.anything_else",
    Welcome => "bot.welcome",
    NoMatch => "bot.no_match",
    NoMoreOptions => "bot.no_more_options",
    NoBooking => "bot.no_booking",
    Goodbye => "bot.goodbye",
});

impl UserIntent {
    pub fn answer(field: Field) -> UserIntent {
        match field {
            Field::Cuisine => UserIntent::AnswerCuisine,
            Field::Location => UserIntent::AnswerLocation,
            Field::PartySize => UserIntent::AnswerPartySize,
            Field::Price => UserIntent::AnswerPrice,
        }
    }

    pub fn update(field: Field) -> UserIntent {
        match field {
            Field::Cuisine => UserIntent::UpdateCuisine,
            Field::Location => UserIntent::UpdateLocation,
            Field::PartySize => UserIntent::UpdatePartySize,
            Field::Price => UserIntent::UpdatePrice,
        }
    }

    pub fn request_fragment(field: Field) -> UserIntent {
        match field {
            Field::Cuisine => UserIntent::RequestCuisine,
            Field::Location => UserIntent::RequestLocation,
            Field::PartySize => UserIntent::RequestPartySize,
            Field::Price => UserIntent::RequestPrice,
        }
    }

    fn is_fragment(self) -> bool {
        matches!(
            self,
            UserIntent::RequestCuisine
                | UserIntent::RequestLocation
                | UserIntent::RequestPartySize
                | UserIntent::RequestPrice
        )
    }
}

impl BotIntent {
    pub fn ask(field: Field) -> BotIntent {
        match field {
            Field::Cuisine => BotIntent::AskCuisine,
            Field::Location => BotIntent::AskLocation,
            Field::PartySize => BotIntent::AskPartySize,
            Field::Price => BotIntent::AskPrice,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Word(String),
    Slot(Slot),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pieces: Vec<Piece>,
}

pub type Slots = Vec<(Slot, String)>;

impl Template {
    fn parse(text: &str) -> Option<Template> {
        let pieces = text
            .split_whitespace()
            .map(|w| match w.strip_prefix('{').and_then(|w| w.strip_suffix('}')) {
                Some(name) => Slot::parse(name).map(Piece::Slot),
                None => Some(Piece::Word(w.to_string())),
            })
            .collect::<Option<Vec<_>>>()?;
        (!pieces.is_empty()).then_some(Template { pieces })
    }

    /// Fills the placeholders. Panics if a slot value is missing.
    pub fn render(&self, slots: &[(Slot, &str)]) -> String {
        let words: Vec<&str> = self
            .pieces
            .iter()
            .map(|p| match p {
                Piece::Word(w) => w.as_str(),
                Piece::Slot(s) => slots
                    .iter()
                    .find(|(k, _)| k == s)
                    .map(|(_, v)| *v)
                    .unwrap_or_else(|| panic!("template needs slot {s:?}")),
            })
            .collect();
        words.join(" ")
    }

    /// Matches a prefix of `words`; returns the number of words consumed.
    fn match_prefix(&self, words: &[&str], index: &EntityIndex, slots: &mut Slots) -> Option<usize> {
        if words.len() < self.pieces.len() {
            return None;
        }
        let start = slots.len();
        for (piece, word) in self.pieces.iter().zip(words) {
            let ok = match piece {
                Piece::Word(w) => w == word,
                Piece::Slot(s) => {
                    let typed = match s.entity_type() {
                        Some(ty) => index.entity_type_of(word) == Some(ty),
                        None => !word.is_empty(),
                    };
                    if typed {
                        slots.push((*s, word.to_string()));
                    }
                    typed
                }
            };
            if !ok {
                slots.truncate(start);
                return None;
            }
        }
        Some(self.pieces.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserAct {
    pub intent: UserIntent,
    pub slots: Slots,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BotAct {
    pub intent: BotIntent,
    pub slots: Slots,
}

impl UserAct {
    pub fn slot(&self, s: Slot) -> Option<&str> {
        self.slots.iter().find(|(k, _)| *k == s).map(|(_, v)| v.as_str())
    }
}

impl BotAct {
    pub fn slot(&self, s: Slot) -> Option<&str> {
        self.slots.iter().find(|(k, _)| *k == s).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct PatternSet {
    user: BTreeMap<UserIntent, Vec<Template>>,
    bot: BTreeMap<BotIntent, Template>,
}

impl PatternSet {
    pub fn default_set() -> PatternSet {
        PatternSet::parse(DEFAULT_PATTERNS, Path::new("patterns.tsv"))
            .expect("shipped pattern file is valid")
    }

    pub fn load(path: &Path) -> Result<PatternSet> {
        PatternSet::parse(&std::fs::read_to_string(path)?, path)
    }

    /// Parses `intent<TAB>template` lines; `#` starts a comment line.
    pub fn parse(text: &str, origin: &Path) -> Result<PatternSet> {
        let mut user: BTreeMap<UserIntent, Vec<Template>> = BTreeMap::new();
        let mut bot = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| Error::parse(origin, n + 1, m.to_string());
            let (intent, template) = line.split_once('\t').ok_or_else(|| err("expected `intent<TAB>template`"))?;
            let template = Template::parse(template).ok_or_else(|| err("bad template"))?;
            if let Some(i) = UserIntent::parse(intent) {
                let list = user.entry(i).or_default();
                if list.len() == 4 {
                    return Err(err("at most 4 user templates per intent"));
                }
                list.push(template);
            } else if let Some(i) = BotIntent::parse(intent) {
                if bot.insert(i, template).is_some() {
                    return Err(err("bot intents have exactly one template"));
                }
            } else {
                return Err(err("unknown intent"));
            }
        }
        for i in UserIntent::ALL {
            if !user.contains_key(i) {
                return Err(Error::parse(origin, 0, format!("missing intent {}", i.as_str())));
            }
        }
        for i in BotIntent::ALL {
            if !bot.contains_key(i) {
                return Err(Error::parse(origin, 0, format!("missing intent {}", i.as_str())));
            }
        }
        Ok(PatternSet { user, bot })
    }

    pub fn num_user_templates(&self) -> usize {
        self.user.values().map(Vec::len).sum()
    }

    pub fn num_bot_templates(&self) -> usize {
        self.bot.len()
    }

    pub fn user_templates(&self, intent: UserIntent) -> &[Template] {
        &self.user[&intent]
    }

    pub fn bot_template(&self, intent: BotIntent) -> &Template {
        &self.bot[&intent]
    }

    pub fn bot(&self, intent: BotIntent, slots: &[(Slot, &str)]) -> String {
        self.bot[&intent].render(slots)
    }

    /// Renders a random variant of a user intent.
    pub fn user<R: Rng + ?Sized>(&self, rng: &mut R, intent: UserIntent, slots: &[(Slot, &str)]) -> String {
        self.user[&intent]
            .choose(rng)
            .expect("every intent has a template")
            .render(slots)
    }

    /// A request opening followed by one fragment per given field, in the given order.
    pub fn request<R: Rng + ?Sized>(&self, rng: &mut R, fields: &[(Field, &str)]) -> String {
        let mut text = self.user(rng, UserIntent::Request, &[]);
        for &(field, value) in fields {
            text.push(' ');
            text.push_str(&self.user(rng, UserIntent::request_fragment(field), &[(field.slot(), value)]));
        }
        text
    }

    pub fn parse_user(&self, text: &str, index: &EntityIndex) -> Option<UserAct> {
        let words: Vec<&str> = text.split_whitespace().collect();
        for (&intent, templates) in &self.user {
            if intent.is_fragment() {
                continue;
            }
            for t in templates {
                let mut slots = Vec::new();
                let Some(used) = t.match_prefix(&words, index, &mut slots) else {
                    continue;
                };
                if used == words.len() {
                    return Some(UserAct { intent, slots });
                }
                if intent == UserIntent::Request {
                    if let Some(frags) = self.match_fragments(&words[used..], index) {
                        return Some(UserAct {
                            intent,
                            slots: frags,
                        });
                    }
                }
            }
        }
        None
    }

    fn match_fragments(&self, words: &[&str], index: &EntityIndex) -> Option<Slots> {
        if words.is_empty() {
            return Some(Vec::new());
        }
        for field in Field::ASK_ORDER {
            for t in &self.user[&UserIntent::request_fragment(field)] {
                let mut slots = Vec::new();
                if let Some(used) = t.match_prefix(words, index, &mut slots) {
                    if let Some(rest) = self.match_fragments(&words[used..], index) {
                        slots.extend(rest);
                        return Some(slots);
                    }
                }
            }
        }
        None
    }

    pub fn parse_bot(&self, text: &str, index: &EntityIndex) -> Option<BotAct> {
        let words: Vec<&str> = text.split_whitespace().collect();
        self.bot.iter().find_map(|(&intent, t)| {
            let mut slots = Vec::new();
            (t.match_prefix(&words, index, &mut slots) == Some(words.len()))
                .then_some(BotAct { intent, slots })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{default_split, generate_kb};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn index() -> EntityIndex {
        let ((c, l), (oc, ol)) = default_split();
        let a = generate_kb(&c, &l, 1).unwrap();
        let b = generate_kb(&oc, &ol, 2).unwrap();
        EntityIndex::new(&[&a, &b]).unwrap()
    }

    #[test]
    fn template_counts() {
        let p = PatternSet::default_set();
        assert_eq!(p.num_user_templates(), 43);
        assert_eq!(p.num_bot_templates(), 20);
    }

    #[test]
    fn quoted_surface_forms_are_present() {
        let p = PatternSet::default_set();
        assert_eq!(p.bot(BotIntent::OnIt, &[]), "i'm on it");
        assert_eq!(p.bot(BotIntent::LookOptions, &[]), "ok let me look into some options for you");
        assert_eq!(p.bot(BotIntent::AskUpdate, &[]), "sure is there anything else to update");
        assert_eq!(
            p.bot(BotIntent::Propose, &[(Slot::Name, "resto_1")]),
            "what do you think of this option: resto_1"
        );
        assert_eq!(p.bot(BotIntent::GiveAddress, &[(Slot::Address, "x_address")]), "here it is x_address");
        assert_eq!(p.bot(BotIntent::Reserve, &[]), "great let me do the reservation");
    }

    #[test]
    fn request_round_trips_through_the_matcher() {
        let p = PatternSet::default_set();
        let idx = index();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let fields = [
                (Field::Price, "moderate"),
                (Field::Location, "paris"),
                (Field::PartySize, "six"),
            ];
            let text = p.request(&mut rng, &fields);
            let act = p.parse_user(&text, &idx).unwrap();
            assert_eq!(act.intent, UserIntent::Request, "{text}");
            assert_eq!(act.slot(Slot::Price), Some("moderate"));
            assert_eq!(act.slot(Slot::Location), Some("paris"));
            assert_eq!(act.slot(Slot::PartySize), Some("six"));
            assert_eq!(act.slot(Slot::Cuisine), None);
        }
    }

    #[test]
    fn every_user_template_parses_back_to_its_intent() {
        let p = PatternSet::default_set();
        let idx = index();
        let values = [
            (Slot::Cuisine, "thai"),
            (Slot::Location, "bombay"),
            (Slot::PartySize, "eight"),
            (Slot::Price, "cheap"),
            (Slot::Name, "resto_rome_cheap_french_2stars"),
        ];
        for &intent in UserIntent::ALL {
            if intent.is_fragment() {
                continue;
            }
            for t in p.user_templates(intent) {
                let text = t.render(&values);
                let act = p.parse_user(&text, &idx).unwrap_or_else(|| panic!("{text}"));
                assert_eq!(act.intent, intent, "{text}");
            }
        }
        assert!(p.parse_user("what is the meaning of life", &idx).is_none());
    }

    #[test]
    fn bot_templates_parse_with_typed_slots() {
        let p = PatternSet::default_set();
        let idx = index();
        let phone = "resto_rome_cheap_french_2stars_phone";
        let act = p.parse_bot(&format!("here it is {phone}"), &idx).unwrap();
        assert_eq!(act.intent, BotIntent::GivePhone);
        let act = p.parse_bot("api_call indian paris six moderate", &idx).unwrap();
        assert_eq!(act.intent, BotIntent::ApiCall);
        assert_eq!(act.slot(Slot::PartySize), Some("six"));
        assert!(p.parse_bot("api_call indian paris seven moderate", &idx).is_none());
    }
}
