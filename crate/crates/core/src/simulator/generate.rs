//! Scripted user simulation for the five booking tasks.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use sha2::{Digest, Sha256};

use super::patterns::{BotIntent, Field, PatternSet, Slot, UserIntent};
use crate::corpus::{Dialog, Turn, SILENCE};
use crate::error::{Error, Result};
use crate::kb::{party_size_word, ApiQuery, EntityType, KnowledgeBase, Restaurant, PARTY_SIZES, PRICES};

/// Probability that a proposed option is accepted (unless it is the last one).
pub const ACCEPT_PROB: f64 = 0.25;
/// Probability that a Task 5 dialog includes an update phase.
pub const TASK5_UPDATE_PROB: f64 = 0.5;

const MAX_RESAMPLES: usize = 10_000;

/// A generated dialog and the canonical signature of the scenario behind it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub task: u8,
    pub dialog: Dialog,
    pub signature: String,
}

/// Values of the four request fields, indexed by [`Field::index`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub values: [String; 4],
}

impl Request {
    pub fn get(&self, f: Field) -> &str {
        &self.values[f.index()]
    }

    pub fn query(&self) -> ApiQuery {
        ApiQuery {
            cuisine: self.get(Field::Cuisine).to_string(),
            location: self.get(Field::Location).to_string(),
            price: self.get(Field::Price).to_string(),
            party_size: crate::kb::parse_party_size(self.get(Field::PartySize)).unwrap_or(0),
        }
    }
}

/// Possible values for each request field under one KB.
struct Domain {
    values: [Vec<String>; 4],
}

impl Domain {
    fn new(kb: &KnowledgeBase) -> Domain {
        let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let parties: Vec<&str> = PARTY_SIZES.iter().filter_map(|&p| party_size_word(p)).collect();
        Domain {
            values: [
                kb.values(EntityType::Cuisine),
                kb.values(EntityType::Location),
                own(&parties),
                own(&PRICES),
            ],
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Request {
        Request {
            values: self.values.clone().map(|vs| vs.choose(rng).expect("non-empty domain").clone()),
        }
    }

    fn other_value<R: Rng + ?Sized>(&self, rng: &mut R, f: Field, current: &str) -> String {
        let options: Vec<&String> = self.values[f.index()].iter().filter(|v| *v != current).collect();
        match options.choose(rng) {
            Some(v) => (*v).clone(),
            None => current.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ask {
    Phone,
    Address,
    Both,
}

impl Ask {
    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Ask {
        let r: f64 = rng.random();
        if r < 0.25 {
            Ask::Phone
        } else if r < 0.5 {
            Ask::Address
        } else {
            Ask::Both
        }
    }
}

/// The random choices of a request phase, drawn before any text is rendered.
struct Plan {
    request: Request,
    /// Fields mentioned in the opening request, in the order they are spoken.
    revealed: Vec<Field>,
    updates: Vec<(Field, String)>,
}

impl Plan {
    fn sample<R: Rng + ?Sized>(rng: &mut R, domain: &Domain, max_updates: usize, update_prob: f64) -> Plan {
        let request = domain.sample(rng);
        let k = rng.random_range(0..=4);
        let mut fields = Field::ASK_ORDER.to_vec();
        fields.shuffle(rng);
        fields.truncate(k);
        let mut updates = Vec::new();
        if max_updates > 0 && rng.random_bool(update_prob) {
            let mut current = request.clone();
            for _ in 0..rng.random_range(1..=max_updates) {
                let f = Field::ASK_ORDER[rng.random_range(0..4)];
                let v = domain.other_value(rng, f, current.get(f));
                current.values[f.index()] = v.clone();
                updates.push((f, v));
            }
        }
        Plan {
            request,
            revealed: fields,
            updates,
        }
    }

    fn final_request(&self) -> Request {
        let mut r = self.request.clone();
        for (f, v) in &self.updates {
            r.values[f.index()] = v.clone();
        }
        r
    }

    fn canonical(&self) -> String {
        let mut revealed: Vec<usize> = self.revealed.iter().map(|f| f.index()).collect();
        revealed.sort_unstable();
        let updates: Vec<String> = self.updates.iter().map(|(f, v)| format!("{}={v}", f.index())).collect();
        format!(
            "request={} revealed={revealed:?} updates=[{}]",
            self.request.values.join(","),
            updates.join(",")
        )
    }
}

struct Script<'a, R: ?Sized> {
    rng: &'a mut R,
    patterns: &'a PatternSet,
    turns: Vec<Turn>,
}

impl<'a, R: Rng + ?Sized> Script<'a, R> {
    fn new(rng: &'a mut R, patterns: &'a PatternSet) -> Self {
        Script {
            rng,
            patterns,
            turns: Vec::new(),
        }
    }

    fn say(&mut self, user: UserIntent, slots: &[(Slot, &str)], bot: BotIntent, bot_slots: &[(Slot, &str)]) {
        let u = self.patterns.user(self.rng, user, slots);
        self.turns.push(Turn::user(u));
        self.turns.push(Turn::bot(self.patterns.bot(bot, bot_slots)));
    }

    fn silence(&mut self, bot: BotIntent, bot_slots: &[(Slot, &str)]) {
        self.turns.push(Turn::user(SILENCE));
        self.turns.push(Turn::bot(self.patterns.bot(bot, bot_slots)));
    }

    fn facts(&mut self, restaurants: &[&Restaurant]) {
        for r in restaurants {
            self.turns.extend(r.facts().into_iter().map(|f| Turn::api_result(f.to_string())));
        }
    }

    fn api_call(&mut self, request: &Request) {
        let slots: Vec<(Slot, &str)> = Field::ASK_ORDER.iter().map(|&f| (f.slot(), request.get(f))).collect();
        self.silence(BotIntent::ApiCall, &slots);
    }

    /// Greeting, request, slot questions, ending on "let me look into some options".
    fn request_phase(&mut self, plan: &Plan) {
        let req = &plan.request;
        self.say(UserIntent::Greet, &[], BotIntent::Greet, &[]);
        let fragments: Vec<(Field, &str)> = plan.revealed.iter().map(|&f| (f, req.get(f))).collect();
        let text = self.patterns.request(self.rng, &fragments);
        self.turns.push(Turn::user(text));
        self.turns.push(Turn::bot(self.patterns.bot(BotIntent::OnIt, &[])));
        let missing: Vec<Field> = Field::ASK_ORDER
            .into_iter()
            .filter(|f| !plan.revealed.contains(f))
            .collect();
        match missing.first() {
            None => self.silence(BotIntent::LookOptions, &[]),
            Some(&first) => {
                self.silence(BotIntent::ask(first), &[]);
                for (i, &f) in missing.iter().enumerate() {
                    let next = missing.get(i + 1).map_or(BotIntent::LookOptions, |&n| BotIntent::ask(n));
                    self.say(UserIntent::answer(f), &[(f.slot(), req.get(f))], next, &[]);
                }
            }
        }
        self.api_call(req);
    }

    fn update_phase(&mut self, plan: &Plan) {
        if plan.updates.is_empty() {
            return;
        }
        for (f, v) in &plan.updates {
            self.say(UserIntent::update(*f), &[(f.slot(), v)], BotIntent::AskUpdate, &[]);
        }
        self.say(UserIntent::NoUpdate, &[], BotIntent::LookOptions, &[]);
        self.api_call(&plan.final_request());
    }

    /// Lists options best-first until one is accepted; returns its index.
    fn option_phase(&mut self, options: &[&Restaurant]) -> usize {
        self.facts(options);
        self.silence(BotIntent::Propose, &[(Slot::Name, &options[0].name)]);
        for (j, r) in options.iter().enumerate() {
            let last = j + 1 == options.len();
            if last || self.rng.random_bool(ACCEPT_PROB) {
                self.say(UserIntent::Accept, &[], BotIntent::Reserve, &[]);
                return j;
            }
            self.say(UserIntent::Reject, &[], BotIntent::OtherOption, &[]);
            let next = &options[j + 1].name;
            debug_assert_ne!(next, &r.name);
            self.silence(BotIntent::Propose, &[(Slot::Name, next)]);
        }
        unreachable!("the last option is always accepted")
    }

    fn info_phase(&mut self, r: &Restaurant, ask: Ask) {
        let phone = [(Slot::Phone, r.phone.as_str())];
        let address = [(Slot::Address, r.address.as_str())];
        match ask {
            Ask::Phone => self.say(UserIntent::AskPhone, &[], BotIntent::GivePhone, &phone),
            Ask::Address => self.say(UserIntent::AskAddress, &[], BotIntent::GiveAddress, &address),
            Ask::Both => {
                self.say(UserIntent::AskBoth, &[], BotIntent::GivePhone, &phone);
                self.silence(BotIntent::GiveAddress, &address);
            }
        }
    }

    fn finish(self, task: u8, canonical: String) -> Generated {
        let digest = Sha256::digest(format!("task{task} {canonical}").as_bytes());
        Generated {
            task,
            dialog: Dialog::new(self.turns),
            signature: digest[..16].iter().map(|b| format!("{b:02x}")).collect(),
        }
    }
}

fn resample<R, F>(rng: &mut R, mut ok: F, mut draw: impl FnMut(&mut R) -> Plan) -> Result<Plan>
where
    R: Rng + ?Sized,
    F: FnMut(&Plan) -> bool,
{
    for _ in 0..MAX_RESAMPLES {
        let plan = draw(rng);
        if ok(&plan) {
            return Ok(plan);
        }
    }
    Err(Error::InvalidInput(
        "the knowledge base cannot satisfy the task's option-count requirement".into(),
    ))
}

/// Issuing API calls: the bot asks for missing fields, then calls the API.
pub fn gen_task1<R: Rng + ?Sized>(rng: &mut R, kb: &KnowledgeBase, patterns: &PatternSet) -> Result<Generated> {
    let plan = Plan::sample(rng, &Domain::new(kb), 0, 0.0);
    let mut s = Script::new(rng, patterns);
    s.request_phase(&plan);
    Ok(s.finish(1, plan.canonical()))
}

/// Updating API calls: one to four updates after the first call.
pub fn gen_task2<R: Rng + ?Sized>(rng: &mut R, kb: &KnowledgeBase, patterns: &PatternSet) -> Result<Generated> {
    let plan = Plan::sample(rng, &Domain::new(kb), 4, 1.0);
    let mut s = Script::new(rng, patterns);
    s.request_phase(&plan);
    s.update_phase(&plan);
    Ok(s.finish(2, plan.canonical()))
}

/// Displaying options: propose restaurants by rating until the user accepts.
pub fn gen_task3<R: Rng + ?Sized>(rng: &mut R, kb: &KnowledgeBase, patterns: &PatternSet) -> Result<Generated> {
    let domain = Domain::new(kb);
    let plan = resample(
        rng,
        |p| kb.matching(&p.request.query()).len() >= 3,
        |r| Plan::sample(r, &domain, 0, 0.0),
    )?;
    let options = kb.matching(&plan.request.query());
    let mut s = Script::new(rng, patterns);
    s.request_phase(&plan);
    let accepted = s.option_phase(&options);
    Ok(s.finish(3, format!("{} accepted={accepted}", plan.canonical())))
}

/// Providing extra information about an already chosen restaurant.
pub fn gen_task4<R: Rng + ?Sized>(rng: &mut R, kb: &KnowledgeBase, patterns: &PatternSet) -> Result<Generated> {
    let r = kb
        .restaurants
        .choose(rng)
        .ok_or_else(|| Error::InvalidInput("empty knowledge base".into()))?;
    let ask = Ask::sample(rng);
    let mut s = Script::new(rng, patterns);
    s.facts(&[r]);
    s.say(UserIntent::Greet, &[], BotIntent::Greet, &[]);
    s.say(UserIntent::BookAt, &[(Slot::Name, &r.name)], BotIntent::Reserve, &[]);
    s.info_phase(r, ask);
    Ok(s.finish(4, format!("restaurant={} ask={ask:?}", r.name)))
}

/// Full dialogs combining the four previous tasks.
pub fn gen_task5<R: Rng + ?Sized>(rng: &mut R, kb: &KnowledgeBase, patterns: &PatternSet) -> Result<Generated> {
    let domain = Domain::new(kb);
    let plan = resample(
        rng,
        |p| !kb.matching(&p.final_request().query()).is_empty(),
        |r| Plan::sample(r, &domain, 4, TASK5_UPDATE_PROB),
    )?;
    let options = kb.matching(&plan.final_request().query());
    let ask = Ask::sample(rng);
    let mut s = Script::new(rng, patterns);
    s.request_phase(&plan);
    s.update_phase(&plan);
    let accepted = s.option_phase(&options);
    s.info_phase(options[accepted], ask);
    s.say(UserIntent::Thanks, &[], BotIntent::AnythingElse, &[]);
    s.say(UserIntent::Close, &[], BotIntent::Welcome, &[]);
    Ok(s.finish(5, format!("{} accepted={accepted} ask={ask:?}", plan.canonical())))
}

pub fn gen_task<R: Rng + ?Sized>(
    task: u8,
    rng: &mut R,
    kb: &KnowledgeBase,
    patterns: &PatternSet,
) -> Result<Generated> {
    match task {
        1 => gen_task1(rng, kb, patterns),
        2 => gen_task2(rng, kb, patterns),
        3 => gen_task3(rng, kb, patterns),
        4 => gen_task4(rng, kb, patterns),
        5 => gen_task5(rng, kb, patterns),
        _ => Err(Error::InvalidInput(format!("task must be 1-5, got {task}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TurnKind;
    use crate::kb::{default_split, generate_kb, Fact};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kb() -> KnowledgeBase {
        let ((c, l), _) = default_split();
        generate_kb(&c, &l, 1).unwrap()
    }

    fn api_calls(d: &Dialog) -> Vec<&str> {
        d.turns
            .iter()
            .filter(|t| t.kind == TurnKind::ApiCall)
            .map(|t| t.text.as_str())
            .collect()
    }

    #[test]
    fn task1_with_everything_given_asks_nothing() {
        let kb = kb();
        let p = PatternSet::default_set();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seen_full = false;
        for _ in 0..200 {
            let g = gen_task1(&mut rng, &kb, &p).unwrap();
            g.dialog.validate().unwrap();
            let asks = g.dialog.turns.iter().filter(|t| t.text.starts_with("any preference")
                || t.text == "where should it be"
                || t.text.starts_with("how many people")
                || t.text.starts_with("which price")).count();
            if g.dialog.num_bot_turns() == 4 {
                seen_full = true;
                assert_eq!(asks, 0);
            }
            assert_eq!(g.dialog.num_bot_turns(), 4 + asks);
            assert!(g.dialog.turns.last().unwrap().text.starts_with("api_call "));
        }
        assert!(seen_full);
    }

    #[test]
    fn task2_final_call_uses_last_values() {
        let kb = kb();
        let p = PatternSet::default_set();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let domain = Domain::new(&kb);
            let mut probe = rng.clone();
            let plan = Plan::sample(&mut probe, &domain, 4, 1.0);
            let g = gen_task2(&mut rng, &kb, &p).unwrap();
            let calls = api_calls(&g.dialog);
            assert_eq!(calls.len(), 2);
            assert_eq!(calls[1], plan.final_request().query().to_string());
            assert!((1..=4).contains(&plan.updates.len()));
        }
    }

    #[test]
    fn task3_proposals_follow_rating_order() {
        let kb = kb();
        let p = PatternSet::default_set();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let g = gen_task3(&mut rng, &kb, &p).unwrap();
            let facts: Vec<Fact> = g
                .dialog
                .turns
                .iter()
                .filter(|t| t.kind == TurnKind::ApiResult)
                .map(|t| Fact::parse(&t.text).unwrap())
                .collect();
            assert!(facts.len() >= 21);
            let mut ranked: Vec<(u8, String)> = facts
                .iter()
                .filter(|f| f.relation == crate::kb::Relation::Rating)
                .map(|f| (f.value.parse().unwrap(), f.subject.clone()))
                .collect();
            ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
            let proposed: Vec<&str> = g
                .dialog
                .turns
                .iter()
                .filter_map(|t| t.text.strip_prefix("what do you think of this option: "))
                .collect();
            for (i, name) in proposed.iter().enumerate() {
                assert_eq!(*name, ranked[i].1);
            }
            assert_eq!(g.dialog.turns.last().unwrap().text, "great let me do the reservation");
        }
    }

    #[test]
    fn task4_ask_both_proportion() {
        let kb = kb();
        let p = PatternSet::default_set();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 10_000;
        let mut both = 0;
        for _ in 0..n {
            let g = gen_task4(&mut rng, &kb, &p).unwrap();
            let t = &g.dialog.turns;
            let phone_pos = t.iter().position(|x| x.is_bot() && x.text.ends_with("_phone"));
            let addr_pos = t.iter().position(|x| x.is_bot() && x.text.ends_with("_address"));
            if let (Some(a), Some(b)) = (phone_pos, addr_pos) {
                assert!(a < b);
                both += 1;
            }
        }
        let frac = both as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn task5_has_results_and_closing() {
        let kb = kb();
        let p = PatternSet::default_set();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let g = gen_task5(&mut rng, &kb, &p).unwrap();
            g.dialog.validate().unwrap();
            assert!(!api_calls(&g.dialog).is_empty());
            let results = g.dialog.turns.iter().filter(|t| t.kind == TurnKind::ApiResult).count();
            assert!(results >= 7);
            assert_eq!(g.dialog.turns.last().unwrap().text, "you're welcome");
        }
    }

    #[test]
    fn signatures_ignore_surface_wording_only() {
        let kb = kb();
        let p = PatternSet::default_set();
        let a = gen_task3(&mut ChaCha8Rng::seed_from_u64(1), &kb, &p).unwrap();
        let b = gen_task3(&mut ChaCha8Rng::seed_from_u64(1), &kb, &p).unwrap();
        assert_eq!(a, b);
        let c = gen_task3(&mut ChaCha8Rng::seed_from_u64(2), &kb, &p).unwrap();
        assert_ne!(a.signature, c.signature);
    }
}
