//! Restaurant knowledge base: generation, fact storage and API-call queries.
//!
//! Every restaurant is one cell of the Cartesian product
//! cuisine × location × price × rating. Its party size is drawn from a seeded
//! generator, and its phone and address are derived from its name. The value
//! namespaces of the seven entity types are disjoint: ratings are rendered as
//! digits and party sizes as number words.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PRICES: [&str; 3] = ["cheap", "moderate", "expensive"];
pub const RATINGS: std::ops::RangeInclusive<u8> = 1..=8;
pub const PARTY_SIZES: [u8; 4] = [2, 4, 6, 8];

pub const DEFAULT_CUISINES: [&str; 10] = [
    "british",
    "cantonese",
    "french",
    "indian",
    "italian",
    "spanish",
    "thai",
    "vietnamese",
    "korean",
    "japanese",
];

pub const DEFAULT_LOCATIONS: [&str; 10] = [
    "london", "madrid", "paris", "rome", "tokyo", "bombay", "hanoi", "seoul", "bangkok", "beijing",
];

/// The seven KB entity types. Each one gets a match-type feature token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    Cuisine,
    Location,
    Price,
    Rating,
    PartySize,
    Phone,
    Address,
}

impl EntityType {
    pub const ALL: [EntityType; 7] = [
        EntityType::Cuisine,
        EntityType::Location,
        EntityType::Price,
        EntityType::Rating,
        EntityType::PartySize,
        EntityType::Phone,
        EntityType::Address,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Cuisine => "cuisine",
            EntityType::Location => "location",
            EntityType::Price => "price",
            EntityType::Rating => "rating",
            EntityType::PartySize => "party_size",
            EntityType::Phone => "phone",
            EntityType::Address => "address",
        }
    }

    pub fn relation(self) -> Relation {
        match self {
            EntityType::Cuisine => Relation::Cuisine,
            EntityType::Location => Relation::Location,
            EntityType::Price => Relation::Price,
            EntityType::Rating => Relation::Rating,
            EntityType::PartySize => Relation::Number,
            EntityType::Phone => Relation::Phone,
            EntityType::Address => Relation::Address,
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Phone,
    Address,
    Cuisine,
    Location,
    Number,
    Price,
    Rating,
}

impl Relation {
    /// Order in which a restaurant's facts are listed.
    pub const ORDER: [Relation; 7] = [
        Relation::Phone,
        Relation::Address,
        Relation::Cuisine,
        Relation::Location,
        Relation::Number,
        Relation::Price,
        Relation::Rating,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Phone => "r_phone",
            Relation::Address => "r_address",
            Relation::Cuisine => "r_cuisine",
            Relation::Location => "r_location",
            Relation::Number => "r_number",
            Relation::Price => "r_price",
            Relation::Rating => "r_rating",
        }
    }

    pub fn parse(s: &str) -> Option<Relation> {
        Relation::ORDER.iter().copied().find(|r| r.as_str() == s)
    }

    pub fn entity_type(self) -> EntityType {
        match self {
            Relation::Phone => EntityType::Phone,
            Relation::Address => EntityType::Address,
            Relation::Cuisine => EntityType::Cuisine,
            Relation::Location => EntityType::Location,
            Relation::Number => EntityType::PartySize,
            Relation::Price => EntityType::Price,
            Relation::Rating => EntityType::Rating,
        }
    }
}

/// Party sizes are spelled out so they never collide with rating digits.
pub fn party_size_word(size: u8) -> Option<&'static str> {
    match size {
        2 => Some("two"),
        4 => Some("four"),
        6 => Some("six"),
        8 => Some("eight"),
        _ => None,
    }
}

pub fn parse_party_size(word: &str) -> Option<u8> {
    match word {
        "two" => Some(2),
        "four" => Some(4),
        "six" => Some(6),
        "eight" => Some(8),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Restaurant {
    pub name: String,
    pub cuisine: String,
    pub location: String,
    pub price: String,
    pub rating: u8,
    pub party_size: u8,
    pub phone: String,
    pub address: String,
}

impl Restaurant {
    pub fn new(cuisine: &str, location: &str, price: &str, rating: u8, party_size: u8) -> Self {
        let name = format!("resto_{location}_{price}_{cuisine}_{rating}stars");
        Restaurant {
            phone: format!("{name}_phone"),
            address: format!("{name}_address"),
            name,
            cuisine: cuisine.to_string(),
            location: location.to_string(),
            price: price.to_string(),
            rating,
            party_size,
        }
    }

    pub fn value(&self, relation: Relation) -> String {
        match relation {
            Relation::Phone => self.phone.clone(),
            Relation::Address => self.address.clone(),
            Relation::Cuisine => self.cuisine.clone(),
            Relation::Location => self.location.clone(),
            Relation::Number => party_size_word(self.party_size).unwrap_or("?").to_string(),
            Relation::Price => self.price.clone(),
            Relation::Rating => self.rating.to_string(),
        }
    }

    /// The seven facts of this restaurant, in listing order.
    pub fn facts(&self) -> Vec<Fact> {
        Relation::ORDER
            .iter()
            .map(|&relation| Fact {
                subject: self.name.clone(),
                relation,
                value: self.value(relation),
            })
            .collect()
    }

    pub fn matches(&self, q: &ApiQuery) -> bool {
        self.cuisine == q.cuisine
            && self.location == q.location
            && self.price == q.price
            && self.party_size == q.party_size
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub subject: String,
    pub relation: Relation,
    pub value: String,
}

impl Fact {
    pub fn parse(line: &str) -> Option<Fact> {
        let mut parts = line.split_whitespace();
        let subject = parts.next()?;
        let relation = Relation::parse(parts.next()?)?;
        let value = parts.next()?;
        if parts.next().is_some() {
            return None;
        }
        Some(Fact {
            subject: subject.to_string(),
            relation,
            value: value.to_string(),
        })
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.subject, self.relation.as_str(), self.value)
    }
}

/// A fully specified API call.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ApiQuery {
    pub cuisine: String,
    pub location: String,
    pub price: String,
    pub party_size: u8,
}

impl ApiQuery {
    /// Parses `api_call <cuisine> <location> <party_size> <price>`.
    pub fn parse(text: &str) -> Option<ApiQuery> {
        let parts: Vec<&str> = text.split_whitespace().collect();
        match parts.as_slice() {
            ["api_call", cuisine, location, party, price] => Some(ApiQuery {
                cuisine: cuisine.to_string(),
                location: location.to_string(),
                price: price.to_string(),
                party_size: parse_party_size(party)?,
            }),
            _ => None,
        }
    }
}

impl fmt::Display for ApiQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "api_call {} {} {} {}",
            self.cuisine,
            self.location,
            party_size_word(self.party_size).unwrap_or("?"),
            self.price
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub restaurants: Vec<Restaurant>,
    pub entity_index: HashMap<String, EntityType>,
}

fn valid_entity_word(word: &str) -> bool {
    !word.is_empty()
        && word
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn check_list(kind: &str, values: &[String]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidInput(format!("{kind} list is empty")));
    }
    let mut seen = BTreeSet::new();
    for v in values {
        if !valid_entity_word(v) {
            return Err(Error::InvalidInput(format!(
                "{kind} `{v}` must be a lowercase single token"
            )));
        }
        if !seen.insert(v.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate {kind} `{v}`")));
        }
    }
    Ok(())
}

/// Builds one restaurant per (cuisine, location, price, rating) cell.
///
/// Party sizes are drawn i.i.d. uniform over {2, 4, 6, 8} in cell order, so the
/// result is a pure function of the inputs.
pub fn generate_kb(cuisines: &[String], locations: &[String], seed: u64) -> Result<KnowledgeBase> {
    check_list("cuisine", cuisines)?;
    check_list("location", locations)?;
    if let Some(shared) = cuisines.iter().find(|c| locations.contains(c)) {
        return Err(Error::InvalidInput(format!(
            "`{shared}` is both a cuisine and a location"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut restaurants = Vec::with_capacity(cuisines.len() * locations.len() * 24);
    for cuisine in cuisines {
        for location in locations {
            for price in PRICES {
                for rating in RATINGS {
                    let party_size = PARTY_SIZES[rng.random_range(0..PARTY_SIZES.len())];
                    restaurants.push(Restaurant::new(cuisine, location, price, rating, party_size));
                }
            }
        }
    }
    Ok(KnowledgeBase::from_restaurants(restaurants))
}

impl KnowledgeBase {
    pub fn from_restaurants(restaurants: Vec<Restaurant>) -> Self {
        let mut entity_index = HashMap::new();
        for r in &restaurants {
            for relation in Relation::ORDER {
                entity_index.insert(r.value(relation), relation.entity_type());
            }
        }
        KnowledgeBase {
            restaurants,
            entity_index,
        }
    }

    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        self.restaurants.iter().flat_map(|r| r.facts())
    }

    pub fn num_facts(&self) -> usize {
        self.restaurants.len() * Relation::ORDER.len()
    }

    pub fn restaurant(&self, name: &str) -> Option<&Restaurant> {
        self.restaurants.iter().find(|r| r.name == name)
    }

    /// Distinct values of one attribute, in first-appearance order.
    pub fn values(&self, ty: EntityType) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for r in &self.restaurants {
            let v = r.value(ty.relation());
            if seen.insert(v.clone()) {
                out.push(v);
            }
        }
        out
    }

    /// Restaurants matching all four query fields, best rating first (ties by name).
    pub fn matching(&self, q: &ApiQuery) -> Vec<&Restaurant> {
        let mut hits: Vec<&Restaurant> = self.restaurants.iter().filter(|r| r.matches(q)).collect();
        hits.sort_by(|a, b| b.rating.cmp(&a.rating).then_with(|| a.name.cmp(&b.name)));
        hits
    }

    /// All facts of every matching restaurant, grouped per restaurant.
    pub fn query(&self, q: &ApiQuery) -> Vec<Fact> {
        self.matching(q).into_iter().flat_map(|r| r.facts()).collect()
    }

    pub fn entity_type_of(&self, word: &str) -> Option<EntityType> {
        self.entity_index.get(word).copied()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        for fact in self.facts() {
            writeln!(out, "{fact}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<KnowledgeBase> {
        let text = fs::read_to_string(path)?;
        let mut restaurants: Vec<Restaurant> = Vec::new();
        let mut current: HashMap<Relation, String> = HashMap::new();
        let mut subject: Option<String> = None;
        let flush = |subject: &Option<String>,
                     current: &mut HashMap<Relation, String>,
                     restaurants: &mut Vec<Restaurant>,
                     line: usize|
         -> Result<()> {
            let Some(name) = subject else { return Ok(()) };
            let get = |r: Relation| {
                current
                    .get(&r)
                    .cloned()
                    .ok_or_else(|| Error::parse(path, line, format!("{name} lacks {}", r.as_str())))
            };
            let rating = get(Relation::Rating)?
                .parse::<u8>()
                .map_err(|_| Error::parse(path, line, "rating is not an integer"))?;
            let party_size = parse_party_size(&get(Relation::Number)?)
                .ok_or_else(|| Error::parse(path, line, "unknown party size word"))?;
            let r = Restaurant {
                name: name.clone(),
                cuisine: get(Relation::Cuisine)?,
                location: get(Relation::Location)?,
                price: get(Relation::Price)?,
                rating,
                party_size,
                phone: get(Relation::Phone)?,
                address: get(Relation::Address)?,
            };
            restaurants.push(r);
            current.clear();
            Ok(())
        };
        let mut last_line = 0;
        for (i, line) in text.lines().enumerate() {
            last_line = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fact = Fact::parse(line)
                .ok_or_else(|| Error::parse(path, i + 1, "expected `<name> <relation> <value>`"))?;
            if subject.as_deref() != Some(fact.subject.as_str()) {
                flush(&subject, &mut current, &mut restaurants, i + 1)?;
                subject = Some(fact.subject.clone());
            }
            current.insert(fact.relation, fact.value);
        }
        flush(&subject, &mut current, &mut restaurants, last_line)?;
        Ok(KnowledgeBase::from_restaurants(restaurants))
    }
}

/// Word → entity type lookup across several KBs (the plain and the OOV one).
#[derive(Debug, Clone, Default)]
pub struct EntityIndex {
    types: HashMap<String, EntityType>,
    ids: HashMap<String, u32>,
    words: Vec<String>,
}

impl EntityIndex {
    pub fn new(kbs: &[&KnowledgeBase]) -> Result<EntityIndex> {
        let mut index = EntityIndex::default();
        for kb in kbs {
            let mut entries: Vec<(&String, &EntityType)> = kb.entity_index.iter().collect();
            entries.sort();
            for (word, &ty) in entries {
                match index.types.get(word) {
                    Some(&prev) if prev != ty => {
                        return Err(Error::InvalidInput(format!(
                            "`{word}` is both a {prev} and a {ty}"
                        )))
                    }
                    Some(_) => {}
                    None => {
                        index.ids.insert(word.clone(), index.words.len() as u32);
                        index.words.push(word.clone());
                        index.types.insert(word.clone(), ty);
                    }
                }
            }
        }
        Ok(index)
    }

    pub fn entity_type_of(&self, word: &str) -> Option<EntityType> {
        self.types.get(word).copied()
    }

    /// Dense id of an entity word, for fast set membership.
    pub fn id_of(&self, word: &str) -> Option<u32> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn type_of_id(&self, id: u32) -> EntityType {
        self.types[&self.words[id as usize]]
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Convenience lookup over a list of KBs without building an index.
pub fn entity_type_of(kbs: &[&KnowledgeBase], word: &str) -> Option<EntityType> {
    kbs.iter().find_map(|kb| kb.entity_type_of(word))
}

/// The default (plain, OOV) entity lists: first half of each list vs second half.
pub fn default_split() -> ((Vec<String>, Vec<String>), (Vec<String>, Vec<String>)) {
    let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    (
        (own(&DEFAULT_CUISINES[..5]), own(&DEFAULT_LOCATIONS[..5])),
        (own(&DEFAULT_CUISINES[5..]), own(&DEFAULT_LOCATIONS[5..])),
    )
}
