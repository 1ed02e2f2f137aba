use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::kg::{EntityId, KnowledgeGraph, RelationId};

/// Opaque 64-bit handle for an entity or relation in the shared embedding
/// tables. Serialized as 16 lowercase hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Token(pub u64);

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for Token {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 16 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(format!("malformed token {s:?}"));
        }
        u64::from_str_radix(s, 16)
            .map(Token)
            .map_err(|e| e.to_string())
    }
}

impl Serialize for Token {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy)]
enum Namespace {
    Entity,
    Relation,
}

/// Party-private mapping from surface names to opaque tokens.
///
/// Tokens are a keyed hash of `(salt, name)`. Both parties of a duel use the
/// same session salt so that an entity known to both lands on the same
/// embedding row; the salt itself never leaves the parties.
#[derive(Debug, Clone)]
pub struct PartyVocabulary {
    salt: Vec<u8>,
    entity_tokens: Vec<Token>,
    relation_tokens: Vec<Token>,
    entity_by_name: HashMap<String, Token>,
    relation_by_name: HashMap<String, Token>,
}

impl PartyVocabulary {
    pub fn new(kg: &KnowledgeGraph, salt: &[u8]) -> Self {
        let entity_tokens = assign(salt, Namespace::Entity, kg.entity_names());
        let relation_tokens = assign(salt, Namespace::Relation, kg.relation_names());
        let entity_by_name = kg
            .entity_names()
            .iter()
            .cloned()
            .zip(entity_tokens.iter().copied())
            .collect();
        let relation_by_name = kg
            .relation_names()
            .iter()
            .cloned()
            .zip(relation_tokens.iter().copied())
            .collect();
        Self {
            salt: salt.to_vec(),
            entity_tokens,
            relation_tokens,
            entity_by_name,
            relation_by_name,
        }
    }

    pub fn salt(&self) -> &[u8] {
        &self.salt
    }

    pub fn entity(&self, e: EntityId) -> Token {
        self.entity_tokens[e.index()]
    }

    pub fn relation(&self, r: RelationId) -> Token {
        self.relation_tokens[r.index()]
    }

    pub fn entity_by_name(&self, name: &str) -> Option<Token> {
        self.entity_by_name.get(name).copied()
    }

    pub fn relation_by_name(&self, name: &str) -> Option<Token> {
        self.relation_by_name.get(name).copied()
    }

    pub fn entity_tokens(&self) -> &[Token] {
        &self.entity_tokens
    }

    pub fn relation_tokens(&self) -> &[Token] {
        &self.relation_tokens
    }
}

fn assign(salt: &[u8], ns: Namespace, names: &[String]) -> Vec<Token> {
    let mut taken = HashSet::with_capacity(names.len());
    names
        .iter()
        .map(|name| {
            let mut attempt = 0u32;
            loop {
                let t = keyed_hash(salt, ns, attempt, name);
                if taken.insert(t) {
                    if attempt > 0 {
                        log::debug!("token collision resolved after {attempt} re-salts");
                    }
                    return t;
                }
                attempt += 1;
            }
        })
        .collect()
}

fn keyed_hash(salt: &[u8], ns: Namespace, attempt: u32, name: &str) -> Token {
    let mut h = Sha256::new();
    h.update(match ns {
        Namespace::Entity => b"E",
        Namespace::Relation => b"R",
    });
    h.update((salt.len() as u64).to_le_bytes());
    h.update(salt);
    h.update(attempt.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    Token(u64::from_le_bytes(head))
}
