//! Scenario and label vocabulary shared by every module.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the four retrieval-timing criteria, or `Unspecified` for records
/// that do not belong to a criterion.
///
/// The derived ordering is the default cascade priority
/// (intent, knowledge, time, self).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Intent,
    Knowledge,
    Time,
    #[serde(rename = "self")]
    SelfKnowledge,
    #[default]
    Unspecified,
}

impl Scenario {
    /// The four criteria in default priority order.
    pub const CRITERIA: [Scenario; 4] = [
        Scenario::Intent,
        Scenario::Knowledge,
        Scenario::Time,
        Scenario::SelfKnowledge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Intent => "intent",
            Scenario::Knowledge => "knowledge",
            Scenario::Time => "time",
            Scenario::SelfKnowledge => "self",
            Scenario::Unspecified => "unspecified",
        }
    }

    /// Byte tag used by the binary feature format.
    pub fn to_byte(self) -> u8 {
        match self {
            Scenario::Intent => 0,
            Scenario::Knowledge => 1,
            Scenario::Time => 2,
            Scenario::SelfKnowledge => 3,
            Scenario::Unspecified => 255,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Scenario::Intent),
            1 => Some(Scenario::Knowledge),
            2 => Some(Scenario::Time),
            3 => Some(Scenario::SelfKnowledge),
            255 => Some(Scenario::Unspecified),
            _ => None,
        }
    }

    /// Name of the AR-Bench subtask that isolates this criterion.
    pub fn subtask_name(self) -> &'static str {
        match self {
            Scenario::Intent => "intent_aware",
            Scenario::Knowledge => "knowledge_aware",
            Scenario::Time => "time_aware",
            Scenario::SelfKnowledge => "self_aware",
            Scenario::Unspecified => "unspecified",
        }
    }

    /// Human-readable column title, as used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            Scenario::Intent => "Intent-aware",
            Scenario::Knowledge => "Knowledge-aware",
            Scenario::Time => "Time-aware",
            Scenario::SelfKnowledge => "Self-aware",
            Scenario::Unspecified => "Unspecified",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown scenario {0:?} (expected intent, knowledge, time or self)")]
pub struct UnknownScenario(pub String);

impl FromStr for Scenario {
    type Err = UnknownScenario;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "intent" | "intent_aware" => Ok(Scenario::Intent),
            "knowledge" | "knowledge_aware" => Ok(Scenario::Knowledge),
            "time" | "time_aware" => Ok(Scenario::Time),
            "self" | "self_aware" => Ok(Scenario::SelfKnowledge),
            "unspecified" => Ok(Scenario::Unspecified),
            other => Err(UnknownScenario(other.to_string())),
        }
    }
}

/// Binary retrieval decision. Class index 1 of every classifier is `Retrieve`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NoRetrieve,
    Retrieve,
}

impl Verdict {
    pub fn from_bool(retrieve: bool) -> Self {
        if retrieve {
            Verdict::Retrieve
        } else {
            Verdict::NoRetrieve
        }
    }

    pub fn is_retrieve(self) -> bool {
        self == Verdict::Retrieve
    }

    pub fn class_index(self) -> usize {
        match self {
            Verdict::NoRetrieve => 0,
            Verdict::Retrieve => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::NoRetrieve => "no_retrieve",
            Verdict::Retrieve => "retrieve",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Training label of a record. `Unlabeled` serializes as JSON `null`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Label {
    NoRetrieve,
    Retrieve,
    #[default]
    Unlabeled,
}

impl Label {
    pub fn verdict(self) -> Option<Verdict> {
        match self {
            Label::NoRetrieve => Some(Verdict::NoRetrieve),
            Label::Retrieve => Some(Verdict::Retrieve),
            Label::Unlabeled => None,
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Label::NoRetrieve => 0,
            Label::Retrieve => 1,
            Label::Unlabeled => 255,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Label::NoRetrieve),
            1 => Some(Label::Retrieve),
            255 => Some(Label::Unlabeled),
            _ => None,
        }
    }
}

impl From<Verdict> for Label {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::NoRetrieve => Label::NoRetrieve,
            Verdict::Retrieve => Label::Retrieve,
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.verdict() {
            Some(v) => v.serialize(s),
            None => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Option::<Verdict>::deserialize(d)?.map_or(Label::Unlabeled, Label::from))
    }
}
