use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A protocol layer or functional component a commit may touch.
///
/// The declaration order is the fixed feature-vector order: the nine
/// layers first, then the six components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Phy,
    Mac,
    Rlc,
    Pdcp,
    Rrc,
    Nas,
    Ngap,
    F1ap,
    E1ap,
    Memory,
    Threading,
    Radio,
    Scheduler,
    Timer,
    Queue,
}

pub const CATEGORY_COUNT: usize = 15;

impl Category {
    pub const ALL: [Category; CATEGORY_COUNT] = [
        Category::Phy,
        Category::Mac,
        Category::Rlc,
        Category::Pdcp,
        Category::Rrc,
        Category::Nas,
        Category::Ngap,
        Category::F1ap,
        Category::E1ap,
        Category::Memory,
        Category::Threading,
        Category::Radio,
        Category::Scheduler,
        Category::Timer,
        Category::Queue,
    ];

    pub const LAYERS: [Category; 9] = [
        Category::Phy,
        Category::Mac,
        Category::Rlc,
        Category::Pdcp,
        Category::Rrc,
        Category::Nas,
        Category::Ngap,
        Category::F1ap,
        Category::E1ap,
    ];

    pub const COMPONENTS: [Category; 6] = [
        Category::Memory,
        Category::Threading,
        Category::Radio,
        Category::Scheduler,
        Category::Timer,
        Category::Queue,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_layer(self) -> bool {
        self.index() < Self::LAYERS.len()
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Phy => "PHY",
            Category::Mac => "MAC",
            Category::Rlc => "RLC",
            Category::Pdcp => "PDCP",
            Category::Rrc => "RRC",
            Category::Nas => "NAS",
            Category::Ngap => "NGAP",
            Category::F1ap => "F1AP",
            Category::E1ap => "E1AP",
            Category::Memory => "memory",
            Category::Threading => "threading",
            Category::Radio => "radio",
            Category::Scheduler => "scheduler",
            Category::Timer => "timer",
            Category::Queue => "queue",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownCategory(pub String);

impl fmt::Display for UnknownCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown category `{}`", self.0)
    }
}

impl FromStr for Category {
    type Err = UnknownCategory;

    /// Layer names match case-insensitively, as do component names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Category::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| UnknownCategory(t.to_string()))
    }
}

impl Serialize for Category {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|e: UnknownCategory| serde::de::Error::custom(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeType {
    Bugfix,
    Optimization,
    Feature,
    Refactoring,
}

impl ChangeType {
    /// Also the tie-break priority, highest first.
    pub const ALL: [ChangeType; 4] = [
        ChangeType::Bugfix,
        ChangeType::Optimization,
        ChangeType::Feature,
        ChangeType::Refactoring,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChangeType::Bugfix => "bugfix",
            ChangeType::Optimization => "optimization",
            ChangeType::Feature => "feature",
            ChangeType::Refactoring => "refactoring",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for ChangeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        ChangeType::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| format!("unknown change type `{t}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    High,
    Medium,
    Low,
}

impl Confidence {
    pub const ALL: [Confidence; 3] = [Confidence::High, Confidence::Medium, Confidence::Low];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Strong,
    Medium,
    Weak,
}

impl Strength {
    pub fn weight(self) -> f64 {
        match self {
            Strength::Strong => 2.0,
            Strength::Medium => 1.0,
            Strength::Weak => 0.5,
        }
    }
}

impl FromStr for Strength {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "strong" => Ok(Strength::Strong),
            "medium" => Ok(Strength::Medium),
            "weak" => Ok(Strength::Weak),
            other => Err(format!("unknown strength `{other}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_order_and_sizes() {
        assert_eq!(Category::ALL.len(), 15);
        assert_eq!(Category::LAYERS.len() + Category::COMPONENTS.len(), CATEGORY_COUNT);
        for (i, c) in Category::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(c.name().parse::<Category>().unwrap(), *c);
        }
        assert!(Category::E1ap.is_layer());
        assert!(!Category::Memory.is_layer());
    }

    #[test]
    fn weights() {
        assert_eq!(Strength::Strong.weight(), 2.0);
        assert_eq!(Strength::Medium.weight(), 1.0);
        assert_eq!(Strength::Weak.weight(), 0.5);
    }
}
