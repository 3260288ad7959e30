use std::cmp::Ordering;
use std::fmt::Debug;
use std::hash::Hash;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// A game's suit tag.
pub trait Seed: Copy + Eq + Ord + Hash + Debug + Serialize + DeserializeOwned + Send + Sync + 'static {
    /// Every seed, in declaration order.
    fn all() -> &'static [Self];
}

/// A game's rank tag with its strength (higher wins; distinct per rank).
pub trait Value: Copy + Eq + Hash + Debug + Serialize + DeserializeOwned + Send + Sync + 'static {
    /// Every value, strongest first.
    fn all() -> &'static [Self];
    fn strength(self) -> u8;
}

/// Wire form: `{"s": seed, "r": value}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct Card<S: Seed, V: Value> {
    #[serde(rename = "s")]
    pub seed: S,
    #[serde(rename = "r")]
    pub value: V,
}

impl<S: Seed, V: Value> Card<S, V> {
    pub fn new(seed: S, value: V) -> Self {
        Card { seed, value }
    }

    pub fn strength(&self) -> u8 {
        self.value.strength()
    }
}

/// Cards compare by strength within a seed; across seeds they are unordered.
impl<S: Seed, V: Value> PartialOrd for Card<S, V> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        (self.seed == other.seed).then(|| self.strength().cmp(&other.strength()))
    }
}

/// The full set: seeds in declaration order, each with values strongest first.
pub fn full_set<S: Seed, V: Value>() -> Vec<Card<S, V>> {
    S::all()
        .iter()
        .flat_map(|&s| V::all().iter().map(move |&v| Card::new(s, v)))
        .collect()
}
