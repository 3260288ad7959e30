use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cardgame::{Card, Deck, Hand, Seed, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItalianSuit {
    Denari,
    Coppe,
    Spade,
    Bastoni,
}

impl Seed for ItalianSuit {
    fn all() -> &'static [Self] {
        use ItalianSuit::*;
        &[Denari, Coppe, Spade, Bastoni]
    }
}

impl ItalianSuit {
    pub fn name(self) -> &'static str {
        match self {
            ItalianSuit::Denari => "denari",
            ItalianSuit::Coppe => "coppe",
            ItalianSuit::Spade => "spade",
            ItalianSuit::Bastoni => "bastoni",
        }
    }
}

/// Ranks strongest first: 3, 2, Ace, King, Knight (cavallo), Knave (fante),
/// then 7 down to 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TressetteRank {
    #[serde(rename = "3")]
    Three,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "A")]
    Ace,
    #[serde(rename = "K")]
    King,
    #[serde(rename = "C")]
    Knight,
    #[serde(rename = "F")]
    Knave,
    #[serde(rename = "7")]
    Seven,
    #[serde(rename = "6")]
    Six,
    #[serde(rename = "5")]
    Five,
    #[serde(rename = "4")]
    Four,
}

impl Value for TressetteRank {
    fn all() -> &'static [Self] {
        use TressetteRank::*;
        &[Three, Two, Ace, King, Knight, Knave, Seven, Six, Five, Four]
    }

    fn strength(self) -> u8 {
        use TressetteRank::*;
        match self {
            Three => 10,
            Two => 9,
            Ace => 8,
            King => 7,
            Knight => 6,
            Knave => 5,
            Seven => 4,
            Six => 3,
            Five => 2,
            Four => 1,
        }
    }
}

impl TressetteRank {
    /// Point value in thirds of a point.
    pub fn thirds(self) -> u32 {
        use TressetteRank::*;
        match self {
            Ace => 3,
            Three | Two | King | Knight | Knave => 1,
            Seven | Six | Five | Four => 0,
        }
    }

    pub fn symbol(self) -> &'static str {
        use TressetteRank::*;
        match self {
            Three => "3",
            Two => "2",
            Ace => "A",
            King => "K",
            Knight => "C",
            Knave => "F",
            Seven => "7",
            Six => "6",
            Five => "5",
            Four => "4",
        }
    }
}

pub type TressetteCard = Card<ItalianSuit, TressetteRank>;
pub type TressetteDeck = Deck<ItalianSuit, TressetteRank>;
pub type TressetteHand = Hand<ItalianSuit, TressetteRank>;

pub fn card(suit: ItalianSuit, rank: TressetteRank) -> TressetteCard {
    Card::new(suit, rank)
}

pub fn card_thirds(c: &TressetteCard) -> u32 {
    c.value.thirds()
}

/// The 40 cards: suits in declaration order, ranks strongest first.
pub fn new_deck() -> TressetteDeck {
    Deck::full()
}

/// `A denari`, `3 spade`, ...
pub struct Show<'a>(pub &'a TressetteCard);

impl fmt::Display for Show<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.0.value.symbol(), self.0.seed.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use ItalianSuit::*;
    use TressetteRank::*;

    #[test]
    fn forty_distinct_cards() {
        let deck = new_deck();
        assert_eq!(deck.len(), 40);
        let set: HashSet<_> = deck.cards().iter().collect();
        assert_eq!(set.len(), 40);
        assert_eq!(deck.cards().iter().filter(|c| **c == card(Denari, Three)).count(), 1);
        assert_eq!(deck.cards()[0], card(Denari, Three));
        assert_eq!(deck.cards()[39], card(Bastoni, Four));
    }

    #[test]
    fn deck_is_worth_32_thirds() {
        assert_eq!(new_deck().cards().iter().map(card_thirds).sum::<u32>(), 32);
    }

    #[test]
    fn strength_order() {
        let order: Vec<u8> = TressetteRank::all().iter().map(|r| r.strength()).collect();
        assert_eq!(order, (1..=10).rev().collect::<Vec<u8>>());
    }

    #[test]
    fn wire_encoding() {
        let c = card(Coppe, Knight);
        assert_eq!(serde_json::to_string(&c).unwrap(), r#"{"s":"coppe","r":"C"}"#);
        let back: TressetteCard = serde_json::from_str(r#"{"s":"bastoni","r":"A"}"#).unwrap();
        assert_eq!(back, card(Bastoni, Ace));
        assert_eq!(Show(&back).to_string(), "A bastoni");
        assert!(serde_json::from_str::<TressetteCard>(r#"{"s":"bastoni","r":"1"}"#).is_err());
    }
}
