use thiserror::Error;

use super::card::{full_set, Card, Seed, Value};
use super::hand::Hand;
use super::rng::DeckRng;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DealError {
    #[error("dealing {needed} cards from a deck of {available}")]
    InsufficientCards { needed: usize, available: usize },
}

/// An ordered pile; index 0 is the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deck<S: Seed, V: Value> {
    cards: Vec<Card<S, V>>,
}

impl<S: Seed, V: Value> Deck<S, V> {
    /// The game's full set in canonical order.
    pub fn full() -> Self {
        Deck { cards: full_set() }
    }

    pub fn from_cards(cards: Vec<Card<S, V>>) -> Self {
        Deck { cards }
    }

    pub fn cards(&self) -> &[Card<S, V>] {
        &self.cards
    }

    pub fn len(&self) -> usize {
        self.cards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cards.is_empty()
    }

    /// Deterministic permutation for `seed`; see [`super::rng`].
    pub fn shuffle(&mut self, seed: u64) {
        DeckRng::new(seed).shuffle(&mut self.cards);
    }

    pub fn shuffled(mut self, seed: u64) -> Self {
        self.shuffle(seed);
        self
    }

    /// Deals one card at a time from the top, round robin: player 0 gets
    /// the top card, player 1 the next, and so on.
    pub fn deal(&mut self, players: usize, cards_each: usize) -> Result<Vec<Hand<S, V>>, DealError> {
        let needed = players * cards_each;
        if needed > self.cards.len() {
            return Err(DealError::InsufficientCards {
                needed,
                available: self.cards.len(),
            });
        }
        let mut hands: Vec<Hand<S, V>> = (0..players).map(|_| Hand::default()).collect();
        for (i, card) in self.cards.drain(..needed).enumerate() {
            hands[i % players].add(card);
        }
        Ok(hands)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use serde::{Deserialize, Serialize};

    #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
    pub enum Suit {
        A,
        B,
        C,
        D,
    }

    impl Seed for Suit {
        fn all() -> &'static [Self] {
            &[Suit::A, Suit::B, Suit::C, Suit::D]
        }
    }

    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
    pub struct Rank(pub u8);

    impl Value for Rank {
        fn all() -> &'static [Self] {
            &[Rank(10), Rank(9), Rank(8), Rank(7), Rank(6), Rank(5), Rank(4), Rank(3), Rank(2), Rank(1)]
        }
        fn strength(self) -> u8 {
            self.0
        }
    }

    type TestDeck = Deck<Suit, Rank>;

    fn sorted(cards: &[Card<Suit, Rank>]) -> Vec<(Suit, u8)> {
        let mut v: Vec<_> = cards.iter().map(|c| (c.seed, c.value.0)).collect();
        v.sort();
        v
    }

    #[test]
    fn four_by_ten_empties_the_deck() {
        let mut deck = TestDeck::full().shuffled(3);
        let hands = deck.deal(4, 10).unwrap();
        assert!(deck.is_empty());
        assert_eq!(hands.len(), 4);
        assert!(hands.iter().all(|h| h.len() == 10));
        let all: Vec<_> = hands.iter().flat_map(|h| h.cards().to_vec()).collect();
        assert_eq!(sorted(&all), sorted(&full_set()));
    }

    #[test]
    fn deal_is_round_robin_from_the_top() {
        let mut deck = TestDeck::full();
        let top: Vec<_> = deck.cards()[..8].to_vec();
        let hands = deck.deal(4, 2).unwrap();
        assert_eq!(hands[0].cards(), &[top[0], top[4]]);
        assert_eq!(hands[3].cards(), &[top[3], top[7]]);
        assert_eq!(deck.len(), 32);
    }

    #[test]
    fn five_by_ten_is_too_many() {
        let mut deck = TestDeck::full();
        assert_eq!(
            deck.deal(5, 10),
            Err(DealError::InsufficientCards { needed: 50, available: 40 })
        );
        assert_eq!(deck.len(), 40);
    }

    #[test]
    fn dealing_nothing_changes_nothing() {
        let mut deck = TestDeck::full().shuffled(9);
        let before = deck.clone();
        let hands = deck.deal(1, 0).unwrap();
        assert_eq!(deck, before);
        assert!(hands[0].is_empty());
    }

    #[test]
    fn shuffle_is_a_deterministic_permutation() {
        let a = TestDeck::full().shuffled(1);
        let b = TestDeck::full().shuffled(1);
        let c = TestDeck::full().shuffled(2);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(sorted(a.cards()), sorted(TestDeck::full().cards()));
    }

    #[test]
    fn cards_order_only_within_a_seed() {
        let hi = Card::new(Suit::A, Rank(9));
        let lo = Card::new(Suit::A, Rank(2));
        assert!(hi > lo);
        assert_eq!(hi.partial_cmp(&Card::new(Suit::B, Rank(2))), None);
    }
}
