use thiserror::Error;

use super::card::{Card, Seed, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("card {0} is not in the hand")]
pub struct NotInHand(pub String);

/// The cards one player holds, in the order received.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hand<S: Seed, V: Value> {
    cards: Vec<Card<S, V>>,
}

impl<S: Seed, V: Value> Default for Hand<S, V> {
    fn default() -> Self {
        Hand { cards: Vec::new() }
    }
}

impl<S: Seed, V: Value> Hand<S, V> {
    pub fn from_cards(cards: Vec<Card<S, V>>) -> Self {
        Hand { cards }
    }

    pub fn add(&mut self, card: Card<S, V>) {
        self.cards.push(card);
    }

    pub fn remove(&mut self, card: &Card<S, V>) -> Result<(), NotInHand> {
        match self.cards.iter().position(|c| c == card) {
            Some(i) => {
                self.cards.remove(i);
                Ok(())
            }
            None => Err(NotInHand(format!("{card:?}"))),
        }
    }

    pub fn contains(&self, card: &Card<S, V>) -> bool {
        self.cards.contains(card)
    }

    pub fn has_seed(&self, seed: S) -> bool {
        self.cards.iter().any(|c| c.seed == seed)
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
}

/// A partnership. Seats are table positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Team {
    pub id: usize,
    pub seats: Vec<usize>,
    pub score: u32,
}

impl Team {
    pub fn new(id: usize, seats: Vec<usize>) -> Self {
        Team { id, seats, score: 0 }
    }

    pub fn has(&self, seat: usize) -> bool {
        self.seats.contains(&seat)
    }
}
