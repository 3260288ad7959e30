//! Stateless rules: follow suit, trick resolution, scoring, validation.

use thiserror::Error;

use super::cards::{card_thirds, ItalianSuit, TressetteCard};
use super::state::{team_of, DealState, IncompleteDeal, LAST_TRICK_THIRDS, SEATS, TRICKS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("trick has {0} plays, not 4")]
pub struct IncompleteTrick(pub usize);

/// Cards of the led suit when the hand holds any; otherwise the whole hand.
pub fn legal_moves(hand: &[TressetteCard], led: Option<ItalianSuit>) -> Vec<TressetteCard> {
    match led {
        Some(suit) if hand.iter().any(|c| c.seed == suit) => {
            hand.iter().filter(|c| c.seed == suit).copied().collect()
        }
        _ => hand.to_vec(),
    }
}

/// Seat of the strongest card of the led suit. There are no trumps.
pub fn trick_winner(plays: &[(usize, TressetteCard)]) -> Result<usize, IncompleteTrick> {
    if plays.len() != SEATS {
        return Err(IncompleteTrick(plays.len()));
    }
    let led = plays[0].1.seed;
    let (seat, _) = plays
        .iter()
        .filter(|(_, c)| c.seed == led)
        .max_by_key(|(_, c)| c.strength())
        .expect("the leading card follows its own suit");
    Ok(*seat)
}

/// Thirds per team for a finished deal.
pub fn score_deal(deal: &DealState) -> Result<[u32; 2], IncompleteDeal> {
    if deal.tricks_played != TRICKS {
        return Err(IncompleteDeal {
            tricks: deal.tricks_played,
        });
    }
    let mut thirds = [0u32; 2];
    for (team, pile) in deal.captured.iter().enumerate() {
        thirds[team] = pile.iter().map(card_thirds).sum();
    }
    if let Some(w) = deal.last_trick_winner {
        thirds[team_of(w)] += LAST_TRICK_THIRDS;
    }
    Ok(thirds)
}

pub const OUT_OF_TURN: &str = "play out of turn";
pub const NOT_IN_HAND: &str = "card not in hand";
pub const REVOKE: &str = "revoke: did not follow the led suit";

/// `Err(description)` when `seat` playing `card` now is an anomaly.
pub fn validate_play(deal: &DealState, seat: usize, card: &TressetteCard) -> Result<(), String> {
    if seat >= SEATS || seat != deal.turn || deal.is_complete() {
        return Err(OUT_OF_TURN.into());
    }
    let hand = deal.hands[seat].cards();
    if !hand.contains(card) {
        return Err(NOT_IN_HAND.into());
    }
    if !legal_moves(hand, deal.led_suit()).contains(card) {
        return Err(REVOKE.into());
    }
    Ok(())
}
