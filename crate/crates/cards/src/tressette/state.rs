use thiserror::Error;

use super::cards::{card_thirds, new_deck, ItalianSuit, TressetteCard, TressetteHand};
use super::rules;
use crate::cardgame::rng::splitmix64;
use crate::cardgame::{full_set, Team};

pub const SEATS: usize = 4;
pub const CARDS_EACH: usize = 10;
pub const TRICKS: usize = 10;
pub const LAST_TRICK_THIRDS: u32 = 3;
pub const TARGET_POINTS: u32 = 21;
const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Partners sit opposite: seats 0 and 2 are team 0, seats 1 and 3 team 1.
pub fn team_of(seat: usize) -> usize {
    seat % 2
}

/// Shuffle seed of deal `k` (0-based) of a match seeded with `seed`.
pub fn deal_seed(seed: u64, k: u64) -> u64 {
    splitmix64(seed.wrapping_add(k.wrapping_mul(GOLDEN)))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("scoring a deal after {tricks} of 10 tricks")]
pub struct IncompleteDeal {
    pub tricks: usize,
}

/// A finished trick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrickDone {
    pub winner: usize,
    pub plays: Vec<(usize, TressetteCard)>,
    /// Card thirds in the trick, plus the last-trick bonus on the tenth.
    pub thirds: u32,
}

/// One deal in progress.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DealState {
    pub dealer: usize,
    pub hands: Vec<TressetteHand>,
    /// Plays of the current trick in order, by seat.
    pub trick: Vec<(usize, TressetteCard)>,
    /// Captured cards per team.
    pub captured: [Vec<TressetteCard>; 2],
    pub leader: usize,
    pub turn: usize,
    pub tricks_played: usize,
    pub last_trick_winner: Option<usize>,
}

impl DealState {
    /// Shuffles with `shuffle_seed` and deals ten cards each, one at a time,
    /// starting with the seat after the dealer, who also leads.
    pub fn deal(dealer: usize, shuffle_seed: u64) -> DealState {
        let mut deck = new_deck().shuffled(shuffle_seed);
        let dealt = deck.deal(SEATS, CARDS_EACH).expect("40 cards for 4 x 10");
        let mut hands = vec![TressetteHand::default(); SEATS];
        for (i, hand) in dealt.into_iter().enumerate() {
            hands[(dealer + 1 + i) % SEATS] = hand;
        }
        DealState::from_hands(dealer, hands)
    }

    pub fn from_hands(dealer: usize, hands: Vec<TressetteHand>) -> DealState {
        let leader = (dealer + 1) % SEATS;
        DealState {
            dealer,
            hands,
            trick: Vec::new(),
            captured: [Vec::new(), Vec::new()],
            leader,
            turn: leader,
            tricks_played: 0,
            last_trick_winner: None,
        }
    }

    pub fn led_suit(&self) -> Option<ItalianSuit> {
        self.trick.first().map(|(_, c)| c.seed)
    }

    pub fn is_complete(&self) -> bool {
        self.tricks_played == TRICKS
    }

    /// Legal cards for `seat`; empty when it is not that seat's turn.
    pub fn legal_moves(&self, seat: usize) -> Vec<TressetteCard> {
        if seat != self.turn || self.is_complete() {
            return Vec::new();
        }
        rules::legal_moves(self.hands[seat].cards(), self.led_suit())
    }

    /// Validates and applies one play. Returns the finished trick when this
    /// play completed one.
    pub fn play(&mut self, seat: usize, card: TressetteCard) -> Result<Option<TrickDone>, String> {
        rules::validate_play(self, seat, &card)?;
        self.hands[seat].remove(&card).map_err(|e| e.to_string())?;
        self.trick.push((seat, card));
        if self.trick.len() < SEATS {
            self.turn = (seat + 1) % SEATS;
            return Ok(None);
        }
        let plays = std::mem::take(&mut self.trick);
        let winner = rules::trick_winner(&plays).expect("four plays");
        self.tricks_played += 1;
        let mut thirds: u32 = plays.iter().map(|(_, c)| card_thirds(c)).sum();
        if self.is_complete() {
            thirds += LAST_TRICK_THIRDS;
        }
        self.captured[team_of(winner)].extend(plays.iter().map(|(_, c)| *c));
        self.last_trick_winner = Some(winner);
        self.leader = winner;
        self.turn = winner;
        Ok(Some(TrickDone { winner, plays, thirds }))
    }

    /// Hands, the open trick and the captured piles together hold exactly
    /// the 40 cards.
    pub fn check_conservation(&self) -> Result<(), String> {
        let mut all: Vec<TressetteCard> = self.hands.iter().flat_map(|h| h.cards().iter().copied()).collect();
        all.extend(self.trick.iter().map(|(_, c)| *c));
        all.extend(self.captured.iter().flatten().copied());
        let key = |c: &TressetteCard| (c.seed, c.strength());
        all.sort_by_key(key);
        let mut want = full_set::<ItalianSuit, _>();
        want.sort_by_key(key);
        if all == want {
            Ok(())
        } else {
            Err(format!("deal holds {} cards, not the 40-card set", all.len()))
        }
    }

    /// Thirds per team: captured card thirds plus 3 for the last trick.
    pub fn score(&self) -> Result<[u32; 2], IncompleteDeal> {
        rules::score_deal(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct DealScore {
    pub dealer: usize,
    pub thirds: [u32; 2],
    pub points: [u32; 2],
}

/// A partnership match to 21.
#[derive(Debug, Clone)]
pub struct MatchState {
    pub seed: u64,
    pub teams: [Team; 2],
    /// 0-based index of the current deal.
    pub deal_index: u64,
    pub deal: DealState,
    pub history: Vec<DealScore>,
    pub winner: Option<usize>,
}

impl MatchState {
    /// Seat 0 deals first.
    pub fn new(seed: u64) -> MatchState {
        MatchState {
            seed,
            teams: [Team::new(0, vec![0, 2]), Team::new(1, vec![1, 3])],
            deal_index: 0,
            deal: DealState::deal(0, deal_seed(seed, 0)),
            history: Vec::new(),
            winner: None,
        }
    }

    pub fn points(&self) -> [u32; 2] {
        [self.teams[0].score, self.teams[1].score]
    }

    pub fn is_over(&self) -> bool {
        self.winner.is_some()
    }

    /// Scores the finished deal. The match ends when a team has reached 21
    /// and the scores differ; otherwise the next dealer deals.
    pub fn finish_deal(&mut self) -> Result<DealScore, IncompleteDeal> {
        let thirds = self.deal.score()?;
        let points = [thirds[0] / 3, thirds[1] / 3];
        for (team, p) in self.teams.iter_mut().zip(points) {
            team.score += p;
        }
        let scored = DealScore {
            dealer: self.deal.dealer,
            thirds,
            points,
        };
        self.history.push(scored);
        let [a, b] = self.points();
        if (a >= TARGET_POINTS || b >= TARGET_POINTS) && a != b {
            self.winner = Some(if a > b { 0 } else { 1 });
        } else {
            self.deal_index += 1;
            let dealer = (self.deal.dealer + 1) % SEATS;
            self.deal = DealState::deal(dealer, deal_seed(self.seed, self.deal_index));
        }
        Ok(scored)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_deal_seeds() {
        assert_eq!(deal_seed(7, 0), 0x63cb_e1e4_5932_0dd7);
        assert_eq!(deal_seed(7, 1), 0x044c_3cd7_f43c_661c);
        assert_eq!(deal_seed(7, 2), 0xe698_4080_bab1_2a02);
    }

    #[test]
    fn deal_starts_after_the_dealer() {
        let d = DealState::deal(2, 11);
        assert_eq!(d.leader, 3);
        assert_eq!(d.turn, 3);
        let top = new_deck().shuffled(11).cards()[0];
        assert_eq!(d.hands[3].cards()[0], top);
        assert!(d.hands.iter().all(|h| h.len() == 10));
        d.check_conservation().unwrap();
    }

    #[test]
    fn scoring_before_the_end_fails() {
        let d = DealState::deal(0, 1);
        assert_eq!(d.score(), Err(IncompleteDeal { tricks: 0 }));
    }

    #[test]
    fn lowest_legal_playout_scores_35() {
        let mut d = DealState::deal(0, 5);
        while !d.is_complete() {
            let seat = d.turn;
            let c = d.legal_moves(seat)[0];
            d.play(seat, c).unwrap();
            d.check_conservation().unwrap();
        }
        let [a, b] = d.score().unwrap();
        assert_eq!(a + b, 35);
        assert_eq!(a / 3 + b / 3, 11);
    }
}
