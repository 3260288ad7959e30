//! Tressette for four players in two partnerships.
//!
//! Rules as implemented:
//!
//! * 40-card Italian deck; ranks from strongest: 3, 2, A, K, C (knight),
//!   F (knave), 7, 6, 5, 4. No trumps; players must follow the led suit
//!   when they can.
//! * Seats 0..3 play in ascending order. Seats 0 and 2 form team 0, seats
//!   1 and 3 team 1. Seat 0 deals first and the deal passes to the next
//!   seat each hand. Cards are dealt one at a time starting with the seat
//!   after the dealer, who leads the first trick.
//! * Points are kept in thirds: an ace is 3 thirds; 3, 2, K, C, F are 1
//!   third each; the last trick earns 3 more. A deal is worth 35 thirds.
//!   Each team scores floor(thirds / 3) match points; leftover thirds are
//!   dropped, so every deal hands out exactly 11 points.
//! * The match ends after the deal in which a team reaches 21, unless
//!   both teams are level, in which case another deal is played.
//!
//! Shuffles use [`crate::cardgame::rng`] with the per-deal seed
//! [`deal_seed`].
//!
//! Game events (app event payloads, each with a `type` field):
//!
//! | type | audience | fields |
//! |------|----------|--------|
//! | `deal` | one seat | `hand`, `dealer`, `your_seat`, `deal` |
//! | `turn` | all | `seat`, `deadline` (move timeout in ms); `legal` only in the copy sent to the acting seat |
//! | `played` | all | `seat`, `card` |
//! | `trick_result` | all | `winner_seat`, `cards` (`[{seat, card}]`), `thirds` |
//! | `score` | all | `deal`, `teams` (`[{seats, match_points, deal_thirds, deal_points}]`) |
//! | `game_over` | all | `winner_team`, `teams`; or `aborted: true`, `reason`, `seat` |
//! | `anomaly` | all | `seat`, `description` |
//!
//! Cards travel as `{"s": "denari"|"coppe"|"spade"|"bastoni", "r": "3"|"2"|"A"|"K"|"C"|"F"|"7"|"6"|"5"|"4"}`.

mod bots;
mod cards;
mod game;
mod play;
pub mod rules;
mod state;

pub use bots::{lowest, Cheat, HostileBot, LowestCardBot};
pub use cards::{
    card, card_thirds, new_deck, ItalianSuit, Show, TressetteCard, TressetteDeck, TressetteHand, TressetteRank,
};
pub use game::{MatchOutcome, TressetteGame};
pub use play::{host_match, run_local_match, HostedMatch};
pub use state::{
    deal_seed, team_of, DealScore, DealState, IncompleteDeal, MatchState, TrickDone, CARDS_EACH, LAST_TRICK_THIRDS,
    SEATS, TARGET_POINTS, TRICKS,
};
