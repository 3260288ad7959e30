use serde::Serialize;
use serde_json::{json, Value};

use super::cards::TressetteCard;
use super::rules;
use super::state::{DealScore, MatchState, SEATS};
use crate::cardgame::{Game, Outgoing, SeatDigest};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchOutcome {
    pub winner_team: usize,
    pub match_points: [u32; 2],
    pub deals: Vec<DealScore>,
}

/// Tressette for four players in two partnerships, as a [`Game`].
#[derive(Debug, Clone)]
pub struct TressetteGame {
    state: MatchState,
}

fn plays_json(plays: &[(usize, TressetteCard)]) -> Value {
    Value::Array(plays.iter().map(|(s, c)| json!({ "seat": s, "card": c })).collect())
}

impl TressetteGame {
    pub fn new(seed: u64) -> Self {
        TressetteGame {
            state: MatchState::new(seed),
        }
    }

    pub fn state(&self) -> &MatchState {
        &self.state
    }

    fn teams_json(&self) -> Value {
        Value::Array(
            self.state
                .teams
                .iter()
                .map(|t| json!({ "seats": t.seats, "match_points": t.score }))
                .collect(),
        )
    }

    fn deal_events(&self) -> Vec<Outgoing> {
        let d = &self.state.deal;
        (0..SEATS)
            .map(|seat| {
                Outgoing::only(
                    seat,
                    json!({
                        "type": "deal",
                        "hand": d.hands[seat].cards(),
                        "dealer": d.dealer,
                        "your_seat": seat,
                        "deal": self.state.deal_index,
                    }),
                )
            })
            .collect()
    }
}

impl Game for TressetteGame {
    type Move = TressetteCard;
    type Outcome = MatchOutcome;

    fn seats(&self) -> usize {
        SEATS
    }

    fn start(&mut self) -> Vec<Outgoing> {
        self.deal_events()
    }

    fn is_over(&self) -> bool {
        self.state.is_over()
    }

    fn next_turn(&self) -> usize {
        self.state.deal.turn
    }

    fn view(&self, seat: usize) -> Value {
        let d = &self.state.deal;
        json!({
            "your_seat": seat,
            "hand": d.hands[seat].cards(),
            "legal": d.legal_moves(seat),
            "trick": plays_json(&d.trick),
            "led_suit": d.led_suit(),
            "dealer": d.dealer,
            "leader": d.leader,
            "turn": d.turn,
            "tricks_played": d.tricks_played,
            "deal": self.state.deal_index,
            "match_points": self.state.points(),
        })
    }

    fn legal_moves(&self, seat: usize) -> Vec<TressetteCard> {
        self.state.deal.legal_moves(seat)
    }

    fn turn_events(&self, seat: usize, deadline_ms: u64) -> Vec<Outgoing> {
        vec![
            Outgoing::only(
                seat,
                json!({
                    "type": "turn",
                    "seat": seat,
                    "legal": self.legal_moves(seat),
                    "deadline": deadline_ms,
                }),
            ),
            Outgoing::all_but(seat, json!({ "type": "turn", "seat": seat, "deadline": deadline_ms })),
        ]
    }

    fn validate(&self, seat: usize, mv: &TressetteCard) -> Result<(), String> {
        rules::validate_play(&self.state.deal, seat, mv)
    }

    fn apply_move(&mut self, seat: usize, mv: TressetteCard) -> Vec<Outgoing> {
        let done = self
            .state
            .deal
            .play(seat, mv)
            .expect("the loop validates before applying");
        let mut out = vec![Outgoing::all(json!({ "type": "played", "seat": seat, "card": mv }))];
        let Some(trick) = done else { return out };
        out.push(Outgoing::all(json!({
            "type": "trick_result",
            "winner_seat": trick.winner,
            "cards": plays_json(&trick.plays),
            "thirds": trick.thirds,
        })));
        if !self.state.deal.is_complete() {
            return out;
        }
        let deal = self.state.deal_index;
        let scored = self.state.finish_deal().expect("complete deal");
        let teams: Vec<Value> = self
            .state
            .teams
            .iter()
            .enumerate()
            .map(|(i, t)| {
                json!({
                    "seats": t.seats,
                    "match_points": t.score,
                    "deal_thirds": scored.thirds[i],
                    "deal_points": scored.points[i],
                })
            })
            .collect();
        out.push(Outgoing::all(json!({ "type": "score", "deal": deal, "teams": teams })));
        match self.state.winner {
            Some(w) => out.push(Outgoing::all(json!({
                "type": "game_over",
                "winner_team": w,
                "teams": self.teams_json(),
            }))),
            None => out.extend(self.deal_events()),
        }
        out
    }

    fn outcome(&self) -> Option<MatchOutcome> {
        self.state.winner.map(|w| MatchOutcome {
            winner_team: w,
            match_points: self.state.points(),
            deals: self.state.history.clone(),
        })
    }

    fn digest(&self) -> SeatDigest {
        let d = &self.state.deal;
        SeatDigest {
            public: json!({
                "game": "tressette",
                "deal": self.state.deal_index,
                "dealer": d.dealer,
                "turn": d.turn,
                "trick": plays_json(&d.trick),
                "tricks_played": d.tricks_played,
                "teams": self.teams_json(),
            }),
            private: (0..SEATS)
                .map(|s| json!({ "your_seat": s, "hand": d.hands[s].cards() }))
                .collect(),
        }
    }

    fn check_invariants(&self) -> Result<(), String> {
        self.state.deal.check_conservation()
    }
}
