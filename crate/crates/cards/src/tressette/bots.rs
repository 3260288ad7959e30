use async_trait::async_trait;
use serde_json::{json, Value};

use super::cards::{new_deck, ItalianSuit, TressetteCard};
use crate::cardgame::LocalPlayer;

fn cards_at(view: &Value, key: &str) -> Vec<TressetteCard> {
    view.get(key)
        .cloned()
        .and_then(|v| serde_json::from_value(v).ok())
        .unwrap_or_default()
}

/// Lowest-strength card among `cards`, ties broken by suit order.
pub fn lowest(cards: &[TressetteCard]) -> Option<TressetteCard> {
    cards.iter().copied().min_by_key(|c| (c.strength(), c.seed))
}

/// The baseline bot: always plays its weakest legal card.
#[derive(Debug, Clone, Default)]
pub struct LowestCardBot;

impl LowestCardBot {
    pub fn choose(view: &Value) -> Value {
        let mut legal = cards_at(view, "legal");
        if legal.is_empty() {
            legal = cards_at(view, "hand");
        }
        lowest(&legal).map_or(Value::Null, |c| json!(c))
    }
}

#[async_trait]
impl LocalPlayer for LowestCardBot {
    async fn choose_move(&mut self, view: &Value) -> Value {
        Self::choose(view)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cheat {
    /// Plays off-suit while holding the led suit.
    Revoke,
    /// Plays a card it was never dealt.
    ForeignCard,
}

/// A scripted dishonest client. It plays like [`LowestCardBot`] until it
/// gets a chance to cheat, then cheats once.
#[derive(Debug, Clone)]
pub struct HostileBot {
    pub cheat: Cheat,
    pub cheated: bool,
}

impl HostileBot {
    pub fn new(cheat: Cheat) -> Self {
        HostileBot { cheat, cheated: false }
    }

    fn cheat_move(&self, view: &Value) -> Option<TressetteCard> {
        let hand = cards_at(view, "hand");
        match self.cheat {
            Cheat::ForeignCard => new_deck().cards().iter().copied().find(|c| !hand.contains(c)),
            Cheat::Revoke => {
                let led: ItalianSuit = serde_json::from_value(view.get("led_suit")?.clone()).ok()?;
                if !hand.iter().any(|c| c.seed == led) {
                    return None;
                }
                hand.iter().copied().find(|c| c.seed != led)
            }
        }
    }
}

#[async_trait]
impl LocalPlayer for HostileBot {
    async fn choose_move(&mut self, view: &Value) -> Value {
        if !self.cheated {
            if let Some(c) = self.cheat_move(view) {
                self.cheated = true;
                return json!(c);
            }
        }
        LowestCardBot::choose(view)
    }
}
