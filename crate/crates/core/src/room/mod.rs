//! Rooms: registration, event fan-out and reconnectable sessions.
//!
//! A [`ServerRoom`] owns all participant state inside one event-loop task.
//! Clients reach it through any transport [`Channel`](crate::transport::Channel)
//! and talk to it through a [`ClientRoom`] proxy.
//!
//! Participant lifecycle:
//!
//! ```text
//! Joined --drop--> Disconnected --rejoin--> Joined
//! Joined --leave/kick--> Left
//! Disconnected --deadline--> Left
//! ```

mod client;
mod clock;
mod events;
pub mod protocol;
mod server;
mod token;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{client_join, client_rejoin, ClientError, ClientFeedItem, ClientRoom};
pub use clock::{Clock, ManualClock, Millis, SystemClock};
pub use events::{LeaveReason, RoomEvent, RoomEventKind, Subscription, SubscriptionError, SUBSCRIPTION_QUEUE};
pub use server::{AppMessage, Audience, FeedItem, RoomBuilder, ServerRoom, StateDigest};
pub use token::{SecretKey, SessionToken, TokenParseError};

use crate::discovery::new_room_id;

pub const DEFAULT_SESSION_TIMEOUT: Duration = Duration::from_secs(60);
pub const DEFAULT_SWEEP_INTERVAL: Duration = Duration::from_secs(1);

#[derive(Debug, Clone)]
pub struct RoomConfig {
    pub room_id: String,
    pub room_name: String,
    pub app_tag: String,
    pub capacity: u32,
    pub session_timeout: Duration,
    pub secret_key: SecretKey,
    /// `None` disables the background sweep; [`ServerRoom::sweep`] still works.
    pub sweep_interval: Option<Duration>,
}

impl RoomConfig {
    pub fn new(room_name: impl Into<String>, app_tag: impl Into<String>, capacity: u32) -> Self {
        RoomConfig {
            room_id: new_room_id(),
            room_name: room_name.into(),
            app_tag: app_tag.into(),
            capacity,
            session_timeout: DEFAULT_SESSION_TIMEOUT,
            secret_key: SecretKey::generate(),
            sweep_interval: Some(DEFAULT_SWEEP_INTERVAL),
        }
    }

    pub fn session_timeout(mut self, timeout: Duration) -> Self {
        self.session_timeout = timeout;
        self
    }

    pub fn sweep_interval(mut self, interval: Option<Duration>) -> Self {
        self.sweep_interval = interval;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RoomError {
    #[error("a room needs at least one listener")]
    NoListeners,
    #[error("capacity must be at least 1")]
    ZeroCapacity,
    #[error("room is closed")]
    Closed,
    #[error("unknown participant {0}")]
    UnknownParticipant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipantState {
    Joined,
    Disconnected,
    Left,
}

impl ParticipantState {
    /// The only transitions a participant record may take.
    pub fn can_become(self, next: ParticipantState) -> bool {
        use ParticipantState::*;
        matches!(
            (self, next),
            (Joined, Disconnected) | (Joined, Left) | (Disconnected, Joined) | (Disconnected, Left)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinRejectReason {
    RoomFull,
    NameTaken,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejoinRejectReason {
    BadToken,
    UnknownParticipant,
    Expired,
    NotDisconnected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantSummary {
    pub participant_id: String,
    pub display_name: String,
    pub state: ParticipantState,
}

/// What a joining or rejoining client receives. `digest` is supplied by the
/// application and opaque to the room; `private` is the part addressed to
/// the receiving participant only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSnapshot {
    pub room_id: String,
    pub room_name: String,
    pub app_tag: String,
    pub capacity: u32,
    pub participants: Vec<ParticipantSummary>,
    pub last_seq: u64,
    #[serde(default)]
    pub digest: serde_json::Value,
    #[serde(default)]
    pub private: serde_json::Value,
}

impl RoomSnapshot {
    /// Joined plus Disconnected participants.
    pub fn occupied(&self) -> usize {
        self.participants
            .iter()
            .filter(|p| p.state != ParticipantState::Left)
            .count()
    }

    pub fn state_of(&self, participant_id: &str) -> Option<ParticipantState> {
        self.participants
            .iter()
            .find(|p| p.participant_id == participant_id)
            .map(|p| p.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_table() {
        use ParticipantState::*;
        let all = [Joined, Disconnected, Left];
        let allowed: Vec<_> = all
            .iter()
            .flat_map(|a| all.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_become(*b))
            .collect();
        assert_eq!(
            allowed,
            [(Joined, Disconnected), (Joined, Left), (Disconnected, Joined), (Disconnected, Left)]
        );
    }

    #[test]
    fn reasons_use_wire_names() {
        assert_eq!(serde_json::to_string(&JoinRejectReason::RoomFull).unwrap(), "\"room_full\"");
        assert_eq!(
            serde_json::to_string(&RejoinRejectReason::NotDisconnected).unwrap(),
            "\"not_disconnected\""
        );
    }
}
