//! Reusable card-game layer: cards, decks, hands and teams, plus the
//! coordinator loop that drives any turn-based game over a room.
//!
//! A coordinator combines three capability groups:
//!
//! * registration: [`register_players`] seats the first participants to
//!   join;
//! * elaboration: a [`Game`] implementation owns the rules and state;
//! * communication: a [`Broadcaster`] publishes game events, and each seat
//!   is reached through a [`PlayerEndpoint`].
//!
//! Endpoints hide what is behind a seat. [`BotPlayer`] answers in process,
//! [`ProxyPlayer`] forwards to a [`SkeletonPlayer`] on a client over the
//! room's rpc messages:
//!
//! ```text
//! coordinator -- request_move {view} (rpc_request, cid) --> client
//! coordinator <-- {move} (rpc_response, same cid) --------- client
//! ```

mod card;
mod deck;
mod game;
mod hand;
mod remote;
pub mod rng;

pub use card::{full_set, Card, Seed, Value};
pub use deck::{DealError, Deck};
pub use game::{
    inbox, run_game, AbortReason, Anomaly, Broadcaster, Game, GameError, GameResult, GameRun, Inbox, InboxSender,
    NullBroadcaster, Outgoing, PlayerEndpoint, RunOptions, SeatAudience, SeatDigest, TableInput,
    DEFAULT_MOVE_TIMEOUT,
};
pub use hand::{Hand, NotInHand, Team};
pub use remote::{
    register_players, spawn_router, BotPlayer, Endpoint, LocalPlayer, ProxyGameCoordinator, ProxyPlayer,
    RoomBroadcaster, Seating, SkeletonPlayer, SkeletonReport, GET_VIEW, REQUEST_MOVE,
};
