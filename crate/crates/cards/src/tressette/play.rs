use std::sync::Arc;

use roomkit::room::{FeedItem, ServerRoom};
use tokio::sync::mpsc;

use super::game::{MatchOutcome, TressetteGame};
use super::state::SEATS;
use crate::cardgame::{
    inbox, register_players, run_game, spawn_router, BotPlayer, Endpoint, GameError, GameRun, LocalPlayer,
    NullBroadcaster, ProxyPlayer, RoomBroadcaster, RunOptions, Seating,
};

/// A match with every seat played in process.
pub async fn run_local_match(
    seed: u64,
    players: Vec<Box<dyn LocalPlayer>>,
    opts: RunOptions,
) -> Result<GameRun<MatchOutcome>, GameError> {
    let (tx, mut rx) = inbox();
    let endpoints: Vec<Endpoint> = players
        .into_iter()
        .enumerate()
        .map(|(seat, p)| Arc::new(BotPlayer::new(seat, p, tx.clone())) as Endpoint)
        .collect();
    let mut game = TressetteGame::new(seed);
    run_game(&mut game, &endpoints, &NullBroadcaster, &mut rx, opts).await
}

#[derive(Debug, Clone)]
pub struct HostedMatch {
    pub seating: Seating,
    pub run: GameRun<MatchOutcome>,
}

/// Seats the first four participants to join `room` and plays one match
/// with them. `feed` must be the room's application feed.
pub async fn host_match(
    room: ServerRoom,
    mut feed: mpsc::UnboundedReceiver<FeedItem>,
    seed: u64,
    opts: RunOptions,
) -> Result<HostedMatch, GameError> {
    let seating = register_players(&mut feed, SEATS)
        .await
        .ok_or(GameError::RegistrationFailed)?;
    log::info!("seated {:?}", seating.participants());
    let endpoints: Vec<Endpoint> = seating
        .participants()
        .iter()
        .map(|p| Arc::new(ProxyPlayer::new(room.clone(), p.clone())) as Endpoint)
        .collect();
    let broadcaster = RoomBroadcaster::new(room, seating.clone());
    let (tx, mut rx) = inbox();
    let router = spawn_router(feed, seating.clone(), tx);
    let mut game = TressetteGame::new(seed);
    let run = run_game(&mut game, &endpoints, &broadcaster, &mut rx, opts).await;
    router.abort();
    Ok(HostedMatch { seating, run: run? })
}
