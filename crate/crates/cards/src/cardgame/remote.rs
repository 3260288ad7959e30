//! Proxy/skeleton pairs carrying a game over a room.
//!
//! Coordinator side: [`ProxyPlayer`] turns `request_move` into an
//! `rpc_request` to one participant, [`RoomBroadcaster`] maps game events to
//! room app events, and [`spawn_router`] turns the room feed into
//! [`TableInput`]s. Client side: [`SkeletonPlayer`] answers `request_move`
//! by asking a [`LocalPlayer`], and [`ProxyGameCoordinator`] fetches views.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use roomkit::room::{
    AppMessage, Audience, ClientError, ClientFeedItem, ClientRoom, FeedItem, RoomEvent, RoomEventKind, ServerRoom,
    StateDigest,
};
use roomkit::wire::MessageType;
use serde_json::{json, Value};
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

use super::game::{Broadcaster, InboxSender, Outgoing, PlayerEndpoint, SeatAudience, SeatDigest, TableInput};

pub const REQUEST_MOVE: &str = "request_move";
pub const GET_VIEW: &str = "get_view";

/// Seat index to participant id, fixed at registration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seating {
    participants: Vec<String>,
}

impl Seating {
    pub fn new(participants: Vec<String>) -> Self {
        Seating { participants }
    }

    pub fn participant(&self, seat: usize) -> &str {
        &self.participants[seat]
    }

    pub fn seat_of(&self, participant_id: &str) -> Option<usize> {
        self.participants.iter().position(|p| p == participant_id)
    }

    pub fn len(&self) -> usize {
        self.participants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.participants.is_empty()
    }

    pub fn participants(&self) -> &[String] {
        &self.participants
    }
}

/// Waits until `seats` participants are joined and returns them in join
/// order. Participants who drop out before the table is full lose their
/// place.
pub async fn register_players(feed: &mut mpsc::UnboundedReceiver<FeedItem>, seats: usize) -> Option<Seating> {
    let mut joined: Vec<String> = Vec::new();
    while joined.len() < seats {
        match feed.recv().await? {
            FeedItem::Event(ev) => match ev.kind {
                RoomEventKind::ParticipantJoined { participant_id, .. } => joined.push(participant_id),
                RoomEventKind::ParticipantLeft { participant_id, .. } => joined.retain(|p| *p != participant_id),
                RoomEventKind::RoomClosed { .. } => return None,
                _ => {}
            },
            FeedItem::Message { from, .. } => log::debug!("message from {from} before the game started"),
        }
    }
    Some(Seating::new(joined))
}

/// Coordinator-side stand-in for a remote player.
pub struct ProxyPlayer {
    room: ServerRoom,
    participant_id: String,
}

impl ProxyPlayer {
    pub fn new(room: ServerRoom, participant_id: impl Into<String>) -> Self {
        ProxyPlayer {
            room,
            participant_id: participant_id.into(),
        }
    }
}

#[async_trait]
impl PlayerEndpoint for ProxyPlayer {
    async fn request_move(&self, cid: u64, view: Value) {
        match self
            .room
            .send_rpc(&self.participant_id, cid, REQUEST_MOVE, json!({ "view": view }))
            .await
        {
            Ok(true) => {}
            Ok(false) => log::info!("{} is not connected; request {cid} held", self.participant_id),
            Err(e) => log::warn!("request_move to {}: {e}", self.participant_id),
        }
    }

    async fn answer_view(&self, cid: u64, view: Value) {
        let _ = self.room.respond(&self.participant_id, cid, json!({ "view": view })).await;
    }
}

/// Publishes game events into a room.
pub struct RoomBroadcaster {
    room: ServerRoom,
    seating: Seating,
}

impl RoomBroadcaster {
    pub fn new(room: ServerRoom, seating: Seating) -> Self {
        RoomBroadcaster { room, seating }
    }
}

#[async_trait]
impl Broadcaster for RoomBroadcaster {
    async fn publish(&self, events: &[Outgoing], digest: SeatDigest) {
        let messages = events
            .iter()
            .map(|o| {
                let audience = match o.audience {
                    SeatAudience::All => Audience::All,
                    SeatAudience::Only(s) => Audience::Only(self.seating.participant(s).to_owned()),
                    SeatAudience::AllBut(s) => Audience::AllBut(self.seating.participant(s).to_owned()),
                };
                AppMessage {
                    audience,
                    payload: o.event.clone(),
                }
            })
            .collect();
        let private: BTreeMap<String, Value> = digest
            .private
            .into_iter()
            .enumerate()
            .map(|(seat, v)| (self.seating.participant(seat).to_owned(), v))
            .collect();
        let digest = StateDigest {
            public: digest.public,
            private,
        };
        if let Err(e) = self.room.publish(messages, Some(digest)).await {
            log::warn!("publish failed: {e}");
        }
    }

    async fn announce_anomaly(&self, seat: usize, description: &str) {
        if let Err(e) = self.room.raise_anomaly(self.seating.participant(seat), description).await {
            log::warn!("anomaly announcement failed: {e}");
        }
    }
}

/// Feeds the game inbox from the room: move replies, view requests and
/// the presence changes of seated participants.
pub fn spawn_router(
    mut feed: mpsc::UnboundedReceiver<FeedItem>,
    seating: Seating,
    inbox: InboxSender,
) -> JoinHandle<()> {
    tokio::spawn(async move {
        while let Some(item) = feed.recv().await {
            let input = match item {
                FeedItem::Event(ev) => match ev.kind {
                    RoomEventKind::ParticipantDisconnected { participant_id, .. } => {
                        seating.seat_of(&participant_id).map(TableInput::Disconnected)
                    }
                    RoomEventKind::ParticipantRejoined { participant_id } => {
                        seating.seat_of(&participant_id).map(TableInput::Rejoined)
                    }
                    RoomEventKind::ParticipantLeft { participant_id, .. } => {
                        seating.seat_of(&participant_id).map(TableInput::Left)
                    }
                    _ => None,
                },
                FeedItem::Message { from, envelope } => {
                    let (Some(seat), Some(cid)) = (seating.seat_of(&from), envelope.cid) else {
                        log::info!("ignoring {} from {from}", envelope.kind);
                        continue;
                    };
                    match envelope.kind {
                        MessageType::RpcResponse => Some(TableInput::Move {
                            seat,
                            cid,
                            value: envelope.payload.get("move").cloned().unwrap_or(Value::Null),
                        }),
                        MessageType::RpcRequest if envelope.payload.get("method") == Some(&json!(GET_VIEW)) => {
                            Some(TableInput::ViewRequest { seat, cid })
                        }
                        other => {
                            log::info!("ignoring {other} from {from}");
                            None
                        }
                    }
                }
            };
            if let Some(input) = input {
                if inbox.send(input).is_err() {
                    break;
                }
            }
        }
    })
}

/// The player behind a skeleton: a human interface or a bot.
#[async_trait]
pub trait LocalPlayer: Send {
    async fn choose_move(&mut self, view: &Value) -> Value;
    async fn observe(&mut self, _event: &RoomEvent) {}
}

#[async_trait]
impl<P: LocalPlayer + ?Sized> LocalPlayer for Box<P> {
    async fn choose_move(&mut self, view: &Value) -> Value {
        (**self).choose_move(view).await
    }

    async fn observe(&mut self, event: &RoomEvent) {
        (**self).observe(event).await
    }
}

/// How a skeleton's session ended.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SkeletonReport {
    /// The `game_over` payload, when one arrived.
    pub game_over: Option<Value>,
    /// Room-level anomaly notifications seen.
    pub anomaly_notices: usize,
    /// Every app event payload, in order.
    pub app_events: Vec<Value>,
    /// Correlation ids answered, in order.
    pub answered: Vec<u64>,
    /// True when the connection ended before `game_over`.
    pub disconnected: bool,
}

/// Client-side counterpart of [`ProxyPlayer`].
pub struct SkeletonPlayer<P> {
    room: ClientRoom,
    feed: Option<mpsc::UnboundedReceiver<ClientFeedItem>>,
    player: P,
}

impl<P: LocalPlayer> SkeletonPlayer<P> {
    pub fn new(room: ClientRoom, player: P) -> Self {
        let feed = room.take_feed();
        SkeletonPlayer { room, feed, player }
    }

    /// For a room whose feed was already taken by the caller.
    pub fn with_feed(room: ClientRoom, feed: mpsc::UnboundedReceiver<ClientFeedItem>, player: P) -> Self {
        SkeletonPlayer {
            room,
            feed: Some(feed),
            player,
        }
    }

    pub fn room(&self) -> &ClientRoom {
        &self.room
    }

    /// Serves move requests until `game_over` or the connection ends.
    pub async fn run(mut self) -> (SkeletonReport, P) {
        let mut report = SkeletonReport::default();
        let Some(mut feed) = self.feed.take() else {
            report.disconnected = true;
            return (report, self.player);
        };
        while let Some(item) = feed.recv().await {
            match item {
                ClientFeedItem::Request { cid, method, params } if method == REQUEST_MOVE => {
                    let view = params.get("view").cloned().unwrap_or(Value::Null);
                    let mv = self.player.choose_move(&view).await;
                    if self.room.respond(cid, json!({ "move": mv })).await.is_err() {
                        break;
                    }
                    report.answered.push(cid);
                }
                ClientFeedItem::Request { method, .. } => log::info!("ignoring request {method}"),
                ClientFeedItem::Event(ev) => {
                    self.player.observe(&ev).await;
                    match &ev.kind {
                        RoomEventKind::AnomalyDetected { .. } => report.anomaly_notices += 1,
                        RoomEventKind::AppEvent { payload, .. } => {
                            report.app_events.push(payload.clone());
                            if payload.get("type") == Some(&json!("game_over")) {
                                report.game_over = Some(payload.clone());
                                return (report, self.player);
                            }
                        }
                        RoomEventKind::RoomClosed { .. } => break,
                        _ => {}
                    }
                }
                ClientFeedItem::Error(e) => log::warn!("room error: {}", e.reason),
                ClientFeedItem::Closed => break,
            }
        }
        report.disconnected = true;
        (report, self.player)
    }
}

/// Client-side stand-in for the coordinator.
#[derive(Clone)]
pub struct ProxyGameCoordinator {
    room: ClientRoom,
}

impl ProxyGameCoordinator {
    pub fn new(room: ClientRoom) -> Self {
        ProxyGameCoordinator { room }
    }

    /// The caller's current redacted view of the game.
    pub async fn get_view(&self) -> Result<Value, ClientError> {
        let reply = self.room.call(GET_VIEW, json!({})).await?;
        Ok(reply.get("view").cloned().unwrap_or(Value::Null))
    }
}

/// In-process endpoint: moves are chosen locally and go straight to the
/// inbox, with no wire traffic.
pub struct BotPlayer<P> {
    seat: usize,
    player: tokio::sync::Mutex<P>,
    inbox: InboxSender,
    requests: Mutex<Vec<u64>>,
}

impl<P: LocalPlayer> BotPlayer<P> {
    pub fn new(seat: usize, player: P, inbox: InboxSender) -> Self {
        BotPlayer {
            seat,
            player: tokio::sync::Mutex::new(player),
            inbox,
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Correlation ids this endpoint was asked for, in order.
    pub fn requests(&self) -> Vec<u64> {
        self.requests.lock().unwrap().clone()
    }
}

#[async_trait]
impl<P: LocalPlayer + Send + 'static> PlayerEndpoint for BotPlayer<P> {
    async fn request_move(&self, cid: u64, view: Value) {
        self.requests.lock().unwrap().push(cid);
        let value = self.player.lock().await.choose_move(&view).await;
        let _ = self.inbox.send(TableInput::Move {
            seat: self.seat,
            cid,
            value,
        });
    }
}

/// Shared handle so one endpoint can back several seats' bookkeeping.
pub type Endpoint = Arc<dyn PlayerEndpoint>;
