use std::fmt::Debug;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::mpsc;
use tokio::time::Instant;

pub const DEFAULT_MOVE_TIMEOUT: Duration = Duration::from_secs(30);

/// Who receives a game event, by seat.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeatAudience {
    All,
    Only(usize),
    AllBut(usize),
}

impl SeatAudience {
    pub fn includes(&self, seat: usize) -> bool {
        match *self {
            SeatAudience::All => true,
            SeatAudience::Only(s) => s == seat,
            SeatAudience::AllBut(s) => s != seat,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub audience: SeatAudience,
    pub event: Value,
}

impl Outgoing {
    pub fn all(event: Value) -> Self {
        Outgoing {
            audience: SeatAudience::All,
            event,
        }
    }

    pub fn only(seat: usize, event: Value) -> Self {
        Outgoing {
            audience: SeatAudience::Only(seat),
            event,
        }
    }

    pub fn all_but(seat: usize, event: Value) -> Self {
        Outgoing {
            audience: SeatAudience::AllBut(seat),
            event,
        }
    }

    /// One transcript line: the event plus `to` or `except` for
    /// restricted audiences.
    pub fn transcript_line(&self) -> Value {
        let mut line = self.event.clone();
        if let Value::Object(map) = &mut line {
            match self.audience {
                SeatAudience::All => {}
                SeatAudience::Only(s) => {
                    map.insert("to".into(), json!(s));
                }
                SeatAudience::AllBut(s) => {
                    map.insert("except".into(), json!(s));
                }
            }
        }
        line
    }
}

/// State handed to rejoining players: a public part and one private part
/// per seat.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeatDigest {
    pub public: Value,
    pub private: Vec<Value>,
}

/// The elaboration side of a game coordinator: rules and state.
pub trait Game: Send {
    type Move: Clone + PartialEq + Debug + Serialize + DeserializeOwned + Send;
    type Outcome: Clone + Debug + Serialize + Send;

    fn seats(&self) -> usize;
    /// Events opening the game (e.g. the first deal).
    fn start(&mut self) -> Vec<Outgoing>;
    fn is_over(&self) -> bool;
    fn next_turn(&self) -> usize;
    /// What `seat` may see, sent with each move request.
    fn view(&self, seat: usize) -> Value;
    fn legal_moves(&self, seat: usize) -> Vec<Self::Move>;
    /// Announces whose turn it is; `deadline_ms` is the move timeout.
    fn turn_events(&self, seat: usize, deadline_ms: u64) -> Vec<Outgoing>;
    /// `Err(description)` when the move is an anomaly.
    fn validate(&self, seat: usize, mv: &Self::Move) -> Result<(), String>;
    fn apply_move(&mut self, seat: usize, mv: Self::Move) -> Vec<Outgoing>;
    fn outcome(&self) -> Option<Self::Outcome>;
    fn digest(&self) -> SeatDigest;
    fn check_invariants(&self) -> Result<(), String> {
        Ok(())
    }
}

/// Inputs to a running game, in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub enum TableInput {
    Move { seat: usize, cid: u64, value: Value },
    ViewRequest { seat: usize, cid: u64 },
    Disconnected(usize),
    Rejoined(usize),
    Left(usize),
}

pub type Inbox = mpsc::UnboundedReceiver<TableInput>;
pub type InboxSender = mpsc::UnboundedSender<TableInput>;

pub fn inbox() -> (InboxSender, Inbox) {
    mpsc::unbounded_channel()
}

/// A seat as the coordinator sees it. Bots, local users and remote
/// proxies all look the same; answers arrive through the inbox.
#[async_trait]
pub trait PlayerEndpoint: Send + Sync {
    async fn request_move(&self, cid: u64, view: Value);
    async fn answer_view(&self, _cid: u64, _view: Value) {}
}

/// The communication side of a coordinator.
#[async_trait]
pub trait Broadcaster: Send + Sync {
    async fn publish(&self, events: &[Outgoing], digest: SeatDigest);
    async fn announce_anomaly(&self, seat: usize, description: &str);
}

/// Discards everything; for games where every seat is in-process.
pub struct NullBroadcaster;

#[async_trait]
impl Broadcaster for NullBroadcaster {
    async fn publish(&self, _events: &[Outgoing], _digest: SeatDigest) {}
    async fn announce_anomaly(&self, _seat: usize, _description: &str) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    Anomaly,
    PlayerGone,
    MoveTimeout,
}

impl AbortReason {
    pub fn as_str(self) -> &'static str {
        match self {
            AbortReason::Anomaly => "anomaly",
            AbortReason::PlayerGone => "player_gone",
            AbortReason::MoveTimeout => "move_timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum GameResult<O> {
    Completed(O),
    Aborted { reason: AbortReason, seat: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Anomaly {
    pub seat: usize,
    pub description: String,
}

#[derive(Debug, Clone)]
pub struct GameRun<O> {
    pub result: GameResult<O>,
    /// Every event the coordinator sent, in order.
    pub transcript: Vec<Outgoing>,
    pub moves: u64,
    pub anomalies: Vec<Anomaly>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("the table inbox closed")]
    InboxClosed,
    #[error("the room closed before the table was full")]
    RegistrationFailed,
    #[error("expected {expected} players, got {got}")]
    WrongPlayerCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub move_timeout: Duration,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            move_timeout: DEFAULT_MOVE_TIMEOUT,
        }
    }
}

struct Loop<'a, G: Game> {
    game: &'a mut G,
    players: &'a [Arc<dyn PlayerEndpoint>],
    out: &'a dyn Broadcaster,
    transcript: Vec<Outgoing>,
    anomalies: Vec<Anomaly>,
    moves: u64,
}

impl<G: Game> Loop<'_, G> {
    async fn emit(&mut self, events: Vec<Outgoing>) {
        if events.is_empty() {
            return;
        }
        self.out.publish(&events, self.game.digest()).await;
        self.transcript.extend(events);
    }

    async fn abort(&mut self, reason: AbortReason, seat: usize) -> GameResult<G::Outcome> {
        self.emit(vec![Outgoing::all(json!({
            "type": "game_over",
            "aborted": true,
            "reason": reason.as_str(),
            "seat": seat,
        }))])
        .await;
        GameResult::Aborted {
            reason,
            seat: Some(seat),
        }
    }

    async fn anomaly(&mut self, seat: usize, description: String) -> GameResult<G::Outcome> {
        log::warn!("anomaly from seat {seat}: {description}");
        self.out.announce_anomaly(seat, &description).await;
        self.emit(vec![Outgoing::all(json!({
            "type": "anomaly",
            "seat": seat,
            "description": description,
        }))])
        .await;
        self.anomalies.push(Anomaly { seat, description });
        self.abort(AbortReason::Anomaly, seat).await
    }
}

/// Runs turns until the game is over or aborted.
///
/// The move clock of the acting seat stops while that seat is
/// disconnected; on rejoin the pending request is sent again with the same
/// correlation id. A reply with an unknown id is ignored. A reply to the
/// pending id from another seat is judged as that seat playing out of turn.
pub async fn run_game<G: Game>(
    game: &mut G,
    players: &[Arc<dyn PlayerEndpoint>],
    out: &dyn Broadcaster,
    inbox: &mut Inbox,
    opts: RunOptions,
) -> Result<GameRun<G::Outcome>, GameError> {
    if players.len() != game.seats() {
        return Err(GameError::WrongPlayerCount {
            expected: game.seats(),
            got: players.len(),
        });
    }
    let mut lp = Loop {
        game,
        players,
        out,
        transcript: Vec::new(),
        anomalies: Vec::new(),
        moves: 0,
    };
    let mut connected = vec![true; players.len()];
    let mut next_cid: u64 = 1;

    let opening = lp.game.start();
    lp.emit(opening).await;

    let result = 'game: loop {
        if lp.game.is_over() {
            let outcome = lp
                .game
                .outcome()
                .ok_or_else(|| GameError::Invariant("finished game without an outcome".into()))?;
            break GameResult::Completed(outcome);
        }
        let seat = lp.game.next_turn();
        let cid = next_cid;
        next_cid += 1;
        let turn = lp.game.turn_events(seat, opts.move_timeout.as_millis() as u64);
        lp.emit(turn).await;
        lp.players[seat].request_move(cid, lp.game.view(seat)).await;

        let mut remaining = opts.move_timeout;
        loop {
            let input = if connected[seat] {
                let started = Instant::now();
                match tokio::time::timeout(remaining, inbox.recv()).await {
                    Ok(input) => {
                        remaining = remaining.saturating_sub(started.elapsed());
                        input
                    }
                    Err(_) => break 'game lp.abort(AbortReason::MoveTimeout, seat).await,
                }
            } else {
                inbox.recv().await
            };
            match input.ok_or(GameError::InboxClosed)? {
                TableInput::Disconnected(s) => connected[s] = false,
                TableInput::Rejoined(s) => {
                    connected[s] = true;
                    if s == seat {
                        lp.players[seat].request_move(cid, lp.game.view(seat)).await;
                    }
                }
                TableInput::Left(s) => break 'game lp.abort(AbortReason::PlayerGone, s).await,
                TableInput::ViewRequest { seat: s, cid } => {
                    lp.players[s].answer_view(cid, lp.game.view(s)).await;
                }
                TableInput::Move { seat: from, cid: got, value } => {
                    if got != cid {
                        log::info!("ignoring move from seat {from} with unknown cid {got}");
                        continue;
                    }
                    let mv: G::Move = match serde_json::from_value(value) {
                        Ok(mv) => mv,
                        Err(e) => break 'game lp.anomaly(from, format!("malformed move: {e}")).await,
                    };
                    if let Err(description) = lp.game.validate(from, &mv) {
                        break 'game lp.anomaly(from, description).await;
                    }
                    if from != seat || !lp.game.legal_moves(seat).contains(&mv) {
                        return Err(GameError::Invariant(format!(
                            "validation accepted {mv:?} from seat {from} outside the legal moves"
                        )));
                    }
                    let events = lp.game.apply_move(seat, mv);
                    lp.moves += 1;
                    lp.game.check_invariants().map_err(GameError::Invariant)?;
                    lp.emit(events).await;
                    break;
                }
            }
        }
    };

    Ok(GameRun {
        result,
        transcript: lp.transcript,
        moves: lp.moves,
        anomalies: lp.anomalies,
    })
}
