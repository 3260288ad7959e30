use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;

use super::events::{subscription, Subscriber};
use super::protocol::{
    ClientAppEvent, ErrorBody, JoinAccepted, JoinRejected, JoinRequest, RejoinAccepted, RejoinRejected, RejoinRequest,
};
use super::{
    Clock, JoinRejectReason, LeaveReason, Millis, ParticipantState, ParticipantSummary, RejoinRejectReason, RoomConfig,
    RoomError, RoomEvent, RoomEventKind, RoomSnapshot, SessionToken, Subscription, SystemClock,
};
use crate::transport::{Channel, EndpointAddress, Listener, TransportError};
use crate::wire::{Envelope, MessageType};

/// Who receives an application event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Audience {
    All,
    Only(String),
    AllBut(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppMessage {
    pub audience: Audience,
    pub payload: Value,
}

impl AppMessage {
    pub fn all(payload: Value) -> Self {
        AppMessage {
            audience: Audience::All,
            payload,
        }
    }

    pub fn only(participant_id: impl Into<String>, payload: Value) -> Self {
        AppMessage {
            audience: Audience::Only(participant_id.into()),
            payload,
        }
    }

    pub fn all_but(participant_id: impl Into<String>, payload: Value) -> Self {
        AppMessage {
            audience: Audience::AllBut(participant_id.into()),
            payload,
        }
    }
}

/// Application state handed to joining and rejoining clients inside their
/// snapshot. The room never looks inside.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateDigest {
    pub public: Value,
    pub private: BTreeMap<String, Value>,
}

/// What the application behind a room consumes, in room order.
#[derive(Debug, Clone, PartialEq)]
pub enum FeedItem {
    Event(RoomEvent),
    /// An `rpc_request`, `rpc_response` or `error` sent by a participant;
    /// `envelope.from` is set to the sender.
    Message { from: String, envelope: Envelope },
}

type ConnId = u64;

enum Input {
    Accepted(Channel),
    Received(ConnId, Envelope),
    Violation(ConnId, TransportError),
    Dropped(ConnId),
}

type Reply<T> = oneshot::Sender<T>;

enum Command {
    Subscribe(Reply<Subscription>),
    Publish {
        messages: Vec<AppMessage>,
        digest: Option<StateDigest>,
        reply: Reply<Result<Vec<u64>, RoomError>>,
    },
    SetDigest(StateDigest),
    SendEnvelope {
        to: String,
        envelope: Envelope,
        reply: Reply<Result<bool, RoomError>>,
    },
    RaiseAnomaly {
        offender: String,
        description: String,
        reply: Reply<Result<u64, RoomError>>,
    },
    Kick {
        participant_id: String,
        reply: Reply<Result<(), RoomError>>,
    },
    Sweep {
        now: Option<Millis>,
        reply: Reply<Vec<String>>,
    },
    Snapshot(Reply<RoomSnapshot>),
    Close {
        reason: String,
        reply: Reply<()>,
    },
}

/// Configures a room before it opens. Subscriptions and the feed taken
/// here observe every event from `room_opened` on.
pub struct RoomBuilder {
    config: RoomConfig,
    clock: Arc<dyn Clock>,
    subscribers: Vec<Subscriber>,
    feed: Option<mpsc::UnboundedSender<FeedItem>>,
}

impl RoomBuilder {
    pub fn new(config: RoomConfig) -> Self {
        RoomBuilder {
            config,
            clock: Arc::new(SystemClock),
            subscribers: Vec::new(),
            feed: None,
        }
    }

    pub fn clock(mut self, clock: impl Clock) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    pub fn subscribe(&mut self) -> Subscription {
        let (sub, rx) = subscription();
        self.subscribers.push(sub);
        rx
    }

    /// The application feed: all room events plus participant rpc traffic,
    /// in one queue. At most one per room.
    pub fn feed(&mut self) -> mpsc::UnboundedReceiver<FeedItem> {
        let (tx, rx) = mpsc::unbounded_channel();
        self.feed = Some(tx);
        rx
    }

    /// Starts accepting on every listener. Must run inside a tokio runtime.
    pub fn open(self, listeners: Vec<Listener>) -> Result<ServerRoom, RoomError> {
        if listeners.is_empty() {
            return Err(RoomError::NoListeners);
        }
        if self.config.capacity == 0 {
            return Err(RoomError::ZeroCapacity);
        }
        let (input_tx, input_rx) = mpsc::unbounded_channel();
        let (cmd_tx, cmd_rx) = mpsc::unbounded_channel();
        let (occupancy_tx, occupancy_rx) = watch::channel(0);
        let endpoints: Vec<EndpointAddress> = listeners.iter().map(|l| l.local_addr().clone()).collect();
        let accept_tasks = listeners
            .into_iter()
            .map(|mut listener| {
                let input_tx = input_tx.clone();
                tokio::spawn(async move {
                    while let Ok(ch) = listener.accept().await {
                        if input_tx.send(Input::Accepted(ch)).is_err() {
                            break;
                        }
                    }
                })
            })
            .collect();
        let info = Arc::new(RoomInfo {
            room_id: self.config.room_id.clone(),
            room_name: self.config.room_name.clone(),
            app_tag: self.config.app_tag.clone(),
            capacity: self.config.capacity,
            endpoints,
        });
        let mut core = RoomCore {
            sweep_interval: self.config.sweep_interval,
            config: self.config,
            clock: self.clock,
            seq: 0,
            participants: Vec::new(),
            next_pid: 1,
            conns: HashMap::new(),
            next_conn: 1,
            subscribers: self.subscribers,
            feed: self.feed,
            digest: StateDigest::default(),
            closed: false,
            input_tx,
            accept_tasks,
            occupancy: occupancy_tx,
        };
        core.emit(
            RoomEventKind::RoomOpened {
                room_id: info.room_id.clone(),
                room_name: info.room_name.clone(),
            },
            Delivery::Everyone,
        );
        tokio::spawn(core.run(input_rx, cmd_rx));
        Ok(ServerRoom {
            cmd: cmd_tx,
            info,
            occupancy: occupancy_rx,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoomInfo {
    pub room_id: String,
    pub room_name: String,
    pub app_tag: String,
    pub capacity: u32,
    /// Bound addresses of the room's listeners.
    pub endpoints: Vec<EndpointAddress>,
}

/// Handle to a running room. Clones share the room; it closes when the
/// last handle is dropped.
#[derive(Clone)]
pub struct ServerRoom {
    cmd: mpsc::UnboundedSender<Command>,
    info: Arc<RoomInfo>,
    occupancy: watch::Receiver<u32>,
}

impl std::fmt::Debug for ServerRoom {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerRoom").field("info", &self.info).finish()
    }
}

impl ServerRoom {
    pub fn builder(config: RoomConfig) -> RoomBuilder {
        RoomBuilder::new(config)
    }

    pub fn open(config: RoomConfig, listeners: Vec<Listener>) -> Result<ServerRoom, RoomError> {
        RoomBuilder::new(config).open(listeners)
    }

    pub fn info(&self) -> &RoomInfo {
        &self.info
    }

    pub fn room_id(&self) -> &str {
        &self.info.room_id
    }

    /// Joined plus Disconnected participants, updated on every change.
    pub fn occupancy(&self) -> watch::Receiver<u32> {
        self.occupancy.clone()
    }

    async fn call<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<T, RoomError> {
        let (tx, rx) = oneshot::channel();
        self.cmd.send(make(tx)).map_err(|_| RoomError::Closed)?;
        rx.await.map_err(|_| RoomError::Closed)
    }

    /// Subscribes from the next event on.
    pub async fn subscribe(&self) -> Result<Subscription, RoomError> {
        self.call(Command::Subscribe).await
    }

    pub async fn broadcast(&self, payload: Value) -> Result<u64, RoomError> {
        Ok(self.publish(vec![AppMessage::all(payload)], None).await?[0])
    }

    /// Delivers to one participant; skipped silently unless they are Joined.
    pub async fn send_to(&self, participant_id: &str, payload: Value) -> Result<u64, RoomError> {
        Ok(self
            .publish(vec![AppMessage::only(participant_id, payload)], None)
            .await?[0])
    }

    /// Emits the messages as consecutive app events and, in the same step,
    /// replaces the snapshot digest. Returns the assigned sequence numbers.
    pub async fn publish(&self, messages: Vec<AppMessage>, digest: Option<StateDigest>) -> Result<Vec<u64>, RoomError> {
        self.call(|reply| Command::Publish {
            messages,
            digest,
            reply,
        })
        .await?
    }

    pub fn set_digest(&self, digest: StateDigest) -> Result<(), RoomError> {
        self.cmd.send(Command::SetDigest(digest)).map_err(|_| RoomError::Closed)
    }

    /// Sends a raw envelope to a participant. `Ok(false)` when they are not
    /// currently connected.
    pub async fn send_envelope(&self, participant_id: &str, envelope: Envelope) -> Result<bool, RoomError> {
        self.call(|reply| Command::SendEnvelope {
            to: participant_id.to_owned(),
            envelope,
            reply,
        })
        .await?
    }

    pub async fn send_rpc(&self, participant_id: &str, cid: u64, method: &str, params: Value) -> Result<bool, RoomError> {
        let env = Envelope::with_payload(
            MessageType::RpcRequest,
            serde_json::json!({ "method": method, "params": params }),
        )
        .with_cid(cid);
        self.send_envelope(participant_id, env).await
    }

    pub async fn respond(&self, participant_id: &str, cid: u64, result: Value) -> Result<bool, RoomError> {
        let env = Envelope::with_payload(MessageType::RpcResponse, result).with_cid(cid);
        self.send_envelope(participant_id, env).await
    }

    /// Broadcasts `anomaly_detected` to every participant, offender included.
    pub async fn raise_anomaly(&self, offender: &str, description: &str) -> Result<u64, RoomError> {
        self.call(|reply| Command::RaiseAnomaly {
            offender: offender.to_owned(),
            description: description.to_owned(),
            reply,
        })
        .await?
    }

    pub async fn kick(&self, participant_id: &str) -> Result<(), RoomError> {
        self.call(|reply| Command::Kick {
            participant_id: participant_id.to_owned(),
            reply,
        })
        .await?
    }

    /// Expires every Disconnected participant whose deadline is at or
    /// before `now`; returns their ids.
    pub async fn sweep(&self, now: Millis) -> Result<Vec<String>, RoomError> {
        self.call(|reply| Command::Sweep { now: Some(now), reply }).await
    }

    /// [`sweep`](Self::sweep) at the room clock's current time.
    pub async fn sweep_now(&self) -> Result<Vec<String>, RoomError> {
        self.call(|reply| Command::Sweep { now: None, reply }).await
    }

    pub async fn snapshot(&self) -> Result<RoomSnapshot, RoomError> {
        self.call(Command::Snapshot).await
    }

    /// Broadcasts `room_closed`, drops every connection and stops accepting.
    pub async fn close(&self, reason: &str) -> Result<(), RoomError> {
        self.call(|reply| Command::Close {
            reason: reason.to_owned(),
            reply,
        })
        .await
    }
}

struct Participant {
    id: String,
    display_name: String,
    state: ParticipantState,
    token: Option<SessionToken>,
    conn: Option<ConnId>,
    deadline: Option<Millis>,
    left_reason: Option<LeaveReason>,
}

struct Conn {
    out: mpsc::UnboundedSender<Envelope>,
    participant: Option<String>,
    reader: JoinHandle<()>,
}

impl Drop for Conn {
    fn drop(&mut self) {
        self.reader.abort();
    }
}

enum Delivery<'a> {
    Everyone,
    Except(&'a str),
    Only(&'a str),
}

struct RoomCore {
    config: RoomConfig,
    clock: Arc<dyn Clock>,
    sweep_interval: Option<Duration>,
    seq: u64,
    participants: Vec<Participant>,
    next_pid: u64,
    conns: HashMap<ConnId, Conn>,
    next_conn: ConnId,
    subscribers: Vec<Subscriber>,
    feed: Option<mpsc::UnboundedSender<FeedItem>>,
    digest: StateDigest,
    closed: bool,
    input_tx: mpsc::UnboundedSender<Input>,
    accept_tasks: Vec<JoinHandle<()>>,
    occupancy: watch::Sender<u32>,
}

impl RoomCore {
    async fn run(mut self, mut inputs: mpsc::UnboundedReceiver<Input>, mut commands: mpsc::UnboundedReceiver<Command>) {
        let mut sweeper = self.sweep_interval.map(|every| {
            let mut t = tokio::time::interval(every);
            t.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            t
        });
        loop {
            tokio::select! {
                cmd = commands.recv() => match cmd {
                    Some(cmd) => self.command(cmd),
                    None => break,
                },
                Some(input) = inputs.recv() => self.input(input),
                _ = async { sweeper.as_mut().unwrap().tick().await }, if sweeper.is_some() => {
                    let now = self.clock.now_ms();
                    self.sweep(now);
                }
            }
        }
        self.close("shutdown");
    }

    fn now(&self) -> Millis {
        self.clock.now_ms()
    }

    fn participant(&self, id: &str) -> Option<&Participant> {
        self.participants.iter().find(|p| p.id == id)
    }

    fn participant_mut(&mut self, id: &str) -> Option<&mut Participant> {
        self.participants.iter_mut().find(|p| p.id == id)
    }

    fn occupied(&self) -> u32 {
        self.participants
            .iter()
            .filter(|p| p.state != ParticipantState::Left)
            .count() as u32
    }

    fn transition(&mut self, id: &str, next: ParticipantState) {
        let p = self.participant_mut(id).expect("transition of a known participant");
        assert!(
            p.state.can_become(next),
            "illegal participant transition {:?} -> {next:?} for {id}",
            p.state
        );
        p.state = next;
        let occupied = self.occupied();
        debug_assert!(occupied <= self.config.capacity);
        self.occupancy.send_replace(occupied);
    }

    fn send(&self, conn: ConnId, envelope: Envelope) {
        if let Some(c) = self.conns.get(&conn) {
            let _ = c.out.send(envelope);
        }
    }

    fn reply_error(&self, conn: ConnId, reason: &str, detail: impl Into<Option<String>>) {
        self.send(conn, Envelope::with_payload(MessageType::Error, ErrorBody::new(reason, detail)));
    }

    fn emit(&mut self, kind: RoomEventKind, delivery: Delivery) -> u64 {
        self.seq += 1;
        let event = RoomEvent { seq: self.seq, kind };
        self.subscribers.retain(|s| s.deliver(&event));
        if let Some(feed) = &self.feed {
            let _ = feed.send(FeedItem::Event(event.clone()));
        }
        let envelope = Envelope::with_payload(MessageType::RoomEvent, &event);
        for p in &self.participants {
            let Some(conn) = p.conn else { continue };
            let wanted = match delivery {
                Delivery::Everyone => true,
                Delivery::Except(id) => p.id != id,
                Delivery::Only(id) => p.id == id,
            };
            if wanted {
                self.send(conn, envelope.clone());
            }
        }
        self.seq
    }

    fn snapshot_for(&self, participant: Option<&str>) -> RoomSnapshot {
        RoomSnapshot {
            room_id: self.config.room_id.clone(),
            room_name: self.config.room_name.clone(),
            app_tag: self.config.app_tag.clone(),
            capacity: self.config.capacity,
            participants: self
                .participants
                .iter()
                .map(|p| ParticipantSummary {
                    participant_id: p.id.clone(),
                    display_name: p.display_name.clone(),
                    state: p.state,
                })
                .collect(),
            last_seq: self.seq,
            digest: self.digest.public.clone(),
            private: participant
                .and_then(|id| self.digest.private.get(id).cloned())
                .unwrap_or(Value::Null),
        }
    }

    fn input(&mut self, input: Input) {
        match input {
            Input::Accepted(channel) => self.accept(channel),
            Input::Received(conn, env) => self.received(conn, env),
            Input::Violation(conn, err) => {
                log::warn!("closing connection {conn}: {err}");
                self.reply_error(conn, "malformed_frame", err.to_string());
                self.connection_lost(conn);
            }
            Input::Dropped(conn) => self.connection_lost(conn),
        }
    }

    fn accept(&mut self, channel: Channel) {
        if self.closed {
            return;
        }
        let id = self.next_conn;
        self.next_conn += 1;
        let (tx, mut rx) = channel.split();
        let (out, mut out_rx) = mpsc::unbounded_channel::<Envelope>();
        tokio::spawn(async move {
            while let Some(env) = out_rx.recv().await {
                if let Err(e) = tx.send_envelope(&env).await {
                    log::debug!("connection {id} write failed: {e}");
                    break;
                }
            }
        });
        let inputs = self.input_tx.clone();
        let reader = tokio::spawn(async move {
            loop {
                let msg = match rx.recv_envelope().await {
                    Ok(Some(env)) => Input::Received(id, env),
                    Ok(None) | Err(TransportError::ChannelClosed) => Input::Dropped(id),
                    Err(e) => Input::Violation(id, e),
                };
                let last = !matches!(msg, Input::Received(..));
                if inputs.send(msg).is_err() || last {
                    return;
                }
            }
        });
        self.conns.insert(
            id,
            Conn {
                out,
                participant: None,
                reader,
            },
        );
    }

    fn received(&mut self, conn: ConnId, env: Envelope) {
        let Some(c) = self.conns.get(&conn) else { return };
        match c.participant.clone() {
            None => match env.kind {
                MessageType::JoinRequest => match env.payload_as::<JoinRequest>() {
                    Ok(req) => self.join(conn, req),
                    Err(e) => self.reply_error(conn, "bad_request", e.to_string()),
                },
                MessageType::RejoinRequest => match env.payload_as::<RejoinRequest>() {
                    Ok(req) => self.rejoin(conn, req),
                    Err(e) => self.reply_error(conn, "bad_request", e.to_string()),
                },
                MessageType::Leave => {
                    self.conns.remove(&conn);
                }
                _ => self.reply_error(conn, "not_joined", None),
            },
            Some(pid) => match env.kind {
                MessageType::Leave => {
                    self.conns.remove(&conn);
                    self.depart(&pid, LeaveReason::Leave);
                }
                MessageType::RpcRequest | MessageType::RpcResponse | MessageType::Error => match &self.feed {
                    Some(feed) => {
                        let _ = feed.send(FeedItem::Message {
                            from: pid.clone(),
                            envelope: env.with_from(pid),
                        });
                    }
                    None => log::debug!("no application attached; dropping {} from {pid}", env.kind),
                },
                MessageType::RoomEvent => match env.payload_as::<ClientAppEvent>() {
                    Ok(ev) if ev.variant == "app_event" => {
                        self.emit(
                            RoomEventKind::AppEvent {
                                payload: ev.body.payload,
                                to: None,
                                except: None,
                                from: Some(pid),
                            },
                            Delivery::Everyone,
                        );
                    }
                    _ => self.reply_error(conn, "bad_event", None),
                },
                MessageType::JoinRequest | MessageType::RejoinRequest => self.reply_error(conn, "already_joined", None),
                MessageType::Other(t) => self.reply_error(conn, "unknown_type", t),
                other => self.reply_error(conn, "unexpected_type", other.to_string()),
            },
        }
    }

    fn join(&mut self, conn: ConnId, req: JoinRequest) {
        let reject = |core: &Self, reason| {
            core.send(conn, Envelope::with_payload(MessageType::JoinRejected, JoinRejected { reason }));
        };
        if self.closed {
            return reject(self, JoinRejectReason::Closed);
        }
        if self
            .participants
            .iter()
            .any(|p| p.state != ParticipantState::Left && p.display_name == req.display_name)
        {
            return reject(self, JoinRejectReason::NameTaken);
        }
        if self.occupied() >= self.config.capacity {
            return reject(self, JoinRejectReason::RoomFull);
        }
        let id = format!("p{}", self.next_pid);
        self.next_pid += 1;
        let token = SessionToken::issue(&self.config.secret_key, &id, &self.config.room_id);
        self.participants.push(Participant {
            id: id.clone(),
            display_name: req.display_name.clone(),
            state: ParticipantState::Joined,
            token: Some(token.clone()),
            conn: Some(conn),
            deadline: None,
            left_reason: None,
        });
        self.occupancy.send_replace(self.occupied());
        if let Some(c) = self.conns.get_mut(&conn) {
            c.participant = Some(id.clone());
        }
        self.emit(
            RoomEventKind::ParticipantJoined {
                participant_id: id.clone(),
                display_name: req.display_name,
            },
            Delivery::Except(&id),
        );
        let accepted = JoinAccepted {
            participant_id: id.clone(),
            token: token.to_string(),
            snapshot: self.snapshot_for(Some(&id)),
        };
        self.send(conn, Envelope::with_payload(MessageType::JoinAccepted, accepted));
    }

    fn check_rejoin(&mut self, req: &RejoinRequest) -> Result<String, RejoinRejectReason> {
        let token: SessionToken = req.token.parse().map_err(|_| RejoinRejectReason::BadToken)?;
        if !token.verify(&self.config.secret_key, &self.config.room_id) {
            return Err(RejoinRejectReason::BadToken);
        }
        let now = self.now();
        let p = self
            .participant(token.participant_id())
            .ok_or(RejoinRejectReason::UnknownParticipant)?;
        match p.state {
            ParticipantState::Left if p.left_reason == Some(LeaveReason::Expired) => Err(RejoinRejectReason::Expired),
            ParticipantState::Left => Err(RejoinRejectReason::BadToken),
            _ if p.token.as_ref() != Some(&token) => Err(RejoinRejectReason::BadToken),
            ParticipantState::Joined => Err(RejoinRejectReason::NotDisconnected),
            ParticipantState::Disconnected => {
                let id = p.id.clone();
                if now >= p.deadline.expect("disconnected participants have a deadline") {
                    self.depart(&id, LeaveReason::Expired);
                    Err(RejoinRejectReason::Expired)
                } else {
                    Ok(id)
                }
            }
        }
    }

    fn rejoin(&mut self, conn: ConnId, req: RejoinRequest) {
        if self.closed {
            let body = RejoinRejected {
                reason: RejoinRejectReason::Expired,
            };
            return self.send(conn, Envelope::with_payload(MessageType::RejoinRejected, body));
        }
        let id = match self.check_rejoin(&req) {
            Ok(id) => id,
            Err(reason) => {
                return self.send(conn, Envelope::with_payload(MessageType::RejoinRejected, RejoinRejected { reason }));
            }
        };
        self.transition(&id, ParticipantState::Joined);
        let p = self.participant_mut(&id).expect("checked");
        p.conn = Some(conn);
        p.deadline = None;
        if let Some(c) = self.conns.get_mut(&conn) {
            c.participant = Some(id.clone());
        }
        self.emit(
            RoomEventKind::ParticipantRejoined {
                participant_id: id.clone(),
            },
            Delivery::Except(&id),
        );
        let accepted = RejoinAccepted {
            participant_id: id.clone(),
            snapshot: self.snapshot_for(Some(&id)),
        };
        self.send(conn, Envelope::with_payload(MessageType::RejoinAccepted, accepted));
    }

    /// Joined or Disconnected -> Left.
    fn depart(&mut self, id: &str, reason: LeaveReason) {
        self.transition(id, ParticipantState::Left);
        let p = self.participant_mut(id).expect("known");
        p.token = None;
        p.deadline = None;
        p.left_reason = Some(reason);
        if let Some(conn) = p.conn.take() {
            self.conns.remove(&conn);
        }
        self.emit(
            RoomEventKind::ParticipantLeft {
                participant_id: id.to_owned(),
                reason,
            },
            Delivery::Except(id),
        );
    }

    fn connection_lost(&mut self, conn: ConnId) {
        let Some(c) = self.conns.remove(&conn) else { return };
        let Some(id) = c.participant.clone() else { return };
        drop(c);
        let deadline = self.now().saturating_add(self.config.session_timeout.as_millis() as Millis);
        self.transition(&id, ParticipantState::Disconnected);
        let p = self.participant_mut(&id).expect("known");
        p.conn = None;
        p.deadline = Some(deadline);
        self.emit(
            RoomEventKind::ParticipantDisconnected {
                participant_id: id,
                deadline,
            },
            Delivery::Everyone,
        );
    }

    fn sweep(&mut self, now: Millis) -> Vec<String> {
        let expired: Vec<String> = self
            .participants
            .iter()
            .filter(|p| p.state == ParticipantState::Disconnected && p.deadline.is_some_and(|d| now >= d))
            .map(|p| p.id.clone())
            .collect();
        for id in &expired {
            self.depart(id, LeaveReason::Expired);
        }
        expired
    }

    fn close(&mut self, reason: &str) {
        if self.closed {
            return;
        }
        self.emit(
            RoomEventKind::RoomClosed {
                reason: reason.to_owned(),
            },
            Delivery::Everyone,
        );
        self.closed = true;
        for task in self.accept_tasks.drain(..) {
            task.abort();
        }
        for p in &mut self.participants {
            p.conn = None;
        }
        self.conns.clear();
    }

    fn command(&mut self, cmd: Command) {
        match cmd {
            Command::Subscribe(reply) => {
                let (sub, rx) = subscription();
                if !self.closed {
                    self.subscribers.push(sub);
                }
                let _ = reply.send(rx);
            }
            Command::Publish {
                messages,
                digest,
                reply,
            } => {
                let _ = reply.send(self.publish(messages, digest));
            }
            Command::SetDigest(digest) => self.digest = digest,
            Command::SendEnvelope { to, envelope, reply } => {
                let result = match self.participant(&to) {
                    None => Err(RoomError::UnknownParticipant(to)),
                    Some(p) => match p.conn {
                        Some(conn) if !self.closed => {
                            self.send(conn, envelope);
                            Ok(true)
                        }
                        _ => Ok(false),
                    },
                };
                let _ = reply.send(result);
            }
            Command::RaiseAnomaly {
                offender,
                description,
                reply,
            } => {
                let result = if self.closed {
                    Err(RoomError::Closed)
                } else if self.participant(&offender).is_none() {
                    Err(RoomError::UnknownParticipant(offender))
                } else {
                    Ok(self.emit(
                        RoomEventKind::AnomalyDetected {
                            participant_id: offender,
                            description,
                        },
                        Delivery::Everyone,
                    ))
                };
                let _ = reply.send(result);
            }
            Command::Kick { participant_id, reply } => {
                let result = match self.participant(&participant_id).map(|p| p.state) {
                    None => Err(RoomError::UnknownParticipant(participant_id)),
                    Some(ParticipantState::Left) => Ok(()),
                    Some(_) => {
                        self.depart(&participant_id, LeaveReason::Kicked);
                        Ok(())
                    }
                };
                let _ = reply.send(result);
            }
            Command::Sweep { now, reply } => {
                let now = now.unwrap_or_else(|| self.now());
                let _ = reply.send(self.sweep(now));
            }
            Command::Snapshot(reply) => {
                let _ = reply.send(self.snapshot_for(None));
            }
            Command::Close { reason, reply } => {
                self.close(&reason);
                let _ = reply.send(());
            }
        }
    }

    fn publish(&mut self, messages: Vec<AppMessage>, digest: Option<StateDigest>) -> Result<Vec<u64>, RoomError> {
        if self.closed {
            return Err(RoomError::Closed);
        }
        for m in &messages {
            if let Audience::Only(id) | Audience::AllBut(id) = &m.audience {
                if self.participant(id).is_none() {
                    return Err(RoomError::UnknownParticipant(id.clone()));
                }
            }
        }
        let seqs = messages
            .into_iter()
            .map(|m| match m.audience {
                Audience::All => self.emit(
                    RoomEventKind::AppEvent {
                        payload: m.payload,
                        to: None,
                        except: None,
                        from: None,
                    },
                    Delivery::Everyone,
                ),
                Audience::Only(id) => self.emit(
                    RoomEventKind::AppEvent {
                        payload: m.payload,
                        to: Some(id.clone()),
                        except: None,
                        from: None,
                    },
                    Delivery::Only(&id),
                ),
                Audience::AllBut(id) => self.emit(
                    RoomEventKind::AppEvent {
                        payload: m.payload,
                        to: None,
                        except: Some(id.clone()),
                        from: None,
                    },
                    Delivery::Except(&id),
                ),
            })
            .collect();
        if let Some(d) = digest {
            self.digest = d;
        }
        Ok(seqs)
    }
}
