use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::Value;
use thiserror::Error;
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;

use super::events::{subscription, Subscriber};
use super::protocol::{
    ClientAppBody, ClientAppEvent, ErrorBody, JoinAccepted, JoinRejected, JoinRequest, RejoinAccepted, RejoinRejected,
    RejoinRequest, RpcRequest,
};
use super::{JoinRejectReason, RejoinRejectReason, RoomEvent, RoomSnapshot, Subscription};
use crate::transport::{Channel, ChannelReceiver, ChannelSender, FaultHandle, TransportError};
use crate::wire::{Envelope, MessageType};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("join rejected: {0:?}")]
    JoinRejected(JoinRejectReason),
    #[error("rejoin rejected: {0:?}")]
    RejoinRejected(RejoinRejectReason),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("remote error: {}", .0.reason)]
    Remote(ErrorBody),
    #[error("connection to the room is closed")]
    Closed,
}

/// Everything the room pushes to a client, in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientFeedItem {
    Event(RoomEvent),
    /// An rpc the room's application wants answered via
    /// [`ClientRoom::respond`] with the same `cid`.
    Request { cid: u64, method: String, params: Value },
    Error(ErrorBody),
    /// The connection ended; nothing follows.
    Closed,
}

type Pending = Mutex<HashMap<u64, oneshot::Sender<Result<Value, ErrorBody>>>>;

struct Shared {
    subscribers: Mutex<Vec<Subscriber>>,
    pending: Pending,
}

struct TaskGuard(JoinHandle<()>);

impl Drop for TaskGuard {
    fn drop(&mut self) {
        self.0.abort();
    }
}

struct Inner {
    participant_id: String,
    token: String,
    snapshot: RoomSnapshot,
    sender: Mutex<Option<ChannelSender>>,
    shared: Arc<Shared>,
    feed: Mutex<Option<mpsc::UnboundedReceiver<ClientFeedItem>>>,
    next_cid: AtomicU64,
    fault: Option<FaultHandle>,
    _dispatch: TaskGuard,
}

/// Client-side proxy of a room. Cheap to clone; the connection closes
/// (without a `leave`) when the last clone is dropped.
#[derive(Clone)]
pub struct ClientRoom {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for ClientRoom {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientRoom")
            .field("participant_id", &self.inner.participant_id)
            .finish()
    }
}

async fn handshake(channel: Channel, request: Envelope) -> Result<(Envelope, ChannelSender, ChannelReceiver, Option<FaultHandle>), ClientError> {
    let fault = channel.fault_handle();
    let (tx, mut rx) = channel.split();
    tx.send_envelope(&request).await?;
    match rx.recv_envelope().await? {
        None => Err(ClientError::Closed),
        Some(env) if env.kind == MessageType::Error => {
            let body = env.payload_as::<ErrorBody>().map_err(|e| ClientError::Protocol(e.to_string()))?;
            Err(ClientError::Remote(body))
        }
        Some(env) => Ok((env, tx, rx, fault)),
    }
}

fn protocol(e: serde_json::Error) -> ClientError {
    ClientError::Protocol(e.to_string())
}

pub async fn client_join(channel: Channel, display_name: &str) -> Result<ClientRoom, ClientError> {
    let request = Envelope::with_payload(
        MessageType::JoinRequest,
        JoinRequest {
            display_name: display_name.to_owned(),
        },
    );
    let (reply, tx, rx, fault) = handshake(channel, request).await?;
    match reply.kind {
        MessageType::JoinAccepted => {
            let a: JoinAccepted = reply.payload_as().map_err(protocol)?;
            Ok(ClientRoom::start(a.participant_id, a.token, a.snapshot, tx, rx, fault))
        }
        MessageType::JoinRejected => {
            let r: JoinRejected = reply.payload_as().map_err(protocol)?;
            Err(ClientError::JoinRejected(r.reason))
        }
        other => Err(ClientError::Protocol(format!("unexpected {other} during join"))),
    }
}

pub async fn client_rejoin(channel: Channel, token: &str) -> Result<ClientRoom, ClientError> {
    let request = Envelope::with_payload(
        MessageType::RejoinRequest,
        RejoinRequest {
            token: token.to_owned(),
        },
    );
    let (reply, tx, rx, fault) = handshake(channel, request).await?;
    match reply.kind {
        MessageType::RejoinAccepted => {
            let a: RejoinAccepted = reply.payload_as().map_err(protocol)?;
            Ok(ClientRoom::start(a.participant_id, token.to_owned(), a.snapshot, tx, rx, fault))
        }
        MessageType::RejoinRejected => {
            let r: RejoinRejected = reply.payload_as().map_err(protocol)?;
            Err(ClientError::RejoinRejected(r.reason))
        }
        other => Err(ClientError::Protocol(format!("unexpected {other} during rejoin"))),
    }
}

async fn dispatch(mut rx: ChannelReceiver, shared: Arc<Shared>, feed: mpsc::UnboundedSender<ClientFeedItem>) {
    loop {
        let env = match rx.recv_envelope().await {
            Ok(Some(env)) => env,
            Ok(None) | Err(_) => break,
        };
        match env.kind {
            MessageType::RoomEvent => match env.payload_as::<RoomEvent>() {
                Ok(ev) => {
                    shared.subscribers.lock().unwrap().retain(|s| s.deliver(&ev));
                    let _ = feed.send(ClientFeedItem::Event(ev));
                }
                Err(e) => log::warn!("unreadable room event: {e}"),
            },
            MessageType::RpcRequest => match (env.cid, env.payload_as::<RpcRequest>()) {
                (Some(cid), Ok(req)) => {
                    let _ = feed.send(ClientFeedItem::Request {
                        cid,
                        method: req.method,
                        params: req.params,
                    });
                }
                _ => log::warn!("unreadable rpc request"),
            },
            MessageType::RpcResponse => {
                let waiter = env.cid.and_then(|cid| shared.pending.lock().unwrap().remove(&cid));
                match waiter {
                    Some(w) => {
                        let _ = w.send(Ok(Value::Object(env.payload)));
                    }
                    None => log::warn!("ignoring rpc response with unknown cid {:?}", env.cid),
                }
            }
            MessageType::Error => {
                let body = env
                    .payload_as::<ErrorBody>()
                    .unwrap_or_else(|e| ErrorBody::new("unreadable_error", e.to_string()));
                let waiter = env.cid.and_then(|cid| shared.pending.lock().unwrap().remove(&cid));
                match waiter {
                    Some(w) => {
                        let _ = w.send(Err(body));
                    }
                    None => {
                        let _ = feed.send(ClientFeedItem::Error(body));
                    }
                }
            }
            other => log::debug!("ignoring {other} from room"),
        }
    }
    shared.subscribers.lock().unwrap().clear();
    shared.pending.lock().unwrap().clear();
    let _ = feed.send(ClientFeedItem::Closed);
}

impl ClientRoom {
    fn start(
        participant_id: String,
        token: String,
        snapshot: RoomSnapshot,
        tx: ChannelSender,
        rx: ChannelReceiver,
        fault: Option<FaultHandle>,
    ) -> ClientRoom {
        let shared = Arc::new(Shared {
            subscribers: Mutex::new(Vec::new()),
            pending: Mutex::new(HashMap::new()),
        });
        let (feed_tx, feed_rx) = mpsc::unbounded_channel();
        let task = tokio::spawn(dispatch(rx, shared.clone(), feed_tx));
        ClientRoom {
            inner: Arc::new(Inner {
                participant_id,
                token,
                snapshot,
                sender: Mutex::new(Some(tx)),
                shared,
                feed: Mutex::new(Some(feed_rx)),
                next_cid: AtomicU64::new(1),
                fault,
                _dispatch: TaskGuard(task),
            }),
        }
    }

    pub fn participant_id(&self) -> &str {
        &self.inner.participant_id
    }

    /// The session token in its textual form, for a later rejoin.
    pub fn token(&self) -> &str {
        &self.inner.token
    }

    /// The snapshot received when joining or rejoining.
    pub fn snapshot(&self) -> &RoomSnapshot {
        &self.inner.snapshot
    }

    pub fn room_id(&self) -> &str {
        &self.inner.snapshot.room_id
    }

    /// Room events from now on.
    pub fn subscribe(&self) -> Subscription {
        let (sub, rx) = subscription();
        self.inner.shared.subscribers.lock().unwrap().push(sub);
        rx
    }

    /// The ordered feed of events and requests, buffered since the join.
    /// Can be taken once.
    pub fn take_feed(&self) -> Option<mpsc::UnboundedReceiver<ClientFeedItem>> {
        self.inner.feed.lock().unwrap().take()
    }

    fn sender(&self) -> Result<ChannelSender, ClientError> {
        self.inner.sender.lock().unwrap().clone().ok_or(ClientError::Closed)
    }

    pub async fn send_envelope(&self, envelope: &Envelope) -> Result<(), ClientError> {
        Ok(self.sender()?.send_envelope(envelope).await?)
    }

    /// Broadcasts an application payload to every participant.
    pub async fn send(&self, payload: Value) -> Result<(), ClientError> {
        let body = ClientAppEvent {
            variant: "app_event".into(),
            body: ClientAppBody { payload },
        };
        self.send_envelope(&Envelope::with_payload(MessageType::RoomEvent, body)).await
    }

    /// Answers an rpc request received on the feed.
    pub async fn respond(&self, cid: u64, result: Value) -> Result<(), ClientError> {
        self.send_envelope(&Envelope::with_payload(MessageType::RpcResponse, result).with_cid(cid))
            .await
    }

    /// Calls a method on the room's application and waits for its answer.
    pub async fn call(&self, method: &str, params: Value) -> Result<Value, ClientError> {
        let cid = self.inner.next_cid.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = oneshot::channel();
        self.inner.shared.pending.lock().unwrap().insert(cid, tx);
        let req = RpcRequest {
            method: method.to_owned(),
            params,
        };
        if let Err(e) = self
            .send_envelope(&Envelope::with_payload(MessageType::RpcRequest, req).with_cid(cid))
            .await
        {
            self.inner.shared.pending.lock().unwrap().remove(&cid);
            return Err(e);
        }
        match rx.await {
            Ok(Ok(v)) => Ok(v),
            Ok(Err(body)) => Err(ClientError::Remote(body)),
            Err(_) => Err(ClientError::Closed),
        }
    }

    /// Leaves for good: the token stops working.
    pub async fn leave(&self) -> Result<(), ClientError> {
        let sender = self.sender()?;
        let sent = sender.send_envelope(&Envelope::new(MessageType::Leave)).await;
        drop(sender);
        self.disconnect();
        Ok(sent?)
    }

    /// Drops the connection without leaving; the seat is held until the
    /// session timeout.
    pub fn disconnect(&self) {
        self.inner.sender.lock().unwrap().take();
    }

    /// Fault injection, available on `mem` connections only.
    pub fn fault_handle(&self) -> Option<FaultHandle> {
        self.inner.fault.clone()
    }
}
