//! Uniform listen/connect/send/recv over interchangeable media.
//!
//! Every concrete transport yields the same [`Channel`]: a reliable, ordered,
//! duplex pipe of whole [`Frame`]s with a bounded outbound queue. Code above
//! this module never learns which medium it runs on except by reading an
//! [`EndpointAddress`].
//!
//! Concrete transports are obtained from a [`TransportFactory`] keyed by the
//! address scheme:
//!
//! - `mem`: in-process pairs through a namespace-scoped registry, with fault
//!   injection. Stands in for a second, incompatible medium in tests.
//! - `tcp`: length-prefixed frames as defined in [`crate::wire`].
//! - `ws`: one JSON envelope per WebSocket text message, subprotocol
//!   `roomkit.v1`.

mod address;
pub mod contract;
mod mem;
mod tcp;
mod ws;

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use thiserror::Error;
use tokio::sync::mpsc;
use tokio_util::sync::{CancellationToken, DropGuard};

pub use address::{EndpointAddress, Scheme};
pub use mem::{MemNamespace, MemTransport};
pub use tcp::TcpTransport;
pub use ws::{WsTransport, WS_SUBPROTOCOL};

use crate::wire::{Envelope, Frame, WireError};

/// Outbound frames a channel buffers before `send` suspends.
pub const CHANNEL_QUEUE_FRAMES: usize = 256;

pub const DEFAULT_CONNECT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("address in use: {0}")]
    AddressInUse(String),
    #[error("unsupported scheme: {0}")]
    UnsupportedScheme(String),
    #[error("invalid address: {0}")]
    InvalidAddress(String),
    #[error("connection refused: {0}")]
    ConnectionRefused(String),
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("channel closed")]
    ChannelClosed,
    #[error("listener closed")]
    ListenerClosed,
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Wire(#[from] WireError),
}

impl TransportError {
    fn from_io(err: std::io::Error, target: &str) -> Self {
        match err.kind() {
            std::io::ErrorKind::ConnectionRefused => TransportError::ConnectionRefused(target.to_owned()),
            std::io::ErrorKind::AddrInUse => TransportError::AddressInUse(target.to_owned()),
            _ => TransportError::Io(format!("{target}: {err}")),
        }
    }
}

/// Faults the in-memory transport can inject.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// The link drops: both ends see `Closed`, in-flight frames are lost.
    Disconnect,
}

type Incoming = Result<Frame, TransportError>;

/// Sending half of a channel.
#[derive(Clone)]
pub struct ChannelSender {
    tx: Option<mpsc::Sender<Incoming>>,
    fault: Option<CancellationToken>,
    peer: EndpointAddress,
}

impl ChannelSender {
    pub fn peer(&self) -> &EndpointAddress {
        &self.peer
    }

    /// Queues a frame. Suspends while the outbound queue is full.
    pub async fn send(&self, frame: Frame) -> Result<(), TransportError> {
        if self.fault.as_ref().is_some_and(|f| f.is_cancelled()) {
            return Err(TransportError::ChannelClosed);
        }
        let tx = self.tx.as_ref().ok_or(TransportError::ChannelClosed)?;
        tx.send(Ok(frame)).await.map_err(|_| TransportError::ChannelClosed)
    }

    pub async fn send_envelope(&self, envelope: &Envelope) -> Result<(), TransportError> {
        self.send(Frame::from_envelope(envelope)?).await
    }

    /// Graceful close of the outbound direction. Queued frames are still
    /// delivered, then the peer observes `Closed`. WebSocket has no
    /// half-close, so on `ws` this ends the connection in both directions.
    pub fn close(&mut self) {
        self.tx = None;
    }

    pub fn is_closed(&self) -> bool {
        self.tx.as_ref().is_none_or(|tx| tx.is_closed())
            || self.fault.as_ref().is_some_and(|f| f.is_cancelled())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RecvState {
    Open,
    /// `Closed` has been handed out once.
    Finished,
}

/// Receiving half of a channel.
pub struct ChannelReceiver {
    rx: mpsc::Receiver<Incoming>,
    fault: Option<CancellationToken>,
    state: RecvState,
    // Stops the transport's reader task when this half goes away.
    _reader: Option<DropGuard>,
}

impl ChannelReceiver {
    /// Next frame in send order. `Ok(None)` is returned exactly once when the
    /// channel closes; any further call is `Err(ChannelClosed)`. A wire
    /// violation is surfaced as an error and terminates the channel.
    pub async fn recv(&mut self) -> Result<Option<Frame>, TransportError> {
        if self.state == RecvState::Finished {
            return Err(TransportError::ChannelClosed);
        }
        let item = match &self.fault {
            Some(fault) => tokio::select! {
                biased;
                _ = fault.cancelled() => None,
                item = self.rx.recv() => item,
            },
            None => self.rx.recv().await,
        };
        match item {
            Some(Ok(frame)) => Ok(Some(frame)),
            Some(Err(e)) => {
                self.rx.close();
                Err(e)
            }
            None => {
                self.state = RecvState::Finished;
                self.rx.close();
                Ok(None)
            }
        }
    }

    /// Like [`recv`](Self::recv) but parses the frame as an envelope.
    pub async fn recv_envelope(&mut self) -> Result<Option<Envelope>, TransportError> {
        match self.recv().await? {
            Some(frame) => match frame.to_envelope() {
                Ok(env) => Ok(Some(env)),
                Err(e) => {
                    self.rx.close();
                    Err(e.into())
                }
            },
            None => Ok(None),
        }
    }

    fn close(&mut self) {
        self.rx.close();
        if let Some(guard) = self._reader.take() {
            drop(guard);
        }
    }
}

/// A reliable, ordered, duplex frame pipe to one peer.
pub struct Channel {
    sender: ChannelSender,
    receiver: ChannelReceiver,
    scheme: Scheme,
}

impl Channel {
    pub(crate) fn from_parts(
        scheme: Scheme,
        peer: EndpointAddress,
        tx: mpsc::Sender<Incoming>,
        rx: mpsc::Receiver<Incoming>,
        fault: Option<CancellationToken>,
        reader: Option<DropGuard>,
    ) -> Channel {
        Channel {
            sender: ChannelSender {
                tx: Some(tx),
                fault: fault.clone(),
                peer,
            },
            receiver: ChannelReceiver {
                rx,
                fault,
                state: RecvState::Open,
                _reader: reader,
            },
            scheme,
        }
    }

    pub fn peer(&self) -> &EndpointAddress {
        &self.sender.peer
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub async fn send(&self, frame: Frame) -> Result<(), TransportError> {
        self.sender.send(frame).await
    }

    pub async fn send_envelope(&self, envelope: &Envelope) -> Result<(), TransportError> {
        self.sender.send_envelope(envelope).await
    }

    pub async fn recv(&mut self) -> Result<Option<Frame>, TransportError> {
        self.receiver.recv().await
    }

    pub async fn recv_envelope(&mut self) -> Result<Option<Envelope>, TransportError> {
        self.receiver.recv_envelope().await
    }

    /// Closes both directions. The peer drains what was already sent and
    /// then sees `Closed`; this end's next `recv` reports `Closed`.
    pub fn close(&mut self) {
        self.sender.close();
        self.receiver.close();
    }

    /// Injects a link fault. Only the `mem` transport supports this.
    pub fn simulate_fault(&self, fault: Fault) -> Result<(), TransportError> {
        match (&self.sender.fault, fault) {
            (Some(token), Fault::Disconnect) if self.scheme == Scheme::Mem => {
                token.cancel();
                Ok(())
            }
            _ => Err(TransportError::UnsupportedScheme(self.scheme.to_string())),
        }
    }

    /// A handle that can inject a fault after the channel has been split.
    pub fn fault_handle(&self) -> Option<FaultHandle> {
        self.sender.fault.clone().map(FaultHandle)
    }

    pub fn split(self) -> (ChannelSender, ChannelReceiver) {
        (self.sender, self.receiver)
    }
}

impl std::fmt::Debug for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Channel").field("peer", self.peer()).finish()
    }
}

/// Fault injector for a `mem` channel.
#[derive(Clone)]
pub struct FaultHandle(CancellationToken);

impl FaultHandle {
    pub fn inject(&self, fault: Fault) {
        match fault {
            Fault::Disconnect => self.0.cancel(),
        }
    }
}

/// Accepts incoming channels in arrival order.
pub struct Listener {
    local: EndpointAddress,
    incoming: mpsc::UnboundedReceiver<Channel>,
    _registration: Box<dyn Send + Sync>,
}

impl Listener {
    pub(crate) fn new(
        local: EndpointAddress,
        incoming: mpsc::UnboundedReceiver<Channel>,
        registration: Box<dyn Send + Sync>,
    ) -> Listener {
        Listener {
            local,
            incoming,
            _registration: registration,
        }
    }

    /// The bound address; for port 0 this carries the OS-assigned port.
    pub fn local_addr(&self) -> &EndpointAddress {
        &self.local
    }

    pub async fn accept(&mut self) -> Result<Channel, TransportError> {
        self.incoming.recv().await.ok_or(TransportError::ListenerClosed)
    }
}

impl std::fmt::Debug for Listener {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Listener").field("local", &self.local).finish()
    }
}

/// One concrete medium.
#[async_trait]
pub trait Transport: Send + Sync {
    fn scheme(&self) -> Scheme;

    async fn listen(&self, addr: &EndpointAddress) -> Result<Listener, TransportError>;

    async fn connect(&self, addr: &EndpointAddress) -> Result<Channel, TransportError>;
}

/// Hands out the concrete transport for an address scheme.
#[derive(Clone)]
pub struct TransportFactory {
    mem: Arc<MemTransport>,
    tcp: Arc<TcpTransport>,
    ws: Arc<WsTransport>,
}

impl Default for TransportFactory {
    fn default() -> Self {
        TransportFactory::new()
    }
}

impl TransportFactory {
    /// A factory with its own fresh `mem` namespace.
    pub fn new() -> Self {
        TransportFactory::with_namespace(MemNamespace::new())
    }

    pub fn with_namespace(namespace: MemNamespace) -> Self {
        TransportFactory::with_options(namespace, DEFAULT_CONNECT_TIMEOUT)
    }

    pub fn with_options(namespace: MemNamespace, connect_timeout: Duration) -> Self {
        TransportFactory {
            mem: Arc::new(MemTransport::new(namespace)),
            tcp: Arc::new(TcpTransport::new(connect_timeout)),
            ws: Arc::new(WsTransport::new(connect_timeout)),
        }
    }

    pub fn mem_namespace(&self) -> &MemNamespace {
        self.mem.namespace()
    }

    pub fn transport(&self, scheme: Scheme) -> Arc<dyn Transport> {
        match scheme {
            Scheme::Mem => self.mem.clone(),
            Scheme::Tcp => self.tcp.clone(),
            Scheme::Ws => self.ws.clone(),
        }
    }

    pub async fn listen(&self, addr: &EndpointAddress) -> Result<Listener, TransportError> {
        self.transport(addr.scheme()).listen(addr).await
    }

    pub async fn connect(&self, addr: &EndpointAddress) -> Result<Channel, TransportError> {
        self.transport(addr.scheme()).connect(addr).await
    }
}

/// The transport-side ends of a [`Channel`]'s queues, driven by a concrete
/// transport's reader and writer tasks.
pub(crate) struct PumpHalves {
    pub out_rx: mpsc::Receiver<Incoming>,
    pub in_tx: mpsc::Sender<Incoming>,
    pub stop: CancellationToken,
}

pub(crate) fn pump_channel(scheme: Scheme, peer: EndpointAddress) -> (Channel, PumpHalves) {
    let (out_tx, out_rx) = mpsc::channel(CHANNEL_QUEUE_FRAMES);
    let (in_tx, in_rx) = mpsc::channel(CHANNEL_QUEUE_FRAMES);
    let stop = CancellationToken::new();
    let channel = Channel::from_parts(scheme, peer, out_tx, in_rx, None, Some(stop.clone().drop_guard()));
    (channel, PumpHalves { out_rx, in_tx, stop })
}
