use std::net::SocketAddr;
use std::time::Duration;

use async_trait::async_trait;
use tokio::io::AsyncWriteExt;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio_util::sync::CancellationToken;

use super::{pump_channel, Channel, EndpointAddress, Listener, PumpHalves, Scheme, Transport, TransportError};
use crate::wire::{read_frame, write_frame, ReadFrameError};

/// Raw length-prefixed frames over TCP.
pub struct TcpTransport {
    connect_timeout: Duration,
}

impl TcpTransport {
    pub fn new(connect_timeout: Duration) -> Self {
        TcpTransport { connect_timeout }
    }
}

pub(crate) async fn bind(addr: &EndpointAddress) -> Result<(TcpListener, EndpointAddress), TransportError> {
    let target = addr
        .socket_target()
        .ok_or_else(|| TransportError::UnsupportedScheme(addr.scheme().to_string()))?;
    let listener = TcpListener::bind(&target)
        .await
        .map_err(|e| TransportError::from_io(e, &target))?;
    let port = listener
        .local_addr()
        .map_err(|e| TransportError::from_io(e, &target))?
        .port();
    Ok((listener, addr.with_port(port)))
}

pub(crate) async fn dial(addr: &EndpointAddress, timeout: Duration) -> Result<TcpStream, TransportError> {
    let target = addr
        .socket_target()
        .ok_or_else(|| TransportError::UnsupportedScheme(addr.scheme().to_string()))?;
    let stream = tokio::time::timeout(timeout, TcpStream::connect(&target))
        .await
        .map_err(|_| TransportError::Timeout(addr.to_string()))?
        .map_err(|e| TransportError::from_io(e, &addr.to_string()))?;
    let _ = stream.set_nodelay(true);
    Ok(stream)
}

pub(crate) fn peer_address(scheme: Scheme, peer: SocketAddr) -> EndpointAddress {
    let host = peer.ip().to_string();
    match scheme {
        Scheme::Ws => EndpointAddress::ws(host, peer.port()),
        _ => EndpointAddress::tcp(host, peer.port()),
    }
}

fn spawn_stream_channel(stream: TcpStream, peer: EndpointAddress) -> Channel {
    let (channel, PumpHalves { mut out_rx, in_tx, stop }) = pump_channel(Scheme::Tcp, peer);
    let (mut rd, mut wr) = stream.into_split();

    tokio::spawn(async move {
        while let Some(item) = out_rx.recv().await {
            let Ok(frame) = item else { continue };
            if write_frame(&mut wr, &frame).await.is_err() {
                return;
            }
        }
        let _ = wr.shutdown().await;
    });

    tokio::spawn(async move {
        loop {
            let item = tokio::select! {
                _ = stop.cancelled() => return,
                read = read_frame(&mut rd) => read,
            };
            let item = match item {
                Ok(Some(frame)) => Ok(frame),
                Ok(None) | Err(ReadFrameError::Io(_)) => return,
                Err(ReadFrameError::Wire(e)) => {
                    log::warn!("closing tcp channel: {e}");
                    Err(e.into())
                }
            };
            let fatal = item.is_err();
            tokio::select! {
                _ = stop.cancelled() => return,
                sent = in_tx.send(item) => if sent.is_err() { return },
            }
            if fatal {
                return;
            }
        }
    });

    channel
}

/// Runs an accept loop, turning each accepted stream into a channel with
/// `make`, until `stop` fires.
pub(crate) fn spawn_accept_loop<F, Fut>(listener: TcpListener, stop: CancellationToken, make: F) -> mpsc::UnboundedReceiver<Channel>
where
    F: Fn(TcpStream, SocketAddr) -> Fut + Send + 'static,
    Fut: std::future::Future<Output = Option<Channel>> + Send,
{
    let (tx, rx) = mpsc::unbounded_channel();
    tokio::spawn(async move {
        loop {
            let accepted = tokio::select! {
                _ = stop.cancelled() => return,
                accepted = listener.accept() => accepted,
            };
            match accepted {
                Ok((stream, peer)) => {
                    let _ = stream.set_nodelay(true);
                    let made = tokio::select! {
                        _ = stop.cancelled() => return,
                        made = make(stream, peer) => made,
                    };
                    if let Some(channel) = made {
                        if tx.send(channel).is_err() {
                            return;
                        }
                    }
                }
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    tokio::time::sleep(Duration::from_millis(50)).await;
                }
            }
        }
    });
    rx
}

#[async_trait]
impl Transport for TcpTransport {
    fn scheme(&self) -> Scheme {
        Scheme::Tcp
    }

    async fn listen(&self, addr: &EndpointAddress) -> Result<Listener, TransportError> {
        if addr.scheme() != Scheme::Tcp {
            return Err(TransportError::UnsupportedScheme(addr.scheme().to_string()));
        }
        let (listener, local) = bind(addr).await?;
        let stop = CancellationToken::new();
        let incoming = spawn_accept_loop(listener, stop.clone(), |stream, peer| async move {
            Some(spawn_stream_channel(stream, peer_address(Scheme::Tcp, peer)))
        });
        Ok(Listener::new(local, incoming, Box::new(stop.drop_guard())))
    }

    async fn connect(&self, addr: &EndpointAddress) -> Result<Channel, TransportError> {
        if addr.scheme() != Scheme::Tcp {
            return Err(TransportError::UnsupportedScheme(addr.scheme().to_string()));
        }
        let stream = dial(addr, self.connect_timeout).await?;
        Ok(spawn_stream_channel(stream, addr.clone()))
    }
}
