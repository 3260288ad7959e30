use std::time::Duration;

use async_trait::async_trait;
use futures::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::client::IntoClientRequest;
use tokio_tungstenite::tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tokio_tungstenite::tungstenite::http::{HeaderValue, StatusCode};
use tokio_tungstenite::tungstenite::protocol::WebSocketConfig;
use tokio_tungstenite::tungstenite::{Error as WsError, Message};
use tokio_tungstenite::WebSocketStream;
use tokio_util::sync::CancellationToken;

use super::tcp::{bind, dial, peer_address, spawn_accept_loop};
use super::{pump_channel, Channel, EndpointAddress, Listener, PumpHalves, Scheme, Transport, TransportError};
use crate::wire::{Frame, WireError, MAX_FRAME_LEN};

/// WebSocket subprotocol offered by clients and echoed by the server.
pub const WS_SUBPROTOCOL: &str = "roomkit.v1";

const SUBPROTOCOL_HEADER: &str = "Sec-WebSocket-Protocol";

/// One envelope per WebSocket text message; no length prefix.
pub struct WsTransport {
    connect_timeout: Duration,
}

impl WsTransport {
    pub fn new(connect_timeout: Duration) -> Self {
        WsTransport { connect_timeout }
    }
}

fn ws_config() -> WebSocketConfig {
    // Room above the frame cap so an oversize message is read and reported
    // as OversizeFrame rather than as a protocol error.
    WebSocketConfig::default()
        .max_message_size(Some(2 * MAX_FRAME_LEN))
        .max_frame_size(Some(2 * MAX_FRAME_LEN))
}

#[allow(clippy::result_large_err)]
fn negotiate(request: &Request, mut response: Response) -> Result<Response, ErrorResponse> {
    let Some(offered) = request.headers().get(SUBPROTOCOL_HEADER) else {
        return Ok(response);
    };
    let ours = offered
        .to_str()
        .unwrap_or_default()
        .split(',')
        .any(|p| p.trim() == WS_SUBPROTOCOL);
    if !ours {
        let mut reject = ErrorResponse::new(Some(format!("subprotocol {WS_SUBPROTOCOL} required")));
        *reject.status_mut() = StatusCode::BAD_REQUEST;
        return Err(reject);
    }
    response
        .headers_mut()
        .insert(SUBPROTOCOL_HEADER, HeaderValue::from_static(WS_SUBPROTOCOL));
    Ok(response)
}

fn spawn_ws_channel<S>(ws: WebSocketStream<S>, peer: EndpointAddress) -> Channel
where
    S: tokio::io::AsyncRead + tokio::io::AsyncWrite + Unpin + Send + 'static,
{
    let (channel, PumpHalves { mut out_rx, in_tx, stop }) = pump_channel(Scheme::Ws, peer);
    let (mut sink, mut stream) = ws.split();

    tokio::spawn(async move {
        while let Some(item) = out_rx.recv().await {
            let Ok(frame) = item else { continue };
            let text = String::from_utf8(frame.into_payload()).unwrap_or_default();
            if sink.send(Message::text(text)).await.is_err() {
                return;
            }
        }
        let _ = sink.close().await;
    });

    tokio::spawn(async move {
        loop {
            let next = tokio::select! {
                _ = stop.cancelled() => return,
                next = stream.next() => next,
            };
            let item = match next {
                None | Some(Ok(Message::Close(_))) => return,
                Some(Ok(Message::Text(text))) => Frame::new(text.as_bytes().to_vec()).map_err(TransportError::from),
                Some(Ok(Message::Binary(_))) => Err(WireError::MalformedFrame("binary websocket message".into()).into()),
                Some(Ok(_)) => continue,
                Some(Err(WsError::Capacity(_))) => Err(WireError::OversizeFrame(2 * MAX_FRAME_LEN).into()),
                Some(Err(_)) => return,
            };
            let fatal = item.is_err();
            if let Err(e) = &item {
                log::warn!("closing ws channel: {e}");
            }
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

#[async_trait]
impl Transport for WsTransport {
    fn scheme(&self) -> Scheme {
        Scheme::Ws
    }

    async fn listen(&self, addr: &EndpointAddress) -> Result<Listener, TransportError> {
        if addr.scheme() != Scheme::Ws {
            return Err(TransportError::UnsupportedScheme(addr.scheme().to_string()));
        }
        let (listener, local) = bind(addr).await?;
        let stop = CancellationToken::new();
        let handshake_timeout = self.connect_timeout;
        let incoming = spawn_accept_loop(listener, stop.clone(), move |stream: TcpStream, peer| async move {
            let handshake = tokio_tungstenite::accept_hdr_async_with_config(stream, negotiate, Some(ws_config()));
            match tokio::time::timeout(handshake_timeout, handshake).await {
                Ok(Ok(ws)) => Some(spawn_ws_channel(ws, peer_address(Scheme::Ws, peer))),
                Ok(Err(e)) => {
                    log::debug!("websocket handshake from {peer} failed: {e}");
                    None
                }
                Err(_) => {
                    log::debug!("websocket handshake from {peer} timed out");
                    None
                }
            }
        });
        Ok(Listener::new(local, incoming, Box::new(stop.drop_guard())))
    }

    async fn connect(&self, addr: &EndpointAddress) -> Result<Channel, TransportError> {
        if addr.scheme() != Scheme::Ws {
            return Err(TransportError::UnsupportedScheme(addr.scheme().to_string()));
        }
        let stream = dial(addr, self.connect_timeout).await?;
        let target = addr.socket_target().unwrap_or_default();
        let mut request = format!("ws://{target}/")
            .into_client_request()
            .map_err(|e| TransportError::InvalidAddress(format!("{addr}: {e}")))?;
        request
            .headers_mut()
            .insert(SUBPROTOCOL_HEADER, HeaderValue::from_static(WS_SUBPROTOCOL));
        let handshake = tokio_tungstenite::client_async_with_config(request, stream, Some(ws_config()));
        let (ws, _response) = tokio::time::timeout(self.connect_timeout, handshake)
            .await
            .map_err(|_| TransportError::Timeout(addr.to_string()))?
            .map_err(|e| TransportError::Handshake(e.to_string()))?;
        Ok(spawn_ws_channel(ws, addr.clone()))
    }
}
