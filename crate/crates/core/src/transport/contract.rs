//! Behavioral contract every [`Transport`](super::Transport) must satisfy.
//!
//! The same check bodies run against each scheme; only the addresses differ.
//! Each check returns `Err(description)` on the first violation.

use std::time::Duration;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::json;

use super::{Channel, EndpointAddress, TransportError, TransportFactory};
use crate::wire::{Envelope, Frame, MessageType, MAX_FRAME_LEN};

/// Where to run the suite: an address to listen on (port 0 allowed) and an
/// address nobody listens on.
#[derive(Clone)]
pub struct ContractTarget {
    pub factory: TransportFactory,
    pub listen: EndpointAddress,
    pub unbound: EndpointAddress,
}

pub type CheckResult = Result<(), String>;

const STEP: Duration = Duration::from_secs(10);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

async fn step<T, E: std::fmt::Debug>(what: &str, fut: impl std::future::Future<Output = Result<T, E>>) -> Result<T, String> {
    match tokio::time::timeout(STEP, fut).await {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(format!("{what}: {e:?}")),
        Err(_) => Err(format!("{what}: timed out")),
    }
}

/// Listens and returns a connected (client, server) pair.
pub async fn connected_pair(target: &ContractTarget) -> Result<(Channel, Channel, super::Listener), String> {
    let mut listener = step("listen", target.factory.listen(&target.listen)).await?;
    let addr = connect_addr(listener.local_addr());
    let client = step("connect", target.factory.connect(&addr)).await?;
    let server = step("accept", listener.accept()).await?;
    Ok((client, server, listener))
}

// A wildcard bind address is not dialable; go through loopback instead.
fn connect_addr(local: &EndpointAddress) -> EndpointAddress {
    match local.socket_target() {
        Some(t) if t.starts_with("0.0.0.0:") => local.with_host("127.0.0.1"),
        _ => local.clone(),
    }
}

fn numbered(n: u64) -> Frame {
    Frame::from_envelope(&Envelope::with_payload(MessageType::RoomEvent, json!({ "n": n }))).expect("small frame")
}

/// Deterministic pseudo-random frames; the same seed yields the same bytes
/// on every transport.
pub fn seeded_frames(seed: u64, count: usize) -> Vec<Frame> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let len = match rng.gen_range(0..10) {
                0 => rng.gen_range(1_000..20_000),
                _ => rng.gen_range(0..200),
            };
            let text: String = (0..len).map(|_| rng.gen_range(' '..='~')).collect();
            let mut env = Envelope::with_payload(
                MessageType::KNOWN[rng.gen_range(0..MessageType::KNOWN.len())].clone(),
                json!({ "i": i, "text": text, "x": rng.gen::<u32>() }),
            );
            if rng.gen_bool(0.5) || matches!(env.kind, MessageType::RpcRequest | MessageType::RpcResponse) {
                env.cid = Some(rng.gen());
            }
            if rng.gen_bool(0.5) {
                env.from = Some(format!("p{}", rng.gen_range(1..10)));
            }
            Frame::from_envelope(&env).expect("generated frame within cap")
        })
        .collect()
}

/// The largest legal frame: exactly [`MAX_FRAME_LEN`] payload bytes.
pub fn boundary_frame() -> Frame {
    let base = Envelope::with_payload(MessageType::RoomEvent, json!({ "pad": "" }));
    let overhead = base.to_json_bytes().expect("base").len();
    let env = Envelope::with_payload(MessageType::RoomEvent, json!({ "pad": "z".repeat(MAX_FRAME_LEN - overhead) }));
    let frame = Frame::from_envelope(&env).expect("boundary frame");
    assert_eq!(frame.len(), MAX_FRAME_LEN);
    frame
}

pub async fn check_pairing(target: &ContractTarget) -> CheckResult {
    let (mut client, mut server, _l) = connected_pair(target).await?;
    step("send c->s", client.send(numbered(1))).await?;
    let got = step("recv s", server.recv()).await?;
    ensure!(got == Some(numbered(1)), "server got {got:?}");
    step("send s->c", server.send(numbered(2))).await?;
    let got = step("recv c", client.recv()).await?;
    ensure!(got == Some(numbered(2)), "client got {got:?}");
    Ok(())
}

pub async fn check_ordering(target: &ContractTarget) -> CheckResult {
    let (mut client, mut server, _l) = connected_pair(target).await?;
    for n in 1..=3 {
        step("send", client.send(numbered(n))).await?;
        step("send", server.send(numbered(10 + n))).await?;
    }
    for n in 1..=3 {
        let got = step("recv", server.recv()).await?;
        ensure!(got == Some(numbered(n)), "server expected {n}, got {got:?}");
        let got = step("recv", client.recv()).await?;
        ensure!(got == Some(numbered(10 + n)), "client expected {}, got {got:?}", 10 + n);
    }
    Ok(())
}

pub async fn check_drain_then_close(target: &ContractTarget) -> CheckResult {
    let (mut client, mut server, _l) = connected_pair(target).await?;
    for n in 1..=3 {
        step("send", client.send(numbered(n))).await?;
    }
    client.close();
    let after = client.send(numbered(99)).await;
    ensure!(after == Err(TransportError::ChannelClosed), "send after close gave {after:?}");
    let local = step("local recv after close", client.recv()).await?;
    ensure!(local.is_none(), "closing end saw {local:?} instead of Closed");
    for n in 1..=3 {
        let got = step("recv", server.recv()).await?;
        ensure!(got == Some(numbered(n)), "expected {n} before close, got {got:?}");
    }
    let closed = step("recv close", server.recv()).await?;
    ensure!(closed.is_none(), "expected Closed, got {closed:?}");
    let again = server.recv().await;
    ensure!(again == Err(TransportError::ChannelClosed), "second recv after Closed gave {again:?}");
    Ok(())
}

pub async fn check_boundary_frames(target: &ContractTarget) -> CheckResult {
    let (client, mut server, _l) = connected_pair(target).await?;
    let big = boundary_frame();
    let sender = {
        let big = big.clone();
        let (tx, rx) = client.split();
        let task = tokio::spawn(async move {
            tx.send(big.clone()).await?;
            tx.send(big).await?;
            Ok::<_, TransportError>(tx)
        });
        (task, rx)
    };
    for _ in 0..2 {
        let got = step("recv boundary", server.recv()).await?;
        ensure!(got.as_ref() == Some(&big), "boundary frame altered in transit");
    }
    let (task, mut client_rx) = sender;
    let _client_tx = step("join", async { task.await.map_err(|e| e.to_string())?.map_err(|e| e.to_string()) }).await?;
    step("echo", server.send(big.clone())).await?;
    let echoed = step("recv echo", client_rx.recv()).await?;
    ensure!(echoed.as_ref() == Some(&big), "echoed boundary frame altered");
    let over = Frame::new(format!("{{\"p\":\"{}\"}}", "z".repeat(MAX_FRAME_LEN)).into_bytes());
    ensure!(over.is_err(), "a frame above the cap was constructed");
    Ok(())
}

/// Streams `count` seeded frames each way at once and checks the received
/// sequences equal the sent ones byte for byte.
pub async fn check_seeded_stream(target: &ContractTarget, seed: u64, count: usize) -> CheckResult {
    let (client, server, _l) = connected_pair(target).await?;
    let frames = seeded_frames(seed, count);
    let (c_tx, mut c_rx) = client.split();
    let (s_tx, mut s_rx) = server.split();
    let up = {
        let frames = frames.clone();
        tokio::spawn(async move {
            for f in frames {
                c_tx.send(f).await?;
            }
            Ok::<_, TransportError>(c_tx)
        })
    };
    let down = {
        let frames = frames.clone();
        tokio::spawn(async move {
            for f in frames.into_iter().rev() {
                s_tx.send(f).await?;
            }
            Ok::<_, TransportError>(s_tx)
        })
    };
    for (i, expected) in frames.iter().enumerate() {
        let got = step("server recv", s_rx.recv()).await?;
        ensure!(got.as_ref() == Some(expected), "server frame {i} differs");
    }
    for (i, expected) in frames.iter().rev().enumerate() {
        let got = step("client recv", c_rx.recv()).await?;
        ensure!(got.as_ref() == Some(expected), "client frame {i} differs");
    }
    step("up", async { up.await.map_err(|e| e.to_string())?.map_err(|e| e.to_string()) }).await?;
    step("down", async { down.await.map_err(|e| e.to_string())?.map_err(|e| e.to_string()) }).await?;
    Ok(())
}

pub async fn check_accept_order(target: &ContractTarget) -> CheckResult {
    let mut listener = step("listen", target.factory.listen(&target.listen)).await?;
    let addr = connect_addr(listener.local_addr());
    let mut clients = Vec::new();
    for n in 0..3 {
        let c = step("connect", target.factory.connect(&addr)).await?;
        step("send", c.send(numbered(n))).await?;
        // Each connection completes before the next starts.
        let mut s = step("accept", listener.accept()).await?;
        let got = step("recv", s.recv()).await?;
        ensure!(got == Some(numbered(n)), "accepted channel {n} carried {got:?}");
        clients.push((c, s));
    }
    Ok(())
}

pub async fn check_address_errors(target: &ContractTarget) -> CheckResult {
    let refused = tokio::time::timeout(STEP, target.factory.connect(&target.unbound)).await;
    ensure!(
        matches!(refused, Ok(Err(TransportError::ConnectionRefused(_)))),
        "connect to unbound address gave {refused:?}"
    );
    let listener = step("listen", target.factory.listen(&target.listen)).await?;
    let twice = target.factory.listen(listener.local_addr()).await;
    ensure!(
        matches!(twice, Err(TransportError::AddressInUse(_))),
        "second listen on a bound address gave {twice:?}"
    );
    Ok(())
}

pub async fn check_peer_drop(target: &ContractTarget) -> CheckResult {
    let (client, mut server, _l) = connected_pair(target).await?;
    step("send", client.send(numbered(5))).await?;
    drop(client);
    let got = step("recv", server.recv()).await?;
    ensure!(got == Some(numbered(5)), "expected pending frame, got {got:?}");
    let closed = step("recv close", server.recv()).await?;
    ensure!(closed.is_none(), "dropped peer not observed as Closed: {closed:?}");
    Ok(())
}

/// Runs every check; returns (name, result) pairs.
pub async fn run_all(target: &ContractTarget) -> Vec<(&'static str, CheckResult)> {
    vec![
        ("pairing", check_pairing(target).await),
        ("ordering", check_ordering(target).await),
        ("drain_then_close", check_drain_then_close(target).await),
        ("boundary_frames", check_boundary_frames(target).await),
        ("seeded_stream_1000", check_seeded_stream(target, 0x5eed, 1000).await),
        ("accept_order", check_accept_order(target).await),
        ("address_errors", check_address_errors(target).await),
        ("peer_drop", check_peer_drop(target).await),
    ]
}
