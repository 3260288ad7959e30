//! End-to-end runs of `host` and `join`: in-process hosts, real processes
//! for the joining side.

use std::net::SocketAddr;
use std::process::Stdio;
use std::sync::Arc;
use std::time::Duration;

use roomkit::discovery::{AdvertiseMedium, RoomAdvertisement, UdpMedium};
use roomkit::room::{client_join, ClientRoom};
use roomkit::transport::{EndpointAddress, Scheme};
use roomkit_cards::cardgame::{AbortReason, GameResult, LocalPlayer, RunOptions};
use roomkit_cards::tressette::{run_local_match, LowestCardBot};
use roomkit_cli::host::{run_host, HostOptions, HostOutcome, HostReady};
use roomkit_cli::http::{self, RoomsState};
use roomkit_cli::join::{run_join, JoinError, JoinOptions};
use roomkit_cli::{exit, host::HostError};
use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::process::Command;
use tokio::sync::{oneshot, watch};
use tokio::task::JoinHandle;
use tokio::time::timeout;

const WAIT: Duration = Duration::from_secs(30);
const BIN: &str = env!("CARGO_BIN_EXE_roomkit");

fn options(seed: u64, bots: usize) -> HostOptions {
    let mut o = HostOptions::new("test table", seed);
    o.tcp = Some(EndpointAddress::tcp("127.0.0.1", 0));
    o.ws = Some(EndpointAddress::ws("127.0.0.1", 0));
    o.bots = bots;
    o.standalone = true;
    o.http = Some(SocketAddr::from(([127, 0, 0, 1], 0)));
    o.advertise = vec![];
    o.scan = None;
    o.public_host = Some("127.0.0.1".into());
    o
}

struct Running {
    ready: HostReady,
    task: JoinHandle<Result<HostOutcome, HostError>>,
}

impl Running {
    fn endpoint(&self, scheme: Scheme) -> EndpointAddress {
        self.ready.endpoints.iter().find(|a| a.scheme() == scheme).unwrap().clone()
    }

    async fn outcome(self) -> HostOutcome {
        timeout(WAIT, self.task).await.expect("host timed out").unwrap().unwrap()
    }
}

async fn start(opts: HostOptions) -> Running {
    let (tx, rx) = oneshot::channel();
    let task = tokio::spawn(run_host(opts, None, Some(tx)));
    let ready = timeout(WAIT, rx).await.unwrap().expect("host failed before it was ready");
    Running { ready, task }
}

struct Reply {
    status: u16,
    headers: String,
    body: Value,
}

async fn get(addr: SocketAddr, path: &str) -> Reply {
    let mut s = tokio::net::TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: {addr}\r\nOrigin: http://example.test\r\nConnection: close\r\n\r\n");
    s.write_all(req.as_bytes()).await.unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).await.unwrap();
    let (head, body) = raw.split_once("\r\n\r\n").unwrap();
    Reply {
        status: head.split_whitespace().nth(1).unwrap().parse().unwrap(),
        headers: head.to_ascii_lowercase(),
        body: serde_json::from_str(body).unwrap_or(Value::Null),
    }
}

async fn rooms_until(addr: SocketAddr, pred: impl Fn(&[RoomAdvertisement]) -> bool) -> Vec<RoomAdvertisement> {
    let deadline = tokio::time::Instant::now() + WAIT;
    loop {
        let r = get(addr, "/rooms").await;
        if r.status == 200 {
            let ads: Vec<RoomAdvertisement> = serde_json::from_value(r.body).unwrap();
            if pred(&ads) {
                return ads;
            }
        }
        assert!(tokio::time::Instant::now() < deadline, "condition on /rooms never held");
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn standalone_bot_match_matches_the_reference() {
    let outcome = start(options(42, 4)).await.outcome().await;
    assert_eq!(outcome.exit_code(), exit::OK);
    let GameResult::Completed(out) = &outcome.hosted.run.result else { panic!("aborted") };
    assert_eq!(out.winner_team, 0);
    assert_eq!(out.match_points, [24, 9]);
    assert_eq!(out.deals.len(), 3);
    assert_eq!(outcome.seats.len(), 4);
    assert!(outcome.seats.iter().all(|s| s.game_over.is_some()));

    let local = run_local_match(42, (0..4).map(|_| Box::new(LowestCardBot) as Box<dyn LocalPlayer>).collect(), RunOptions::default())
        .await
        .unwrap();
    assert_eq!(outcome.hosted.run.transcript, local.transcript);
}

#[tokio::test]
async fn rooms_is_unavailable_until_the_room_opens() {
    let (tx, rx) = watch::channel(None::<RoomAdvertisement>);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let state = Arc::new(RoomsState { own: rx, scanner: None });
    let server = tokio::spawn(http::serve(listener, http::router(state, None)));

    let r = get(addr, "/rooms").await;
    assert_eq!(r.status, 503);
    assert_eq!(r.body, json!({ "error": "room not open" }));

    let ad = RoomAdvertisement {
        room_id: "r1".into(),
        room_name: "kitchen".into(),
        app_tag: "tressette".into(),
        endpoints: vec![EndpointAddress::ws("10.0.0.2", 4701)],
        protocol_version: 1,
        capacity: 4,
        occupied: 1,
    };
    tx.send_replace(Some(ad.clone()));
    let r = get(addr, "/rooms").await;
    assert_eq!(r.status, 200);
    assert!(r.headers.contains("access-control-allow-origin: *"), "{}", r.headers);
    assert_eq!(r.body, json!([ad]));
    server.abort();
}

#[tokio::test]
async fn web_root_is_served() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>table</p>").unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let state = Arc::new(RoomsState { own: watch::channel(None).1, scanner: None });
    let server = tokio::spawn(http::serve(listener, http::router(state, Some(dir.path().into()))));
    let mut s = tokio::net::TcpStream::connect(addr).await.unwrap();
    s.write_all(b"GET /index.html HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").await.unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).await.unwrap();
    assert!(raw.starts_with("HTTP/1.1 200"));
    assert!(raw.ends_with("<p>table</p>"));
    server.abort();
}

#[tokio::test(flavor = "multi_thread")]
async fn full_room_is_advertised_and_rejects_joins() {
    let mut opts = options(3, 0);
    opts.move_timeout = Duration::from_secs(6);
    let host = start(opts).await;
    let http = host.ready.http.unwrap();

    let ads = rooms_until(http, |ads| ads.len() == 1).await;
    assert!(ads[0].endpoints.iter().any(|e| e.scheme() == Scheme::Ws));
    assert_eq!(ads[0].room_id, host.ready.room_id);

    // Four silent clients: the match starts and stalls on the first lead (seat 1).
    let mut seated: Vec<ClientRoom> = Vec::new();
    for (i, scheme) in [Scheme::Tcp, Scheme::Ws, Scheme::Mem, Scheme::Tcp].into_iter().enumerate() {
        let ch = host.ready.factory.connect(&host.endpoint(scheme)).await.unwrap();
        seated.push(client_join(ch, &format!("quiet{i}")).await.unwrap());
    }
    let ads = rooms_until(http, |ads| ads[0].occupied == 4).await;
    assert_eq!(ads[0].occupied, ads[0].capacity);

    let opts = JoinOptions {
        endpoint: Some(host.endpoint(Scheme::Ws)),
        name: "late".into(),
        rejoin: false,
        token_file: Some(tempfile::tempdir().unwrap().path().join("s.json")),
        bot: true,
    };
    let (_tx, rx) = tokio::sync::mpsc::unbounded_channel();
    let err = run_join(&opts, &host.ready.factory, rx, Vec::new()).await.unwrap_err();
    assert!(matches!(&err, JoinError::Rejected(r) if r == "room_full"));
    assert_eq!(err.to_string(), "join rejected: room_full");

    let out = Command::new(BIN)
        .args(["join", "--bot", "--endpoint", &host.endpoint(Scheme::Tcp).to_string()])
        .env("ROOMKIT_TOKEN_PATH", tempfile::tempdir().unwrap().path().join("t.json"))
        .output()
        .await
        .unwrap();
    assert_eq!(out.status.code(), Some(exit::ENVIRONMENT));
    assert!(String::from_utf8_lossy(&out.stderr).contains("join rejected: room_full"));

    let outcome = host.outcome().await;
    assert_eq!(outcome.hosted.run.result, GameResult::Aborted { reason: AbortReason::MoveTimeout, seat: Some(1) });
    assert_eq!(outcome.exit_code(), exit::ABORTED);
    drop(seated);
}

fn free_udp_port() -> u16 {
    std::net::UdpSocket::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[tokio::test(flavor = "multi_thread")]
async fn two_hosts_list_each_other() {
    let udp = AdvertiseMedium::Udp(UdpMedium::loopback(free_udp_port()));
    let mut hosts = Vec::new();
    for name in ["north", "south"] {
        let mut o = options(1, 0);
        o.name = name.into();
        o.advertise = vec![udp.clone()];
        o.scan = Some(udp.clone());
        hosts.push(start(o).await);
    }
    let ids: Vec<String> = hosts.iter().map(|h| h.ready.room_id.clone()).collect();
    for h in &hosts {
        let ads = rooms_until(h.ready.http.unwrap(), |ads| ads.len() == 2).await;
        assert_eq!(ads[0].room_id, h.ready.room_id, "own room first");
        let mut got: Vec<String> = ads.iter().map(|a| a.room_id.clone()).collect();
        got.sort();
        let mut want = ids.clone();
        want.sort();
        assert_eq!(got, want);
    }
    for h in hosts {
        h.task.abort();
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn occupied_bind_address_is_an_environment_error() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let mut o = options(1, 4);
    o.tcp = Some(EndpointAddress::tcp("127.0.0.1", taken.local_addr().unwrap().port()));
    let err = run_host(o, None, None).await.unwrap_err();
    assert!(matches!(err, HostError::Bind { .. }), "{err}");
    assert_eq!(err.exit_code(), exit::ENVIRONMENT);

    let out = Command::new(BIN)
        .args(["host", "--standalone", "--bots", "4", "--no-advertise", "--http-port", "0", "--ws", "off"])
        .args(["--tcp", &taken.local_addr().unwrap().to_string()])
        .output()
        .await
        .unwrap();
    assert_eq!(out.status.code(), Some(exit::ENVIRONMENT));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot bind"));
}

/// Spawns `roomkit join` reading moves from a pipe.
fn spawn_join(args: &[&str], token: &std::path::Path) -> tokio::process::Child {
    Command::new(BIN)
        .arg("join")
        .args(args)
        .arg("--token-file")
        .arg(token)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .kill_on_drop(true)
        .spawn()
        .unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn piped_terminal_plays_a_whole_match() {
    let host = start(options(7, 3)).await;
    let dir = tempfile::tempdir().unwrap();
    let endpoint = host.endpoint(Scheme::Tcp).to_string();
    let mut child = spawn_join(&["--endpoint", &endpoint, "--name", "alice"], &dir.path().join("s.json"));
    let mut stdin = child.stdin.take().unwrap();
    let mut script = String::from("99\nhelp\n");
    for _ in 0..400 {
        script.push_str("play 1\n");
    }
    stdin.write_all(script.as_bytes()).await.unwrap();

    let mut stdout = String::new();
    child.stdout.take().unwrap().read_to_string(&mut stdout).await.unwrap();
    let status = timeout(WAIT, child.wait()).await.unwrap().unwrap();
    assert_eq!(status.code(), Some(exit::OK), "{stdout}");
    assert!(stdout.contains("joined as"));
    assert!(stdout.contains("is not one of the legal cards"));
    assert!(stdout.contains("commands: play <n>, hand"));
    assert!(stdout.contains("game over: team"));

    let outcome = host.outcome().await;
    assert_eq!(outcome.exit_code(), exit::OK);
    assert!(outcome.hosted.run.anomalies.is_empty());
}

#[tokio::test(flavor = "multi_thread")]
async fn killed_client_rejoins_with_its_saved_token() {
    let host = start(options(5, 3)).await;
    let dir = tempfile::tempdir().unwrap();
    let token = dir.path().join("session.json");
    let endpoint = host.endpoint(Scheme::Tcp).to_string();

    let mut first = spawn_join(&["--endpoint", &endpoint, "--name", "bob"], &token);
    let mut lines = BufReader::new(first.stdout.take().unwrap()).lines();
    loop {
        let line = timeout(WAIT, lines.next_line()).await.unwrap().unwrap().expect("no prompt before exit");
        if line.starts_with("play <") {
            break;
        }
    }
    first.kill().await.unwrap();
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&token).unwrap()).unwrap();
    assert_eq!(saved["room_id"], json!(host.ready.room_id));

    let second = Command::new(BIN)
        .args(["join", "--rejoin", "--bot", "--token-file"])
        .arg(&token)
        .output()
        .await
        .unwrap();
    let stdout = String::from_utf8_lossy(&second.stdout);
    assert_eq!(second.status.code(), Some(exit::OK), "{stdout}");
    assert!(stdout.starts_with(&format!("rejoined as {}", saved["participant_id"].as_str().unwrap())));

    let outcome = host.outcome().await;
    assert_eq!(outcome.exit_code(), exit::OK);
    let GameResult::Completed(out) = &outcome.hosted.run.result else { panic!("aborted") };
    assert!(out.match_points.iter().any(|&p| p >= 21));
}

#[tokio::test(flavor = "multi_thread")]
async fn rejoin_without_a_saved_session_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(["join", "--rejoin", "--token-file"])
        .arg(dir.path().join("missing.json"))
        .output()
        .await
        .unwrap();
    assert_eq!(out.status.code(), Some(exit::ENVIRONMENT));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no saved session"));
}
