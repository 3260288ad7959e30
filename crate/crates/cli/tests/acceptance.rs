//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! fails.

use std::future::Future;
use std::pin::Pin;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use roomkit::discovery::{advertise, new_room_id, scan, AdvertiseMedium, MemBeaconBus, RoomAdvertisement, UdpMedium};
use roomkit::room::{
    client_join, client_rejoin, ClientError, ClientFeedItem, ClientRoom, ManualClock, RejoinRejectReason,
    RoomBuilder, RoomConfig, RoomEventKind, ServerRoom,
};
use roomkit::transport::contract::{self, ContractTarget};
use roomkit::transport::{EndpointAddress, Fault, Scheme, TransportFactory};
use roomkit::wire::{decode_frame, encode_frame, Envelope, MessageType, WireError, MAX_FRAME_LEN};
use roomkit_cards::cardgame::{
    AbortReason, GameError, GameResult, LocalPlayer, RunOptions, SkeletonPlayer, SkeletonReport, REQUEST_MOVE,
};
use roomkit_cards::tressette::{
    host_match, new_deck, rules, run_local_match, Cheat, HostedMatch, ItalianSuit, LowestCardBot, TressetteCard,
    TressetteRank,
};
use roomkit_cli::simulate::{simulate, SimulateOptions};
use serde_json::{json, Map, Value};
use tokio::task::JoinHandle;
use tokio::time::timeout;

type Check = Pin<Box<dyn Future<Output = Result<String, String>> + Send>>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let checks: Vec<(&str, Check)> = vec![
        ("mixed-transport match", Box::pin(mixed_transport_match())),
        ("transport interchangeability", Box::pin(transport_interchangeability())),
        ("scoring invariant", Box::pin(scoring_invariant())),
        ("legality oracle", Box::pin(legality_oracle())),
        ("trick-winner oracle", Box::pin(trick_winner_oracle())),
        ("session handling", Box::pin(session_handling())),
        ("anomaly detection", Box::pin(anomaly_detection())),
        ("discovery", Box::pin(discovery())),
        ("wire codec", Box::pin(wire_codec())),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let started = Instant::now();
        let result = rt.block_on(async { tokio::spawn(check).await.unwrap_or_else(|e| Err(format!("panicked: {e}"))) });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} ({secs:.2}s)"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason} ({secs:.2}s)");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

// Mixed transports: `simulate --seed 7 --mix mem,tcp,ws,mem` through the
// binary, twice.

async fn mixed_transport_match() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut transcripts = Vec::new();
    let mut slowest = Duration::ZERO;
    let mut report = Value::Null;
    for run in ["a", "b"] {
        let path = dir.path().join(format!("{run}.jsonl"));
        let started = Instant::now();
        let out = tokio::process::Command::new(env!("CARGO_BIN_EXE_roomkit"))
            .args(["simulate", "--seed", "7", "--mix", "mem,tcp,ws,mem", "--transcript"])
            .arg(&path)
            .output()
            .await
            .map_err(|e| e.to_string())?;
        slowest = slowest.max(started.elapsed());
        ensure!(out.status.code() == Some(0), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
        report = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
        transcripts.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    ensure!(slowest < Duration::from_secs(10), "took {slowest:?}");
    ensure!(transcripts[0] == transcripts[1], "transcripts differ between runs");
    let points: Vec<u64> = report["match_points"].as_array().into_iter().flatten().filter_map(Value::as_u64).collect();
    let winner = report["winner"].as_u64().ok_or("no winner")? as usize;
    ensure!(points.len() == 2 && points[winner] >= 21, "final points {points:?}");
    Ok(format!(
        "exit 0, team {winner} wins {points:?} in {} deals, slowest run {:.2}s, transcripts identical ({} bytes)",
        report["deals"],
        slowest.as_secs_f64(),
        transcripts[0].len()
    ))
}

// Transport interchangeability: one suite, three transports.

async fn transport_interchangeability() -> Result<String, String> {
    let mut cases = 0;
    for (listen, unbound) in [
        ("mem://acceptance", "mem://nobody"),
        ("tcp://127.0.0.1:0", "tcp://127.0.0.1:1"),
        ("ws://127.0.0.1:0", "ws://127.0.0.1:1"),
    ] {
        let target = ContractTarget {
            factory: TransportFactory::new(),
            listen: listen.parse().unwrap(),
            unbound: unbound.parse().unwrap(),
        };
        for (case, result) in contract::run_all(&target).await {
            ensure!(result.is_ok(), "{listen} {case}: {result:?}");
            cases += 1;
        }
    }
    Ok(format!("{cases} contract cases passed on mem, tcp and ws"))
}

// Scoring: every deal is worth 35 thirds and 11 points.

async fn scoring_invariant() -> Result<String, String> {
    let mut deals = 0;
    let mut seed = 0;
    while deals < 120 {
        seed += 1;
        let bots = (0..4).map(|_| Box::new(LowestCardBot) as Box<dyn LocalPlayer>).collect();
        let run = run_local_match(seed, bots, RunOptions::default()).await.map_err(|e| e.to_string())?;
        for e in run.transcript.iter().map(|o| &o.event).filter(|e| e["type"] == "score") {
            let teams = e["teams"].as_array().ok_or("score without teams")?;
            let thirds: Vec<u64> = teams.iter().map(|t| t["deal_thirds"].as_u64().unwrap_or(0)).collect();
            ensure!(thirds.len() == 2, "seed {seed}: {} teams", thirds.len());
            ensure!(thirds[0] + thirds[1] == 35, "seed {seed} deal {}: thirds {thirds:?}", e["deal"]);
            ensure!(thirds[0] / 3 + thirds[1] / 3 == 11, "seed {seed} deal {}: thirds {thirds:?}", e["deal"]);
            deals += 1;
        }
    }
    Ok(format!("{deals} deals over {seed} seeded matches: all 35 thirds, 11 points"))
}

// Rules oracles.

const SUITS: [ItalianSuit; 4] = [ItalianSuit::Denari, ItalianSuit::Coppe, ItalianSuit::Spade, ItalianSuit::Bastoni];

fn filter_oracle(hand: &[TressetteCard], led: Option<ItalianSuit>) -> Vec<TressetteCard> {
    let has_led = |s: ItalianSuit| hand.iter().any(|c| c.seed == s);
    hand.iter()
        .filter(|c| match led {
            None => true,
            Some(s) => c.seed == s || !has_led(s),
        })
        .copied()
        .collect()
}

async fn legality_oracle() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(0x1e6a1);
    let mut deck = new_deck().cards().to_vec();
    let samples = 20_000;
    for i in 0..samples {
        deck.shuffle(&mut rng);
        let hand = &deck[..rng.gen_range(1..=10)];
        let led = if rng.gen_ratio(1, 5) { None } else { Some(SUITS[rng.gen_range(0..4)]) };
        let got = rules::legal_moves(hand, led);
        let want = filter_oracle(hand, led);
        ensure!(got == want, "sample {i}: hand {hand:?} led {led:?}: got {got:?}, oracle {want:?}");
    }
    Ok(format!("{samples}/{samples} (hand, led suit) pairs agree"))
}

fn printed_strength(r: TressetteRank) -> usize {
    let order = ["3", "2", "A", "K", "C", "F", "7", "6", "5", "4"];
    let name = serde_json::to_value(r).unwrap();
    10 - order.iter().position(|s| Some(*s) == name.as_str()).unwrap()
}

fn scan_oracle(plays: &[(usize, TressetteCard)]) -> usize {
    let led = plays[0].1.seed;
    let mut best = 0;
    for (i, (_, c)) in plays.iter().enumerate() {
        if c.seed == led && printed_strength(c.value) > printed_strength(plays[best].1.value) {
            best = i;
        }
    }
    plays[best].0
}

async fn trick_winner_oracle() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(0x7a1c);
    let mut deck = new_deck().cards().to_vec();
    let samples = 20_000;
    for i in 0..samples {
        deck.shuffle(&mut rng);
        let first = rng.gen_range(0..4);
        let plays: Vec<(usize, TressetteCard)> = (0..4).map(|k| ((first + k) % 4, deck[k])).collect();
        let got = rules::trick_winner(&plays).map_err(|e| format!("{e:?}"))?;
        let want = scan_oracle(&plays);
        ensure!(got == want, "sample {i}: {plays:?}: got {got}, oracle {want}");
    }
    Ok(format!("{samples}/{samples} complete tricks agree"))
}

// Session handling with an injected clock.

const WAIT: Duration = Duration::from_secs(20);
const SESSION: Duration = Duration::from_secs(60);

struct Table {
    factory: TransportFactory,
    addr: EndpointAddress,
    room: ServerRoom,
    clock: ManualClock,
    host: JoinHandle<Result<HostedMatch, GameError>>,
    bots: Vec<JoinHandle<SkeletonReport>>,
}

/// Seats 0, 2 and 3 are bots; seat 1 is returned with the cid of its
/// first move request, unanswered.
async fn table_with_pending_seat(name: &str, seed: u64) -> Result<(Table, ClientRoom, u64), String> {
    let factory = TransportFactory::new();
    let addr = EndpointAddress::mem(name);
    let listener = factory.listen(&addr).await.map_err(|e| e.to_string())?;
    let clock = ManualClock::starting_at(1_000);
    let cfg = RoomConfig::new(name, "tressette", 4).session_timeout(SESSION).sweep_interval(None);
    let mut builder = RoomBuilder::new(cfg).clock(clock.clone());
    let feed = builder.feed();
    let room = builder.open(vec![listener]).map_err(|e| e.to_string())?;
    let host = tokio::spawn(host_match(room.clone(), feed, seed, RunOptions::default()));
    let mut bots = Vec::new();
    let mut seat1 = None;
    for i in 0..4 {
        let ch = factory.connect(&addr).await.map_err(|e| e.to_string())?;
        let c = client_join(ch, &format!("p{i}")).await.map_err(|e| e.to_string())?;
        if i == 1 {
            seat1 = Some(c);
        } else {
            bots.push(tokio::spawn(async move { SkeletonPlayer::new(c, LowestCardBot).run().await.0 }));
        }
    }
    let seat1 = seat1.unwrap();
    let mut feed = seat1.take_feed().ok_or("feed taken")?;
    let cid = loop {
        match timeout(WAIT, feed.recv()).await.map_err(|_| "no move request")? {
            Some(ClientFeedItem::Request { cid, method, .. }) if method == REQUEST_MOVE => break cid,
            Some(_) => {}
            None => return Err("feed closed".into()),
        }
    };
    Ok((Table { factory, addr, room, clock, host, bots }, seat1, cid))
}

impl Table {
    async fn drop_seat(&self, client: ClientRoom) -> Result<u64, String> {
        let mut events = self.room.subscribe().await.map_err(|e| e.to_string())?;
        let id = client.participant_id().to_owned();
        client.fault_handle().ok_or("no fault handle")?.inject(Fault::Disconnect);
        drop(client);
        loop {
            let ev = timeout(WAIT, events.recv()).await.map_err(|_| "no disconnect event")?;
            let Ok(Some(ev)) = ev else { return Err("room events ended".into()) };
            if let RoomEventKind::ParticipantDisconnected { participant_id, deadline } = ev.kind {
                if participant_id == id {
                    return Ok(deadline);
                }
            }
        }
    }

    async fn rejoin(&self, token: &str) -> Result<ClientRoom, ClientError> {
        let ch = self.factory.connect(&self.addr).await?;
        client_rejoin(ch, token).await
    }

    async fn finish(self) -> Result<HostedMatch, String> {
        let hosted = timeout(WAIT, self.host).await.map_err(|_| "match timed out")?.map_err(|e| e.to_string())?;
        for b in self.bots {
            let _ = timeout(WAIT, b).await;
        }
        hosted.map_err(|e| e.to_string())
    }
}

async fn session_handling() -> Result<String, String> {
    // (a) rejoin one millisecond before the deadline.
    let (t, seat1, cid) = table_with_pending_seat("session-a", 5).await?;
    let token = seat1.token().to_owned();
    let deadline = t.drop_seat(seat1).await?;
    t.clock.set(deadline - 1);
    let back = t.rejoin(&token).await.map_err(|e| format!("(a) rejoin: {e}"))?;
    ensure!(back.participant_id() == "p2", "(a) came back as {}", back.participant_id());
    let mut feed = back.take_feed().ok_or("feed taken")?;
    let again = loop {
        match timeout(WAIT, feed.recv()).await.map_err(|_| "(a) request not re-sent")? {
            Some(ClientFeedItem::Request { cid, method, .. }) if method == REQUEST_MOVE => break cid,
            Some(_) => {}
            None => return Err("(a) feed closed".into()),
        }
    };
    ensure!(again == cid, "(a) re-sent cid {again}, first was {cid}");
    let finisher = tokio::spawn(async move {
        let view = roomkit_cards::cardgame::ProxyGameCoordinator::new(back.clone()).get_view().await.ok()?;
        back.respond(again, json!({ "move": LowestCardBot::choose(&view) })).await.ok()?;
        Some(SkeletonPlayer::with_feed(back, feed, LowestCardBot).run().await.0)
    });
    let hosted = t.finish().await?;
    ensure!(matches!(hosted.run.result, GameResult::Completed(_)), "(a) match ended {:?}", hosted.run.result);
    let _ = finisher.await;

    // (b) rejoin one millisecond after the deadline.
    let (t, seat1, _) = table_with_pending_seat("session-b", 5).await?;
    let token = seat1.token().to_owned();
    let deadline = t.drop_seat(seat1).await?;
    t.clock.set(deadline + 1);
    let err = t.rejoin(&token).await.err();
    ensure!(err == Some(ClientError::RejoinRejected(RejoinRejectReason::Expired)), "(b) rejoin gave {err:?}");
    let hosted = t.finish().await?;
    let want = GameResult::Aborted { reason: AbortReason::PlayerGone, seat: Some(1) };
    ensure!(hosted.run.result == want, "(b) match ended {:?}", hosted.run.result);

    // (c) every single flipped hex digit is a bad token.
    let (t, seat1, _) = table_with_pending_seat("session-c", 5).await?;
    let token = seat1.token().to_owned();
    t.drop_seat(seat1).await?;
    let mut flips = 0;
    for (pos, ch) in token.char_indices().filter(|(_, c)| c.is_ascii_hexdigit()) {
        let flipped = std::char::from_digit((ch.to_digit(16).unwrap() + 1) % 16, 16).unwrap();
        let mut bad = token.clone();
        bad.replace_range(pos..pos + 1, &flipped.to_string());
        let err = t.rejoin(&bad).await.err();
        ensure!(err == Some(ClientError::RejoinRejected(RejoinRejectReason::BadToken)), "(c) flip at {pos}: {err:?}");
        flips += 1;
    }
    ensure!(t.rejoin(&token).await.is_ok(), "(c) the untouched token no longer works");
    t.room.close("done").await.ok();

    Ok(format!(
        "(a) same seat, request re-sent with cid {cid}; (b) expired, match aborted player_gone; (c) {flips}/{flips} flipped hex digits bad_token"
    ))
}

// Anomaly detection.

async fn anomaly_detection() -> Result<String, String> {
    for (cheat, name) in [(Cheat::Revoke, "revoke"), (Cheat::ForeignCard, "foreign-card")] {
        let opts = SimulateOptions {
            seed: 7,
            mix: vec![Scheme::Mem, Scheme::Tcp, Scheme::Ws, Scheme::Mem],
            hostile: Some(cheat),
            transcript: None,
        };
        let (r, _) = simulate(&opts).await.map_err(|e| format!("{name}: {e:#}"))?;
        ensure!(r.anomalies == 1, "{name}: {} anomalies", r.anomalies);
        ensure!(r.anomaly_notices == [1, 1, 1, 1], "{name}: notices {:?}", r.anomaly_notices);
        ensure!(r.winner.is_none() && r.aborted.as_deref() == Some("anomaly"), "{name}: {r:?}");
        ensure!(r.violations.is_empty(), "{name}: {:?}", r.violations);
    }
    let mut deals = 0;
    let mut seed = 100;
    while deals < 100 {
        seed += 1;
        let opts = SimulateOptions {
            seed,
            mix: vec![Scheme::Mem, Scheme::Tcp, Scheme::Ws, Scheme::Mem],
            hostile: None,
            transcript: None,
        };
        let (r, _) = simulate(&opts).await.map_err(|e| format!("seed {seed}: {e:#}"))?;
        ensure!(r.anomalies == 0 && r.anomaly_notices.iter().all(|&n| n == 0), "seed {seed}: {r:?}");
        ensure!(r.violations.is_empty(), "seed {seed}: {:?}", r.violations);
        deals += r.deals;
    }
    Ok(format!(
        "revoke and foreign-card: 1 anomaly, notified to all 4, no winner; honest soak: {deals} deals over {} matches, 0 anomalies",
        seed - 100
    ))
}

// Discovery on udp and mem.

fn free_udp_port() -> u16 {
    std::net::UdpSocket::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

async fn discovery() -> Result<String, String> {
    let udp = AdvertiseMedium::Udp(UdpMedium::loopback(free_udp_port()));
    let mem = AdvertiseMedium::Mem(MemBeaconBus::new());
    let ad = RoomAdvertisement {
        room_id: new_room_id(),
        room_name: "acceptance".into(),
        app_tag: "tressette".into(),
        endpoints: vec![EndpointAddress::tcp("127.0.0.1", 4700), EndpointAddress::mem("acceptance")],
        protocol_version: 1,
        capacity: 4,
        occupied: 0,
    };
    let adv = advertise(ad.clone(), &[udp.clone(), mem.clone()], Duration::from_secs(1))
        .await
        .map_err(|e| e.to_string())?;
    ensure!(adv.failures().is_empty(), "advertiser failures: {:?}", adv.failures());
    let window = Duration::from_secs(3);
    let (by_udp, by_mem) = tokio::join!(scan(&udp, window), scan(&mem, window));
    let (by_udp, by_mem) = (by_udp.map_err(|e| e.to_string())?, by_mem.map_err(|e| e.to_string())?);
    ensure!(by_udp == vec![ad.clone()], "udp scan found {by_udp:?}");
    ensure!(by_mem == vec![ad.clone()], "mem scan found {by_mem:?}");
    adv.stop().await;
    tokio::time::sleep(Duration::from_secs(10)).await;
    let (late_udp, late_mem) = tokio::join!(scan(&udp, window), scan(&mem, window));
    let (late_udp, late_mem) = (late_udp.map_err(|e| e.to_string())?, late_mem.map_err(|e| e.to_string())?);
    ensure!(late_udp.is_empty() && late_mem.is_empty(), "after stop: udp {late_udp:?}, mem {late_mem:?}");
    Ok("found by udp-only and mem-only scans in a 3 s window; both empty 10 s after stop".into())
}

// Wire codec.

fn json_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::from),
        any::<u64>().prop_map(Value::from),
        (-1e12f64..1e12).prop_map(|f| serde_json::Number::from_f64(f).map_or(Value::Null, Value::Number)),
        "\\PC{0,24}".prop_map(Value::String),
    ];
    leaf.prop_recursive(3, 32, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(Value::Array),
            prop::collection::btree_map("[a-z_]{1,8}", inner, 0..6).prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

fn envelope() -> impl Strategy<Value = Envelope> {
    let kind = prop_oneof![
        (0..MessageType::KNOWN.len()).prop_map(|i| MessageType::KNOWN[i].clone()),
        "[a-z_]{1,12}".prop_map(|s| s.parse::<MessageType>().unwrap()),
    ];
    (
        kind,
        proptest::option::of(any::<u64>()),
        any::<u64>(),
        proptest::option::of("[a-zA-Z0-9-]{1,12}"),
        prop::collection::btree_map("[a-z_]{1,8}", json_value(), 0..5),
    )
        .prop_map(|(kind, cid, forced, from, payload)| {
            let mut env = Envelope::new(kind);
            env.cid = match env.kind {
                MessageType::RpcRequest | MessageType::RpcResponse => Some(cid.unwrap_or(forced)),
                _ => cid,
            };
            env.from = from;
            env.payload = payload.into_iter().collect::<Map<String, Value>>();
            env
        })
}

async fn wire_codec() -> Result<String, String> {
    let cases = 10_000;
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner
        .run(&envelope(), |env| {
            let bytes = encode_frame(&env).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let (back, used) = decode_frame(&bytes).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(used, bytes.len());
            prop_assert_eq!(&back, &env);
            Ok(())
        })
        .map_err(|e| format!("round trip: {e}"))?;

    let oversize = (MAX_FRAME_LEN as u32 + 1).to_be_bytes();
    ensure!(
        decode_frame(&oversize) == Err(WireError::OversizeFrame(MAX_FRAME_LEN + 1)),
        "oversize prefix: {:?}",
        decode_frame(&oversize)
    );
    let mut huge = Envelope::new(MessageType::RoomEvent);
    huge.payload.insert("blob".into(), json!("x".repeat(MAX_FRAME_LEN)));
    ensure!(matches!(encode_frame(&huge), Err(WireError::OversizeFrame(_))), "oversize envelope was encoded");

    let malformed: [&[u8]; 4] = [b"not json", b"[1,2,3]", br#"{"type":"room_event"}"#, br#"{"v":1,"type":"rpc_request"}"#];
    for body in malformed {
        let mut frame = (body.len() as u32).to_be_bytes().to_vec();
        frame.extend_from_slice(body);
        let got = decode_frame(&frame);
        ensure!(matches!(got, Err(WireError::MalformedFrame(_))), "{:?} decoded as {got:?}", String::from_utf8_lossy(body));
    }
    Ok(format!("{cases}/{cases} envelopes round-trip; oversize and malformed frames rejected"))
}
