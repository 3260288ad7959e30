//! Deterministic networked matches with invariant checks.

use std::path::PathBuf;
use std::time::Duration;

use roomkit::room::{client_join, RoomBuilder, RoomConfig};
use roomkit::transport::{EndpointAddress, Scheme, TransportFactory};
use roomkit_cards::cardgame::{
    AbortReason, GameResult, LocalPlayer, Outgoing, RunOptions, SkeletonPlayer, SkeletonReport,
};
use roomkit_cards::tressette::{
    host_match, rules, run_local_match, Cheat, HostileBot, LowestCardBot, MatchState, TressetteCard, SEATS,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::exit;

/// Wall-clock limit for one simulated match.
pub const SIMULATION_LIMIT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub seed: u64,
    /// Transport per seat, cycled when shorter than four.
    pub mix: Vec<Scheme>,
    /// A scripted cheater at seat 1.
    pub hostile: Option<Cheat>,
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub mix: Vec<String>,
    pub winner: Option<usize>,
    pub match_points: Option<[u32; 2]>,
    pub aborted: Option<String>,
    pub deals: usize,
    pub moves: u64,
    /// Anomalies raised by the coordinator.
    pub anomalies: usize,
    /// Room-level anomaly notifications received by each seat.
    pub anomaly_notices: Vec<usize>,
    /// thirdsA + thirdsB per deal.
    pub thirds_sums: Vec<u32>,
    /// floor(A/3) + floor(B/3) per deal.
    pub floor_sums: Vec<u32>,
    pub violations: Vec<String>,
}

impl SimulationReport {
    pub fn exit_code(&self) -> i32 {
        if self.violations.is_empty() {
            exit::OK
        } else {
            exit::INVARIANT
        }
    }
}

pub fn parse_mix(s: &str) -> Result<Vec<Scheme>, String> {
    let mix: Result<Vec<Scheme>, _> = s.split(',').map(|k| k.trim().parse::<Scheme>()).collect();
    match mix {
        Ok(m) if !m.is_empty() => Ok(m),
        Ok(_) => Err("empty transport mix".into()),
        Err(e) => Err(e.to_string()),
    }
}

pub fn parse_cheat(s: &str) -> Result<Cheat, String> {
    match s {
        "revoke" => Ok(Cheat::Revoke),
        "foreign-card" => Ok(Cheat::ForeignCard),
        other => Err(format!("unknown cheat {other:?}; use revoke or foreign-card")),
    }
}

/// The transcript file: a meta line, then one event per line.
pub fn transcript_jsonl(seed: u64, transcript: &[Outgoing]) -> String {
    let mut out = json!({ "seed": seed, "seats": SEATS, "version": env!("CARGO_PKG_VERSION") }).to_string();
    out.push('\n');
    for o in transcript {
        out.push_str(&o.transcript_line().to_string());
        out.push('\n');
    }
    out
}

fn bots() -> Vec<Box<dyn LocalPlayer>> {
    (0..SEATS).map(|_| Box::new(LowestCardBot) as Box<dyn LocalPlayer>).collect()
}

/// Replays the `played` events through fresh rules state; every play must
/// validate. Returns the final match points.
pub fn replay(seed: u64, transcript: &[Outgoing]) -> Result<[u32; 2], String> {
    let mut m = MatchState::new(seed);
    for e in transcript.iter().map(|o| &o.event).filter(|e| e["type"] == "played") {
        let seat = e["seat"].as_u64().ok_or("played without seat")? as usize;
        let card: TressetteCard = serde_json::from_value(e["card"].clone()).map_err(|e| e.to_string())?;
        rules::validate_play(&m.deal, seat, &card).map_err(|d| format!("replay: seat {seat}: {d}"))?;
        m.deal.play(seat, card)?;
        if m.deal.is_complete() {
            m.finish_deal().map_err(|e| e.to_string())?;
        }
    }
    Ok(m.points())
}

/// Hosts a room on every transport in the mix, seats four bot clients
/// (seat `i` connects over `mix[i % len]`) and checks the match.
pub async fn simulate(opts: &SimulateOptions) -> anyhow::Result<(SimulationReport, Vec<Outgoing>)> {
    let factory = TransportFactory::new();
    let mut kinds = opts.mix.clone();
    kinds.sort();
    kinds.dedup();
    let mut listeners = Vec::new();
    for kind in kinds {
        let addr = match kind {
            Scheme::Mem => EndpointAddress::mem(format!("simulate-{}", opts.seed)),
            Scheme::Tcp => EndpointAddress::tcp("127.0.0.1", 0),
            Scheme::Ws => EndpointAddress::ws("127.0.0.1", 0),
        };
        listeners.push(factory.listen(&addr).await?);
    }
    let addr_of = |k: Scheme| {
        listeners.iter().map(|l| l.local_addr().clone()).find(|a| a.scheme() == k).expect("bound above")
    };
    let seat_addrs: Vec<EndpointAddress> = (0..SEATS).map(|i| addr_of(opts.mix[i % opts.mix.len()])).collect();

    let mut builder = RoomBuilder::new(RoomConfig::new("simulation", "tressette", SEATS as u32));
    let feed = builder.feed();
    let room = builder.open(listeners)?;
    let host = tokio::spawn(host_match(room.clone(), feed, opts.seed, RunOptions::default()));

    let mut clients = Vec::new();
    for (seat, addr) in seat_addrs.iter().enumerate() {
        let ch = factory.connect(addr).await?;
        let client = client_join(ch, &format!("bot{seat}")).await?;
        let player: Box<dyn LocalPlayer> = match opts.hostile {
            Some(cheat) if seat == 1 => Box::new(HostileBot::new(cheat)),
            _ => Box::new(LowestCardBot),
        };
        clients.push(tokio::spawn(async move { SkeletonPlayer::new(client, player).run().await.0 }));
    }

    let hosted = tokio::time::timeout(SIMULATION_LIMIT, host)
        .await
        .map_err(|_| anyhow::anyhow!("match did not finish within {SIMULATION_LIMIT:?}"))??;
    let mut reports: Vec<SkeletonReport> = Vec::new();
    for c in clients {
        reports.push(tokio::time::timeout(SIMULATION_LIMIT, c).await??);
    }
    let _ = room.close("simulation over").await;

    let mut violations = Vec::new();
    let hosted = match hosted {
        Ok(h) => h,
        Err(e) => {
            violations.push(e.to_string());
            let report = SimulationReport {
                seed: opts.seed,
                mix: opts.mix.iter().map(|s| s.to_string()).collect(),
                winner: None,
                match_points: None,
                aborted: None,
                deals: 0,
                moves: 0,
                anomalies: 0,
                anomaly_notices: reports.iter().map(|r| r.anomaly_notices).collect(),
                thirds_sums: vec![],
                floor_sums: vec![],
                violations,
            };
            return Ok((report, Vec::new()));
        }
    };
    let run = hosted.run;
    let mut check = |ok: bool, what: String| {
        if !ok {
            violations.push(what);
        }
    };

    let scores: Vec<&Value> = run.transcript.iter().map(|o| &o.event).filter(|e| e["type"] == "score").collect();
    let sum = |e: &Value, field: &str| -> u32 {
        e["teams"].as_array().into_iter().flatten().map(|t| t[field].as_u64().unwrap_or(0) as u32).sum()
    };
    let thirds_sums: Vec<u32> = scores.iter().map(|e| sum(e, "deal_thirds")).collect();
    let floor_sums: Vec<u32> = scores.iter().map(|e| sum(e, "deal_points")).collect();
    for (k, (t, f)) in thirds_sums.iter().zip(&floor_sums).enumerate() {
        check(*t == 35, format!("deal {k}: thirds sum {t}, expected 35"));
        check(*f == 11, format!("deal {k}: floor sum {f}, expected 11"));
    }
    for (seat, r) in reports.iter().enumerate() {
        let expected: Vec<Value> =
            run.transcript.iter().filter(|o| o.audience.includes(seat)).map(|o| o.event.clone()).collect();
        check(r.app_events == expected, format!("seat {seat} saw a different event stream than was sent"));
    }
    match replay(opts.seed, &run.transcript) {
        Ok(points) => {
            if let GameResult::Completed(out) = &run.result {
                check(points == out.match_points, format!("replayed points {points:?} != {:?}", out.match_points));
            }
        }
        Err(e) => check(false, e),
    }

    let (winner, match_points, aborted) = match &run.result {
        GameResult::Completed(out) => (Some(out.winner_team), Some(out.match_points), None),
        GameResult::Aborted { reason, .. } => (None, None, Some(reason.as_str().to_owned())),
    };

    match opts.hostile {
        None => {
            check(run.anomalies.is_empty(), format!("{} anomalies in an honest match", run.anomalies.len()));
            check(reports.iter().all(|r| r.anomaly_notices == 0), "anomaly notices in an honest match".into());
            match &run.result {
                GameResult::Completed(out) => {
                    let (w, l) = (out.match_points[out.winner_team], out.match_points[1 - out.winner_team]);
                    check(w >= 21 && w > l, format!("winner has {w} points against {l}"));
                }
                other => check(false, format!("honest match did not complete: {other:?}")),
            }
            let local = run_local_match(opts.seed, bots(), RunOptions::default()).await?;
            check(local.transcript == run.transcript, "networked transcript differs from the in-process one".into());
        }
        Some(_) => {
            check(
                run.result == GameResult::Aborted { reason: AbortReason::Anomaly, seat: Some(1) },
                format!("expected an anomaly abort by seat 1, got {:?}", run.result),
            );
            check(run.anomalies.len() == 1, format!("{} anomalies, expected 1", run.anomalies.len()));
            check(
                reports.iter().all(|r| r.anomaly_notices == 1),
                "every seat must receive exactly one anomaly notice".into(),
            );
            check(winner.is_none(), "an aborted match has no winner".into());
        }
    }

    let report = SimulationReport {
        seed: opts.seed,
        mix: opts.mix.iter().map(|s| s.to_string()).collect(),
        winner,
        match_points,
        aborted,
        deals: scores.len(),
        moves: run.moves,
        anomalies: run.anomalies.len(),
        anomaly_notices: reports.iter().map(|r| r.anomaly_notices).collect(),
        thirds_sums,
        floor_sums,
        violations,
    };
    Ok((report, run.transcript))
}

/// `simulate` subcommand: prints the JSON report, writes the transcript.
pub async fn cmd_simulate(opts: SimulateOptions) -> i32 {
    let (report, transcript) = match simulate(&opts).await {
        Ok(r) => r,
        Err(e) => {
            eprintln!("simulation failed: {e:#}");
            return exit::ENVIRONMENT;
        }
    };
    if let Some(path) = &opts.transcript {
        if let Err(e) = std::fs::write(path, transcript_jsonl(opts.seed, &transcript)) {
            eprintln!("cannot write {}: {e}", path.display());
            return exit::ENVIRONMENT;
        }
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    for v in &report.violations {
        eprintln!("invariant violated: {v}");
    }
    report.exit_code()
}
