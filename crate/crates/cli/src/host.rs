//! `host`: listeners on every transport, advertisement, the HTTP bridge,
//! local seats (the hosting player and bots) and the match itself.

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use roomkit::discovery::{advertise, AdvertiseMedium, RoomAdvertisement, Scanner, DEFAULT_INTERVAL};
use roomkit::room::{client_join, RoomBuilder, RoomConfig, DEFAULT_SESSION_TIMEOUT};
use roomkit::transport::{EndpointAddress, TransportFactory};
use roomkit::wire::PROTOCOL_VERSION;
use roomkit_cards::cardgame::{GameResult, LocalPlayer, RunOptions, SkeletonPlayer, SkeletonReport, DEFAULT_MOVE_TIMEOUT};
use roomkit_cards::tressette::{host_match, HostedMatch, LowestCardBot, SEATS};
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;

use crate::exit;
use crate::http::{self, RoomsState};
use crate::terminal::TerminalPlayer;

pub const DEFAULT_TCP_PORT: u16 = 4700;
pub const DEFAULT_WS_PORT: u16 = 4701;
pub const DEFAULT_HTTP_PORT: u16 = 4702;
pub const APP_TAG: &str = "tressette";

pub struct HostOptions {
    pub name: String,
    pub tcp: Option<EndpointAddress>,
    pub ws: Option<EndpointAddress>,
    /// Name of the in-process listener local seats join through.
    pub mem: String,
    pub bots: usize,
    pub seed: u64,
    /// No hosting player: every seat is a bot or a remote client.
    pub standalone: bool,
    pub session_timeout: Duration,
    pub move_timeout: Duration,
    /// `host:port` for `/rooms` and static files.
    pub http: Option<SocketAddr>,
    pub web_root: Option<PathBuf>,
    pub advertise: Vec<AdvertiseMedium>,
    /// Where `/rooms` hears other hosts.
    pub scan: Option<AdvertiseMedium>,
    /// Host name put in advertised endpoints bound to a wildcard address.
    pub public_host: Option<String>,
}

impl HostOptions {
    pub fn new(name: impl Into<String>, seed: u64) -> Self {
        HostOptions {
            name: name.into(),
            tcp: Some(EndpointAddress::tcp("0.0.0.0", DEFAULT_TCP_PORT)),
            ws: Some(EndpointAddress::ws("0.0.0.0", DEFAULT_WS_PORT)),
            mem: "host".into(),
            bots: 0,
            seed,
            standalone: false,
            session_timeout: DEFAULT_SESSION_TIMEOUT,
            move_timeout: DEFAULT_MOVE_TIMEOUT,
            http: Some(SocketAddr::from(([0, 0, 0, 0], DEFAULT_HTTP_PORT))),
            web_root: None,
            advertise: vec![AdvertiseMedium::Udp(Default::default())],
            scan: Some(AdvertiseMedium::Udp(Default::default())),
            public_host: None,
        }
    }
}

/// The hosting player's terminal.
pub struct HumanSeat {
    pub input: mpsc::UnboundedReceiver<String>,
    pub output: Box<dyn Write + Send>,
}

/// Published once everything is bound.
#[derive(Clone)]
pub struct HostReady {
    pub room_id: String,
    /// Every bound address, the `mem` one included.
    pub endpoints: Vec<EndpointAddress>,
    pub http: Option<SocketAddr>,
    pub factory: TransportFactory,
}

#[derive(Debug, thiserror::Error)]
pub enum HostError {
    #[error("{0}")]
    Options(String),
    #[error("cannot bind {addr}: {reason}")]
    Bind { addr: String, reason: String },
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl HostError {
    pub fn exit_code(&self) -> i32 {
        exit::ENVIRONMENT
    }
}

#[derive(Debug)]
pub struct HostOutcome {
    pub hosted: HostedMatch,
    pub seats: Vec<SkeletonReport>,
}

impl HostOutcome {
    pub fn exit_code(&self) -> i32 {
        match self.hosted.run.result {
            GameResult::Completed(_) => exit::OK,
            GameResult::Aborted { .. } => exit::ABORTED,
        }
    }
}

/// Best guess at this machine's LAN address; no packet is sent.
pub fn lan_address() -> Option<IpAddr> {
    let s = std::net::UdpSocket::bind("0.0.0.0:0").ok()?;
    s.connect("192.0.2.1:9").ok()?;
    s.local_addr().ok().map(|a| a.ip()).filter(|ip| !ip.is_unspecified())
}

fn public(addr: &EndpointAddress, host: &str) -> EndpointAddress {
    match addr {
        EndpointAddress::Tcp { host: h, .. } | EndpointAddress::Ws { host: h, .. }
            if h.parse::<IpAddr>().is_ok_and(|ip| ip.is_unspecified()) =>
        {
            addr.with_host(host)
        }
        _ => addr.clone(),
    }
}

async fn seat(
    factory: &TransportFactory,
    addr: &EndpointAddress,
    name: String,
    player: Box<dyn LocalPlayer>,
) -> anyhow::Result<JoinHandle<SkeletonReport>> {
    let ch = factory.connect(addr).await?;
    let client = client_join(ch, &name).await?;
    Ok(tokio::spawn(async move { SkeletonPlayer::new(client, player).run().await.0 }))
}

pub async fn run_host(
    opts: HostOptions,
    human: Option<HumanSeat>,
    ready: Option<oneshot::Sender<HostReady>>,
) -> Result<HostOutcome, HostError> {
    let max_bots = if opts.standalone { SEATS } else { SEATS - 1 };
    if opts.bots > max_bots {
        return Err(HostError::Options(format!("at most {max_bots} bots in this mode")));
    }
    if !opts.standalone && human.is_none() {
        return Err(HostError::Options("the hosting player needs a terminal; use --standalone".into()));
    }

    let factory = TransportFactory::new();
    let mem = EndpointAddress::mem(opts.mem.clone());
    let mut listeners = Vec::new();
    for addr in [Some(mem.clone()), opts.tcp.clone(), opts.ws.clone()].into_iter().flatten() {
        let l = factory.listen(&addr).await.map_err(|e| HostError::Bind {
            addr: addr.to_string(),
            reason: e.to_string(),
        })?;
        listeners.push(l);
    }
    let bound: Vec<EndpointAddress> = listeners.iter().map(|l| l.local_addr().clone()).collect();

    let (own_tx, own_rx) = watch::channel(None::<RoomAdvertisement>);
    let mut http_addr = None;
    let mut http_task = None;
    if let Some(addr) = opts.http {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| HostError::Bind {
            addr: format!("http://{addr}"),
            reason: e.to_string(),
        })?;
        http_addr = Some(listener.local_addr().map_err(anyhow::Error::from)?);
        let scanner = match &opts.scan {
            Some(m) => match Scanner::start(m).await {
                Ok(s) => Some(s),
                Err(e) => {
                    log::warn!("/rooms will only list this host: {e}");
                    None
                }
            },
            None => None,
        };
        let state = Arc::new(RoomsState { own: own_rx, scanner });
        http_task = Some(tokio::spawn(http::serve(listener, http::router(state, opts.web_root.clone()))));
    }

    let cfg = RoomConfig::new(opts.name.clone(), APP_TAG, SEATS as u32).session_timeout(opts.session_timeout);
    let mut builder = RoomBuilder::new(cfg);
    let feed = builder.feed();
    let room = builder.open(listeners).map_err(anyhow::Error::from)?;
    let host = tokio::spawn(host_match(
        room.clone(),
        feed,
        opts.seed,
        RunOptions {
            move_timeout: opts.move_timeout,
        },
    ));

    let public_host = opts
        .public_host
        .clone()
        .unwrap_or_else(|| lan_address().map_or_else(|| "127.0.0.1".to_owned(), |ip| ip.to_string()));
    let external: Vec<EndpointAddress> =
        bound.iter().filter(|a| !matches!(a, EndpointAddress::Mem(_))).map(|a| public(a, &public_host)).collect();
    let ad = RoomAdvertisement {
        room_id: room.room_id().to_owned(),
        room_name: opts.name.clone(),
        app_tag: APP_TAG.into(),
        endpoints: if external.is_empty() { vec![mem.clone()] } else { external.clone() },
        protocol_version: PROTOCOL_VERSION,
        capacity: SEATS as u32,
        occupied: 0,
    };
    let advertiser = if opts.advertise.is_empty() {
        None
    } else {
        match advertise(ad.clone(), &opts.advertise, DEFAULT_INTERVAL).await {
            Ok(a) => Some(Arc::new(a)),
            Err(e) => {
                log::warn!("not advertising: {e}");
                None
            }
        }
    };
    own_tx.send_replace(Some(ad));
    let occupancy = {
        let mut occ = room.occupancy();
        let advertiser = advertiser.clone();
        tokio::spawn(async move {
            loop {
                let n = *occ.borrow_and_update();
                if let Some(a) = &advertiser {
                    a.set_occupied(n);
                }
                own_tx.send_modify(|ad| {
                    if let Some(ad) = ad {
                        ad.occupied = n;
                    }
                });
                if occ.changed().await.is_err() {
                    break;
                }
            }
        })
    };

    println!("room {:?} ({}) open", opts.name, room.room_id());
    for a in &external {
        println!("  join with: roomkit join --endpoint {a}");
    }
    if let Some(h) = http_addr {
        println!("  rooms list: http://{h}/rooms");
    }
    if let Some(tx) = ready {
        let _ = tx.send(HostReady {
            room_id: room.room_id().to_owned(),
            endpoints: bound.clone(),
            http: http_addr,
            factory: factory.clone(),
        });
    }

    let mut seats = Vec::new();
    let mut seat_error = None;
    if let Some(h) = human {
        let player = TerminalPlayer::new(h.input, h.output);
        match seat(&factory, &mem, "host".into(), Box::new(player)).await {
            Ok(s) => seats.push(s),
            Err(e) => seat_error = Some(e),
        }
    }
    for i in 0..opts.bots {
        match seat(&factory, &mem, format!("bot{}", i + 1), Box::new(LowestCardBot)).await {
            Ok(s) => seats.push(s),
            Err(e) => seat_error = Some(e),
        }
    }
    if let Some(e) = seat_error {
        room.close("setup failed").await.ok();
        return Err(HostError::Other(e));
    }
    let remote = SEATS - seats.len();
    if remote > 0 {
        println!("waiting for {remote} more player(s)");
    }

    let result = tokio::select! {
        r = host => r.map_err(anyhow::Error::from)?,
        _ = tokio::signal::ctrl_c() => {
            room.close("interrupted").await.ok();
            return Err(HostError::Other(anyhow::anyhow!("interrupted")));
        }
    };
    let hosted = result.map_err(anyhow::Error::from)?;
    let mut reports = Vec::new();
    for s in seats {
        match tokio::time::timeout(Duration::from_secs(5), s).await {
            Ok(Ok(r)) => reports.push(r),
            _ => log::warn!("a local seat did not finish"),
        }
    }
    room.close("match over").await.ok();
    occupancy.abort();
    if let Some(t) = http_task {
        t.abort();
    }
    drop(advertiser);
    print_summary(&hosted);
    Ok(HostOutcome { hosted, seats: reports })
}

pub fn print_summary(hosted: &HostedMatch) {
    let run = &hosted.run;
    println!("seats: {}", hosted.seating.participants().join(", "));
    match &run.result {
        GameResult::Completed(out) => {
            println!(
                "team {} wins {} to {} after {} deals ({} moves)",
                out.winner_team,
                out.match_points[out.winner_team],
                out.match_points[1 - out.winner_team],
                out.deals.len(),
                run.moves
            );
        }
        GameResult::Aborted { reason, seat } => {
            println!("match aborted: {} (seat {seat:?}) after {} moves", reason.as_str(), run.moves);
            for a in &run.anomalies {
                println!("  anomaly from seat {}: {}", a.seat, a.description);
            }
        }
    }
}
