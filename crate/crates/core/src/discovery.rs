//! Room advertisement and scanning.
//!
//! An [`Advertiser`] repeats a beacon on every configured medium at a fixed
//! interval; [`scan`] listens on one medium for a bounded window. Media are
//! independent: a scanner only sees rooms advertised on its own medium.
//!
//! Beacon datagram: the five ASCII bytes `CVEB1` followed by the
//! advertisement as JSON, at most 1200 bytes in total. Beacons are push-only.

use std::collections::HashMap;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::UdpSocket;
use tokio::sync::{broadcast, watch};
use tokio::task::JoinHandle;
use tokio::time::Instant;
use tokio_util::sync::CancellationToken;

use crate::transport::EndpointAddress;

pub const BEACON_MAGIC: &[u8; 5] = b"CVEB1";
pub const DEFAULT_BEACON_PORT: u16 = 45454;
pub const MAX_BEACON_LEN: usize = 1200;
pub const MAX_ROOM_NAME_LEN: usize = 64;
pub const MIN_INTERVAL: Duration = Duration::from_millis(100);
pub const DEFAULT_INTERVAL: Duration = Duration::from_secs(1);
pub const DEFAULT_SCAN_WINDOW: Duration = Duration::from_secs(3);
/// An advertisement not refreshed within this many intervals is expired.
pub const EXPIRY_INTERVALS: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiscoveryError {
    #[error("medium {medium} unavailable: {reason}")]
    MediumUnavailable { medium: String, reason: String },
    #[error("advertisement is {0} bytes, beacons are limited to {MAX_BEACON_LEN}")]
    AdTooLarge(usize),
    #[error("invalid advertisement: {0}")]
    InvalidAdvertisement(String),
    #[error("beacon interval {0:?} is below the {MIN_INTERVAL:?} minimum")]
    IntervalTooShort(Duration),
    #[error("no advertise media given")]
    NoMedia,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomAdvertisement {
    pub room_id: String,
    pub room_name: String,
    pub app_tag: String,
    pub endpoints: Vec<EndpointAddress>,
    pub protocol_version: u32,
    pub capacity: u32,
    pub occupied: u32,
}

impl RoomAdvertisement {
    pub fn validate(&self) -> Result<(), DiscoveryError> {
        let bad = |m: &str| Err(DiscoveryError::InvalidAdvertisement(m.to_owned()));
        if self.room_id.len() != 32 || !self.room_id.bytes().all(|b| b.is_ascii_hexdigit()) {
            return bad("room_id must be 32 hex digits");
        }
        if self.room_name.len() > MAX_ROOM_NAME_LEN {
            return bad("room_name longer than 64 bytes");
        }
        if self.endpoints.is_empty() {
            return bad("no endpoints");
        }
        if self.occupied > self.capacity {
            return bad("occupied exceeds capacity");
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Beacon {
    #[serde(flatten)]
    ad: RoomAdvertisement,
    interval_ms: u64,
}

pub fn encode_beacon(ad: &RoomAdvertisement, interval: Duration) -> Result<Vec<u8>, DiscoveryError> {
    ad.validate()?;
    let beacon = Beacon {
        ad: ad.clone(),
        interval_ms: interval.as_millis() as u64,
    };
    let mut out = BEACON_MAGIC.to_vec();
    serde_json::to_writer(&mut out, &beacon).map_err(|e| DiscoveryError::InvalidAdvertisement(e.to_string()))?;
    if out.len() > MAX_BEACON_LEN {
        return Err(DiscoveryError::AdTooLarge(out.len()));
    }
    Ok(out)
}

/// Parses a beacon; foreign or malformed datagrams yield `None`.
pub fn decode_beacon(bytes: &[u8]) -> Option<(RoomAdvertisement, Duration)> {
    let body = bytes.strip_prefix(BEACON_MAGIC)?;
    let beacon: Beacon = serde_json::from_slice(body).ok()?;
    beacon.ad.validate().ok()?;
    Some((beacon.ad, Duration::from_millis(beacon.interval_ms.max(1))))
}

/// UDP broadcast medium.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UdpMedium {
    pub port: u16,
    /// Where beacons are sent.
    pub target: IpAddr,
    /// Interface scanners bind to.
    pub bind: IpAddr,
}

impl Default for UdpMedium {
    fn default() -> Self {
        UdpMedium {
            port: DEFAULT_BEACON_PORT,
            target: IpAddr::V4(Ipv4Addr::BROADCAST),
            bind: IpAddr::V4(Ipv4Addr::UNSPECIFIED),
        }
    }
}

impl UdpMedium {
    pub fn on_port(port: u16) -> Self {
        UdpMedium {
            port,
            ..UdpMedium::default()
        }
    }

    /// Loopback-only broadcast, for hosts without a LAN.
    pub fn loopback(port: u16) -> Self {
        UdpMedium {
            port,
            target: IpAddr::V4(Ipv4Addr::new(127, 255, 255, 255)),
            bind: IpAddr::V4(Ipv4Addr::UNSPECIFIED),
        }
    }
}

/// In-process beacon bus; the discovery counterpart of a `mem` transport
/// namespace.
#[derive(Clone)]
pub struct MemBeaconBus {
    tx: broadcast::Sender<Vec<u8>>,
}

impl Default for MemBeaconBus {
    fn default() -> Self {
        MemBeaconBus {
            tx: broadcast::channel(256).0,
        }
    }
}

impl MemBeaconBus {
    pub fn new() -> Self {
        MemBeaconBus::default()
    }
}

#[derive(Clone)]
pub enum AdvertiseMedium {
    Udp(UdpMedium),
    Mem(MemBeaconBus),
}

impl AdvertiseMedium {
    pub fn name(&self) -> String {
        match self {
            AdvertiseMedium::Udp(u) => format!("udp:{}", u.port),
            AdvertiseMedium::Mem(_) => "mem".to_owned(),
        }
    }
}

impl std::fmt::Debug for AdvertiseMedium {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

enum Emitter {
    Udp { socket: UdpSocket, dest: SocketAddr },
    Mem(broadcast::Sender<Vec<u8>>),
}

impl Emitter {
    async fn open(medium: &AdvertiseMedium) -> Result<Emitter, DiscoveryError> {
        match medium {
            AdvertiseMedium::Mem(bus) => Ok(Emitter::Mem(bus.tx.clone())),
            AdvertiseMedium::Udp(udp) => {
                let unavailable = |e: std::io::Error| DiscoveryError::MediumUnavailable {
                    medium: medium.name(),
                    reason: e.to_string(),
                };
                let bind: SocketAddr = match udp.target {
                    IpAddr::V4(_) => (Ipv4Addr::UNSPECIFIED, 0).into(),
                    IpAddr::V6(_) => (std::net::Ipv6Addr::UNSPECIFIED, 0).into(),
                };
                let socket = UdpSocket::bind(bind).await.map_err(unavailable)?;
                socket.set_broadcast(true).map_err(unavailable)?;
                Ok(Emitter::Udp {
                    socket,
                    dest: SocketAddr::new(udp.target, udp.port),
                })
            }
        }
    }

    async fn emit(&self, beacon: &[u8]) -> std::io::Result<()> {
        match self {
            Emitter::Udp { socket, dest } => socket.send_to(beacon, dest).await.map(|_| ()),
            Emitter::Mem(tx) => {
                // No subscribers is not an error: nobody is scanning.
                let _ = tx.send(beacon.to_vec());
                Ok(())
            }
        }
    }
}

/// A running advertiser. Dropping it stops emission.
pub struct Advertiser {
    ad: watch::Sender<RoomAdvertisement>,
    stop: CancellationToken,
    task: Option<JoinHandle<()>>,
    failures: Vec<DiscoveryError>,
}

/// Starts emitting `ad` on every medium each `interval`. Media that cannot
/// be opened are reported through [`Advertiser::failures`]; the rest keep
/// running.
pub async fn advertise(
    ad: RoomAdvertisement,
    media: &[AdvertiseMedium],
    interval: Duration,
) -> Result<Advertiser, DiscoveryError> {
    if media.is_empty() {
        return Err(DiscoveryError::NoMedia);
    }
    if interval < MIN_INTERVAL {
        return Err(DiscoveryError::IntervalTooShort(interval));
    }
    encode_beacon(&ad, interval)?;

    let mut emitters = Vec::new();
    let mut failures = Vec::new();
    for medium in media {
        match Emitter::open(medium).await {
            Ok(e) => emitters.push((medium.name(), e)),
            Err(e) => {
                log::warn!("{e}");
                failures.push(e);
            }
        }
    }

    let (ad_tx, mut ad_rx) = watch::channel(ad);
    let stop = CancellationToken::new();
    let task = tokio::spawn({
        let stop = stop.clone();
        async move {
            let mut ticker = tokio::time::interval(interval);
            let mut warned = vec![false; emitters.len()];
            loop {
                tokio::select! {
                    _ = stop.cancelled() => return,
                    _ = ticker.tick() => {}
                }
                let beacon = match encode_beacon(&ad_rx.borrow_and_update(), interval) {
                    Ok(b) => b,
                    Err(e) => {
                        log::warn!("not advertising: {e}");
                        continue;
                    }
                };
                for (i, (name, emitter)) in emitters.iter().enumerate() {
                    if let Err(e) = emitter.emit(&beacon).await {
                        if !std::mem::replace(&mut warned[i], true) {
                            log::warn!("beacon on {name} failed: {e}");
                        }
                    }
                }
            }
        }
    });

    Ok(Advertiser {
        ad: ad_tx,
        stop,
        task: Some(task),
        failures,
    })
}

impl Advertiser {
    pub fn failures(&self) -> &[DiscoveryError] {
        &self.failures
    }

    pub fn advertisement(&self) -> RoomAdvertisement {
        self.ad.borrow().clone()
    }

    /// Refreshes the occupancy carried by subsequent beacons.
    pub fn set_occupied(&self, occupied: u32) {
        self.ad.send_modify(|ad| ad.occupied = occupied.min(ad.capacity));
    }

    pub fn update(&self, f: impl FnOnce(&mut RoomAdvertisement)) {
        self.ad.send_modify(f);
    }

    /// Stops emitting; returns once no further beacon can be sent.
    pub async fn stop(mut self) {
        self.stop.cancel();
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for Advertiser {
    fn drop(&mut self) {
        self.stop.cancel();
    }
}

struct Heard {
    ad: RoomAdvertisement,
    interval: Duration,
    at: Instant,
}

/// A background listener that remembers the newest beacon per room.
pub struct Scanner {
    heard: Arc<Mutex<HashMap<String, Heard>>>,
    stop: CancellationToken,
}

impl Scanner {
    pub async fn start(medium: &AdvertiseMedium) -> Result<Scanner, DiscoveryError> {
        let heard: Arc<Mutex<HashMap<String, Heard>>> = Arc::default();
        let stop = CancellationToken::new();
        let record = {
            let heard = heard.clone();
            move |bytes: &[u8]| {
                if let Some((ad, interval)) = decode_beacon(bytes) {
                    heard.lock().unwrap().insert(
                        ad.room_id.clone(),
                        Heard {
                            ad,
                            interval,
                            at: Instant::now(),
                        },
                    );
                }
            }
        };
        match medium {
            AdvertiseMedium::Mem(bus) => {
                let mut rx = bus.tx.subscribe();
                let stop = stop.clone();
                tokio::spawn(async move {
                    loop {
                        tokio::select! {
                            _ = stop.cancelled() => return,
                            msg = rx.recv() => match msg {
                                Ok(bytes) => record(&bytes),
                                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                                Err(broadcast::error::RecvError::Closed) => return,
                            }
                        }
                    }
                });
            }
            AdvertiseMedium::Udp(udp) => {
                let socket = bind_scanner(udp).map_err(|e| DiscoveryError::MediumUnavailable {
                    medium: medium.name(),
                    reason: e.to_string(),
                })?;
                let stop = stop.clone();
                tokio::spawn(async move {
                    let mut buf = vec![0u8; 2048];
                    loop {
                        tokio::select! {
                            _ = stop.cancelled() => return,
                            got = socket.recv_from(&mut buf) => match got {
                                Ok((n, _)) => record(&buf[..n]),
                                Err(e) => log::debug!("beacon receive error: {e}"),
                            }
                        }
                    }
                });
            }
        }
        Ok(Scanner { heard, stop })
    }

    /// Live advertisements, ordered by room name then id. Entries not
    /// refreshed within three of their own intervals are dropped.
    pub fn rooms(&self) -> Vec<RoomAdvertisement> {
        let now = Instant::now();
        let mut heard = self.heard.lock().unwrap();
        heard.retain(|_, h| now.duration_since(h.at) <= h.interval * EXPIRY_INTERVALS);
        let mut ads: Vec<_> = heard.values().map(|h| h.ad.clone()).collect();
        ads.sort_by(|a, b| (&a.room_name, &a.room_id).cmp(&(&b.room_name, &b.room_id)));
        ads
    }
}

impl Drop for Scanner {
    fn drop(&mut self) {
        self.stop.cancel();
    }
}

fn bind_scanner(udp: &UdpMedium) -> std::io::Result<UdpSocket> {
    use socket2::{Domain, Protocol, Socket, Type};
    let addr = SocketAddr::new(udp.bind, udp.port);
    let socket = Socket::new(Domain::for_address(addr), Type::DGRAM, Some(Protocol::UDP))?;
    socket.set_reuse_address(true)?;
    #[cfg(unix)]
    socket.set_reuse_port(true)?;
    socket.set_broadcast(true)?;
    socket.set_nonblocking(true)?;
    socket.bind(&addr.into())?;
    UdpSocket::from_std(socket.into())
}

/// Listens on `medium` for `window` and returns the rooms heard, one entry
/// per room id.
pub async fn scan(medium: &AdvertiseMedium, window: Duration) -> Result<Vec<RoomAdvertisement>, DiscoveryError> {
    let scanner = Scanner::start(medium).await?;
    tokio::time::sleep(window).await;
    Ok(scanner.rooms())
}

/// A fresh random 128-bit room id in hex.
pub fn new_room_id() -> String {
    hex::encode(rand::random::<[u8; 16]>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ad(name: &str) -> RoomAdvertisement {
        RoomAdvertisement {
            room_id: new_room_id(),
            room_name: name.to_owned(),
            app_tag: "tressette".into(),
            endpoints: vec![EndpointAddress::tcp("10.0.0.2", 4700), EndpointAddress::ws("10.0.0.2", 4701)],
            protocol_version: 1,
            capacity: 4,
            occupied: 1,
        }
    }

    #[test]
    fn beacon_round_trip() {
        let a = ad("table one");
        let bytes = encode_beacon(&a, Duration::from_millis(250)).unwrap();
        assert!(bytes.starts_with(b"CVEB1{"));
        assert_eq!(decode_beacon(&bytes), Some((a, Duration::from_millis(250))));
    }

    #[test]
    fn foreign_datagrams_ignored() {
        assert_eq!(decode_beacon(b"hello"), None);
        assert_eq!(decode_beacon(b"CVEB1{not json"), None);
        assert_eq!(decode_beacon(b"CVEB2{}"), None);
    }

    #[test]
    fn oversize_ad_rejected() {
        let mut a = ad("big");
        a.endpoints = (0..60).map(|p| EndpointAddress::tcp("some-long-hostname.example", p)).collect();
        assert!(matches!(encode_beacon(&a, DEFAULT_INTERVAL), Err(DiscoveryError::AdTooLarge(_))));
    }

    #[test]
    fn validation() {
        let mut a = ad("x");
        a.occupied = 5;
        assert!(a.validate().is_err());
        let mut a = ad(&"n".repeat(65));
        assert!(a.validate().is_err());
        a.room_name = "n".repeat(64);
        assert!(a.validate().is_ok());
        a.endpoints.clear();
        assert!(a.validate().is_err());
    }

    #[tokio::test]
    async fn interval_minimum_enforced() {
        let media = [AdvertiseMedium::Mem(MemBeaconBus::new())];
        assert!(matches!(
            advertise(ad("x"), &media, Duration::from_millis(50)).await,
            Err(DiscoveryError::IntervalTooShort(_))
        ));
        assert!(matches!(advertise(ad("x"), &[], DEFAULT_INTERVAL).await, Err(DiscoveryError::NoMedia)));
    }

    #[tokio::test(start_paused = true)]
    async fn mem_scan_dedups_orders_and_expires() {
        let bus = MemBeaconBus::new();
        let media = [AdvertiseMedium::Mem(bus.clone())];
        let b = advertise(ad("bravo"), &media, Duration::from_millis(200)).await.unwrap();
        let a = advertise(ad("alpha"), &media, Duration::from_millis(200)).await.unwrap();
        let found = scan(&media[0], Duration::from_secs(1)).await.unwrap();
        let names: Vec<_> = found.iter().map(|r| r.room_name.as_str()).collect();
        assert_eq!(names, ["alpha", "bravo"]);

        let scanner = Scanner::start(&media[0]).await.unwrap();
        tokio::time::sleep(Duration::from_millis(500)).await;
        assert_eq!(scanner.rooms().len(), 2);
        b.stop().await;
        tokio::time::sleep(Duration::from_millis(700)).await;
        let left: Vec<_> = scanner.rooms().into_iter().map(|r| r.room_name).collect();
        assert_eq!(left, ["alpha"]);
        a.stop().await;
        tokio::time::sleep(Duration::from_secs(10)).await;
        assert!(scan(&media[0], DEFAULT_SCAN_WINDOW).await.unwrap().is_empty());
    }

    #[tokio::test(start_paused = true)]
    async fn occupied_refresh_is_carried() {
        let bus = MemBeaconBus::new();
        let media = [AdvertiseMedium::Mem(bus)];
        let adv = advertise(ad("x"), &media, Duration::from_millis(200)).await.unwrap();
        adv.set_occupied(4);
        let found = scan(&media[0], Duration::from_secs(1)).await.unwrap();
        assert_eq!(found[0].occupied, 4);
        assert_eq!(found[0].capacity, 4);
    }
}
