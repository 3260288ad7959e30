//! The `roomkit` command: host, scan, join and simulate Tressette rooms.

pub mod host;
pub mod http;
pub mod join;
pub mod scan;
pub mod simulate;
pub mod terminal;
pub mod token_store;

use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use roomkit::discovery::{AdvertiseMedium, UdpMedium, DEFAULT_BEACON_PORT};
use roomkit::transport::EndpointAddress;

/// Exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Bind failures, unreachable hosts, rejected joins.
    pub const ENVIRONMENT: i32 = 1;
    pub const ABORTED: i32 = 2;
    pub const INVARIANT: i32 = 3;
}

#[derive(Debug, Parser)]
#[command(name = "roomkit", version, about = "Host, find, join and simulate Tressette rooms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Open a room and run one match.
    Host(HostArgs),
    /// List rooms advertised on the LAN.
    Scan(ScanArgs),
    /// Join a room and play from this terminal.
    Join(JoinArgs),
    /// Run a seeded bot match over real transports and check it.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct HostArgs {
    #[arg(long, default_value = "tressette")]
    pub name: String,
    /// TCP listen address, or `off`.
    #[arg(long, default_value = "0.0.0.0:4700")]
    pub tcp: String,
    /// WebSocket listen address, or `off`.
    #[arg(long, default_value = "0.0.0.0:4701")]
    pub ws: String,
    /// Name of the in-process listener used by local seats.
    #[arg(long, default_value = "host")]
    pub mem: String,
    /// Seats filled by bots.
    #[arg(long, default_value_t = 0)]
    pub bots: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Do not take a seat; the host only coordinates.
    #[arg(long)]
    pub standalone: bool,
    /// Session timeout in seconds.
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    /// Move timeout in seconds.
    #[arg(long, default_value_t = 30)]
    pub move_timeout: u64,
    /// Port of the HTTP bridge (`/rooms` and the web client); 0 disables it.
    #[arg(long, default_value_t = host::DEFAULT_HTTP_PORT)]
    pub http_port: u16,
    /// Directory of web client files served over HTTP.
    #[arg(long)]
    pub web_root: Option<PathBuf>,
    /// UDP beacon port.
    #[arg(long, default_value_t = DEFAULT_BEACON_PORT)]
    pub beacon_port: u16,
    /// Where beacons go.
    #[arg(long, default_value = "255.255.255.255")]
    pub beacon_target: IpAddr,
    #[arg(long)]
    pub no_advertise: bool,
    /// Host name to advertise instead of the detected LAN address.
    #[arg(long)]
    pub public_host: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// `udp` or `udp:<port>`.
    #[arg(long, default_value = "udp")]
    pub medium: String,
    /// Listening window in seconds.
    #[arg(long, default_value_t = 3.0)]
    pub window: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct JoinArgs {
    /// e.g. tcp://192.168.1.10:4700 or ws://host:4701
    #[arg(long)]
    pub endpoint: Option<EndpointAddress>,
    #[arg(long, default_value = "player")]
    pub name: String,
    /// Rejoin with the saved session token.
    #[arg(long)]
    pub rejoin: bool,
    /// Session file; defaults to $ROOMKIT_TOKEN_PATH or ~/.roomkit/session.json.
    #[arg(long)]
    pub token_file: Option<PathBuf>,
    /// Let the baseline bot play.
    #[arg(long)]
    pub bot: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Transport per seat, e.g. mem,tcp,ws,mem.
    #[arg(long, value_delimiter = ',', default_value = "mem,tcp,ws,mem", required = false)]
    pub mix: Vec<roomkit::transport::Scheme>,
    /// Seat 1 cheats: revoke or foreign-card.
    #[arg(long, value_parser = simulate::parse_cheat)]
    pub hostile: Option<roomkit_cards::tressette::Cheat>,
    /// JSON-lines transcript output.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

/// `udp` or `udp:<port>`.
pub fn parse_medium(s: &str) -> Result<AdvertiseMedium, String> {
    match s.split_once(':') {
        None if s == "udp" => Ok(AdvertiseMedium::Udp(UdpMedium::default())),
        Some(("udp", port)) => port
            .parse()
            .map(|p| AdvertiseMedium::Udp(UdpMedium::on_port(p)))
            .map_err(|e| format!("bad port {port:?}: {e}")),
        _ => Err(format!("unknown medium {s:?}; use udp or udp:<port>")),
    }
}

fn listen_addr(spec: &str, make: fn(String, u16) -> EndpointAddress) -> Result<Option<EndpointAddress>, String> {
    if spec == "off" {
        return Ok(None);
    }
    let sa: SocketAddr = spec.parse().map_err(|e| format!("bad listen address {spec:?}: {e}"))?;
    Ok(Some(make(sa.ip().to_string(), sa.port())))
}

fn random_seed() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_nanos() as u64)
}

pub fn host_options(a: &HostArgs) -> Result<host::HostOptions, String> {
    let udp = UdpMedium {
        port: a.beacon_port,
        target: a.beacon_target,
        ..UdpMedium::default()
    };
    let mut o = host::HostOptions::new(a.name.clone(), a.seed.unwrap_or_else(random_seed));
    o.tcp = listen_addr(&a.tcp, EndpointAddress::tcp)?;
    o.ws = listen_addr(&a.ws, EndpointAddress::ws)?;
    o.mem = a.mem.clone();
    o.bots = a.bots;
    o.standalone = a.standalone;
    o.session_timeout = Duration::from_secs(a.timeout);
    o.move_timeout = Duration::from_secs(a.move_timeout);
    o.http = (a.http_port != 0).then(|| SocketAddr::from(([0, 0, 0, 0], a.http_port)));
    o.web_root = a.web_root.clone();
    o.advertise = if a.no_advertise { vec![] } else { vec![AdvertiseMedium::Udp(udp.clone())] };
    o.scan = Some(AdvertiseMedium::Udp(udp));
    o.public_host = a.public_host.clone();
    Ok(o)
}

pub async fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Host(a) => {
            let opts = match host_options(&a) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("{e}");
                    return exit::ENVIRONMENT;
                }
            };
            println!("seed {}", opts.seed);
            let human = (!opts.standalone).then(|| host::HumanSeat {
                input: terminal::stdin_lines(),
                output: Box::new(std::io::stdout()),
            });
            match host::run_host(opts, human, None).await {
                Ok(outcome) => outcome.exit_code(),
                Err(e) => {
                    eprintln!("{e}");
                    e.exit_code()
                }
            }
        }
        Command::Scan(a) => match parse_medium(&a.medium) {
            Ok(m) => scan::cmd_scan(m, Duration::from_secs_f64(a.window.max(0.0)), a.json).await,
            Err(e) => {
                eprintln!("{e}");
                exit::ENVIRONMENT
            }
        },
        Command::Join(a) => {
            join::cmd_join(join::JoinOptions {
                endpoint: a.endpoint,
                name: a.name,
                rejoin: a.rejoin,
                token_file: a.token_file,
                bot: a.bot,
            })
            .await
        }
        Command::Simulate(a) => {
            simulate::cmd_simulate(simulate::SimulateOptions {
                seed: a.seed,
                mix: a.mix,
                hostile: a.hostile,
                transcript: a.transcript,
            })
            .await
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn simulate_flags() {
        let cli = Cli::try_parse_from(["roomkit", "simulate", "--seed", "3", "--mix", "tcp,ws", "--hostile", "foreign-card"]).unwrap();
        let Command::Simulate(a) = cli.command else { panic!() };
        assert_eq!(a.mix, vec![roomkit::transport::Scheme::Tcp, roomkit::transport::Scheme::Ws]);
        assert_eq!(a.hostile, Some(roomkit_cards::tressette::Cheat::ForeignCard));
        let cli = Cli::try_parse_from(["roomkit", "simulate"]).unwrap();
        let Command::Simulate(a) = cli.command else { panic!() };
        assert_eq!(a.mix.len(), 4);
        assert!(Cli::try_parse_from(["roomkit", "simulate", "--mix", "udp"]).is_err());
    }

    #[test]
    fn media_and_listen_addresses() {
        assert!(matches!(parse_medium("udp:9999"), Ok(AdvertiseMedium::Udp(u)) if u.port == 9999));
        assert!(parse_medium("mem").is_err());
        assert_eq!(listen_addr("off", EndpointAddress::tcp), Ok(None));
        assert_eq!(
            listen_addr("127.0.0.1:5", EndpointAddress::ws),
            Ok(Some(EndpointAddress::ws("127.0.0.1", 5)))
        );
    }
}
