//! Line-oriented terminal player. Reads commands from a queue of lines so
//! it can be driven through a pipe.

use std::io::Write;

use async_trait::async_trait;
use roomkit::room::{RoomEvent, RoomEventKind};
use roomkit_cards::cardgame::LocalPlayer;
use roomkit_cards::tressette::{Show, TressetteCard};
use serde_json::{json, Value};
use tokio::sync::mpsc;

/// Spawns a thread feeding stdin lines into a queue.
pub fn stdin_lines() -> mpsc::UnboundedReceiver<String> {
    let (tx, rx) = mpsc::unbounded_channel();
    std::thread::spawn(move || {
        let stdin = std::io::stdin();
        let mut line = String::new();
        loop {
            line.clear();
            match stdin.read_line(&mut line) {
                Ok(0) | Err(_) => break,
                Ok(_) => {
                    if tx.send(line.trim().to_owned()).is_err() {
                        break;
                    }
                }
            }
        }
    });
    rx
}

fn cards(v: &Value) -> Vec<TressetteCard> {
    serde_json::from_value(v.clone()).unwrap_or_default()
}

fn list(cs: &[TressetteCard]) -> String {
    cs.iter().map(|c| Show(c).to_string()).collect::<Vec<_>>().join(", ")
}

fn show(v: &Value) -> String {
    serde_json::from_value::<TressetteCard>(v.clone()).map_or_else(|_| v.to_string(), |c| Show(&c).to_string())
}

/// What a command line asks for.
#[derive(Debug, PartialEq, Eq)]
pub enum Command {
    Play(usize),
    Hand,
    Help,
    Unknown,
}

/// `play <n>` or a bare `<n>`, 1-based.
pub fn parse_command(line: &str) -> Command {
    let words: Vec<&str> = line.split_whitespace().collect();
    match words.as_slice() {
        ["play", n] | [n] if n.parse::<usize>().is_ok() => Command::Play(n.parse().unwrap()),
        ["hand"] => Command::Hand,
        ["help"] => Command::Help,
        _ => Command::Unknown,
    }
}

pub struct TerminalPlayer<W> {
    input: mpsc::UnboundedReceiver<String>,
    out: W,
    seat: Option<u64>,
}

impl<W: Write + Send> TerminalPlayer<W> {
    pub fn new(input: mpsc::UnboundedReceiver<String>, out: W) -> Self {
        TerminalPlayer { input, out, seat: None }
    }

    pub fn into_output(self) -> W {
        self.out
    }

    fn say(&mut self, text: impl AsRef<str>) {
        let _ = writeln!(self.out, "{}", text.as_ref());
        let _ = self.out.flush();
    }

    fn seat_name(&self, seat: &Value) -> String {
        match (seat.as_u64(), self.seat) {
            (Some(s), Some(me)) if s == me => "you".into(),
            (Some(s), _) => format!("seat {s}"),
            _ => seat.to_string(),
        }
    }

    fn render(&mut self, e: &Value) {
        let text = match e["type"].as_str().unwrap_or("") {
            "deal" => {
                self.seat = e["your_seat"].as_u64();
                format!(
                    "deal {}: you are seat {}, dealer is seat {}\nyour hand: {}",
                    e["deal"],
                    e["your_seat"],
                    e["dealer"],
                    list(&cards(&e["hand"]))
                )
            }
            "turn" if e.get("legal").is_none() => format!("waiting for {}", self.seat_name(&e["seat"])),
            "turn" => return,
            "played" => format!("{} played {}", self.seat_name(&e["seat"]), show(&e["card"])),
            "trick_result" => format!("trick to {} ({} thirds)", self.seat_name(&e["winner_seat"]), e["thirds"]),
            "score" => {
                let teams = e["teams"].as_array().cloned().unwrap_or_default();
                let parts: Vec<String> = teams
                    .iter()
                    .map(|t| format!("seats {} {} (+{})", t["seats"], t["match_points"], t["deal_points"]))
                    .collect();
                format!("score: {}", parts.join(" | "))
            }
            "game_over" if e["aborted"] == json!(true) => {
                format!("game aborted: {} (seat {})", e["reason"].as_str().unwrap_or("?"), e["seat"])
            }
            "game_over" => format!("game over: team {} wins", e["winner_team"]),
            "anomaly" => format!("anomaly from seat {}: {}", e["seat"], e["description"].as_str().unwrap_or("")),
            _ => e.to_string(),
        };
        self.say(text);
    }
}

#[async_trait]
impl<W: Write + Send> LocalPlayer for TerminalPlayer<W> {
    async fn choose_move(&mut self, view: &Value) -> Value {
        let hand = cards(&view["hand"]);
        let legal = cards(&view["legal"]);
        let trick: Vec<String> = view["trick"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|p| format!("{}: {}", self.seat_name(&p["seat"]), show(&p["card"])))
            .collect();
        self.say(format!("table: {}", if trick.is_empty() { "empty".into() } else { trick.join(", ") }));
        self.say(format!("your hand: {}", list(&hand)));
        let options: Vec<String> = legal.iter().enumerate().map(|(i, c)| format!("{}) {}", i + 1, Show(c))).collect();
        self.say(format!("your turn, legal: {}", options.join("  ")));
        loop {
            self.say(format!("play <1-{}>", legal.len()));
            let Some(line) = self.input.recv().await else {
                self.say("input closed");
                return std::future::pending().await;
            };
            match parse_command(&line) {
                Command::Play(n) if (1..=legal.len()).contains(&n) => return json!(legal[n - 1]),
                Command::Play(n) => self.say(format!("{n} is not one of the legal cards")),
                Command::Hand => self.say(format!("your hand: {}", list(&hand))),
                Command::Help | Command::Unknown => self.say("commands: play <n>, hand"),
            }
        }
    }

    async fn observe(&mut self, event: &RoomEvent) {
        match &event.kind {
            RoomEventKind::AppEvent { payload, .. } => self.render(payload),
            RoomEventKind::ParticipantJoined { display_name, participant_id } => {
                self.say(format!("{display_name} joined as {participant_id}"))
            }
            RoomEventKind::ParticipantDisconnected { participant_id, .. } => {
                self.say(format!("{participant_id} lost connection"))
            }
            RoomEventKind::ParticipantRejoined { participant_id } => self.say(format!("{participant_id} is back")),
            RoomEventKind::ParticipantLeft { participant_id, reason } => {
                self.say(format!("{participant_id} left ({reason:?})"))
            }
            RoomEventKind::AnomalyDetected { participant_id, description } => {
                self.say(format!("anomaly detected from {participant_id}: {description}"))
            }
            RoomEventKind::RoomClosed { reason } => self.say(format!("room closed: {reason}")),
            RoomEventKind::RoomOpened { .. } => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commands() {
        assert_eq!(parse_command("play 3"), Command::Play(3));
        assert_eq!(parse_command(" 2 "), Command::Play(2));
        assert_eq!(parse_command("hand"), Command::Hand);
        assert_eq!(parse_command("play x"), Command::Unknown);
        assert_eq!(parse_command("play 1 2"), Command::Unknown);
    }

    #[tokio::test]
    async fn out_of_range_reprompts_locally() {
        let (tx, rx) = mpsc::unbounded_channel();
        let mut p = TerminalPlayer::new(rx, Vec::new());
        tx.send("play 3".into()).unwrap();
        tx.send("0".into()).unwrap();
        tx.send("play 2".into()).unwrap();
        let view = json!({
            "hand": [{"s":"coppe","r":"A"}, {"s":"spade","r":"4"}, {"s":"coppe","r":"7"}],
            "legal": [{"s":"coppe","r":"A"}, {"s":"coppe","r":"7"}],
            "trick": [],
        });
        let mv = p.choose_move(&view).await;
        assert_eq!(mv, json!({"s":"coppe","r":"7"}));
        let out = String::from_utf8(p.into_output()).unwrap();
        assert!(out.contains("1) A coppe  2) 7 coppe"));
        assert!(out.contains("3 is not one of the legal cards"));
        assert!(out.contains("0 is not one of the legal cards"));
    }
}
