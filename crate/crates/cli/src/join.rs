//! `join`: play from a terminal (or as a bot) against a remote host.

use std::io::Write;
use std::path::PathBuf;

use roomkit::room::{client_join, client_rejoin, ClientError, ClientRoom};
use roomkit::transport::{EndpointAddress, TransportFactory};
use roomkit_cards::cardgame::{LocalPlayer, SkeletonPlayer, SkeletonReport};
use roomkit_cards::tressette::LowestCardBot;
use serde_json::{json, Value};
use tokio::sync::mpsc;

use crate::exit;
use crate::terminal::TerminalPlayer;
use crate::token_store::{self, SavedSession};

pub struct JoinOptions {
    /// Required unless rejoining from a saved session.
    pub endpoint: Option<EndpointAddress>,
    pub name: String,
    pub rejoin: bool,
    pub token_file: Option<PathBuf>,
    /// Let the baseline bot play instead of prompting.
    pub bot: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum JoinError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot reach {0}: {1}")]
    Unreachable(String, String),
    #[error("join rejected: {0}")]
    Rejected(String),
    #[error("rejoin rejected: {0}")]
    RejoinRejected(String),
    #[error("{0}")]
    Client(ClientError),
}

fn reason(r: impl serde::Serialize) -> String {
    serde_json::to_value(r).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

/// Exit code for a finished session.
pub fn exit_code(report: &SkeletonReport) -> i32 {
    match &report.game_over {
        Some(g) if g.get("aborted") == Some(&json!(true)) => exit::ABORTED,
        Some(_) => exit::OK,
        None => exit::ENVIRONMENT,
    }
}

/// Joins (or rejoins from the saved session) and saves the token.
pub async fn connect(opts: &JoinOptions, factory: &TransportFactory) -> Result<ClientRoom, JoinError> {
    let path = token_store::token_path(opts.token_file.as_deref());
    let saved = if opts.rejoin {
        Some(token_store::load(&path).map_err(|e| JoinError::Usage(format!("no saved session at {}: {e}", path.display())))?)
    } else {
        None
    };
    let endpoint = match (&opts.endpoint, &saved) {
        (Some(e), _) => e.clone(),
        (None, Some(s)) => s.endpoint.parse().map_err(|e| JoinError::Usage(format!("saved endpoint: {e}")))?,
        (None, None) => return Err(JoinError::Usage("--endpoint is required".into())),
    };
    let channel = factory
        .connect(&endpoint)
        .await
        .map_err(|e| JoinError::Unreachable(endpoint.to_string(), e.to_string()))?;
    let room = match &saved {
        Some(s) => client_rejoin(channel, &s.token).await.map_err(|e| match e {
            ClientError::RejoinRejected(r) => JoinError::RejoinRejected(reason(r)),
            other => JoinError::Client(other),
        })?,
        None => client_join(channel, &opts.name).await.map_err(|e| match e {
            ClientError::JoinRejected(r) => JoinError::Rejected(reason(r)),
            other => JoinError::Client(other),
        })?,
    };
    let session = SavedSession {
        endpoint: endpoint.to_string(),
        room_id: room.room_id().to_owned(),
        participant_id: room.participant_id().to_owned(),
        token: room.token().to_owned(),
    };
    if let Err(e) = token_store::save(&path, &session) {
        log::warn!("could not save the session token to {}: {e}", path.display());
    }
    Ok(room)
}

pub async fn run_join<W: Write + Send + 'static>(
    opts: &JoinOptions,
    factory: &TransportFactory,
    input: mpsc::UnboundedReceiver<String>,
    mut output: W,
) -> Result<SkeletonReport, JoinError> {
    let room = connect(opts, factory).await?;
    let _ = writeln!(
        output,
        "{} as {} in room {}",
        if opts.rejoin { "rejoined" } else { "joined" },
        room.participant_id(),
        room.snapshot().room_name
    );
    if let Some(hand) = room.snapshot().private.get("hand") {
        let _ = writeln!(output, "your hand: {}", Value::clone(hand));
    }
    let player: Box<dyn LocalPlayer> = if opts.bot {
        Box::new(LowestCardBot)
    } else {
        Box::new(TerminalPlayer::new(input, output))
    };
    Ok(SkeletonPlayer::new(room, player).run().await.0)
}

pub async fn cmd_join(opts: JoinOptions) -> i32 {
    let factory = TransportFactory::new();
    match run_join(&opts, &factory, crate::terminal::stdin_lines(), std::io::stdout()).await {
        Ok(report) => exit_code(&report),
        Err(e) => {
            eprintln!("{e}");
            exit::ENVIRONMENT
        }
    }
}
