//! Payload bodies of the room protocol envelopes.
//!
//! | type              | payload                                   |
//! |-------------------|-------------------------------------------|
//! | `join_request`    | `{display_name}`                          |
//! | `join_accepted`   | `{participant_id, token, snapshot}`       |
//! | `join_rejected`   | `{reason}`                                |
//! | `rejoin_request`  | `{token}`                                 |
//! | `rejoin_accepted` | `{participant_id, snapshot}`              |
//! | `rejoin_rejected` | `{reason}`                                |
//! | `leave`           | `{}`                                      |
//! | `room_event`      | `{seq, variant, body}`                    |
//! | `rpc_request`     | `{method, params}` with `cid`             |
//! | `rpc_response`    | method-specific result object, same `cid` |
//! | `error`           | `{reason, detail?}`                       |
//!
//! A client may send a `room_event` with variant `app_event`; the room
//! rebroadcasts its `payload` to every participant with `from` set.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{JoinRejectReason, RejoinRejectReason, RoomSnapshot};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinRequest {
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinAccepted {
    pub participant_id: String,
    pub token: String,
    pub snapshot: RoomSnapshot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinRejected {
    pub reason: JoinRejectReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejoinRequest {
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejoinAccepted {
    pub participant_id: String,
    pub snapshot: RoomSnapshot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejoinRejected {
    pub reason: RejoinRejectReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcRequest {
    pub method: String,
    #[serde(default)]
    pub params: Value,
}

/// Body of a client-sent `room_event`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientAppEvent {
    pub variant: String,
    pub body: ClientAppBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientAppBody {
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ErrorBody {
    pub fn new(reason: &str, detail: impl Into<Option<String>>) -> Self {
        ErrorBody {
            reason: reason.to_owned(),
            detail: detail.into(),
        }
    }
}
