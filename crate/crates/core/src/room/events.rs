use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tokio::sync::mpsc;

use super::Millis;

/// Events queued per subscriber before the subscription is cut off.
pub const SUBSCRIPTION_QUEUE: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaveReason {
    Leave,
    Kicked,
    Expired,
}

/// Wire form: `{"seq": n, "variant": "...", "body": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub kind: RoomEventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "body", rename_all = "snake_case")]
pub enum RoomEventKind {
    RoomOpened {
        room_id: String,
        room_name: String,
    },
    RoomClosed {
        reason: String,
    },
    ParticipantJoined {
        participant_id: String,
        display_name: String,
    },
    ParticipantRejoined {
        participant_id: String,
    },
    ParticipantDisconnected {
        participant_id: String,
        deadline: Millis,
    },
    ParticipantLeft {
        participant_id: String,
        reason: LeaveReason,
    },
    AppEvent {
        payload: Value,
        /// Set when only this participant received the event.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to: Option<String>,
        /// Set when everyone except this participant received the event.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        except: Option<String>,
        /// Set when a participant originated the event.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from: Option<String>,
    },
    AnomalyDetected {
        participant_id: String,
        description: String,
    },
}

impl RoomEventKind {
    pub fn variant(&self) -> &'static str {
        match self {
            RoomEventKind::RoomOpened { .. } => "room_opened",
            RoomEventKind::RoomClosed { .. } => "room_closed",
            RoomEventKind::ParticipantJoined { .. } => "participant_joined",
            RoomEventKind::ParticipantRejoined { .. } => "participant_rejoined",
            RoomEventKind::ParticipantDisconnected { .. } => "participant_disconnected",
            RoomEventKind::ParticipantLeft { .. } => "participant_left",
            RoomEventKind::AppEvent { .. } => "app_event",
            RoomEventKind::AnomalyDetected { .. } => "anomaly_detected",
        }
    }

    /// The participant a lifecycle event is about.
    pub fn subject(&self) -> Option<&str> {
        match self {
            RoomEventKind::ParticipantJoined { participant_id, .. }
            | RoomEventKind::ParticipantRejoined { participant_id }
            | RoomEventKind::ParticipantDisconnected { participant_id, .. }
            | RoomEventKind::ParticipantLeft { participant_id, .. }
            | RoomEventKind::AnomalyDetected { participant_id, .. } => Some(participant_id),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum SubscriptionError {
    #[error("subscriber fell more than {SUBSCRIPTION_QUEUE} events behind")]
    Overflow,
}

pub(crate) struct Subscriber {
    tx: mpsc::Sender<RoomEvent>,
    overflowed: Arc<AtomicBool>,
}

impl Subscriber {
    /// Queues an event; returns false once the subscriber is gone or has
    /// overflowed and should be dropped.
    pub(crate) fn deliver(&self, event: &RoomEvent) -> bool {
        match self.tx.try_send(event.clone()) {
            Ok(()) => true,
            Err(mpsc::error::TrySendError::Full(_)) => {
                self.overflowed.store(true, Ordering::SeqCst);
                false
            }
            Err(mpsc::error::TrySendError::Closed(_)) => false,
        }
    }
}

/// An ordered stream of room events starting at the subscription point.
#[derive(Debug)]
pub struct Subscription {
    rx: mpsc::Receiver<RoomEvent>,
    overflowed: Arc<AtomicBool>,
}

pub(crate) fn subscription() -> (Subscriber, Subscription) {
    let (tx, rx) = mpsc::channel(SUBSCRIPTION_QUEUE);
    let overflowed = Arc::new(AtomicBool::new(false));
    (
        Subscriber {
            tx,
            overflowed: overflowed.clone(),
        },
        Subscription { rx, overflowed },
    )
}

impl Subscription {
    /// Next event; `Ok(None)` once the room is gone. After an overflow the
    /// queued events are still delivered, then `Err(Overflow)`.
    pub async fn recv(&mut self) -> Result<Option<RoomEvent>, SubscriptionError> {
        match self.rx.recv().await {
            Some(ev) => Ok(Some(ev)),
            None if self.overflowed.load(Ordering::SeqCst) => Err(SubscriptionError::Overflow),
            None => Ok(None),
        }
    }

    /// Non-blocking variant; `Ok(None)` when nothing is queued right now.
    pub fn try_recv(&mut self) -> Result<Option<RoomEvent>, SubscriptionError> {
        match self.rx.try_recv() {
            Ok(ev) => Ok(Some(ev)),
            Err(mpsc::error::TryRecvError::Disconnected) if self.overflowed.load(Ordering::SeqCst) => {
                Err(SubscriptionError::Overflow)
            }
            Err(_) => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn wire_shape() {
        let ev = RoomEvent {
            seq: 3,
            kind: RoomEventKind::ParticipantJoined {
                participant_id: "p1".into(),
                display_name: "ann".into(),
            },
        };
        let v = serde_json::to_value(&ev).unwrap();
        assert_eq!(
            v,
            json!({"seq": 3, "variant": "participant_joined", "body": {"participant_id": "p1", "display_name": "ann"}})
        );
        assert_eq!(serde_json::from_value::<RoomEvent>(v).unwrap(), ev);

        let app = RoomEvent {
            seq: 9,
            kind: RoomEventKind::AppEvent {
                payload: json!({"type": "played"}),
                to: None,
                except: None,
                from: None,
            },
        };
        let v = serde_json::to_value(&app).unwrap();
        assert_eq!(v, json!({"seq": 9, "variant": "app_event", "body": {"payload": {"type": "played"}}}));
        assert_eq!(serde_json::from_value::<RoomEvent>(v).unwrap(), app);
        assert_eq!(app.kind.variant(), "app_event");
    }

    #[tokio::test]
    async fn overflow_drains_then_errors() {
        let (sub, mut rx) = subscription();
        let ev = |seq| RoomEvent {
            seq,
            kind: RoomEventKind::RoomClosed { reason: "x".into() },
        };
        for seq in 0..SUBSCRIPTION_QUEUE as u64 {
            assert!(sub.deliver(&ev(seq)));
        }
        assert!(!sub.deliver(&ev(9999)));
        drop(sub);
        for seq in 0..SUBSCRIPTION_QUEUE as u64 {
            assert_eq!(rx.recv().await.unwrap().unwrap().seq, seq);
        }
        assert_eq!(rx.recv().await, Err(SubscriptionError::Overflow));
    }
}
