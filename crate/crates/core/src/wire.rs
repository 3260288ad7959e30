//! Frame format and message envelope shared by every transport.
//!
//! A frame on a byte stream is a 4-byte big-endian length followed by that
//! many bytes of UTF-8 JSON. The JSON is always a single object, the
//! [`Envelope`]. Over WebSocket the length prefix is dropped and each text
//! message carries exactly one envelope.
//!
//! Envelope fields are emitted in the fixed order `v`, `type`, `cid`,
//! `from`, `payload`; absent optionals and an empty payload are omitted.
//! Payload object keys are emitted sorted, so encoding is byte-stable.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

/// Protocol revision carried in every envelope.
pub const PROTOCOL_VERSION: u32 = 1;

/// Largest payload a frame may carry, in bytes.
pub const MAX_FRAME_LEN: usize = 1_048_576;

/// Size of the length prefix on stream transports.
pub const LENGTH_PREFIX_LEN: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("frame of {0} bytes exceeds the {MAX_FRAME_LEN} byte cap")]
    OversizeFrame(usize),
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("stream ended mid-frame ({got} of {expected} bytes)")]
    TruncatedFrame { expected: usize, got: usize },
}

fn malformed(msg: impl Into<String>) -> WireError {
    WireError::MalformedFrame(msg.into())
}

/// The closed set of envelope types. Anything else decodes to `Other` so the
/// caller can reject it with context.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MessageType {
    JoinRequest,
    JoinAccepted,
    JoinRejected,
    RejoinRequest,
    RejoinAccepted,
    RejoinRejected,
    Leave,
    RoomEvent,
    RpcRequest,
    RpcResponse,
    Error,
    Other(String),
}

impl MessageType {
    pub const KNOWN: [MessageType; 11] = [
        MessageType::JoinRequest,
        MessageType::JoinAccepted,
        MessageType::JoinRejected,
        MessageType::RejoinRequest,
        MessageType::RejoinAccepted,
        MessageType::RejoinRejected,
        MessageType::Leave,
        MessageType::RoomEvent,
        MessageType::RpcRequest,
        MessageType::RpcResponse,
        MessageType::Error,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            MessageType::JoinRequest => "join_request",
            MessageType::JoinAccepted => "join_accepted",
            MessageType::JoinRejected => "join_rejected",
            MessageType::RejoinRequest => "rejoin_request",
            MessageType::RejoinAccepted => "rejoin_accepted",
            MessageType::RejoinRejected => "rejoin_rejected",
            MessageType::Leave => "leave",
            MessageType::RoomEvent => "room_event",
            MessageType::RpcRequest => "rpc_request",
            MessageType::RpcResponse => "rpc_response",
            MessageType::Error => "error",
            MessageType::Other(s) => s,
        }
    }

    pub fn is_known(&self) -> bool {
        !matches!(self, MessageType::Other(_))
    }

    fn requires_cid(&self) -> bool {
        matches!(self, MessageType::RpcRequest | MessageType::RpcResponse)
    }
}

impl FromStr for MessageType {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(MessageType::KNOWN
            .iter()
            .find(|t| t.as_str() == s)
            .cloned()
            .unwrap_or_else(|| MessageType::Other(s.to_owned())))
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for MessageType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for MessageType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(s.parse().unwrap_or_else(|never| match never {}))
    }
}

/// The unit of every exchange between participants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelope {
    pub v: u32,
    #[serde(rename = "type")]
    pub kind: MessageType,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cid: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub from: Option<String>,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub payload: Map<String, Value>,
}

impl Envelope {
    pub fn new(kind: MessageType) -> Self {
        Envelope {
            v: PROTOCOL_VERSION,
            kind,
            cid: None,
            from: None,
            payload: Map::new(),
        }
    }

    /// Builds an envelope whose payload is `payload`, which must serialize to
    /// a JSON object (a non-object value is stored under `"value"`).
    pub fn with_payload(kind: MessageType, payload: impl Serialize) -> Self {
        let mut env = Envelope::new(kind);
        env.payload = match serde_json::to_value(payload) {
            Ok(Value::Object(map)) => map,
            Ok(Value::Null) | Err(_) => Map::new(),
            Ok(other) => {
                let mut map = Map::new();
                map.insert("value".into(), other);
                map
            }
        };
        env
    }

    pub fn with_cid(mut self, cid: u64) -> Self {
        self.cid = Some(cid);
        self
    }

    pub fn with_from(mut self, from: impl Into<String>) -> Self {
        self.from = Some(from.into());
        self
    }

    /// Deserializes the payload object into `T`.
    pub fn payload_as<T: for<'de> Deserialize<'de>>(&self) -> Result<T, serde_json::Error> {
        T::deserialize(Value::Object(self.payload.clone()))
    }

    fn check(&self) -> Result<(), WireError> {
        if self.v != PROTOCOL_VERSION {
            return Err(malformed(format!("unsupported protocol version {}", self.v)));
        }
        if self.kind.requires_cid() && self.cid.is_none() {
            return Err(malformed(format!("{} without cid", self.kind)));
        }
        Ok(())
    }

    /// Canonical JSON text of this envelope, without a length prefix.
    pub fn to_json_bytes(&self) -> Result<Vec<u8>, WireError> {
        self.check()?;
        let bytes = serde_json::to_vec(self).map_err(|e| malformed(e.to_string()))?;
        if bytes.len() > MAX_FRAME_LEN {
            return Err(WireError::OversizeFrame(bytes.len()));
        }
        Ok(bytes)
    }

    /// Parses one JSON envelope. Unknown fields are ignored.
    pub fn from_json_bytes(bytes: &[u8]) -> Result<Envelope, WireError> {
        if bytes.len() > MAX_FRAME_LEN {
            return Err(WireError::OversizeFrame(bytes.len()));
        }
        let text = std::str::from_utf8(bytes).map_err(|e| malformed(e.to_string()))?;
        let raw: RawEnvelope = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
        raw.into_envelope()
    }
}

#[derive(Deserialize)]
struct RawEnvelope {
    v: Option<u64>,
    #[serde(rename = "type")]
    kind: Option<MessageType>,
    cid: Option<u64>,
    from: Option<String>,
    payload: Option<Value>,
}

impl RawEnvelope {
    fn into_envelope(self) -> Result<Envelope, WireError> {
        let v = self.v.ok_or_else(|| malformed("missing v"))?;
        let kind = self.kind.ok_or_else(|| malformed("missing type"))?;
        let payload = match self.payload {
            None | Some(Value::Null) => Map::new(),
            Some(Value::Object(map)) => map,
            Some(_) => return Err(malformed("payload is not an object")),
        };
        let env = Envelope {
            v: u32::try_from(v).map_err(|_| malformed("version out of range"))?,
            kind,
            cid: self.cid,
            from: self.from,
            payload,
        };
        env.check()?;
        Ok(env)
    }
}

/// A validated frame payload: at most [`MAX_FRAME_LEN`] bytes of UTF-8 JSON
/// holding one object. This is what transports carry.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    payload: Vec<u8>,
}

impl Frame {
    pub fn new(payload: Vec<u8>) -> Result<Frame, WireError> {
        if payload.len() > MAX_FRAME_LEN {
            return Err(WireError::OversizeFrame(payload.len()));
        }
        let value: Value = serde_json::from_slice(&payload).map_err(|e| malformed(e.to_string()))?;
        if !value.is_object() {
            return Err(malformed("frame payload is not a JSON object"));
        }
        Ok(Frame { payload })
    }

    pub fn from_envelope(envelope: &Envelope) -> Result<Frame, WireError> {
        Ok(Frame {
            payload: envelope.to_json_bytes()?,
        })
    }

    pub fn to_envelope(&self) -> Result<Envelope, WireError> {
        Envelope::from_json_bytes(&self.payload)
    }

    pub fn len(&self) -> usize {
        self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payload.is_empty()
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Payload as text; always valid because construction checked it.
    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.payload).unwrap_or_default()
    }

    pub fn into_payload(self) -> Vec<u8> {
        self.payload
    }

    /// Length-prefixed bytes for stream transports.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(LENGTH_PREFIX_LEN + self.payload.len());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.payload.len() <= 256 {
            write!(f, "Frame({})", self.as_str())
        } else {
            write!(f, "Frame({} bytes)", self.payload.len())
        }
    }
}

/// Serializes `envelope` as a length-prefixed frame.
pub fn encode_frame(envelope: &Envelope) -> Result<Vec<u8>, WireError> {
    Ok(Frame::from_envelope(envelope)?.to_bytes())
}

/// Decodes the frame at the start of `bytes`, returning the envelope and the
/// number of bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(Envelope, usize), WireError> {
    let len = declared_len(bytes)?;
    let end = LENGTH_PREFIX_LEN + len;
    if bytes.len() < end {
        return Err(WireError::TruncatedFrame {
            expected: len,
            got: bytes.len() - LENGTH_PREFIX_LEN,
        });
    }
    let env = Envelope::from_json_bytes(&bytes[LENGTH_PREFIX_LEN..end])?;
    Ok((env, end))
}

fn declared_len(bytes: &[u8]) -> Result<usize, WireError> {
    if bytes.len() < LENGTH_PREFIX_LEN {
        return Err(WireError::TruncatedFrame {
            expected: LENGTH_PREFIX_LEN,
            got: bytes.len(),
        });
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if len > MAX_FRAME_LEN {
        return Err(WireError::OversizeFrame(len));
    }
    Ok(len)
}

/// Reads one frame from a blocking reader. `Ok(None)` means the stream ended
/// cleanly on a frame boundary.
pub fn read_frame_blocking<R: Read>(reader: &mut R) -> Result<Option<Envelope>, WireError> {
    let mut prefix = [0u8; LENGTH_PREFIX_LEN];
    let got = read_full(reader, &mut prefix)?;
    if got == 0 {
        return Ok(None);
    }
    let len = declared_len(&prefix[..got])?;
    let mut payload = vec![0u8; len];
    let got = read_full(reader, &mut payload)?;
    if got < len {
        return Err(WireError::TruncatedFrame { expected: len, got });
    }
    Envelope::from_json_bytes(&payload).map(Some)
}

fn read_full<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<usize, WireError> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(malformed(e.to_string())),
        }
    }
    Ok(filled)
}

/// Errors from the async frame reader: either the bytes were bad or the
/// underlying stream failed.
#[derive(Debug, Error)]
pub enum ReadFrameError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Reads one length-prefixed frame. `Ok(None)` on clean end of stream.
pub async fn read_frame<R: AsyncRead + Unpin>(reader: &mut R) -> Result<Option<Frame>, ReadFrameError> {
    let mut prefix = [0u8; LENGTH_PREFIX_LEN];
    let mut got = 0;
    while got < LENGTH_PREFIX_LEN {
        let n = reader.read(&mut prefix[got..]).await?;
        if n == 0 {
            if got == 0 {
                return Ok(None);
            }
            return Err(WireError::TruncatedFrame {
                expected: LENGTH_PREFIX_LEN,
                got,
            }
            .into());
        }
        got += n;
    }
    let len = declared_len(&prefix)?;
    let mut payload = vec![0u8; len];
    let mut got = 0;
    while got < len {
        let n = reader.read(&mut payload[got..]).await?;
        if n == 0 {
            return Err(WireError::TruncatedFrame { expected: len, got }.into());
        }
        got += n;
    }
    Ok(Some(Frame::new(payload)?))
}

pub async fn write_frame<W: AsyncWrite + Unpin>(writer: &mut W, frame: &Frame) -> std::io::Result<()> {
    writer.write_all(&(frame.len() as u32).to_be_bytes()).await?;
    writer.write_all(frame.payload()).await?;
    writer.flush().await
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn leave_envelope_bytes() {
        let bytes = encode_frame(&Envelope::new(MessageType::Leave)).unwrap();
        let text = br#"{"v":1,"type":"leave"}"#;
        // counted by hand: 22 bytes
        assert_eq!(text.len(), 22);
        assert_eq!(&bytes[..4], &[0, 0, 0, 0x16]);
        assert_eq!(&bytes[4..], text);
    }

    #[test]
    fn canonical_field_order() {
        let env = Envelope::with_payload(MessageType::RpcRequest, json!({"z": 1, "a": [true]}))
            .with_cid(7)
            .with_from("p1");
        let text = String::from_utf8(env.to_json_bytes().unwrap()).unwrap();
        assert_eq!(
            text,
            r#"{"v":1,"type":"rpc_request","cid":7,"from":"p1","payload":{"a":[true],"z":1}}"#
        );
        assert_eq!(env.to_json_bytes().unwrap(), env.to_json_bytes().unwrap());
    }

    #[test]
    fn oversize_on_encode() {
        let filler = "x".repeat(MAX_FRAME_LEN + 1);
        let env = Envelope::with_payload(MessageType::RoomEvent, json!({ "body": filler }));
        assert!(matches!(encode_frame(&env), Err(WireError::OversizeFrame(_))));
    }

    #[test]
    fn exact_cap_is_accepted() {
        let base = Envelope::with_payload(MessageType::RoomEvent, json!({ "body": "" }));
        let overhead = base.to_json_bytes().unwrap().len();
        let env = Envelope::with_payload(
            MessageType::RoomEvent,
            json!({ "body": "y".repeat(MAX_FRAME_LEN - overhead) }),
        );
        let bytes = encode_frame(&env).unwrap();
        assert_eq!(bytes.len(), LENGTH_PREFIX_LEN + MAX_FRAME_LEN);
        assert_eq!(decode_frame(&bytes).unwrap().0, env);
    }

    #[test]
    fn declared_length_over_cap() {
        let mut bytes = 2_000_000u32.to_be_bytes().to_vec();
        bytes.extend_from_slice(b"{}");
        assert_eq!(decode_frame(&bytes), Err(WireError::OversizeFrame(2_000_000)));
    }

    #[test]
    fn unknown_fields_ignored() {
        let text = br#"{"v":1,"type":"room_event","payload":{},"extra":9}"#;
        let env = Envelope::from_json_bytes(text).unwrap();
        assert_eq!(env, Envelope::new(MessageType::RoomEvent));
    }

    #[test]
    fn unknown_type_surfaces() {
        let env = Envelope::from_json_bytes(br#"{"v":1,"type":"teleport"}"#).unwrap();
        assert_eq!(env.kind, MessageType::Other("teleport".into()));
        assert!(!env.kind.is_known());
    }

    #[test]
    fn malformed_inputs() {
        for bad in [
            &b"{\"type\":\"leave\"}"[..],
            b"{\"v\":1}",
            b"[1,2]",
            b"{\"v\":1,\"type\":\"leave\"",
            b"\xff\xfe",
            b"{\"v\":1,\"type\":\"rpc_request\"}",
            b"{\"v\":2,\"type\":\"leave\"}",
            b"{\"v\":1,\"type\":\"leave\",\"payload\":3}",
        ] {
            assert!(
                matches!(Envelope::from_json_bytes(bad), Err(WireError::MalformedFrame(_))),
                "{:?}",
                String::from_utf8_lossy(bad)
            );
        }
    }

    #[test]
    fn truncated_stream() {
        let bytes = encode_frame(&Envelope::new(MessageType::Leave)).unwrap();
        assert!(matches!(
            decode_frame(&bytes[..10]),
            Err(WireError::TruncatedFrame { expected: 22, got: 6 })
        ));
        assert!(matches!(decode_frame(&bytes[..2]), Err(WireError::TruncatedFrame { .. })));
        let mut cursor = std::io::Cursor::new(&bytes[..10]);
        assert!(matches!(
            read_frame_blocking(&mut cursor),
            Err(WireError::TruncatedFrame { .. })
        ));
    }

    #[test]
    fn blocking_reader_consumes_exact_frames() {
        let a = Envelope::new(MessageType::Leave);
        let b = Envelope::with_payload(MessageType::Error, json!({"reason": "x"}));
        let mut bytes = encode_frame(&a).unwrap();
        bytes.extend(encode_frame(&b).unwrap());
        let (first, used) = decode_frame(&bytes).unwrap();
        assert_eq!(first, a);
        assert_eq!(decode_frame(&bytes[used..]).unwrap().0, b);
        let mut cursor = std::io::Cursor::new(bytes);
        assert_eq!(read_frame_blocking(&mut cursor).unwrap(), Some(a));
        assert_eq!(read_frame_blocking(&mut cursor).unwrap(), Some(b));
        assert_eq!(read_frame_blocking(&mut cursor).unwrap(), None);
    }

    #[tokio::test]
    async fn async_reader_round_trip() {
        let env = Envelope::with_payload(MessageType::RpcResponse, json!({"move": 3})).with_cid(9);
        let frame = Frame::from_envelope(&env).unwrap();
        let mut buf = Vec::new();
        write_frame(&mut buf, &frame).await.unwrap();
        let mut reader = &buf[..];
        let read = read_frame(&mut reader).await.unwrap().unwrap();
        assert_eq!(read.to_envelope().unwrap(), env);
        assert!(read_frame(&mut reader).await.unwrap().is_none());
    }
}
