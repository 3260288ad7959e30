//! Session tokens: `token_id.participant_id.mac`.
//!
//! `mac` is the first 16 bytes of HMAC-SHA256 keyed with the room secret
//! over the ASCII concatenation `token_id ‖ participant_id ‖ room_id`
//! (both ids in lowercase hex), written as lowercase hex.

use std::fmt;
use std::str::FromStr;

use hmac::{Hmac, Mac};
use sha2::Sha256;
use thiserror::Error;

type HmacSha256 = Hmac<Sha256>;

pub const SECRET_KEY_LEN: usize = 32;
pub const TOKEN_ID_LEN: usize = 16;
pub const MAC_LEN: usize = 16;

#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; SECRET_KEY_LEN]);

impl SecretKey {
    pub fn generate() -> Self {
        SecretKey(rand::random())
    }

    pub fn from_bytes(bytes: [u8; SECRET_KEY_LEN]) -> Self {
        SecretKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; SECRET_KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed session token")]
pub struct TokenParseError;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SessionToken {
    token_id: String,
    participant_id: String,
    mac: String,
}

fn mac_bytes(key: &SecretKey, token_id: &str, participant_id: &str, room_id: &str) -> HmacSha256 {
    let mut mac = HmacSha256::new_from_slice(key.as_bytes()).expect("hmac accepts any key length");
    mac.update(token_id.as_bytes());
    mac.update(participant_id.as_bytes());
    mac.update(room_id.as_bytes());
    mac
}

fn is_lower_hex(s: &str, bytes: usize) -> bool {
    s.len() == bytes * 2 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

impl SessionToken {
    pub fn issue(key: &SecretKey, participant_id: &str, room_id: &str) -> Self {
        let token_id = hex::encode(rand::random::<[u8; TOKEN_ID_LEN]>());
        Self::with_id(key, token_id, participant_id, room_id)
    }

    pub fn with_id(key: &SecretKey, token_id: String, participant_id: &str, room_id: &str) -> Self {
        let tag = mac_bytes(key, &token_id, participant_id, room_id).finalize().into_bytes();
        SessionToken {
            token_id,
            participant_id: participant_id.to_owned(),
            mac: hex::encode(&tag[..MAC_LEN]),
        }
    }

    pub fn token_id(&self) -> &str {
        &self.token_id
    }

    pub fn participant_id(&self) -> &str {
        &self.participant_id
    }

    pub fn mac(&self) -> &str {
        &self.mac
    }

    /// Recomputes the MAC; comparison is constant-time.
    pub fn verify(&self, key: &SecretKey, room_id: &str) -> bool {
        let Ok(tag) = hex::decode(&self.mac) else {
            return false;
        };
        mac_bytes(key, &self.token_id, &self.participant_id, room_id)
            .verify_truncated_left(&tag)
            .is_ok()
    }
}

impl fmt::Display for SessionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.token_id, self.participant_id, self.mac)
    }
}

impl FromStr for SessionToken {
    type Err = TokenParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split('.');
        let (Some(token_id), Some(participant_id), Some(mac), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(TokenParseError);
        };
        if !is_lower_hex(token_id, TOKEN_ID_LEN) || !is_lower_hex(mac, MAC_LEN) || participant_id.is_empty() {
            return Err(TokenParseError);
        }
        Ok(SessionToken {
            token_id: token_id.to_owned(),
            participant_id: participant_id.to_owned(),
            mac: mac.to_owned(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key0() -> SecretKey {
        let mut b = [0u8; 32];
        for (i, x) in b.iter_mut().enumerate() {
            *x = i as u8;
        }
        SecretKey::from_bytes(b)
    }

    // Reference MACs computed with Python's hmac module.
    #[test]
    fn frozen_vectors() {
        let t = SessionToken::with_id(&key0(), "00112233445566778899aabbccddeeff".into(), "p1", &"ab".repeat(16));
        assert_eq!(t.mac(), "56dbc14a10274403dfb464f54353f05c");
        assert_eq!(
            t.to_string(),
            "00112233445566778899aabbccddeeff.p1.56dbc14a10274403dfb464f54353f05c"
        );
        let t = SessionToken::with_id(
            &SecretKey::from_bytes([7; 32]),
            "0f".repeat(16),
            "p4",
            &"0123456789abcdef".repeat(2),
        );
        assert_eq!(t.mac(), "70aef437c9ea54b8eed71d132c0881f5");
    }

    #[test]
    fn issued_token_verifies_only_in_its_room() {
        let key = SecretKey::generate();
        let room = "cd".repeat(16);
        let t = SessionToken::issue(&key, "p3", &room);
        assert!(t.verify(&key, &room));
        assert!(!t.verify(&key, &"ce".repeat(16)));
        assert!(!t.verify(&SecretKey::generate(), &room));
        let parsed: SessionToken = t.to_string().parse().unwrap();
        assert_eq!(parsed, t);
    }

    #[test]
    fn rejects_malformed_text() {
        for bad in ["", "a.b", "a.b.c.d", "zz.p1.00", &format!("{}.p1.{}", "A".repeat(32), "0".repeat(32))] {
            assert_eq!(bad.parse::<SessionToken>(), Err(TokenParseError), "{bad}");
        }
    }

    proptest! {
        // Any single flipped hex character breaks either parsing or the MAC.
        #[test]
        fn single_char_tamper_fails(pos in 0usize..200, pid in 1u32..1000) {
            let key = key0();
            let room = "ab".repeat(16);
            let t = SessionToken::issue(&key, &format!("p{pid}"), &room);
            let text = t.to_string();
            let pos = pos % text.len();
            let mut bytes = text.into_bytes();
            let c = bytes[pos];
            bytes[pos] = match c {
                b'0'..=b'8' | b'a'..=b'e' => c + 1,
                b'9' => b'a',
                b'f' => b'0',
                b'p' => b'q',
                b'.' => b'x',
                _ => b'0',
            };
            let tampered = String::from_utf8(bytes).unwrap();
            let ok = tampered.parse::<SessionToken>().map(|t| t.verify(&key, &room)).unwrap_or(false);
            prop_assert!(!ok, "tampered token {} verified", tampered);
        }
    }
}
