//! The session token kept between runs of `join`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const TOKEN_PATH_ENV: &str = "ROOMKIT_TOKEN_PATH";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SavedSession {
    pub endpoint: String,
    pub room_id: String,
    pub participant_id: String,
    pub token: String,
}

/// Flag, then `ROOMKIT_TOKEN_PATH`, then `~/.roomkit/session.json`.
pub fn token_path(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_owned();
    }
    if let Some(p) = std::env::var_os(TOKEN_PATH_ENV) {
        return PathBuf::from(p);
    }
    let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    home.join(".roomkit").join("session.json")
}

pub fn save(path: &Path, session: &SavedSession) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_vec_pretty(session)?)
}

pub fn load(path: &Path) -> std::io::Result<SavedSession> {
    let bytes = std::fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(std::io::Error::other)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("s.json");
        let s = SavedSession {
            endpoint: "tcp://127.0.0.1:4700".into(),
            room_id: "ab".repeat(16),
            participant_id: "p1".into(),
            token: "t".into(),
        };
        save(&path, &s).unwrap();
        assert_eq!(load(&path).unwrap(), s);
        assert_eq!(token_path(Some(&path)), path);
    }
}
