//! Distributed card games on top of roomkit rooms.

pub mod cardgame;
pub mod tressette;
