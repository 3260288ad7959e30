pub mod discovery;
pub mod room;
pub mod transport;
pub mod wire;
