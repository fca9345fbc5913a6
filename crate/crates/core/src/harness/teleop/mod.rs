//! WebSocket teleoperation: a browser (or any client) streams actions at a
//! fixed tick rate and successful episodes are saved as demonstrations.

mod client;
pub mod protocol;
mod server;

pub use client::{validate_hello, Hello, RemoteEpisode, ScriptedClient, TeleopClient};
pub use protocol::{ClientFrame, ServerFrame};
pub use server::{ServeConfig, ServeStats, TeleopServer};

use crate::demo::DemoError;
use crate::env::EnvError;

#[derive(Debug, thiserror::Error)]
pub enum TeleopError {
    #[error("websocket handshake failed: {0}")]
    Handshake(String),
    #[error("server is busy with another session")]
    Busy,
    #[error("connection closed")]
    Closed,
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    WebSocket(#[from] tungstenite::Error),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
