use serde::{Deserialize, Serialize};

use crate::env::Event;

/// Frames sent by the server.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerFrame {
    Hello {
        obs_dim: usize,
        act_dim: usize,
        tick_hz: u32,
    },
    State {
        t: usize,
        obs: Vec<f64>,
        reward: f64,
        event: Event,
        done: bool,
    },
    Saved {
        path: String,
    },
    Busy,
    Error {
        msg: String,
    },
}

/// Frames sent by the client. Unknown fields are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientFrame {
    Action {
        a: Vec<f64>,
    },
    Reset {
        #[serde(default)]
        seed: Option<u64>,
    },
    Quit,
}

impl ServerFrame {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("frames serialize")
    }
}

impl ClientFrame {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("frames serialize")
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("malformed frame: {e}"))
    }
}
