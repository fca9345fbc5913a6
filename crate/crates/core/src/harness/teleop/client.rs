use std::net::{TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::time::Duration;

use tungstenite::{Message, WebSocket};

use super::protocol::{ClientFrame, ServerFrame};
use super::TeleopError;
use crate::demo::ScriptedExpert;
use crate::env::kinematics::{norm, sub};
use crate::env::{Action, EnvConfig, Event, Observation, Task, ACT_DIM, OBS_DIM};

/// Dimensions announced by the server.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hello {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub tick_hz: u32,
}

/// Checks a server greeting against the dimensions this build expects.
pub fn validate_hello(frame: &ServerFrame) -> Result<Hello, TeleopError> {
    match *frame {
        ServerFrame::Hello {
            obs_dim,
            act_dim,
            tick_hz,
        } => {
            if obs_dim != OBS_DIM || act_dim != ACT_DIM {
                return Err(TeleopError::Protocol(format!(
                    "server speaks {obs_dim}/{act_dim}, expected {OBS_DIM}/{ACT_DIM}"
                )));
            }
            if tick_hz == 0 {
                return Err(TeleopError::Protocol("server announced tick_hz 0".into()));
            }
            Ok(Hello {
                obs_dim,
                act_dim,
                tick_hz,
            })
        }
        ServerFrame::Busy => Err(TeleopError::Busy),
        ref other => Err(TeleopError::Protocol(format!("expected hello, got {}", other.to_json()))),
    }
}

/// Blocking client for the teleoperation endpoint.
pub struct TeleopClient {
    ws: WebSocket<TcpStream>,
    hello: Hello,
}

impl TeleopClient {
    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self, TeleopError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        let url = format!("ws://{}/", stream.peer_addr()?);
        let (ws, _) = tungstenite::client(url.as_str(), stream).map_err(|e| TeleopError::Handshake(e.to_string()))?;
        let mut client = Self {
            ws,
            hello: Hello {
                obs_dim: 0,
                act_dim: 0,
                tick_hz: 0,
            },
        };
        let first = client.recv()?;
        client.hello = validate_hello(&first)?;
        Ok(client)
    }

    pub fn hello(&self) -> Hello {
        self.hello
    }

    pub fn send(&mut self, frame: &ClientFrame) -> Result<(), TeleopError> {
        self.ws.send(Message::text(frame.to_json()))?;
        Ok(())
    }

    pub fn send_raw(&mut self, text: &str) -> Result<(), TeleopError> {
        self.ws.send(Message::text(text))?;
        Ok(())
    }

    /// Next server frame, skipping control messages.
    pub fn recv(&mut self) -> Result<ServerFrame, TeleopError> {
        loop {
            match self.ws.read()? {
                Message::Text(t) => {
                    return serde_json::from_str(t.as_str())
                        .map_err(|e| TeleopError::Protocol(format!("unparseable server frame {}: {e}", t.as_str())))
                }
                Message::Close(_) => return Err(TeleopError::Closed),
                Message::Binary(_) => return Err(TeleopError::Protocol("unexpected binary frame".into())),
                _ => {}
            }
        }
    }

    /// Next state frame, skipping anything else.
    pub fn recv_state(&mut self) -> Result<ServerFrame, TeleopError> {
        loop {
            let f = self.recv()?;
            if matches!(f, ServerFrame::State { .. }) {
                return Ok(f);
            }
            if let ServerFrame::Error { msg } = &f {
                log::debug!("server error frame: {msg}");
            }
        }
    }

    pub fn quit(mut self) -> Result<(), TeleopError> {
        self.send(&ClientFrame::Quit)?;
        // Drain until the server closes.
        loop {
            match self.ws.read() {
                Ok(_) => {}
                Err(_) => return Ok(()),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RemoteEpisode {
    pub steps: usize,
    pub event: Event,
    pub total_reward: f64,
    pub saved: Option<PathBuf>,
    /// Largest distance between the reported hand position and the one
    /// recomputed from the reported joints and hand normal.
    pub max_fk_error: f64,
}

/// Drives the scripted expert over the wire, the way a human operator
/// would drive the browser client.
pub struct ScriptedClient {
    cfg: EnvConfig,
    expert: ScriptedExpert,
}

impl ScriptedClient {
    pub fn new(cfg: EnvConfig, task: Task, noise_scale: f64, seed: u64) -> Self {
        let expert = ScriptedExpert::new(cfg.clone(), task, noise_scale, seed);
        Self { cfg, expert }
    }

    fn check(&self, obs: &[f64]) -> Result<(Observation, f64), TeleopError> {
        let o = Observation::from_slice(obs).map_err(|e| TeleopError::Protocol(e.to_string()))?;
        let fk = self.cfg.arm.hand_center_from_normal(&o.q(), o.normal());
        Ok((o, norm(sub(fk, o.hand()))))
    }

    /// Plays one episode from the state frame the server last sent. With
    /// `reset` a reset frame is sent first.
    pub fn play(&mut self, client: &mut TeleopClient, reset: Option<Option<u64>>) -> Result<RemoteEpisode, TeleopError> {
        if let Some(seed) = reset {
            client.send(&ClientFrame::Reset { seed })?;
        }
        let (mut obs, mut max_fk_error) = match client.recv_state()? {
            ServerFrame::State { obs, t: 0, .. } => self.check(&obs)?,
            other => return Err(TeleopError::Protocol(format!("expected state t=0, got {}", other.to_json()))),
        };
        let mut total = 0.0;
        let (steps, event) = loop {
            let a: Action = self.expert.act(&obs);
            client.send(&ClientFrame::Action { a: a.0.to_vec() })?;
            match client.recv_state()? {
                ServerFrame::State {
                    t,
                    obs: o,
                    reward,
                    event,
                    done,
                } => {
                    let (next, err) = self.check(&o)?;
                    max_fk_error = max_fk_error.max(err);
                    total += reward;
                    obs = next;
                    if done {
                        break (t, event);
                    }
                }
                _ => unreachable!(),
            }
        };
        let saved = if event == Event::Success {
            match client.recv()? {
                ServerFrame::Saved { path } => Some(PathBuf::from(path)),
                other => return Err(TeleopError::Protocol(format!("expected saved, got {}", other.to_json()))),
            }
        } else {
            None
        };
        Ok(RemoteEpisode {
            steps,
            event,
            total_reward: total,
            saved,
            max_fk_error,
        })
    }
}
