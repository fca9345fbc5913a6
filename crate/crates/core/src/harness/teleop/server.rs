use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use super::protocol::{ClientFrame, ServerFrame};
use super::TeleopError;
use crate::demo::{unix_now, DemoSet, DemoStep, Source, Trajectory};
use crate::env::{Action, EnvConfig, Event, GraspEnv, Observation, Task, ACT_DIM, OBS_DIM};

#[derive(Clone, Debug, PartialEq)]
pub struct ServeConfig {
    pub task: Task,
    /// Seed of the first episode; later episodes without an explicit reset
    /// seed count up from here.
    pub seed: u64,
    pub tick_hz: u32,
    /// Advance one step per received action instead of on a fixed clock.
    /// Used by loopback tests so that recordings do not depend on timing.
    pub lockstep: bool,
    pub keep_failures: bool,
    pub out_dir: PathBuf,
    pub env: EnvConfig,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            task: Task::Ball,
            seed: 0,
            tick_hz: 20,
            lockstep: false,
            keep_failures: false,
            out_dir: PathBuf::from("teleop"),
            env: EnvConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ServeStats {
    pub sessions: usize,
    pub refused: usize,
    pub saved: Vec<PathBuf>,
    pub discarded: usize,
}

enum Flow {
    Open,
    Closed,
}

struct Session {
    ws: WebSocket<TcpStream>,
    env: GraspEnv,
    episode_seed: u64,
    next_seed: u64,
    obs: Observation,
    steps: Vec<DemoStep>,
    finished: bool,
    pending: Option<Action>,
}

fn is_would_block(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn handshake(stream: TcpStream) -> Result<WebSocket<TcpStream>, TeleopError> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    stream.set_nodelay(true)?;
    tungstenite::accept(stream).map_err(|e| TeleopError::Handshake(e.to_string()))
}

impl Session {
    fn open(mut ws: WebSocket<TcpStream>, cfg: &ServeConfig) -> Result<Self, TeleopError> {
        let mut env = GraspEnv::new(cfg.env.clone())?;
        let (_, obs) = env.reset(cfg.seed, cfg.task);
        ws.send(Message::text(
            ServerFrame::Hello {
                obs_dim: OBS_DIM,
                act_dim: ACT_DIM,
                tick_hz: cfg.tick_hz,
            }
            .to_json(),
        ))?;
        ws.get_mut().set_nonblocking(true)?;
        let mut s = Self {
            ws,
            env,
            episode_seed: cfg.seed,
            next_seed: cfg.seed.wrapping_add(1),
            obs,
            steps: Vec::new(),
            finished: false,
            pending: None,
        };
        s.send_state(0, 0.0, Event::None, false)?;
        Ok(s)
    }

    fn write(&mut self, frame: ServerFrame) -> Result<(), TeleopError> {
        match self.ws.write(Message::text(frame.to_json())) {
            Ok(()) => Ok(()),
            Err(e) if is_would_block(&e) => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    fn flush(&mut self) -> Result<(), TeleopError> {
        match self.ws.flush() {
            Ok(()) => Ok(()),
            Err(e) if is_would_block(&e) => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    fn send_state(&mut self, t: usize, reward: f64, event: Event, done: bool) -> Result<(), TeleopError> {
        let obs = self.obs.0.to_vec();
        self.write(ServerFrame::State {
            t,
            obs,
            reward,
            event,
            done,
        })?;
        self.flush()
    }

    fn error(&mut self, msg: String) -> Result<(), TeleopError> {
        log::debug!("teleop: {msg}");
        self.write(ServerFrame::Error { msg })?;
        self.flush()
    }

    fn discard_unfinished(&mut self, stats: &mut ServeStats) {
        if !self.finished && !self.steps.is_empty() {
            stats.discarded += 1;
        }
        self.steps.clear();
    }

    fn reset(&mut self, seed: Option<u64>, cfg: &ServeConfig, stats: &mut ServeStats) -> Result<(), TeleopError> {
        self.discard_unfinished(stats);
        let seed = seed.unwrap_or(self.next_seed);
        self.next_seed = seed.wrapping_add(1);
        self.episode_seed = seed;
        self.obs = self.env.reset(seed, cfg.task).1;
        self.finished = false;
        self.pending = None;
        self.send_state(0, 0.0, Event::None, false)
    }

    /// Applies one action. Does nothing once the episode has ended.
    fn tick(&mut self, action: Action, cfg: &ServeConfig, stats: &mut ServeStats) -> Result<(), TeleopError> {
        if self.finished {
            return Ok(());
        }
        let action = action.clamped();
        let out = self.env.step(&action)?;
        self.steps.push(DemoStep {
            obs: self.obs,
            action,
            reward: out.reward.total,
            event: out.event,
            done: out.done,
        });
        self.obs = out.observation;
        self.send_state(self.steps.len(), out.reward.total, out.event, out.done)?;
        if out.done {
            self.finished = true;
            let traj = Trajectory {
                task: cfg.task,
                seed: self.episode_seed,
                steps: std::mem::take(&mut self.steps),
                source: Source::Teleop,
                created_at: unix_now(),
            };
            if traj.succeeded() || cfg.keep_failures {
                std::fs::create_dir_all(&cfg.out_dir)?;
                let path = cfg.out_dir.join(format!(
                    "teleop-{}-seed{}-{:03}.jsonl",
                    cfg.task,
                    traj.seed,
                    stats.saved.len()
                ));
                DemoSet::from_trajectories(cfg.task, vec![traj])?.save(&path)?;
                self.write(ServerFrame::Saved {
                    path: path.display().to_string(),
                })?;
                self.flush()?;
                log::info!("teleop: saved {}", path.display());
                stats.saved.push(path);
            } else {
                stats.discarded += 1;
            }
        }
        Ok(())
    }

    fn handle_text(&mut self, text: &str, cfg: &ServeConfig, stats: &mut ServeStats) -> Result<Flow, TeleopError> {
        match ClientFrame::parse(text) {
            Err(msg) => self.error(msg)?,
            Ok(ClientFrame::Action { a }) => match Action::from_slice(&a) {
                Err(e) => self.error(format!("bad action: {e}"))?,
                Ok(act) if !act.is_finite() => self.error("bad action: non-finite component".into())?,
                Ok(act) => {
                    if cfg.lockstep {
                        self.tick(act, cfg, stats)?;
                    } else {
                        self.pending = Some(act);
                    }
                }
            },
            Ok(ClientFrame::Reset { seed }) => self.reset(seed, cfg, stats)?,
            Ok(ClientFrame::Quit) => {
                self.discard_unfinished(stats);
                let _ = self.ws.close(None);
                let _ = self.flush();
                return Ok(Flow::Closed);
            }
        }
        Ok(Flow::Open)
    }

    /// Handles every frame that has arrived, then, on the fixed clock,
    /// advances the simulation by the latest action (zero if none arrived).
    fn poll(&mut self, cfg: &ServeConfig, stats: &mut ServeStats, clock_tick: bool) -> Result<Flow, TeleopError> {
        loop {
            match self.ws.read() {
                Ok(Message::Text(t)) => {
                    if let Flow::Closed = self.handle_text(t.as_str(), cfg, stats)? {
                        return Ok(Flow::Closed);
                    }
                }
                Ok(Message::Binary(_)) => self.error("malformed frame: binary messages are not supported".into())?,
                Ok(Message::Close(_)) => {
                    self.discard_unfinished(stats);
                    return Ok(Flow::Closed);
                }
                Ok(_) => {}
                Err(e) if is_would_block(&e) => break,
                Err(e) => {
                    log::debug!("teleop: connection ended: {e}");
                    self.discard_unfinished(stats);
                    return Ok(Flow::Closed);
                }
            }
        }
        if clock_tick && !cfg.lockstep {
            let a = self.pending.take().unwrap_or_else(Action::zeros);
            self.tick(a, cfg, stats)?;
        }
        self.flush()?;
        Ok(Flow::Open)
    }
}

/// Teleoperation endpoint: one live session at a time, served on a single
/// thread. Further clients receive a busy frame and are disconnected.
pub struct TeleopServer {
    listener: TcpListener,
    cfg: ServeConfig,
}

impl TeleopServer {
    pub fn bind(addr: impl std::net::ToSocketAddrs, cfg: ServeConfig) -> Result<Self, TeleopError> {
        if cfg.tick_hz == 0 {
            return Err(TeleopError::Config("tick_hz must be positive".into()));
        }
        cfg.env.validate()?;
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(Self { listener, cfg })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, TeleopError> {
        Ok(self.listener.local_addr()?)
    }

    pub fn config(&self) -> &ServeConfig {
        &self.cfg
    }

    fn refuse(stream: TcpStream) {
        match handshake(stream) {
            Ok(mut ws) => {
                let _ = ws.send(Message::text(ServerFrame::Busy.to_json()));
                let _ = ws.close(None);
                let _ = ws.flush();
            }
            Err(e) => log::debug!("teleop: refused client failed the handshake: {e}"),
        }
    }

    /// Serves until `shutdown` is set, or until `max_sessions` sessions
    /// have ended when given.
    pub fn run(&self, shutdown: &AtomicBool, max_sessions: Option<usize>) -> Result<ServeStats, TeleopError> {
        let mut stats = ServeStats::default();
        let mut session: Option<Session> = None;
        let period = Duration::from_secs_f64(1.0 / self.cfg.tick_hz as f64);
        let mut next_tick = Instant::now() + period;
        while !shutdown.load(Ordering::Relaxed) {
            loop {
                match self.listener.accept() {
                    Ok((stream, peer)) => {
                        if session.is_some() {
                            log::info!("teleop: refusing {peer}, session busy");
                            stats.refused += 1;
                            Self::refuse(stream);
                        } else {
                            match handshake(stream).and_then(|ws| Session::open(ws, &self.cfg)) {
                                Ok(s) => {
                                    log::info!("teleop: session with {peer}");
                                    session = Some(s);
                                    next_tick = Instant::now() + period;
                                }
                                Err(e) => log::warn!("teleop: could not open session with {peer}: {e}"),
                            }
                        }
                    }
                    Err(e) if e.kind() == ErrorKind::WouldBlock => break,
                    Err(e) => return Err(e.into()),
                }
            }
            let now = Instant::now();
            let clock_tick = now >= next_tick;
            if clock_tick {
                next_tick += period;
                if next_tick < now {
                    next_tick = now + period;
                }
            }
            if let Some(s) = session.as_mut() {
                let flow = match s.poll(&self.cfg, &mut stats, clock_tick) {
                    Ok(f) => f,
                    Err(e) => {
                        log::warn!("teleop: session error: {e}");
                        s.discard_unfinished(&mut stats);
                        Flow::Closed
                    }
                };
                if let Flow::Closed = flow {
                    session = None;
                    stats.sessions += 1;
                    if max_sessions.is_some_and(|m| stats.sessions >= m) {
                        break;
                    }
                }
            }
            let wait = if self.cfg.lockstep || session.is_none() {
                Duration::from_millis(1)
            } else {
                next_tick.saturating_duration_since(Instant::now()).min(Duration::from_millis(2))
            };
            std::thread::sleep(wait);
        }
        Ok(stats)
    }
}
