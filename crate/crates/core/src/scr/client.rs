use super::wire::{
    format_actuators, parse_server_message, ActuatorFrame, FormatError, SensorFrame, ServerMessage,
};
use super::{default_rangefinder_angles, format_init, Literals, DEFAULT_CLIENT_ID};
use crate::agents::Learner;
use serde::Serialize;
use std::io::{self, ErrorKind};
use std::net::{ToSocketAddrs, UdpSocket};
use std::time::Duration;

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub host: String,
    pub port: u16,
    pub client_id: String,
    pub angles: Vec<f64>,
    pub timeout: Duration,
    /// Handshake attempts, and consecutive mid-session timeouts tolerated.
    pub retries: u32,
    pub literals: Literals,
    /// Stop after this many actuator frames (the server is not told).
    pub max_steps: Option<u64>,
}

impl ClientConfig {
    pub fn new(host: impl Into<String>, port: u16) -> Self {
        Self {
            host: host.into(),
            port,
            client_id: DEFAULT_CLIENT_ID.into(),
            angles: default_rangefinder_angles().to_vec(),
            timeout: Duration::from_millis(1000),
            retries: 5,
            literals: Literals::default(),
            max_steps: None,
        }
    }
}

/// Maps each sensor frame to exactly one actuator frame.
pub trait Driver {
    fn drive(&mut self, frame: &SensorFrame) -> ActuatorFrame;
    fn on_restart(&mut self) {}
}

impl<F: FnMut(&SensorFrame) -> ActuatorFrame> Driver for F {
    fn drive(&mut self, frame: &SensorFrame) -> ActuatorFrame {
        self(frame)
    }
}

/// Greedy driving with any trained agent.
pub struct AgentDriver<L: Learner> {
    pub agent: L,
}

impl<L: Learner> Driver for AgentDriver<L> {
    fn drive(&mut self, frame: &SensorFrame) -> ActuatorFrame {
        match frame.observation() {
            Ok(obs) => self.agent.act(&obs, false).car.into(),
            Err(_) => ActuatorFrame::default(),
        }
    }

    fn on_restart(&mut self) {
        self.agent.begin_episode();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionEnd {
    Shutdown,
    TimedOut,
    StepLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SessionSummary {
    pub steps: u64,
    pub restarts: u64,
    pub timeouts: u64,
    /// Sensor datagrams that failed to parse; each still got a neutral reply.
    pub parse_errors: u64,
    pub end: SessionEnd,
}

#[derive(Debug, thiserror::Error)]
pub enum ScrError {
    #[error("cannot resolve {0}")]
    Resolve(String),
    #[error("no identification from server after {attempts} attempts")]
    Handshake { attempts: u32 },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut)
}

/// Loopback ICMP errors surface as refused; treat them like silence.
fn is_silence(e: &io::Error) -> bool {
    is_timeout(e) || e.kind() == ErrorKind::ConnectionRefused
}

fn handshake(socket: &UdpSocket, cfg: &ClientConfig, buf: &mut [u8]) -> Result<(), ScrError> {
    let init = format_init(&cfg.client_id, &cfg.angles);
    for _ in 0..cfg.retries {
        match socket.send(init.as_bytes()) {
            Ok(_) => {}
            Err(e) if is_silence(&e) => continue,
            Err(e) => return Err(e.into()),
        }
        match socket.recv(buf) {
            Ok(n) => {
                if let Ok(ServerMessage::Identified) =
                    parse_server_message(&buf[..n], &cfg.literals)
                {
                    return Ok(());
                }
            }
            Err(e) if is_silence(&e) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Err(ScrError::Handshake {
        attempts: cfg.retries,
    })
}

/// Identify, then answer every sensor datagram with one actuator datagram
/// until shutdown, the step limit, or `retries` consecutive timeouts. A
/// restart literal resets the driver and repeats the identification.
pub fn run_client(cfg: &ClientConfig, driver: &mut dyn Driver) -> Result<SessionSummary, ScrError> {
    let addr = (cfg.host.as_str(), cfg.port)
        .to_socket_addrs()
        .map_err(|_| ScrError::Resolve(format!("{}:{}", cfg.host, cfg.port)))?
        .next()
        .ok_or_else(|| ScrError::Resolve(format!("{}:{}", cfg.host, cfg.port)))?;
    let bind = if addr.is_ipv4() {
        "0.0.0.0:0"
    } else {
        "[::]:0"
    };
    let socket = UdpSocket::bind(bind)?;
    socket.connect(addr)?;
    socket.set_read_timeout(Some(cfg.timeout))?;
    let mut buf = vec![0u8; 65_536];
    let mut summary = SessionSummary {
        steps: 0,
        restarts: 0,
        timeouts: 0,
        parse_errors: 0,
        end: SessionEnd::Shutdown,
    };
    handshake(&socket, cfg, &mut buf)?;
    let mut silent = 0u32;
    loop {
        if cfg.max_steps.is_some_and(|m| summary.steps >= m) {
            summary.end = SessionEnd::StepLimit;
            return Ok(summary);
        }
        let n = match socket.recv(&mut buf) {
            Ok(n) => n,
            Err(e) if is_silence(&e) => {
                summary.timeouts += 1;
                silent += 1;
                if silent >= cfg.retries {
                    summary.end = SessionEnd::TimedOut;
                    return Ok(summary);
                }
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        silent = 0;
        let reply = match parse_server_message(&buf[..n], &cfg.literals) {
            Ok(ServerMessage::Shutdown) => {
                summary.end = SessionEnd::Shutdown;
                return Ok(summary);
            }
            Ok(ServerMessage::Restart) => {
                summary.restarts += 1;
                driver.on_restart();
                handshake(&socket, cfg, &mut buf)?;
                continue;
            }
            // stray duplicate of the handshake reply
            Ok(ServerMessage::Identified) => continue,
            Ok(ServerMessage::Sensors(frame)) => driver.drive(&frame),
            Err(_) => {
                summary.parse_errors += 1;
                ActuatorFrame::default()
            }
        };
        socket.send(format_actuators(&reply)?.as_bytes())?;
        summary.steps += 1;
    }
}
