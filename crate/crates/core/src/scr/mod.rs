//! Simulated Car Racing text protocol: sensor/actuator codecs, a UDP driver
//! client and a loopback mock server.

mod client;
mod mock;
mod wire;

pub use client::{
    run_client, AgentDriver, ClientConfig, Driver, ScrError, SessionEnd, SessionSummary,
};
pub use mock::{MockServer, MockTranscript, ScriptStep};
pub use wire::{
    format_actuators, format_sensors, known_arity, parse_actuators, parse_sensors,
    parse_server_message, tokenize, ActuatorFrame, FormatError, ParseError, ParseErrorKind,
    RawToken, SensorFrame, ServerMessage, KNOWN_KEYS,
};

use serde::{Deserialize, Serialize};

/// Server control strings. Server builds differ here, so they are data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Literals {
    pub identified: String,
    pub shutdown: String,
    pub restart: String,
}

impl Default for Literals {
    fn default() -> Self {
        Self {
            identified: "***identified***".into(),
            shutdown: "***shutdown***".into(),
            restart: "***restart***".into(),
        }
    }
}

pub const DEFAULT_CLIENT_ID: &str = "SCR";
pub const RANGEFINDERS: usize = 19;

/// Rangefinder mount angles in degrees, evenly spaced over [-90, 90].
pub fn default_rangefinder_angles() -> [f64; RANGEFINDERS] {
    std::array::from_fn(|i| -90.0 + 180.0 * i as f64 / (RANGEFINDERS - 1) as f64)
}

/// `<id>(init a1 a2 ... a19)`
pub fn format_init(client_id: &str, angles: &[f64]) -> String {
    let list: Vec<String> = angles.iter().map(|a| format!("{a}")).collect();
    format!("{client_id}(init {})", list.join(" "))
}
