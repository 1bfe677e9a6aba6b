//! Token grammar: `message := token+`, `token := '(' name value+ ')'`.
//! Whitespace between and inside tokens is free-form on input; output is
//! canonical (single spaces, no trailing whitespace).

use super::Literals;
use serde::{Deserialize, Serialize};
use std::fmt::{self, Write as _};

/// Keys with a fixed value count. Anything else is kept raw.
pub const KNOWN_KEYS: [(&str, usize); 19] = [
    ("angle", 1),
    ("curLapTime", 1),
    ("damage", 1),
    ("distFromStart", 1),
    ("distRaced", 1),
    ("focus", 5),
    ("fuel", 1),
    ("gear", 1),
    ("lastLapTime", 1),
    ("opponents", 36),
    ("racePos", 1),
    ("rpm", 1),
    ("speedX", 1),
    ("speedY", 1),
    ("speedZ", 1),
    ("track", 19),
    ("trackPos", 1),
    ("wheelSpinVel", 4),
    ("z", 1),
];

pub fn known_arity(name: &str) -> Option<usize> {
    KNOWN_KEYS.iter().find(|(k, _)| *k == name).map(|&(_, n)| n)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    ExpectedOpen,
    Unclosed,
    NestedOpen,
    EmptyName,
    NoValues {
        name: String,
    },
    NotNumeric {
        name: String,
        value: String,
    },
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    Missing {
        name: String,
    },
    NotInteger {
        name: String,
        value: String,
    },
    Empty,
}

/// Parse failure with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "byte {}: ", self.offset)?;
        match &self.kind {
            ParseErrorKind::ExpectedOpen => write!(f, "expected '('"),
            ParseErrorKind::Unclosed => write!(f, "unbalanced parentheses: missing ')'"),
            ParseErrorKind::NestedOpen => write!(f, "unexpected '(' inside a token"),
            ParseErrorKind::EmptyName => write!(f, "token has no name"),
            ParseErrorKind::NoValues { name } => write!(f, "`{name}` has no values"),
            ParseErrorKind::NotNumeric { name, value } => {
                write!(f, "`{name}`: `{value}` is not a number")
            }
            ParseErrorKind::Arity {
                name,
                expected,
                got,
            } => {
                write!(f, "`{name}` expects {expected} values, got {got}")
            }
            ParseErrorKind::Missing { name } => write!(f, "required field `{name}` is missing"),
            ParseErrorKind::NotInteger { name, value } => {
                write!(f, "`{name}`: `{value}` is not an integer")
            }
            ParseErrorKind::Empty => write!(f, "empty message"),
        }
    }
}

/// One `(name values...)` group with the values still as text.
#[derive(Debug, Clone, PartialEq)]
pub struct RawToken<'a> {
    pub name: &'a str,
    pub values: Vec<(usize, &'a str)>,
    pub offset: usize,
}

/// Strip trailing NULs (C-string datagrams) and surrounding whitespace.
fn trim_payload(bytes: &[u8]) -> (&[u8], usize) {
    let mut end = bytes.len();
    while end > 0 && (bytes[end - 1] == 0 || bytes[end - 1].is_ascii_whitespace()) {
        end -= 1;
    }
    let mut start = 0;
    while start < end && bytes[start].is_ascii_whitespace() {
        start += 1;
    }
    (&bytes[start..end], start)
}

pub fn tokenize(bytes: &[u8]) -> Result<Vec<RawToken<'_>>, ParseError> {
    let (body, base) = trim_payload(bytes);
    let err = |offset: usize, kind| ParseError {
        offset: base + offset,
        kind,
    };
    if body.is_empty() {
        return Err(err(0, ParseErrorKind::Empty));
    }
    let text = std::str::from_utf8(body).map_err(|e| {
        err(
            e.valid_up_to(),
            ParseErrorKind::NotNumeric {
                name: String::new(),
                value: "<invalid utf-8>".into(),
            },
        )
    })?;
    let b = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if b[i].is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if b[i] != b'(' {
            return Err(err(i, ParseErrorKind::ExpectedOpen));
        }
        let open = i;
        i += 1;
        let mut words: Vec<(usize, &str)> = Vec::new();
        loop {
            while i < b.len() && b[i].is_ascii_whitespace() {
                i += 1;
            }
            if i >= b.len() {
                return Err(err(open, ParseErrorKind::Unclosed));
            }
            match b[i] {
                b')' => {
                    i += 1;
                    break;
                }
                b'(' => return Err(err(i, ParseErrorKind::NestedOpen)),
                _ => {
                    let start = i;
                    while i < b.len() && !b[i].is_ascii_whitespace() && b[i] != b'(' && b[i] != b')'
                    {
                        i += 1;
                    }
                    words.push((base + start, &text[start..i]));
                }
            }
        }
        let Some(&(_, name)) = words.first() else {
            return Err(err(open, ParseErrorKind::EmptyName));
        };
        if words.len() == 1 {
            return Err(err(open, ParseErrorKind::NoValues { name: name.into() }));
        }
        tokens.push(RawToken {
            name,
            values: words[1..].to_vec(),
            offset: base + open,
        });
    }
    Ok(tokens)
}

/// Finite decimal literal; rejects `inf`/`nan` spellings.
fn number(name: &str, offset: usize, value: &str) -> Result<f64, ParseError> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ParseError {
            offset,
            kind: ParseErrorKind::NotNumeric {
                name: name.into(),
                value: value.into(),
            },
        }),
    }
}

/// Server-to-client sensor message.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorFrame {
    /// Recognized keys in message order, each at its declared arity.
    pub fields: Vec<(String, Vec<f64>)>,
    /// Unrecognized keys with their values verbatim.
    pub extra: Vec<(String, Vec<String>)>,
}

impl SensorFrame {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.fields
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(|v| v.first().copied())
    }

    pub fn angle(&self) -> Option<f64> {
        self.scalar("angle")
    }

    pub fn track_pos(&self) -> Option<f64> {
        self.scalar("trackPos")
    }

    pub fn speed_x(&self) -> Option<f64> {
        self.scalar("speedX")
    }

    pub fn rpm(&self) -> Option<f64> {
        self.scalar("rpm")
    }

    pub fn gear(&self) -> Option<i32> {
        self.scalar("gear").map(|g| g as i32)
    }

    pub fn track(&self) -> Option<&[f64]> {
        self.get("track")
    }

    /// Set or replace a recognized field.
    pub fn set(&mut self, name: &str, values: Vec<f64>) {
        match self.fields.iter_mut().find(|(k, _)| k == name) {
            Some((_, v)) => *v = values,
            None => self.fields.push((name.into(), values)),
        }
    }

    /// The three readings the driving agents consume.
    pub fn observation(&self) -> Result<crate::sim::Observation, ParseError> {
        let need = |name: &str| {
            self.scalar(name).ok_or_else(|| ParseError {
                offset: 0,
                kind: ParseErrorKind::Missing { name: name.into() },
            })
        };
        Ok(crate::sim::Observation {
            angle: need("angle")?,
            track_pos: need("trackPos")?,
            speed_x: need("speedX")?,
        })
    }
}

pub fn parse_sensors(bytes: &[u8]) -> Result<SensorFrame, ParseError> {
    let mut frame = SensorFrame::default();
    for tok in tokenize(bytes)? {
        match known_arity(tok.name) {
            Some(expected) => {
                if tok.values.len() != expected {
                    return Err(ParseError {
                        offset: tok.offset,
                        kind: ParseErrorKind::Arity {
                            name: tok.name.into(),
                            expected,
                            got: tok.values.len(),
                        },
                    });
                }
                let values = tok
                    .values
                    .iter()
                    .map(|&(off, v)| number(tok.name, off, v))
                    .collect::<Result<Vec<f64>, _>>()?;
                frame.fields.push((tok.name.into(), values));
            }
            None => frame.extra.push((
                tok.name.into(),
                tok.values.iter().map(|&(_, v)| v.to_string()).collect(),
            )),
        }
    }
    Ok(frame)
}

/// Shortest round-trip decimal for each value.
pub fn format_sensors(frame: &SensorFrame) -> String {
    let mut out = String::new();
    for (name, values) in &frame.fields {
        out.push('(');
        out.push_str(name);
        for v in values {
            let _ = write!(out, " {v}");
        }
        out.push(')');
    }
    for (name, values) in &frame.extra {
        out.push('(');
        out.push_str(name);
        for v in values {
            out.push(' ');
            out.push_str(v);
        }
        out.push(')');
    }
    out
}

/// Client-to-server control message.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorFrame {
    pub accel: f64,
    pub brake: f64,
    pub gear: i32,
    pub steer: f64,
    /// Ask the server to restart the race.
    pub meta: bool,
}

impl Default for ActuatorFrame {
    fn default() -> Self {
        Self {
            accel: 0.0,
            brake: 0.0,
            gear: 1,
            steer: 0.0,
            meta: false,
        }
    }
}

impl From<crate::sim::CarAction> for ActuatorFrame {
    fn from(a: crate::sim::CarAction) -> Self {
        let a = a.clamped();
        Self {
            accel: a.accel,
            brake: a.brake,
            gear: a.gear,
            steer: a.steer,
            meta: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("cannot format `{field}`: value {value} is not finite")]
pub struct FormatError {
    pub field: &'static str,
    pub value: f64,
}

fn fixed6(out: &mut String, v: f64) {
    let s = format!("{v:.6}");
    // keep a single spelling of zero
    if s == "-0.000000" {
        out.push_str("0.000000");
    } else {
        out.push_str(&s);
    }
}

/// `(accel a)(brake b)(gear g)(steer s)` with six decimals, then `(meta 1)`
/// when a restart is requested.
pub fn format_actuators(frame: &ActuatorFrame) -> Result<String, FormatError> {
    for (field, value) in [
        ("accel", frame.accel),
        ("brake", frame.brake),
        ("steer", frame.steer),
    ] {
        if !value.is_finite() {
            return Err(FormatError { field, value });
        }
    }
    let mut out = String::with_capacity(64);
    out.push_str("(accel ");
    fixed6(&mut out, frame.accel);
    out.push_str(")(brake ");
    fixed6(&mut out, frame.brake);
    let _ = write!(out, ")(gear {})(steer ", frame.gear);
    fixed6(&mut out, frame.steer);
    out.push(')');
    if frame.meta {
        out.push_str("(meta 1)");
    }
    Ok(out)
}

/// Inverse of [`format_actuators`]; extra keys such as `clutch` or `focus`
/// are ignored.
pub fn parse_actuators(bytes: &[u8]) -> Result<ActuatorFrame, ParseError> {
    let tokens = tokenize(bytes)?;
    let scalar = |name: &str| -> Result<Option<(usize, &str)>, ParseError> {
        match tokens.iter().find(|t| t.name == name) {
            None => Ok(None),
            Some(t) if t.values.len() != 1 => Err(ParseError {
                offset: t.offset,
                kind: ParseErrorKind::Arity {
                    name: name.into(),
                    expected: 1,
                    got: t.values.len(),
                },
            }),
            Some(t) => Ok(Some(t.values[0])),
        }
    };
    let required = |name: &str| -> Result<f64, ParseError> {
        match scalar(name)? {
            Some((off, v)) => number(name, off, v),
            None => Err(ParseError {
                offset: 0,
                kind: ParseErrorKind::Missing { name: name.into() },
            }),
        }
    };
    let gear = match scalar("gear")? {
        Some((off, v)) => v.parse::<i32>().map_err(|_| ParseError {
            offset: off,
            kind: ParseErrorKind::NotInteger {
                name: "gear".into(),
                value: v.into(),
            },
        })?,
        None => {
            return Err(ParseError {
                offset: 0,
                kind: ParseErrorKind::Missing {
                    name: "gear".into(),
                },
            })
        }
    };
    let meta = match scalar("meta")? {
        Some((off, v)) => number("meta", off, v)? != 0.0,
        None => false,
    };
    Ok(ActuatorFrame {
        accel: required("accel")?,
        brake: required("brake")?,
        gear,
        steer: required("steer")?,
        meta,
    })
}

/// What a server datagram means to the client.
#[derive(Debug, Clone, PartialEq)]
pub enum ServerMessage {
    Identified,
    Shutdown,
    Restart,
    Sensors(SensorFrame),
}

pub fn parse_server_message(
    bytes: &[u8],
    literals: &Literals,
) -> Result<ServerMessage, ParseError> {
    let (body, _) = trim_payload(bytes);
    if body == literals.identified.as_bytes() {
        Ok(ServerMessage::Identified)
    } else if body == literals.shutdown.as_bytes() {
        Ok(ServerMessage::Shutdown)
    } else if body == literals.restart.as_bytes() {
        Ok(ServerMessage::Restart)
    } else {
        parse_sensors(bytes).map(ServerMessage::Sensors)
    }
}
