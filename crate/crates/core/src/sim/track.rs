//! Closed tracks made of straights and circular arcs.
//!
//! Text format, one directive per line, `#` starts a comment:
//!
//! ```text
//! name figure1
//! width 10
//! straight 200
//! arc 60 180      # radius [m], signed sweep [deg], + = left
//! ```

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::path::Path;
use thiserror::Error;

pub const POSITION_CLOSURE_TOL: f64 = 1e-6;
pub const HEADING_CLOSURE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("track has no segments")]
    Empty,
    #[error("width must be positive, got {0}")]
    Width(f64),
    #[error("segment {index}: {msg}")]
    Segment { index: usize, msg: String },
    #[error(
        "track does not close: end position off by {gap:.3e} m, heading off by {heading:.3e} rad"
    )]
    NotClosed { gap: f64, heading: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Segment {
    Straight {
        length: f64,
    },
    /// `sweep` in radians, positive turns left.
    Arc {
        radius: f64,
        sweep: f64,
    },
}

impl Segment {
    pub fn length(&self) -> f64 {
        match *self {
            Segment::Straight { length } => length,
            Segment::Arc { radius, sweep } => radius * sweep.abs(),
        }
    }

    /// Signed curvature (1/m), positive for left turns.
    pub fn curvature(&self) -> f64 {
        match *self {
            Segment::Straight { .. } => 0.0,
            Segment::Arc { radius, sweep } => sweep.signum() / radius,
        }
    }

    pub fn is_curved(&self) -> bool {
        matches!(self, Segment::Arc { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub name: String,
    pub width: f64,
    pub segments: Vec<Segment>,
}

/// Pose in the plane: position and heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl TrackSpec {
    pub fn parse(text: &str) -> Result<Self, TrackError> {
        let mut name = String::from("unnamed");
        let mut width = None;
        let mut segments = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let toks: Vec<&str> = content.split_whitespace().collect();
            let num = |i: usize| -> Result<f64, TrackError> {
                toks.get(i)
                    .and_then(|t| t.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| TrackError::Parse {
                        line,
                        msg: format!("expected a number in `{content}`"),
                    })
            };
            let arity = |n: usize| -> Result<(), TrackError> {
                if toks.len() != n {
                    return Err(TrackError::Parse {
                        line,
                        msg: format!("`{}` takes {} argument(s)", toks[0], n - 1),
                    });
                }
                Ok(())
            };
            match toks[0] {
                "name" => {
                    arity(2)?;
                    name = toks[1].to_string();
                }
                "width" => {
                    arity(2)?;
                    width = Some(num(1)?);
                }
                "straight" => {
                    arity(2)?;
                    segments.push(Segment::Straight { length: num(1)? });
                }
                "arc" => {
                    arity(3)?;
                    segments.push(Segment::Arc {
                        radius: num(1)?,
                        sweep: num(2)?.to_radians(),
                    });
                }
                other => {
                    return Err(TrackError::Parse {
                        line,
                        msg: format!("unknown directive `{other}`"),
                    })
                }
            }
        }
        let width = width.ok_or(TrackError::Parse {
            line: 0,
            msg: "missing `width` header".into(),
        })?;
        Ok(Self {
            name,
            width,
            segments,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrackError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| TrackError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("name {}\nwidth {}\n", self.name, self.width);
        for seg in &self.segments {
            match *seg {
                Segment::Straight { length } => out.push_str(&format!("straight {length}\n")),
                Segment::Arc { radius, sweep } => {
                    out.push_str(&format!("arc {radius} {}\n", sweep.to_degrees()))
                }
            }
        }
        out
    }

    /// Same track with every turn direction flipped.
    pub fn mirrored(&self) -> Self {
        let segments = self
            .segments
            .iter()
            .map(|s| match *s {
                Segment::Arc { radius, sweep } => Segment::Arc {
                    radius,
                    sweep: -sweep,
                },
                straight => straight,
            })
            .collect();
        Self {
            name: format!("{}-mirror", self.name),
            width: self.width,
            segments,
        }
    }

    /// Pose at the end of the centerline, starting from the origin heading +x.
    pub fn end_pose(&self) -> Pose {
        let mut pose = Pose {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
        };
        for seg in &self.segments {
            match *seg {
                Segment::Straight { length } => {
                    pose.x += length * pose.heading.cos();
                    pose.y += length * pose.heading.sin();
                }
                Segment::Arc { radius, sweep } => {
                    let signed_r = radius * sweep.signum();
                    let h1 = pose.heading + sweep;
                    pose.x += signed_r * (h1.sin() - pose.heading.sin());
                    pose.y += signed_r * (pose.heading.cos() - h1.cos());
                    pose.heading = h1;
                }
            }
        }
        pose
    }

    pub fn validate(&self) -> Result<(), TrackError> {
        if self.segments.is_empty() {
            return Err(TrackError::Empty);
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(TrackError::Width(self.width));
        }
        for (index, seg) in self.segments.iter().enumerate() {
            match *seg {
                Segment::Straight { length } => {
                    if !(length > 0.0) {
                        return Err(TrackError::Segment {
                            index,
                            msg: format!("straight length must be positive, got {length}"),
                        });
                    }
                }
                Segment::Arc { radius, sweep } => {
                    if !(radius > self.width / 2.0) {
                        return Err(TrackError::Segment {
                            index,
                            msg: format!(
                                "arc radius {radius} must exceed half the width {}",
                                self.width / 2.0
                            ),
                        });
                    }
                    if sweep == 0.0 || !sweep.is_finite() {
                        return Err(TrackError::Segment {
                            index,
                            msg: "arc sweep must be non-zero".into(),
                        });
                    }
                }
            }
        }
        let end = self.end_pose();
        let gap = end.x.hypot(end.y);
        let heading = wrap_angle(end.heading).abs();
        if gap > POSITION_CLOSURE_TOL || heading > HEADING_CLOSURE_TOL {
            return Err(TrackError::NotClosed { gap, heading });
        }
        Ok(())
    }
}

/// Wraps to `(-pi, pi]`. In-range angles come back unchanged, so the
/// result is exactly odd there.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

/// A validated track with cumulative arc-length lookup.
#[derive(Debug, Clone)]
pub struct Track {
    spec: TrackSpec,
    /// `starts[i]` is the centerline distance at which segment `i` begins.
    starts: Vec<f64>,
    total_length: f64,
}

impl Track {
    pub fn build(spec: TrackSpec) -> Result<Self, TrackError> {
        spec.validate()?;
        let mut starts = Vec::with_capacity(spec.segments.len());
        let mut acc = 0.0;
        for seg in &spec.segments {
            starts.push(acc);
            acc += seg.length();
        }
        Ok(Self {
            spec,
            starts,
            total_length: acc,
        })
    }

    pub fn spec(&self) -> &TrackSpec {
        &self.spec
    }

    pub fn width(&self) -> f64 {
        self.spec.width
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    /// Index of the segment containing centerline distance `s` (wrapped).
    pub fn segment_index(&self, s: f64) -> usize {
        let s = s.rem_euclid(self.total_length);
        match self.starts.partition_point(|&start| start <= s) {
            0 => 0,
            n => n - 1,
        }
    }

    pub fn segment_at(&self, s: f64) -> &Segment {
        &self.spec.segments[self.segment_index(s)]
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        self.segment_at(s).curvature()
    }

    pub fn is_curved_at(&self, s: f64) -> bool {
        self.segment_at(s).is_curved()
    }

    /// Fraction of centerline length lying on arcs.
    pub fn curved_fraction(&self) -> f64 {
        self.spec
            .segments
            .iter()
            .filter(|s| s.is_curved())
            .map(Segment::length)
            .sum::<f64>()
            / self.total_length
    }
}

const FIGURE1: &str = include_str!("../../../../tracks/figure1.track");

/// The bundled mixed straight/curve reference track (`tracks/figure1.track`).
pub fn figure1() -> Track {
    Track::build(TrackSpec::parse(FIGURE1).expect("bundled track parses"))
        .expect("bundled track is valid")
}

/// A single full circle of the given radius.
pub fn circle(radius: f64, width: f64) -> Track {
    Track::build(TrackSpec {
        name: format!("circle-{radius}"),
        width,
        segments: vec![Segment::Arc { radius, sweep: TAU }],
    })
    .expect("circle closes")
}

/// Two straights joined by two half circles.
pub fn oval(straight: f64, radius: f64, width: f64) -> Track {
    Track::build(TrackSpec {
        name: format!("oval-{straight}-{radius}"),
        width,
        segments: vec![
            Segment::Straight { length: straight },
            Segment::Arc { radius, sweep: PI },
            Segment::Straight { length: straight },
            Segment::Arc { radius, sweep: PI },
        ],
    })
    .expect("oval closes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oval_length() {
        let t = oval(100.0, 50.0, 10.0);
        assert!((t.total_length() - 514.159_265_358_979_3).abs() < 1e-9);
    }

    #[test]
    fn circle_length() {
        let t = circle(30.0, 10.0);
        assert!((t.total_length() - 2.0 * PI * 30.0).abs() < 1e-12);
    }

    #[test]
    fn open_rectangle_rejected() {
        let spec = TrackSpec {
            name: "open".into(),
            width: 10.0,
            segments: vec![
                Segment::Straight { length: 100.0 },
                Segment::Arc {
                    radius: 20.0,
                    sweep: PI / 2.0,
                },
                Segment::Straight { length: 50.0 },
                Segment::Arc {
                    radius: 20.0,
                    sweep: PI / 2.0,
                },
                Segment::Straight { length: 100.0 },
                Segment::Arc {
                    radius: 20.0,
                    sweep: PI / 2.0,
                },
                Segment::Straight { length: 40.0 },
                Segment::Arc {
                    radius: 20.0,
                    sweep: PI / 2.0,
                },
            ],
        };
        assert!(matches!(spec.validate(), Err(TrackError::NotClosed { .. })));
        let closed = TrackSpec {
            segments: spec
                .segments
                .iter()
                .map(|s| match *s {
                    Segment::Straight { length: 40.0 } => Segment::Straight { length: 50.0 },
                    other => other,
                })
                .collect(),
            ..spec
        };
        closed.validate().unwrap();
    }

    #[test]
    fn geometry_errors() {
        let tight = TrackSpec {
            name: "tight".into(),
            width: 10.0,
            segments: vec![Segment::Arc {
                radius: 4.0,
                sweep: TAU,
            }],
        };
        assert!(matches!(
            tight.validate(),
            Err(TrackError::Segment { index: 0, .. })
        ));
        let empty = TrackSpec {
            name: "e".into(),
            width: 10.0,
            segments: vec![],
        };
        assert_eq!(empty.validate(), Err(TrackError::Empty));
        let flat = TrackSpec {
            name: "w".into(),
            width: 0.0,
            segments: vec![Segment::Arc {
                radius: 4.0,
                sweep: TAU,
            }],
        };
        assert_eq!(flat.validate(), Err(TrackError::Width(0.0)));
    }

    #[test]
    fn parse_text_format() {
        let spec = TrackSpec::parse(
            "# oval\nname o\nwidth 8\nstraight 100\narc 50 180\nstraight 100 # back\narc 50 180\n",
        )
        .unwrap();
        assert_eq!(spec.name, "o");
        assert_eq!(spec.segments.len(), 4);
        let t = Track::build(spec.clone()).unwrap();
        assert!((t.total_length() - (200.0 + 100.0 * PI)).abs() < 1e-9);
        let again = TrackSpec::parse(&spec.to_text()).unwrap();
        Track::build(again).unwrap();
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = TrackSpec::parse("width 10\nstraight abc\n").unwrap_err();
        assert!(matches!(err, TrackError::Parse { line: 2, .. }));
        let err = TrackSpec::parse("width 10\nspiral 3\n").unwrap_err();
        assert!(matches!(err, TrackError::Parse { line: 2, .. }));
        assert!(TrackSpec::parse("straight 10\n").is_err());
    }

    #[test]
    fn segment_lookup() {
        let t = oval(100.0, 50.0, 10.0);
        assert_eq!(t.segment_index(0.0), 0);
        assert_eq!(t.segment_index(99.999), 0);
        assert_eq!(t.segment_index(100.0), 1);
        assert!((t.curvature_at(150.0) - 0.02).abs() < 1e-15);
        assert_eq!(t.segment_index(t.total_length() + 1.0), 0);
        assert_eq!(t.segment_index(-1.0), 3);
    }

    #[test]
    fn figure1_is_valid_and_mixed() {
        let t = figure1();
        let curved = t.curved_fraction();
        assert!(curved > 0.3 && curved < 0.8, "curved fraction {curved}");
        assert!(t.spec().segments.iter().any(|s| s.curvature() < 0.0));
        assert!(t.spec().segments.iter().any(|s| s.curvature() > 0.0));
        t.spec().mirrored().validate().unwrap();
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_angle(0.25), 0.25);
    }
}
