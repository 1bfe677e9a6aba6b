//! Plain-text parameter format.
//!
//! ```text
//! lanekeep-mlp 1
//! layers <n>
//! layer <in> <out> <activation>
//! w <in*out values, row-major>
//! b <out values>
//! ...                      (one layer/w/b triple per layer)
//! end
//! ```
//!
//! Values use Rust's shortest round-trip exponent formatting, so a saved
//! network reloads bit-for-bit.

use super::{Activation, Layer, Mlp, NnError};
use std::io::{self, BufRead, Write};
use thiserror::Error;

const MAGIC: &str = "lanekeep-mlp";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Network(#[from] NnError),
}

pub fn write_mlp<W: Write>(net: &Mlp, out: &mut W) -> io::Result<()> {
    writeln!(out, "{MAGIC} {VERSION}")?;
    writeln!(out, "layers {}", net.layers().len())?;
    for layer in net.layers() {
        writeln!(
            out,
            "layer {} {} {}",
            layer.in_dim, layer.out_dim, layer.activation
        )?;
        write_values(out, "w", &layer.weights)?;
        write_values(out, "b", &layer.bias)?;
    }
    writeln!(out, "end")
}

fn write_values<W: Write>(out: &mut W, tag: &str, values: &[f64]) -> io::Result<()> {
    out.write_all(tag.as_bytes())?;
    for v in values {
        write!(out, " {v:e}")?;
    }
    out.write_all(b"\n")
}

struct Lines<'a, R> {
    reader: &'a mut R,
    line: usize,
    buf: String,
}

impl<R: BufRead> Lines<'_, R> {
    fn next(&mut self) -> Result<Vec<String>, CheckpointError> {
        self.buf.clear();
        self.line += 1;
        if self.reader.read_line(&mut self.buf)? == 0 {
            return Err(self.err("unexpected end of file"));
        }
        Ok(self.buf.split_whitespace().map(str::to_owned).collect())
    }

    fn err(&self, msg: impl Into<String>) -> CheckpointError {
        CheckpointError::Format {
            line: self.line,
            msg: msg.into(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(
    tok: Option<&String>,
    line: usize,
    what: &str,
) -> Result<T, CheckpointError> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| CheckpointError::Format {
            line,
            msg: format!("expected {what}"),
        })
}

/// Reads one network block starting at the current reader position.
pub fn read_mlp<R: BufRead>(reader: &mut R) -> Result<Mlp, CheckpointError> {
    let mut lines = Lines {
        reader,
        line: 0,
        buf: String::new(),
    };
    let head = lines.next()?;
    if head.first().map(String::as_str) != Some(MAGIC) {
        return Err(lines.err("missing lanekeep-mlp header"));
    }
    let version: u32 = parse_num(head.get(1), lines.line, "version")?;
    if version != VERSION {
        return Err(lines.err(format!("unsupported version {version}")));
    }
    let toks = lines.next()?;
    if toks.first().map(String::as_str) != Some("layers") {
        return Err(lines.err("expected `layers <n>`"));
    }
    let n: usize = parse_num(toks.get(1), lines.line, "layer count")?;

    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let toks = lines.next()?;
        if toks.first().map(String::as_str) != Some("layer") || toks.len() != 4 {
            return Err(lines.err("expected `layer <in> <out> <activation>`"));
        }
        let in_dim: usize = parse_num(toks.get(1), lines.line, "input dim")?;
        let out_dim: usize = parse_num(toks.get(2), lines.line, "output dim")?;
        let activation: Activation = toks[3].parse()?;
        let weights = read_values(&mut lines, "w", in_dim * out_dim)?;
        let bias = read_values(&mut lines, "b", out_dim)?;
        layers.push(Layer {
            in_dim,
            out_dim,
            activation,
            weights,
            bias,
        });
    }
    if lines.next()?.first().map(String::as_str) != Some("end") {
        return Err(lines.err("expected `end`"));
    }
    Ok(Mlp::from_layers(layers)?)
}

fn read_values<R: BufRead>(
    lines: &mut Lines<'_, R>,
    tag: &str,
    count: usize,
) -> Result<Vec<f64>, CheckpointError> {
    let line = lines.line + 1;
    let toks = lines.next()?;
    if toks.first().map(String::as_str) != Some(tag) {
        return Err(CheckpointError::Format {
            line,
            msg: format!("expected `{tag}` row"),
        });
    }
    if toks.len() - 1 != count {
        return Err(CheckpointError::Format {
            line,
            msg: format!(
                "`{tag}` row has {} values, expected {count}",
                toks.len() - 1
            ),
        });
    }
    toks[1..]
        .iter()
        .map(|t| match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(CheckpointError::Format {
                line,
                msg: format!("bad value `{t}`"),
            }),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn roundtrip(net: &Mlp) -> Mlp {
        let mut buf = Vec::new();
        write_mlp(net, &mut buf).unwrap();
        read_mlp(&mut buf.as_slice()).unwrap()
    }

    #[test]
    fn layout_is_documented_form() {
        let net = Mlp::from_layers(vec![Layer {
            in_dim: 2,
            out_dim: 1,
            activation: Activation::Sigmoid,
            weights: vec![0.5, -2.0],
            bias: vec![0.25],
        }])
        .unwrap();
        let mut buf = Vec::new();
        write_mlp(&net, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "lanekeep-mlp 1\nlayers 1\nlayer 2 1 sigmoid\nw 5e-1 -2e0\nb 2.5e-1\nend\n"
        );
    }

    #[test]
    fn truncated_file_rejected() {
        let net = Mlp::init(&[2, 3, 1], &[Activation::Tanh, Activation::Linear], 1).unwrap();
        let mut buf = Vec::new();
        write_mlp(&net, &mut buf).unwrap();
        let cut = &buf[..buf.len() / 2];
        assert!(read_mlp(&mut &cut[..]).is_err());
    }

    proptest! {
        #[test]
        fn save_load_is_bitwise(seed in any::<u64>(), hidden in 1usize..12, scale in -1e6f64..1e6) {
            let mut net = Mlp::init(&[3, hidden, 2], &[Activation::Relu, Activation::Linear], seed).unwrap();
            net.layers_mut()[1].bias[0] = scale * 1e-300;
            net.layers_mut()[1].bias[1] = scale;
            let back = roundtrip(&net);
            for (a, b) in net.layers().iter().zip(back.layers()) {
                for (x, y) in a.weights.iter().chain(&a.bias).zip(b.weights.iter().chain(&b.bias)) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
                prop_assert_eq!(a.activation, b.activation);
            }
        }
    }
}
