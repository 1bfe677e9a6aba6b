//! Agent checkpoint: a JSON header line followed by network blocks in the
//! nn parameter format, plus Q-table rows for the tile-coded agent.
//!
//! ```text
//! lanekeep-agent 1
//! header {"kind":"ddac","encoder":{...},...}
//! net actor
//! lanekeep-mlp 1
//! ...
//! end
//! table <rows>
//! <tile> <action> <value>
//! end-agent
//! ```

use super::{AgentError, AgentKind, DiscreteActionSet, ObsEncoder, TileCoder};
use crate::nn::{read_mlp, write_mlp, Mlp};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

const MAGIC: &str = "lanekeep-agent 1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: AgentKind,
    pub encoder: ObsEncoder,
    pub action_description: String,
    #[serde(default)]
    pub actions: Option<DiscreteActionSet>,
    #[serde(default)]
    pub tile_coder: Option<TileCoder>,
    /// The agent's full configuration.
    pub hyperparameters: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentCheckpoint {
    pub header: CheckpointHeader,
    pub nets: Vec<(String, Mlp)>,
    pub table: Vec<(usize, usize, f64)>,
}

impl AgentCheckpoint {
    pub fn net(&self, name: &str) -> Result<&Mlp, AgentError> {
        self.nets
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| AgentError::Checkpoint(format!("missing network `{name}`")))
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<(), AgentError> {
        writeln!(out, "{MAGIC}")?;
        let header = serde_json::to_string(&self.header)
            .map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        writeln!(out, "header {header}")?;
        for (name, net) in &self.nets {
            writeln!(out, "net {name}")?;
            write_mlp(net, out)?;
        }
        writeln!(out, "table {}", self.table.len())?;
        for (t, a, v) in &self.table {
            writeln!(out, "{t} {a} {v:e}")?;
        }
        writeln!(out, "end-agent")?;
        Ok(())
    }

    pub fn read<R: BufRead>(reader: &mut R) -> Result<Self, AgentError> {
        let bad = |msg: &str| AgentError::Checkpoint(msg.to_string());
        let mut line = String::new();
        let next = |reader: &mut R, line: &mut String| -> Result<(), AgentError> {
            line.clear();
            if reader.read_line(line)? == 0 {
                return Err(AgentError::Checkpoint(
                    "unexpected end of checkpoint".into(),
                ));
            }
            Ok(())
        };
        next(reader, &mut line)?;
        if line.trim_end() != MAGIC {
            return Err(bad("not a lanekeep agent checkpoint"));
        }
        next(reader, &mut line)?;
        let json = line
            .trim_end()
            .strip_prefix("header ")
            .ok_or_else(|| bad("missing header"))?;
        let header: CheckpointHeader =
            serde_json::from_str(json).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        let mut nets = Vec::new();
        let mut table = Vec::new();
        loop {
            next(reader, &mut line)?;
            let l = line.trim_end();
            if let Some(name) = l.strip_prefix("net ") {
                let name = name.to_string();
                nets.push((name, read_mlp(reader)?));
            } else if let Some(n) = l.strip_prefix("table ") {
                let n: usize = n.parse().map_err(|_| bad("bad table size"))?;
                for _ in 0..n {
                    next(reader, &mut line)?;
                    let toks: Vec<&str> = line.split_whitespace().collect();
                    if toks.len() != 3 {
                        return Err(bad("bad table row"));
                    }
                    let row = (
                        toks[0].parse().map_err(|_| bad("bad tile id"))?,
                        toks[1].parse().map_err(|_| bad("bad action id"))?,
                        toks[2].parse().map_err(|_| bad("bad table value"))?,
                    );
                    table.push(row);
                }
            } else if l == "end-agent" {
                break;
            } else {
                return Err(AgentError::Checkpoint(format!("unexpected line `{l}`")));
            }
        }
        Ok(Self {
            header,
            nets,
            table,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AgentError> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AgentError> {
        let mut reader = BufReader::new(File::open(path)?);
        Self::read(&mut reader)
    }
}
