//! Plain-text model checkpoints.
//!
//! ```text
//! skywatch-checkpoint 1
//! kind <model kind>
//! config <single-line JSON architecture config>
//! param <name> <rank> <dim0> ... <dimN>
//! <all values, space separated, shortest round-trip decimal>
//! ...
//! end
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use super::param::Parameterized;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const FORMAT_TAG: &str = "skywatch-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(kind: &str, config: serde_json::Value) -> Self {
        Checkpoint {
            kind: kind.to_string(),
            config,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: &Tensor) {
        self.tensors.push((name.into(), t.clone()));
    }

    /// Appends every parameter of `model` under `prefix`.
    pub fn push_params(&mut self, prefix: &str, model: &impl Parameterized) {
        for (name, p) in model.params() {
            self.push(format!("{prefix}{name}"), &p.value);
        }
    }

    /// Loads values into `model`'s parameters, in order, checking shapes.
    pub fn load_params(&self, prefix: &str, model: &mut impl Parameterized) -> Result<()> {
        let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
        for (name, p) in names.iter().zip(model.params_mut()) {
            let key = format!("{prefix}{name}");
            let t = self.tensor(&key)?;
            t.expect_shape(p.value.shape(), &key)?;
            p.value = t.clone();
        }
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Parse(format!("checkpoint has no tensor `{name}`")))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Config(format!(
                "checkpoint holds a `{}` model, expected `{kind}`",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_TAG} {FORMAT_VERSION}");
        let _ = writeln!(out, "kind {}", self.kind);
        let _ = writeln!(out, "config {}", self.config);
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            let _ = writeln!(out, "param {name} {} {}", t.rank(), dims.join(" "));
            let vals: Vec<String> = t.data().iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", vals.join(" "));
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let mut parts = header.split_whitespace();
        if parts.next() != Some(FORMAT_TAG) {
            return Err(Error::Parse("not a skywatch checkpoint".into()));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse("missing checkpoint version".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let kind = lines
            .next()
            .and_then(|l| l.strip_prefix("kind "))
            .ok_or_else(|| Error::Parse("missing kind line".into()))?
            .to_string();
        let config_line = lines
            .next()
            .and_then(|l| l.strip_prefix("config "))
            .ok_or_else(|| Error::Parse("missing config line".into()))?;
        let config = serde_json::from_str(config_line)
            .map_err(|e| Error::Parse(format!("checkpoint config: {e}")))?;
        let mut ckpt = Checkpoint {
            kind,
            config,
            tensors: Vec::new(),
        };
        loop {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated checkpoint (no `end`)".into()))?;
            if line == "end" {
                break;
            }
            let mut f = line
                .strip_prefix("param ")
                .ok_or_else(|| Error::Parse(format!("expected param header, got `{line}`")))?
                .split_whitespace();
            let name = f
                .next()
                .ok_or_else(|| Error::Parse("param without name".into()))?;
            let rank: usize = f
                .next()
                .and_then(|r| r.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad rank for `{name}`")))?;
            let shape: Vec<usize> = f
                .map(|d| {
                    d.parse()
                        .map_err(|_| Error::Parse(format!("bad dim for `{name}`")))
                })
                .collect::<Result<_>>()?;
            if shape.len() != rank {
                return Err(Error::Parse(format!(
                    "`{name}`: rank {rank} but {} dims",
                    shape.len()
                )));
            }
            let values: Vec<f64> = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing values for `{name}`")))?
                .split_whitespace()
                .map(|v| {
                    v.parse()
                        .map_err(|_| Error::Parse(format!("bad value in `{name}`")))
                })
                .collect::<Result<_>>()?;
            ckpt.tensors
                .push((name.to_string(), Tensor::new(&shape, values)?));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
