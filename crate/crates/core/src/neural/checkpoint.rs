//! Plain-text parameter files.
//!
//! ```text
//! satgame-net 1
//! layers <count>
//! head identity | head bounded
//! low <v...>            (bounded only)
//! high <v...>           (bounded only)
//! layer <inputs> <outputs> <activation>
//! w <inputs*outputs values, row-major>
//! b <outputs values>
//! ...one layer/w/b triple per layer
//! end
//! ```
//!
//! Values are written in shortest round-trip form, so loading restores every
//! parameter bit for bit. Several networks may follow each other in one file.

use std::io::Write;
use std::path::Path;

use super::{Activation, Head, Layer, Network};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "satgame-net 1";

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

pub fn write_network<W: Write>(out: &mut W, net: &Network) -> Result<()> {
    net.validate()?;
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    writeln!(out, "layers {}", net.layers.len())?;
    match &net.head {
        Head::Identity => writeln!(out, "head identity")?,
        Head::Bounded { low, high } => {
            writeln!(out, "head bounded")?;
            writeln!(out, "low {}", join(low))?;
            writeln!(out, "high {}", join(high))?;
        }
    }
    for l in &net.layers {
        writeln!(out, "layer {} {} {}", l.inputs, l.outputs, l.activation.name())?;
        writeln!(out, "w {}", join(&l.weights))?;
        writeln!(out, "b {}", join(&l.bias))?;
    }
    writeln!(out, "end")?;
    Ok(())
}

fn next_line<'a, I: Iterator<Item = &'a str>>(lines: &mut I) -> Result<&'a str> {
    lines.next().map(str::trim).ok_or_else(|| bad("unexpected end of file"))
}

fn tagged<'a>(line: &'a str, tag: &str) -> Result<&'a str> {
    match line.split_once(' ') {
        Some((t, rest)) if t == tag => Ok(rest),
        _ if line == tag => Ok(""),
        _ => Err(bad(format!("expected `{tag}`, found `{line}`"))),
    }
}

fn values(s: &str, want: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split_whitespace()
        .map(|x| x.parse::<f64>().map_err(|e| bad(format!("bad number `{x}`: {e}"))))
        .collect::<Result<_>>()?;
    if v.len() != want {
        return Err(Error::Shape { expected: want, got: v.len() });
    }
    Ok(v)
}

fn count(s: &str) -> Result<usize> {
    s.parse().map_err(|_| bad(format!("bad count `{s}`")))
}

/// Reads one network from the front of `lines`, leaving the rest untouched.
pub fn read_network<'a, I: Iterator<Item = &'a str>>(lines: &mut I) -> Result<Network> {
    let magic = next_line(lines)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(bad(format!("unknown header `{magic}`")));
    }
    let n = count(tagged(next_line(lines)?, "layers")?)?;
    let head_kind = tagged(next_line(lines)?, "head")?;
    let mut pending_bounds = None;
    if head_kind == "bounded" {
        let low = tagged(next_line(lines)?, "low")?.to_string();
        let high = tagged(next_line(lines)?, "high")?.to_string();
        pending_bounds = Some((low, high));
    } else if head_kind != "identity" {
        return Err(bad(format!("unknown head `{head_kind}`")));
    }
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let spec: Vec<&str> = tagged(next_line(lines)?, "layer")?.split_whitespace().collect();
        if spec.len() != 3 {
            return Err(bad("layer line needs inputs, outputs and activation"));
        }
        let (inputs, outputs) = (count(spec[0])?, count(spec[1])?);
        let activation = Activation::parse(spec[2]).map_err(|e| bad(e.to_string()))?;
        let weights = values(tagged(next_line(lines)?, "w")?, inputs * outputs)?;
        let bias = values(tagged(next_line(lines)?, "b")?, outputs)?;
        layers.push(Layer { inputs, outputs, weights, bias, activation });
    }
    if next_line(lines)? != "end" {
        return Err(bad("missing `end`"));
    }
    let out = layers.last().map_or(0, |l: &Layer| l.outputs);
    let head = match pending_bounds {
        None => Head::Identity,
        Some((low, high)) => Head::Bounded { low: values(&low, out)?, high: values(&high, out)? },
    };
    let net = Network { layers, head };
    net.validate()?;
    Ok(net)
}

pub fn save_network(path: &Path, net: &Network) -> Result<()> {
    let mut buf = Vec::new();
    write_network(&mut buf, net)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path)?;
    read_network(&mut text.lines())
}
