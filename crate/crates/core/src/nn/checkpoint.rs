//! Plain-text network checkpoints.
//!
//! ```text
//! mfg-network 1
//! input_dim 2
//! output_dim 1
//! hidden_widths 100
//! activation tanh
//! skip_weight 5.0000000000000000e-1
//! output_transform identity
//! params 401
//! <one parameter per line>
//! ```
//!
//! Reals are written with 17 significant digits, which round-trips every `f64`.

use std::fmt::Write as _;
use std::path::Path;

use super::activation::Activation;
use super::network::{Network, NetworkSpec, OutputTransform};
use crate::error::{MfgError, Result};

const MAGIC: &str = "mfg-network 1";

pub fn to_string(net: &Network) -> String {
    let spec = net.spec();
    let widths: Vec<String> = spec.hidden_widths.iter().map(|w| w.to_string()).collect();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "input_dim {}", spec.input_dim);
    let _ = writeln!(out, "output_dim {}", spec.output_dim);
    let _ = writeln!(out, "hidden_widths {}", widths.join(" "));
    let _ = writeln!(out, "activation {}", spec.activation.name());
    let _ = writeln!(out, "skip_weight {:.16e}", spec.skip_weight);
    let _ = writeln!(out, "output_transform {}", spec.output_transform.name());
    let _ = writeln!(out, "params {}", net.num_params());
    for p in net.params() {
        let _ = writeln!(out, "{p:.16e}");
    }
    out
}

fn field<'a>(lines: &mut impl Iterator<Item = &'a str>, key: &str) -> Result<&'a str> {
    let line = lines.next().ok_or_else(|| MfgError::Parse(format!("checkpoint ends before `{key}`")))?;
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' ').or(if rest.is_empty() { Some("") } else { None }))
        .ok_or_else(|| MfgError::Parse(format!("expected `{key}`, found `{line}`")))
}

fn number<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| MfgError::Parse(format!("bad {what}: `{s}`")))
}

pub fn from_str(text: &str) -> Result<Network> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MAGIC) {
        return Err(MfgError::Parse("not a network checkpoint".into()));
    }
    let input_dim = number(field(&mut lines, "input_dim")?, "input_dim")?;
    let output_dim = number(field(&mut lines, "output_dim")?, "output_dim")?;
    let hidden_widths = field(&mut lines, "hidden_widths")?
        .split_whitespace()
        .map(|w| number(w, "hidden width"))
        .collect::<Result<Vec<usize>>>()?;
    let act = field(&mut lines, "activation")?;
    let activation = Activation::parse(act).ok_or_else(|| MfgError::Parse(format!("unknown activation `{act}`")))?;
    let skip_weight = number(field(&mut lines, "skip_weight")?, "skip_weight")?;
    let head = field(&mut lines, "output_transform")?;
    let output_transform =
        OutputTransform::parse(head).ok_or_else(|| MfgError::Parse(format!("unknown output transform `{head}`")))?;
    let count: usize = number(field(&mut lines, "params")?, "parameter count")?;
    let params =
        lines.filter(|l| !l.trim().is_empty()).map(|l| number(l, "parameter")).collect::<Result<Vec<f64>>>()?;
    if params.len() != count {
        return Err(MfgError::Parse(format!("header promises {count} parameters, found {}", params.len())));
    }
    let spec = NetworkSpec { input_dim, output_dim, hidden_widths, activation, skip_weight, output_transform };
    Network::from_params(spec, params)
}

pub fn save(net: &Network, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(net))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Network> {
    from_str(&std::fs::read_to_string(path)?)
}
