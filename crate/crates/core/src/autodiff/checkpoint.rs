//! Plain-text network serialisation. Parameters are written with seventeen
//! significant digits, so reading a network back is bit-exact.

use super::{Activation, AutodiffError, DenseNetwork, LayerShape};
use crate::report::exact;

/// Appends a `network … end` block.
pub fn write_network(net: &DenseNetwork, name: &str, out: &mut String) {
    out.push_str(&format!("network {name}\n"));
    for l in net.layers() {
        out.push_str(&format!("layer {} {} {}\n", l.inputs, l.outputs, l.activation.name()));
    }
    out.push_str(&format!("params {}\n", net.parameter_count()));
    for p in net.parameters() {
        out.push_str(&exact(*p));
        out.push('\n');
    }
    out.push_str("end\n");
}

fn malformed(line: usize, reason: impl Into<String>) -> AutodiffError {
    AutodiffError::Malformed {
        line,
        reason: reason.into(),
    }
}

/// Reads one block written by [`write_network`] from numbered lines.
pub fn read_network<'a, I>(lines: &mut I) -> Result<(String, DenseNetwork), AutodiffError>
where
    I: Iterator<Item = (usize, &'a str)>,
{
    let (n, head) = lines.next().ok_or_else(|| malformed(0, "missing network block"))?;
    let name = head
        .strip_prefix("network ")
        .ok_or_else(|| malformed(n, "expected `network <name>`"))?
        .to_string();
    let mut layers = Vec::new();
    let count = loop {
        let (n, line) = lines.next().ok_or_else(|| malformed(n, "truncated network block"))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["layer", i, o, act] => {
                let parse = |s: &str| s.parse::<usize>().map_err(|e| malformed(n, e.to_string()));
                layers.push(LayerShape {
                    inputs: parse(i)?,
                    outputs: parse(o)?,
                    activation: Activation::from_name(act)
                        .ok_or_else(|| malformed(n, format!("unknown activation `{act}`")))?,
                });
            }
            ["params", c] => break c.parse::<usize>().map_err(|e| malformed(n, e.to_string()))?,
            _ => return Err(malformed(n, format!("unexpected line `{line}`"))),
        }
    };
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, line) = lines.next().ok_or_else(|| malformed(0, "truncated parameter list"))?;
        params.push(line.trim().parse::<f64>().map_err(|e| malformed(n, e.to_string()))?);
    }
    match lines.next() {
        Some((_, "end")) => {}
        Some((n, _)) => return Err(malformed(n, "expected `end`")),
        None => return Err(malformed(0, "missing `end`")),
    }
    Ok((name, DenseNetwork::from_parameters(layers, params)?))
}
