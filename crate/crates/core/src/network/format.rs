//! Line-oriented text format.
//!
//! ```text
//! VCASNN 1
//! <num_layers> <input_dim> <output_dim>
//! <layer sizes, input first, output last>
//! <input means>
//! <input ranges>
//! <output mean> <output range>
//! W <rows> <cols>        then <rows> lines of <cols> values
//! b <rows>               then one line of <rows> values
//! ...                    repeated per layer
//! ```
//!
//! Values are written with 17 significant digits, which round-trips f64 exactly.

use std::fmt::Write as _;
use std::path::Path;

use super::{Layer, ReluNetwork};
use crate::error::{Error, Result};

fn fmt_row(out: &mut String, values: &[f64]) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

pub fn to_text(net: &ReluNetwork) -> String {
    let mut out = String::from("VCASNN 1\n");
    let _ = writeln!(out, "{} {} {}", net.layers.len(), net.input_dim(), net.output_dim());
    let mut sizes = vec![net.input_dim()];
    sizes.extend(net.layers.iter().map(|l| l.rows));
    let _ = writeln!(
        out,
        "{}",
        sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
    );
    fmt_row(&mut out, &net.input_mean);
    fmt_row(&mut out, &net.input_range);
    fmt_row(&mut out, &[net.output_mean, net.output_range]);
    for l in &net.layers {
        let _ = writeln!(out, "W {} {}", l.rows, l.cols);
        for r in 0..l.rows {
            fmt_row(&mut out, l.row(r));
        }
        let _ = writeln!(out, "b {}", l.rows);
        fmt_row(&mut out, &l.bias);
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(Error::NetworkParse {
                line: self.line + 1,
                message: format!("unexpected end of file, expected {what}"),
            }),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::NetworkParse {
            line: self.line,
            message: message.into(),
        }
    }

    fn numbers<T: std::str::FromStr>(&mut self, what: &str, count: Option<usize>) -> Result<Vec<T>> {
        let line = self.next(what)?;
        let vals = line
            .split_whitespace()
            .map(|t| t.parse::<T>().map_err(|_| self.err(format!("bad number `{t}` in {what}"))))
            .collect::<Result<Vec<T>>>()?;
        if let Some(n) = count {
            if vals.len() != n {
                return Err(self.err(format!("{what}: expected {n} values, found {}", vals.len())));
            }
        }
        Ok(vals)
    }

    fn header(&mut self, tag: &str, layer: usize) -> Result<Vec<usize>> {
        let line = self.next(tag)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(tag) {
            return Err(self.err(format!("expected `{tag}` header for layer {layer}")));
        }
        parts
            .map(|t| t.parse::<usize>().map_err(|_| self.err(format!("bad `{tag}` header"))))
            .collect()
    }
}

pub fn parse(text: &str) -> Result<ReluNetwork> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    if lines.next("magic")?.trim() != "VCASNN 1" {
        return Err(lines.err("expected `VCASNN 1`"));
    }
    let dims: Vec<usize> = lines.numbers("dimensions", Some(3))?;
    let (num_layers, input_dim, output_dim) = (dims[0], dims[1], dims[2]);
    if num_layers == 0 {
        return Err(lines.err("network needs at least one layer"));
    }
    let sizes: Vec<usize> = lines.numbers("layer sizes", Some(num_layers + 1))?;
    if sizes[0] != input_dim || sizes[num_layers] != output_dim {
        return Err(lines.err("layer sizes disagree with input/output dimensions"));
    }
    let input_mean = lines.numbers("input means", Some(input_dim))?;
    let input_range = lines.numbers("input ranges", Some(input_dim))?;
    let out_scale: Vec<f64> = lines.numbers("output scaling", Some(2))?;

    let mut layers = Vec::with_capacity(num_layers);
    for k in 0..num_layers {
        let (rows, cols) = (sizes[k + 1], sizes[k]);
        let w = lines.header("W", k)?;
        if w.len() != 2 || w[0] != rows || w[1] != cols {
            return Err(Error::NetworkStructure {
                layer: k,
                message: format!("weight header {w:?} does not match declared {rows}x{cols}"),
            });
        }
        let mut weights = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let row = lines.numbers::<f64>("weight row", None)?;
            if row.len() != cols {
                return Err(Error::NetworkStructure {
                    layer: k,
                    message: format!("line {}: weight row has {} values, expected {cols}", lines.line, row.len()),
                });
            }
            weights.extend(row);
        }
        let b = lines.header("b", k)?;
        if b.len() != 1 || b[0] != rows {
            return Err(Error::NetworkStructure {
                layer: k,
                message: format!("bias header {b:?} does not match declared {rows}"),
            });
        }
        let bias = lines.numbers::<f64>("bias", None)?;
        if bias.len() != rows {
            return Err(Error::NetworkStructure {
                layer: k,
                message: format!("bias has {} values, expected {rows}", bias.len()),
            });
        }
        layers.push(Layer {
            rows,
            cols,
            weights,
            bias,
        });
    }
    for (i, l) in lines.inner.by_ref() {
        if !l.trim().is_empty() {
            return Err(Error::NetworkParse {
                line: i + 1,
                message: "trailing content after last layer".into(),
            });
        }
    }
    ReluNetwork::new(layers, input_mean, input_range, out_scale[0], out_scale[1])
}

pub fn save(net: &ReluNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    Error::ensure_parent(path)?;
    std::fs::write(path, to_text(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<ReluNetwork> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::random_net;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_preserves_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = random_net(&mut rng, &[4, 16, 16, 9]);
        let text = to_text(&net);
        let back = parse(&text).unwrap();
        assert_eq!(back, net);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1e3..1e3)).collect();
            let a = net.forward(&x).unwrap();
            let b = back.forward(&x).unwrap();
            assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn truncated_file_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let text = to_text(&random_net(&mut rng, &[4, 5, 9]));
        let cut: String = text.lines().take(12).map(|l| format!("{l}\n")).collect();
        match parse(&cut) {
            Err(Error::NetworkParse { line, .. }) => assert_eq!(line, 13),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_layer_names_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let text = to_text(&random_net(&mut rng, &[4, 5, 6, 9]));
        let bad = text.replacen("W 6 5", "W 7 5", 1);
        match parse(&bad) {
            Err(Error::NetworkStructure { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("expected structural error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_garbage_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let text = to_text(&random_net(&mut rng, &[4, 3, 9]));
        assert!(parse(&format!("{text}\n\n")).is_ok());
        assert!(matches!(parse(&format!("{text}1.0\n")), Err(Error::NetworkParse { .. })));
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(parse("VCASNN 2\n"), Err(Error::NetworkParse { line: 1, .. })));
    }
}
