//! Binary table format.
//!
//! ```text
//! "VCASQ1\n"
//! u64 n_h, u64 n_vo, u64 n_vi          (little-endian)
//! f64 h_cuts[n_h], v_o_cuts[n_vo], v_i_cuts[n_vi]
//! u64 tau_max, f64 epsilon
//! u16 allowed[9]                        bit b of entry p: advisory b allowed after p
//! f64 values[...]                       (tau, h, v_O, v_I, a_prev, advisory) order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::grid::GridSpec;
use super::table::QTable;
use crate::domain::{allowed_advisories, Advisory};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 7] = b"VCASQ1\n";

pub fn write_table(table: &QTable, mut w: impl Write) -> std::io::Result<()> {
    let spec = table.spec();
    w.write_all(MAGIC)?;
    for axis in [&spec.h_cuts, &spec.v_o_cuts, &spec.v_i_cuts] {
        w.write_all(&(axis.len() as u64).to_le_bytes())?;
    }
    for axis in [&spec.h_cuts, &spec.v_o_cuts, &spec.v_i_cuts] {
        for c in axis.iter() {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    w.write_all(&(spec.tau_max as u64).to_le_bytes())?;
    w.write_all(&spec.epsilon.to_le_bytes())?;
    for a in Advisory::ALL {
        w.write_all(&allowed_advisories(a).bits().to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(1 << 16);
    for chunk in table.values().chunks(8192) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::TableFormat(format!("truncated while reading {what}")))?;
        Ok(b)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(what)?))
    }
}

const MAX_AXIS: u64 = 1 << 20;

pub fn read_table(r: impl Read) -> Result<QTable> {
    let mut c = Cursor { inner: r };
    let magic: [u8; 7] = c.bytes("magic")?;
    if &magic != MAGIC {
        return Err(Error::TableFormat("bad magic".into()));
    }
    let mut counts = [0usize; 3];
    for (i, n) in counts.iter_mut().enumerate() {
        let v = c.u64("cut count")?;
        if v > MAX_AXIS {
            return Err(Error::TableFormat(format!("axis {i} has implausible size {v}")));
        }
        *n = v as usize;
    }
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(3);
    for n in counts {
        axes.push((0..n).map(|_| c.f64("cuts")).collect::<Result<_>>()?);
    }
    let tau_max = c.u64("tau_max")?;
    if tau_max > MAX_AXIS {
        return Err(Error::TableFormat(format!("implausible tau_max {tau_max}")));
    }
    let epsilon = c.f64("epsilon")?;
    for a in Advisory::ALL {
        let bits = u16::from_le_bytes(c.bytes("allowability mask")?);
        if bits != allowed_advisories(a).bits() {
            return Err(Error::TableFormat(format!("allowability mask mismatch for {a}")));
        }
    }
    let v_i_cuts = axes.pop().unwrap();
    let v_o_cuts = axes.pop().unwrap();
    let h_cuts = axes.pop().unwrap();
    let spec = GridSpec {
        h_cuts,
        v_o_cuts,
        v_i_cuts,
        tau_max: tau_max as usize,
        epsilon,
    };
    spec.validate()
        .map_err(|e| Error::TableFormat(format!("grid: {e}")))?;
    let n = spec.num_layers() * spec.nodes_per_layer() * 81;
    let mut raw = vec![0u8; n * 8];
    c.inner
        .read_exact(&mut raw)
        .map_err(|_| Error::TableFormat("truncated value array".into()))?;
    let mut extra = [0u8; 1];
    if c.inner.read(&mut extra).map_err(|e| Error::TableFormat(e.to_string()))? != 0 {
        return Err(Error::TableFormat("trailing bytes after value array".into()));
    }
    let values = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    QTable::from_parts(spec, values)
}

pub fn save_table(table: &QTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    Error::ensure_parent(path)?;
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_table(table, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_table(path: impl AsRef<Path>) -> Result<QTable> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(BufReader::new(f))
}
