//! Full-state binary snapshots.
//!
//! Layout, all little endian: magic `SYNS`, `u16` version, `u32` cell count,
//! `u32` frame count, then per frame an `f64` time followed by the cell
//! values as `f64`.

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SYNS";
pub const VERSION: u16 = 1;
const HEADER: usize = 4 + 2 + 4 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub time: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub n_cells: usize,
    pub frames: Vec<Frame>,
}

impl Snapshot {
    pub fn new(n_cells: usize) -> Self {
        Self {
            n_cells,
            frames: Vec::new(),
        }
    }

    pub fn push(&mut self, time: f64, values: &[f64]) -> Result<()> {
        if values.len() != self.n_cells {
            return Err(Error::LengthMismatch {
                expected: self.n_cells,
                got: values.len(),
            });
        }
        self.frames.push(Frame {
            time,
            values: values.to_vec(),
        });
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let n = u32::try_from(self.n_cells).map_err(|_| Error::Snapshot("too many cells".into()))?;
        let count = u32::try_from(self.frames.len()).map_err(|_| Error::Snapshot("too many frames".into()))?;
        let mut out = Vec::with_capacity(HEADER + self.frames.len() * (self.n_cells + 1) * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&count.to_le_bytes());
        for f in &self.frames {
            if f.values.len() != self.n_cells {
                return Err(Error::LengthMismatch {
                    expected: self.n_cells,
                    got: f.values.len(),
                });
            }
            out.extend_from_slice(&f.time.to_le_bytes());
            for v in &f.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER {
            return Err(Error::Snapshot(format!(
                "{} bytes is shorter than the header",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let n_cells = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let frame_len = (n_cells + 1)
            .checked_mul(8)
            .ok_or_else(|| Error::Snapshot("frame size overflows".into()))?;
        let body = frame_len
            .checked_mul(count)
            .ok_or_else(|| Error::Snapshot("body size overflows".into()))?;
        if bytes.len() - HEADER != body {
            return Err(Error::Snapshot(format!(
                "expected {body} body bytes for {count} frames of {n_cells} cells, found {}",
                bytes.len() - HEADER
            )));
        }
        let mut frames = Vec::with_capacity(count);
        for chunk in bytes[HEADER..].chunks_exact(frame_len) {
            let mut words = chunk.chunks_exact(8).map(|w| f64::from_le_bytes(w.try_into().unwrap()));
            let time = words.next().unwrap_or(0.0);
            let values: Vec<f64> = words.collect();
            if !time.is_finite() || values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Snapshot(format!("non-finite value in frame {}", frames.len())));
            }
            frames.push(Frame { time, values });
        }
        Ok(Self { n_cells, frames })
    }
}
