//! fvecs vectors, text label files and the binary ground-truth layout.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{FannsError, Result};
use crate::model::{GroundTruth, LabelSet, Vectors};

fn format_err(path: &Path, location: String, message: impl Into<String>) -> FannsError {
    FannsError::Format {
        path: path.to_path_buf(),
        location,
        message: message.into(),
    }
}

/// Each vector: little-endian i32 dimension, then that many f32 values.
pub fn read_fvecs(path: impl AsRef<Path>) -> Result<Vectors> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| FannsError::io(path, e))?;
    parse_fvecs(&bytes, path)
}

pub fn parse_fvecs(bytes: &[u8], path: &Path) -> Result<Vectors> {
    let mut offset = 0usize;
    let mut dim: Option<usize> = None;
    let mut data = Vec::new();
    while offset < bytes.len() {
        let at = |o: usize| format!("byte offset {o}");
        let head = bytes
            .get(offset..offset + 4)
            .ok_or_else(|| format_err(path, at(offset), "truncated dimension header"))?;
        let d = i32::from_le_bytes(head.try_into().expect("4 bytes"));
        if d <= 0 {
            return Err(format_err(path, at(offset), format!("invalid dimension {d}")));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(format_err(
                    path,
                    at(offset),
                    format!("dimension {d} differs from the first vector's {expected}"),
                ))
            }
            _ => {}
        }
        let body = bytes
            .get(offset + 4..offset + 4 + 4 * d)
            .ok_or_else(|| format_err(path, at(offset + 4), "truncated vector body"))?;
        for (j, chunk) in body.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(format_err(path, at(offset + 4 + 4 * j), "non-finite value"));
            }
            data.push(v);
        }
        offset += 4 + 4 * d;
    }
    Vectors::new(dim.unwrap_or(0), data)
}

pub fn write_fvecs(path: impl AsRef<Path>, vectors: &Vectors) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| FannsError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let d = (vectors.dim() as i32).to_le_bytes();
    for v in vectors.iter() {
        w.write_all(&d).map_err(|e| FannsError::io(path, e))?;
        for x in v {
            w.write_all(&x.to_le_bytes()).map_err(|e| FannsError::io(path, e))?;
        }
    }
    w.flush().map_err(|e| FannsError::io(path, e))
}

/// One line per record, comma-separated integer label ids; empty line = no labels.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<LabelSet>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| FannsError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| FannsError::io(path, e))?;
        out.push(parse_label_line(&line).map_err(|tok| {
            format_err(path, format!("line {}", i + 1), format!("`{tok}` is not a label id"))
        })?);
    }
    Ok(out)
}

pub fn parse_label_line(line: &str) -> std::result::Result<LabelSet, String> {
    line.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<u32>().map_err(|_| t.to_string()))
        .collect::<std::result::Result<Vec<u32>, String>>()
        .map(LabelSet::new)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[LabelSet]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| FannsError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for l in labels {
        let line: Vec<String> = l.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| FannsError::io(path, e))?;
    }
    w.flush().map_err(|e| FannsError::io(path, e))
}

/// Dense id `i` stands for raw id `raw[i]`; raw ids ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMapping {
    pub raw: Vec<u32>,
}

impl LabelMapping {
    pub fn dense_of(&self, raw: u32) -> Option<u32> {
        self.raw.binary_search(&raw).ok().map(|i| i as u32)
    }

    pub fn apply(&self, set: &LabelSet) -> Option<LabelSet> {
        set.iter().map(|l| self.dense_of(l)).collect::<Option<Vec<u32>>>().map(LabelSet::new)
    }

    /// `dense,raw` per line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text: String = self
            .raw
            .iter()
            .enumerate()
            .map(|(d, r)| format!("{d},{r}\n"))
            .collect();
        fs::write(path, text).map_err(|e| FannsError::io(path, e))
    }
}

/// Remaps raw label ids onto `0..universe`, preserving order.
pub fn remap_labels(raw: &[LabelSet]) -> (Vec<LabelSet>, LabelMapping) {
    let ids: BTreeSet<u32> = raw.iter().flat_map(|s| s.iter()).collect();
    let mapping = LabelMapping { raw: ids.into_iter().collect() };
    let dense = raw
        .iter()
        .map(|s| mapping.apply(s).expect("every raw id is mapped"))
        .collect();
    (dense, mapping)
}

/// Reads a label file and remaps it densely, writing the mapping to
/// `mapping_path` when given.
pub fn load_labels(path: impl AsRef<Path>, mapping_path: Option<&Path>) -> Result<(Vec<LabelSet>, LabelMapping)> {
    let raw = read_labels(path)?;
    let (dense, mapping) = remap_labels(&raw);
    if let Some(p) = mapping_path {
        mapping.save(p)?;
    }
    Ok((dense, mapping))
}

/// Per query: i32 count, then `count` pairs of (i32 id, f32 distance).
pub fn write_ground_truth(path: impl AsRef<Path>, truths: &[GroundTruth]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| FannsError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in truths {
        let mut buf = Vec::with_capacity(4 + 8 * t.len());
        buf.extend_from_slice(&(t.len() as i32).to_le_bytes());
        for (id, d) in t.ids.iter().zip(&t.distances) {
            buf.extend_from_slice(&(*id as i32).to_le_bytes());
            buf.extend_from_slice(&d.to_le_bytes());
        }
        w.write_all(&buf).map_err(|e| FannsError::io(path, e))?;
    }
    w.flush().map_err(|e| FannsError::io(path, e))
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruth>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| FannsError::io(path, e))?;
    let mut out = Vec::new();
    let mut off = 0usize;
    let word = |o: usize| -> Result<[u8; 4]> {
        bytes
            .get(o..o + 4)
            .map(|b| b.try_into().expect("4 bytes"))
            .ok_or_else(|| format_err(path, format!("byte offset {o}"), "truncated ground truth"))
    };
    while off < bytes.len() {
        let count = i32::from_le_bytes(word(off)?);
        if count < 0 {
            return Err(format_err(path, format!("byte offset {off}"), "negative count"));
        }
        off += 4;
        let mut t = GroundTruth::default();
        for _ in 0..count {
            t.ids.push(i32::from_le_bytes(word(off)?) as u32);
            t.distances.push(f32::from_le_bytes(word(off + 4)?));
            off += 8;
        }
        out.push(t);
    }
    Ok(out)
}
