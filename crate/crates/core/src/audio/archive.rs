//! Binary feature archive. Each record is
//! `u32 id_len | id bytes | u32 T | u32 D | T*D f32`, all little-endian,
//! and a sibling `.index` text file maps `utt_id<TAB>byte offset`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};

pub fn index_path(archive: &Path) -> PathBuf {
    let mut name = archive.as_os_str().to_owned();
    name.push(".index");
    PathBuf::from(name)
}

pub struct FeatureArchiveWriter {
    path: PathBuf,
    out: BufWriter<File>,
    offset: u64,
    index: Vec<(String, u64)>,
}

impl FeatureArchiveWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            offset: 0,
            index: Vec::new(),
        })
    }

    /// Appends one record and returns its byte offset.
    pub fn append(&mut self, utt_id: &str, frames: &Array2<f32>) -> Result<u64> {
        let id = utt_id.as_bytes();
        if id.contains(&b'\t') || id.contains(&b'\n') {
            return Err(Error::invalid(format!(
                "utterance id {utt_id:?} contains tab/newline"
            )));
        }
        let mut buf = Vec::with_capacity(12 + id.len() + frames.len() * 4);
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id);
        buf.extend_from_slice(&(frames.nrows() as u32).to_le_bytes());
        buf.extend_from_slice(&(frames.ncols() as u32).to_le_bytes());
        for v in frames.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.out
            .write_all(&buf)
            .map_err(|e| Error::io(&self.path, e))?;
        let at = self.offset;
        self.index.push((utt_id.to_string(), at));
        self.offset += buf.len() as u64;
        Ok(at)
    }

    /// Flushes the archive and writes its index file.
    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        let idx = index_path(&self.path);
        let mut text = String::new();
        for (id, off) in &self.index {
            text.push_str(&format!("{id}\t{off}\n"));
        }
        std::fs::write(&idx, text).map_err(|e| Error::io(&idx, e))
    }
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
    Ok(u32::from_le_bytes(b))
}

fn read_record(r: &mut impl Read, path: &Path) -> Result<(String, Array2<f32>)> {
    let id_len = read_u32(r, path)? as usize;
    let mut id = vec![0u8; id_len];
    r.read_exact(&mut id).map_err(|e| Error::io(path, e))?;
    let id = String::from_utf8(id)
        .map_err(|_| Error::invalid(format!("{}: utterance id is not UTF-8", path.display())))?;
    let t = read_u32(r, path)? as usize;
    let d = read_u32(r, path)? as usize;
    let mut raw = vec![0u8; t * d * 4];
    r.read_exact(&mut raw).map_err(|e| Error::io(path, e))?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let frames = Array2::from_shape_vec((t, d), data).expect("length checked by read_exact");
    Ok((id, frames))
}

/// Reads every record in file order.
pub fn read_archive(path: &Path) -> Result<Vec<(String, Array2<f32>)>> {
    let len = std::fs::metadata(path)
        .map_err(|e| Error::io(path, e))?
        .len();
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut out = Vec::new();
    let mut pos = 0u64;
    while pos < len {
        out.push(read_record(&mut r, path)?);
        pos = r.stream_position().map_err(|e| Error::io(path, e))?;
    }
    Ok(out)
}

pub fn read_index(path: &Path) -> Result<BTreeMap<String, u64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut index = BTreeMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: &str| Error::Parse {
            path: path.display().to_string(),
            line: n + 1,
            reason: reason.to_string(),
        };
        let (id, off) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected utt_id<TAB>offset"))?;
        let off = off.trim().parse().map_err(|_| parse_err("bad offset"))?;
        index.insert(id.to_string(), off);
    }
    Ok(index)
}

/// Random access to archive records through the index.
pub struct FeatureArchiveReader {
    path: PathBuf,
    file: BufReader<File>,
    index: BTreeMap<String, u64>,
}

impl FeatureArchiveReader {
    pub fn open(path: &Path) -> Result<Self> {
        let index = read_index(&index_path(path))?;
        let file = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        Ok(Self {
            path: path.to_path_buf(),
            file,
            index,
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    pub fn get(&mut self, utt_id: &str) -> Result<Array2<f32>> {
        let off = *self
            .index
            .get(utt_id)
            .ok_or_else(|| Error::invalid(format!("{utt_id} not in {}", self.path.display())))?;
        self.file
            .seek(SeekFrom::Start(off))
            .map_err(|e| Error::io(&self.path, e))?;
        let (id, frames) = read_record(&mut self.file, &self.path)?;
        if id != utt_id {
            return Err(Error::invalid(format!(
                "index of {} points {utt_id} at record {id}",
                self.path.display()
            )));
        }
        Ok(frames)
    }
}
