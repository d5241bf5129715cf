//! Labeled mixture datasets and their on-disk container.
//!
//! Container "PDG1": magic `PDG1`, version u16, manifest block (all
//! little-endian: n u32, rank u32, extents u32 each, kind code u32,
//! record count u32, seed u64, kernel length u32), then the records.
//! Each record is the mixture as f32s, the N sources as f32s, then the
//! mixing spec (kind code u32, coefficients as f32s). A sibling
//! `<path>.manifest` text file lists the same metadata as key=value lines.

use crate::error::{Error, Result};
use crate::mixing::{MixKind, MixParams, MixingSpec};
use std::fs;
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 4] = b"PDG1";
pub const SUPPORTED_VERSION: u16 = 1;

/// Dataset-level metadata.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub version: u16,
    pub n: usize,
    pub shape: Vec<usize>,
    pub kind: MixKind,
    pub count: usize,
    pub seed: u64,
    /// Kernel length for convolutive datasets (1 for instantaneous).
    pub k_len: usize,
}

impl Manifest {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn as_key_values(&self) -> String {
        let shape = self
            .shape
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "format=PDG1\nversion={}\nn={}\nrank={}\nshape={}\nkind={}\ncount={}\nseed={}\nklen={}\n",
            self.version,
            self.n,
            self.shape.len(),
            shape,
            self.kind.name(),
            self.count,
            self.seed,
            self.k_len,
        )
    }
}

/// One mixture paired with its ground-truth sources.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub mixture: Vec<f32>,
    pub sources: Vec<Vec<f32>>,
    pub spec: MixingSpec,
}

impl SampleRecord {
    pub fn from_f64(mixture: &[f64], sources: &[Vec<f64>], spec: MixingSpec) -> Result<Self> {
        let rec = SampleRecord {
            mixture: mixture.iter().map(|&v| v as f32).collect(),
            sources: sources
                .iter()
                .map(|s| s.iter().map(|&v| v as f32).collect())
                .collect(),
            spec,
        };
        Ok(rec)
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }
}

/// Ordered records plus their manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub records: Vec<SampleRecord>,
}

impl Dataset {
    pub fn new(manifest: Manifest, records: Vec<SampleRecord>) -> Result<Self> {
        let numel = manifest.numel();
        if records.len() != manifest.count {
            return Err(Error::InvalidArgument(format!(
                "manifest says {} records, got {}",
                manifest.count,
                records.len()
            )));
        }
        for (i, r) in records.iter().enumerate() {
            if r.mixture.len() != numel
                || r.sources.len() != manifest.n
                || r.sources.iter().any(|s| s.len() != numel)
            {
                return Err(Error::InvalidArgument(format!(
                    "record {i} does not match the manifest (n={}, shape={:?})",
                    manifest.n, manifest.shape
                )));
            }
        }
        Ok(Dataset { manifest, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Serialize to the PDG1 byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.manifest;
        let mut out = Vec::with_capacity(64 + self.records.len() * (m.numel() * (m.n + 1)) * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&m.version.to_le_bytes());
        out.extend_from_slice(&(m.n as u32).to_le_bytes());
        out.extend_from_slice(&(m.shape.len() as u32).to_le_bytes());
        for &d in &m.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&m.kind.code().to_le_bytes());
        out.extend_from_slice(&(m.count as u32).to_le_bytes());
        out.extend_from_slice(&m.seed.to_le_bytes());
        out.extend_from_slice(&(m.k_len as u32).to_le_bytes());
        for r in &self.records {
            for &v in &r.mixture {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for s in &r.sources {
                for &v in s {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            out.extend_from_slice(&r.spec.kind.code().to_le_bytes());
            match &r.spec.params {
                MixParams::Weights(w) => {
                    for &v in w {
                        out.extend_from_slice(&(v as f32).to_le_bytes());
                    }
                }
                MixParams::Kernels(ks) => {
                    for k in ks {
                        for &v in k {
                            out.extend_from_slice(&(v as f32).to_le_bytes());
                        }
                    }
                }
            }
        }
        out
    }

    /// Write the container and its sibling text manifest.
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        fs::write(manifest_path(path), self.manifest.as_key_values())?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut rd = Reader::new(bytes, path);
        let magic = rd.take(4)?;
        if magic != MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "PDG1",
            });
        }
        let version = rd.u16()?;
        if version != SUPPORTED_VERSION {
            return Err(Error::UnsupportedVersion {
                path: path.to_path_buf(),
                found: version,
                supported: SUPPORTED_VERSION,
            });
        }
        let n = rd.u32()? as usize;
        let rank = rd.u32()? as usize;
        if rank == 0 || rank > 2 {
            return Err(rd.corrupt(format!("rank {rank} out of range")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(rd.u32()? as usize);
        }
        let kind = MixKind::from_code(rd.u32()?)
            .map_err(|e| rd.corrupt(e.to_string()))?;
        let count = rd.u32()? as usize;
        let seed = rd.u64()?;
        let k_len = rd.u32()? as usize;
        let manifest = Manifest {
            version,
            n,
            shape: shape.clone(),
            kind,
            count,
            seed,
            k_len,
        };
        let numel = manifest.numel();
        if numel == 0 || n == 0 || k_len == 0 {
            return Err(rd.corrupt("zero-sized manifest field".into()));
        }
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            let mixture = rd.f32s(numel)?;
            let mut sources = Vec::with_capacity(n);
            for _ in 0..n {
                sources.push(rd.f32s(numel)?);
            }
            let rec_kind = MixKind::from_code(rd.u32()?)
                .map_err(|e| rd.corrupt(e.to_string()))?;
            let params = match rec_kind {
                MixKind::Instantaneous => MixParams::Weights(
                    rd.f32s(n)?.into_iter().map(|v| v as f64).collect(),
                ),
                MixKind::Convolutive => {
                    let mut ks = Vec::with_capacity(n);
                    for _ in 0..n {
                        ks.push(
                            rd.f32s(k_len)?
                                .into_iter()
                                .map(|v| v as f64)
                                .collect(),
                        );
                    }
                    MixParams::Kernels(ks)
                }
            };
            records.push(SampleRecord {
                mixture,
                sources,
                spec: MixingSpec {
                    kind: rec_kind,
                    params,
                    seed: 0,
                    peak_scale: None,
                },
            });
        }
        rd.expect_eof()?;
        Dataset::new(manifest, records)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes, path)
    }
}

pub fn manifest_path(dataset_path: &Path) -> PathBuf {
    let mut os = dataset_path.as_os_str().to_owned();
    os.push(".manifest");
    PathBuf::from(os)
}

/// Little-endian byte reader with truncation diagnostics.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Reader {
            bytes,
            pos: 0,
            path,
        }
    }

    fn corrupt(&self, detail: String) -> Error {
        Error::Truncated {
            path: self.path.to_path_buf(),
            detail,
        }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.bytes.len() {
            return Err(self.corrupt(format!(
                "need {len} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        let raw = self.take(count * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn expect_eof(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.corrupt(format!(
                "{} trailing bytes after the last record",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

// ── Raw estimate arrays ──────────────────────────────────────────────

/// Raw array file: rank u32, extents u32 each, then f32 data, little-endian.
pub fn write_raw_array(path: &Path, shape: &[usize], data: &[f32]) -> Result<()> {
    let numel: usize = shape.iter().product();
    if numel != data.len() {
        return Err(Error::InvalidArgument(format!(
            "shape {shape:?} does not match {} values",
            data.len()
        )));
    }
    let mut out = Vec::with_capacity(4 + shape.len() * 4 + data.len() * 4);
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_raw_array(path: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
    let bytes = fs::read(path)?;
    let mut rd = Reader::new(&bytes, path);
    let rank = rd.u32()? as usize;
    if rank == 0 || rank > 3 {
        return Err(rd.corrupt(format!("implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(rd.u32()? as usize);
    }
    let numel: usize = shape.iter().product();
    let data = rd.f32s(numel)?;
    rd.expect_eof()?;
    Ok((shape, data))
}

// ── PGM (optional visual inspection of 2-D arrays) ───────────────────

/// Write a [-1,1] 2-D array as a binary PGM (P5) image.
pub fn write_pgm(path: &Path, h: usize, w: usize, data: &[f32]) -> Result<()> {
    if data.len() != h * w {
        return Err(Error::InvalidArgument(format!(
            "PGM {h}x{w} needs {} values, got {}",
            h * w,
            data.len()
        )));
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(data.iter().map(|&v| {
        (((v.clamp(-1.0, 1.0) + 1.0) / 2.0 * 255.0).round()) as u8
    }));
    fs::write(path, out)?;
    Ok(())
}

/// Read a binary PGM (P5) into a [-1,1] array.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = fs::read(path)?;
    let corrupt = |detail: &str| Error::Truncated {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };
    if !bytes.starts_with(b"P5") {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "P5",
        });
    }
    // Header: three whitespace-separated fields after the magic, then one
    // whitespace byte, then raw pixels.
    let mut fields = Vec::new();
    let mut pos = 2;
    while fields.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(corrupt("unterminated PGM header"));
        }
        fields.push(
            std::str::from_utf8(&bytes[start..pos])
                .map_err(|_| corrupt("non-ascii PGM header"))?
                .parse::<usize>()
                .map_err(|_| corrupt("bad PGM header number"))?,
        );
    }
    pos += 1;
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(corrupt("only 8-bit PGM supported"));
    }
    if bytes.len() < pos + w * h {
        return Err(corrupt("PGM pixel data truncated"));
    }
    let data = bytes[pos..pos + w * h]
        .iter()
        .map(|&b| b as f64 / 255.0 * 2.0 - 1.0)
        .collect();
    Ok((h, w, data))
}
