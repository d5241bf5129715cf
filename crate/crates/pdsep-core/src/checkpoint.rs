//! Model persistence. Format "PDGM": magic, version u16, architecture
//! descriptor, sub-model count, then per sub-model the step counter and
//! the four networks as named parameter blocks (name length + name bytes +
//! shape + little-endian f32 data) followed by their optimizer states, and
//! a CRC32 trailer over everything before it. Round trips are bit-exact.

use crate::error::{Error, Result};
use crate::nets::{ArchDescriptor, ConvLayer, CriticParams, GeneratorParams};
use crate::optim::OptimizerState;
use crate::tensor::{Real, Tensor};
use crate::trainer::{PDualGanModel, SubModel};
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"PDGM";
pub const SUPPORTED_VERSION: u16 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer {
            buf: Vec::with_capacity(1 << 20),
        }
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn usizes(&mut self, vs: &[usize]) {
        self.u32(vs.len() as u32);
        for &v in vs {
            self.u32(v as u32);
        }
    }
    fn f32s(&mut self, vs: &[f32]) {
        for &v in vs {
            self.f32(v);
        }
    }

    fn named_tensor(&mut self, name: &str, t: &Tensor<Real>) {
        self.u16(name.len() as u16);
        self.buf.extend_from_slice(name.as_bytes());
        self.usizes(t.shape());
        self.f32s(t.data());
    }

    fn descriptor(&mut self, d: &ArchDescriptor) {
        self.usizes(&d.input_shape);
        self.u32(d.in_channels as u32);
        self.usizes(&d.gen_channels);
        self.u32(d.gen_kernel as u32);
        self.usizes(&d.critic_channels);
        self.u32(d.critic_kernel as u32);
        self.f64(d.dropout_rate);
        self.u32(d.dropout_levels as u32);
        self.f32(d.leaky_slope);
    }
}

fn write_net(w: &mut Writer, named: &[(String, &Tensor<Real>)], opt: &[OptimizerState<Real>]) {
    w.u32(named.len() as u32);
    for (name, t) in named {
        w.named_tensor(name, t);
    }
    for st in opt {
        w.u32(st.acc.len() as u32);
        w.f32s(&st.acc);
    }
}

/// Serialize the model (parameters, optimizer states, step counters).
pub fn checkpoint_bytes(model: &PDualGanModel) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u16(SUPPORTED_VERSION);
    w.descriptor(&model.desc);
    w.u32(model.n() as u32);
    for sub in &model.subs {
        w.u32(sub.index as u32);
        w.u64(sub.step);
        write_net(&mut w, &sub.g_a.named_tensors(), &sub.opt_g_a);
        write_net(&mut w, &sub.g_b.named_tensors(), &sub.opt_g_b);
        write_net(&mut w, &sub.d_a.named_tensors(), &sub.opt_d_a);
        write_net(&mut w, &sub.d_b.named_tensors(), &sub.opt_d_b);
    }
    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    w.buf
}

pub fn save_checkpoint(model: &PDualGanModel, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_bytes(model))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, detail: impl Into<String>) -> Error {
        Error::Truncated {
            path: self.path.to_path_buf(),
            detail: detail.into(),
        }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.bytes.len() {
            return Err(self.corrupt(format!(
                "need {len} bytes at offset {}, have {}",
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
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usizes(&mut self) -> Result<Vec<usize>> {
        let len = self.u32()? as usize;
        if len > 16 {
            return Err(self.corrupt(format!("implausible list length {len}")));
        }
        (0..len).map(|_| Ok(self.u32()? as usize)).collect()
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        let raw = self.take(count * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn named_tensor(&mut self) -> Result<(String, Tensor<Real>)> {
        let name_len = self.u16()? as usize;
        let name = std::str::from_utf8(self.take(name_len)?)
            .map_err(|_| self.corrupt("non-utf8 parameter name"))?
            .to_string();
        let shape = self.usizes()?;
        let numel: usize = shape.iter().product();
        let data = self.f32s(numel)?;
        let mut t =
            Tensor::new(shape, data).map_err(|e| self.corrupt(e.to_string()))?;
        t.requires_grad = true;
        Ok((name, t))
    }

    fn descriptor(&mut self) -> Result<ArchDescriptor> {
        Ok(ArchDescriptor {
            input_shape: self.usizes()?,
            in_channels: self.u32()? as usize,
            gen_channels: self.usizes()?,
            gen_kernel: self.u32()? as usize,
            critic_channels: self.usizes()?,
            critic_kernel: self.u32()? as usize,
            dropout_rate: self.f64()?,
            dropout_levels: self.u32()? as usize,
            leaky_slope: self.f32()?,
        })
    }
}

fn read_net(
    rd: &mut Reader<'_>,
    expected_names: &[String],
) -> Result<(Vec<Tensor<Real>>, Vec<OptimizerState<Real>>)> {
    let n = rd.u32()? as usize;
    if n != expected_names.len() {
        return Err(rd.corrupt(format!(
            "expected {} parameter tensors, found {n}",
            expected_names.len()
        )));
    }
    let mut tensors = Vec::with_capacity(n);
    for expected in expected_names {
        let (name, t) = rd.named_tensor()?;
        if &name != expected {
            return Err(rd.corrupt(format!(
                "parameter name mismatch: expected '{expected}', found '{name}'"
            )));
        }
        tensors.push(t);
    }
    let mut opt = Vec::with_capacity(n);
    for t in &tensors {
        let len = rd.u32()? as usize;
        if len != t.numel() {
            return Err(rd.corrupt(format!(
                "optimizer state length {len} does not match parameter ({})",
                t.numel()
            )));
        }
        opt.push(OptimizerState { acc: rd.f32s(len)? });
    }
    Ok((tensors, opt))
}

fn rebuild_generator(desc: &ArchDescriptor, tensors: Vec<Tensor<Real>>) -> GeneratorParams {
    // Template from a throwaway init gives the down/up layer counts.
    let template = crate::nets::init_generator(desc, 0);
    let mut it = tensors.into_iter();
    let mut take_layer = || ConvLayer {
        w: it.next().expect("tensor count checked"),
        b: it.next().expect("tensor count checked"),
    };
    GeneratorParams {
        down: (0..template.down.len()).map(|_| take_layer()).collect(),
        up: (0..template.up.len()).map(|_| take_layer()).collect(),
        head: take_layer(),
    }
}

fn rebuild_critic(desc: &ArchDescriptor, tensors: Vec<Tensor<Real>>) -> CriticParams {
    let template = crate::nets::init_critic(desc, 0);
    let mut it = tensors.into_iter();
    let mut take_layer = || ConvLayer {
        w: it.next().expect("tensor count checked"),
        b: it.next().expect("tensor count checked"),
    };
    CriticParams {
        stack: (0..template.stack.len()).map(|_| take_layer()).collect(),
        head: take_layer(),
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8], path: &Path) -> Result<PDualGanModel> {
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: "file shorter than header".into(),
        });
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored_crc = u32::from_le_bytes(trailer.try_into().unwrap());
    if crc32fast::hash(body) != stored_crc {
        return Err(Error::ChecksumMismatch {
            path: path.to_path_buf(),
        });
    }
    let mut rd = Reader {
        bytes: body,
        pos: 0,
        path,
    };
    if rd.take(4)? != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "PDGM",
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
    let desc = rd.descriptor()?;
    desc.validate()
        .map_err(|e| rd.corrupt(format!("bad descriptor: {e}")))?;
    let n = rd.u32()? as usize;
    if n == 0 || n > 1024 {
        return Err(rd.corrupt(format!("implausible sub-model count {n}")));
    }

    let gen_names: Vec<String> = crate::nets::init_generator(&desc, 0)
        .named_tensors()
        .iter()
        .map(|(n, _)| n.clone())
        .collect();
    let critic_names: Vec<String> = crate::nets::init_critic(&desc, 0)
        .named_tensors()
        .iter()
        .map(|(n, _)| n.clone())
        .collect();

    let mut subs = Vec::with_capacity(n);
    for _ in 0..n {
        let index = rd.u32()? as usize;
        let step = rd.u64()?;
        let (ga_t, opt_g_a) = read_net(&mut rd, &gen_names)?;
        let (gb_t, opt_g_b) = read_net(&mut rd, &gen_names)?;
        let (da_t, opt_d_a) = read_net(&mut rd, &critic_names)?;
        let (db_t, opt_d_b) = read_net(&mut rd, &critic_names)?;
        subs.push(SubModel {
            index,
            g_a: rebuild_generator(&desc, ga_t),
            g_b: rebuild_generator(&desc, gb_t),
            d_a: rebuild_critic(&desc, da_t),
            d_b: rebuild_critic(&desc, db_t),
            opt_g_a,
            opt_g_b,
            opt_d_a,
            opt_d_b,
            step,
        });
    }
    if rd.pos != body.len() {
        return Err(rd.corrupt(format!(
            "{} trailing bytes before the checksum",
            body.len() - rd.pos
        )));
    }
    Ok(PDualGanModel { desc, subs })
}

pub fn load_checkpoint(path: &Path) -> Result<PDualGanModel> {
    let bytes = fs::read(path)?;
    checkpoint_from_bytes(&bytes, path)
}
