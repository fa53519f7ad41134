//! Versioned little-endian binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "CSEG"
//! version u32      (currently 1)
//! flags   u8       bit 0: optimizer state present; bit 1: train state present
//! params  u32 count, then per tensor:
//!         u32 name_len | name (UTF-8) | u32 ndim | u32 dims[ndim] | f32 data[]
//! buffers same encoding (batch-norm running statistics)
//! optimizer (if flagged):
//!         u64 step | f64 lr | f64 beta1 | f64 beta2 | f64 eps
//!         u32 count, then per entry: u32 name_len | name | u32 len
//!                                    | f32 m[len] | f32 v[len]
//! train state (if flagged):
//!         u32 epoch | u64 global_step | f64 best_metric
//!         rng: 32-byte seed | u128 word position
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Pipeline;
use crate::nn::{Adam, AdamConfig};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"CSEG";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Training progress captured for bitwise resume.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainStateData {
    pub epoch: u32,
    pub global_step: u64,
    pub best_metric: f64,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub step: u64,
    pub config: AdamConfig,
    pub moments: Vec<(String, Vec<f32>, Vec<f32>)>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: Vec<(String, Vec<usize>, Vec<f32>)>,
    pub buffers: Vec<(String, Vec<usize>, Vec<f32>)>,
    pub optimizer: Option<OptimizerState>,
    pub train_state: Option<TrainStateData>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_named_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len() as u32);
    for &d in shape {
        put_u32(out, d as u32);
    }
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "truncated checkpoint: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|e| Error::Checkpoint(format!("bad name encoding: {e}")))
    }
    fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(4 * n)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn named_tensor(&mut self) -> Result<(String, Vec<usize>, Vec<f32>)> {
        let name = self.string()?;
        let ndim = self.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u32()? as usize);
        }
        let len: usize = shape.iter().product();
        let data = self.f32_vec(len)?;
        Ok((name, shape, data))
    }
}

pub fn save_checkpoint(
    path: &Path,
    pipeline: &mut Pipeline<f32>,
    optimizer: Option<&Adam<f32>>,
    train_state: Option<&TrainStateData>,
) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    let mut flags = 0u8;
    if optimizer.is_some() {
        flags |= 1;
    }
    if train_state.is_some() {
        flags |= 2;
    }
    out.push(flags);

    let param_order: Vec<String> = {
        let params = pipeline.named_params();
        put_u32(&mut out, params.len() as u32);
        let mut order = Vec::with_capacity(params.len());
        for (name, t) in &params {
            put_named_tensor(&mut out, name, t.shape(), t.data());
            order.push(name.clone());
        }
        order
    };
    {
        let buffers = pipeline.named_buffers();
        put_u32(&mut out, buffers.len() as u32);
        for (name, t) in &buffers {
            put_named_tensor(&mut out, name, t.shape(), t.data());
        }
    }

    if let Some(adam) = optimizer {
        let (step, moments) = adam.export(&param_order);
        out.extend_from_slice(&step.to_le_bytes());
        for v in [
            adam.config.lr,
            adam.config.beta1,
            adam.config.beta2,
            adam.config.eps,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        put_u32(&mut out, moments.len() as u32);
        for (name, (m, v)) in param_order.iter().zip(moments) {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, m.len() as u32);
            for x in &m {
                out.extend_from_slice(&x.to_le_bytes());
            }
            for x in &v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }

    if let Some(ts) = train_state {
        put_u32(&mut out, ts.epoch);
        out.extend_from_slice(&ts.global_step.to_le_bytes());
        out.extend_from_slice(&ts.best_metric.to_le_bytes());
        out.extend_from_slice(&ts.rng_seed);
        out.extend_from_slice(&ts.rng_word_pos.to_le_bytes());
    }

    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(&out)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = Reader { buf: &buf, pos: 0 };

    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".to_string()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let flags = r.u8()?;

    let n_params = r.u32()? as usize;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        params.push(r.named_tensor()?);
    }
    let n_buffers = r.u32()? as usize;
    let mut buffers = Vec::with_capacity(n_buffers);
    for _ in 0..n_buffers {
        buffers.push(r.named_tensor()?);
    }

    let optimizer = if flags & 1 != 0 {
        let step = r.u64()?;
        let config = AdamConfig {
            lr: r.f64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            eps: r.f64()?,
        };
        let count = r.u32()? as usize;
        let mut moments = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let len = r.u32()? as usize;
            let m = r.f32_vec(len)?;
            let v = r.f32_vec(len)?;
            moments.push((name, m, v));
        }
        Some(OptimizerState {
            step,
            config,
            moments,
        })
    } else {
        None
    };

    let train_state = if flags & 2 != 0 {
        let epoch = r.u32()?;
        let global_step = r.u64()?;
        let best_metric = r.f64()?;
        let mut rng_seed = [0u8; 32];
        rng_seed.copy_from_slice(r.take(32)?);
        let rng_word_pos = r.u128()?;
        Some(TrainStateData {
            epoch,
            global_step,
            best_metric,
            rng_seed,
            rng_word_pos,
        })
    } else {
        None
    };

    Ok(Checkpoint {
        params,
        buffers,
        optimizer,
        train_state,
    })
}

fn apply_named(
    target: &mut [(String, &mut Tensor<f32>)],
    source: &[(String, Vec<usize>, Vec<f32>)],
    what: &str,
) -> Result<()> {
    for (name, t) in target.iter_mut() {
        let Some((_, shape, data)) = source.iter().find(|(n, _, _)| n == name) else {
            return Err(Error::Checkpoint(format!("{what} {name} missing")));
        };
        if t.shape() != shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "{what} {name}: shape {:?} in checkpoint, {:?} in model",
                shape,
                t.shape()
            )));
        }
        t.data_mut().copy_from_slice(data);
    }
    Ok(())
}

/// Restores parameters and buffers into a freshly constructed pipeline.
pub fn apply_checkpoint(ck: &Checkpoint, pipeline: &mut Pipeline<f32>) -> Result<()> {
    apply_named(&mut pipeline.named_params(), &ck.params, "parameter")?;
    apply_named(&mut pipeline.named_buffers(), &ck.buffers, "buffer")?;
    Ok(())
}

/// Rebuilds the optimizer from a checkpoint.
pub fn restore_optimizer(state: &OptimizerState) -> Adam<f32> {
    let mut adam = Adam::new(state.config);
    let order: Vec<String> = state.moments.iter().map(|(n, _, _)| n.clone()).collect();
    let moments: Vec<(Vec<f32>, Vec<f32>)> = state
        .moments
        .iter()
        .map(|(_, m, v)| (m.clone(), v.clone()))
        .collect();
    adam.restore(state.step, &order, moments);
    adam
}
