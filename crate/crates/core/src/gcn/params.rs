use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PARAMS_SCHEMA_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"SGCN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GcnDims {
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
    pub classes: usize,
}

/// Fully connected layer; `weight` is stored input-major (`weight[i * outputs + o]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut d = Self::zeros(inputs, outputs);
        for w in &mut d.weight {
            *w = rng.gen_range(-limit..=limit);
        }
        d
    }

    /// `out = bias + x * W`, skipping zero inputs (node features are mostly one-hot sums).
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weight[i * self.outputs..(i + 1) * self.outputs];
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }
}

/// Graph convolution layers followed by a readout layer over mean-pooled node states.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub dims: GcnDims,
    pub layers: Vec<Dense>,
    pub readout: Dense,
}

impl GcnParams {
    pub fn init(dims: GcnDims, seed: u64) -> Result<Self> {
        if dims.input == 0 || dims.hidden == 0 || dims.classes == 0 {
            return Err(Error::InvalidConfig(format!(
                "degenerate GCN dims {dims:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.layers);
        let mut fan_in = dims.input;
        for _ in 0..dims.layers {
            layers.push(Dense::glorot(fan_in, dims.hidden, &mut rng));
            fan_in = dims.hidden;
        }
        let readout = Dense::glorot(fan_in, dims.classes, &mut rng);
        Ok(Self {
            dims,
            layers,
            readout,
        })
    }

    /// Same shapes, every value zero; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            dims: self.dims,
            layers: self
                .layers
                .iter()
                .map(|d| Dense::zeros(d.inputs, d.outputs))
                .collect(),
            readout: Dense::zeros(self.readout.inputs, self.readout.outputs),
        }
    }

    pub fn dense(&self) -> impl Iterator<Item = &Dense> {
        self.layers.iter().chain(std::iter::once(&self.readout))
    }

    fn dense_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.layers
            .iter_mut()
            .chain(std::iter::once(&mut self.readout))
    }

    /// Every scalar in a fixed order: each dense block's weights, then its bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.dense()
            .flat_map(|d| d.weight.iter().chain(d.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.dense_mut()
            .flat_map(|d| d.weight.iter_mut().chain(d.bias.iter_mut()))
    }

    pub fn num_values(&self) -> usize {
        self.dense().map(|d| d.weight.len() + d.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        let d = self.dims;
        for v in [
            PARAMS_SCHEMA_VERSION,
            d.input as u32,
            d.hidden as u32,
            d.layers as u32,
            d.classes as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        let blocks: Vec<&Dense> = self.dense().collect();
        w.write_all(&(blocks.len() as u32).to_le_bytes())?;
        for b in &blocks {
            w.write_all(&(b.inputs as u32).to_le_bytes())?;
            w.write_all(&(b.outputs as u32).to_le_bytes())?;
        }
        for v in self.values() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |why: &str| Error::InvalidParamsFile(why.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u32s = |n: usize| -> Result<Vec<usize>> {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 4];
                r.read_exact(&mut b)?;
                out.push(u32::from_le_bytes(b) as usize);
            }
            Ok(out)
        };
        let head = u32s(6)?;
        if head[0] != PARAMS_SCHEMA_VERSION as usize {
            return Err(bad("unsupported version"));
        }
        let dims = GcnDims {
            input: head[1],
            hidden: head[2],
            layers: head[3],
            classes: head[4],
        };
        let n_blocks = head[5];
        if n_blocks != dims.layers + 1 {
            return Err(bad("block count does not match layer count"));
        }
        let shapes = u32s(2 * n_blocks)?;
        let mut params = GcnParams::init(dims, 0)?;
        for (b, d) in params.dense().enumerate() {
            if (shapes[2 * b], shapes[2 * b + 1]) != (d.inputs, d.outputs) {
                return Err(bad("block shape does not chain"));
            }
        }
        for v in params.values_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(bad("trailing bytes"));
        }
        if !params.is_finite() {
            return Err(bad("non-finite parameter"));
        }
        Ok(params)
    }
}
