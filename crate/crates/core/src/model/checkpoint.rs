//! MIAC checkpoint container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic      "MIAC"
//! version    u32 (= 1)
//! variant    u8  (0 = detection, 1 = severity)
//! count      u32
//! count × {
//!     name_len u16, name (UTF-8)
//!     rank u8, extents u32 × rank
//!     payload f32 × product(extents)
//! }
//! ```
//!
//! Besides layer tensors (`block{i}.conv.weight`, `fc{j}.bias`, ...), a model
//! checkpoint carries its architecture under `spec.*` and may carry optimizer
//! state under `optim.*`.

use std::fs;
use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::tensor::Tensor;

use super::network::Model;
use super::spec::{ConvBlockSpec, ModelSpec, Variant};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MIAC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub variant: Variant,
    pub entries: Vec<(String, Tensor<f32>)>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Truncated(format!(
                    "needed {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(self.variant.tag());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            let nb = name.as_bytes();
            ensure!(nb.len() <= u16::MAX as usize, InvalidArgument, "tensor name too long");
            ensure!(t.rank() <= u8::MAX as usize, InvalidArgument, "tensor rank too large");
            out.extend_from_slice(&(nb.len() as u16).to_le_bytes());
            out.extend_from_slice(nb);
            out.push(t.rank() as u8);
            for &e in t.shape() {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if buf.len() < 4 || &buf[..4] != CHECKPOINT_MAGIC {
            return Err(Error::NotCheckpoint("<bytes>".into()));
        }
        r.take(4)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let variant = Variant::from_tag(r.u8()?)?;
        let count = r.u32()? as usize;
        let mut entries = Vec::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Malformed("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &e| a.checked_mul(e))
                .ok_or_else(|| Error::Malformed(format!("tensor {name} is too large")))?;
            let payload = r.take(n.checked_mul(4).ok_or_else(|| {
                Error::Malformed(format!("tensor {name} is too large"))
            })?)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::from_vec(&shape, data)
                .map_err(|e| Error::Malformed(format!("tensor {name}: {e}")))?;
            entries.push((name, t));
        }
        ensure!(
            r.pos == buf.len(),
            Malformed,
            "{} trailing bytes after last tensor",
            buf.len() - r.pos
        );
        Ok(Self { variant, entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf).map_err(|e| match e {
            Error::NotCheckpoint(_) => Error::NotCheckpoint(path.to_path_buf()),
            other => other,
        })
    }
}

fn scalar(v: f64) -> Tensor<f32> {
    Tensor::from_vec(&[1], vec![v as f32]).expect("rank-1 scalar")
}

fn vector(v: &[f64]) -> Option<Tensor<f32>> {
    (!v.is_empty()).then(|| {
        Tensor::from_vec(&[v.len()], v.iter().map(|&x| x as f32).collect()).expect("rank-1 vector")
    })
}

/// Recovers the shortest decimal a stored `f32` came from, so `0.05` reads back as `0.05`.
fn decimal(v: f32) -> f64 {
    v.to_string().parse().expect("float formatting round-trips")
}

fn spec_entries(spec: &ModelSpec) -> Vec<(String, Tensor<f32>)> {
    let dims: Vec<f64> = spec.input_dims.iter().map(|&d| d as f64).collect();
    let filters: Vec<f64> = spec.conv_blocks.iter().map(|b| b.filters as f64).collect();
    let l2: Vec<f64> = spec.conv_blocks.iter().map(|b| b.l2_weight_factor).collect();
    let flags: Vec<f32> = spec
        .conv_blocks
        .iter()
        .flat_map(|b| [b.batchnorm as u8 as f32, b.dropout as u8 as f32])
        .collect();
    let fc: Vec<f64> = spec.fc_blocks.iter().map(|&n| n as f64).collect();
    let mut out = vec![
        ("spec.input_dims".to_string(), vector(&dims).unwrap()),
        ("spec.conv_filters".to_string(), vector(&filters).unwrap()),
        ("spec.conv_l2".to_string(), vector(&l2).unwrap()),
        (
            "spec.conv_flags".to_string(),
            Tensor::from_vec(&[spec.conv_blocks.len(), 2], flags).unwrap(),
        ),
    ];
    if let Some(fc) = vector(&fc) {
        out.push(("spec.fc".to_string(), fc));
    }
    out.push(("spec.output_classes".to_string(), scalar(spec.output_classes as f64)));
    out.push(("spec.dropout_rate".to_string(), scalar(spec.dropout_rate)));
    out
}

fn read_spec(ckpt: &Checkpoint) -> Result<ModelSpec> {
    let need = |name: &str| {
        ckpt.get(name)
            .ok_or_else(|| Error::Malformed(format!("checkpoint lacks {name}")))
    };
    let ints = |t: &Tensor<f32>| t.data().iter().map(|&v| v as usize).collect::<Vec<_>>();
    let dims = ints(need("spec.input_dims")?);
    ensure!(dims.len() == 3, Malformed, "spec.input_dims must have 3 entries");
    let filters = ints(need("spec.conv_filters")?);
    let l2 = need("spec.conv_l2")?.data().to_vec();
    let flags = need("spec.conv_flags")?.data().to_vec();
    ensure!(
        l2.len() == filters.len() && flags.len() == 2 * filters.len(),
        Malformed,
        "inconsistent spec.conv_* entries"
    );
    let conv_blocks = (0..filters.len())
        .map(|i| ConvBlockSpec {
            filters: filters[i],
            l2_weight_factor: decimal(l2[i]),
            batchnorm: flags[2 * i] != 0.0,
            dropout: flags[2 * i + 1] != 0.0,
        })
        .collect();
    let fc_blocks = ckpt.get("spec.fc").map(ints).unwrap_or_default();
    let output_classes = need("spec.output_classes")?.data()[0] as usize;
    let dropout_rate = decimal(need("spec.dropout_rate")?.data()[0]);
    Ok(ModelSpec {
        variant: ckpt.variant,
        conv_blocks,
        fc_blocks,
        output_classes,
        input_dims: [dims[0], dims[1], dims[2]],
        dropout_rate,
    })
}

impl Model<f32> {
    /// Architecture plus every named tensor.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut entries = spec_entries(self.spec());
        entries.extend(
            self.named_tensors()
                .into_iter()
                .map(|(n, t)| (n, t.clone())),
        );
        Checkpoint {
            variant: self.variant(),
            entries,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let spec = read_spec(ckpt)?;
        let mut model = Model::build(&spec, &mut crate::rng::Rng::new(0))?;
        model.load_tensors(ckpt.entries.iter().map(|(n, t)| (n.as_str(), t)))?;
        Ok(model)
    }
}
