//! Binary checkpoint format.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "CAPKMODL"                       8-byte magic
//! u32 version (1)
//! u32 vocab, u32 embed, u32 feature, u32 context
//! 4 blocks: context_proj, embed, out_weights, out_bias
//!   each: u64 element count, then that many f64
//! ```

use std::path::Path;

use super::{ModelDims, ModelError, ToyCaptionModel};

const MAGIC: &[u8; 8] = b"CAPKMODL";
const VERSION: u32 = 1;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            ModelError::Checkpoint(format!("truncated at byte {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn block(&mut self) -> Result<Vec<f64>, ModelError> {
        let n = u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| ModelError::Checkpoint("block too large".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl ToyCaptionModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.dims();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for x in [VERSION, d.vocab as u32, d.embed as u32, d.feature as u32, d.context as u32] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for block in [self.context_proj(), self.embeddings(), self.out_weights(), self.out_bias()] {
            out.extend_from_slice(&(block.len() as u64).to_le_bytes());
            for v in block {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(ModelError::Checkpoint("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
        }
        let dims = ModelDims {
            vocab: cur.u32()? as usize,
            embed: cur.u32()? as usize,
            feature: cur.u32()? as usize,
            context: cur.u32()? as usize,
        };
        let proj = cur.block()?;
        let embed = cur.block()?;
        let out_w = cur.block()?;
        let out_b = cur.block()?;
        if cur.pos != bytes.len() {
            return Err(ModelError::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - cur.pos
            )));
        }
        ToyCaptionModel::from_parts(dims, proj, embed, out_w, out_b)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
