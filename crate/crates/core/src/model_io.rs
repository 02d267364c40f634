//! Versioned binary model container.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic        8 bytes  "MVLSTM\0\0"
//! version      u32      1
//! n_vars       u32
//! per_var_dim  u32
//! window       u32
//! names        n_vars × (u32 byte length, UTF-8 bytes), target last
//! norm stats   n_vars × (f64 mean, f64 std)
//! blocks       9 × (u64 element count, count × f64) in the order
//!              w_x, w_h, b_j, w_gates, b_gates, w_e, b_e, w_out, b_out
//! ```

use std::path::Path;

use crate::cell::{CellShape, MvLstmParams, ParamBlock};
use crate::error::{Error, Result};
use crate::train::NormStats;

pub const MAGIC: &[u8; 8] = b"MVLSTM\0\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub names: Vec<String>,
    pub stats: NormStats,
    pub params: MvLstmParams,
}

impl ModelFile {
    pub fn new(names: Vec<String>, stats: NormStats, params: MvLstmParams) -> Result<Self> {
        let n = params.shape.n_vars;
        if names.len() != n || stats.mean.len() != n || stats.std.len() != n {
            return Err(Error::ModelFormat(format!(
                "{} names and {} statistics for a {n}-variable model",
                names.len(),
                stats.mean.len()
            )));
        }
        params.validate()?;
        Ok(Self { names, stats, params })
    }

    pub fn shape(&self) -> CellShape {
        self.params.shape
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.params.num_scalars());
        out.extend_from_slice(MAGIC);
        let shape = self.params.shape;
        for v in [FORMAT_VERSION, shape.n_vars as u32, shape.per_var_dim as u32, shape.window as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for name in &self.names {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
        for (m, s) in self.stats.mean.iter().zip(&self.stats.std) {
            out.extend_from_slice(&m.to_le_bytes());
            out.extend_from_slice(&s.to_le_bytes());
        }
        for block in ParamBlock::ALL {
            let data = self.params.block(block);
            out.extend_from_slice(&(data.len() as u64).to_le_bytes());
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::ModelFormat("not a model file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let (n, d, t) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let shape = CellShape::new(n, d, t).map_err(|e| Error::ModelFormat(format!("invalid shape: {e}")))?;
        let mut names = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.u32()? as usize;
            let raw = r.take(len)?;
            let name = std::str::from_utf8(raw).map_err(|_| Error::ModelFormat("column name is not UTF-8".into()))?;
            names.push(name.to_string());
        }
        let mut mean = Vec::with_capacity(n);
        let mut std = Vec::with_capacity(n);
        for _ in 0..n {
            mean.push(r.f64()?);
            std.push(r.f64()?);
        }
        let mut params = MvLstmParams::zeros(shape);
        for block in ParamBlock::ALL {
            let len = r.u64()? as usize;
            let dst = params.block_mut(block);
            if len != dst.len() {
                return Err(Error::ModelFormat(format!(
                    "block {} holds {len} values, shape requires {}",
                    block.name(),
                    dst.len()
                )));
            }
            for v in dst.iter_mut() {
                *v = r.f64()?;
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::ModelFormat(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Self::new(names, NormStats { mean, std }, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::ModelFormat(format!("file truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(seed: u64, n: usize, d: usize, t: usize) -> ModelFile {
        let shape = CellShape::new(n, d, t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = MvLstmParams::random(shape, 1.0, &mut rng);
        let names = (0..n).map(|k| format!("var_{k}")).collect();
        let stats = NormStats {
            mean: (0..n).map(|k| k as f64 * 0.1 - 1.0 / 3.0).collect(),
            std: (0..n).map(|k| 1.0 + k as f64 / 7.0).collect(),
        };
        ModelFile::new(names, stats, params).unwrap()
    }

    #[test]
    fn header_layout() {
        let m = sample(1, 2, 1, 3);
        let b = m.to_bytes();
        assert_eq!(&b[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[20..24].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(b[24..28].try_into().unwrap()), 5);
        assert_eq!(&b[28..33], b"var_0");
        // header 24 + names 2*(4+5) + stats 2*16 + 9 length prefixes + scalars
        let expected = 24 + 18 + 32 + 9 * 8 + 8 * m.params.num_scalars();
        assert_eq!(b.len(), expected);
    }

    #[test]
    fn file_round_trip_is_bit_identical() {
        let m = sample(7, 3, 2, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        m.save(&path).unwrap();
        let back = ModelFile::load(&path).unwrap();
        for block in ParamBlock::ALL {
            let a: Vec<u64> = m.params.block(block).iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.params.block(block).iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b, "{}", block.name());
        }
        assert_eq!(back.names, m.names);
        assert_eq!(back.stats, m.stats);
    }

    #[test]
    fn corrupt_files_rejected() {
        let b = sample(2, 2, 2, 2).to_bytes();
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(ModelFile::from_bytes(&bad), Err(Error::ModelFormat(_))));
        let mut bad = b.clone();
        bad[8] = 2;
        assert!(matches!(ModelFile::from_bytes(&bad), Err(Error::ModelFormat(_))));
        assert!(matches!(ModelFile::from_bytes(&b[..b.len() - 1]), Err(Error::ModelFormat(_))));
        let mut long = b.clone();
        long.push(0);
        assert!(matches!(ModelFile::from_bytes(&long), Err(Error::ModelFormat(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn bytes_round_trip(seed in any::<u64>(), n in 2usize..6, d in 1usize..4, t in 1usize..12) {
            let m = sample(seed, n, d, t);
            let b = m.to_bytes();
            let back = ModelFile::from_bytes(&b).unwrap();
            prop_assert_eq!(back.to_bytes(), b);
        }
    }
}
