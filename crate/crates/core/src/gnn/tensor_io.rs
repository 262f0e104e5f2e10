//! Binary parameter dumps.
//!
//! Layout, all integers little-endian `u64` unless noted:
//!
//! ```text
//! magic    4 bytes  "GNNT"
//! version  u32      1
//! count    u64      number of tensors
//! repeated count times:
//!   name_len u64, name (UTF-8), rows u64, cols u64,
//!   rows * cols little-endian f64 values, row-major
//! ```

use std::io::{self, Read, Write};

use ndarray::Array2;

use super::model::Model;

const MAGIC: &[u8; 4] = b"GNNT";
const VERSION: u32 = 1;

pub fn write_tensors<W: Write>(mut out: W, model: &Model) -> io::Result<()> {
    let tensors = model.named_tensors();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(tensors.len() as u64).to_le_bytes())?;
    for (name, t) in tensors {
        out.write_all(&(name.len() as u64).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(t.nrows() as u64).to_le_bytes())?;
        out.write_all(&(t.ncols() as u64).to_le_bytes())?;
        for v in t.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()
}

fn read_u64<R: Read>(input: &mut R) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

/// Reads every tensor back as `(name, matrix)` pairs in file order.
pub fn read_tensors<R: Read>(mut input: R) -> io::Result<Vec<(String, Array2<f64>)>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(invalid("not a tensor file"));
    }
    let mut version = [0u8; 4];
    input.read_exact(&mut version)?;
    if u32::from_le_bytes(version) != VERSION {
        return Err(invalid("unsupported tensor file version"));
    }
    let count = read_u64(&mut input)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = read_u64(&mut input)? as usize;
        let mut name = vec![0u8; len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| invalid("tensor name is not UTF-8"))?;
        let rows = read_u64(&mut input)? as usize;
        let cols = read_u64(&mut input)? as usize;
        let mut values = Vec::with_capacity(rows * cols);
        let mut buf = [0u8; 8];
        for _ in 0..rows * cols {
            input.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        let t = Array2::from_shape_vec((rows, cols), values).map_err(|e| invalid(e.to_string()))?;
        out.push((name, t));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{random_genome, GenomeSpace, Task};
    use crate::gnn::model::build_model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dump_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_genome(
            &mut rng,
            &GenomeSpace {
                hidden_dims: vec![4, 8],
                ..GenomeSpace::default()
            },
            3,
            3,
            Task::SingleLabel,
        )
        .unwrap();
        let model = build_model(&g, 6, &mut rng, usize::MAX).unwrap();
        let mut bytes = Vec::new();
        write_tensors(&mut bytes, &model).unwrap();
        let back = read_tensors(bytes.as_slice()).unwrap();
        let expected = model.named_tensors();
        assert_eq!(back.len(), expected.len());
        for ((n1, t1), (n2, t2)) in back.iter().zip(expected) {
            assert_eq!(n1, &n2);
            assert_eq!(t1, t2);
        }
        assert!(read_tensors(&bytes[..bytes.len() - 3]).is_err());
    }
}
