//! Parameter checkpoints: a magic string, then one record per registry
//! entry in registry order. Record layout, all little-endian:
//! name length (u32) | name bytes | rank (u32) | dims (u32 each) | f32 data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Real, Tensor};

const MAGIC: &[u8] = b"HMAGQ1";

pub fn save<R: Real>(store: &ParamStore<R>, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    for (name, tensor) in store.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
        for &d in tensor.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&(v.into_f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_file<R: Real>(store: &ParamStore<R>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    save(store, &mut w)?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a, T: Read> {
    inner: &'a mut T,
    offset: u64,
}

impl<T: Read> Cursor<'_, T> {
    /// Reads exactly `n` bytes; a short read is a format error at the
    /// current offset.
    fn take(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        let mut filled = 0;
        while filled < n {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => {
                    return Err(Error::Format {
                        offset: self.offset + filled as u64,
                        message: format!("truncated while reading {what}"),
                    })
                }
                Ok(k) => filled += k,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += n as u64;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Like `u32`, but a clean end-of-file exactly here returns None.
    fn u32_or_end(&mut self, what: &str) -> Result<Option<u32>> {
        let mut buf = [0u8; 4];
        let mut filled = 0;
        while filled < 4 {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) if filled == 0 => return Ok(None),
                Ok(0) => {
                    return Err(Error::Format {
                        offset: self.offset + filled as u64,
                        message: format!("truncated while reading {what}"),
                    })
                }
                Ok(k) => filled += k,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += 4;
        Ok(Some(u32::from_le_bytes(buf)))
    }
}

/// Reads every record. The caller decides how to reconcile them with a
/// registry; see [`load`].
pub fn read_records<T: Read>(r: &mut T) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut cur = Cursor {
        inner: r,
        offset: 0,
    };
    let magic = cur.take(MAGIC.len(), "magic")?;
    if magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic; not a checkpoint file".into(),
        });
    }
    let mut out = Vec::new();
    while let Some(name_len) = cur.u32_or_end("name length")? {
        let name_bytes = cur.take(name_len as usize, "name")?;
        let name = String::from_utf8(name_bytes).map_err(|_| Error::Format {
            offset: cur.offset,
            message: "name is not utf-8".into(),
        })?;
        let rank = cur.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32("dimension")? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = cur.take(numel * 4, &format!("data of {name}"))?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((name, Tensor::new(shape, data)));
    }
    Ok(out)
}

/// Loads a checkpoint into an existing registry: the file must contain
/// exactly the registry's names with matching shapes.
pub fn load<R: Real>(store: &mut ParamStore<R>, r: &mut impl Read) -> Result<()> {
    let records = read_records(r)?;
    if records.len() != store.len() {
        return Err(Error::Contract(format!(
            "checkpoint holds {} tensors, registry expects {}",
            records.len(),
            store.len()
        )));
    }
    for (name, tensor) in records {
        let id = store
            .lookup(&name)
            .ok_or_else(|| Error::Contract(format!("checkpoint names unknown parameter {name}")))?;
        if store.get(id).shape() != tensor.shape() {
            return Err(Error::Contract(format!(
                "shape mismatch for {name}: file {:?}, registry {:?}",
                tensor.shape(),
                store.get(id).shape()
            )));
        }
        store.set(id, tensor.cast::<R>());
    }
    Ok(())
}

pub fn load_file<R: Real>(store: &mut ParamStore<R>, path: impl AsRef<Path>) -> Result<()> {
    let mut r = BufReader::new(File::open(path)?);
    load(store, &mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_store() -> ParamStore<f32> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        store.register_xavier("a.w", 3, 4, &mut rng);
        store.register_zeros("a.b", vec![3]);
        store.register_xavier("b.w", 2, 3, &mut rng);
        store
    }

    #[test]
    fn round_trip_is_bit_exact_in_f32() {
        let store = sample_store();
        let mut bytes = Vec::new();
        save(&store, &mut bytes).unwrap();
        let mut restored = sample_store();
        // Scramble so the load provably rewrites.
        let id = restored.lookup("a.w").unwrap();
        let shape = restored.get(id).shape().to_vec();
        restored.set(id, Tensor::zeros(shape));
        load(&mut restored, &mut bytes.as_slice()).unwrap();
        for (id_a, id_b) in store.ids().zip(restored.ids()) {
            let (a, b) = (store.get(id_a), restored.get(id_b));
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // And a second save of the restored store is byte-identical.
        let mut again = Vec::new();
        save(&restored, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn bad_magic_is_a_format_error_at_offset_zero() {
        let err = read_records(&mut &b"NOTPKT??"[..]).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, 0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncation_reports_the_failing_offset() {
        let store = sample_store();
        let mut bytes = Vec::new();
        save(&store, &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        let err = read_records(&mut bytes.as_slice()).unwrap_err();
        match err {
            Error::Format { offset, message } => {
                assert!(offset > 0);
                assert!(message.contains("truncated"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn name_mismatch_is_rejected() {
        let store = sample_store();
        let mut bytes = Vec::new();
        save(&store, &mut bytes).unwrap();
        let mut other = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        other.register_xavier("different", 3, 4, &mut rng);
        other.register_zeros("a.b", vec![3]);
        other.register_xavier("b.w", 2, 3, &mut rng);
        assert!(load(&mut other, &mut bytes.as_slice()).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let store = sample_store();
        let mut bytes = Vec::new();
        save(&store, &mut bytes).unwrap();
        let mut other = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        other.register_xavier("a.w", 4, 3, &mut rng);
        other.register_zeros("a.b", vec![3]);
        other.register_xavier("b.w", 2, 3, &mut rng);
        assert!(load(&mut other, &mut bytes.as_slice()).is_err());
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let store = sample_store();
        let mut bytes = Vec::new();
        save(&store, &mut bytes).unwrap();
        let mut other = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        other.register_xavier("a.w", 3, 4, &mut rng);
        assert!(load(&mut other, &mut bytes.as_slice()).is_err());
    }

    #[test]
    fn f64_store_loads_f32_payload_exactly() {
        let store = sample_store();
        let mut bytes = Vec::new();
        save(&store, &mut bytes).unwrap();
        let mut wide = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        wide.register_xavier("a.w", 3, 4, &mut rng);
        wide.register_zeros("a.b", vec![3]);
        wide.register_xavier("b.w", 2, 3, &mut rng);
        load(&mut wide, &mut bytes.as_slice()).unwrap();
        for (id32, id64) in store.ids().zip(wide.ids()) {
            for (x, y) in store.get(id32).data().iter().zip(wide.get(id64).data()) {
                assert_eq!(*x as f64, *y);
            }
        }
    }
}
