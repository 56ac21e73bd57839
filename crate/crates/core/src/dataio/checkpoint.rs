//! Network checkpoints: `DHCKPT\0\0`, version, the scalar width the
//! network was trained in, the architecture as TOML, the hash-head origin,
//! then every named parameter block as f64, and a CRC-32 trailer.

use std::fs;
use std::path::Path;

use super::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::network::{HeadOrigin, NetConfig, Network};
use crate::rng::Rng;
use crate::scalar::{cst, Scalar};

const MAGIC: &[u8; 8] = b"DHCKPT\0\0";
const VERSION: u32 = 1;
const NO_HEAD: u8 = 255;

pub fn write_checkpoint<T: Scalar>(net: &Network<T>) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new(MAGIC, VERSION);
    w.u8(T::BITS);
    let toml = net.state_config().to_toml();
    w.u32(toml.len() as u32);
    w.bytes(toml.as_bytes());
    w.u8(net.hash_head.as_ref().map_or(NO_HEAD, |h| h.origin.tag()));
    let blocks = net.named_params();
    w.u32(blocks.len() as u32);
    for (name, t) in blocks {
        w.u16(name.len() as u16);
        w.bytes(name.as_bytes());
        w.u8(t.shape().len() as u8);
        for &d in t.shape() {
            w.u64(d as u64);
        }
        for &v in t.data() {
            w.f64(v.to_f64().unwrap_or(f64::NAN));
        }
    }
    Ok(w.finish())
}

pub fn read_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Network<T>> {
    let mut r = ByteReader::open(bytes, MAGIC, VERSION)?;
    let _trained_bits = r.u8()?;
    let toml_len = r.u32()? as usize;
    let at = r.offset();
    let toml = std::str::from_utf8(r.take(toml_len)?)
        .map_err(|_| Error::format(at, "architecture is not UTF-8"))?;
    let config = NetConfig::from_toml(toml).map_err(|e| Error::format(at, e.to_string()))?;
    let origin_at = r.offset();
    let origin = match r.u8()? {
        NO_HEAD => None,
        tag => Some(
            HeadOrigin::from_tag(tag)
                .ok_or_else(|| Error::format(origin_at, format!("unknown head origin {tag}")))?,
        ),
    };
    let mut net = Network::<T>::new(&config, &mut Rng::new(0))
        .map_err(|e| Error::format(at, e.to_string()))?;
    if origin.is_some() != net.hash_head.is_some() {
        return Err(Error::format(
            origin_at,
            "head origin disagrees with architecture",
        ));
    }
    let count_at = r.offset();
    let count = r.u32()? as usize;
    let mut blocks = net.named_params_mut();
    if count != blocks.len() {
        return Err(Error::format(
            count_at,
            format!(
                "{count} parameter blocks, architecture has {}",
                blocks.len()
            ),
        ));
    }
    for (name, tensor) in blocks.iter_mut() {
        let at = r.offset();
        let len = r.u16()? as usize;
        let stored = r.take(len)?;
        if stored != name.as_bytes() {
            return Err(Error::format(at, format!("expected block {name}")));
        }
        let ndims = r.u8()? as usize;
        let dims = (0..ndims)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if dims != tensor.shape() {
            return Err(Error::format(
                at,
                format!(
                    "block {name} has shape {dims:?}, expected {:?}",
                    tensor.shape()
                ),
            ));
        }
        for v in tensor.data_mut() {
            *v = cst(r.f64()?);
        }
    }
    drop(blocks);
    r.expect_end()?;
    if let (Some(h), Some(o)) = (net.hash_head.as_mut(), origin) {
        h.origin = o;
    }
    Ok(net)
}

pub fn save_checkpoint<T: Scalar>(net: &Network<T>, path: &Path) -> Result<()> {
    fs::write(path, write_checkpoint(net)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Network<T>> {
    read_checkpoint(&fs::read(path)?)
}
