//! Parameter checkpoint file: versioned header (magic, format version,
//! layer-spec digest, seed, parameter count) followed by the parameters as a
//! little-endian f64 stream.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{build_network, Dims, LayerSpec, Network};

const MAGIC: &[u8; 4] = b"NGCK";
const VERSION: u32 = 1;

fn spec_digest(input: &Dims, specs: &[LayerSpec]) -> u64 {
    // FNV-1a over the debug rendering; stable within the crate, which is all
    // the digest has to guarantee.
    let text = format!("{input:?}|{specs:?}");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&spec_digest(&net.input_dims(), net.specs()).to_le_bytes())?;
    w.write_all(&net.seed().to_le_bytes())?;
    w.write_all(&(net.param_count() as u64).to_le_bytes())?;
    for params in net.params().iter().flatten() {
        for &v in params.weights.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        for &v in params.bias.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, input: Dims, specs: &[LayerSpec]) -> Result<Network> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut offset = 0u64;

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, &mut offset, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Data {
            offset: 0,
            message: format!("bad checkpoint magic {magic:?}"),
        });
    }
    let version = read_u32(&mut r, &mut offset, "version")?;
    if version != VERSION {
        return Err(Error::Data {
            offset: 4,
            message: format!("unsupported checkpoint version {version}"),
        });
    }
    let digest = read_u64(&mut r, &mut offset, "spec digest")?;
    if digest != spec_digest(&input, specs) {
        return Err(Error::Data {
            offset: 8,
            message: "checkpoint was written for different layer specs".into(),
        });
    }
    let seed = read_u64(&mut r, &mut offset, "seed")?;
    let count = read_u64(&mut r, &mut offset, "parameter count")? as usize;

    let mut net = build_network(input, specs, seed)?;
    if net.param_count() != count {
        return Err(Error::Data {
            offset: 24,
            message: format!(
                "checkpoint has {count} parameters, specs need {}",
                net.param_count()
            ),
        });
    }
    let mut buf = [0u8; 8];
    for params in net.params_mut().iter_mut().flatten() {
        for v in params.weights.data_mut() {
            read_exact(&mut r, &mut buf, &mut offset, "parameter stream")?;
            *v = f64::from_le_bytes(buf);
        }
        for v in params.bias.data_mut() {
            read_exact(&mut r, &mut buf, &mut offset, "parameter stream")?;
            *v = f64::from_le_bytes(buf);
        }
    }
    Ok(net)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], offset: &mut u64, what: &str) -> Result<()> {
    let at = *offset;
    r.read_exact(buf).map_err(|e| Error::Data {
        offset: at,
        message: format!("truncated reading {what}: {e}"),
    })?;
    *offset += buf.len() as u64;
    Ok(())
}

fn read_u32(r: &mut impl Read, offset: &mut u64, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, offset, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read, offset: &mut u64, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, offset, what)?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::SigmoidCfg;

    fn toy_specs() -> Vec<LayerSpec> {
        vec![
            LayerSpec::conv2d(2, 3),
            LayerSpec::relu(),
            LayerSpec::Flatten,
            LayerSpec::dense(3),
            LayerSpec::custom_sigmoid(SigmoidCfg::plain()),
        ]
    }

    #[test]
    fn round_trip() {
        let dir = std::env::temp_dir().join("negotiated-checkpoint-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.ckpt");

        let specs = toy_specs();
        let net = build_network(Dims::image(1, 6, 6), &specs, 21).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let loaded = load_checkpoint(&path, Dims::image(1, 6, 6), &specs).unwrap();
        assert_eq!(net.params(), loaded.params());
        assert_eq!(net.seed(), loaded.seed());
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn digest_mismatch_is_rejected() {
        let dir = std::env::temp_dir().join("negotiated-checkpoint-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mismatch.ckpt");

        let specs = toy_specs();
        let net = build_network(Dims::image(1, 6, 6), &specs, 0).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let other = vec![LayerSpec::Flatten, LayerSpec::dense(3)];
        let err = load_checkpoint(&path, Dims::image(1, 6, 6), &other).unwrap_err();
        assert!(matches!(err, Error::Data { .. }));
        std::fs::remove_file(&path).unwrap();
    }
}
