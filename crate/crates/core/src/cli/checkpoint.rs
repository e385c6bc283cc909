//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DRFT"  u32 version  u32 entry count
//! per entry: u32 name length, UTF-8 name ("layer1.weight", "layer1.bias", ...),
//!            u32 rank, u64 extents, f64 parameters, f64 reference values
//! u64 seed  u64 config hash
//! u32 input rank, u64 input extents
//! u32 architecture length, UTF-8 architecture string
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Tensor;
use crate::nn::{parse_architecture, LayerParams, Network};

pub const MAGIC: &[u8; 4] = b"DRFT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub network: Network,
    pub config_hash: u64,
}

fn entry_name(j: usize, bias: bool) -> String {
    format!(
        "{}.{}",
        Network::param_layer_name(j),
        if bias { "bias" } else { "weight" }
    )
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensor_data(out: &mut Vec<u8>, t: &Tensor) {
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(net: &Network, config_hash: u64) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let params = net.params();
    put_u32(&mut out, params.len() * 2);
    for (j, (p, r)) in params.iter().zip(net.reference()).enumerate() {
        for (bias, t, t0) in [(false, &p.weight, &r.weight), (true, &p.bias, &r.bias)] {
            let name = entry_name(j, bias);
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.shape().len());
            for &e in t.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            put_tensor_data(&mut out, t);
            put_tensor_data(&mut out, t0);
        }
    }
    out.extend_from_slice(&net.seed().to_le_bytes());
    out.extend_from_slice(&config_hash.to_le_bytes());
    put_u32(&mut out, net.input_shape().len());
    for &e in net.input_shape() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    let arch = net.architecture();
    put_u32(&mut out, arch.len());
    out.extend_from_slice(arch.as_bytes());
    out
}

struct Reader<'a> {
    name: String,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            source_name: self.name.clone(),
            offset: self.pos,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| self.err(format!("truncated: need {n} more bytes")))?;
        let b = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(b)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        let start = self.pos;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Parse {
            source_name: self.name.clone(),
            offset: start,
            message: "invalid UTF-8".into(),
        })
    }

    fn extents(&mut self) -> Result<Vec<usize>> {
        let rank = self.u32()?;
        if rank == 0 || rank > 8 {
            return Err(self.err(format!("implausible rank {rank}")));
        }
        (0..rank)
            .map(|_| {
                let e = self.u64()?;
                usize::try_from(e)
                    .ok()
                    .filter(|&e| e > 0)
                    .ok_or_else(|| self.err(format!("bad extent {e}")))
            })
            .collect()
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n.checked_mul(8).ok_or_else(|| self.err("size overflow"))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode(name: &str, bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader {
        name: name.to_string(),
        bytes,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        r.pos = 0;
        return Err(r.err("not a checkpoint (bad magic)"));
    }
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    if count % 2 != 0 {
        return Err(r.err(format!("odd entry count {count}")));
    }
    let mut params = Vec::with_capacity(count / 2);
    let mut reference = Vec::with_capacity(count / 2);
    let mut pending: Option<(Tensor, Tensor)> = None;
    for i in 0..count {
        let j = i / 2;
        let bias = i % 2 == 1;
        let at = r.pos;
        let entry = r.string()?;
        if entry != entry_name(j, bias) {
            return Err(Error::Parse {
                source_name: name.to_string(),
                offset: at,
                message: format!("expected entry {}, found '{entry}'", entry_name(j, bias)),
            });
        }
        let shape = r.extents()?;
        let n: usize = shape.iter().product();
        let value = Tensor::new(shape.clone(), r.floats(n)?)?;
        let refv = Tensor::new(shape, r.floats(n)?)?;
        match pending.take() {
            None => pending = Some((value, refv)),
            Some((w, w0)) => {
                params.push(LayerParams {
                    weight: w,
                    bias: value,
                });
                reference.push(LayerParams {
                    weight: w0,
                    bias: refv,
                });
            }
        }
    }
    let seed = r.u64()?;
    let config_hash = r.u64()?;
    let input = r.extents()?;
    let arch_at = r.pos;
    let arch = r.string()?;
    if r.pos != bytes.len() {
        return Err(r.err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let specs = parse_architecture(&arch).map_err(|e| Error::Parse {
        source_name: name.to_string(),
        offset: arch_at,
        message: format!("bad architecture: {e}"),
    })?;
    let mut network = Network::new(&input, &specs, seed)?;
    network.set_params(&params)?;
    network.set_reference(reference)?;
    Ok(Checkpoint {
        network,
        config_hash,
    })
}

pub fn save(path: &Path, net: &Network, config_hash: u64) -> Result<()> {
    fs::write(path, encode(net, config_hash)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&path.display().to_string(), &bytes)
}
