//! Versioned binary parameter files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"ASQN"
//! version u32            (currently 1)
//! input   u32 c, u32 h, u32 w
//! layers  u32 count, then per layer: u8 tag, 5 x u32 fields
//! buffers u32 count, then per buffer: u64 length, length x f32
//! ```

use std::io::{Read, Write};

use crate::error::{Result, TensorError};
use crate::network::{LayerSpec, Network, SampleShape};
use crate::tensor::Scalar;

pub const MAGIC: &[u8; 4] = b"ASQN";
pub const VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> TensorError {
    TensorError::Checkpoint(msg.into())
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| bad("value does not fit in u32"))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn encode(spec: &LayerSpec) -> (u8, [usize; 5]) {
    match *spec {
        LayerSpec::Conv { filters, kernel, stride, padding } => (1, [filters, kernel, stride, padding, 0]),
        LayerSpec::Deconv { filters, kernel, stride, padding, output_padding } => {
            (2, [filters, kernel, stride, padding, output_padding])
        }
        LayerSpec::MaxPool2 => (3, [0; 5]),
        LayerSpec::Upsample2 { out_h, out_w } => (4, [out_h, out_w, 0, 0, 0]),
        LayerSpec::Dense { units } => (5, [units, 0, 0, 0, 0]),
        LayerSpec::Reshape { c, h, w } => (6, [c, h, w, 0, 0]),
        LayerSpec::Relu => (7, [0; 5]),
    }
}

fn decode(tag: u8, f: [usize; 5]) -> Result<LayerSpec> {
    Ok(match tag {
        1 => LayerSpec::Conv { filters: f[0], kernel: f[1], stride: f[2], padding: f[3] },
        2 => LayerSpec::Deconv { filters: f[0], kernel: f[1], stride: f[2], padding: f[3], output_padding: f[4] },
        3 => LayerSpec::MaxPool2,
        4 => LayerSpec::Upsample2 { out_h: f[0], out_w: f[1] },
        5 => LayerSpec::Dense { units: f[0] },
        6 => LayerSpec::Reshape { c: f[0], h: f[1], w: f[2] },
        7 => LayerSpec::Relu,
        t => return Err(bad(format!("unknown layer tag {t}"))),
    })
}

pub fn write_network<T: Scalar>(net: &Network<T>, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let inp = net.input_shape();
    for v in [inp.c, inp.h, inp.w] {
        put_u32(w, v)?;
    }
    let specs = net.specs();
    put_u32(w, specs.len())?;
    for s in &specs {
        let (tag, fields) = encode(s);
        w.write_all(&[tag])?;
        for v in fields {
            put_u32(w, v)?;
        }
    }
    let buffers: Vec<(&[T], &[T])> = net
        .layers()
        .iter()
        .filter(|l| l.spec().has_params())
        .map(|l| (l.weight(), l.bias()))
        .collect();
    put_u32(w, buffers.len() * 2)?;
    for buf in buffers.iter().flat_map(|(a, b)| [*a, *b]) {
        w.write_all(&(buf.len() as u64).to_le_bytes())?;
        for v in buf {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_network<T: Scalar>(r: &mut impl Read) -> Result<Network<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a network checkpoint (bad magic)"));
    }
    let version = get_u32(r)? as u32;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let input = SampleShape::new(get_u32(r)?, get_u32(r)?, get_u32(r)?);
    let n_layers = get_u32(r)?;
    let mut specs = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let mut f = [0usize; 5];
        for v in &mut f {
            *v = get_u32(r)?;
        }
        specs.push(decode(tag[0], f)?);
    }
    let n_buf = get_u32(r)?;
    let mut buffers = Vec::with_capacity(n_buf);
    for _ in 0..n_buf {
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut raw = vec![0u8; len.checked_mul(4).ok_or_else(|| bad("buffer length overflow"))?];
        r.read_exact(&mut raw)?;
        buffers.push(
            raw.chunks_exact(4)
                .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                .collect(),
        );
    }
    Network::from_parts(input, &specs, buffers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Shape4, Tensor4};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> Network<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let specs = [
            LayerSpec::Conv { filters: 3, kernel: 3, stride: 2, padding: 1 },
            LayerSpec::Relu,
            LayerSpec::Dense { units: 6 },
            LayerSpec::Reshape { c: 6, h: 1, w: 1 },
            LayerSpec::Deconv { filters: 1, kernel: 4, stride: 2, padding: 0, output_padding: 1 },
        ];
        Network::new(SampleShape::new(2, 5, 5), &specs, &mut rng).unwrap()
    }

    #[test]
    fn round_trip_preserves_outputs() {
        let a = net();
        let mut bytes = Vec::new();
        write_network(&a, &mut bytes).unwrap();
        let b: Network<f32> = read_network(&mut bytes.as_slice()).unwrap();
        assert_eq!(a.specs(), b.specs());
        let x = Tensor4::from_fn(Shape4::new(2, 2, 5, 5), |n, c, h, w| (n + c + h * w) as f32 * 0.1);
        assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
    }

    #[test]
    fn rejects_corrupt_files() {
        let mut bytes = Vec::new();
        write_network(&net(), &mut bytes).unwrap();
        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(read_network::<f32>(&mut wrong_magic.as_slice()).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(read_network::<f32>(&mut wrong_version.as_slice()).is_err());
        let truncated = &bytes[..bytes.len() - 3];
        assert!(read_network::<f32>(&mut &truncated[..]).is_err());
    }
}
