//! PDRT tensor container: the on-disk format for every array artifact.
//!
//! Layout (all little-endian):
//! - magic `PDRT` (4 bytes)
//! - dtype code u8 (0 = f32, 1 = f64)
//! - ndim u8
//! - 2 padding bytes (header is 8 bytes total)
//! - ndim dimension sizes as u32
//! - row-major payload
//!
//! Reads and writes are bit-exact: a write/read roundtrip reproduces the
//! tensor buffer byte for byte.

use std::fs;
use std::path::Path;

use crate::ad::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{Dtype, Scalar};

pub const MAGIC: &[u8; 4] = b"PDRT";

pub fn encode<T: Scalar>(tensor: &Tensor<T>) -> Vec<u8> {
    let shape = tensor.shape();
    assert!(shape.len() <= u8::MAX as usize, "too many dimensions: {}", shape.len());
    let mut out = Vec::with_capacity(8 + 4 * shape.len() + tensor.len() * T::DTYPE.size_bytes());
    out.extend_from_slice(MAGIC);
    out.push(T::DTYPE.code());
    out.push(shape.len() as u8);
    out.extend_from_slice(&[0u8, 0u8]);
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in tensor.data().iter() {
        v.write_le(&mut out);
    }
    out
}

pub fn decode<T: Scalar>(bytes: &[u8], origin: &Path) -> Result<Tensor<T>> {
    let fail = |detail: String| Error::Format { what: "PDRT container", path: origin.to_path_buf(), detail };
    if bytes.len() < 8 || &bytes[0..4] != MAGIC {
        return Err(fail("missing PDRT magic".into()));
    }
    let dtype = Dtype::from_code(bytes[4]).ok_or_else(|| fail(format!("unknown dtype code {}", bytes[4])))?;
    if dtype != T::DTYPE {
        return Err(fail(format!("dtype is {:?}, expected {:?}", dtype, T::DTYPE)));
    }
    let ndim = bytes[5] as usize;
    let dims_end = 8 + 4 * ndim;
    if bytes.len() < dims_end {
        return Err(fail("truncated dimension table".into()));
    }
    let mut shape = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let off = 8 + 4 * i;
        let d = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        shape.push(d);
    }
    let numel: usize = shape.iter().product();
    let elem = T::DTYPE.size_bytes();
    if bytes.len() != dims_end + numel * elem {
        return Err(fail(format!(
            "payload is {} bytes, shape {:?} implies {}",
            bytes.len() - dims_end,
            shape,
            numel * elem
        )));
    }
    let mut data = Vec::with_capacity(numel);
    for i in 0..numel {
        let off = dims_end + i * elem;
        data.push(T::read_le(&bytes[off..off + elem]));
    }
    Ok(Tensor::from_vec(data, &shape))
}

/// Dtype stored in a container without decoding the payload.
pub fn peek_dtype(bytes: &[u8]) -> Option<Dtype> {
    if bytes.len() < 8 || &bytes[0..4] != MAGIC {
        return None;
    }
    Dtype::from_code(bytes[4])
}

pub fn write_file<T: Scalar>(path: &Path, tensor: &Tensor<T>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode(tensor)).map_err(|e| Error::io(path, e))
}

pub fn read_file<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let t = Tensor::<f32>::from_vec(vec![1.0, -0.5, 3.25e-7, f32::MIN_POSITIVE], &[2, 2]);
        let bytes = encode(&t);
        assert_eq!(&bytes[0..4], b"PDRT");
        assert_eq!(bytes[4], 0);
        assert_eq!(bytes[5], 2);
        let back: Tensor<f32> = decode(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back.shape(), t.shape());
        // compare raw bits, not float equality
        let bits_a: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
    }

    #[test]
    fn scalar_tensor_roundtrips() {
        let t = Tensor::<f64>::scalar(42.0);
        let back: Tensor<f64> = decode(&encode(&t), Path::new("mem")).unwrap();
        assert_eq!(back.shape(), &[] as &[usize]);
        assert_eq!(back.item(), 42.0);
    }

    #[test]
    fn dtype_mismatch_is_rejected() {
        let t = Tensor::<f32>::zeros(&[3]);
        let err = decode::<f64>(&encode(&t), Path::new("mem")).unwrap_err();
        assert!(err.to_string().contains("dtype"));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let t = Tensor::<f32>::zeros(&[3]);
        let mut bytes = encode(&t);
        bytes.pop();
        assert!(decode::<f32>(&bytes, Path::new("mem")).is_err());
    }
}
