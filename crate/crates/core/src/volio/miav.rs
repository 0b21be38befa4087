//! MIAV raw volume files.
//!
//! ```text
//! magic "MIAV" | version u32 = 1 | dtype u8 (0 = f32) | D u32 | H u32 | W u32 | D*H*W f32
//! ```
//!
//! All integers and samples are little-endian. Volumes are stored on the
//! 0..=255 scale.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::volume::{IntensityScale, Volume};

pub const MIAV_MAGIC: &[u8; 4] = b"MIAV";
pub const MIAV_VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;
const HEADER_LEN: usize = 4 + 4 + 1 + 12;

pub fn encode_miav(vol: &Volume) -> Vec<u8> {
    let raw = match vol.scale {
        IntensityScale::Raw255 => vol.voxels.clone(),
        IntensityScale::Normalized01 => vol.voxels.map(|v| v * 255.0),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * raw.len());
    out.extend_from_slice(MIAV_MAGIC);
    out.extend_from_slice(&MIAV_VERSION.to_le_bytes());
    out.push(DTYPE_F32);
    for e in vol.dims() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for v in raw.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_miav(buf: &[u8], source: &Path) -> Result<Volume> {
    if buf.len() < 4 || &buf[..4] != MIAV_MAGIC {
        return Err(Error::NotMiav(source.to_path_buf()));
    }
    if buf.len() < HEADER_LEN {
        return Err(Error::Truncated(format!(
            "{}: header needs {HEADER_LEN} bytes, file has {}",
            source.display(),
            buf.len()
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != MIAV_VERSION {
        return Err(Error::Version {
            found: version,
            expected: MIAV_VERSION,
        });
    }
    if buf[8] != DTYPE_F32 {
        return Err(Error::Malformed(format!("{}: unknown dtype {}", source.display(), buf[8])));
    }
    let dims = [u32_at(9) as usize, u32_at(13) as usize, u32_at(17) as usize];
    let expected = dims
        .iter()
        .try_fold(4usize, |a, &e| a.checked_mul(e))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Malformed(format!("{}: dims {dims:?} overflow", source.display())))?;
    if buf.len() < expected {
        return Err(Error::Truncated(format!(
            "{}: header declares {dims:?} ({expected} bytes), file has {}",
            source.display(),
            buf.len()
        )));
    }
    if buf.len() > expected {
        return Err(Error::Malformed(format!(
            "{}: {} trailing bytes",
            source.display(),
            buf.len() - expected
        )));
    }
    let data = buf[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let voxels = Tensor::from_vec(&dims, data).map_err(|e| Error::Malformed(format!("{}: {e}", source.display())))?;
    Volume::new(voxels, IntensityScale::Raw255, source.display().to_string())
        .map_err(|e| Error::Malformed(format!("{}: {e}", source.display())))
}

pub fn write_miav(vol: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_miav(vol)).map_err(|e| Error::io(path, e))
}

pub fn read_miav(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_miav(&buf, path)
}

/// True when the file starts with the MIAV magic.
pub fn is_miav(path: &Path) -> bool {
    use std::io::Read;
    let mut head = [0u8; 4];
    fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut head))
        .is_ok()
        && &head == MIAV_MAGIC
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random(seed: u64, dims: [usize; 3]) -> Volume {
        let mut rng = Rng::new(seed);
        let data = (0..dims.iter().product()).map(|_| (rng.unit() * 255.0) as f32).collect();
        Volume::new(Tensor::from_vec(&dims, data).unwrap(), IntensityScale::Raw255, "r").unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for s in 0..100 {
            let mut rng = Rng::new(1000 + s);
            let dims = [1 + rng.below(4), 1 + rng.below(9), 1 + rng.below(9)];
            let v = random(s, dims);
            let p = dir.path().join("v.miav");
            write_miav(&v, &p).unwrap();
            let back = read_miav(&p).unwrap();
            assert_eq!(
                back.voxels.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                v.voxels.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
            assert_eq!(back.dims(), dims);
        }
    }

    #[test]
    fn header_bytes() {
        let v = Volume::new(Tensor::full(&[1, 1, 2], 1.0f32).unwrap(), IntensityScale::Raw255, "").unwrap();
        let b = encode_miav(&v);
        assert_eq!(&b[..9], b"MIAV\x01\0\0\0\0");
        assert_eq!(&b[9..21], [1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(b.len(), 29);
    }

    #[test]
    fn error_contract() {
        let p = Path::new("x.miav");
        let b = encode_miav(&random(1, [2, 3, 4]));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(decode_miav(&bad, p), Err(Error::NotMiav(_))));
        assert!(matches!(decode_miav(&b[..b.len() - 1], p), Err(Error::Truncated(_))));
        assert!(matches!(decode_miav(&b[..10], p), Err(Error::Truncated(_))));
        let mut v2 = b.clone();
        v2[4] = 2;
        assert!(matches!(decode_miav(&v2, p), Err(Error::Version { found: 2, expected: 1 })));
        let mut big = b.clone();
        big[9] = 200;
        assert!(matches!(decode_miav(&big, p), Err(Error::Truncated(_))));
    }
}
