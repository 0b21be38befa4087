use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use image::DynamicImage;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::volume::{IntensityScale, Volume};

const SLICE_EXTENSIONS: [&str; 3] = ["pgm", "pnm", "png"];

/// Compares names treating digit runs as numbers, so `slice2 < slice10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn chunks(s: &str) -> Vec<(bool, &str)> {
        let mut out = Vec::new();
        let mut start = 0;
        let bytes = s.as_bytes();
        for i in 1..=bytes.len() {
            if i == bytes.len() || bytes[i].is_ascii_digit() != bytes[start].is_ascii_digit() {
                out.push((bytes[start].is_ascii_digit(), &s[start..i]));
                start = i;
            }
        }
        out
    }
    let (ca, cb) = (chunks(a), chunks(b));
    for (&(da, sa), &(db, sb)) in ca.iter().zip(&cb) {
        let ord = if da && db {
            let (ta, tb) = (sa.trim_start_matches('0'), sb.trim_start_matches('0'));
            ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb))
        } else {
            sa.cmp(sb)
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    ca.len().cmp(&cb.len()).then_with(|| a.cmp(b))
}

fn is_slice_file(p: &Path) -> bool {
    p.is_file()
        && !p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.'))
        && p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| SLICE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Slice image files in natural filename order.
pub fn list_slices(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| is_slice_file(p))
        .collect();
    files.sort_by(|a, b| {
        let name = |p: &PathBuf| p.file_name().unwrap().to_string_lossy().into_owned();
        natural_cmp(&name(a), &name(b))
    });
    Ok(files)
}

/// Decodes one slice to 0..=255 grayscale; 8-bit gray is taken verbatim.
pub fn decode_slice(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(f32::from).collect(),
        other => other
            .to_luma32f()
            .into_raw()
            .into_iter()
            .map(|v| (v * 255.0).clamp(0.0, 255.0))
            .collect(),
    };
    Ok((h, w, data))
}

pub fn load_slice_stack(dir: impl AsRef<Path>) -> Result<Volume> {
    let dir = dir.as_ref();
    let files = list_slices(dir)?;
    if files.is_empty() {
        return Err(Error::Dataset(format!("no slice images in {}", dir.display())));
    }
    let mut data = Vec::new();
    let mut hw = None;
    for f in &files {
        let (h, w, px) = decode_slice(f)?;
        match hw {
            None => hw = Some((h, w)),
            Some(prev) if prev != (h, w) => {
                return Err(Error::Dataset(format!(
                    "{} is {h}x{w}, earlier slices are {}x{}",
                    f.display(),
                    prev.0,
                    prev.1
                )))
            }
            _ => {}
        }
        data.extend(px);
    }
    let (h, w) = hw.unwrap();
    let voxels = Tensor::from_vec(&[files.len(), h, w], data)?;
    Volume::new(voxels, IntensityScale::Raw255, dir.display().to_string())
}

/// Writes one `(H, W)` plane as binary 8-bit PGM, rounding and clamping to 0..=255.
pub fn write_pgm(path: impl AsRef<Path>, h: usize, w: usize, plane: &[f32]) -> Result<()> {
    use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
    use image::{ExtendedColorType, ImageEncoder};
    let path = path.as_ref();
    if plane.len() != h * w {
        return Err(Error::Shape(format!("{} pixels for a {h}x{w} plane", plane.len())));
    }
    let bytes: Vec<u8> = plane.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    PnmEncoder::new(std::io::BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&bytes, w as u32, h as u32, ExtendedColorType::L8)
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Writes every depth slice of a raw volume as `{prefix}{index}.pgm` in `dir`.
pub fn write_slice_stack(dir: impl AsRef<Path>, vol: &Volume) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let [d, h, w] = vol.dims();
    let scale = 255.0 / vol.scale.max();
    for z in 0..d {
        let plane: Vec<f32> = vol.voxels.data()[z * h * w..(z + 1) * h * w].iter().map(|v| v * scale).collect();
        write_pgm(dir.join(format!("{z}.pgm")), h, w, &plane)?;
    }
    Ok(())
}
