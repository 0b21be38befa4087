//! Offline conversion of `<split>/<class>/<scan>/<slices>` trees to resampled MIAV files.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::index::{class_names, infer_variant, DatasetIndex, Sample, Split};
use super::miav::write_miav;
use super::resample::resample_volume;
use super::slices::{load_slice_stack, natural_cmp};

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    out.sort_by(|a, b| {
        natural_cmp(
            &a.file_name().unwrap().to_string_lossy(),
            &b.file_name().unwrap().to_string_lossy(),
        )
    });
    Ok(out)
}

fn dir_name(p: &Path) -> String {
    p.file_name().unwrap().to_string_lossy().into_owned()
}

struct Job {
    split: Split,
    label: usize,
    input: PathBuf,
    output: PathBuf,
}

/// Loads, resamples to `target` and writes every scan, running at most
/// `jobs` scans at once. Output names depend only on the input tree. Writes
/// one index file per split found and returns the indexes.
pub fn preprocess_tree(
    input: impl AsRef<Path>,
    output: impl AsRef<Path>,
    target: [usize; 3],
    jobs: usize,
) -> Result<Vec<DatasetIndex>> {
    let (input, output) = (input.as_ref(), output.as_ref());
    let splits: Vec<Split> = [Split::Train, Split::Validation]
        .into_iter()
        .filter(|s| input.join(s.name()).is_dir())
        .collect();
    if splits.is_empty() {
        return Err(Error::Dataset(format!(
            "{} has neither a train/ nor a validation/ directory",
            input.display()
        )));
    }
    let mut class_dirs = Vec::new();
    for &s in &splits {
        for c in sorted_subdirs(&input.join(s.name()))? {
            class_dirs.push((s, c));
        }
    }
    let names: Vec<String> = class_dirs.iter().map(|(_, c)| dir_name(c)).collect();
    let variant = infer_variant(names.iter().map(String::as_str))?;
    let mut work = Vec::new();
    for (split, cdir) in &class_dirs {
        let cname = dir_name(cdir);
        let label = class_names(variant).iter().position(|n| *n == cname).unwrap();
        for scan in sorted_subdirs(cdir)? {
            work.push(Job {
                split: *split,
                label,
                output: output.join(split.name()).join(&cname).join(format!("{}.miav", dir_name(&scan))),
                input: scan,
            });
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        work.par_iter().try_for_each(|job| -> Result<()> {
            let vol = resample_volume(&load_slice_stack(&job.input)?, target)?;
            let dir = job.output.parent().unwrap();
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            write_miav(&vol, &job.output)
        })
    })?;
    let mut out = Vec::new();
    for split in splits {
        let samples = work
            .iter()
            .filter(|j| j.split == split)
            .map(|j| Sample {
                path: j.output.clone(),
                label: j.label,
            })
            .collect();
        let idx = DatasetIndex::new(variant, split, samples)?;
        idx.save(output.join(split.file_name()))?;
        out.push(idx);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use crate::volio::{read_miav, write_pgm};

    #[test]
    fn tree_is_converted() {
        let src = tempfile::tempdir().unwrap();
        let dst = tempfile::tempdir().unwrap();
        for (class, scans) in [("covid", 2), ("non-covid", 1)] {
            for s in 0..scans {
                let dir = src.path().join("train").join(class).join(format!("scan{s}"));
                fs::create_dir_all(&dir).unwrap();
                for z in 0..(3 + s) {
                    write_pgm(dir.join(format!("{z}.pgm")), 5, 6, &[40.0 * z as f32; 30]).unwrap();
                }
            }
        }
        let idx = preprocess_tree(src.path(), dst.path(), [4, 8, 8], 2).unwrap();
        assert_eq!(idx.len(), 1);
        assert_eq!(idx[0].variant, Variant::Detection);
        assert_eq!(idx[0].class_counts(), [2, 1]);
        for s in &idx[0].samples {
            assert_eq!(read_miav(&s.path).unwrap().dims(), [4, 8, 8]);
        }
        let back = DatasetIndex::load_split(dst.path(), Variant::Detection, Split::Train).unwrap();
        assert_eq!(back, idx[0]);
    }
}
