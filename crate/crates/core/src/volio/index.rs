//! Dataset index files: one `path<TAB>label` line per sample.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::Variant;

use super::miav::read_miav;
use super::slices::load_slice_stack;
use super::volume::Volume;

pub const DETECTION_CLASSES: [&str; 2] = ["covid", "non-covid"];
pub const SEVERITY_CLASSES: [&str; 4] = ["mild", "moderate", "severe", "critical"];

pub fn class_names(variant: Variant) -> &'static [&'static str] {
    match variant {
        Variant::Detection => &DETECTION_CLASSES,
        Variant::Severity => &SEVERITY_CLASSES,
    }
}

/// Accepts a class name or a class index.
pub fn parse_label(variant: Variant, s: &str) -> Result<usize> {
    let names = class_names(variant);
    if let Some(i) = names.iter().position(|n| *n == s) {
        return Ok(i);
    }
    match s.parse::<usize>() {
        Ok(i) if i < names.len() => Ok(i),
        _ => Err(Error::LabelSpace(format!(
            "label {s:?} is not one of {names:?} ({} task)",
            variant.name()
        ))),
    }
}

/// The label space whose class names contain every name in `names`.
pub fn infer_variant<'a>(names: impl IntoIterator<Item = &'a str> + Clone) -> Result<Variant> {
    for v in [Variant::Detection, Variant::Severity] {
        if names.clone().into_iter().all(|n| class_names(v).contains(&n)) {
            return Ok(v);
        }
    }
    Err(Error::LabelSpace(format!(
        "class names {:?} match neither {DETECTION_CLASSES:?} nor {SEVERITY_CLASSES:?}",
        names.into_iter().collect::<Vec<_>>()
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }

    /// Index file name inside a dataset directory.
    pub fn file_name(self) -> String {
        format!("{}.tsv", self.name())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub path: PathBuf,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetIndex {
    pub variant: Variant,
    pub split: Split,
    pub samples: Vec<Sample>,
}

impl DatasetIndex {
    pub fn new(variant: Variant, split: Split, samples: Vec<Sample>) -> Result<Self> {
        let k = variant.num_classes();
        let mut seen = HashSet::new();
        for s in &samples {
            if s.label >= k {
                return Err(Error::LabelSpace(format!(
                    "label {} outside the {} classes of the {} task",
                    s.label,
                    k,
                    variant.name()
                )));
            }
            if !seen.insert(&s.path) {
                return Err(Error::Dataset(format!("duplicate sample path {}", s.path.display())));
            }
        }
        Ok(Self { variant, split, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.variant.num_classes()];
        for s in &self.samples {
            c[s.label] += 1;
        }
        c
    }

    /// Relative paths are resolved against the index file's directory.
    pub fn parse(text: &str, base: &Path, variant: Variant, split: Split) -> Result<Self> {
        let mut samples = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (p, l) = line
                .split_once('\t')
                .ok_or_else(|| Error::Dataset(format!("line {}: expected path<TAB>label", n + 1)))?;
            let label = parse_label(variant, l.trim()).map_err(|e| match e {
                Error::LabelSpace(m) => Error::LabelSpace(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
            let p = Path::new(p);
            let path = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
            samples.push(Sample { path, label });
        }
        Self::new(variant, split, samples)
    }

    pub fn load(path: impl AsRef<Path>, variant: Variant, split: Split) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, variant, split)
    }

    /// Reads `<dir>/<split>.tsv`.
    pub fn load_split(dir: impl AsRef<Path>, variant: Variant, split: Split) -> Result<Self> {
        Self::load(dir.as_ref().join(split.file_name()), variant, split)
    }

    /// Paths under the index's directory are written relative to it.
    pub fn to_text(&self, base: &Path) -> String {
        let names = class_names(self.variant);
        let mut s = String::new();
        for smp in &self.samples {
            let p = smp.path.strip_prefix(base).unwrap_or(&smp.path);
            writeln!(s, "{}\t{}", p.display(), names[smp.label]).unwrap();
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        fs::write(path, self.to_text(base)).map_err(|e| Error::io(path, e))
    }
}

/// Loads a sample: a directory is read as a slice stack, a file as MIAV.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    if path.is_dir() {
        load_slice_stack(path)
    } else {
        read_miav(path)
    }
}
