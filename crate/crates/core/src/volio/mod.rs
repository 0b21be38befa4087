//! Volume ingestion, resampling, the MIAV format and synthetic data.

mod index;
mod miav;
mod preprocess;
mod resample;
mod slices;
mod synth;
mod volume;

pub use index::{
    class_names, infer_variant, load_volume, parse_label, DatasetIndex, Sample, Split, DETECTION_CLASSES,
    SEVERITY_CLASSES,
};
pub use miav::{decode_miav, encode_miav, is_miav, read_miav, write_miav, MIAV_MAGIC, MIAV_VERSION};
pub use preprocess::preprocess_tree;
pub use resample::{resample_line, resample_volume};
pub use slices::{decode_slice, list_slices, load_slice_stack, natural_cmp, write_pgm, write_slice_stack};
pub use synth::{generate_synthetic, synthetic_volume, write_synthetic_dataset, DEFAULT_SYNTH_DIMS};
pub use volume::{IntensityScale, Volume};
