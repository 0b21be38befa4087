use crate::error::{ensure, Error, Result};
use crate::layers::pooled_extent;

/// Default network input grid `(D, H, W)`.
pub const DEFAULT_INPUT_DIMS: [usize; 3] = [64, 224, 224];
pub const DROPOUT_RATE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Detection,
    Severity,
}

impl Variant {
    pub fn tag(self) -> u8 {
        match self {
            Variant::Detection => 0,
            Variant::Severity => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Variant::Detection),
            1 => Ok(Variant::Severity),
            t => Err(Error::Malformed(format!("unknown model variant tag {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Detection => "detection",
            Variant::Severity => "severity",
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            Variant::Detection => 2,
            Variant::Severity => 4,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detection" => Ok(Variant::Detection),
            "severity" => Ok(Variant::Severity),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlockSpec {
    pub filters: usize,
    pub l2_weight_factor: f64,
    pub batchnorm: bool,
    pub dropout: bool,
}

impl ConvBlockSpec {
    pub fn new(filters: usize, l2_weight_factor: f64, batchnorm: bool, dropout: bool) -> Self {
        Self {
            filters,
            l2_weight_factor,
            batchnorm,
            dropout,
        }
    }
}

/// Declarative description of a network: conv blocks (conv, ReLU, max-pool,
/// optional batch norm, optional dropout), global average pooling, dense
/// blocks (dense, ReLU, dropout), and a softmax output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub variant: Variant,
    pub conv_blocks: Vec<ConvBlockSpec>,
    pub fc_blocks: Vec<usize>,
    pub output_classes: usize,
    pub input_dims: [usize; 3],
    pub dropout_rate: f64,
}

impl ModelSpec {
    /// Six conv blocks `[64, 64, 128, 128, 256, 256]`, dense `[1024, 512]`, 2 classes.
    pub fn detection() -> Self {
        let blocks = [(64, 0.01), (64, 0.01), (128, 0.05), (128, 0.05), (256, 0.05), (256, 0.05)];
        Self {
            variant: Variant::Detection,
            conv_blocks: blocks
                .iter()
                .map(|&(f, l2)| ConvBlockSpec::new(f, l2, true, true))
                .collect(),
            fc_blocks: vec![1024, 512],
            output_classes: 2,
            input_dims: DEFAULT_INPUT_DIMS,
            dropout_rate: DROPOUT_RATE,
        }
    }

    /// Four conv+pool blocks `[64, 64, 128, 256]`, dense `[1024, 512]`, 4 classes.
    pub fn severity() -> Self {
        Self::severity_with(false)
    }

    /// Severity network with batch norm and dropout optionally re-enabled in
    /// every conv block.
    pub fn severity_with(block_extras: bool) -> Self {
        let blocks = [(64, 0.05), (64, 0.05), (128, 0.10), (256, 0.10)];
        Self {
            variant: Variant::Severity,
            conv_blocks: blocks
                .iter()
                .map(|&(f, l2)| ConvBlockSpec::new(f, l2, block_extras, block_extras))
                .collect(),
            fc_blocks: vec![1024, 512],
            output_classes: 4,
            input_dims: DEFAULT_INPUT_DIMS,
            dropout_rate: DROPOUT_RATE,
        }
    }

    pub fn for_variant(variant: Variant) -> Self {
        match variant {
            Variant::Detection => Self::detection(),
            Variant::Severity => Self::severity(),
        }
    }

    pub fn with_input_dims(mut self, dims: [usize; 3]) -> Self {
        self.input_dims = dims;
        self
    }

    /// Spatial extents entering each block, followed by the extent after the last pool.
    pub fn pooling_trail(&self) -> Result<Vec<[usize; 3]>> {
        let mut dims = self.input_dims;
        ensure!(
            dims.iter().all(|&e| e >= 1),
            Shape,
            "input dims must be >= 1, got {dims:?}"
        );
        let mut trail = vec![dims];
        for (i, _) in self.conv_blocks.iter().enumerate() {
            ensure!(
                dims.iter().all(|&e| e >= 2),
                Shape,
                "pooling trail collapses at block {}: extents {dims:?} from input {:?}",
                i + 1,
                self.input_dims
            );
            dims = dims.map(pooled_extent);
            trail.push(dims);
        }
        Ok(trail)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.conv_blocks.is_empty(), Shape, "at least one conv block required");
        ensure!(
            self.conv_blocks.iter().all(|b| b.filters >= 1 && b.l2_weight_factor >= 0.0),
            Shape,
            "conv blocks need >= 1 filter and nonnegative L2 factors"
        );
        ensure!(
            self.fc_blocks.iter().all(|&n| n >= 1),
            Shape,
            "dense blocks need >= 1 neuron"
        );
        ensure!(self.output_classes >= 2, Shape, "need at least 2 output classes");
        ensure!(
            (0.0..1.0).contains(&self.dropout_rate),
            InvalidArgument,
            "dropout rate must be in [0, 1)"
        );
        self.pooling_trail()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detection_table() {
        let s = ModelSpec::detection();
        let f: Vec<_> = s.conv_blocks.iter().map(|b| b.filters).collect();
        let l: Vec<_> = s.conv_blocks.iter().map(|b| b.l2_weight_factor).collect();
        assert_eq!(f, [64, 64, 128, 128, 256, 256]);
        assert_eq!(l, [0.01, 0.01, 0.05, 0.05, 0.05, 0.05]);
        assert_eq!(s.fc_blocks, [1024, 512]);
        assert_eq!(s.output_classes, 2);
        assert_eq!(*s.pooling_trail().unwrap().last().unwrap(), [1, 3, 3]);
    }

    #[test]
    fn severity_table() {
        let s = ModelSpec::severity();
        let f: Vec<_> = s.conv_blocks.iter().map(|b| b.filters).collect();
        let l: Vec<_> = s.conv_blocks.iter().map(|b| b.l2_weight_factor).collect();
        assert_eq!(f, [64, 64, 128, 256]);
        assert_eq!(l, [0.05, 0.05, 0.10, 0.10]);
        assert!(s.conv_blocks.iter().all(|b| !b.batchnorm && !b.dropout));
        assert!(ModelSpec::severity_with(true).conv_blocks.iter().all(|b| b.batchnorm && b.dropout));
        assert_eq!(s.output_classes, 4);
    }

    #[test]
    fn collapsing_trail_is_rejected() {
        let s = ModelSpec::detection().with_input_dims([16, 64, 64]);
        assert!(s.validate().is_err());
        let s = ModelSpec::detection().with_input_dims([64, 64, 64]);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn variant_tags() {
        for v in [Variant::Detection, Variant::Severity] {
            assert_eq!(Variant::from_tag(v.tag()).unwrap(), v);
        }
        assert!(Variant::from_tag(9).is_err());
    }
}
