use crate::error::{ensure, Error, Result};
use crate::layers::{
    global_avg_pool3d, global_avg_pool3d_backward, maxpool3d_backward, maxpool3d_forward, relu,
    relu_backward, softmax, BatchNormLayer, BatchNormState, Conv3dLayer, Conv3dState, DenseLayer,
    DenseState, Dropout, DropoutState, GapState, MaxPoolState, ReluState,
};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

use super::spec::{ConvBlockSpec, ModelSpec, Variant};

/// How a forward pass runs. Training draws dropout masks from the given stream,
/// uses batch statistics, and caches activations for [`Model::backward`].
pub enum Mode<'a> {
    Train(&'a mut Rng),
    Infer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock<T> {
    pub conv: Conv3dLayer<T>,
    pub bn: Option<BatchNormLayer<T>>,
    pub dropout: Option<Dropout>,
}

struct BlockCache<T> {
    conv: Conv3dState<T>,
    relu: ReluState,
    pool: MaxPoolState,
    bn: Option<BatchNormState<T>>,
    dropout: Option<DropoutState<T>>,
}

struct FcCache<T> {
    dense: DenseState<T>,
    relu: ReluState,
    dropout: DropoutState<T>,
}

struct ForwardCache<T> {
    blocks: Vec<BlockCache<T>>,
    gap: GapState,
    fcs: Vec<FcCache<T>>,
    output: DenseState<T>,
}

/// Named gradients in parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T> Gradients<T> {
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<T> FromIterator<(String, Tensor<T>)> for Gradients<T> {
    fn from_iter<I: IntoIterator<Item = (String, Tensor<T>)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}

/// Walked-from-layers summary of a built network.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub conv_blocks: Vec<ConvBlockSpec>,
    pub fc_blocks: Vec<usize>,
    pub output_classes: usize,
    pub gap_channels: usize,
    pub pooling_trail: Vec<[usize; 3]>,
}

pub struct Model<T = f32> {
    spec: ModelSpec,
    blocks: Vec<ConvBlock<T>>,
    fcs: Vec<DenseLayer<T>>,
    fc_dropout: Dropout,
    output: DenseLayer<T>,
    cache: Option<ForwardCache<T>>,
}

impl<T: Scalar> Clone for Model<T> {
    /// Clones parameters only; cached activations are not carried over.
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            blocks: self.blocks.clone(),
            fcs: self.fcs.clone(),
            fc_dropout: self.fc_dropout,
            output: self.output.clone(),
            cache: None,
        }
    }
}

impl<T: Scalar> std::fmt::Debug for Model<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model").field("spec", &self.spec).finish_non_exhaustive()
    }
}

pub fn build_detection_model<T: Scalar>(rng: &mut Rng, input_dims: [usize; 3]) -> Result<Model<T>> {
    Model::build(&ModelSpec::detection().with_input_dims(input_dims), rng)
}

pub fn build_severity_model<T: Scalar>(rng: &mut Rng, input_dims: [usize; 3]) -> Result<Model<T>> {
    Model::build(&ModelSpec::severity().with_input_dims(input_dims), rng)
}

impl<T: Scalar> Model<T> {
    /// He-normal weights, zero biases, identity batch norm.
    pub fn build(spec: &ModelSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut blocks = Vec::with_capacity(spec.conv_blocks.len());
        let mut channels = 1;
        for b in &spec.conv_blocks {
            blocks.push(ConvBlock {
                conv: Conv3dLayer::init(rng, channels, b.filters, b.l2_weight_factor)?,
                bn: if b.batchnorm {
                    Some(BatchNormLayer::new(b.filters)?)
                } else {
                    None
                },
                dropout: if b.dropout {
                    Some(Dropout::new(spec.dropout_rate)?)
                } else {
                    None
                },
            });
            channels = b.filters;
        }
        let mut fcs = Vec::with_capacity(spec.fc_blocks.len());
        for &n in &spec.fc_blocks {
            fcs.push(DenseLayer::init(rng, channels, n)?);
            channels = n;
        }
        let output = DenseLayer::init(rng, channels, spec.output_classes)?;
        Ok(Self {
            spec: spec.clone(),
            blocks,
            fcs,
            fc_dropout: Dropout::new(spec.dropout_rate)?,
            output,
            cache: None,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn num_classes(&self) -> usize {
        self.output.fan_out()
    }

    pub fn blocks(&self) -> &[ConvBlock<T>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ConvBlock<T>] {
        &mut self.blocks
    }

    pub fn dense_layers(&self) -> &[DenseLayer<T>] {
        &self.fcs
    }

    pub fn output_layer(&self) -> &DenseLayer<T> {
        &self.output
    }

    pub fn architecture(&self) -> Result<Architecture> {
        Ok(Architecture {
            conv_blocks: self
                .blocks
                .iter()
                .map(|b| ConvBlockSpec {
                    filters: b.conv.out_channels(),
                    l2_weight_factor: b.conv.l2_weight_factor,
                    batchnorm: b.bn.is_some(),
                    dropout: b.dropout.is_some(),
                })
                .collect(),
            fc_blocks: self.fcs.iter().map(|d| d.fan_out()).collect(),
            output_classes: self.output.fan_out(),
            gap_channels: self.blocks.last().map_or(1, |b| b.conv.out_channels()),
            pooling_trail: self.spec.pooling_trail()?,
        })
    }

    /// Same parameters at another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let conv = |c: &Conv3dLayer<T>| Conv3dLayer {
            weights: c.weights.cast(),
            biases: c.biases.cast(),
            l2_weight_factor: c.l2_weight_factor,
            l2_bias_factor: c.l2_bias_factor,
        };
        let bn = |b: &BatchNormLayer<T>| BatchNormLayer {
            gamma: b.gamma.cast(),
            beta: b.beta.cast(),
            running_mean: b.running_mean.cast(),
            running_var: b.running_var.cast(),
            momentum: b.momentum,
            epsilon: b.epsilon,
        };
        let dense = |d: &DenseLayer<T>| DenseLayer {
            weights: d.weights.cast(),
            biases: d.biases.cast(),
        };
        Model {
            spec: self.spec.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| ConvBlock {
                    conv: conv(&b.conv),
                    bn: b.bn.as_ref().map(bn),
                    dropout: b.dropout,
                })
                .collect(),
            fcs: self.fcs.iter().map(dense).collect(),
            fc_dropout: self.fc_dropout,
            output: dense(&self.output),
            cache: None,
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let [_, c, d, h, w] = x.dims5()?;
        ensure!(
            c == 1 && [d, h, w] == self.spec.input_dims,
            Shape,
            "model expects (N, 1, {:?}) input, got {:?}",
            self.spec.input_dims,
            x.shape()
        );
        Ok(())
    }

    /// Logits for a `(N, 1, D, H, W)` batch.
    pub fn forward_logits(&mut self, x: &Tensor<T>, mode: Mode<'_>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let (training, rng) = match mode {
            Mode::Train(rng) => (true, Some(rng)),
            Mode::Infer => (false, None),
        };
        self.cache = None;
        if !training {
            return self.infer_logits(x);
        }
        let rng = rng.expect("training mode carries an rng");

        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for block in &mut self.blocks {
            let (y, conv) = block.conv.forward(&h)?;
            let (y, relu_st) = relu(&y);
            let (mut y, pool) = maxpool3d_forward(&y)?;
            let bn = match &mut block.bn {
                Some(bn) => {
                    let (out, st) = bn.forward(&y, true)?;
                    y = out;
                    Some(st)
                }
                None => None,
            };
            let dropout = match &block.dropout {
                Some(d) => {
                    let (out, st) = d.forward(&y, rng, true);
                    y = out;
                    Some(st)
                }
                None => None,
            };
            caches.push(BlockCache {
                conv,
                relu: relu_st,
                pool,
                bn,
                dropout,
            });
            h = y;
        }
        let (mut h, gap) = global_avg_pool3d(&h)?;
        let mut fc_caches = Vec::with_capacity(self.fcs.len());
        for fc in &self.fcs {
            let (y, dense) = fc.forward(&h)?;
            let (y, relu_st) = relu(&y);
            let (y, dropout) = self.fc_dropout.forward(&y, rng, true);
            fc_caches.push(FcCache {
                dense,
                relu: relu_st,
                dropout,
            });
            h = y;
        }
        let (logits, output) = self.output.forward(&h)?;
        self.cache = Some(ForwardCache {
            blocks: caches,
            gap,
            fcs: fc_caches,
            output,
        });
        Ok(logits)
    }

    /// Class probabilities; rows sum to 1.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode<'_>) -> Result<Tensor<T>> {
        softmax(&self.forward_logits(x, mode)?)
    }

    /// Inference-mode logits without touching any mutable state.
    pub fn infer_logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for block in &self.blocks {
            let (y, _) = block.conv.forward(&h)?;
            let (y, _) = relu(&y);
            let (mut y, _) = maxpool3d_forward(&y)?;
            if let Some(bn) = &block.bn {
                y = bn.infer(&y)?;
            }
            h = y;
        }
        let (mut h, _) = global_avg_pool3d(&h)?;
        for fc in &self.fcs {
            let (y, _) = fc.forward(&h)?;
            h = relu(&y).0;
        }
        Ok(self.output.forward(&h)?.0)
    }

    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        softmax(&self.infer_logits(x)?)
    }

    /// Backpropagates `grad_logits` through the cached training-mode forward.
    /// Conv gradients include their L2 penalty terms.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<Gradients<T>> {
        let cache = self.cache.take().ok_or_else(|| {
            Error::MissingState("model backward needs a preceding training-mode forward".into())
        })?;
        let mut grads: Vec<(String, Tensor<T>)> = Vec::new();

        let out = self.output.backward(grad_logits, cache.output)?;
        let mut tail = vec![
            ("output.bias".to_string(), out.grad_b),
            ("output.weight".to_string(), out.grad_w),
        ];
        let mut g = out.grad_x;
        for (j, (fc, fcc)) in self.fcs.iter().zip(cache.fcs).enumerate().rev() {
            let gd = self.fc_dropout.backward(&g, fcc.dropout)?;
            let gr = relu_backward(&gd, fcc.relu)?;
            let dg = fc.backward(&gr, fcc.dense)?;
            tail.push((format!("fc{}.bias", j + 1), dg.grad_b));
            tail.push((format!("fc{}.weight", j + 1), dg.grad_w));
            g = dg.grad_x;
        }
        let mut g = global_avg_pool3d_backward(&g, cache.gap)?;
        for (i, (block, bc)) in self.blocks.iter().zip(cache.blocks).enumerate().rev() {
            if let (Some(d), Some(st)) = (&block.dropout, bc.dropout) {
                g = d.backward(&g, st)?;
            }
            if let (Some(bn), Some(st)) = (&block.bn, bc.bn) {
                let (gx, gg, gb) = bn.backward(&g, st)?;
                tail.push((format!("block{}.bn.beta", i + 1), gb));
                tail.push((format!("block{}.bn.gamma", i + 1), gg));
                g = gx;
            }
            g = maxpool3d_backward(&g, bc.pool)?;
            g = relu_backward(&g, bc.relu)?;
            let cg = block.conv.backward(&g, bc.conv)?;
            tail.push((format!("block{}.conv.bias", i + 1), cg.grad_b));
            tail.push((format!("block{}.conv.weight", i + 1), cg.grad_w));
            g = cg.grad_x;
        }
        tail.reverse();
        grads.extend(tail);
        Ok(Gradients { entries: grads })
    }

    /// Sum of every conv layer's L2 penalty.
    pub fn l2_penalty(&self) -> f64 {
        self.blocks.iter().map(|b| b.conv.l2_penalty()).sum()
    }

    /// Trainable tensors in canonical order, matching [`Gradients`] order.
    pub fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let i = i + 1;
            out.push((format!("block{i}.conv.weight"), &b.conv.weights));
            out.push((format!("block{i}.conv.bias"), &b.conv.biases));
            if let Some(bn) = &b.bn {
                out.push((format!("block{i}.bn.gamma"), &bn.gamma));
                out.push((format!("block{i}.bn.beta"), &bn.beta));
            }
        }
        for (j, d) in self.fcs.iter().enumerate() {
            out.push((format!("fc{}.weight", j + 1), &d.weights));
            out.push((format!("fc{}.bias", j + 1), &d.biases));
        }
        out.push(("output.weight".into(), &self.output.weights));
        out.push(("output.bias".into(), &self.output.biases));
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let i = i + 1;
            out.push((format!("block{i}.conv.weight"), &mut b.conv.weights));
            out.push((format!("block{i}.conv.bias"), &mut b.conv.biases));
            if let Some(bn) = &mut b.bn {
                out.push((format!("block{i}.bn.gamma"), &mut bn.gamma));
                out.push((format!("block{i}.bn.beta"), &mut bn.beta));
            }
        }
        for (j, d) in self.fcs.iter_mut().enumerate() {
            out.push((format!("fc{}.weight", j + 1), &mut d.weights));
            out.push((format!("fc{}.bias", j + 1), &mut d.biases));
        }
        out.push(("output.weight".into(), &mut self.output.weights));
        out.push(("output.bias".into(), &mut self.output.biases));
        out
    }

    /// Trainable parameters plus batch-norm running statistics.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = self.parameters();
        for (i, b) in self.blocks.iter().enumerate() {
            if let Some(bn) = &b.bn {
                out.push((format!("block{}.bn.running_mean", i + 1), &bn.running_mean));
                out.push((format!("block{}.bn.running_var", i + 1), &bn.running_var));
            }
        }
        out
    }

    fn running_stats_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            if let Some(bn) = &mut b.bn {
                out.push((format!("block{}.bn.running_mean", i + 1), &mut bn.running_mean));
                out.push((format!("block{}.bn.running_var", i + 1), &mut bn.running_var));
            }
        }
        out
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn total_parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Overwrites every named tensor (see [`Model::named_tensors`]) from `tensors`;
    /// names must all be present and shapes must agree.
    pub fn load_tensors<'a>(&mut self, tensors: impl IntoIterator<Item = (&'a str, &'a Tensor<T>)>) -> Result<()> {
        let lookup: Vec<(&str, &Tensor<T>)> = tensors.into_iter().collect();
        let apply = |name: &str, dst: &mut Tensor<T>| -> Result<()> {
            let src = lookup
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| *t)
                .ok_or_else(|| Error::Malformed(format!("missing tensor {name}")))?;
            ensure!(
                src.shape() == dst.shape(),
                Shape,
                "tensor {name} has shape {:?}, expected {:?}",
                src.shape(),
                dst.shape()
            );
            *dst = src.clone();
            Ok(())
        };
        for (name, dst) in self.parameters_mut() {
            apply(&name, dst)?;
        }
        for (name, dst) in self.running_stats_mut() {
            apply(&name, dst)?;
        }
        Ok(())
    }
}
