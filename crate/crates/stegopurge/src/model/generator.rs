//! Purifier generator: residual encoder plus upsampling decoder.
//!
//! Encoder: 9x9 conv + ReLU, a stride-2 downsample block, a chain of
//! residual blocks, then a 3x3 conv + batch norm added back onto the
//! downsample output. Decoder: nearest 2x upsample, 3x3 conv with four times
//! the base filters + ReLU, then a 9x9 single-filter conv with tanh. Inputs
//! are `[N, 1, H, W]` in `[0, 1]`; outputs land in `[-1, 1]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::ArchConfig;
use crate::neural::tensor::Tensor;
use crate::neural::{
    BatchNorm2d, Conv2d, Init, Module, Phase, Relu, Scalar, Tanh, Upsample2x,
};

/// conv-BN-ReLU-conv-BN with an identity skip.
pub struct ResidualBlock<T> {
    conv1: Conv2d<T>,
    bn1: BatchNorm2d<T>,
    relu: Relu<T>,
    conv2: Conv2d<T>,
    bn2: BatchNorm2d<T>,
}

impl<T: Scalar> ResidualBlock<T> {
    pub fn new(filters: usize, rng: &mut ChaCha8Rng) -> Self {
        ResidualBlock {
            conv1: Conv2d::new(filters, filters, 3, 1, 1, Init::HeNormal, rng),
            bn1: BatchNorm2d::new(filters),
            relu: Relu::new(),
            conv2: Conv2d::new(filters, filters, 3, 1, 1, Init::HeNormal, rng),
            bn2: BatchNorm2d::new(filters),
        }
    }
}

impl<T: Scalar> Module<T> for ResidualBlock<T> {
    fn forward(&mut self, input: &Tensor<T>, phase: Phase) -> Tensor<T> {
        let y = self.conv1.forward(input, phase);
        let y = self.bn1.forward(&y, phase);
        let y = self.relu.forward(&y, phase);
        let y = self.conv2.forward(&y, phase);
        let y = self.bn2.forward(&y, phase);
        y.add(input)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let g = self.bn2.backward(grad_out);
        let g = self.conv2.backward(&g);
        let g = self.relu.backward(&g);
        let g = self.bn1.backward(&g);
        let g = self.conv1.backward(&g);
        g.add(grad_out)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor<T>, &mut Tensor<T>)) {
        self.conv1.visit_params(f);
        self.bn1.visit_params(f);
        self.conv2.visit_params(f);
        self.bn2.visit_params(f);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        self.conv1.visit_state(&format!("{prefix}.conv1"), f);
        self.bn1.visit_state(&format!("{prefix}.bn1"), f);
        self.conv2.visit_state(&format!("{prefix}.conv2"), f);
        self.bn2.visit_state(&format!("{prefix}.bn2"), f);
    }

    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.conv1.visit_state_mut(&format!("{prefix}.conv1"), f);
        self.bn1.visit_state_mut(&format!("{prefix}.bn1"), f);
        self.conv2.visit_state_mut(&format!("{prefix}.conv2"), f);
        self.bn2.visit_state_mut(&format!("{prefix}.bn2"), f);
    }
}

/// Two 3x3 convolutions, the first with stride 2, each followed by ReLU.
pub struct DownsampleBlock<T> {
    conv1: Conv2d<T>,
    relu1: Relu<T>,
    conv2: Conv2d<T>,
    relu2: Relu<T>,
}

impl<T: Scalar> DownsampleBlock<T> {
    pub fn new(filters: usize, rng: &mut ChaCha8Rng) -> Self {
        DownsampleBlock {
            conv1: Conv2d::new(filters, filters, 3, 2, 1, Init::HeNormal, rng),
            relu1: Relu::new(),
            conv2: Conv2d::new(filters, filters, 3, 1, 1, Init::HeNormal, rng),
            relu2: Relu::new(),
        }
    }
}

impl<T: Scalar> Module<T> for DownsampleBlock<T> {
    fn forward(&mut self, input: &Tensor<T>, phase: Phase) -> Tensor<T> {
        let y = self.conv1.forward(input, phase);
        let y = self.relu1.forward(&y, phase);
        let y = self.conv2.forward(&y, phase);
        self.relu2.forward(&y, phase)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let g = self.relu2.backward(grad_out);
        let g = self.conv2.backward(&g);
        let g = self.relu1.backward(&g);
        self.conv1.backward(&g)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor<T>, &mut Tensor<T>)) {
        self.conv1.visit_params(f);
        self.conv2.visit_params(f);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        self.conv1.visit_state(&format!("{prefix}.conv1"), f);
        self.conv2.visit_state(&format!("{prefix}.conv2"), f);
    }

    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.conv1.visit_state_mut(&format!("{prefix}.conv1"), f);
        self.conv2.visit_state_mut(&format!("{prefix}.conv2"), f);
    }
}

/// Encoder half of the generator. Output is `[N, base, H/2, W/2]`.
pub struct Encoder<T> {
    head_conv: Conv2d<T>,
    head_relu: Relu<T>,
    down: DownsampleBlock<T>,
    blocks: Vec<ResidualBlock<T>>,
    tail_conv: Conv2d<T>,
    tail_bn: BatchNorm2d<T>,
}

impl<T: Scalar> Encoder<T> {
    pub fn new(cfg: &ArchConfig, rng: &mut ChaCha8Rng) -> Self {
        let f = cfg.base_filters;
        Encoder {
            head_conv: Conv2d::new(1, f, 9, 1, 4, Init::HeNormal, rng),
            head_relu: Relu::new(),
            down: DownsampleBlock::new(f, rng),
            blocks: (0..cfg.n_res_blocks)
                .map(|_| ResidualBlock::new(f, rng))
                .collect(),
            tail_conv: Conv2d::new(f, f, 3, 1, 1, Init::HeNormal, rng),
            tail_bn: BatchNorm2d::new(f),
        }
    }

    /// Output shape for a `[N, 1, side, side]` input.
    pub fn output_shape(cfg: &ArchConfig, batch: usize, side: usize) -> [usize; 4] {
        [batch, cfg.base_filters, side.div_ceil(2), side.div_ceil(2)]
    }
}

impl<T: Scalar> Module<T> for Encoder<T> {
    fn forward(&mut self, input: &Tensor<T>, phase: Phase) -> Tensor<T> {
        let y = self.head_conv.forward(input, phase);
        let y = self.head_relu.forward(&y, phase);
        let down = self.down.forward(&y, phase);
        let mut r = down.clone();
        for block in &mut self.blocks {
            r = block.forward(&r, phase);
        }
        let t = self.tail_conv.forward(&r, phase);
        let t = self.tail_bn.forward(&t, phase);
        // residual connection back onto the downsample output
        t.add(&down)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let g = self.tail_bn.backward(grad_out);
        let mut g = self.tail_conv.backward(&g);
        for block in self.blocks.iter_mut().rev() {
            g = block.backward(&g);
        }
        let g_down = g.add(grad_out);
        let g = self.down.backward(&g_down);
        let g = self.head_relu.backward(&g);
        self.head_conv.backward(&g)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor<T>, &mut Tensor<T>)) {
        self.head_conv.visit_params(f);
        self.down.visit_params(f);
        for b in &mut self.blocks {
            b.visit_params(f);
        }
        self.tail_conv.visit_params(f);
        self.tail_bn.visit_params(f);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        self.head_conv.visit_state(&format!("{prefix}.head"), f);
        self.down.visit_state(&format!("{prefix}.down"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit_state(&format!("{prefix}.res{i}"), f);
        }
        self.tail_conv.visit_state(&format!("{prefix}.tail"), f);
        self.tail_bn.visit_state(&format!("{prefix}.tail_bn"), f);
    }

    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.head_conv.visit_state_mut(&format!("{prefix}.head"), f);
        self.down.visit_state_mut(&format!("{prefix}.down"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_state_mut(&format!("{prefix}.res{i}"), f);
        }
        self.tail_conv.visit_state_mut(&format!("{prefix}.tail"), f);
        self.tail_bn.visit_state_mut(&format!("{prefix}.tail_bn"), f);
    }
}

/// Decoder half: upsample back to the input resolution and map to `[-1, 1]`.
pub struct Decoder<T> {
    up: Upsample2x<T>,
    conv1: Conv2d<T>,
    relu: Relu<T>,
    conv2: Conv2d<T>,
    tanh: Tanh<T>,
}

impl<T: Scalar> Decoder<T> {
    pub fn new(cfg: &ArchConfig, rng: &mut ChaCha8Rng) -> Self {
        let f = cfg.base_filters;
        Decoder {
            up: Upsample2x::new(),
            conv1: Conv2d::new(f, 4 * f, 3, 1, 1, Init::HeNormal, rng),
            relu: Relu::new(),
            conv2: Conv2d::new(4 * f, 1, 9, 1, 4, Init::XavierNormal, rng),
            tanh: Tanh::new(),
        }
    }
}

impl<T: Scalar> Module<T> for Decoder<T> {
    fn forward(&mut self, input: &Tensor<T>, phase: Phase) -> Tensor<T> {
        let y = self.up.forward(input, phase);
        let y = self.conv1.forward(&y, phase);
        let y = self.relu.forward(&y, phase);
        let y = self.conv2.forward(&y, phase);
        self.tanh.forward(&y, phase)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let g = self.tanh.backward(grad_out);
        let g = self.conv2.backward(&g);
        let g = self.relu.backward(&g);
        let g = self.conv1.backward(&g);
        self.up.backward(&g)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor<T>, &mut Tensor<T>)) {
        self.conv1.visit_params(f);
        self.conv2.visit_params(f);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        self.conv1.visit_state(&format!("{prefix}.conv1"), f);
        self.conv2.visit_state(&format!("{prefix}.conv2"), f);
    }

    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.conv1.visit_state_mut(&format!("{prefix}.conv1"), f);
        self.conv2.visit_state_mut(&format!("{prefix}.conv2"), f);
    }
}

/// The purifier network. Shape-preserving for even input sides.
pub struct Generator<T> {
    cfg: ArchConfig,
    pub encoder: Encoder<T>,
    pub decoder: Decoder<T>,
}

impl<T: Scalar> Generator<T> {
    pub fn new(cfg: ArchConfig, seed: u64) -> crate::error::Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Generator {
            cfg,
            encoder: Encoder::new(&cfg, &mut rng),
            decoder: Decoder::new(&cfg, &mut rng),
        })
    }

    pub fn cfg(&self) -> &ArchConfig {
        &self.cfg
    }
}

impl<T: Scalar> Module<T> for Generator<T> {
    fn forward(&mut self, input: &Tensor<T>, phase: Phase) -> Tensor<T> {
        let e = self.encoder.forward(input, phase);
        self.decoder.forward(&e, phase)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let g = self.decoder.backward(grad_out);
        self.encoder.backward(&g)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor<T>, &mut Tensor<T>)) {
        self.encoder.visit_params(f);
        self.decoder.visit_params(f);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        self.encoder.visit_state(&format!("{prefix}.encoder"), f);
        self.decoder.visit_state(&format!("{prefix}.decoder"), f);
    }

    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.encoder.visit_state_mut(&format!("{prefix}.encoder"), f);
        self.decoder.visit_state_mut(&format!("{prefix}.decoder"), f);
    }
}
