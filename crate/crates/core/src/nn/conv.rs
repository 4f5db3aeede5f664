use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_label, logit_gradient, Network, Volume};
use crate::error::{Error, Result};

/// Shape of a residual convolutional classifier.
///
/// A 3×3 stem feeds a chain of residual blocks (two 3×3 convolutions plus a
/// parameter-free shortcut). A block that widens its channel count also
/// halves the spatial resolution; its shortcut subsamples and zero-pads the
/// new channels. Global average pooling feeds a linear head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvConfig {
    pub in_channels: usize,
    pub input_size: usize,
    pub stem_channels: usize,
    pub block_channels: Vec<usize>,
    pub n_classes: usize,
}

impl ConvConfig {
    /// Desk-scale default: 64×64 input, 16-channel stem, blocks 16/32/64.
    pub fn desk(n_classes: usize) -> Self {
        Self {
            in_channels: 3,
            input_size: 64,
            stem_channels: 16,
            block_channels: vec![16, 32, 64],
            n_classes,
        }
    }

    /// Eighteen weight layers at 256×256, the full-size preset.
    pub fn resnet18(n_classes: usize) -> Self {
        Self {
            in_channels: 3,
            input_size: 256,
            stem_channels: 64,
            block_channels: vec![64, 64, 128, 128, 256, 256, 512, 512],
            n_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_channels.is_empty() {
            return Err(Error::BadDimension("at least one residual block is required".into()));
        }
        if self.in_channels == 0 || self.input_size == 0 || self.stem_channels == 0 || self.n_classes == 0 {
            return Err(Error::BadDimension("conv dimensions must be positive".into()));
        }
        let mut prev = self.stem_channels;
        for &c in &self.block_channels {
            if c < prev {
                return Err(Error::BadDimension(format!(
                    "block channels must not shrink ({prev} -> {c})"
                )));
            }
            prev = c;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ConvSlot {
    cin: usize,
    cout: usize,
    stride: usize,
    weights: Range<usize>,
    bias: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    stem: ConvSlot,
    blocks: Vec<(ConvSlot, ConvSlot)>,
    head_w: Range<usize>,
    head_b: Range<usize>,
    total: usize,
}

impl Layout {
    fn new(cfg: &ConvConfig) -> Self {
        let mut offset = 0;
        let mut slot = |cin: usize, cout: usize, stride: usize| {
            let w = offset..offset + cout * cin * 9;
            let b = w.end..w.end + cout;
            offset = b.end;
            ConvSlot {
                cin,
                cout,
                stride,
                weights: w,
                bias: b,
            }
        };
        let stem = slot(cfg.in_channels, cfg.stem_channels, 1);
        let mut blocks = Vec::new();
        let mut cin = cfg.stem_channels;
        for &cout in &cfg.block_channels {
            let stride = if cout > cin { 2 } else { 1 };
            let c1 = slot(cin, cout, stride);
            let c2 = slot(cout, cout, 1);
            blocks.push((c1, c2));
            cin = cout;
        }
        let head_w = offset..offset + cfg.n_classes * cin;
        let head_b = head_w.end..head_w.end + cfg.n_classes;
        Layout {
            stem,
            blocks,
            total: head_b.end,
            head_w,
            head_b,
        }
    }
}

/// Residual convolutional classifier over [`Volume`] inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConvNetRepr", into = "ConvNetRepr")]
pub struct ConvNet {
    config: ConvConfig,
    init_seed: u64,
    params: Vec<f64>,
    layout: Layout,
}

#[derive(Serialize, Deserialize)]
struct ConvNetRepr {
    config: ConvConfig,
    init_seed: u64,
    params: Vec<f64>,
}

impl From<ConvNet> for ConvNetRepr {
    fn from(net: ConvNet) -> Self {
        ConvNetRepr {
            config: net.config,
            init_seed: net.init_seed,
            params: net.params,
        }
    }
}

impl TryFrom<ConvNetRepr> for ConvNet {
    type Error = Error;

    fn try_from(repr: ConvNetRepr) -> Result<Self> {
        ConvNet::init(repr.config, repr.init_seed)?.with_params(repr.params)
    }
}

struct BlockCache {
    input: Volume,
    pre1: Volume,
    act1: Volume,
    pre_out: Volume,
}

struct ForwardCache {
    stem_pre: Volume,
    blocks: Vec<BlockCache>,
    last: Volume,
    pooled: Vec<f64>,
    logits: Vec<f64>,
}

impl ConvNet {
    /// Seeded He-uniform convolution weights; zero head and biases.
    pub fn init(config: ConvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |range: Range<usize>, fan_in: usize, params: &mut [f64]| {
            let a = (6.0 / fan_in as f64).sqrt();
            for v in &mut params[range] {
                *v = rng.random_range(-a..a);
            }
        };
        fill(layout.stem.weights.clone(), layout.stem.cin * 9, &mut params);
        for (c1, c2) in &layout.blocks {
            fill(c1.weights.clone(), c1.cin * 9, &mut params);
            // The second convolution starts small so each block begins close
            // to its shortcut.
            fill(c2.weights.clone(), c2.cin * 9 * 4, &mut params);
        }
        // The head starts at zero so the first updates cannot saturate the
        // softmax and silence every rectifier.
        Ok(ConvNet {
            config,
            init_seed: seed,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ConvConfig {
        &self.config
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn with_params(mut self, params: Vec<f64>) -> Result<Self> {
        if params.len() != self.layout.total {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", self.layout.total),
                actual: format!("{} parameters", params.len()),
            });
        }
        self.params = params;
        Ok(self)
    }

    fn conv(&self, x: &Volume, slot: &ConvSlot) -> Volume {
        let w = &self.params[slot.weights.clone()];
        let b = &self.params[slot.bias.clone()];
        let s = slot.stride;
        let (h, wd) = (x.height, x.width);
        let oh = (h - 1) / s + 1;
        let ow = (wd - 1) / s + 1;
        let mut out = Volume::zeros(slot.cout, oh, ow);
        for co in 0..slot.cout {
            let plane = &mut out.data[co * oh * ow..(co + 1) * oh * ow];
            plane.fill(b[co]);
            for ci in 0..slot.cin {
                let xin = &x.data[ci * h * wd..(ci + 1) * h * wd];
                for ky in 0..3 {
                    let rows = valid_outputs(h, oh, ky, s);
                    for kx in 0..3 {
                        let cols = valid_outputs(wd, ow, kx, s);
                        let wv = w[(co * slot.cin + ci) * 9 + ky * 3 + kx];
                        if cols.is_empty() {
                            continue;
                        }
                        let first = cols.start * s + kx - 1;
                        for oy in rows.clone() {
                            let xrow = &xin[(oy * s + ky - 1) * wd + first..(oy * s + ky - 1) * wd + wd];
                            let orow = &mut plane[oy * ow + cols.start..oy * ow + cols.end];
                            for (o, xv) in orow.iter_mut().zip(xrow.iter().step_by(s)) {
                                *o += wv * xv;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Adds weight and bias gradients into `grad`; returns the input gradient.
    fn conv_backward(&self, x: &Volume, dout: &Volume, slot: &ConvSlot, grad: &mut [f64]) -> Volume {
        let w = &self.params[slot.weights.clone()];
        let s = slot.stride;
        let (h, wd) = (x.height, x.width);
        let (oh, ow) = (dout.height, dout.width);
        let mut dx = Volume::zeros(x.channels, h, wd);
        for co in 0..slot.cout {
            let dplane = &dout.data[co * oh * ow..(co + 1) * oh * ow];
            grad[slot.bias.start + co] += dplane.iter().sum::<f64>();
            for ci in 0..slot.cin {
                let xin = &x.data[ci * h * wd..(ci + 1) * h * wd];
                let dxin = &mut dx.data[ci * h * wd..(ci + 1) * h * wd];
                for ky in 0..3 {
                    let rows = valid_outputs(h, oh, ky, s);
                    for kx in 0..3 {
                        let cols = valid_outputs(wd, ow, kx, s);
                        let k = (co * slot.cin + ci) * 9 + ky * 3 + kx;
                        let wv = w[k];
                        let mut gw = 0.0;
                        if cols.is_empty() {
                            continue;
                        }
                        let first = cols.start * s + kx - 1;
                        for oy in rows.clone() {
                            let base = (oy * s + ky - 1) * wd;
                            let drow = &dplane[oy * ow + cols.start..oy * ow + cols.end];
                            let xrow = &xin[base + first..base + wd];
                            for (d, xv) in drow.iter().zip(xrow.iter().step_by(s)) {
                                gw += d * xv;
                            }
                            let dxrow = &mut dxin[base + first..base + wd];
                            for (d, dxv) in drow.iter().zip(dxrow.iter_mut().step_by(s)) {
                                *dxv += d * wv;
                            }
                        }
                        grad[slot.weights.start + k] += gw;
                    }
                }
            }
        }
        dx
    }

    fn forward_cached(&self, x: &Volume) -> Result<ForwardCache> {
        self.check_input(x)?;
        let stem_pre = self.conv(x, &self.layout.stem);
        let mut cur = relu(&stem_pre);
        let mut blocks = Vec::with_capacity(self.layout.blocks.len());
        for (c1, c2) in &self.layout.blocks {
            let pre1 = self.conv(&cur, c1);
            let act1 = relu(&pre1);
            let mut pre_out = self.conv(&act1, c2);
            add_shortcut(&mut pre_out, &cur, c1.stride);
            let next = relu(&pre_out);
            blocks.push(BlockCache {
                input: cur,
                pre1,
                act1,
                pre_out,
            });
            cur = next;
        }
        let area = (cur.height * cur.width) as f64;
        let pooled: Vec<f64> = (0..cur.channels)
            .map(|c| {
                let plane = c * cur.height * cur.width;
                cur.data[plane..plane + cur.height * cur.width].iter().sum::<f64>() / area
            })
            .collect();
        let hw = &self.params[self.layout.head_w.clone()];
        let hb = &self.params[self.layout.head_b.clone()];
        let logits = hb
            .iter()
            .enumerate()
            .map(|(k, b)| {
                b + hw[k * pooled.len()..(k + 1) * pooled.len()]
                    .iter()
                    .zip(&pooled)
                    .map(|(w, p)| w * p)
                    .sum::<f64>()
            })
            .collect();
        Ok(ForwardCache {
            stem_pre,
            blocks,
            last: cur,
            pooled,
            logits,
        })
    }
}

fn relu(v: &Volume) -> Volume {
    Volume {
        data: v.data.iter().map(|x| x.max(0.0)).collect(),
        ..*v
    }
}

fn relu_mask(grad: &mut Volume, pre: &Volume) {
    for (g, p) in grad.data.iter_mut().zip(&pre.data) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
}

fn add_shortcut(out: &mut Volume, input: &Volume, stride: usize) {
    for c in 0..input.channels.min(out.channels) {
        for y in 0..out.height {
            for x in 0..out.width {
                let i = out.idx(c, y, x);
                out.data[i] += input.get(c, y * stride, x * stride);
            }
        }
    }
}

fn shortcut_backward(dout: &Volume, dinput: &mut Volume, stride: usize) {
    for c in 0..dinput.channels.min(dout.channels) {
        for y in 0..dout.height {
            for x in 0..dout.width {
                let i = dinput.idx(c, y * stride, x * stride);
                dinput.data[i] += dout.get(c, y, x);
            }
        }
    }
}

/// Output positions `o` whose tap `o * stride + k - 1` (padding 1) lands
/// inside an input axis of length `n`.
fn valid_outputs(n: usize, out_len: usize, k: usize, stride: usize) -> std::ops::Range<usize> {
    let lo = usize::from(k == 0);
    if n + 1 < k + 1 {
        return 0..0;
    }
    let hi = ((n - k) / stride + 1).min(out_len);
    lo..hi.max(lo)
}

impl Network for ConvNet {
    type Input = Volume;

    fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_input(&self, x: &Volume) -> Result<()> {
        let c = &self.config;
        if x.channels != c.in_channels || x.height != c.input_size || x.width != c.input_size {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}x{}", c.in_channels, c.input_size, c.input_size),
                actual: format!("{}x{}x{}", x.channels, x.height, x.width),
            });
        }
        Ok(())
    }

    fn forward(&self, x: &Volume) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.logits)
    }

    fn accumulate_gradient(&self, x: &Volume, label: usize, grad: &mut [f64]) -> Result<(f64, usize)> {
        check_label(label, self.config.n_classes)?;
        let cache = self.forward_cached(x)?;
        let (dz, loss, pred) = logit_gradient(&cache.logits, label);

        let channels = cache.pooled.len();
        let hw = &self.params[self.layout.head_w.clone()];
        let mut dpooled = vec![0.0; channels];
        for (k, g) in dz.iter().enumerate() {
            grad[self.layout.head_b.start + k] += g;
            for c in 0..channels {
                grad[self.layout.head_w.start + k * channels + c] += g * cache.pooled[c];
                dpooled[c] += g * hw[k * channels + c];
            }
        }

        let last = &cache.last;
        let area = (last.height * last.width) as f64;
        let mut dcur = Volume::zeros(last.channels, last.height, last.width);
        let plane = last.height * last.width;
        for (chunk, d) in dcur.data.chunks_exact_mut(plane).zip(&dpooled) {
            chunk.fill(d / area);
        }

        for ((c1, c2), bc) in self.layout.blocks.iter().zip(&cache.blocks).rev() {
            relu_mask(&mut dcur, &bc.pre_out);
            let mut dact1 = self.conv_backward(&bc.act1, &dcur, c2, grad);
            relu_mask(&mut dact1, &bc.pre1);
            let mut dinput = self.conv_backward(&bc.input, &dact1, c1, grad);
            shortcut_backward(&dcur, &mut dinput, c1.stride);
            dcur = dinput;
        }

        relu_mask(&mut dcur, &cache.stem_pre);
        self.conv_backward(x, &dcur, &self.layout.stem, grad);
        Ok((loss, pred))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ConvConfig {
        ConvConfig {
            in_channels: 3,
            input_size: 8,
            stem_channels: 2,
            block_channels: vec![2, 4],
            n_classes: 2,
        }
    }

    #[test]
    fn layout_counts_every_parameter() {
        let net = ConvNet::init(tiny(), 0).unwrap();
        let expected = (2 * 3 * 9 + 2) + (2 * 2 * 9 + 2) * 2 + (4 * 2 * 9 + 4) + (4 * 4 * 9 + 4) + (2 * 4 + 2);
        assert_eq!(net.params().len(), expected);
    }

    #[test]
    fn rejects_bad_configs_and_inputs() {
        let mut cfg = tiny();
        cfg.block_channels.clear();
        assert!(matches!(ConvNet::init(cfg, 0), Err(Error::BadDimension(_))));
        let net = ConvNet::init(tiny(), 0).unwrap();
        assert!(matches!(
            net.forward(&Volume::zeros(3, 4, 4)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn downsampling_block_halves_resolution() {
        let net = ConvNet::init(tiny(), 3).unwrap();
        let cache = net.forward_cached(&Volume::zeros(3, 8, 8)).unwrap();
        assert_eq!((cache.last.channels, cache.last.height), (4, 4));
        assert_eq!(cache.logits.len(), 2);
    }

    #[test]
    fn serde_round_trip_restores_layout() {
        let net = ConvNet::init(tiny(), 4).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let back: ConvNet = serde_json::from_str(&json).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn presets_validate() {
        ConvConfig::desk(2).validate().unwrap();
        let full = ConvConfig::resnet18(4);
        full.validate().unwrap();
        // stem + 16 block convolutions + head
        assert_eq!(1 + 2 * full.block_channels.len() + 1, 18);
    }
}
