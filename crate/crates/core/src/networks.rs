//! The four network roles: asymmetric U-Net generator (and its symmetric
//! baseline), one-class discriminator, DC-GAN generator, encoder-classifier.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::nn::{Graph, InputContract, LayerKind, LayerSpec, Node, ReceptiveField};
use crate::real::Real;
use crate::tensor::Tensor;

/// Size knobs shared by all four roles. Channel counts are the published
/// ones scaled by `base_width / 64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Channels of the first generator layer (64 at full size).
    pub base_width: usize,
    /// Generator training input side; discriminator input is `patch / 2`.
    pub patch: usize,
    pub z_dim: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            base_width: 64,
            patch: 256,
            z_dim: 128,
        }
    }
}

impl ArchConfig {
    pub fn channels(&self, full: usize) -> usize {
        (full * self.base_width / 64).max(1)
    }

    pub fn gt_patch(&self) -> usize {
        self.patch / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 || self.z_dim == 0 {
            return Err(Error::invalid("base width and z dimension must be positive"));
        }
        if self.patch < 64 || self.patch % 32 != 0 || !(self.patch / 8).is_power_of_two() {
            return Err(Error::invalid(format!(
                "patch {} must be a power-of-two multiple of 32 and at least 64",
                self.patch
            )));
        }
        Ok(())
    }
}

/// Encoder and decoder layer lists of the generator (ReLU is implied after
/// every hidden layer, Tanh after the last decoder layer).
///
/// `asymmetric = false` gives the 1:1 baseline whose first layer has stride 1.
pub fn generator_specs(arch: &ArchConfig, asymmetric: bool) -> (Vec<LayerSpec>, Vec<LayerSpec>) {
    let c = |n| arch.channels(n);
    let first_stride = if asymmetric { 2 } else { 1 };
    let encoder = vec![
        LayerSpec::conv(c(64), 7, first_stride),
        LayerSpec::conv(c(128), 3, 1),
        LayerSpec::conv(c(128), 3, 2),
        LayerSpec::conv(c(256), 3, 1),
        LayerSpec::conv(c(256), 3, 2),
        LayerSpec::conv(c(512), 3, 1),
        LayerSpec::conv(c(512), 3, 2),
        LayerSpec::conv(c(512), 3, 1),
        LayerSpec::conv(c(512), 3, 2),
    ];
    let decoder = vec![
        LayerSpec::deconv(c(512), 3, 2),
        LayerSpec::conv(c(512), 3, 1),
        LayerSpec::deconv(c(256), 3, 2),
        LayerSpec::conv(c(256), 3, 1),
        LayerSpec::deconv(c(128), 3, 2),
        LayerSpec::conv(c(128), 3, 1),
        // Stride 2 here so the decoder upsamples x16 and the output is input / 2.
        LayerSpec::deconv(c(64), 3, 2),
        LayerSpec::conv(c(64), 3, 1),
        LayerSpec::conv(1, 3, 1),
    ];
    (encoder, decoder)
}

/// Skip connection: decoder layer `decoder` consumes encoder layer `encoder`'s output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipLink {
    pub decoder: usize,
    pub encoder: usize,
}

/// Encoder-decoder generator with skip concatenations at equal resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetricUNet<T> {
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
    pub skip_links: Vec<SkipLink>,
    pub batch_norm: bool,
    pub graph: Graph<T>,
}

fn product_of_strides(specs: &[LayerSpec], kind: LayerKind) -> usize {
    specs
        .iter()
        .filter(|s| s.kind == kind)
        .map(|s| s.stride)
        .product()
}

/// Skip rule: before every stride-1 decoder convolution, concatenate the
/// deepest not-yet-used encoder output at the current resolution.
pub fn derive_skip_links(encoder: &[LayerSpec], decoder: &[LayerSpec]) -> Vec<SkipLink> {
    let mut scales = Vec::with_capacity(encoder.len());
    let mut f = 1usize;
    for s in encoder {
        f *= s.stride;
        scales.push(f);
    }
    let mut used = vec![false; encoder.len()];
    let mut links = Vec::new();
    for (di, s) in decoder.iter().enumerate() {
        match s.kind {
            LayerKind::Deconv => f /= s.stride,
            LayerKind::Conv if s.stride == 1 => {
                if let Some(ei) = (0..encoder.len()).rev().find(|&e| !used[e] && scales[e] == f) {
                    used[ei] = true;
                    links.push(SkipLink {
                        decoder: di,
                        encoder: ei,
                    });
                }
            }
            _ => {}
        }
    }
    links
}

impl<T: Real> AsymmetricUNet<T> {
    pub fn new(arch: &ArchConfig, rng: &mut impl Rng) -> Result<Self> {
        Self::with_asymmetry(arch, true, rng)
    }

    /// Baseline generator with identical layers but a stride-1 first layer (output = input size).
    pub fn symmetric(arch: &ArchConfig, rng: &mut impl Rng) -> Result<Self> {
        Self::with_asymmetry(arch, false, rng)
    }

    fn with_asymmetry(arch: &ArchConfig, asymmetric: bool, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let (encoder, decoder) = generator_specs(arch, asymmetric);
        let links = derive_skip_links(&encoder, &decoder);
        let mut net = Self::from_parts(encoder, decoder, links, true)?;
        net.graph.init_gaussian(0.02, rng);
        Ok(net)
    }

    /// Rebuilds the graph from explicit layer lists and skip links (checkpoint loading).
    /// With `batch_norm`, every convolution except the first encoder layer and
    /// the output layer is followed by batch normalisation.
    pub fn from_parts(
        encoder: Vec<LayerSpec>,
        decoder: Vec<LayerSpec>,
        skip_links: Vec<SkipLink>,
        batch_norm: bool,
    ) -> Result<Self> {
        if encoder.iter().any(|s| s.kind != LayerKind::Conv) {
            return Err(Error::invalid("generator encoder may only hold convolutions"));
        }
        if decoder.last().map(|s| s.kind) != Some(LayerKind::Conv) {
            return Err(Error::invalid("generator decoder must end with a convolution"));
        }
        let mut nodes = Vec::new();
        let mut enc_act = Vec::with_capacity(encoder.len());
        let push = |nodes: &mut Vec<Node>, name: String, spec: LayerSpec, skip: Option<usize>| {
            let input = nodes.len();
            nodes.push(Node { name, spec, input, skip });
            nodes.len()
        };
        for (i, s) in encoder.iter().enumerate() {
            push(&mut nodes, format!("enc{i}"), *s, None);
            if batch_norm && i > 0 {
                push(&mut nodes, format!("enc{i}.bn"), LayerSpec::batch_norm(s.channels), None);
            }
            let a = push(&mut nodes, format!("enc{i}.relu"), LayerSpec::relu(), None);
            enc_act.push(a);
        }
        let last = decoder.len() - 1;
        for (i, s) in decoder.iter().enumerate() {
            if let Some(link) = skip_links.iter().find(|l| l.decoder == i) {
                let src = *enc_act
                    .get(link.encoder)
                    .ok_or_else(|| Error::invalid("skip link names a missing encoder layer"))?;
                push(&mut nodes, format!("dec{i}.cat"), LayerSpec::concat(), Some(src));
            }
            push(&mut nodes, format!("dec{i}"), *s, None);
            if i == last {
                push(&mut nodes, format!("dec{i}.tanh"), LayerSpec::tanh(), None);
            } else {
                if batch_norm {
                    push(&mut nodes, format!("dec{i}.bn"), LayerSpec::batch_norm(s.channels), None);
                }
                push(&mut nodes, format!("dec{i}.relu"), LayerSpec::relu(), None);
            }
        }
        let multiple = product_of_strides(&encoder, LayerKind::Conv);
        let graph = Graph::new(1, InputContract::MultipleOf { multiple }, nodes)?;
        Ok(AsymmetricUNet {
            encoder,
            decoder,
            skip_links,
            batch_norm,
            graph,
        })
    }

    pub fn encoder_downsample(&self) -> usize {
        product_of_strides(&self.encoder, LayerKind::Conv)
    }

    pub fn decoder_upsample(&self) -> usize {
        product_of_strides(&self.decoder, LayerKind::Deconv)
    }

    /// Output side = input side / this factor (2 for the asymmetric net, 1 for the baseline).
    pub fn output_factor(&self) -> usize {
        self.encoder_downsample() / self.decoder_upsample()
    }

    pub fn encoder_receptive_field(&self) -> Result<ReceptiveField> {
        crate::nn::receptive_field(&self.encoder)
    }

    /// Input-pixel extent that one output pixel can depend on, through the
    /// deepest encoder-decoder path.
    pub fn receptive_field(&self) -> Result<ReceptiveField> {
        let mut path = self.encoder.clone();
        path.extend_from_slice(&self.decoder);
        crate::nn::receptive_field(&path)
    }

    /// Batched forward on `[N, 1, H, W]` tensors whose sides are multiples of
    /// the encoder downsampling.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.graph.forward(x)
    }

    /// Full-image translation. Sides must be even and at least 64; sides that are
    /// not multiples of the encoder downsampling are reflect-padded at the bottom
    /// and right, and the output is cropped back to `(H / f, W / f)`.
    pub fn translate(&self, image: &GrayImage) -> Result<Tensor<T>> {
        let (h, w) = (image.height(), image.width());
        let f = self.output_factor();
        if h < 64 || w < 64 || h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(
                "even image sides of at least 64 pixels",
                format!("{h}x{w}"),
            ));
        }
        let m = self.encoder_downsample();
        let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
        let x = reflect_pad(&image.to_tensor::<T>(), ph, pw);
        let y = self.forward(&x)?;
        if (ph, pw) == (h, w) {
            Ok(y)
        } else {
            y.crop(0, 0, h / f, w / f)
        }
    }
}

/// Reflect-pads a `[N, C, H, W]` tensor at the bottom/right to `height x width`.
pub fn reflect_pad<T: Real>(x: &Tensor<T>, height: usize, width: usize) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    if (h, w) == (height, width) {
        return x.clone();
    }
    let reflect = |i: usize, n: usize| -> usize {
        if n == 1 {
            return 0;
        }
        let period = 2 * (n - 1);
        let r = i % period;
        if r < n {
            r
        } else {
            period - r
        }
    };
    let mut out = Tensor::zeros([n, c, height, width]);
    for b in 0..n {
        let src = x.item(b);
        let dst = out.item_mut(b);
        for ch in 0..c {
            for r in 0..height {
                let sr = reflect(r, h);
                for col in 0..width {
                    dst[(ch * height + r) * width + col] = src[(ch * h + sr) * w + reflect(col, w)];
                }
            }
        }
    }
    out
}

/// One-class discriminator: stride-2 4x4 convolutions with leaky ReLU (batch
/// norm on all but the first) down to 4x4, then a 4x4 convolution to one logit
/// and a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T> {
    pub graph: Graph<T>,
}

impl<T: Real> Discriminator<T> {
    pub fn new(arch: &ArchConfig, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let mut graph = Self::build(arch.gt_patch(), arch)?;
        graph.init_gaussian(0.02, rng);
        Ok(Discriminator { graph })
    }

    pub fn specs(input: usize, arch: &ArchConfig) -> Result<Vec<LayerSpec>> {
        if input < 8 || !input.is_power_of_two() {
            return Err(Error::invalid(format!(
                "discriminator input {input} must be a power of two of at least 8"
            )));
        }
        let mut specs = Vec::new();
        let mut size = input;
        let mut i = 0;
        while size > 4 {
            let full = (64usize << i).min(512);
            specs.push(LayerSpec::conv_padded(arch.channels(full), 4, 2, 1));
            if i > 0 {
                specs.push(LayerSpec::batch_norm(arch.channels(full)));
            }
            specs.push(LayerSpec::leaky_relu());
            size /= 2;
            i += 1;
        }
        specs.push(LayerSpec::conv_padded(1, 4, 1, 0));
        specs.push(LayerSpec::sigmoid());
        Ok(specs)
    }

    fn build(input: usize, arch: &ArchConfig) -> Result<Graph<T>> {
        let specs = Self::specs(input, arch)?;
        sequential(
            1,
            InputContract::Fixed {
                height: input,
                width: input,
            },
            "d",
            &specs,
        )
    }

    pub fn from_graph(graph: Graph<T>) -> Self {
        Discriminator { graph }
    }

    pub fn input_size(&self) -> usize {
        match self.graph.contract() {
            InputContract::Fixed { height, .. } => height,
            _ => 0,
        }
    }

    /// Probabilities `[N]` in `(0, 1)` for a `[N, 1, S, S]` batch.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        Ok(self.graph.forward(x)?.into_vec())
    }
}

/// Maps 128-dim Gaussian noise to a `patch / 2` square image in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DcganGenerator<T> {
    pub z_dim: usize,
    pub graph: Graph<T>,
}

impl<T: Real> DcganGenerator<T> {
    pub fn new(arch: &ArchConfig, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let specs = Self::specs(arch.gt_patch(), arch);
        let mut graph = sequential(arch.z_dim, InputContract::Vector { features: arch.z_dim }, "g", &specs)?;
        graph.init_gaussian(0.02, rng);
        Ok(DcganGenerator {
            z_dim: arch.z_dim,
            graph,
        })
    }

    pub fn specs(output: usize, arch: &ArchConfig) -> Vec<LayerSpec> {
        let ups = (output / 4).trailing_zeros() as usize;
        let c0 = arch.channels(512);
        let mut specs = vec![
            LayerSpec::fully_connected(c0 * 16),
            LayerSpec::reshape(c0, 4, 4),
            LayerSpec::batch_norm(c0),
            LayerSpec::relu(),
        ];
        for i in 0..ups {
            if i + 1 == ups {
                specs.push(LayerSpec::deconv_padded(1, 4, 2, 1));
                specs.push(LayerSpec::tanh());
            } else {
                let c = arch.channels(256 >> i.min(4)).max(1);
                specs.push(LayerSpec::deconv_padded(c, 4, 2, 1));
                specs.push(LayerSpec::batch_norm(c));
                specs.push(LayerSpec::relu());
            }
        }
        specs
    }

    pub fn from_graph(graph: Graph<T>) -> Result<Self> {
        match graph.contract() {
            InputContract::Vector { features } => Ok(DcganGenerator { z_dim: features, graph }),
            _ => Err(Error::invalid("DC-GAN generator takes a noise vector")),
        }
    }

    /// `[N, z_dim]` noise (row-major) to `[N, 1, S, S]` images.
    pub fn forward(&self, z: &[T], batch: usize) -> Result<Tensor<T>> {
        if batch == 0 || z.len() != batch * self.z_dim {
            return Err(Error::shape(
                format!("{batch} x {} noise values", self.z_dim),
                format!("{}", z.len()),
            ));
        }
        let x = Tensor::from_vec([batch, self.z_dim, 1, 1], z.to_vec())?;
        self.graph.forward(&x)
    }
}

/// Generator encoder plus a fully-connected head with two logits
/// (index 0 = crack, index 1 = non-crack).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderClassifier<T> {
    pub encoder: Vec<LayerSpec>,
    pub graph: Graph<T>,
}

impl<T: Real> EncoderClassifier<T> {
    pub fn new(arch: &ArchConfig, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let (encoder, _) = generator_specs(arch, true);
        let mut net = Self::from_encoder(encoder, arch.patch, true)?;
        net.graph.init_gaussian(0.02, rng);
        Ok(net)
    }

    /// Same encoder nodes (and names) as the generator, so weights transfer by name.
    pub fn from_encoder(encoder: Vec<LayerSpec>, patch: usize, batch_norm: bool) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut push = |name: String, spec: LayerSpec| {
            let input = nodes.len();
            nodes.push(Node {
                name,
                spec,
                input,
                skip: None,
            });
        };
        for (i, s) in encoder.iter().enumerate() {
            push(format!("enc{i}"), *s);
            if batch_norm && i > 0 {
                push(format!("enc{i}.bn"), LayerSpec::batch_norm(s.channels));
            }
            push(format!("enc{i}.relu"), LayerSpec::relu());
        }
        let input = nodes.len();
        nodes.push(Node {
            name: String::from("head"),
            spec: LayerSpec::fully_connected(2),
            input,
            skip: None,
        });
        let graph = Graph::new(
            1,
            InputContract::Fixed {
                height: patch,
                width: patch,
            },
            nodes,
        )?;
        Ok(EncoderClassifier { encoder, graph })
    }

    /// Two logits per item, row-major `[N, 2]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        Ok(self.graph.forward(x)?.into_vec())
    }
}

/// Chains `specs` one after another.
pub fn sequential<T: Real>(
    in_channels: usize,
    contract: InputContract,
    prefix: &str,
    specs: &[LayerSpec],
) -> Result<Graph<T>> {
    let nodes = specs
        .iter()
        .enumerate()
        .map(|(i, s)| Node {
            name: format!("{prefix}{i}"),
            spec: *s,
            input: i,
            skip: None,
        })
        .collect();
    Graph::new(in_channels, contract, nodes)
}

/// Softmax of a logit row.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn mini() -> ArchConfig {
        ArchConfig {
            base_width: 4,
            patch: 64,
            z_dim: 16,
        }
    }

    #[test]
    fn asymmetric_skip_links_follow_the_resolution_ladder() {
        let (enc, dec) = generator_specs(&ArchConfig::default(), true);
        let links = derive_skip_links(&enc, &dec);
        let pairs: Vec<(usize, usize)> = links.iter().map(|l| (l.decoder, l.encoder)).collect();
        assert_eq!(pairs, vec![(1, 7), (3, 5), (5, 3), (7, 1), (8, 0)]);
    }

    #[test]
    fn layer_listing_matches_published_names() {
        let (enc, dec) = generator_specs(&ArchConfig::default(), true);
        assert_eq!(
            crate::nn::spec_names(&enc),
            "C_64_7_2 - C_128_3_1 - C_128_3_2 - C_256_3_1 - C_256_3_2 - C_512_3_1 - C_512_3_2 - C_512_3_1 - C_512_3_2"
        );
        assert_eq!(
            crate::nn::spec_names(&dec),
            "DC_512_3_2 - C_512_3_1 - DC_256_3_2 - C_256_3_1 - DC_128_3_2 - C_128_3_1 - DC_64_3_2 - C_64_3_1 - C_1_3_1"
        );
    }

    #[test]
    fn generator_halves_and_baseline_preserves() {
        let mut rng = stream(0, Purpose::Init, &[]);
        let g = AsymmetricUNet::<f32>::new(&mini(), &mut rng).unwrap();
        assert_eq!((g.encoder_downsample(), g.decoder_upsample(), g.output_factor()), (32, 16, 2));
        let y = g.forward(&Tensor::zeros([2, 1, 64, 96])).unwrap();
        assert_eq!(y.shape(), [2, 1, 32, 48]);
        assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));

        let b = AsymmetricUNet::<f32>::symmetric(&mini(), &mut rng).unwrap();
        assert_eq!(b.output_factor(), 1);
        assert_eq!(b.forward(&Tensor::zeros([1, 1, 64, 64])).unwrap().shape(), [1, 1, 64, 64]);
    }

    #[test]
    fn translate_pads_and_crops() {
        let mut rng = stream(1, Purpose::Init, &[]);
        let g = AsymmetricUNet::<f32>::new(&mini(), &mut rng).unwrap();
        let img = GrayImage::filled(70, 100, 120).unwrap();
        assert_eq!(g.translate(&img).unwrap().shape(), [1, 1, 35, 50]);
        assert!(g.translate(&GrayImage::filled(63, 64, 0).unwrap()).is_err());
        assert!(g.translate(&GrayImage::filled(66, 65, 0).unwrap()).is_err());
    }

    #[test]
    fn discriminator_layout_at_full_size() {
        let specs = Discriminator::<f32>::specs(128, &ArchConfig::default()).unwrap();
        let convs: Vec<usize> = specs
            .iter()
            .filter(|s| s.kind == LayerKind::Conv)
            .map(|s| s.channels)
            .collect();
        assert_eq!(convs, vec![64, 128, 256, 512, 512, 1]);
        let bns = specs.iter().filter(|s| s.kind == LayerKind::BatchNorm).count();
        assert_eq!(bns, 4);
    }

    #[test]
    fn discriminator_rejects_wrong_shape_and_stays_in_range() {
        let mut rng = stream(2, Purpose::Init, &[]);
        let d = Discriminator::<f32>::new(&mini(), &mut rng).unwrap();
        assert_eq!(d.input_size(), 32);
        let p = d.forward(&Tensor::filled([3, 1, 32, 32], 0.3)).unwrap();
        assert_eq!(p.len(), 3);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(p, d.forward(&Tensor::filled([3, 1, 32, 32], 0.3)).unwrap());
        assert!(d.forward(&Tensor::zeros([1, 1, 64, 64])).is_err());
    }

    #[test]
    fn dcgan_generator_maps_noise_to_images() {
        let mut rng = stream(3, Purpose::Init, &[]);
        let g = DcganGenerator::<f32>::new(&mini(), &mut rng).unwrap();
        let out = g.forward(&vec![0.0; 16], 1).unwrap();
        assert_eq!(out.shape(), [1, 1, 32, 32]);
        assert!(out.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(g.forward(&vec![0.0; 15], 1).is_err());
    }

    #[test]
    fn classifier_emits_two_logits() {
        let mut rng = stream(4, Purpose::Init, &[]);
        let c = EncoderClassifier::<f64>::new(&mini(), &mut rng).unwrap();
        let logits = c.forward(&Tensor::filled([1, 1, 64, 64], 0.1)).unwrap();
        assert_eq!(logits.len(), 2);
        let p = softmax(&logits);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-6);
        assert!(c.forward(&Tensor::zeros([1, 1, 32, 32])).is_err());
    }
}
