//! The coupled encoder / generator / discriminator networks.
//!
//! Each network is built from a layer table. Rows marked shared are created
//! once in the [`ParamStore`] and referenced by both domain networks:
//!
//! | network        | shared rows      | per-domain rows |
//! |----------------|------------------|-----------------|
//! | encoders       | 2-6              | 1               |
//! | generators     | 1-4              | 5-6             |
//! | discriminators | 2-4, 5a, 5b      | 1               |
//!
//! Padding plan on a `s x s` input (`s = 32` for the digit experiments):
//!
//! * encoder rows 1-2: 5x5 stride 2, padding 2 (`s -> s/2 -> s/4`)
//! * encoder row 3: `s/4` kernel, stride 1, padding `(k-1)/2` before and
//!   `k/2` after (keeps `s/4`)
//! * encoder row 4: `s/4` kernel, stride 1, no padding (`s/4 -> 1`)
//! * generator row 2: `s/8` kernel, stride 2, no padding (`1 -> s/8`)
//! * generator rows 3-5: 4x4 stride 2, padding 1 (doubling up to `s`)
//! * discriminator rows 1-4: 5x5 stride 1, padding 2, then 2x2 max pooling
//!
//! Encoders take RGB plus two coordinate channels; generators emit RGB.
//! Convolutions followed by BatchNorm carry no bias.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Activation, ConvGeom, Graph, Mode, Var};
use crate::nn::{Block, InitScheme, Layer, LayerBuilder, Owners, ParamId, ParamStore};
use crate::tensor::Tensor;

/// RGB channels produced by generators and consumed by discriminators.
pub const IMAGE_CHANNELS: usize = 3;
/// Encoder input channels: RGB plus normalized x and y coordinates.
pub const ENCODER_CHANNELS: usize = 5;
pub const NUM_CLASSES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn index(self) -> usize {
        match self {
            Domain::Source => 0,
            Domain::Target => 1,
        }
    }

    pub fn other(self) -> Domain {
        match self {
            Domain::Source => Domain::Target,
            Domain::Target => Domain::Source,
        }
    }

    pub const BOTH: [Domain; 2] = [Domain::Source, Domain::Target];
}

/// Architecture knobs; the defaults reproduce the digit-experiment tables.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchConfig {
    pub d_z: usize,
    /// All hidden widths are divided by this (1 for the published tables).
    pub width_divisor: usize,
    /// Square input resolution; a multiple of 16.
    pub image_size: usize,
    pub leaky_slope: f64,
    /// Standard deviation of the Gaussian encoder/generator initialization.
    pub gen_init_std: f64,
    pub latent_discriminator: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            d_z: 64,
            width_divisor: 1,
            image_size: 32,
            leaky_slope: 0.2,
            gen_init_std: 0.02,
            latent_discriminator: false,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_z == 0 {
            return Err(Error::Config("d_z must be positive".into()));
        }
        if self.width_divisor == 0 {
            return Err(Error::Config("width_divisor must be positive".into()));
        }
        if self.image_size < 16 || self.image_size % 16 != 0 {
            return Err(Error::Config(format!("image_size {} must be a positive multiple of 16", self.image_size)));
        }
        if !(self.gen_init_std > 0.0) {
            return Err(Error::Config("gen_init_std must be positive".into()));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config("leaky_slope must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn width(&self, w: usize) -> usize {
        (w / self.width_divisor).max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Deconv,
    FullyConnected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivationKind {
    LeakyRelu,
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
    None,
}

/// One row of a layer table.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub row: &'static str,
    pub kind: LayerKind,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: [usize; 4],
    pub batch_norm: bool,
    pub activation: ActivationKind,
    pub max_pool: bool,
    pub shared: bool,
}

impl LayerSpec {
    #[allow(clippy::too_many_arguments)]
    fn new(
        row: &'static str,
        kind: LayerKind,
        width: usize,
        kernel: usize,
        stride: usize,
        pad: [usize; 4],
        bn: bool,
        act: ActivationKind,
        shared: bool,
    ) -> Self {
        LayerSpec { row, kind, width, kernel, stride, pad, batch_norm: bn, activation: act, max_pool: false, shared }
    }

    fn pooled(mut self) -> Self {
        self.max_pool = true;
        self
    }

    fn geom(&self) -> ConvGeom {
        ConvGeom::asymmetric(self.kernel, self.stride, self.pad)
    }
}

use ActivationKind as A;
use LayerKind as K;

pub fn encoder_table(arch: &ArchConfig) -> Vec<LayerSpec> {
    let q = arch.image_size / 4;
    let same = [(q - 1) / 2, (q - 1) / 2, q / 2, q / 2];
    vec![
        LayerSpec::new("1", K::Conv, arch.width(64), 5, 2, [2; 4], true, A::LeakyRelu, false),
        LayerSpec::new("2", K::Conv, arch.width(128), 5, 2, [2; 4], true, A::LeakyRelu, true),
        LayerSpec::new("3", K::Conv, arch.width(256), q, 1, same, true, A::LeakyRelu, true),
        LayerSpec::new("4", K::Conv, arch.width(512), q, 1, [0; 4], true, A::LeakyRelu, true),
        LayerSpec::new("5", K::Conv, arch.width(1024), 1, 1, [0; 4], false, A::None, true),
        LayerSpec::new("6", K::FullyConnected, arch.d_z, 1, 1, [0; 4], false, A::None, true),
    ]
}

pub fn generator_table(arch: &ArchConfig) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new("1", K::FullyConnected, arch.width(1024), 1, 1, [0; 4], false, A::Relu, true),
        LayerSpec::new("2", K::Deconv, arch.width(512), arch.image_size / 8, 2, [0; 4], true, A::LeakyRelu, true),
        LayerSpec::new("3", K::Deconv, arch.width(256), 4, 2, [1; 4], true, A::LeakyRelu, true),
        LayerSpec::new("4", K::Deconv, arch.width(128), 4, 2, [1; 4], true, A::LeakyRelu, true),
        LayerSpec::new("5", K::Deconv, arch.width(64), 4, 2, [1; 4], true, A::LeakyRelu, false),
        LayerSpec::new("6", K::Deconv, IMAGE_CHANNELS, 1, 1, [0; 4], false, A::Tanh, false),
    ]
}

pub fn discriminator_table(arch: &ArchConfig) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new("1", K::Conv, arch.width(96), 5, 1, [2; 4], false, A::Relu, false).pooled(),
        LayerSpec::new("2", K::Conv, arch.width(192), 5, 1, [2; 4], false, A::Relu, true).pooled(),
        LayerSpec::new("3", K::Conv, arch.width(384), 5, 1, [2; 4], false, A::Relu, true).pooled(),
        LayerSpec::new("4", K::Conv, arch.width(768), 5, 1, [2; 4], false, A::Relu, true).pooled(),
        LayerSpec::new("5a", K::FullyConnected, 1, 1, 1, [0; 4], false, A::Sigmoid, true),
        LayerSpec::new("5b", K::FullyConnected, NUM_CLASSES, 1, 1, [0; 4], false, A::Softmax, true),
    ]
}

/// The width-2 head emits logits; its first logit is read as real-vs-fake.
pub fn latent_discriminator_table(arch: &ArchConfig) -> Vec<LayerSpec> {
    let w = arch.width(512);
    vec![
        LayerSpec::new("1", K::FullyConnected, w, 1, 1, [0; 4], false, A::Relu, false),
        LayerSpec::new("2", K::FullyConnected, w, 1, 1, [0; 4], false, A::Relu, false),
        LayerSpec::new("3", K::FullyConnected, w, 1, 1, [0; 4], false, A::Relu, false),
        LayerSpec::new("4", K::FullyConnected, w, 1, 1, [0; 4], false, A::Relu, false),
        LayerSpec::new("5", K::FullyConnected, 2, 1, 1, [0; 4], false, A::None, false),
    ]
}

/// Per-row shape walker used while building.
#[derive(Clone, Copy, Debug)]
enum Feat {
    Map { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Feat {
    fn flat_len(self) -> usize {
        match self {
            Feat::Map { c, h, w } => c * h * w,
            Feat::Flat(n) => n,
        }
    }
}

fn build_row(b: &mut LayerBuilder<'_>, spec: &LayerSpec, input: Feat, slope: f64) -> Result<(Vec<Layer>, Feat)> {
    let mut layers = Vec::new();
    let out = match spec.kind {
        LayerKind::Conv | LayerKind::Deconv => {
            let (c, h, w) = match input {
                Feat::Map { c, h, w } => (c, h, w),
                Feat::Flat(n) => {
                    layers.push(Layer::Unflatten { c: n, h: 1, w: 1 });
                    (n, 1, 1)
                }
            };
            let geom = spec.geom();
            let (oh, ow) = if spec.kind == LayerKind::Conv {
                layers.push(b.conv(c, spec.width, geom, !spec.batch_norm));
                geom.conv_out(h, w)
            } else {
                layers.push(b.deconv(c, spec.width, geom, !spec.batch_norm));
                geom.deconv_out(h, w)
            }
            .ok_or_else(|| Error::Config(format!("row {} does not fit a {h}x{w} input", spec.row)))?;
            Feat::Map { c: spec.width, h: oh, w: ow }
        }
        LayerKind::FullyConnected => {
            if matches!(input, Feat::Map { .. }) {
                layers.push(Layer::Flatten);
            }
            layers.push(b.linear(input.flat_len(), spec.width));
            Feat::Flat(spec.width)
        }
    };
    if spec.batch_norm {
        let ch = match out {
            Feat::Map { c, .. } => c,
            Feat::Flat(n) => n,
        };
        layers.push(b.batch_norm(ch));
    }
    match spec.activation {
        A::LeakyRelu => layers.push(Layer::Act(Activation::LeakyRelu(slope))),
        A::Relu => layers.push(Layer::Act(Activation::Relu)),
        A::Tanh => layers.push(Layer::Act(Activation::Tanh)),
        A::Sigmoid => layers.push(Layer::Act(Activation::Sigmoid)),
        // applied by the head as a row softmax
        A::Softmax | A::None => {}
    }
    let out = if spec.max_pool {
        layers.push(Layer::MaxPool2);
        match out {
            Feat::Map { c, h, w } => Feat::Map { c, h: h / 2, w: w / 2 },
            Feat::Flat(_) => return Err(Error::Config("max pooling after a dense row".into())),
        }
    } else {
        out
    };
    Ok((layers, out))
}

struct Pair {
    a: Vec<Block>,
    b: Vec<Block>,
}

/// Builds a coupled pair from a table. Shared rows are created once.
#[allow(clippy::too_many_arguments)]
fn build_pair(
    store: &mut ParamStore,
    table: &[LayerSpec],
    input: Feat,
    names: (&str, &str, &str),
    owners: (Owners, Owners),
    init: InitScheme,
    slope: f64,
) -> Result<(Pair, Feat)> {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut feat = input;
    for spec in table {
        if spec.shared {
            let mut lb = LayerBuilder {
                store,
                prefix: format!("{}.shared.l{}", names.0, spec.row),
                owners: owners.0 | owners.1,
                init,
            };
            let (layers, out) = build_row(&mut lb, spec, feat, slope)?;
            let name = format!("l{}", spec.row);
            a.push(Block { name: name.clone(), layers: layers.clone(), shared: true });
            b.push(Block { name, layers, shared: true });
            feat = out;
        } else {
            let mut la = LayerBuilder { store, prefix: format!("{}.l{}", names.1, spec.row), owners: owners.0, init };
            let (layers_a, out) = build_row(&mut la, spec, feat, slope)?;
            let mut lb = LayerBuilder { store, prefix: format!("{}.l{}", names.2, spec.row), owners: owners.1, init };
            let (layers_b, _) = build_row(&mut lb, spec, feat, slope)?;
            a.push(Block { name: format!("l{}", spec.row), layers: layers_a, shared: false });
            b.push(Block { name: format!("l{}", spec.row), layers: layers_b, shared: false });
            feat = out;
        }
    }
    Ok((Pair { a, b }, feat))
}

fn run(blocks: &[Block], g: &mut Graph<'_>, mut x: Var) -> Result<Var> {
    for b in blocks {
        x = b.forward(g, x)?;
    }
    Ok(x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub blocks: Vec<Block>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub blocks: Vec<Block>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    /// Rows 1-4; the output of the last one is the feature tap.
    pub trunk: Vec<Block>,
    pub adv_head: Block,
    pub cls_head: Block,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentDiscriminator {
    pub blocks: Vec<Block>,
}

/// Outputs of one discriminator pass.
#[derive(Clone, Copy, Debug)]
pub struct DiscOutput {
    /// `[n]` probability that each image is real.
    pub adv: Var,
    /// `[n, 10]` class probabilities.
    pub cls: Var,
    /// `[n, c, h, w]` feature map after the last shared conv row.
    pub features: Var,
}

/// A parameter group referenced by two networks.
#[derive(Clone, Debug, PartialEq)]
pub struct SharedGroup {
    pub name: String,
    /// Parameters as reached through the first network's layer list.
    pub via_first: Vec<ParamId>,
    /// Parameters as reached through the second network's layer list.
    pub via_second: Vec<ParamId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkBundle {
    pub arch: ArchConfig,
    pub store: ParamStore,
    pub encoders: [Encoder; 2],
    pub generators: [Generator; 2],
    pub discriminators: [Discriminator; 2],
    pub latent: Option<LatentDiscriminator>,
    /// Shape of the discriminator feature tap, `[c, h, w]`.
    pub feature_shape: [usize; 3],
}

impl NetworkBundle {
    /// Builds every network with zeroed parameters; see [`NetworkBundle::initialize`].
    pub fn build(arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        let mut store = ParamStore::new();
        let s = arch.image_size;
        let slope = arch.leaky_slope;
        let gauss = InitScheme::Gaussian(arch.gen_init_std);

        let (enc, _) = build_pair(
            &mut store,
            &encoder_table(arch),
            Feat::Map { c: ENCODER_CHANNELS, h: s, w: s },
            ("encoder", "encoder1", "encoder2"),
            (Owners::E1, Owners::E2),
            gauss,
            slope,
        )?;
        let (gen, out) = build_pair(
            &mut store,
            &generator_table(arch),
            Feat::Flat(arch.d_z),
            ("generator", "generator1", "generator2"),
            (Owners::G1, Owners::G2),
            gauss,
            slope,
        )?;
        if !matches!(out, Feat::Map { c: IMAGE_CHANNELS, h, w } if h == s && w == s) {
            return Err(Error::Config(format!("generator emits {out:?}, expected 3x{s}x{s}")));
        }
        let dtable = discriminator_table(arch);
        let (mut disc, feat) = build_pair(
            &mut store,
            &dtable[..4],
            Feat::Map { c: IMAGE_CHANNELS, h: s, w: s },
            ("discriminator", "discriminator1", "discriminator2"),
            (Owners::D1, Owners::D2),
            InitScheme::Xavier,
            slope,
        )?;
        let feature_shape = match feat {
            Feat::Map { c, h, w } => [c, h, w],
            Feat::Flat(_) => unreachable!("conv trunk"),
        };
        let mut heads = Vec::new();
        for spec in &dtable[4..] {
            let mut lb = LayerBuilder {
                store: &mut store,
                prefix: format!("discriminator.shared.l{}", spec.row),
                owners: Owners::D1 | Owners::D2,
                init: InitScheme::Xavier,
            };
            let (layers, _) = build_row(&mut lb, spec, feat, slope)?;
            heads.push(Block { name: format!("l{}", spec.row), layers, shared: true });
        }
        let cls_head = heads.pop().expect("two heads");
        let adv_head = heads.pop().expect("two heads");

        let latent = if arch.latent_discriminator {
            let mut blocks = Vec::new();
            let mut feat = Feat::Flat(arch.d_z);
            for spec in latent_discriminator_table(arch) {
                let mut lb = LayerBuilder {
                    store: &mut store,
                    prefix: format!("latent_discriminator.l{}", spec.row),
                    owners: Owners::D_LATENT,
                    init: InitScheme::Xavier,
                };
                let (layers, out) = build_row(&mut lb, &spec, feat, slope)?;
                blocks.push(Block { name: format!("l{}", spec.row), layers, shared: false });
                feat = out;
            }
            Some(LatentDiscriminator { blocks })
        } else {
            None
        };

        let d1 = Discriminator {
            trunk: core::mem::take(&mut disc.a),
            adv_head: adv_head.clone(),
            cls_head: cls_head.clone(),
        };
        let d2 = Discriminator { trunk: core::mem::take(&mut disc.b), adv_head, cls_head };
        Ok(NetworkBundle {
            arch: arch.clone(),
            store,
            encoders: [Encoder { blocks: enc.a }, Encoder { blocks: enc.b }],
            generators: [Generator { blocks: gen.a }, Generator { blocks: gen.b }],
            discriminators: [d1, d2],
            latent,
            feature_shape,
        })
    }

    /// Gaussian encoder/generator weights, Xavier-uniform discriminator
    /// weights, zero biases, unit BatchNorm scales. Deterministic in `seed`.
    pub fn initialize(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.store.initialize(&mut rng);
    }

    pub fn build_initialized(arch: &ArchConfig, seed: u64) -> Result<Self> {
        let mut b = Self::build(arch)?;
        b.initialize(seed);
        Ok(b)
    }

    pub fn d_z(&self) -> usize {
        self.arch.d_z
    }

    /// Encodes a `[n, 5, s, s]` batch (RGB plus coordinate channels).
    pub fn encode(&self, g: &mut Graph<'_>, domain: Domain, x: Var) -> Result<Var> {
        let s = self.arch.image_size;
        check_image(g.value(x), ENCODER_CHANNELS, s, "encode")?;
        run(&self.encoders[domain.index()].blocks, g, x)
    }

    /// Appends coordinate channels to an RGB batch and encodes it.
    pub fn encode_rgb(&self, g: &mut Graph<'_>, domain: Domain, x: Var) -> Result<Var> {
        check_image(g.value(x), IMAGE_CHANNELS, self.arch.image_size, "encode_rgb")?;
        let x5 = g.append_coords(x)?;
        self.encode(g, domain, x5)
    }

    pub fn generate(&self, g: &mut Graph<'_>, domain: Domain, z: Var) -> Result<Var> {
        let zv = g.value(z);
        if zv.rank() != 2 || zv.shape()[1] != self.arch.d_z {
            return Err(Error::Shape {
                context: "generate",
                expected: vec![zv.batch(), self.arch.d_z],
                actual: zv.shape().to_vec(),
            });
        }
        if !zv.is_finite() {
            return Err(Error::NonFinite("generator input".into()));
        }
        run(&self.generators[domain.index()].blocks, g, z)
    }

    pub fn discriminate(&self, g: &mut Graph<'_>, domain: Domain, x: Var) -> Result<DiscOutput> {
        check_image(g.value(x), IMAGE_CHANNELS, self.arch.image_size, "discriminate")?;
        let d = &self.discriminators[domain.index()];
        let features = run(&d.trunk, g, x)?;
        let adv = d.adv_head.forward(g, features)?;
        let adv = g.select_column(adv, 0)?;
        let logits = d.cls_head.forward(g, features)?;
        let cls = g.softmax(logits)?;
        Ok(DiscOutput { adv, cls, features })
    }

    /// Probability that each latent code was drawn from the prior.
    pub fn discriminate_latent(&self, g: &mut Graph<'_>, z: Var) -> Result<Var> {
        let net = self.latent.as_ref().ok_or_else(|| Error::Config("bundle has no latent discriminator".into()))?;
        let zv = g.value(z);
        if zv.rank() != 2 || zv.shape()[1] != self.arch.d_z {
            return Err(Error::Shape {
                context: "discriminate_latent",
                expected: vec![zv.batch(), self.arch.d_z],
                actual: zv.shape().to_vec(),
            });
        }
        let logits = run(&net.blocks, g, z)?;
        let first = g.select_column(logits, 0)?;
        Ok(g.activation(first, Activation::Sigmoid))
    }

    /// Class probabilities from the tied classification head.
    pub fn classify(&self, g: &mut Graph<'_>, domain: Domain, x: Var) -> Result<Var> {
        let d = &self.discriminators[domain.index()];
        check_image(g.value(x), IMAGE_CHANNELS, self.arch.image_size, "classify")?;
        let features = run(&d.trunk, g, x)?;
        let logits = d.cls_head.forward(g, features)?;
        g.softmax(logits)
    }

    // Tensor-level conveniences; no gradients are tracked.

    pub fn encode_tensor(&self, domain: Domain, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut g = Graph::new(&self.store, mode);
        let v = g.input(x.clone());
        let z = self.encode(&mut g, domain, v)?;
        Ok(g.value(z).clone())
    }

    pub fn generate_tensor(&self, domain: Domain, z: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut g = Graph::new(&self.store, mode);
        let v = g.input(z.clone());
        let x = self.generate(&mut g, domain, v)?;
        Ok(g.value(x).clone())
    }

    /// `G_to(E_from(x))` for an RGB batch.
    pub fn translate(&self, x: &Tensor, from: Domain, to: Domain, mode: Mode) -> Result<Tensor> {
        let mut g = Graph::new(&self.store, mode);
        let v = g.input(x.clone());
        let z = self.encode_rgb(&mut g, from, v)?;
        let y = self.generate(&mut g, to, z)?;
        Ok(g.value(y).clone())
    }

    pub fn reconstruct(&self, x: &Tensor, domain: Domain, mode: Mode) -> Result<Tensor> {
        self.translate(x, domain, domain, mode)
    }

    /// `(adv, cls, features)` values for an RGB batch.
    pub fn discriminate_tensor(&self, domain: Domain, x: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let mut g = Graph::new(&self.store, Mode::Eval);
        let v = g.input(x.clone());
        let out = self.discriminate(&mut g, domain, v)?;
        Ok((g.value(out.adv).clone(), g.value(out.cls).clone(), g.value(out.features).clone()))
    }

    pub fn discriminate_latent_tensor(&self, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new(&self.store, Mode::Eval);
        let v = g.input(z.clone());
        let p = self.discriminate_latent(&mut g, v)?;
        Ok(g.value(p).clone())
    }

    /// Every parameter group shared between a pair of networks.
    pub fn shared_groups(&self) -> Vec<SharedGroup> {
        let mut out = Vec::new();
        let mut pairs = |prefix: &str, a: &[Block], b: &[Block]| {
            for (ba, bb) in a.iter().zip(b) {
                if ba.shared {
                    out.push(SharedGroup {
                        name: format!("{prefix}.{}", ba.name),
                        via_first: ba.params(),
                        via_second: bb.params(),
                    });
                }
            }
        };
        pairs("encoder", &self.encoders[0].blocks, &self.encoders[1].blocks);
        pairs("generator", &self.generators[0].blocks, &self.generators[1].blocks);
        pairs("discriminator", &self.discriminators[0].trunk, &self.discriminators[1].trunk);
        let [d1, d2] = &self.discriminators;
        pairs("discriminator", core::slice::from_ref(&d1.adv_head), core::slice::from_ref(&d2.adv_head));
        pairs("discriminator", core::slice::from_ref(&d1.cls_head), core::slice::from_ref(&d2.cls_head));
        out
    }

    /// Checks that every shared group reads bitwise-identical values through
    /// both of its networks; returns the names of groups that differ.
    pub fn shared_mismatches(&self) -> Vec<String> {
        self.shared_groups()
            .into_iter()
            .filter(|grp| {
                grp.via_first.len() != grp.via_second.len()
                    || grp.via_first.iter().zip(&grp.via_second).any(|(a, b)| {
                        let (va, vb) = (self.store.value(*a), self.store.value(*b));
                        va.shape() != vb.shape()
                            || va.data().iter().zip(vb.data()).any(|(x, y)| x.to_bits() != y.to_bits())
                    })
            })
            .map(|grp| grp.name)
            .collect()
    }

    pub fn param_count(&self, owners: Owners) -> usize {
        self.store.count(owners)
    }

    pub fn network_param_count(&self, net: Owners) -> usize {
        self.store
            .ids()
            .filter(|&id| self.store.info(id).owners.contains(net))
            .map(|id| self.store.value(id).len())
            .sum()
    }

    pub fn describe(&self) -> String {
        let mut s = String::new();
        for id in self.store.ids() {
            let info = self.store.info(id);
            s.push_str(&info.path);
            s.push(' ');
            s.push_str(&format!("{:?}", self.store.value(id).shape()));
            s.push('\n');
        }
        s.to_string()
    }
}

fn check_image(t: &Tensor, channels: usize, size: usize, context: &'static str) -> Result<()> {
    let n = t.batch();
    if t.shape() != [n, channels, size, size] {
        return Err(Error::Shape { context, expected: vec![n, channels, size, size], actual: t.shape().to_vec() });
    }
    if n == 0 {
        return Err(Error::domain(format!("{context}: empty batch")));
    }
    if !t.is_finite() {
        return Err(Error::NonFinite(format!("{context} input")));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
