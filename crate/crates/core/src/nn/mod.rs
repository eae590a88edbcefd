//! Layers, parameter storage and table-driven network construction.

mod params;

pub use params::{BufferId, Init, Owners, ParamId, ParamInfo, ParamKind, ParamStore, RunningStats};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::graph::{Activation, ConvGeom, Graph, Var};

/// Weight initialization family for a whole network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitScheme {
    /// `N(0, std^2)` weights.
    Gaussian(f64),
    /// Xavier/Glorot uniform weights.
    Xavier,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv {
        w: ParamId,
        b: Option<ParamId>,
        geom: ConvGeom,
    },
    Deconv {
        w: ParamId,
        b: Option<ParamId>,
        geom: ConvGeom,
    },
    Linear {
        w: ParamId,
        b: ParamId,
    },
    BatchNorm {
        gamma: ParamId,
        beta: ParamId,
        stats: BufferId,
    },
    Act(Activation),
    MaxPool2,
    Flatten,
    /// Reshape `[n, c*h*w]` to `[n, c, h, w]`.
    Unflatten {
        c: usize,
        h: usize,
        w: usize,
    },
}

impl Layer {
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        match *self {
            Layer::Conv { w, b, geom } => {
                let (w, b) = (g.param(w), b.map(|b| g.param(b)));
                g.conv2d(x, w, b, geom)
            }
            Layer::Deconv { w, b, geom } => {
                let (w, b) = (g.param(w), b.map(|b| g.param(b)));
                g.deconv2d(x, w, b, geom)
            }
            Layer::Linear { w, b } => {
                let (w, b) = (g.param(w), g.param(b));
                g.linear(x, w, b)
            }
            Layer::BatchNorm { gamma, beta, stats } => {
                let (gamma, beta) = (g.param(gamma), g.param(beta));
                g.batch_norm(x, gamma, beta, stats)
            }
            Layer::Act(a) => Ok(g.activation(x, a)),
            Layer::MaxPool2 => g.max_pool2(x),
            Layer::Flatten => g.flatten(x),
            Layer::Unflatten { c, h, w } => {
                let n = g.value(x).batch();
                g.reshape(x, &[n, c, h, w])
            }
        }
    }

    /// Parameters referenced by this layer.
    pub fn params(&self) -> Vec<ParamId> {
        match *self {
            Layer::Conv { w, b, .. } | Layer::Deconv { w, b, .. } => core::iter::once(w).chain(b).collect(),
            Layer::Linear { w, b } => alloc::vec![w, b],
            Layer::BatchNorm { gamma, beta, .. } => alloc::vec![gamma, beta],
            _ => Vec::new(),
        }
    }
}

/// One row of a layer table: a sequence of primitive layers built as a unit.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub name: String,
    pub layers: Vec<Layer>,
    pub shared: bool,
}

impl Block {
    pub fn forward(&self, g: &mut Graph<'_>, mut x: Var) -> Result<Var> {
        for l in &self.layers {
            x = l.forward(g, x)?;
        }
        Ok(x)
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(Layer::params).collect()
    }
}

/// Adds primitive layers to a [`ParamStore`] under a path prefix.
pub(crate) struct LayerBuilder<'a> {
    pub store: &'a mut ParamStore,
    pub prefix: String,
    pub owners: Owners,
    pub init: InitScheme,
}

impl LayerBuilder<'_> {
    fn weight_init(&self, fan_in: usize, fan_out: usize) -> Init {
        match self.init {
            InitScheme::Gaussian(std) => Init::Gaussian { std },
            InitScheme::Xavier => Init::XavierUniform { fan_in, fan_out },
        }
    }

    fn path(&self, leaf: &str) -> String {
        format!("{}.{leaf}", self.prefix)
    }

    pub fn conv(&mut self, cin: usize, cout: usize, geom: ConvGeom, bias: bool) -> Layer {
        let k2 = geom.kernel * geom.kernel;
        let init = self.weight_init(cin * k2, cout * k2);
        let w = self.store.add(
            self.path("conv.weight"),
            &[cout, cin, geom.kernel, geom.kernel],
            ParamKind::Weight,
            self.owners,
            init,
        );
        let b =
            bias.then(|| self.store.add(self.path("conv.bias"), &[cout], ParamKind::Bias, self.owners, Init::Zeros));
        Layer::Conv { w, b, geom }
    }

    pub fn deconv(&mut self, cin: usize, cout: usize, geom: ConvGeom, bias: bool) -> Layer {
        let k2 = geom.kernel * geom.kernel;
        // fans of the adjoint convolution
        let init = self.weight_init(cout * k2, cin * k2);
        let w = self.store.add(
            self.path("deconv.weight"),
            &[cin, cout, geom.kernel, geom.kernel],
            ParamKind::Weight,
            self.owners,
            init,
        );
        let b =
            bias.then(|| self.store.add(self.path("deconv.bias"), &[cout], ParamKind::Bias, self.owners, Init::Zeros));
        Layer::Deconv { w, b, geom }
    }

    pub fn linear(&mut self, din: usize, dout: usize) -> Layer {
        let init = self.weight_init(din, dout);
        let w = self.store.add(self.path("fc.weight"), &[dout, din], ParamKind::Weight, self.owners, init);
        let b = self.store.add(self.path("fc.bias"), &[dout], ParamKind::Bias, self.owners, Init::Zeros);
        Layer::Linear { w, b }
    }

    pub fn batch_norm(&mut self, channels: usize) -> Layer {
        let gamma = self.store.add(self.path("bn.weight"), &[channels], ParamKind::BnScale, self.owners, Init::Ones);
        let beta = self.store.add(self.path("bn.bias"), &[channels], ParamKind::BnShift, self.owners, Init::Zeros);
        let stats = self.store.add_stats(self.path("bn.running"), channels);
        Layer::BatchNorm { gamma, beta, stats }
    }
}
