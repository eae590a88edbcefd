//! Parameter storage with explicit ownership and sharing.
//!
//! A parameter that appears in two networks (say a shared encoder layer used
//! by both `E1` and `E2`) is stored exactly once and referenced by id from
//! both, so the two views can never drift apart. Ownership flags record which
//! networks reference each parameter; training phases select parameters by
//! owner.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::BitOr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::math;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BufferId(pub(crate) usize);

/// Set of networks referencing a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Owners(u8);

impl Owners {
    pub const NONE: Owners = Owners(0);
    pub const E1: Owners = Owners(1);
    pub const E2: Owners = Owners(1 << 1);
    pub const G1: Owners = Owners(1 << 2);
    pub const G2: Owners = Owners(1 << 3);
    pub const D1: Owners = Owners(1 << 4);
    pub const D2: Owners = Owners(1 << 5);
    pub const D_LATENT: Owners = Owners(1 << 6);

    pub const ENCODERS: Owners = Owners(0b11);
    pub const GENERATORS: Owners = Owners(0b1100);
    pub const AUTOENCODERS: Owners = Owners(0b1111);
    pub const DISCRIMINATORS: Owners = Owners(0b11_0000);

    pub fn intersects(self, other: Owners) -> bool {
        self.0 & other.0 != 0
    }

    pub fn contains(self, other: Owners) -> bool {
        self.0 & other.0 == other.0
    }

    /// Shared parameters have more than one owner.
    pub fn is_shared(self) -> bool {
        self.0.count_ones() > 1
    }

    pub fn bits(self) -> u8 {
        self.0
    }
}

impl BitOr for Owners {
    type Output = Owners;
    fn bitor(self, rhs: Owners) -> Owners {
        Owners(self.0 | rhs.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    BnScale,
    BnShift,
}

/// Initialization rule attached to each parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Gaussian { std: f64 },
    XavierUniform { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
}

impl Init {
    /// Half-width of the Xavier-uniform support, `sqrt(6 / (fan_in + fan_out))`.
    pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
        math::sqrt(6.0 / (fan_in + fan_out) as f64)
    }

    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            Init::Gaussian { std } => {
                let d = Normal::new(0.0, std).expect("positive std");
                (0..len).map(|_| d.sample(rng)).collect()
            }
            Init::XavierUniform { fan_in, fan_out } => {
                let b = Self::xavier_bound(fan_in, fan_out);
                let d = Uniform::new_inclusive(-b, b);
                (0..len).map(|_| d.sample(rng)).collect()
            }
            Init::Zeros => alloc::vec![0.0; len],
            Init::Ones => alloc::vec![1.0; len],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamInfo {
    /// Canonical, version-stable path such as `encoder.shared.l2.conv.weight`.
    pub path: String,
    pub kind: ParamKind,
    pub owners: Owners,
    pub init: Init,
}

/// BatchNorm running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub path: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    infos: Vec<ParamInfo>,
    values: Vec<Tensor>,
    stats: Vec<RunningStats>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn add(
        &mut self,
        path: String,
        shape: &[usize],
        kind: ParamKind,
        owners: Owners,
        init: Init,
    ) -> ParamId {
        debug_assert!(self.find(&path).is_none(), "duplicate parameter path {path}");
        self.infos.push(ParamInfo { path, kind, owners, init });
        self.values.push(Tensor::zeros(shape));
        ParamId(self.values.len() - 1)
    }

    pub(crate) fn add_stats(&mut self, path: String, channels: usize) -> BufferId {
        self.stats.push(RunningStats { path, mean: alloc::vec![0.0; channels], var: alloc::vec![1.0; channels] });
        BufferId(self.stats.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn info(&self, id: ParamId) -> &ParamInfo {
        &self.infos[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn find(&self, path: &str) -> Option<ParamId> {
        self.infos.iter().position(|i| i.path == path).map(ParamId)
    }

    pub fn stats(&self, id: BufferId) -> &RunningStats {
        &self.stats[id.0]
    }

    pub fn stats_mut(&mut self, id: BufferId) -> &mut RunningStats {
        &mut self.stats[id.0]
    }

    pub fn all_stats(&self) -> &[RunningStats] {
        &self.stats
    }

    pub fn all_stats_mut(&mut self) -> &mut [RunningStats] {
        &mut self.stats
    }

    /// Parameters referenced by any of `owners`.
    pub fn owned_by(&self, owners: Owners) -> Vec<ParamId> {
        self.ids().filter(|&id| self.infos[id.0].owners.intersects(owners)).collect()
    }

    /// Total scalar count of parameters referenced by any of `owners`.
    pub fn count(&self, owners: Owners) -> usize {
        self.owned_by(owners).iter().map(|&id| self.values[id.0].len()).sum()
    }

    /// Draws every parameter from its initialization rule, in id order, and
    /// resets running statistics.
    pub fn initialize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for (info, value) in self.infos.iter().zip(self.values.iter_mut()) {
            let data = info.init.sample(value.len(), rng);
            value.data_mut().copy_from_slice(&data);
        }
        for s in &mut self.stats {
            s.mean.iter_mut().for_each(|v| *v = 0.0);
            s.var.iter_mut().for_each(|v| *v = 1.0);
        }
    }

    /// FNV-1a over the exact bit patterns of the selected parameters.
    pub fn checksum(&self, owners: Owners) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for id in self.owned_by(owners) {
            for v in self.values[id.0].data() {
                for byte in v.to_bits().to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}
