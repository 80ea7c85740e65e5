use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::harmonics::HarmonicWeights;
use crate::lbfgs::HessianInit;
use crate::wavelet::ChannelLayout;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelName {
    A,
    B,
    C,
    D,
    #[serde(rename = "custom")]
    Custom,
}

/// Which ordered exponent pairs (k, k') are linked across channels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KPairPolicy {
    All,
    List(Vec<(i32, i32)>),
}

impl KPairPolicy {
    pub fn allows(&self, k: i32, k2: i32) -> bool {
        match self {
            KPairPolicy::All => true,
            KPairPolicy::List(v) => v.contains(&(k, k2)),
        }
    }
}

fn yes() -> bool {
    true
}

/// Symmetries averaged over. Translations are always part of the group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetryGroup {
    #[serde(default = "yes")]
    pub translations: bool,
    /// All Q rotations by 2πη/Q, acting as angular channel shifts.
    #[serde(default)]
    pub rotations: bool,
    /// Rotation by π only (x(u) -> x(−u)).
    #[serde(default)]
    pub central_reflection: bool,
    /// x(u0, u1) -> x(u0, −u1).
    #[serde(default)]
    pub line_reflection: bool,
    #[serde(default)]
    pub sign_change: bool,
}

impl Default for SymmetryGroup {
    fn default() -> Self {
        Self::translations()
    }
}

impl SymmetryGroup {
    pub fn translations() -> Self {
        Self { translations: true, rotations: false, central_reflection: false, line_reflection: false, sign_change: false }
    }

    pub fn with_rotations(mut self) -> Self {
        self.rotations = true;
        self
    }

    pub fn with_sign_change(mut self) -> Self {
        self.sign_change = true;
        self
    }

    pub fn with_line_reflection(mut self) -> Self {
        self.line_reflection = true;
        self
    }

    pub fn with_central_reflection(mut self) -> Self {
        self.central_reflection = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    /// Stopping loss relative to the initial loss.
    pub epsilon_rel: f64,
    pub max_iter: usize,
    pub memory: usize,
    pub restarts: usize,
    pub seed: u64,
    pub c1: f64,
    pub c2: f64,
    pub gtol: f64,
    pub hessian_init: HessianInit,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            epsilon_rel: 1e-3,
            max_iter: 5000,
            memory: 10,
            restarts: 10,
            seed: 0,
            c1: 1e-4,
            c2: 0.9,
            gtol: 1e-8,
            hessian_init: HessianInit::Scaled,
        }
    }
}

fn default_spatial_k_max() -> i32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: ModelName,
    /// Number of scales J.
    pub scales: usize,
    /// Number of angles Q.
    pub angles: usize,
    pub k_min: i32,
    pub k_max: i32,
    pub delta_n: u32,
    pub delta_j: u32,
    pub delta_l: u32,
    /// Spatial (n' ≠ 0) edges are kept only for exponents up to this value.
    #[serde(default = "default_spatial_k_max")]
    pub spatial_k_max: i32,
    pub pairs: KPairPolicy,
    #[serde(default)]
    pub group: SymmetryGroup,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
}

impl ModelSpec {
    pub fn preset(name: ModelName, scales: usize, angles: usize) -> Result<Self> {
        let model_c_pairs = KPairPolicy::List(vec![(0, 0), (0, 1), (0, 2), (1, 1), (1, 2)]);
        let q4 = (angles / 4) as u32;
        let base = ModelSpec {
            name,
            scales,
            angles,
            k_min: 1,
            k_max: 1,
            delta_n: 2,
            delta_j: 0,
            delta_l: 0,
            spatial_k_max: 1,
            pairs: KPairPolicy::All,
            group: SymmetryGroup::translations(),
            optimizer: OptimizerSettings::default(),
        };
        let spec = match name {
            ModelName::A => base,
            ModelName::B => ModelSpec { k_min: 0, delta_l: q4, ..base },
            ModelName::C => ModelSpec { k_min: 0, k_max: 2, delta_j: 1, delta_l: q4, pairs: model_c_pairs, ..base },
            ModelName::D => ModelSpec {
                k_min: 0,
                k_max: 2,
                delta_n: 0,
                delta_j: 1,
                delta_l: q4,
                pairs: model_c_pairs,
                group: SymmetryGroup::translations().with_rotations(),
                ..base
            },
            ModelName::Custom => return config("the custom model has no preset; give every field explicitly"),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn layout(&self) -> ChannelLayout {
        ChannelLayout { scales: self.scales, angles: self.angles }
    }

    pub fn weights(&self) -> HarmonicWeights {
        HarmonicWeights::indicator(self.k_min, self.k_max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales < 1 {
            return config("at least one scale is required");
        }
        if self.angles < 2 || self.angles % 2 != 0 {
            return config(format!("number of angles must be even, got {}", self.angles));
        }
        if !(self.k_min <= 1 && 1 <= self.k_max) {
            return config(format!("exponent range must contain 1, got [{}, {}]", self.k_min, self.k_max));
        }
        if self.delta_l as usize > self.angles / 2 {
            return config(format!("angular range {} exceeds Q/2 = {}", self.delta_l, self.angles / 2));
        }
        if !self.group.translations {
            return config("the symmetry group always contains translations");
        }
        if self.group.rotations && self.delta_n != 0 {
            return config("rotation averaging needs same-position edges (delta_n = 0)");
        }
        let o = &self.optimizer;
        if !(0.0 < o.c1 && o.c1 < o.c2 && o.c2 < 1.0) {
            return config("Wolfe constants must satisfy 0 < c1 < c2 < 1");
        }
        if o.memory == 0 {
            return config("optimizer memory must be at least 1");
        }
        if !(o.epsilon_rel >= 0.0) {
            return config("epsilon_rel must be non-negative");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_round_trip() {
        for name in [ModelName::A, ModelName::B, ModelName::C, ModelName::D] {
            let s = ModelSpec::preset(name, 5, 16).unwrap();
            let js = serde_json::to_string(&s).unwrap();
            let back: ModelSpec = serde_json::from_str(&js).unwrap();
            assert_eq!(back, s);
        }
        assert!(ModelSpec::preset(ModelName::Custom, 5, 16).is_err());
    }

    #[test]
    fn validation() {
        let mut s = ModelSpec::preset(ModelName::B, 4, 8).unwrap();
        s.delta_l = 5;
        assert!(s.validate().is_err());
        let mut s = ModelSpec::preset(ModelName::B, 4, 8).unwrap();
        s.k_min = 2;
        s.k_max = 3;
        assert!(s.validate().is_err());
        let mut s = ModelSpec::preset(ModelName::B, 4, 8).unwrap();
        s.group.rotations = true;
        assert!(s.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let s = ModelSpec::preset(ModelName::A, 4, 8).unwrap();
        let mut v = serde_json::to_value(&s).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ModelSpec>(v).is_err());
        let mut v = serde_json::to_value(&s).unwrap();
        v["optimizer"]["momentum"] = serde_json::json!(0.9);
        assert!(serde_json::from_value::<ModelSpec>(v).is_err());
    }
}
