use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::blocks::{AttentionSettings, ProductType};
use crate::error::{Error, Result};
use crate::layers::DEFAULT_SLOPE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    MlpPlus,
    Pnn,
    Autoint,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::MlpPlus, Family::Pnn, Family::Autoint];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::MlpPlus => "mlp-plus",
            Family::Pnn => "pnn",
            Family::Autoint => "autoint",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::OutOfSpace {
                axis: "family".into(),
                value: s.into(),
            })
    }
}

pub const MLP_LAYER_PRESETS: [&[usize]; 4] = [
    &[256, 192, 128, 64],
    &[512, 256, 128, 64],
    &[512, 256, 128, 64, 32],
    &[1024, 512, 256, 128],
];
pub const DROPOUTS: [f64; 4] = [0.0, 0.25, 0.5, 0.75];
pub const LEARNING_RATES: [f64; 3] = [0.1, 0.01, 0.001];
pub const LR_STEPS: [usize; 3] = [10, 15, 20];
pub const PRODUCT_OUTPUT_SIZES: [usize; 4] = [20, 40, 80, 120];
pub const EMBEDDING_SIZES: [usize; 3] = [8, 16, 32];
pub const ATTENTION_LAYERS: [usize; 2] = [3, 4];
pub const ATTENTION_HEADS: [usize; 2] = [2, 3];
pub const ATTENTION_DROPOUTS: [f64; 2] = [0.0, 0.1];

/// Embedding size for families that do not search over it.
pub const FIXED_EMBEDDING_SIZE: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductSettings {
    pub product_type: ProductType,
    pub output_size: usize,
}

fn yes() -> bool {
    true
}

fn two() -> usize {
    2
}

fn default_slope() -> f64 {
    DEFAULT_SLOPE
}

/// Full architecture description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    pub embedding_size: usize,
    pub mlp_layers: Vec<usize>,
    pub dropout: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product: Option<ProductSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<AttentionSettings>,
    #[serde(default = "yes")]
    pub use_skip: bool,
    #[serde(default = "yes")]
    pub use_gate: bool,
    #[serde(default = "two")]
    pub n_classes: usize,
    #[serde(default = "default_slope")]
    pub leaky_slope: f64,
    /// mlp-plus only: numeric columns enter the MLP+ block un-embedded.
    #[serde(default)]
    pub raw_numeric_input: bool,
}

fn out_of_space(axis: &str, value: impl fmt::Debug) -> Error {
    Error::OutOfSpace {
        axis: axis.into(),
        value: format!("{value:?}"),
    }
}

fn check_in<T: PartialEq + fmt::Debug>(axis: &str, value: T, options: &[T]) -> Result<()> {
    if options.contains(&value) {
        Ok(())
    } else {
        Err(out_of_space(axis, value))
    }
}

impl ModelConfig {
    /// First option of every axis; a valid starting point for each family.
    pub fn default_for(family: Family) -> Self {
        ModelConfig {
            family,
            embedding_size: FIXED_EMBEDDING_SIZE,
            mlp_layers: MLP_LAYER_PRESETS[0].to_vec(),
            dropout: 0.0,
            product: (family == Family::Pnn).then_some(ProductSettings {
                product_type: ProductType::Inner,
                output_size: PRODUCT_OUTPUT_SIZES[0],
            }),
            attention: (family == Family::Autoint).then_some(AttentionSettings {
                n_layers: 3,
                n_heads: 2,
                dropout: 0.0,
                leaky_activation: false,
                residual: true,
            }),
            use_skip: true,
            use_gate: true,
            n_classes: 2,
            leaky_slope: DEFAULT_SLOPE,
            raw_numeric_input: false,
        }
    }

    pub fn with_ablation(mut self, use_skip: bool, use_gate: bool) -> Self {
        self.use_skip = use_skip;
        self.use_gate = use_gate;
        self
    }

    /// Rejects anything outside the search grid, naming the axis.
    pub fn validate(&self) -> Result<()> {
        if !MLP_LAYER_PRESETS.iter().any(|p| *p == self.mlp_layers.as_slice()) {
            return Err(out_of_space("mlp_layers", &self.mlp_layers));
        }
        check_in("dropout", self.dropout, &DROPOUTS)?;
        if self.n_classes != 2 {
            return Err(out_of_space("n_classes", self.n_classes));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(out_of_space("leaky_slope", self.leaky_slope));
        }
        match self.family {
            Family::Autoint => check_in("embedding_size", self.embedding_size, &EMBEDDING_SIZES)?,
            _ => check_in("embedding_size", self.embedding_size, &[FIXED_EMBEDDING_SIZE])?,
        }
        if self.raw_numeric_input && self.family != Family::MlpPlus {
            return Err(Error::Config("raw_numeric_input is only available for mlp-plus".into()));
        }
        match (self.family, &self.product) {
            (Family::Pnn, Some(p)) => check_in("product.output_size", p.output_size, &PRODUCT_OUTPUT_SIZES)?,
            (Family::Pnn, None) => return Err(Error::Config("pnn needs product settings".into())),
            (_, Some(_)) => return Err(Error::Config(format!("{} takes no product settings", self.family))),
            _ => {}
        }
        match (self.family, &self.attention) {
            (Family::Autoint, Some(a)) => {
                check_in("attention.n_layers", a.n_layers, &ATTENTION_LAYERS)?;
                check_in("attention.n_heads", a.n_heads, &ATTENTION_HEADS)?;
                check_in("attention.dropout", a.dropout, &ATTENTION_DROPOUTS)?;
            }
            (Family::Autoint, None) => return Err(Error::Config("autoint needs attention settings".into())),
            (_, Some(_)) => return Err(Error::Config(format!("{} takes no attention settings", self.family))),
            _ => {}
        }
        Ok(())
    }
}
