//! Composite blocks built from the primitive layers.

mod attention;
mod mlp;
mod mlp_plus;
mod product;

pub use attention::{AttentionBlock, AttentionLayer, AttentionSettings};
pub use mlp::MlpBlock;
pub use mlp_plus::{MlpPlusBlock, MlpPlusGates};
pub use product::{inner_product_features, outer_product_features, ProductBlock, ProductType};
