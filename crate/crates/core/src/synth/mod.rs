//! Seeded generation of the masked spiked two-view model.

pub mod mask;
pub mod model;
pub mod noise;

pub use mask::{sample_mask, MaskContext, MaskSpec, Mechanism};
pub use model::{
    generate_pair, generate_pair_on_design, generate_with_design, prepare_semi_synthetic,
    semi_synthetic_pair, standardize_columns, Design, LatentPair, MaskedPair, ModelConfig,
    PreparedDesign,
};
pub use noise::{sample_noise, sample_noise_with, NoiseSpec};
