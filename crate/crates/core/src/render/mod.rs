//! Frame renderer: temporal encoding, condition rasters, U-Net generator,
//! multi-scale patch discriminator and the generator objective.

pub mod condition;
pub mod config;
pub mod discriminator;
pub mod generator;
pub mod losses;
pub mod perceptual;
pub mod tpe;
pub mod train;

pub use condition::{assemble_condition, draw_condition, mouth_mask, ConditionFrame, MeshTopology};
pub use config::{LossWeights, RendererConfig};
pub use discriminator::{loss_disc, MultiScaleDiscriminator, ScaleOutput};
pub use generator::Generator;
pub use losses::{generator_terms, GeneratorTerms, RenderLosses};
pub use perceptual::{PerceptualExtractor, RandomConvFeatures};
pub use tpe::{tpe, TPE_DIM};
pub use train::{RenderSample, RendererModel, RendererTrainer};

/// Channels of the assembled generator input: drawing, reference RGB and TPE planes.
pub const CONDITION_CHANNELS: usize = 1 + 3 + TPE_DIM;
