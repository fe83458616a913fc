//! Audio-to-motion network with a specific (alignment-biased) and a probabilistic
//! (transformer VAE) attention branch, decoded into four displacement streams.

pub mod attention;
pub mod config;
pub mod losses;
pub mod masks;
pub mod network;
pub mod output;
pub mod train;

pub use config::{ModaConfig, ValueSource};
pub use losses::{loss_kld, loss_tp, ModaLosses};
pub use masks::{alignment_bias, causal_bias, encoding_table, ppe};
pub use network::{combine, reparameterize, ModaNet, ModaTrace, ProbMode, VaeMoments};
pub use output::{FrameMotion, MotionOutput, MotionVars};
pub use train::{ModaSample, ModaTrainer};
