pub mod error;
pub mod estimators;
pub mod fisher;
pub mod quadrature;
pub mod scene;
pub mod scenario;
pub mod series;
pub mod waveform;

pub use error::{CrlbError, Result};
pub use fisher::{CrlbResult, FisherBlocks, Provenance, SchurTerms};
pub use quadrature::Quadrature;
pub use scene::{NoiseModel, TargetScene};
pub use waveform::{EffectiveParams, WaveformMoments, WaveformSpec};
