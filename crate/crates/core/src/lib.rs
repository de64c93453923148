//! Direction-informed multi-channel target speech separation toolkit.
//!
//! The crate covers the non-neural half of a target speech separation
//! pipeline built around a small circular microphone array:
//!
//! * [`geometry`]: array layouts, far-field TDOAs, steering phases and
//!   angle-difference arithmetic.
//! * [`room_sim`]: image-method room impulse responses and reverberant
//!   mixture rendering.
//! * [`spectral`]: STFT expressed as real/imaginary convolution kernels,
//!   its inverse, and log power spectra.
//! * [`spatial_features`]: IPD, angle feature, delay-and-sum filterbank,
//!   directional power ratio and feature-stack assembly.
//! * [`separation`]: oracle masks, a directional heuristic mask, mask
//!   application and a delay-and-sum baseline.
//! * [`metrics`]: SI-SDR, SI-SDR improvement and angle-binned reports.
//! * [`dataset_io`]: WAV, manifest and binary feature file persistence.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F32` / `*F64` aliases below name the concrete instantiations.

pub mod dataset_io;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod room_sim;
mod scalar;
pub mod separation;
pub mod spatial_features;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use num_complex::Complex;
pub use scalar::Scalar;

pub use geometry::{DirectionGrid, MicArray, PairSelection, SourceDirection};
pub use room_sim::{MixtureScene, RoomConfig};
pub use separation::{Mask, MaskKind, SeparationResult};
pub use spatial_features::{DasFilterbank, FeatureStack, MultichannelSpectrogram};
pub use spectral::{ComplexSpectrogram, StftConfig, StftKernel};

pub type MicArrayF32 = MicArray<f32>;
pub type MicArrayF64 = MicArray<f64>;
pub type SourceDirectionF32 = SourceDirection<f32>;
pub type SourceDirectionF64 = SourceDirection<f64>;
pub type DirectionGridF32 = DirectionGrid<f32>;
pub type DirectionGridF64 = DirectionGrid<f64>;
pub type RoomConfigF32 = RoomConfig<f32>;
pub type RoomConfigF64 = RoomConfig<f64>;
pub type MixtureSceneF32 = MixtureScene<f32>;
pub type MixtureSceneF64 = MixtureScene<f64>;
pub type StftConfigF32 = StftConfig<f32>;
pub type StftConfigF64 = StftConfig<f64>;
pub type StftKernelF32 = StftKernel<f32>;
pub type StftKernelF64 = StftKernel<f64>;
pub type ComplexSpectrogramF32 = ComplexSpectrogram<f32>;
pub type ComplexSpectrogramF64 = ComplexSpectrogram<f64>;
pub type MultichannelSpectrogramF32 = MultichannelSpectrogram<f32>;
pub type MultichannelSpectrogramF64 = MultichannelSpectrogram<f64>;
pub type DasFilterbankF32 = DasFilterbank<f32>;
pub type DasFilterbankF64 = DasFilterbank<f64>;
pub type FeatureStackF32 = FeatureStack<f32>;
pub type FeatureStackF64 = FeatureStack<f64>;
pub type MaskF32 = Mask<f32>;
pub type MaskF64 = Mask<f64>;
pub type SeparationResultF32 = SeparationResult<f32>;
pub type SeparationResultF64 = SeparationResult<f64>;
