//! Anatomical positioning for 3D medical volumes.
//!
//! A query point in any volume is described by a sparse multi-resolution
//! intensity descriptor ([`sampler`]), which a small residual regressor
//! ([`model`]) maps to normalized coordinates of a reference atlas
//! ([`atlas`]). Segmentation by label transfer, point matching by navigation
//! and landmark detection are built on top of that mapping ([`tasks`]).
//!
//! [`synth`] generates phantom atlases and deformed subjects whose
//! subject-to-atlas mapping is known in closed form; [`training`] fits the
//! regressor on them.

pub mod atlas;
pub mod metaimage;
pub mod model;
pub mod sampler;
pub mod synth;
pub mod tasks;
pub mod training;
pub mod volume;

mod linalg;

pub use atlas::{Atlas, AtlasError, NormalizedCoord};
pub use model::{Architecture, ModelError, OutputMode, RegressorParams};
pub use sampler::{Descriptor, DescriptorLayout, IntensityWindow, Sampler};
pub use tasks::Engine;
pub use volume::{Geometry, LabelVolume, Volume, VolumeError, WorldPoint};
