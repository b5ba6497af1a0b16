//! Synthetic front camera and the model-input pipeline.

mod camera;
mod domain;
mod frame;
mod preprocess;
pub mod store;

pub use camera::{render, track_mask, Camera, Renderer, Surface};
pub use domain::{BackgroundKind, BackgroundStyle, Lighting, SurfaceStyle, VisualDomain};
pub use frame::{DomainId, Frame, Observation};
pub use preprocess::{luma, to_model_input, write_model_input};
pub use store::ObservationStore;
