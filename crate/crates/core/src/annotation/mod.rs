//! Shot annotations, raw frame containers, contact sheets and synthetic
//! videos. Frame indices are 0-based throughout.

pub mod container;
pub mod image;
pub mod shots;
pub mod synth;
pub mod thumbnail;

pub use container::FrameContainer;
pub use image::{luminance, RgbImage};
pub use shots::{derive_transitions, parse_annotation, write_annotation, Shot, ShotAnnotation, TransitionKind, TransitionSpan};
pub use synth::{synth_plan, synth_plan_from_layout, synth_video, PlannedShot, SynthPlan, SynthSpec};
pub use thumbnail::{mark_color, render_thumbnail, ThumbnailConfig, CYAN, DIGIT_DARK, DIGIT_LIGHT, LIGHT, PINK};
