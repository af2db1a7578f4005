//! Frame datasets on disk, triplet sampling, preprocessing, augmentation and
//! the procedural two-domain video generator.
//!
//! Layout: `root/<domain>/<split>/<video_id>/%06d.png`.

mod augment;
mod dataset;
mod preprocess;
mod synth;
mod triplets;

pub use augment::{apply_augment, augment, center_crop, AugmentDraw};
pub use dataset::{list_frames, Domain, Split, Video, VideoDataset, NOMINAL_FPS};
pub use preprocess::{
    denormalize, frame_from_rgb, load_frame, load_rgb, preprocess, save_frame, DEFAULT_LOAD_SIZE,
};
pub use synth::{
    count_distinct_colors, mean_abs_frame_difference, synth_generate, SynthConfig, SynthOutput,
    FLAT_COLOR_THRESHOLD, TEMPORAL_SMOOTHNESS_BOUND,
};
pub use triplets::{load_triplets, sample_triplets, triplet_starts, FrameTriplet, TripletRef};
