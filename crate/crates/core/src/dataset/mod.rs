//! Corpus catalog, action-level splitting, class balancing and frame extraction.

mod balance;
mod frames;
mod manifest;
mod split;

pub use balance::{balance_undersample, real_vs_fake};
pub use frames::{
    existing_frames, extract_frames, frame_file_name, parse_frame_file_name, video_frame_dir,
};
pub use manifest::{builtin_prompts, load_manifest, Manifest, Source, VideoRecord};
pub use split::{make_split, Split, SplitScheme, SplitSpec, FINETUNE, TEST, TRAIN};
