//! Image and annotation I/O, the three-rule skin mask, patch sampling, face
//! mirroring and the synthetic dataset generators.

mod image;
mod keypoints;
mod manifest;
mod patches;
mod skin;
mod synth;

pub use image::{
    decode_netpbm, decode_temperature, encode_netpbm, encode_temperature, load_multimodal,
    load_netpbm, mask_to_raster, raster_to_mask, sample_paths, save_multimodal, save_netpbm,
    BurnLabel, MultimodalImage, RasterImage, DEFAULT_HEIGHT, DEFAULT_WIDTH, IRF_MAGIC,
};
pub use keypoints::{
    csv_header, flip_keypoint_sample, parse_keypoint_csv, write_keypoint_csv, KeypointRecord,
    KeypointSample, FACE_SIDE, FLIP_PAIRS, KEYPOINT_NAMES, LEFT_EYE_CENTER, NUM_KEYPOINTS,
    RIGHT_EYE_CENTER,
};
pub use manifest::{split_tags, DatasetKind, Manifest, SampleRecord, Split};
pub use patches::{
    balanced_counts, encode_patch, extract_from_many, extract_patches, patch_fits, synthetic_patch_set, InputChannels, PatchSet,
    PatchSource, PatchTask,
};
pub use skin::{rgb_to_yuv, skin_mask, SkinRuleConfig};
pub use synth::{
    gen_burn_dataset, gen_burn_dataset_with, gen_keypoint_dataset, gen_keypoint_dataset_with,
    BurnGenConfig, FaceGenConfig,
};
