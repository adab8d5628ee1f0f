//! Images, augmentation, patches and synthetic noise.

pub mod augment;
pub mod epoch;
pub mod image;
pub mod noise;
pub mod patch;
pub mod resize;

pub use augment::AugmentOp;
pub use epoch::{build_epoch, Batch, Epoch, EpochConfig, TrainingSet, DEFAULT_BATCH, SAMPLES_PER_IMAGE, SCALES};
pub use image::{decode_pnm, encode_pnm, list_images, load_dir, load_image, save_image, Image};
pub use noise::{add_gaussian_noise, SamplePair, SigmaMode, BLIND_MAX};
pub use patch::{extract_patches, patch_origins, PATCH_SIZE};
pub use resize::bicubic_resize;
