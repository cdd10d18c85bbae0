//! Panoramic bird's-eye-view semantic mapping.
//!
//! The crate is organised bottom-up:
//!
//! * [`geo`]: equirectangular angle grids, depth unprojection and the
//!   inverse radial projection back to pixel indices.
//! * [`bev`]: camera poses, orthographic top-down projection, semantic
//!   rasterization, mask maps and BEV reference points.
//! * [`attn`]: the masked deformable panoramic attention layer with a
//!   hand-written backward pass and a finite-difference gradient checker.
//! * [`mapper`]: a toy end-to-end mapper (patch encoder, attention stack,
//!   per-cell decoder) with an AdamW training loop.
//! * [`metrics`]: confusion-matrix based Acc / mRecall / mPrecision / mIoU.
//! * [`datagen`]: pinhole-to-panorama stitching, global XYZ images, BEV
//!   ground truth and a ray-cast synthetic box-room generator.
//! * [`io`]: raster codecs, checkpoints, manifests, palettes and
//!   key-value configuration files.

pub mod attn;
pub mod bev;
pub mod datagen;
pub mod error;
pub mod geo;
pub mod io;
pub mod mapper;
pub mod metrics;
pub mod nn;
pub mod raster;
pub mod vocab;

pub use error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

/// File value reserved for void / ignore in 8-bit label rasters.
pub const VOID_LABEL: u8 = 255;
