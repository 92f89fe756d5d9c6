//! File formats: rasters, label maps, scribbles, model weights and run
//! configuration.

mod config;
mod model;
mod raster;

pub use config::{RunConfig, CONFIG_KEYS};
pub use model::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use raster::{
    list_frames, load_gt_bundle, load_image, load_labelmap, load_scribbles, palette_color, save_image,
    save_labelmap, save_labelmap_raw, save_labelmap_viz, VOID_LABEL,
};
