pub mod camera;
pub mod checkpoint;
pub mod decoder;
pub mod delinify;
pub mod error;
pub mod field;
pub mod fit;
pub mod geometry;
pub mod gradcheck;
pub mod image;
pub mod isosurface;
mod mc_tables;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod real;
pub mod render;
pub mod retexture;
pub mod scene;
pub mod selftest;
pub mod synthetic;
pub mod triplane;

pub use error::{Error, Result};
