//! Explainability toolkit for slice-level CT classifiers: an in-network class
//! activation map, section-wise noisy-OR patient scoring, SLIC superpixels, and
//! LIME, Kernel SHAP and exact Shapley attributions over them.
//!
//! The numeric core is generic over `f32`/`f64` through [`Real`].

pub mod cam;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod explain;
pub mod image;
pub mod micronet;
pub mod numerics;
pub mod scalar;
pub mod slices;
pub mod superpixel;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Image64 = image::GrayImage<f64>;
pub type Image32 = image::GrayImage<f32>;
pub type Net64 = micronet::MicroNet<f64>;
pub type Net32 = micronet::MicroNet<f32>;
