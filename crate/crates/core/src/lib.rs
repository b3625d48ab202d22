//! Fitting and recognition of simple geometric primitives (plane, cylinder,
//! sphere, cone, torus) on point clouds, together with a synthetic segment
//! generator and the evaluation measures used to score recognizers.

pub mod cli;
pub mod datagen;
pub mod evalkit;
pub mod fitters;
pub mod geometry;
pub mod hough;
pub mod knn;
pub mod linalg;
pub mod lm;
pub mod recognize;
