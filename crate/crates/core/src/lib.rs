//! Weighted Carnot–Carathéodory spaces with polynomial vector fields.

pub mod polyalg;
pub mod flows;
pub mod structure;
pub mod grading;
pub mod freelift;
pub mod quasimetric;
pub mod lab;
pub mod spacefile;
