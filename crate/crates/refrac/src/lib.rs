//! Scene and checkpoint file formats, PNG image I/O, evaluation metrics, an
//! independent synthetic ground-truth generator, and the pieces shared by the
//! `refrac` command line tool.

pub mod checkpoint;
pub mod config;
pub mod imageio;
pub mod metrics;
pub mod objmesh;
pub mod pipeline;
pub mod scene;
pub mod synth;
