//! Incremental manifold mesh reconstruction from sparse SLAM keyframes.

pub mod bench;
pub mod config;
pub mod delaunay;
pub mod geom;
pub mod io;
pub mod manifold;
pub mod mesh;
pub mod raytracer;
pub mod reconstructor;
pub mod scheduler;
pub mod steiner;
pub mod synth;
