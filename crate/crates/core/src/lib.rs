//! Volumetric reconstruction with exact first-hit ray potentials.
//!
//! The energy over a voxel labeling is a sum of ray potentials, each paying a
//! cost that depends only on the depth and label of the first occupied voxel
//! along a camera ray, plus a pairwise regularizer. Binary problems are
//! reduced to a symmetric pairwise graph with linearly many arcs per ray and
//! solved with QPBO; multi-label problems use alpha-expansion with the same
//! reduction inside each move.

pub mod config;
pub mod geometry;
pub mod maxflow;
pub mod mesh;
pub mod oracle;
pub mod pipeline;
pub mod raypbf;
pub mod scene;
pub mod solver;
