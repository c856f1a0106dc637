//! Table recognition on document images as graph prediction.
//!
//! A table is modelled as three graphs over the words detected on the page:
//! two words are linked when they share a cell, a row, or a column. The
//! crate generates synthetic tables with exact ground truth, trains a small
//! convolutional + graph-interaction classifier over word pairs, and turns
//! the predicted adjacency matrices back into cells, rows, and columns via
//! connected components and maximal cliques.

pub mod eval;
pub mod graph;
pub mod model;
pub mod nn;
pub mod sampler;
pub mod seed;
pub mod synth;
pub mod train;
