//! Exact piecewise-linear dynamics on finite metric trees.

pub mod catalog;
pub mod decomposition;
pub mod error;
pub mod format;
pub mod graph;
pub mod hyperspace;
pub mod markov;
pub mod periodic;
pub mod perturbation;
pub mod scalar;
pub mod sigma;
pub mod tree;

pub use decomposition::{Decomposition, DecompositionReport, Refinement};
pub use error::{Error, Result};
pub use hyperspace::{Extraction, HyperElement, MeshedReport, PeriodicFiniteSet, Via};
pub use graph::{classify, Classification, CoveringGraph, Verdict};
pub use markov::{BasicInterval, MarkovMap, PiecePreimage, PlHomeomorphism, PlMap, Region};
pub use perturbation::{AttachSpec, Construction, StageState};
pub use periodic::{DensityCertificate, PeriodicInterval, PeriodicOrbit, PeriodicSet};
pub use scalar::Scalar;
pub use sigma::{SymbolPair, SymbolWord};
pub use tree::{Arc, Component, Edge, EdgeSplit, Embedding, MetricTree, PointOrder, Segment, StarSpec, Subtree, TreePoint};
