//! Certified answer reuse over capability hypergraphs.
//!
//! The closure `cl(A)` of a capability set under a [`Hypergraph`] is both the
//! safety object (it must avoid the [`ForbiddenSet`]) and the answer space: every
//! capability in it can be pre-answered with a replayable [`Certificate`] and
//! a minimal [`Witness`]. This crate holds the algorithms; file formats, the
//! corpus tooling and the simulation harness live in the `capcert` crate.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;

mod error;
mod hash;
mod nodeset;

pub mod baselines;
pub mod dialogue;
pub mod embed;
pub mod extraction;
pub mod hypergraph;
pub mod provenance;
pub mod session;
pub mod store;

pub use error::{Error, Result};
pub use hypergraph::{
    ArcId, ArcKind, ClosureState, CompositionalityDefect, ForbiddenSet, FrontierRecord, Hyperarc, Hypergraph,
    HypergraphBuilder,
};
pub use nodeset::{NodeId, NodeSet};
pub use provenance::{Certificate, Witness};
