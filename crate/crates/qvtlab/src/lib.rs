//! Solvers, separators, and instance generators for Spoiler-Duplicator games on
//! finite relational structures.
//!
//! Quantifier resources of first-order sentences (depth, count, variables) are
//! mirrored by pebble games played on sets of boards. This crate implements the
//! games and their exact values, semantic oracles that compute the same values
//! directly from definable-set dynamic programming, synthesis of separating
//! sentences from winning strategies, and generators for structure families
//! whose separation values grow in controlled ways.

pub mod board;
pub mod eval;
pub mod formula;
pub mod games;
pub mod groupcon;
pub mod oracle;
pub mod structure;

use board::PruneMode;

/// The logic whose separating sentences are being counted: full first-order
/// logic with a bounded variable supply, or its existential-positive fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LogicMode {
    Full,
    Positive,
}

impl LogicMode {
    /// Board survival criterion matching the fragment: isomorphism checks for
    /// the full logic, one-way homomorphism checks for the positive fragment.
    pub fn prune_mode(self) -> PruneMode {
        match self {
            LogicMode::Full => PruneMode::Iso,
            LogicMode::Positive => PruneMode::Hom,
        }
    }
}
