//! Shared plumbing for the game engines: move sides, the round-boundary
//! deletion step, and the survival check all solvers consult.

use std::fmt;

use crate::board::{boards_match, prune_sets, Board, BoardSet, PruneMode};
use crate::LogicMode;

pub mod agents;
pub mod lb;
pub mod ms;
pub mod pebble;
pub mod qvt;

/// Which of the two evolving board sets a move acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Left => write!(f, "left"),
            Side::Right => write!(f, "right"),
        }
    }
}

/// The deletion step performed before round one and after every completed
/// round. Under the full logic both sides lose every board without a partially
/// isomorphic partner. Under the positive fragment only right-side boards are
/// deleted, namely those no left board maps into homomorphically; the left
/// side always survives intact.
pub fn prune_round(mode: LogicMode, left: &BoardSet, right: &BoardSet) -> (BoardSet, BoardSet) {
    match mode {
        LogicMode::Full => prune_sets(PruneMode::Iso, left, right),
        LogicMode::Positive => {
            let alive: Vec<Board> = right
                .iter()
                .filter(|b| left.iter().any(|a| boards_match(PruneMode::Hom, a, b)))
                .cloned()
                .collect();
            (left.clone(), BoardSet::new(alive))
        }
    }
}

/// Whether a round-boundary position is already won for the side bringing the
/// separating formula: everything deleted under the full logic, right side
/// deleted under the positive fragment.
pub fn position_dead(mode: LogicMode, left: &BoardSet, right: &BoardSet) -> bool {
    match mode {
        LogicMode::Full => left.is_empty() || right.is_empty(),
        LogicMode::Positive => right.is_empty(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::linear_order;
    use std::sync::Arc;

    #[test]
    fn positive_pruning_never_deletes_left_boards() {
        let three = Arc::new(linear_order(3, "A"));
        let two = Arc::new(linear_order(2, "B"));
        // Pebble the left board on the top pair and the right boards on both
        // orientations; only the order-respecting right board survives.
        let l = BoardSet::singleton(Board::empty(Arc::clone(&three), 2).move_pebble(0, 0).move_pebble(1, 2));
        let r = BoardSet::new(vec![
            Board::empty(Arc::clone(&two), 2).move_pebble(0, 0).move_pebble(1, 1),
            Board::empty(Arc::clone(&two), 2).move_pebble(0, 1).move_pebble(1, 0),
        ]);
        let (pl, pr) = prune_round(LogicMode::Positive, &l, &r);
        assert_eq!(pl.len(), 1);
        assert_eq!(pr.len(), 1);
        assert!(!position_dead(LogicMode::Positive, &pl, &pr));

        // Both pebbles on one left element: no right board with distinct
        // pebbled elements receives that pair, so the right side empties and
        // the position is dead. The left side stays put regardless.
        let l_eq = BoardSet::singleton(Board::empty(three, 2).move_pebble(0, 1).move_pebble(1, 1));
        let (pl2, pr2) = prune_round(LogicMode::Positive, &l_eq, &r);
        assert_eq!(pl2.len(), 1);
        assert!(pr2.is_empty());
        assert!(position_dead(LogicMode::Positive, &pl2, &pr2));
    }

    #[test]
    fn full_pruning_kills_both_sides_together() {
        let three = Arc::new(linear_order(3, "A"));
        let two = Arc::new(linear_order(2, "B"));
        let l = BoardSet::singleton(Board::empty(three, 2).move_pebble(0, 0).move_pebble(1, 2));
        let r = BoardSet::singleton(Board::empty(two, 2).move_pebble(0, 1).move_pebble(1, 0));
        let (pl, pr) = prune_round(LogicMode::Full, &l, &r);
        assert!(pl.is_empty() && pr.is_empty());
        assert!(position_dead(LogicMode::Full, &pl, &pr));
    }
}
