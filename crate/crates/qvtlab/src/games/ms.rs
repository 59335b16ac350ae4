//! Round counts for the multi-structural game, where a fresh pebble enters
//! play every round and the answering player may keep every possible copy.
//!
//! Each round the mover picks a side and places the round's fresh pebble on an
//! element of every board there. The answering player copies each board on the
//! other side once per element and places the fresh pebble accordingly; playing
//! all copies dominates any smaller choice, so the solver hardwires it. The
//! mover wins once no board on the left is partially isomorphic to any board
//! on the right.
//!
//! Assignments only ever grow, so a board that already fails against the whole
//! other side can never recover; such boards are dropped eagerly. Positions
//! therefore never repeat and the search is a plain budgeted recursion: a
//! `None` result means no win within the budget, not proven survival.

use std::collections::HashMap;

use thiserror::Error;

use crate::board::{prune_sets, Board, BoardSet, PruneMode};
use crate::games::Side;
use crate::structure::Elem;

/// Caps for the budgeted search.
#[derive(Debug, Clone)]
pub struct MsConfig {
    /// Maximum boards per side after pruning; sets grow by a domain-size
    /// factor each round.
    pub max_boards: usize,
}

impl Default for MsConfig {
    fn default() -> Self {
        MsConfig { max_boards: 512 }
    }
}

#[derive(Debug, Error)]
pub enum MsError {
    #[error("side holds {got} boards, cap is {cap}")]
    BoardCap { got: usize, cap: usize },
    #[error("boards carry mixed pebble slot counts {0} and {1}")]
    SlotMismatch(usize, usize),
    #[error("{needed} pebble slots needed for the budget, boards carry {got}")]
    SlotsExhausted { needed: usize, got: usize },
    #[error("a side is empty; the game needs boards on both sides")]
    EmptySide,
}

/// Minimum number of rounds the mover needs to win within `budget` rounds, or
/// `None` if the budget does not suffice. Fresh pebbles use the first slot
/// index no input board has placed, then count upward; the boards must carry
/// enough slots for the whole budget.
pub fn ms_value(
    left: &BoardSet,
    right: &BoardSet,
    budget: usize,
    cfg: &MsConfig,
) -> Result<Option<usize>, MsError> {
    if left.is_empty() || right.is_empty() {
        return Err(MsError::EmptySide);
    }
    let mut slots = None;
    let mut base = 0;
    for b in left.iter().chain(right.iter()) {
        let n = b.assignment().num_pebbles();
        match slots {
            None => slots = Some(n),
            Some(m) if m != n => return Err(MsError::SlotMismatch(m, n)),
            _ => {}
        }
        base = base.max(b.assignment().placed().map(|p| p + 1).max().unwrap_or(0));
    }
    let slots = slots.unwrap();
    if base + budget > slots {
        return Err(MsError::SlotsExhausted { needed: base + budget, got: slots });
    }

    let mut memo = HashMap::new();
    search(left.clone(), right.clone(), 0, base, budget, cfg, &mut memo)
}

fn search(
    left: BoardSet,
    right: BoardSet,
    round: usize,
    base: usize,
    budget: usize,
    cfg: &MsConfig,
    memo: &mut HashMap<(Vec<u8>, Vec<u8>, usize), Option<usize>>,
) -> Result<Option<usize>, MsError> {
    // Dead boards stay dead here, so dropping them is value-preserving and
    // the winning condition becomes a side running empty.
    let (left, right) = prune_sets(PruneMode::Iso, &left, &right);
    if left.is_empty() || right.is_empty() {
        return Ok(Some(0));
    }
    if round == budget {
        return Ok(None);
    }
    if left.len() > cfg.max_boards || right.len() > cfg.max_boards {
        return Err(MsError::BoardCap {
            got: left.len().max(right.len()),
            cap: cfg.max_boards,
        });
    }
    let key = (left.canonical_key(), right.canonical_key(), round);
    if let Some(v) = memo.get(&key) {
        return Ok(*v);
    }

    let fresh = base + round;
    let mut best: Option<usize> = None;
    for side in [Side::Left, Side::Right] {
        let (mover, answerer) = match side {
            Side::Left => (&left, &right),
            Side::Right => (&right, &left),
        };
        let domains: Vec<usize> =
            mover.iter().map(|b| b.structure().domain_size()).collect();
        let mut targets = vec![0usize; mover.len()];
        loop {
            let moved: BoardSet = mover
                .iter()
                .zip(&targets)
                .map(|(b, &t)| b.move_pebble(fresh, t as Elem))
                .collect();
            let copies: BoardSet = answerer
                .iter()
                .flat_map(|b| {
                    (0..b.structure().domain_size())
                        .map(|e| b.move_pebble(fresh, e as Elem))
                })
                .collect();
            let (l2, r2) = match side {
                Side::Left => (moved, copies),
                Side::Right => (copies, moved),
            };
            if let Some(sub) = search(l2, r2, round + 1, base, budget, cfg, memo)? {
                let cand = sub + 1;
                if best.map_or(true, |b| cand < b) {
                    best = Some(cand);
                }
            }

            // Odometer over per-board targets, last board fastest.
            let mut pos = targets.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                targets[pos] += 1;
                if targets[pos] < domains[pos] {
                    break;
                }
                targets[pos] = 0;
            }
            if targets.iter().all(|&t| t == 0) {
                break;
            }
        }
    }

    memo.insert(key, best);
    Ok(best)
}

/// Convenience entry point: singleton sets over two bare structures, with as
/// many pebble slots as the budget needs.
pub fn ms_value_structures(
    a: &crate::structure::Structure,
    b: &crate::structure::Structure,
    budget: usize,
    cfg: &MsConfig,
) -> Result<Option<usize>, MsError> {
    use std::sync::Arc;
    ms_value(
        &BoardSet::singleton(Board::empty(Arc::new(a.clone()), budget)),
        &BoardSet::singleton(Board::empty(Arc::new(b.clone()), budget)),
        budget,
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::linear_order;

    #[test]
    fn three_versus_two_orders_need_three_rounds() {
        let a = linear_order(3, "A");
        let b = linear_order(2, "B");
        let cfg = MsConfig::default();
        assert_eq!(ms_value_structures(&a, &b, 3, &cfg).unwrap(), Some(3));
        assert_eq!(ms_value_structures(&a, &b, 2, &cfg).unwrap(), None);
    }

    #[test]
    fn identical_structures_exhaust_any_budget() {
        let a = linear_order(3, "A");
        let cfg = MsConfig::default();
        assert_eq!(ms_value_structures(&a, &a, 3, &cfg).unwrap(), None);
    }

    #[test]
    fn budget_needs_enough_slots() {
        let a = linear_order(2, "A");
        let cfg = MsConfig::default();
        use std::sync::Arc;
        let l = BoardSet::singleton(Board::empty(Arc::new(a.clone()), 1));
        let r = BoardSet::singleton(Board::empty(Arc::new(a), 1));
        match ms_value(&l, &r, 2, &cfg) {
            Err(MsError::SlotsExhausted { needed: 2, got: 1 }) => {}
            other => panic!("expected slot exhaustion, got {other:?}"),
        }
    }
}
