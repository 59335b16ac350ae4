//! Exact round counts for the two-board pebble game.
//!
//! Positions are pairs of pebbled boards over a fixed pair of structures. Each
//! round the mover picks a pebble and places it on an element of one board
//! (under the positive fragment, always the left board); the opponent answers
//! by placing the same pebble on the other board. The mover wins once the
//! board correspondence stops being a partial isomorphism (full logic) or a
//! partial homomorphism from left to right (positive fragment).
//!
//! The solver materializes the whole position graph and runs backward
//! induction: value 0 at already-won pairs, then repeated relaxation of
//! `1 + min over moves of max over answers` until nothing improves. Pairs
//! never reached by the iteration keep no value, meaning the answering player
//! survives forever from there.

use std::sync::Arc;

use thiserror::Error;

use crate::board::{check_partial_homomorphism, check_partial_isomorphism, Assignment, Board};
use crate::structure::{Elem, Structure};
use crate::LogicMode;

/// Caps for the position-graph solver.
#[derive(Debug, Clone)]
pub struct PebbleConfig {
    /// Maximum number of board pairs the induction table may hold.
    pub position_cap: usize,
}

impl Default for PebbleConfig {
    fn default() -> Self {
        PebbleConfig { position_cap: 4_000_000 }
    }
}

#[derive(Debug, Error)]
pub enum PebbleError {
    #[error("position graph needs {needed} pairs, cap is {cap}")]
    PositionCap { needed: usize, cap: usize },
    #[error("boards carry {left} and {right} pebble slots, need an equal count")]
    SlotMismatch { left: usize, right: usize },
    #[error("boards need at least one pebble slot")]
    NoPebbles,
}

/// Per-side board indexing: every assignment of the `k` slots to either
/// nothing or an element gets a code in base `n + 1`, digit zero meaning
/// unplaced.
struct SideCodes {
    structure: Arc<Structure>,
    k: usize,
    radix: usize,
    len: usize,
}

impl SideCodes {
    fn new(structure: Arc<Structure>, k: usize) -> Option<SideCodes> {
        let radix = structure.domain_size() + 1;
        let len = radix.checked_pow(k as u32)?;
        Some(SideCodes { structure, k, radix, len })
    }

    fn code_of(&self, assignment: &Assignment) -> usize {
        let mut code = 0;
        for p in (0..self.k).rev() {
            code = code * self.radix
                + match assignment.get(p) {
                    None => 0,
                    Some(e) => e as usize + 1,
                };
        }
        code
    }

    fn board_of(&self, mut code: usize) -> Board {
        let mut slots = Vec::with_capacity(self.k);
        for _ in 0..self.k {
            let digit = code % self.radix;
            code /= self.radix;
            slots.push(if digit == 0 { None } else { Some((digit - 1) as Elem) });
        }
        Board::new(Arc::clone(&self.structure), Assignment::from_slots(slots))
    }

    /// Code after moving `pebble` onto `elem`.
    fn successor(&self, code: usize, pebble: usize, elem: Elem) -> usize {
        let weight = self.radix.pow(pebble as u32);
        let digit = (code / weight) % self.radix;
        code - digit * weight + (elem as usize + 1) * weight
    }
}

const UNSET: u32 = u32::MAX;

/// Minimum number of rounds the mover needs to win from the given pair of
/// boards, or `None` when the answering player survives forever. Both boards
/// must carry the same number of pebble slots; that count is the `k` of the
/// game.
pub fn pebble_value(
    a: &Board,
    b: &Board,
    mode: LogicMode,
    cfg: &PebbleConfig,
) -> Result<Option<usize>, PebbleError> {
    let k = a.assignment().num_pebbles();
    if k != b.assignment().num_pebbles() {
        return Err(PebbleError::SlotMismatch {
            left: k,
            right: b.assignment().num_pebbles(),
        });
    }
    if k == 0 {
        return Err(PebbleError::NoPebbles);
    }
    let left = SideCodes::new(Arc::clone(a.structure()), k);
    let right = SideCodes::new(Arc::clone(b.structure()), k);
    let (left, right) = match (left, right) {
        (Some(l), Some(r)) => (l, r),
        _ => return Err(PebbleError::PositionCap { needed: usize::MAX, cap: cfg.position_cap }),
    };
    let pairs = left
        .len
        .checked_mul(right.len)
        .ok_or(PebbleError::PositionCap { needed: usize::MAX, cap: cfg.position_cap })?;
    if pairs > cfg.position_cap {
        return Err(PebbleError::PositionCap { needed: pairs, cap: cfg.position_cap });
    }

    let boards_a: Vec<Board> = (0..left.len).map(|c| left.board_of(c)).collect();
    let boards_b: Vec<Board> = (0..right.len).map(|c| right.board_of(c)).collect();

    // Survival check per pair. A pair is already won for the mover exactly
    // when this fails.
    let matches = |ia: usize, ib: usize| match mode {
        LogicMode::Full => check_partial_isomorphism(&boards_a[ia], &boards_b[ib]),
        LogicMode::Positive => check_partial_homomorphism(&boards_a[ia], &boards_b[ib]),
    };

    let mut value = vec![UNSET; pairs];
    for ia in 0..left.len {
        for ib in 0..right.len {
            if !matches(ia, ib) {
                value[ia * right.len + ib] = 0;
            }
        }
    }

    let n_a = left.structure.domain_size();
    let n_b = right.structure.domain_size();
    // Relaxation passes until the least fixpoint. Every pass scans all pairs,
    // so the value at a pair is the first round index at which some move
    // forces every answer into the already-won region.
    loop {
        let mut changed = false;
        for ia in 0..left.len {
            for ib in 0..right.len {
                let idx = ia * right.len + ib;
                let current = value[idx];
                let mut best = UNSET;
                for pebble in 0..k {
                    // Mover plays on the left board; the answer is on the right.
                    for x in 0..n_a {
                        let sa = left.successor(ia, pebble, x as Elem);
                        let mut worst = 0u32;
                        for y in 0..n_b {
                            let sb = right.successor(ib, pebble, y as Elem);
                            worst = worst.max(value[sa * right.len + sb]);
                            if worst == UNSET {
                                break;
                            }
                        }
                        if worst != UNSET {
                            best = best.min(worst);
                        }
                    }
                    if mode == LogicMode::Full {
                        // Mover may instead play on the right board.
                        for y in 0..n_b {
                            let sb = right.successor(ib, pebble, y as Elem);
                            let mut worst = 0u32;
                            for x in 0..n_a {
                                let sa = left.successor(ia, pebble, x as Elem);
                                worst = worst.max(value[sa * right.len + sb]);
                                if worst == UNSET {
                                    break;
                                }
                            }
                            if worst != UNSET {
                                best = best.min(worst);
                            }
                        }
                    }
                }
                if best != UNSET && best + 1 < current {
                    value[idx] = best + 1;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let start = left.code_of(a.assignment()) * right.len + right.code_of(b.assignment());
    Ok(match value[start] {
        UNSET => None,
        v => Some(v as usize),
    })
}

/// Convenience entry point: the game on two bare structures with `k` pebbles,
/// starting from empty boards.
pub fn pebble_value_structures(
    a: &Structure,
    b: &Structure,
    k: usize,
    mode: LogicMode,
    cfg: &PebbleConfig,
) -> Result<Option<usize>, PebbleError> {
    pebble_value(
        &Board::empty(Arc::new(a.clone()), k),
        &Board::empty(Arc::new(b.clone()), k),
        mode,
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{linear_order, Signature};

    #[test]
    fn three_versus_two_orders_fall_in_two_rounds() {
        let a = linear_order(3, "A");
        let b = linear_order(2, "B");
        let cfg = PebbleConfig::default();
        assert_eq!(pebble_value_structures(&a, &b, 2, LogicMode::Full, &cfg).unwrap(), Some(2));
        assert_eq!(pebble_value_structures(&b, &a, 2, LogicMode::Full, &cfg).unwrap(), Some(2));
    }

    #[test]
    fn identical_structures_survive_forever() {
        let a = linear_order(3, "A");
        let cfg = PebbleConfig::default();
        assert_eq!(pebble_value_structures(&a, &a, 2, LogicMode::Full, &cfg).unwrap(), None);
        assert_eq!(pebble_value_structures(&a, &a, 2, LogicMode::Positive, &cfg).unwrap(), None);
    }

    #[test]
    fn positive_mode_only_sees_one_direction() {
        let sig = Arc::new(Signature::new([("E", 2)]));
        let edge = Structure::new("edge", Arc::clone(&sig), 2, vec![vec![vec![0, 1]]]).unwrap();
        let blank = Structure::new("blank", sig, 2, vec![vec![]]).unwrap();
        let cfg = PebbleConfig::default();
        // The edge fact cannot be pushed into the factless structure: two
        // rounds to exhibit the pair.
        assert_eq!(
            pebble_value_structures(&edge, &blank, 2, LogicMode::Positive, &cfg).unwrap(),
            Some(2)
        );
        // Every map out of the factless structure is a homomorphism.
        assert_eq!(
            pebble_value_structures(&blank, &edge, 2, LogicMode::Positive, &cfg).unwrap(),
            None
        );
    }

    #[test]
    fn pebbled_starting_positions_count_remaining_rounds() {
        let a = Arc::new(linear_order(3, "A"));
        let b = Arc::new(linear_order(2, "B"));
        let cfg = PebbleConfig::default();
        // Pebble 0 on the middle of the long order versus either end of the
        // short one: one more round always suffices.
        for target in 0..2 {
            let ba = Board::empty(Arc::clone(&a), 2).move_pebble(0, 1);
            let bb = Board::empty(Arc::clone(&b), 2).move_pebble(0, target);
            assert_eq!(pebble_value(&ba, &bb, LogicMode::Full, &cfg).unwrap(), Some(1));
        }
    }

    #[test]
    fn position_cap_is_enforced() {
        let a = linear_order(3, "A");
        let cfg = PebbleConfig { position_cap: 10 };
        match pebble_value_structures(&a, &a, 2, LogicMode::Full, &cfg) {
            Err(PebbleError::PositionCap { needed, cap }) => {
                assert_eq!(needed, 256);
                assert_eq!(cap, 10);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }
}
