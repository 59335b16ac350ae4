//! Pebbled boards and board sets, the positions of every game in this crate.
//!
//! A [`Board`] is a structure together with a partial placement of `k` pebbles on
//! its domain. Two boards on opposite sides match when the pebble correspondence
//! is a partial isomorphism (or, in the one-sided mode, a partial homomorphism).
//! [`prune_sets`] deletes boards with no matching partner on the opposite side;
//! the set-pair games treat a position as won once both sides prune to empty.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::structure::{Elem, Structure};

/// A partial placement of pebbles `0..k` on a domain.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Assignment {
    slots: Vec<Option<Elem>>,
}

impl Assignment {
    /// The all-unplaced assignment for `k` pebbles.
    pub fn empty(k: usize) -> Self {
        Assignment {
            slots: vec![None; k],
        }
    }

    pub fn from_slots(slots: Vec<Option<Elem>>) -> Self {
        Assignment { slots }
    }

    pub fn num_pebbles(&self) -> usize {
        self.slots.len()
    }

    pub fn get(&self, pebble: usize) -> Option<Elem> {
        self.slots[pebble]
    }

    pub fn slots(&self) -> &[Option<Elem>] {
        &self.slots
    }

    /// Indices of pebbles currently on the board.
    pub fn placed(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|_| i))
    }

    pub fn num_placed(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn with(&self, pebble: usize, elem: Elem) -> Assignment {
        let mut a = self.clone();
        a.slots[pebble] = Some(elem);
        a
    }

    pub fn without(&self, pebble: usize) -> Assignment {
        let mut a = self.clone();
        a.slots[pebble] = None;
        a
    }
}

/// A structure with a pebble assignment on it.
#[derive(Debug, Clone)]
pub struct Board {
    structure: Arc<Structure>,
    assignment: Assignment,
}

impl Board {
    pub fn new(structure: Arc<Structure>, assignment: Assignment) -> Self {
        Board {
            structure,
            assignment,
        }
    }

    /// A board on `structure` with `k` unplaced pebbles.
    pub fn empty(structure: Arc<Structure>, k: usize) -> Self {
        Board::new(structure, Assignment::empty(k))
    }

    pub fn structure(&self) -> &Arc<Structure> {
        &self.structure
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    /// Places (or re-places) one pebble, returning the successor board.
    pub fn move_pebble(&self, pebble: usize, elem: Elem) -> Board {
        assert!((elem as usize) < self.structure.domain_size());
        Board {
            structure: Arc::clone(&self.structure),
            assignment: self.assignment.with(pebble, elem),
        }
    }

    /// Lifts one pebble off the board, returning the successor board.
    pub fn remove_pebble(&self, pebble: usize) -> Board {
        Board {
            structure: Arc::clone(&self.structure),
            assignment: self.assignment.without(pebble),
        }
    }

    /// Stable identity bytes: structure name, content digest, then one byte tag
    /// plus element per pebble slot. Equal keys mean interchangeable boards.
    pub fn canonical_key(&self) -> Vec<u8> {
        let mut key = Vec::with_capacity(self.structure.name().len() + 12);
        key.extend_from_slice(self.structure.name().as_bytes());
        key.push(0);
        key.extend_from_slice(&self.structure.digest().to_be_bytes());
        for slot in self.assignment.slots() {
            match slot {
                None => key.push(0),
                Some(e) => {
                    key.push(1);
                    key.extend_from_slice(&e.to_be_bytes());
                }
            }
        }
        key
    }

    /// Human-oriented one-line rendering, used by transcripts and the REPL.
    pub fn render(&self) -> String {
        let mut out = String::new();
        write!(out, "{}[", self.structure.name()).unwrap();
        for (i, slot) in self.assignment.slots().iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            match slot {
                None => out.push('_'),
                Some(e) => write!(out, "{e}").unwrap(),
            }
        }
        out.push(']');
        out
    }
}

impl PartialEq for Board {
    fn eq(&self, other: &Self) -> bool {
        self.assignment == other.assignment
            && (Arc::ptr_eq(&self.structure, &other.structure)
                || (self.structure.name() == other.structure.name()
                    && self.structure.digest() == other.structure.digest()))
    }
}
impl Eq for Board {}

impl PartialOrd for Board {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Board {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.canonical_key().cmp(&other.canonical_key())
    }
}

/// Whether the pebble correspondence from `a` to `b` is a partial isomorphism:
/// both boards place the same pebbles, the induced element map is well defined
/// and injective, and every relation fact over pebbled elements transfers in
/// both directions.
pub fn check_partial_isomorphism(a: &Board, b: &Board) -> bool {
    if !same_placed(a, b) || !map_well_defined(a, b) || !map_well_defined(b, a) {
        return false;
    }
    rel_facts_transfer(a, b) && rel_facts_transfer(b, a)
}

/// Whether the pebble correspondence from `a` to `b` is a partial homomorphism:
/// same placed pebbles, well-defined element map, and relation facts over
/// pebbled elements transfer from `a` into `b` (one direction, no injectivity).
pub fn check_partial_homomorphism(a: &Board, b: &Board) -> bool {
    same_placed(a, b) && map_well_defined(a, b) && rel_facts_transfer(a, b)
}

fn same_placed(a: &Board, b: &Board) -> bool {
    a.assignment.num_pebbles() == b.assignment.num_pebbles()
        && a.assignment
            .slots()
            .iter()
            .zip(b.assignment.slots())
            .all(|(x, y)| x.is_some() == y.is_some())
}

/// Pebbles on equal elements in `a` must sit on equal elements in `b`.
fn map_well_defined(a: &Board, b: &Board) -> bool {
    let placed: Vec<usize> = a.assignment.placed().collect();
    for (pos, &i) in placed.iter().enumerate() {
        for &j in &placed[pos + 1..] {
            if a.assignment.get(i) == a.assignment.get(j)
                && b.assignment.get(i) != b.assignment.get(j)
            {
                return false;
            }
        }
    }
    true
}

/// Every relation fact of `a` over pebbled elements must hold of the pebble
/// images in `b`. Enumerates pebble tuples, not relation tuples, so the cost is
/// `k^arity` membership tests regardless of relation size.
fn rel_facts_transfer(a: &Board, b: &Board) -> bool {
    let placed: Vec<usize> = a.assignment.placed().collect();
    let sig = a.structure.signature();
    debug_assert_eq!(sig, b.structure.signature());
    for (ri, decl) in sig.relations().iter().enumerate() {
        if decl.arity > 0 && placed.is_empty() {
            continue;
        }
        let total = placed.len().max(1).pow(decl.arity as u32);
        let mut ta = vec![0 as Elem; decl.arity];
        let mut tb = vec![0 as Elem; decl.arity];
        for code in 0..total {
            let mut rest = code;
            for pos in 0..decl.arity {
                let p = placed[rest % placed.len()];
                rest /= placed.len();
                ta[pos] = a.assignment.get(p).unwrap();
                tb[pos] = b.assignment.get(p).unwrap();
            }
            if a.structure.holds(ri, &ta) && !b.structure.holds(ri, &tb) {
                return false;
            }
        }
    }
    true
}

/// One-sided versus two-sided board matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PruneMode {
    /// Partial isomorphism both ways.
    Iso,
    /// Partial homomorphism from the left side into the right side.
    Hom,
}

/// Whether a left-side board survives against a right-side board under `mode`.
pub fn boards_match(mode: PruneMode, left: &Board, right: &Board) -> bool {
    match mode {
        PruneMode::Iso => check_partial_isomorphism(left, right),
        PruneMode::Hom => check_partial_homomorphism(left, right),
    }
}

/// A deduplicated, canonically ordered set of boards on one side of a game.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoardSet {
    boards: Vec<Board>,
}

impl BoardSet {
    pub fn new(mut boards: Vec<Board>) -> Self {
        boards.sort();
        boards.dedup();
        BoardSet { boards }
    }

    pub fn empty() -> Self {
        BoardSet { boards: Vec::new() }
    }

    pub fn singleton(b: Board) -> Self {
        BoardSet { boards: vec![b] }
    }

    pub fn boards(&self) -> &[Board] {
        &self.boards
    }

    pub fn len(&self) -> usize {
        self.boards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boards.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Board> {
        self.boards.iter()
    }

    /// Concatenation of member keys; stable across runs.
    pub fn canonical_key(&self) -> Vec<u8> {
        let mut key = Vec::new();
        for b in &self.boards {
            let k = b.canonical_key();
            key.extend_from_slice(&(k.len() as u32).to_be_bytes());
            key.extend_from_slice(&k);
        }
        key
    }
}

impl FromIterator<Board> for BoardSet {
    fn from_iter<T: IntoIterator<Item = Board>>(iter: T) -> Self {
        BoardSet::new(iter.into_iter().collect())
    }
}

/// Deletes from each side every board with no `mode`-matching partner on the
/// other side, in one simultaneous pass. Survivors' partners always survive
/// too, so a single pass already reaches the fixpoint.
pub fn prune_sets(mode: PruneMode, left: &BoardSet, right: &BoardSet) -> (BoardSet, BoardSet) {
    let left_alive: Vec<Board> = left
        .iter()
        .filter(|a| right.iter().any(|b| boards_match(mode, a, b)))
        .cloned()
        .collect();
    let right_alive: Vec<Board> = right
        .iter()
        .filter(|b| left.iter().any(|a| boards_match(mode, a, b)))
        .cloned()
        .collect();
    (BoardSet { boards: left_alive }, BoardSet { boards: right_alive })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{linear_order, Signature};

    fn chain_boards(n_a: usize, n_b: usize, k: usize) -> (Board, Board) {
        let a = Arc::new(linear_order(n_a, "A"));
        let b = Arc::new(linear_order(n_b, "B"));
        (Board::empty(a, k), Board::empty(b, k))
    }

    #[test]
    fn empty_boards_are_partially_isomorphic() {
        let (a, b) = chain_boards(3, 2, 2);
        assert!(check_partial_isomorphism(&a, &b));
        assert!(check_partial_homomorphism(&a, &b));
    }

    #[test]
    fn edge_fact_must_transfer() {
        let (a, b) = chain_boards(3, 2, 2);
        let a = a.move_pebble(0, 0).move_pebble(1, 1);
        let good = b.move_pebble(0, 0).move_pebble(1, 1);
        let bad = b.move_pebble(0, 1).move_pebble(1, 0);
        assert!(check_partial_isomorphism(&a, &good));
        assert!(!check_partial_isomorphism(&a, &bad));
    }

    #[test]
    fn homomorphism_is_one_directional() {
        let sig = Arc::new(Signature::new([("E", 2)]));
        let blank = Arc::new(Structure::new("blank", Arc::clone(&sig), 2, vec![vec![]]).unwrap());
        let edge =
            Arc::new(Structure::new("edge", sig, 2, vec![vec![vec![0, 1]]]).unwrap());
        let bare = Board::empty(blank, 2).move_pebble(0, 0).move_pebble(1, 1);
        let linked = Board::empty(edge, 2).move_pebble(0, 0).move_pebble(1, 1);
        // The factless pair maps onto the edge, but the edge fact cannot be
        // pushed back onto the factless pair.
        assert!(check_partial_homomorphism(&bare, &linked));
        assert!(!check_partial_homomorphism(&linked, &bare));
        assert!(!check_partial_isomorphism(&bare, &linked));
    }

    #[test]
    fn injectivity_only_in_iso_mode() {
        let sig = Arc::new(Signature::new([("E", 2)]));
        let blank = Arc::new(Structure::new("blank", Arc::clone(&sig), 2, vec![vec![]]).unwrap());
        let point = Arc::new(Structure::new("point", sig, 1, vec![vec![]]).unwrap());
        let distinct = Board::empty(blank, 2).move_pebble(0, 0).move_pebble(1, 1);
        let collapsed = Board::empty(point, 2).move_pebble(0, 0).move_pebble(1, 0);
        assert!(!check_partial_isomorphism(&distinct, &collapsed));
        assert!(check_partial_homomorphism(&distinct, &collapsed));
    }

    #[test]
    fn mismatched_placement_never_matches() {
        let (a, b) = chain_boards(2, 2, 2);
        let placed = a.move_pebble(0, 0);
        assert!(!check_partial_isomorphism(&placed, &b));
        assert!(!check_partial_homomorphism(&placed, &b));
    }

    #[test]
    fn prune_removes_exactly_dead_boards() {
        let (a, b) = chain_boards(3, 3, 2);
        // Left: an ordered pair and a collapsed pair. Right: only an ordered
        // pair, so the collapsed board has no partner.
        let left = BoardSet::new(vec![
            a.move_pebble(0, 0).move_pebble(1, 1),
            a.move_pebble(0, 0).move_pebble(1, 0),
        ]);
        let right = BoardSet::singleton(b.move_pebble(0, 1).move_pebble(1, 2));
        let (l2, r2) = prune_sets(PruneMode::Iso, &left, &right);
        assert_eq!(l2.len(), 1);
        assert_eq!(r2.len(), 1);
        assert!(check_partial_isomorphism(&l2.boards()[0], &r2.boards()[0]));
    }

    #[test]
    fn prune_one_pass_is_fixpoint() {
        let (a, b) = chain_boards(3, 3, 2);
        let left = BoardSet::new(vec![
            a.move_pebble(0, 0),
            a.move_pebble(0, 0).move_pebble(1, 1),
        ]);
        let right = BoardSet::new(vec![
            b.move_pebble(0, 2),
            b.move_pebble(0, 0).move_pebble(1, 2),
        ]);
        let (l1, r1) = prune_sets(PruneMode::Iso, &left, &right);
        let (l2, r2) = prune_sets(PruneMode::Iso, &l1, &r1);
        assert_eq!(l1, l2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn board_set_deduplicates() {
        let (a, _) = chain_boards(3, 3, 2);
        let set = BoardSet::new(vec![
            a.move_pebble(0, 1),
            a.move_pebble(0, 1),
            a.clone(),
        ]);
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn canonical_keys_are_stable_and_distinct() {
        let (a, _) = chain_boards(3, 3, 2);
        let k1 = a.move_pebble(0, 1).canonical_key();
        let k2 = a.move_pebble(0, 1).canonical_key();
        let k3 = a.move_pebble(0, 2).canonical_key();
        let k4 = a.move_pebble(1, 1).canonical_key();
        assert_eq!(k1, k2);
        assert_ne!(k1, k3);
        assert_ne!(k1, k4);
    }
}
