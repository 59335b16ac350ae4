//! The cumulative-points variant of the set-splitting game, which the linear
//! lower-bound machinery plays.
//!
//! Both sides evolve in place; there is no tree. Each round Spoiler may
//! propose set partitions before the round's single pebble move: for a
//! partition into `d` parts, Duplicator keeps a nonempty subset of the parts,
//! Spoiler continues with one kept part, and the round's point weight
//! multiplies by the subset size. Consecutive partitions may not hit the same
//! side twice in a row, but alternating ones may chain. The pebble move ends
//! the round, the deletion step runs, and Duplicator banks the current weight
//! whether or not the position just died. Duplicator plays to maximize the
//! banked total before the position dies; Spoiler plays to minimize it.
//!
//! The recursion reports a pair of one-sided values at a finite round
//! horizon. The pessimistic component awards nothing past the horizon, the
//! optimistic component awards everything; they agree exactly when the
//! horizon no longer matters, and otherwise the pessimistic value stands as
//! a guaranteed lower bound on Duplicator's total.
//!
//! Duplicator could also be allowed to discard boards voluntarily, but a
//! discarded board only removes options from later survival checks, so the
//! value recursion omits the move class entirely; the match runner still
//! accepts such discards from live opponents.
//!
//! Positions are bitmasks over a precomputed universe holding every pebble
//! placement of every structure on a side, and the deletion step reads a
//! pairwise match matrix built once up front, so the search spends its time
//! on game tree shape rather than on re-deriving atomic facts.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use thiserror::Error;

use crate::board::{boards_match, Board, BoardSet};
use crate::games::Side;
use crate::structure::Structure;
use crate::LogicMode;

/// Caps for the points-game search.
#[derive(Debug, Clone)]
pub struct LbConfig {
    /// Maximum boards per side in any reached set; partition enumeration is
    /// exponential in this.
    pub max_boards: usize,
}

impl Default for LbConfig {
    fn default() -> Self {
        LbConfig { max_boards: 10 }
    }
}

/// Hard cap on the per-side placement universe, the width of a position word.
const UNIVERSE_CAP: usize = 128;

#[derive(Debug, Error)]
pub enum LbError {
    #[error("side holds {got} boards, cap is {cap}")]
    BoardCap { got: usize, cap: usize },
    #[error("the side's placement universe holds {got} boards, cap is {cap}")]
    UniverseCap { got: usize, cap: usize },
    #[error("board carries {got} pebble slots, the game uses {k}")]
    SlotCount { got: usize, k: usize },
    #[error("the game needs at least one pebble")]
    NoPebbles,
    #[error("board over '{0}' has an empty domain")]
    EmptyDomain(String),
}

/// Duplicator's guaranteed points within a round horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbOutcome {
    /// The horizon did not bind; this is the exact game value.
    Exact(u64),
    /// Duplicator banks at least this much and the game may run longer.
    AtLeast(u64),
}

impl LbOutcome {
    pub fn points(self) -> u64 {
        match self {
            LbOutcome::Exact(p) | LbOutcome::AtLeast(p) => p,
        }
    }
}

/// Future points seen pessimistically and optimistically; `None` models an
/// unbounded optimistic tail.
type Pair = (u64, Option<u64>);

/// Duplicator's guaranteed points from two sets of `k`-pebbled boards within
/// `horizon` rounds.
pub fn lb_value(
    left: &BoardSet,
    right: &BoardSet,
    k: usize,
    mode: LogicMode,
    horizon: usize,
    cfg: &LbConfig,
) -> Result<LbOutcome, LbError> {
    let mut engine = Engine::build(left, right, k, mode, cfg.clone())?;
    let (l0, r0) = (engine.initial_left, engine.initial_right);
    let (l, r) = engine.prune(l0, r0);
    if engine.dead(l, r) {
        return Ok(LbOutcome::Exact(0));
    }
    let (pess, opt) = engine.rec(l, r, None, horizon)?;
    Ok(match opt {
        Some(o) if o == pess => LbOutcome::Exact(pess),
        _ => LbOutcome::AtLeast(pess),
    })
}

/// Sentence-level convenience: singleton sets of empty boards.
pub fn lb_value_structures(
    a: &Structure,
    b: &Structure,
    k: usize,
    mode: LogicMode,
    horizon: usize,
    cfg: &LbConfig,
) -> Result<LbOutcome, LbError> {
    let l = BoardSet::singleton(Board::empty(Arc::new(a.clone()), k));
    let r = BoardSet::singleton(Board::empty(Arc::new(b.clone()), k));
    lb_value(&l, &r, k, mode, horizon, cfg)
}

/// Every placement of `k` pebbles on every structure appearing on one side,
/// indexed by radix codes so pebble moves are digit arithmetic.
struct Space {
    structs: Vec<Arc<Structure>>,
    /// Universe offset of each structure's code block.
    base: Vec<usize>,
    total: usize,
    /// Universe index to owning structure.
    owner: Vec<usize>,
    /// Universe index to placement code.
    code: Vec<u64>,
}

impl Space {
    fn build(sets: &BoardSet, k: usize) -> Result<Space, LbError> {
        let mut structs: Vec<Arc<Structure>> = Vec::new();
        for b in sets.iter() {
            if !structs.iter().any(|s| **s == **b.structure()) {
                structs.push(Arc::clone(b.structure()));
            }
        }
        let mut base = Vec::with_capacity(structs.len());
        let mut total = 0usize;
        for s in &structs {
            base.push(total);
            let radix = s.domain_size() + 1;
            let block = radix.checked_pow(k as u32).filter(|&b| b <= UNIVERSE_CAP);
            match block {
                Some(b) if total + b <= UNIVERSE_CAP => total += b,
                _ => {
                    return Err(LbError::UniverseCap {
                        got: total.saturating_add(radix.saturating_pow(k as u32)),
                        cap: UNIVERSE_CAP,
                    })
                }
            }
        }
        let mut owner = Vec::with_capacity(total);
        let mut code = Vec::with_capacity(total);
        for (sid, s) in structs.iter().enumerate() {
            let radix = (s.domain_size() + 1) as u64;
            let block = radix.pow(k as u32);
            for c in 0..block {
                owner.push(sid);
                code.push(c);
            }
        }
        Ok(Space { structs, base, total, owner, code })
    }

    fn sid_of(&self, s: &Arc<Structure>) -> usize {
        self.structs.iter().position(|t| **t == **s).unwrap()
    }

    fn index(&self, b: &Board, k: usize) -> usize {
        let sid = self.sid_of(b.structure());
        let radix = (self.structs[sid].domain_size() + 1) as u64;
        let mut c = 0u64;
        for p in (0..k).rev() {
            let digit = match b.assignment().get(p) {
                None => 0,
                Some(e) => e as u64 + 1,
            };
            c = c * radix + digit;
        }
        self.base[sid] + c as usize
    }

    fn board(&self, idx: usize, k: usize) -> Board {
        let sid = self.owner[idx];
        let s = &self.structs[sid];
        let radix = (s.domain_size() + 1) as u64;
        let mut c = self.code[idx];
        let mut slots = Vec::with_capacity(k);
        for _ in 0..k {
            let digit = c % radix;
            c /= radix;
            slots.push(if digit == 0 { None } else { Some(digit as u32 - 1) });
        }
        Board::new(Arc::clone(s), crate::board::Assignment::from_slots(slots))
    }

    /// Universe index after moving `pebble` to `target` on board `idx`.
    fn moved(&self, idx: usize, pebble: usize, target: usize) -> usize {
        let sid = self.owner[idx];
        let radix = (self.structs[sid].domain_size() + 1) as u64;
        let weight = radix.pow(pebble as u32);
        let old_digit = (self.code[idx] / weight) % radix;
        let new_code = self.code[idx] - old_digit * weight + (target as u64 + 1) * weight;
        self.base[sid] + new_code as usize
    }

    fn domain_of(&self, idx: usize) -> usize {
        self.structs[self.owner[idx]].domain_size()
    }
}

struct Engine {
    k: usize,
    mode: LogicMode,
    cfg: LbConfig,
    left: Space,
    right: Space,
    /// Per left universe index, the matching right boards.
    row: Vec<u128>,
    /// Per right universe index, the matching left boards.
    col: Vec<u128>,
    /// Per pebble then universe index, all same-board copy placements.
    left_copies: Vec<Vec<u128>>,
    right_copies: Vec<Vec<u128>>,
    initial_left: u128,
    initial_right: u128,
    memo: HashMap<(u128, u128, u8, usize), Pair>,
    partitions: HashMap<usize, Arc<Vec<Vec<u8>>>>,
}

impl Engine {
    fn build(
        left: &BoardSet,
        right: &BoardSet,
        k: usize,
        mode: LogicMode,
        cfg: LbConfig,
    ) -> Result<Engine, LbError> {
        if k == 0 {
            return Err(LbError::NoPebbles);
        }
        for b in left.iter().chain(right.iter()) {
            if b.assignment().num_pebbles() != k {
                return Err(LbError::SlotCount { got: b.assignment().num_pebbles(), k });
            }
            if b.structure().domain_size() == 0 {
                return Err(LbError::EmptyDomain(b.structure().name().to_string()));
            }
        }
        let lspace = Space::build(left, k)?;
        let rspace = Space::build(right, k)?;

        let prune_mode = mode.prune_mode();
        let mut row = vec![0u128; lspace.total];
        let mut col = vec![0u128; rspace.total];
        for (i, r) in row.iter_mut().enumerate() {
            let lb = lspace.board(i, k);
            for (c, cl) in col.iter_mut().enumerate() {
                let rb = rspace.board(c, k);
                if boards_match(prune_mode, &lb, &rb) {
                    *r |= 1u128 << c;
                    *cl |= 1u128 << i;
                }
            }
        }

        let copies_of = |space: &Space| -> Vec<Vec<u128>> {
            (0..k)
                .map(|p| {
                    (0..space.total)
                        .map(|idx| {
                            let mut m = 0u128;
                            for e in 0..space.domain_of(idx) {
                                m |= 1u128 << space.moved(idx, p, e);
                            }
                            m
                        })
                        .collect()
                })
                .collect()
        };
        let left_copies = copies_of(&lspace);
        let right_copies = copies_of(&rspace);

        let mut initial_left = 0u128;
        for b in left.iter() {
            initial_left |= 1u128 << lspace.index(b, k);
        }
        let mut initial_right = 0u128;
        for b in right.iter() {
            initial_right |= 1u128 << rspace.index(b, k);
        }

        Ok(Engine {
            k,
            mode,
            cfg,
            left: lspace,
            right: rspace,
            row,
            col,
            left_copies,
            right_copies,
            initial_left,
            initial_right,
            memo: HashMap::new(),
            partitions: HashMap::new(),
        })
    }

    /// The deletion step: one simultaneous pass against the other side's
    /// current boards. The positive fragment never deletes on the left.
    fn prune(&self, l: u128, r: u128) -> (u128, u128) {
        match self.mode {
            LogicMode::Full => {
                let mut nl = 0u128;
                let mut m = l;
                while m != 0 {
                    let i = m.trailing_zeros() as usize;
                    m &= m - 1;
                    if self.row[i] & r != 0 {
                        nl |= 1u128 << i;
                    }
                }
                let mut nr = 0u128;
                let mut m = r;
                while m != 0 {
                    let c = m.trailing_zeros() as usize;
                    m &= m - 1;
                    if self.col[c] & l != 0 {
                        nr |= 1u128 << c;
                    }
                }
                (nl, nr)
            }
            LogicMode::Positive => {
                let mut nr = 0u128;
                let mut m = r;
                while m != 0 {
                    let c = m.trailing_zeros() as usize;
                    m &= m - 1;
                    if self.col[c] & l != 0 {
                        nr |= 1u128 << c;
                    }
                }
                (l, nr)
            }
        }
    }

    fn dead(&self, l: u128, r: u128) -> bool {
        match self.mode {
            LogicMode::Full => l == 0 || r == 0,
            LogicMode::Positive => r == 0,
        }
    }

    /// Future points from a live position, normalized to weight one; callers
    /// scale split children by the subset degree.
    fn rec(
        &mut self,
        l: u128,
        r: u128,
        last_split: Option<Side>,
        rounds_left: usize,
    ) -> Result<Pair, LbError> {
        if rounds_left == 0 {
            return Ok((0, None));
        }
        let got = (l.count_ones().max(r.count_ones())) as usize;
        if got > self.cfg.max_boards {
            return Err(LbError::BoardCap { got, cap: self.cfg.max_boards });
        }
        let key = (l, r, encode_last(last_split), rounds_left);
        if let Some(&hit) = self.memo.get(&key) {
            return Ok(hit);
        }

        let mut best: Option<Pair> = None;
        self.pebble_options(l, r, rounds_left, &mut best)?;
        self.split_options(l, r, last_split, rounds_left, &mut best)?;
        let val = best.expect("a live position always has a pebble move");
        self.memo.insert(key, val);
        Ok(val)
    }

    fn pebble_options(
        &mut self,
        l: u128,
        r: u128,
        rounds_left: usize,
        best: &mut Option<Pair>,
    ) -> Result<(), LbError> {
        let sides: &[Side] = match self.mode {
            LogicMode::Full => &[Side::Left, Side::Right],
            LogicMode::Positive => &[Side::Left],
        };
        let mut seen: HashSet<(u128, u128)> = HashSet::new();
        for &side in sides {
            let (mover_mask, mover_space) = match side {
                Side::Left => (l, &self.left),
                Side::Right => (r, &self.right),
            };
            let movers: Vec<usize> = bits(mover_mask).collect();
            let domains: Vec<usize> =
                movers.iter().map(|&i| mover_space.domain_of(i)).collect();
            for pebble in 0..self.k {
                let answer_mask = {
                    let (amask, copies) = match side {
                        Side::Left => (r, &self.right_copies),
                        Side::Right => (l, &self.left_copies),
                    };
                    let mut m = 0u128;
                    for c in bits(amask) {
                        m |= copies[pebble][c];
                    }
                    m
                };
                let mut targets = vec![0usize; movers.len()];
                loop {
                    let moved_mask = {
                        let space = match side {
                            Side::Left => &self.left,
                            Side::Right => &self.right,
                        };
                        let mut m = 0u128;
                        for (&i, &t) in movers.iter().zip(&targets) {
                            m |= 1u128 << space.moved(i, pebble, t);
                        }
                        m
                    };
                    let (l2, r2) = match side {
                        Side::Left => (moved_mask, answer_mask),
                        Side::Right => (answer_mask, moved_mask),
                    };
                    let (pl, pr) = self.prune(l2, r2);
                    if seen.insert((pl, pr)) {
                        let val = if self.dead(pl, pr) {
                            (1, Some(1))
                        } else {
                            let (p, o) = self.rec(pl, pr, None, rounds_left - 1)?;
                            (p.saturating_add(1), o.map(|x| x.saturating_add(1)))
                        };
                        *best = Some(match best.take() {
                            None => val,
                            Some(b) => pair_min(b, val),
                        });
                    }
                    if !step_odometer(&mut targets, &domains) {
                        break;
                    }
                }
            }
        }
        Ok(())
    }

    fn split_options(
        &mut self,
        l: u128,
        r: u128,
        last_split: Option<Side>,
        rounds_left: usize,
        best: &mut Option<Pair>,
    ) -> Result<(), LbError> {
        for side in [Side::Left, Side::Right] {
            if last_split == Some(side) {
                continue;
            }
            let mover_mask = match side {
                Side::Left => l,
                Side::Right => r,
            };
            let movers: Vec<usize> = bits(mover_mask).collect();
            let m = movers.len();
            if m < 2 {
                continue;
            }
            let labelings = self.labelings(m);
            'partition: for labels in labelings.iter() {
                let parts = 1 + *labels.iter().max().unwrap() as usize;
                let mut child_vals = Vec::with_capacity(parts);
                for part in 0..parts as u8 {
                    let mut piece = 0u128;
                    for (&idx, &lab) in movers.iter().zip(labels) {
                        if lab == part {
                            piece |= 1u128 << idx;
                        }
                    }
                    let (cl, cr) = match side {
                        Side::Left => (piece, r),
                        Side::Right => (l, piece),
                    };
                    let val = self.rec(cl, cr, Some(side), rounds_left)?;
                    // Duplicator may keep this part alone, so the whole
                    // partition is worth at least `val` to them; once that
                    // matches the current best in both components the
                    // partition cannot improve anything.
                    if let Some(b) = best {
                        if val.0 >= b.0 && opt_ge(val.1, b.1) {
                            continue 'partition;
                        }
                    }
                    child_vals.push(val);
                }
                let val = duplicator_keep(&child_vals);
                *best = Some(match best.take() {
                    None => val,
                    Some(b) => pair_min(b, val),
                });
            }
        }
        Ok(())
    }

    /// All ways to label `m` boards with at least two part labels, in
    /// restricted-growth form so each partition appears once.
    fn labelings(&mut self, m: usize) -> Arc<Vec<Vec<u8>>> {
        if let Some(hit) = self.partitions.get(&m) {
            return Arc::clone(hit);
        }
        let mut out = Vec::new();
        let mut labels = vec![0u8; m];
        grow_labels(&mut labels, 1, &mut out);
        let arc = Arc::new(out);
        self.partitions.insert(m, Arc::clone(&arc));
        arc
    }
}

fn bits(mut mask: u128) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            return None;
        }
        let i = mask.trailing_zeros() as usize;
        mask &= mask - 1;
        Some(i)
    })
}

fn grow_labels(labels: &mut Vec<u8>, pos: usize, out: &mut Vec<Vec<u8>>) {
    if pos == labels.len() {
        if labels.iter().any(|&l| l > 0) {
            out.push(labels.clone());
        }
        return;
    }
    let roof = labels[..pos].iter().copied().max().unwrap() + 1;
    for lab in 0..=roof {
        labels[pos] = lab;
        grow_labels(labels, pos + 1, out);
    }
    labels[pos] = 0;
}

/// Duplicator's best keep-set over split children: for each kept count `s`,
/// the banked weight multiplies by `s` and Spoiler continues in the cheapest
/// kept child, so the `s`-th largest child value times `s` competes. The two
/// components optimize independently.
fn duplicator_keep(children: &[Pair]) -> Pair {
    let mut pess: Vec<u64> = children.iter().map(|&(p, _)| p).collect();
    pess.sort_unstable_by(|a, b| b.cmp(a));
    let best_pess = pess
        .iter()
        .enumerate()
        .map(|(i, &v)| v.saturating_mul(i as u64 + 1))
        .max()
        .unwrap();

    let mut opt: Vec<Option<u64>> = children.iter().map(|&(_, o)| o).collect();
    opt.sort_unstable_by(|a, b| match (a, b) {
        (None, None) => std::cmp::Ordering::Equal,
        (None, Some(_)) => std::cmp::Ordering::Less,
        (Some(_), None) => std::cmp::Ordering::Greater,
        (Some(x), Some(y)) => y.cmp(x),
    });
    let mut best_opt: Option<u64> = Some(0);
    for (i, &v) in opt.iter().enumerate() {
        match v {
            None => {
                best_opt = None;
                break;
            }
            Some(x) => {
                let cand = x.saturating_mul(i as u64 + 1);
                if let Some(cur) = best_opt {
                    if cand > cur {
                        best_opt = Some(cand);
                    }
                }
            }
        }
    }
    (best_pess, best_opt)
}

/// Whether optimistic value `a` is at least `b`, with `None` as infinity.
fn opt_ge(a: Option<u64>, b: Option<u64>) -> bool {
    match (a, b) {
        (None, _) => true,
        (Some(_), None) => false,
        (Some(x), Some(y)) => x >= y,
    }
}

fn pair_min(a: Pair, b: Pair) -> Pair {
    let opt = match (a.1, b.1) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => Some(x.min(y)),
    };
    (a.0.min(b.0), opt)
}

fn encode_last(last: Option<Side>) -> u8 {
    match last {
        None => 0,
        Some(Side::Left) => 1,
        Some(Side::Right) => 2,
    }
}

fn step_odometer(digits: &mut [usize], domains: &[usize]) -> bool {
    for pos in (0..digits.len()).rev() {
        digits[pos] += 1;
        if digits[pos] < domains[pos] {
            return true;
        }
        digits[pos] = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{linear_order, Signature};

    #[test]
    fn dead_start_scores_zero() {
        let three = Arc::new(linear_order(3, "A"));
        let two = Arc::new(linear_order(2, "B"));
        let l = BoardSet::singleton(Board::empty(three, 2).move_pebble(0, 0).move_pebble(1, 2));
        let r = BoardSet::singleton(Board::empty(two, 2).move_pebble(0, 1).move_pebble(1, 0));
        let cfg = LbConfig::default();
        let out = lb_value(&l, &r, 2, LogicMode::Full, 5, &cfg).unwrap();
        assert_eq!(out, LbOutcome::Exact(0));
    }

    #[test]
    fn three_versus_two_orders_cost_few_points() {
        let a = linear_order(3, "A");
        let b = linear_order(2, "B");
        let cfg = LbConfig::default();
        let out = lb_value_structures(&a, &b, 2, LogicMode::Full, 5, &cfg).unwrap();
        match out {
            LbOutcome::Exact(p) => assert!((2..=3).contains(&p), "points {p}"),
            LbOutcome::AtLeast(p) => panic!("expected a settled value, got at least {p}"),
        }
    }

    #[test]
    fn identical_structures_bank_one_point_per_round() {
        let a = linear_order(2, "A");
        let cfg = LbConfig::default();
        let out = lb_value_structures(&a, &a, 2, LogicMode::Full, 3, &cfg).unwrap();
        assert_eq!(out, LbOutcome::AtLeast(3));
    }

    #[test]
    fn positive_fragment_charges_two_rounds_for_an_edge() {
        let sig = Arc::new(Signature::new([("E", 2)]));
        let edge = Structure::new("edge", Arc::clone(&sig), 2, vec![vec![vec![0, 1]]]).unwrap();
        let blank = Structure::new("blank", sig, 2, vec![vec![]]).unwrap();
        let cfg = LbConfig::default();
        let out = lb_value_structures(&edge, &blank, 2, LogicMode::Positive, 4, &cfg).unwrap();
        assert_eq!(out, LbOutcome::Exact(2));
    }
}
