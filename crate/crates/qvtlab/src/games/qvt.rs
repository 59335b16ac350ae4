//! Exact minimum quantifier counts via the set-splitting pebble game, plus
//! witness formulas read off the winning strategy.
//!
//! The value recursion works on pruned pairs of board sets. A position whose
//! deletion step wipes the distinguishing side has value zero. Otherwise the
//! mover either performs a pebble move (pick a side, a pebble, and a target
//! element on every board there; the other side keeps every possible
//! placement; cost one plus the value of the pruned successor) or splits one
//! side in two (the children share the other side; the values add). Binary
//! splits chain into arbitrary ones without changing the value, because split
//! children are independent subgames; a config flag additionally enumerates
//! three-way splits so that claim can be spot-checked.
//!
//! Search is branch-and-bound under iterative deepening on the quantifier
//! budget, with a memo table keyed by the canonical keys of the pruned sets
//! that stores exact values, best moves, and lower bounds; all three survive
//! across deepening rounds. Whether any finite value exists at all is decided
//! up front by playing the plain pebble game on every cross pair of boards: a
//! single surviving pair means the sets agree on the whole logic, and
//! otherwise the sum of the per-pair formula-count bounds caps the deepening.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use thiserror::Error;

use crate::board::{Board, BoardSet};
use crate::eval::eval_table;
use crate::formula::Formula;
use crate::games::pebble::{pebble_value, PebbleConfig, PebbleError};
use crate::games::{position_dead, prune_round, Side};
use crate::structure::{Elem, Structure};
use crate::LogicMode;

/// Caps for the value search.
#[derive(Debug, Clone)]
pub struct QvtConfig {
    /// Maximum boards per side after pruning.
    pub max_boards: usize,
    /// Largest quantifier budget the deepening loop will try.
    pub budget_cap: usize,
    /// Also enumerate three-way splits. Never changes the value; exists so
    /// that claim can be checked.
    pub ternary_splits: bool,
    /// Position cap for the per-pair survival games.
    pub position_cap: usize,
}

impl Default for QvtConfig {
    fn default() -> Self {
        QvtConfig {
            max_boards: 12,
            budget_cap: 64,
            ternary_splits: false,
            position_cap: 4_000_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum QvtError {
    #[error("side holds {got} boards, cap is {cap}; value is at least {lower_bound}")]
    BoardCap { got: usize, cap: usize, lower_bound: usize },
    #[error("no value up to budget {budget}; true value is at least {lower_bound}")]
    Budget { budget: usize, lower_bound: usize },
    #[error("board carries {got} pebble slots, the game uses {k}")]
    SlotCount { got: usize, k: usize },
    #[error("the sets agree on every formula of the logic; no witness exists")]
    ValueInfinite,
    #[error("no formula of the logic can express this separation")]
    Unrepresentable,
    #[error(transparent)]
    Survival(#[from] PebbleError),
}

/// A mover decision at a pruned position. Board indices follow the canonical
/// order of the pruned set on the named side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MoveRec {
    /// Move `pebble` onto `targets[i]` on the i-th board of `side`; the other
    /// side keeps all placements.
    Pebble { side: Side, pebble: usize, targets: Vec<Elem> },
    /// Partition `side` by part label per board.
    Split { side: Side, labels: Vec<u8> },
}

struct Entry {
    lower: usize,
    exact: Option<(usize, MoveRec)>,
}

enum SolveRes {
    Exact(usize),
    Deeper,
}

/// Solver for one pair of starting sets. Holds the memo table so a witness
/// can be read off after the value search.
pub struct QvtSolver {
    k: usize,
    mode: LogicMode,
    cfg: QvtConfig,
    left: BoardSet,
    right: BoardSet,
    memo: HashMap<(Vec<u8>, Vec<u8>), Entry>,
    outcome: Option<Option<usize>>,
}

impl QvtSolver {
    pub fn new(
        left: BoardSet,
        right: BoardSet,
        k: usize,
        mode: LogicMode,
        cfg: QvtConfig,
    ) -> Result<QvtSolver, QvtError> {
        for b in left.iter().chain(right.iter()) {
            if b.assignment().num_pebbles() != k {
                return Err(QvtError::SlotCount { got: b.assignment().num_pebbles(), k });
            }
        }
        Ok(QvtSolver { k, mode, cfg, left, right, memo: HashMap::new(), outcome: None })
    }

    pub fn mode(&self) -> LogicMode {
        self.mode
    }

    /// Minimum number of quantifiers in a formula of the logic the two sides
    /// disagree on, or `None` when they agree on the whole logic.
    pub fn value(&mut self) -> Result<Option<usize>, QvtError> {
        if let Some(v) = self.outcome {
            return Ok(v);
        }
        let (l, r) = prune_round(self.mode, &self.left, &self.right);
        if position_dead(self.mode, &l, &r) {
            self.outcome = Some(Some(0));
            return Ok(Some(0));
        }

        // Survival gate: one cross pair the mover can never crack means no
        // separating formula exists at all. Otherwise the per-pair round
        // counts cap the quantifier count of some separating formula, namely
        // the sum over pairs of 1 + n + ... + n^(rounds-1).
        let pcfg = PebbleConfig { position_cap: self.cfg.position_cap };
        let mut cap: u64 = 0;
        for u in l.iter() {
            for v in r.iter() {
                match pebble_value(u, v, self.mode, &pcfg)? {
                    None => {
                        self.outcome = Some(None);
                        return Ok(None);
                    }
                    Some(rounds) => {
                        let n = u
                            .structure()
                            .domain_size()
                            .max(v.structure().domain_size())
                            as u64;
                        let mut bound: u64 = 0;
                        let mut pow: u64 = 1;
                        for _ in 0..rounds {
                            bound = bound.saturating_add(pow);
                            pow = pow.saturating_mul(n);
                        }
                        cap = cap.saturating_add(bound);
                    }
                }
            }
        }
        let deepen_to = (cap.min(self.cfg.budget_cap as u64)) as usize;

        for budget in 0..=deepen_to {
            match self.solve(&l, &r, budget).map_err(|e| at_least(e, budget))? {
                SolveRes::Exact(v) => {
                    self.outcome = Some(Some(v));
                    return Ok(Some(v));
                }
                SolveRes::Deeper => {}
            }
        }
        Err(QvtError::Budget { budget: deepen_to, lower_bound: deepen_to + 1 })
    }

    /// A separating formula with exactly `value()` quantifiers, assembled from
    /// the recorded strategy: atomic-type disjunctions at won positions,
    /// guarded existential steps for pebble moves, guarded conjunctions for
    /// splits, with the whole construction mirrored through a negation when
    /// the recorded move acts on the right side.
    pub fn witness(&mut self) -> Result<Formula, QvtError> {
        let value = match self.value()? {
            Some(v) => v,
            None => return Err(QvtError::ValueInfinite),
        };
        let (left, right) = (self.left.clone(), self.right.clone());
        let part = self.reconstruct(&left, &right)?;
        let formula = match part {
            Part::F(f) => f,
            // A truth-like or falsity-like separator needs a placed pebble to
            // anchor the tautology on.
            Part::Top => Formula::truth(first_placed(&left).ok_or(QvtError::Unrepresentable)?),
            Part::Bottom => {
                Formula::falsity(first_placed(&left).ok_or(QvtError::Unrepresentable)?)
            }
        };
        debug_assert_eq!(formula.quant_count(), value);
        Ok(formula)
    }

    /// Solved value and recorded best move for an arbitrary position, growing
    /// the memo as needed; `None` when the position is dead or can never be
    /// won. Play agents use this to follow the recorded strategy even after
    /// an opponent wanders off the originally solved line.
    pub fn best_move(
        &mut self,
        left: &BoardSet,
        right: &BoardSet,
    ) -> Result<Option<(usize, MoveRec)>, QvtError> {
        let (l, r) = prune_round(self.mode, left, right);
        if position_dead(self.mode, &l, &r) {
            return Ok(None);
        }
        let pcfg = PebbleConfig { position_cap: self.cfg.position_cap };
        for u in l.iter() {
            for v in r.iter() {
                if pebble_value(u, v, self.mode, &pcfg)?.is_none() {
                    return Ok(None);
                }
            }
        }
        for budget in 0..=self.cfg.budget_cap {
            if let SolveRes::Exact(v) = self.solve(&l, &r, budget)? {
                let key = (l.canonical_key(), r.canonical_key());
                let mv = self
                    .memo
                    .get(&key)
                    .and_then(|e| e.exact.as_ref())
                    .map(|(_, m)| m.clone())
                    .expect("an exact live value records its move");
                return Ok(Some((v, mv)));
            }
        }
        Err(QvtError::Budget {
            budget: self.cfg.budget_cap,
            lower_bound: self.cfg.budget_cap + 1,
        })
    }

    /// Value search on an already pruned, live position. `Exact` results are
    /// true values; `Deeper` proves the value exceeds `budget`.
    fn solve(&mut self, l: &BoardSet, r: &BoardSet, budget: usize) -> Result<SolveRes, QvtError> {
        if l.len() > self.cfg.max_boards || r.len() > self.cfg.max_boards {
            return Err(QvtError::BoardCap {
                got: l.len().max(r.len()),
                cap: self.cfg.max_boards,
                lower_bound: 0,
            });
        }
        let key = (l.canonical_key(), r.canonical_key());
        if let Some(e) = self.memo.get(&key) {
            if let Some((v, _)) = &e.exact {
                return Ok(if *v <= budget { SolveRes::Exact(*v) } else { SolveRes::Deeper });
            }
            if e.lower > budget {
                return Ok(SolveRes::Deeper);
            }
        }

        let mut best: Option<(usize, MoveRec)> = None;
        self.try_pebbles(l, r, budget, &mut best)?;
        self.try_splits(l, r, budget, &mut best)?;

        match best {
            Some((v, mv)) => {
                self.memo.insert(key, Entry { lower: v, exact: Some((v, mv)) });
                Ok(SolveRes::Exact(v))
            }
            None => {
                let e = self.memo.entry(key).or_insert(Entry { lower: 0, exact: None });
                e.lower = e.lower.max(budget + 1);
                Ok(SolveRes::Deeper)
            }
        }
    }

    /// Prunes a successor or split child and scores it, sharing the dedup set
    /// so equal children are costed once.
    fn child(
        &mut self,
        l: &BoardSet,
        r: &BoardSet,
        budget: usize,
    ) -> Result<SolveRes, QvtError> {
        let (pl, pr) = prune_round(self.mode, l, r);
        if position_dead(self.mode, &pl, &pr) {
            return Ok(SolveRes::Exact(0));
        }
        self.solve(&pl, &pr, budget)
    }

    fn try_pebbles(
        &mut self,
        l: &BoardSet,
        r: &BoardSet,
        budget: usize,
        best: &mut Option<(usize, MoveRec)>,
    ) -> Result<(), QvtError> {
        let sides: &[Side] = match self.mode {
            LogicMode::Full => &[Side::Left, Side::Right],
            LogicMode::Positive => &[Side::Left],
        };
        for &side in sides {
            let (mover, answerer) = match side {
                Side::Left => (l, r),
                Side::Right => (r, l),
            };
            let domains: Vec<usize> =
                mover.iter().map(|b| b.structure().domain_size()).collect();
            if domains.iter().any(|&d| d == 0) {
                continue;
            }
            for pebble in 0..self.k {
                let mut seen: HashSet<(Vec<u8>, Vec<u8>)> = HashSet::new();
                let mut targets = vec![0 as Elem; mover.len()];
                loop {
                    let limit = match best {
                        Some((b, _)) => budget.min(b.saturating_sub(1)),
                        None => budget,
                    };
                    if limit >= 1 {
                        let (moved, copies) = apply_pebble(mover, answerer, pebble, &targets);
                        let (l2, r2) = match side {
                            Side::Left => (moved, copies),
                            Side::Right => (copies, moved),
                        };
                        let succ_key = (l2.canonical_key(), r2.canonical_key());
                        if seen.insert(succ_key) {
                            if let SolveRes::Exact(s) = self.child(&l2, &r2, limit - 1)? {
                                let cand = s + 1;
                                if best.as_ref().map_or(true, |(b, _)| cand < *b) {
                                    *best = Some((
                                        cand,
                                        MoveRec::Pebble { side, pebble, targets: targets.clone() },
                                    ));
                                }
                            }
                        }
                    }
                    if !step_odometer(&mut targets, &domains) {
                        break;
                    }
                }
            }
        }
        Ok(())
    }

    fn try_splits(
        &mut self,
        l: &BoardSet,
        r: &BoardSet,
        budget: usize,
        best: &mut Option<(usize, MoveRec)>,
    ) -> Result<(), QvtError> {
        for side in [Side::Left, Side::Right] {
            let mover = match side {
                Side::Left => l,
                Side::Right => r,
            };
            let m = mover.len();
            if m < 2 {
                continue;
            }
            // Binary partitions: board 0 stays in part 0, the mask picks part
            // 1 members among the rest. Ascending masks equal ascending label
            // vectors.
            for mask in 1u64..(1u64 << (m - 1)) {
                let labels: Vec<u8> =
                    std::iter::once(0).chain((0..m - 1).map(|i| ((mask >> i) & 1) as u8)).collect();
                self.try_one_split(l, r, side, &labels, 2, budget, best)?;
            }
            if self.cfg.ternary_splits && m >= 3 {
                for labels in ternary_labelings(m) {
                    self.try_one_split(l, r, side, &labels, 3, budget, best)?;
                }
            }
        }
        Ok(())
    }

    fn try_one_split(
        &mut self,
        l: &BoardSet,
        r: &BoardSet,
        side: Side,
        labels: &[u8],
        parts: u8,
        budget: usize,
        best: &mut Option<(usize, MoveRec)>,
    ) -> Result<(), QvtError> {
        let mover = match side {
            Side::Left => l,
            Side::Right => r,
        };
        let mut total = 0usize;
        let mut limit = match best {
            Some((b, _)) => budget.min(b.saturating_sub(1)),
            None => budget,
        };
        for part in 0..parts {
            let piece: BoardSet = mover
                .iter()
                .zip(labels)
                .filter(|(_, &lab)| lab == part)
                .map(|(b, _)| b.clone())
                .collect();
            let (cl, cr) = match side {
                Side::Left => (piece, r.clone()),
                Side::Right => (l.clone(), piece),
            };
            match self.child(&cl, &cr, limit)? {
                SolveRes::Exact(v) => {
                    total += v;
                    limit -= v;
                }
                SolveRes::Deeper => return Ok(()),
            }
        }
        if best.as_ref().map_or(true, |(b, _)| total < *b) {
            *best = Some((total, MoveRec::Split { side, labels: labels.to_vec() }));
        }
        Ok(())
    }

    /// Strategy-to-formula reconstruction on a possibly unpruned position,
    /// with the deleted boards of each round handled by quantifier-free
    /// atomic-type guards exactly as the winning strategy discards them.
    fn reconstruct(&self, lu: &BoardSet, ru: &BoardSet) -> Result<Part, QvtError> {
        let (l, r) = prune_round(self.mode, lu, ru);
        if position_dead(self.mode, &l, &r) {
            return Ok(side_type(lu, self.mode));
        }
        let key = (l.canonical_key(), r.canonical_key());
        let (_, mv) = self
            .memo
            .get(&key)
            .and_then(|e| e.exact.as_ref())
            .ok_or(QvtError::Unrepresentable)?;
        match mv.clone() {
            MoveRec::Pebble { side: Side::Left, pebble, targets } => {
                let (moved, copies) = apply_pebble(&l, &r, pebble, &targets);
                let (hl, hr) = prune_round(self.mode, &moved, &copies);
                let theta = self.reconstruct(&hl, &hr)?;
                let inner = match self.mode {
                    LogicMode::Full => p_or(vec![
                        p_not(side_type(&copies, self.mode)),
                        p_and(vec![side_type(&hl, self.mode), theta]),
                    ]),
                    LogicMode::Positive => p_and(vec![side_type(&hl, self.mode), theta]),
                };
                Ok(self.guard(lu, ru, p_exists(pebble, inner)))
            }
            MoveRec::Pebble { side: Side::Right, pebble, targets } => {
                // Mirror position: the same move with sides swapped, then the
                // finished formula is negated.
                let (moved, copies) = apply_pebble(&r, &l, pebble, &targets);
                let (hl, hr) = prune_round(self.mode, &copies, &moved);
                let theta = self.reconstruct(&hl, &hr)?;
                let inner = p_or(vec![
                    p_not(side_type(&copies, self.mode)),
                    p_and(vec![side_type(&hr, self.mode), p_not(theta)]),
                ]);
                Ok(p_not(self.guard(ru, lu, p_exists(pebble, inner))))
            }
            MoveRec::Split { side: Side::Right, labels } => {
                let mut juncts = Vec::new();
                for part in 0..=labels.iter().copied().max().unwrap_or(0) {
                    let piece: BoardSet = r
                        .iter()
                        .zip(&labels)
                        .filter(|(_, &lab)| lab == part)
                        .map(|(b, _)| b.clone())
                        .collect();
                    juncts.push(self.reconstruct(&l, &piece)?);
                }
                Ok(self.guard(lu, ru, p_and(juncts)))
            }
            MoveRec::Split { side: Side::Left, labels } => {
                let mut juncts = Vec::new();
                for part in 0..=labels.iter().copied().max().unwrap_or(0) {
                    let piece: BoardSet = l
                        .iter()
                        .zip(&labels)
                        .filter(|(_, &lab)| lab == part)
                        .map(|(b, _)| b.clone())
                        .collect();
                    juncts.push(self.reconstruct(&piece, &r)?);
                }
                match self.mode {
                    LogicMode::Full => {
                        let body = p_and(juncts.into_iter().map(p_not).collect());
                        Ok(p_not(self.guard(ru, lu, body)))
                    }
                    LogicMode::Positive => Ok(self.guard(lu, ru, p_or(juncts))),
                }
            }
        }
    }

    /// Wraps a body with the round-entry deletion guards: boards deleted
    /// before the recorded move satisfy or falsify the formula through their
    /// atomic types alone.
    fn guard(&self, lhs: &BoardSet, rhs: &BoardSet, body: Part) -> Part {
        match self.mode {
            LogicMode::Full => p_or(vec![
                p_not(side_type(rhs, self.mode)),
                p_and(vec![side_type(lhs, self.mode), body]),
            ]),
            LogicMode::Positive => p_and(vec![side_type(lhs, self.mode), body]),
        }
    }
}

fn at_least(e: QvtError, completed: usize) -> QvtError {
    match e {
        QvtError::BoardCap { got, cap, .. } => {
            QvtError::BoardCap { got, cap, lower_bound: completed }
        }
        other => other,
    }
}

/// Moves `pebble` to `targets[i]` on each mover board; the answering side
/// keeps one copy per board and element. Returned sets are not yet pruned.
fn apply_pebble(
    mover: &BoardSet,
    answerer: &BoardSet,
    pebble: usize,
    targets: &[Elem],
) -> (BoardSet, BoardSet) {
    let moved: BoardSet = mover
        .iter()
        .zip(targets)
        .map(|(b, &t)| b.move_pebble(pebble, t))
        .collect();
    let copies: BoardSet = answerer
        .iter()
        .flat_map(|b| (0..b.structure().domain_size()).map(|e| b.move_pebble(pebble, e as Elem)))
        .collect();
    (moved, copies)
}

/// Little-endian odometer step; false once every digit wrapped.
fn step_odometer(digits: &mut [Elem], domains: &[usize]) -> bool {
    for pos in (0..digits.len()).rev() {
        digits[pos] += 1;
        if (digits[pos] as usize) < domains[pos] {
            return true;
        }
        digits[pos] = 0;
    }
    false
}

/// Canonical labelings of `m` boards into three nonempty parts: label 0 on
/// board 0, and the first appearances of 1 and 2 in order.
fn ternary_labelings(m: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut labels = vec![0u8; m];
    walk_labeling(&mut labels, 1, m, &mut out);
    out
}

fn walk_labeling(labels: &mut Vec<u8>, pos: usize, m: usize, out: &mut Vec<Vec<u8>>) {
    if pos == m {
        if labels.iter().copied().max() == Some(2) {
            out.push(labels.clone());
        }
        return;
    }
    let roof = labels[..pos].iter().copied().max().unwrap_or(0).min(2) + 1;
    for lab in 0..=roof.min(2) {
        labels[pos] = lab;
        walk_labeling(labels, pos + 1, m, out);
    }
    labels[pos] = 0;
}

/// A formula under construction: a real formula, or one of the two constants
/// the grammar has no literal for. Constants simplify away before they ever
/// swallow a quantified subformula.
#[derive(Debug, Clone)]
enum Part {
    Top,
    Bottom,
    F(Formula),
}

fn p_not(p: Part) -> Part {
    match p {
        Part::Top => Part::Bottom,
        Part::Bottom => Part::Top,
        Part::F(f) => Part::F(Formula::not(f)),
    }
}

fn p_and(items: Vec<Part>) -> Part {
    let mut fs = Vec::new();
    for p in items {
        match p {
            Part::Bottom => return Part::Bottom,
            Part::Top => {}
            Part::F(f) => fs.push(f),
        }
    }
    if fs.is_empty() {
        Part::Top
    } else {
        Part::F(Formula::and(fs))
    }
}

fn p_or(items: Vec<Part>) -> Part {
    let mut fs = Vec::new();
    for p in items {
        match p {
            Part::Top => return Part::Top,
            Part::Bottom => {}
            Part::F(f) => fs.push(f),
        }
    }
    if fs.is_empty() {
        Part::Bottom
    } else {
        Part::F(Formula::or(fs))
    }
}

/// Existential step; the constants materialize as tautologies over the bound
/// variable itself so the quantifier stays countable.
fn p_exists(v: usize, p: Part) -> Part {
    let body = match p {
        Part::Top => Formula::truth(v),
        Part::Bottom => Formula::falsity(v),
        Part::F(f) => f,
    };
    Part::F(Formula::exists(v, body))
}

/// The conjunction of all atomic facts of one board over its placed pebbles:
/// equalities between pebble pairs and relation memberships of every pebble
/// tuple, each positively, with the failing ones negated under the full logic
/// and skipped under the positive fragment. A board over the positive
/// fragment satisfies another board's type exactly when the pebble map into
/// it is a partial homomorphism.
fn board_type(board: &Board, mode: LogicMode) -> Part {
    let placed: Vec<usize> = board.assignment().placed().collect();
    let mut parts: Vec<Formula> = Vec::new();
    for (pos, &i) in placed.iter().enumerate() {
        for &j in &placed[pos + 1..] {
            let same = board.assignment().get(i) == board.assignment().get(j);
            if same {
                parts.push(Formula::Eq(i, j));
            } else if mode == LogicMode::Full {
                parts.push(Formula::not(Formula::Eq(i, j)));
            }
        }
    }
    let sig = Arc::clone(board.structure().signature());
    for (ri, decl) in sig.relations().iter().enumerate() {
        if placed.is_empty() {
            continue;
        }
        let mut tuple = vec![0usize; decl.arity];
        loop {
            let vars: Vec<usize> = tuple.iter().map(|&t| placed[t]).collect();
            let elems: Vec<Elem> =
                vars.iter().map(|&v| board.assignment().get(v).unwrap()).collect();
            if board.structure().holds(ri, &elems) {
                parts.push(Formula::atom(decl.name.clone(), vars));
            } else if mode == LogicMode::Full {
                parts.push(Formula::not(Formula::atom(decl.name.clone(), vars)));
            }
            let mut pos = decl.arity;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                tuple[pos] += 1;
                if tuple[pos] < placed.len() {
                    break;
                }
                tuple[pos] = 0;
            }
            if tuple.iter().all(|&t| t == 0) {
                break;
            }
        }
    }
    if parts.is_empty() {
        Part::Top
    } else {
        Part::F(Formula::and(parts))
    }
}

/// Disjunction of the member types, deduplicated.
fn side_type(set: &BoardSet, mode: LogicMode) -> Part {
    let mut fs: Vec<Formula> = Vec::new();
    let mut seen: HashSet<Formula> = HashSet::new();
    for b in set.iter() {
        match board_type(b, mode) {
            Part::Top => return Part::Top,
            Part::Bottom => {}
            Part::F(f) => {
                if seen.insert(f.clone()) {
                    fs.push(f);
                }
            }
        }
    }
    if fs.is_empty() {
        Part::Bottom
    } else {
        Part::F(Formula::or(fs))
    }
}

fn first_placed(set: &BoardSet) -> Option<usize> {
    set.iter().flat_map(|b| b.assignment().placed()).next()
}

/// Minimum quantifier count separating two sets of `k`-pebbled boards, or
/// `None` when no formula of the logic separates them.
pub fn qvt_value(
    left: &BoardSet,
    right: &BoardSet,
    k: usize,
    mode: LogicMode,
    cfg: &QvtConfig,
) -> Result<Option<usize>, QvtError> {
    QvtSolver::new(left.clone(), right.clone(), k, mode, cfg.clone())?.value()
}

/// A separating formula with exactly `qvt_value` quantifiers.
pub fn qvt_witness(
    left: &BoardSet,
    right: &BoardSet,
    k: usize,
    mode: LogicMode,
    cfg: &QvtConfig,
) -> Result<Formula, QvtError> {
    QvtSolver::new(left.clone(), right.clone(), k, mode, cfg.clone())?.witness()
}

/// Sentence-level convenience: singleton sets of empty boards.
pub fn qvt_value_structures(
    a: &Structure,
    b: &Structure,
    k: usize,
    mode: LogicMode,
    cfg: &QvtConfig,
) -> Result<Option<usize>, QvtError> {
    let l = BoardSet::singleton(Board::empty(Arc::new(a.clone()), k));
    let r = BoardSet::singleton(Board::empty(Arc::new(b.clone()), k));
    qvt_value(&l, &r, k, mode, cfg)
}

/// Sentence-level witness; checking it against the inputs only needs the
/// evaluator, so callers can confirm the separation independently.
pub fn qvt_witness_structures(
    a: &Structure,
    b: &Structure,
    k: usize,
    mode: LogicMode,
    cfg: &QvtConfig,
) -> Result<Formula, QvtError> {
    let l = BoardSet::singleton(Board::empty(Arc::new(a.clone()), k));
    let r = BoardSet::singleton(Board::empty(Arc::new(b.clone()), k));
    qvt_witness(&l, &r, k, mode, cfg)
}

/// Quantifier-free truth of `f` on a pebbled board, used by tests to confirm
/// witnesses separate set positions.
pub fn holds_on_board(board: &Board, f: &Formula) -> Result<bool, crate::eval::EvalError> {
    let table = eval_table(board.structure(), f)?;
    table.lookup(board.assignment().slots())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::separates;
    use crate::structure::linear_order;

    #[test]
    fn three_versus_two_orders_need_three_quantifiers() {
        let a = linear_order(3, "A");
        let b = linear_order(2, "B");
        let cfg = QvtConfig::default();
        assert_eq!(qvt_value_structures(&a, &b, 2, LogicMode::Full, &cfg).unwrap(), Some(3));
    }

    #[test]
    fn witness_matches_value_and_separates() {
        let a = linear_order(3, "A");
        let b = linear_order(2, "B");
        let cfg = QvtConfig::default();
        let f = qvt_witness_structures(&a, &b, 2, LogicMode::Full, &cfg).unwrap();
        assert_eq!(f.quant_count(), 3);
        assert!(f.num_variables() <= 2);
        assert!(separates(&f, &a, &b).unwrap());
    }

    #[test]
    fn identical_structures_have_no_value() {
        let a = linear_order(3, "A");
        let cfg = QvtConfig::default();
        assert_eq!(qvt_value_structures(&a, &a, 2, LogicMode::Full, &cfg).unwrap(), None);
        assert_eq!(qvt_value_structures(&a, &a, 2, LogicMode::Positive, &cfg).unwrap(), None);
    }

    #[test]
    fn atomic_disagreement_needs_no_quantifier() {
        use crate::structure::Signature;
        let sig = Arc::new(Signature::new([("E", 2)]));
        let edge =
            Arc::new(Structure::new("edge", Arc::clone(&sig), 2, vec![vec![vec![0, 1]]]).unwrap());
        let blank = Arc::new(Structure::new("blank", sig, 2, vec![vec![]]).unwrap());
        let l = BoardSet::singleton(Board::empty(edge, 2).move_pebble(0, 0).move_pebble(1, 1));
        let r = BoardSet::singleton(Board::empty(blank, 2).move_pebble(0, 0).move_pebble(1, 1));
        let cfg = QvtConfig::default();
        assert_eq!(qvt_value(&l, &r, 2, LogicMode::Full, &cfg).unwrap(), Some(0));
        let f = qvt_witness(&l, &r, 2, LogicMode::Full, &cfg).unwrap();
        assert_eq!(f.quant_count(), 0);
        assert!(holds_on_board(&l.boards()[0], &f).unwrap());
        assert!(!holds_on_board(&r.boards()[0], &f).unwrap());
    }

    #[test]
    fn positive_fragment_counts_an_edge_with_two_quantifiers() {
        use crate::structure::Signature;
        let sig = Arc::new(Signature::new([("E", 2)]));
        let edge = Structure::new("edge", Arc::clone(&sig), 2, vec![vec![vec![0, 1]]]).unwrap();
        let blank = Structure::new("blank", sig, 2, vec![vec![]]).unwrap();
        let cfg = QvtConfig::default();
        assert_eq!(
            qvt_value_structures(&edge, &blank, 2, LogicMode::Positive, &cfg).unwrap(),
            Some(2)
        );
        let f = qvt_witness_structures(&edge, &blank, 2, LogicMode::Positive, &cfg).unwrap();
        assert_eq!(f.quant_count(), 2);
        assert!(f.is_existential_positive());
        assert!(separates(&f, &edge, &blank).unwrap());
        // The blank structure maps into everything, so the reverse direction
        // has no positive separator.
        assert_eq!(
            qvt_value_structures(&blank, &edge, 2, LogicMode::Positive, &cfg).unwrap(),
            None
        );
    }

    #[test]
    fn ternary_splits_do_not_change_the_value() {
        let a = linear_order(3, "A");
        let b = linear_order(2, "B");
        let plain = QvtConfig::default();
        let ternary = QvtConfig { ternary_splits: true, ..QvtConfig::default() };
        for mode in [LogicMode::Full, LogicMode::Positive] {
            assert_eq!(
                qvt_value_structures(&a, &b, 2, mode, &plain).unwrap(),
                qvt_value_structures(&a, &b, 2, mode, &ternary).unwrap()
            );
        }
    }

    #[test]
    fn adding_right_boards_never_lowers_the_value() {
        let a = Arc::new(linear_order(3, "A"));
        let b = Arc::new(linear_order(2, "B"));
        let cfg = QvtConfig::default();
        let l = BoardSet::singleton(Board::empty(Arc::clone(&a), 2));
        let r_small = BoardSet::singleton(Board::empty(Arc::clone(&b), 2));
        let r_large = BoardSet::new(vec![
            Board::empty(Arc::clone(&b), 2),
            Board::empty(Arc::clone(&b), 2).move_pebble(0, 0),
            Board::empty(b, 2).move_pebble(0, 1),
        ]);
        let small = qvt_value(&l, &r_small, 2, LogicMode::Full, &cfg).unwrap().unwrap();
        let large = qvt_value(&l, &r_large, 2, LogicMode::Full, &cfg).unwrap().unwrap();
        assert!(large >= small);
    }
}
