//! Semantic oracles for minimum quantifier depth and minimum quantifier count.
//!
//! Everything here works directly with formula semantics over an enumerated
//! universe of pebbled boards, with no reference to the game engines, so the
//! two can validate each other. Depth is answered by equivalence refinement
//! (full logic) or a containment-matrix fixpoint (positive fragment). Count is
//! answered by a worklist over achievable truth vectors keeping the minimal
//! quantifier budget per vector, compressed onto indistinguishability classes;
//! provenance records let [`witness_from_dp`] rebuild an optimal sentence.

use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::board::{Assignment, Board};
use crate::eval::{self, EvalError};
use crate::formula::Formula;
use crate::structure::{align_pair, Elem, Signature, Structure, StructureError};
use crate::LogicMode;

/// Tunable limits for the oracles.
#[derive(Debug, Clone)]
pub struct OracleConfig {
    /// Maximum number of boards in the enumerated universe.
    pub universe_cap: usize,
    /// Maximum universe size for the pairwise containment matrix.
    pub matrix_cap: usize,
    /// Maximum quantifier budget the count oracle will explore.
    pub budget: usize,
    /// Maximum number of distinct (mask, vector) states in the count oracle.
    pub state_cap: usize,
    /// Maximum number of distinct one-quantifier seed vectors per lift.
    pub union_cap: usize,
    /// Maximum size of the positive quantifier-free closure.
    pub positive_closure_cap: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            universe_cap: 200_000,
            matrix_cap: 4096,
            budget: 24,
            state_cap: 500_000,
            union_cap: 4096,
            positive_closure_cap: 4096,
        }
    }
}

/// Errors from the oracle layer.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("universe of {0} boards exceeds the cap {1}")]
    UniverseCap(usize, usize),
    #[error("universe of {0} boards exceeds the containment-matrix cap {1}")]
    MatrixCap(usize, usize),
    #[error("{0} indistinguishability classes exceed the vector width 128")]
    TooManyClasses(usize),
    #[error("quantifier budget {0} exhausted before a separator was found")]
    BudgetExhausted(usize),
    #[error("state cap {0} exhausted during the count search")]
    StateCap(usize),
    #[error("one-quantifier seed family exceeded {0} vectors")]
    UnionCap(usize),
    #[error("positive quantifier-free closure exceeded {0} vectors")]
    PositiveClosureCap(usize),
    #[error("pebble budget {0} exceeds the supported maximum 7")]
    TooManyPebbles(usize),
    #[error("count search closed without a separator although the pair is separable")]
    Incomplete,
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Every board over two structures and all partial placements of `k` pebbles.
///
/// Index 0 is the empty board on the first structure, index 1 the empty board
/// on the second; the remaining boards follow in placement-code order, first
/// structure first.
pub struct BoardUniverse {
    a: Arc<Structure>,
    b: Arc<Structure>,
    k: usize,
    boards: Vec<Board>,
    /// Per side, universe index by placement code (radix n+1, digit 0 = unplaced).
    index_of_code: [Vec<u32>; 2],
    /// Per board, its (side, code).
    code_of: Vec<(u8, usize)>,
}

impl BoardUniverse {
    pub fn len(&self) -> usize {
        self.boards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boards.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn first(&self) -> &Arc<Structure> {
        &self.a
    }

    pub fn second(&self) -> &Arc<Structure> {
        &self.b
    }

    pub fn board(&self, idx: usize) -> &Board {
        &self.boards[idx]
    }

    pub fn boards(&self) -> &[Board] {
        &self.boards
    }

    /// 0 for boards on the first structure, 1 for the second.
    pub fn side(&self, idx: usize) -> u8 {
        self.code_of[idx].0
    }

    fn domain_size(&self, side: u8) -> usize {
        if side == 0 {
            self.a.domain_size()
        } else {
            self.b.domain_size()
        }
    }

    /// Index of the board obtained by placing `pebble` on `elem`.
    pub fn successor(&self, idx: usize, pebble: usize, elem: Elem) -> usize {
        let (side, code) = self.code_of[idx];
        let radix = self.domain_size(side) + 1;
        let place = radix.pow(pebble as u32);
        let digit = code / place % radix;
        let code = code - digit * place + (elem as usize + 1) * place;
        self.index_of_code[side as usize][code] as usize
    }
}

/// Enumerates the full board universe for a structure pair.
pub fn enumerate_boards(
    a: &Structure,
    b: &Structure,
    k: usize,
    cfg: &OracleConfig,
) -> Result<BoardUniverse, OracleError> {
    if k > 7 {
        return Err(OracleError::TooManyPebbles(k));
    }
    let (a, b) = align_pair(a, b)?;
    let (a, b) = (Arc::new(a), Arc::new(b));
    let sizes: [usize; 2] = [a.domain_size(), b.domain_size()];
    let mut total = 0usize;
    for n in sizes {
        let count = (n + 1)
            .checked_pow(k as u32)
            .ok_or(OracleError::UniverseCap(usize::MAX, cfg.universe_cap))?;
        total += count;
    }
    if total > cfg.universe_cap {
        return Err(OracleError::UniverseCap(total, cfg.universe_cap));
    }
    let decode = |side: u8, code: usize| -> Board {
        let n = sizes[side as usize];
        let mut slots = Vec::with_capacity(k);
        let mut rest = code;
        for _ in 0..k {
            let digit = rest % (n + 1);
            rest /= n + 1;
            slots.push(if digit == 0 {
                None
            } else {
                Some((digit - 1) as Elem)
            });
        }
        let s = if side == 0 { &a } else { &b };
        Board::new(Arc::clone(s), Assignment::from_slots(slots))
    };
    let counts = [(sizes[0] + 1).pow(k as u32), (sizes[1] + 1).pow(k as u32)];
    let mut boards = Vec::with_capacity(total);
    let mut code_of = Vec::with_capacity(total);
    let mut index_of_code = [vec![0u32; counts[0]], vec![0u32; counts[1]]];
    for side in 0..2u8 {
        boards.push(decode(side, 0));
        code_of.push((side, 0));
    }
    for side in 0..2u8 {
        for (code, slot) in index_of_code[side as usize].iter_mut().enumerate().skip(1) {
            *slot = boards.len() as u32;
            boards.push(decode(side, code));
            code_of.push((side, code));
        }
    }
    Ok(BoardUniverse {
        a,
        b,
        k,
        boards,
        index_of_code,
        code_of,
    })
}

/// A formula's truth across the whole board universe: bit `i` is set iff the
/// formula's free variables are all placed on board `i` and it holds there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthVector {
    bits: Vec<u64>,
    len: usize,
}

impl TruthVector {
    pub fn zeros(len: usize) -> Self {
        TruthVector {
            bits: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        if value {
            self.bits[i / 64] |= 1 << (i % 64);
        } else {
            self.bits[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn not(&self) -> Self {
        let mut out = self.clone();
        for w in &mut out.bits {
            *w = !*w;
        }
        let tail = out.len % 64;
        if tail != 0 {
            if let Some(last) = out.bits.last_mut() {
                *last &= (1 << tail) - 1;
            }
        }
        out
    }

    pub fn and(&self, other: &Self) -> Self {
        assert_eq!(self.len, other.len);
        let mut out = self.clone();
        for (w, o) in out.bits.iter_mut().zip(&other.bits) {
            *w &= o;
        }
        out
    }

    pub fn or(&self, other: &Self) -> Self {
        assert_eq!(self.len, other.len);
        let mut out = self.clone();
        for (w, o) in out.bits.iter_mut().zip(&other.bits) {
            *w |= o;
        }
        out
    }
}

/// Evaluates `f` on every board of the universe.
pub fn truth_vector(u: &BoardUniverse, f: &Formula) -> Result<TruthVector, OracleError> {
    let fv = f.free_vars();
    let tables = [eval::eval_table(&u.a, f)?, eval::eval_table(&u.b, f)?];
    let mut out = TruthVector::zeros(u.len());
    for (i, board) in u.boards.iter().enumerate() {
        let placed_ok = fv.iter().all(|&v| board.assignment().get(v).is_some());
        if placed_ok {
            let bit = tables[u.side(i) as usize].lookup(board.assignment().slots())?;
            out.set(i, bit);
        }
    }
    Ok(out)
}

/// Full-logic equivalence refinement: per depth, boards are grouped by
/// back-and-forth keys over the previous depth's classes. Returns the first
/// depth separating the two empty boards (if any) and the fixpoint classes.
struct Refinement {
    separation_depth: Option<usize>,
    classes: Vec<u32>,
    class_count: usize,
}

fn full_refinement(u: &BoardUniverse) -> Refinement {
    let mut classes = initial_classes(u);
    let mut class_count = count_classes(&classes);
    let mut separation_depth = if classes[0] != classes[1] { Some(0) } else { None };
    let mut depth = 0usize;
    loop {
        depth += 1;
        let mut key_ids: HashMap<(u32, Vec<Vec<u32>>), u32> = HashMap::new();
        let mut next = vec![0u32; u.len()];
        for idx in 0..u.len() {
            let n = u.domain_size(u.side(idx));
            let mut succ_sets = Vec::with_capacity(u.k);
            for pebble in 0..u.k {
                let mut set: Vec<u32> = (0..n)
                    .map(|e| classes[u.successor(idx, pebble, e as Elem)])
                    .collect();
                set.sort_unstable();
                set.dedup();
                succ_sets.push(set);
            }
            let fresh = key_ids.len() as u32;
            let id = *key_ids.entry((classes[idx], succ_sets)).or_insert(fresh);
            next[idx] = id;
        }
        let next_count = key_ids.len();
        if separation_depth.is_none() && next[0] != next[1] {
            separation_depth = Some(depth);
        }
        if next_count == class_count {
            return Refinement {
                separation_depth,
                classes,
                class_count,
            };
        }
        classes = next;
        class_count = next_count;
    }
}

/// Depth-0 classes: placement pattern, equality pattern, and atomic facts.
fn initial_classes(u: &BoardUniverse) -> Vec<u32> {
    let mut ids: HashMap<Vec<u8>, u32> = HashMap::new();
    let mut classes = vec![0u32; u.len()];
    for (idx, board) in u.boards.iter().enumerate() {
        let sig = atomic_signature(board);
        let fresh = ids.len() as u32;
        classes[idx] = *ids.entry(sig).or_insert(fresh);
    }
    classes
}

/// Serialized atomic type of a board, independent of which structure it is on.
fn atomic_signature(board: &Board) -> Vec<u8> {
    let mut out = Vec::new();
    let asg = board.assignment();
    let placed: Vec<usize> = asg.placed().collect();
    out.push(placed.len() as u8);
    for &i in &placed {
        out.push(i as u8);
        // First pebble holding the same element; canonical equality pattern.
        let first = placed
            .iter()
            .copied()
            .find(|&j| asg.get(j) == asg.get(i))
            .unwrap();
        out.push(first as u8);
    }
    let s = board.structure();
    for ri in 0..s.signature().len() {
        let arity = s.signature().arity(ri);
        if placed.is_empty() {
            continue;
        }
        let total = placed.len().pow(arity as u32);
        let mut acc = 0u8;
        let mut nbits = 0u8;
        for code in 0..total {
            let mut rest = code;
            let tuple: Vec<Elem> = (0..arity)
                .map(|_| {
                    let p = placed[rest % placed.len()];
                    rest /= placed.len();
                    asg.get(p).unwrap()
                })
                .collect();
            acc = acc << 1 | u8::from(s.holds(ri, &tuple));
            nbits += 1;
            if nbits == 8 {
                out.push(acc);
                acc = 0;
                nbits = 0;
            }
        }
        if nbits > 0 {
            out.push(acc << (8 - nbits));
        }
        out.push(0xff);
    }
    out
}

fn count_classes(classes: &[u32]) -> usize {
    let mut seen: Vec<u32> = classes.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Positive-fragment containment: `m[u][v]` says every existential-positive
/// formula (free variables within the shared placement) true on `u` is true on
/// `v`. Iterated to fixpoint.
struct Containment {
    separation_depth: Option<usize>,
    rows: Vec<Vec<u64>>,
}

fn positive_containment(u: &BoardUniverse, cfg: &OracleConfig) -> Result<Containment, OracleError> {
    let size = u.len();
    if size > cfg.matrix_cap {
        return Err(OracleError::MatrixCap(size, cfg.matrix_cap));
    }
    let words = size.div_ceil(64);
    let mut rows: Vec<Vec<u64>> = vec![vec![0; words]; size];
    for (x, rx) in rows.iter_mut().enumerate() {
        for y in 0..size {
            if crate::board::check_partial_homomorphism(u.board(x), u.board(y)) {
                rx[y / 64] |= 1 << (y % 64);
            }
        }
    }
    // Per board and pebble, the set of boards reachable by placing that pebble.
    let mut succ_sets: Vec<Vec<Vec<u64>>> = Vec::with_capacity(size);
    for idx in 0..size {
        let n = u.domain_size(u.side(idx));
        let mut per_pebble = Vec::with_capacity(u.k);
        for pebble in 0..u.k {
            let mut mask = vec![0u64; words];
            for e in 0..n {
                let t = u.successor(idx, pebble, e as Elem);
                mask[t / 64] |= 1 << (t % 64);
            }
            per_pebble.push(mask);
        }
        succ_sets.push(per_pebble);
    }
    let bit = |rows: &Vec<Vec<u64>>, x: usize, y: usize| rows[x][y / 64] >> (y % 64) & 1 == 1;
    let mut separation_depth = if !bit(&rows, 0, 1) { Some(0) } else { None };
    let mut depth = 0usize;
    loop {
        depth += 1;
        let mut next = rows.clone();
        let mut changed = false;
        for (x, nrow) in next.iter_mut().enumerate() {
            let nx = u.domain_size(u.side(x));
            for y in 0..size {
                if !bit(&rows, x, y) {
                    continue;
                }
                let mut keep = true;
                'pebbles: for (pebble, succ_row) in succ_sets[y].iter().enumerate() {
                    for e in 0..nx {
                        let xs = u.successor(x, pebble, e as Elem);
                        // Some same-pebble move on y must stay above xs.
                        let mut hit = false;
                        for (w, succ) in succ_row.iter().enumerate() {
                            if rows[xs][w] & succ != 0 {
                                hit = true;
                                break;
                            }
                        }
                        if !hit {
                            keep = false;
                            break 'pebbles;
                        }
                    }
                }
                if !keep {
                    nrow[y / 64] &= !(1 << (y % 64));
                    changed = true;
                }
            }
        }
        if separation_depth.is_none() && !bit(&next, 0, 1) {
            separation_depth = Some(depth);
        }
        if !changed {
            return Ok(Containment {
                separation_depth,
                rows,
            });
        }
        rows = next;
    }
}

/// Minimum quantifier depth of a separating k-variable sentence, or `None` if
/// no such sentence exists. In positive mode a separator must hold on `a` and
/// fail on `b`.
pub fn min_qd_semantic(
    a: &Structure,
    b: &Structure,
    k: usize,
    mode: LogicMode,
    cfg: &OracleConfig,
) -> Result<Option<usize>, OracleError> {
    let u = enumerate_boards(a, b, k, cfg)?;
    match mode {
        LogicMode::Full => Ok(full_refinement(&u).separation_depth),
        LogicMode::Positive => Ok(positive_containment(&u, cfg)?.separation_depth),
    }
}

/// Outcome of the quantifier-count oracle.
pub struct QnOutcome {
    /// Minimal quantifier count of a separating sentence; `None` when the
    /// structures are provably inseparable in the chosen fragment.
    pub value: Option<usize>,
    /// Provenance trace for [`witness_from_dp`], present when separable.
    pub trace: Option<DpTrace>,
}

/// Provenance of the winning state of a count search.
pub struct DpTrace {
    qf: Vec<QfEntry>,
    states: Vec<StateRec>,
    winner: usize,
}

struct QfEntry {
    mask: u8,
    vec: u128,
    formula: Formula,
}

struct StateRec {
    mask: u8,
    vec: u128,
    cost: u32,
    prov: Prov,
}

enum Prov {
    Negate(usize),
    QfAnd(usize, usize),
    QfOr(usize, usize),
    MergeAnd(usize, usize),
    MergeOr(usize, usize),
    Lift(usize, usize),
    LiftQfUnion(usize, Vec<usize>),
}

/// Rebuilds the separating sentence recorded in a count-oracle trace. The
/// result's quantifier count equals the oracle value by construction.
pub fn witness_from_dp(trace: &DpTrace) -> Formula {
    let mut memo: Vec<Option<Formula>> = vec![None; trace.states.len()];
    build_witness(trace, trace.winner, &mut memo)
}

fn build_witness(trace: &DpTrace, id: usize, memo: &mut Vec<Option<Formula>>) -> Formula {
    if let Some(f) = &memo[id] {
        return f.clone();
    }
    let f = match &trace.states[id].prov {
        Prov::Negate(s) => Formula::not(build_witness(trace, *s, memo)),
        Prov::QfAnd(s, q) => Formula::and(vec![
            build_witness(trace, *s, memo),
            trace.qf[*q].formula.clone(),
        ]),
        Prov::QfOr(s, q) => Formula::or(vec![
            build_witness(trace, *s, memo),
            trace.qf[*q].formula.clone(),
        ]),
        Prov::MergeAnd(s1, s2) => Formula::and(vec![
            build_witness(trace, *s1, memo),
            build_witness(trace, *s2, memo),
        ]),
        Prov::MergeOr(s1, s2) => Formula::or(vec![
            build_witness(trace, *s1, memo),
            build_witness(trace, *s2, memo),
        ]),
        Prov::Lift(pebble, s) => Formula::exists(*pebble, build_witness(trace, *s, memo)),
        Prov::LiftQfUnion(pebble, qs) => {
            let parts: Vec<Formula> = qs.iter().map(|&q| trace.qf[q].formula.clone()).collect();
            let body = if parts.len() == 1 {
                parts.into_iter().next().unwrap()
            } else {
                Formula::or(parts)
            };
            Formula::exists(*pebble, body)
        }
    };
    memo[id] = Some(f.clone());
    f
}

/// Class-level view of the universe used by the count search.
struct ClassedUniverse {
    class_of: Vec<u32>,
    /// Representative board index per class.
    repr: Vec<usize>,
    /// Per class and pebble, classes reachable by placing that pebble.
    succ: Vec<Vec<u128>>,
    /// Per variable mask, classes whose placement covers it.
    masks: Vec<u128>,
    k: usize,
}

impl ClassedUniverse {
    fn build(u: &BoardUniverse, classes: &[u32], class_count: usize) -> Result<Self, OracleError> {
        if class_count > 128 {
            return Err(OracleError::TooManyClasses(class_count));
        }
        let mut repr = vec![usize::MAX; class_count];
        for (idx, &cls) in classes.iter().enumerate() {
            let c = cls as usize;
            if repr[c] == usize::MAX {
                repr[c] = idx;
            }
        }
        let mut placed = vec![0u8; class_count];
        let mut succ = vec![vec![0u128; u.k]; class_count];
        for ((&idx, pl), sc) in repr.iter().zip(&mut placed).zip(&mut succ) {
            let board = u.board(idx);
            let mut mask = 0u8;
            for i in board.assignment().placed() {
                mask |= 1 << i;
            }
            *pl = mask;
            let n = u.domain_size(u.side(idx));
            for (pebble, slot) in sc.iter_mut().enumerate() {
                let mut set = 0u128;
                for e in 0..n {
                    set |= 1 << classes[u.successor(idx, pebble, e as Elem)];
                }
                *slot = set;
            }
        }
        let mut masks = vec![0u128; 1 << u.k];
        for (f, entry) in masks.iter_mut().enumerate() {
            for c in 0..class_count {
                if placed[c] & f as u8 == f as u8 {
                    *entry |= 1 << c;
                }
            }
        }
        Ok(ClassedUniverse {
            class_of: classes.to_vec(),
            repr,
            succ,
            masks,
            k: u.k,
        })
    }

    /// Truth vector of `Ex_pebble φ` from the vector of `φ`, over `out_mask`.
    fn lift_exists(&self, v: u128, pebble: usize, out_mask: u8) -> u128 {
        let mut out = 0u128;
        let mut mask = self.masks[out_mask as usize];
        while mask != 0 {
            let c = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            if self.succ[c][pebble] & v != 0 {
                out |= 1 << c;
            }
        }
        out
    }
}

/// Relation or equality atom over fixed pebble variables.
#[derive(Clone)]
enum AtomDesc {
    Eq(usize, usize),
    Rel(usize, Vec<usize>),
}

impl AtomDesc {
    fn formula(&self, sig: &Signature) -> Formula {
        match self {
            AtomDesc::Eq(i, j) => Formula::Eq(*i, *j),
            AtomDesc::Rel(ri, args) => Formula::atom(sig.name(*ri), args.clone()),
        }
    }

    fn holds_on(&self, board: &Board) -> bool {
        let asg = board.assignment();
        match self {
            AtomDesc::Eq(i, j) => asg.get(*i) == asg.get(*j),
            AtomDesc::Rel(ri, args) => {
                let tuple: Vec<Elem> = args.iter().map(|&i| asg.get(i).unwrap()).collect();
                board.structure().holds(*ri, &tuple)
            }
        }
    }

    fn var_mask(&self) -> u8 {
        match self {
            AtomDesc::Eq(i, j) => 1 << i | 1 << j,
            AtomDesc::Rel(_, args) => args.iter().fold(0u8, |m, &v| m | 1 << v),
        }
    }
}

/// All atoms whose variables fit inside `mask`.
fn atoms_for_mask(sig: &Signature, mask: u8, k: usize) -> Vec<AtomDesc> {
    let vars: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
    let mut out = Vec::new();
    for (pos, &i) in vars.iter().enumerate() {
        for &j in &vars[pos + 1..] {
            out.push(AtomDesc::Eq(i, j));
        }
    }
    for ri in 0..sig.len() {
        let arity = sig.arity(ri);
        if vars.is_empty() {
            continue;
        }
        let total = vars.len().pow(arity as u32);
        for code in 0..total {
            let mut rest = code;
            let args: Vec<usize> = (0..arity)
                .map(|_| {
                    let v = vars[rest % vars.len()];
                    rest /= vars.len();
                    v
                })
                .collect();
            out.push(AtomDesc::Rel(ri, args));
        }
    }
    out
}

/// Minimum quantifier count of a separating k-variable sentence (`mode`
/// selects the fragment), with a witness trace. In positive mode a separator
/// must hold on `a` and fail on `b`.
pub fn min_qn_semantic(
    a: &Structure,
    b: &Structure,
    k: usize,
    mode: LogicMode,
    cfg: &OracleConfig,
) -> Result<QnOutcome, OracleError> {
    let u = enumerate_boards(a, b, k, cfg)?;
    let (separable, classes, class_count) = match mode {
        LogicMode::Full => {
            let r = full_refinement(&u);
            (r.separation_depth.is_some(), r.classes, r.class_count)
        }
        LogicMode::Positive => {
            let c = positive_containment(&u, cfg)?;
            let (classes, count) = mutual_classes(&c.rows, u.len());
            (c.separation_depth.is_some(), classes, count)
        }
    };
    if !separable {
        return Ok(QnOutcome {
            value: None,
            trace: None,
        });
    }
    let cu = ClassedUniverse::build(&u, &classes, class_count)?;
    let qf = match mode {
        LogicMode::Full => build_cells(&u, &cu),
        LogicMode::Positive => build_positive_closure(&u, &cu, cfg)?,
    };
    // Deepening keeps each search from piling up states the next quantifier
    // level could never afford.
    for budget in 1..=cfg.budget {
        let search = CountSearch::new(&cu, &qf, mode, budget as u32, cfg);
        match search.run()? {
            RunOutcome::Found(outcome) => return Ok(outcome),
            RunOutcome::Exhausted => {}
            RunOutcome::Closed => return Err(OracleError::Incomplete),
        }
    }
    Err(OracleError::BudgetExhausted(cfg.budget))
}

/// Groups boards by mutual containment.
fn mutual_classes(rows: &[Vec<u64>], size: usize) -> (Vec<u32>, usize) {
    let bit = |x: usize, y: usize| rows[x][y / 64] >> (y % 64) & 1 == 1;
    let mut classes = vec![u32::MAX; size];
    let mut count = 0u32;
    for x in 0..size {
        if classes[x] != u32::MAX {
            continue;
        }
        classes[x] = count;
        for y in x + 1..size {
            if classes[y] == u32::MAX && bit(x, y) && bit(y, x) {
                classes[y] = count;
            }
        }
        count += 1;
    }
    (classes, count as usize)
}

/// Full mode: quantifier-free building blocks are the atomic-type cells per
/// variable mask, each with its defining signed conjunction. Every
/// quantifier-free formula over a mask is a union of its cells.
fn build_cells(u: &BoardUniverse, cu: &ClassedUniverse) -> Vec<QfEntry> {
    let sig = u.first().signature();
    let mut qf = Vec::new();
    for mask in 1u8..1 << cu.k {
        let atoms = atoms_for_mask(sig, mask, cu.k);
        let mut groups: HashMap<Vec<bool>, u128> = HashMap::new();
        let mut order: Vec<Vec<bool>> = Vec::new();
        let mut classes = cu.masks[mask as usize];
        while classes != 0 {
            let c = classes.trailing_zeros() as usize;
            classes &= classes - 1;
            let board = u.board(cu.repr[c]);
            let truths: Vec<bool> = atoms.iter().map(|a| a.holds_on(board)).collect();
            match groups.entry(truths.clone()) {
                Entry::Occupied(mut e) => *e.get_mut() |= 1 << c,
                Entry::Vacant(e) => {
                    e.insert(1 << c);
                    order.push(truths);
                }
            }
        }
        for truths in order {
            let vec = groups[&truths];
            let formula = if atoms.is_empty() {
                Formula::truth(mask.trailing_zeros() as usize)
            } else {
                Formula::and(
                    atoms
                        .iter()
                        .zip(&truths)
                        .map(|(a, &t)| {
                            let f = a.formula(sig);
                            if t {
                                f
                            } else {
                                Formula::not(f)
                            }
                        })
                        .collect(),
                )
            };
            qf.push(QfEntry { mask, vec, formula });
        }
    }
    qf
}

/// Positive mode: every positive quantifier-free formula is a disjunction of
/// monomials (conjunctions of atoms), so the entry list is the monomials
/// closed under union. The closure is also intersection-closed because
/// monomial products are monomials.
fn build_positive_closure(
    u: &BoardUniverse,
    cu: &ClassedUniverse,
    cfg: &OracleConfig,
) -> Result<Vec<QfEntry>, OracleError> {
    let sig = u.first().signature();
    let mut qf: Vec<QfEntry> = Vec::new();
    let mut seen: HashMap<(u8, u128), usize> = HashMap::new();
    for mask in 1u8..1 << cu.k {
        let atoms = atoms_for_mask(sig, mask, cu.k);
        if atoms.len() > 16 {
            return Err(OracleError::PositiveClosureCap(cfg.positive_closure_cap));
        }
        for subset in 1usize..1 << atoms.len() {
            let chosen: Vec<&AtomDesc> = atoms
                .iter()
                .enumerate()
                .filter(|(i, _)| subset >> i & 1 == 1)
                .map(|(_, a)| a)
                .collect();
            let used = chosen.iter().fold(0u8, |m, a| m | a.var_mask());
            // Monomials not using every variable of the mask already appear
            // under their own smaller mask.
            if used != mask {
                continue;
            }
            let mut vec = 0u128;
            let mut classes = cu.masks[mask as usize];
            while classes != 0 {
                let c = classes.trailing_zeros() as usize;
                classes &= classes - 1;
                if chosen.iter().all(|a| a.holds_on(u.board(cu.repr[c]))) {
                    vec |= 1 << c;
                }
            }
            let key = (mask, vec);
            if seen.contains_key(&key) {
                continue;
            }
            let parts: Vec<Formula> = chosen.iter().map(|a| a.formula(sig)).collect();
            let formula = if parts.len() == 1 {
                parts.into_iter().next().unwrap()
            } else {
                Formula::and(parts)
            };
            seen.insert(key, qf.len());
            qf.push(QfEntry { mask, vec, formula });
            if qf.len() > cfg.positive_closure_cap {
                return Err(OracleError::PositiveClosureCap(cfg.positive_closure_cap));
            }
        }
    }
    // Union closure over pairs until no new vector appears.
    let mut frontier = 0usize;
    while frontier < qf.len() {
        for other in 0..frontier {
            let (x, y) = (&qf[frontier], &qf[other]);
            let mask = x.mask | y.mask;
            let vec = (x.vec | y.vec) & cu.masks[mask as usize];
            let key = (mask, vec);
            if seen.contains_key(&key) {
                continue;
            }
            let formula = Formula::or(vec![x.formula.clone(), y.formula.clone()]);
            seen.insert(key, qf.len());
            qf.push(QfEntry { mask, vec, formula });
            if qf.len() > cfg.positive_closure_cap {
                return Err(OracleError::PositiveClosureCap(cfg.positive_closure_cap));
            }
        }
        frontier += 1;
    }
    Ok(qf)
}

enum RunOutcome {
    Found(QnOutcome),
    /// Some push exceeded the budget; a deeper run may still find a separator.
    Exhausted,
    /// The search closed with no push rejected, so nothing deeper exists.
    Closed,
}

struct CountSearch<'a> {
    cu: &'a ClassedUniverse,
    qf: &'a [QfEntry],
    mode: LogicMode,
    budget: u32,
    cfg: &'a OracleConfig,
    states: Vec<StateRec>,
    best: HashMap<(u8, u128), usize>,
    heap: BinaryHeap<Reverse<(u32, usize)>>,
    /// Settled state ids bucketed by cost; index 0 unused.
    settled: Vec<Vec<usize>>,
    done: Vec<bool>,
    clipped: bool,
}

impl<'a> CountSearch<'a> {
    fn new(
        cu: &'a ClassedUniverse,
        qf: &'a [QfEntry],
        mode: LogicMode,
        budget: u32,
        cfg: &'a OracleConfig,
    ) -> Self {
        CountSearch {
            cu,
            qf,
            mode,
            budget,
            cfg,
            states: Vec::new(),
            best: HashMap::new(),
            heap: BinaryHeap::new(),
            settled: vec![Vec::new(); budget as usize + 1],
            done: Vec::new(),
            clipped: false,
        }
    }

    /// Seeds every distinct one-quantifier vector: an existential over a
    /// quantifier-free disjunction. Existentials distribute over disjunction,
    /// so the seed family per (mask, pebble) is the union closure of the
    /// entry images.
    fn seed_lifts(&mut self) -> Result<(), OracleError> {
        for in_mask in 1u8..1 << self.cu.k {
            for pebble in 0..self.cu.k {
                let out_mask = in_mask & !(1 << pebble);
                let mut family: Vec<(u128, Vec<usize>)> = Vec::new();
                for (q, entry) in self.qf.iter().enumerate() {
                    if entry.mask != in_mask {
                        continue;
                    }
                    let img = self.cu.lift_exists(entry.vec, pebble, out_mask);
                    if !family.iter().any(|(v, _)| *v == img) {
                        family.push((img, vec![q]));
                    }
                }
                // In positive mode the entries are already union-closed, so
                // their images are too; full-mode cells need explicit unions.
                if self.mode == LogicMode::Full {
                    let mut frontier = 0usize;
                    while frontier < family.len() {
                        for other in 0..frontier {
                            let v = family[frontier].0 | family[other].0;
                            if family.iter().any(|(w, _)| *w == v) {
                                continue;
                            }
                            let mut qs = family[frontier].1.clone();
                            qs.extend_from_slice(&family[other].1);
                            qs.sort_unstable();
                            qs.dedup();
                            family.push((v, qs));
                            if family.len() > self.cfg.union_cap {
                                return Err(OracleError::UnionCap(self.cfg.union_cap));
                            }
                        }
                        frontier += 1;
                    }
                }
                for (vec, qs) in family {
                    self.try_push(out_mask, vec, 1, Prov::LiftQfUnion(pebble, qs))?;
                }
            }
        }
        Ok(())
    }

    fn try_push(&mut self, mask: u8, vec: u128, cost: u32, prov: Prov) -> Result<(), OracleError> {
        if cost > self.budget {
            self.clipped = true;
            return Ok(());
        }
        match self.best.entry((mask, vec)) {
            Entry::Occupied(e) => {
                let id = *e.get();
                if self.states[id].cost <= cost {
                    return Ok(());
                }
                self.states[id].cost = cost;
                self.states[id].prov = prov;
                self.heap.push(Reverse((cost, id)));
            }
            Entry::Vacant(e) => {
                let id = self.states.len();
                if id >= self.cfg.state_cap {
                    return Err(OracleError::StateCap(self.cfg.state_cap));
                }
                e.insert(id);
                self.states.push(StateRec {
                    mask,
                    vec,
                    cost,
                    prov,
                });
                self.done.push(false);
                self.heap.push(Reverse((cost, id)));
            }
        }
        Ok(())
    }

    fn run(mut self) -> Result<RunOutcome, OracleError> {
        self.seed_lifts()?;
        let target_true = self.cu.class_of[0] as usize;
        let target_false = self.cu.class_of[1] as usize;
        while let Some(Reverse((cost, id))) = self.heap.pop() {
            if self.states[id].cost != cost || self.done[id] {
                continue;
            }
            self.done[id] = true;
            let (mask, vec) = (self.states[id].mask, self.states[id].vec);
            if mask == 0 && vec >> target_true & 1 == 1 && vec >> target_false & 1 == 0 {
                return Ok(RunOutcome::Found(QnOutcome {
                    value: Some(cost as usize),
                    trace: Some(DpTrace {
                        qf: self.qf.iter().map(clone_entry).collect(),
                        states: self.states,
                        winner: id,
                    }),
                }));
            }
            // Connectives are free of quantifiers: negation (full logic only)
            // and junctions with a quantifier-free side.
            if self.mode == LogicMode::Full {
                let neg = self.cu.masks[mask as usize] & !vec;
                self.try_push(mask, neg, cost, Prov::Negate(id))?;
            }
            for q in 0..self.qf.len() {
                let qmask = self.qf[q].mask;
                let m = mask | qmask;
                let and_vec = vec & self.qf[q].vec;
                let or_vec = (vec | self.qf[q].vec) & self.cu.masks[m as usize];
                self.try_push(m, and_vec, cost, Prov::QfAnd(id, q))?;
                self.try_push(m, or_vec, cost, Prov::QfOr(id, q))?;
            }
            // Junctions of two quantified sides add their budgets.
            if cost < self.budget {
                for scost in 1..=self.budget - cost {
                    for si in 0..self.settled[scost as usize].len() {
                        let s = self.settled[scost as usize][si];
                        let (smask, svec) = (self.states[s].mask, self.states[s].vec);
                        let m = mask | smask;
                        let and_vec = vec & svec;
                        let or_vec = (vec | svec) & self.cu.masks[m as usize];
                        self.try_push(m, and_vec, cost + scost, Prov::MergeAnd(id, s))?;
                        self.try_push(m, or_vec, cost + scost, Prov::MergeOr(id, s))?;
                    }
                }
            }
            // A quantifier lift costs one.
            for pebble in 0..self.cu.k {
                let out_mask = mask & !(1 << pebble);
                let lifted = self.cu.lift_exists(vec, pebble, out_mask);
                self.try_push(out_mask, lifted, cost + 1, Prov::Lift(pebble, id))?;
            }
            self.settled[cost as usize].push(id);
        }
        if self.clipped {
            Ok(RunOutcome::Exhausted)
        } else {
            Ok(RunOutcome::Closed)
        }
    }
}

fn clone_entry(e: &QfEntry) -> QfEntry {
    QfEntry {
        mask: e.mask,
        vec: e.vec,
        formula: e.formula.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::evaluate;
    use crate::structure::linear_order;
    use crate::LogicMode;

    fn cfg() -> OracleConfig {
        OracleConfig::default()
    }

    fn single_edge() -> Structure {
        let sig = Arc::new(Signature::new([("E", 2)]));
        Structure::new("edge", sig, 2, vec![vec![vec![0, 1]]]).unwrap()
    }

    fn empty_two() -> Structure {
        let sig = Arc::new(Signature::new([("E", 2)]));
        Structure::new("blank", sig, 2, vec![vec![]]).unwrap()
    }

    #[test]
    fn universe_sizes_match_the_formula() {
        let a = linear_order(2, "A");
        let b = linear_order(2, "B");
        assert_eq!(enumerate_boards(&a, &b, 2, &cfg()).unwrap().len(), 18);
        let a3 = linear_order(3, "A");
        assert_eq!(enumerate_boards(&a3, &b, 2, &cfg()).unwrap().len(), 25);
        assert_eq!(enumerate_boards(&a3, &b, 0, &cfg()).unwrap().len(), 2);
    }

    #[test]
    fn universe_orders_empty_boards_first() {
        let a = linear_order(3, "A");
        let b = linear_order(2, "B");
        let u = enumerate_boards(&a, &b, 2, &cfg()).unwrap();
        assert_eq!(u.board(0).assignment().num_placed(), 0);
        assert_eq!(u.board(1).assignment().num_placed(), 0);
        assert_eq!(u.side(0), 0);
        assert_eq!(u.side(1), 1);
        let s = u.successor(0, 1, 2);
        assert_eq!(u.board(s).assignment().get(1), Some(2));
        assert_eq!(u.board(s).assignment().get(0), None);
    }

    #[test]
    fn depth_oracle_on_chains() {
        let a = linear_order(3, "A");
        let b = linear_order(2, "B");
        assert_eq!(
            min_qd_semantic(&a, &b, 2, LogicMode::Full, &cfg()).unwrap(),
            Some(2)
        );
        assert_eq!(
            min_qd_semantic(&a, &a, 2, LogicMode::Full, &cfg()).unwrap(),
            None
        );
    }

    #[test]
    fn count_oracle_on_chains() {
        let a = linear_order(3, "A");
        let b = linear_order(2, "B");
        let out = min_qn_semantic(&a, &b, 2, LogicMode::Full, &cfg()).unwrap();
        assert_eq!(out.value, Some(3));
        let witness = witness_from_dp(out.trace.as_ref().unwrap());
        assert_eq!(witness.quant_count(), 3);
        assert!(witness.is_sentence());
        assert!(evaluate(&a, &witness).unwrap());
        assert!(!evaluate(&b, &witness).unwrap());
    }

    #[test]
    fn count_oracle_identical_structures() {
        let a = linear_order(3, "A");
        let out = min_qn_semantic(&a, &a, 2, LogicMode::Full, &cfg()).unwrap();
        assert!(out.value.is_none());
        assert!(out.trace.is_none());
    }

    #[test]
    fn positive_mode_needs_two_quantifiers_for_an_edge() {
        let out =
            min_qn_semantic(&single_edge(), &empty_two(), 2, LogicMode::Positive, &cfg()).unwrap();
        assert_eq!(out.value, Some(2));
        let witness = witness_from_dp(out.trace.as_ref().unwrap());
        assert!(witness.is_existential_positive());
        assert_eq!(witness.quant_count(), 2);
        assert!(evaluate(&single_edge(), &witness).unwrap());
        assert!(!evaluate(&empty_two(), &witness).unwrap());
        assert_eq!(
            min_qd_semantic(&single_edge(), &empty_two(), 2, LogicMode::Positive, &cfg()).unwrap(),
            Some(2)
        );
    }

    #[test]
    fn positive_mode_sees_no_difference_backwards() {
        // Everything positive true on the blank graph holds on the edge too.
        let out =
            min_qn_semantic(&empty_two(), &single_edge(), 2, LogicMode::Positive, &cfg()).unwrap();
        assert!(out.value.is_none());
    }

    #[test]
    fn depth_is_at_most_count() {
        let pairs = [
            (linear_order(3, "A"), linear_order(2, "B")),
            (single_edge(), empty_two()),
        ];
        for (a, b) in pairs {
            for mode in [LogicMode::Full, LogicMode::Positive] {
                let qd = min_qd_semantic(&a, &b, 2, mode, &cfg()).unwrap();
                let qn = min_qn_semantic(&a, &b, 2, mode, &cfg()).unwrap().value;
                match (qd, qn) {
                    (Some(d), Some(n)) => assert!(d <= n),
                    (None, None) => {}
                    other => panic!("oracles disagree on separability: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn truth_vector_matches_board_semantics() {
        let a = linear_order(3, "A");
        let b = linear_order(2, "B");
        let u = enumerate_boards(&a, &b, 2, &cfg()).unwrap();
        let f = crate::formula::parse_formula("LT(x1,x2)").unwrap();
        let tv = truth_vector(&u, &f).unwrap();
        for idx in 0..u.len() {
            let board = u.board(idx);
            let expect = match (board.assignment().get(0), board.assignment().get(1)) {
                (Some(x), Some(y)) => board.structure().holds(0, &[x, y]),
                _ => false,
            };
            assert_eq!(tv.get(idx), expect, "board {}", board.render());
        }
    }

    #[test]
    fn truth_vector_ops_mirror_connectives() {
        let a = linear_order(3, "A");
        let b = linear_order(2, "B");
        let u = enumerate_boards(&a, &b, 2, &cfg()).unwrap();
        let f = crate::formula::parse_formula("LT(x1,x2)").unwrap();
        let g = crate::formula::parse_formula("x1 = x2").unwrap();
        let (vf, vg) = (truth_vector(&u, &f).unwrap(), truth_vector(&u, &g).unwrap());
        let both = crate::formula::parse_formula("LT(x1,x2) & x1 = x2").unwrap();
        assert_eq!(truth_vector(&u, &both).unwrap(), vf.and(&vg));
        let either = crate::formula::parse_formula("LT(x1,x2) | x1 = x2").unwrap();
        assert_eq!(truth_vector(&u, &either).unwrap(), vf.or(&vg));
    }
}
