//! Linear constraint systems over powers of the two-element group, and the
//! structure pairs they induce.
//!
//! A [`ConstraintFormula`] is a conjunction of clauses `x_1 + ... + x_r ∈ H`
//! over variables valued in `Z_2^m`, where every `H` is an index-two subgroup
//! or the complement of one ([`IndexTwoSet`]). Some clauses are flagged
//! *distinguishing*. [`build_pair`] turns a formula into two coloured
//! structures that agree except that the left one complements every
//! distinguishing clause; the formula is satisfiable exactly when the two
//! structures are isomorphic, so unsatisfiable formulas yield hard
//! separation instances.
//!
//! On boards over such a pair, the sum `|x| + |y|` of the group parts under a
//! pebble tracks which assignments the position still permits:
//! [`partial_iso_by_sums`] re-derives the partial-isomorphism check from
//! clause sums alone, and the goodness and dual-set predicates
//! ([`is_good_for`], [`is_dual_set`]) classify positions by which coordinate
//! of those sums is still uncommitted.
//!
//! [`gen_base`] and [`gen_chain`] produce the hard family: a fixed block
//! formula whose induced pair needs every pebble, and a chained version whose
//! blocks must be solved in order, each completed block doubling the points
//! the multi-board game pays out. [`gen_xor_demo`] is a small single-bit
//! instance whose scripted match shows how re-placing a pebble on one board
//! pins the answer on another. The scripted agents, the invariant
//! [`Monitor`], and the [`ShadowGame`] solver (which plays the formula
//! directly, abstracting elements to their group parts) certify those claims
//! at test time.
//!
//! The formula text format, one item per line:
//!
//! ```text
//! group M
//! var NAME
//! clause [dist] chi=BITS b=0|1 vars NAME...
//! ```
//!
//! `BITS` has `M` characters, coordinate 1 first. `chi` and `b` give the set
//! `{g : chi·g = b}`, so `b=0` is an index-two subgroup and `b=1` its
//! complement. Distinguishing clauses must use `b=1` and plain clauses
//! `b=0`; this pairing is what lets the stored sets serve both as the
//! satisfaction condition and as the pebble-pair sum criterion on the
//! induced structures.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::board::{boards_match, check_partial_isomorphism, Board, BoardSet};
use crate::games::agents::{
    replay_states, Action, DuplicatorAgent, MatchResult, MatchState, SpoilerAgent, SpoilerMove,
    Transcript, TranscriptError,
};
use crate::games::{position_dead, Side};
use crate::structure::{Elem, Signature, Structure};

/// Element of `Z_2^m`: bit `i-1` is coordinate `i`, addition is XOR.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupElem(pub u32);

impl GroupElem {
    pub const ZERO: GroupElem = GroupElem(0);

    /// The element whose only nonzero coordinate is `i` (1-based).
    pub fn unit(i: usize) -> GroupElem {
        GroupElem(1 << (i - 1))
    }

    /// The all-ones element of width `m`.
    pub fn ones(m: usize) -> GroupElem {
        GroupElem((1u32 << m) - 1)
    }

    /// Coordinate `i` (1-based).
    pub fn coord(self, i: usize) -> bool {
        self.0 >> (i - 1) & 1 == 1
    }

    /// Parity of the coordinate sum: `true` for odd.
    pub fn odd(self) -> bool {
        self.0.count_ones() % 2 == 1
    }

    /// Inner product with `other` over the two-element field.
    pub fn dot(self, other: GroupElem) -> bool {
        (self.0 & other.0).count_ones() % 2 == 1
    }

    /// Coordinate string of width `m`, coordinate 1 first.
    pub fn bits(self, m: usize) -> String {
        (1..=m).map(|i| if self.coord(i) { '1' } else { '0' }).collect()
    }
}

impl std::ops::Add for GroupElem {
    type Output = GroupElem;

    // Componentwise addition in a power of the two-element group is xor.
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, other: GroupElem) -> GroupElem {
        GroupElem(self.0 ^ other.0)
    }
}

/// An index-two subgroup of `Z_2^m` or the complement of one, stored as the
/// solution set `{g : chi·g = b}` of one linear condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IndexTwoSet {
    chi: GroupElem,
    complement: bool,
}

impl IndexTwoSet {
    /// Errors when `chi` is zero, which would describe the full group or the
    /// empty set instead of an index-two pair.
    pub fn new(chi: GroupElem, complement: bool) -> Result<IndexTwoSet, GroupconError> {
        if chi == GroupElem::ZERO {
            return Err(GroupconError::ZeroChi);
        }
        Ok(IndexTwoSet { chi, complement })
    }

    /// The even-sum subgroup of width `m`.
    pub fn even(m: usize) -> IndexTwoSet {
        IndexTwoSet { chi: GroupElem::ones(m), complement: false }
    }

    /// The odd-sum coset of width `m`.
    pub fn odd(m: usize) -> IndexTwoSet {
        IndexTwoSet { chi: GroupElem::ones(m), complement: true }
    }

    /// The subgroup `{g : g[i] = 0}`.
    pub fn coord_zero(i: usize) -> IndexTwoSet {
        IndexTwoSet { chi: GroupElem::unit(i), complement: false }
    }

    pub fn chi(self) -> GroupElem {
        self.chi
    }

    /// Whether this is the complement coset rather than the subgroup.
    pub fn is_complement(self) -> bool {
        self.complement
    }

    pub fn contains(self, g: GroupElem) -> bool {
        self.chi.dot(g) == self.complement
    }

    pub fn complemented(self) -> IndexTwoSet {
        IndexTwoSet { chi: self.chi, complement: !self.complement }
    }
}

/// One clause: the sum of the named variables, in order, must land in `set`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    /// Distinct variable indices; the order fixes the induced relation's
    /// argument order.
    pub vars: Vec<usize>,
    pub set: IndexTwoSet,
    /// Distinguishing clauses are complemented on the left structure of
    /// [`build_pair`].
    pub distinguishing: bool,
}

/// A conjunction of clauses over named variables valued in `Z_2^m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintFormula {
    width: usize,
    vars: Vec<String>,
    clauses: Vec<Clause>,
}

/// Largest supported group width.
pub const WIDTH_CAP: usize = 16;

#[derive(Debug, Error)]
pub enum GroupconError {
    #[error("group width must be between 1 and {cap}, got {got}", cap = WIDTH_CAP)]
    Width { got: usize },
    #[error("variable names must be nonempty, whitespace-free, and distinct")]
    VarNames,
    #[error("unknown variable {0}")]
    UnknownVar(String),
    #[error("clause variables must be distinct")]
    DuplicateVar,
    #[error("an index-two set needs a nonzero row vector")]
    ZeroChi,
    #[error("a distinguishing clause carries a complement set and a plain clause a subgroup")]
    SetSide,
    #[error("{k} pebbles take the {want} block construction, not {got}")]
    ParityMismatch { k: usize, want: Parity, got: Parity },
    #[error("the block construction needs at least {min} pebbles")]
    FewPebbles { min: usize },
    #[error("a chain needs at least one block")]
    NoBlocks,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Parity of the pebble count; the two block constructions differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

impl Parity {
    pub fn of(k: usize) -> Parity {
        if k % 2 == 1 {
            Parity::Odd
        } else {
            Parity::Even
        }
    }
}

impl std::fmt::Display for Parity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Parity::Odd => write!(f, "odd"),
            Parity::Even => write!(f, "even"),
        }
    }
}

impl ConstraintFormula {
    /// Builds an empty formula over the given variables.
    pub fn new(
        width: usize,
        vars: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<ConstraintFormula, GroupconError> {
        if width == 0 || width > WIDTH_CAP {
            return Err(GroupconError::Width { got: width });
        }
        let vars: Vec<String> = vars.into_iter().map(Into::into).collect();
        let ok = vars.iter().all(|v| !v.is_empty() && !v.contains(char::is_whitespace))
            && (0..vars.len()).all(|i| !vars[i + 1..].contains(&vars[i]));
        if !ok {
            return Err(GroupconError::VarNames);
        }
        Ok(ConstraintFormula { width, vars, clauses: Vec::new() })
    }

    /// Appends a clause over variable indices.
    pub fn push_clause(
        &mut self,
        vars: &[usize],
        set: IndexTwoSet,
        distinguishing: bool,
    ) -> Result<(), GroupconError> {
        if vars.iter().any(|&v| v >= self.vars.len()) {
            return Err(GroupconError::UnknownVar("index out of range".into()));
        }
        if (0..vars.len()).any(|i| vars[i + 1..].contains(&vars[i])) {
            return Err(GroupconError::DuplicateVar);
        }
        // Keeping complement sets exactly on the distinguishing clauses is
        // what ties satisfying assignments to isomorphisms of the induced
        // pair and makes the stored sets double as the sum criterion.
        if set.is_complement() != distinguishing {
            return Err(GroupconError::SetSide);
        }
        self.clauses.push(Clause { vars: vars.to_vec(), set, distinguishing });
        Ok(())
    }

    /// Appends a clause over variable names.
    pub fn push_clause_named(
        &mut self,
        vars: &[&str],
        set: IndexTwoSet,
        distinguishing: bool,
    ) -> Result<(), GroupconError> {
        let idx: Vec<usize> = vars
            .iter()
            .map(|name| {
                self.var_index(name).ok_or_else(|| GroupconError::UnknownVar((*name).into()))
            })
            .collect::<Result<_, _>>()?;
        self.push_clause(&idx, set, distinguishing)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Order of the value group, `2^m`.
    pub fn group_order(&self) -> usize {
        1 << self.width
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    /// Whether the assignment (one value per variable) satisfies every
    /// clause, distinguishing ones as stored.
    pub fn satisfied_by(&self, assignment: &[GroupElem]) -> bool {
        assert_eq!(assignment.len(), self.vars.len(), "one value per variable");
        self.clauses.iter().all(|c| {
            let sum = c.vars.iter().fold(GroupElem::ZERO, |acc, &v| acc + assignment[v]);
            c.set.contains(sum)
        })
    }

    /// Canonical text form; see the module docs for the grammar.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "group {}", self.width).unwrap();
        for v in &self.vars {
            writeln!(out, "var {v}").unwrap();
        }
        for c in &self.clauses {
            out.push_str("clause ");
            if c.distinguishing {
                out.push_str("dist ");
            }
            write!(out, "chi={} b={} vars", c.set.chi.bits(self.width), u32::from(c.set.complement))
                .unwrap();
            for &v in &c.vars {
                write!(out, " {}", self.vars[v]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Parses the `to_text` format back. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<ConstraintFormula, GroupconError> {
        let err = |line: usize, msg: &str| GroupconError::Parse { line: line + 1, msg: msg.into() };
        let mut width = None;
        let mut vars: Vec<String> = Vec::new();
        let mut clauses: Vec<(usize, bool, GroupElem, bool, Vec<String>)> = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut toks = line.split_whitespace();
            match toks.next().unwrap() {
                "group" => {
                    if width.is_some() {
                        return Err(err(ln, "repeated group line"));
                    }
                    let m: usize = toks
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err(ln, "bad group width"))?;
                    width = Some(m);
                }
                "var" => {
                    let name = toks.next().ok_or_else(|| err(ln, "missing variable name"))?;
                    if toks.next().is_some() {
                        return Err(err(ln, "trailing tokens after variable name"));
                    }
                    vars.push(name.to_string());
                }
                "clause" => {
                    let m = width.ok_or_else(|| err(ln, "clause before the group line"))?;
                    let mut tok = toks.next().ok_or_else(|| err(ln, "truncated clause"))?;
                    let dist = tok == "dist";
                    if dist {
                        tok = toks.next().ok_or_else(|| err(ln, "truncated clause"))?;
                    }
                    let bits = tok
                        .strip_prefix("chi=")
                        .ok_or_else(|| err(ln, "expected chi=BITS"))?;
                    if bits.len() != m || bits.chars().any(|c| c != '0' && c != '1') {
                        return Err(err(ln, "chi needs one bit per coordinate"));
                    }
                    let chi = GroupElem(
                        bits.chars()
                            .enumerate()
                            .filter(|&(_, c)| c == '1')
                            .fold(0, |acc, (i, _)| acc | 1 << i),
                    );
                    let b = match toks.next() {
                        Some("b=0") => false,
                        Some("b=1") => true,
                        _ => return Err(err(ln, "expected b=0 or b=1")),
                    };
                    if toks.next() != Some("vars") {
                        return Err(err(ln, "expected the vars list"));
                    }
                    let names: Vec<String> = toks.map(str::to_string).collect();
                    if names.is_empty() {
                        return Err(err(ln, "a clause needs at least one variable"));
                    }
                    clauses.push((ln, dist, chi, b, names));
                }
                _ => return Err(err(ln, "unknown line")),
            }
        }
        let width = width.ok_or_else(|| err(0, "missing group line"))?;
        let mut f = ConstraintFormula::new(width, vars)?;
        for (ln, dist, chi, b, names) in clauses {
            let set =
                IndexTwoSet::new(chi, b).map_err(|_| err(ln, "chi must not be all zeroes"))?;
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            f.push_clause_named(&refs, set, dist).map_err(|e| match e {
                GroupconError::UnknownVar(v) => err(ln, &format!("unknown variable {v}")),
                GroupconError::DuplicateVar => err(ln, "clause variables must be distinct"),
                GroupconError::SetSide => {
                    err(ln, "b=1 goes with the dist marker and b=0 without it")
                }
                e => e,
            })?;
        }
        Ok(f)
    }
}

/// Whether `subset` is an index-two subgroup of `Z_2^width`.
///
/// Decides the question two independent ways and insists they agree: a
/// functional test (`subset` is the kernel of some nonzero row vector) and a
/// direct one (`subset` is closed, contains zero, and has half the group's
/// size). Cost grows as `4^width`; meant for small widths.
pub fn check_index_two(subset: &[GroupElem], width: usize) -> bool {
    assert!((1..=WIDTH_CAP).contains(&width), "width out of range");
    let order: u32 = 1 << width;
    if subset.iter().any(|g| g.0 >= order) {
        return false;
    }
    let mut member = vec![false; order as usize];
    for g in subset {
        member[g.0 as usize] = true;
    }
    let size = member.iter().filter(|&&m| m).count();

    let functional = (1..order).any(|chi| {
        let chi = GroupElem(chi);
        (0..order).all(|g| member[g as usize] == !chi.dot(GroupElem(g)))
    });

    let subgroup = member[0]
        && (0..order).all(|g| {
            (0..order).all(|h| {
                !(member[g as usize] && member[h as usize]) || member[(g ^ h) as usize]
            })
        });
    let direct = subgroup && size * 2 == order as usize;

    // A third route: a subgroup has index two exactly when non-members sum
    // into it pairwise.
    let pairwise = subgroup
        && (0..order).all(|g| {
            (0..order).all(|h| {
                member[g as usize] || member[h as usize] || member[(g ^ h) as usize]
            })
        })
        && size < order as usize;
    assert_eq!(functional, direct, "index-two deciders disagree");
    assert_eq!(functional, pairwise, "index-two deciders disagree");
    functional
}

/// Searches for a satisfying assignment by eliminating the `m·|vars|`
/// value bits over the two-element field. Returns one value per variable,
/// or `None` when the clauses are contradictory.
pub fn satisfiable(f: &ConstraintFormula) -> Option<Vec<GroupElem>> {
    let m = f.width();
    let nbits = f.vars().len() * m;
    let words = nbits / 64 + 1;
    // Row layout: one word-packed coefficient vector plus a right-hand bit.
    let mut rows: Vec<(Vec<u64>, bool)> = Vec::new();
    for c in f.clauses() {
        let mut row = vec![0u64; words];
        for &v in &c.vars {
            for i in 1..=m {
                if c.set.chi().coord(i) {
                    let bit = v * m + (i - 1);
                    row[bit / 64] ^= 1 << (bit % 64);
                }
            }
        }
        rows.push((row, c.set.is_complement()));
    }
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut rank = 0;
    for bit in 0..nbits {
        let (w, b) = (bit / 64, bit % 64);
        let Some(pivot) = (rank..rows.len()).find(|&r| rows[r].0[w] >> b & 1 == 1) else {
            continue;
        };
        rows.swap(rank, pivot);
        let (head, tail) = rows.split_at_mut(rank + 1);
        let lead = &head[rank];
        for other in tail.iter_mut().filter(|o| o.0[w] >> b & 1 == 1) {
            for (ow, lw) in other.0.iter_mut().zip(&lead.0) {
                *ow ^= lw;
            }
            other.1 ^= lead.1;
        }
        pivots.push((bit, rank));
        rank += 1;
    }
    if rows[rank..].iter().any(|(row, rhs)| *rhs && row.iter().all(|&w| w == 0)) {
        return None;
    }
    // Back-substitute with free bits at zero.
    let mut value = vec![false; nbits];
    for &(bit, r) in pivots.iter().rev() {
        let (row, rhs) = &rows[r];
        let mut acc = *rhs;
        for later in bit + 1..nbits {
            if row[later / 64] >> (later % 64) & 1 == 1 && value[later] {
                acc = !acc;
            }
        }
        value[bit] = acc;
    }
    let assignment = (0..f.vars().len())
        .map(|v| {
            GroupElem(
                (0..m)
                    .filter(|i| value[v * m + i])
                    .fold(0, |acc, i| acc | 1 << i),
            )
        })
        .collect();
    Some(assignment)
}

/// Role a variable plays in a generated block formula, parsed from its name
/// (`s2`, `e1`, `s2(3)`, `e1(3)`; no suffix means block 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRole {
    S { index: usize, block: usize },
    E { index: usize, block: usize },
}

impl VarRole {
    pub fn block(self) -> usize {
        match self {
            VarRole::S { block, .. } | VarRole::E { block, .. } => block,
        }
    }

    fn parse(name: &str) -> Option<VarRole> {
        let (kind, rest) = name.split_at(1);
        let (digits, block) = match rest.split_once('(') {
            Some((d, tail)) => (d, tail.strip_suffix(')')?.parse().ok()?),
            None => (rest, 1),
        };
        let index: usize = digits.parse().ok()?;
        if index == 0 || block == 0 {
            return None;
        }
        match kind {
            "s" => Some(VarRole::S { index, block }),
            "e" => Some(VarRole::E { index, block }),
            _ => None,
        }
    }
}

/// The two structures induced by a formula plus the bookkeeping to read
/// boards over them.
#[derive(Debug, Clone)]
pub struct BuiltPair {
    pub left: Arc<Structure>,
    pub right: Arc<Structure>,
    pub ctx: PairContext,
}

/// Decodes elements of a built pair back to (variable, value) and hosts the
/// sum-based position predicates.
#[derive(Debug, Clone)]
pub struct PairContext {
    formula: ConstraintFormula,
    roles: Vec<Option<VarRole>>,
    /// Highest block index named by any variable role.
    blocks: usize,
    /// Distinct `s` indices in block 1, the pebble count the formula is
    /// built for.
    s_count: usize,
}

impl PairContext {
    fn new(formula: ConstraintFormula) -> PairContext {
        let roles: Vec<Option<VarRole>> =
            formula.vars().iter().map(|n| VarRole::parse(n)).collect();
        let blocks = roles.iter().flatten().map(|r| r.block()).max().unwrap_or(1);
        let s_count = roles
            .iter()
            .flatten()
            .filter_map(|r| match r {
                VarRole::S { index, block: 1 } => Some(*index),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        PairContext { formula, roles, blocks, s_count }
    }

    pub fn formula(&self) -> &ConstraintFormula {
        &self.formula
    }

    /// Number of blocks the variable names span.
    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// Number of `s` variables per block.
    pub fn s_count(&self) -> usize {
        self.s_count
    }

    pub fn var_of(&self, e: Elem) -> usize {
        e as usize / self.formula.group_order()
    }

    pub fn value_of(&self, e: Elem) -> GroupElem {
        GroupElem(e % self.formula.group_order() as u32)
    }

    pub fn element(&self, var: usize, g: GroupElem) -> Elem {
        (var * self.formula.group_order()) as Elem + g.0
    }

    pub fn role_of(&self, var: usize) -> Option<VarRole> {
        self.roles[var]
    }

    /// Variable index of `s_i` in `block`, if named.
    pub fn s_var(&self, index: usize, block: usize) -> Option<usize> {
        self.roles
            .iter()
            .position(|r| *r == Some(VarRole::S { index, block }))
    }

    /// Variable index of `e_i` in `block`, if named.
    pub fn e_var(&self, index: usize, block: usize) -> Option<usize> {
        self.roles
            .iter()
            .position(|r| *r == Some(VarRole::E { index, block }))
    }

    /// Relation index of a variable's colour class.
    pub fn colour_relation(&self, var: usize) -> usize {
        var
    }

    /// Relation index of a clause.
    pub fn clause_relation(&self, clause: usize) -> usize {
        self.formula.vars().len() + clause
    }

    /// All unary relation indices that pin down membership of one variable's
    /// colour class: the colour itself plus every single-variable clause on
    /// it.
    pub fn unary_relations_of(&self, var: usize) -> Vec<usize> {
        let mut rels = vec![self.colour_relation(var)];
        for (c, clause) in self.formula.clauses().iter().enumerate() {
            if clause.vars.as_slice() == [var] {
                rels.push(self.clause_relation(c));
            }
        }
        rels
    }

    /// Clause index of the completion clause for `e_i` in `block`: the one
    /// whose variables are that `e` variable plus `s` variables.
    pub fn completion_clause(&self, index: usize, block: usize) -> Option<usize> {
        let e = self.e_var(index, block)?;
        self.formula.clauses().iter().position(|c| {
            c.vars.len() > 1
                && c.vars.contains(&e)
                && c.vars
                    .iter()
                    .all(|&v| v == e || matches!(self.roles[v], Some(VarRole::S { .. })))
        })
    }

    /// Clause index of the junction clause joining `e_l` of `block` to the
    /// next block.
    pub fn link_clause(&self, index: usize, block: usize) -> Option<usize> {
        let e = self.e_var(index, block)?;
        self.formula.clauses().iter().position(|c| {
            c.vars.len() == 2
                && c.vars[0] == e
                && matches!(self.roles[c.vars[1]], Some(VarRole::S { block: b, .. }) if b == block + 1)
        })
    }

    /// Sum of the group parts under `pebble` on the two boards, defined when
    /// both boards pebble the same variable.
    pub fn pair_sum(&self, x: &Board, y: &Board, pebble: usize) -> Option<GroupElem> {
        let (ex, ey) = (x.assignment().get(pebble)?, y.assignment().get(pebble)?);
        if self.var_of(ex) != self.var_of(ey) {
            return None;
        }
        Some(self.value_of(ex) + self.value_of(ey))
    }

    /// Goodness for coordinate `l` in `block`, optionally ignoring one
    /// pebble: every way of choosing one pebble per `s_i` colour (`i ≠ l`)
    /// must give pair sums with coordinate `l` summing to zero. Holds
    /// vacuously when some colour is unpebbled.
    pub fn good_for_excluding(
        &self,
        x: &Board,
        y: &Board,
        block: usize,
        l: usize,
        skip: Option<usize>,
    ) -> bool {
        let mut candidates: Vec<Vec<bool>> = Vec::new();
        for i in (1..=self.s_count).filter(|&i| i != l) {
            let Some(var) = self.s_var(i, block) else {
                return true;
            };
            let coords: Vec<bool> = (0..x.assignment().num_pebbles())
                .filter(|&p| Some(p) != skip)
                .filter(|&p| {
                    x.assignment().get(p).is_some_and(|e| self.var_of(e) == var)
                        && y.assignment().get(p).is_some_and(|e| self.var_of(e) == var)
                })
                .filter_map(|p| self.pair_sum(x, y, p))
                .map(|s| s.coord(l))
                .collect();
            if coords.is_empty() {
                return true;
            }
            candidates.push(coords);
        }
        // The coordinate sum over a system flips per candidate choice, so
        // all systems vanish exactly when each colour's candidates agree and
        // the common values sum to zero.
        if candidates.iter().any(|c| c.windows(2).any(|w| w[0] != w[1])) {
            return false;
        }
        candidates.iter().filter(|c| c[0]).count() % 2 == 0
    }

    pub fn good_for(&self, x: &Board, y: &Board, block: usize, l: usize) -> bool {
        self.good_for_excluding(x, y, block, l, None)
    }

    /// Goodness for every coordinate of `block`.
    pub fn good(&self, x: &Board, y: &Board, block: usize) -> bool {
        (1..=self.s_count).all(|l| self.good_for(x, y, block, l))
    }

    /// The set of colours pebbled on `board`, as variable indices, when
    /// every pebble is placed; `None` otherwise.
    fn full_type(&self, board: &Board) -> Option<Vec<usize>> {
        let mut vars: Vec<usize> = board
            .assignment()
            .slots()
            .iter()
            .map(|slot| slot.map(|e| self.var_of(e)))
            .collect::<Option<_>>()?;
        vars.sort_unstable();
        Some(vars)
    }

    /// Whether `board` pebbles exactly the `s` colours of `block`, once each.
    pub fn type_is_all_s(&self, board: &Board, block: usize) -> bool {
        let Some(type_vars) = self.full_type(board) else {
            return false;
        };
        let mut wanted: Vec<usize> = match (1..=self.s_count)
            .map(|i| self.s_var(i, block))
            .collect::<Option<_>>()
        {
            Some(w) => w,
            None => return false,
        };
        wanted.sort_unstable();
        type_vars == wanted
    }
}

/// Goodness of a board pair for coordinate `l` in `block`; see
/// [`PairContext::good_for_excluding`].
pub fn is_good_for(ctx: &PairContext, x: &Board, y: &Board, block: usize, l: usize) -> bool {
    ctx.good_for(x, y, block, l)
}

/// Whether `t` is a dual set against `y` in `block`: `y` pebbles exactly the
/// `s` colours, `t` holds one board fewer than there are colours, each board
/// matches `y`, and each is good for every coordinate except possibly one,
/// those exceptional coordinates all distinct.
pub fn is_dual_set(ctx: &PairContext, t: &BoardSet, y: &Board, block: usize) -> bool {
    let k = ctx.s_count();
    if k < 2 || t.len() != k - 1 || !ctx.type_is_all_s(y, block) {
        return false;
    }
    let mut forced: Vec<usize> = Vec::new();
    for member in t.iter() {
        if !check_partial_isomorphism(member, y) {
            return false;
        }
        let bad: Vec<usize> =
            (1..=k).filter(|&l| !ctx.good_for(member, y, block, l)).collect();
        match bad.as_slice() {
            [] => {}
            [l] => forced.push(*l),
            _ => return false,
        }
    }
    forced.sort_unstable();
    forced.windows(2).all(|w| w[0] != w[1])
}

/// Re-derives the partial-isomorphism check between boards over a built pair
/// from clause sums: for every clause and every way of choosing pebbles for
/// its variables in order, the pair sums must land in the stored set. Both
/// boards must pebble matching colours.
pub fn partial_iso_by_sums(ctx: &PairContext, x: &Board, y: &Board) -> bool {
    let k = x.assignment().num_pebbles();
    for p in 0..k {
        match (x.assignment().get(p), y.assignment().get(p)) {
            (Some(ex), Some(ey)) if ctx.var_of(ex) != ctx.var_of(ey) => return false,
            (None, Some(_)) | (Some(_), None) => return false,
            _ => {}
        }
    }
    for clause in ctx.formula().clauses() {
        // Pebble systems factor through values, so collect the distinct pair
        // sums per variable and walk their product.
        let per_var: Vec<Vec<GroupElem>> = clause
            .vars
            .iter()
            .map(|&v| {
                let mut sums: Vec<GroupElem> = (0..k)
                    .filter(|&p| {
                        x.assignment().get(p).is_some_and(|e| ctx.var_of(e) == v)
                    })
                    .filter_map(|p| ctx.pair_sum(x, y, p))
                    .collect();
                sums.sort_unstable();
                sums.dedup();
                sums
            })
            .collect();
        if per_var.iter().any(Vec::is_empty) {
            continue;
        }
        let mut idx = vec![0usize; per_var.len()];
        loop {
            let sum = idx
                .iter()
                .zip(&per_var)
                .fold(GroupElem::ZERO, |acc, (&i, sums)| acc + sums[i]);
            if !clause.set.contains(sum) {
                return false;
            }
            let mut pos = 0;
            loop {
                if pos == idx.len() {
                    break;
                }
                idx[pos] += 1;
                if idx[pos] < per_var[pos].len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == idx.len() {
                break;
            }
        }
    }
    true
}

/// Builds the two structures a formula induces. Elements pack (variable,
/// value) as `var · 2^m + g`; each variable gets a unary colour relation
/// `col_NAME`, and clause `i` a relation `clNN` holding the value tuples
/// whose sum lies in the clause's set, with distinguishing clauses
/// complemented on the left structure only.
pub fn build_pair(f: &ConstraintFormula, tag: &str) -> BuiltPair {
    let order = f.group_order();
    let nv = f.vars().len();
    let mut rels: Vec<(String, usize)> =
        f.vars().iter().map(|v| (format!("col_{v}"), 1)).collect();
    for (i, c) in f.clauses().iter().enumerate() {
        rels.push((format!("cl{i:02}"), c.vars.len()));
    }
    let sig = Arc::new(Signature::new(rels));
    let side = |complement_dist: bool, name: String| {
        let mut tuples: Vec<Vec<Vec<Elem>>> = Vec::with_capacity(sig.len());
        for v in 0..nv {
            tuples.push(
                (0..order)
                    .map(|g| vec![(v * order + g) as Elem])
                    .collect(),
            );
        }
        for c in f.clauses() {
            let set = if c.distinguishing && complement_dist {
                c.set.complemented()
            } else {
                c.set
            };
            let mut ts = Vec::new();
            let mut values = vec![0usize; c.vars.len()];
            loop {
                let sum = values
                    .iter()
                    .fold(GroupElem::ZERO, |acc, &g| acc + GroupElem(g as u32));
                if set.contains(sum) {
                    ts.push(
                        values
                            .iter()
                            .zip(&c.vars)
                            .map(|(&g, &v)| (v * order + g) as Elem)
                            .collect(),
                    );
                }
                let mut pos = 0;
                loop {
                    if pos == values.len() {
                        break;
                    }
                    values[pos] += 1;
                    if values[pos] < order {
                        break;
                    }
                    values[pos] = 0;
                    pos += 1;
                }
                if pos == values.len() {
                    break;
                }
            }
            tuples.push(ts);
        }
        Structure::new(name, Arc::clone(&sig), nv * order, tuples)
            .expect("generated tuples are in range")
    };
    BuiltPair {
        left: Arc::new(side(true, format!("{tag}.left"))),
        right: Arc::new(side(false, format!("{tag}.right"))),
        ctx: PairContext::new(f.clone()),
    }
}

/// A chained formula together with its block-prefix restrictions.
///
/// `restrictions[j - 1]` keeps the variables and clauses of the first `j`
/// blocks and drops everything later, including the link clauses that leave
/// block `j`.  The last restriction is the full formula.
#[derive(Debug, Clone)]
pub struct ChainFamily {
    pub full: ConstraintFormula,
    pub restrictions: Vec<ConstraintFormula>,
}

/// Emits the standard blocks.  Block `j` introduces colour variables
/// `s1..sk` and completion variables `e1..em`, where the width `m` is `k` for
/// odd `k` and `k - 1` for even `k`.  Returns the formula and, per block, the
/// clause count reached after that block's own clauses (the restriction cut
/// points, which exclude the link clauses emitted just after).
fn emit_blocks(k: usize, n: usize, suffixed: bool) -> (ConstraintFormula, Vec<usize>) {
    let odd = k % 2 == 1;
    let m = if odd { k } else { k - 1 };
    // Colour of the distinguished variable; link clauses re-enter through it.
    let d = if odd { 1 } else { k };
    let name = |kind: &str, i: usize, j: usize| {
        if suffixed {
            format!("{kind}{i}({j})")
        } else {
            format!("{kind}{i}")
        }
    };
    let mut vars = Vec::new();
    for j in 1..=n {
        for i in 1..=k {
            vars.push(name("s", i, j));
        }
        for i in 1..=m {
            vars.push(name("e", i, j));
        }
    }
    let sv = |i: usize, j: usize| (j - 1) * (k + m) + (i - 1);
    let ev = |i: usize, j: usize| (j - 1) * (k + m) + k + (i - 1);
    let mut f = ConstraintFormula::new(m, vars).expect("generated names are valid");
    let mut cuts = Vec::new();
    for j in 1..=n {
        if j == 1 {
            f.push_clause(&[sv(d, 1)], IndexTwoSet::odd(m), true)
                .expect("clause is well formed");
        }
        for i in (1..=k).filter(|&i| i != d) {
            f.push_clause(&[sv(i, j)], IndexTwoSet::even(m), false)
                .expect("clause is well formed");
        }
        for l in 1..=m {
            let mut cv: Vec<usize> = (1..=k).filter(|&i| i != l).map(|i| sv(i, j)).collect();
            cv.push(ev(l, j));
            f.push_clause(&cv, IndexTwoSet::coord_zero(l), false)
                .expect("clause is well formed");
        }
        for i in 1..=m {
            f.push_clause(&[sv(i, j)], IndexTwoSet::coord_zero(i), false)
                .expect("clause is well formed");
        }
        for l in 1..=m {
            for i in 1..=m {
                // The diagonal completion constraint is deferred to the last
                // block; link clauses make it binding earlier.
                if j < n && i == l {
                    continue;
                }
                f.push_clause(&[ev(l, j)], IndexTwoSet::coord_zero(i), false)
                    .expect("clause is well formed");
            }
        }
        cuts.push(f.clauses.len());
        if j < n {
            // After a completion pins a block's exit at one odd coordinate,
            // the even link passes the oddness on to the next block's
            // distinguished variable, replacing its deleted parity clause.
            for l in 1..=m {
                f.push_clause(&[ev(l, j), sv(d, j + 1)], IndexTwoSet::even(m), false)
                    .expect("clause is well formed");
            }
        }
    }
    (f, cuts)
}

fn check_pebbles(k: usize, parity: Parity) -> Result<(), GroupconError> {
    if k < 3 {
        return Err(GroupconError::FewPebbles { min: 3 });
    }
    if Parity::of(k) != parity {
        return Err(GroupconError::ParityMismatch {
            k,
            want: Parity::of(k),
            got: parity,
        });
    }
    Ok(())
}

/// Builds the single-block unsatisfiable formula for `k` pebbles.
///
/// For odd `k` the group is wide `k`; for even `k` it is wide `k - 1` and the
/// distinguished odd-sum variable is `sk` instead of `s1`.  The parity
/// argument is a deliberate speed bump: the caller states which shape it
/// expects and mismatches fail instead of silently switching conventions.
pub fn gen_base(k: usize, parity: Parity) -> Result<ConstraintFormula, GroupconError> {
    check_pebbles(k, parity)?;
    Ok(emit_blocks(k, 1, false).0)
}

/// Builds the `n`-block chained formula and its prefix restrictions.
///
/// Block variables carry their block suffix, `s1(2)` and so on, and clause
/// order groups each block's clauses before the links that leave it, so every
/// restriction is a prefix of the full clause list.
pub fn gen_chain(k: usize, n: usize, parity: Parity) -> Result<ChainFamily, GroupconError> {
    check_pebbles(k, parity)?;
    if n == 0 {
        return Err(GroupconError::NoBlocks);
    }
    let (full, cuts) = emit_blocks(k, n, true);
    let m = full.width();
    let restrictions = cuts
        .iter()
        .enumerate()
        .map(|(jz, &cut)| ConstraintFormula {
            width: m,
            vars: full.vars[..(k + m) * (jz + 1)].to_vec(),
            clauses: full.clauses[..cut].to_vec(),
        })
        .collect();
    Ok(ChainFamily { full, restrictions })
}

/// Small unsatisfiable system over the two-element group, used to show a
/// spoiler that freezes one board line while a second line dies.
///
/// The clauses chain `x1 = 1` through three xor constraints into two
/// parities for `x8` that cannot both hold.
pub fn gen_xor_demo() -> ConstraintFormula {
    let vars: Vec<String> = (1..=8).map(|i| format!("x{i}")).collect();
    let mut f = ConstraintFormula::new(1, vars).expect("generated names are valid");
    let odd = IndexTwoSet::odd(1);
    let even = IndexTwoSet::even(1);
    f.push_clause(&[0], odd, true).expect("clause is well formed");
    for cv in [[0, 1, 2], [1, 3, 4], [2, 5, 6], [3, 4, 7], [5, 6, 7]] {
        f.push_clause(&cv, even, false)
            .expect("clause is well formed");
    }
    f.push_clause(&[7], IndexTwoSet::coord_zero(1), false)
        .expect("clause is well formed");
    f
}

/// Draws a small random formula for differential tests.  Clauses have one to
/// three distinct variables and a random row vector, and are distinguishing,
/// with the complement set, with probability one quarter.
pub fn random_formula<R: rand::Rng>(
    rng: &mut R,
    width: usize,
    nvars: usize,
    nclauses: usize,
) -> ConstraintFormula {
    assert!((1..=WIDTH_CAP).contains(&width));
    assert!(nvars >= 1);
    let vars: Vec<String> = (1..=nvars).map(|i| format!("v{i}")).collect();
    let mut f = ConstraintFormula::new(width, vars).expect("generated names are valid");
    let order = 1u32 << width;
    for _ in 0..nclauses {
        let arity = rng.gen_range(1..=3.min(nvars));
        let mut pool: Vec<usize> = (0..nvars).collect();
        let mut cv = Vec::with_capacity(arity);
        for _ in 0..arity {
            cv.push(pool.swap_remove(rng.gen_range(0..pool.len())));
        }
        let chi = GroupElem(rng.gen_range(1..order));
        let dist = rng.gen_bool(0.25);
        let set = IndexTwoSet::new(chi, dist).expect("chi is nonzero");
        f.push_clause(&cv, set, dist).expect("clause is well formed");
    }
    f
}

// --------------------------------------------------------------------------
// Shadow game: the pebble game played on the formula itself.

/// A shadow position entry: the variable a pebble sits on and the sum the
/// matching board pair would carry there.
pub type ShadowSlot = Option<(usize, GroupElem)>;

/// Minimal-horizon solver for the pebble game played directly on a formula.
///
/// A state assigns some pebbles a variable and a value standing for the sum
/// of the two group parts a real board pair would carry. Spoiler repositions
/// a pebble onto a variable, the reply picks the new sum, and Spoiler has won
/// once some clause has all its variables pebbled with a choice of pebbles
/// whose values sum outside the clause's set. The sum criterion for partial
/// isomorphism makes this abstraction exact for pairs built from the
/// formula, so the least winning horizon here certifies the round count
/// needed on the real structures, with a state space that no longer depends
/// on the domain pairing.
pub struct ShadowGame {
    formula: ConstraintFormula,
    k: usize,
    memo: HashMap<(Vec<ShadowSlot>, usize), bool>,
}

impl ShadowGame {
    pub fn new(formula: &ConstraintFormula, k: usize) -> ShadowGame {
        ShadowGame { formula: formula.clone(), k, memo: HashMap::new() }
    }

    /// Least number of moves within which Spoiler wins from the empty
    /// position, if that happens inside `horizon`.
    pub fn value(&mut self, horizon: usize) -> Option<usize> {
        let empty = vec![None; self.k];
        (0..=horizon).find(|&h| self.wins_within(&empty, h))
    }

    /// Whether some clause is fully pebbled with a choice of values summing
    /// outside its set.
    pub fn violated(&self, slots: &[ShadowSlot]) -> bool {
        for clause in self.formula.clauses() {
            let per_var: Vec<Vec<GroupElem>> = clause
                .vars
                .iter()
                .map(|&v| {
                    let mut vals: Vec<GroupElem> = slots
                        .iter()
                        .flatten()
                        .filter(|&&(w, _)| w == v)
                        .map(|&(_, g)| g)
                        .collect();
                    vals.sort_unstable();
                    vals.dedup();
                    vals
                })
                .collect();
            if per_var.iter().any(Vec::is_empty) {
                continue;
            }
            let mut idx = vec![0usize; per_var.len()];
            loop {
                let sum = idx
                    .iter()
                    .zip(&per_var)
                    .fold(GroupElem::ZERO, |acc, (&i, vals)| acc + vals[i]);
                if !clause.set.contains(sum) {
                    return true;
                }
                let mut pos = 0;
                loop {
                    if pos == idx.len() {
                        break;
                    }
                    idx[pos] += 1;
                    if idx[pos] < per_var[pos].len() {
                        break;
                    }
                    idx[pos] = 0;
                    pos += 1;
                }
                if pos == idx.len() {
                    break;
                }
            }
        }
        false
    }

    /// Whether Spoiler can force a violation within `h` further moves.
    pub fn wins_within(&mut self, slots: &[ShadowSlot], h: usize) -> bool {
        if self.violated(slots) {
            return true;
        }
        if h == 0 {
            return false;
        }
        let mut key = slots.to_vec();
        key.sort_unstable();
        if let Some(&known) = self.memo.get(&(key.clone(), h)) {
            return known;
        }
        let result = self.winning_move(slots, h).is_some();
        self.memo.insert((key, h), result);
        result
    }

    /// A pebble and target variable from which every reply loses within
    /// `h - 1` moves, if any.
    pub fn winning_move(&mut self, slots: &[ShadowSlot], h: usize) -> Option<(usize, usize)> {
        if h == 0 {
            return None;
        }
        let order = self.formula.group_order() as u32;
        for p in 0..self.k {
            // Pebbles holding identical entries generate identical moves.
            if (0..p).any(|q| slots[q] == slots[p]) {
                continue;
            }
            for v in 0..self.formula.vars().len() {
                let all_lose = (0..order).all(|g| {
                    let mut next = slots.to_vec();
                    next[p] = Some((v, GroupElem(g)));
                    self.wins_within(&next, h - 1)
                });
                if all_lose {
                    return Some((p, v));
                }
            }
        }
        None
    }
}

/// Plays the shadow strategy on the real pair and checks it wins everywhere.
///
/// From empty boards, Spoiler repositions per [`ShadowGame::winning_move`],
/// always onto the zero element on the left, and every reply onto the same
/// variable is followed recursively; replies on any other variable break the
/// colour relation at once, so they need no enumeration. Every line must
/// break partial isomorphism within `rounds` rounds; the count of broken
/// terminal positions comes back on success.
pub fn verify_shadow_on_pair(pair: &BuiltPair, k: usize, rounds: usize) -> Result<u64, String> {
    fn walk(
        game: &mut ShadowGame,
        ctx: &PairContext,
        alpha: &Board,
        beta: &Board,
        left: usize,
    ) -> Result<u64, String> {
        if !check_partial_isomorphism(alpha, beta) {
            return Ok(1);
        }
        if left == 0 {
            return Err("a reply line survived the full horizon".to_string());
        }
        let slots: Vec<ShadowSlot> = (0..alpha.assignment().num_pebbles())
            .map(|p| match (alpha.assignment().get(p), beta.assignment().get(p)) {
                (Some(ea), Some(eb)) => {
                    Some((ctx.var_of(ea), ctx.value_of(ea) + ctx.value_of(eb)))
                }
                _ => None,
            })
            .collect();
        let Some((p, v)) = game.winning_move(&slots, left) else {
            return Err(format!("no winning move with {left} rounds left"));
        };
        let moved = alpha.move_pebble(p, ctx.element(v, GroupElem::ZERO));
        let order = ctx.formula().group_order() as u32;
        let mut leaves = 0;
        for g in 0..order {
            let reply = beta.move_pebble(p, ctx.element(v, GroupElem(g)));
            leaves += walk(game, ctx, &moved, &reply, left - 1)?;
        }
        Ok(leaves)
    }
    let ctx = &pair.ctx;
    let mut game = ShadowGame::new(ctx.formula(), k);
    walk(
        &mut game,
        ctx,
        &Board::empty(Arc::clone(&pair.left), k),
        &Board::empty(Arc::clone(&pair.right), k),
        rounds,
    )
}

// --------------------------------------------------------------------------
// Strategy agents for matches over built pairs.

/// Duplicator strategy for pairs built from block formulas.
///
/// Away from completions it keeps one board per side, choosing replies that
/// keep the boards matching and the pair good at the block in play. When a
/// pebble move covers the last free colour of a block, it answers with one
/// alternative board per other colour, shifted so the boards disagree about
/// exactly one coordinate each; splitting that set is the only way Spoiler
/// makes progress, and it multiplies the match weight. Once a completed
/// block's set has been split and Spoiler retreats, the strategy commits
/// fallback values for the block and answers later re-pebbles there straight
/// from them.
pub struct DualDuplicator {
    ctx: PairContext,
    /// Committed fallback values per variable.
    gamma: HashMap<usize, GroupElem>,
    /// Highest block whose fallback values are committed.
    gamma_blocks: usize,
    /// Canonical key of the mover-side board kept this round; the deletion
    /// step drops its siblings.
    keep: Option<(Side, Vec<u8>)>,
}

impl DualDuplicator {
    pub fn new(pair: &BuiltPair) -> DualDuplicator {
        DualDuplicator {
            ctx: pair.ctx.clone(),
            gamma: HashMap::new(),
            gamma_blocks: 0,
            keep: None,
        }
    }

    /// Committed fallback values, keyed by variable index.
    pub fn gamma(&self) -> &HashMap<usize, GroupElem> {
        &self.gamma
    }

    /// Highest block whose fallback values are committed.
    pub fn gamma_blocks(&self) -> usize {
        self.gamma_blocks
    }

    /// Block the strategy currently argues about.
    fn active_block(&self) -> usize {
        (self.gamma_blocks + 1).min(self.ctx.blocks())
    }

    fn alive(&self, state: &MatchState, side: Side, moved: &Board, reply: &Board) -> bool {
        match side {
            Side::Left => boards_match(state.mode.prune_mode(), moved, reply),
            Side::Right => boards_match(state.mode.prune_mode(), reply, moved),
        }
    }

    /// Single-board reply to `moved` from `w`. Inside committed blocks the
    /// fallback value is forced; otherwise the first value that keeps the
    /// boards matching wins, preferring values that also keep the pair good
    /// at the active block, at the target's block, and at the block the
    /// pebble came from. The flag reports whether that goodness tier was
    /// met.
    #[allow(clippy::too_many_arguments)]
    fn plan_single(
        &self,
        state: &MatchState,
        side: Side,
        w: &Board,
        pebble: usize,
        target: Elem,
        before: &Board,
        moved: &Board,
    ) -> Option<(Elem, bool)> {
        let var = self.ctx.var_of(target);
        let xval = self.ctx.value_of(target);
        let role = self.ctx.role_of(var);
        if role.is_some_and(|r| r.block() <= self.gamma_blocks) {
            if let Some(&gv) = self.gamma.get(&var) {
                let y = self.ctx.element(var, xval + gv);
                let reply = w.move_pebble(pebble, y);
                return self.alive(state, side, moved, &reply).then_some((y, true));
            }
        }
        let mut blocks = vec![self.active_block()];
        let source = before
            .assignment()
            .get(pebble)
            .and_then(|e| self.ctx.role_of(self.ctx.var_of(e)));
        for r in role.iter().chain(source.iter()) {
            if !blocks.contains(&r.block()) {
                blocks.push(r.block());
            }
        }
        let order = self.ctx.formula().group_order() as u32;
        let mut fallback = None;
        for gv in (0..order).map(GroupElem) {
            let y = self.ctx.element(var, xval + gv);
            let reply = w.move_pebble(pebble, y);
            if !self.alive(state, side, moved, &reply) {
                continue;
            }
            if blocks.iter().all(|&b| self.ctx.good(moved, &reply, b)) {
                return Some((y, true));
            }
            if fallback.is_none() {
                fallback = Some(y);
            }
        }
        fallback.map(|y| (y, false))
    }

    /// Alternative boards for a completion: one copy per colour other than
    /// the completing one, each shifting the combined sum by that colour's
    /// unit so exactly one coordinate stays open per copy.
    fn plan_dual(&self, moved: &Board, w: &Board, pebble: usize, target: Elem, c: usize) -> Vec<Elem> {
        let var = self.ctx.var_of(target);
        let mut sum = self.ctx.value_of(target);
        for p in 0..moved.assignment().num_pebbles() {
            if p == pebble {
                continue;
            }
            if let Some(s) = self.ctx.pair_sum(moved, w, p) {
                sum = sum + s;
            }
        }
        (1..=self.ctx.s_count())
            .filter(|&j| j != c)
            .map(|j| self.ctx.element(var, sum + GroupElem::unit(j)))
            .collect()
    }

    /// The full dual answer if this move completes an uncommitted block and
    /// the position without the moved pebble was still fully good there.
    #[allow(clippy::too_many_arguments)]
    fn completion(
        &self,
        state: &MatchState,
        side: Side,
        before: &Board,
        moved: &Board,
        w: &Board,
        pebble: usize,
        target: Elem,
    ) -> Option<Vec<Elem>> {
        let var = self.ctx.var_of(target);
        let Some(VarRole::S { index: c, block }) = self.ctx.role_of(var) else {
            return None;
        };
        if block <= self.gamma_blocks
            || !self.ctx.type_is_all_s(moved, block)
            || !self.ctx.good_for_excluding(before, w, block, c, Some(pebble))
        {
            return None;
        }
        let copies = self.plan_dual(moved, w, pebble, target, c);
        copies
            .iter()
            .all(|&y| self.alive(state, side, moved, &w.move_pebble(pebble, y)))
            .then_some(copies)
    }

    /// After a completed block's split, the first move of the pebble on the
    /// one still-open colour commits fallback values for the whole block:
    /// the settled sums for the other colours, the complementary value for
    /// the open one, and the matching unit for each completion variable.
    fn maybe_commit(&mut self, state: &MatchState, pebble: usize) {
        if state.left.len() != 1 || state.right.len() != 1 {
            return;
        }
        let block = self.gamma_blocks + 1;
        if block + 1 > self.ctx.blocks() {
            return;
        }
        let (a, b) = (&state.left.boards()[0], &state.right.boards()[0]);
        if !self.ctx.type_is_all_s(a, block) {
            return;
        }
        let bad: Vec<usize> = (1..=self.ctx.s_count())
            .filter(|&l| !self.ctx.good_for(a, b, block, l))
            .collect();
        let &[open] = bad.as_slice() else {
            return;
        };
        let Some(open_var) = self.ctx.s_var(open, block) else {
            return;
        };
        if !a.assignment().get(pebble).is_some_and(|e| self.ctx.var_of(e) == open_var) {
            return;
        }
        let mut committed = Vec::new();
        let mut total = GroupElem::ZERO;
        for i in (1..=self.ctx.s_count()).filter(|&i| i != open) {
            let Some(vi) = self.ctx.s_var(i, block) else {
                return;
            };
            let Some(p) = (0..state.k)
                .find(|&p| a.assignment().get(p).is_some_and(|e| self.ctx.var_of(e) == vi))
            else {
                return;
            };
            let Some(s) = self.ctx.pair_sum(a, b, p) else {
                return;
            };
            committed.push((vi, s));
            total = total + s;
        }
        let m = self.ctx.formula().width();
        self.gamma.extend(committed);
        self.gamma.insert(open_var, GroupElem::ones(m) + total);
        for i in 1..=m {
            if let Some(ve) = self.ctx.e_var(i, block) {
                self.gamma.insert(ve, GroupElem::unit(i));
            }
        }
        self.gamma_blocks = block;
    }

    fn note_keep(&mut self, side: Side, mover_len: usize, moved: &Board) {
        if mover_len > 1 {
            self.keep = Some((side, moved.canonical_key()));
        }
    }
}

impl DuplicatorAgent for DualDuplicator {
    fn keep_parts(&mut self, _state: &MatchState, _side: Side, parts: &[Vec<usize>]) -> Vec<usize> {
        // A part with two alternatives still pins no coordinate; keeping all
        // singleton parts instead concedes the weight multiplication that a
        // finished block is worth.
        match parts.iter().position(|p| p.len() >= 2) {
            Some(i) => vec![i],
            None => (0..parts.len()).collect(),
        }
    }

    fn respond(
        &mut self,
        state: &MatchState,
        side: Side,
        pebble: usize,
        targets: &[Elem],
    ) -> Vec<Vec<Elem>> {
        self.keep = None;
        self.maybe_commit(state, pebble);
        let (mover, answerer) = match side {
            Side::Left => (&state.left, &state.right),
            Side::Right => (&state.right, &state.left),
        };
        if answerer.len() == 1 {
            let w = &answerer.boards()[0];
            for (i, b) in mover.iter().enumerate() {
                let moved = b.move_pebble(pebble, targets[i]);
                if let Some(copies) =
                    self.completion(state, side, b, &moved, w, pebble, targets[i])
                {
                    self.note_keep(side, mover.len(), &moved);
                    return vec![copies];
                }
            }
            let plans: Vec<(Option<(Elem, bool)>, Board)> = mover
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let moved = b.move_pebble(pebble, targets[i]);
                    (self.plan_single(state, side, w, pebble, targets[i], b, &moved), moved)
                })
                .collect();
            for wanted in [true, false] {
                if let Some((plan, moved)) =
                    plans.iter().find(|(p, _)| p.is_some_and(|(_, tier)| tier == wanted))
                {
                    self.note_keep(side, mover.len(), moved);
                    let (y, _) = plan.expect("found plan is present");
                    return vec![vec![y]];
                }
            }
            return vec![Vec::new()];
        }
        // The answering side holds the alternatives; the mover side is one
        // board.
        let b = &mover.boards()[0];
        let moved = b.move_pebble(pebble, targets[0]);
        let var = self.ctx.var_of(targets[0]);
        let xval = self.ctx.value_of(targets[0]);
        let completed = match self.ctx.role_of(var) {
            Some(VarRole::S { index, block })
                if block > self.gamma_blocks && self.ctx.type_is_all_s(&moved, block) =>
            {
                Some((index, block))
            }
            _ => None,
        };
        if completed.is_some() && answerer.len() + 1 == self.ctx.s_count() {
            // Shift each alternative so its sums are unchanged; every
            // coordinate stays exactly as open as before.
            let replies: Vec<Vec<Elem>> = answerer
                .iter()
                .map(|mem| {
                    let Some(old) = self.ctx.pair_sum(b, mem, pebble) else {
                        return Vec::new();
                    };
                    let y = self.ctx.element(var, xval + old);
                    if self.alive(state, side, &moved, &mem.move_pebble(pebble, y)) {
                        vec![y]
                    } else {
                        Vec::new()
                    }
                })
                .collect();
            if replies.iter().any(|r| !r.is_empty()) {
                return replies;
            }
        }
        if let Some((c, block)) = completed {
            // Too few alternatives survive to shift in place; regrow the
            // full set from one alternative that is open everywhere the
            // moved pebble is not.
            for (i, mem) in answerer.iter().enumerate() {
                if !self.ctx.good_for_excluding(b, mem, block, c, Some(pebble)) {
                    continue;
                }
                let copies = self.plan_dual(&moved, mem, pebble, targets[0], c);
                if copies
                    .iter()
                    .all(|&y| self.alive(state, side, &moved, &mem.move_pebble(pebble, y)))
                {
                    let mut replies = vec![Vec::new(); answerer.len()];
                    replies[i] = copies;
                    return replies;
                }
            }
        }
        // The move leaves the completed type: collapse to one alternative
        // that still has a working reply.
        let mut best: Option<(usize, Elem)> = None;
        for (i, mem) in answerer.iter().enumerate() {
            if let Some((y, tier)) =
                self.plan_single(state, side, mem, pebble, targets[0], b, &moved)
            {
                if tier {
                    best = Some((i, y));
                    break;
                }
                if best.is_none() {
                    best = Some((i, y));
                }
            }
        }
        let mut replies = vec![Vec::new(); answerer.len()];
        if let Some((i, y)) = best {
            replies[i] = vec![y];
        }
        replies
    }

    fn discard(&mut self, state: &MatchState) -> (Vec<usize>, Vec<usize>) {
        let Some((side, key)) = self.keep.take() else {
            return (Vec::new(), Vec::new());
        };
        let set = match side {
            Side::Left => &state.left,
            Side::Right => &state.right,
        };
        if set.len() <= 1 {
            return (Vec::new(), Vec::new());
        }
        let drop: Vec<usize> = set
            .iter()
            .enumerate()
            .filter(|(_, b)| b.canonical_key() != key)
            .map(|(i, _)| i)
            .collect();
        if drop.len() == set.len() {
            // The kept board died in the deletion step; hold what is left.
            return (Vec::new(), Vec::new());
        }
        match side {
            Side::Left => (drop, Vec::new()),
            Side::Right => (Vec::new(), drop),
        }
    }
}

/// Scripted Spoiler for chained pairs: pebbles the colours of the deepest
/// started block, splits the alternative set the completion reply builds,
/// pins the kept board's one open coordinate with the matching completion
/// variable, and crosses into the next block from there.
pub struct ChainSpoiler {
    ctx: PairContext,
}

impl ChainSpoiler {
    pub fn new(pair: &BuiltPair) -> ChainSpoiler {
        ChainSpoiler { ctx: pair.ctx.clone() }
    }
}

impl SpoilerAgent for ChainSpoiler {
    fn propose(&mut self, state: &MatchState) -> SpoilerMove {
        let ctx = &self.ctx;
        let k = ctx.s_count();
        let board = &state.left.boards()[0];
        let block = (0..state.k)
            .filter_map(|p| board.assignment().get(p))
            .filter_map(|e| ctx.role_of(ctx.var_of(e)))
            .map(|r| r.block())
            .max()
            .unwrap_or(1);
        let on_var = |var: usize| {
            (0..state.k)
                .find(|&p| board.assignment().get(p).is_some_and(|e| ctx.var_of(e) == var))
        };
        let covered: Vec<Option<usize>> =
            (1..=k).map(|c| ctx.s_var(c, block).and_then(on_var)).collect();
        let pinned: Option<(usize, usize)> = (1..=ctx.formula().width())
            .find_map(|i| ctx.e_var(i, block).and_then(on_var).map(|p| (p, i)));
        if pinned.is_none() {
            if let Some(cz) = covered.iter().position(Option::is_none) {
                let var = ctx.s_var(cz + 1, block).expect("block colours are named");
                let pebble = (0..state.k)
                    .find(|p| !covered.iter().flatten().any(|q| q == p))
                    .expect("some pebble is off this block");
                let t = ctx.element(var, GroupElem::ZERO);
                return SpoilerMove::Pebble {
                    side: Side::Left,
                    pebble,
                    targets: vec![t; state.left.len()],
                };
            }
            if state.right.len() >= 2 && state.last_split != Some(Side::Right) {
                let parts = (0..state.right.len()).map(|i| vec![i]).collect();
                return SpoilerMove::Split { side: Side::Right, parts };
            }
            // One alternative left: pin its open coordinate.
            let w = &state.right.boards()[0];
            let open = (1..=k).find(|&l| !ctx.good_for(board, w, block, l)).unwrap_or(1);
            let pebble = covered[open - 1].expect("open colour is pebbled");
            let var = ctx.e_var(open, block).expect("completion variable is named");
            let t = ctx.element(var, GroupElem::ZERO);
            return SpoilerMove::Pebble {
                side: Side::Left,
                pebble,
                targets: vec![t; state.left.len()],
            };
        }
        let (_, held) = pinned.expect("pinned in this branch");
        if block < ctx.blocks() {
            let c = (1..=k)
                .find(|&c| c != held && covered[c - 1].is_some())
                .expect("another colour is pebbled");
            let pebble = covered[c - 1].expect("colour is pebbled");
            let m = ctx.formula().width();
            let entry = if m == k { 1 } else { k };
            let var = ctx.s_var(entry, block + 1).expect("next block exists");
            let t = ctx.element(var, GroupElem::ZERO);
            return SpoilerMove::Pebble {
                side: Side::Left,
                pebble,
                targets: vec![t; state.left.len()],
            };
        }
        // Nothing useful is left; repeat a placement until the horizon.
        let t = ctx.element(0, GroupElem::ZERO);
        SpoilerMove::Pebble { side: Side::Left, pebble: 0, targets: vec![t; state.left.len()] }
    }

    fn pick_part(&mut self, _state: &MatchState, _parts: &[Vec<usize>], kept: &[usize]) -> usize {
        kept[0]
    }
}

/// Scripted Spoiler for the xor demo pair. Three placements on the left let
/// the reply fork into two right-side lines; the script then repebbles on
/// the right, steering the line that answered with one into the clause chain
/// while freezing the other, until both parities forced on the last variable
/// clash.
pub struct XorDemoSpoiler {
    ctx: PairContext,
}

impl XorDemoSpoiler {
    pub fn new(pair: &BuiltPair) -> XorDemoSpoiler {
        XorDemoSpoiler { ctx: pair.ctx.clone() }
    }
}

impl SpoilerAgent for XorDemoSpoiler {
    fn propose(&mut self, state: &MatchState) -> SpoilerMove {
        let ctx = &self.ctx;
        let el = |v: usize, g: u32| ctx.element(v, GroupElem(g));
        match state.round {
            r @ 0..=2 => SpoilerMove::Pebble {
                side: Side::Left,
                pebble: r,
                targets: vec![el(r, 0); state.left.len()],
            },
            r @ 3..=5 => {
                let (pebble, next) = [(0, 3), (2, 4), (1, 7)][r - 3];
                let targets = state
                    .right
                    .iter()
                    .map(|b| {
                        let forked = b
                            .assignment()
                            .get(1)
                            .is_some_and(|e| ctx.value_of(e) == GroupElem(1));
                        if forked {
                            el(next, 0)
                        } else {
                            b.assignment().get(pebble).expect("pebble was placed")
                        }
                    })
                    .collect();
                SpoilerMove::Pebble { side: Side::Right, pebble, targets }
            }
            r @ 6..=8 => {
                let (pebble, var) = [(0, 5), (1, 6), (2, 7)][r - 6];
                SpoilerMove::Pebble {
                    side: Side::Right,
                    pebble,
                    targets: vec![el(var, 0); state.right.len()],
                }
            }
            _ => SpoilerMove::Pebble {
                side: Side::Right,
                pebble: 2,
                targets: vec![el(7, 0); state.right.len()],
            },
        }
    }

    fn pick_part(&mut self, _state: &MatchState, _parts: &[Vec<usize>], kept: &[usize]) -> usize {
        kept[0]
    }
}

// --------------------------------------------------------------------------
// Invariant monitor.

/// What the invariant monitor certifies about one finished match.
#[derive(Debug, Clone)]
pub struct InvariantReport {
    pub rounds: usize,
    /// Splits of full alternative sets observed; each one multiplied the
    /// match weight by the number of colours less one.
    pub orders_completed: usize,
    /// Whether Spoiler won before splitting one alternative set per block.
    pub lost_early: bool,
    pub violations: Vec<String>,
}

impl InvariantReport {
    pub fn clean(&self) -> bool {
        self.violations.is_empty() && !self.lost_early
    }
}

/// Replays a match over a built pair and checks the defending strategy's
/// invariants at every round end until one alternative set per block has
/// been split: boards pairwise matching, one board per side away from
/// completions with the pair good at every block still in play, sums
/// settled outside the contested blocks, fallback sums in finished blocks
/// consistent with their restriction, and a full alternative set whenever
/// some block's colours are all pebbled.
pub struct Monitor {
    ctx: PairContext,
    restrictions: Vec<ConstraintFormula>,
}

impl Monitor {
    /// `restrictions[j - 1]` must cover the first `j` blocks of the pair's
    /// formula, as produced by [`gen_chain`].
    pub fn new(pair: &BuiltPair, restrictions: &[ConstraintFormula]) -> Monitor {
        Monitor { ctx: pair.ctx.clone(), restrictions: restrictions.to_vec() }
    }

    /// Monitor for a single-block pair, which needs no restriction list.
    pub fn for_base(pair: &BuiltPair) -> Monitor {
        Monitor { ctx: pair.ctx.clone(), restrictions: Vec::new() }
    }

    pub fn check(
        &self,
        left: &BoardSet,
        right: &BoardSet,
        t: &Transcript,
    ) -> Result<InvariantReport, TranscriptError> {
        let (start, states) = replay_states(left, right, t)?;
        let k = self.ctx.s_count();
        let n = self.ctx.blocks();
        let mut orders = 0usize;
        // Deepest block whose alternative set has been split, and deepest
        // block whose fallback values the defender has had to commit.
        let mut deepest = 0usize;
        let mut committed = 0usize;
        let mut violations = Vec::new();
        for (i, e) in t.entries.iter().enumerate() {
            let pre = if i == 0 { &start } else { &states[i - 1] };
            let post = &states[i];
            match &e.action {
                Action::Split { kept, .. } => {
                    if orders < n && kept.len() + 1 == k {
                        let (mover, other) = match e.side {
                            Side::Left => (&pre.left, &pre.right),
                            Side::Right => (&pre.right, &pre.left),
                        };
                        if other.len() == 1 {
                            let y = &other.boards()[0];
                            if let Some(bb) =
                                (1..=n).find(|&bb| is_dual_set(&self.ctx, mover, y, bb))
                            {
                                orders += 1;
                                deepest = deepest.max(bb);
                            }
                        }
                    }
                    continue;
                }
                Action::Pebble { pebble, .. } => {
                    if orders < n && self.commits(pre, *pebble, committed) {
                        committed += 1;
                    }
                }
                Action::Discard { .. } => {}
            }
            let round_end = match t.entries.get(i + 1) {
                Some(next) => next.round != e.round,
                None => true,
            };
            if !round_end
                || orders >= n
                || position_dead(t.mode, &post.left, &post.right)
            {
                continue;
            }
            self.position_checks(
                &post.left,
                &post.right,
                committed,
                deepest,
                e.round,
                &mut violations,
            );
        }
        let rounds = match &t.result {
            MatchResult::SpoilerWins { rounds, .. }
            | MatchResult::DuplicatorSurvives { rounds, .. } => *rounds,
            MatchResult::Violation { .. } => states.last().map_or(0, |s| s.round),
        };
        let lost_early =
            matches!(t.result, MatchResult::SpoilerWins { .. }) && orders < n;
        Ok(InvariantReport { rounds, orders_completed: orders, lost_early, violations })
    }

    /// Whether this pebble move starts the fallback phase for the next
    /// uncommitted block: one board per side, that block's colours all
    /// pebbled with exactly one coordinate still open, and the moved pebble
    /// sitting on the open coordinate's colour.
    fn commits(&self, pre: &MatchState, pebble: usize, committed: usize) -> bool {
        let block = committed + 1;
        if block + 1 > self.ctx.blocks() || pre.left.len() != 1 || pre.right.len() != 1 {
            return false;
        }
        let (a, b) = (&pre.left.boards()[0], &pre.right.boards()[0]);
        if !self.ctx.type_is_all_s(a, block) {
            return false;
        }
        let bad: Vec<usize> = (1..=self.ctx.s_count())
            .filter(|&l| !self.ctx.good_for(a, b, block, l))
            .collect();
        let &[open] = bad.as_slice() else {
            return false;
        };
        let Some(open_var) = self.ctx.s_var(open, block) else {
            return false;
        };
        a.assignment().get(pebble).is_some_and(|e| self.ctx.var_of(e) == open_var)
    }

    fn position_checks(
        &self,
        left: &BoardSet,
        right: &BoardSet,
        committed: usize,
        deepest: usize,
        round: usize,
        out: &mut Vec<String>,
    ) {
        let k = self.ctx.s_count();
        let n = self.ctx.blocks();
        for (i, a) in left.iter().enumerate() {
            for b in right.iter() {
                if !check_partial_isomorphism(a, b) {
                    out.push(format!("round {round}: boards stop matching across sides"));
                }
            }
            for b in left.iter().skip(i + 1) {
                if !check_partial_isomorphism(a, b) {
                    out.push(format!("round {round}: left boards stop matching each other"));
                }
            }
        }
        for (i, a) in right.iter().enumerate() {
            for b in right.iter().skip(i + 1) {
                if !check_partial_isomorphism(a, b) {
                    out.push(format!("round {round}: right boards stop matching each other"));
                }
            }
        }
        match (left.len(), right.len()) {
            (1, 1) => {
                let (a, b) = (&left.boards()[0], &right.boards()[0]);
                if let Some(bb) = (1..=n).find(|&bb| self.ctx.type_is_all_s(a, bb)) {
                    // A fully pebbled block is fine once its set was split;
                    // before that the defender must have offered the set.
                    if bb > deepest {
                        out.push(format!(
                            "round {round}: block {bb} fully pebbled without its alternative set"
                        ));
                    }
                    return;
                }
                for bb in committed + 1..=n {
                    if !self.ctx.good(a, b, bb) {
                        out.push(format!("round {round}: pair is not good at block {bb}"));
                    }
                }
                self.sum_checks(a, b, committed, deepest, round, out);
            }
            (1, x) if x + 1 == k => {
                if !(1..=n).any(|bb| is_dual_set(&self.ctx, right, &left.boards()[0], bb)) {
                    out.push(format!("round {round}: right side is not an alternative set"));
                }
            }
            (x, 1) if x + 1 == k => {
                if !(1..=n).any(|bb| is_dual_set(&self.ctx, left, &right.boards()[0], bb)) {
                    out.push(format!("round {round}: left side is not an alternative set"));
                }
            }
            (l, r) => out.push(format!("round {round}: unexpected board counts {l} and {r}")),
        }
    }

    /// In lockstep play, where every split so far has its block's fallback
    /// committed, sums must be zero above the block in play and on its
    /// completion variables. Pebbles inside committed blocks must replay
    /// fallback values: their sums, taken as a partial assignment, may not
    /// falsify the restriction covering those blocks, and completion
    /// variables there must carry odd sums.
    fn sum_checks(
        &self,
        a: &Board,
        b: &Board,
        committed: usize,
        deepest: usize,
        round: usize,
        out: &mut Vec<String>,
    ) {
        let mut settled: HashMap<String, GroupElem> = HashMap::new();
        for p in 0..a.assignment().num_pebbles() {
            let (Some(ea), Some(eb)) = (a.assignment().get(p), b.assignment().get(p)) else {
                continue;
            };
            let var = self.ctx.var_of(ea);
            if var != self.ctx.var_of(eb) {
                out.push(format!("round {round}: a pebble pair splits colours"));
                continue;
            }
            let sum = self.ctx.value_of(ea) + self.ctx.value_of(eb);
            let Some(role) = self.ctx.role_of(var) else {
                if sum != GroupElem::ZERO {
                    out.push(format!("round {round}: open sum on an unnamed variable"));
                }
                continue;
            };
            let bb = role.block();
            if bb <= committed {
                settled.insert(self.ctx.formula().vars()[var].clone(), sum);
                if matches!(role, VarRole::E { .. }) && !sum.odd() {
                    out.push(format!("round {round}: even completion sum in a committed block"));
                }
            } else if deepest == committed {
                let active = committed + 1;
                if bb > active && sum != GroupElem::ZERO {
                    out.push(format!("round {round}: open sum above block {active}"));
                }
                if bb == active && matches!(role, VarRole::E { .. }) && sum != GroupElem::ZERO {
                    out.push(format!("round {round}: open completion sum in block {active}"));
                }
            }
        }
        if !settled.is_empty() && committed >= 1 {
            match self.restrictions.get(committed - 1) {
                Some(f) => {
                    if partial_violates(f, &settled) {
                        out.push(format!(
                            "round {round}: settled sums falsify the committed blocks"
                        ));
                    }
                }
                None => out.push(format!(
                    "round {round}: no restriction recorded for the committed blocks"
                )),
            }
        }
    }

    /// Checks a strategy's committed fallback values against the restriction
    /// covering the blocks they span.
    pub fn check_gamma(&self, agent: &DualDuplicator) -> Vec<String> {
        let gb = agent.gamma_blocks();
        if gb == 0 {
            return Vec::new();
        }
        let Some(f) = self.restrictions.get(gb - 1) else {
            return vec!["no restriction recorded for the committed blocks".to_string()];
        };
        let full = self.ctx.formula();
        let mut assignment = Vec::new();
        for name in f.vars() {
            let Some(v) = full.var_index(name) else {
                return vec![format!("variable {name} is missing from the full formula")];
            };
            match agent.gamma().get(&v) {
                Some(&g) => assignment.push(g),
                None => return vec![format!("no fallback value for {name}")],
            }
        }
        if f.satisfied_by(&assignment) {
            Vec::new()
        } else {
            vec!["fallback values do not satisfy the committed blocks".to_string()]
        }
    }
}

/// Whether some clause with every variable assigned sums outside its set.
fn partial_violates(f: &ConstraintFormula, vals: &HashMap<String, GroupElem>) -> bool {
    f.clauses().iter().any(|c| {
        let mut sum = GroupElem::ZERO;
        for &v in &c.vars {
            match vals.get(&f.vars()[v]) {
                Some(&g) => sum = sum + g,
                None => return false,
            }
        }
        !c.set.contains(sum)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::board::Assignment;
    use crate::games::agents::{run_match, ObviousDuplicator, RandomSpoiler};
    use crate::structure::is_isomorphic_bruteforce;
    use crate::LogicMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::VecDeque;

    fn base3_pair() -> BuiltPair {
        let f = gen_base(3, Parity::Odd).expect("three pebbles is a valid base");
        build_pair(&f, "demo")
    }

    fn start_sets(pair: &BuiltPair, k: usize) -> (BoardSet, BoardSet) {
        (
            BoardSet::singleton(Board::empty(pair.left.clone(), k)),
            BoardSet::singleton(Board::empty(pair.right.clone(), k)),
        )
    }

    fn brute_force_sat(f: &ConstraintFormula) -> Option<Vec<GroupElem>> {
        let order = f.group_order() as u32;
        let nv = f.vars().len();
        let mut assignment = vec![GroupElem::ZERO; nv];
        loop {
            if f.satisfied_by(&assignment) {
                return Some(assignment);
            }
            let mut pos = 0;
            loop {
                if pos == nv {
                    return None;
                }
                assignment[pos].0 += 1;
                if assignment[pos].0 < order {
                    break;
                }
                assignment[pos] = GroupElem::ZERO;
                pos += 1;
            }
        }
    }

    struct ScriptSpoiler {
        script: VecDeque<SpoilerMove>,
    }

    impl SpoilerAgent for ScriptSpoiler {
        fn propose(&mut self, _state: &MatchState) -> SpoilerMove {
            self.script.pop_front().expect("script covers the whole match")
        }

        fn pick_part(
            &mut self,
            _state: &MatchState,
            _parts: &[Vec<usize>],
            kept: &[usize],
        ) -> usize {
            kept[0]
        }
    }

    #[test]
    fn group_elements_add_and_project_by_coordinate() {
        assert_eq!(GroupElem::unit(1), GroupElem(1));
        assert_eq!(GroupElem::unit(3), GroupElem(4));
        assert_eq!(GroupElem::ones(3), GroupElem(7));
        assert_eq!(GroupElem(5) + GroupElem(3), GroupElem(6));
        assert!(GroupElem(7).odd());
        assert!(!GroupElem(5).odd());
        assert!(GroupElem(5).coord(1));
        assert!(!GroupElem(5).coord(2));
        assert!(GroupElem(5).coord(3));
        assert!(GroupElem(0b011).dot(GroupElem(0b010)));
        assert!(!GroupElem(0b011).dot(GroupElem(0b011)));
        assert_eq!(GroupElem(0b011).bits(3), "110");
    }

    #[test]
    fn index_two_sets_classify_membership() {
        let even = IndexTwoSet::even(3);
        assert!(even.contains(GroupElem(0)));
        assert!(even.contains(GroupElem(3)));
        assert!(!even.contains(GroupElem(7)));
        let odd = IndexTwoSet::odd(3);
        assert!(odd.contains(GroupElem(4)));
        assert!(!odd.contains(GroupElem(5)));
        assert!(odd.is_complement());
        assert!(!even.is_complement());
        let cz = IndexTwoSet::coord_zero(2);
        assert!(cz.contains(GroupElem(5)));
        assert!(!cz.contains(GroupElem(2)));
        assert_eq!(even.complemented().chi(), even.chi());
        assert!(even.complemented().contains(GroupElem(7)));
        assert!(matches!(
            IndexTwoSet::new(GroupElem::ZERO, false),
            Err(GroupconError::ZeroChi)
        ));
    }

    #[test]
    fn subgroup_recognizer_matches_enumeration_on_width_two() {
        for mask in 0u32..16 {
            let subset: Vec<GroupElem> =
                (0..4).filter(|&g| mask >> g & 1 == 1).map(GroupElem).collect();
            let expected = (1u32..4).any(|chi| {
                (0..4).all(|g| (mask >> g & 1 == 1) == !GroupElem(chi).dot(GroupElem(g)))
            });
            assert_eq!(check_index_two(&subset, 2), expected, "mask {mask:04b}");
        }
    }

    #[test]
    fn formula_text_roundtrips() {
        let base = gen_base(3, Parity::Odd).unwrap();
        assert_eq!(ConstraintFormula::from_text(&base.to_text()).unwrap(), base);
        let chain = gen_chain(4, 2, Parity::Even).unwrap();
        assert_eq!(ConstraintFormula::from_text(&chain.full.to_text()).unwrap(), chain.full);
    }

    #[test]
    fn malformed_formulas_are_rejected() {
        assert!(matches!(
            ConstraintFormula::new(0, ["x"]),
            Err(GroupconError::Width { got: 0 })
        ));
        assert!(matches!(ConstraintFormula::new(2, ["x", "x"]), Err(GroupconError::VarNames)));
        assert!(matches!(ConstraintFormula::new(2, ["a b"]), Err(GroupconError::VarNames)));
        let mut f = ConstraintFormula::new(2, ["x", "y"]).unwrap();
        assert!(matches!(
            f.push_clause(&[5], IndexTwoSet::even(2), false),
            Err(GroupconError::UnknownVar(_))
        ));
        assert!(matches!(
            f.push_clause(&[0, 0], IndexTwoSet::even(2), false),
            Err(GroupconError::DuplicateVar)
        ));
        assert!(matches!(
            f.push_clause(&[0], IndexTwoSet::even(2), true),
            Err(GroupconError::SetSide)
        ));
        assert!(matches!(
            f.push_clause(&[0], IndexTwoSet::odd(2), false),
            Err(GroupconError::SetSide)
        ));
        let text = "group 2\nvar x\nclause chi=11 b=1 vars x\n";
        assert!(matches!(
            ConstraintFormula::from_text(text),
            Err(GroupconError::Parse { .. })
        ));
    }

    #[test]
    fn gaussian_satisfiability_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..40 {
            let nv: usize = rng.gen_range(1..=3);
            let f = random_formula(&mut rng, 2, nv, 4);
            let brute = brute_force_sat(&f);
            let solved = satisfiable(&f);
            assert_eq!(solved.is_some(), brute.is_some(), "trial {trial}:\n{}", f.to_text());
            if let Some(a) = solved {
                assert!(f.satisfied_by(&a), "trial {trial}");
            }
        }
    }

    #[test]
    fn generated_families_are_unsatisfiable_until_truncated() {
        for (k, parity) in [(3, Parity::Odd), (4, Parity::Even)] {
            let base = gen_base(k, parity).unwrap();
            assert!(satisfiable(&base).is_none(), "base {k}");
            let chain = gen_chain(k, 2, parity).unwrap();
            assert!(satisfiable(&chain.full).is_none(), "chain {k}");
            assert_eq!(chain.restrictions.len(), 2);
            let first = &chain.restrictions[0];
            let a = satisfiable(first).expect("one block alone is consistent");
            assert!(first.satisfied_by(&a));
            assert_eq!(chain.restrictions.last().unwrap(), &chain.full);
        }
        assert!(satisfiable(&gen_xor_demo()).is_none());
        assert!(matches!(gen_base(2, Parity::Even), Err(GroupconError::FewPebbles { .. })));
        assert!(matches!(gen_base(4, Parity::Odd), Err(GroupconError::ParityMismatch { .. })));
        assert!(matches!(gen_chain(3, 0, Parity::Odd), Err(GroupconError::NoBlocks)));
    }

    #[test]
    fn a_one_block_chain_is_the_base_with_suffixed_names() {
        let base = gen_base(3, Parity::Odd).unwrap();
        let chain = gen_chain(3, 1, Parity::Odd).unwrap();
        assert_eq!(chain.restrictions.len(), 1);
        assert_eq!(chain.restrictions.last().unwrap(), &chain.full);
        let stripped: Vec<String> = chain
            .full
            .vars()
            .iter()
            .map(|v| v.trim_end_matches("(1)").to_string())
            .collect();
        assert_eq!(stripped, base.vars());
        assert_eq!(chain.full.clauses().len(), base.clauses().len());
        for (c, d) in chain.full.clauses().iter().zip(base.clauses()) {
            assert_eq!(c.vars, d.vars);
            assert_eq!(c.set, d.set);
            assert_eq!(c.distinguishing, d.distinguishing);
        }
    }

    #[test]
    fn built_pairs_pack_variables_and_clause_relations() {
        let pair = base3_pair();
        let ctx = &pair.ctx;
        assert_eq!(pair.left.domain_size(), 48);
        assert_eq!(pair.right.domain_size(), 48);
        assert_eq!(ctx.formula().vars().len(), 6);
        assert_eq!(ctx.formula().clauses().len(), 18);
        assert_eq!(pair.left.signature().len(), 24);
        assert_eq!(pair.left.signature(), pair.right.signature());
        let e = ctx.element(4, GroupElem(5));
        assert_eq!(ctx.var_of(e), 4);
        assert_eq!(ctx.value_of(e), GroupElem(5));
        let col = ctx.colour_relation(2);
        assert_eq!(pair.left.rel_tuples(col).len(), 8);
        assert_eq!(pair.left.rel_tuples(col), pair.right.rel_tuples(col));
        let dist = ctx.clause_relation(0);
        assert!(ctx.formula().clauses()[0].distinguishing);
        assert_eq!(pair.left.rel_tuples(dist).len(), 4);
        assert_eq!(pair.right.rel_tuples(dist).len(), 4);
        assert_ne!(pair.left.rel_tuples(dist), pair.right.rel_tuples(dist));
        let plain = ctx.clause_relation(1);
        assert_eq!(pair.left.rel_tuples(plain), pair.right.rel_tuples(plain));

        let f4 = gen_base(4, Parity::Even).unwrap();
        assert_eq!(f4.width(), 3);
        assert_eq!(f4.clauses().len(), 19);
        let pair4 = build_pair(&f4, "even");
        assert_eq!(pair4.left.domain_size(), 56);
    }

    #[test]
    fn variable_roles_parse_from_names() {
        let pair = base3_pair();
        let ctx = &pair.ctx;
        assert_eq!(ctx.blocks(), 1);
        assert_eq!(ctx.s_count(), 3);
        let s2 = ctx.s_var(2, 1).unwrap();
        assert_eq!(ctx.role_of(s2), Some(VarRole::S { index: 2, block: 1 }));
        let e3 = ctx.e_var(3, 1).unwrap();
        assert_eq!(ctx.role_of(e3), Some(VarRole::E { index: 3, block: 1 }));
        assert!(ctx.s_var(4, 1).is_none());
        assert!(ctx.completion_clause(1, 1).is_some());
        assert!(ctx.link_clause(1, 1).is_none());

        let chain = gen_chain(3, 2, Parity::Odd).unwrap();
        let cpair = build_pair(&chain.full, "chain");
        assert_eq!(cpair.ctx.blocks(), 2);
        assert!(cpair.ctx.link_clause(1, 1).is_some());
        assert!(cpair.ctx.link_clause(1, 2).is_none());
        assert!(cpair.ctx.completion_clause(2, 2).is_some());
    }

    #[test]
    fn satisfiability_decides_isomorphism_of_the_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..12 {
            let nv: usize = rng.gen_range(1..=3);
            let ncl: usize = rng.gen_range(1..=4);
            let f = random_formula(&mut rng, 2, nv, ncl);
            let pair = build_pair(&f, "d");
            let iso = is_isomorphic_bruteforce(&pair.left, &pair.right, 12)
                .expect("pairs fit under the cap");
            assert_eq!(iso, satisfiable(&f).is_some(), "trial {trial}:\n{}", f.to_text());
        }
        let xp = build_pair(&gen_xor_demo(), "xor");
        assert!(!is_isomorphic_bruteforce(&xp.left, &xp.right, 16).unwrap());
    }

    #[test]
    fn clause_sums_reproduce_the_partial_isomorphism_check() {
        let pair = base3_pair();
        let ctx = &pair.ctx;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut seen = [0usize; 2];
        for _ in 0..300 {
            // Same-variable pebbles must carry one common sum for the sum
            // criterion to apply, so draw the sums per variable up front.
            let offsets: Vec<GroupElem> =
                (0..6).map(|_| GroupElem(rng.gen_range(0..8))).collect();
            let mut ls = Vec::new();
            let mut rs = Vec::new();
            for _ in 0..3 {
                if rng.gen_bool(0.75) {
                    let var: usize = rng.gen_range(0..6);
                    let gx = GroupElem(rng.gen_range(0..8));
                    ls.push(Some(ctx.element(var, gx)));
                    rs.push(Some(ctx.element(var, gx + offsets[var])));
                } else {
                    ls.push(None);
                    rs.push(None);
                }
            }
            let x = Board::new(pair.left.clone(), Assignment::from_slots(ls));
            let y = Board::new(pair.right.clone(), Assignment::from_slots(rs));
            let by_sums = partial_iso_by_sums(ctx, &x, &y);
            assert_eq!(by_sums, check_partial_isomorphism(&x, &y));
            seen[usize::from(by_sums)] += 1;
        }
        assert!(seen[0] > 0 && seen[1] > 0, "one-sided sample: {seen:?}");

        let x = Board::new(
            pair.left.clone(),
            Assignment::from_slots(vec![Some(ctx.element(0, GroupElem::ZERO)), None, None]),
        );
        let y = Board::new(
            pair.right.clone(),
            Assignment::from_slots(vec![Some(ctx.element(1, GroupElem::ZERO)), None, None]),
        );
        assert!(!partial_iso_by_sums(ctx, &x, &y));
        assert!(!check_partial_isomorphism(&x, &y));
    }

    #[test]
    fn a_completion_reply_builds_the_alternative_set() {
        let pair = base3_pair();
        let ctx = pair.ctx.clone();
        let sv = |i: usize| ctx.s_var(i, 1).expect("colours are named");
        let el = |v: usize, g: u32| ctx.element(v, GroupElem(g));
        let script = VecDeque::from(vec![
            SpoilerMove::Pebble { side: Side::Right, pebble: 0, targets: vec![el(sv(1), 2)] },
            SpoilerMove::Pebble { side: Side::Right, pebble: 1, targets: vec![el(sv(2), 0)] },
            SpoilerMove::Pebble { side: Side::Right, pebble: 2, targets: vec![el(sv(3), 0)] },
        ]);
        let mut sp = ScriptSpoiler { script };
        let mut dup = DualDuplicator::new(&pair);
        let (l, r) = start_sets(&pair, 3);
        let t = run_match(&l, &r, 3, LogicMode::Full, 3, &mut sp, &mut dup).unwrap();
        assert_eq!(t.result, MatchResult::DuplicatorSurvives { rounds: 3, score: 3 });
        let last = t.entries.iter().rev().find_map(|e| match &e.action {
            Action::Pebble { answers, .. } => Some(answers.clone()),
            _ => None,
        });
        assert_eq!(last, Some(vec![vec![el(sv(3), 3), el(sv(3), 0)]]));
        let (_, states) = replay_states(&l, &r, &t).unwrap();
        let post = states.last().unwrap();
        assert_eq!((post.left.len(), post.right.len()), (2, 1));
        assert!(is_dual_set(&ctx, &post.left, &post.right.boards()[0], 1));
    }

    #[test]
    fn the_scripted_attack_wins_the_base_in_four_rounds() {
        let pair = base3_pair();
        let (l, r) = start_sets(&pair, 3);
        let mut sp = ChainSpoiler::new(&pair);
        let mut dup = DualDuplicator::new(&pair);
        let t = run_match(&l, &r, 3, LogicMode::Full, 8, &mut sp, &mut dup).unwrap();
        assert_eq!(t.result, MatchResult::SpoilerWins { rounds: 4, score: 5 });
        let report = Monitor::for_base(&pair).check(&l, &r, &t).unwrap();
        assert!(report.clean(), "violations: {:?}", report.violations);
        assert_eq!(report.orders_completed, 1);
    }

    #[test]
    fn the_scripted_attack_crosses_both_blocks_of_a_chain() {
        let chain = gen_chain(3, 2, Parity::Odd).unwrap();
        let pair = build_pair(&chain.full, "chain2");
        let (l, r) = start_sets(&pair, 3);
        let mut sp = ChainSpoiler::new(&pair);
        let mut dup = DualDuplicator::new(&pair);
        let t = run_match(&l, &r, 3, LogicMode::Full, 12, &mut sp, &mut dup).unwrap();
        assert_eq!(t.result, MatchResult::SpoilerWins { rounds: 8, score: 15 });
        let monitor = Monitor::new(&pair, &chain.restrictions);
        let report = monitor.check(&l, &r, &t).unwrap();
        assert!(report.clean(), "violations: {:?}", report.violations);
        assert_eq!(report.orders_completed, 2);
        assert_eq!(dup.gamma_blocks(), 1);
        let gamma_faults = monitor.check_gamma(&dup);
        assert!(gamma_faults.is_empty(), "fallback faults: {gamma_faults:?}");
    }

    #[test]
    fn the_even_base_pays_a_wider_alternative_set() {
        let f = gen_base(4, Parity::Even).unwrap();
        let pair = build_pair(&f, "even");
        let (l, r) = start_sets(&pair, 4);
        let mut sp = ChainSpoiler::new(&pair);
        let mut dup = DualDuplicator::new(&pair);
        let t = run_match(&l, &r, 4, LogicMode::Full, 10, &mut sp, &mut dup).unwrap();
        assert_eq!(t.result, MatchResult::SpoilerWins { rounds: 5, score: 7 });
        let report = Monitor::for_base(&pair).check(&l, &r, &t).unwrap();
        assert!(report.clean(), "violations: {:?}", report.violations);
        assert_eq!(report.orders_completed, 1);
    }

    #[test]
    fn random_attacks_never_break_the_defensive_invariants() {
        let pair = base3_pair();
        let monitor = Monitor::for_base(&pair);
        let (l, r) = start_sets(&pair, 3);
        for seed in 0..50 {
            let mut sp = RandomSpoiler::new(seed);
            let mut dup = DualDuplicator::new(&pair);
            let t = run_match(&l, &r, 3, LogicMode::Full, 12, &mut sp, &mut dup).unwrap();
            assert!(
                !matches!(t.result, MatchResult::Violation { .. }),
                "seed {seed}: {:?}",
                t.result
            );
            let report = monitor.check(&l, &r, &t).unwrap();
            assert!(report.clean(), "seed {seed}: {:?}", report.violations);
        }
    }

    #[test]
    fn the_freezing_demo_finishes_in_nine_rounds() {
        let pair = build_pair(&gen_xor_demo(), "xor");
        let (l, r) = start_sets(&pair, 3);
        let mut sp = XorDemoSpoiler::new(&pair);
        let mut dup = ObviousDuplicator;
        let t = run_match(&l, &r, 3, LogicMode::Full, 12, &mut sp, &mut dup).unwrap();
        match t.result {
            MatchResult::SpoilerWins { rounds, score } => {
                assert!(rounds <= 9, "rounds {rounds}");
                assert_eq!(score, rounds as u64);
            }
            other => panic!("expected a spoiler win, got {other:?}"),
        }
        assert!(t.entries.iter().all(|e| !matches!(e.action, Action::Split { .. })));
    }

    #[test]
    fn the_shadow_solver_certifies_four_rounds_on_the_base() {
        let f = gen_base(3, Parity::Odd).unwrap();
        assert_eq!(ShadowGame::new(&f, 3).value(6), Some(4));
        assert_eq!(ShadowGame::new(&f, 2).value(6), None);
        let pair = base3_pair();
        let wins = verify_shadow_on_pair(&pair, 3, 4).unwrap();
        assert!(wins > 0);
    }
}
