//! Interactive play of the points game: agent traits, a referee that
//! validates moves and banks points, and transcripts that serialize to text
//! and replay with digest checks.
//!
//! The referee enforces the game rules; agents only pick among legal-looking
//! options and an illegal choice ends the match with a violation verdict
//! rather than an error. Voluntary board discards are legal for Duplicator
//! here even though the value recursion never needs them (giving up a board
//! can only help Spoiler): an answering board given no copies drops out
//! mid-round, and [`DuplicatorAgent::discard`] sheds boards on either side
//! at the end of a round.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::board::{Board, BoardSet};
use crate::games::qvt::{MoveRec, QvtConfig, QvtSolver};
use crate::games::{position_dead, prune_round, Side};
use crate::structure::Elem;
use crate::LogicMode;

/// Everything an agent may inspect when choosing a move.
#[derive(Debug, Clone)]
pub struct MatchState {
    pub left: BoardSet,
    pub right: BoardSet,
    pub mode: LogicMode,
    pub k: usize,
    /// Completed rounds.
    pub round: usize,
    /// Current per-round point weight, the product of kept-set sizes so far.
    pub weight: u64,
    /// Points banked over completed rounds.
    pub score: u64,
    /// Side of the split immediately preceding, which may not split again
    /// before the other side does.
    pub last_split: Option<Side>,
}

/// Spoiler's proposal: either the round-ending pebble move or a set split.
/// Part and board indices refer to the canonical order of the named side in
/// the current state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpoilerMove {
    Pebble { side: Side, pebble: usize, targets: Vec<Elem> },
    Split { side: Side, parts: Vec<Vec<usize>> },
}

pub trait SpoilerAgent {
    /// Next move at the current state.
    fn propose(&mut self, state: &MatchState) -> SpoilerMove;
    /// After Duplicator kept `kept` (indices into `parts`), the part to
    /// continue with; must be a member of `kept`.
    fn pick_part(&mut self, state: &MatchState, parts: &[Vec<usize>], kept: &[usize]) -> usize;
}

pub trait DuplicatorAgent {
    /// Nonempty list of part indices to keep from a proposed split.
    fn keep_parts(&mut self, state: &MatchState, side: Side, parts: &[Vec<usize>]) -> Vec<usize>;
    /// Copies per answering board for a pebble move, outer index aligned
    /// with the answering side's canonical order; an empty inner list
    /// discards that board.
    fn respond(
        &mut self,
        state: &MatchState,
        side: Side,
        pebble: usize,
        targets: &[Elem],
    ) -> Vec<Vec<Elem>>;
    /// Board indices to give up voluntarily at the end of the round, per
    /// side, against the canonical order in `state`. Discarding never
    /// improves the game value, but strategies that track a single board per
    /// side use it to shed boards they no longer argue about. A side may not
    /// be emptied this way.
    fn discard(&mut self, _state: &MatchState) -> (Vec<usize>, Vec<usize>) {
        (Vec::new(), Vec::new())
    }
}

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("boards carry {got} pebble slots, the game uses {k}")]
    SlotCount { got: usize, k: usize },
    #[error("the game needs at least one pebble")]
    NoPebbles,
    #[error("both sides must start nonempty")]
    EmptySide,
}

/// Final verdict of a match.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchResult {
    SpoilerWins { rounds: usize, score: u64 },
    DuplicatorSurvives { rounds: usize, score: u64 },
    Violation { actor: &'static str, reason: String, score: u64 },
}

/// One logged sub-move. A discard entry names the boards Duplicator gave up
/// on the entry's side after the round's deletion step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Split { parts: Vec<Vec<usize>>, kept: Vec<usize>, picked: usize },
    Pebble { pebble: usize, targets: Vec<Elem>, answers: Vec<Vec<Elem>> },
    Discard { boards: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    /// Round the sub-move belongs to, counting from one.
    pub round: usize,
    pub side: Side,
    pub action: Action,
    /// Point weight after the sub-move.
    pub weight: u64,
    /// Position digest after the sub-move (and after the deletion step, for
    /// pebble moves).
    pub digest: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub mode: LogicMode,
    pub k: usize,
    pub start_digest: u64,
    pub entries: Vec<TranscriptEntry>,
    pub result: MatchResult,
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("entry {index}: digest mismatch")]
    Digest { index: usize },
    #[error("entry {index}: point weight mismatch")]
    Points { index: usize },
    #[error("entry {index}: illegal move: {reason}")]
    Illegal { index: usize, reason: String },
    #[error("recorded result does not match the replayed one")]
    Result,
}

/// Plays one match to a verdict. Rules enforced here: split sides must hold
/// at least two boards, may not repeat the side just split, and must be
/// proper partitions; pebble moves end the round, run the deletion step, and
/// bank the current weight; the positive fragment pebbles the left side
/// only. The match ends when a deletion step kills the position, when
/// `max_rounds` rounds complete, or when an agent cheats.
pub fn run_match(
    left: &BoardSet,
    right: &BoardSet,
    k: usize,
    mode: LogicMode,
    max_rounds: usize,
    spoiler: &mut dyn SpoilerAgent,
    duplicator: &mut dyn DuplicatorAgent,
) -> Result<Transcript, MatchError> {
    if k == 0 {
        return Err(MatchError::NoPebbles);
    }
    if left.is_empty() || right.is_empty() {
        return Err(MatchError::EmptySide);
    }
    for b in left.iter().chain(right.iter()) {
        if b.assignment().num_pebbles() != k {
            return Err(MatchError::SlotCount { got: b.assignment().num_pebbles(), k });
        }
    }

    let (l, r) = prune_round(mode, left, right);
    let mut state = MatchState {
        left: l,
        right: r,
        mode,
        k,
        round: 0,
        weight: 1,
        score: 0,
        last_split: None,
    };
    let start_digest = digest(&state);
    let mut entries = Vec::new();

    let result = 'game: loop {
        if position_dead(mode, &state.left, &state.right) {
            break MatchResult::SpoilerWins { rounds: state.round, score: state.score };
        }
        if state.round == max_rounds {
            break MatchResult::DuplicatorSurvives { rounds: state.round, score: state.score };
        }
        match spoiler.propose(&state) {
            SpoilerMove::Split { side, parts } => {
                if state.last_split == Some(side) {
                    break violation("spoiler", "split repeats the side just split", &state);
                }
                let mover = side_set(&state, side);
                if let Err(reason) = check_partition(&parts, mover.len()) {
                    break violation("spoiler", &reason, &state);
                }
                let kept_raw = duplicator.keep_parts(&state, side, &parts);
                let mut kept = kept_raw.clone();
                kept.sort_unstable();
                kept.dedup();
                if kept.is_empty() || kept.len() != kept_raw.len() || *kept.last().unwrap() >= parts.len()
                {
                    break violation("duplicator", "kept set must be distinct part indices", &state);
                }
                let picked = spoiler.pick_part(&state, &parts, &kept);
                if !kept.contains(&picked) {
                    break violation("spoiler", "picked part was not kept", &state);
                }
                let boards: Vec<Board> =
                    parts[picked].iter().map(|&i| mover.boards()[i].clone()).collect();
                let piece = BoardSet::new(boards);
                match side {
                    Side::Left => state.left = piece,
                    Side::Right => state.right = piece,
                }
                state.weight = state.weight.saturating_mul(kept.len() as u64);
                state.last_split = Some(side);
                entries.push(TranscriptEntry {
                    round: state.round + 1,
                    side,
                    action: Action::Split { parts, kept, picked },
                    weight: state.weight,
                    digest: digest(&state),
                });
            }
            SpoilerMove::Pebble { side, pebble, targets } => {
                if mode == LogicMode::Positive && side == Side::Right {
                    break violation("spoiler", "the positive game pebbles the left side only", &state);
                }
                if pebble >= k {
                    break violation("spoiler", "pebble index out of range", &state);
                }
                let mover = side_set(&state, side);
                let answerer = side_set(&state, side.other());
                if targets.len() != mover.len()
                    || mover
                        .iter()
                        .zip(&targets)
                        .any(|(b, &t)| (t as usize) >= b.structure().domain_size())
                {
                    break violation("spoiler", "targets must name one element per board", &state);
                }
                let answers = duplicator.respond(&state, side, pebble, &targets);
                if answers.len() != answerer.len()
                    || answerer.iter().zip(&answers).any(|(b, copies)| {
                        copies.iter().any(|&e| (e as usize) >= b.structure().domain_size())
                    })
                {
                    break violation("duplicator", "answers must list elements per board", &state);
                }
                let moved: BoardSet = mover
                    .iter()
                    .zip(&targets)
                    .map(|(b, &t)| b.move_pebble(pebble, t))
                    .collect();
                let copies: BoardSet = answerer
                    .iter()
                    .zip(&answers)
                    .flat_map(|(b, copies)| copies.iter().map(|&e| b.move_pebble(pebble, e)))
                    .collect();
                let (l2, r2) = match side {
                    Side::Left => (moved, copies),
                    Side::Right => (copies, moved),
                };
                let (pl, pr) = prune_round(mode, &l2, &r2);
                state.left = pl;
                state.right = pr;
                state.round += 1;
                state.score = state.score.saturating_add(state.weight);
                state.last_split = None;
                entries.push(TranscriptEntry {
                    round: state.round,
                    side,
                    action: Action::Pebble { pebble, targets, answers },
                    weight: state.weight,
                    digest: digest(&state),
                });
                if position_dead(mode, &state.left, &state.right) {
                    break 'game MatchResult::SpoilerWins {
                        rounds: state.round,
                        score: state.score,
                    };
                }
                let (dl, dr) = duplicator.discard(&state);
                for (dside, drop) in [(Side::Left, dl), (Side::Right, dr)] {
                    if drop.is_empty() {
                        continue;
                    }
                    let set = side_set(&state, dside);
                    match remove_boards(&set, &drop) {
                        Ok(rest) => match dside {
                            Side::Left => state.left = rest,
                            Side::Right => state.right = rest,
                        },
                        Err(reason) => break 'game violation("duplicator", &reason, &state),
                    }
                    entries.push(TranscriptEntry {
                        round: state.round,
                        side: dside,
                        action: Action::Discard { boards: drop },
                        weight: state.weight,
                        digest: digest(&state),
                    });
                }
            }
        }
    };
    Ok(Transcript { mode, k, start_digest, entries, result })
}

fn violation(actor: &'static str, reason: &str, state: &MatchState) -> MatchResult {
    MatchResult::Violation { actor, reason: reason.to_string(), score: state.score }
}

fn side_set(state: &MatchState, side: Side) -> BoardSet {
    match side {
        Side::Left => state.left.clone(),
        Side::Right => state.right.clone(),
    }
}

/// Drops the named boards, rejecting out-of-range or duplicate indices and
/// discards that would empty the side.
fn remove_boards(set: &BoardSet, drop: &[usize]) -> Result<BoardSet, String> {
    let mut sorted = drop.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != drop.len() || sorted.iter().any(|&i| i >= set.len()) {
        return Err("discard indices must be distinct boards of the side".to_string());
    }
    if sorted.len() == set.len() {
        return Err("a discard may not empty a side".to_string());
    }
    let boards: Vec<Board> = set
        .iter()
        .enumerate()
        .filter(|(i, _)| sorted.binary_search(i).is_err())
        .map(|(_, b)| b.clone())
        .collect();
    Ok(BoardSet::new(boards))
}

fn check_partition(parts: &[Vec<usize>], m: usize) -> Result<(), String> {
    if m < 2 {
        return Err("cannot split a side with fewer than two boards".to_string());
    }
    if parts.len() < 2 {
        return Err("a split needs at least two parts".to_string());
    }
    let mut seen = vec![false; m];
    for part in parts {
        if part.is_empty() {
            return Err("split parts must be nonempty".to_string());
        }
        for &i in part {
            if i >= m || seen[i] {
                return Err("split parts must partition the side".to_string());
            }
            seen[i] = true;
        }
    }
    if seen.iter().all(|&s| s) {
        Ok(())
    } else {
        Err("split parts must cover the side".to_string())
    }
}

fn fnv(h: &mut u64, bytes: &[u8]) {
    for &b in bytes {
        *h ^= b as u64;
        *h = h.wrapping_mul(0x100000001b3);
    }
}

fn digest(state: &MatchState) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    fnv(&mut h, &state.left.canonical_key());
    fnv(&mut h, &[0xff]);
    fnv(&mut h, &state.right.canonical_key());
    fnv(&mut h, &[0xfe]);
    fnv(&mut h, &(state.round as u64).to_le_bytes());
    fnv(&mut h, &state.weight.to_le_bytes());
    fnv(&mut h, &state.score.to_le_bytes());
    h
}

/// Keeps everything: every part of every split and one copy per element on
/// every answering board.
#[derive(Debug, Default)]
pub struct ObviousDuplicator;

impl DuplicatorAgent for ObviousDuplicator {
    fn keep_parts(&mut self, _state: &MatchState, _side: Side, parts: &[Vec<usize>]) -> Vec<usize> {
        (0..parts.len()).collect()
    }

    fn respond(
        &mut self,
        state: &MatchState,
        side: Side,
        _pebble: usize,
        _targets: &[Elem],
    ) -> Vec<Vec<Elem>> {
        let answerer = side_set(state, side.other());
        answerer
            .iter()
            .map(|b| (0..b.structure().domain_size() as Elem).collect())
            .collect()
    }
}

/// Seeded Spoiler making uniformly random legal moves, for stress testing
/// Duplicator strategies. Occasionally splits a splittable side; otherwise
/// moves a random pebble to random per-board targets.
pub struct RandomSpoiler {
    rng: rand_chacha::ChaCha8Rng,
}

impl RandomSpoiler {
    pub fn new(seed: u64) -> RandomSpoiler {
        use rand::SeedableRng;
        RandomSpoiler { rng: rand_chacha::ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl SpoilerAgent for RandomSpoiler {
    fn propose(&mut self, state: &MatchState) -> SpoilerMove {
        use rand::Rng;
        let splittable: Vec<Side> = [Side::Left, Side::Right]
            .into_iter()
            .filter(|&s| side_set(state, s).len() >= 2 && state.last_split != Some(s))
            .collect();
        if !splittable.is_empty() && self.rng.gen_bool(0.4) {
            let side = splittable[self.rng.gen_range(0..splittable.len())];
            let m = side_set(state, side).len();
            // Random restricted-growth labels, forced onto at least two parts.
            let mut labels = vec![0usize; m];
            let mut max = 0;
            for lab in labels.iter_mut().skip(1) {
                *lab = self.rng.gen_range(0..=max + 1);
                max = max.max(*lab);
            }
            if max == 0 {
                labels[m - 1] = 1;
                max = 1;
            }
            let mut parts = vec![Vec::new(); max + 1];
            for (i, &lab) in labels.iter().enumerate() {
                parts[lab].push(i);
            }
            return SpoilerMove::Split { side, parts };
        }
        let side = if state.mode == LogicMode::Positive || self.rng.gen_bool(0.5) {
            Side::Left
        } else {
            Side::Right
        };
        let mover = side_set(state, side);
        let pebble = self.rng.gen_range(0..state.k);
        let targets = mover
            .iter()
            .map(|b| self.rng.gen_range(0..b.structure().domain_size()) as Elem)
            .collect();
        SpoilerMove::Pebble { side, pebble, targets }
    }

    fn pick_part(&mut self, _state: &MatchState, _parts: &[Vec<usize>], kept: &[usize]) -> usize {
        use rand::Rng;
        kept[self.rng.gen_range(0..kept.len())]
    }
}

/// Plays the recorded strategy of the quantifier-count solver: pebble moves
/// transfer directly, and chains of recorded same-side splits flatten into
/// one partition so the no-repeat rule is never tripped. Boards the solver's
/// deletion step already discarded ride along in the first part and fall off
/// at the next round boundary.
pub struct SolverSpoiler {
    solver: QvtSolver,
    /// Values of the parts proposed last, for `pick_part`.
    planned: Vec<u64>,
}

impl SolverSpoiler {
    pub fn new(k: usize, mode: LogicMode, cfg: QvtConfig) -> SolverSpoiler {
        let solver = QvtSolver::new(BoardSet::empty(), BoardSet::empty(), k, mode, cfg)
            .expect("empty sets always validate");
        SolverSpoiler { solver, planned: Vec::new() }
    }

    /// Recorded split chains on `side` starting at the pruned position
    /// `(l, r)`, flattened to a list of `(boards, value)` parts.
    fn flatten(
        &mut self,
        l: &BoardSet,
        r: &BoardSet,
        side: Side,
        labels: &[u8],
    ) -> Vec<(Vec<Board>, u64)> {
        let mover = match side {
            Side::Left => l,
            Side::Right => r,
        };
        let mut out = Vec::new();
        let nparts = 1 + labels.iter().copied().max().unwrap_or(0);
        for part in 0..nparts {
            let piece: Vec<Board> = mover
                .iter()
                .zip(labels)
                .filter(|(_, &lab)| lab == part)
                .map(|(b, _)| b.clone())
                .collect();
            let piece_set = BoardSet::new(piece.clone());
            let (cl, cr) = match side {
                Side::Left => (piece_set, r.clone()),
                Side::Right => (l.clone(), piece_set),
            };
            let (pl, pr) = prune_round(self.solver.mode(), &cl, &cr);
            if position_dead(self.solver.mode(), &pl, &pr) {
                out.push((piece, 0));
                continue;
            }
            match self.solver.best_move(&pl, &pr) {
                Ok(Some((_, MoveRec::Split { side: s2, labels: labels2 }))) if s2 == side => {
                    let sub = self.flatten(&pl, &pr, side, &labels2);
                    let pruned_mover = match side {
                        Side::Left => &pl,
                        Side::Right => &pr,
                    };
                    let kept: Vec<&Board> = pruned_mover.iter().collect();
                    let mut first = true;
                    for (mut boards, v2) in sub {
                        if first {
                            // Boards the deletion step dropped rejoin the
                            // first sub-part.
                            for b in &piece {
                                if !kept.iter().any(|kb| *kb == b) {
                                    boards.push(b.clone());
                                }
                            }
                            first = false;
                        }
                        out.push((boards, v2));
                    }
                }
                Ok(Some((v, _))) => out.push((piece, v as u64)),
                Ok(None) | Err(_) => out.push((piece, u64::MAX)),
            }
        }
        out
    }
}

impl SpoilerAgent for SolverSpoiler {
    fn propose(&mut self, state: &MatchState) -> SpoilerMove {
        self.planned.clear();
        let (pl, pr) = prune_round(state.mode, &state.left, &state.right);
        let fallback = SpoilerMove::Pebble {
            side: Side::Left,
            pebble: 0,
            targets: vec![0; state.left.len()],
        };
        let rec = match self.solver.best_move(&pl, &pr) {
            Ok(Some((_, mv))) => mv,
            _ => return fallback,
        };
        match rec {
            MoveRec::Pebble { side, pebble, targets } => {
                let pruned_mover = match side {
                    Side::Left => &pl,
                    Side::Right => &pr,
                };
                let by_key: HashMap<Vec<u8>, Elem> = pruned_mover
                    .iter()
                    .zip(&targets)
                    .map(|(b, &t)| (b.canonical_key(), t))
                    .collect();
                let mover = side_set(state, side);
                let full_targets: Vec<Elem> = mover
                    .iter()
                    .map(|b| by_key.get(&b.canonical_key()).copied().unwrap_or(0))
                    .collect();
                SpoilerMove::Pebble { side, pebble, targets: full_targets }
            }
            MoveRec::Split { side, labels } => {
                if state.last_split == Some(side) {
                    // The recorded move would repeat the side; close the
                    // round instead and pick the move up next round.
                    return fallback;
                }
                let flat = self.flatten(&pl, &pr, side, &labels);
                let mut part_of: HashMap<Vec<u8>, usize> = HashMap::new();
                for (idx, (boards, _)) in flat.iter().enumerate() {
                    for b in boards {
                        part_of.insert(b.canonical_key(), idx);
                    }
                }
                let mover = side_set(state, side);
                let mut parts: Vec<Vec<usize>> = vec![Vec::new(); flat.len()];
                for (i, b) in mover.iter().enumerate() {
                    let idx = part_of.get(&b.canonical_key()).copied().unwrap_or(0);
                    parts[idx].push(i);
                }
                if parts.iter().any(|p| p.is_empty()) {
                    return fallback;
                }
                self.planned = flat.iter().map(|&(_, v)| v).collect();
                SpoilerMove::Split { side, parts }
            }
        }
    }

    fn pick_part(&mut self, _state: &MatchState, _parts: &[Vec<usize>], kept: &[usize]) -> usize {
        kept.iter()
            .copied()
            .min_by_key(|&i| self.planned.get(i).copied().unwrap_or(u64::MAX))
            .expect("referee guarantees a nonempty kept set")
    }
}

impl Transcript {
    /// Plain-text rendering, one line per sub-move.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "points-game | mode {} | k {}", mode_str(self.mode), self.k);
        let _ = writeln!(s, "start | digest {:016x}", self.start_digest);
        for e in &self.entries {
            let move_text = match &e.action {
                Action::Split { parts, kept, picked } => format!(
                    "split {} keep {} pick {}",
                    render_groups(parts),
                    render_braced(kept),
                    picked
                ),
                Action::Pebble { pebble, targets, answers } => format!(
                    "pebble {} -> {} answers {}",
                    pebble,
                    render_group(targets),
                    render_elem_groups(answers)
                ),
                Action::Discard { boards } => format!("discard {}", render_group(boards)),
            };
            let _ = writeln!(
                s,
                "round {} | {} | {} | points {} | digest {:016x}",
                e.round, e.side, move_text, e.weight, e.digest
            );
        }
        let line = match &self.result {
            MatchResult::SpoilerWins { rounds, score } => {
                format!("result | spoiler wins | rounds {rounds} | score {score}")
            }
            MatchResult::DuplicatorSurvives { rounds, score } => {
                format!("result | duplicator survives | rounds {rounds} | score {score}")
            }
            MatchResult::Violation { actor, reason, score } => {
                format!("result | violation by {actor}: {reason} | score {score}")
            }
        };
        s.push_str(&line);
        s.push('\n');
        s
    }

    /// Parses the `to_text` format back.
    pub fn from_text(text: &str) -> Result<Transcript, TranscriptError> {
        let mut lines = text.lines().enumerate();
        let (ln, header) = lines
            .next()
            .ok_or_else(|| parse_err(0, "empty transcript"))?;
        let hp: Vec<&str> = header.split(" | ").collect();
        if hp.len() != 3 || hp[0] != "points-game" {
            return Err(parse_err(ln, "expected the points-game header"));
        }
        let mode = parse_mode(ln, hp[1])?;
        let k = parse_tail(ln, hp[2], "k ")?;
        let (ln, start) = lines.next().ok_or_else(|| parse_err(1, "missing start line"))?;
        let sp: Vec<&str> = start.split(" | ").collect();
        if sp.len() != 2 || sp[0] != "start" {
            return Err(parse_err(ln, "expected the start line"));
        }
        let start_digest = parse_hex(ln, sp[1])?;

        let mut entries = Vec::new();
        let mut result = None;
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(" | ").collect();
            if cols[0] == "result" {
                result = Some(parse_result(ln, &cols)?);
                continue;
            }
            if cols.len() != 5 {
                return Err(parse_err(ln, "expected five columns"));
            }
            let round = parse_tail(ln, cols[0], "round ")?;
            let side = match cols[1] {
                "left" => Side::Left,
                "right" => Side::Right,
                _ => return Err(parse_err(ln, "unknown side")),
            };
            let action = parse_action(ln, cols[2])?;
            let weight = parse_tail(ln, cols[3], "points ")?;
            let digest = parse_hex(ln, cols[4])?;
            entries.push(TranscriptEntry { round, side, action, weight: weight as u64, digest });
        }
        let result = result.ok_or_else(|| parse_err(0, "missing result line"))?;
        Ok(Transcript { mode, k, start_digest, entries, result })
    }
}

/// Replays a transcript against the starting sets, recomputing every weight
/// and digest and the final verdict.
pub fn replay(
    left: &BoardSet,
    right: &BoardSet,
    t: &Transcript,
) -> Result<(), TranscriptError> {
    replay_states(left, right, t).map(|_| ())
}

/// Replays like [`replay`] but also returns the pruned starting state and the
/// state after each logged sub-move, for invariant monitors that inspect
/// intermediate positions.
pub fn replay_states(
    left: &BoardSet,
    right: &BoardSet,
    t: &Transcript,
) -> Result<(MatchState, Vec<MatchState>), TranscriptError> {
    let (l, r) = prune_round(t.mode, left, right);
    let mut state = MatchState {
        left: l,
        right: r,
        mode: t.mode,
        k: t.k,
        round: 0,
        weight: 1,
        score: 0,
        last_split: None,
    };
    if digest(&state) != t.start_digest {
        return Err(TranscriptError::Digest { index: 0 });
    }
    let start = state.clone();
    let mut states = Vec::with_capacity(t.entries.len());
    for (index, e) in t.entries.iter().enumerate() {
        match &e.action {
            Action::Split { parts, kept, picked } => {
                if state.last_split == Some(e.side) {
                    return Err(TranscriptError::Illegal {
                        index,
                        reason: "split repeats the side".to_string(),
                    });
                }
                let mover = side_set(&state, e.side);
                check_partition(parts, mover.len())
                    .map_err(|reason| TranscriptError::Illegal { index, reason })?;
                if kept.is_empty() || !kept.contains(picked) {
                    return Err(TranscriptError::Illegal {
                        index,
                        reason: "picked part must be kept".to_string(),
                    });
                }
                let boards: Vec<Board> =
                    parts[*picked].iter().map(|&i| mover.boards()[i].clone()).collect();
                match e.side {
                    Side::Left => state.left = BoardSet::new(boards),
                    Side::Right => state.right = BoardSet::new(boards),
                }
                state.weight = state.weight.saturating_mul(kept.len() as u64);
                state.last_split = Some(e.side);
            }
            Action::Pebble { pebble, targets, answers } => {
                let mover = side_set(&state, e.side);
                let answerer = side_set(&state, e.side.other());
                if targets.len() != mover.len() || answers.len() != answerer.len() {
                    return Err(TranscriptError::Illegal {
                        index,
                        reason: "targets or answers do not match the sides".to_string(),
                    });
                }
                let moved: BoardSet = mover
                    .iter()
                    .zip(targets)
                    .map(|(b, &t)| b.move_pebble(*pebble, t))
                    .collect();
                let copies: BoardSet = answerer
                    .iter()
                    .zip(answers)
                    .flat_map(|(b, copies)| copies.iter().map(|&el| b.move_pebble(*pebble, el)))
                    .collect();
                let (l2, r2) = match e.side {
                    Side::Left => (moved, copies),
                    Side::Right => (copies, moved),
                };
                let (pl, pr) = prune_round(t.mode, &l2, &r2);
                state.left = pl;
                state.right = pr;
                state.round += 1;
                state.score = state.score.saturating_add(state.weight);
                state.last_split = None;
            }
            Action::Discard { boards } => {
                let set = side_set(&state, e.side);
                let rest = remove_boards(&set, boards)
                    .map_err(|reason| TranscriptError::Illegal { index, reason })?;
                match e.side {
                    Side::Left => state.left = rest,
                    Side::Right => state.right = rest,
                }
            }
        }
        if e.weight != state.weight {
            return Err(TranscriptError::Points { index });
        }
        if e.digest != digest(&state) {
            return Err(TranscriptError::Digest { index });
        }
        states.push(state.clone());
    }
    let replayed = if position_dead(t.mode, &state.left, &state.right) {
        MatchResult::SpoilerWins { rounds: state.round, score: state.score }
    } else {
        MatchResult::DuplicatorSurvives { rounds: state.round, score: state.score }
    };
    let matches = match (&t.result, &replayed) {
        (MatchResult::Violation { .. }, _) => true,
        (a, b) => a == b,
    };
    if matches {
        Ok((start, states))
    } else {
        Err(TranscriptError::Result)
    }
}

fn mode_str(mode: LogicMode) -> &'static str {
    match mode {
        LogicMode::Full => "full",
        LogicMode::Positive => "positive",
    }
}

fn render_group<T: std::fmt::Display>(items: &[T]) -> String {
    let inner: Vec<String> = items.iter().map(|x| x.to_string()).collect();
    format!("[{}]", inner.join(" "))
}

fn render_groups(groups: &[Vec<usize>]) -> String {
    groups.iter().map(|g| render_group(g)).collect()
}

fn render_elem_groups(groups: &[Vec<Elem>]) -> String {
    groups.iter().map(|g| render_group(g)).collect()
}

fn render_braced(items: &[usize]) -> String {
    let inner: Vec<String> = items.iter().map(|x| x.to_string()).collect();
    format!("{{{}}}", inner.join(" "))
}

fn parse_err(line: usize, msg: &str) -> TranscriptError {
    TranscriptError::Parse { line: line + 1, msg: msg.to_string() }
}

fn parse_mode(ln: usize, col: &str) -> Result<LogicMode, TranscriptError> {
    match col.strip_prefix("mode ") {
        Some("full") => Ok(LogicMode::Full),
        Some("positive") => Ok(LogicMode::Positive),
        _ => Err(parse_err(ln, "unknown mode")),
    }
}

fn parse_tail(ln: usize, col: &str, prefix: &str) -> Result<usize, TranscriptError> {
    col.strip_prefix(prefix)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(ln, "bad numeric column"))
}

fn parse_hex(ln: usize, col: &str) -> Result<u64, TranscriptError> {
    col.strip_prefix("digest ")
        .and_then(|t| u64::from_str_radix(t, 16).ok())
        .ok_or_else(|| parse_err(ln, "bad digest column"))
}

/// Parses concatenated bracket groups like `[0 1][2][]`.
fn parse_bracket_groups(ln: usize, s: &str) -> Result<(Vec<Vec<u32>>, &str), TranscriptError> {
    let mut groups = Vec::new();
    let mut rest = s;
    while let Some(tail) = rest.strip_prefix('[') {
        let close = tail.find(']').ok_or_else(|| parse_err(ln, "unclosed bracket"))?;
        let body = &tail[..close];
        let mut group = Vec::new();
        for tok in body.split_whitespace() {
            group.push(tok.parse().map_err(|_| parse_err(ln, "bad number in group"))?);
        }
        groups.push(group);
        rest = &tail[close + 1..];
    }
    Ok((groups, rest))
}

fn parse_action(ln: usize, col: &str) -> Result<Action, TranscriptError> {
    if let Some(rest) = col.strip_prefix("split ") {
        let (groups, rest) = parse_bracket_groups(ln, rest)?;
        let rest = rest.strip_prefix(" keep {").ok_or_else(|| parse_err(ln, "missing keep set"))?;
        let close = rest.find('}').ok_or_else(|| parse_err(ln, "unclosed keep set"))?;
        let kept: Vec<usize> = rest[..close]
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(ln, "bad keep index")))
            .collect::<Result<_, _>>()?;
        let picked = rest[close + 1..]
            .strip_prefix(" pick ")
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(ln, "missing picked part"))?;
        let parts = groups.into_iter().map(|g| g.into_iter().map(|x| x as usize).collect()).collect();
        Ok(Action::Split { parts, kept, picked })
    } else if let Some(rest) = col.strip_prefix("pebble ") {
        let arrow = rest.find(" -> ").ok_or_else(|| parse_err(ln, "missing pebble arrow"))?;
        let pebble = rest[..arrow].parse().map_err(|_| parse_err(ln, "bad pebble index"))?;
        let rest = &rest[arrow + 4..];
        let (mut tgroups, rest) = parse_bracket_groups(ln, rest)?;
        if tgroups.len() != 1 {
            return Err(parse_err(ln, "expected one target group"));
        }
        let targets = tgroups.pop().unwrap();
        let rest = rest.strip_prefix(" answers ").ok_or_else(|| parse_err(ln, "missing answers"))?;
        let (answers, rest) = parse_bracket_groups(ln, rest)?;
        if !rest.is_empty() {
            return Err(parse_err(ln, "trailing text after answers"));
        }
        Ok(Action::Pebble { pebble, targets, answers })
    } else if let Some(rest) = col.strip_prefix("discard ") {
        let (mut groups, rest) = parse_bracket_groups(ln, rest)?;
        if groups.len() != 1 || !rest.is_empty() {
            return Err(parse_err(ln, "expected one discard group"));
        }
        let boards = groups.pop().unwrap().into_iter().map(|x| x as usize).collect();
        Ok(Action::Discard { boards })
    } else {
        Err(parse_err(ln, "unknown move"))
    }
}

fn parse_result(ln: usize, cols: &[&str]) -> Result<MatchResult, TranscriptError> {
    if cols.len() == 4 && cols[1] == "spoiler wins" {
        return Ok(MatchResult::SpoilerWins {
            rounds: parse_tail(ln, cols[2], "rounds ")?,
            score: parse_tail(ln, cols[3], "score ")? as u64,
        });
    }
    if cols.len() == 4 && cols[1] == "duplicator survives" {
        return Ok(MatchResult::DuplicatorSurvives {
            rounds: parse_tail(ln, cols[2], "rounds ")?,
            score: parse_tail(ln, cols[3], "score ")? as u64,
        });
    }
    if cols.len() == 3 {
        let rest = cols[1]
            .strip_prefix("violation by ")
            .ok_or_else(|| parse_err(ln, "unknown result"))?;
        let (actor, reason) =
            rest.split_once(": ").ok_or_else(|| parse_err(ln, "bad violation text"))?;
        let actor = match actor {
            "spoiler" => "spoiler",
            "duplicator" => "duplicator",
            _ => return Err(parse_err(ln, "unknown violator")),
        };
        return Ok(MatchResult::Violation {
            actor,
            reason: reason.to_string(),
            score: parse_tail(ln, cols[2], "score ")? as u64,
        });
    }
    Err(parse_err(ln, "unknown result line"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::linear_order;
    use std::sync::Arc;

    fn order_sets(n1: usize, n2: usize, k: usize) -> (BoardSet, BoardSet) {
        let a = Arc::new(linear_order(n1, "A"));
        let b = Arc::new(linear_order(n2, "B"));
        (
            BoardSet::singleton(Board::empty(a, k)),
            BoardSet::singleton(Board::empty(b, k)),
        )
    }

    #[test]
    fn solver_spoiler_beats_the_copying_duplicator() {
        let (l, r) = order_sets(3, 2, 2);
        let mut sp = SolverSpoiler::new(2, LogicMode::Full, QvtConfig::default());
        let mut dup = ObviousDuplicator;
        let t = run_match(&l, &r, 2, LogicMode::Full, 6, &mut sp, &mut dup).unwrap();
        match t.result {
            MatchResult::SpoilerWins { rounds, score } => {
                assert!(rounds <= 3, "rounds {rounds}");
                assert!(score <= 3, "score {score}");
            }
            other => panic!("expected a spoiler win, got {other:?}"),
        }
    }

    #[test]
    fn identical_structures_survive_to_the_horizon() {
        let (l, r) = order_sets(2, 2, 2);
        let mut sp = SolverSpoiler::new(2, LogicMode::Full, QvtConfig::default());
        let mut dup = ObviousDuplicator;
        let t = run_match(&l, &r, 2, LogicMode::Full, 3, &mut sp, &mut dup).unwrap();
        match t.result {
            MatchResult::DuplicatorSurvives { rounds, score } => {
                assert_eq!(rounds, 3);
                assert_eq!(score, 3);
            }
            other => panic!("expected survival, got {other:?}"),
        }
    }

    #[test]
    fn transcripts_roundtrip_and_replay() {
        let (l, r) = order_sets(3, 2, 2);
        let mut sp = SolverSpoiler::new(2, LogicMode::Full, QvtConfig::default());
        let mut dup = ObviousDuplicator;
        let t = run_match(&l, &r, 2, LogicMode::Full, 6, &mut sp, &mut dup).unwrap();
        let text = t.to_text();
        let parsed = Transcript::from_text(&text).unwrap();
        assert_eq!(parsed, t);
        replay(&l, &r, &parsed).unwrap();
    }

    #[test]
    fn illegal_splits_end_in_a_violation() {
        struct BadSpoiler;
        impl SpoilerAgent for BadSpoiler {
            fn propose(&mut self, _state: &MatchState) -> SpoilerMove {
                SpoilerMove::Split { side: Side::Left, parts: vec![vec![0], vec![0]] }
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
        let (l, r) = order_sets(2, 2, 2);
        let mut sp = BadSpoiler;
        let mut dup = ObviousDuplicator;
        let t = run_match(&l, &r, 2, LogicMode::Full, 3, &mut sp, &mut dup).unwrap();
        match t.result {
            MatchResult::Violation { actor, reason, .. } => {
                assert_eq!(actor, "spoiler");
                assert!(reason.contains("split"), "reason {reason}");
            }
            other => panic!("expected a violation, got {other:?}"),
        }
    }
}
