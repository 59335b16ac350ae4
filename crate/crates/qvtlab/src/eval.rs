//! Formula evaluation over finite structures.
//!
//! The workhorse is a bottom-up evaluator that materializes, for every
//! subformula, the set of satisfying assignments to its free variables as a bit
//! table of size `n^m` (domain size `n`, `m` free variables). Boolean
//! connectives combine tables cell-wise over the variable union; quantifiers
//! project one variable out. This stays fast on structures with hundreds of
//! elements as long as formulas keep few free variables per subformula, which
//! every formula built in this crate does.
//!
//! [`evaluate_naive`] is a direct recursive evaluator used as an independent
//! cross-check in tests; it enumerates assignments and is exponentially slower.

use thiserror::Error;

use crate::formula::{Formula, Var};
use crate::structure::{Elem, Structure};

/// Errors from evaluating a formula on a structure.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("relation {0} is not in the structure's signature")]
    UnknownRelation(String),
    #[error("relation {0} has arity {1}, atom has {2} arguments")]
    ArityMismatch(String, usize, usize),
    #[error("formula is not a sentence; free variables {0:?} remain")]
    NotASentence(Vec<Var>),
    #[error("free variable x{} is not placed in the given assignment", .0 + 1)]
    UnplacedFreeVar(Var),
    #[error("assignment table over {0} variables on domain {1} is too large")]
    TableTooLarge(usize, usize),
    #[error("cannot evaluate on an empty domain")]
    EmptyDomain,
}

/// Satisfying-assignment table of one subformula: one bit per assignment of the
/// sorted free variables `vars`, indexed with `vars[0]` least significant.
#[derive(Debug, Clone)]
pub struct Table {
    vars: Vec<Var>,
    n: usize,
    bits: Vec<u64>,
    len: usize,
}

const MAX_TABLE: usize = 1 << 32;

impl Table {
    fn new(vars: Vec<Var>, n: usize) -> Result<Table, EvalError> {
        let mut len: usize = 1;
        for _ in 0..vars.len() {
            len = len
                .checked_mul(n)
                .filter(|&l| l <= MAX_TABLE)
                .ok_or(EvalError::TableTooLarge(vars.len(), n))?;
        }
        Ok(Table {
            vars,
            n,
            bits: vec![0; len.div_ceil(64)],
            len,
        })
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn get(&self, idx: usize) -> bool {
        self.bits[idx / 64] >> (idx % 64) & 1 == 1
    }

    fn set(&mut self, idx: usize) {
        self.bits[idx / 64] |= 1 << (idx % 64);
    }

    fn fill_ones(&mut self) {
        for w in &mut self.bits {
            *w = !0;
        }
        self.mask_tail();
    }

    fn complement(&mut self) {
        for w in &mut self.bits {
            *w = !*w;
        }
        self.mask_tail();
    }

    fn mask_tail(&mut self) {
        let tail = self.len % 64;
        if tail != 0 {
            if let Some(last) = self.bits.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
    }

    /// Bit for one concrete assignment of the free variables.
    pub fn lookup(&self, assignment: &[Option<Elem>]) -> Result<bool, EvalError> {
        let mut idx = 0usize;
        let mut mult = 1usize;
        for &v in &self.vars {
            let e = assignment
                .get(v)
                .copied()
                .flatten()
                .ok_or(EvalError::UnplacedFreeVar(v))?;
            idx += e as usize * mult;
            mult *= self.n;
        }
        Ok(self.get(idx))
    }
}

/// Computes the satisfying-assignment table of `f` on `s`.
pub fn eval_table(s: &Structure, f: &Formula) -> Result<Table, EvalError> {
    let n = s.domain_size();
    if n == 0 {
        return Err(EvalError::EmptyDomain);
    }
    eval_rec(s, f)
}

fn eval_rec(s: &Structure, f: &Formula) -> Result<Table, EvalError> {
    let n = s.domain_size();
    match f {
        Formula::Atom(name, args) => {
            let ri = s
                .signature()
                .index_of(name)
                .ok_or_else(|| EvalError::UnknownRelation(name.clone()))?;
            let arity = s.signature().arity(ri);
            if arity != args.len() {
                return Err(EvalError::ArityMismatch(name.clone(), arity, args.len()));
            }
            let mut vars: Vec<Var> = args.clone();
            vars.sort_unstable();
            vars.dedup();
            let mut t = Table::new(vars, n)?;
            let pos_of = |v: Var| t.vars.iter().position(|&u| u == v).unwrap();
            let arg_pos: Vec<usize> = args.iter().map(|&a| pos_of(a)).collect();
            let mut mults = vec![1usize; t.vars.len()];
            for i in 1..t.vars.len() {
                mults[i] = mults[i - 1] * n;
            }
            'tuples: for tuple in s.rel_tuples(ri) {
                // Repeated variables must agree across their positions.
                let mut vals: Vec<Option<Elem>> = vec![None; t.vars.len()];
                for (pos, &e) in tuple.iter().enumerate() {
                    let vp = arg_pos[pos];
                    match vals[vp] {
                        None => vals[vp] = Some(e),
                        Some(prev) if prev == e => {}
                        Some(_) => continue 'tuples,
                    }
                }
                let idx: usize = vals
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v.unwrap() as usize * mults[i])
                    .sum();
                t.set(idx);
            }
            Ok(t)
        }
        Formula::Eq(u, v) => {
            if u == v {
                let mut t = Table::new(vec![*u], n)?;
                t.fill_ones();
                Ok(t)
            } else {
                let mut vars = vec![*u, *v];
                vars.sort_unstable();
                let mut t = Table::new(vars, n)?;
                for e in 0..n {
                    t.set(e + e * n);
                }
                Ok(t)
            }
        }
        Formula::Not(g) => {
            let mut t = eval_rec(s, g)?;
            t.complement();
            Ok(t)
        }
        Formula::And(xs) => combine(s, xs, true),
        Formula::Or(xs) => combine(s, xs, false),
        Formula::Exists(v, g) => project(s, *v, g, false),
        Formula::Forall(v, g) => project(s, *v, g, true),
    }
}

/// Cell-wise conjunction or disjunction over the union of child variables.
fn combine(s: &Structure, xs: &[Formula], conj: bool) -> Result<Table, EvalError> {
    let n = s.domain_size();
    let children: Vec<Table> = xs.iter().map(|g| eval_rec(s, g)).collect::<Result<_, _>>()?;
    let mut vars: Vec<Var> = children.iter().flat_map(|c| c.vars.clone()).collect();
    vars.sort_unstable();
    vars.dedup();
    // Word-level fast path when every child ranges over the same variables.
    if children.iter().all(|c| c.vars == vars) {
        let mut it = children.into_iter();
        let mut acc = it.next().expect("junctions are non-empty");
        for c in it {
            for (w, cw) in acc.bits.iter_mut().zip(&c.bits) {
                if conj {
                    *w &= cw;
                } else {
                    *w |= cw;
                }
            }
        }
        return Ok(acc);
    }
    let mut out = Table::new(vars, n)?;
    // Stride of union variable `d` inside child `c`, zero when absent.
    let strides: Vec<Vec<usize>> = children
        .iter()
        .map(|c| {
            out.vars
                .iter()
                .map(|v| match c.vars.iter().position(|u| u == v) {
                    Some(p) => n.pow(p as u32),
                    None => 0,
                })
                .collect()
        })
        .collect();
    let m = out.vars.len();
    let mut child_idx = vec![0usize; children.len()];
    fill_combine(
        &children,
        &strides,
        conj,
        n,
        m,
        0,
        &mut child_idx,
        &mut out,
        0,
    );
    Ok(out)
}

/// Recursive fill over union digits, most significant first, keeping a running
/// index into every child table.
#[allow(clippy::too_many_arguments)]
fn fill_combine(
    children: &[Table],
    strides: &[Vec<usize>],
    conj: bool,
    n: usize,
    m: usize,
    depth: usize,
    child_idx: &mut [usize],
    out: &mut Table,
    out_base: usize,
) {
    let digit = m - 1 - depth;
    let out_stride = n.pow(digit as u32);
    if depth + 1 == m {
        for val in 0..n {
            let mut bit = conj;
            for (c, t) in children.iter().enumerate() {
                let b = t.get(child_idx[c] + val * strides[c][digit]);
                if conj {
                    bit &= b;
                    if !bit {
                        break;
                    }
                } else {
                    bit |= b;
                    if bit {
                        break;
                    }
                }
            }
            if bit {
                out.set(out_base + val);
            }
        }
        return;
    }
    for val in 0..n {
        fill_combine(
            children,
            strides,
            conj,
            n,
            m,
            depth + 1,
            child_idx,
            out,
            out_base + val * out_stride,
        );
        for (c, st) in strides.iter().enumerate() {
            child_idx[c] += st[digit];
        }
    }
    for (c, st) in strides.iter().enumerate() {
        child_idx[c] -= n * st[digit];
    }
}

/// Projects variable `v` out of the table of `g` (or-project for an
/// existential, and-project for a universal).
fn project(s: &Structure, v: Var, g: &Formula, universal: bool) -> Result<Table, EvalError> {
    let n = s.domain_size();
    let inner = eval_rec(s, g)?;
    let Some(pos) = inner.vars.iter().position(|&u| u == v) else {
        // Vacuous quantification over a non-empty domain changes nothing.
        return Ok(inner);
    };
    let vars: Vec<Var> = inner
        .vars
        .iter()
        .copied()
        .filter(|&u| u != v)
        .collect();
    let mut out = Table::new(vars, n)?;
    if pos == inner.vars.len() - 1 {
        // The projected variable has the largest stride, so its slices are
        // contiguous and, when word-aligned, whole words can be folded.
        let block = out.len.div_ceil(64);
        if universal {
            for w in &mut out.bits {
                *w = !0;
            }
        }
        for val in 0..n {
            let base_bit = val * out.len;
            if out.len % 64 == 0 {
                let base_word = base_bit / 64;
                for i in 0..block {
                    let wsrc = inner.bits[base_word + i];
                    if universal {
                        out.bits[i] &= wsrc;
                    } else {
                        out.bits[i] |= wsrc;
                    }
                }
            } else {
                for idx in 0..out.len {
                    let b = inner.get(base_bit + idx);
                    if universal {
                        if !b {
                            out.clear(idx);
                        }
                    } else if b {
                        out.set(idx);
                    }
                }
            }
        }
        out.mask_tail();
        return Ok(out);
    }
    let stride = n.pow(pos as u32);
    let hi_stride = stride * n;
    for out_idx in 0..out.len {
        let lo = out_idx % stride;
        let hi = out_idx / stride;
        let base = hi * hi_stride + lo;
        let mut bit = universal;
        for val in 0..n {
            let b = inner.get(base + val * stride);
            if universal {
                bit &= b;
                if !bit {
                    break;
                }
            } else {
                bit |= b;
                if bit {
                    break;
                }
            }
        }
        if bit {
            out.set(out_idx);
        }
    }
    Ok(out)
}

impl Table {
    fn clear(&mut self, idx: usize) {
        self.bits[idx / 64] &= !(1 << (idx % 64));
    }
}

/// Evaluates a sentence on a structure.
pub fn evaluate(s: &Structure, f: &Formula) -> Result<bool, EvalError> {
    let fv = f.free_vars();
    if !fv.is_empty() {
        return Err(EvalError::NotASentence(fv));
    }
    let t = eval_table(s, f)?;
    Ok(t.get(0))
}

/// Evaluates a formula whose free variables are all placed in `assignment`.
pub fn evaluate_with(
    s: &Structure,
    f: &Formula,
    assignment: &[Option<Elem>],
) -> Result<bool, EvalError> {
    let t = eval_table(s, f)?;
    t.lookup(assignment)
}

/// Whether sentence `f` holds on `a` but not on `b`.
pub fn separates(f: &Formula, a: &Structure, b: &Structure) -> Result<bool, EvalError> {
    Ok(evaluate(a, f)? && !evaluate(b, f)?)
}

/// Direct recursive evaluation under an explicit environment. Exponential in
/// quantifier nesting; meant for cross-checks and tiny inputs.
pub fn evaluate_naive(
    s: &Structure,
    f: &Formula,
    env: &mut Vec<Option<Elem>>,
) -> Result<bool, EvalError> {
    if s.domain_size() == 0 {
        return Err(EvalError::EmptyDomain);
    }
    match f {
        Formula::Atom(name, args) => {
            let ri = s
                .signature()
                .index_of(name)
                .ok_or_else(|| EvalError::UnknownRelation(name.clone()))?;
            if s.signature().arity(ri) != args.len() {
                return Err(EvalError::ArityMismatch(
                    name.clone(),
                    s.signature().arity(ri),
                    args.len(),
                ));
            }
            let tuple: Vec<Elem> = args
                .iter()
                .map(|&v| env.get(v).copied().flatten().ok_or(EvalError::UnplacedFreeVar(v)))
                .collect::<Result<_, _>>()?;
            Ok(s.holds(ri, &tuple))
        }
        Formula::Eq(u, v) => {
            let a = env.get(*u).copied().flatten().ok_or(EvalError::UnplacedFreeVar(*u))?;
            let b = env.get(*v).copied().flatten().ok_or(EvalError::UnplacedFreeVar(*v))?;
            Ok(a == b)
        }
        Formula::Not(g) => Ok(!evaluate_naive(s, g, env)?),
        Formula::And(xs) => {
            for g in xs {
                if !evaluate_naive(s, g, env)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Formula::Or(xs) => {
            for g in xs {
                if evaluate_naive(s, g, env)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Formula::Exists(v, g) | Formula::Forall(v, g) => {
            let universal = matches!(f, Formula::Forall(..));
            if env.len() <= *v {
                env.resize(v + 1, None);
            }
            let saved = env[*v];
            let mut result = universal;
            for e in 0..s.domain_size() {
                env[*v] = Some(e as Elem);
                let b = evaluate_naive(s, g, env)?;
                if universal {
                    result &= b;
                } else {
                    result |= b;
                }
                if result != universal {
                    break;
                }
            }
            env[*v] = saved;
            Ok(result)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;
    use crate::structure::{linear_order, Signature, Structure};
    use std::sync::Arc;

    fn chain3() -> Structure {
        linear_order(3, "A")
    }

    #[test]
    fn atoms_and_equality() {
        let s = chain3();
        let f = parse_formula("LT(x1,x2)").unwrap();
        assert!(evaluate_with(&s, &f, &[Some(0), Some(1)]).unwrap());
        assert!(!evaluate_with(&s, &f, &[Some(1), Some(0)]).unwrap());
        let g = parse_formula("x1 = x2").unwrap();
        assert!(evaluate_with(&s, &g, &[Some(2), Some(2)]).unwrap());
        assert!(!evaluate_with(&s, &g, &[Some(0), Some(2)]).unwrap());
    }

    #[test]
    fn sentence_on_chains() {
        // A chain of 3 has a point with both a predecessor and a successor.
        let f = parse_formula("Ex1 (Ex2 LT(x2,x1) & Ex2 LT(x1,x2))").unwrap();
        assert!(evaluate(&linear_order(3, "A"), &f).unwrap());
        assert!(!evaluate(&linear_order(2, "B"), &f).unwrap());
        assert!(separates(&f, &linear_order(3, "A"), &linear_order(2, "B")).unwrap());
    }

    #[test]
    fn quantifier_alternation() {
        // Every point has a successor: false on finite chains.
        let f = parse_formula("Ax1 Ex2 LT(x1,x2)").unwrap();
        assert!(!evaluate(&chain3(), &f).unwrap());
        // Some point has no successor.
        let g = parse_formula("Ex1 Ax2 !LT(x1,x2)").unwrap();
        assert!(evaluate(&chain3(), &g).unwrap());
    }

    #[test]
    fn repeated_atom_variables() {
        let sig = Arc::new(Signature::new([("E", 2)]));
        let s = Structure::new("loopy", sig, 2, vec![vec![vec![0, 0], vec![0, 1]]]).unwrap();
        let f = parse_formula("Ex1 E(x1,x1)").unwrap();
        assert!(evaluate(&s, &f).unwrap());
        let g = parse_formula("Ax1 E(x1,x1)").unwrap();
        assert!(!evaluate(&s, &g).unwrap());
    }

    #[test]
    fn vacuous_quantifier_is_identity() {
        let f = parse_formula("Ex2 LT(x1,x1)").unwrap();
        assert!(!evaluate_with(&chain3(), &f, &[Some(0)]).unwrap());
        let g = parse_formula("Ax2 Ex1 LT(x1,x3)").unwrap();
        assert!(evaluate_with(&chain3(), &g, &[None, None, Some(1)]).unwrap());
    }

    #[test]
    fn errors_are_reported() {
        let f = parse_formula("Z(x1)").unwrap();
        assert!(matches!(
            evaluate_with(&chain3(), &f, &[Some(0)]),
            Err(EvalError::UnknownRelation(_))
        ));
        let g = parse_formula("LT(x1,x2)").unwrap();
        assert!(matches!(
            evaluate(&chain3(), &g),
            Err(EvalError::NotASentence(_))
        ));
        assert!(matches!(
            evaluate_with(&chain3(), &g, &[Some(0), None]),
            Err(EvalError::UnplacedFreeVar(1))
        ));
    }

    #[test]
    fn fast_and_naive_agree_on_small_formulas() {
        let sig = Arc::new(Signature::new([("E", 2), ("P", 1)]));
        let s = Structure::new(
            "m",
            sig,
            4,
            vec![
                vec![vec![0, 1], vec![1, 2], vec![2, 0], vec![3, 3]],
                vec![vec![1], vec![3]],
            ],
        )
        .unwrap();
        let samples = [
            "Ex1 (P(x1) & E(x1,x1))",
            "Ax1 (P(x1) | Ex2 E(x1,x2))",
            "Ex1 Ex2 Ex3 (E(x1,x2) & E(x2,x3) & E(x3,x1))",
            "Ax1 Ax2 (E(x1,x2) | E(x2,x1) | x1 = x2 | Ex3 (E(x1,x3) & E(x3,x2)))",
            "Ex1 !(P(x1) | Ex2 (E(x2,x1) & !P(x2)))",
        ];
        for text in samples {
            let f = parse_formula(text).unwrap();
            let fast = evaluate(&s, &f).unwrap();
            let naive = evaluate_naive(&s, &f, &mut Vec::new()).unwrap();
            assert_eq!(fast, naive, "{text}");
        }
    }
}
