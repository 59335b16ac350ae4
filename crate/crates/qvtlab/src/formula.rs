//! First-order formulas over relational signatures, with resource metrics.
//!
//! Variables are pebble indices: `x1` in the text syntax is index 0 here, and a
//! formula's free variable `i` is read off a board's pebble `i`. The grammar:
//!
//! ```text
//! formula := or
//! or      := and ('|' and)*
//! and     := unary ('&' unary)*
//! unary   := '!' unary | QUANT unary | primary
//! primary := '(' formula ')' | VAR '=' VAR | IDENT '(' VAR, ... ')'
//! ```
//!
//! where `VAR` is `x` followed by a positive integer and `QUANT` is `E` or `A`
//! glued to a variable (`Ex1`, `Ax3`). A relation symbol must not itself look
//! like a quantifier token. `And`/`Or` nodes are kept flattened (no direct child
//! of the same kind, always at least two children), so parsing the rendered text
//! reproduces the tree exactly.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

/// Variable index; the surface form `x{i+1}` names index `i`.
pub type Var = usize;

/// Errors from parsing formula text.
#[derive(Debug, Error)]
pub enum FormulaError {
    #[error("offset {0}: {1}")]
    Parse(usize, String),
}

/// A first-order formula in negation-unrestricted form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Atom(String, Vec<Var>),
    Eq(Var, Var),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Exists(Var, Box<Formula>),
    Forall(Var, Box<Formula>),
}

impl Formula {
    pub fn atom(rel: impl Into<String>, args: Vec<Var>) -> Formula {
        Formula::Atom(rel.into(), args)
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn exists(v: Var, f: Formula) -> Formula {
        Formula::Exists(v, Box::new(f))
    }

    pub fn forall(v: Var, f: Formula) -> Formula {
        Formula::Forall(v, Box::new(f))
    }

    /// Flattening conjunction; panics on an empty list (there is no truth
    /// literal in the grammar, use `Formula::truth(v)` explicitly).
    pub fn and(items: Vec<Formula>) -> Formula {
        Self::junction(items, true)
    }

    /// Flattening disjunction; panics on an empty list.
    pub fn or(items: Vec<Formula>) -> Formula {
        Self::junction(items, false)
    }

    fn junction(items: Vec<Formula>, conj: bool) -> Formula {
        let mut flat = Vec::with_capacity(items.len());
        for f in items {
            match (conj, f) {
                (true, Formula::And(xs)) => flat.extend(xs),
                (false, Formula::Or(xs)) => flat.extend(xs),
                (_, f) => flat.push(f),
            }
        }
        assert!(!flat.is_empty(), "empty junction has no literal form");
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else if conj {
            Formula::And(flat)
        } else {
            Formula::Or(flat)
        }
    }

    /// The tautology `x_v = x_v`; free in `v`, so only valid where `v` is in
    /// scope or placed.
    pub fn truth(v: Var) -> Formula {
        Formula::Eq(v, v)
    }

    /// The contradiction `!(x_v = x_v)`.
    pub fn falsity(v: Var) -> Formula {
        Formula::not(Formula::truth(v))
    }

    /// Number of quantifier occurrences.
    pub fn quant_count(&self) -> usize {
        match self {
            Formula::Atom(..) | Formula::Eq(..) => 0,
            Formula::Not(f) => f.quant_count(),
            Formula::And(xs) | Formula::Or(xs) => xs.iter().map(|f| f.quant_count()).sum(),
            Formula::Exists(_, f) | Formula::Forall(_, f) => 1 + f.quant_count(),
        }
    }

    /// Maximum quantifier nesting depth.
    pub fn quant_depth(&self) -> usize {
        match self {
            Formula::Atom(..) | Formula::Eq(..) => 0,
            Formula::Not(f) => f.quant_depth(),
            Formula::And(xs) | Formula::Or(xs) => {
                xs.iter().map(|f| f.quant_depth()).max().unwrap_or(0)
            }
            Formula::Exists(_, f) | Formula::Forall(_, f) => 1 + f.quant_depth(),
        }
    }

    /// Node count, with an n-ary junction counted as n-1 binary nodes, so the
    /// value does not depend on how chains were grouped.
    pub fn size(&self) -> usize {
        match self {
            Formula::Atom(..) | Formula::Eq(..) => 1,
            Formula::Not(f) => 1 + f.size(),
            Formula::And(xs) | Formula::Or(xs) => {
                xs.len() - 1 + xs.iter().map(|f| f.size()).sum::<usize>()
            }
            Formula::Exists(_, f) | Formula::Forall(_, f) => 1 + f.size(),
        }
    }

    /// Number of distinct variable indices, free or bound.
    pub fn num_variables(&self) -> usize {
        let mut vars = BTreeSet::new();
        self.collect_vars(&mut vars);
        vars.len()
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Formula::Atom(_, args) => out.extend(args.iter().copied()),
            Formula::Eq(u, v) => {
                out.insert(*u);
                out.insert(*v);
            }
            Formula::Not(f) => f.collect_vars(out),
            Formula::And(xs) | Formula::Or(xs) => {
                for f in xs {
                    f.collect_vars(out);
                }
            }
            Formula::Exists(v, f) | Formula::Forall(v, f) => {
                out.insert(*v);
                f.collect_vars(out);
            }
        }
    }

    /// Whether the formula avoids negation and universal quantification.
    pub fn is_existential_positive(&self) -> bool {
        match self {
            Formula::Atom(..) | Formula::Eq(..) => true,
            Formula::Not(_) | Formula::Forall(..) => false,
            Formula::And(xs) | Formula::Or(xs) => xs.iter().all(|f| f.is_existential_positive()),
            Formula::Exists(_, f) => f.is_existential_positive(),
        }
    }

    /// Free variable indices, sorted.
    pub fn free_vars(&self) -> Vec<Var> {
        let mut out = BTreeSet::new();
        self.free_vars_into(&mut out);
        out.into_iter().collect()
    }

    fn free_vars_into(&self, out: &mut BTreeSet<Var>) {
        match self {
            Formula::Atom(_, args) => out.extend(args.iter().copied()),
            Formula::Eq(u, v) => {
                out.insert(*u);
                out.insert(*v);
            }
            Formula::Not(f) => f.free_vars_into(out),
            Formula::And(xs) | Formula::Or(xs) => {
                for f in xs {
                    f.free_vars_into(out);
                }
            }
            Formula::Exists(v, f) | Formula::Forall(v, f) => {
                let mut inner = BTreeSet::new();
                f.free_vars_into(&mut inner);
                inner.remove(v);
                out.extend(inner);
            }
        }
    }

    /// Whether the formula is a sentence.
    pub fn is_sentence(&self) -> bool {
        self.free_vars().is_empty()
    }

    /// Applies a variable substitution to every occurrence, free and bound.
    /// Callers must ensure the rename does not capture (the rewrite passes in
    /// this crate only swap or rename within explicitly managed scopes).
    pub fn rename_all(&self, subst: &dyn Fn(Var) -> Var) -> Formula {
        match self {
            Formula::Atom(r, args) => {
                Formula::Atom(r.clone(), args.iter().map(|&v| subst(v)).collect())
            }
            Formula::Eq(u, v) => Formula::Eq(subst(*u), subst(*v)),
            Formula::Not(f) => Formula::not(f.rename_all(subst)),
            Formula::And(xs) => Formula::And(xs.iter().map(|f| f.rename_all(subst)).collect()),
            Formula::Or(xs) => Formula::Or(xs.iter().map(|f| f.rename_all(subst)).collect()),
            Formula::Exists(v, f) => Formula::exists(subst(*v), f.rename_all(subst)),
            Formula::Forall(v, f) => Formula::forall(subst(*v), f.rename_all(subst)),
        }
    }

    /// Canonical text form; parsing it reproduces the tree.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_or(&mut out);
        out
    }

    fn render_or(&self, out: &mut String) {
        if let Formula::Or(xs) = self {
            for (i, f) in xs.iter().enumerate() {
                if i > 0 {
                    out.push_str(" | ");
                }
                f.render_and(out);
            }
        } else {
            self.render_and(out);
        }
    }

    fn render_and(&self, out: &mut String) {
        match self {
            Formula::Or(_) => {
                out.push('(');
                self.render_or(out);
                out.push(')');
            }
            Formula::And(xs) => {
                for (i, f) in xs.iter().enumerate() {
                    if i > 0 {
                        out.push_str(" & ");
                    }
                    f.render_unary(out);
                }
            }
            _ => self.render_unary(out),
        }
    }

    fn render_unary(&self, out: &mut String) {
        match self {
            Formula::Or(_) | Formula::And(_) => {
                out.push('(');
                self.render_or(out);
                out.push(')');
            }
            Formula::Not(f) => {
                out.push('!');
                f.render_operand(out);
            }
            Formula::Exists(v, f) => {
                write!(out, "Ex{} ", v + 1).unwrap();
                f.render_operand(out);
            }
            Formula::Forall(v, f) => {
                write!(out, "Ax{} ", v + 1).unwrap();
                f.render_operand(out);
            }
            Formula::Eq(u, v) => {
                write!(out, "x{} = x{}", u + 1, v + 1).unwrap();
            }
            Formula::Atom(r, args) => {
                out.push_str(r);
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write!(out, "x{}", a + 1).unwrap();
                }
                out.push(')');
            }
        }
    }

    /// Operand of a prefix operator: parenthesized unless self-delimiting.
    fn render_operand(&self, out: &mut String) {
        match self {
            Formula::Atom(..) | Formula::Not(_) | Formula::Exists(..) | Formula::Forall(..) => {
                self.render_unary(out)
            }
            _ => {
                out.push('(');
                self.render_or(out);
                out.push(')');
            }
        }
    }
}

/// Parses the canonical grammar.
pub fn parse_formula(text: &str) -> Result<Formula, FormulaError> {
    let tokens = lex(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let f = p.parse_or()?;
    if p.pos < p.tokens.len() {
        let (off, _) = &p.tokens[p.pos];
        return Err(FormulaError::Parse(*off, "trailing input".into()));
    }
    Ok(f)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Comma,
    Amp,
    Pipe,
    Bang,
    Equals,
    Var(Var),
    Quant(bool, Var),
    Ident(String),
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, FormulaError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let tok = match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            '&' => Tok::Amp,
            '|' => Tok::Pipe,
            '!' => Tok::Bang,
            '=' => Tok::Equals,
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                let word = &text[start..i];
                out.push((start, classify_word(word, start)?));
                continue;
            }
            other => {
                return Err(FormulaError::Parse(i, format!("unexpected character {other:?}")))
            }
        };
        out.push((i, tok));
        i += 1;
    }
    Ok(out)
}

fn classify_word(word: &str, off: usize) -> Result<Tok, FormulaError> {
    let var_of = |s: &str| -> Option<Var> {
        s.strip_prefix('x')
            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|d| d.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .map(|n| n - 1)
    };
    if let Some(v) = var_of(word) {
        return Ok(Tok::Var(v));
    }
    for (prefix, exist) in [("E", true), ("A", false)] {
        if let Some(rest) = word.strip_prefix(prefix) {
            if let Some(v) = var_of(rest) {
                return Ok(Tok::Quant(exist, v));
            }
        }
    }
    if word == "x" {
        return Err(FormulaError::Parse(off, "bare x is not a variable".into()));
    }
    Ok(Tok::Ident(word.to_string()))
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, msg: &str) -> FormulaError {
        let off = self
            .tokens
            .get(self.pos)
            .map(|(o, _)| *o)
            .unwrap_or_else(|| self.tokens.last().map(|(o, _)| o + 1).unwrap_or(0));
        FormulaError::Parse(off, msg.into())
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), FormulaError> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(what))
        }
    }

    fn parse_or(&mut self) -> Result<Formula, FormulaError> {
        let mut items = vec![self.parse_and()?];
        while self.peek() == Some(&Tok::Pipe) {
            self.pos += 1;
            items.push(self.parse_and()?);
        }
        Ok(Formula::or(items))
    }

    fn parse_and(&mut self) -> Result<Formula, FormulaError> {
        let mut items = vec![self.parse_unary()?];
        while self.peek() == Some(&Tok::Amp) {
            self.pos += 1;
            items.push(self.parse_unary()?);
        }
        Ok(Formula::and(items))
    }

    fn parse_unary(&mut self) -> Result<Formula, FormulaError> {
        match self.peek() {
            Some(Tok::Bang) => {
                self.pos += 1;
                Ok(Formula::not(self.parse_unary()?))
            }
            Some(&Tok::Quant(exist, v)) => {
                self.pos += 1;
                let body = self.parse_unary()?;
                Ok(if exist {
                    Formula::exists(v, body)
                } else {
                    Formula::forall(v, body)
                })
            }
            _ => self.parse_primary(),
        }
    }

    fn parse_primary(&mut self) -> Result<Formula, FormulaError> {
        match self.bump() {
            Some(Tok::LParen) => {
                let f = self.parse_or()?;
                self.expect(Tok::RParen, "expected )")?;
                Ok(f)
            }
            Some(Tok::Var(u)) => {
                self.expect(Tok::Equals, "expected = after variable")?;
                match self.bump() {
                    Some(Tok::Var(v)) => Ok(Formula::Eq(u, v)),
                    _ => Err(self.err("expected variable after =")),
                }
            }
            Some(Tok::Ident(name)) => {
                self.expect(Tok::LParen, "expected ( after relation symbol")?;
                let mut args = Vec::new();
                if self.peek() != Some(&Tok::RParen) {
                    loop {
                        match self.bump() {
                            Some(Tok::Var(v)) => args.push(v),
                            _ => return Err(self.err("expected variable argument")),
                        }
                        match self.peek() {
                            Some(Tok::Comma) => {
                                self.pos += 1;
                            }
                            _ => break,
                        }
                    }
                }
                self.expect(Tok::RParen, "expected ) after arguments")?;
                Ok(Formula::Atom(name, args))
            }
            _ => Err(self.err("expected a formula")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(text: &str) -> Formula {
        let f = parse_formula(text).unwrap();
        let rendered = f.render();
        let again = parse_formula(&rendered).unwrap();
        assert_eq!(f, again, "render/parse round trip for {text}");
        f
    }

    #[test]
    fn parses_the_running_example() {
        let f = round_trip("Ex1 Ex2 (LT(x1,x2) & Ex1 LT(x2,x1))");
        assert_eq!(f.quant_count(), 3);
        assert_eq!(f.quant_depth(), 3);
        assert_eq!(f.num_variables(), 2);
        assert!(f.is_sentence());
        assert!(f.is_existential_positive());
    }

    #[test]
    fn precedence_and_binds_tighter_than_or() {
        let f = round_trip("P(x1) & Q(x1) | R(x1)");
        match f {
            Formula::Or(xs) => {
                assert_eq!(xs.len(), 2);
                assert!(matches!(xs[0], Formula::And(_)));
            }
            other => panic!("expected or at top, got {other:?}"),
        }
    }

    #[test]
    fn quantifier_scopes_like_a_prefix_operator() {
        let f = round_trip("Ax2 !LT(x2,x2) & P(x1)");
        match f {
            Formula::And(xs) => assert!(matches!(xs[0], Formula::Forall(1, _))),
            other => panic!("expected and at top, got {other:?}"),
        }
    }

    #[test]
    fn junctions_flatten() {
        let f = parse_formula("(P(x1) & Q(x1)) & S(x1)").unwrap();
        assert_eq!(f, parse_formula("P(x1) & (Q(x1) & S(x1))").unwrap());
        match f {
            Formula::And(xs) => assert_eq!(xs.len(), 3),
            other => panic!("expected flat and, got {other:?}"),
        }
    }

    #[test]
    fn equality_and_negation_round_trip() {
        let f = round_trip("!(x1 = x2) & Ex3 x3 = x1");
        assert_eq!(f.num_variables(), 3);
        assert!(!f.is_existential_positive());
        assert_eq!(f.free_vars(), vec![0, 1]);
    }

    #[test]
    fn metrics_on_nested_quantifiers() {
        let f = parse_formula("Ex1 (P(x1) & Ex2 Q(x2)) | Ex3 S(x3)").unwrap();
        assert_eq!(f.quant_count(), 3);
        assert_eq!(f.quant_depth(), 2);
        assert_eq!(f.size(), 3 + 3 + 2);
    }

    #[test]
    fn zero_ary_atom_renders_and_parses() {
        let f = round_trip("FLAG()");
        assert_eq!(f, Formula::Atom("FLAG".into(), vec![]));
    }

    #[test]
    fn quantifier_lookalike_names_lex_as_quantifiers() {
        // Ex2 lexes as a quantifier, so using it as an atom fails to parse,
        // while names merely starting with E or A stay relation symbols.
        assert!(parse_formula("Ex2(x1)").is_err());
        let f = parse_formula("Edge(x1,x2)").unwrap();
        assert!(matches!(f, Formula::Atom(..)));
    }

    #[test]
    fn free_vars_respect_binding() {
        let f = parse_formula("Ex1 LT(x1,x2)").unwrap();
        assert_eq!(f.free_vars(), vec![1]);
        let g = parse_formula("LT(x1,x2) & Ex2 LT(x2,x2)").unwrap();
        assert_eq!(g.free_vars(), vec![0, 1]);
    }

    #[test]
    fn rename_all_swaps_variables() {
        let f = parse_formula("Ex1 LT(x1,x2)").unwrap();
        let g = f.rename_all(&|v| match v {
            0 => 1,
            1 => 0,
            v => v,
        });
        assert_eq!(g.render(), "Ex2 LT(x2,x1)");
    }
}
