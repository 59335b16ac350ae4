//! Finite relational structures over explicit domains `0..n`.
//!
//! A [`Signature`] lists relation symbols with arities; a [`Structure`] stores one
//! sorted tuple set per symbol. Structures are the boards' substrate for every game
//! in this crate, so they are immutable once built and shared behind [`Arc`].
//!
//! The text format (one or more blocks per file, `#` starts a comment):
//!
//! ```text
//! structure NAME
//! domain N
//! relation R ARITY
//! t i1 i2 ... iARITY
//! end
//! ```
//!
//! Elements are written 0-based. `write_text` emits a canonical form (relations in
//! signature order, tuples sorted), so parse-write round-trips are byte-stable.

use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

/// Element of a structure's domain.
pub type Elem = u32;

/// Errors from building or parsing structures.
#[derive(Debug, Error)]
pub enum StructureError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("relation {rel}: tuple {tuple:?} out of domain 0..{domain}")]
    TupleOutOfDomain {
        rel: String,
        tuple: Vec<Elem>,
        domain: usize,
    },
    #[error("relation {rel} has arity {expected}, got tuple of length {got}")]
    ArityMismatch {
        rel: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown relation symbol {0}")]
    UnknownRelation(String),
    #[error("relation {0} declared with arity 0; arities must be positive")]
    ZeroArity(String),
    #[error("signatures differ: {0}")]
    SignatureMismatch(String),
    #[error("domain size {0} exceeds the brute-force isomorphism cap {1}")]
    IsoCapExceeded(usize, usize),
}

/// A relation symbol declaration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelDecl {
    pub name: String,
    pub arity: usize,
}

/// An ordered list of relation symbols with arities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    rels: Vec<RelDecl>,
}

impl Signature {
    /// Builds a signature from `(name, arity)` pairs, keeping the given order.
    pub fn new<S: Into<String>>(rels: impl IntoIterator<Item = (S, usize)>) -> Self {
        Signature {
            rels: rels
                .into_iter()
                .map(|(name, arity)| RelDecl {
                    name: name.into(),
                    arity,
                })
                .collect(),
        }
    }

    pub fn relations(&self) -> &[RelDecl] {
        &self.rels
    }

    pub fn len(&self) -> usize {
        self.rels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rels.is_empty()
    }

    /// Index of the symbol named `name`, if declared.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.rels.iter().position(|r| r.name == name)
    }

    pub fn arity(&self, rel: usize) -> usize {
        self.rels[rel].arity
    }

    pub fn name(&self, rel: usize) -> &str {
        &self.rels[rel].name
    }
}

/// A finite structure: a domain `0..domain_size` and one tuple set per symbol.
#[derive(Debug, Clone)]
pub struct Structure {
    name: String,
    sig: Arc<Signature>,
    domain_size: usize,
    /// Per relation symbol, the tuple set sorted lexicographically and deduplicated.
    tuples: Vec<Vec<Vec<Elem>>>,
    /// FNV-1a digest of the canonical text form, fixed at construction.
    digest: u64,
}

impl PartialEq for Structure {
    fn eq(&self, other: &Self) -> bool {
        self.digest == other.digest
            && self.name == other.name
            && self.domain_size == other.domain_size
            && self.sig == other.sig
            && self.tuples == other.tuples
    }
}
impl Eq for Structure {}

impl Structure {
    /// Builds a structure, sorting tuple sets and validating arities and bounds.
    pub fn new(
        name: impl Into<String>,
        sig: Arc<Signature>,
        domain_size: usize,
        rel_tuples: Vec<Vec<Vec<Elem>>>,
    ) -> Result<Self, StructureError> {
        let name = name.into();
        assert_eq!(
            rel_tuples.len(),
            sig.len(),
            "one tuple set per signature symbol"
        );
        let mut tuples = rel_tuples;
        for (ri, ts) in tuples.iter_mut().enumerate() {
            let decl = &sig.relations()[ri];
            if decl.arity == 0 {
                return Err(StructureError::ZeroArity(decl.name.clone()));
            }
            for t in ts.iter() {
                if t.len() != decl.arity {
                    return Err(StructureError::ArityMismatch {
                        rel: decl.name.clone(),
                        expected: decl.arity,
                        got: t.len(),
                    });
                }
                if t.iter().any(|&e| e as usize >= domain_size) {
                    return Err(StructureError::TupleOutOfDomain {
                        rel: decl.name.clone(),
                        tuple: t.clone(),
                        domain: domain_size,
                    });
                }
            }
            ts.sort_unstable();
            ts.dedup();
        }
        let mut s = Structure {
            name,
            sig,
            domain_size,
            tuples,
            digest: 0,
        };
        s.digest = fnv1a(s.write_text().as_bytes());
        Ok(s)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn signature(&self) -> &Arc<Signature> {
        &self.sig
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    /// Stable content digest (canonical text form under FNV-1a).
    pub fn digest(&self) -> u64 {
        self.digest
    }

    /// All tuples of relation `rel`, sorted.
    pub fn rel_tuples(&self, rel: usize) -> &[Vec<Elem>] {
        &self.tuples[rel]
    }

    /// Membership test for one tuple.
    pub fn holds(&self, rel: usize, tuple: &[Elem]) -> bool {
        self.tuples[rel]
            .binary_search_by(|t| t.as_slice().cmp(tuple))
            .is_ok()
    }

    /// Canonical text form of this structure.
    pub fn write_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "structure {}", self.name).unwrap();
        writeln!(out, "domain {}", self.domain_size).unwrap();
        for (ri, decl) in self.sig.relations().iter().enumerate() {
            writeln!(out, "relation {} {}", decl.name, decl.arity).unwrap();
            for t in &self.tuples[ri] {
                out.push('t');
                for e in t {
                    write!(out, " {e}").unwrap();
                }
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    /// Renames the structure, leaving content untouched except the digest.
    pub fn renamed(&self, name: impl Into<String>) -> Structure {
        let mut s = self.clone();
        s.name = name.into();
        s.digest = fnv1a(s.write_text().as_bytes());
        s
    }

    /// Rebuilds this structure over `sig`, which must declare a superset of the
    /// symbols here with identical arities; missing symbols become empty.
    pub fn reindexed(&self, sig: &Arc<Signature>) -> Result<Structure, StructureError> {
        let mut tuples = vec![Vec::new(); sig.len()];
        for (ri, decl) in self.sig.relations().iter().enumerate() {
            match sig.index_of(&decl.name) {
                Some(j) if sig.arity(j) == decl.arity => tuples[j] = self.tuples[ri].clone(),
                Some(_) => {
                    return Err(StructureError::SignatureMismatch(format!(
                        "arity of {} differs",
                        decl.name
                    )))
                }
                None => {
                    return Err(StructureError::SignatureMismatch(format!(
                        "symbol {} missing from target signature",
                        decl.name
                    )))
                }
            }
        }
        Structure::new(self.name.clone(), Arc::clone(sig), self.domain_size, tuples)
    }

    /// Applies a domain permutation (`perm[old] = new`) and returns the image.
    pub fn permuted(&self, perm: &[Elem]) -> Structure {
        assert_eq!(perm.len(), self.domain_size);
        let tuples = self
            .tuples
            .iter()
            .map(|ts| {
                ts.iter()
                    .map(|t| t.iter().map(|&e| perm[e as usize]).collect())
                    .collect()
            })
            .collect();
        Structure::new(self.name.clone(), Arc::clone(&self.sig), self.domain_size, tuples)
            .expect("permutation preserves validity")
    }
}

/// Merges two structures onto one shared signature (union of symbols, sorted by
/// name), so game positions can compare relation facts across them.
pub fn align_pair(a: &Structure, b: &Structure) -> Result<(Structure, Structure), StructureError> {
    let mut decls: Vec<RelDecl> = a.signature().relations().to_vec();
    for d in b.signature().relations() {
        match decls.iter().find(|x| x.name == d.name) {
            Some(x) if x.arity == d.arity => {}
            Some(_) => {
                return Err(StructureError::SignatureMismatch(format!(
                    "arity of {} differs between structures",
                    d.name
                )))
            }
            None => decls.push(d.clone()),
        }
    }
    decls.sort_by(|x, y| x.name.cmp(&y.name));
    let sig = Arc::new(Signature {
        rels: decls.clone(),
    });
    let widen = |s: &Structure| -> Structure {
        let mut tuples = vec![Vec::new(); sig.len()];
        for (ri, decl) in s.signature().relations().iter().enumerate() {
            let j = sig.index_of(&decl.name).unwrap();
            tuples[j] = s.rel_tuples(ri).to_vec();
        }
        Structure::new(s.name(), Arc::clone(&sig), s.domain_size(), tuples).unwrap()
    };
    Ok((widen(a), widen(b)))
}

/// Parses every `structure ... end` block in `text`.
pub fn parse_structures(text: &str) -> Result<Vec<Structure>, StructureError> {
    let mut out = Vec::new();
    let mut cur: Option<PartialStructure> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        let mut words = line.split_whitespace();
        let head = words.next().unwrap();
        let err = |msg: String| StructureError::Parse { line: lineno, msg };
        match head {
            "structure" => {
                if cur.is_some() {
                    return Err(err("nested structure block".into()));
                }
                let name = words
                    .next()
                    .ok_or_else(|| err("structure needs a name".into()))?;
                cur = Some(PartialStructure::new(name));
            }
            "domain" => {
                let p = cur
                    .as_mut()
                    .ok_or_else(|| err("domain outside structure block".into()))?;
                let n: usize = words
                    .next()
                    .ok_or_else(|| err("domain needs a size".into()))?
                    .parse()
                    .map_err(|_| err("domain size must be a natural number".into()))?;
                p.domain = Some(n);
            }
            "relation" => {
                let p = cur
                    .as_mut()
                    .ok_or_else(|| err("relation outside structure block".into()))?;
                let name = words
                    .next()
                    .ok_or_else(|| err("relation needs a name".into()))?;
                let arity: usize = words
                    .next()
                    .ok_or_else(|| err("relation needs an arity".into()))?
                    .parse()
                    .map_err(|_| err("relation arity must be a natural number".into()))?;
                if p.rels.iter().any(|(n, _, _)| n == name) {
                    return Err(err(format!("relation {name} declared twice")));
                }
                p.rels.push((name.to_string(), arity, Vec::new()));
            }
            "t" => {
                let p = cur
                    .as_mut()
                    .ok_or_else(|| err("tuple outside structure block".into()))?;
                let (_, arity, ts) = p
                    .rels
                    .last_mut()
                    .ok_or_else(|| err("tuple before any relation declaration".into()))?;
                let mut tuple = Vec::new();
                for w in words {
                    tuple.push(
                        w.parse::<Elem>()
                            .map_err(|_| err(format!("bad element {w}")))?,
                    );
                }
                if tuple.len() != *arity {
                    return Err(err(format!(
                        "tuple length {} does not match arity {arity}",
                        tuple.len()
                    )));
                }
                ts.push(tuple);
            }
            "end" => {
                let p = cur
                    .take()
                    .ok_or_else(|| err("end outside structure block".into()))?;
                out.push(p.finish(lineno)?);
            }
            other => return Err(err(format!("unknown directive {other}"))),
        }
    }
    if cur.is_some() {
        return Err(StructureError::Parse {
            line: text.lines().count(),
            msg: "unterminated structure block".into(),
        });
    }
    Ok(out)
}

struct PartialStructure {
    name: String,
    domain: Option<usize>,
    rels: Vec<(String, usize, Vec<Vec<Elem>>)>,
}

impl PartialStructure {
    fn new(name: &str) -> Self {
        PartialStructure {
            name: name.to_string(),
            domain: None,
            rels: Vec::new(),
        }
    }

    fn finish(self, line: usize) -> Result<Structure, StructureError> {
        let domain = self.domain.ok_or(StructureError::Parse {
            line,
            msg: "structure block missing domain".into(),
        })?;
        let sig = Arc::new(Signature::new(
            self.rels
                .iter()
                .map(|(n, a, _)| (n.clone(), *a))
                .collect::<Vec<_>>(),
        ));
        Structure::new(
            self.name,
            sig,
            domain,
            self.rels.into_iter().map(|(_, _, ts)| ts).collect(),
        )
    }
}

/// Default domain-size cap for [`is_isomorphic_bruteforce`].
pub const ISO_CAP_DEFAULT: usize = 12;

/// Decides whether two structures over the same signature are isomorphic, by
/// backtracking over bijections with unary-profile pruning.
///
/// Errors if either domain exceeds `cap` (use [`ISO_CAP_DEFAULT`] for the
/// documented default).
pub fn is_isomorphic_bruteforce(
    a: &Structure,
    b: &Structure,
    cap: usize,
) -> Result<bool, StructureError> {
    if a.signature() != b.signature() {
        return Err(StructureError::SignatureMismatch(
            "isomorphism test needs a shared signature".into(),
        ));
    }
    if a.domain_size() > cap || b.domain_size() > cap {
        return Err(StructureError::IsoCapExceeded(
            a.domain_size().max(b.domain_size()),
            cap,
        ));
    }
    if a.domain_size() != b.domain_size() {
        return Ok(false);
    }
    if a.signature()
        .relations()
        .iter()
        .enumerate()
        .any(|(ri, _)| a.rel_tuples(ri).len() != b.rel_tuples(ri).len())
    {
        return Ok(false);
    }
    let n = a.domain_size();
    // Unary profile: for each element, its membership pattern across unary
    // relations plus per-relation degree counts. Candidates must match.
    let profile = |s: &Structure, e: Elem| -> Vec<usize> {
        let mut p = Vec::new();
        for (ri, decl) in s.signature().relations().iter().enumerate() {
            if decl.arity == 1 {
                p.push(usize::from(s.holds(ri, &[e])));
            } else {
                for pos in 0..decl.arity {
                    p.push(
                        s.rel_tuples(ri)
                            .iter()
                            .filter(|t| t[pos] == e)
                            .count(),
                    );
                }
            }
        }
        p
    };
    let pa: Vec<_> = (0..n as Elem).map(|e| profile(a, e)).collect();
    let pb: Vec<_> = (0..n as Elem).map(|e| profile(b, e)).collect();
    let mut image: Vec<Option<Elem>> = vec![None; n];
    let mut used = vec![false; n];
    fn consistent(a: &Structure, b: &Structure, image: &[Option<Elem>]) -> bool {
        for ri in 0..a.signature().len() {
            for t in a.rel_tuples(ri) {
                if let Some(img) = t
                    .iter()
                    .map(|&e| image[e as usize])
                    .collect::<Option<Vec<_>>>()
                {
                    if !b.holds(ri, &img) {
                        return false;
                    }
                }
            }
            for t in b.rel_tuples(ri) {
                // Preimage check only once the whole tuple is covered by the image.
                let pre: Vec<Option<Elem>> = t
                    .iter()
                    .map(|&e| {
                        image
                            .iter()
                            .position(|&i| i == Some(e))
                            .map(|p| p as Elem)
                    })
                    .collect();
                if let Some(pre) = pre.into_iter().collect::<Option<Vec<_>>>() {
                    if !a.holds(ri, &pre) {
                        return false;
                    }
                }
            }
        }
        true
    }
    fn search(
        a: &Structure,
        b: &Structure,
        pa: &[Vec<usize>],
        pb: &[Vec<usize>],
        image: &mut Vec<Option<Elem>>,
        used: &mut Vec<bool>,
        next: usize,
    ) -> bool {
        if next == image.len() {
            return true;
        }
        for cand in 0..image.len() {
            if used[cand] || pa[next] != pb[cand] {
                continue;
            }
            image[next] = Some(cand as Elem);
            used[cand] = true;
            if consistent(a, b, image) && search(a, b, pa, pb, image, used, next + 1) {
                return true;
            }
            image[next] = None;
            used[cand] = false;
        }
        false
    }
    Ok(search(a, b, &pa, &pb, &mut image, &mut used, 0))
}

/// Canonical representative of a small structure's isomorphism class: the
/// permutation image with the lexicographically least canonical text. Intended
/// for exhaustive sweeps over tiny domains; panics above 8 elements.
pub fn canonical_form(s: &Structure) -> Structure {
    assert!(s.domain_size() <= 8, "canonical_form is for tiny domains");
    let n = s.domain_size();
    let mut best: Option<(String, Structure)> = None;
    let mut perm: Vec<Elem> = (0..n as Elem).collect();
    permute_all(&mut perm, 0, &mut |p| {
        let img = s.permuted(p);
        let text = img.write_text();
        if best.as_ref().map_or(true, |(t, _)| text < *t) {
            best = Some((text, img));
        }
    });
    match best {
        Some((_, s)) => s,
        None => s.clone(),
    }
}

fn permute_all(perm: &mut Vec<Elem>, k: usize, f: &mut impl FnMut(&[Elem])) {
    if k == perm.len() {
        f(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute_all(perm, k + 1, f);
        perm.swap(k, i);
    }
}

/// FNV-1a over a byte slice; the crate's stable digest primitive.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Builds the linear order with `n` elements over signature `{LT/2}`: one
/// tuple `(i, j)` for every `i < j`. The running example pair for the solvers.
pub fn linear_order(n: usize, name: &str) -> Structure {
    let sig = Arc::new(Signature::new([("LT", 2)]));
    let mut tuples = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            tuples.push(vec![i as Elem, j as Elem]);
        }
    }
    Structure::new(name, sig, n, vec![tuples]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Structure {
        let sig = Arc::new(Signature::new([("E", 2), ("R", 1)]));
        Structure::new(
            "demo",
            sig,
            3,
            vec![vec![vec![0, 1], vec![1, 2]], vec![vec![0]]],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_canonical() {
        let s = sample();
        let text = s.write_text();
        let parsed = parse_structures(&text).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0], s);
        assert_eq!(parsed[0].write_text(), text);
    }

    #[test]
    fn parse_accepts_comments_and_blank_lines() {
        let text = "# a pair of chains\nstructure A\ndomain 2\nrelation LT 2\nt 0 1 # edge\nend\n\nstructure B\ndomain 1\nrelation LT 2\nend\n";
        let parsed = parse_structures(text).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].domain_size(), 2);
        assert!(parsed[0].holds(0, &[0, 1]));
        assert_eq!(parsed[1].domain_size(), 1);
    }

    #[test]
    fn parse_rejects_arity_mismatch() {
        let text = "structure A\ndomain 2\nrelation LT 2\nt 0\nend\n";
        assert!(parse_structures(text).is_err());
    }

    #[test]
    fn holds_after_sorting() {
        let sig = Arc::new(Signature::new([("E", 2)]));
        let s = Structure::new("x", sig, 2, vec![vec![vec![1, 0], vec![0, 1], vec![1, 0]]]).unwrap();
        assert_eq!(s.rel_tuples(0).len(), 2);
        assert!(s.holds(0, &[1, 0]));
        assert!(!s.holds(0, &[1, 1]));
    }

    #[test]
    fn isomorphism_finds_relabeling() {
        let s = sample();
        let img = s.permuted(&[2, 0, 1]);
        assert!(is_isomorphic_bruteforce(&s, &img, ISO_CAP_DEFAULT).unwrap());
        let sig = Arc::clone(s.signature());
        let other = Structure::new(
            "demo",
            sig,
            3,
            vec![vec![vec![0, 1], vec![2, 1]], vec![vec![0]]],
        )
        .unwrap();
        assert!(!is_isomorphic_bruteforce(&s, &other, ISO_CAP_DEFAULT).unwrap());
    }

    #[test]
    fn isomorphism_respects_cap() {
        let a = linear_order(13, "long");
        let b = linear_order(13, "long");
        assert!(matches!(
            is_isomorphic_bruteforce(&a, &b, ISO_CAP_DEFAULT),
            Err(StructureError::IsoCapExceeded(13, 12))
        ));
    }

    #[test]
    fn canonical_form_identifies_iso_classes() {
        let s = sample();
        let img = s.permuted(&[1, 2, 0]);
        assert_eq!(canonical_form(&s).write_text(), canonical_form(&img).write_text());
    }

    #[test]
    fn align_pair_pads_missing_symbols() {
        let a = linear_order(2, "A");
        let sig = Arc::new(Signature::new([("R", 1)]));
        let b = Structure::new("B", sig, 2, vec![vec![vec![0]]]).unwrap();
        let (a2, b2) = align_pair(&a, &b).unwrap();
        assert_eq!(a2.signature(), b2.signature());
        assert_eq!(a2.signature().len(), 2);
        let r = a2.signature().index_of("R").unwrap();
        assert!(a2.rel_tuples(r).is_empty());
        assert!(b2.holds(r, &[0]));
    }
}
