//! Formal Lie brackets over the generators `{f, g1, ..., gm}`.
//!
//! Generator `0` is the drift `f`; generators `1..=m` are the control fields.
//! Brackets print as fully parenthesized strings such as `[[f,g1],f]`, which
//! is also the form used in reports and fixtures.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest degree [`enumerate_brackets`] will build.
pub const MAX_ENUM_DEGREE: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Node {
    Leaf(usize),
    Pair(Box<FormalBracket>, Box<FormalBracket>),
}

/// A binary bracket tree with cached degree and per-generator letter counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FormalBracket {
    node: Node,
    degree: usize,
    counts: Vec<usize>,
}

/// Sussmann's parity classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BracketClass {
    Good,
    Bad,
}

impl FormalBracket {
    /// Generator `index` (0 = drift) in an alphabet with `m` controls.
    pub fn leaf(index: usize, m: usize) -> Self {
        assert!(index <= m, "generator {index} out of range for {m} controls");
        let mut counts = vec![0; m + 1];
        counts[index] = 1;
        FormalBracket {
            node: Node::Leaf(index),
            degree: 1,
            counts,
        }
    }

    pub fn drift(m: usize) -> Self {
        Self::leaf(0, m)
    }

    pub fn bracket(left: FormalBracket, right: FormalBracket) -> Self {
        assert_eq!(
            left.counts.len(),
            right.counts.len(),
            "brackets over different alphabets"
        );
        let counts = left
            .counts
            .iter()
            .zip(&right.counts)
            .map(|(a, b)| a + b)
            .collect();
        FormalBracket {
            degree: left.degree + right.degree,
            counts,
            node: Node::Pair(Box::new(left), Box::new(right)),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Occurrences of each generator, indexed like the generators.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Number of control generators in the alphabet.
    pub fn controls(&self) -> usize {
        self.counts.len() - 1
    }

    /// `Some(index)` for a generator, `None` for a bracket.
    pub fn as_leaf(&self) -> Option<usize> {
        match self.node {
            Node::Leaf(i) => Some(i),
            Node::Pair(..) => None,
        }
    }

    /// `Some((left, right))` for a bracket, `None` for a generator.
    pub fn children(&self) -> Option<(&FormalBracket, &FormalBracket)> {
        match &self.node {
            Node::Leaf(_) => None,
            Node::Pair(a, b) => Some((a, b)),
        }
    }

    pub fn class(&self) -> BracketClass {
        classify(self)
    }

    /// Parses the canonical form, e.g. `[[f,g1],g2]`, for an alphabet with
    /// `m` controls.
    pub fn parse(text: &str, m: usize) -> Result<Self> {
        let mut parser = Parser {
            bytes: text.as_bytes(),
            pos: 0,
            m,
        };
        let b = parser.bracket()?;
        if parser.pos != parser.bytes.len() {
            return Err(parser.error("trailing characters"));
        }
        Ok(b)
    }
}

fn generator_name(i: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if i == 0 {
        write!(f, "f")
    } else {
        write!(f, "g{i}")
    }
}

impl fmt::Display for FormalBracket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Node::Leaf(i) => generator_name(*i, f),
            Node::Pair(a, b) => write!(f, "[{a},{b}]"),
        }
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    m: usize,
}

impl Parser<'_> {
    fn error(&self, what: &str) -> Error {
        Error::InvalidParameter(format!("bracket syntax: {what} at byte {}", self.pos))
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn bracket(&mut self) -> Result<FormalBracket> {
        match self.peek() {
            Some(b'[') => {
                self.pos += 1;
                let a = self.bracket()?;
                self.expect(b',')?;
                let b = self.bracket()?;
                self.expect(b']')?;
                Ok(FormalBracket::bracket(a, b))
            }
            Some(b'f') => {
                self.pos += 1;
                Ok(FormalBracket::leaf(0, self.m))
            }
            Some(b'g') => {
                self.pos += 1;
                let start = self.pos;
                while matches!(self.peek(), Some(b'0'..=b'9')) {
                    self.pos += 1;
                }
                let digits = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("");
                let i: usize = digits.parse().map_err(|_| self.error("bad control index"))?;
                if i == 0 || i > self.m {
                    return Err(self.error("control index out of range"));
                }
                Ok(FormalBracket::leaf(i, self.m))
            }
            _ => Err(self.error("unexpected character")),
        }
    }
}

/// Parses with the alphabet size inferred from the largest control index.
impl FromStr for FormalBracket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let m = s
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter_map(|tok| tok.strip_prefix('g'))
            .filter_map(|d| d.parse::<usize>().ok())
            .max()
            .unwrap_or(0);
        FormalBracket::parse(s, m)
    }
}

/// Bad iff the drift occurs an odd number of times and every control occurs
/// an even number of times (zero included).
pub fn classify(b: &FormalBracket) -> BracketClass {
    let (drift, controls) = b.counts.split_first().expect("alphabet has a drift");
    if drift % 2 == 1 && controls.iter().all(|c| c % 2 == 0) {
        BracketClass::Bad
    } else {
        BracketClass::Good
    }
}

/// Dimension of the degree-`n` layer of the free Lie algebra on `r`
/// generators (Witt's formula).
pub fn witt_dimension(r: usize, n: usize) -> usize {
    fn mobius(mut n: usize) -> i64 {
        let mut result = 1;
        let mut p = 2;
        while p * p <= n {
            if n.is_multiple_of(p) {
                n /= p;
                if n.is_multiple_of(p) {
                    return 0;
                }
                result = -result;
            }
            p += 1;
        }
        if n > 1 {
            result = -result;
        }
        result
    }
    let total: i64 = (1..=n)
        .filter(|d| n.is_multiple_of(*d))
        .map(|d| mobius(d) * (r as i64).pow((n / d) as u32))
        .sum();
    (total / n as i64) as usize
}

/// Philip Hall basis of the free Lie algebra on `f, g1..gm`, degrees `1..=k`.
///
/// Elements are basic commutators: `[a, b]` with `a > b` and, when
/// `a = [u, v]`, `v <= b`. The order is by degree, and within a degree the
/// element generated first is the greatest; the generators are ordered
/// `f > g1 > ... > gm`. That choice makes the familiar brackets `[f,gi]` and
/// `[[f,gi],gi]` basis elements verbatim. Output is listed by degree, then in
/// generation order.
pub fn enumerate_brackets(m: usize, k: usize) -> Result<Vec<FormalBracket>> {
    if m == 0 {
        return Err(Error::InvalidParameter("at least one control field is required".into()));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("degree bound must be at least 1".into()));
    }
    if k > MAX_ENUM_DEGREE {
        return Err(Error::DegreeTooLarge {
            degree: k,
            limit: MAX_ENUM_DEGREE,
        });
    }

    struct Entry {
        bracket: FormalBracket,
        // (left, right) indices into `entries`
        factors: Option<(usize, usize)>,
    }

    let mut entries: Vec<Entry> = (0..=m)
        .map(|i| Entry {
            bracket: FormalBracket::leaf(i, m),
            factors: None,
        })
        .collect();

    // a > b in the Hall order
    let greater = |entries: &[Entry], a: usize, b: usize| -> bool {
        let (da, db) = (entries[a].bracket.degree, entries[b].bracket.degree);
        da > db || (da == db && a < b)
    };

    for d in 2..=k {
        let existing = entries.len();
        let mut layer = Vec::new();
        for a in 0..existing {
            let da = entries[a].bracket.degree;
            if da >= d {
                continue;
            }
            for b in 0..existing {
                if entries[b].bracket.degree != d - da || !greater(&entries, a, b) {
                    continue;
                }
                let admissible = match entries[a].factors {
                    None => true,
                    Some((_, v)) => !greater(&entries, v, b),
                };
                if admissible {
                    layer.push((a, b));
                }
            }
        }
        for (a, b) in layer {
            let bracket =
                FormalBracket::bracket(entries[a].bracket.clone(), entries[b].bracket.clone());
            entries.push(Entry {
                bracket,
                factors: Some((a, b)),
            });
        }
    }

    Ok(entries.into_iter().map(|e| e.bracket).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn parse(s: &str, m: usize) -> FormalBracket {
        FormalBracket::parse(s, m).unwrap()
    }

    /// Independent count of the degree-n layer: Lyndon words of length n
    /// over r letters, by brute force.
    fn lyndon_count(r: usize, n: usize) -> usize {
        let total = r.pow(n as u32);
        let mut count = 0;
        for code in 0..total {
            let mut w = vec![0; n];
            let mut c = code;
            for x in w.iter_mut().rev() {
                *x = c % r;
                c /= r;
            }
            // strictly smaller than every proper rotation
            if (1..n).all(|s| {
                let rot: Vec<usize> = w[s..].iter().chain(&w[..s]).copied().collect();
                w < rot
            }) {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify(&parse("f", 1)), BracketClass::Bad);
        assert_eq!(classify(&parse("g1", 1)), BracketClass::Good);
        assert_eq!(classify(&parse("[f,g1]", 1)), BracketClass::Good);
        assert_eq!(classify(&parse("[[f,g1],g1]", 1)), BracketClass::Bad);
        assert_eq!(classify(&parse("[[f,g1],f]", 1)), BracketClass::Good);
        assert_eq!(classify(&parse("[[f,g1],g2]", 2)), BracketClass::Good);
        assert_eq!(classify(&parse("[[[f,g1],g1],[f,g2]]", 2)), BracketClass::Good);
    }

    #[test]
    fn classification_depends_only_on_counts() {
        let a = parse("[[f,g1],g1]", 1);
        let b = parse("[g1,[g1,f]]", 1);
        assert_eq!(a.counts(), b.counts());
        assert_eq!(classify(&a), classify(&b));
    }

    #[test]
    fn degree_examples() {
        assert_eq!(parse("g2", 2).degree(), 1);
        assert_eq!(parse("[f,g1]", 1).degree(), 2);
        assert_eq!(parse("[[f,g1],f]", 1).degree(), 3);
        let b = parse("[[f,g1],[g2,f]]", 2);
        assert_eq!(b.degree(), 4);
        assert_eq!(b.counts(), &[2, 1, 1]);
    }

    #[test]
    fn enumeration_small_cases() {
        let k1: Vec<String> = enumerate_brackets(1, 1).unwrap().iter().map(|b| b.to_string()).collect();
        assert_eq!(k1, ["f", "g1"]);
        let k2: Vec<String> = enumerate_brackets(1, 2).unwrap().iter().map(|b| b.to_string()).collect();
        assert_eq!(k2, ["f", "g1", "[f,g1]"]);
        let m2: Vec<String> = enumerate_brackets(2, 2)
            .unwrap()
            .iter()
            .filter(|b| b.degree() == 2)
            .map(|b| b.to_string())
            .collect();
        assert_eq!(m2, ["[f,g1]", "[f,g2]", "[g1,g2]"]);
    }

    #[test]
    fn degree_three_contains_the_classic_brackets() {
        let all: HashSet<String> = enumerate_brackets(6, 3).unwrap().iter().map(|b| b.to_string()).collect();
        for i in 1..=6 {
            assert!(all.contains(&format!("[[f,g{i}],g{i}]")));
            assert!(all.contains(&format!("[[f,g{i}],f]")));
        }
    }

    #[test]
    fn layer_sizes_match_lyndon_counts() {
        for m in 1..=6 {
            let k = if m <= 2 { 5 } else { 3 };
            let basis = enumerate_brackets(m, k).unwrap();
            for d in 1..=k {
                let layer = basis.iter().filter(|b| b.degree() == d).count();
                assert_eq!(layer, lyndon_count(m + 1, d), "m={m} d={d}");
                assert_eq!(layer, witt_dimension(m + 1, d));
            }
        }
    }

    #[test]
    fn no_duplicates_and_sorted_by_degree() {
        let basis = enumerate_brackets(3, 4).unwrap();
        let set: HashSet<String> = basis.iter().map(|b| b.to_string()).collect();
        assert_eq!(set.len(), basis.len());
        assert!(basis.windows(2).all(|w| w[0].degree() <= w[1].degree()));
    }

    #[test]
    fn degree_guard() {
        assert!(matches!(
            enumerate_brackets(1, 6),
            Err(Error::DegreeTooLarge { degree: 6, limit: 5 })
        ));
        assert!(enumerate_brackets(0, 2).is_err());
        assert!(enumerate_brackets(2, 0).is_err());
    }

    #[test]
    fn parse_errors() {
        assert!(FormalBracket::parse("[f,g3]", 2).is_err());
        assert!(FormalBracket::parse("[f,g1", 2).is_err());
        assert!(FormalBracket::parse("[f,g1]x", 2).is_err());
        assert!(FormalBracket::parse("h", 2).is_err());
        assert_eq!("[[f,g12],g1]".parse::<FormalBracket>().unwrap().controls(), 12);
    }

    proptest::proptest! {
        #[test]
        fn display_parse_roundtrip(idx in 0usize..500) {
            let basis = enumerate_brackets(3, 4).unwrap();
            let b = &basis[idx % basis.len()];
            let back = FormalBracket::parse(&b.to_string(), 3).unwrap();
            proptest::prop_assert_eq!(&back, b);
            proptest::prop_assert_eq!(back.counts().iter().sum::<usize>(), b.degree());
        }
    }
}
