//! Algebraic normal form used to prove two expressions equal.
//!
//! `+`, `-`, `*` are normalized into a polynomial over atoms. Floor
//! division, modulo, `min` and `max` become opaque atoms over normalized
//! arguments. Equal normal forms with equal divisor sets imply equal
//! values and equal definedness on every assignment.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::expr::{BinOp, Expr};

type Monomial = Vec<u32>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Poly(BTreeMap<Monomial, i128>);

impl Poly {
    fn constant(c: i128) -> Poly {
        let mut m = BTreeMap::new();
        if c != 0 {
            m.insert(Vec::new(), c);
        }
        Poly(m)
    }

    fn atom(id: u32) -> Poly {
        let mut m = BTreeMap::new();
        m.insert(vec![id], 1);
        Poly(m)
    }

    fn as_constant(&self) -> Option<i128> {
        match self.0.len() {
            0 => Some(0),
            1 => self.0.get(&Vec::new()).copied(),
            _ => None,
        }
    }

    fn add(&self, other: &Poly, sign: i128) -> Poly {
        let mut out = self.0.clone();
        for (m, c) in &other.0 {
            let e = out.entry(m.clone()).or_insert(0);
            *e += sign * c;
            if *e == 0 {
                out.remove(m);
            }
        }
        Poly(out)
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out: BTreeMap<Monomial, i128> = BTreeMap::new();
        for (ma, ca) in &self.0 {
            for (mb, cb) in &other.0 {
                let mut m = ma.clone();
                m.extend_from_slice(mb);
                m.sort_unstable();
                let e = out.entry(m.clone()).or_insert(0);
                *e += ca * cb;
                if *e == 0 {
                    out.remove(&m);
                }
            }
        }
        Poly(out)
    }

    fn divisible_by(&self, c: i128) -> bool {
        self.0.values().all(|v| v % c == 0)
    }

    fn scale_down(&self, c: i128) -> Poly {
        Poly(self.0.iter().map(|(m, v)| (m.clone(), v / c)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum AtomKey {
    Sym(u16),
    App(BinOp, Poly, Poly),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NormalForm {
    pub value: Poly,
    pub divisors: BTreeSet<Poly>,
}

/// Interns atoms so normal forms of different expressions are comparable.
#[derive(Default)]
pub struct Normalizer {
    atoms: HashMap<AtomKey, u32>,
}

impl Normalizer {
    pub fn new() -> Normalizer {
        Normalizer::default()
    }

    fn intern(&mut self, key: AtomKey) -> u32 {
        let next = self.atoms.len() as u32;
        *self.atoms.entry(key).or_insert(next)
    }

    pub fn normalize(&mut self, e: &Expr) -> NormalForm {
        let mut divisors = BTreeSet::new();
        let value = self.go(e, &mut divisors);
        NormalForm { value, divisors }
    }

    fn go(&mut self, e: &Expr, divisors: &mut BTreeSet<Poly>) -> Poly {
        match e {
            Expr::Const(v) => Poly::constant(*v as i128),
            Expr::Sym(i) => Poly::atom(self.intern(AtomKey::Sym(*i))),
            Expr::Bin(op, l, r) => {
                let a = self.go(l, divisors);
                let b = self.go(r, divisors);
                match op {
                    BinOp::Add => a.add(&b, 1),
                    BinOp::Sub => a.add(&b, -1),
                    BinOp::Mul => a.mul(&b),
                    BinOp::Div | BinOp::Mod => {
                        match b.as_constant() {
                            Some(0) => {
                                divisors.insert(b.clone());
                            }
                            Some(c) => {
                                if let Some(ac) = a.as_constant() {
                                    let (x, y) = (ac as i64, c as i64);
                                    let folded = if *op == BinOp::Div {
                                        super::expr::floor_div(x, y)
                                    } else {
                                        super::expr::floor_mod(x, y)
                                    };
                                    if let Some(v) = folded {
                                        return Poly::constant(v as i128);
                                    }
                                }
                                if c == 1 || (c > 0 && a.divisible_by(c)) {
                                    return if *op == BinOp::Div {
                                        a.scale_down(c)
                                    } else {
                                        Poly::constant(0)
                                    };
                                }
                            }
                            None => {
                                divisors.insert(b.clone());
                            }
                        }
                        Poly::atom(self.intern(AtomKey::App(*op, a, b)))
                    }
                    BinOp::Min | BinOp::Max => {
                        if a == b {
                            return a;
                        }
                        if let (Some(x), Some(y)) = (a.as_constant(), b.as_constant()) {
                            return Poly::constant(if *op == BinOp::Min { x.min(y) } else { x.max(y) });
                        }
                        let (a, b) = if a <= b { (a, b) } else { (b, a) };
                        Poly::atom(self.intern(AtomKey::App(*op, a, b)))
                    }
                }
            }
        }
    }

    /// True when both expressions normalize identically, which proves them
    /// equal (including where they are undefined).
    pub fn proves_equal(&mut self, a: &Expr, b: &Expr) -> bool {
        self.normalize(a) == self.normalize(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        Expr::parse_named(s, &names).unwrap()
    }

    #[test]
    fn proves_ring_identities() {
        let mut n = Normalizer::new();
        assert!(n.proves_equal(&p("(a + 1) + 1"), &p("a + 2")));
        assert!(n.proves_equal(&p("a - (b - c)"), &p("(a - b) + c")));
        assert!(n.proves_equal(&p("(a + b) * 2"), &p("a * 2 + b * 2")));
        assert!(n.proves_equal(&p("min(a, b) + 1"), &p("1 + min(b, a)")));
        assert!(n.proves_equal(&p("(a * 2) / 2"), &p("a")));
        assert!(n.proves_equal(&p("(a * 2) % 2 + b"), &p("b")));
        assert!(n.proves_equal(&p("a % 1"), &p("b % 1")));
    }

    #[test]
    fn does_not_merge_different_definedness() {
        let mut n = Normalizer::new();
        // identical values wherever defined, but the left side is undefined at b = 0
        assert!(!n.proves_equal(&p("a + (c / b) - (c / b)"), &p("a")));
        assert!(!n.proves_equal(&p("a / 2"), &p("a - 1")));
    }
}
