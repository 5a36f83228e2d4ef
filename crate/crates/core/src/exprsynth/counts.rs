//! Search-space sizes for the pruning ablation.
//!
//! Unpruned and rarity-only sizes have closed forms; equivalence-pruned
//! sizes come from extending an enumerated template set.

use super::enumerate::{Combinations, HoleSet};

pub fn catalan(m: u32) -> u128 {
    let mut c: u128 = 1;
    for k in 0..m as u128 {
        c = c * 2 * (2 * k + 1) / (k + 2);
    }
    c
}

pub fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let mut r = 1u128;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Trees with at most `max_ops` operators over `n` symbols and `c` constants
/// that mention at least one symbol.
pub fn count_unpruned(n: u32, max_ops: u32, c: u32, ops: u32) -> u128 {
    (0..=max_ops)
        .map(|m| {
            let leaves = (n + c) as u128;
            catalan(m)
                * (ops as u128).pow(m)
                * (leaves.pow(m + 1) - (c as u128).pow(m + 1))
        })
        .sum()
}

/// Trees where every symbol occurs at most once, at least one symbol occurs,
/// and no operator has a constant-only subtree.
pub fn count_rarity(n: u32, max_ops: u32, c: u32, ops: u32) -> u128 {
    let m_max = max_ops as usize;
    let k_max = m_max + 1;
    // shapes[m][k]: trees with m operators and k symbol positions
    let mut shapes = vec![vec![0u128; k_max + 1]; m_max + 1];
    shapes[0][0] = c as u128;
    shapes[0][1] = 1;
    for m in 1..=m_max {
        for a in 0..m {
            let b = m - 1 - a;
            for k1 in 0..=a + 1 {
                for k2 in 0..=b + 1 {
                    if k1 + k2 == 0 {
                        continue;
                    }
                    shapes[m][k1 + k2] += ops as u128 * shapes[a][k1] * shapes[b][k2];
                }
            }
        }
    }
    let mut total = 0u128;
    for row in &shapes {
        for (k, &count) in row.iter().enumerate().skip(1) {
            if k as u32 > n {
                break;
            }
            // ordered choice of distinct symbols for the k positions
            let arrangements: u128 = (0..k as u128).map(|i| n as u128 - i).product();
            total += count * arrangements;
        }
    }
    total
}

/// Size of the concrete expression space obtained by extending `set` to
/// `n` symbols (templates without holes are not counted).
pub fn extended_count(set: &HoleSet, n: u32) -> u128 {
    (1..=n.min(6) as usize)
        .map(|h| set.count_with_holes(h) as u128 * binomial(n as u128, h as u128))
        .sum()
}

/// Same as [`extended_count`] but materializing each combination; used to
/// cross-check the closed forms on small inputs.
pub fn extended_count_slow(set: &HoleSet, n: u32) -> u128 {
    let mut total = 0u128;
    for id in set.ids() {
        let h = set.holes_of(id);
        if h == 0 {
            continue;
        }
        total += Combinations::new(n as usize, h).count() as u128;
    }
    total
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PruningRow {
    pub symbols: u32,
    pub none: u128,
    pub equivalence: u128,
    pub rarity: u128,
    pub both: u128,
}

impl PruningRow {
    pub fn is_monotone(&self) -> bool {
        self.both <= self.rarity
            && self.rarity <= self.none
            && self.both <= self.equivalence
            && self.equivalence <= self.none
    }

    /// Fraction of the unpruned space that survives both prunings.
    pub fn surviving_fraction(&self) -> f64 {
        self.both as f64 / self.none as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprsynth::{enumerate_hole_exprs, GrammarConfig, PruningConfig};

    #[test]
    fn catalan_numbers() {
        let c: Vec<u128> = (0..6).map(catalan).collect();
        assert_eq!(c, vec![1, 1, 2, 5, 14, 42]);
    }

    #[test]
    fn unpruned_matches_template_enumeration() {
        let g = GrammarConfig::with_max_ops(2);
        let set = enumerate_hole_exprs(&g, &PruningConfig::none());
        for n in 1..=4 {
            assert_eq!(extended_count(&set, n), count_unpruned(n, 2, 2, 7), "n={n}");
            assert_eq!(extended_count_slow(&set, n), extended_count(&set, n));
        }
    }

    #[test]
    fn rarity_matches_template_enumeration() {
        let g = GrammarConfig::with_max_ops(3);
        let set = enumerate_hole_exprs(&g, &PruningConfig::rarity_only());
        for n in 1..=6 {
            assert_eq!(extended_count(&set, n), count_rarity(n, 3, 2, 7), "n={n}");
        }
    }
}
