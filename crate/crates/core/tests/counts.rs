use rulefuzz::exprsynth::counts::{count_rarity, count_unpruned, extended_count};
use rulefuzz::exprsynth::{enumerate_hole_exprs, GrammarConfig, PruningConfig};

/// Unpruned search-space sizes for 1..6 symbols, at most 5 operators, two
/// constants and seven operators, as printed with three significant digits.
const PAPER_UNPRUNED: [f64; 6] = [4.77e8, 2.88e9, 1.11e10, 3.32e10, 8.36e10, 1.86e11];

#[test]
fn unpruned_counts_match_the_published_sizes() {
    for (n, want) in (1..=6).zip(PAPER_UNPRUNED) {
        let got = count_unpruned(n, 5, 2, 7) as f64;
        // half a unit in the third significant digit
        let tol = 0.5 * 10f64.powi(want.log10().floor() as i32 - 2);
        assert!((got - want).abs() <= tol, "{n} symbols: {got:e} vs {want:e}");
    }
}

#[test]
fn closed_forms_agree_with_enumeration_at_two_operators() {
    let none = enumerate_hole_exprs(&GrammarConfig::with_max_ops(2), &PruningConfig::none());
    let rarity = enumerate_hole_exprs(&GrammarConfig::with_max_ops(2), &PruningConfig::rarity_only());
    for n in 1..=6 {
        assert_eq!(extended_count(&none, n), count_unpruned(n, 2, 2, 7), "none, {n} symbols");
        assert_eq!(extended_count(&rarity, n), count_rarity(n, 2, 2, 7), "rarity, {n} symbols");
    }
}
