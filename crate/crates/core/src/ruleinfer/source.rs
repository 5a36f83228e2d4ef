use std::sync::Arc;
use std::time::Instant;

use crate::exprsynth::enumerate::{eval_tokens_mapped, tokens_to_expr_mapped};
use crate::exprsynth::{Combinations, Expr, HoleSet};

/// The extended expression space 𝓔 for one symbol count: every template
/// (constants included) with every order-preserving injective filling,
/// in template order then lexicographic filling order.
#[derive(Clone)]
pub struct ExprSource {
    set: Arc<HoleSet>,
}

/// One extended expression, borrowed from the source.
pub struct Candidate<'a> {
    pub template: u32,
    pub ops: usize,
    tokens: &'a [u8],
    consts: &'a [i64],
    pub symbols: &'a [u16],
}

impl Candidate<'_> {
    #[inline]
    pub fn eval(&self, env: &[i64]) -> Option<i64> {
        eval_tokens_mapped(self.tokens, self.consts, self.symbols, env)
    }

    pub fn to_expr(&self) -> Expr {
        tokens_to_expr_mapped(self.tokens, self.consts, self.symbols)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimedOut;

impl ExprSource {
    pub fn new(set: Arc<HoleSet>) -> ExprSource {
        ExprSource { set }
    }

    pub fn hole_set(&self) -> &HoleSet {
        &self.set
    }

    /// Number of extended expressions over `n` symbols with at most `max_ops`.
    pub fn count(&self, n: usize, max_ops: usize) -> u128 {
        self.set
            .ids_up_to_ops(max_ops)
            .map(|id| crate::exprsynth::counts::binomial(n as u128, self.set.holes_of(id) as u128))
            .sum()
    }

    /// Calls `f` on each candidate until it returns `true` (stop) or the
    /// deadline passes. Returns whether `f` stopped the walk.
    pub fn walk(
        &self,
        n: usize,
        max_ops: usize,
        deadline: Option<Instant>,
        mut f: impl FnMut(&Candidate) -> bool,
    ) -> Result<bool, TimedOut> {
        let consts = self.set.constants();
        let mut tick = 0u32;
        for id in self.set.ids_up_to_ops(max_ops) {
            let h = self.set.holes_of(id);
            if h > n {
                continue;
            }
            let tokens = self.set.tokens_of(id);
            let ops = self.set.ops_of(id);
            for combo in Combinations::new(n, h) {
                tick = tick.wrapping_add(1);
                if tick.is_multiple_of(256) {
                    if let Some(d) = deadline {
                        if Instant::now() >= d {
                            return Err(TimedOut);
                        }
                    }
                }
                let c = Candidate {
                    template: id,
                    ops,
                    tokens,
                    consts,
                    symbols: &combo,
                };
                if f(&c) {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }
}
