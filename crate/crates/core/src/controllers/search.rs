use serde::Serialize;

use crate::dynamics::{has_converged, hk_step, total_width, Directive, OpinionState, Placement};
use crate::error::{HkError, Result};
use crate::numeric::Num;

use super::Controller;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchLimits {
    pub horizon: usize,
    pub branch_cap: u64,
    pub max_n: usize,
    pub max_m: usize,
    pub max_horizon: usize,
}

impl Default for SearchLimits {
    fn default() -> SearchLimits {
        SearchLimits {
            horizon: 1,
            branch_cap: 1_000_000,
            max_n: 8,
            max_m: 3,
            max_horizon: 4,
        }
    }
}

/// Result of a bounded search from one state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub directive: Directive,
    /// Steps to convergence along the best branch, or `horizon + 1`.
    pub steps: usize,
    /// Total width at the end of the best branch (zero when converged).
    pub width: Num,
    pub converged: bool,
    pub branches: u64,
}

/// Exhaustive look-ahead over the grid `{x - 1, x, x + 1}` of current
/// opinions plus FAR for every strategic agent. Agents are interchangeable,
/// so directives are enumerated as multisets of grid points.
#[derive(Clone, Debug)]
pub struct BoundedSearch {
    m: usize,
    limits: SearchLimits,
}

fn candidates(state: &OpinionState) -> Vec<Placement> {
    let mut values: Vec<Num> = Vec::new();
    for x in &state.nonstrategic {
        values.push(x.add_int(-1));
        values.push(x.clone());
        values.push(x.add_int(1));
    }
    values.sort();
    values.dedup();
    let mut out: Vec<Placement> = values.into_iter().map(Placement::At).collect();
    out.push(Placement::Far);
    out
}

fn multiset_count(choices: u64, m: u64) -> u64 {
    // C(choices + m - 1, m)
    let mut acc: u64 = 1;
    for i in 0..m {
        acc = acc.saturating_mul(choices + i) / (i + 1);
    }
    acc
}

/// Calls `f` on every non-decreasing index tuple of length `m` over `0..choices`.
fn for_each_multiset(choices: usize, m: usize, f: &mut dyn FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut idx = vec![0usize; m];
    loop {
        f(&idx)?;
        let Some(pos) = (0..m).rev().find(|&p| idx[p] + 1 < choices) else {
            return Ok(());
        };
        idx[pos] += 1;
        let v = idx[pos];
        idx[pos + 1..].fill(v);
    }
}

struct Best {
    steps: usize,
    width: Num,
}

impl BoundedSearch {
    pub fn new(m: usize, limits: SearchLimits) -> BoundedSearch {
        BoundedSearch { m, limits }
    }

    fn check(&self, state: &OpinionState) -> Result<()> {
        let l = &self.limits;
        if l.horizon < 1 || l.horizon > l.max_horizon || state.n() > l.max_n || self.m > l.max_m {
            return Err(HkError::InvalidParam(format!(
                "search limited to n <= {}, m <= {}, 1 <= horizon <= {} (got n = {}, m = {}, horizon = {})",
                l.max_n, l.max_m, l.max_horizon, state.n(), self.m, l.horizon
            )));
        }
        let per_step = multiset_count(candidates(state).len() as u64, self.m as u64);
        let branches = per_step.saturating_pow(l.horizon as u32);
        if branches > l.branch_cap {
            return Err(HkError::BudgetExceeded {
                branches,
                cap: l.branch_cap,
            });
        }
        Ok(())
    }

    pub fn search(&self, state: &OpinionState) -> Result<SearchOutcome> {
        if has_converged(state) {
            return Ok(SearchOutcome {
                directive: Directive::all_far(self.m),
                steps: 0,
                width: Num::zero(state.mode),
                converged: true,
                branches: 0,
            });
        }
        self.check(state)?;
        let mut branches = 0u64;
        let mut best: Option<(Best, Directive)> = None;
        let cands = candidates(state);
        for_each_multiset(cands.len(), self.m, &mut |idx| {
            let d = Directive(idx.iter().map(|&i| cands[i].clone()).collect());
            let next = hk_step(state, &d)?;
            let score = self.explore(&next, 1, &mut branches)?;
            if best.as_ref().is_none_or(|(b, _)| better(&score, b)) {
                best = Some((score, d));
            }
            Ok(())
        })?;
        let (score, directive) = best.expect("at least the all-FAR directive");
        Ok(SearchOutcome {
            directive,
            converged: score.steps <= self.limits.horizon,
            steps: score.steps,
            width: score.width,
            branches,
        })
    }

    fn explore(&self, state: &OpinionState, depth: usize, branches: &mut u64) -> Result<Best> {
        if has_converged(state) {
            *branches += 1;
            return Ok(Best {
                steps: depth,
                width: Num::zero(state.mode),
            });
        }
        if depth == self.limits.horizon {
            *branches += 1;
            return Ok(Best {
                steps: depth + 1,
                width: total_width(state),
            });
        }
        let cands = candidates(state);
        let mut best: Option<Best> = None;
        for_each_multiset(cands.len(), self.m, &mut |idx| {
            let d = Directive(idx.iter().map(|&i| cands[i].clone()).collect());
            let next = hk_step(state, &d)?;
            let score = self.explore(&next, depth + 1, branches)?;
            if best.as_ref().is_none_or(|b| better(&score, b)) {
                best = Some(score);
            }
            Ok(())
        })?;
        Ok(best.expect("non-empty candidate set"))
    }
}

fn better(a: &Best, b: &Best) -> bool {
    (a.steps, &a.width) < (b.steps, &b.width)
}

impl Controller for BoundedSearch {
    fn name(&self) -> &'static str {
        "search"
    }

    fn m(&self) -> usize {
        self.m
    }

    fn decide(&mut self, state: &OpinionState) -> Result<Directive> {
        Ok(self.search(state)?.directive)
    }
}
