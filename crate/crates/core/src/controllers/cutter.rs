use serde::Serialize;
use serde_json::Value;

use crate::dynamics::{components, Directive, OpinionState, Placement};
use crate::error::Result;
use crate::numeric::Exponent;

use super::{require_m, Controller};

/// Smallest instance for which the chain cutter runs; below it, it stays passive.
pub const CUTTER_MIN_N: usize = 81;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CutSide {
    Left,
    Right,
}

/// One placement that detaches a group of agents from the tracked chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Cut {
    pub t: u64,
    pub side: CutSide,
    /// Inclusive index range of the detached group.
    pub detached: (usize, usize),
}

/// Chain cutter with one strategic agent.
///
/// Alternately detaches `k = floor(n^(1/4))` agents from the left end (agent
/// at the opinion of the k-th tracked agent minus 1) and from the right end
/// (k-th agent from the right plus 1), then stays away once the tracked range
/// is down to pieces of at most `k` agents.
#[derive(Clone, Debug, Serialize)]
pub struct Cutter {
    group: usize,
    lo: usize,
    hi: usize,
    next: CutSide,
    done: bool,
    cuts: Vec<Cut>,
}

impl Cutter {
    pub fn new(n: usize, m: usize) -> Result<Cutter> {
        Cutter::for_range(n, m, 0, n.saturating_sub(1))
    }

    /// Cutter tracking only agents `lo..=hi` of an `n`-agent instance.
    pub fn for_range(n: usize, m: usize, lo: usize, hi: usize) -> Result<Cutter> {
        require_m("cutter", 1, m)?;
        let group = Exponent::new(1, 4)?.floor_pow(n as u64) as usize;
        Ok(Cutter {
            group,
            lo,
            hi,
            next: CutSide::Left,
            done: n < CUTTER_MIN_N || lo > hi,
            cuts: Vec::new(),
        })
    }

    pub fn group_size(&self) -> usize {
        self.group
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Drops already separated pieces of at most `k` agents from both ends of
    /// the tracked range; returns false when nothing worth cutting is left.
    fn trim(&mut self, state: &OpinionState) -> bool {
        let comps = components(state);
        let piece = |i: usize, lo: usize, hi: usize| {
            let c = comps.iter().find(|c| c.contains(i)).expect("every agent has a component");
            (c.left.max(lo), c.right.min(hi))
        };
        loop {
            if self.hi + 1 - self.lo <= self.group {
                return false;
            }
            let (l, r) = piece(self.lo, self.lo, self.hi);
            if r < self.hi && r + 1 - l <= self.group {
                self.lo = r + 1;
                continue;
            }
            let (l, r) = piece(self.hi, self.lo, self.hi);
            if l > self.lo && r + 1 - l <= self.group {
                self.hi = l - 1;
                continue;
            }
            break;
        }
        // a range made of small pieces only needs no more cuts
        let mut i = self.lo;
        while i <= self.hi {
            let (l, r) = piece(i, self.lo, self.hi);
            if r + 1 - l > self.group {
                return true;
            }
            i = r + 1;
        }
        false
    }
}

impl Controller for Cutter {
    fn name(&self) -> &'static str {
        "cutter"
    }

    fn m(&self) -> usize {
        1
    }

    fn decide(&mut self, state: &OpinionState) -> Result<Directive> {
        if self.done || !self.trim(state) {
            self.done = true;
            return Ok(Directive(vec![Placement::Far]));
        }
        let k = self.group;
        let xs = &state.nonstrategic;
        let (position, detached) = match self.next {
            CutSide::Left => {
                let target = self.lo + k - 1;
                let cut = (self.lo, target);
                self.lo = target + 1;
                (xs[target].add_int(-1), cut)
            }
            CutSide::Right => {
                let target = self.hi + 1 - k;
                let cut = (target, self.hi);
                self.hi = target - 1;
                (xs[target].add_int(1), cut)
            }
        };
        self.cuts.push(Cut {
            t: state.t,
            side: self.next,
            detached,
        });
        self.next = match self.next {
            CutSide::Left => CutSide::Right,
            CutSide::Right => CutSide::Left,
        };
        Ok(Directive(vec![Placement::At(position)]))
    }

    fn memory(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::hk_step;
    use crate::instances::gen_equidistant;
    use crate::numeric::{Mode, Num};

    fn q(p: i64, d: i64) -> Num {
        Num::ratio(p, d, Mode::Rational)
    }

    #[test]
    fn first_cut_on_equidistant_81() {
        let s = gen_equidistant(81, Mode::Rational).unwrap().initial_state().unwrap();
        let mut c = Cutter::new(81, 1).unwrap();
        assert_eq!(c.group_size(), 3);
        let d = c.decide(&s).unwrap();
        assert_eq!(d.0, vec![Placement::At(q(1, 1))]);
        let s1 = hk_step(&s, &d).unwrap();
        // detached group 0..=2, remaining chain spaced 1, ..., 1, 1/2
        assert!((&s1.nonstrategic[3] - &s1.nonstrategic[2]) > q(1, 1));
        let gaps: Vec<Num> = s1.nonstrategic[3..].windows(2).map(|w| &w[1] - &w[0]).collect();
        assert!(gaps[..gaps.len() - 1].iter().all(|g| *g == q(1, 1)));
        assert_eq!(gaps.last().unwrap(), &q(1, 2));

        // second cut from the right: k-th agent from the right at t = 1 sits at 78
        let d1 = c.decide(&s1).unwrap();
        assert_eq!(d1.0, vec![Placement::At(q(79, 1))]);
        let s2 = hk_step(&s1, &d1).unwrap();
        assert!((&s2.nonstrategic[78] - &s2.nonstrategic[77]) > q(1, 1));
        let gaps: Vec<Num> = s2.nonstrategic[3..78].windows(2).map(|w| &w[1] - &w[0]).collect();
        assert_eq!(gaps[0], q(1, 2));
        assert!(gaps[1..].iter().all(|g| *g == q(1, 1)));
        assert_eq!(c.cuts().len(), 2);
        assert_eq!(c.cuts()[1].detached, (78, 80));
    }

    #[test]
    fn small_instances_stay_passive() {
        let s = gen_equidistant(80, Mode::Rational).unwrap().initial_state().unwrap();
        let mut c = Cutter::new(80, 1).unwrap();
        assert_eq!(c.decide(&s).unwrap().0, vec![Placement::Far]);
        assert!(c.is_done());
    }

    #[test]
    fn wrong_m() {
        assert!(Cutter::new(100, 0).is_err());
    }
}
