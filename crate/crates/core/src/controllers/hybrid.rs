//! Splitting / compression / cleanup strategy for `ceil(n^alpha) + 12`
//! strategic agents.
//!
//! Phase 1 walks the agents left to right. Wherever a window of length 4
//! holds few agents it splits the component with `3k` agents on each side of
//! a chosen gap; dense windows are marked instead. Phase 2 compresses the
//! components holding marked (or dense) agents with all strategic agents at
//! `x_left + 1`. Phase 3 finishes the remaining narrow components, several per
//! step when the budget allows.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Serialize;
use serde_json::{json, Value};

use crate::dynamics::{components, Component, Directive, OpinionState, Placement};
use crate::error::{HkError, Result};
use crate::numeric::{Exponent, Mode, Num};

use super::{require_m, Controller};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum HybridPhase {
    Split,
    Compress,
    Cleanup,
}

/// One executed split: `3k` agents at `x_a - 1` and `3k` at `x_b + 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitRecord {
    pub t: u64,
    pub a: usize,
    pub b: usize,
    pub k: usize,
    pub left_position: Num,
    pub right_position: Num,
}

#[derive(Clone, Debug)]
pub struct Hybrid {
    n: usize,
    m: usize,
    alpha: Exponent,
    /// `n^alpha`, rounded down to a multiple of 2^-20.
    n_alpha: BigRational,
    phase: HybridPhase,
    h: usize,
    marked: Vec<bool>,
    dense_set: Option<Vec<bool>>,
    splits: Vec<SplitRecord>,
}

enum Step1 {
    /// Budget exhausted for this time step.
    NextStep,
    Stop,
}

impl Hybrid {
    pub fn required_m(n: usize, alpha: Exponent) -> usize {
        alpha.ceil_pow(n as u64) as usize + 12
    }

    pub fn new(n: usize, m: usize, alpha: Exponent) -> Result<Hybrid> {
        if alpha.num() > alpha.den() {
            return Err(HkError::InvalidParam(format!("alpha = {alpha} exceeds 1")));
        }
        require_m("hybrid", Hybrid::required_m(n, alpha), m)?;
        Ok(Hybrid {
            n,
            m,
            alpha,
            n_alpha: alpha.approx_pow(n as u64),
            phase: HybridPhase::Split,
            h: 0,
            marked: vec![false; n],
            dense_set: None,
            splits: Vec::new(),
        })
    }

    pub fn phase(&self) -> HybridPhase {
        self.phase
    }

    pub fn splits(&self) -> &[SplitRecord] {
        &self.splits
    }

    pub fn marked(&self) -> &[bool] {
        &self.marked
    }

    fn ratio(&self, scale_num: i64, scale_den: i64, offset: i64) -> BigRational {
        (&self.n_alpha + BigRational::from_integer(offset.into()))
            * BigRational::new(scale_num.into(), scale_den.into())
    }

    /// Census threshold `(n^alpha + 12) / 12`.
    fn census_threshold(&self) -> BigRational {
        self.ratio(1, 12, 12)
    }

    fn exceeds(count: usize, bound: &BigRational) -> bool {
        BigRational::from_integer(BigInt::from(count)) > *bound
    }

    /// Phase 1 from label (1.2) until the step budget runs out or the scan ends.
    fn split_step(
        &mut self,
        state: &OpinionState,
        out: &mut Vec<(Num, usize)>,
    ) -> Result<Step1> {
        let xs = &state.nonstrategic;
        let comps = components(state);
        let threshold = self.census_threshold();
        let mut budget = self.m;
        let comp_of = |i: usize| -> &Component {
            let idx = comps.partition_point(|c| c.right < i);
            &comps[idx]
        };
        let mut h = self.h;
        'l12: loop {
            if h >= self.n {
                self.h = h;
                return Ok(Step1::Stop);
            }
            let c = comp_of(h);
            // (1.3)
            'l13: loop {
                if xs[h].add_int(4) >= c.right_opinion {
                    h = c.right + 1;
                    continue 'l12;
                }
                // (1.4) / (1.5)
                let k = loop {
                    let lo = &xs[h];
                    let hi = lo.add_int(4);
                    let end = c.left + xs[c.left..=c.right].partition_point(|x| x <= &hi);
                    let start = c.left + xs[c.left..=c.right].partition_point(|x| x < lo);
                    let k = end - start;
                    if !Hybrid::exceeds(k, &threshold) {
                        break k;
                    }
                    self.marked[h] = true;
                    if h + 1 <= c.right && xs[h + 1].add_int(4) <= c.right_opinion {
                        h += 1;
                    } else {
                        h = c.right + 1;
                        continue 'l12;
                    }
                };
                // (1.6)
                let (a, b) = split_pair(xs, c, h).ok_or_else(|| {
                    HkError::Internal(format!(
                        "no admissible split pair near agent {h} at t = {}",
                        state.t
                    ))
                })?;
                // (1.7)
                if budget < 6 * k {
                    self.h = h;
                    return Ok(Step1::NextStep);
                }
                // (1.8) / (1.9)
                let left_position = xs[a].add_int(-1);
                let right_position = xs[b].add_int(1);
                out.push((left_position.clone(), 3 * k));
                out.push((right_position.clone(), 3 * k));
                budget -= 6 * k;
                self.splits.push(SplitRecord {
                    t: state.t,
                    a,
                    b,
                    k,
                    left_position,
                    right_position,
                });
                // (1.10)
                let reach = xs[b].add_int(4);
                if reach >= c.right_opinion {
                    h = c.right + 1;
                    continue 'l12;
                }
                h = c.left + xs[c.left..=c.right].partition_point(|x| x <= &reach);
                continue 'l13;
            }
        }
    }

    fn compress_target(&mut self, state: &OpinionState) -> Option<Num> {
        let comps = components(state);
        let one = Num::one(state.mode);
        if self.dense_set.is_none() {
            let density = self.ratio(1, 144, 0);
            let mut set = vec![false; self.n];
            for c in &comps {
                let has_mark = c.members().any(|i| self.marked[i]);
                let dense = c.width.is_zero() || {
                    let width = width_rational(&c.width);
                    BigRational::from_integer(BigInt::from(c.len())) >= &density * width
                };
                if has_mark || dense {
                    set[c.members()].fill(true);
                }
            }
            self.dense_set = Some(set);
        }
        let set = self.dense_set.as_ref().expect("set just built");
        comps
            .iter()
            .find(|c| c.width > one && c.members().any(|i| set[i]))
            .map(|c| c.left_opinion.add_int(1))
    }

    fn cleanup(&self, state: &OpinionState, out: &mut Vec<(Num, usize)>) {
        let comps = components(state);
        let one = Num::one(state.mode);
        let eight = Num::int(8, state.mode);
        let size_cap = self.ratio(1, 2, 0);
        let mut budget = self.m;
        for c in comps.iter().filter(|c| c.width > one) {
            let fits = c.width <= eight && !Hybrid::exceeds(c.len(), &size_cap);
            if fits && c.len() <= budget {
                out.push((c.left_opinion.add_int(1), c.len()));
                budget -= c.len();
            }
        }
        if out.is_empty() {
            // a wide component outside the cleanup bounds: compress it with everyone
            if let Some(c) = comps.iter().find(|c| c.width > one) {
                out.push((c.left_opinion.add_int(1), self.m));
            }
        }
    }
}

fn width_rational(w: &Num) -> BigRational {
    match w {
        Num::Rational(r) => r.clone(),
        Num::Float(f) => BigRational::from_float(*f).expect("finite width"),
    }
}

/// Widest gap between consecutive distinct opinions inside
/// `[x_h + 1, x_h + 3]`, ties to the leftmost; `a` is the last agent at the
/// lower value and `b = a + 1` the first at the upper value.
fn split_pair(xs: &[Num], c: &Component, h: usize) -> Option<(usize, usize)> {
    let lo = xs[h].add_int(1);
    let hi = xs[h].add_int(3);
    let start = c.left + xs[c.left..=c.right].partition_point(|x| x < &lo);
    let end = c.left + xs[c.left..=c.right].partition_point(|x| x <= &hi);
    let mut best: Option<(Num, usize)> = None;
    for i in start..end.saturating_sub(1) {
        if xs[i] == xs[i + 1] {
            continue;
        }
        let gap = &xs[i + 1] - &xs[i];
        if best.as_ref().is_none_or(|(g, _)| gap > *g) {
            best = Some((gap, i));
        }
    }
    best.map(|(_, a)| (a, a + 1))
}

fn directive_from(groups: &[(Num, usize)], m: usize) -> Directive {
    let mut out = Vec::with_capacity(m);
    for (p, count) in groups {
        out.extend(std::iter::repeat_n(Placement::At(p.clone()), *count));
    }
    debug_assert!(out.len() <= m);
    out.resize(m, Placement::Far);
    Directive(out)
}

impl Controller for Hybrid {
    fn name(&self) -> &'static str {
        "hybrid"
    }

    fn m(&self) -> usize {
        self.m
    }

    fn decide(&mut self, state: &OpinionState) -> Result<Directive> {
        let mut groups = Vec::new();
        if self.phase == HybridPhase::Split {
            match self.split_step(state, &mut groups)? {
                Step1::NextStep => return Ok(directive_from(&groups, self.m)),
                Step1::Stop => {
                    self.phase = HybridPhase::Compress;
                    if !groups.is_empty() {
                        return Ok(directive_from(&groups, self.m));
                    }
                }
            }
        }
        if self.phase == HybridPhase::Compress {
            match self.compress_target(state) {
                Some(p) => return Ok(directive_from(&[(p, self.m)], self.m)),
                None => self.phase = HybridPhase::Cleanup,
            }
        }
        self.cleanup(state, &mut groups);
        Ok(directive_from(&groups, self.m))
    }

    fn memory(&self) -> Value {
        json!({
            "alpha": self.alpha.to_string(),
            "phase": self.phase,
            "h": self.h,
            "marked": self.marked.iter().filter(|&&b| b).count(),
            "splits": self.splits.len(),
        })
    }
}

impl Hybrid {
    /// Convenience for tests and tools: float or rational `n^alpha` as used here.
    pub fn n_alpha(&self, mode: Mode) -> Num {
        Num::from_rational(&self.n_alpha, mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::hk_step;
    use crate::instances::gen_equidistant;

    fn q(p: i64, d: i64) -> Num {
        Num::ratio(p, d, Mode::Rational)
    }

    fn one() -> Exponent {
        Exponent::new(1, 1).unwrap()
    }

    #[test]
    fn dense_chain_is_marked_not_split() {
        let s = gen_equidistant(20, Mode::Rational)
            .unwrap()
            .with_m(32)
            .initial_state()
            .unwrap();
        let mut c = Hybrid::new(20, 32, one()).unwrap();
        let d = c.decide(&s).unwrap();
        assert!(c.splits().is_empty());
        // h walks 0..=15 (x_{h+1} + 4 <= 19 fails at h = 15)
        assert_eq!(c.marked().iter().filter(|&&b| b).count(), 16);
        assert_eq!(c.phase(), HybridPhase::Compress);
        // compression: everyone at x_left + 1
        assert_eq!(d.0, vec![Placement::At(q(1, 1)); 32]);
    }

    #[test]
    fn sparse_chain_is_split_in_batches() {
        let s = gen_equidistant(60, Mode::Rational)
            .unwrap()
            .with_m(72)
            .initial_state()
            .unwrap();
        let mut c = Hybrid::new(60, 72, one()).unwrap();
        let d = c.decide(&s).unwrap();
        let mut placed: Vec<Num> = d.0.iter().filter_map(|p| p.value().cloned()).collect();
        placed.dedup();
        assert_eq!(placed, vec![q(0, 1), q(3, 1), q(7, 1), q(10, 1)]);
        assert_eq!(d.active(), 60);
        assert_eq!(c.splits().len(), 2);
        let s1 = hk_step(&s, &d).unwrap();
        for sp in c.splits() {
            assert!(&s1.nonstrategic[sp.b] - &s1.nonstrategic[sp.a] > q(1, 1));
        }
        assert_eq!(s1.nonstrategic[1], q(1, 6));
        assert_eq!(s1.nonstrategic[2], q(17, 6));
    }

    #[test]
    fn wrong_m_rejected() {
        assert!(matches!(Hybrid::new(60, 71, one()), Err(HkError::WrongM { .. })));
        assert!(Hybrid::new(60, 20, "1/2".parse().unwrap()).is_ok());
    }

    #[test]
    fn converged_input_stays_far() {
        let s = OpinionState::new(vec![q(0, 1), q(0, 1), q(5, 1)], 15, Mode::Rational).unwrap();
        let mut c = Hybrid::new(3, 15, one()).unwrap();
        for _ in 0..3 {
            assert_eq!(c.decide(&s).unwrap(), Directive::all_far(15));
        }
    }
}
