use serde_json::{json, Value};

use crate::dynamics::{Directive, OpinionState, Placement};
use crate::error::{HkError, Result};
use crate::numeric::Num;

use super::{require_m, Controller, Cutter};

/// Two opening placements for the dumbbell configuration (at 2, then at
/// `k - 2`), after which the middle chain of agents `k+4 ..= 2k-4` (0-based)
/// is handed to the chain cutter.
#[derive(Clone, Debug)]
pub struct DumbbellTwoShot {
    k: usize,
    cutter: Cutter,
}

impl DumbbellTwoShot {
    pub fn new(k: usize, n: usize, m: usize) -> Result<DumbbellTwoShot> {
        require_m("dumbbell", 1, m)?;
        if k < 10 || n != 3 * k + 1 {
            return Err(HkError::InvalidParam(format!(
                "dumbbell controller needs a dumbbell instance with k >= 10 (k = {k}, n = {n})"
            )));
        }
        Ok(DumbbellTwoShot {
            k,
            cutter: Cutter::for_range(n, 1, k + 4, 2 * k - 4)?,
        })
    }

    pub fn cutter(&self) -> &Cutter {
        &self.cutter
    }
}

impl Controller for DumbbellTwoShot {
    fn name(&self) -> &'static str {
        "dumbbell"
    }

    fn m(&self) -> usize {
        1
    }

    fn decide(&mut self, state: &OpinionState) -> Result<Directive> {
        match state.t {
            0 => Ok(Directive(vec![Placement::At(Num::int(2, state.mode))])),
            1 => Ok(Directive(vec![Placement::At(Num::int(
                self.k as i64 - 2,
                state.mode,
            ))])),
            _ => self.cutter.decide(state),
        }
    }

    fn memory(&self) -> Value {
        json!({ "k": self.k, "cutter": self.cutter.memory() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::hk_step;
    use crate::instances::gen_dumbbell;
    use crate::numeric::Mode;

    fn q(p: i64, d: i64) -> Num {
        Num::ratio(p, d, Mode::Rational)
    }

    #[test]
    fn opening_placements_for_k12() {
        let inst = gen_dumbbell(12, Mode::Rational).unwrap();
        let mut c = DumbbellTwoShot::new(12, inst.n, 1).unwrap();
        let s0 = inst.initial_state().unwrap();
        let d0 = c.decide(&s0).unwrap();
        assert_eq!(d0.0, vec![Placement::At(q(2, 1))]);
        let s1 = hk_step(&s0, &d0).unwrap();
        // 1-based x_{k+3}(1) = 2
        assert_eq!(s1.nonstrategic[14], q(2, 1));
        let d1 = c.decide(&s1).unwrap();
        assert_eq!(d1.0, vec![Placement::At(q(10, 1))]);
        let s2 = hk_step(&s1, &d1).unwrap();
        // x_{2k-1}(2) = k - 2 and x_{2k}(2) = k - 5/4
        assert_eq!(s2.nonstrategic[22], q(10, 1));
        assert_eq!(s2.nonstrategic[23], q(43, 4));
        // middle chain k+5 ..= 2k-3 (1-based): one gap of 1/2, the rest 1
        let chain = &s2.nonstrategic[16..=20];
        let gaps: Vec<Num> = chain.windows(2).map(|w| &w[1] - &w[0]).collect();
        assert_eq!(gaps[0], q(1, 2));
        assert!(gaps[1..].iter().all(|g| *g == q(1, 1)));
    }

    #[test]
    fn rejects_non_dumbbell() {
        assert!(DumbbellTwoShot::new(9, 28, 1).is_err());
        assert!(DumbbellTwoShot::new(10, 30, 1).is_err());
        assert!(DumbbellTwoShot::new(10, 31, 2).is_err());
    }
}
