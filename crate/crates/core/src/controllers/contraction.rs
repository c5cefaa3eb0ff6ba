use crate::dynamics::{components, Directive, OpinionState, Placement};
use crate::error::Result;
use crate::numeric::Num;

use super::{require_m, Controller};

/// Single-agent width contraction.
///
/// If some component has width in `(0, 1]` it collapses on its own, so the
/// agent stays away. Otherwise the agent sits at `x_left + 1` of the leftmost
/// component wider than 1, lifting its left end by at least `1 / (n + 1)`.
#[derive(Clone, Debug, Default)]
pub struct Contraction;

impl Contraction {
    pub fn new(m: usize) -> Result<Contraction> {
        require_m("contraction", 1, m)?;
        Ok(Contraction)
    }

    pub fn target(state: &OpinionState) -> Placement {
        let comps = components(state);
        let one = Num::one(state.mode);
        if comps.iter().any(|c| !c.width.is_zero() && c.width <= one) {
            return Placement::Far;
        }
        match comps.iter().find(|c| c.width > one) {
            Some(c) => Placement::At(c.left_opinion.add_int(1)),
            None => Placement::Far,
        }
    }
}

impl Controller for Contraction {
    fn name(&self) -> &'static str {
        "contraction"
    }

    fn m(&self) -> usize {
        1
    }

    fn decide(&mut self, state: &OpinionState) -> Result<Directive> {
        Ok(Directive(vec![Contraction::target(state)]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{hk_step, total_width};
    use crate::error::HkError;
    use crate::numeric::Mode;

    fn q(p: i64, d: i64) -> Num {
        Num::ratio(p, d, Mode::Rational)
    }

    fn st(xs: Vec<Num>) -> OpinionState {
        OpinionState::new(xs, 1, Mode::Rational).unwrap()
    }

    #[test]
    fn narrow_component_merges_alone() {
        let s = st(vec![q(0, 1), q(1, 2), q(5, 1)]);
        assert_eq!(Contraction.decide(&s).unwrap().0, vec![Placement::Far]);
    }

    #[test]
    fn pulls_left_end_of_wide_component() {
        let s = st(vec![q(0, 1), q(1, 1), q(2, 1)]);
        let d = Contraction.decide(&s).unwrap();
        assert_eq!(d.0, vec![Placement::At(q(1, 1))]);
        let s1 = hk_step(&s, &d).unwrap();
        assert_eq!(s1.nonstrategic, vec![q(2, 3), q(1, 1), q(4, 3)]);
        assert_eq!(total_width(&s1), q(2, 3));
        assert!(total_width(&s1) <= q(2, 1) - q(1, 4));
    }

    #[test]
    fn converged_state_is_left_alone() {
        let s = st(vec![q(0, 1), q(0, 1), q(3, 1)]);
        assert_eq!(Contraction.decide(&s).unwrap().0, vec![Placement::Far]);
    }

    #[test]
    fn needs_exactly_one_agent() {
        assert!(matches!(Contraction::new(2), Err(HkError::WrongM { .. })));
        assert!(matches!(Contraction::new(0), Err(HkError::WrongM { .. })));
    }
}
