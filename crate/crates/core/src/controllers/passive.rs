use crate::dynamics::{Directive, OpinionState};
use crate::error::Result;

use super::Controller;

/// Keeps every strategic agent out of reach.
#[derive(Clone, Debug)]
pub struct Passive {
    m: usize,
}

impl Passive {
    pub fn new(m: usize) -> Passive {
        Passive { m }
    }
}

impl Controller for Passive {
    fn name(&self) -> &'static str {
        "passive"
    }

    fn m(&self) -> usize {
        self.m
    }

    fn decide(&mut self, _state: &OpinionState) -> Result<Directive> {
        Ok(Directive::all_far(self.m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Placement;

    #[test]
    fn all_far() {
        let s = OpinionState::new(vec![crate::numeric::Num::Float(0.0)], 3, crate::numeric::Mode::Float64)
            .unwrap();
        assert!(Passive::new(0).decide(&s).unwrap().is_empty());
        assert_eq!(Passive::new(3).decide(&s).unwrap().0, vec![Placement::Far; 3]);
    }
}
