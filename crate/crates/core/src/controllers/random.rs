use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{Directive, OpinionState, Placement};
use crate::error::Result;
use crate::numeric::Num;

use super::Controller;

/// Seeded adversary for property checks: each agent is FAR with probability
/// 1/8, otherwise placed at a random non-strategic opinion shifted by a
/// multiple of 1/64 in `[-3/2, 3/2]`. After `active_steps` (if set) it stays away.
#[derive(Clone, Debug)]
pub struct RandomDirectives {
    m: usize,
    rng: ChaCha8Rng,
    active_steps: Option<u64>,
}

impl RandomDirectives {
    pub fn new(m: usize, seed: u64, active_steps: Option<u64>) -> RandomDirectives {
        RandomDirectives {
            m,
            rng: ChaCha8Rng::seed_from_u64(seed),
            active_steps,
        }
    }

    pub fn draw(rng: &mut impl Rng, state: &OpinionState, m: usize) -> Directive {
        let xs = &state.nonstrategic;
        let out = (0..m)
            .map(|_| {
                if rng.gen_ratio(1, 8) {
                    Placement::Far
                } else {
                    let anchor = &xs[rng.gen_range(0..xs.len())];
                    let shift = Num::ratio(rng.gen_range(-96..=96), 64, state.mode);
                    Placement::At(anchor + &shift)
                }
            })
            .collect();
        Directive(out)
    }
}

impl Controller for RandomDirectives {
    fn name(&self) -> &'static str {
        "random"
    }

    fn m(&self) -> usize {
        self.m
    }

    fn decide(&mut self, state: &OpinionState) -> Result<Directive> {
        if self.active_steps.is_some_and(|s| state.t >= s) {
            return Ok(Directive::all_far(self.m));
        }
        Ok(RandomDirectives::draw(&mut self.rng, state, self.m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Mode;

    #[test]
    fn seeded_and_bounded() {
        let s = OpinionState::new(vec![Num::int(0, Mode::Rational)], 4, Mode::Rational).unwrap();
        let a = RandomDirectives::new(4, 9, None).decide(&s).unwrap();
        let b = RandomDirectives::new(4, 9, None).decide(&s).unwrap();
        assert_eq!(a, b);
        for p in a.placements().iter().filter_map(Placement::value) {
            assert!(p.to_f64().abs() <= 1.5);
        }
        let mut c = RandomDirectives::new(2, 1, Some(0));
        assert_eq!(c.decide(&s).unwrap(), Directive::all_far(2));
    }
}
