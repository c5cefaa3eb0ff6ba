use serde::Serialize;
use serde_json::Value;

use crate::dynamics::{components, Directive, OpinionState, Placement};
use crate::error::{HkError, Result};
use crate::numeric::{Mode, Num};

use super::Controller;

/// Maximum number of halvings of the spacing slack before giving up.
pub const EPSILON_HALVINGS: u32 = 64;

/// Placement plan for one initial component.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentPlan {
    pub left: usize,
    pub right: usize,
    /// `ceil(width)`.
    pub rounded_width: i64,
    /// Spacing slack; `None` when no agents are placed for this component.
    pub epsilon: Option<Num>,
    /// Placement positions, or the single center when nothing is placed.
    pub positions: Vec<Num>,
    /// Agents placed at each position (empty when nothing is placed).
    pub counts: Vec<usize>,
}

/// The full t = 0 plan plus the center each non-strategic agent was assigned to.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MassPlan {
    pub components: Vec<ComponentPlan>,
    pub assigned_center: Vec<Num>,
    pub placed: usize,
}

/// One-shot mass placement with `m >= 9n` agents: at t = 0 every component
/// wider than 1 is covered by positions `2 + eps` apart, each loaded with
/// `3 (a + b + c)` agents so that every non-strategic agent lands within 1/2
/// of its position; afterwards everyone stays away.
#[derive(Clone, Debug)]
pub struct MassPlacement {
    m: usize,
    plan: Option<MassPlan>,
}

impl MassPlacement {
    pub fn new(n: usize, m: usize) -> Result<MassPlacement> {
        if m < 9 * n {
            return Err(HkError::InsufficientM {
                needed: 9 * n,
                got: m,
            });
        }
        Ok(MassPlacement { m, plan: None })
    }

    pub fn plan(&self) -> Option<&MassPlan> {
        self.plan.as_ref()
    }

    pub fn compute_plan(state: &OpinionState) -> Result<MassPlan> {
        let xs = &state.nonstrategic;
        let mode = state.mode;
        let mut plans = Vec::new();
        let mut assigned = Vec::with_capacity(xs.len());
        let mut placed = 0usize;
        for (ci, c) in components(state).iter().enumerate() {
            let w = c.width.ceil_int();
            if w <= 1 {
                let center = (&c.left_opinion + &c.right_opinion).div_int(2);
                assigned.extend((c.left..=c.right).map(|_| center.clone()));
                plans.push(ComponentPlan {
                    left: c.left,
                    right: c.right,
                    rounded_width: w,
                    epsilon: None,
                    positions: vec![center],
                    counts: Vec::new(),
                });
                continue;
            }
            let (k, base) = if w % 2 == 0 {
                (w / 2, c.left_opinion.add_int(1))
            } else {
                ((w + 1) / 2, c.left_opinion.clone())
            };
            let k = k as usize;
            let (eps, positions) = spacing(xs, &base, k, &c.right_opinion, mode)
                .ok_or(HkError::EpsilonFailure {
                    component: ci,
                    halvings: EPSILON_HALVINGS,
                })?;
            let counts: Vec<usize> = positions.iter().map(|p| 3 * abc(xs, p)).collect();
            placed += counts.iter().sum::<usize>();
            for x in &xs[c.left..=c.right] {
                let p = positions
                    .iter()
                    .find(|p| p.within_unit(x))
                    .ok_or_else(|| HkError::Internal(format!("opinion {x} not covered")))?;
                assigned.push(p.clone());
            }
            plans.push(ComponentPlan {
                left: c.left,
                right: c.right,
                rounded_width: w,
                epsilon: Some(eps),
                positions,
                counts,
            });
        }
        Ok(MassPlan {
            components: plans,
            assigned_center: assigned,
            placed,
        })
    }
}

/// Searches eps = 1/(2k), 1/(4k), ... until the last position stays inside the
/// component and no opinion falls in any open gap `(p_j + 1, p_{j+1} - 1)`.
fn spacing(xs: &[Num], base: &Num, k: usize, right: &Num, mode: Mode) -> Option<(Num, Vec<Num>)> {
    let mut eps = Num::ratio(1, 2 * k as i64, mode);
    for _ in 0..=EPSILON_HALVINGS {
        let step = eps.add_int(2);
        let mut positions = Vec::with_capacity(k);
        let mut p = base.clone();
        for _ in 0..k {
            positions.push(p.clone());
            p = &p + &step;
        }
        let inside = positions.last().is_some_and(|p| p <= right);
        let gaps_clear = positions.windows(2).all(|w| {
            let lo = w[0].add_int(1);
            let hi = w[1].add_int(-1);
            let first_above = xs.partition_point(|x| x <= &lo);
            first_above == xs.len() || xs[first_above] >= hi
        });
        if inside && gaps_clear {
            return Some((eps, positions));
        }
        eps = eps.div_int(2);
    }
    None
}

/// `a + b + c` for a position: agents in `[p-2, p-1)`, within 1, and in `(p+1, p+2]`.
fn abc(xs: &[Num], p: &Num) -> usize {
    let lo = p.add_int(-2);
    let hi = p.add_int(2);
    let start = xs.partition_point(|x| x < &lo);
    let end = xs.partition_point(|x| x <= &hi);
    end - start
}

impl Controller for MassPlacement {
    fn name(&self) -> &'static str {
        "mass"
    }

    fn m(&self) -> usize {
        self.m
    }

    fn decide(&mut self, state: &OpinionState) -> Result<Directive> {
        if state.t > 0 || self.plan.is_some() {
            return Ok(Directive::all_far(self.m));
        }
        let plan = MassPlacement::compute_plan(state)?;
        if plan.placed > self.m {
            return Err(HkError::InsufficientM {
                needed: plan.placed,
                got: self.m,
            });
        }
        let mut out = Vec::with_capacity(self.m);
        for c in &plan.components {
            for (p, &count) in c.positions.iter().zip(&c.counts) {
                out.extend(std::iter::repeat_n(Placement::At(p.clone()), count));
            }
        }
        out.resize(self.m, Placement::Far);
        self.plan = Some(plan);
        Ok(Directive(out))
    }

    fn memory(&self) -> Value {
        serde_json::to_value(&self.plan).unwrap_or(Value::Null)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{has_converged, hk_step};

    fn q(p: i64, d: i64) -> Num {
        Num::ratio(p, d, Mode::Rational)
    }

    fn st(xs: Vec<Num>, m: usize) -> OpinionState {
        OpinionState::new(xs, m, Mode::Rational).unwrap()
    }

    #[test]
    fn equidistant_three_converges_in_two_steps() {
        let s = st(vec![q(0, 1), q(1, 1), q(2, 1)], 27);
        let mut c = MassPlacement::new(3, 27).unwrap();
        let d = c.decide(&s).unwrap();
        assert_eq!(d.active(), 9);
        assert!(d.0.iter().take(9).all(|p| *p == Placement::At(q(1, 1))));
        let s1 = hk_step(&s, &d).unwrap();
        // (0 + 1 + 9) / 11, 1, (2 + 1 + 9) / 11
        assert_eq!(s1.nonstrategic, vec![q(10, 11), q(1, 1), q(12, 11)]);
        let d1 = c.decide(&s1).unwrap();
        assert_eq!(d1, Directive::all_far(27));
        assert!(has_converged(&hk_step(&s1, &d1).unwrap()));
    }

    #[test]
    fn narrow_component_gets_only_a_center() {
        let s = st(vec![q(0, 1), q(1, 2)], 18);
        let mut c = MassPlacement::new(2, 18).unwrap();
        let d = c.decide(&s).unwrap();
        assert_eq!(d.active(), 0);
        let plan = c.plan().unwrap();
        assert_eq!(plan.components[0].positions, vec![q(1, 4)]);
        let s1 = hk_step(&s, &d).unwrap();
        assert!(has_converged(&s1));
    }

    #[test]
    fn odd_width_starts_at_left_end() {
        // width 3: k = 2 positions at x_l and x_l + 2 + eps
        let xs: Vec<Num> = (0..4).map(|i| q(i, 1)).collect();
        let plan = MassPlacement::compute_plan(&st(xs, 36)).unwrap();
        let c = &plan.components[0];
        assert_eq!(c.rounded_width, 3);
        assert_eq!(c.epsilon, Some(q(1, 4)));
        assert_eq!(c.positions, vec![q(0, 1), q(9, 4)]);
        // a + b + c: [-2, 2] holds 0, 1, 2; [1/4, 17/4] holds 1, 2, 3
        assert_eq!(c.counts, vec![9, 9]);
    }

    #[test]
    fn insufficient_agents() {
        assert!(matches!(
            MassPlacement::new(5, 44),
            Err(HkError::InsufficientM { needed: 45, got: 44 })
        ));
    }
}
