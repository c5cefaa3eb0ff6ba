//! Control strategies for the strategic agents.
//!
//! A controller is a deterministic state machine: each call sees the current
//! opinion state, may update its private memory, and returns one placement per
//! strategic agent.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dynamics::OpinionState;
use crate::error::{HkError, Result};
use crate::instances::InstanceSpec;
use crate::numeric::Exponent;

mod contraction;
mod cutter;
mod dumbbell;
mod hybrid;
mod mass;
mod passive;
mod random;
mod search;

pub use crate::dynamics::{Directive, Placement};
pub use contraction::Contraction;
pub use cutter::{Cut, CutSide, Cutter};
pub use dumbbell::DumbbellTwoShot;
pub use hybrid::{Hybrid, HybridPhase, SplitRecord};
pub use mass::{ComponentPlan, MassPlacement, MassPlan};
pub use passive::Passive;
pub use random::RandomDirectives;
pub use search::{BoundedSearch, SearchLimits, SearchOutcome};

pub trait Controller: Send {
    fn name(&self) -> &'static str;

    /// Number of strategic agents this controller drives.
    fn m(&self) -> usize;

    /// Placements for the state's current time step.
    fn decide(&mut self, state: &OpinionState) -> Result<Directive>;

    /// Controller memory, for logging and reproducibility checks.
    fn memory(&self) -> Value {
        Value::Null
    }
}

pub(crate) fn require_m(controller: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(HkError::WrongM {
            controller,
            expected,
            got,
        });
    }
    Ok(())
}

/// Controller selection as stored in JSON:
/// `{"controller": "hybrid", "params": {"alpha": "1/2"}}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub controller: String,
    #[serde(default)]
    pub params: Map<String, Value>,
}

impl ControllerSpec {
    pub fn named(name: &str) -> ControllerSpec {
        ControllerSpec {
            controller: name.to_string(),
            params: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> ControllerSpec {
        self.params.insert(key.to_string(), value.into());
        self
    }

    fn u64_param(&self, key: &str) -> Result<Option<u64>> {
        match self.params.get(key) {
            None => Ok(None),
            Some(v) => v.as_u64().map(Some).ok_or_else(|| {
                HkError::Parse(format!("controller param `{key}` must be a non-negative integer"))
            }),
        }
    }

    fn exponent_param(&self, key: &str) -> Result<Option<Exponent>> {
        match self.params.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => s.parse().map(Some),
            Some(Value::Number(n)) if n.as_u64().is_some() => {
                Exponent::new(n.as_u64().unwrap() as u32, 1).map(Some)
            }
            Some(_) => Err(HkError::Parse(format!(
                "controller param `{key}` must be a \"p/q\" string"
            ))),
        }
    }

    /// The strategic agent count this controller would like for `instance`, if
    /// it dictates one (mass placement and hybrid do).
    pub fn required_m(&self, instance: &InstanceSpec) -> Result<Option<usize>> {
        Ok(match self.controller.as_str() {
            "mass" => Some(9 * instance.n),
            "hybrid" => {
                let alpha = self
                    .exponent_param("alpha")?
                    .ok_or_else(|| HkError::InvalidParam("hybrid needs `alpha`".into()))?;
                Some(Hybrid::required_m(instance.n, alpha))
            }
            _ => None,
        })
    }

    /// Strategic agent count to run with when none is given: the required
    /// count, 1 for the single-agent strategies, otherwise the instance's own.
    pub fn default_m(&self, instance: &InstanceSpec) -> Result<usize> {
        if let Some(m) = self.required_m(instance)? {
            return Ok(m);
        }
        Ok(match self.controller.as_str() {
            "contraction" | "cutter" | "dumbbell" => 1,
            _ => instance.m,
        })
    }

    pub fn build(&self, instance: &InstanceSpec) -> Result<Box<dyn Controller>> {
        let n = instance.n;
        let m = instance.m;
        Ok(match self.controller.as_str() {
            "passive" => Box::new(Passive::new(m)),
            "contraction" => Box::new(Contraction::new(m)?),
            "cutter" => Box::new(Cutter::new(n, m)?),
            "dumbbell" => {
                let k = match self.u64_param("k")?.or_else(|| instance.param_u64("k")) {
                    Some(k) => k as usize,
                    None => (n.saturating_sub(1)) / 3,
                };
                Box::new(DumbbellTwoShot::new(k, n, m)?)
            }
            "mass" => Box::new(MassPlacement::new(n, m)?),
            "hybrid" => {
                let alpha = self
                    .exponent_param("alpha")?
                    .ok_or_else(|| HkError::InvalidParam("hybrid needs `alpha`".into()))?;
                Box::new(Hybrid::new(n, m, alpha)?)
            }
            "search" => {
                let mut limits = SearchLimits::default();
                if let Some(h) = self.u64_param("horizon")? {
                    limits.horizon = h as usize;
                }
                if let Some(cap) = self.u64_param("branch_cap")? {
                    limits.branch_cap = cap;
                }
                Box::new(BoundedSearch::new(m, limits))
            }
            "random" => {
                let seed = self.u64_param("seed")?.unwrap_or(0);
                let steps = self.u64_param("active_steps")?;
                Box::new(RandomDirectives::new(m, seed, steps))
            }
            other => {
                return Err(HkError::InvalidParam(format!("unknown controller `{other}`")));
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::gen_equidistant;
    use crate::numeric::Mode;

    #[test]
    fn spec_json_shape() {
        let raw = r#"{"controller": "hybrid", "params": {"alpha": "1/2", "horizon": 3}}"#;
        let spec: ControllerSpec = serde_json::from_str(raw).unwrap();
        assert_eq!(spec.controller, "hybrid");
        assert_eq!(spec.exponent_param("alpha").unwrap(), Some("1/2".parse().unwrap()));
        assert_eq!(spec.u64_param("horizon").unwrap(), Some(3));
    }

    #[test]
    fn build_checks_preconditions() {
        let inst = gen_equidistant(5, Mode::Rational).unwrap();
        assert!(ControllerSpec::named("passive").build(&inst).is_ok());
        assert!(ControllerSpec::named("contraction").build(&inst).is_ok());
        assert!(matches!(
            ControllerSpec::named("contraction").build(&inst.clone().with_m(2)).err(),
            Some(HkError::WrongM { .. })
        ));
        assert!(matches!(
            ControllerSpec::named("mass").build(&inst).err(),
            Some(HkError::InsufficientM { .. })
        ));
        assert!(ControllerSpec::named("mass").build(&inst.clone().with_m(45)).is_ok());
        assert!(ControllerSpec::named("nope").build(&inst).is_err());
        let hybrid = ControllerSpec::named("hybrid").with("alpha", "1");
        assert_eq!(hybrid.required_m(&inst).unwrap(), Some(17));
        assert!(hybrid.build(&inst.clone().with_m(17)).is_ok());
        assert_eq!(ControllerSpec::named("cutter").default_m(&inst.clone().with_m(0)).unwrap(), 1);
        assert_eq!(ControllerSpec::named("passive").default_m(&inst.clone().with_m(4)).unwrap(), 4);
    }
}
