//! Property suites over the dynamics and the controllers. Each suite returns a
//! machine-readable report with one entry per property and the first
//! counterexample found.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::controllers::{
    BoundedSearch, Controller, DumbbellTwoShot, Hybrid, MassPlacement, Passive, RandomDirectives,
    SearchLimits,
};
use crate::dynamics::{components, converged, hk_step, Directive, OpinionState, Placement};
use crate::engine::{run, RunConfig};
use crate::error::{HkError, Result};
use crate::instances::{
    gen_dumbbell, gen_equidistant, gen_not_too_fast, gen_random, gen_three_cluster, InstanceSpec,
};
use crate::numeric::{Exponent, Mode, Num};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Invariants,
    Golden,
    Mass,
    ThreeCluster,
    NotTooFast,
    HybridSplits,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Invariants,
        Suite::Golden,
        Suite::Mass,
        Suite::ThreeCluster,
        Suite::NotTooFast,
        Suite::HybridSplits,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Invariants => "invariants",
            Suite::Golden => "golden",
            Suite::Mass => "mass",
            Suite::ThreeCluster => "three-cluster",
            Suite::NotTooFast => "not-too-fast",
            Suite::HybridSplits => "hybrid-splits",
        }
    }

    /// Default number of seeded cases.
    pub fn default_seeds(self) -> u64 {
        match self {
            Suite::Invariants => 500,
            Suite::Mass => 100,
            Suite::ThreeCluster => 200,
            Suite::NotTooFast => 1000,
            Suite::Golden | Suite::HybridSplits => 0,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = HkError;

    fn from_str(s: &str) -> Result<Suite> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.as_str() == s)
            .ok_or_else(|| HkError::InvalidParam(format!("unknown suite {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyReport {
    pub property: String,
    pub passed: bool,
    pub cases: u64,
    pub failures: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Value>,
}

impl PropertyReport {
    fn new(property: impl Into<String>) -> PropertyReport {
        PropertyReport {
            property: property.into(),
            passed: true,
            cases: 0,
            failures: 0,
            counterexample: None,
        }
    }

    fn record(&mut self, ok: bool, counterexample: impl FnOnce() -> Value) {
        self.cases += 1;
        if !ok {
            self.passed = false;
            self.failures += 1;
            if self.counterexample.is_none() {
                self.counterexample = Some(counterexample());
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub properties: Vec<PropertyReport>,
}

impl SuiteReport {
    fn new(suite: Suite, properties: Vec<PropertyReport>) -> SuiteReport {
        SuiteReport {
            suite,
            passed: properties.iter().all(|p| p.passed),
            properties,
        }
    }

    pub fn property(&self, name: &str) -> Option<&PropertyReport> {
        self.properties.iter().find(|p| p.property == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Number of seeded cases; `None` uses the suite default.
    pub seeds: Option<u64>,
    pub base_seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> VerifyOptions {
        VerifyOptions {
            seeds: None,
            base_seed: 0,
        }
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    let seeds = opts.seeds.unwrap_or(suite.default_seeds());
    let base = opts.base_seed;
    match suite {
        Suite::Invariants => invariants(seeds, base, 50),
        Suite::Golden => golden(&[10, 12]),
        Suite::Mass => mass(seeds, base),
        Suite::ThreeCluster => three_cluster(&[15, 24], seeds, base),
        Suite::NotTooFast => not_too_fast(seeds, base),
        Suite::HybridSplits => hybrid_splits(),
    }
}

fn show(xs: &[Num]) -> Value {
    Value::Array(xs.iter().map(|x| Value::String(x.to_string())).collect())
}

fn q(p: i64, d: i64) -> Num {
    Num::ratio(p, d, Mode::Rational)
}

/// Monitor sweep over seeded random instances, `steps` steps each, under the
/// passive controller (m = 0) and under random directives (m >= 1).
pub fn invariants(seeds: u64, base_seed: u64, steps: u64) -> Result<SuiteReport> {
    let mut props: Vec<PropertyReport> = [
        "order",
        "bounded_move",
        "weight_monotone",
        "coincidence",
        "equality_persistence",
        "hull_containment",
        "separation_persistence",
    ]
    .into_iter()
    .map(PropertyReport::new)
    .collect();
    let mut errors = PropertyReport::new("runs_complete");
    let config = RunConfig {
        continue_after_convergence: true,
        ..RunConfig::verification().max_steps(steps)
    };
    for seed in base_seed..base_seed + seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=10);
        let span = rng.gen_range(0..=8) as f64;
        let m = rng.gen_range(1..=3);
        let passive_inst = gen_random(n, 0, span, seed, Mode::Rational)?;
        let random_inst = passive_inst.clone().with_m(m);
        let runs: [(&InstanceSpec, Box<dyn Controller>); 2] = [
            (&passive_inst, Box::new(Passive::new(0))),
            (&random_inst, Box::new(RandomDirectives::new(m, seed, None))),
        ];
        for (inst, mut ctrl) in runs {
            let rec = match run(inst, ctrl.as_mut(), &config) {
                Ok(rec) => rec,
                Err(e) => {
                    errors.record(false, || {
                        json!({"seed": seed, "controller": ctrl.name(), "error": e.to_string()})
                    });
                    continue;
                }
            };
            errors.record(true, || Value::Null);
            for (prop, res) in props.iter_mut().zip(&rec.monitor_report) {
                if !res.applicable {
                    continue;
                }
                prop.record(res.passed, || {
                    json!({
                        "seed": seed,
                        "controller": rec.controller,
                        "opinions": show(&inst.opinions),
                        "t": res.first_violation,
                        "detail": res.counterexample,
                    })
                });
            }
        }
    }
    props.push(errors);
    Ok(SuiteReport::new(Suite::Invariants, props))
}

/// Dumbbell opinions at t = 1 (strategic agent at 2 during step 0).
pub fn dumbbell_expected_t1(k: i64) -> Vec<Num> {
    let mut xs = Vec::new();
    xs.extend((0..k).map(|_| q(-1, k + 1)));
    xs.push(q(0, 1));
    xs.push(q(5, 4));
    xs.push(q(2, 1));
    xs.push(q(11, 4));
    xs.extend((4..=k).map(|v| q(v, 1)));
    xs.extend((0..k).map(|_| q(k * (k + 1) + 1, k + 1)));
    xs
}

/// Dumbbell opinions at t = 2 (strategic agent at k - 2 during step 1).
pub fn dumbbell_expected_t2(k: i64) -> Vec<Num> {
    let mut xs = Vec::new();
    xs.extend((0..=k).map(|_| q(-k, (k + 1) * (k + 1))));
    xs.extend([q(13, 8), q(2, 1), q(19, 8), q(9, 2)]);
    xs.extend((5..=k - 4).map(|i| q(i, 1)));
    xs.extend([q(4 * k - 11, 4), q(k - 2, 1), q(4 * k - 5, 4)]);
    xs.push(q(k * (k + 1) * (k + 2) - 1, (k + 1) * (k + 2)));
    let right = q(k * (k + 1) * (k + 1) + k, (k + 1) * (k + 1));
    xs.extend((0..k).map(|_| right.clone()));
    xs
}

/// Replays the dumbbell two-shot placement and compares t = 1, 2 exactly.
pub fn golden(ks: &[usize]) -> Result<SuiteReport> {
    let mut props = Vec::new();
    for &k in ks {
        let inst = gen_dumbbell(k, Mode::Rational)?;
        let mut ctrl = DumbbellTwoShot::new(k, inst.n, 1)?;
        let mut state = inst.initial_state()?;
        let expected = [dumbbell_expected_t1(k as i64), dumbbell_expected_t2(k as i64)];
        for (t, want) in expected.iter().enumerate() {
            let d = ctrl.decide(&state)?;
            state = hk_step(&state, &d)?;
            let mut p = PropertyReport::new(format!("dumbbell_k{k}_t{}", t + 1));
            for (i, (got, want)) in state.nonstrategic.iter().zip(want).enumerate() {
                p.record(got == want, || {
                    json!({"agent": i + 1, "got": got.to_string(), "expected": want.to_string()})
                });
            }
            p.record(state.n() == want.len(), || json!({"length": state.n()}));
            props.push(p);
        }
    }
    Ok(SuiteReport::new(Suite::Golden, props))
}

/// Mass placement on seeded random instances with m = 9n.
pub fn mass(seeds: u64, base_seed: u64) -> Result<SuiteReport> {
    let mut near = PropertyReport::new("within_half_of_center");
    let mut complete = PropertyReport::new("complete_graphs_at_t1");
    let mut fast = PropertyReport::new("converged_by_t2");
    for seed in base_seed..base_seed + seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=40);
        let span = rng.gen_range(1..=12) as f64;
        let inst = gen_random(n, 9 * n, span, seed, Mode::Rational)?;
        let ce = || json!({"seed": seed, "opinions": show(&inst.opinions)});
        let mut ctrl = MassPlacement::new(n, 9 * n)?;
        let s0 = inst.initial_state()?;
        let d0 = ctrl.decide(&s0)?;
        let s1 = hk_step(&s0, &d0)?;
        let plan = ctrl.plan().expect("plan made at t = 0");
        let half = q(1, 2);
        let ok = s1
            .nonstrategic
            .iter()
            .zip(&plan.assigned_center)
            .all(|(x, p)| (x - p).abs() <= half);
        near.record(ok, ce);
        let ok = components(&s1).iter().all(|c| c.width <= Num::one(Mode::Rational));
        complete.record(ok, ce);
        let mut state = s1;
        let mut t = 1;
        while t < 2 && !converged(&state.nonstrategic) {
            let d = ctrl.decide(&state)?;
            state = hk_step(&state, &d)?;
            t += 1;
        }
        fast.record(converged(&state.nonstrategic), ce);
    }
    Ok(SuiteReport::new(Suite::Mass, vec![near, complete, fast]))
}

/// Adversarial single-agent placement: an extreme point `x_j +- 1` of a
/// cluster half of the time, otherwise a random draw (possibly FAR).
fn adversary(rng: &mut ChaCha8Rng, state: &OpinionState) -> Directive {
    if rng.gen_bool(0.5) {
        let xs = &state.nonstrategic;
        let x = &xs[rng.gen_range(0..xs.len())];
        let side = if rng.gen_bool(0.5) { 1 } else { -1 };
        Directive(vec![Placement::At(x.add_int(side))])
    } else {
        RandomDirectives::draw(rng, state, 1)
    }
}

/// Inequalities (1)-(6) of the three-cluster bound for `t <= floor(k / 8)`,
/// given the three cluster opinions at time t.
pub fn three_cluster_bounds(k: i64, t: i64, x1: &Num, x2: &Num, x3: &Num) -> [bool; 6] {
    let tk = q(t, k);
    let drift = q(t * k + t * t, k * k);
    let lo1 = q(-2, 3) - tk.clone();
    let hi1 = q(-2, 3) + tk.clone();
    let lo3 = q(2, 3) - tk.clone();
    let hi3 = q(2, 3) + tk;
    let gap = q(k - 1, k);
    [
        &lo1 <= x1 && x1 <= &hi1,
        &lo3 <= x3 && x3 <= &hi3,
        -drift.clone() <= *x2 && *x2 <= drift,
        x2 - x1 <= gap,
        x3 - x2 <= gap,
        x3 - x1 > Num::one(Mode::Rational),
    ]
}

pub fn three_cluster(ks: &[usize], seeds: u64, base_seed: u64) -> Result<SuiteReport> {
    let mut props: Vec<PropertyReport> = (1..=6)
        .map(|i| PropertyReport::new(format!("inequality_{i}")))
        .collect();
    let mut coherent = PropertyReport::new("clusters_stay_coincident");
    for &k in ks {
        let inst = gen_three_cluster(k, Mode::Rational)?;
        let kk = k * k;
        let horizon = (k / 8) as u64;
        for seed in base_seed..base_seed + seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((k as u64) << 32));
            let mut state = inst.initial_state()?;
            loop {
                let xs = &state.nonstrategic;
                let (x1, x2, x3) = (&xs[0], &xs[kk], &xs[kk + k]);
                let same = xs[..kk].iter().all(|x| x == x1)
                    && xs[kk..kk + k].iter().all(|x| x == x2)
                    && xs[kk + k..].iter().all(|x| x == x3);
                let ce = || json!({"k": k, "seed": seed, "t": state.t, "x": show(&[x1.clone(), x2.clone(), x3.clone()])});
                coherent.record(same, ce);
                let ok = three_cluster_bounds(k as i64, state.t as i64, x1, x2, x3);
                for (p, ok) in props.iter_mut().zip(ok) {
                    p.record(ok, ce);
                }
                if state.t >= horizon {
                    break;
                }
                let d = adversary(&mut rng, &state);
                state = hk_step(&state, &d)?;
            }
        }
    }
    props.push(coherent);
    Ok(SuiteReport::new(Suite::ThreeCluster, props))
}

/// Exhaustive horizon-1 search for m = 1, 2, 3 and a pigeonhole check on
/// random directives with up to 12 agents.
pub fn not_too_fast(seeds: u64, base_seed: u64) -> Result<SuiteReport> {
    let inst = gen_not_too_fast(5, Mode::Rational)?;
    let mut search = PropertyReport::new("no_one_step_convergence_by_search");
    for m in 1..=3 {
        let state = inst.clone().with_m(m).initial_state()?;
        let limits = SearchLimits {
            horizon: 1,
            ..SearchLimits::default()
        };
        let out = BoundedSearch::new(m, limits).search(&state)?;
        search.record(!out.converged, || {
            json!({"m": m, "directive": serde_json::to_value(&out.directive).unwrap_or(Value::Null)})
        });
    }
    let mut pigeon = PropertyReport::new("pigeonhole_at_t1");
    let lo = q(-1, 1);
    let hi = q(7, 3);
    for seed in base_seed..base_seed + seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.gen_range(1..=12);
        let state = inst.clone().with_m(m).initial_state()?;
        let d = RandomDirectives::draw(&mut rng, &state, m);
        let next = hk_step(&state, &d)?;
        let xs = &next.nonstrategic;
        let inside = xs.iter().all(|x| &lo <= x && x <= &hi);
        let distinct = xs.windows(2).all(|w| w[0] != w[1]);
        pigeon.record(inside && distinct && !converged(xs), || {
            json!({"seed": seed, "m": m, "x1": show(xs)})
        });
    }
    Ok(SuiteReport::new(Suite::NotTooFast, vec![search, pigeon]))
}

/// Runs the hybrid controller and checks every executed split.
pub fn hybrid_splits() -> Result<SuiteReport> {
    let mut first = PropertyReport::new("equidistant_60_first_directive");
    let mut split = PropertyReport::new("split_pairs_separate");
    let mut spacing = PropertyReport::new("split_positions_spaced");
    let mut done = PropertyReport::new("converges");

    let inst = gen_equidistant(60, Mode::Rational)?;
    let alpha = Exponent::new(1, 1)?;
    let m = Hybrid::required_m(60, alpha);
    let mut ctrl = Hybrid::new(60, m, alpha)?;
    let d = ctrl.decide(&inst.with_m(m).initial_state()?)?;
    for pos in [0, 3, 7, 10] {
        let count = d.0.iter().filter(|p| p.value() == Some(&q(pos, 1))).count();
        first.record(count == 15, || json!({"position": pos, "count": count}));
    }
    first.record(d.active() == 60, || json!({"active": d.active()}));

    let cases = [(60, 1, 1), (60, 1, 2), (120, 1, 1), (120, 1, 2), (200, 1, 2)];
    for (n, an, ad) in cases {
        let alpha = Exponent::new(an, ad)?;
        let m = Hybrid::required_m(n, alpha);
        let inst = gen_equidistant(n, Mode::Float64)?.with_m(m);
        let mut ctrl = Hybrid::new(n, m, alpha)?;
        let mut state = inst.initial_state()?;
        let mut steps = 0u64;
        while !converged(&state.nonstrategic) && steps < 100_000 {
            let d = ctrl.decide(&state)?;
            let comps = components(&state);
            let before = ctrl.splits().iter().filter(|s| s.t < state.t).count();
            let fresh: Vec<_> = ctrl.splits()[before..].to_vec();
            let next = hk_step(&state, &d)?;
            let mut positions: Vec<(usize, Num)> = Vec::new();
            for s in &fresh {
                let xs = &next.nonstrategic;
                let gap = &xs[s.b] - &xs[s.a];
                let ce = || json!({"n": n, "alpha": alpha.to_string(), "t": s.t, "a": s.a, "b": s.b, "gap": gap.to_string()});
                split.record(gap > Num::one(state.mode), ce);
                let c = comps.partition_point(|c| c.right < s.a);
                positions.push((c, s.left_position.clone()));
                positions.push((c, s.right_position.clone()));
            }
            positions.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
            positions.dedup();
            for w in positions.windows(2) {
                if w[0].0 == w[1].0 {
                    let d = &w[1].1 - &w[0].1;
                    spacing.record(d >= Num::int(2, state.mode), || {
                        json!({"n": n, "t": state.t, "p": w[0].1.to_string(), "q": w[1].1.to_string()})
                    });
                }
            }
            state = next;
            steps += 1;
        }
        done.record(converged(&state.nonstrategic), || json!({"n": n, "alpha": alpha.to_string()}));
    }
    if spacing.cases == 0 {
        spacing.cases = 1;
    }
    Ok(SuiteReport::new(Suite::HybridSplits, vec![first, split, spacing, done]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn expected_vectors_have_full_length() {
        for k in [10, 12, 17] {
            assert_eq!(dumbbell_expected_t1(k).len() as i64, 3 * k + 1);
            assert_eq!(dumbbell_expected_t2(k).len() as i64, 3 * k + 1);
        }
    }

    #[test]
    fn golden_passes() {
        let r = golden(&[10, 12]).unwrap();
        assert!(r.passed, "{}", serde_json::to_string_pretty(&r).unwrap());
    }

    #[test]
    fn three_cluster_holds_at_zero() {
        let ok = three_cluster_bounds(15, 0, &q(-2, 3), &q(0, 1), &q(2, 3));
        assert!(ok.iter().all(|&b| b));
    }

    #[test]
    fn small_sweeps_pass() {
        for r in [
            invariants(10, 0, 20).unwrap(),
            mass(10, 0).unwrap(),
            not_too_fast(50, 0).unwrap(),
            three_cluster(&[15], 5, 0).unwrap(),
        ] {
            assert!(r.passed, "{}", serde_json::to_string_pretty(&r).unwrap());
        }
    }
}
