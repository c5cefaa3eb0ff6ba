//! Opinion state, the synchronous bounded-confidence update and the derived
//! structure (neighborhoods, components, widths, weights, convergence).
//!
//! Agents are 0-based here: non-strategic agent `i` holds `nonstrategic[i]`,
//! strategic agent `s` holds `strategic[s]`. The confidence radius is 1 and
//! the influence predicate is inclusive.

use std::fmt;
use std::ops::RangeInclusive;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{HkError, Result};
use crate::numeric::{Mode, Num, DEFAULT_BIT_BUDGET};

/// Position of one strategic agent for one step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Placement {
    /// Out of reach of every non-strategic agent.
    Far,
    At(Num),
}

impl Placement {
    pub fn value(&self) -> Option<&Num> {
        match self {
            Placement::Far => None,
            Placement::At(v) => Some(v),
        }
    }

    pub fn is_far(&self) -> bool {
        matches!(self, Placement::Far)
    }

    /// Concrete opinion for output: FAR becomes `max_opinion + 2`.
    pub fn materialize(&self, max_opinion: &Num) -> Num {
        match self {
            Placement::Far => max_opinion.add_int(2),
            Placement::At(v) => v.clone(),
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Placement::Far => f.write_str("FAR"),
            Placement::At(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for Placement {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Placement::Far => s.serialize_str("FAR"),
            Placement::At(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Placement {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        if v.as_str() == Some("FAR") {
            return Ok(Placement::Far);
        }
        Num::deserialize(v).map(Placement::At).map_err(de::Error::custom)
    }
}

/// A controller's output for one step: exactly one placement per strategic agent.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Directive(pub Vec<Placement>);

impl Directive {
    pub fn all_far(m: usize) -> Directive {
        Directive(vec![Placement::Far; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn placements(&self) -> &[Placement] {
        &self.0
    }

    /// Number of agents not placed FAR.
    pub fn active(&self) -> usize {
        self.0.iter().filter(|p| !p.is_far()).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpinionState {
    pub t: u64,
    pub mode: Mode,
    pub nonstrategic: Vec<Num>,
    pub strategic: Vec<Placement>,
}

impl OpinionState {
    /// Validated constructor; all strategic agents start FAR.
    pub fn new(nonstrategic: Vec<Num>, m: usize, mode: Mode) -> Result<OpinionState> {
        let state = OpinionState {
            t: 0,
            mode,
            nonstrategic,
            strategic: vec![Placement::Far; m],
        };
        state.validate()?;
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.nonstrategic.len()
    }

    pub fn m(&self) -> usize {
        self.strategic.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.nonstrategic.is_empty() {
            return Err(HkError::InvalidState("at least one non-strategic agent required".into()));
        }
        let values = self
            .nonstrategic
            .iter()
            .chain(self.strategic.iter().filter_map(Placement::value));
        for v in values {
            if v.mode() != self.mode {
                return Err(HkError::InvalidState(format!(
                    "value {v} is not in {} mode",
                    self.mode
                )));
            }
            if let Num::Float(f) = v {
                if !f.is_finite() {
                    return Err(HkError::InvalidState(format!("non-finite opinion {f}")));
                }
            }
        }
        if let Some(i) = self.nonstrategic.windows(2).position(|w| w[0] > w[1]) {
            return Err(HkError::InvalidState(format!(
                "opinions not sorted at positions {i} and {}",
                i + 1
            )));
        }
        Ok(())
    }

    /// Same state with the strategic agents moved to `directive`.
    pub fn with_directive(&self, directive: &Directive) -> Result<OpinionState> {
        check_directive(self, directive)?;
        Ok(OpinionState {
            strategic: directive.0.clone(),
            ..self.clone()
        })
    }

    pub fn max_opinion(&self) -> &Num {
        self.nonstrategic.last().expect("n >= 1")
    }

    pub fn min_opinion(&self) -> &Num {
        &self.nonstrategic[0]
    }

    /// Strategic opinions with FAR materialized as `max + 2`.
    pub fn materialized_strategic(&self) -> Vec<Num> {
        let max = self.max_opinion();
        self.strategic.iter().map(|p| p.materialize(max)).collect()
    }
}

fn check_directive(state: &OpinionState, directive: &Directive) -> Result<()> {
    if directive.len() != state.m() {
        return Err(HkError::DirectiveLength {
            expected: state.m(),
            got: directive.len(),
        });
    }
    for v in directive.0.iter().filter_map(Placement::value) {
        if v.mode() != state.mode {
            return Err(HkError::InvalidState(format!(
                "directive value {v} is not in {} mode",
                state.mode
            )));
        }
    }
    Ok(())
}

/// Maximal block of equal non-strategic opinions.
#[derive(Clone, Debug)]
pub(crate) struct Run {
    pub value: Num,
    pub start: usize,
    pub len: usize,
}

impl Run {
    pub fn end(&self) -> usize {
        self.start + self.len - 1
    }
}

pub(crate) fn runs(xs: &[Num]) -> Vec<Run> {
    let mut out: Vec<Run> = Vec::new();
    for (i, x) in xs.iter().enumerate() {
        match out.last_mut() {
            Some(r) if &r.value == x => r.len += 1,
            _ => out.push(Run {
                value: x.clone(),
                start: i,
                len: 1,
            }),
        }
    }
    out
}

/// Non-FAR strategic agents grouped by position, ascending.
#[derive(Clone, Debug, Default)]
pub(crate) struct StrategicGroups {
    pub values: Vec<Num>,
    pub members: Vec<Vec<usize>>,
}

impl StrategicGroups {
    pub fn new(strategic: &[Placement]) -> StrategicGroups {
        let mut placed: Vec<(&Num, usize)> = strategic
            .iter()
            .enumerate()
            .filter_map(|(s, p)| p.value().map(|v| (v, s)))
            .collect();
        placed.sort();
        let mut groups = StrategicGroups::default();
        for (v, s) in placed {
            if groups.values.last() == Some(v) {
                groups.members.last_mut().expect("non-empty").push(s);
            } else {
                groups.values.push(v.clone());
                groups.members.push(vec![s]);
            }
        }
        groups
    }
}

/// Neighborhood of one run of equal opinions, in run / group coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct RunWindow {
    /// Inclusive range of runs within distance 1.
    pub runs: (usize, usize),
    /// Inclusive range of strategic groups within distance 1, if any.
    pub groups: Option<(usize, usize)>,
}

pub(crate) fn run_windows(runs: &[Run], groups: &StrategicGroups) -> Vec<RunWindow> {
    let mut out = Vec::with_capacity(runs.len());
    let (mut lo, mut hi) = (0usize, 0usize);
    let (mut slo, mut shi) = (0usize, 0usize);
    let gv = &groups.values;
    for (r, run) in runs.iter().enumerate() {
        let v = &run.value;
        while !runs[lo].value.within_unit(v) {
            lo += 1;
        }
        hi = hi.max(r);
        while hi + 1 < runs.len() && runs[hi + 1].value.within_unit(v) {
            hi += 1;
        }
        while slo < gv.len() && &gv[slo] < v && !gv[slo].within_unit(v) {
            slo += 1;
        }
        shi = shi.max(slo);
        while shi < gv.len() && (gv[shi] <= *v || gv[shi].within_unit(v)) {
            shi += 1;
        }
        // groups [slo, shi) are candidates; all of them are within reach
        let group_range = if slo < shi && gv[slo].within_unit(v) {
            Some((slo, shi - 1))
        } else {
            None
        };
        out.push(RunWindow {
            runs: (lo, hi),
            groups: group_range,
        });
    }
    out
}

/// Members of the neighborhood of one non-strategic agent (self included).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighborhood {
    pub agent: usize,
    /// Non-strategic members; always a contiguous index range in sorted order.
    pub nonstrategic: RangeInclusive<usize>,
    /// Strategic members, ascending by agent index.
    pub strategic: Vec<usize>,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.nonstrategic.clone().count() + self.strategic.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nonstrategic_len(&self) -> usize {
        self.nonstrategic.clone().count()
    }
}

pub fn neighborhoods(state: &OpinionState) -> Vec<Neighborhood> {
    let runs = runs(&state.nonstrategic);
    let groups = StrategicGroups::new(&state.strategic);
    let windows = run_windows(&runs, &groups);
    let mut out = Vec::with_capacity(state.n());
    for (run, w) in runs.iter().zip(&windows) {
        let ns = runs[w.runs.0].start..=runs[w.runs.1].end();
        let mut strategic: Vec<usize> = match w.groups {
            Some((a, b)) => groups.members[a..=b].iter().flatten().copied().collect(),
            None => Vec::new(),
        };
        strategic.sort_unstable();
        for agent in run.start..=run.end() {
            out.push(Neighborhood {
                agent,
                nonstrategic: ns.clone(),
                strategic: strategic.clone(),
            });
        }
    }
    out
}

/// Next opinions for every non-strategic agent given strategic positions.
pub(crate) fn next_opinions(
    runs: &[Run],
    groups: &StrategicGroups,
    windows: &[RunWindow],
    n: usize,
    bit_budget: u64,
) -> Result<Vec<Num>> {
    let mut next = Vec::with_capacity(n);
    for (run, w) in runs.iter().zip(windows) {
        // fixed summation order: non-strategic ascending, then strategic ascending
        let mut count = 0u64;
        let mut sum = runs[w.runs.0].value.mul_int(runs[w.runs.0].len as i64);
        count += runs[w.runs.0].len as u64;
        for r in &runs[w.runs.0 + 1..=w.runs.1] {
            sum = &sum + &r.value.mul_int(r.len as i64);
            count += r.len as u64;
        }
        if let Some((a, b)) = w.groups {
            for g in a..=b {
                let c = groups.members[g].len();
                sum = &sum + &groups.values[g].mul_int(c as i64);
                count += c as u64;
            }
        }
        let mean = sum.div_int(count);
        let bits = mean.bits();
        if bits > bit_budget {
            return Err(HkError::Overflow {
                bits,
                budget: bit_budget,
            });
        }
        for _ in 0..run.len {
            next.push(mean.clone());
        }
    }
    Ok(next)
}

/// One synchronous update with the default rational bit budget.
pub fn hk_step(state: &OpinionState, directive: &Directive) -> Result<OpinionState> {
    hk_step_with_budget(state, directive, DEFAULT_BIT_BUDGET)
}

/// One synchronous update: every non-strategic agent moves to the mean of its
/// neighborhood at `t`, with strategic agents at the directive positions. The
/// returned state carries `t + 1` and the directive positions.
pub fn hk_step_with_budget(
    state: &OpinionState,
    directive: &Directive,
    bit_budget: u64,
) -> Result<OpinionState> {
    check_directive(state, directive)?;
    let runs = runs(&state.nonstrategic);
    let groups = StrategicGroups::new(&directive.0);
    let windows = run_windows(&runs, &groups);
    let next = next_opinions(&runs, &groups, &windows, state.n(), bit_budget)?;
    Ok(OpinionState {
        t: state.t + 1,
        mode: state.mode,
        nonstrategic: next,
        strategic: directive.0.clone(),
    })
}

/// Maximal block of non-strategic agents chained by gaps of at most 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Component {
    /// Index of the leftmost member.
    pub left: usize,
    /// Index of the rightmost member.
    pub right: usize,
    pub left_opinion: Num,
    pub right_opinion: Num,
    pub width: Num,
}

impl Component {
    pub fn len(&self) -> usize {
        self.right - self.left + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize) -> bool {
        self.left <= i && i <= self.right
    }

    pub fn members(&self) -> RangeInclusive<usize> {
        self.left..=self.right
    }
}

pub fn components_of(xs: &[Num]) -> Vec<Component> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=xs.len() {
        if i == xs.len() || !xs[i - 1].within_unit(&xs[i]) {
            out.push(Component {
                left: start,
                right: i - 1,
                left_opinion: xs[start].clone(),
                right_opinion: xs[i - 1].clone(),
                width: &xs[i - 1] - &xs[start],
            });
            start = i;
        }
    }
    out
}

pub fn components(state: &OpinionState) -> Vec<Component> {
    components_of(&state.nonstrategic)
}

/// Sum of component widths.
pub fn total_width_of(xs: &[Num]) -> Num {
    components_of(xs)
        .iter()
        .fold(Num::zero(xs[0].mode()), |acc, c| &acc + &c.width)
}

pub fn total_width(state: &OpinionState) -> Num {
    total_width_of(&state.nonstrategic)
}

/// Count of non-strategic agents per distinct opinion, ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WeightTable {
    pub entries: Vec<(Num, usize)>,
}

impl WeightTable {
    pub fn of(xs: &[Num]) -> WeightTable {
        WeightTable {
            entries: runs(xs).into_iter().map(|r| (r.value, r.len)).collect(),
        }
    }

    pub fn weight(&self, x: &Num) -> usize {
        self.entries
            .binary_search_by(|(v, _)| v.cmp(x))
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.entries.iter().map(|(_, c)| c).sum()
    }
}

pub fn weight_table(state: &OpinionState) -> WeightTable {
    WeightTable::of(&state.nonstrategic)
}

/// Whether agent `i`'s non-strategic neighborhood is exactly the agents sharing its opinion.
pub fn is_frozen(state: &OpinionState, i: usize) -> bool {
    let xs = &state.nonstrategic;
    let x = &xs[i];
    let left_ok = xs[..i]
        .iter()
        .rev()
        .find(|v| *v != x)
        .is_none_or(|v| !v.within_unit(x));
    let right_ok = xs[i + 1..]
        .iter()
        .find(|v| *v != x)
        .is_none_or(|v| !v.within_unit(x));
    left_ok && right_ok
}

/// Converged: any two non-strategic opinions are equal or more than 1 apart.
pub fn converged(xs: &[Num]) -> bool {
    let rs = runs(xs);
    rs.windows(2).all(|w| !w[0].value.within_unit(&w[1].value))
}

pub fn has_converged(state: &OpinionState) -> bool {
    converged(&state.nonstrategic)
}
