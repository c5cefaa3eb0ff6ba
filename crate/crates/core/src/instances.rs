//! Starting configurations: the named constructions, farms of them, seeded
//! random instances, and the JSON instance file format.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dynamics::{components_of, OpinionState};
use crate::error::{HkError, Result};
use crate::numeric::{Exponent, Mode, Num};

/// Spacing between farm copies and before the leftover block.
pub const FARM_GAP: i64 = 10;

/// A starting configuration plus the parameters that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub name: String,
    pub mode: Mode,
    pub n: usize,
    pub m: usize,
    pub opinions: Vec<Num>,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl InstanceSpec {
    fn build(name: &str, mode: Mode, m: usize, mut opinions: Vec<Num>) -> InstanceSpec {
        opinions.sort();
        InstanceSpec {
            name: name.to_string(),
            mode,
            n: opinions.len(),
            m,
            opinions,
            params: BTreeMap::new(),
            seed: None,
        }
    }

    fn param(mut self, key: &str, value: impl Into<Value>) -> InstanceSpec {
        self.params.insert(key.to_string(), value.into());
        self
    }

    /// Replaces the strategic agent count.
    pub fn with_m(mut self, m: usize) -> InstanceSpec {
        self.m = m;
        self
    }

    pub fn param_u64(&self, key: &str) -> Option<u64> {
        self.params.get(key).and_then(Value::as_u64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.opinions.len() != self.n {
            return Err(HkError::InvalidState(format!(
                "instance `{}` declares n = {} but has {} opinions",
                self.name,
                self.n,
                self.opinions.len()
            )));
        }
        self.initial_state().map(|_| ())
    }

    pub fn initial_state(&self) -> Result<OpinionState> {
        OpinionState::new(self.opinions.clone(), self.m, self.mode)
    }

    /// Same configuration converted to another numeric mode.
    pub fn to_mode(&self, mode: Mode) -> InstanceSpec {
        let opinions = self
            .opinions
            .iter()
            .map(|v| match (v, mode) {
                (Num::Rational(r), Mode::Float64) => Num::from_rational(r, mode),
                (Num::Float(f), Mode::Rational) => Num::Rational(
                    num_rational::BigRational::from_float(*f).expect("finite opinion"),
                ),
                _ => v.clone(),
            })
            .collect();
        InstanceSpec {
            mode,
            opinions,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<InstanceSpec> {
        let mut spec: InstanceSpec =
            serde_json::from_str(s).map_err(|e| HkError::Parse(e.to_string()))?;
        // JSON numbers parse as floats, "p/q" strings as rationals; coerce to the declared mode
        let mode = spec.mode;
        if spec.opinions.iter().any(|v| v.mode() != mode) {
            if mode == Mode::Float64 {
                spec = spec.to_mode(Mode::Float64);
            } else {
                return Err(HkError::Parse(
                    "rational instances must list opinions as \"p/q\" strings".into(),
                ));
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Opinions `0, 1, ..., n-1`.
pub fn gen_equidistant(n: usize, mode: Mode) -> Result<InstanceSpec> {
    if n < 1 {
        return Err(HkError::InvalidParam("equidistant needs n >= 1".into()));
    }
    let xs = (0..n as i64).map(|i| Num::int(i, mode)).collect();
    Ok(InstanceSpec::build("equidistant", mode, 1, xs))
}

fn dumbbell_opinions(k: i64, offset: i64, mode: Mode) -> Vec<Num> {
    let mut xs = Vec::with_capacity(3 * k as usize + 1);
    xs.extend((0..k).map(|_| Num::ratio(offset * k - 1, k, mode)));
    xs.extend((0..=k).map(|i| Num::int(offset + i, mode)));
    xs.extend((0..k).map(|_| Num::ratio((offset + k) * k + 1, k, mode)));
    xs
}

/// `k` agents at `-1/k`, one at each integer `0..=k`, `k` at `k + 1/k`.
pub fn gen_dumbbell(k: usize, mode: Mode) -> Result<InstanceSpec> {
    if k < 10 {
        return Err(HkError::InvalidParam(format!("dumbbell needs k >= 10, got {k}")));
    }
    let xs = dumbbell_opinions(k as i64, 0, mode);
    Ok(InstanceSpec::build("dumbbell", mode, 1, xs).param("k", k as u64))
}

/// `k^2` agents at `-2/3`, `k` at `0`, `k^2` at `2/3`; one strategic agent.
pub fn gen_three_cluster(k: usize, mode: Mode) -> Result<InstanceSpec> {
    if k < 15 {
        return Err(HkError::InvalidParam(format!("three-cluster needs k >= 15, got {k}")));
    }
    let mut xs = Vec::with_capacity(2 * k * k + k);
    xs.extend((0..k * k).map(|_| Num::ratio(-2, 3, mode)));
    xs.extend((0..k).map(|_| Num::zero(mode)));
    xs.extend((0..k * k).map(|_| Num::ratio(2, 3, mode)));
    Ok(InstanceSpec::build("three-cluster", mode, 1, xs).param("k", k as u64))
}

/// `0, 1/4, 2/3, 5/4, 4/3` followed by `n - 5` agents at 6.
pub fn gen_not_too_fast(n: usize, mode: Mode) -> Result<InstanceSpec> {
    if n < 5 {
        return Err(HkError::InvalidParam(format!("not-too-fast needs n >= 5, got {n}")));
    }
    let mut xs = vec![
        Num::zero(mode),
        Num::ratio(1, 4, mode),
        Num::ratio(2, 3, mode),
        Num::ratio(5, 4, mode),
        Num::ratio(4, 3, mode),
    ];
    xs.extend((5..n).map(|_| Num::int(6, mode)));
    Ok(InstanceSpec::build("not-too-fast", mode, 1, xs))
}

/// Shared farm layout: `copies` translated copies of a base block placed
/// `FARM_GAP` apart, then the leftover agents as one block at a single opinion.
fn farm(
    name: &str,
    n: usize,
    copies: usize,
    base: impl Fn(i64) -> Vec<Num>,
    base_span: i64,
    mode: Mode,
) -> InstanceSpec {
    let mut xs = Vec::with_capacity(n);
    let stride = base_span + FARM_GAP;
    for c in 0..copies as i64 {
        xs.extend(base(c * stride));
    }
    let leftover = n - xs.len();
    let block = copies as i64 * stride;
    xs.extend((0..leftover).map(|_| Num::int(block, mode)));
    InstanceSpec::build(name, mode, 0, xs)
        .param("copies", copies as u64)
        .param("leftover", leftover as u64)
}

/// Copies of the dumbbell with parameter `kprime` (`3 kprime + 1` agents
/// each), `floor(n / (3 kprime + 1))` of them. No strategic agents by default.
pub fn gen_dumbbell_farm_sized(n: usize, kprime: usize, mode: Mode) -> Result<InstanceSpec> {
    if kprime < 10 {
        return Err(HkError::InvalidParam(format!(
            "dumbbell farm copies need k >= 10, got {kprime}"
        )));
    }
    let size = 3 * kprime + 1;
    dumbbell_farm_with(n, kprime, n / size, mode)
}

fn dumbbell_farm_with(n: usize, kprime: usize, copies: usize, mode: Mode) -> Result<InstanceSpec> {
    let size = 3 * kprime + 1;
    if copies == 0 || copies * size > n {
        return Err(HkError::InvalidParam(format!(
            "n = {n} cannot hold {copies} dumbbell copies of {size} agents"
        )));
    }
    let k = kprime as i64;
    // width k + 2/k <= k + 1
    let spec = farm(
        "dumbbell-farm",
        n,
        copies,
        |off| dumbbell_opinions(k, off, mode),
        k + 1,
        mode,
    );
    Ok(spec.param("k", kprime as u64).param("copy_size", size as u64))
}

/// Dumbbell farm for exponent `alpha`: copy scale `floor(n^beta)` with
/// `beta = (1 - alpha) / 3`, copy size the largest `3k' + 1` not above it with
/// `k' = 1 (mod 3)` and `k' >= 10`, `floor(n / floor(n^beta))` copies, and
/// `floor(n^alpha)` strategic agents.
pub fn gen_dumbbell_farm(n: usize, alpha: Exponent, mode: Mode) -> Result<InstanceSpec> {
    let beta = alpha.one_minus_over_three()?;
    let scale = beta.floor_pow(n as u64) as usize;
    let kprime = (10..)
        .step_by(3)
        .take_while(|kp| 3 * kp + 1 <= scale)
        .last()
        .ok_or_else(|| {
            HkError::InvalidParam(format!(
                "n = {n}, alpha = {alpha}: copy scale floor(n^beta) = {scale} is below the \
                 smallest dumbbell (31 agents)"
            ))
        })?;
    let spec = dumbbell_farm_with(n, kprime, n / scale, mode)?;
    Ok(spec
        .with_m(alpha.floor_pow(n as u64) as usize)
        .param("alpha", alpha.to_string())
        .param("scale", scale as u64))
}

/// `floor(n / k)` equidistant chains of `k = 2 c2 + 2` agents each.
pub fn gen_equidistant_farm(n: usize, c2: usize, mode: Mode) -> Result<InstanceSpec> {
    if c2 < 1 {
        return Err(HkError::InvalidParam("equidistant farm needs c2 >= 1".into()));
    }
    let k = 2 * c2 + 2;
    let copies = n / k;
    if copies == 0 {
        return Err(HkError::InvalidParam(format!(
            "n = {n} is smaller than one chain of {k} agents"
        )));
    }
    let base = |off: i64| (0..k as i64).map(|i| Num::int(off + i, mode)).collect();
    let spec = farm("equidistant-farm", n, copies, base, k as i64 - 1, mode);
    Ok(spec.param("c2", c2 as u64).param("k", k as u64))
}

/// `n` opinions drawn uniformly from the grid `{j / 64 : 0 <= j <= 64 span}`.
pub fn gen_random(n: usize, m: usize, span: f64, seed: u64, mode: Mode) -> Result<InstanceSpec> {
    if n < 1 {
        return Err(HkError::InvalidParam("random instance needs n >= 1".into()));
    }
    if !(span >= 0.0 && span.is_finite()) {
        return Err(HkError::InvalidParam(format!("bad span {span}")));
    }
    let steps = (span * 64.0).floor() as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = (0..n)
        .map(|_| Num::ratio(rng.gen_range(0..=steps), 64, mode))
        .collect();
    let mut spec = InstanceSpec::build("random", mode, m, xs).param("span", span);
    spec.seed = Some(seed);
    Ok(spec)
}

/// Generator names accepted by [`generate`].
pub const GENERATORS: [&str; 8] = [
    "equidistant",
    "dumbbell",
    "three-cluster",
    "not-too-fast",
    "dumbbell-farm",
    "dumbbell-farm-sized",
    "equidistant-farm",
    "random",
];

/// Builds a named instance. `size` is `k` for `dumbbell` and `three-cluster`
/// and `n` otherwise; `params` supplies `alpha`, `kprime`, `c2` or `span`.
pub fn generate(
    name: &str,
    size: usize,
    params: &serde_json::Map<String, Value>,
    mode: Mode,
    seed: u64,
) -> Result<InstanceSpec> {
    let int = |key: &str, default: u64| -> Result<usize> {
        match params.get(key) {
            None => Ok(default as usize),
            Some(v) => v
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| HkError::Parse(format!("generator param `{key}` must be an integer"))),
        }
    };
    match name {
        "equidistant" => gen_equidistant(size, mode),
        "dumbbell" => gen_dumbbell(size, mode),
        "three-cluster" => gen_three_cluster(size, mode),
        "not-too-fast" => gen_not_too_fast(size, mode),
        "dumbbell-farm" => {
            let alpha: Exponent = match params.get("alpha") {
                Some(Value::String(s)) => s.parse()?,
                _ => return Err(HkError::InvalidParam("dumbbell-farm needs `alpha` as \"p/q\"".into())),
            };
            gen_dumbbell_farm(size, alpha, mode)
        }
        "dumbbell-farm-sized" => gen_dumbbell_farm_sized(size, int("kprime", 10)?, mode),
        "equidistant-farm" => gen_equidistant_farm(size, int("c2", 2)?, mode),
        "random" => {
            let span = match params.get("span") {
                None => 8.0,
                Some(v) => v
                    .as_f64()
                    .ok_or_else(|| HkError::Parse("generator param `span` must be a number".into()))?,
            };
            gen_random(size, 0, span, seed, mode)
        }
        other => Err(HkError::InvalidParam(format!(
            "unknown generator `{other}` (expected one of {})",
            GENERATORS.join(", ")
        ))),
    }
}

/// Index ranges of the components at `t = 0`.
pub fn initial_components(spec: &InstanceSpec) -> Vec<(usize, usize)> {
    components_of(&spec.opinions)
        .iter()
        .map(|c| (c.left, c.right))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{components, has_converged};
    use num_rational::BigRational;

    const R: Mode = Mode::Rational;

    fn q(p: i64, d: i64) -> Num {
        Num::ratio(p, d, R)
    }

    #[test]
    fn equidistant_layouts() {
        assert_eq!(gen_equidistant(1, R).unwrap().opinions, vec![q(0, 1)]);
        let four = gen_equidistant(4, R).unwrap();
        assert_eq!(four.opinions, (0..4).map(|i| q(i, 1)).collect::<Vec<_>>());
        let big = gen_equidistant(81, R).unwrap();
        assert_eq!(big.n, 81);
        assert_eq!(big.opinions[80], q(80, 1));
        assert!(gen_equidistant(0, R).is_err());
    }

    #[test]
    fn dumbbell_layout() {
        let d = gen_dumbbell(10, R).unwrap();
        assert_eq!(d.n, 31);
        assert!(d.opinions[..10].iter().all(|v| *v == q(-1, 10)));
        for i in 0..=10 {
            assert_eq!(d.opinions[10 + i as usize], q(i, 1));
        }
        assert!(d.opinions[21..].iter().all(|v| *v == q(101, 10)));
        let s = d.initial_state().unwrap();
        let cs = components(&s);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].width, q(102, 10));
        assert_eq!(gen_dumbbell(12, R).unwrap().n, 37);
        assert!(gen_dumbbell(9, R).is_err());
    }

    #[test]
    fn three_cluster_layout() {
        let t = gen_three_cluster(15, R).unwrap();
        assert_eq!(t.n, 465);
        assert_eq!(t.m, 1);
        let cs = components(&t.initial_state().unwrap());
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].width, q(4, 3));
        assert!(gen_three_cluster(14, R).is_err());
    }

    #[test]
    fn not_too_fast_layout() {
        let five = gen_not_too_fast(5, R).unwrap();
        assert_eq!(five.opinions, vec![q(0, 1), q(1, 4), q(2, 3), q(5, 4), q(4, 3)]);
        let six = gen_not_too_fast(6, R).unwrap();
        assert_eq!(six.opinions[5], q(6, 1));
        assert!(gen_not_too_fast(4, R).is_err());
    }

    #[test]
    fn farms_are_separated() {
        let f = gen_dumbbell_farm_sized(100, 10, R).unwrap();
        assert_eq!(f.param_u64("copies"), Some(3));
        assert_eq!(f.param_u64("leftover"), Some(7));
        let comps = initial_components(&f);
        assert_eq!(comps.len(), 4);
        assert_eq!(comps[0], (0, 30));
        assert_eq!(comps[3], (93, 99));
        for w in f.opinions.windows(2) {
            let gap = (&w[1] - &w[0]).to_f64();
            assert!(gap <= 1.0 || gap >= FARM_GAP as f64 - 1.0);
        }

        let e = gen_equidistant_farm(20, 2, R).unwrap();
        assert_eq!(e.param_u64("k"), Some(6));
        assert_eq!(initial_components(&e).len(), 4);
        assert_eq!(e.param_u64("leftover"), Some(2));
    }

    #[test]
    fn alpha_farm_needs_large_n() {
        let half: Exponent = "1/2".parse().unwrap();
        assert!(gen_dumbbell_farm(400, half, R).is_err());
        // beta = 1/6 with 40^6 <= n: copy scale 40 admits k' = 13
        let zero = Exponent::new(0, 1).unwrap();
        let n = 40usize.pow(3);
        let f = gen_dumbbell_farm(n, zero, Mode::Float64).unwrap();
        assert_eq!(f.param_u64("k"), Some(13));
        assert_eq!(f.param_u64("copies"), Some((n / 40) as u64));
        assert_eq!(f.m, 1);
    }

    #[test]
    fn generate_by_name() {
        let none = serde_json::Map::new();
        assert_eq!(generate("dumbbell", 10, &none, R, 0).unwrap().n, 31);
        assert_eq!(generate("equidistant", 4, &none, R, 0).unwrap().n, 4);
        let mut p = serde_json::Map::new();
        p.insert("c2".into(), 2.into());
        assert_eq!(generate("equidistant-farm", 12, &p, R, 0).unwrap().n, 12);
        assert!(generate("dumbbell-farm", 100, &none, R, 0).is_err());
        assert!(generate("nope", 3, &none, R, 0).is_err());
    }

    #[test]
    fn random_is_seeded_and_on_grid() {
        let a = gen_random(10, 0, 5.0, 7, R).unwrap();
        let b = gen_random(10, 0, 5.0, 7, R).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.opinions, gen_random(10, 0, 5.0, 8, R).unwrap().opinions);
        for v in &a.opinions {
            let r = v.as_rational().unwrap();
            assert!((r * BigRational::from_integer(64.into())).is_integer());
            assert!(v.to_f64() >= 0.0 && v.to_f64() <= 5.0);
        }
        assert!(a.opinions.windows(2).all(|w| w[0] <= w[1]));

        let flat = gen_random(2, 0, 0.0, 3, R).unwrap();
        assert!(has_converged(&flat.initial_state().unwrap()));
    }

    #[test]
    fn json_round_trip() {
        let d = gen_dumbbell(10, R).unwrap();
        assert_eq!(InstanceSpec::from_json(&d.to_json()).unwrap(), d);
        let f = gen_random(6, 2, 3.0, 1, Mode::Float64).unwrap();
        assert_eq!(InstanceSpec::from_json(&f.to_json()).unwrap(), f);
        let raw = r#"{"name":"x","mode":"rational","n":2,"m":0,"opinions":["0/1","3/2"]}"#;
        let parsed = InstanceSpec::from_json(raw).unwrap();
        assert_eq!(parsed.opinions, vec![q(0, 1), q(3, 2)]);
        let bad = r#"{"name":"x","mode":"rational","n":3,"m":0,"opinions":["0/1","3/2"]}"#;
        assert!(InstanceSpec::from_json(bad).is_err());
    }
}
