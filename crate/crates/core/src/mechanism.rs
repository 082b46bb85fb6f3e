//! The recursive mechanism: Δ by binary search, multiplicative noise on Δ,
//! the clipped estimate X and its Laplace release.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::krelation::{AnnotatedRelation, LinearQuery, RelationError};
use crate::lp::{SequenceError, SequenceEvaluator};
use crate::reference::ReferenceError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanismError {
    #[error("parameter {name} must be positive and finite, got {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Relation(#[from] RelationError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanismParams {
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub beta: f64,
    pub theta: f64,
    pub mu: f64,
}

impl MechanismParams {
    /// Total budget `ε` split evenly, `β = ε/5`, `θ = 1`, `μ = 0.5`.
    pub fn from_epsilon(epsilon: f64) -> Self {
        MechanismParams {
            epsilon1: epsilon / 2.0,
            epsilon2: epsilon / 2.0,
            beta: epsilon / 5.0,
            theta: 1.0,
            mu: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), MechanismError> {
        for (name, value) in [
            ("epsilon1", self.epsilon1),
            ("epsilon2", self.epsilon2),
            ("beta", self.beta),
            ("theta", self.theta),
            ("mu", self.mu),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(MechanismError::InvalidParam { name, value });
            }
        }
        Ok(())
    }
}

/// Seeded source of Laplace noise, or a zero-noise stand-in for testing.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: Option<ChaCha20Rng>,
}

impl NoiseSource {
    /// Independent stream `stream` under master `seed`.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        NoiseSource { rng: Some(rng) }
    }

    /// Every sample is exactly zero. Not differentially private.
    pub fn zero() -> Self {
        NoiseSource { rng: None }
    }

    pub fn is_zero(&self) -> bool {
        self.rng.is_none()
    }

    /// Uniform on the open interval (-1/2, 1/2), symmetric around 0.
    pub fn centered_uniform(&mut self) -> f64 {
        match self.rng.as_mut() {
            None => 0.0,
            Some(rng) => {
                let k = rng.next_u64() >> 11;
                (k as f64 + 0.5) / (1u64 << 53) as f64 - 0.5
            }
        }
    }
}

/// Inverse CDF of `Lap(b)` at `v + 1/2`.
pub fn laplace_from_uniform(v: f64, b: f64) -> f64 {
    if b == 0.0 || v == 0.0 {
        return 0.0;
    }
    -b * v.signum() * (1.0 - 2.0 * v.abs()).ln()
}

pub fn laplace_sample(ns: &mut NoiseSource, b: f64) -> f64 {
    if ns.is_zero() {
        return 0.0;
    }
    laplace_from_uniform(ns.centered_uniform(), b)
}

/// A recursive sequence H with a `g`-bounding sequence G.
pub trait Sequences {
    fn num_participants(&self) -> usize;
    /// The `g` in "`g`-bounding".
    fn bounding_factor(&self) -> u32;
    fn h(&mut self, i: usize) -> Result<f64, MechanismError>;
    fn g(&mut self, i: usize) -> Result<f64, MechanismError>;
    /// A real `i′` with the minimiser of `H_i + (|P| - i)Δ̂` in `{⌊i′⌋, ⌈i′⌉}`.
    fn argmin_hint(&mut self, delta_hat: f64) -> Result<f64, MechanismError>;
}

impl Sequences for SequenceEvaluator {
    fn num_participants(&self) -> usize {
        SequenceEvaluator::num_participants(self)
    }

    fn bounding_factor(&self) -> u32 {
        2
    }

    fn h(&mut self, i: usize) -> Result<f64, MechanismError> {
        Ok(self.eval_h(i as f64)?)
    }

    fn g(&mut self, i: usize) -> Result<f64, MechanismError> {
        Ok(self.eval_g(i)?)
    }

    fn argmin_hint(&mut self, delta_hat: f64) -> Result<f64, MechanismError> {
        Ok(self.fractional_argmin_i(delta_hat)?)
    }
}

fn scale(j: usize, params: &MechanismParams) -> f64 {
    (j as f64 * params.beta).exp() * params.theta
}

/// `Δ = min { e^{jβ}θ : G_{|P|-j} ≤ e^{jβ}θ }`, returned with its `j`.
pub fn compute_delta<S: Sequences + ?Sized>(
    seq: &mut S,
    params: &MechanismParams,
) -> Result<(f64, usize), MechanismError> {
    let n = seq.num_participants();
    let g_top = seq.g(n)?;
    if g_top <= params.theta {
        return Ok((params.theta, 0));
    }
    // G is nondecreasing, so j = ⌈ln(G_|P| / θ)/β⌉ already satisfies the predicate
    let cap = ((g_top / params.theta).ln() / params.beta).ceil();
    let mut hi = if cap < n as f64 { cap as usize } else { n };
    if seq.g(n - hi)? > scale(hi, params) {
        hi = n;
    }
    let mut lo = 0;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if seq.g(n - mid)? <= scale(mid, params) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((scale(hi, params), hi))
}

/// `Δ̂ = e^{μ+Y} Δ` with `Y ~ Lap(β/ε₁)`.
pub fn randomize_delta(delta: f64, params: &MechanismParams, ns: &mut NoiseSource) -> f64 {
    let y = laplace_sample(ns, params.beta / params.epsilon1);
    (params.mu + y).exp() * delta
}

/// `X = min_i H_i + (|P| - i)Δ̂`, returned with the minimising `i` and `i′`.
pub fn compute_x<S: Sequences + ?Sized>(
    seq: &mut S,
    delta_hat: f64,
) -> Result<(f64, usize, f64), MechanismError> {
    let n = seq.num_participants();
    let i_star = seq.argmin_hint(delta_hat)?;
    let lo = (i_star.floor().max(0.0) as usize).min(n);
    let hi = (i_star.ceil().max(0.0) as usize).min(n);
    let mut best = (f64::INFINITY, n);
    for i in [hi, lo] {
        let x = seq.h(i)? + (n - i) as f64 * delta_hat;
        if x < best.0 {
            best = (x, i);
        }
    }
    Ok((best.0, best.1, i_star))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismTrace {
    pub delta: f64,
    pub delta_hat: f64,
    pub j: usize,
    pub i_star: f64,
    pub i: usize,
    pub x: f64,
    pub x_hat: f64,
    pub params: MechanismParams,
    pub g: u32,
    pub true_answer: Option<f64>,
    pub us_sensitivity: Option<f64>,
    pub h_values: BTreeMap<usize, f64>,
    pub g_values: BTreeMap<usize, f64>,
}

impl MechanismTrace {
    /// Single-line `key=value` record. `true_answer` and `us_sensitivity`
    /// are included only with `debug`, since they are not private.
    pub fn to_record(&self, debug: bool) -> String {
        let p = &self.params;
        let mut fields: Vec<(&str, String)> = vec![
            ("delta", num(self.delta)),
            ("delta_hat", num(self.delta_hat)),
            ("j", self.j.to_string()),
            ("i_star", num(self.i_star)),
            ("i", self.i.to_string()),
            ("X", num(self.x)),
            ("X_hat", num(self.x_hat)),
            ("epsilon1", num(p.epsilon1)),
            ("epsilon2", num(p.epsilon2)),
            ("beta", num(p.beta)),
            ("theta", num(p.theta)),
            ("mu", num(p.mu)),
            ("g", self.g.to_string()),
        ];
        if debug {
            fields.push(("true_answer", self.true_answer.map_or("NA".into(), num)));
            fields.push(("us_sensitivity", self.us_sensitivity.map_or("NA".into(), num)));
        }
        let mut out = String::new();
        for (k, v) in fields {
            if !out.is_empty() {
                out.push(' ');
            }
            let _ = write!(out, "{k}={v}");
        }
        out
    }
}

/// Shortest round-trip decimal form; never locale dependent.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Runs the mechanism on precomputed sequences. Sequence values stay cached
/// in `seq`, so repeated trials on one instance reuse the `G` evaluations.
pub fn release_with<S: Sequences + ?Sized>(
    seq: &mut S,
    params: &MechanismParams,
    ns: &mut NoiseSource,
) -> Result<(f64, MechanismTrace), MechanismError> {
    params.validate()?;
    let (delta, j) = compute_delta(seq, params)?;
    let delta_hat = randomize_delta(delta, params, ns);
    let (x, i, i_star) = compute_x(seq, delta_hat)?;
    let x_hat = x + laplace_sample(ns, delta_hat / params.epsilon2);
    let trace = MechanismTrace {
        delta,
        delta_hat,
        j,
        i_star,
        i,
        x,
        x_hat,
        params: *params,
        g: seq.bounding_factor(),
        true_answer: None,
        us_sensitivity: None,
        h_values: BTreeMap::new(),
        g_values: BTreeMap::new(),
    };
    Ok((x_hat, trace))
}

/// [`release_with`] on an evaluator, filling in the diagnostic trace fields.
pub fn release_evaluator(
    se: &mut SequenceEvaluator,
    r: &AnnotatedRelation,
    q: &LinearQuery,
    params: &MechanismParams,
    ns: &mut NoiseSource,
) -> Result<(f64, MechanismTrace), MechanismError> {
    let (x_hat, mut trace) = release_with(se, params, ns)?;
    trace.true_answer = Some(se.true_answer());
    trace.us_sensitivity = Some(r.universal_empirical_sensitivity(q)?.1);
    trace.h_values = se.h_values().clone();
    trace.g_values = se.g_values().clone();
    Ok((x_hat, trace))
}

/// Releases `q(R)` under `(ε₁ + ε₂)`-differential privacy.
pub fn release(
    r: &AnnotatedRelation,
    q: &LinearQuery,
    params: &MechanismParams,
    ns: &mut NoiseSource,
) -> Result<(f64, MechanismTrace), MechanismError> {
    params.validate()?;
    let mut se = SequenceEvaluator::new(r, q)?;
    release_evaluator(&mut se, r, q, params, ns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ParticipantId;
    use crate::krelation::Schema;

    fn triangles() -> AnnotatedRelation {
        let schema = Schema::new(["T"]).unwrap();
        let rows = [("abc", "a & b & c"), ("bcd", "b & c & d"), ("cde", "c & d & e")]
            .into_iter()
            .map(|(t, k)| (vec![t.to_string()], k.parse().unwrap()));
        AnnotatedRelation::new(schema, rows, None).unwrap()
    }

    fn worked_params() -> MechanismParams {
        MechanismParams { epsilon1: 0.5, epsilon2: 0.5, beta: 0.1, theta: 1.0, mu: 0.5 }
    }

    /// Table-backed sequences for checking the search logic in isolation.
    struct Table {
        h: Vec<f64>,
        g: Vec<f64>,
    }

    impl Sequences for Table {
        fn num_participants(&self) -> usize {
            self.h.len() - 1
        }
        fn bounding_factor(&self) -> u32 {
            1
        }
        fn h(&mut self, i: usize) -> Result<f64, MechanismError> {
            Ok(self.h[i])
        }
        fn g(&mut self, i: usize) -> Result<f64, MechanismError> {
            Ok(self.g[i])
        }
        fn argmin_hint(&mut self, delta_hat: f64) -> Result<f64, MechanismError> {
            let n = self.h.len() - 1;
            let best = (0..=n)
                .min_by(|&a, &b| {
                    let fa = self.h[a] + (n - a) as f64 * delta_hat;
                    let fb = self.h[b] + (n - b) as f64 * delta_hat;
                    fa.total_cmp(&fb)
                })
                .unwrap();
            Ok(best as f64)
        }
    }

    #[test]
    fn laplace_inverse_cdf_points() {
        assert_eq!(laplace_from_uniform(0.0, 3.0), 0.0);
        assert!((laplace_from_uniform(0.25, 1.0) - 0.5f64.ln().abs()).abs() < 1e-15);
        assert!((laplace_from_uniform(-0.25, 1.0) + 0.5f64.ln().abs()).abs() < 1e-15);
        assert_eq!(laplace_from_uniform(0.4, 0.0), 0.0);
        assert_eq!(laplace_sample(&mut NoiseSource::zero(), 5.0), 0.0);
    }

    #[test]
    fn uniform_draws_stay_open() {
        let mut ns = NoiseSource::new(1, 0);
        for _ in 0..10_000 {
            let v = ns.centered_uniform();
            assert!(v > -0.5 && v < 0.5);
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draws = |seed, stream| {
            let mut ns = NoiseSource::new(seed, stream);
            (0..4).map(|_| laplace_sample(&mut ns, 1.0)).collect::<Vec<_>>()
        };
        let (a, b, c) = (draws(9, 1), draws(9, 1), draws(9, 2));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn delta_on_triangles() {
        let mut se = SequenceEvaluator::new(&triangles(), &LinearQuery::Count).unwrap();
        let (delta, j) = compute_delta(&mut se, &worked_params()).unwrap();
        assert_eq!(j, 1);
        assert!((delta - 0.1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn delta_on_empty_relation() {
        let ps = ["a", "b"].iter().map(|p| ParticipantId::new(*p).unwrap()).collect();
        let r = AnnotatedRelation::empty(Schema::new(["T"]).unwrap(), ps);
        let mut se = SequenceEvaluator::new(&r, &LinearQuery::Count).unwrap();
        assert_eq!(compute_delta(&mut se, &worked_params()).unwrap(), (1.0, 0));
        let (x_hat, trace) = release(&r, &LinearQuery::Count, &worked_params(), &mut NoiseSource::zero()).unwrap();
        assert_eq!(x_hat, 0.0);
        assert_eq!(trace.i, 2);
    }

    #[test]
    fn binary_search_matches_scan_on_tables() {
        let params = MechanismParams { beta: 0.3, theta: 0.5, ..worked_params() };
        let g = vec![0.0, 0.2, 0.9, 1.0, 4.0, 4.0, 30.0, 31.0];
        let h = vec![0.0; g.len()];
        let n = g.len() - 1;
        let scan = (0..=n).find(|&j| g[n - j] <= scale(j, &params)).unwrap();
        let (_, j) = compute_delta(&mut Table { h, g }, &params).unwrap();
        assert_eq!(j, scan);
    }

    #[test]
    fn randomized_delta_without_noise() {
        let d = randomize_delta(0.1f64.exp(), &worked_params(), &mut NoiseSource::zero());
        assert!((d - 0.6f64.exp()).abs() < 1e-12);
        let p = MechanismParams { mu: f64::MIN_POSITIVE, ..worked_params() };
        assert!((randomize_delta(2.0, &p, &mut NoiseSource::zero()) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn x_on_triangles() {
        let mut se = SequenceEvaluator::new(&triangles(), &LinearQuery::Count).unwrap();
        let (x, i, _) = compute_x(&mut se, 0.6f64.exp()).unwrap();
        assert_eq!(i, 4);
        assert!((x - 0.6f64.exp()).abs() < 1e-9);
        let (x, i, _) = compute_x(&mut se, 100.0).unwrap();
        assert_eq!(i, 5);
        assert!((x - 3.0).abs() < 1e-9);
    }

    #[test]
    fn worked_release() {
        let r = triangles();
        let (x_hat, trace) = release(&r, &LinearQuery::Count, &worked_params(), &mut NoiseSource::zero()).unwrap();
        assert!((x_hat - 1.82212).abs() < 1e-5);
        assert_eq!(trace.true_answer, Some(3.0));
        assert_eq!(trace.us_sensitivity, Some(3.0));
        assert_eq!(trace.g, 2);
        let record = trace.to_record(true);
        let keys: Vec<&str> = record.split(' ').map(|kv| kv.split('=').next().unwrap()).collect();
        assert_eq!(
            keys,
            [
                "delta", "delta_hat", "j", "i_star", "i", "X", "X_hat", "epsilon1", "epsilon2", "beta",
                "theta", "mu", "g", "true_answer", "us_sensitivity"
            ]
        );
        assert!(!trace.to_record(false).contains("true_answer"));
    }

    #[test]
    fn seeded_release_is_deterministic() {
        let r = triangles();
        let run = || release(&r, &LinearQuery::Count, &worked_params(), &mut NoiseSource::new(42, 0)).unwrap().0;
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn rejects_bad_params() {
        let p = MechanismParams { beta: 0.0, ..worked_params() };
        assert!(matches!(p.validate(), Err(MechanismError::InvalidParam { name: "beta", .. })));
    }
}
