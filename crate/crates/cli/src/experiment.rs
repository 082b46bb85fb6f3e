//! Median-relative-error experiments on G(n, p) graphs.
//!
//! Config files hold `key = value` lines; list-valued keys take
//! comma-separated values and the experiment sweeps their product.
//!
//! ```text
//! graph = gnp
//! n = 100, 200
//! avgdeg = 10
//! instances = 5
//! trials = 25
//! pattern = triangle
//! privacy = node, edge
//! epsilon = 0.5
//! seed = 1
//! ```
//!
//! Optional keys: `theta`, `beta`, `mu` (fixed overrides of the defaults),
//! `zero_noise`, `max_matches`.

use std::time::Instant;

use rayon::prelude::*;
use recmech::lp::SequenceEvaluator;
use recmech::mechanism::{num, release_with, MechanismParams, NoiseSource};
use recmech::subgraph::{build_krelation, enumerate_matches, generate_gnp, Pattern, PrivacyMode, DEFAULT_MATCH_LIMIT};
use recmech::LinearQuery;

use crate::commands::{default_mu, parse_pattern, CliError};

pub const CSV_HEADER: &str = "n,avgdeg,pattern,privacy,epsilon,instances,trials,median_rel_error,mean_time_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: Vec<usize>,
    pub avgdeg: Vec<f64>,
    pub instances: usize,
    pub trials: usize,
    pub patterns: Vec<Pattern>,
    pub privacy: Vec<PrivacyMode>,
    pub epsilon: Vec<f64>,
    pub seed: u64,
    pub theta: f64,
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    pub zero_noise: bool,
    pub max_matches: usize,
}

impl ExperimentConfig {
    pub fn new(n: Vec<usize>, avgdeg: Vec<f64>, epsilon: Vec<f64>) -> Self {
        ExperimentConfig {
            n,
            avgdeg,
            instances: 1,
            trials: 1,
            patterns: vec![Pattern::Triangle],
            privacy: vec![PrivacyMode::Node],
            epsilon,
            seed: 0,
            theta: 1.0,
            beta: None,
            mu: None,
            zero_noise: false,
            max_matches: DEFAULT_MATCH_LIMIT,
        }
    }

    pub fn params(&self, epsilon: f64, mode: PrivacyMode) -> MechanismParams {
        let mut p = MechanismParams::from_epsilon(epsilon);
        p.theta = self.theta;
        p.beta = self.beta.unwrap_or(p.beta);
        p.mu = self.mu.unwrap_or(default_mu(mode));
        p
    }
}

fn list<T>(line: usize, value: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, CliError> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .map(|v| parse(v).ok_or_else(|| CliError::Usage(format!("config line {line}: bad value {v:?}"))))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(CliError::Usage(format!("config line {line}: empty list")));
    }
    Ok(items)
}

fn single<T>(line: usize, value: &str, parse: impl Fn(&str) -> Option<T>) -> Result<T, CliError> {
    parse(value.trim()).ok_or_else(|| CliError::Usage(format!("config line {line}: bad value {value:?}")))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::new(Vec::new(), Vec::new(), Vec::new());
    let positive = |v: &str| v.parse::<f64>().ok().filter(|x| *x > 0.0 && x.is_finite());
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {line}: expected key = value")))?;
        let value = value.trim();
        match key.trim() {
            "graph" if value == "gnp" => {}
            "graph" => return Err(CliError::Usage(format!("config line {line}: only graph = gnp is supported"))),
            "n" => cfg.n = list(line, value, |v| v.parse().ok())?,
            "avgdeg" => cfg.avgdeg = list(line, value, |v| v.parse().ok().filter(|x: &f64| *x >= 0.0))?,
            "instances" => cfg.instances = single(line, value, |v| v.parse().ok().filter(|&x| x >= 1))?,
            "trials" => cfg.trials = single(line, value, |v| v.parse().ok().filter(|&x| x >= 1))?,
            "pattern" => {
                cfg.patterns = value
                    .split(',')
                    .map(|v| parse_pattern(v.trim()))
                    .collect::<Result<_, _>>()
                    .map_err(|e| CliError::Usage(format!("config line {line}: {e}")))?
            }
            "privacy" => cfg.privacy = list(line, value, |v| v.parse().ok())?,
            "epsilon" => cfg.epsilon = list(line, value, positive)?,
            "seed" => cfg.seed = single(line, value, |v| v.parse().ok())?,
            "theta" => cfg.theta = single(line, value, positive)?,
            "beta" => cfg.beta = Some(single(line, value, positive)?),
            "mu" => cfg.mu = Some(single(line, value, positive)?),
            "zero_noise" => cfg.zero_noise = single(line, value, |v| v.parse().ok())?,
            "max_matches" => cfg.max_matches = single(line, value, |v| v.parse().ok())?,
            other => return Err(CliError::Usage(format!("config line {line}: unknown key {other:?}"))),
        }
    }
    for (key, missing) in [("n", cfg.n.is_empty()), ("avgdeg", cfg.avgdeg.is_empty()), ("epsilon", cfg.epsilon.is_empty())] {
        if missing {
            return Err(CliError::Usage(format!("config: {key} is required")));
        }
    }
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub n: usize,
    pub avgdeg: f64,
    pub pattern: String,
    pub privacy: PrivacyMode,
    pub epsilon: f64,
    pub instances: usize,
    pub trials: usize,
    /// Over all runs with a positive true answer; NaN when there are none.
    pub median_rel_error: f64,
    /// Mean wall time of one cold release: enumeration, relation build,
    /// sequence evaluation and noise, with empty caches.
    pub mean_time_ms: f64,
    /// Runs left out because the true answer was 0.
    pub excluded: usize,
}

impl ExperimentRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n,
            num(self.avgdeg),
            self.pattern,
            self.privacy,
            num(self.epsilon),
            self.instances,
            self.trials,
            num(self.median_rel_error),
            num(self.mean_time_ms)
        )
    }

    pub fn to_record(&self) -> String {
        CSV_HEADER
            .split(',')
            .zip(self.to_csv().split(','))
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// splitmix64 step, used to derive independent seeds and stream ids.
fn mix(mut h: u64, v: u64) -> u64 {
    h ^= v.wrapping_add(0x9e37_79b9_7f4a_7c15);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn graph_seed(cfg: &ExperimentConfig, n: usize, avgdeg: f64, instance: usize) -> u64 {
    [n as u64, avgdeg.to_bits(), instance as u64].into_iter().fold(mix(cfg.seed, 0x6772), mix)
}

fn noise_stream(n: usize, avgdeg: f64, instance: usize, pattern: &str, mode: PrivacyMode, eps: f64, trial: usize) -> u64 {
    let tag = pattern.bytes().fold(mode as u64, |h, b| mix(h, b as u64));
    [n as u64, avgdeg.to_bits(), instance as u64, tag, eps.to_bits(), trial as u64]
        .into_iter()
        .fold(0x006e_6f69_7365, mix)
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    }
}

/// Relative errors (None for a zero true answer) and cold-run time, per epsilon.
type JobResult = Vec<(Vec<Option<f64>>, f64)>;

fn run_job(
    cfg: &ExperimentConfig,
    n: usize,
    avgdeg: f64,
    instance: usize,
    pattern: &Pattern,
    mode: PrivacyMode,
) -> Result<JobResult, CliError> {
    let tag = pattern.to_string();
    let g = generate_gnp(n, avgdeg, graph_seed(cfg, n, avgdeg, instance))?;
    let q = LinearQuery::Count;
    let build_start = Instant::now();
    let matches = enumerate_matches(&g, pattern, cfg.max_matches)?;
    let r = build_krelation(&g, pattern, &matches, mode)?;
    let build_ms = build_start.elapsed().as_secs_f64() * 1e3;

    let mut out = Vec::with_capacity(cfg.epsilon.len());
    for &eps in &cfg.epsilon {
        let params = cfg.params(eps, mode);
        params.validate()?;
        let start = Instant::now();
        let mut se = SequenceEvaluator::new(&r, &q).map_err(recmech::mechanism::MechanismError::from)?;
        let truth = se.true_answer();
        let mut errors = Vec::with_capacity(cfg.trials);
        let mut cold_ms = 0.0;
        for trial in 0..cfg.trials {
            let mut ns = if cfg.zero_noise {
                NoiseSource::zero()
            } else {
                NoiseSource::new(cfg.seed, noise_stream(n, avgdeg, instance, &tag, mode, eps, trial))
            };
            let (x_hat, _) = release_with(&mut se, &params, &mut ns)?;
            if trial == 0 {
                cold_ms = build_ms + start.elapsed().as_secs_f64() * 1e3;
            }
            errors.push((truth > 0.0).then(|| (x_hat - truth).abs() / truth));
        }
        out.push((errors, cold_ms));
    }
    Ok(out)
}

/// Runs every configuration. Jobs (one per graph instance, pattern and
/// privacy mode) run on the current rayon pool; rows come out in config order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>, CliError> {
    let mut keys = Vec::new();
    for &n in &cfg.n {
        for &d in &cfg.avgdeg {
            for pattern in &cfg.patterns {
                for &mode in &cfg.privacy {
                    keys.push((n, d, pattern, mode));
                }
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..keys.len()).flat_map(|k| (0..cfg.instances).map(move |i| (k, i))).collect();
    let results: Vec<JobResult> = jobs
        .par_iter()
        .map(|&(k, inst)| {
            let (n, d, pattern, mode) = keys[k];
            run_job(cfg, n, d, inst, pattern, mode)
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for (k, &(n, d, pattern, mode)) in keys.iter().enumerate() {
        let per_instance = &results[k * cfg.instances..(k + 1) * cfg.instances];
        for (e, &eps) in cfg.epsilon.iter().enumerate() {
            let mut errors = Vec::new();
            let mut excluded = 0;
            let mut time = 0.0;
            for res in per_instance {
                let (errs, ms) = &res[e];
                time += ms;
                for err in errs {
                    match err {
                        Some(v) => errors.push(*v),
                        None => excluded += 1,
                    }
                }
            }
            rows.push(ExperimentRow {
                n,
                avgdeg: d,
                pattern: pattern.to_string(),
                privacy: mode,
                epsilon: eps,
                instances: cfg.instances,
                trials: cfg.trials,
                median_rel_error: median(&mut errors),
                mean_time_ms: time / cfg.instances as f64,
                excluded,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lists_and_defaults() {
        let cfg = parse_config(
            "# sweep\ngraph = gnp\nn = 20, 30\navgdeg = 4\nepsilon=0.5,1\nprivacy = node,edge\npattern = triangle, star:2\ntrials = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.n, [20, 30]);
        assert_eq!(cfg.epsilon, [0.5, 1.0]);
        assert_eq!(cfg.patterns, [Pattern::Triangle, Pattern::Star(2)]);
        assert_eq!(cfg.privacy, [PrivacyMode::Node, PrivacyMode::Edge]);
        assert_eq!((cfg.instances, cfg.trials), (1, 3));
        assert_eq!(cfg.params(0.5, PrivacyMode::Node).mu, 1.0);
        assert_eq!(cfg.params(0.5, PrivacyMode::Edge).mu, 0.5);
        assert!((cfg.params(0.5, PrivacyMode::Edge).beta - 0.1).abs() < 1e-15);
    }

    #[test]
    fn config_errors() {
        for text in [
            "n = 10\navgdeg = 2\n",
            "n = 10\navgdeg = 2\nepsilon = 0\n",
            "n = 10\navgdeg = 2\nepsilon = 1\ntrials = 0\n",
            "n = 10\navgdeg = 2\nepsilon = 1\ncolour = red\n",
            "graph = grid\n",
            "n 10\n",
        ] {
            assert!(matches!(parse_config(text), Err(CliError::Usage(_))), "{text}");
        }
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn single_zero_noise_trial_is_the_deterministic_error() {
        let mut cfg = ExperimentConfig::new(vec![30], vec![6.0], vec![1.0]);
        cfg.zero_noise = true;
        cfg.seed = 3;
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 1);

        let g = generate_gnp(30, 6.0, graph_seed(&cfg, 30, 6.0, 0)).unwrap();
        let m = enumerate_matches(&g, &Pattern::Triangle, DEFAULT_MATCH_LIMIT).unwrap();
        let r = build_krelation(&g, &Pattern::Triangle, &m, PrivacyMode::Node).unwrap();
        let (x_hat, trace) = recmech::mechanism::release(
            &r,
            &LinearQuery::Count,
            &cfg.params(1.0, PrivacyMode::Node),
            &mut NoiseSource::zero(),
        )
        .unwrap();
        let truth = trace.true_answer.unwrap();
        assert!(truth > 0.0);
        assert_eq!(rows[0].median_rel_error, (x_hat - truth).abs() / truth);
        assert_eq!(rows[0].excluded, 0);
    }

    #[test]
    fn zero_answers_are_excluded() {
        let mut cfg = ExperimentConfig::new(vec![10], vec![0.0], vec![1.0]);
        cfg.trials = 4;
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows[0].excluded, 4);
        assert!(rows[0].median_rel_error.is_nan());
    }

    #[test]
    fn rows_are_deterministic_and_ordered() {
        let mut cfg = ExperimentConfig::new(vec![25, 20], vec![5.0], vec![0.5, 2.0]);
        cfg.privacy = vec![PrivacyMode::Edge, PrivacyMode::Node];
        cfg.instances = 2;
        cfg.trials = 3;
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        let strip = |rows: &[ExperimentRow]| rows.iter().map(|r| (r.n, r.privacy, r.epsilon, r.median_rel_error.to_bits())).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        let order: Vec<(usize, PrivacyMode, f64)> = a.iter().map(|r| (r.n, r.privacy, r.epsilon)).collect();
        assert_eq!(
            order,
            [
                (25, PrivacyMode::Edge, 0.5),
                (25, PrivacyMode::Edge, 2.0),
                (25, PrivacyMode::Node, 0.5),
                (25, PrivacyMode::Node, 2.0),
                (20, PrivacyMode::Edge, 0.5),
                (20, PrivacyMode::Edge, 2.0),
                (20, PrivacyMode::Node, 0.5),
                (20, PrivacyMode::Node, 2.0),
            ]
        );
    }

    #[test]
    fn records_follow_the_header() {
        let row = ExperimentRow {
            n: 100,
            avgdeg: 10.0,
            pattern: "triangle".into(),
            privacy: PrivacyMode::Edge,
            epsilon: 0.5,
            instances: 5,
            trials: 25,
            median_rel_error: 0.25,
            mean_time_ms: 12.5,
            excluded: 0,
        };
        assert_eq!(row.to_csv(), "100,10,triangle,edge,0.5,5,25,0.25,12.5");
        assert!(row.to_record().starts_with("n=100 avgdeg=10 pattern=triangle privacy=edge"));
    }
}
