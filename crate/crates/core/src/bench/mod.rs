//! Permutation benchmarks for encoded vs. full fits.
//!
//! [`run_lmm_benchmark`] simulates one data set per permutation seed and
//! fits the full REML model plus one encoded model per requested `m` on
//! that same draw. [`run_mixture_benchmark`] refits a mixture on a labeled
//! data set once per seed, unencoded and at each requested encoding size
//! `r`. Both produce a [`BenchmarkReport`], which [`emit_report`] writes as
//! CSV, JSON and SVG box plots.

mod report;
mod svg;

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{adjusted_rand_index, clustering_accuracy, simulate_heritability_data, LabeledDataset, SimulationSpec};
use crate::encoding::{fit_feature_encoder, fit_sample_encoder};
use crate::linalg;
use crate::lmm::{encoded_reml_fit, reml_fit, FitConfig, LmmFit, LmmInputs};
use crate::mixture::{cluster_assign, em_fit_gmm, em_fit_mfa, encoded_mixture_fit, EmConfig, Family, MixtureModel};
use crate::{Error, Result};

pub use report::{emit_report, write_records_csv, RECORDS_HEADER};
pub use svg::{boxplot_svg, BoxStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Lmm,
    Mixture,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Lmm => "lmm",
            Experiment::Mixture => "mixture",
        })
    }
}

/// One fit inside a benchmark sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRecord {
    pub experiment: Experiment,
    /// `full` / `encoded` for the mixed model, `baseline` / `encoded` for
    /// mixtures.
    pub method: String,
    /// `m` for the mixed model (`n` for the full fit), `r` for mixtures
    /// (`p` for the baseline).
    pub reduction_param: usize,
    pub seed: u64,
    /// Heritability estimate or clustering accuracy; NaN when the fit failed.
    pub estimate: f64,
    pub runtime_seconds: f64,
    /// Adjusted Rand index (mixtures only).
    pub ari: Option<f64>,
    pub converged: bool,
    /// Smallest likelihood change between accepted iterations.
    pub min_loglik_change: f64,
    /// Largest responsibility row-sum error (mixtures only).
    pub max_responsibility_error: Option<f64>,
    /// Checksum of the data handed to the fit.
    pub data_checksum: u64,
    pub error: Option<String>,
}

impl BenchmarkRecord {
    fn failed(experiment: Experiment, method: &str, reduction_param: usize, seed: u64, checksum: u64, err: &Error) -> Self {
        Self {
            experiment,
            method: method.to_string(),
            reduction_param,
            seed,
            estimate: f64::NAN,
            runtime_seconds: f64::NAN,
            ari: None,
            converged: false,
            min_loglik_change: f64::NAN,
            max_responsibility_error: None,
            data_checksum: checksum,
            error: Some(err.to_string()),
        }
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }
}

/// Location and spread of one measured quantity within a group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub count: usize,
}

impl Stats {
    /// Sample standard deviation (`n − 1`), quantiles by linear
    /// interpolation between order statistics. `None` for empty input.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, sd, median: quantile(&v, 0.5), q25: quantile(&v, 0.25), q75: quantile(&v, 0.75), count: n })
    }
}

/// Quantile of sorted data, linear interpolation (`(n − 1)·q` rank).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub method: String,
    pub reduction_param: usize,
    pub estimate: Stats,
    pub runtime_seconds: Stats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ari: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub experiment: Experiment,
    pub records: Vec<BenchmarkRecord>,
    /// Per `(method, reduction_param)`, in order of first appearance.
    pub summary: Vec<GroupSummary>,
}

impl BenchmarkReport {
    pub fn new(experiment: Experiment, records: Vec<BenchmarkRecord>) -> Self {
        let summary = summarize(&records);
        Self { experiment, records, summary }
    }

    pub fn group(&self, method: &str, reduction_param: usize) -> Option<&GroupSummary> {
        self.summary.iter().find(|g| g.method == method && g.reduction_param == reduction_param)
    }

    pub fn has_errors(&self) -> bool {
        self.records.iter().any(BenchmarkRecord::is_error)
    }

    /// Successful records of one group.
    pub fn values(&self, method: &str, reduction_param: usize) -> impl Iterator<Item = &BenchmarkRecord> {
        let method = method.to_string();
        self.records
            .iter()
            .filter(move |r| !r.is_error() && r.method == method && r.reduction_param == reduction_param)
    }
}

/// Group statistics over successful records.
pub fn summarize(records: &[BenchmarkRecord]) -> Vec<GroupSummary> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in records {
        let key = (r.method.clone(), r.reduction_param);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .filter_map(|(method, param)| {
            let ok: Vec<&BenchmarkRecord> = records
                .iter()
                .filter(|r| !r.is_error() && r.method == method && r.reduction_param == param)
                .collect();
            let est: Vec<f64> = ok.iter().map(|r| r.estimate).collect();
            let rt: Vec<f64> = ok.iter().map(|r| r.runtime_seconds).collect();
            let ari: Vec<f64> = ok.iter().filter_map(|r| r.ari).collect();
            Some(GroupSummary {
                estimate: Stats::from_values(&est)?,
                runtime_seconds: Stats::from_values(&rt)?,
                ari: Stats::from_values(&ari),
                method,
                reduction_param: param,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct LmmBenchOptions {
    pub fit: FitConfig,
    /// Run permutations on worker threads. Runtimes are then contaminated
    /// by contention; use only for estimate sweeps.
    pub parallel: bool,
}

impl Default for LmmBenchOptions {
    fn default() -> Self {
        Self { fit: FitConfig::default(), parallel: false }
    }
}

fn map_seeds<T: Send>(seeds: Vec<u64>, parallel: bool, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    if parallel {
        seeds.into_par_iter().map(f).collect()
    } else {
        seeds.into_iter().map(f).collect()
    }
}

/// Full vs. encoded REML on `n_permutations` simulated draws, seeds
/// `base_seed + i`. Encoded runtimes include learning the encoder.
pub fn run_lmm_benchmark(
    spec: &SimulationSpec,
    m_values: &[usize],
    n_permutations: usize,
    base_seed: u64,
    opts: &LmmBenchOptions,
) -> Result<BenchmarkReport> {
    spec.validate()?;
    if let Some(&m) = m_values.iter().find(|&&m| m == 0 || m > spec.n_samples) {
        return Err(Error::dim(format!("m = {m} outside 1..={}", spec.n_samples)));
    }
    let n = spec.n_samples;
    let seeds: Vec<u64> = (0..n_permutations as u64).map(|i| base_seed + i).collect();
    let per_seed = map_seeds(seeds, opts.parallel, |seed| lmm_permutation(spec, m_values, seed, &opts.fit, n));
    Ok(BenchmarkReport::new(Experiment::Lmm, per_seed.into_iter().flatten().collect()))
}

fn lmm_permutation(spec: &SimulationSpec, m_values: &[usize], seed: u64, cfg: &FitConfig, n: usize) -> Vec<BenchmarkRecord> {
    let inputs = simulate_heritability_data(&spec.with_seed(seed))
        .and_then(|sim| LmmInputs::with_intercept(sim.y, sim.grm));
    let inputs = match inputs {
        Ok(i) => i,
        Err(e) => {
            let mut out = vec![BenchmarkRecord::failed(Experiment::Lmm, "full", n, seed, 0, &e)];
            out.extend(m_values.iter().map(|&m| BenchmarkRecord::failed(Experiment::Lmm, "encoded", m, seed, 0, &e)));
            return out;
        }
    };
    let checksum = linalg::checksum(
        inputs.y().iter().copied().chain([linalg::mat_checksum(inputs.grm().matrix()) as f64]),
    );
    let lmm_record = |method: &str, m: usize, fit: Result<LmmFit>| match fit {
        Ok(fit) => BenchmarkRecord {
            experiment: Experiment::Lmm,
            method: method.to_string(),
            reduction_param: m,
            seed,
            estimate: fit.h2,
            runtime_seconds: fit.runtime_seconds,
            ari: None,
            converged: fit.converged,
            min_loglik_change: fit
                .loglik_trace
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min),
            max_responsibility_error: None,
            data_checksum: checksum,
            error: None,
        },
        Err(e) => BenchmarkRecord::failed(Experiment::Lmm, method, m, seed, checksum, &e),
    };

    let mut out = vec![lmm_record("full", n, reml_fit(&inputs, cfg))];
    let enc_cfg = FitConfig { include_encoder_construction: true, ..*cfg };
    for &m in m_values {
        let fit = fit_sample_encoder(inputs.grm(), m).and_then(|a| encoded_reml_fit(&inputs, &a, &enc_cfg));
        out.push(lmm_record("encoded", m, fit));
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct MixtureBenchOptions {
    /// Base EM settings; the seed is replaced per run and restarts forced
    /// to one so that initialization variability is what gets measured.
    pub em: EmConfig,
    pub parallel: bool,
}

impl Default for MixtureBenchOptions {
    fn default() -> Self {
        Self { em: EmConfig::default(), parallel: false }
    }
}

/// Unencoded baseline plus one encoded fit per `r`, for seeds
/// `base_seed + i`, `i < n_runs`. Encoded runtimes include learning the
/// encoder.
pub fn run_mixture_benchmark(
    dataset: &LabeledDataset,
    r_values: &[usize],
    k: usize,
    n_runs: usize,
    family: Family,
    base_seed: u64,
    opts: &MixtureBenchOptions,
) -> Result<BenchmarkReport> {
    let p = dataset.x.ncols();
    if let Some(&r) = r_values.iter().find(|&&r| r == 0 || r > p) {
        return Err(Error::dim(format!("r = {r} outside 1..={p}")));
    }
    let checksum = linalg::checksum(
        dataset
            .labels
            .iter()
            .map(|&l| l as f64)
            .chain([linalg::mat_checksum(dataset.x.as_ref()) as f64]),
    );
    let seeds: Vec<u64> = (0..n_runs as u64).map(|i| base_seed + i).collect();
    let per_seed = map_seeds(seeds, opts.parallel, |seed| {
        let cfg = EmConfig { seed, n_restarts: 1, include_encoder_construction: true, ..opts.em };
        let record = |method: &str, param: usize, res: Result<(MixtureModel, Vec<usize>, f64)>| match res
            .and_then(|(model, labels, secs)| {
                let acc = clustering_accuracy(&labels, &dataset.labels)?;
                let ari = adjusted_rand_index(&labels, &dataset.labels)?;
                Ok((model, acc, ari, secs))
            }) {
            Ok((model, acc, ari, secs)) => BenchmarkRecord {
                experiment: Experiment::Mixture,
                method: method.to_string(),
                reduction_param: param,
                seed,
                estimate: acc,
                runtime_seconds: secs,
                ari: Some(ari),
                converged: model.converged,
                min_loglik_change: model.diagnostics.min_loglik_change,
                max_responsibility_error: Some(model.diagnostics.max_responsibility_error),
                data_checksum: checksum,
                error: None,
            },
            Err(e) => BenchmarkRecord::failed(Experiment::Mixture, method, param, seed, checksum, &e),
        };

        let baseline = (|| {
            let start = Instant::now();
            let model = match family {
                Family::FullCovariance => em_fit_gmm(&dataset.x, k, &cfg)?,
                Family::FactorAnalytic { q_factors } => em_fit_mfa(&dataset.x, k, q_factors, &cfg)?,
            };
            let secs = start.elapsed().as_secs_f64();
            let labels = cluster_assign(&model, dataset.x.as_ref())?;
            Ok((model, labels, secs))
        })();
        let mut out = vec![record("baseline", p, baseline)];
        for &r in r_values {
            let encoded = (|| {
                let b = fit_feature_encoder(&dataset.x, r)?;
                let fit = encoded_mixture_fit(&dataset.x, &b, k, family, &cfg)?;
                let labels = fit.assign(dataset.x.as_ref())?;
                Ok((fit.model_enc, labels, fit.runtime_seconds))
            })();
            out.push(record("encoded", r, encoded));
        }
        out
    });
    Ok(BenchmarkReport::new(Experiment::Mixture, per_seed.into_iter().flatten().collect()))
}
