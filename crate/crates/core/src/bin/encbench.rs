use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use encinfo::bench::{emit_report, run_lmm_benchmark, run_mixture_benchmark, BenchmarkReport, LmmBenchOptions, MixtureBenchOptions};
use encinfo::data::{
    adjusted_rand_index, clustering_accuracy, load_labeled_csv, load_olive_oil, read_matrix_csv, simulate_heritability_data,
    write_matrix_csv, write_simulation, LabeledDataset, SimulationSpec,
};
use encinfo::encoding::{encode_features, fit_feature_encoder, fit_sample_encoder, Encoder};
use encinfo::lmm::{encoded_reml_fit, reml_fit, FitConfig, GrmMatrix, LmmInputs};
use encinfo::mixture::{cluster_assign, em_fit_gmm, em_fit_mfa, encoded_mixture_fit, EmConfig, Family};
use encinfo::{Error, Result};

/// Encoded mixed-model and mixture benchmarks.
///
/// Every flag may also be set in a TOML file passed with `--config`: use the
/// long flag name without dashes as key (`m-values = [250, 500]`,
/// `parallel = true`), either at top level or inside a table named after the
/// subcommand. Flags given on the command line win over the file.
#[derive(Parser, Debug)]
#[command(name = "encbench", version, args_override_self = true)]
struct Cli {
    /// Base seed; runs use seed, seed + 1, ...
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for every file written.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// TOML file of flag values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate genotypes, phenotype and GRM into phenotype.csv, genotype.csv, grm.csv.
    Simulate(SimArgs),
    /// REML fit of y on an intercept with one genetic component.
    FitLmm(FitLmmArgs),
    /// Mixture fit on a labeled CSV, optionally feature-encoded.
    FitMixture(FitMixtureArgs),
    /// Learn an encoder and write it as encoder.csv.
    Encode(EncodeArgs),
    /// Full vs. encoded REML over simulated permutations.
    BenchLmm(BenchLmmArgs),
    /// Clustering accuracy across feature-encoding sizes.
    BenchMixture(BenchMixtureArgs),
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Number of samples.
    #[arg(long, default_value_t = 1000)]
    n_samples: usize,
    /// Number of SNPs.
    #[arg(long, default_value_t = 100)]
    n_snps: usize,
    /// True heritability in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    h2: f64,
}

#[derive(Args, Debug)]
struct FitLmmArgs {
    /// Single-column phenotype CSV with header.
    #[arg(long)]
    phenotype: PathBuf,
    /// Square GRM CSV with header.
    #[arg(long)]
    grm: PathBuf,
    /// Fit on the top-m eigenvectors of the GRM instead of all samples.
    #[arg(long)]
    m: Option<usize>,
    /// Encoder file (from `encode --kind sample`) used instead of learning one.
    #[arg(long, conflicts_with = "m")]
    encoder: Option<PathBuf>,
    /// Maximum AI-REML iterations.
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    /// Full-covariance Gaussian mixture.
    Gmm,
    /// Mixture of factor analyzers.
    Mfa,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Labeled CSV; the bundled olive oil table when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Name of the class column.
    #[arg(long, default_value = "macro_area")]
    label_column: String,
    /// Use raw feature values instead of z-scores.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Number of components; the number of classes when omitted.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value_t = FamilyArg::Gmm)]
    family: FamilyArg,
    /// Latent factors per component (mfa only).
    #[arg(long, default_value_t = 1)]
    q_factors: usize,
    /// Maximum EM iterations.
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
}

#[derive(Args, Debug)]
struct FitMixtureArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Encode features to r dimensions before fitting.
    #[arg(long)]
    r: Option<usize>,
    /// Independent initializations; the best likelihood is kept.
    #[arg(long, default_value_t = 10)]
    restarts: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EncoderKind {
    /// m × n sample encoder from a GRM.
    Sample,
    /// p × r feature encoder from a data matrix.
    Feature,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long, value_enum)]
    kind: EncoderKind,
    /// Target size: m for sample encoders, r for feature encoders.
    #[arg(long)]
    size: usize,
    /// GRM CSV (sample encoders).
    #[arg(long, required_if_eq("kind", "sample"))]
    grm: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Debug)]
struct BenchLmmArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Encoding sizes m, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "500")]
    m_values: Vec<usize>,
    /// Number of simulated permutations.
    #[arg(long, default_value_t = 100)]
    permutations: usize,
    /// Run permutations on all cores (runtimes become unreliable).
    #[arg(long)]
    parallel: bool,
}

#[derive(Args, Debug)]
struct BenchMixtureArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Encoding sizes r, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6,7,8")]
    r_values: Vec<usize>,
    /// Runs per encoding size.
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Run seeds on all cores (runtimes become unreliable).
    #[arg(long)]
    parallel: bool,
}

/// Turns a TOML table into `--key value` tokens for the active subcommand.
fn config_tokens(path: &Path, subcommand: &str) -> std::result::Result<Vec<OsString>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let table: toml::Table = text.parse().map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    let mut push = |key: &str, value: &toml::Value| -> std::result::Result<(), String> {
        let flag = format!("--{key}");
        match value {
            toml::Value::Boolean(true) => out.push(flag.into()),
            toml::Value::Boolean(false) => {}
            toml::Value::String(s) => out.extend([flag.into(), s.into()]),
            toml::Value::Integer(i) => out.extend([flag.into(), i.to_string().into()]),
            toml::Value::Float(f) => out.extend([flag.into(), f.to_string().into()]),
            toml::Value::Array(items) => {
                let parts: Vec<String> = items
                    .iter()
                    .map(|v| match v {
                        toml::Value::Integer(i) => Ok(i.to_string()),
                        toml::Value::Float(f) => Ok(f.to_string()),
                        toml::Value::String(s) => Ok(s.clone()),
                        _ => Err(format!("unsupported list item for `{key}`")),
                    })
                    .collect::<std::result::Result<_, _>>()?;
                out.extend([flag.into(), parts.join(",").into()]);
            }
            _ => return Err(format!("unsupported value for `{key}`")),
        }
        Ok(())
    };
    for (key, value) in &table {
        match value {
            toml::Value::Table(_) => {}
            v if key != "config" => push(key, v)?,
            _ => {}
        }
    }
    if let Some(toml::Value::Table(section)) = table.get(subcommand) {
        for (key, value) in section {
            push(key, value)?;
        }
    }
    Ok(out)
}

fn parse_cli() -> std::result::Result<Cli, clap::Error> {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let cli = Cli::try_parse_from(&argv)?;
    let Some(path) = cli.config.clone() else { return Ok(cli) };
    let sub = subcommand_name(&cli.command);
    let pos = argv.iter().position(|a| a == sub).expect("subcommand present after a successful parse");
    let tokens = config_tokens(&path, sub).map_err(|msg| {
        use clap::CommandFactory;
        Cli::command().error(clap::error::ErrorKind::InvalidValue, msg)
    })?;
    let mut merged = argv[..=pos].to_vec();
    merged.extend(tokens);
    merged.extend_from_slice(&argv[pos + 1..]);
    Cli::try_parse_from(merged)
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::FitLmm(_) => "fit-lmm",
        Command::FitMixture(_) => "fit-mixture",
        Command::Encode(_) => "encode",
        Command::BenchLmm(_) => "bench-lmm",
        Command::BenchMixture(_) => "bench-mixture",
    }
}

fn load_data(args: &DataArgs) -> Result<LabeledDataset> {
    match &args.data {
        Some(path) => load_labeled_csv(path, &args.label_column, !args.no_standardize),
        None if args.label_column == "macro_area" => load_olive_oil(!args.no_standardize),
        None => encinfo::data::read_labeled_csv(
            encinfo::data::OLIVE_OIL_CSV.as_bytes(),
            "olive",
            &args.label_column,
            !args.no_standardize,
        ),
    }
}

fn family(m: &ModelArgs) -> Family {
    match m.family {
        FamilyArg::Gmm => Family::FullCovariance,
        FamilyArg::Mfa => Family::FactorAnalytic { q_factors: m.q_factors },
    }
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(dir.join(name), &text)?;
    // a closed pipe (`| head`) is not a failure
    let _ = writeln!(std::io::stdout(), "{text}");
    Ok(())
}

fn finish_report(report: &BenchmarkReport, out_dir: &Path) -> Result<bool> {
    for path in emit_report(report, out_dir)? {
        eprintln!("wrote {}", path.display());
    }
    for g in &report.summary {
        eprintln!(
            "{:>8} {:>5}  estimate mean {:.4} sd {:.4}  runtime median {:.4}s  (n = {})",
            g.method, g.reduction_param, g.estimate.mean, g.estimate.sd, g.runtime_seconds.median, g.estimate.count
        );
    }
    Ok(!report.has_errors())
}

fn run(cli: Cli) -> Result<bool> {
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::Simulate(a) => {
            let data = simulate_heritability_data(&SimulationSpec::new(a.n_samples, a.n_snps, a.h2, cli.seed)?)?;
            write_simulation(&data, out)?;
            eprintln!("wrote simulation to {} (checksum {:016x})", out.display(), data.checksum());
        }
        Command::FitLmm(a) => {
            let y = read_matrix_csv(&a.phenotype)?;
            if y.ncols() != 1 {
                return Err(Error::Input(format!("{} must have one column", a.phenotype.display())));
            }
            let y: Vec<f64> = (0..y.nrows()).map(|i| y[(i, 0)]).collect();
            let inputs = LmmInputs::with_intercept(y, GrmMatrix::new(read_matrix_csv(&a.grm)?)?)?;
            let cfg = FitConfig { max_iterations: a.max_iterations, include_encoder_construction: true, ..Default::default() };
            let fit = match (a.m, &a.encoder) {
                (Some(m), _) => encoded_reml_fit(&inputs, &fit_sample_encoder(inputs.grm(), m)?, &cfg)?,
                (None, Some(path)) => match Encoder::load(path)? {
                    Encoder::Sample(enc) => encoded_reml_fit(&inputs, &enc, &cfg)?,
                    Encoder::Feature(_) => return Err(Error::Input("expected a sample encoder".into())),
                },
                (None, None) => reml_fit(&inputs, &cfg)?,
            };
            write_json(out, "lmm_fit.json", &serde_json::to_value(fit.report())?)?;
        }
        Command::FitMixture(a) => {
            let ds = load_data(&a.data)?;
            let k = a.model.k.unwrap_or(ds.n_classes);
            let cfg = EmConfig { max_iterations: a.model.max_iterations, n_restarts: a.restarts, seed: cli.seed, ..Default::default() };
            let fam = family(&a.model);
            let (model, labels, runtime) = match a.r {
                Some(r) => {
                    let enc = encoded_mixture_fit(&ds.x, &fit_feature_encoder(&ds.x, r)?, k, fam, &cfg)?;
                    let labels = enc.assign(ds.x.as_ref())?;
                    (enc.model_enc, labels, enc.runtime_seconds)
                }
                None => {
                    let model = match fam {
                        Family::FullCovariance => em_fit_gmm(&ds.x, k, &cfg)?,
                        Family::FactorAnalytic { q_factors } => em_fit_mfa(&ds.x, k, q_factors, &cfg)?,
                    };
                    let labels = cluster_assign(&model, ds.x.as_ref())?;
                    let secs = model.runtime_seconds;
                    (model, labels, secs)
                }
            };
            let value = json!({
                "model": serde_json::from_str::<serde_json::Value>(&model.to_json())?,
                "accuracy": clustering_accuracy(&labels, &ds.labels)?,
                "ari": adjusted_rand_index(&labels, &ds.labels)?,
                "iterations": model.n_iterations,
                "converged": model.converged,
                "runtime_seconds": runtime,
                "labels": labels,
            });
            write_json(out, "mixture_fit.json", &value)?;
        }
        Command::Encode(a) => {
            std::fs::create_dir_all(out)?;
            let enc = match a.kind {
                EncoderKind::Sample => {
                    let grm = GrmMatrix::new(read_matrix_csv(a.grm.as_ref().expect("required by clap"))?)?;
                    Encoder::Sample(fit_sample_encoder(&grm, a.size)?)
                }
                EncoderKind::Feature => {
                    let ds = load_data(&a.data)?;
                    let b = fit_feature_encoder(&ds.x, a.size)?;
                    let names: Vec<String> = (0..a.size).map(|j| format!("e{j}")).collect();
                    write_matrix_csv(out.join("encoded.csv"), &names, encode_features(&b, ds.x.as_ref())?.as_ref())?;
                    Encoder::Feature(b)
                }
            };
            enc.save(out.join("encoder.csv"))?;
            eprintln!("wrote {}", out.join("encoder.csv").display());
        }
        Command::BenchLmm(a) => {
            let spec = SimulationSpec::new(a.sim.n_samples, a.sim.n_snps, a.sim.h2, cli.seed)?;
            let opts = LmmBenchOptions { parallel: a.parallel, ..Default::default() };
            let report = run_lmm_benchmark(&spec, &a.m_values, a.permutations, cli.seed, &opts)?;
            return finish_report(&report, out);
        }
        Command::BenchMixture(a) => {
            let ds = load_data(&a.data)?;
            let k = a.model.k.unwrap_or(ds.n_classes);
            let em = EmConfig { max_iterations: a.model.max_iterations, ..Default::default() };
            let opts = MixtureBenchOptions { em, parallel: a.parallel };
            let report = run_mixture_benchmark(&ds, &a.r_values, k, a.runs, family(&a.model), cli.seed, &opts)?;
            return finish_report(&report, out);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match parse_cli() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ (Error::Dimension(_) | Error::Input(_) | Error::Identifiability(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
