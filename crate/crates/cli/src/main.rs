//! `mlkf` — multilayer knockoff filter command line.
//!
//! Subcommands: `mkf` (knockoff-based multilayer selection), `pfilter`
//! (p-value based selection), `bounds` (the worst-case constants), and
//! `simulate` (FDR/power experiments). Every file-writing command drops a
//! reproducibility manifest next to its outputs.
//!
//! Exit codes: 0 success (including empty selections), 1 internal numeric
//! failure, 2 input/validation error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use mlkf_core::bounds;
use mlkf_core::error::Error as CoreError;
use mlkf_core::filter::{run_mkf, FilterConfig, Variant};
use mlkf_core::importance::{Combiner, PenaltySpec};
use mlkf_core::io as mio;
use mlkf_core::knockoffs::{build_equicorrelated_s, fixed_design_knockoffs};
use mlkf_core::model::{standardize, Dataset};
use mlkf_core::pfilter::{
    fisher, generalized_pfilter, simes, Correction, PValueLayers, PfilterConfig,
};
use mlkf_core::sim::{self, derive_seed, DesignKind, ExperimentConfig, Saturation};

#[derive(Parser)]
#[command(
    name = "mlkf",
    version,
    about = "Controlled variable selection with FDR guarantees at multiple group resolutions",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the multilayer knockoff filter on a dataset
    Mkf(MkfArgs),
    /// Run the generalized p-filter on p-values
    Pfilter(PfilterArgs),
    /// Compute the worst-case multiplier constants
    Bounds(BoundsArgs),
    /// Run a simulation experiment
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct MkfArgs {
    /// Design matrix X as headerless CSV (n rows, N columns)
    #[arg(long)]
    x: PathBuf,
    /// Response y as single-column headerless CSV
    #[arg(long)]
    y: PathBuf,
    /// Layer specification CSV with header variable,layer,group
    #[arg(long)]
    groups: PathBuf,
    /// Per-layer FDR targets, comma separated (one per layer)
    #[arg(long, value_delimiter = ',')]
    q: Vec<f64>,
    #[arg(long, value_enum, default_value_t = VariantArg::Plus)]
    variant: VariantArg,
    /// Multiplier on the false-discovery estimate (1.93 gives the
    /// worst-case-guaranteed variant)
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, value_enum, default_value_t = PenaltyArg::L1)]
    penalty: PenaltyArg,
    #[arg(long, value_enum, default_value_t = CombinerArg::SignedMax)]
    combiner: CombinerArg,
    /// Seed for the knockoff basis (per-layer seeds are derived from it)
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output JSON path
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV dump of per-group Z, Z~, W values
    #[arg(long)]
    dump_stats: Option<PathBuf>,
    /// Optional directory for per-layer knockoff matrices as CSV
    #[arg(long)]
    export_knockoffs: Option<PathBuf>,
}

#[derive(Args)]
struct PfilterArgs {
    /// P-values CSV: header `variable,pvalue` for simes/fisher aggregation,
    /// or `layer,group,pvalue` for precomputed group p-values
    #[arg(long)]
    pvalues: PathBuf,
    #[arg(long)]
    groups: PathBuf,
    #[arg(long, value_delimiter = ',')]
    q: Vec<f64>,
    #[arg(long, value_enum, default_value_t = AggregationArg::Simes)]
    aggregation: AggregationArg,
    #[arg(long, value_enum, default_value_t = CorrectionArg::None)]
    correction: CorrectionArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(subcommand)]
    which: BoundsCommand,
}

#[derive(Subcommand)]
enum BoundsCommand {
    /// The union-bound walk constant (about 2.1)
    AknLoose,
    /// The k0-refined walk constant (1.922 at k0 = 20)
    AknRefined {
        #[arg(long)]
        k0: u32,
        /// Use direct 2^k0 path enumeration instead of the DP
        #[arg(long, default_value_t = false)]
        enumerate: bool,
    },
    /// Monte Carlo estimate of the walk expectation
    AknMc {
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// The closed-form p-filter multiplier c_pf(G)
    Cpf {
        #[arg(long)]
        g: u64,
    },
    /// Exact empirical-process constant a_pf(n)
    ApfExact {
        #[arg(long)]
        n: u64,
    },
    /// k0 versus refined bound as CSV (the upper-bounds figure data)
    Table {
        #[arg(long, default_value_t = 20)]
        k0_max: u32,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment configuration TOML
    #[arg(long, conflicts_with = "profile")]
    config: Option<PathBuf>,
    /// Built-in profile
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    /// Output directory (created if missing)
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Plus,
    Basic,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum PenaltyArg {
    L1,
    GroupL2,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum CombinerArg {
    SignedMax,
    Difference,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    Simes,
    Fisher,
    Precomputed,
}

#[derive(Clone, Copy, ValueEnum)]
enum CorrectionArg {
    None,
    Cpf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
    Figure1,
    Ztest,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            match err.downcast_ref::<CoreError>() {
                Some(e) if e.is_input_error() => 2,
                Some(_) => 1,
                None => 2,
            }
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Mkf(args) => cmd_mkf(args),
        Command::Pfilter(args) => cmd_pfilter(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Simulate(args) => cmd_simulate(args),
    }
}

fn input_err(msg: String) -> anyhow::Error {
    anyhow::Error::new(CoreError::InvalidInput(msg))
}

fn write_manifest(
    path: &Path,
    command: String,
    digest_payload: &str,
    outputs: Vec<PathBuf>,
    seeds: BTreeMap<String, u64>,
    started: Instant,
) -> anyhow::Result<()> {
    let manifest = mio::RunManifest {
        command,
        config_digest: hex_digest(digest_payload),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: outputs
            .iter()
            .map(|p| p.to_string_lossy().into_owned())
            .collect(),
        seeds,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    std::fs::write(path, mio::to_sorted_json(&manifest))?;
    Ok(())
}

fn hex_digest(payload: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(payload.as_bytes());
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

fn manifest_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".to_string());
    out.with_file_name(format!("{stem}.manifest.json"))
}

fn cmd_mkf(args: MkfArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let x = mio::read_matrix_csv(&args.x)?;
    let y = mio::read_vector_csv(&args.y)?;
    let spec = mio::read_layer_spec_csv(&args.groups)?;

    if y.len() != x.nrows() {
        return Err(input_err(format!(
            "{}: {} rows but {} has {} responses",
            args.x.display(),
            x.nrows(),
            args.y.display(),
            y.len()
        )));
    }
    if spec.num_variables() != x.ncols() {
        return Err(input_err(format!(
            "{}: {} variables but {} has {} columns",
            args.groups.display(),
            spec.num_variables(),
            args.x.display(),
            x.ncols()
        )));
    }
    if args.q.len() != spec.num_layers() {
        return Err(input_err(format!(
            "--q has {} entries but {} defines {} layers",
            args.q.len(),
            args.groups.display(),
            spec.num_layers()
        )));
    }
    if x.nrows() < 2 * x.ncols() {
        return Err(input_err(format!(
            "{}: fixed-design knockoffs require n >= 2N (n = {}, N = {})",
            args.x.display(),
            x.nrows(),
            x.ncols()
        )));
    }

    let ds = standardize(&Dataset::new(x, y)?)?;
    let sigma = ds.x().transpose() * ds.x();
    let mut designs = Vec::with_capacity(spec.num_layers());
    for m in 0..spec.num_layers() {
        let pkg = build_equicorrelated_s(&sigma, spec.layer(m).groups())?;
        designs.push(fixed_design_knockoffs(
            &ds,
            &pkg,
            derive_seed(args.seed, m as u64, 0),
        )?);
    }

    let pen = match args.penalty {
        PenaltyArg::L1 => PenaltySpec::l1(),
        PenaltyArg::GroupL2 => PenaltySpec::group_l2(),
    };
    let combiner = match args.combiner {
        CombinerArg::SignedMax => Combiner::SignedMax,
        CombinerArg::Difference => Combiner::Difference,
    };
    let variant = match args.variant {
        VariantArg::Plus => Variant::Plus,
        VariantArg::Basic => Variant::Basic,
    };
    let cfg = FilterConfig::new(args.q.clone(), variant, args.c)?;
    let out = run_mkf(&ds, &spec, &designs, &pen, combiner, &cfg)?;

    let mut outputs = vec![args.out.clone()];
    let record = mio::FilterResultRecord::from_mkf(&out, &spec, &cfg);
    std::fs::write(&args.out, mio::to_sorted_json(&record))?;

    if let Some(stats_path) = &args.dump_stats {
        // re-derive the entry pairs for the dump (Z, Z~ per layer)
        let pairs: Vec<mlkf_core::importance::ImportancePair> = (0..spec.num_layers())
            .map(|m| {
                let groups = spec.layer(m).groups();
                let mut aug = nalgebra::DMatrix::zeros(ds.n(), 2 * ds.num_vars());
                aug.view_mut((0, 0), (ds.n(), ds.num_vars())).copy_from(ds.x());
                aug.view_mut((0, ds.num_vars()), (ds.n(), ds.num_vars()))
                    .copy_from(designs[m].x_tilde());
                mlkf_core::importance::penalized_path(&aug, ds.y(), groups, &pen)
            })
            .collect::<mlkf_core::Result<_>>()?;
        mio::write_statistics_csv(stats_path, &spec, &pairs, &out.statistics)?;
        outputs.push(stats_path.clone());
    }
    if let Some(dir) = &args.export_knockoffs {
        std::fs::create_dir_all(dir)?;
        for (m, design) in designs.iter().enumerate() {
            let path = dir.join(format!("knockoffs_layer{}.csv", m + 1));
            mio::write_matrix_csv(&path, design.x_tilde())?;
            outputs.push(path);
        }
    }

    let digest = format!(
        "mkf x={} y={} groups={} q={:?} variant={} c={} penalty={:?} combiner={:?} seed={}",
        args.x.display(),
        args.y.display(),
        args.groups.display(),
        args.q,
        variant.as_str(),
        args.c,
        pen.kind,
        combiner,
        args.seed
    );
    let mpath = manifest_path(&args.out);
    let mut seeds = BTreeMap::new();
    seeds.insert("seed".to_string(), args.seed);
    for m in 0..spec.num_layers() {
        seeds.insert(format!("layer{}", m + 1), derive_seed(args.seed, m as u64, 0));
    }
    outputs.push(mpath.clone());
    write_manifest(&mpath, digest.clone(), &digest, outputs, seeds, started)?;
    Ok(())
}

fn cmd_pfilter(args: PfilterArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let spec = mio::read_layer_spec_csv(&args.groups)?;
    if args.q.len() != spec.num_layers() {
        return Err(input_err(format!(
            "--q has {} entries but {} defines {} layers",
            args.q.len(),
            args.groups.display(),
            spec.num_layers()
        )));
    }

    let layers = match args.aggregation {
        AggregationArg::Precomputed => mio::read_group_pvalues_csv(&args.pvalues, &spec)?,
        AggregationArg::Simes | AggregationArg::Fisher => {
            let base = mio::read_base_pvalues_csv(&args.pvalues)?;
            if base.len() != spec.num_variables() {
                return Err(input_err(format!(
                    "{}: {} p-values but {} defines {} variables",
                    args.pvalues.display(),
                    base.len(),
                    args.groups.display(),
                    spec.num_variables()
                )));
            }
            let mut per_layer = Vec::with_capacity(spec.num_layers());
            for m in 0..spec.num_layers() {
                let layer = spec.layer(m);
                let mut group_p = Vec::with_capacity(layer.num_groups());
                for (g, members) in layer.groups().iter().enumerate() {
                    let p: Vec<f64> = members.iter().map(|&j| base[j]).collect();
                    let value = match args.aggregation {
                        AggregationArg::Simes => simes(&p)?,
                        AggregationArg::Fisher => {
                            let agg = fisher(&p)?;
                            if agg.zero_clamped {
                                eprintln!(
                                    "warning: layer {} group {} contains a zero p-value; Fisher statistic clamped to 0",
                                    m + 1,
                                    layer.external_id(g)
                                );
                            }
                            agg.value
                        }
                        AggregationArg::Precomputed => unreachable!(),
                    };
                    group_p.push(value);
                }
                per_layer.push(group_p);
            }
            PValueLayers::new(per_layer)?
        }
    };

    let correction = match args.correction {
        CorrectionArg::None => Correction::None,
        CorrectionArg::Cpf => Correction::Cpf,
    };
    let cfg = PfilterConfig::new(args.q.clone(), correction)?;
    let (selection, thresholds) = generalized_pfilter(&layers, &spec, &cfg)?;

    let record = mio::PfilterResultRecord {
        layers: (0..spec.num_layers())
            .map(|m| {
                let layer = spec.layer(m);
                let corr = match correction {
                    Correction::None => 1.0,
                    Correction::Cpf => mlkf_core::pfilter::cpf_multiplier(layer.num_groups()),
                };
                let n_selected = selection.groups(m).len();
                let v = corr * layer.num_groups() as f64 * thresholds.get(m);
                mio::LayerResultRecord {
                    groups: selection
                        .groups(m)
                        .iter()
                        .map(|&g| layer.external_id(g))
                        .collect(),
                    n_selected,
                    q: cfg.q[m],
                    t_star: Some(thresholds.get(m)),
                    v_hat: v,
                    fdp_hat: Some(if n_selected == 0 { 0.0 } else { v / n_selected as f64 }),
                }
            })
            .collect(),
        selected_variables: selection.variables().iter().map(|&j| j as u32 + 1).collect(),
        correction: match correction {
            Correction::None => "none".to_string(),
            Correction::Cpf => "cpf".to_string(),
        },
    };
    std::fs::write(&args.out, mio::to_sorted_json(&record))?;

    let digest = format!(
        "pfilter pvalues={} groups={} q={:?} aggregation={:?} correction={}",
        args.pvalues.display(),
        args.groups.display(),
        args.q,
        args.aggregation as u8,
        record.correction
    );
    let mpath = manifest_path(&args.out);
    write_manifest(
        &mpath,
        digest.clone(),
        &digest,
        vec![args.out.clone(), mpath.clone()],
        BTreeMap::new(),
        started,
    )?;
    Ok(())
}

fn cmd_bounds(args: BoundsArgs) -> anyhow::Result<()> {
    match args.which {
        BoundsCommand::AknLoose => print_report(&bounds::akn_loose_bound()),
        BoundsCommand::AknRefined { k0, enumerate } => {
            let rep = if enumerate {
                bounds::akn_refined_bound_enumeration(k0)?
            } else {
                bounds::akn_refined_bound(k0)?
            };
            print_report(&rep);
        }
        BoundsCommand::AknMc { steps, reps, seed } => {
            print_report(&bounds::akn_monte_carlo(steps, reps, seed)?)
        }
        BoundsCommand::Cpf { g } => {
            if g == 0 {
                return Err(input_err("--g must be at least 1".into()));
            }
            let mut rep = bounds::BoundReport {
                name: "cpf".to_string(),
                value: bounds::cpf_formula(g),
                method: bounds::BoundMethod::ClosedForm,
                error_estimate: 0.0,
                parameters: BTreeMap::new(),
            };
            rep.parameters.insert("g".to_string(), serde_json::json!(g));
            print_report(&rep);
        }
        BoundsCommand::ApfExact { n } => print_report(&bounds::apf_exact(n)?),
        BoundsCommand::Table { k0_max } => {
            if k0_max > 24 {
                return Err(input_err("--k0-max is capped at 24".into()));
            }
            println!("k0,bound");
            for (k0, value) in bounds::bounds_table(k0_max)? {
                println!("{k0},{value}");
            }
        }
    }
    Ok(())
}

fn print_report(rep: &bounds::BoundReport) {
    print!("{}", mio::to_sorted_json(rep));
}

/// TOML experiment configuration.
#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct TomlConfig {
    design: Option<String>,
    n: usize,
    num_vars: usize,
    rho: f64,
    snr: f64,
    saturation: Option<String>,
    k_groups: Option<usize>,
    n_nonzero: usize,
    group_size: usize,
    methods: Vec<String>,
    q: Vec<f64>,
    reps: usize,
    master_seed: u64,
    pattern_seed: u64,
    sweep: Option<TomlSweep>,
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct TomlSweep {
    param: String,
    values: Vec<f64>,
}

fn parse_toml_config(path: &Path) -> anyhow::Result<(ExperimentConfig, Option<TomlSweep>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    let parsed: TomlConfig =
        toml::from_str(&text).map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    let design = match parsed.design.as_deref() {
        None | Some("ar1_linear") => DesignKind::Ar1Linear,
        Some("ztest_offset") => DesignKind::ZtestOffset,
        Some(other) => return Err(input_err(format!("unknown design '{other}'"))),
    };
    let saturation = match (parsed.saturation.as_deref(), parsed.k_groups) {
        (Some("high"), None) => Saturation::High,
        (Some("medium"), None) => Saturation::Medium,
        (Some("low"), None) => Saturation::Low,
        (None, Some(k)) => Saturation::Explicit(k),
        (None, None) => {
            return Err(input_err("config needs either saturation or k_groups".into()))
        }
        (Some(other), None) => return Err(input_err(format!("unknown saturation '{other}'"))),
        (Some(_), Some(_)) => {
            return Err(input_err("give saturation or k_groups, not both".into()))
        }
    };
    let methods = parsed
        .methods
        .iter()
        .map(|s| sim::Method::parse(s))
        .collect::<mlkf_core::Result<Vec<_>>>()?;
    let cfg = ExperimentConfig {
        design,
        n: parsed.n,
        num_vars: parsed.num_vars,
        rho: parsed.rho,
        snr: parsed.snr,
        saturation,
        n_nonzero: parsed.n_nonzero,
        group_size: parsed.group_size,
        methods,
        q: parsed.q,
        reps: parsed.reps,
        master_seed: parsed.master_seed,
        pattern_seed: parsed.pattern_seed,
    };
    Ok((cfg, parsed.sweep))
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let (cfg, sweep, label) = match (&args.config, args.profile) {
        (Some(path), None) => {
            let (cfg, sweep) = parse_toml_config(path)?;
            (cfg, sweep, format!("config:{}", path.display()))
        }
        (None, Some(profile)) => {
            let cfg = match profile {
                ProfileArg::Desk => ExperimentConfig::desk_profile(),
                ProfileArg::Paper => ExperimentConfig::paper_profile(),
                ProfileArg::Figure1 => ExperimentConfig::figure1_profile(),
                ProfileArg::Ztest => ExperimentConfig::ztest_profile(),
            };
            let name = match profile {
                ProfileArg::Desk => "desk",
                ProfileArg::Paper => "paper",
                ProfileArg::Figure1 => "figure1",
                ProfileArg::Ztest => "ztest",
            };
            (cfg, None, format!("profile:{name}"))
        }
        _ => return Err(input_err("give exactly one of --config or --profile".into())),
    };

    std::fs::create_dir_all(&args.out_dir)?;
    let mut blocks: Vec<(String, f64, sim::ExperimentResult)> = Vec::new();
    match &sweep {
        None => {
            let result = sim::run(&cfg)?;
            report_failures(&result);
            blocks.push(("snr".to_string(), cfg.snr, result));
        }
        Some(sweep) => {
            for &value in &sweep.values {
                let mut point = cfg.clone();
                match sweep.param.as_str() {
                    "snr" => point.snr = value,
                    "rho" => point.rho = value,
                    other => {
                        return Err(input_err(format!(
                            "sweep param must be 'snr' or 'rho', got '{other}'"
                        )))
                    }
                }
                let result = sim::run(&point)?;
                report_failures(&result);
                blocks.push((sweep.param.clone(), value, result));
            }
        }
    }

    let results_path = args.out_dir.join("results.csv");
    mio::write_experiment_csv(&results_path, &blocks)?;

    let digest = format!(
        "simulate {label} n={} N={} rho={} snr={} k={} nn={} gs={} q={:?} reps={} seeds=({},{})",
        cfg.n,
        cfg.num_vars,
        cfg.rho,
        cfg.snr,
        cfg.saturation.k_groups(),
        cfg.n_nonzero,
        cfg.group_size,
        cfg.q,
        cfg.reps,
        cfg.master_seed,
        cfg.pattern_seed
    );
    let mpath = args.out_dir.join("manifest.json");
    let mut seeds = BTreeMap::new();
    seeds.insert("master_seed".to_string(), cfg.master_seed);
    seeds.insert("pattern_seed".to_string(), cfg.pattern_seed);
    write_manifest(
        &mpath,
        digest.clone(),
        &digest,
        vec![results_path, mpath.clone()],
        seeds,
        started,
    )?;
    Ok(())
}

fn report_failures(result: &sim::ExperimentResult) {
    for f in &result.failures {
        eprintln!("warning: replicate {} failed: {}", f.rep, f.message);
    }
}
