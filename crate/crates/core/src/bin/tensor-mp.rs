use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use tensor_mp::config::{make_tau, EntryLaw, ModelKind, ModelParams};
use tensor_mp::experiment::{mp_reference, run_sweep, KSchedule, RunOptions, SweepPlan};
use tensor_mp::gram::build_gram;
use tensor_mp::io::{
    histogram, read_eigen_csv, write_distance_csv, write_eigen_csv, write_histogram_csv,
    write_mp_grid_csv, write_sweep_csv, write_sweep_json, DistanceRecord, EigenDump, EigenMeta,
};
use tensor_mp::metrics::{ks_distance, levy_distance, EmpiricalCdf};
use tensor_mp::mp::{MpLaw, MAX_MOMENT};
use tensor_mp::sampler::sample_base;
use tensor_mp::selftest::run_selftest;
use tensor_mp::spectrum::{eigenvalues, esd};

#[derive(Parser)]
#[command(
    name = "tensor-mp",
    version,
    about = "Spectra of tensor-product sample correlation and covariance matrices"
)]
struct Cli {
    /// JSON config: model parameters for `simulate`, a sweep plan for `sweep`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Record per-replica wall-clock milliseconds in sweep output.
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one point, write eigenvalues and a histogram.
    Simulate(SimulateArgs),
    /// Run a sweep plan and write one row per point and replica.
    Sweep(SweepArgs),
    /// Evaluate the Marčenko–Pastur density, CDF and moments.
    Mp(MpArgs),
    /// KS and Lévy distances between two eigenvalue files.
    Distance(DistanceArgs),
    /// Run the property suite; exits nonzero on any failure.
    Selftest,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, value_parser = lowercase::<ModelKind>)]
    model: Option<ModelKind>,
    #[arg(long, value_parser = lowercase::<EntryLaw>)]
    law: Option<EntryLaw>,
    #[arg(long)]
    replicas: Option<u32>,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    /// Also write each replica's base sample as a binary dump.
    #[arg(long)]
    dump_sample: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Dimensions for a grid sweep (ignored with --config).
    #[arg(long, value_delimiter = ',')]
    n: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    c: Vec<f64>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    replicas: Option<u32>,
}

#[derive(Args)]
struct MpArgs {
    #[arg(long)]
    c: f64,
    #[arg(long, default_value_t = 401)]
    points: usize,
    #[arg(long)]
    from: Option<f64>,
    #[arg(long)]
    to: Option<f64>,
    #[arg(long, default_value_t = 4)]
    moments: u32,
}

#[derive(Args)]
struct DistanceArgs {
    first: PathBuf,
    second: PathBuf,
}

fn lowercase<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(file).with_context(|| format!("parsing {}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build()?;
    if !matches!(cli.command, Command::Selftest) {
        fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    }
    pool.install(|| match &cli.command {
        Command::Simulate(args) => simulate(cli, args),
        Command::Sweep(args) => sweep(cli, args),
        Command::Mp(args) => mp(cli, args),
        Command::Distance(args) => distance(cli, args),
        Command::Selftest => {
            let report = run_selftest(cli.seed.unwrap_or(0));
            println!("{report}");
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    })
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<ExitCode> {
    let mut params: ModelParams = match &cli.config {
        Some(path) => read_json(path)?,
        None => ModelParams::new(10, 2, 0.5),
    };
    if let Some(n) = args.n {
        params.n = n;
    }
    if let Some(k) = args.k {
        params.k = k;
    }
    if let Some(c) = args.c {
        params.c = c;
    }
    if let Some(model) = args.model {
        params.model = model;
    }
    if let Some(law) = args.law {
        params.entry_law = law;
    }
    if let Some(r) = args.replicas {
        params.replicas = r;
    }
    if let Some(seed) = cli.seed {
        params.seed = seed;
    }
    let report = params.validate()?;

    let spectra = (0..params.replicas)
        .into_par_iter()
        .map(|r| -> Result<_> {
            let sample = sample_base(&params, r as u64)?;
            if args.dump_sample {
                let mut w = create(&cli.out, &format!("sample_{r}.bin"))?;
                sample.write_dump(&mut w)?;
                w.flush()?;
            }
            let tau = make_tau(&params.tau, sample.m())?;
            let gram = build_gram(&sample, &tau, params.model)?;
            Ok(esd(&eigenvalues(&gram)?, report.ambient_dim)?)
        })
        .collect::<Result<Vec<_>>>()?;

    let dump = EigenDump {
        meta: Some(EigenMeta {
            n: params.n,
            k: params.k,
            m: report.samples,
            ambient_dim: report.ambient_dim,
            model: params.model,
            seed: params.seed,
        }),
        replicas: spectra
            .iter()
            .enumerate()
            .map(|(r, s)| (r as u32, s.atoms().to_vec()))
            .collect(),
    };
    let law = params
        .tau
        .is_constant_one()
        .then(|| mp_reference(&report))
        .transpose()?;
    let largest = spectra.iter().map(|s| s.largest()).fold(0.0, f64::max);
    let hi = law
        .map_or(largest, |l| largest.max(l.lambda_plus()))
        .max(f64::MIN_POSITIVE);
    let refs: Vec<_> = spectra.iter().collect();
    let bins = histogram(&refs, 0.0, hi, args.bins)?;

    let distances: Vec<DistanceRecord> = match &law {
        Some(law) => {
            let reference = EmpiricalCdf::from_mp(law);
            spectra
                .iter()
                .enumerate()
                .flat_map(|(r, s)| {
                    let f = EmpiricalCdf::from_spectral(s);
                    [
                        DistanceRecord {
                            replica: r as u32,
                            metric: "ks_mp".into(),
                            value: ks_distance(&f, &reference),
                        },
                        DistanceRecord {
                            replica: r as u32,
                            metric: "levy_mp".into(),
                            value: levy_distance(&f, &reference),
                        },
                    ]
                })
                .collect()
        }
        None => Vec::new(),
    };

    match cli.format {
        Format::Csv => {
            let mut w = create(&cli.out, "eigenvalues.csv")?;
            write_eigen_csv(&dump, &mut w)?;
            w.flush()?;
            let mut w = create(&cli.out, "histogram.csv")?;
            write_histogram_csv(&bins, &mut w)?;
            w.flush()?;
            if !distances.is_empty() {
                let mut w = create(&cli.out, "distances.csv")?;
                write_distance_csv(&distances, &mut w)?;
                w.flush()?;
            }
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Simulation<'a> {
                params: &'a ModelParams,
                eigenvalues: &'a EigenDump,
                histogram: &'a [tensor_mp::io::HistogramBin],
                distances: &'a [DistanceRecord],
            }
            write_json(
                &cli.out,
                "simulate.json",
                &Simulation {
                    params: &params,
                    eigenvalues: &dump,
                    histogram: &bins,
                    distances: &distances,
                },
            )?;
        }
    }
    println!(
        "n={} k={} m={} N={} model={} replicas={}",
        params.n,
        params.k,
        report.samples,
        report.ambient_dim,
        params.model.as_str(),
        params.replicas
    );
    for d in &distances {
        println!("replica {} {} {}", d.replica, d.metric, d.value);
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(cli: &Cli, args: &SweepArgs) -> Result<ExitCode> {
    let mut plan: SweepPlan = match &cli.config {
        Some(path) => read_json(path)?,
        None if args.n.is_empty() && args.c.is_empty() => SweepPlan::desk_scale(0),
        None => {
            let ns = if args.n.is_empty() {
                vec![10, 20, 30]
            } else {
                args.n.clone()
            };
            let cs = if args.c.is_empty() {
                vec![0.5]
            } else {
                args.c.clone()
            };
            let template = ModelParams::new(ns[0], 2, cs[0]).with_replicas(5);
            SweepPlan::grid(
                &template,
                &ns,
                &cs,
                KSchedule::FixedK {
                    k: args.k.unwrap_or(2),
                },
            )
        }
    };
    if let Some(k) = args.k {
        plan.k_schedule = Some(KSchedule::FixedK { k });
    }
    if let Some(r) = args.replicas {
        plan.replicas = Some(r);
    }
    if let Some(seed) = cli.seed {
        plan = plan.with_seed(seed);
    }
    let out = plan.out_dir.clone().unwrap_or_else(|| cli.out.clone());
    fs::create_dir_all(&out)?;
    let result = run_sweep(&plan, RunOptions { timing: cli.timing })?;
    match cli.format {
        Format::Csv => {
            let mut w = create(&out, "sweep.csv")?;
            write_sweep_csv(&result.rows, &mut w)?;
            w.flush()?;
        }
        Format::Json => {
            let mut w = create(&out, "sweep.json")?;
            write_sweep_json(&result, &mut w)?;
            writeln!(w)?;
            w.flush()?;
        }
    }
    for s in &result.summaries {
        let ks = s.ks_mp.map_or("-".to_string(), |st| {
            format!("{:.5} ± {:.5}", st.mean, st.std_error)
        });
        println!(
            "n={:<4} k={:<2} c={:<5} ks_mp={} levy_models={:.5} ± {:.5}",
            s.params.n, s.params.k, s.params.c, ks, s.levy_models.mean, s.levy_models.std_error
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn mp(cli: &Cli, args: &MpArgs) -> Result<ExitCode> {
    let law = MpLaw::new(args.c)?;
    if args.moments > MAX_MOMENT {
        bail!("--moments must be at most {MAX_MOMENT}");
    }
    if args.points < 2 {
        bail!("--points must be at least 2");
    }
    let from = args.from.unwrap_or(0.0_f64.min(law.lambda_minus() - 0.1));
    let to = args.to.unwrap_or(law.lambda_plus() + 0.1);
    let grid = law.grid(from, to, args.points);
    let moments: Vec<(u32, f64)> = (0..=args.moments).map(|q| (q, law.moment(q))).collect();
    match cli.format {
        Format::Csv => {
            let mut w = create(&cli.out, "mp_grid.csv")?;
            write_mp_grid_csv(&grid, &mut w)?;
            w.flush()?;
            let mut w = csv::Writer::from_writer(create(&cli.out, "mp_moments.csv")?);
            w.write_record(["q", "moment"])?;
            for m in &moments {
                w.serialize(m)?;
            }
            w.flush()?;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Point {
                x: f64,
                density: f64,
                cdf: f64,
            }
            #[derive(Serialize)]
            struct Report {
                c: f64,
                lambda_minus: f64,
                lambda_plus: f64,
                atom_mass: f64,
                moments: Vec<(u32, f64)>,
                grid: Vec<Point>,
            }
            write_json(
                &cli.out,
                "mp.json",
                &Report {
                    c: law.c(),
                    lambda_minus: law.lambda_minus(),
                    lambda_plus: law.lambda_plus(),
                    atom_mass: law.atom_mass(),
                    moments: moments.clone(),
                    grid: grid
                        .iter()
                        .map(|g| Point {
                            x: g.x,
                            density: g.density,
                            cdf: g.cdf,
                        })
                        .collect(),
                },
            )?;
        }
    }
    println!(
        "c={} support=[{}, {}] atom={}",
        law.c(),
        law.lambda_minus(),
        law.lambda_plus(),
        law.atom_mass()
    );
    for (q, v) in &moments {
        println!("moment {q} = {v}");
    }
    Ok(ExitCode::SUCCESS)
}

fn distance(cli: &Cli, args: &DistanceArgs) -> Result<ExitCode> {
    let load = |path: &PathBuf| -> Result<EigenDump> {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        read_eigen_csv(file).with_context(|| format!("reading {}", path.display()))
    };
    let a = load(&args.first)?;
    let b = load(&args.second)?;
    let mut records = Vec::new();
    for (replica, eigs_a) in &a.replicas {
        let Some((_, eigs_b)) = b.replicas.iter().find(|(r, _)| r == replica) else {
            log::warn!("replica {replica} only present in {}", args.first.display());
            continue;
        };
        let fa = EmpiricalCdf::from_spectral(&esd(eigs_a, a.ambient_dim())?);
        let fb = EmpiricalCdf::from_spectral(&esd(eigs_b, b.ambient_dim())?);
        records.push(DistanceRecord {
            replica: *replica,
            metric: "ks".into(),
            value: ks_distance(&fa, &fb),
        });
        records.push(DistanceRecord {
            replica: *replica,
            metric: "levy".into(),
            value: levy_distance(&fa, &fb),
        });
    }
    if records.is_empty() {
        bail!("the two files share no replica");
    }
    match cli.format {
        Format::Csv => {
            let mut w = create(&cli.out, "distances.csv")?;
            write_distance_csv(&records, &mut w)?;
            w.flush()?;
        }
        Format::Json => write_json(&cli.out, "distances.json", &records)?,
    }
    for r in &records {
        println!("replica {} {} {}", r.replica, r.metric, r.value);
    }
    Ok(ExitCode::SUCCESS)
}
