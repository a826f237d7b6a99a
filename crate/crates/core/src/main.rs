use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use npdose::bandwidth::{nr_bandwidth, rot_bandwidths, scale_by_sd, DEFAULT_C_B, DEFAULT_C_H};
use npdose::bootstrap::bootstrap_many;
use npdose::bounds::{m_bound, theta_bound};
use npdose::data::Dataset;
use npdose::error::{Error, Result};
use npdose::estimators::{estimate_curves, EstimatorTag, Want};
use npdose::exec;
use npdose::io::{load_csv, load_level_set, write_dataset, ColumnMap};
use npdose::kernels::KernelKind;
use npdose::params::EstimParams;
use npdose::report::{
    BandwidthReport, BandwidthSource, BoundsReport, Curve, CurveReport, Diagnostics, ErrorBody, ErrorReport, Source,
    SCHEMA_VERSION,
};
use npdose::simdata::SimModel;

#[derive(Parser)]
#[command(name = "npdose", version, about = "Nonparametric dose-response curves without positivity")]
struct Cli {
    /// Worker threads [default: all cores]
    #[arg(long, global = true)]
    jobs: Option<NonZeroUsize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dose-response curves: integral estimator and/or regression adjustment
    Estimate(CurveArgs),
    /// Derivative curves: localized estimator and/or regression adjustment
    Derivative(CurveArgs),
    /// Curves with bootstrap pointwise intervals and uniform bands
    Bootstrap(BootstrapArgs),
    /// Rule-of-thumb and normal-reference bandwidths
    Bandwidth(BandwidthArgs),
    /// Draw a dataset from a simulation model as CSV
    Simulate(SimulateArgs),
    /// Bounds on m(t) and its derivative from level-set samples
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row, `-` for stdin
    #[arg(long, short, default_value = "-")]
    input: String,
    #[arg(long, default_value = "Y")]
    y_col: String,
    #[arg(long, default_value = "T")]
    t_col: String,
    /// Covariate columns [default: every other column]
    #[arg(long, value_delimiter = ',')]
    s_cols: Option<Vec<String>>,
    /// Skip malformed rows instead of failing
    #[arg(long)]
    drop_bad: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kernel {
    Epanechnikov,
    Gaussian,
}

impl From<Kernel> for KernelKind {
    fn from(k: Kernel) -> Self {
        match k {
            Kernel::Epanechnikov => KernelKind::Epanechnikov,
            Kernel::Gaussian => KernelKind::Gaussian,
        }
    }
}

#[derive(Args)]
struct SmoothArgs {
    /// Polynomial order in the treatment
    #[arg(long, default_value_t = 2)]
    q: usize,
    /// Treatment bandwidth [default: rule of thumb]
    #[arg(long)]
    h: Option<f64>,
    /// Covariate bandwidths, comma separated [default: rule of thumb]
    #[arg(long, value_delimiter = ',')]
    b: Option<Vec<f64>>,
    /// Conditional-CDF bandwidth [default: normal reference]
    #[arg(long)]
    hbar: Option<f64>,
    #[arg(long, value_enum, default_value = "epanechnikov")]
    kernel_t: Kernel,
    #[arg(long, value_enum, default_value = "epanechnikov")]
    kernel_s: Kernel,
    #[arg(long, value_enum, default_value = "gaussian")]
    kernel_cdf: Kernel,
    /// Lower quantile of T bounding the reported region
    #[arg(long, default_value_t = 0.0)]
    trim_lo: f64,
    /// Upper quantile of T bounding the reported region
    #[arg(long, default_value_t = 1.0)]
    trim_hi: f64,
    /// Rule-of-thumb scale for h
    #[arg(long = "Ch", default_value_t = DEFAULT_C_H)]
    c_h: f64,
    /// Rule-of-thumb scale for b
    #[arg(long = "Cb", default_value_t = DEFAULT_C_B)]
    c_b: f64,
    /// Multiply rule-of-thumb bandwidths by the sample standard deviations
    #[arg(long)]
    scale_by_sd: bool,
}

#[derive(Args)]
struct ResampleArgs {
    /// Bootstrap replicates
    #[arg(long = "B", default_value_t = 1000)]
    replicates: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, env = "NPDOSE_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct OutArgs {
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Output file [default: stdout]
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    Integral,
    Ra,
    Both,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    smooth: SmoothArgs,
    /// Estimators to report
    #[arg(long, value_enum, default_value = "both")]
    estimator: Which,
    /// Add bootstrap intervals and bands
    #[arg(long)]
    bootstrap: bool,
    #[command(flatten)]
    resample: ResampleArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tag {
    #[value(name = "m_theta")]
    MTheta,
    #[value(name = "theta_C")]
    ThetaC,
    #[value(name = "m_RA")]
    MRa,
    #[value(name = "theta_RA")]
    ThetaRa,
}

impl From<Tag> for EstimatorTag {
    fn from(t: Tag) -> Self {
        match t {
            Tag::MTheta => EstimatorTag::MTheta,
            Tag::ThetaC => EstimatorTag::ThetaC,
            Tag::MRa => EstimatorTag::MRA,
            Tag::ThetaRa => EstimatorTag::ThetaRA,
        }
    }
}

#[derive(Args)]
struct BootstrapArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    smooth: SmoothArgs,
    /// Curves to bootstrap, comma separated
    #[arg(long, value_enum, value_delimiter = ',', default_value = "m_theta,theta_C")]
    estimators: Vec<Tag>,
    #[command(flatten)]
    resample: ResampleArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct BandwidthArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long = "Ch", default_value_t = DEFAULT_C_H)]
    c_h: f64,
    #[arg(long = "Cb", default_value_t = DEFAULT_C_B)]
    c_b: f64,
    #[arg(long)]
    scale_by_sd: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// single, linear or nonlinear
    #[arg(long)]
    model: SimModel,
    #[arg(long)]
    n: usize,
    #[arg(long, env = "NPDOSE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    /// CSV with columns s_1..s_d, mu, v_1..v_d, g_1..g_d; `-` for stdin
    #[arg(long, short, default_value = "-")]
    input: String,
    #[arg(long)]
    rho1: Option<f64>,
    #[arg(long)]
    rho2: Option<f64>,
    #[command(flatten)]
    out: OutArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli.jobs.map(NonZeroUsize::get);
    match exec::with_jobs(jobs, || run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed downstream pipe (`| head`) is not a failure.
        Err(Error::Io(m)) if m.to_lowercase().contains("broken pipe") => ExitCode::SUCCESS,
        Err(e) => {
            let report = ErrorReport {
                schema_version: SCHEMA_VERSION,
                error: ErrorBody {
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                },
            };
            eprintln!("{}", serde_json::to_string(&report).expect("error report serializes"));
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Estimate(a) => curves(a, "estimate", [EstimatorTag::MTheta, EstimatorTag::MRA]),
        Command::Derivative(a) => curves(a, "derivative", [EstimatorTag::ThetaC, EstimatorTag::ThetaRA]),
        Command::Bootstrap(a) => bootstrap(a),
        Command::Bandwidth(a) => bandwidth(a),
        Command::Simulate(a) => {
            let data = a.model.generate(a.n, a.seed);
            let mut out = sink(a.out.as_ref())?;
            write_dataset(&data, &mut out)?;
            out.flush()?;
            Ok(())
        }
        Command::Bounds(a) => bounds(a),
    }
}

fn source(input: &str) -> Result<Box<dyn Read>> {
    if input == "-" {
        Ok(Box::new(io::stdin().lock()))
    } else {
        let f = File::open(input).map_err(|e| Error::Io(format!("{input}: {e}")))?;
        Ok(Box::new(io::BufReader::new(f)))
    }
}

fn sink(out: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    match out {
        Some(p) => {
            let f = File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn load(a: &DataArgs) -> Result<(Dataset, usize)> {
    let map = ColumnMap {
        y: a.y_col.clone(),
        t: a.t_col.clone(),
        s: a.s_cols.clone(),
    };
    let loaded = load_csv(source(&a.input)?, &map, a.drop_bad)?;
    if loaded.dropped > 0 {
        eprintln!("warning: dropped {} malformed rows", loaded.dropped);
    }
    Ok((loaded.data, loaded.dropped))
}

/// Estimation parameters with any missing bandwidth filled in by a selector.
fn resolve(data: &Dataset, a: &SmoothArgs) -> Result<(EstimParams, BandwidthSource, Option<bool>)> {
    let mut floored = None;
    let (h, b) = match (a.h, &a.b) {
        (Some(h), Some(b)) => (h, b.clone()),
        (h, b) => {
            let mut rot = rot_bandwidths(data, a.c_h, a.c_b)?;
            if a.scale_by_sd {
                rot = scale_by_sd(&rot, data)?;
            }
            floored = Some(rot.curvature_floored);
            (h.unwrap_or(rot.h), b.clone().unwrap_or(rot.b))
        }
    };
    let hbar = match a.hbar {
        Some(v) => v,
        None => nr_bandwidth(data.t())?,
    };
    let pick = |given: bool, auto: Source| if given { Source::User } else { auto };
    let src = BandwidthSource {
        h: pick(a.h.is_some(), Source::Rot),
        b: pick(a.b.is_some(), Source::Rot),
        hbar: pick(a.hbar.is_some(), Source::Nr),
        scale_by_sd: a.scale_by_sd,
    };
    let params = EstimParams::new(h, b, hbar)
        .with_q(a.q)
        .with_trim(a.trim_lo, a.trim_hi)
        .with_kernels(a.kernel_t.into(), a.kernel_s.into(), a.kernel_cdf.into());
    params.validate(data.d())?;
    if !(0.0..=1.0).contains(&a.trim_lo) || !(0.0..=1.0).contains(&a.trim_hi) || a.trim_lo > a.trim_hi {
        return Err(Error::InvalidInput(format!(
            "trim quantiles must satisfy 0 <= lo <= hi <= 1, got {} and {}",
            a.trim_lo, a.trim_hi
        )));
    }
    Ok((params, src, floored))
}

fn curves(a: CurveArgs, command: &str, tags: [EstimatorTag; 2]) -> Result<()> {
    let tags: Vec<EstimatorTag> = match a.estimator {
        Which::Integral => vec![tags[0]],
        Which::Ra => vec![tags[1]],
        Which::Both => tags.to_vec(),
    };
    let (data, dropped) = load(&a.data)?;
    let (params, src, floored) = resolve(&data, &a.smooth)?;
    let mut report = CurveReport {
        schema_version: SCHEMA_VERSION,
        command: command.to_string(),
        n: data.n(),
        d: data.d(),
        seed: None,
        params: params.clone(),
        bandwidth_source: src,
        curves: Vec::new(),
        diagnostics: Diagnostics {
            dropped_rows: (dropped > 0).then_some(dropped),
            curvature_floored: floored,
            ..Diagnostics::default()
        },
    };
    if a.bootstrap {
        fill_bootstrap(&mut report, &data, &params, &tags, &a.resample)?;
    } else {
        let want = Want {
            theta_c: tags.iter().any(|t| matches!(t, EstimatorTag::MTheta | EstimatorTag::ThetaC)),
            ra: tags.iter().any(|t| matches!(t, EstimatorTag::MRA | EstimatorTag::ThetaRA)),
        };
        let all = estimate_curves(&data, &params, want)?;
        for tag in tags {
            let c = all.get(tag).expect("requested curve");
            report.diagnostics.dropped_fits.insert(tag.name().into(), c.dropped_fits);
            report.curves.push(Curve::from_estimate(c));
        }
    }
    emit_curves(&report, &a.out)
}

fn bootstrap(a: BootstrapArgs) -> Result<()> {
    let (data, dropped) = load(&a.data)?;
    let (params, src, floored) = resolve(&data, &a.smooth)?;
    let tags: Vec<EstimatorTag> = a.estimators.iter().map(|&t| t.into()).collect();
    let mut report = CurveReport {
        schema_version: SCHEMA_VERSION,
        command: "bootstrap".into(),
        n: data.n(),
        d: data.d(),
        seed: None,
        params: params.clone(),
        bandwidth_source: src,
        curves: Vec::new(),
        diagnostics: Diagnostics {
            dropped_rows: (dropped > 0).then_some(dropped),
            curvature_floored: floored,
            ..Diagnostics::default()
        },
    };
    fill_bootstrap(&mut report, &data, &params, &tags, &a.resample)?;
    emit_curves(&report, &a.out)
}

fn fill_bootstrap(
    report: &mut CurveReport,
    data: &Dataset,
    params: &EstimParams,
    tags: &[EstimatorTag],
    r: &ResampleArgs,
) -> Result<()> {
    let results = bootstrap_many(data, params, tags, r.replicates, r.alpha, r.seed)?;
    report.seed = Some(r.seed);
    for res in &results {
        report
            .diagnostics
            .dropped_fits
            .insert(res.base.tag.name().into(), res.base.dropped_fits);
        report.curves.push(Curve::from_bootstrap(res));
    }
    report.diagnostics.failed_replicates = results.first().map(|r| r.failed);
    Ok(())
}

fn emit_curves(report: &CurveReport, out: &OutArgs) -> Result<()> {
    let mut w = sink(out.out.as_ref())?;
    match out.format {
        Format::Json => write_json(&mut w, report)?,
        Format::Csv => {
            let banded = report.curves.iter().any(|c| c.bands.is_some());
            let mut header = "estimator,grid,value".to_string();
            if banded {
                header.push_str(",lo,hi,uniform_lo,uniform_hi");
            }
            writeln!(w, "{header}")?;
            let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            for c in &report.curves {
                for (k, (t, v)) in c.grid.iter().zip(&c.values).enumerate() {
                    write!(w, "{},{},{}", c.estimator.name(), t, cell(*v))?;
                    if banded {
                        match &c.bands {
                            Some(b) => write!(
                                w,
                                ",{},{},{},{}",
                                cell(b.pointwise_lo[k]),
                                cell(b.pointwise_hi[k]),
                                cell(b.uniform_lo[k]),
                                cell(b.uniform_hi[k])
                            )?,
                            None => write!(w, ",,,,")?,
                        }
                    }
                    writeln!(w)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: serde::Serialize>(w: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

fn bandwidth(a: BandwidthArgs) -> Result<()> {
    let (data, _) = load(&a.data)?;
    let mut rot = rot_bandwidths(&data, a.c_h, a.c_b)?;
    if a.scale_by_sd {
        rot = scale_by_sd(&rot, &data)?;
    }
    let hbar = nr_bandwidth(data.t())?;
    let report = BandwidthReport {
        schema_version: SCHEMA_VERSION,
        command: "bandwidth".into(),
        n: data.n(),
        d: data.d(),
        h: rot.h,
        b: rot.b.clone(),
        hbar,
        c_h: a.c_h,
        c_b: a.c_b,
        scale_by_sd: a.scale_by_sd,
        curvature_floored: rot.curvature_floored,
    };
    let mut w = sink(a.out.out.as_ref())?;
    match a.out.format {
        Format::Json => write_json(&mut w, &report)?,
        Format::Csv => {
            let names: Vec<String> = (1..=data.d()).map(|j| format!("b{j}")).collect();
            let vals: Vec<String> = rot.b.iter().map(f64::to_string).collect();
            let sep = if names.is_empty() { "" } else { "," };
            writeln!(w, "h{sep}{},hbar", names.join(","))?;
            writeln!(w, "{}{sep}{},{}", rot.h, vals.join(","), hbar)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn bounds(a: BoundsArgs) -> Result<()> {
    if a.rho1.is_none() && a.rho2.is_none() {
        return Err(Error::InvalidInput("give --rho1, --rho2 or both".into()));
    }
    let sample = load_level_set(source(&a.input)?)?;
    let split = |r: Result<npdose::bounds::Interval>| -> Result<(Option<f64>, Option<f64>, bool)> {
        match r {
            Ok(i) => Ok((Some(i.lo), Some(i.hi), false)),
            Err(Error::EmptyInterval { .. }) => Ok((None, None, true)),
            Err(e) => Err(e),
        }
    };
    let (m_lo, m_hi, m_empty) = match a.rho1 {
        Some(r) => split(m_bound(&sample, r))?,
        None => (None, None, false),
    };
    let (theta_lo, theta_hi, theta_empty) = match a.rho2 {
        Some(r) => split(theta_bound(&sample, r))?,
        None => (None, None, false),
    };
    let report = BoundsReport {
        schema_version: SCHEMA_VERSION,
        command: "bounds".into(),
        points: sample.points.len(),
        m_lo,
        m_hi,
        m_empty,
        theta_lo,
        theta_hi,
        theta_empty,
    };
    let mut w = sink(a.out.out.as_ref())?;
    match a.out.format {
        Format::Json => write_json(&mut w, &report)?,
        Format::Csv => {
            let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            writeln!(w, "m_lo,m_hi,theta_lo,theta_hi")?;
            writeln!(w, "{},{},{},{}", cell(m_lo), cell(m_hi), cell(theta_lo), cell(theta_hi))?;
        }
    }
    w.flush()?;
    Ok(())
}
