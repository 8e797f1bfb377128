//! `gridft` command line.
//!
//! Every experiment subcommand accepts `--config <file.toml>` with flat keys
//! named like the long flags (`trials`, `M`, `sigma`, ...). Flags override the
//! file. The `.meta.toml` sidecar written next to each CSV is itself a valid
//! config file for the same subcommand.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::circuits::{build_multiplier, compile};
use crate::experiments::{
    self, fit_m_of_eps, neurons_vs_error_scaling, phase_diagram, phase_diagram_svg, sweep,
    CsvRow, Estimate, MinimalModuli, SweepPoint, Target,
};
use crate::gridcode::{self, Codeword, EncoderFn, GridCode};
use crate::neural::BitCode;
use crate::noise::{sample_output_noise, NoiseModel, RngStream, StreamId};

pub const OUT_DIR_ENV: &str = "GRIDFT_OUT_DIR";

const DEFAULT_TRIALS: u64 = 1000;
const DEFAULT_SEED: u64 = 1;
const DEFAULT_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Parser)]
#[command(name = "gridft", version, about = "Fault-tolerant neural computation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode a value, add phase noise, decode it again.
    Roundtrip(RoundtripArgs),
    /// Worst-case neural NAND error along a line of noise levels.
    NandSweep(SweepArgs),
    /// Compiled two-bit multiplier: neurons needed per target error, or the
    /// error at a fixed M.
    Multiplier(ScalingArgs),
    /// Minimal moduli count against target error for the decode roundtrip.
    MOfEps(ScalingArgs),
    /// NAND error over a (p, sigma) grid, classified against the NAND
    /// multiplexing threshold.
    PhaseDiagram(DiagramArgs),
}

#[derive(Debug, Args)]
struct RoundtripArgs {
    /// Pairwise coprime moduli.
    #[arg(long, value_delimiter = ',', default_value = "3,5,7")]
    moduli: Vec<u64>,
    /// Value to encode.
    #[arg(long, default_value_t = 7)]
    x: i64,
    /// Phase noise std added to every phase.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Domain size X [default: product of the moduli].
    #[arg(long)]
    domain: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per input assignment and grid point [default: 1000].
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory [default: current directory].
    #[arg(long, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
    /// Confidence level of the binomial intervals [default: 0.95].
    #[arg(long)]
    confidence: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of moduli [default: 10].
    #[arg(long = "M")]
    m: Option<usize>,
    /// Repetitions per phase neuron [default: 1].
    #[arg(long = "R")]
    r: Option<usize>,
    /// Synaptic failure probabilities [default: 0].
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    /// Output noise levels [default: 0,0.05,...,0.5,0.75,1].
    #[arg(long, value_delimiter = ',')]
    sigma: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct ScalingArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output noise levels [default: 0,0.05,0.1,0.15].
    #[arg(long, value_delimiter = ',')]
    sigma: Option<Vec<f64>>,
    /// Target logical errors [default: 0.1,0.03,0.01].
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Fixed moduli count; estimates the error per sigma instead of
    /// searching (multiplier only).
    #[arg(long = "M")]
    m: Option<usize>,
    /// Synaptic failure probability for fixed-M runs [default: 0].
    #[arg(long)]
    p: Option<f64>,
}

#[derive(Debug, Args)]
struct DiagramArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of moduli [default: 10].
    #[arg(long = "M")]
    m: Option<usize>,
    /// Repetitions per phase neuron [default: 3000].
    #[arg(long = "R")]
    r: Option<usize>,
    /// Failure probabilities [default: 0,0.1,...,0.9].
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    /// Noise levels [default: 0,0.2,...,2].
    #[arg(long, value_delimiter = ',')]
    sigma: Option<Vec<f64>>,
    /// Also write an SVG heatmap.
    #[arg(long)]
    svg: bool,
}

/// Scalar or list, as accepted in config files.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    command: Option<String>,
    seed: Option<u64>,
    trials: Option<u64>,
    threads: Option<usize>,
    out_dir: Option<PathBuf>,
    confidence: Option<f64>,
    #[serde(rename = "M")]
    m: Option<usize>,
    #[serde(rename = "R")]
    r: Option<usize>,
    p: Option<OneOrMany>,
    sigma: Option<OneOrMany>,
    eps: Option<OneOrMany>,
    svg: Option<bool>,
    /// Sidecar run information, ignored on input.
    #[allow(dead_code)]
    run: Option<toml::Table>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(msg.into())
}

/// Run with the given argv (program name first). Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Roundtrip(a) => cmd_roundtrip(&a),
        Command::NandSweep(a) => cmd_nand_sweep(a),
        Command::Multiplier(a) => cmd_multiplier(a),
        Command::MOfEps(a) => cmd_m_of_eps(a),
        Command::PhaseDiagram(a) => cmd_phase_diagram(a),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn cmd_roundtrip(a: &RoundtripArgs) -> CliResult<()> {
    let code = match a.domain {
        Some(x) => GridCode::new(a.moduli.clone(), x),
        None => GridCode::full_range(a.moduli.clone()),
    }
    .map_err(|e| usage(e.to_string()))?;
    let noise = NoiseModel::new(a.sigma, 0.0).map_err(|e| usage(e.to_string()))?;
    let clean = gridcode::encode(a.x, &EncoderFn::Identity, &code).map_err(|e| usage(e.to_string()))?;
    let mut rng = RngStream::new(a.seed, StreamId::new(0, 0));
    let noisy = Codeword::from_unreduced(clean.phases().iter().map(|&p| p + sample_output_noise(&mut rng, &noise)));
    let decoded = gridcode::mle_decode_oracle(&noisy, &code).map_err(|e| runtime(e.to_string()))?;
    let fmt = |c: &Codeword| c.phases().iter().map(|p| format!("{p:.6}")).collect::<Vec<_>>().join(" ");
    println!("moduli   = {:?}", code.moduli());
    println!("domain   = {}", code.domain_size());
    println!("x        = {}", a.x);
    println!("phases   = {}", fmt(&clean));
    println!("noisy    = {}", fmt(&noisy));
    println!("score(x) = {:.6}", gridcode::score(a.x, &noisy, &code).map_err(|e| runtime(e.to_string()))?);
    println!("score(d) = {:.6}", gridcode::score(decoded, &noisy, &code).map_err(|e| runtime(e.to_string()))?);
    println!("decoded  = {decoded}");
    Ok(())
}

struct Settings {
    seed: u64,
    trials: u64,
    threads: Option<usize>,
    out_dir: PathBuf,
    confidence: f64,
    file: FileConfig,
    echo: toml::Table,
}

impl Settings {
    fn resolve(command: &str, c: &CommonArgs) -> CliResult<Self> {
        let file = match &c.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                let cfg: FileConfig = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                if let Some(cmd) = &cfg.command {
                    if cmd != command {
                        return Err(usage(format!("config is for `{cmd}`, not `{command}`")));
                    }
                }
                cfg
            }
            None => FileConfig::default(),
        };
        let seed = c.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
        let trials = c.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS);
        if trials < 100 {
            return Err(usage(format!("trials must be at least 100, got {trials}")));
        }
        let confidence = c.confidence.or(file.confidence).unwrap_or(DEFAULT_CONFIDENCE);
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(usage(format!("confidence must lie in (0, 1), got {confidence}")));
        }
        let threads = c.threads.or(file.threads);
        if threads == Some(0) {
            return Err(usage("threads must be positive"));
        }
        let out_dir = c.out_dir.clone().or(file.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
        let mut echo = toml::Table::new();
        echo.insert("command".into(), command.into());
        echo.insert("seed".into(), toml::Value::Integer(seed as i64));
        echo.insert("trials".into(), toml::Value::Integer(trials as i64));
        echo.insert("confidence".into(), confidence.into());
        if let Some(t) = threads {
            echo.insert("threads".into(), toml::Value::Integer(t as i64));
        }
        Ok(Self { seed, trials, threads, out_dir, confidence, file, echo })
    }

    fn echo_list(&mut self, key: &str, values: &[f64]) {
        self.echo.insert(key.into(), toml::Value::Array(values.iter().map(|&v| v.into()).collect()));
    }

    fn echo_int(&mut self, key: &str, v: usize) {
        self.echo.insert(key.into(), toml::Value::Integer(v as i64));
    }

    fn pool(&self) -> CliResult<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = self.threads {
            b = b.num_threads(t);
        }
        b.build().map_err(|e| runtime(e.to_string()))
    }

    fn write(&self, name: &str, rows: &[CsvRow], started: Instant) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.out_dir).map_err(|e| runtime(format!("{}: {e}", self.out_dir.display())))?;
        let csv_path = self.out_dir.join(format!("{name}.csv"));
        let file = fs::File::create(&csv_path).map_err(|e| runtime(format!("{}: {e}", csv_path.display())))?;
        experiments::write_csv(file, rows).map_err(|e| runtime(e.to_string()))?;
        let meta = self.out_dir.join(format!("{name}.meta.toml"));
        experiments::write_meta(&meta, &self.echo, self.seed, started.elapsed().as_secs_f64())
            .map_err(|e| runtime(format!("{}: {e}", meta.display())))?;
        eprintln!("wrote {} and {}", csv_path.display(), meta.display());
        Ok(csv_path)
    }
}

fn list_or(flag: Option<Vec<f64>>, file: Option<OneOrMany>, default: &[f64]) -> Vec<f64> {
    flag.or(file.map(OneOrMany::into_vec)).unwrap_or_else(|| default.to_vec())
}

fn check_probabilities(ps: &[f64], what: &str) -> CliResult<()> {
    match ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(p) => Err(usage(format!("{what} must lie in [0, 1], got {p}"))),
        None if ps.is_empty() => Err(usage(format!("{what} list is empty"))),
        None => Ok(()),
    }
}

fn check_sigmas(sigmas: &[f64]) -> CliResult<()> {
    match sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        Some(s) => Err(usage(format!("sigma must be non-negative, got {s}"))),
        None if sigmas.is_empty() => Err(usage("sigma list is empty")),
        None => Ok(()),
    }
}

fn check_eps(eps: &[f64]) -> CliResult<()> {
    match eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        Some(e) => Err(usage(format!("eps must lie in (0, 1), got {e}"))),
        None if eps.is_empty() => Err(usage("eps list is empty")),
        None => Ok(()),
    }
}

fn positive(v: usize, what: &str) -> CliResult<usize> {
    if v == 0 {
        Err(usage(format!("{what} must be at least 1")))
    } else {
        Ok(v)
    }
}

fn report_point(pt: &SweepPoint) {
    eprintln!(
        "p={} sigma={} M={} R={}: error {:.5} [{:.5}, {:.5}]",
        pt.p, pt.sigma, pt.m, pt.repetitions, pt.estimate.error, pt.estimate.ci_lo, pt.estimate.ci_hi
    );
}

fn report_search(sigma: f64, m: usize, e: &Estimate) {
    eprintln!("sigma={sigma} M={m}: error {:.5}", e.error);
}

fn minimal_rows(points: &[MinimalModuli], repetitions: usize) -> Vec<CsvRow> {
    points
        .iter()
        .map(|pt| CsvRow {
            p: 0.0,
            sigma: pt.sigma,
            m: pt.m.unwrap_or(experiments::MAX_MODULI),
            r: repetitions,
            trials: pt.estimate.trials,
            error: pt.estimate.error,
            ci_lo: pt.estimate.ci_lo,
            ci_hi: pt.estimate.ci_hi,
            neurons: pt.estimate.neurons,
            censored: pt.m.is_none(),
            eps: Some(pt.eps),
        })
        .collect()
}

const SWEEP_SIGMAS: [f64; 13] = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.75, 1.0];
const SCALING_SIGMAS: [f64; 4] = [0.0, 0.05, 0.1, 0.15];
const SCALING_EPS: [f64; 3] = [0.1, 0.03, 0.01];

fn cmd_nand_sweep(a: SweepArgs) -> CliResult<()> {
    let started = Instant::now();
    let mut s = Settings::resolve("nand-sweep", &a.common)?;
    let m = positive(a.m.or(s.file.m).unwrap_or(10), "M")?;
    let r = positive(a.r.or(s.file.r).unwrap_or(1), "R")?;
    let ps = list_or(a.p, s.file.p.take(), &[0.0]);
    let sigmas = list_or(a.sigma, s.file.sigma.take(), &SWEEP_SIGMAS);
    check_probabilities(&ps, "p")?;
    check_sigmas(&sigmas)?;
    s.echo_int("M", m);
    s.echo_int("R", r);
    s.echo_list("p", &ps);
    s.echo_list("sigma", &sigmas);
    let grid: Vec<(f64, f64)> = ps.iter().flat_map(|&p| sigmas.iter().map(move |&sg| (p, sg))).collect();
    let points = s.pool()?.install(|| sweep(Target::Nand, &grid, m, r, s.trials, s.seed, s.confidence, &report_point));
    let rows: Vec<CsvRow> = points.iter().map(SweepPoint::csv_row).collect();
    s.write("nand_sweep", &rows, started)?;
    Ok(())
}

fn cmd_multiplier(a: ScalingArgs) -> CliResult<()> {
    let started = Instant::now();
    let mut s = Settings::resolve("multiplier", &a.common)?;
    let sigmas = list_or(a.sigma, s.file.sigma.take(), &SCALING_SIGMAS);
    check_sigmas(&sigmas)?;
    s.echo_list("sigma", &sigmas);
    let fixed_m = a.m.or(s.file.m);
    let rows = if let Some(m) = fixed_m {
        let m = positive(m, "M")?;
        let p = a.p.or(s.file.p.take().map(|v| v.into_vec()[0])).unwrap_or(0.0);
        check_probabilities(&[p], "p")?;
        s.echo_int("M", m);
        s.echo_list("p", &[p]);
        let net = compile(&build_multiplier(), &BitCode::with_moduli_count(m).map_err(|e| usage(e.to_string()))?, 1)
            .map_err(|e| runtime(e.to_string()))?;
        eprintln!("{}", net.stats());
        let grid: Vec<(f64, f64)> = sigmas.iter().map(|&sg| (p, sg)).collect();
        let points =
            s.pool()?.install(|| sweep(Target::Multiplier, &grid, m, 1, s.trials, s.seed, s.confidence, &report_point));
        points.iter().map(SweepPoint::csv_row).collect()
    } else {
        let eps = list_or(a.eps, s.file.eps.take(), &SCALING_EPS);
        check_eps(&eps)?;
        s.echo_list("eps", &eps);
        let scaling =
            s.pool()?.install(|| neurons_vs_error_scaling(&sigmas, &eps, s.trials, s.seed, s.confidence, &report_search));
        for (e, fit) in &scaling.by_eps {
            eprintln!("eps={e}: log(neurons) vs sigma^2 slope {:.4} R^2 {:.4}", fit.slope, fit.r_squared);
        }
        minimal_rows(&scaling.points, 1)
    };
    s.write("multiplier", &rows, started)?;
    Ok(())
}

fn cmd_m_of_eps(a: ScalingArgs) -> CliResult<()> {
    let started = Instant::now();
    let mut s = Settings::resolve("m-of-eps", &a.common)?;
    let sigmas = list_or(a.sigma, s.file.sigma.take(), &SCALING_SIGMAS);
    let eps = list_or(a.eps, s.file.eps.take(), &SCALING_EPS);
    check_sigmas(&sigmas)?;
    check_eps(&eps)?;
    if a.m.is_some() || a.p.is_some() {
        return Err(usage("--M and --p apply to the multiplier subcommand only"));
    }
    s.echo_list("sigma", &sigmas);
    s.echo_list("eps", &eps);
    let fit = s.pool()?.install(|| fit_m_of_eps(&sigmas, &eps, s.trials, s.seed, s.confidence, &report_search));
    eprintln!("a = {:.3} ± {:.3} (R^2 {:.4})", fit.a, fit.a_se, fit.r_squared);
    for (sigma, a_sigma) in &fit.a_per_sigma {
        eprintln!("sigma={sigma}: a = {a_sigma:.3}");
    }
    s.write("m_of_eps", &minimal_rows(&fit.points, 1), started)?;
    Ok(())
}

fn cmd_phase_diagram(a: DiagramArgs) -> CliResult<()> {
    let started = Instant::now();
    let mut s = Settings::resolve("phase-diagram", &a.common)?;
    let m = positive(a.m.or(s.file.m).unwrap_or(10), "M")?;
    let r = positive(a.r.or(s.file.r).unwrap_or(3000), "R")?;
    let default_ps: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    let default_sigmas: Vec<f64> = (0..=10).map(|i| i as f64 / 5.0).collect();
    let ps = list_or(a.p, s.file.p.take(), &default_ps);
    let sigmas = list_or(a.sigma, s.file.sigma.take(), &default_sigmas);
    check_probabilities(&ps, "p")?;
    check_sigmas(&sigmas)?;
    let svg = a.svg || s.file.svg.unwrap_or(false);
    s.echo_int("M", m);
    s.echo_int("R", r);
    s.echo_list("p", &ps);
    s.echo_list("sigma", &sigmas);
    s.echo.insert("svg".into(), svg.into());
    let diagram =
        s.pool()?.install(|| phase_diagram(&ps, &sigmas, m, r, s.trials, s.seed, s.confidence, &report_point));
    for (p, sg) in &diagram.boundary {
        eprintln!("boundary: p={p:.4} sigma={sg:.4}");
    }
    let rows: Vec<CsvRow> = diagram.points.iter().map(SweepPoint::csv_row).collect();
    let csv = s.write("phase_diagram", &rows, started)?;
    if svg {
        let path = csv.with_extension("svg");
        write_text(&path, &phase_diagram_svg(&diagram))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}
