//! Command-line harness around the core imaging library: configuration
//! ingestion, closed-form prediction, parameter sweeps, seeded simulation
//! with a deterministic artifact directory, and a one-shot reference-value
//! report.
//!
//! Exit codes: 0 success, 1 reference-report check failure, 2 configuration
//! error, 3 numerical error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use memsl_core::err::CoreError;
use memsl_core::geometry::{default_image_grid, derive_dimensionless, ImagingSystem};
use memsl_core::light::{ProbeSource, Protocol};
use memsl_core::montecarlo::{
    mean_image_quadrature, reconstruct, simulate_measurement, standard_test_object, SimMode,
    SimOptions,
};
use memsl_core::optimizer::{
    optimize_lossy, prefactor, prefactor_exact_sum, resolution, select_q, sigma_explicit,
    PhotonBudget,
};
use memsl_core::pswf::{build_basis, SlepianBasis};

const EXIT_OK: i32 = 0;
const EXIT_CHECK_FAILED: i32 = 1;
const EXIT_CONFIG: i32 = 2;
const EXIT_NUMERICAL: i32 = 3;

/// Basis size used whenever a command needs the reference-imaging basis.
const WORK_JMAX: usize = 14;

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_CONFIG, message: msg.into() }
    }
    fn numerical(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_NUMERICAL, message: msg.into() }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        Failure::numerical(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

// --------------------------------------------------------------- arguments

#[derive(Parser)]
#[command(
    name = "memsl",
    about = "Band-limited quantum imaging: basis tables, error optimization, \
             seeded measurement simulation, and phase reconstruction",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the basis table (c, j, lambda_j, A_j, parity) as CSV.
    Basis {
        /// Space-bandwidth product c.
        #[arg(long, allow_negative_numbers = true)]
        c: f64,
        /// Highest basis order in the table.
        #[arg(long)]
        jmax: usize,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep transmissions and protocols; write optimal-parameter rows.
    Optimize {
        #[command(flatten)]
        overrides: Overrides,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form prediction (sigma, Q, resolution) for one configuration.
    Predict {
        #[command(flatten)]
        overrides: Overrides,
        /// Use the exact even-order error sum instead of the governing term.
        #[arg(long)]
        exact_sum: bool,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a seeded measurement simulation; write an artifact directory.
    Simulate {
        #[command(flatten)]
        overrides: Overrides,
        /// Artifact directory to create.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the built-in reference checks and write a report.
    ReproducePaper {
        /// Report directory to create.
        #[arg(long)]
        out: PathBuf,
        /// Diagnostic hook: scale every eigenvalue entering the checks.
        #[arg(long, hide = true)]
        perturb_lambda: Option<f64>,
    },
}

/// Command-line overrides mirroring the configuration file keys.
#[derive(Args)]
struct Overrides {
    /// Configuration file of `section.key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Focal length, meters (imaging.f_m).
    #[arg(long)]
    f_m: Option<f64>,
    /// Wavelength, meters (imaging.lambda_m).
    #[arg(long)]
    lambda_m: Option<f64>,
    /// Pupil diameter, meters (imaging.d_m).
    #[arg(long)]
    d_m: Option<f64>,
    /// Object size, meters (imaging.y_m).
    #[arg(long)]
    y_m: Option<f64>,
    /// Probe protocol: memsl | independent-squeezed | coherent.
    #[arg(long)]
    protocol: Option<String>,
    /// Mode count M (source.modes).
    #[arg(long)]
    modes: Option<u32>,
    /// Photon budget per mode on the sample, N (source.photons).
    #[arg(long)]
    photons: Option<f64>,
    /// Transmission tau in (0, 1] (source.tau).
    #[arg(long)]
    tau: Option<f64>,
    /// Explicit squeezing parameter (source.r); requires --alpha too.
    #[arg(long)]
    r: Option<f64>,
    /// Explicit displacement (source.alpha); requires --r too.
    #[arg(long)]
    alpha: Option<f64>,
    /// Trial count (simulation.trials).
    #[arg(long)]
    trials: Option<u64>,
    /// Master seed (simulation.seed); required for simulate, no default.
    #[arg(long)]
    seed: Option<u64>,
    /// Sampling model: coefficient-space | pointwise (simulation.mode).
    #[arg(long)]
    mode: Option<String>,
    /// Object grid size, odd (simulation.object_points).
    #[arg(long)]
    object_points: Option<usize>,
    /// Highest sampled coefficient order (simulation.orders).
    #[arg(long)]
    orders: Option<usize>,
    /// Reconstruction cutoff override (simulation.q).
    #[arg(long)]
    q: Option<u32>,
    /// Comma-separated transmission sweep (sweep.tau_list).
    #[arg(long)]
    tau_list: Option<String>,
    /// Repetitions entering the cutoff budget (sweep.navg).
    #[arg(long)]
    navg: Option<u64>,
}

// ------------------------------------------------------------ configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ConfigMode {
    CoefficientSpace,
    Pointwise,
}

/// Fully resolved run configuration (file values overridden by flags).
#[derive(Debug, Clone)]
struct RunConfig {
    f_m: f64,
    lambda_m: f64,
    d_m: f64,
    y_m: f64,
    protocol: Protocol,
    modes: u32,
    photons: f64,
    tau: f64,
    r: Option<f64>,
    alpha: Option<f64>,
    trials: u64,
    seed: Option<u64>,
    mode: ConfigMode,
    object_points: usize,
    orders: Option<usize>,
    q: Option<u32>,
    tau_list: Vec<f64>,
    navg: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            f_m: 0.01,
            lambda_m: 780e-9,
            d_m: 0.0508,
            y_m: 300e-9,
            protocol: Protocol::Memsl,
            modes: 8,
            photons: 6.0,
            tau: 1.0,
            r: None,
            alpha: None,
            trials: 1000,
            seed: None,
            mode: ConfigMode::CoefficientSpace,
            object_points: 401,
            orders: None,
            q: None,
            tau_list: vec![1.0],
            navg: 1,
        }
    }
}

fn parse_protocol(s: &str) -> CliResult<Protocol> {
    match s {
        "memsl" => Ok(Protocol::Memsl),
        "independent-squeezed" => Ok(Protocol::IndependentSqueezed),
        "coherent" => Ok(Protocol::Coherent),
        other => Err(Failure::config(format!(
            "unknown protocol '{other}' (expected memsl, independent-squeezed, or coherent)"
        ))),
    }
}

fn parse_mode(s: &str) -> CliResult<ConfigMode> {
    match s {
        "coefficient-space" => Ok(ConfigMode::CoefficientSpace),
        "pointwise" => Ok(ConfigMode::Pointwise),
        other => Err(Failure::config(format!(
            "unknown simulation mode '{other}' (expected coefficient-space or pointwise)"
        ))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse::<T>()
        .map_err(|_| Failure::config(format!("cannot parse value '{value}' for key '{key}'")))
}

fn parse_tau_list(s: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(parse_num::<f64>("sweep.tau_list", part)?);
    }
    Ok(out)
}

impl RunConfig {
    fn apply_key(&mut self, key: &str, value: &str) -> CliResult<()> {
        match key {
            "imaging.f_m" => self.f_m = parse_num(key, value)?,
            "imaging.lambda_m" => self.lambda_m = parse_num(key, value)?,
            "imaging.d_m" => self.d_m = parse_num(key, value)?,
            "imaging.y_m" => self.y_m = parse_num(key, value)?,
            "source.protocol" => self.protocol = parse_protocol(value)?,
            "source.modes" => self.modes = parse_num(key, value)?,
            "source.photons" => self.photons = parse_num(key, value)?,
            "source.tau" => self.tau = parse_num(key, value)?,
            "source.r" => self.r = Some(parse_num(key, value)?),
            "source.alpha" => self.alpha = Some(parse_num(key, value)?),
            "simulation.trials" => self.trials = parse_num(key, value)?,
            "simulation.seed" => self.seed = Some(parse_num(key, value)?),
            "simulation.mode" => self.mode = parse_mode(value)?,
            "simulation.object_points" => self.object_points = parse_num(key, value)?,
            "simulation.orders" => self.orders = Some(parse_num(key, value)?),
            "simulation.q" => self.q = Some(parse_num(key, value)?),
            "sweep.tau_list" => self.tau_list = parse_tau_list(value)?,
            "sweep.navg" => self.navg = parse_num(key, value)?,
            other => {
                return Err(Failure::config(format!("unknown configuration key '{other}'")));
            }
        }
        Ok(())
    }

    fn load_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Failure::config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Failure::config(format!(
                    "line {} of {} is not a 'key = value' assignment: '{raw}'",
                    lineno + 1,
                    path.display()
                )));
            };
            self.apply_key(key.trim(), value.trim())?;
        }
        Ok(())
    }

    fn apply_overrides(&mut self, ov: &Overrides) -> CliResult<()> {
        if let Some(v) = ov.f_m {
            self.f_m = v;
        }
        if let Some(v) = ov.lambda_m {
            self.lambda_m = v;
        }
        if let Some(v) = ov.d_m {
            self.d_m = v;
        }
        if let Some(v) = ov.y_m {
            self.y_m = v;
        }
        if let Some(p) = &ov.protocol {
            self.protocol = parse_protocol(p)?;
        }
        if let Some(v) = ov.modes {
            self.modes = v;
        }
        if let Some(v) = ov.photons {
            self.photons = v;
        }
        if let Some(v) = ov.tau {
            self.tau = v;
        }
        if let Some(v) = ov.r {
            self.r = Some(v);
        }
        if let Some(v) = ov.alpha {
            self.alpha = Some(v);
        }
        if let Some(v) = ov.trials {
            self.trials = v;
        }
        if let Some(v) = ov.seed {
            self.seed = Some(v);
        }
        if let Some(m) = &ov.mode {
            self.mode = parse_mode(m)?;
        }
        if let Some(v) = ov.object_points {
            self.object_points = v;
        }
        if let Some(v) = ov.orders {
            self.orders = Some(v);
        }
        if let Some(v) = ov.q {
            self.q = Some(v);
        }
        if let Some(list) = &ov.tau_list {
            self.tau_list = parse_tau_list(list)?;
        }
        if let Some(v) = ov.navg {
            self.navg = v;
        }
        Ok(())
    }

    fn resolve(ov: &Overrides) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &ov.config {
            cfg.load_file(path)?;
        }
        cfg.apply_overrides(ov)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        for (v, what) in [
            (self.f_m, "imaging.f_m"),
            (self.lambda_m, "imaging.lambda_m"),
            (self.d_m, "imaging.d_m"),
            (self.y_m, "imaging.y_m"),
            (self.photons, "source.photons"),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Failure::config(format!("{what} must be a positive real")));
            }
        }
        if self.modes == 0 {
            return Err(Failure::config("source.modes must be >= 1"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Failure::config("source.tau must lie in (0, 1]"));
        }
        if self.r.is_some() != self.alpha.is_some() {
            return Err(Failure::config(
                "explicit probe parameters need both source.r and source.alpha \
                 (give both, or neither to optimize from the budget)",
            ));
        }
        if self.trials == 0 {
            return Err(Failure::config("simulation.trials must be >= 1"));
        }
        if self.navg == 0 {
            return Err(Failure::config("sweep.navg must be >= 1"));
        }
        if self.object_points < 3 || self.object_points % 2 == 0 {
            return Err(Failure::config("simulation.object_points must be odd and >= 3"));
        }
        Ok(())
    }

    fn imaging_system(&self) -> CliResult<ImagingSystem> {
        derive_dimensionless(self.f_m, self.lambda_m, self.d_m, self.y_m)
            .map_err(|e| Failure::config(e.to_string()))
    }

    /// The probe source: explicit (r, alpha) when given, otherwise the
    /// closed-form optimum for the budget.
    fn probe_source(&self) -> CliResult<ProbeSource> {
        match (self.r, self.alpha) {
            (Some(r), Some(alpha)) => {
                ProbeSource::new(self.protocol, self.modes, alpha, r, self.tau)
                    .map_err(|e| Failure::config(e.to_string()))
            }
            _ => {
                let cfg = optimize_lossy(self.protocol, self.modes, self.photons, self.tau)?;
                Ok(cfg.probe_source(self.modes)?)
            }
        }
    }

    /// Canonical echo that re-runs to identical results: every resolved key,
    /// probe parameters pinned explicitly, cutoff pinned.
    fn echo(&self, src: &ProbeSource, q: u32) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# resolved run configuration (re-run: memsl simulate --config <this file> --out <dir>)");
        let _ = writeln!(s, "imaging.f_m = {}", self.f_m);
        let _ = writeln!(s, "imaging.lambda_m = {}", self.lambda_m);
        let _ = writeln!(s, "imaging.d_m = {}", self.d_m);
        let _ = writeln!(s, "imaging.y_m = {}", self.y_m);
        let _ = writeln!(s, "source.protocol = {}", self.protocol.name());
        let _ = writeln!(s, "source.modes = {}", self.modes);
        let _ = writeln!(s, "source.photons = {}", self.photons);
        let _ = writeln!(s, "source.tau = {}", self.tau);
        let _ = writeln!(s, "source.r = {}", src.r);
        let _ = writeln!(s, "source.alpha = {}", src.alpha);
        let _ = writeln!(s, "simulation.trials = {}", self.trials);
        let _ = writeln!(s, "simulation.seed = {}", self.seed.expect("echo requires a seed"));
        let _ = writeln!(
            s,
            "simulation.mode = {}",
            match self.mode {
                ConfigMode::CoefficientSpace => "coefficient-space",
                ConfigMode::Pointwise => "pointwise",
            }
        );
        let _ = writeln!(s, "simulation.object_points = {}", self.object_points);
        if let Some(orders) = self.orders {
            let _ = writeln!(s, "simulation.orders = {orders}");
        }
        let _ = writeln!(s, "simulation.q = {q}");
        s
    }
}

// ------------------------------------------------------------------ output

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn write_output(out: &Option<PathBuf>, content: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(|e| {
            Failure::numerical(format!("cannot write {}: {e}", path.display()))
        }),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn write_file(dir: &Path, name: &str, content: &str) -> CliResult<()> {
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| Failure::numerical(format!("cannot write {}: {e}", path.display())))
}

fn make_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::numerical(format!("cannot create {}: {e}", dir.display())))
}

// ------------------------------------------------------------- subcommands

fn cmd_basis(c: f64, jmax: usize, out: &Option<PathBuf>) -> CliResult<()> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Failure::config("c (space-bandwidth product) must be a positive real"));
    }
    let basis = build_basis(c, jmax)?;
    let mut csv = String::from("c,j,lambda_j,A_j,parity\n");
    for j in 0..=jmax {
        let parity = if j % 2 == 0 { "even" } else { "odd" };
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            fmt_f64(c),
            j,
            fmt_f64(basis.lambda(j).map_err(Failure::from)?),
            fmt_f64(basis.coupling(j).map_err(Failure::from)?),
            parity
        );
    }
    write_output(out, &csv)
}

/// Cutoff for a configuration: the explicit override when present, otherwise
/// the budget-selection rule at `navg` repetitions.
fn resolve_q(
    cfg: &RunConfig,
    basis: &SlepianBasis,
    protocol: Protocol,
    navg: u64,
) -> CliResult<u32> {
    if let Some(q) = cfg.q {
        if q as usize > basis.largest_trusted() {
            return Err(Failure::config(format!(
                "simulation.q = {q} exceeds the trusted basis range (largest trusted order {})",
                basis.largest_trusted()
            )));
        }
        return Ok(q);
    }
    let budget = PhotonBudget::new(cfg.modes, cfg.photons, navg)?;
    Ok(select_q(basis, protocol, &budget)?)
}

fn cmd_optimize(cfg: &RunConfig, out: &Option<PathBuf>) -> CliResult<()> {
    if cfg.tau_list.is_empty() {
        return Err(Failure::config("sweep.tau_list must contain at least one transmission"));
    }
    let sys = cfg.imaging_system()?;
    let basis = build_basis(sys.c, WORK_JMAX)?;
    let mut csv =
        String::from("protocol,modes,photons_per_mode,tau,r_opt,alpha_opt,sigma_opt,q,resolution_nm\n");
    for &tau in &cfg.tau_list {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Failure::config(format!("sweep transmission {tau} outside (0, 1]")));
        }
        for protocol in [Protocol::Memsl, Protocol::IndependentSqueezed, Protocol::Coherent] {
            let opt = optimize_lossy(protocol, cfg.modes, cfg.photons, tau)?;
            let q = resolve_q(cfg, &basis, protocol, cfg.navg)?;
            let sigma =
                sigma_explicit(protocol, &basis, q, cfg.modes, opt.r_opt, opt.alpha_opt, tau)?;
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                protocol.name(),
                cfg.modes,
                fmt_f64(cfg.photons),
                fmt_f64(tau),
                fmt_f64(opt.r_opt),
                fmt_f64(opt.alpha_opt),
                fmt_f64(sigma),
                q,
                fmt_f64(resolution(&sys, q) * 1e9)
            );
        }
    }
    write_output(out, &csv)
}

fn cmd_predict(cfg: &RunConfig, exact_sum: bool, out: &Option<PathBuf>) -> CliResult<()> {
    let sys = cfg.imaging_system()?;
    let basis = build_basis(sys.c, WORK_JMAX)?;
    let src = cfg.probe_source()?;
    let q = resolve_q(cfg, &basis, cfg.protocol, cfg.navg)?;
    let mut sigma = sigma_explicit(cfg.protocol, &basis, q, cfg.modes, src.r, src.alpha, cfg.tau)?;
    if exact_sum {
        sigma *= prefactor_exact_sum(&basis, q)? / prefactor(&basis, q)?;
    }
    let mut csv = String::from(
        "c,shannon,rayleigh_nm,protocol,modes,photons_per_mode,tau,r,alpha,q,resolution_nm,sigma,sigma_avg\n",
    );
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        fmt_f64(sys.c),
        fmt_f64(sys.shannon),
        fmt_f64(sys.rayleigh * 1e9),
        cfg.protocol.name(),
        cfg.modes,
        fmt_f64(cfg.photons),
        fmt_f64(cfg.tau),
        fmt_f64(src.r),
        fmt_f64(src.alpha),
        q,
        fmt_f64(resolution(&sys, q) * 1e9),
        fmt_f64(sigma),
        fmt_f64(sigma / (cfg.navg as f64).sqrt())
    );
    write_output(out, &csv)
}

fn cmd_simulate(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let Some(seed) = cfg.seed else {
        return Err(Failure::config(
            "simulate requires an explicit seed (--seed or simulation.seed); \
             wall-clock seeding is not supported",
        ));
    };
    let sys = cfg.imaging_system()?;
    let basis = build_basis(sys.c, WORK_JMAX)?;
    let src = cfg.probe_source()?;
    let object = standard_test_object(cfg.object_points)?;
    let q = resolve_q(cfg, &basis, cfg.protocol, cfg.trials)?;

    if cfg.trials == 1 {
        eprintln!(
            "warning: trials = 1 is a low-confidence run; empirical error and \
             confidence bands are zero by construction"
        );
    }

    let image_grid = default_image_grid();
    let mean = mean_image_quadrature(&object, &src, &basis, &image_grid)?;
    if !mean.small_phase_ok {
        eprintln!(
            "warning: object violates the small-phase condition (margin {:.3}); \
             the linearized model is out of its regime",
            mean.margin
        );
    }

    let mut mean_csv = String::from("s,mean_e2\n");
    for (s, v) in image_grid.iter().zip(&mean.field.values) {
        let _ = writeln!(mean_csv, "{},{}", fmt_f64(*s), fmt_f64(*v));
    }

    let options = SimOptions {
        mode: match cfg.mode {
            ConfigMode::CoefficientSpace => SimMode::CoefficientSpace,
            ConfigMode::Pointwise => SimMode::Pointwise,
        },
        zero_noise: false,
        orders: cfg.orders.or(match cfg.mode {
            // Default to just enough orders for the requested cutoff; the
            // basis default (every trusted order) costs more for no benefit.
            ConfigMode::CoefficientSpace => Some((q as usize).max(7)),
            ConfigMode::Pointwise => None,
        }),
        image_grid: match cfg.mode {
            ConfigMode::CoefficientSpace => None,
            // The pointwise noise kernel is defined on the detection window
            // [-1, 1]; sample it there rather than over the full image grid.
            ConfigMode::Pointwise => Some(memsl_core::mathx::linspace(-1.0, 1.0, 201)),
        },
    };
    let measurement = simulate_measurement(&object, &src, &basis, cfg.trials, seed, &options)?;

    let mut samples_csv = String::from("s,trial_mean,trial_std\n");
    let (sigma_predicted, sigma_empirical, reconstruction_csv) = match cfg.mode {
        ConfigMode::CoefficientSpace => {
            let (m, v) = measurement.synthesized_field_stats(&basis, &image_grid)?;
            for i in 0..image_grid.len() {
                let _ = writeln!(
                    samples_csv,
                    "{},{},{}",
                    fmt_f64(image_grid[i]),
                    fmt_f64(m[i]),
                    fmt_f64(v[i].max(0.0).sqrt())
                );
            }
            let rec = reconstruct(&measurement, &basis, q, &src)?;
            let mut rec_csv = String::from("s_prime,phi_true,phi_hat,ci_low,ci_high\n");
            for i in 0..rec.grid.len() {
                let _ = writeln!(
                    rec_csv,
                    "{},{},{},{},{}",
                    fmt_f64(rec.grid[i]),
                    fmt_f64(rec.phi_true[i]),
                    fmt_f64(rec.phi_hat[i]),
                    fmt_f64(rec.ci_low[i]),
                    fmt_f64(rec.ci_high[i])
                );
            }
            (rec.sigma_predicted, rec.sigma_empirical, Some(rec_csv))
        }
        ConfigMode::Pointwise => {
            for i in 0..measurement.grid.len() {
                let _ = writeln!(
                    samples_csv,
                    "{},{},{}",
                    fmt_f64(measurement.grid[i]),
                    fmt_f64(measurement.point_mean[i]),
                    fmt_f64(measurement.point_var[i].max(0.0).sqrt())
                );
            }
            let sigma =
                sigma_explicit(cfg.protocol, &basis, q, cfg.modes, src.r, src.alpha, cfg.tau)?;
            // The pointwise model carries no coefficient estimator, so the
            // line-summed empirical error does not exist for it.
            (sigma, f64::NAN, None)
        }
    };

    let mut summary_csv = String::from("sigma_predicted,sigma_empirical,Q,seed,trials\n");
    let _ = writeln!(
        summary_csv,
        "{},{},{},{},{}",
        fmt_f64(sigma_predicted),
        fmt_f64(sigma_empirical),
        q,
        seed,
        cfg.trials
    );

    // All file contents are complete; write the artifact in one pass.
    make_dir(out)?;
    write_file(out, "config.txt", &cfg.echo(&src, q))?;
    write_file(out, "mean.csv", &mean_csv)?;
    write_file(out, "samples.csv", &samples_csv)?;
    if let Some(rec_csv) = reconstruction_csv {
        write_file(out, "reconstruction.csv", &rec_csv)?;
    }
    write_file(out, "summary.csv", &summary_csv)?;
    Ok(())
}

struct Check {
    id: &'static str,
    expected: f64,
    actual: f64,
    tolerance: f64,
}

impl Check {
    fn pass(&self) -> bool {
        (self.actual - self.expected).abs() <= self.tolerance
    }
}

fn cmd_reproduce_paper(out: &Path, perturb_lambda: Option<f64>) -> CliResult<i32> {
    let scale = perturb_lambda.unwrap_or(1.0);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Failure::config("--perturb-lambda must be a positive real"));
    }

    let sys = derive_dimensionless(0.01, 780e-9, 0.0508, 300e-9)
        .map_err(|e| Failure::numerical(e.to_string()))?;
    let basis = build_basis(sys.c, WORK_JMAX)?;
    let mut checks: Vec<Check> = Vec::new();

    // Geometry of the reference configuration.
    checks.push(Check { id: "geometry-c", expected: 3.07, actual: sys.c, tolerance: 0.01 });
    checks.push(Check {
        id: "geometry-rayleigh-nm",
        expected: 154.0,
        actual: sys.rayleigh * 1e9,
        tolerance: 1.0,
    });

    // Optimal probe for the M = 8, N = 6 budget.
    let opt = optimize_lossy(Protocol::Memsl, 8, 6.0, 1.0)?;
    checks.push(Check {
        id: "optimal-squeezing-factor",
        expected: 0.100,
        actual: (-opt.r_opt).exp(),
        tolerance: 0.002,
    });
    checks.push(Check {
        id: "optimal-displacement",
        expected: 4.92,
        actual: opt.alpha_opt,
        tolerance: 0.01,
    });
    checks.push(Check {
        id: "squeezing-level-db",
        expected: -19.9,
        actual: 10.0 * (-2.0 * opt.r_opt).exp().log10(),
        tolerance: 0.2,
    });

    // Equivalent coherent budget: 294 photons per mode over 8 modes.
    let coh = optimize_lossy(Protocol::Coherent, 8, 294.0, 1.0)?;
    checks.push(Check {
        id: "coherent-photon-equivalence",
        expected: 1.0,
        actual: coh.sigma_opt / opt.sigma_opt,
        tolerance: 0.01,
    });

    // Resolution at the published cutoff.
    checks.push(Check {
        id: "resolution-q7-nm",
        expected: 38.0,
        actual: resolution(&sys, 7) * 1e9,
        tolerance: 0.5,
    });

    // Cutoff selection at the published budgets. The published values are
    // asserted as-is; the measured outcomes differ (see the report), so a
    // correct build reports these rows as failures rather than patching
    // either side.
    let single = PhotonBudget::new(8, 6.0, 1)?;
    let averaged = PhotonBudget::new(8, 6.0, 50_000)?;
    let q_with_scale = |protocol: Protocol, budget: &PhotonBudget| -> CliResult<f64> {
        if scale == 1.0 {
            return Ok(f64::from(select_q(&basis, protocol, budget)?));
        }
        // The diagnostic perturbation scales every lambda_j; replaying the
        // selection rule over the perturbed table keeps the hook honest.
        let m = budget.modes as f64;
        let n = budget.photons_per_mode;
        let navg = budget.repetitions as f64;
        let base = match protocol {
            Protocol::Memsl => 8.0 * m * m * n * n * (1.0 + m * n),
            Protocol::IndependentSqueezed => 8.0 * m * m * n * n * (1.0 + n),
            Protocol::Coherent => 8.0 * m * m * n * n,
        };
        let bound = base.ln() + 2.0 * navg.ln();
        let mut last = None;
        let mut j = 0usize;
        loop {
            if j > basis.largest_trusted() {
                return Err(Failure::numerical(
                    "perturbed selection exhausted the trusted basis range",
                ));
            }
            let a = basis.coupling(j)?;
            let lambda = basis.lambda(j)? * scale;
            if 2.0 * (a.ln() - lambda.ln()) < bound {
                last = Some(f64::from(j as u32 + 1));
                j += 2;
            } else {
                break;
            }
        }
        last.ok_or_else(|| Failure::numerical("perturbed budget admits no even order"))
    };
    checks.push(Check {
        id: "cutoff-entangled-single-shot",
        expected: 7.0,
        actual: q_with_scale(Protocol::Memsl, &single)?,
        tolerance: 0.0,
    });
    checks.push(Check {
        id: "cutoff-entangled-averaged",
        expected: 7.0,
        actual: q_with_scale(Protocol::Memsl, &averaged)?,
        tolerance: 0.0,
    });
    checks.push(Check {
        id: "cutoff-coherent-averaged",
        expected: 5.0,
        actual: q_with_scale(Protocol::Coherent, &averaged)?,
        tolerance: 0.0,
    });

    // Eigenvalue mass: the full trace of the band-limiting kernel.
    let trace: f64 = (0..=WORK_JMAX).map(|j| basis.lambda(j).unwrap() * scale).sum();
    checks.push(Check {
        id: "basis-trace",
        expected: 2.0 * sys.c / std::f64::consts::PI,
        actual: trace,
        tolerance: 1e-6,
    });

    let mut report = String::from("check,expected,actual,tolerance,pass\n");
    let mut failures = 0usize;
    for check in &checks {
        let ok = check.pass();
        if !ok {
            failures += 1;
        }
        let _ = writeln!(
            report,
            "{},{},{},{},{}",
            check.id,
            fmt_f64(check.expected),
            fmt_f64(check.actual),
            fmt_f64(check.tolerance),
            ok
        );
        println!(
            "{} {} (expected {} +- {}, actual {})",
            if ok { "PASS" } else { "FAIL" },
            check.id,
            check.expected,
            check.tolerance,
            check.actual
        );
    }
    make_dir(out)?;
    write_file(out, "report.csv", &report)?;
    if failures > 0 {
        eprintln!("{failures} of {} reference checks failed", checks.len());
        Ok(EXIT_CHECK_FAILED)
    } else {
        Ok(EXIT_OK)
    }
}

// ------------------------------------------------------------------ driver

/// Parse arguments from the process environment, run, and return the exit
/// code (0 ok, 1 reference-check failure, 2 configuration error,
/// 3 numerical error).
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through this path too; keep its exit
            // semantics (0 for help, 2 for usage errors).
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome: CliResult<i32> = match &cli.cmd {
        Cmd::Basis { c, jmax, out } => cmd_basis(*c, *jmax, out).map(|()| EXIT_OK),
        Cmd::Optimize { overrides, out } => RunConfig::resolve(overrides)
            .and_then(|cfg| cmd_optimize(&cfg, out))
            .map(|()| EXIT_OK),
        Cmd::Predict { overrides, exact_sum, out } => RunConfig::resolve(overrides)
            .and_then(|cfg| cmd_predict(&cfg, *exact_sum, out))
            .map(|()| EXIT_OK),
        Cmd::Simulate { overrides, out } => RunConfig::resolve(overrides)
            .and_then(|cfg| cmd_simulate(&cfg, out))
            .map(|()| EXIT_OK),
        Cmd::ReproducePaper { out, perturb_lambda } => cmd_reproduce_paper(out, *perturb_lambda),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
