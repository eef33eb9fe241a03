//! Subcommands of the `jumpflow` binary. Each one returns a JSON summary
//! for stdout and whether every criterion in its scope passed.

use clap::{Args, Parser, Subcommand};
use jumpflow::density::{kde_density, scaled_bandwidth, Chart, Grid, Samples};
use jumpflow::experiments::{self, ExperimentConfig, Scenario, SCENARIOS};
use jumpflow::geometry::{Frame, Manifold, Point};
use jumpflow::levy::LevyMeasureSpec;
use jumpflow::lie::{big_jump_moment, geometric_dil_trans_moment, GroupElement, GroupSpec, MomentReport, Side};
use jumpflow::marcus::{CoefficientField, Simulator, State};
use jumpflow::parallel::Pool;
use jumpflow::svg::Plot;
use jumpflow::{Error, PathSeed, Result};
use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "jumpflow", version, about = "Marcus-canonical jump SDE simulator and density laboratory")]
pub struct Cli {
    /// Worker threads; 0 uses every core. Never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// List the registered experiment scenarios.
    #[arg(long)]
    pub list: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate endpoints and write them as CSV.
    Simulate(Common),
    /// Kernel density estimate over a sample CSV.
    Density(Common),
    /// Run or list the named experiments.
    Experiment(ExperimentArgs),
    /// Integrability and two-sided scaling audit of a Lévy measure.
    LevyAudit(AuditArgs),
    /// Big-jump moment verdicts on a Lie group.
    LieCheck(LieCheckArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub list: bool,
    #[command(subcommand)]
    pub action: Option<ExperimentAction>,
}

#[derive(Debug, Subcommand)]
pub enum ExperimentAction {
    /// Run one scenario; omitted parameters take the acceptance settings.
    Run {
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long, conflicts_with_all = ["alpha", "dim"])]
    pub config: Option<PathBuf>,
    /// Untruncated standard isotropic stable measure with this index.
    #[arg(long, requires = "dim")]
    pub alpha: Option<f64>,
    #[arg(long, requires = "alpha")]
    pub dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LieCheckArgs {
    #[arg(long, conflicts_with_all = ["dil_trans_dim", "beta", "sigma"])]
    pub config: Option<PathBuf>,
    /// Two-sided geometric walk on R^d x| Z with this d.
    #[arg(long, requires_all = ["beta", "sigma"])]
    pub dil_trans_dim: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub j: u32,
    #[arg(long, value_enum, default_value = "left")]
    pub side: SideArg,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum SideArg {
    Left,
    Right,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Side {
        match s {
            SideArg::Left => Side::Left,
            SideArg::Right => Side::Right,
        }
    }
}

/// Summary printed on stdout, and whether the exit status is success.
#[derive(Debug)]
pub struct Outcome {
    pub summary: Value,
    pub pass: bool,
}

/// 2 for configuration and usage errors, 3 for failures while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) | Error::Argument(_) | Error::Audit(_) | Error::Chart(_) => 2,
        _ => 3,
    }
}

pub fn execute(cli: Cli) -> Result<Outcome> {
    if cli.list {
        return Ok(list());
    }
    let pool = Pool::new(cli.threads)?;
    match cli.command {
        None => Err(Error::Config("no subcommand given; see --help".into())),
        Some(Command::Simulate(c)) => simulate(&c, &pool),
        Some(Command::Density(c)) => density(&c),
        Some(Command::Experiment(e)) => match (e.list, e.action) {
            (true, _) => Ok(list()),
            (false, Some(ExperimentAction::Run { name, config, seed, out })) => {
                experiment(&name, config.as_deref(), seed, out, &pool)
            }
            (false, None) => Err(Error::Config("experiment needs `run <name>` or --list".into())),
        },
        Some(Command::LevyAudit(a)) => levy_audit(&a),
        Some(Command::LieCheck(l)) => lie_check(&l),
    }
}

fn list() -> Outcome {
    let v: Vec<Value> = SCENARIOS.iter().map(|(n, d)| json!({ "name": n, "description": d })).collect();
    Outcome { summary: json!({ "scenarios": v }), pass: true }
}

/// Reads and parses a JSON config; schema errors carry file, line and
/// column.
fn read_config<T: DeserializeOwned>(path: &Path) -> Result<(T, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let v = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok((v, text))
}

/// Attaches the config file, and the line of the offending key when the
/// message starts with one, to a validation error.
fn locate(path: &Path, text: &str, e: Error) -> Error {
    let msg = match &e {
        Error::Config(m) | Error::Argument(m) | Error::Audit(m) | Error::Chart(m) => m.clone(),
        _ => return e,
    };
    let key: String = msg.chars().take_while(|c| c.is_ascii_alphanumeric() || *c == '_').collect();
    let line = if key.is_empty() { None } else { text.lines().position(|l| l.contains(&format!("\"{key}\""))) };
    match line {
        Some(i) => Error::Config(format!("{}: line {}: {msg}", path.display(), i + 1)),
        None => Error::Config(format!("{}: {msg}", path.display())),
    }
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, body)?;
    Ok(())
}

/// Initial state of `simulate`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Start {
    Euclid { x: Vec<f64> },
    /// Standard frame at `point` (ambient coordinates), or at the
    /// reference point when absent.
    Frame { manifold: Manifold, #[serde(default)] point: Option<Vec<f64>> },
    Group { element: GroupElement },
    Identity { group: GroupSpec },
}

impl Start {
    pub fn state(&self) -> Result<State> {
        Ok(match self {
            Start::Euclid { x } => State::Euclid(DVector::from_vec(x.clone())),
            Start::Frame { manifold, point } => {
                let p = match point {
                    Some(c) => Point::new(*manifold, c.clone())?,
                    None => manifold.origin(),
                };
                State::Frame(Frame::standard(p))
            }
            Start::Group { element } => State::Group(element.clone()),
            Start::Identity { group } => State::Group(group.identity()),
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub measure: LevyMeasureSpec,
    pub field: CoefficientField,
    pub start: Start,
    pub horizon: f64,
    pub delta: f64,
    pub paths: u64,
    #[serde(default)]
    pub seed: u64,
}

fn simulate(c: &Common, pool: &Pool) -> Result<Outcome> {
    let (cfg, text): (SimulateConfig, _) = read_config(&c.config)?;
    let prepared = (|| {
        if cfg.paths == 0 {
            return Err(Error::Config("paths must be positive".into()));
        }
        let sim = Simulator::new(&cfg.measure, cfg.field.clone(), cfg.horizon, cfg.delta)?;
        Ok((sim, cfg.start.state()?))
    })();
    let (sim, x0) = prepared.map_err(|e| locate(&c.config, &text, e))?;
    let seed = c.seed.unwrap_or(cfg.seed);
    let outs = pool.try_map(cfg.paths, |i| sim.run(&x0, PathSeed::new(seed, i)))?;

    let width = x0.flat().len();
    let mut csv = String::from("path_id");
    for k in 0..width {
        csv.push_str(&format!(",x{k}"));
    }
    csv.push_str(",alive,jump_count\n");
    for (i, o) in outs.iter().enumerate() {
        csv.push_str(&i.to_string());
        for v in o.endpoint.position.flat() {
            csv.push_str(&format!(",{v:e}"));
        }
        csv.push_str(&format!(",{},{}\n", o.endpoint.alive, o.jump_count));
    }
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("results/simulate"));
    let file = dir.join("samples.csv");
    write(&file, &csv)?;

    let alive = outs.iter().filter(|o| o.endpoint.alive).count();
    let jumps: usize = outs.iter().map(|o| o.jump_count).sum();
    let inv = outs.iter().map(|o| o.max_invariant_error).fold(0.0, f64::max);
    Ok(Outcome {
        summary: json!({
            "command": "simulate",
            "seed": seed,
            "paths": cfg.paths,
            "alive": alive,
            "mean_jump_count": jumps as f64 / outs.len() as f64,
            "max_invariant_error": inv,
            "samples": file,
        }),
        pass: true,
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    /// Sample CSV; relative paths are taken from the config's directory.
    pub samples: PathBuf,
    pub chart: Chart,
    pub grid: Grid,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    /// Coordinate columns; every column except path_id, alive and
    /// jump_count when absent.
    #[serde(default)]
    pub columns: Option<Vec<String>>,
}

/// Loads flat points from a sample CSV. Killed rows count towards the
/// normalisation but contribute no point.
pub fn read_samples(path: &Path, columns: Option<&[String]>) -> Result<Samples> {
    let bad = |m: String| Error::Config(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let idx: Vec<usize> = match columns {
        Some(cols) => cols
            .iter()
            .map(|c| headers.iter().position(|h| h == c).ok_or_else(|| bad(format!("no column '{c}'"))))
            .collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&i| !matches!(&headers[i], "path_id" | "alive" | "jump_count")).collect(),
    };
    if idx.is_empty() {
        return Err(bad("no coordinate columns".into()));
    }
    let alive_col = headers.iter().position(|h| h == "alive");
    let (mut data, mut total) = (Vec::new(), 0usize);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        total += 1;
        let line = rec.position().map_or(0, |p| p.line());
        if let Some(a) = alive_col {
            match &rec[a] {
                "true" | "1" => {}
                "false" | "0" => continue,
                v => return Err(bad(format!("line {line}: alive must be true or false, got '{v}'"))),
            }
        }
        for &i in &idx {
            let v: f64 = rec[i].trim().parse().map_err(|_| bad(format!("line {line}: '{}' is not a number", &rec[i])))?;
            data.push(v);
        }
    }
    Samples::new(idx.len(), data, total)
}

fn density(c: &Common) -> Result<Outcome> {
    let (cfg, text): (DensityConfig, _) = read_config(&c.config)?;
    let grid = Grid::new(cfg.grid.lo.clone(), cfg.grid.hi.clone(), cfg.grid.n.clone()).map_err(|e| locate(&c.config, &text, e))?;
    if grid.dim() != cfg.chart.dim() {
        return Err(locate(&c.config, &text, Error::Config(format!("grid has {} axes but the chart has dimension {}", grid.dim(), cfg.chart.dim()))));
    }
    let src = if cfg.samples.is_absolute() {
        cfg.samples.clone()
    } else {
        c.config.parent().unwrap_or(Path::new(".")).join(&cfg.samples)
    };
    let samples = read_samples(&src, cfg.columns.as_deref())?;
    let h = match cfg.bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(locate(&c.config, &text, Error::Config(format!("bandwidth={h} must be positive")))),
        None => scaled_bandwidth(&samples, &cfg.chart)?,
    };
    let est = kde_density(&samples, h, &grid, &cfg.chart)?;

    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("results/density"));
    write(&dir.join("density.csv"), &est.to_csv())?;
    if grid.dim() == 1 {
        let pts = (0..grid.len()).map(|i| (grid.point(i)[0], est.values[i])).collect();
        write(&dir.join("density.svg"), &Plot::new("kernel density estimate", "x", "density").with("estimate", pts).render())?;
    }
    Ok(Outcome {
        summary: json!({
            "command": "density",
            "samples": src,
            "sample_count": est.sample_count,
            "n_total": samples.n_total,
            "bandwidth": est.bandwidth,
            "reference_measure": est.reference_measure,
            "overflow_fraction": est.overflow_fraction,
            "integral": est.integral,
            "max": est.max(),
            "out": dir,
        }),
        pass: true,
    })
}

fn experiment(name: &str, config: Option<&Path>, seed: Option<u64>, out: Option<PathBuf>, pool: &Pool) -> Result<Outcome> {
    let mut cfg = match config {
        Some(path) => {
            let (cfg, text): (ExperimentConfig, _) = read_config(path)?;
            if cfg.scenario.name() != name {
                return Err(Error::Config(format!("{}: config is for '{}', not '{name}'", path.display(), cfg.scenario.name())));
            }
            cfg.scenario.validate().map_err(|e| locate(path, &text, e))?;
            cfg
        }
        None => ExperimentConfig { seed: 0, output_dir: None, scenario: Scenario::default_for(name)? },
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("results").join(name));
    let res = experiments::run(&cfg, pool)?;
    res.write_to(&dir)?;
    let criteria: Vec<Value> = res
        .criteria
        .iter()
        .map(|c| json!({ "id": c.id, "name": c.name, "pass": c.pass, "informational": c.informational, "detail": c.detail }))
        .collect();
    for c in &res.criteria {
        eprintln!("{} {:<4} {}{}", if c.pass { "PASS" } else { "FAIL" }, c.id, c.name, if c.informational { " (reported)" } else { "" });
    }
    Ok(Outcome {
        summary: json!({
            "command": "experiment",
            "scenario": res.scenario,
            "seed": res.seed,
            "passed": res.passed(),
            "criteria": criteria,
            "result": dir.join("result.json"),
        }),
        pass: res.passed(),
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub measure: LevyMeasureSpec,
    /// Scaling index; taken from the measure when absent.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub rho_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub directions: Option<Vec<Vec<f64>>>,
}

/// ρ = 10^{-3}, 10^{-2.75}, …, 1.
pub fn default_rho_grid() -> Vec<f64> {
    (0..=12).map(|k| 10f64.powf(-3.0 + 0.25 * k as f64)).collect()
}

/// Coordinate axes, (1,…,1) and (1,−2,1,…).
pub fn default_directions(d: usize) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    if d > 1 {
        dirs.push(vec![1.0; d]);
        dirs.push((0..d).map(|j| if j == 1 { -2.0 } else { 1.0 }).collect());
    }
    dirs
}

fn levy_audit(a: &AuditArgs) -> Result<Outcome> {
    let (cfg, text) = match (&a.config, a.alpha, a.dim) {
        (Some(p), _, _) => read_config::<AuditConfig>(p).map(|(c, t)| (c, Some(t)))?,
        (None, Some(alpha), Some(dim)) => {
            (AuditConfig { measure: LevyMeasureSpec::standard_stable(alpha, dim), alpha: None, rho_grid: None, directions: None }, None)
        }
        _ => return Err(Error::Config("levy-audit needs --config or both --alpha and --dim".into())),
    };
    let at = |e: Error| match (&a.config, &text) {
        (Some(p), Some(t)) => locate(p, t, e),
        _ => e,
    };
    cfg.measure.validate().map_err(at)?;
    let audit = match cfg.measure.integrability_audit() {
        Ok(r) => r,
        Err(Error::Audit(m)) => {
            return Ok(Outcome { summary: json!({ "command": "levy-audit", "pass": false, "integrability": null, "failure": m }), pass: false })
        }
        Err(e) => return Err(at(e)),
    };
    let alpha = cfg.alpha.or(cfg.measure.alpha());
    let scaling = match alpha {
        Some(al) => {
            let rho = cfg.rho_grid.clone().unwrap_or_else(default_rho_grid);
            let dirs = cfg.directions.clone().unwrap_or_else(|| default_directions(cfg.measure.dim()));
            Some(cfg.measure.verify_scaling_bounds(al, &rho, &dirs).map_err(at)?)
        }
        None => None,
    };
    let pass = scaling.as_ref().is_none_or(|s| s.pass);
    Ok(Outcome {
        summary: json!({
            "command": "levy-audit",
            "pass": pass,
            "integrability": audit,
            "scaling": scaling.map(|s| json!({ "alpha": alpha, "c_hat": s.c_hat, "C_hat": s.big_c_hat, "pass": s.pass, "grid_points": s.ratios.len() })),
        }),
        pass,
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LieCheckConfig {
    pub group: GroupSpec,
    #[serde(default)]
    pub j: u32,
    #[serde(default = "left")]
    pub side: Side,
    /// Big-jump atoms (element, rate).
    #[serde(default)]
    pub atoms: Vec<(GroupElement, f64)>,
    /// Two-sided geometric dilation walk on ℝ^d ⋊ ℤ.
    #[serde(default)]
    pub geometric: Option<Geometric>,
}

fn left() -> Side {
    Side::Left
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometric {
    pub beta: f64,
    pub sigma: f64,
}

fn verdict(r: &MomentReport) -> &'static str {
    if r.finite {
        "finite"
    } else {
        "diverges"
    }
}

fn lie_check(l: &LieCheckArgs) -> Result<Outcome> {
    let cfg = match (&l.config, l.dil_trans_dim) {
        (Some(p), _) => {
            let (cfg, text): (LieCheckConfig, _) = read_config(p)?;
            check_lie(&cfg).map_err(|e| locate(p, &text, e))?;
            cfg
        }
        (None, Some(d)) => LieCheckConfig {
            group: GroupSpec::DilTrans(d),
            j: l.j,
            side: l.side.into(),
            atoms: Vec::new(),
            geometric: Some(Geometric { beta: l.beta.unwrap_or(f64::NAN), sigma: l.sigma.unwrap_or(f64::NAN) }),
        },
        _ => return Err(Error::Config("lie-check needs --config or --dil-trans-dim with --beta and --sigma".into())),
    };
    check_lie(&cfg)?;
    let report = match (cfg.geometric, cfg.group) {
        (Some(g), GroupSpec::DilTrans(d)) => geometric_dil_trans_moment(d, g.beta, g.sigma, cfg.j, cfg.side),
        _ => big_jump_moment(cfg.group, &cfg.atoms, cfg.j, cfg.side)?,
    };
    Ok(Outcome {
        summary: json!({
            "command": "lie-check",
            "group": cfg.group,
            "j": report.j,
            "side": report.side,
            "value": report.value,
            "verdict": verdict(&report),
        }),
        pass: true,
    })
}

fn check_lie(cfg: &LieCheckConfig) -> Result<()> {
    match (&cfg.geometric, cfg.group) {
        (Some(g), GroupSpec::DilTrans(d)) => {
            if d == 0 {
                return Err(Error::Config("group dimension must be positive".into()));
            }
            if !(g.beta > 0.0 && g.sigma > 0.0) {
                return Err(Error::Config(format!("geometric needs beta > 0 and sigma > 0, got {} and {}", g.beta, g.sigma)));
            }
            if !cfg.atoms.is_empty() {
                return Err(Error::Config("atoms and geometric are exclusive".into()));
            }
            Ok(())
        }
        (Some(_), _) => Err(Error::Config("geometric is defined on DilTrans only".into())),
        (None, _) if cfg.atoms.is_empty() => Err(Error::Config("atoms must not be empty".into())),
        (None, _) => Ok(()),
    }
}
