//! `awsteer` command line: closed-loop scenarios, stability charts,
//! equilibria, tire-equation poles, gain certificates and metrics.
//!
//! Every subcommand reads one TOML configuration (or a shipped preset),
//! writes its artifacts below `--out`, prints the written paths and exits
//! non-zero with a single diagnostic line on failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use awsteer_core::control::validate_gains;
use awsteer_core::freq::{count_rhp_roots_with, stability_chart};
use awsteer_core::lambert::{scalar_pde_poles, PdePole};
use awsteer_core::scenario::{compute_metrics, run_scenario, Config, Table};
use awsteer_core::vehicle::{build_matrices, critical_speed, equilibrium, Axle};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "awsteer", version, about = "All-wheel-steering vehicle simulation with distributed tire dynamics")]
struct Cli {
    #[command(flatten)]
    opts: Options,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Options {
    /// TOML configuration; may also be given positionally.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Noise seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Shipped preset the configuration is layered on (shimmy, sine-mild, avoidance).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Cells per axle field.
    #[arg(long, global = true)]
    cells: Option<usize>,
    /// Integration step (s).
    #[arg(long, global = true)]
    dt: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-loop run; writes series, reference, field and metrics files.
    Simulate {
        #[arg(value_name = "CONFIG")]
        path: Option<PathBuf>,
    },
    /// Right-half-plane root counts over the (chi, vx) grid.
    Chart {
        #[arg(value_name = "CONFIG")]
        path: Option<PathBuf>,
    },
    /// Steady state under the configured constant steering.
    Equilibrium {
        #[arg(value_name = "CONFIG")]
        path: Option<PathBuf>,
    },
    /// Lambert-W pole lattice of the front and rear tire equations.
    Poles {
        #[arg(value_name = "CONFIG")]
        path: Option<PathBuf>,
    },
    /// Gain checks.
    Gains {
        #[command(subcommand)]
        action: GainsAction,
    },
    /// Tracking indicators from an exported series and its reference.
    Metrics { series: PathBuf, reference: PathBuf },
}

#[derive(Debug, Subcommand)]
enum GainsAction {
    /// Hurwitz and decoupling certificate for the configured gains.
    Validate {
        #[arg(value_name = "CONFIG")]
        path: Option<PathBuf>,
    },
}

fn load_config(opts: &Options, positional: Option<&Path>) -> Result<Config> {
    let path = match (positional, opts.config.as_deref()) {
        (Some(a), Some(b)) if a != b => bail!("cli: conflicting configs {} and {}", a.display(), b.display()),
        (a, b) => a.or(b),
    };
    let mut cfg = match (path, &opts.preset) {
        (None, None) => bail!("cli: no configuration given (pass a config path or --preset)"),
        (None, Some(name)) => Config::preset(name)?,
        (Some(path), preset) => {
            let text = fs::read_to_string(path).with_context(|| format!("config: cannot read {}", path.display()))?;
            let mut value: toml::Table =
                toml::from_str(&text).map_err(|e| anyhow::anyhow!("config: {}: {}", path.display(), one_line(&e)))?;
            if let Some(name) = preset {
                let scenario = value
                    .entry("scenario")
                    .or_insert_with(|| toml::Value::Table(Default::default()));
                if let Some(t) = scenario.as_table_mut() {
                    t.entry("preset").or_insert_with(|| toml::Value::String(name.clone()));
                }
            }
            Config::from_toml(&toml::to_string(&value)?)
                .map_err(|e| anyhow::anyhow!("{}: {}", path.display(), one_line(&e)))?
        }
    };
    if let Some(seed) = opts.seed {
        cfg.scenario.seed = Some(seed);
    }
    if let Some(n) = opts.cells {
        cfg.sim.n_cells = n;
    }
    if let Some(dt) = opts.dt {
        cfg.sim.dt = dt;
    }
    Ok(cfg)
}

fn one_line(e: &dyn std::fmt::Display) -> String {
    e.to_string().split_whitespace().collect::<Vec<_>>().join(" ")
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("io: cannot create {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("io: cannot write {}", path.display()))?;
    Ok(path)
}

fn simulate(cfg: &Config, out: &Path) -> Result<()> {
    let result = run_scenario(&cfg.scenario())?;
    let files = result.write(out)?;
    for p in [&files.series, &files.reference, &files.fields, &files.metrics] {
        println!("{}", p.display());
    }
    let m = &result.metrics;
    let settle = m.settle_time.map_or("none".to_string(), |t| format!("{t:.3} s"));
    println!(
        "rms_y {:.4} m  max_y {:.4} m  rms_psi {:.4} rad  max_psi {:.4} rad  settle {settle}",
        m.rms_y, m.max_y, m.rms_psi, m.max_psi
    );
    Ok(())
}

fn chart(cfg: &Config, out: &Path) -> Result<()> {
    let c = &cfg.chart;
    let chart = stability_chart(&cfg.vehicle, (c.chi[0], c.chi[1]), (c.vx[0], c.vx[1]), (c.n_chi, c.n_vx));
    fs::create_dir_all(out)?;
    let path = out.join("chart.csv");
    fs::write(&path, chart.to_csv()).with_context(|| format!("io: cannot write {}", path.display()))?;
    for e in &chart.errors {
        eprintln!("warning: freq: {e}");
    }
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct EquilibriumReport {
    vx: f64,
    delta: [f64; 2],
    vy_star: f64,
    r_star: f64,
    y_star: [f64; 2],
    u_star_slope: [f64; 2],
    understeer: bool,
    critical_speed: Option<f64>,
}

fn equilibrium_cmd(cfg: &Config, out: &Path) -> Result<()> {
    let p = cfg.params()?;
    let delta = cfg.equilibrium.delta;
    let eq = equilibrium(&p, &delta.into())?;
    let report = EquilibriumReport {
        vx: p.vx(),
        delta,
        vy_star: eq.vy_star,
        r_star: eq.r_star,
        y_star: eq.y_star,
        u_star_slope: eq.u_star_slope,
        understeer: p.is_understeer(),
        critical_speed: critical_speed(&p),
    };
    println!("{}", write_json(out, "equilibrium.json", &report)?.display());
    Ok(())
}

#[derive(Serialize)]
struct AxlePoles {
    axle: &'static str,
    upsilon: f64,
    gamma_bar: f64,
    poles: Vec<PdePole>,
}

#[derive(Serialize)]
struct PoleReport {
    vx: f64,
    /// Right-half-plane roots of the coupled vehicle-tire system.
    rhp_count: usize,
    axles: Vec<AxlePoles>,
}

fn poles(cfg: &Config, out: &Path) -> Result<()> {
    let p = cfg.params()?;
    let spec = &cfg.poles;
    if spec.k_min > spec.k_max {
        bail!("cli: poles.k_min {} exceeds k_max {}", spec.k_min, spec.k_max);
    }
    let mut axles = Vec::new();
    for (axle, name) in [(Axle::Front, "front"), (Axle::Rear, "rear")] {
        let upsilon = spec.upsilon.unwrap_or_else(|| p.upsilon(axle));
        let gamma_bar = spec.gamma_bar.unwrap_or_else(|| p.gamma_bar(axle));
        axles.push(AxlePoles {
            axle: name,
            upsilon,
            gamma_bar,
            poles: scalar_pde_poles(upsilon, gamma_bar, spec.k_min..=spec.k_max)?,
        });
    }
    let report = PoleReport {
        vx: p.vx(),
        rhp_count: count_rhp_roots_with(&p, None)?.count,
        axles,
    };
    println!("{}", write_json(out, "poles.json", &report)?.display());
    Ok(())
}

fn gains_validate(cfg: &Config, out: &Path) -> Result<()> {
    let p = cfg.params()?;
    let mm = build_matrices(&p);
    let gains = cfg.gains.build(&mm)?;
    let cert = validate_gains(&gains, &mm);
    print!("{cert}");
    println!("{}", write_json(out, "gains.json", &cert)?.display());
    cert.ensure()?;
    Ok(())
}

fn metrics(series: &Path, reference: &Path, out: &Path) -> Result<()> {
    let m = compute_metrics(&Table::read(series)?, &Table::read(reference)?)?;
    println!("{}", write_json(out, "metrics.json", &m)?.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let o = &cli.opts;
    match &cli.command {
        Command::Simulate { path } => simulate(&load_config(o, path.as_deref())?, &o.out),
        Command::Chart { path } => chart(&load_config(o, path.as_deref())?, &o.out),
        Command::Equilibrium { path } => equilibrium_cmd(&load_config(o, path.as_deref())?, &o.out),
        Command::Poles { path } => poles(&load_config(o, path.as_deref())?, &o.out),
        Command::Gains {
            action: GainsAction::Validate { path },
        } => gains_validate(&load_config(o, path.as_deref())?, &o.out),
        Command::Metrics { series, reference } => metrics(series, reference, &o.out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("awsteer: cli: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("awsteer: {}", one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
