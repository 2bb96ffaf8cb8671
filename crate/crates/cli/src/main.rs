use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use swing_core::config::{echo, parse_config, RunConfig};
use swing_core::diagnostics::{boundary_profile, max_ratio, policy_times};
use swing_core::mc::{evaluate_policy, policy_from_surface};
use swing_core::policy::{lsq_slope, trigger_1d, trigger_2d_projections, write_curves_csv, Projection, TriggerCurve};
use swing_core::solver::{solve, write_surface_csv, BoundaryMode, HjbProblem};

const OUT_ENV: &str = "SWING_OUT_DIR";
const LEDGER_FILE: &str = "mc_ledger.csv";
const LEDGER_HEADER: &str = "config_hash,example,seed,n_paths,steps,mean,stderr,wall_time_s,pde_value,lower,upper,inside";

#[derive(Parser, Debug)]
#[command(name = "swing", version, about = "Swing option valuation by finite differences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; falls back to the config, then `out`.
    #[arg(long, global = true, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Uses the `[paper_scale]` grid of the config.
    #[arg(long, global = true)]
    paper_scale: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Solve and export the retained value surfaces.
    Solve,
    /// Solve and export exercise curves.
    Trigger,
    /// Print the CFL number and the largest stable time step.
    Cfl,
    /// Compare a linear-boundary solve with the immediate-exercise value at large x1.
    BoundaryCheck,
    /// Value the extracted policy by Monte Carlo and append a ledger row.
    McCheck,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: &Cli) -> Result<()> {
    let Some(path) = &cli.config else {
        bail!("--config <path> is required");
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config = parse_config(&text).with_context(|| format!("in {}", path.display()))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.paper_scale {
        config.apply_paper_scale()?;
    }
    for w in config.warnings() {
        eprintln!("warning: {w}");
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let resolved = echo(&config);
    fs::write(out.join("resolved_config.toml"), &resolved)?;

    match cli.command {
        Command::Solve => cmd_solve(&config, &out),
        Command::Trigger => cmd_trigger(&config, &out),
        Command::Cfl => cmd_cfl(&config),
        Command::BoundaryCheck => cmd_boundary_check(&config, &out),
        Command::McCheck => cmd_mc_check(&config, &resolved, &out),
    }
}

fn problem(config: &RunConfig, retain: Vec<f64>, boundary: Option<BoundaryMode>) -> Result<HjbProblem> {
    let mut scheme = config.scheme();
    scheme.retain_slices = retain;
    if let Some(b) = boundary {
        scheme.boundary = b;
    }
    let p = HjbProblem::new(config.model()?, config.contract()?, scheme)?;
    for w in &p.warnings {
        eprintln!("warning: {w}");
    }
    Ok(p)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn slice_name(t: f64) -> String {
    format!("{t:.4}")
}

fn cmd_solve(config: &RunConfig, out: &Path) -> Result<()> {
    let p = problem(config, config.output.retain.clone(), None)?;
    let sol = solve(&p)?;
    let two = sol.grid.x2.is_some();
    let mut files = Vec::new();
    for s in &sol.surfaces {
        let name = format!("surface_t{}.csv", slice_name(s.time));
        let mut w = create(&out.join(&name))?;
        write_surface_csv(&mut w, &sol.grid, s, p.contract.rate_cap[0])?;
        w.flush()?;
        files.push(name);
    }
    let mut gp = create(&out.join("surfaces.gp"))?;
    writeln!(gp, "set datafile separator ','")?;
    writeln!(gp, "set terminal pngcairo size 900,700")?;
    writeln!(gp, "set key off")?;
    for name in &files {
        let stem = name.trim_end_matches(".csv");
        if two {
            for &z in &config.output.projection_z {
                let iz = swing_core::grid::nearest_index(&sol.grid.z, z);
                let zv = sol.grid.z[iz];
                writeln!(gp, "set output '{stem}_z{}.png'", slice_name(zv))?;
                writeln!(gp, "set xlabel 'x1'; set ylabel 'x2'; set zlabel 'V'")?;
                writeln!(gp, "set title 'value at z = {zv}'")?;
                writeln!(gp, "splot '{name}' every ::1 using 3:4:(abs($2-{zv})<1e-9 ? $5 : 1/0) with points pt 7 ps 0.3")?;
            }
        } else {
            writeln!(gp, "set output '{stem}.png'")?;
            writeln!(gp, "set xlabel 'z'; set ylabel 'x'; set zlabel 'V'")?;
            writeln!(gp, "set title 'value surface'")?;
            writeln!(gp, "splot '{name}' every ::1 using 2:3:4 with points pt 7 ps 0.3")?;
        }
    }
    gp.flush()?;
    let s0 = &sol.surfaces[0];
    let x0 = config.mc.x0.clone().unwrap_or_default();
    println!(
        "solved {} steps; V(t={}, z=0, x={:?}) = {}",
        sol.grid.t.len() - 1,
        s0.time,
        x0,
        s0.interpolate(&sol.grid, 0.0, x0[0], x0.get(1).copied().unwrap_or(0.0))
    );
    println!("wrote {} surface files to {}", files.len(), out.display());
    Ok(())
}

fn cmd_trigger(config: &RunConfig, out: &Path) -> Result<()> {
    let p = problem(config, config.output.trigger_times.clone(), None)?;
    let sol = solve(&p)?;
    let mut gp = create(&out.join("triggers.gp"))?;
    writeln!(gp, "set datafile separator ','")?;
    writeln!(gp, "set terminal pngcairo size 900,700")?;
    if sol.grid.x2.is_none() {
        let curves = config
            .output
            .trigger_times
            .iter()
            .map(|&t| trigger_1d(&p, &sol, t))
            .collect::<Result<Vec<_>, _>>()?;
        write_curves(&out.join("triggers.csv"), &curves)?;
        writeln!(gp, "set output 'triggers.png'")?;
        writeln!(gp, "set xlabel 'trigger price'; set ylabel 'z'")?;
        writeln!(gp, "plot 'triggers.csv' every ::1 using 4:3 with linespoints title 'exercise curve'")?;
        report(&curves, false);
    } else {
        let x2s = config.output.projection_x2.clone().unwrap_or_default();
        let zs = config.output.projection_z.clone();
        let mut price = Vec::new();
        let mut plane = Vec::new();
        for &t in &config.output.trigger_times {
            price.extend(trigger_2d_projections(&p, &sol, t, &Projection::PriceZ(x2s.clone()))?);
            plane.extend(trigger_2d_projections(&p, &sol, t, &Projection::X1X2(zs.clone()))?);
        }
        write_curves(&out.join("triggers_price_z.csv"), &price)?;
        write_curves(&out.join("triggers_x1x2.csv"), &plane)?;
        writeln!(gp, "set output 'triggers_price_z.png'")?;
        writeln!(gp, "set xlabel 'trigger price x1 + x2'; set ylabel 'z'")?;
        writeln!(gp, "plot 'triggers_price_z.csv' every ::1 using 4:3 with points pt 7 title 'exercise curves'")?;
        writeln!(gp, "set output 'triggers_x1x2.png'")?;
        writeln!(gp, "set xlabel 'x1'; set ylabel 'x2'")?;
        writeln!(gp, "plot 'triggers_x1x2.csv' every ::1 using 4:3 with points pt 7 title 'exercise curves'")?;
        report(&price, false);
        report(&plane, true);
    }
    gp.flush()?;
    println!("wrote exercise curves to {}", out.display());
    Ok(())
}

fn write_curves(path: &Path, curves: &[TriggerCurve]) -> Result<()> {
    let mut w = create(path)?;
    write_curves_csv(&mut w, curves)?;
    w.flush()?;
    Ok(())
}

fn report(curves: &[TriggerCurve], with_slope: bool) {
    for c in curves {
        let clean = c.clean_points().len();
        let mut line = format!("t = {} fixed = {}: {clean}/{} clean rows", c.time, c.fixed, c.points.len());
        if with_slope {
            match lsq_slope(c, true) {
                Ok(s) => line.push_str(&format!(", slope dx2/dx1 = {s:.4}")),
                Err(e) => line.push_str(&format!(", slope unavailable ({e})")),
            }
        }
        println!("{line}");
    }
}

fn cmd_cfl(config: &RunConfig) -> Result<()> {
    let p = problem(config, Vec::new(), None)?;
    let c = p.cfl_number();
    println!("CFL number: {c:.12}");
    println!("{}", if c <= 1.0 { "stable" } else { "unstable" });
    println!("max stable dt: {:.12e}", p.scheme.dt / c);
    Ok(())
}

fn cmd_boundary_check(config: &RunConfig, out: &Path) -> Result<()> {
    let bc = config.boundary_check;
    let p = problem(config, vec![bc.t], Some(BoundaryMode::Linear))?;
    let sol = solve(&p)?;
    let profile = boundary_profile(&p, &sol, bc.t, bc.z, 3)?;
    let mut w = create(&out.join("boundary_check.csv"))?;
    writeln!(w, "x1,x2,pde,closed_form,abs_diff,ratio")?;
    for q in &profile {
        writeln!(w, "{},{},{},{},{},{}", q.x1, q.x2, q.pde, q.closed_form, q.abs_diff(), q.ratio())?;
    }
    w.flush()?;
    let mut gp = create(&out.join("boundary_check.gp"))?;
    writeln!(gp, "set datafile separator ','")?;
    writeln!(gp, "set terminal pngcairo size 900,700")?;
    writeln!(gp, "set output 'boundary_check.png'")?;
    writeln!(gp, "set logscale y; set xlabel 'x2'; set ylabel '|difference|'")?;
    writeln!(gp, "plot 'boundary_check.csv' every ::1 using 2:5 with points pt 7 title 'linear BC vs closed form'")?;
    gp.flush()?;
    println!("t = {}, z = {}: max difference/value ratio = {:.6e}", bc.t, bc.z, max_ratio(&profile));
    Ok(())
}

fn cmd_mc_check(config: &RunConfig, resolved: &str, out: &Path) -> Result<()> {
    let spacing = config.mc.policy_spacing.unwrap_or(if config.factor.len() > 1 { 0.05 } else { config.grid.dt });
    let p = problem(config, policy_times(config.contract.horizon, spacing), None)?;
    let sol = solve(&p)?;
    let policy = policy_from_surface(&p, &sol)?;
    let x0 = config.mc.x0.clone().context("mc.x0 unresolved")?;
    let steps = config.mc.steps.context("mc.steps unresolved")?;
    let start = Instant::now();
    let est = evaluate_policy(&p.model, &p.contract, &policy, &x0, config.mc.paths, steps, config.seed)?;
    let wall = start.elapsed().as_secs_f64();
    let pde = sol.surfaces[0].interpolate(&sol.grid, 0.0, x0[0], x0.get(1).copied().unwrap_or(0.0));
    let lower = pde - (3.0 * est.stderr + config.mc.allowance * pde.abs());
    let upper = pde + 3.0 * est.stderr;
    let inside = lower <= est.mean && est.mean <= upper;
    let hash = hex::encode(Sha256::digest(resolved.as_bytes()));

    let path = out.join(LEDGER_FILE);
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
    if fresh {
        writeln!(f, "{LEDGER_HEADER}")?;
    }
    writeln!(
        f,
        "{hash},{},{},{},{steps},{},{},{wall},{pde},{lower},{upper},{inside}",
        config.example.as_str(),
        config.seed,
        config.mc.paths,
        est.mean,
        est.stderr
    )?;
    println!(
        "PDE {pde:.6}, MC {:.6} +/- {:.6}, band [{lower:.6}, {upper:.6}]: {}",
        est.mean,
        est.stderr,
        if inside { "inside" } else { "outside" }
    );
    Ok(())
}
