use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rslab::balancing::balance_affine;
use rslab::experiments::suite::run_suite_str;
use rslab::flow1d::flow_state;
use rslab::grid_set::{iterated_steiner, GridMask, Schedule};
use rslab::interval_set::IntervalSet;
use rslab::orbit_distance::distance_orbit;
use rslab::spectral::{eigen_table, write_eigen_csv, RadiiTriple};
use rslab::sphere::{degree_dim, SphereGrid};
use rslab::star_set::StarSet;
use serde_json::json;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "rs-lab", version, about = "Riesz-Sobolev stability laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment config and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Flow a 1D interval set to time t in [0, 1].
    Flow {
        #[arg(long)]
        set: PathBuf,
        #[arg(long)]
        t: f64,
        /// Event trace CSV: T,t,interval_index,lo,hi.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Where to write the flowed set as JSON (stdout if absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Iterated Steiner symmetrization of a mask.
    Steiner {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 40)]
        sweeps: usize,
        /// axes, golden or random.
        #[arg(long, default_value = "golden")]
        schedule: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Convergence CSV: sweep,ux,uy,uz,sym_diff,ratio,count.
        #[arg(long = "out-csv")]
        out_csv: Option<PathBuf>,
        /// Final mask as RSM.
        #[arg(long = "out-mask")]
        out_mask: Option<PathBuf>,
    },
    /// Star set r^d + d s G for a degree-n spherical harmonic G.
    Star {
        #[arg(long)]
        harmonic: usize,
        #[arg(long)]
        s: f64,
        #[arg(long, value_enum, default_value_t = Emit::Json)]
        emit: Emit,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        /// Comma-separated coefficients in the degree-n basis (default: first basis function).
        #[arg(long, value_delimiter = ',')]
        coeffs: Option<Vec<f64>>,
        /// Cell size for `--emit mask`.
        #[arg(long, default_value_t = 1.0 / 128.0)]
        h: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Eigenvalue table of the second variation at a ball triple.
    Spectral {
        /// Radii r1,r2,r3.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        r: Vec<f64>,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 20)]
        nmax: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Affine balancing of a star set.
    Balance {
        #[arg(long)]
        star: PathBuf,
        /// Newton residual CSV: iteration,residual,step.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Balanced star set as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Orbit distance of a mask triple to the ball triple.
    Distance {
        /// Three RSM files a,b,c.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        triple: Vec<PathBuf>,
        #[arg(long, default_value_t = 20000)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    /// RSM mask of the set.
    Mask,
    /// CSV of the boundary fields at the sphere nodes.
    Fields,
    /// Star set JSON.
    Json,
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_mask(path: &Path) -> Result<GridMask> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    GridMask::read_rsm(io::BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: Option<&Path>, v: &serde_json::Value) -> Result<()> {
    let mut w = sink(path)?;
    writeln!(w, "{}", serde_json::to_string_pretty(v)?)?;
    w.flush()?;
    Ok(())
}

/// Returns whether every assertion held.
fn execute(cmd: Cmd) -> Result<bool> {
    match cmd {
        Cmd::Run { config, out } => {
            let o = run_suite_str(&read(&config)?, &out)?;
            for r in &o.results {
                eprintln!("{} {}", if r.passed { "ok  " } else { "FAIL" }, r.name);
            }
            eprintln!("manifest: {}", out.join("manifest.json").display());
            return Ok(o.passed);
        }
        Cmd::Flow { set, t, trace, out } => {
            let e = IntervalSet::from_json(&read(&set)?)?;
            let st = flow_state(&e, t)?;
            if let Some(p) = trace {
                let mut w = sink(Some(&p))?;
                st.write_trace(&mut w)?;
                w.flush()?;
            }
            let mut w = sink(out.as_deref())?;
            writeln!(w, "{}", st.set().to_json())?;
            w.flush()?;
        }
        Cmd::Steiner { input, sweeps, schedule, seed, out_csv, out_mask } => {
            let m = read_mask(&input)?;
            let run = iterated_steiner(&m, sweeps, &Schedule::parse(&schedule, seed)?)?;
            let mut w = sink(out_csv.as_deref())?;
            run.write_csv(&mut w)?;
            w.flush()?;
            if let Some(p) = out_mask {
                let mut w = sink(Some(&p))?;
                run.result.write_rsm(&mut w)?;
                w.flush()?;
            }
        }
        Cmd::Star { harmonic, s, emit, d, r, coeffs, h, out } => {
            let grid = Arc::new(SphereGrid::default_for(d)?);
            let dim = degree_dim(d, harmonic);
            let c = match coeffs {
                Some(c) if c.len() != dim => bail!("degree {harmonic} in d = {d} needs {dim} coefficients, got {}", c.len()),
                Some(c) => c,
                None => (0..dim).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect(),
            };
            let star = StarSet::from_harmonic(grid, r, harmonic, &c, s)?;
            let mut w = sink(out.as_deref())?;
            match emit {
                Emit::Json => writeln!(w, "{}", star.to_json())?,
                Emit::Mask => star.to_mask(h)?.write_rsm(&mut w)?,
                Emit::Fields => {
                    let f = star.fields();
                    writeln!(w, "node,x,y,z,radius,F,F_plus,F_minus")?;
                    for (k, x) in star.grid().nodes().iter().enumerate() {
                        writeln!(
                            w,
                            "{k},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                            x[0],
                            x[1],
                            x[2],
                            star.radii()[k],
                            f.f[k],
                            f.plus[k],
                            f.minus[k]
                        )?;
                    }
                }
            }
            w.flush()?;
        }
        Cmd::Spectral { r, d, nmax, out } => {
            let r: [f64; 3] = r.try_into().map_err(|v: Vec<f64>| anyhow!("--r needs three radii, got {}", v.len()))?;
            let rows = eigen_table(&RadiiTriple::new(r)?, d, nmax);
            let mut w = sink(out.as_deref())?;
            write_eigen_csv(&rows, &mut w)?;
            w.flush()?;
        }
        Cmd::Balance { star, report, out } => {
            let e = StarSet::from_json(&read(&star)?)?;
            let rep = balance_affine(&e)?;
            if let Some(p) = report {
                let mut w = sink(Some(&p))?;
                rep.write_csv(&mut w)?;
                w.flush()?;
            }
            if let Some(p) = out {
                fs::write(&p, rep.balanced.to_json() + "\n")?;
            }
            let d = e.dim();
            let lin: Vec<Vec<f64>> = (0..d).map(|a| (0..d).map(|b| rep.phi.linear[(a, b)]).collect()).collect();
            let tr: Vec<f64> = (0..d).map(|a| rep.phi.translation[a]).collect();
            write_json(
                None,
                &json!({
                    "converged": rep.converged,
                    "iterations": rep.steps.len(),
                    "residual": rep.residuals.last(),
                    "linear": lin,
                    "translation": tr,
                    "constant": rep.constant,
                }),
            )?;
        }
        Cmd::Distance { triple, budget, seed, json } => {
            if triple.len() != 3 {
                bail!("--triple needs three mask files, got {}", triple.len());
            }
            let m = [read_mask(&triple[0])?, read_mask(&triple[1])?, read_mask(&triple[2])?];
            let res = distance_orbit(&m, budget, seed)?;
            write_json(json.as_deref(), &res.to_json())?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
