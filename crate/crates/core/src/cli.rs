//! Command-line front end: `spectrum`, `evolve` and `ensemble`.
//!
//! Every file goes into the output directory. Nothing that depends on the
//! worker count or on the output path ends up in a file, so reruns are
//! byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::config::{RunConfig, ShapeKind};
use crate::ensemble::{
    derive_seed, run_ensemble, run_spectrum_ensemble, EnsembleConfig, EnsembleResult, LevelStatistics,
    MeanStderr,
};
use crate::error::{BilliardError, Result};
use crate::evolution::characteristic_times;
use crate::spectral_stats::{reference_pdf, Reference};

#[derive(Debug, Parser)]
#[command(name = "spin-billiards", version, about = "Single-excitation XX spin billiards")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues and level-spacing statistics.
    Spectrum(RunArgs),
    /// One realization (index 0): CGF, autocorrelation, snapshots, momentum.
    Evolve(RunArgs),
    /// Ensemble averages with standard errors over all realizations.
    Ensemble(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// `key = value` config file; unspecified keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `output_dir`.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads (default: all cores). Does not change results.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Text-grid mask; implies `shape = custom`.
    #[arg(long)]
    pub mask_file: Option<PathBuf>,
}

/// Process exit code for an error.
pub fn exit_code(e: &BilliardError) -> i32 {
    match e {
        BilliardError::Config(_) | BilliardError::InvalidArgument(_) => 2,
        BilliardError::NumericFailure(_) | BilliardError::DegenerateInput(_) => 3,
        BilliardError::Realization { source, .. } => exit_code(source),
        BilliardError::Io(_) => 1,
    }
}

/// Fixed-point when that is exact enough to read, scientific otherwise.
/// Both forms round-trip through `f64::from_str`.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &args.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(m) = &args.mask_file {
        cfg.shape = ShapeKind::Custom;
        cfg.mask_file = Some(m.clone());
    }
    if args.workers == Some(0) {
        return Err(BilliardError::Config("--workers must be >= 1".into()));
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Spectrum(args) => cmd_spectrum(&args),
        Command::Evolve(args) => cmd_evolve(&args),
        Command::Ensemble(args) => cmd_ensemble(&args),
    }
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn prepare(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.output_dir)?;
    Ok(&cfg.output_dir)
}

fn manifest(command: &str, run: &RunConfig, cfg: &EnsembleConfig) -> Result<String> {
    let base = cfg.shape.build()?;
    let ct = characteristic_times(&base, cfg.evolution.lambda)?;
    let grid = cfg.time_grid(&base)?;
    let (lx, ly) = base.bounding_box();
    let mut s = String::new();
    writeln!(s, "# spin-billiards {} {command}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(s, "# bounding_box = {lx} {ly}").unwrap();
    writeln!(s, "# n_sites = {}", base.n_sites()).unwrap();
    writeln!(s, "# t_lambda = {}", fmt_num(ct.t_lambda)).unwrap();
    writeln!(s, "# t_l = {}", fmt_num(ct.t_l)).unwrap();
    writeln!(s, "# step = {}", fmt_num(grid.dt)).unwrap();
    writeln!(s, "# n_steps = {}", grid.n_steps).unwrap();
    for r in 0..cfg.n_realizations {
        writeln!(s, "# seed[{r}] = {:#018x}", derive_seed(cfg.base_seed, r as u64)).unwrap();
    }
    // output_dir is left out so that the manifest does not depend on where it lives
    for line in run.to_text().lines().filter(|l| !l.starts_with("output_dir")) {
        writeln!(s, "{line}").unwrap();
    }
    Ok(s)
}

fn write_levels(dir: &Path, levels: Option<&LevelStatistics>) -> Result<()> {
    let Some(lv) = levels else {
        log::warn!("too few level spacings; lss.csv and lss_summary.txt not written");
        return Ok(());
    };
    let mut csv = String::from("bin_center,empirical_density,poisson_pdf,semi_poisson_pdf,wigner_pdf\n");
    for (c, d) in lv.histogram.bin_centers().iter().zip(&lv.histogram.densities) {
        write!(csv, "{},{}", fmt_num(*c), fmt_num(*d)).unwrap();
        for r in Reference::ALL {
            write!(csv, ",{}", fmt_num(reference_pdf(r, *c)?)).unwrap();
        }
        csv.push('\n');
    }
    write(dir, "lss.csv", &csv)?;

    let mut summary = String::new();
    writeln!(summary, "n_spacings = {}", lv.pooled_spacings.len()).unwrap();
    writeln!(summary, "overflow = {}", lv.histogram.overflow).unwrap();
    for (r, d) in lv.ks {
        writeln!(summary, "ks_{} = {}", r.name(), fmt_num(d)).unwrap();
    }
    let best = lv
        .ks
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(r, _)| r.name())
        .unwrap_or("none");
    writeln!(summary, "best_fit = {best}").unwrap();
    write(dir, "lss_summary.txt", &summary)
}

fn cmd_spectrum(args: &RunArgs) -> Result<()> {
    let run = load_config(args)?;
    let cfg = run.ensemble_config()?;
    let man = manifest("spectrum", &run, &cfg)?;
    let (summaries, levels) = run_spectrum_ensemble(&cfg, args.workers)?;
    let dir = prepare(&run)?;

    let mut csv = String::from("index,energy\n");
    for (k, e) in summaries[0].eigenvalues.iter().enumerate() {
        writeln!(csv, "{k},{}", fmt_num(*e)).unwrap();
    }
    write(dir, "spectrum.csv", &csv)?;
    if summaries.len() > 1 {
        write(dir, "spectra.csv", &spectra_csv(summaries.iter().map(|s| (s.index, &s.eigenvalues[..]))))?;
    }
    write_levels(dir, levels.as_ref())?;
    write(dir, "manifest.txt", &man)
}

fn spectra_csv<'a>(rows: impl Iterator<Item = (usize, &'a [f64])>) -> String {
    let mut csv = String::from("realization,index,energy\n");
    for (r, ev) in rows {
        for (k, e) in ev.iter().enumerate() {
            writeln!(csv, "{r},{k},{}", fmt_num(*e)).unwrap();
        }
    }
    csv
}

fn cmd_evolve(args: &RunArgs) -> Result<()> {
    let run = load_config(args)?;
    let mut cfg = run.ensemble_config()?;
    cfg.n_realizations = 1;
    let mut shown = run.clone();
    shown.n_realizations = 1;
    let man = manifest("evolve", &shown, &cfg)?;
    let res = run_ensemble(&cfg, args.workers)?;
    let dir = prepare(&run)?;
    write_dynamics(dir, &res, false)?;
    write(dir, "manifest.txt", &man)
}

fn cmd_ensemble(args: &RunArgs) -> Result<()> {
    let run = load_config(args)?;
    let cfg = run.ensemble_config()?;
    let man = manifest("ensemble", &run, &cfg)?;
    let res = run_ensemble(&cfg, args.workers)?;
    let dir = prepare(&run)?;
    write_dynamics(dir, &res, true)?;
    write(
        dir,
        "spectra.csv",
        &spectra_csv(res.realizations.iter().map(|s| (s.index, &s.eigenvalues[..]))),
    )?;
    write_levels(dir, res.levels.as_ref())?;
    write(dir, "manifest.txt", &man)
}

fn write_dynamics(dir: &Path, res: &EnsembleResult, with_stderr: bool) -> Result<()> {
    let mut csv = String::from(if with_stderr {
        "t,coherent,coherent_stderr,incoherent,incoherent_stderr\n"
    } else {
        "t,coherent,incoherent\n"
    });
    for (k, t) in res.times.iter().enumerate() {
        let (c, i) = (&res.cgf_coherent, &res.cgf_incoherent);
        if with_stderr {
            writeln!(
                csv,
                "{},{},{},{},{}",
                fmt_num(*t),
                fmt_num(c.mean[k]),
                fmt_num(c.stderr[k]),
                fmt_num(i.mean[k]),
                fmt_num(i.stderr[k])
            )
            .unwrap();
        } else {
            writeln!(csv, "{},{},{}", fmt_num(*t), fmt_num(c.mean[k]), fmt_num(i.mean[k])).unwrap();
        }
    }
    write(dir, "cgf.csv", &csv)?;

    let mut csv = String::from(if with_stderr { "lag_time,C,C_stderr\n" } else { "lag_time,C\n" });
    for (k, lag) in res.acf_lags.iter().enumerate() {
        write!(csv, "{},{}", fmt_num(*lag), fmt_num(res.acf[k])).unwrap();
        if with_stderr {
            write!(csv, ",{}", fmt_num(res.acf_stderr[k])).unwrap();
        }
        csv.push('\n');
    }
    write(dir, "acf.csv", &csv)?;

    let (lx, ly) = res.bounding_box;
    let grid_csv = |x: &str, y: &str, value: &str, g: &MeanStderr| {
        let mut csv = format!("{x},{y},{value}");
        if with_stderr {
            write!(csv, ",{value}_stderr").unwrap();
        }
        csv.push('\n');
        for j in 0..ly {
            for i in 0..lx {
                let m = j * lx + i;
                write!(csv, "{i},{j},{}", fmt_num(g.mean[m])).unwrap();
                if with_stderr {
                    write!(csv, ",{}", fmt_num(g.stderr[m])).unwrap();
                }
                csv.push('\n');
            }
        }
        csv
    };
    for (t, snap) in res.snapshot_times.iter().zip(&res.snapshots) {
        write(dir, &format!("snapshot_{}.csv", fmt_num(*t)), &grid_csv("i", "j", "prob", snap))?;
    }
    write(dir, "momentum.csv", &grid_csv("wx_index", "wy_index", "magnitude", &res.momentum))
}
