use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use msfem::config::{Experiment, RunConfig, Settings};
use msfem::experiments::{
    central_node, ideal_discrepancy, saturating_order, write_csv, write_field, PointOptions, RunRecord, Study,
};
use msfem::problems::{helmholtz_1d, helmholtz_1d_exact, periodic_1d, random_checkerboard, scattering_2d, ProblemSpec};
use msfem::scalar::{Complex64, Scalar};

/// Multiscale Petrov-Galerkin experiments for rough diffusion and Helmholtz problems.
#[derive(Parser)]
#[command(name = "msfem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// 1D periodic coefficient: coarse FEM against the multiscale method
    Homogenize1d(RunArgs),
    /// 2D random checkerboard coefficient
    Homogenize2d(RunArgs),
    /// 1D Helmholtz with an impedance condition, against the exact plane wave
    Helmholtz1d(RunArgs),
    /// 2D scattering from a triangular obstacle
    Scatter2d(RunArgs),
    /// Decay of ideal correctors away from their node
    Decay(RunArgs),
    /// Checks that the method with global correctors reproduces I_H u_h
    IdealCheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Coarse mesh levels, e.g. `3`, `1,2,4` or `1..5`
    #[arg(long)]
    coarse_levels: Option<String>,
    #[arg(long)]
    fine_level: Option<String>,
    /// Patch orders ℓ, same list syntax as the levels
    #[arg(long)]
    ell: Option<String>,
    /// Wave numbers, comma separated
    #[arg(long)]
    kappa: Option<String>,
    /// Periods of the 1D coefficient, comma separated
    #[arg(long)]
    eps: Option<String>,
    /// Checkerboard seeds
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, env = "MSFEM_CACHE_DIR")]
    cache_dir: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    /// INI file with `[run]` and `[problem]` sections
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dump_mesh: bool,
    #[arg(long)]
    dump_fields: bool,
}

impl Command {
    fn split(self) -> (Experiment, RunArgs) {
        match self {
            Command::Homogenize1d(a) => (Experiment::Homogenize1d, a),
            Command::Homogenize2d(a) => (Experiment::Homogenize2d, a),
            Command::Helmholtz1d(a) => (Experiment::Helmholtz1d, a),
            Command::Scatter2d(a) => (Experiment::Scatter2d, a),
            Command::Decay(a) => (Experiment::Decay, a),
            Command::IdealCheck(a) => (Experiment::IdealCheck, a),
        }
    }
}

fn resolve(experiment: Experiment, args: RunArgs) -> anyhow::Result<RunConfig> {
    let file = match &args.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let flags = Settings {
        coarse_levels: args.coarse_levels,
        fine_level: args.fine_level,
        ell: args.ell,
        kappa: args.kappa,
        eps: args.eps,
        seed: args.seed,
        cache_dir: args.cache_dir,
        out: args.out,
        workers: args.workers,
    };
    let mut cfg = RunConfig::resolve(experiment, file.overridden_by(flags))?;
    cfg.dump_mesh = args.dump_mesh;
    cfg.dump_fields = args.dump_fields;
    Ok(cfg)
}

/// One problem instance of a sweep, with a short tag for file names.
struct Instance {
    problem: ProblemSpec,
    tag: String,
}

fn instances(cfg: &RunConfig) -> anyhow::Result<Vec<Instance>> {
    let by_seed = || -> Vec<Instance> {
        cfg.seeds
            .iter()
            .map(|&s| Instance {
                problem: random_checkerboard(s),
                tag: format!("seed{s}"),
            })
            .collect()
    };
    let by_kappa = |make: fn(f64) -> msfem::Result<ProblemSpec>| -> anyhow::Result<Vec<Instance>> {
        cfg.kappas
            .iter()
            .map(|&k| {
                Ok(Instance {
                    problem: make(k)?,
                    tag: format!("kappa{k}"),
                })
            })
            .collect()
    };
    Ok(match cfg.experiment {
        Experiment::Homogenize1d => cfg
            .eps
            .iter()
            .map(|&e| {
                Ok(Instance {
                    problem: periodic_1d(e)?,
                    tag: format!("eps{e}"),
                })
            })
            .collect::<anyhow::Result<_>>()?,
        Experiment::Homogenize2d => by_seed(),
        Experiment::Helmholtz1d => by_kappa(helmholtz_1d)?,
        Experiment::Scatter2d => by_kappa(scattering_2d)?,
        Experiment::Decay if !cfg.kappas.is_empty() => by_kappa(scattering_2d)?,
        Experiment::Decay => by_seed(),
        Experiment::IdealCheck if !cfg.kappas.is_empty() => by_kappa(helmholtz_1d)?,
        Experiment::IdealCheck => by_seed(),
    })
}

fn dump_meshes(cfg: &RunConfig, problem: &ProblemSpec) -> anyhow::Result<()> {
    let mut levels = cfg.coarse_levels.clone();
    levels.push(cfg.fine_level);
    for level in levels {
        let mesh = msfem::mesh::Mesh::build(&problem.domain, level)?;
        let path = cfg.out.join(format!("mesh_{}_L{level}.txt", problem.name));
        mesh.write_dump(std::io::BufWriter::new(fs::File::create(&path)?))?;
    }
    Ok(())
}

fn sweep<S: Scalar>(cfg: &RunConfig, inst: &Instance, study: &Study<S>) -> anyhow::Result<Vec<RunRecord>> {
    let decay = cfg.experiment == Experiment::Decay;
    let grid: Vec<(u32, usize)> = cfg
        .coarse_levels
        .iter()
        .flat_map(|&lc| {
            let ells = if decay { vec![saturating_order(lc)] } else { cfg.ells.clone() };
            ells.into_iter().map(move |l| (lc, l))
        })
        .collect();
    let opts = PointOptions {
        cache_dir: cfg.cache_dir.clone(),
        infsup: !decay,
        decay,
    };
    if cfg.dump_fields {
        let path = cfg.out.join(format!("{}_{}_reference.txt", study.problem.name, inst.tag));
        write_field(&path, &study.fine, &study.reference)?;
    }
    grid.par_iter()
        .map(|&(lc, ell)| {
            let res = study
                .point(lc, ell, &opts)
                .with_context(|| format!("{} at H = 2^-{lc}, ℓ = {ell}", inst.tag))?;
            if cfg.dump_fields {
                let stem = cfg.out.join(format!("{}_{}_H{lc}_ell{ell}", study.problem.name, inst.tag));
                let with = |suffix: &str| PathBuf::from(format!("{}_{suffix}.txt", stem.display()));
                write_field(&with("ms"), &study.fine, &res.fine_ms)?;
                write_field(&with("fem"), &study.fine, &res.fine_fem)?;
                let z = central_node(&res.hierarchy)?;
                write_field(&with("corrector"), &study.fine, &res.correctors.corrector(z)?.to_dense())?;
            }
            Ok(res.record)
        })
        .collect()
}

fn run_instance<S: Scalar>(cfg: &RunConfig, inst: &Instance) -> anyhow::Result<Vec<RunRecord>> {
    let mut study = Study::<S>::new(inst.problem.clone(), cfg.fine_level)?;
    if cfg.experiment == Experiment::Helmholtz1d {
        let kappa = inst.problem.kappa().unwrap_or_default();
        let exact: Vec<S> = (0..study.fine.num_nodes())
            .map(|v| {
                let u = helmholtz_1d_exact(kappa, study.fine.point(v)[0]);
                S::from_parts(u.re, u.im)
            })
            .collect();
        study.reference = exact;
    }
    if cfg.experiment == Experiment::IdealCheck {
        let mut worst = 0.0f64;
        for &lc in &cfg.coarse_levels {
            let d = ideal_discrepancy(&study, lc, cfg.cache_dir.as_deref())?;
            println!(
                "{} {} H=2^-{lc} h=2^-{}: max discrepancy {d:.3e}",
                inst.problem.name, inst.tag, cfg.fine_level
            );
            worst = worst.max(d);
        }
        if worst > 1e-8 {
            bail!("ideal-method identity violated: {worst:e} > 1e-8");
        }
        return Ok(Vec::new());
    }
    sweep(cfg, inst, &study)
}

fn run(cfg: &RunConfig) -> anyhow::Result<()> {
    let insts = instances(cfg)?;
    if cfg.experiment != Experiment::IdealCheck || cfg.dump_mesh {
        fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    }
    let mut rows = Vec::new();
    for inst in &insts {
        if cfg.dump_mesh {
            dump_meshes(cfg, &inst.problem)?;
        }
        let recs = match inst.problem.field() {
            msfem::scalar::Field::Real => run_instance::<f64>(cfg, inst)?,
            msfem::scalar::Field::Complex => run_instance::<Complex64>(cfg, inst)?,
        };
        rows.extend(recs);
    }
    if cfg.experiment != Experiment::IdealCheck {
        let path: &Path = &cfg.out.join(format!("{}.csv", cfg.experiment.name()));
        write_csv(path, &rows)?;
        println!("wrote {} rows to {}", rows.len(), path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (experiment, args) = cli.command.split();
    let result = resolve(experiment, args).and_then(|cfg| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
        pool.install(|| run(&cfg))
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
