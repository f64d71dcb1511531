//! Command-line driver. `run` returns the process exit code: 0 when every
//! gated check passed, 1 on a failure, 2 for usage or config errors, 3 when
//! nothing failed but something was inconclusive.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use fluctfield_core::expansion::{coefficients, curvature_at_zero, ExpansionCoefficients, Rho2Approximant};
use fluctfield_core::gibbs::{CorrelationAccumulator, RadialBins};

use crate::config::{parse_override, Config};
use crate::experiments::{self, IDS};
use crate::records::{exit_code, read_results, write_manifest, write_results, write_timing, Outcome, ResultRecord};
use crate::setup::{base_seed, derive_seed, eps_ladder, reference, sample_map, test_family, DynBudget, McBudget, System};
use crate::HarnessError;

pub const OUT_ENV: &str = "FLUCTFIELD_OUT";

#[derive(Debug, Parser)]
#[command(name = "fluctfield", version, about = "Equilibrium fluctuation-field experiments")]
pub struct Cli {
    /// Output root; overrides $FLUCTFIELD_OUT and `output.root`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// TOML config file.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set system.beta=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a registered experiment and write its result records.
    Experiment {
        id: String,
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Sample the grand-canonical ensemble and write snapshots and
    /// correlation estimates.
    Sample {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Run scaled dynamics from equilibrium starts and write field series.
    Evolve {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Tabulate limit coefficients.
    Expand {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Finite-volume correlation table.
    Oracle {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Summarise result files from earlier runs.
    Report {
        /// Run directories or results.csv files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// List experiment ids.
    List,
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load(args: &ConfigArgs) -> Result<Config, HarnessError> {
    let mut cfg = Config::load(&args.config)?;
    for o in &args.overrides {
        let (k, v) = parse_override(o).ok_or_else(|| HarnessError::Usage(format!("bad override `{o}`, want KEY=VALUE")))?;
        cfg.set(&k, v);
    }
    Ok(cfg)
}

/// --out, then $FLUCTFIELD_OUT, then `output.root`, then `fluctfield-out`.
fn out_root(flag: &Option<PathBuf>, cfg: Option<&Config>) -> PathBuf {
    if let Some(p) = flag {
        return p.clone();
    }
    if let Some(p) = std::env::var_os(OUT_ENV) {
        return PathBuf::from(p);
    }
    if let Some(Ok(p)) = cfg.filter(|c| c.contains("output.root")).map(|c| c.str("output.root")) {
        return PathBuf::from(p);
    }
    PathBuf::from("fluctfield-out")
}

fn prepare_dir(root: &Path, name: &str, cfg: &Config) -> Result<PathBuf, HarnessError> {
    let sub = if cfg.contains("output.name") {
        cfg.str("output.name")?
    } else {
        name.to_string()
    };
    let dir = root.join(sub);
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    Ok(dir)
}

/// The resolved config minus the keys that only say where output goes.
fn manifest_of(cfg: &Config) -> BTreeMap<String, String> {
    let mut m = cfg.resolved();
    m.retain(|k, _| !k.starts_with("output."));
    m
}

fn dispatch(cli: Cli) -> Result<i32, HarnessError> {
    match &cli.command {
        Command::List => {
            for id in IDS {
                println!("{id}");
            }
            Ok(0)
        }
        Command::Experiment { id, args } => {
            if !IDS.contains(&id.as_str()) {
                return Err(HarnessError::UnknownExperiment(id.clone()));
            }
            let cfg = load(args)?;
            let root = out_root(&cli.out, Some(&cfg));
            let dir = prepare_dir(&root, id, &cfg)?;
            let run = experiments::run(id, &cfg)?;
            let mut manifest = run.manifest;
            manifest.retain(|k, _| !k.starts_with("output."));
            let p = dir.join("results.csv");
            write_results(&p, &run.records).map_err(|e| HarnessError::io(&p, e))?;
            let p = dir.join("timing.csv");
            write_timing(&p, &run.records).map_err(|e| HarnessError::io(&p, e))?;
            let p = dir.join("manifest.txt");
            write_manifest(&p, &manifest).map_err(|e| HarnessError::io(&p, e))?;
            print_summary(&run.records);
            println!("wrote {}", dir.display());
            Ok(exit_code(&run.records))
        }
        Command::Sample { args } => {
            let cfg = load(args)?;
            let dir = prepare_dir(&out_root(&cli.out, Some(&cfg)), "sample", &cfg)?;
            sample(&cfg, &dir)?;
            Ok(0)
        }
        Command::Evolve { args } => {
            let cfg = load(args)?;
            let dir = prepare_dir(&out_root(&cli.out, Some(&cfg)), "evolve", &cfg)?;
            evolve(&cfg, &dir)?;
            Ok(0)
        }
        Command::Expand { args } => {
            let cfg = load(args)?;
            let dir = prepare_dir(&out_root(&cli.out, Some(&cfg)), "expand", &cfg)?;
            expand(&cfg, &dir)?;
            Ok(0)
        }
        Command::Oracle { args } => {
            let cfg = load(args)?;
            let dir = prepare_dir(&out_root(&cli.out, Some(&cfg)), "oracle", &cfg)?;
            oracle_table(&cfg, &dir)?;
            Ok(0)
        }
        Command::Report { inputs } => report(inputs),
    }
}

fn print_summary(records: &[ResultRecord]) {
    for r in records.iter().filter(|r| r.outcome != Outcome::Info) {
        let target = r.target.map(|t| format!(" target {t}")).unwrap_or_default();
        println!(
            "{:<12} {} [{}] {} ± {}{} ({})",
            r.outcome.as_str().to_uppercase(),
            r.quantity,
            r.point,
            r.estimate,
            r.stderr,
            target,
            r.rule
        );
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn sample(cfg: &Config, dir: &Path) -> Result<(), HarnessError> {
    let sys = System::from_config(cfg)?;
    let eps = cfg.f64_or("sample.eps", 1.0)?;
    let budget = McBudget::from_config(cfg)?;
    let seed = derive_seed(base_seed(cfg)?, &[10]);
    let gp = sys.gibbs(eps)?;
    let (confs, stats) = sample_map(&gp, &budget, sys.sweep(eps), seed, |c| c.clone());
    let path = dir.join("snapshots.txt");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?);
    for (i, c) in confs.iter().enumerate() {
        c.write_snapshot(&mut w, seed, i as u64)?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    let r_max = cfg.f64_or("sample.r_max", (0.5 * gp.torus.side).min(3.0))?;
    let bins = RadialBins::new(r_max, cfg.usize_or("sample.bins", 30)?)?;
    let mut acc = CorrelationAccumulator::new(&gp, bins)?;
    for c in &confs {
        acc.observe(c, &gp.phi);
    }
    let st = acc.finish(seed)?;
    let mut s = String::from("quantity,r,estimate,stderr\n");
    s.push_str(&format!("rho1,,{},{}\n", st.rho1.value, st.rho1.stderr));
    s.push_str(&format!("chi,,{},{}\n", st.chi.value, st.chi.stderr));
    s.push_str(&format!("chi_fluct,,{},{}\n", st.chi_fluct.value, st.chi_fluct.stderr));
    for (r, e) in st.bin_centers.iter().zip(&st.rho2) {
        s.push_str(&format!("rho2,{r},{},{}\n", e.value, e.stderr));
    }
    write_file(&dir.join("correlations.csv"), &s)?;
    let mut m = manifest_of(cfg);
    m.insert("samples.written".into(), confs.len().to_string());
    m.insert("tau_int".into(), st.autocorrelation_time.to_string());
    m.insert("stability_violations".into(), st.stability_violations.to_string());
    for (k, name) in ["insert", "delete", "translate"].iter().enumerate() {
        m.insert(format!("acceptance.{name}"), stats.acceptance(k).to_string());
    }
    write_manifest(&dir.join("manifest.txt"), &m).map_err(|e| HarnessError::io(dir, e))?;
    println!("wrote {} snapshots to {}", confs.len(), dir.display());
    Ok(())
}

fn evolve(cfg: &Config, dir: &Path) -> Result<(), HarnessError> {
    let sys = System::from_config(cfg)?;
    let fs = test_family(cfg, &sys)?;
    let db = DynBudget::from_config(cfg)?;
    let base = base_seed(cfg)?;
    let refc = reference(cfg, &sys, derive_seed(base, &[0]))?;
    let mut written = 0;
    for (ie, eps) in eps_ladder(cfg)?.into_iter().enumerate() {
        let gp = sys.gibbs(eps)?;
        let mc = McBudget::from_config(cfg)?;
        let budget = McBudget {
            samples: db.replicas,
            chains: mc.chains.min(db.replicas),
            ..mc
        };
        let starts = crate::setup::sample_configurations(&gp, &budget, sys.sweep(eps), derive_seed(base, &[11, ie as u64]));
        for (r, c) in starts.into_iter().enumerate() {
            let p = fluctfield_core::langevin::DynamicsParams::new(
                db.dt,
                db.horizon,
                eps,
                db.stride(eps),
                derive_seed(base, &[12, ie as u64, r as u64]),
            )?;
            let s = fluctfield_core::langevin::run_scaled(c, &p, &gp, &fs, refc.rho1.value)?;
            let path = dir.join(format!("series_eps{eps}_r{r:03}.csv"));
            let f = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
            s.write_csv(std::io::BufWriter::new(f))?;
            written += 1;
        }
    }
    let mut m = manifest_of(cfg);
    m.insert("series.written".into(), written.to_string());
    write_manifest(&dir.join("manifest.txt"), &m).map_err(|e| HarnessError::io(dir, e))?;
    println!("wrote {written} series to {}", dir.display());
    Ok(())
}

fn expand(cfg: &Config, dir: &Path) -> Result<(), HarnessError> {
    let dim = cfg.usize("system.dim")?;
    let (phi, kind) = crate::setup::potential_from_config(cfg, dim)?;
    let betas = cfg.f64_list("expand.betas")?;
    let mut s = String::from("potential,beta,source,rho1,chi,bulk_diffusion,d_phi,r_phi\n");
    let mut row = |beta: f64, c: &ExpansionCoefficients| {
        s.push_str(&format!(
            "{kind},{beta},{:?},{},{},{},{},{}\n",
            c.source, c.rho1, c.chi, c.bulk_diffusion, c.d_phi, c.r_phi
        ));
    };
    for &beta in &betas {
        let low = ExpansionCoefficients::low_beta(&phi, beta)?;
        row(beta, &low);
        // Boltzmann pair correlation scaled by the low-β density
        let rho2 = Rho2Approximant::boltzmann(&phi, beta, low.rho1 * low.rho1);
        row(beta, &coefficients(&phi, beta, &rho2, low.rho1)?);
    }
    write_file(&dir.join("coefficients.csv"), &s)?;
    let c = curvature_at_zero(&phi)?;
    write_file(
        &dir.join("curvature.csv"),
        &format!("potential,d2_d_phi,d2_rho1_sq_over_chi,d2_r_phi\n{kind},{},{},{}\n", c.d2_d, c.d2_compress, c.d2_r),
    )?;
    write_manifest(&dir.join("manifest.txt"), &manifest_of(cfg)).map_err(|e| HarnessError::io(dir, e))?;
    println!("wrote coefficient tables to {}", dir.display());
    Ok(())
}

fn oracle_table(cfg: &Config, dir: &Path) -> Result<(), HarnessError> {
    use fluctfield_core::oracle::{Boundary, FiniteVolumeSpec, Oracle};
    let dim = cfg.usize("system.dim")?;
    let (phi, _) = crate::setup::potential_from_config(cfg, dim)?;
    let beta = cfg.f64("system.beta")?;
    let z = cfg.f64_or("system.z", 1.0)?;
    let boundary = if cfg.str_or("oracle.boundary", "periodic")? == "free" {
        Boundary::Free
    } else {
        Boundary::Periodic
    };
    let spec = FiniteVolumeSpec::new(cfg.f64("oracle.side")?, dim, boundary, cfg.usize("oracle.n_max")?, cfg.usize("oracle.q")?)?;
    let side = spec.side;
    let o = Oracle::new(spec, phi, z)?;
    let pf = o.partition_function(beta)?;
    let n = cfg.usize_or("oracle.grid", 24)?;
    let mut s = String::from("quantity,x,value\n");
    s.push_str(&format!("log_partition,,{}\n", pf.value.ln()));
    s.push_str(&format!("remainder_bound,,{}\n", pf.remainder_bound));
    s.push_str(&format!("mean_count,,{}\n", pf.mean_count()));
    s.push_str(&format!("count_variance,,{}\n", pf.count_variance()));
    for i in 0..=n {
        let x = 0.5 * side * i as f64 / n as f64;
        s.push_str(&format!("rho1,{x},{}\n", o.correlation(beta, &[[x, 0.0, 0.0]])?));
        s.push_str(&format!("rho2_from_origin,{x},{}\n", o.correlation(beta, &[[0.0; 3], [x, 0.0, 0.0]])?));
    }
    write_file(&dir.join("oracle.csv"), &s)?;
    write_manifest(&dir.join("manifest.txt"), &manifest_of(cfg)).map_err(|e| HarnessError::io(dir, e))?;
    if pf.flagged {
        eprintln!("warning: truncation remainder bound {} exceeds 1e-6", pf.remainder_bound);
    }
    println!("wrote oracle table to {}", dir.display());
    Ok(())
}

fn report(inputs: &[PathBuf]) -> Result<i32, HarnessError> {
    let mut all = Vec::new();
    for p in inputs {
        let file = if p.is_dir() { p.join("results.csv") } else { p.clone() };
        let recs = read_results(&file).map_err(|e| HarnessError::io(&file, e))?;
        all.extend(recs);
    }
    let mut by_exp: BTreeMap<&str, [usize; 4]> = BTreeMap::new();
    for r in &all {
        let c = by_exp.entry(r.experiment.as_str()).or_default();
        c[match r.outcome {
            Outcome::Pass => 0,
            Outcome::Fail => 1,
            Outcome::Inconclusive => 2,
            Outcome::Info => 3,
        }] += 1;
    }
    println!("experiment,pass,fail,inconclusive,info");
    for (e, c) in &by_exp {
        println!("{e},{},{},{},{}", c[0], c[1], c[2], c[3]);
    }
    for r in all.iter().filter(|r| matches!(r.outcome, Outcome::Fail | Outcome::Inconclusive)) {
        println!("# {} {} {} [{}] {} ± {}", r.outcome, r.experiment, r.quantity, r.point, r.estimate, r.stderr);
    }
    Ok(exit_code(&all))
}
