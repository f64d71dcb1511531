//! End-to-end acceptance run over the shipped configs. Prints one line per
//! criterion. A FAIL is reported, not hidden; set FLUCTFIELD_STRICT=1 to
//! turn any FAIL into a nonzero exit.

use std::path::PathBuf;
use std::time::Instant;

use fluctfield_harness::config::Config;
use fluctfield_harness::experiments;
use fluctfield_harness::records::{Outcome, ResultRecord};

fn config(name: &str) -> Config {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    Config::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

struct Timed {
    records: Vec<ResultRecord>,
    secs: f64,
}

fn run(id: &str, cfg_name: &str) -> Timed {
    let t = Instant::now();
    let r = experiments::run(id, &config(cfg_name)).unwrap_or_else(|e| panic!("{id} on {cfg_name}: {e}"));
    Timed {
        records: r.records,
        secs: t.elapsed().as_secs_f64(),
    }
}

#[derive(Default)]
struct Verdict {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Verdict {
    fn require(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    /// Every judged record must pass; at least `min` must be judged.
    fn gated(&mut self, recs: &[ResultRecord], quantity: Option<&str>, min: usize) {
        let judged: Vec<&ResultRecord> = recs
            .iter()
            .filter(|r| r.outcome != Outcome::Info && quantity.map_or(true, |q| r.quantity == q))
            .collect();
        self.require(
            judged.len() >= min,
            format!("only {} judged {} records", judged.len(), quantity.unwrap_or("")),
        );
        for r in judged.iter().filter(|r| r.outcome != Outcome::Pass) {
            self.failures.push(format!(
                "{} {} [{}] = {} ± {} vs {:?} ({}, {})",
                r.experiment,
                r.quantity,
                r.point,
                r.estimate,
                r.stderr,
                r.target,
                r.rule,
                r.outcome.as_str()
            ));
        }
        self.note(format!("{} judged", judged.len()));
    }
}

fn find<'a>(recs: &'a [ResultRecord], quantity: &str) -> impl Iterator<Item = &'a ResultRecord> + 'a {
    let q = quantity.to_string();
    recs.iter().filter(move |r| r.quantity == q)
}

fn ideal_suite(v: &mut Verdict, gap: &Timed) {
    let var = run("variance-convergence", "ideal-gas.toml");
    let ou = run("ou-comparison", "ideal-gas.toml");
    for q in ["rho1", "chi_fluct", "field_variance"] {
        v.gated(&var.records, Some(q), 4);
    }
    let min_ess = find(&var.records, "effective_samples").map(|r| r.estimate).fold(f64::INFINITY, f64::min);
    v.require(min_ess >= 1e4, format!("effective samples {min_ess:.0} below 1e4"));
    v.note(format!("min effective samples {min_ess:.0}"));
    v.gated(&gap.records, Some("gap_sq_max"), 4);
    v.gated(&ou.records, Some("autocov"), 8);
    let secs = var.secs + ou.secs + gap.secs;
    v.require(secs < 600.0, format!("runtime {secs:.0}s over 10 min"));
    v.note(format!("{secs:.1}s"));
}

fn oracle_mc(v: &mut Verdict) {
    let r = run("oracle-mc", "oracle-mc.toml");
    v.gated(&r.records, Some("rho1"), 1);
    v.gated(&r.records, Some("rho2"), 2);
    v.require(r.secs < 300.0, format!("runtime {:.0}s over 5 min", r.secs));
    v.note(format!("{:.1}s", r.secs));
}

fn beta_derivative(v: &mut Verdict) {
    let r = run("beta-derivative", "beta-derivative.toml");
    for n in ["points=1", "points=2"] {
        let sub: Vec<ResultRecord> = r.records.iter().filter(|x| x.point.contains(n)).cloned().collect();
        v.gated(&sub, Some("relative_error"), 1);
    }
    let worst = find(&r.records, "relative_error").map(|x| x.estimate).fold(0.0f64, f64::max);
    v.note(format!("worst relative error {worst:.1e}"));
    v.require(r.secs < 300.0, format!("runtime {:.0}s over 5 min", r.secs));
}

fn curvature(v: &mut Verdict) {
    let r = run("curvature", "curvature.toml");
    for q in ["d2_d_phi", "d2_rho1_sq_over_chi"] {
        v.gated(&r.records, Some(q), 1);
        for x in find(&r.records, q) {
            v.note(format!("{q} {:.4} vs {:.4}", x.estimate, x.target.unwrap_or(f64::NAN)));
        }
    }
}

fn coercivity(v: &mut Verdict) {
    let r = run("coercivity", "coercivity.toml");
    for pot in ["potential=zero", "potential=lj"] {
        let sub: Vec<ResultRecord> = r.records.iter().filter(|x| x.point.contains(pot)).cloned().collect();
        v.gated(&sub, Some("difference"), 1);
    }
}

fn dirichlet(v: &mut Verdict) {
    let r = run("dirichlet-convergence", "dirichlet.toml");
    v.gated(&r.records, Some("vanishing_slope"), 1);
    v.gated(&r.records, Some("dirichlet_form"), 4);
    for x in find(&r.records, "vanishing_slope") {
        v.note(format!("slope {:.3} ± {:.3}", x.estimate, x.stderr));
    }
}

fn increments(v: &mut Verdict) {
    for cfg in ["increments-bump.toml", "increments-free.toml"] {
        let r = run("increment-moments", cfg);
        v.gated(&r.records, Some("increment_exponent"), 4);
        v.gated(&r.records, Some("increment_m4"), 0);
        let lo = find(&r.records, "increment_exponent").map(|x| x.estimate).fold(f64::INFINITY, f64::min);
        v.note(format!("{cfg}: min alpha {lo:.3}"));
    }
}

fn generator_gap(v: &mut Verdict, control: &Timed) {
    v.gated(&control.records, Some("gap_sq_max"), 1);
    let r = run("generator-gap", "gap.toml");
    v.gated(&r.records, Some("gap_ratio_plateau"), 1);
    for x in find(&r.records, "gap_ratio_plateau") {
        v.note(format!("plateau ratio [{}] {:.3} ± {:.3}", x.point, x.estimate, x.stderr));
    }
}

fn determinism(v: &mut Verdict) {
    for (id, cfg) in [("dirichlet-convergence", "dirichlet.toml"), ("increment-moments", "increments-free.toml")] {
        let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(cfg);
        let mut outs = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().expect("tempdir");
            let code = fluctfield_harness::cli::run([
                "fluctfield".into(),
                "--out".into(),
                dir.path().as_os_str().to_owned(),
                "experiment".into(),
                id.into(),
                "-c".into(),
                path.as_os_str().to_owned(),
            ] as [std::ffi::OsString; 7]);
            v.require(code == 0, format!("{id} exited {code}"));
            let read = |f: &str| std::fs::read(dir.path().join(id).join(f)).unwrap_or_default();
            outs.push((read("results.csv"), read("manifest.txt")));
        }
        v.require(!outs[0].0.is_empty(), format!("{id}: empty results"));
        v.require(outs[0] == outs[1], format!("{id}: reruns differ"));
        v.note(format!("{id} {} bytes", outs[0].0.len()));
    }
}

fn main() {
    let strict = std::env::var("FLUCTFIELD_STRICT").map_or(false, |s| s == "1");
    // the φ = 0 generator-gap run serves criteria 1 and 8
    let control = run("generator-gap", "ideal-gas.toml");
    type Check<'a> = Box<dyn Fn(&mut Verdict) + 'a>;
    let criteria: Vec<(&str, Check)> = vec![
        ("ideal-gas exactness", Box::new(|v| ideal_suite(v, &control))),
        ("oracle-MC equivalence", Box::new(oracle_mc)),
        ("beta-derivative identity", Box::new(beta_derivative)),
        ("curvature identities", Box::new(curvature)),
        ("coercivity identity", Box::new(coercivity)),
        ("Dirichlet-form convergence", Box::new(dirichlet)),
        ("increment-moment scaling", Box::new(increments)),
        ("generator non-convergence", Box::new(|v| generator_gap(v, &control))),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let mut v = Verdict::default();
        check(&mut v);
        let status = if v.failures.is_empty() { "PASS" } else { "FAIL" };
        println!("{status} criterion {}: {name} ({})", i + 1, v.notes.join("; "));
        for f in &v.failures {
            println!("    {f}");
        }
        if !v.failures.is_empty() {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
