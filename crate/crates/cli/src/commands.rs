use std::path::Path;

use nehari::fibering::phi_samples;
use nehari::{critical_points, reduced_integrals, Error, Field, KernelSampling, Lambda0Estimate, Solver, SolverStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{Format, RunConfig};
use crate::output::{read_field, sci, write_field, write_json, write_jsonl, write_samples};
use crate::{Common, Failure};

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output.dir = out.clone();
    }
    config.output.verbose |= common.verbose;
    Ok(config)
}

fn out_dir(config: &RunConfig) -> Result<&Path, Failure> {
    let dir = config.output.dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(&dir.display().to_string(), e))?;
    Ok(dir)
}

fn wants(config: &RunConfig, format: Format) -> bool {
    config.output.formats.contains(&format)
}

fn estimate_json(estimate: &Option<Result<Lambda0Estimate, String>>) -> serde_json::Value {
    match estimate {
        Some(Ok(est)) => json!(est),
        Some(Err(e)) => json!({ "error": e }),
        None => serde_json::Value::Null,
    }
}

pub fn solve(common: &Common) -> Result<u8, Failure> {
    let config = load(common)?;
    let problem = config.build(true)?;
    let spec = &problem.spec;
    let solver =
        Solver::new(spec, &problem.weights, config.solver_config()).map_err(|e| Failure::config(e.to_string()))?;
    let result = solver.solve_both().map_err(|e| Failure::io("solve", e))?;
    let dir = out_dir(&config)?;

    if wants(&config, Format::Csv) {
        for (name, run) in [("u_plus.csv", &result.plus), ("u_minus.csv", &result.minus)] {
            if let Some(run) = run {
                write_field(&dir.join(name), &run.field)?;
            }
        }
    }
    let delta1 = match &problem.estimate {
        Some(Ok(est)) => Some(est.delta1(spec.lambda())),
        _ => None,
    };
    if wants(&config, Format::Json) {
        let record = json!({
            "status": result.status,
            "seed": config.seed,
            "lambda": spec.lambda(),
            "lambda0": estimate_json(&problem.estimate),
            "delta1": delta1,
            "plus": result.plus,
            "minus": result.minus,
            "distinctness": result.distinctness,
            "distinct": result.distinct,
            "runs": result.runs,
            "config": config,
        });
        write_json(&dir.join("result.json"), &record)?;
        std::fs::write(dir.join("config.toml"), config.to_toml()).map_err(|e| Failure::io("config.toml", e))?;
    }
    if config.output.verbose {
        write_jsonl(&dir.join("trace.jsonl"), &result.trace)?;
        for r in &result.runs {
            eprintln!(
                "start {:>3} {:<5} {:<60} energy {} residual {} iterations {}",
                r.start,
                r.branch.to_string(),
                r.outcome,
                sci(r.energy),
                sci(r.residual),
                r.iterations
            );
        }
        eprintln!("wall time {:.3} s", result.wall_time.as_secs_f64());
    }

    println!("status        {:?}", result.status);
    println!("lambda        {}", sci(Some(spec.lambda())));
    if let Some(Ok(est)) = &problem.estimate {
        println!("lambda0       {}", sci(Some(est.lambda0)));
        println!("delta1        {}", sci(delta1));
    }
    for (label, run) in [("plus", &result.plus), ("minus", &result.minus)] {
        match run {
            Some(run) => println!(
                "{label:<6} energy {}  dual residual {}  nehari residual {}  iterations {}",
                sci(Some(run.energy)),
                sci(Some(run.certificate.dual_residual)),
                sci(Some(run.certificate.nehari_residual)),
                run.iterations
            ),
            None => println!("{label:<6} no converged run"),
        }
    }
    if let Some(d) = result.distinctness {
        println!("distinctness  {}", sci(Some(d)));
    }
    Ok(if result.status == SolverStatus::Complete { 0 } else { 2 })
}

pub fn fibering(common: &Common, source: &str, dump: Option<&Path>, points: usize) -> Result<u8, Failure> {
    let config = load(common)?;
    let problem = config.build(true)?;
    let spec = &problem.spec;
    let mesh = spec.mesh();
    let field = match source.split_once(':') {
        None if source == "random" => random_field(mesh, config.seed),
        Some(("random", seed)) => {
            let seed = seed
                .parse()
                .map_err(|e| Failure::config(format!("--field random:SEED: `{seed}`: {e}")))?;
            random_field(mesh, seed)
        }
        Some(("file", path)) => read_field(Path::new(path), mesh)?,
        _ => {
            return Err(Failure::config(format!(
                "--field expects random:SEED or file:PATH, got `{source}`"
            )))
        }
    };
    let ri = reduced_integrals(spec, &problem.weights, &field).map_err(|e| Failure::io("integrals", e))?;
    let e = spec.exponents();
    let report = match critical_points(&ri, &e) {
        Ok(r) => r,
        Err(Error::ZeroField) => return Err(Failure::config("the field is identically zero")),
        Err(err) => return Err(Failure::io("fibering", err)),
    };

    println!("case          {}", report.case);
    println!("A             {}", sci(Some(ri.norm_p)));
    println!("B             {}", sci(Some(ri.concave)));
    println!("D             {}", sci(Some(ri.convex)));
    println!("lambda        {}", sci(Some(e.lambda)));
    if report.roots.is_empty() {
        println!("roots         none");
    }
    for r in &report.roots {
        println!(
            "root          t {}  kind {:<10} phi {}  phi'' {}",
            sci(Some(r.t)),
            r.kind.to_string(),
            sci(Some(r.phi)),
            sci(Some(r.phi_second))
        );
    }
    println!("t_hat         {}", sci(report.t_hat));
    println!("t_star        {}", sci(report.t_star));
    println!("phi(t_star)   {}", sci(report.phi_at_t_star));
    match &problem.estimate {
        Some(Ok(est)) => {
            println!("delta         {}", sci(Some(est.delta)));
            println!("lambda0       {}", sci(Some(est.lambda0)));
        }
        Some(Err(err)) => println!("lambda0       unavailable ({err})"),
        None => {}
    }
    for note in &report.notes {
        println!("note          {note}");
    }

    if let Some(path) = dump {
        let reach = report
            .roots
            .iter()
            .map(|r| r.t)
            .chain(report.t_star)
            .chain(report.t_hat)
            .fold(1.0f64, f64::max);
        let samples = phi_samples(&ri, &e, 2.0 * reach, points).map_err(|e| Failure::config(e.to_string()))?;
        write_samples(path, &samples)?;
    }
    if wants(&config, Format::Json) {
        let dir = out_dir(&config)?;
        let record = json!({
            "field": source,
            "report": report,
            "lambda0": estimate_json(&problem.estimate),
            "config": config,
        });
        write_json(&dir.join("fibering.json"), &record)?;
    }
    Ok(0)
}

fn random_field(mesh: &std::sync::Arc<nehari::Mesh>, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..mesh.len()).map(|_| rng.gen::<f64>()).collect();
    Field::new(mesh.clone(), values).expect("length matches mesh")
}

pub fn lambda0(common: &Common) -> Result<u8, Failure> {
    let config = load(common)?;
    let problem = config.build(true)?;
    let est = match problem.estimate.expect("requested") {
        Ok(est) => est,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(2);
        }
    };
    let rows = [
        ("S_{q+1}", est.s_q1),
        ("S_{r+1}", est.s_r1),
        ("S_p", est.s_p),
        ("c(theta)", est.c_theta),
        ("C_disc", est.c_disc),
        ("M", est.m_const),
        ("sup|h|", est.h_sup),
        ("sup b+", est.b_plus_sup),
        ("delta", est.delta),
        ("c", est.c_const),
        ("lambda0", est.lambda0),
    ];
    for (name, v) in rows {
        println!("{name:<12}  {}", sci(Some(v)));
    }
    if wants(&config, Format::Json) {
        let dir = out_dir(&config)?;
        write_json(&dir.join("lambda0.json"), &json!({ "estimate": est, "config": config }))?;
    }
    Ok(0)
}

pub fn validate_kernel(common: &Common) -> Result<u8, Failure> {
    let config = load(common)?;
    let kernel = config.kernel()?;
    let report = kernel
        .check_admissible(&KernelSampling::default())
        .map_err(|e| Failure::config(e.to_string()))?;
    let flag = |ok: bool| if ok { "ok" } else { "FAILED" };
    println!("family        {}", report.family);
    println!(
        "integrability {}  (mk = {})",
        flag(report.integrable),
        sci(Some(report.mk_integral))
    );
    println!(
        "lower bound   {}  (worst ratio {})",
        flag(report.lower_bound_ok),
        sci(Some(report.worst_lower_bound_ratio))
    );
    println!(
        "symmetry      {}  (max asymmetry {})",
        flag(report.symmetry_ok),
        sci(Some(report.max_asymmetry))
    );
    if wants(&config, Format::Json) {
        let dir = out_dir(&config)?;
        write_json(
            &dir.join("kernel.json"),
            &json!({ "report": report, "admissible": report.admissible(), "config": config }),
        )?;
    }
    Ok(if report.admissible() { 0 } else { 2 })
}
