use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fracnodal::experiments::{emit_report, run_b_sweep, run_energy_doubling, ReportRow, SweepConfig, CSV_HEADER};
use fracnodal::{
    minimize_ground, minimize_nodal, verify_critical, Error, Problem, ProblemConfig, Result, SolveResult,
    SolverConfig,
};

#[derive(Parser)]
#[command(name = "fracnodal", version, about = "Nodal and ground states of the fractional Kirchhoff equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Least-energy sign-changing solution.
    SolveNodal(Common),
    /// Ground state on the Nehari manifold.
    SolveGround(Common),
    /// Nodal and ground levels and the doubling margin.
    Doubling(Common),
    /// Continuation b -> 0 with the default b schedule.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Solve every b from the default seeds (in parallel) instead of warm-starting.
        #[arg(long)]
        cold_start: bool,
    },
    /// Check the structural hypotheses of a configuration.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON problem configuration; the built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file: a field dump for solves, a CSV report otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Iteration trace file (`iter energy residual`).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Seed of the random perturbation of the starting field.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn problem(&self) -> Result<(ProblemConfig, Problem)> {
        let cfg = load_config(self.config.as_deref())?;
        cfg.validate().into_result()?;
        let pb = Problem::new(&cfg.params(), &cfg.potential)?;
        Ok((cfg, pb))
    }

    fn solver(&self, base: SolverConfig) -> SolverConfig {
        let mut s = base;
        if let Some(t) = self.tol {
            s.residual_tol = t;
        }
        if let Some(m) = self.max_iters {
            s.max_iters = m;
        }
        if let Some(seed) = self.seed {
            s.rng_seed = seed;
        }
        s.trace_file = self.trace.clone();
        s
    }
}

fn load_config(path: Option<&Path>) -> Result<ProblemConfig> {
    match path {
        Some(p) => ProblemConfig::load(p),
        None => Ok(ProblemConfig::default()),
    }
}

fn solve(common: &Common, nodal: bool) -> Result<()> {
    let (_, pb) = common.problem()?;
    let r: SolveResult = if nodal {
        minimize_nodal(&pb, &common.solver(SolverConfig::nodal()))?
    } else {
        minimize_ground(&pb, &common.solver(SolverConfig::ground()))?
    };
    let report = verify_critical(&pb, &r.field, common.tol.unwrap_or(SolverConfig::default().residual_tol))?;
    if let Some(out) = &common.out {
        r.field.write_dump(out)?;
    }
    let summary = json!({
        "level": r.level,
        "residual_inf": r.residual_inf,
        "iters": r.iters,
        "projection_deviation": r.pair_at_end.deviation_from_unit(),
        "sign_changes": report.sign_changes,
        "pairing_plus": report.pairing_plus,
        "pairing_minus": report.pairing_minus,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary is serializable"));
    Ok(())
}

fn write_rows(rows: &[ReportRow], out: Option<&Path>, meta: serde_json::Value) -> Result<()> {
    match out {
        Some(path) => emit_report(rows, path, meta),
        None => {
            println!("{CSV_HEADER}");
            for r in rows {
                let d = &r.record;
                println!(
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}",
                    d.b,
                    d.c_nod,
                    d.c_ground,
                    d.ratio,
                    d.margin,
                    d.iters_nodal,
                    d.iters_ground,
                    r.dist_to_limit.map(|x| format!("{x:.16e}")).unwrap_or_default()
                );
            }
            Ok(())
        }
    }
}

fn doubling(common: &Common) -> Result<()> {
    let (cfg, pb) = common.problem()?;
    let scfg = common.solver(SolverConfig::nodal());
    let run = run_energy_doubling(&pb, &scfg)?;
    let tol = 10.0 * scfg.residual_tol;
    eprintln!(
        "chain: {:.10e} <= {:.10e} <= {:.10e} ({})",
        run.chain.split_sum,
        run.chain.recombined,
        run.chain.level,
        if run.chain.holds(tol) { "holds" } else { "VIOLATED" }
    );
    let meta = json!({ "problem": cfg, "chain_holds": run.chain.holds(tol) });
    write_rows(&[run.record.into()], common.out.as_deref(), meta)
}

fn sweep(common: &Common, cold_start: bool) -> Result<()> {
    let (cfg, _) = common.problem()?;
    let mut sw = SweepConfig::new(cfg.params(), cfg.potential.clone());
    sw.warm_start = !cold_start;
    sw.solver = common.solver(SolverConfig::nodal());
    sw.solver.trace_file = None;
    let entries = run_b_sweep(&sw)?;
    for e in &entries {
        eprintln!(
            "b = {:<9} pair = ({:.8}, {:.8}){}{}",
            e.record.b,
            e.pair.alpha,
            e.pair.beta,
            if e.anomaly { "  [distance grew: possible branch switch]" } else { "" },
            if e.restarted { "  [warm start failed; solved from default seeds]" } else { "" },
        );
    }
    let rows: Vec<ReportRow> = entries.iter().map(ReportRow::from).collect();
    let meta = json!({
        "problem": cfg,
        "b_values": sw.b_values,
        "warm_start": sw.warm_start,
        "pairs": entries.iter().map(|e| [e.pair.alpha, e.pair.beta]).collect::<Vec<_>>(),
        "anomalies": entries.iter().map(|e| e.anomaly).collect::<Vec<_>>(),
    });
    write_rows(&rows, common.out.as_deref(), meta)
}

fn validate(config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let report = cfg.validate();
    println!("{report}");
    report.into_result()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::SolveNodal(c) => solve(c, true),
        Command::SolveGround(c) => solve(c, false),
        Command::Doubling(c) => doubling(c),
        Command::Sweep { common, cold_start } => sweep(common, *cold_start),
        Command::Validate { config } => validate(config.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
