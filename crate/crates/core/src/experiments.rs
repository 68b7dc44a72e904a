//! Experiments: energy doubling, the `b → 0` continuation and a
//! grid-refinement study, plus CSV/JSON reporting.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::Problem;
use crate::grid::{negative_part, positive_part, Field, Grid};
use crate::model::{ModelParams, PotentialSpec};
use crate::nehari::{pair_project, scalar_project, NehariPair};
use crate::solver::{minimize_ground, minimize_nodal, SeedKind, SolveResult, SolverConfig};

pub const CSV_HEADER: &str = "b,c_nod,c_ground,ratio,margin,iters_nodal,iters_ground,dist_to_limit";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublingRecord {
    pub b: f64,
    pub c_nod: f64,
    pub c_ground: f64,
    pub ratio: f64,
    pub margin: f64,
    pub iters_nodal: usize,
    pub iters_ground: usize,
}

impl DoublingRecord {
    pub fn new(b: f64, nodal: &SolveResult, ground: &SolveResult) -> Self {
        Self {
            b,
            c_nod: nodal.level,
            c_ground: ground.level,
            ratio: nodal.level / ground.level,
            margin: nodal.level - 2.0 * ground.level,
            iters_nodal: nodal.iters,
            iters_ground: ground.iters,
        }
    }
}

/// The chain `I(t⁺u⁺) + I(t⁻u⁻) <= I(t⁺u⁺ + t⁻u⁻) <= I(u)` at a nodal solution,
/// with `t±` the scalar projections of the sign parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainCheck {
    pub t_plus: f64,
    pub t_minus: f64,
    /// `I(t⁺u⁺) + I(t⁻u⁻)`, bounded below by `2 c^b`.
    pub split_sum: f64,
    /// `I(t⁺u⁺ + t⁻u⁻)`.
    pub recombined: f64,
    /// `I(u)`.
    pub level: f64,
}

impl ChainCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.split_sum <= self.recombined + tol && self.recombined <= self.level + tol
    }
}

pub fn chain_check(pb: &Problem, u: &Field) -> Result<ChainCheck> {
    let (up, um) = (positive_part(u), negative_part(u));
    let t_plus = scalar_project(pb, &up)?;
    let t_minus = scalar_project(pb, &um)?;
    let (sp, sm) = (up.scale(t_plus), um.scale(t_minus));
    Ok(ChainCheck {
        t_plus,
        t_minus,
        split_sum: pb.energy(&sp)? + pb.energy(&sm)?,
        recombined: pb.energy(&(&sp + &sm))?,
        level: pb.energy(u)?,
    })
}

#[derive(Debug, Clone)]
pub struct DoublingRun {
    pub record: DoublingRecord,
    pub chain: ChainCheck,
    pub nodal: SolveResult,
    pub ground: SolveResult,
}

/// Nodal and ground-state solves at the same parameters. `cfg` drives the nodal
/// run; the ground run uses the same settings with the Gaussian seed.
pub fn run_energy_doubling(pb: &Problem, cfg: &SolverConfig) -> Result<DoublingRun> {
    let nodal = minimize_nodal(pb, cfg)?;
    let ground = minimize_ground(pb, &ground_config(cfg))?;
    finish_doubling(pb, nodal, ground)
}

fn ground_config(cfg: &SolverConfig) -> SolverConfig {
    SolverConfig {
        trace_file: None,
        ..cfg.clone().with_seed(SeedKind::Gaussian)
    }
}

fn finish_doubling(pb: &Problem, nodal: SolveResult, ground: SolveResult) -> Result<DoublingRun> {
    let chain = chain_check(pb, &nodal.field)?;
    Ok(DoublingRun {
        record: DoublingRecord::new(pb.params().b, &nodal, &ground),
        chain,
        nodal,
        ground,
    })
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub b_values: Vec<f64>,
    pub base: ModelParams,
    pub potential: PotentialSpec,
    /// Seed each solve with the minimizers of the previous `b`.
    pub warm_start: bool,
    pub solver: SolverConfig,
}

impl SweepConfig {
    pub fn new(base: ModelParams, potential: PotentialSpec) -> Self {
        Self {
            b_values: vec![1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.0],
            base,
            potential,
            warm_start: true,
            solver: SolverConfig::nodal(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bs = &self.b_values;
        if bs.is_empty() {
            return Err(Error::Precondition("sweep needs at least one b value".into()));
        }
        if bs.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Precondition("b values must be strictly decreasing".into()));
        }
        if *bs.last().unwrap() != 0.0 {
            return Err(Error::Precondition(
                "the last b value must be 0 (the limit problem)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub record: DoublingRecord,
    pub chain: ChainCheck,
    /// `‖u_b - u_0‖_H`.
    pub dist_to_limit: f64,
    /// Pair projection of the `b = 0` nodal solution at this `b`.
    pub pair: NehariPair,
    /// The distance grew relative to the previous entry (possible branch switch).
    pub anomaly: bool,
    /// A warm start failed to converge and the entry was solved from the
    /// default seeds instead.
    pub restarted: bool,
    pub nodal: SolveResult,
    pub ground: SolveResult,
}

/// Nodal and ground solves along `b_values`, compared against the `b = 0`
/// solution.
pub fn run_b_sweep(sweep: &SweepConfig) -> Result<Vec<SweepEntry>> {
    sweep.validate()?;
    let base = Problem::new(&sweep.base, &sweep.potential)?;
    let cfg = SolverConfig {
        trace_file: None,
        ..sweep.solver.clone()
    };
    // A warm start that fails to converge is retried from the default seed.
    let solve = |pb: &Problem, c: SolverConfig, fallback: SolverConfig, ground: bool| {
        let run = |c: &SolverConfig| {
            if ground {
                minimize_ground(pb, c)
            } else {
                minimize_nodal(pb, c)
            }
        };
        match run(&c) {
            Ok(r) => Ok((r, false)),
            Err(Error::MaxIters { .. } | Error::Stalled { .. } | Error::PartCollapse { .. })
                if matches!(c.seed_kind, SeedKind::Table(_)) =>
            {
                run(&fallback).map(|r| (r, true))
            }
            Err(e) => Err(e),
        }
    };
    let solve_at = |b: f64, seeds: Option<(&Field, &Field)>| -> Result<(DoublingRun, bool)> {
        let pb = base.with_b(b);
        let (cold_n, cold_g) = (cfg.clone(), ground_config(&cfg));
        let (nc, gc) = match seeds {
            Some((n, g)) => (
                cfg.clone().with_seed(SeedKind::Table(n.values().to_vec())),
                cfg.clone().with_seed(SeedKind::Table(g.values().to_vec())),
            ),
            None => (cold_n.clone(), cold_g.clone()),
        };
        let (nodal, rn) = solve(&pb, nc, cold_n, false)?;
        let (ground, rg) = solve(&pb, gc, cold_g, true)?;
        Ok((finish_doubling(&pb, nodal, ground)?, rn || rg))
    };

    let runs: Vec<(DoublingRun, bool)> = if sweep.warm_start {
        let mut out: Vec<(DoublingRun, bool)> = Vec::with_capacity(sweep.b_values.len());
        for &b in &sweep.b_values {
            let seeds = out.last().map(|(r, _)| (&r.nodal.field, &r.ground.field));
            let run = solve_at(b, seeds)?;
            out.push(run);
        }
        out
    } else {
        sweep
            .b_values
            .par_iter()
            .map(|&b| solve_at(b, None))
            .collect::<Result<_>>()?
    };

    let limit = runs.last().unwrap().0.nodal.field.clone();
    let mut entries: Vec<SweepEntry> = Vec::with_capacity(runs.len());
    for (run, restarted) in runs {
        let b = run.record.b;
        let pb = base.with_b(b);
        let dist = if b == 0.0 {
            0.0
        } else {
            base.h_distance(&run.nodal.field, &limit)?
        };
        let pair = pair_project(&pb, &limit, &cfg.nehari)?;
        let anomaly = entries.last().is_some_and(|prev| b > 0.0 && dist > prev.dist_to_limit);
        entries.push(SweepEntry {
            record: run.record,
            chain: run.chain,
            dist_to_limit: dist,
            pair,
            anomaly,
            restarted,
            nodal: run.nodal,
            ground: run.ground,
        });
    }
    Ok(entries)
}

/// Linear interpolation of a 1D field onto another grid, zero outside its box.
pub fn transfer(u: &Field, target: &std::sync::Arc<Grid>) -> Result<Field> {
    let src = u.grid();
    if src.dim() != 1 || target.dim() != 1 {
        return Err(Error::Precondition("grid transfer is implemented in 1D only".into()));
    }
    let xs = src.axis();
    let vs = u.values();
    let h = src.spacing();
    Ok(Field::from_fn(target.clone(), |x| {
        let t = (x[0] - xs[0]) / h;
        if t <= 0.0 {
            // Between the box edge (where the field vanishes) and the first centre.
            let d = x[0] + src.half_width();
            return if d <= 0.0 { 0.0 } else { vs[0] * (d / (h / 2.0)).min(1.0) };
        }
        let k = t.floor() as usize;
        if k + 1 >= vs.len() {
            let d = src.half_width() - x[0];
            return if d <= 0.0 { 0.0 } else { vs[vs.len() - 1] * (d / (h / 2.0)).min(1.0) };
        }
        let f = t - k as f64;
        vs[k] * (1.0 - f) + vs[k + 1] * f
    }))
}

/// Nodal levels on one grid: from the configured seed and from the solution on
/// the finest grid carried over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridLevel {
    pub grid_points: usize,
    pub seeded_level: f64,
    /// `None` on the finest grid, where the two coincide.
    pub transferred_level: Option<f64>,
}

impl GridLevel {
    /// Lowest observed estimate of `c_nod` on this grid.
    pub fn level(&self) -> f64 {
        self.transferred_level.map_or(self.seeded_level, |t| t.min(self.seeded_level))
    }
}

/// `c_nod` on each grid in `grid_points`. Coarse grids are also solved from the
/// finest-grid minimizer so that one branch is followed across grids; the lower
/// of the two levels is the estimate of the infimum.
pub fn run_grid_study(
    mp: &ModelParams,
    potential: &PotentialSpec,
    cfg: &SolverConfig,
    grid_points: &[usize],
) -> Result<Vec<GridLevel>> {
    let &finest = grid_points
        .iter()
        .max()
        .ok_or_else(|| Error::Precondition("grid study needs at least one grid".into()))?;
    let cfg = SolverConfig {
        trace_file: None,
        ..cfg.clone()
    };
    let fine_pb = Problem::new(&mp.with_grid_points(finest), potential)?;
    let fine = minimize_nodal(&fine_pb, &cfg)?;
    grid_points
        .par_iter()
        .map(|&m| {
            if m == finest {
                return Ok(GridLevel {
                    grid_points: m,
                    seeded_level: fine.level,
                    transferred_level: None,
                });
            }
            let pb = Problem::new(&mp.with_grid_points(m), potential)?;
            let seeded = minimize_nodal(&pb, &cfg)?;
            let start = transfer(&fine.field, pb.grid())?;
            let carried = minimize_nodal(&pb, &cfg.clone().with_seed(SeedKind::Table(start.into_values())))?;
            Ok(GridLevel {
                grid_points: m,
                seeded_level: seeded.level,
                transferred_level: Some(carried.level),
            })
        })
        .collect()
}

/// One CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub record: DoublingRecord,
    pub dist_to_limit: Option<f64>,
}

impl From<&SweepEntry> for ReportRow {
    fn from(e: &SweepEntry) -> Self {
        Self {
            record: e.record,
            dist_to_limit: Some(e.dist_to_limit),
        }
    }
}

impl From<DoublingRecord> for ReportRow {
    fn from(record: DoublingRecord) -> Self {
        Self {
            record,
            dist_to_limit: None,
        }
    }
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write `rows` as CSV to `path` and a JSON sidecar (`<path>.json`) holding
/// `meta`, the rows and a build stamp. Existing files are overwritten.
pub fn emit_report(rows: &[ReportRow], path: &Path, meta: serde_json::Value) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Precondition("no records to report".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(CSV_HEADER.split(',')).map_err(|e| csv_io(path, e))?;
    for r in rows {
        let d = &r.record;
        w.write_record([
            real(d.b),
            real(d.c_nod),
            real(d.c_ground),
            real(d.ratio),
            real(d.margin),
            d.iters_nodal.to_string(),
            d.iters_ground.to_string(),
            r.dist_to_limit.map(real).unwrap_or_default(),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let sidecar = serde_json::json!({
        "config": meta,
        "records": rows.iter().map(|r| serde_json::json!({
            "record": r.record,
            "dist_to_limit": r.dist_to_limit,
        })).collect::<Vec<_>>(),
        "environment": {
            "package": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "os": std::env::consts::OS,
            "arch": std::env::consts::ARCH,
            "threads": rayon::current_num_threads(),
        },
    });
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar).expect("report JSON is serializable");
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Read back a CSV written by [`emit_report`].
pub fn parse_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let header = r.headers().map_err(|e| csv_io(path, e))?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::Config(format!("unexpected CSV header `{header}`")));
    }
    let bad = |what: &str| Error::Config(format!("malformed report field `{what}`"));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_io(path, e))?;
        let f = |i: usize| rec.get(i).unwrap_or("").parse::<f64>().map_err(|_| bad(&rec[i]));
        let n = |i: usize| rec.get(i).unwrap_or("").parse::<usize>().map_err(|_| bad(&rec[i]));
        let dist = match rec.get(7) {
            Some("") | None => None,
            Some(_) => Some(f(7)?),
        };
        rows.push(ReportRow {
            record: DoublingRecord {
                b: f(0)?,
                c_nod: f(1)?,
                c_ground: f(2)?,
                ratio: f(3)?,
                margin: f(4)?,
                iters_nodal: n(5)?,
                iters_ground: n(6)?,
            },
            dist_to_limit: dist,
        });
    }
    Ok(rows)
}
