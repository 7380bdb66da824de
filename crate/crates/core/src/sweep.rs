//! Convergence sweeps: run the coupled pair over a list of system sizes
//! with a dilution schedule, compare both empirical measures against the
//! PDE solution, and aggregate trends.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{degree_report, sample_er_with};
use crate::measure::{dbl_sandwich, w1_to_density, EmpiricalMeasure};
use crate::model::ModelSpec;
use crate::pde::{sample_from_density, solve_mckean_vlasov, DensityGrid, PdeConfig};
use crate::rng::{self, domain};
use crate::sde::{simulate_coupled, CouplingDiagnostics, SimConfig, System};
use crate::stats::{fit_rate, median, FitReport};

/// Dilution schedule `n ↦ p_n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule {
    Fixed { p: f64 },
    /// `p_n = c · log n / n` (natural log); the regime where degree
    /// concentration holds with logarithmic density.
    CLogNOverN { c: f64 },
    /// `p_n = c / sqrt(n)`.
    COverSqrtN { c: f64 },
}

impl Schedule {
    pub fn p(&self, n: usize) -> Result<f64> {
        let p = match self {
            Schedule::Fixed { p } => *p,
            Schedule::CLogNOverN { c } => c * (n as f64).ln() / n as f64,
            Schedule::COverSqrtN { c } => c / (n as f64).sqrt(),
        };
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Config(format!(
                "schedule {self:?} yields p = {p} at n = {n}, outside (0, 1]"
            )));
        }
        Ok(p)
    }
}

/// One sweep point: a full coupled run at a given size and seed.
#[derive(Clone, Copy, Debug)]
pub struct SweepPoint {
    pub n: usize,
    pub seed: u64,
}

/// Scalar results of one sweep point.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub seed: u64,
    pub p: f64,
    pub s_n_final: f64,
    pub delta_integral: f64,
    pub qv: Option<f64>,
    /// `W1(μ^n_T, μ_T)` against the PDE solution.
    pub w1_quenched_pde: f64,
    /// `W1(μ̄^n_T, μ_T)` against the PDE solution.
    pub w1_annealed_pde: f64,
    /// Bounded-Lipschitz sandwich between the two empirical measures at T.
    pub dbl_lower: f64,
    pub dbl_upper: f64,
    /// `W1(μ^n_T, μ̄^n_T)`.
    pub w1_quenched_annealed: f64,
    /// Realized degree-discrepancy bound `max_i max(D_i, D'_i)/n`.
    pub max_disc: f64,
    /// Not part of the deterministic artifact body; lives in sidecars.
    pub wall_secs: f64,
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub model: ModelSpec,
    pub schedule: Schedule,
    pub ns: Vec<usize>,
    pub seeds: Vec<u64>,
    pub dt: f64,
    pub t: f64,
    pub store_stride: usize,
    pub self_loops: bool,
    pub pde: PdeConfig,
    pub mu0: DensityGrid,
    pub dictionary_size: usize,
    /// Retain per-run diagnostics (costs memory proportional to steps).
    pub keep_diagnostics: bool,
}

/// Per-size aggregates over seeds.
#[derive(Clone, Debug, Serialize)]
pub struct SweepAggregate {
    pub n: usize,
    pub p: f64,
    pub median_s_n: f64,
    pub median_delta_integral: f64,
    pub median_w1_quenched: f64,
    pub median_w1_annealed: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSummary {
    pub per_n: Vec<SweepAggregate>,
    /// Slope of median `delta_integral` against `n p_n`.
    pub delta_vs_np: Option<FitReport>,
    /// Slope of median `S_n(T)` against `n`.
    pub s_n_vs_n: Option<FitReport>,
}

pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    /// Aligned with `rows` when `keep_diagnostics` is set.
    pub diagnostics: Vec<CouplingDiagnostics>,
    /// PDE solution at the final time.
    pub pde_final: DensityGrid,
    pub summary: SweepSummary,
}

fn run_point(
    cfg: &SweepConfig,
    point: SweepPoint,
    pde_final: &DensityGrid,
) -> Result<(SweepRow, Option<CouplingDiagnostics>)> {
    let start = Instant::now();
    let p = cfg.schedule.p(point.n)?;
    let graph = sample_er_with(point.n, p, point.seed, cfg.self_loops)?;
    let init = sample_from_density(
        &cfg.mu0,
        point.n,
        rng::hash3(point.seed, domain::INIT, point.n as u64),
    );
    let sim = SimConfig {
        dt: cfg.dt,
        t: cfg.t,
        seed: point.seed,
        store_stride: cfg.store_stride,
        n: point.n,
    };
    let (paths, diag) = simulate_coupled(&cfg.model, &graph, &init, &sim)?;

    let geometry = cfg.model.geometry;
    let emp_q = EmpiricalMeasure::new(paths.final_row(System::Quenched).to_vec(), geometry)?;
    let emp_a = EmpiricalMeasure::new(paths.final_row(System::Annealed).to_vec(), geometry)?;
    let (dbl_lower, dbl_upper) = dbl_sandwich(&emp_q, &emp_a, cfg.dictionary_size, point.seed)?;

    let row = SweepRow {
        n: point.n,
        seed: point.seed,
        p,
        s_n_final: diag.s_n_final(),
        delta_integral: diag.delta_integral,
        qv: diag.qv,
        w1_quenched_pde: w1_to_density(&emp_q, pde_final)?,
        w1_annealed_pde: w1_to_density(&emp_a, pde_final)?,
        dbl_lower,
        dbl_upper,
        w1_quenched_annealed: crate::measure::w1(&emp_q, &emp_a)?,
        max_disc: degree_report(&graph).max_disc,
        wall_secs: start.elapsed().as_secs_f64(),
    };
    Ok((row, cfg.keep_diagnostics.then_some(diag)))
}

/// Builds the per-size aggregates and rate fits from raw rows.
pub fn summarize(rows: &[SweepRow]) -> SweepSummary {
    let mut per_n: Vec<SweepAggregate> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    for row in rows {
        if !seen.contains(&row.n) {
            seen.push(row.n);
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.n == row.n).collect();
            let pick = |f: fn(&SweepRow) -> f64| -> f64 {
                median(&group.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            per_n.push(SweepAggregate {
                n: row.n,
                p: row.p,
                median_s_n: pick(|r| r.s_n_final),
                median_delta_integral: pick(|r| r.delta_integral),
                median_w1_quenched: pick(|r| r.w1_quenched_pde),
                median_w1_annealed: pick(|r| r.w1_annealed_pde),
            });
        }
    }
    let delta_points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.n as f64 * r.p, r.delta_integral))
        .collect();
    let sn_points: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.s_n_final)).collect();
    SweepSummary {
        per_n,
        delta_vs_np: fit_rate(&delta_points, 200, 101).ok(),
        s_n_vs_n: fit_rate(&sn_points, 200, 102).ok(),
    }
}

/// Runs the full sweep: the PDE once, then every `(n, seed)` point in a
/// worker pool. Rows come back in configuration order (n-major,
/// seed-minor) and are a pure function of the configuration.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutput> {
    if cfg.ns.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one n and one seed".into()));
    }
    for &n in &cfg.ns {
        cfg.schedule.p(n)?;
    }

    let snapshots = solve_mckean_vlasov(&cfg.model, &cfg.mu0, &cfg.pde)?;
    let pde_final = snapshots.into_iter().last().unwrap();

    let points: Vec<SweepPoint> = cfg
        .ns
        .iter()
        .flat_map(|&n| cfg.seeds.iter().map(move |&seed| SweepPoint { n, seed }))
        .collect();

    let results: Vec<(SweepRow, Option<CouplingDiagnostics>)> = points
        .par_iter()
        .map(|&pt| run_point(cfg, pt, &pde_final))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(results.len());
    let mut diagnostics = Vec::new();
    for (row, diag) in results {
        rows.push(row);
        if let Some(d) = diag {
            diagnostics.push(d);
        }
    }
    let summary = summarize(&rows);
    Ok(SweepOutput {
        rows,
        diagnostics,
        pde_final,
        summary,
    })
}

/// Writes rows as CSV, stamping each row with the config hash and the
/// content digest of all inputs. Wall-clock times are deliberately
/// excluded so the body is reproducible; they belong in sidecar metadata.
pub fn write_rows_csv<W: std::io::Write>(
    rows: &[SweepRow],
    config_digest: &str,
    inputs_digest: &str,
    w: &mut W,
) -> Result<()> {
    writeln!(
        w,
        "n,seed,p,s_n_final,delta_integral,qv,w1_quenched_pde,w1_annealed_pde,dbl_lower,dbl_upper,w1_quenched_annealed,max_disc,config,inputs"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.seed,
            r.p,
            r.s_n_final,
            r.delta_integral,
            r.qv.map_or(String::new(), |v| v.to_string()),
            r.w1_quenched_pde,
            r.w1_annealed_pde,
            r.dbl_lower,
            r.dbl_upper,
            r.w1_quenched_annealed,
            r.max_disc,
            config_digest,
            inputs_digest,
        )?;
    }
    Ok(())
}

/// Alternating two-cluster initial data: even particles at `centers.0`,
/// odd ones at `centers.1`. Used as adversarial initial data on imported
/// non-ER graphs, where mean-field behavior should break down.
pub fn two_cluster_init(n: usize, centers: (f64, f64)) -> Vec<f64> {
    (0..n)
        .map(|i| if i % 2 == 0 { centers.0 } else { centers.1 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;
    use crate::pde::{GridDomain, Scheme};
    use std::collections::BTreeMap;
    use std::f64::consts::TAU;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn small_sweep_config() -> SweepConfig {
        let model = builtin_model("kuramoto", &params(&[("coupling", 1.0), ("noise", 1.0)])).unwrap();
        let mu0 = DensityGrid::from_fn(GridDomain::Circle { period: TAU }, 128, |x| {
            (2.0 * (x - std::f64::consts::PI).cos()).exp()
        })
        .unwrap();
        SweepConfig {
            model,
            schedule: Schedule::CLogNOverN { c: 2.0 },
            ns: vec![40, 80, 160],
            seeds: vec![1, 2, 3],
            dt: 2e-3,
            t: 0.25,
            store_stride: 25,
            self_loops: true,
            pde: PdeConfig::new(128, 2e-4, 0.25, Scheme::ExplicitUpwind),
            mu0,
            dictionary_size: 32,
            keep_diagnostics: false,
        }
    }

    #[test]
    fn schedules_produce_valid_probabilities() {
        let s = Schedule::CLogNOverN { c: 2.0 };
        let p = s.p(500).unwrap();
        assert!((p - 2.0 * 500f64.ln() / 500.0).abs() < 1e-15);
        assert!((p - 0.02486).abs() < 1e-4);
        assert!(Schedule::Fixed { p: 1.0 }.p(10).unwrap() == 1.0);
        assert!(Schedule::Fixed { p: 0.0 }.p(10).is_err());
        // c log n / n exceeds 1 for small n and large c
        assert!(Schedule::CLogNOverN { c: 10.0 }.p(3).is_err());
        let q = Schedule::COverSqrtN { c: 0.5 }.p(100).unwrap();
        assert!((q - 0.05).abs() < 1e-15);
    }

    #[test]
    fn sweep_runs_and_is_deterministic() {
        let cfg = small_sweep_config();
        let out1 = run_sweep(&cfg).unwrap();
        let out2 = run_sweep(&cfg).unwrap();
        assert_eq!(out1.rows.len(), 9);
        for (a, b) in out1.rows.iter().zip(&out2.rows) {
            assert_eq!((a.n, a.seed), (b.n, b.seed));
            assert_eq!(a.s_n_final, b.s_n_final);
            assert_eq!(a.w1_quenched_pde, b.w1_quenched_pde);
        }
        // rows in configuration order
        let order: Vec<(usize, u64)> = out1.rows.iter().map(|r| (r.n, r.seed)).collect();
        assert_eq!(
            order,
            vec![
                (40, 1),
                (40, 2),
                (40, 3),
                (80, 1),
                (80, 2),
                (80, 3),
                (160, 1),
                (160, 2),
                (160, 3)
            ]
        );
        // sanity on the bL sandwich and the pathwise bound
        for r in &out1.rows {
            assert!(r.dbl_lower <= r.dbl_upper + 1e-15);
            assert!(r.dbl_upper <= r.w1_quenched_annealed.min(1.0) + 1e-15);
            assert!(r.w1_quenched_annealed <= r.s_n_final.sqrt() * (1.0 + 1e-9));
        }
        assert_eq!(out1.summary.per_n.len(), 3);
    }

    #[test]
    fn csv_body_is_stable() {
        let cfg = small_sweep_config();
        let out = run_sweep(&cfg).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_rows_csv(&out.rows, "deadbeef", "cafe", &mut a).unwrap();
        let out2 = run_sweep(&cfg).unwrap();
        write_rows_csv(&out2.rows, "deadbeef", "cafe", &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_cluster_alternates() {
        let v = two_cluster_init(5, (0.0, 3.0));
        assert_eq!(v, vec![0.0, 3.0, 0.0, 3.0, 0.0]);
    }
}
