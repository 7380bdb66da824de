//! Subcommand implementations. Every command reads the config, produces
//! deterministic result bodies under the output directory, and a sidecar
//! with wall-clock metadata.

use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use ermf::graph::{bernstein_bound, degree_condition_holds, degree_report, k_c, sample_er_with, ErGraph};
use ermf::ldp::{estimate_omega_frequency, LdpProbe};
use ermf::model::ModelSpec;
use ermf::pde::{sample_from_density, solve_mckean_vlasov_report};
use ermf::rng;
use ermf::sde::{simulate_coupled, DiagnosticsSummary, PathsSidecar, SimConfig};
use ermf::stats::{fit_rate, median, FitReport};
use ermf::sweep::{run_sweep, two_cluster_init, write_rows_csv, SweepConfig, SweepOutput};
use ermf::{Error, Result};

use crate::config::FileConfig;
use crate::output::{digest, inputs_digest, write_bytes, write_json, Sidecar};

pub struct Invocation {
    pub config_path: PathBuf,
    pub seed_override: Option<u64>,
    pub out_override: Option<PathBuf>,
}

struct Ctx {
    cfg: FileConfig,
    out_dir: PathBuf,
    config_digest: String,
    inputs_digest: String,
}

fn load(inv: &Invocation) -> Result<Ctx> {
    let (mut cfg, bytes) = FileConfig::load(&inv.config_path)?;
    if let Some(seed) = inv.seed_override {
        cfg.sweep.seeds = vec![seed];
        cfg.sweep.replicas = None;
    }
    if let Some(dir) = &inv.out_override {
        cfg.output.dir = dir.clone();
    }
    let imports: Vec<PathBuf> = cfg.graph.import.iter().cloned().collect();
    let config_digest = digest(&bytes);
    let inputs_digest = inputs_digest(&bytes, &imports)?;
    Ok(Ctx {
        out_dir: cfg.output.dir.clone(),
        cfg,
        config_digest,
        inputs_digest,
    })
}

fn load_graph(ctx: &Ctx, n: usize, seed: u64) -> Result<ErGraph> {
    match &ctx.cfg.graph.import {
        Some(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| Error::Config(format!("cannot open graph {}: {e}", path.display())))?;
            let g = ErGraph::read_edge_list(&mut BufReader::new(file))?;
            if g.n() != n {
                return Err(Error::Config(format!(
                    "imported graph has n = {}, config expects {n}",
                    g.n()
                )));
            }
            Ok(g)
        }
        None => {
            let p = ctx.cfg.schedule()?.p(n)?;
            sample_er_with(n, p, seed, ctx.cfg.graph.self_loops)
        }
    }
}

fn build_init(ctx: &Ctx, model: &ModelSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    if ctx.cfg.init.kind.as_deref() == Some("two_cluster") {
        let centers = ctx.cfg.init.centers.unwrap_or([0.0, 2.0 * std::f64::consts::FRAC_PI_3]);
        return Ok(two_cluster_init(n, (centers[0], centers[1])));
    }
    let mu0 = ctx.cfg.mu0(model)?;
    Ok(sample_from_density(
        &mu0,
        n,
        rng::hash3(seed, rng::domain::INIT, n as u64),
    ))
}

pub fn simulate(inv: &Invocation) -> Result<()> {
    let start = Instant::now();
    let ctx = load(inv)?;
    let model = ctx.cfg.model()?;
    let n = ctx.cfg.sweep.n[0];
    let seed = ctx.cfg.seeds()[0];
    let graph = load_graph(&ctx, n, seed)?;
    let init = build_init(&ctx, &model, n, seed)?;
    let sim = SimConfig {
        dt: ctx.cfg.sim.dt,
        t: ctx.cfg.sim.t,
        seed,
        store_stride: ctx.cfg.sim.stride,
        n,
    };
    let (paths, diag) = simulate_coupled(&model, &graph, &init, &sim)?;

    if ctx.cfg.wants("csv") {
        let mut body = Vec::new();
        diag.write_csv(&mut body)?;
        write_bytes(&ctx.out_dir.join("diagnostics.csv"), &body)?;
        for (system, file) in [
            (ermf::sde::System::Quenched, "measure_quenched.csv"),
            (ermf::sde::System::Annealed, "measure_annealed.csv"),
        ] {
            let emp = ermf::measure::EmpiricalMeasure::new(
                paths.final_row(system).to_vec(),
                model.geometry,
            )?;
            let mut body = Vec::new();
            emp.write_csv(&mut body)?;
            write_bytes(&ctx.out_dir.join(file), &body)?;
        }
    }
    if ctx.cfg.wants("json") {
        #[derive(Serialize)]
        struct Summary {
            n: usize,
            seed: u64,
            p: f64,
            max_disc: f64,
            #[serde(flatten)]
            diagnostics: DiagnosticsSummary,
            config: String,
            inputs: String,
        }
        write_json(
            &ctx.out_dir.join("summary.json"),
            &Summary {
                n,
                seed,
                p: graph.p(),
                max_disc: degree_report(&graph).max_disc,
                diagnostics: DiagnosticsSummary::of(&diag),
                config: ctx.config_digest.clone(),
                inputs: ctx.inputs_digest.clone(),
            },
        )?;
    }
    let mut blob = Vec::new();
    paths.write_binary(&mut blob)?;
    write_bytes(&ctx.out_dir.join("paths.bin"), &blob)?;
    write_json(
        &ctx.out_dir.join("paths.json"),
        &PathsSidecar::new(&paths, &sim, &model, &graph),
    )?;
    write_json(
        &ctx.out_dir.join("sidecar.json"),
        &Sidecar::new(start.elapsed().as_secs_f64(), ctx.config_digest, ctx.inputs_digest),
    )?;
    println!(
        "simulate: n = {n}, p = {}, S_n(T) = {:.6e}, delta_integral = {:.6e}",
        graph.p(),
        diag.s_n_final(),
        diag.delta_integral
    );
    Ok(())
}

fn sweep_config(ctx: &Ctx) -> Result<SweepConfig> {
    let model = ctx.cfg.model()?;
    let mu0 = ctx.cfg.mu0(&model)?;
    Ok(SweepConfig {
        schedule: ctx.cfg.schedule()?,
        ns: ctx.cfg.sweep.n.clone(),
        seeds: ctx.cfg.seeds(),
        dt: ctx.cfg.sim.dt,
        t: ctx.cfg.sim.t,
        store_stride: ctx.cfg.sim.stride,
        self_loops: ctx.cfg.graph.self_loops,
        pde: ctx.cfg.pde_config(ctx.cfg.sim.t)?,
        mu0,
        dictionary_size: 64,
        keep_diagnostics: false,
        model,
    })
}

#[derive(Serialize)]
struct SweepJson<'a> {
    summary: &'a ermf::sweep::SweepSummary,
    config: &'a str,
    inputs: &'a str,
}

pub fn sweep(inv: &Invocation) -> Result<()> {
    let start = Instant::now();
    let ctx = load(inv)?;
    if ctx.cfg.graph.import.is_some() {
        return Err(Error::Config("sweep does not support imported graphs".into()));
    }
    let cfg = sweep_config(&ctx)?;
    let out: SweepOutput = run_sweep(&cfg)?;

    if ctx.cfg.wants("csv") {
        let mut body = Vec::new();
        write_rows_csv(&out.rows, &ctx.config_digest, &ctx.inputs_digest, &mut body)?;
        write_bytes(&ctx.out_dir.join("sweep_rows.csv"), &body)?;
    }
    if ctx.cfg.wants("json") {
        write_json(
            &ctx.out_dir.join("sweep_summary.json"),
            &SweepJson {
                summary: &out.summary,
                config: &ctx.config_digest,
                inputs: &ctx.inputs_digest,
            },
        )?;
    }
    #[derive(Serialize)]
    struct SweepSidecar {
        #[serde(flatten)]
        base: Sidecar,
        wall_per_row: Vec<f64>,
    }
    write_json(
        &ctx.out_dir.join("sidecar.json"),
        &SweepSidecar {
            base: Sidecar::new(
                start.elapsed().as_secs_f64(),
                ctx.config_digest.clone(),
                ctx.inputs_digest.clone(),
            ),
            wall_per_row: out.rows.iter().map(|r| r.wall_secs).collect(),
        },
    )?;
    for agg in &out.summary.per_n {
        println!(
            "sweep: n = {:>6}, p = {:.5}, median S_n(T) = {:.4e}, median W1(quenched, pde) = {:.4e}",
            agg.n, agg.p, agg.median_s_n, agg.median_w1_quenched
        );
    }
    Ok(())
}

pub fn graph_check(inv: &Invocation) -> Result<()> {
    let start = Instant::now();
    let ctx = load(inv)?;
    let k = ctx.cfg.graph_check.k;
    let replicas = ctx.cfg.graph_check.replicas;
    let seed = ctx.cfg.seeds()[0];

    let mut csv = String::from("n,p,c_n,k_c,max_disc,condition_holds_at_k,bernstein_bound,exceedance_freq\n");
    #[derive(Serialize)]
    struct PerN {
        n: usize,
        p: f64,
        c_n: f64,
        k_c: f64,
        max_disc: f64,
        condition_holds_at_k: bool,
        bernstein_bound: f64,
        exceedance_freq: f64,
        mc_slack: f64,
    }
    let mut rows = Vec::new();

    for &n in &ctx.cfg.sweep.n {
        let graph = load_graph(&ctx, n, seed)?;
        let p = graph.p();
        let report = degree_report(&graph);
        let c_n = p * n as f64 / (n as f64).ln();
        let bound = bernstein_bound(k, p, n)?;

        // empirical exceedance of the fixed-vertex discrepancy over
        // sampled replicas (skipped for imported graphs)
        let mut freq = 0.0;
        if ctx.cfg.graph.import.is_none() && replicas > 0 {
            let mut hits = 0usize;
            for r in 0..replicas {
                let g = sample_er_with(n, p, rng::hash3(seed, rng::domain::REPLICA, r as u64), ctx.cfg.graph.self_loops)?;
                let deg = g.out_row(0).len() as f64;
                let disc = deg * (1.0 / p - 1.0) + (n as f64 - deg);
                if disc >= k * n as f64 {
                    hits += 1;
                }
            }
            freq = hits as f64 / replicas as f64;
        }

        let row = PerN {
            n,
            p,
            c_n,
            k_c: k_c(c_n)?,
            max_disc: report.max_disc,
            condition_holds_at_k: degree_condition_holds(&graph, k),
            bernstein_bound: bound,
            exceedance_freq: freq,
            mc_slack: if replicas > 0 {
                3.0 * (bound * (1.0 - bound) / replicas as f64).sqrt()
            } else {
                0.0
            },
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.n, row.p, row.c_n, row.k_c, row.max_disc, row.condition_holds_at_k, row.bernstein_bound, row.exceedance_freq
        ));
        println!(
            "graph-check: n = {:>6}, p = {:.5}, max_disc = {:.4}, K_C(C_n) = {:.4}, bound(K={k}) = {:.3e}",
            row.n, row.p, row.max_disc, row.k_c, row.bernstein_bound
        );
        rows.push(row);

        // export the realized graph for reuse/import
        let mut edges = Vec::new();
        graph.write_edge_list(&mut edges)?;
        write_bytes(&ctx.out_dir.join(format!("graph_n{n}.edges")), &edges)?;
    }

    if ctx.cfg.wants("csv") {
        write_bytes(&ctx.out_dir.join("graph_check.csv"), csv.as_bytes())?;
    }
    if ctx.cfg.wants("json") {
        #[derive(Serialize)]
        struct GraphCheckJson<'a> {
            k: f64,
            replicas: usize,
            rows: &'a [PerN],
            config: &'a str,
        }
        write_json(
            &ctx.out_dir.join("graph_check.json"),
            &GraphCheckJson {
                k,
                replicas,
                rows: &rows,
                config: &ctx.config_digest,
            },
        )?;
    }
    write_json(
        &ctx.out_dir.join("sidecar.json"),
        &Sidecar::new(start.elapsed().as_secs_f64(), ctx.config_digest, ctx.inputs_digest),
    )?;
    Ok(())
}

pub fn pde(inv: &Invocation) -> Result<()> {
    let start = Instant::now();
    let ctx = load(inv)?;
    let model = ctx.cfg.model()?;
    let mu0 = ctx.cfg.mu0(&model)?;
    let cfg = ctx.cfg.pde_config(ctx.cfg.sim.t)?;
    let (snaps, report) = solve_mckean_vlasov_report(&model, &mu0, &cfg)?;

    if ctx.cfg.wants("csv") {
        let mut body = String::from("t,theta,value\n");
        for snap in &snaps {
            for k in 0..snap.m() {
                body.push_str(&format!("{},{},{}\n", snap.time(), snap.cell_center(k), snap.values()[k]));
            }
        }
        write_bytes(&ctx.out_dir.join("density.csv"), body.as_bytes())?;
    }
    if ctx.cfg.wants("json") {
        #[derive(Serialize)]
        struct PdeJson {
            snapshots: usize,
            steps: usize,
            max_mass_drift: f64,
            max_boundary_mass: f64,
            clip_events: usize,
            config: String,
        }
        write_json(
            &ctx.out_dir.join("pde_report.json"),
            &PdeJson {
                snapshots: snaps.len(),
                steps: report.steps,
                max_mass_drift: report.max_mass_drift,
                max_boundary_mass: report.max_boundary_mass,
                clip_events: report.clip_events,
                config: ctx.config_digest.clone(),
            },
        )?;
    }
    write_json(
        &ctx.out_dir.join("sidecar.json"),
        &Sidecar::new(start.elapsed().as_secs_f64(), ctx.config_digest, ctx.inputs_digest),
    )?;
    println!(
        "pde: {} snapshots over {} steps, mass drift {:.2e}, boundary mass {:.2e}",
        snaps.len(),
        report.steps,
        report.max_mass_drift,
        report.max_boundary_mass
    );
    Ok(())
}

pub fn ldp_check(inv: &Invocation) -> Result<()> {
    let start = Instant::now();
    let ctx = load(inv)?;
    let model = ctx.cfg.model()?;
    let mu0 = ctx.cfg.mu0(&model)?;
    let seed = ctx.cfg.seeds()[0];
    let schedule = match ctx.cfg.ldp.c {
        Some(c) => ermf::sweep::Schedule::CLogNOverN { c },
        None => ctx.cfg.schedule()?,
    };

    let mut csv = String::from("n,p,replica,stat,delta_n,exceeds,qv_mean,qv_sd\n");
    #[derive(Serialize)]
    struct PerN {
        n: usize,
        p: f64,
        c_n: f64,
        delta_n: f64,
        omega_frequency: f64,
    }
    let mut summary = Vec::new();

    for &n in &ctx.cfg.sweep.n {
        let p = schedule.p(n)?;
        let probe = LdpProbe::request(n, p, ctx.cfg.ldp.graph_replicas, ctx.cfg.ldp.path_replicas)?;
        let sim = SimConfig {
            dt: ctx.cfg.sim.dt,
            t: ctx.cfg.sim.t,
            seed,
            store_stride: ctx.cfg.sim.stride,
            n,
        };
        let out = estimate_omega_frequency(&model, probe, &sim, &mu0)?;
        for r in 0..out.per_graph_stat.len() {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                n,
                p,
                r,
                out.per_graph_stat[r],
                out.delta_n,
                out.per_graph_stat[r] > out.delta_n,
                out.per_graph_qv_mean[r],
                out.per_graph_qv_sd[r]
            ));
        }
        println!(
            "ldp-check: n = {:>6}, p = {:.5}, C_n = {:.3}, delta_n = {:.3e}, omega_frequency = {}",
            n, p, out.c_n, out.delta_n, out.omega_frequency
        );
        summary.push(PerN {
            n,
            p,
            c_n: out.c_n,
            delta_n: out.delta_n,
            omega_frequency: out.omega_frequency,
        });
    }

    if ctx.cfg.wants("csv") {
        write_bytes(&ctx.out_dir.join("ldp_rows.csv"), csv.as_bytes())?;
    }
    if ctx.cfg.wants("json") {
        #[derive(Serialize)]
        struct LdpJson<'a> {
            graph_replicas: usize,
            path_replicas: usize,
            per_n: &'a [PerN],
            config: &'a str,
        }
        write_json(
            &ctx.out_dir.join("ldp_summary.json"),
            &LdpJson {
                graph_replicas: ctx.cfg.ldp.graph_replicas,
                path_replicas: ctx.cfg.ldp.path_replicas,
                per_n: &summary,
                config: &ctx.config_digest,
            },
        )?;
    }
    write_json(
        &ctx.out_dir.join("sidecar.json"),
        &Sidecar::new(start.elapsed().as_secs_f64(), ctx.config_digest, ctx.inputs_digest),
    )?;
    Ok(())
}

/// Joins sweep rows into the convergence table: per-n medians plus
/// log-log rate fits.
pub fn compare(inv: &Invocation, rows_path: Option<&Path>) -> Result<()> {
    let ctx = load(inv)?;
    let path = rows_path
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| ctx.out_dir.join("sweep_rows.csv"));
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read sweep rows {}: {e}", path.display())))?;

    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty sweep rows file".into()))?
        .split(',')
        .collect();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Parse(format!("missing column `{name}`")))
    };
    let (c_n, c_p) = (col("n")?, col("p")?);
    let (c_sn, c_delta) = (col("s_n_final")?, col("delta_integral")?);
    let (c_w1q, c_w1a) = (col("w1_quenched_pde")?, col("w1_annealed_pde")?);

    struct Row {
        n: usize,
        p: f64,
        s_n: f64,
        delta: f64,
        w1q: f64,
        w1a: f64,
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let get = |c: usize| -> Result<f64> {
            fields
                .get(c)
                .ok_or_else(|| Error::Parse(format!("row {}: missing field {c}", idx + 2)))?
                .parse()
                .map_err(|e| Error::Parse(format!("row {}: {e}", idx + 2)))
        };
        rows.push(Row {
            n: get(c_n)? as usize,
            p: get(c_p)?,
            s_n: get(c_sn)?,
            delta: get(c_delta)?,
            w1q: get(c_w1q)?,
            w1a: get(c_w1a)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse("no sweep rows to compare".into()));
    }

    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.dedup();
    let mut csv = String::from("n,p,median_s_n,median_delta_integral,median_w1_quenched,median_w1_annealed\n");
    println!("{:>8} {:>10} {:>12} {:>12} {:>12} {:>12}", "n", "p", "S_n(T)", "int delta", "W1 quenched", "W1 annealed");
    for &n in &ns {
        let group: Vec<&Row> = rows.iter().filter(|r| r.n == n).collect();
        let m = |f: fn(&Row) -> f64| median(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
        let p = group[0].p;
        let (ms, md, mq, ma) = (m(|r| r.s_n), m(|r| r.delta), m(|r| r.w1q), m(|r| r.w1a));
        csv.push_str(&format!("{n},{p},{ms},{md},{mq},{ma}\n"));
        println!("{n:>8} {p:>10.5} {ms:>12.4e} {md:>12.4e} {mq:>12.4e} {ma:>12.4e}");
    }

    let delta_fit = fit_rate(
        &rows.iter().map(|r| (r.n as f64 * r.p, r.delta)).collect::<Vec<_>>(),
        200,
        101,
    );
    let w1_fit = fit_rate(&rows.iter().map(|r| (r.n as f64, r.w1q)).collect::<Vec<_>>(), 200, 102);
    if let Ok(f) = &delta_fit {
        println!("rate: delta_integral ~ (n p)^{:.3}  (band {:.3}..{:.3})", f.slope, f.band.0, f.band.1);
    }
    if let Ok(f) = &w1_fit {
        println!("rate: W1(quenched, pde) ~ n^{:.3}  (band {:.3}..{:.3})", f.slope, f.band.0, f.band.1);
    }

    if ctx.cfg.wants("csv") {
        write_bytes(&ctx.out_dir.join("convergence.csv"), csv.as_bytes())?;
    }
    if ctx.cfg.wants("json") {
        #[derive(Serialize)]
        struct CompareJson {
            delta_vs_np: Option<FitReport>,
            w1_vs_n: Option<FitReport>,
            config: String,
        }
        write_json(
            &ctx.out_dir.join("convergence.json"),
            &CompareJson {
                delta_vs_np: delta_fit.ok(),
                w1_vs_n: w1_fit.ok(),
                config: ctx.config_digest.clone(),
            },
        )?;
    }
    Ok(())
}
