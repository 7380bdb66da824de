//! Finite-volume solver for the limiting McKean–Vlasov (nonlinear
//! Fokker–Planck) equation
//!
//! ```text
//! ∂_t μ = ½ ∂²_θ(σ²(θ) μ) − ∂_θ(μ F(θ)) − ∂_θ(μ ∫ Γ(θ, θ') μ(dθ'))
//! ```
//!
//! on a periodic circle or a truncated box with zero-flux walls. The
//! scheme freezes the nonlocal drift at the start of each step, uses
//! first-order upwinding for advection and central differences for the
//! diffusive flux, all in conservative form, so mass is preserved to
//! round-off by construction and cell averages stay nonnegative under the
//! CFL condition.

use crate::error::{Error, Result};
use crate::model::{Geometry, Kernel, ModelSpec};
use crate::rng::{self, domain};

/// Spatial domain of a density grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridDomain {
    Circle { period: f64 },
    Box { lo: f64, hi: f64 },
}

impl GridDomain {
    /// Coordinate bounds `(lo, hi)`; the circle is parameterized on
    /// `[0, period)`.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            GridDomain::Circle { period } => (0.0, *period),
            GridDomain::Box { lo, hi } => (*lo, *hi),
        }
    }

    pub fn length(&self) -> f64 {
        let (lo, hi) = self.bounds();
        hi - lo
    }

    pub fn is_circle(&self) -> bool {
        matches!(self, GridDomain::Circle { .. })
    }

    /// Checks compatibility with a model's state geometry.
    pub fn matches_geometry(&self, g: Geometry) -> bool {
        matches!(
            (self, g),
            (GridDomain::Box { .. }, Geometry::Line)
        ) || matches!((self, g), (GridDomain::Circle { period }, Geometry::Circle { period: q }) if *period == q)
    }
}

/// A probability density discretized as cell averages on a uniform grid.
#[derive(Clone, Debug)]
pub struct DensityGrid {
    domain: GridDomain,
    m: usize,
    dx: f64,
    values: Vec<f64>,
    time: f64,
}

impl DensityGrid {
    /// Builds a grid by evaluating `f` at cell centers and normalizing.
    pub fn from_fn(domain: GridDomain, m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::Config("density grid needs at least 2 cells".into()));
        }
        let (lo, hi) = domain.bounds();
        if !(hi > lo) {
            return Err(Error::Config("density grid domain is empty".into()));
        }
        let dx = (hi - lo) / m as f64;
        let values: Vec<f64> = (0..m).map(|k| f(lo + (k as f64 + 0.5) * dx)).collect();
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("density values must be finite and nonnegative".into()));
        }
        let mut grid = DensityGrid {
            domain,
            m,
            dx,
            values,
            time: 0.0,
        };
        grid.normalize()?;
        Ok(grid)
    }

    /// The uniform density on the domain.
    pub fn uniform(domain: GridDomain, m: usize) -> Result<Self> {
        Self::from_fn(domain, m, |_| 1.0)
    }

    /// Builds a grid from explicit nonnegative cell values, normalizing.
    pub fn from_values(domain: GridDomain, values: Vec<f64>) -> Result<Self> {
        let m = values.len();
        if m < 2 {
            return Err(Error::Config("density grid needs at least 2 cells".into()));
        }
        let (lo, hi) = domain.bounds();
        let dx = (hi - lo) / m as f64;
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("density values must be finite and nonnegative".into()));
        }
        let mut grid = DensityGrid {
            domain,
            m,
            dx,
            values,
            time: 0.0,
        };
        grid.normalize()?;
        Ok(grid)
    }

    pub fn domain(&self) -> GridDomain {
        self.domain
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn cell_center(&self, k: usize) -> f64 {
        self.domain.bounds().0 + (k as f64 + 0.5) * self.dx
    }

    /// `Σ values · dx`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx
    }

    fn normalize(&mut self) -> Result<()> {
        let mass = self.mass();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::Config(format!("density mass must be positive, got {mass}")));
        }
        for v in &mut self.values {
            *v /= mass;
        }
        Ok(())
    }

    /// Mean of the piecewise-constant density (box domains).
    pub fn mean(&self) -> f64 {
        (0..self.m)
            .map(|k| self.cell_center(k) * self.values[k] * self.dx)
            .sum()
    }

    /// Exact variance of the piecewise-constant density, including the
    /// within-cell `dx²/12` spread.
    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        let second: f64 = (0..self.m)
            .map(|k| {
                let c = self.cell_center(k) - mu;
                (c * c + self.dx * self.dx / 12.0) * self.values[k] * self.dx
            })
            .sum();
        second
    }

    /// Largest deviation of any cell from the uniform level.
    pub fn max_deviation_from_uniform(&self) -> f64 {
        let level = 1.0 / self.domain.length();
        self.values
            .iter()
            .fold(0.0f64, |m, &v| m.max((v - level).abs()))
    }

    /// Refines each cell into `factor` equal copies (exact as a measure).
    pub fn refined(&self, factor: usize) -> DensityGrid {
        let mut values = Vec::with_capacity(self.m * factor);
        for &v in &self.values {
            for _ in 0..factor {
                values.push(v);
            }
        }
        DensityGrid {
            domain: self.domain,
            m: self.m * factor,
            dx: self.dx / factor as f64,
            values,
            time: self.time,
        }
    }

    /// Aggregates blocks of `factor` cells by averaging (mass-exact
    /// projection onto the coarser grid).
    pub fn projected(&self, factor: usize) -> Result<DensityGrid> {
        if factor == 0 || !self.m.is_multiple_of(factor) {
            return Err(Error::Config(format!(
                "cannot project {} cells by factor {factor}",
                self.m
            )));
        }
        let mc = self.m / factor;
        let values: Vec<f64> = (0..mc)
            .map(|k| self.values[k * factor..(k + 1) * factor].iter().sum::<f64>() / factor as f64)
            .collect();
        Ok(DensityGrid {
            domain: self.domain,
            m: mc,
            dx: self.dx * factor as f64,
            values,
            time: self.time,
        })
    }

    /// `theta,value` rows, one per cell.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        for k in 0..self.m {
            writeln!(w, "{},{}", self.cell_center(k), self.values[k])?;
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn scale_for_test(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }
}

/// Time discretization of the diffusion term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scheme {
    /// Fully explicit; composite CFL `|b| dt/dx + σ₊² dt/dx² ≤ 0.9`.
    ExplicitUpwind,
    /// Explicit upwind advection, backward-Euler diffusion (tridiagonal
    /// solve); only the advective CFL `|b| dt/dx ≤ 0.9` applies.
    SemiImplicitDiffusion,
}

#[derive(Clone, Copy, Debug)]
pub struct PdeConfig {
    pub m: usize,
    pub dt: f64,
    pub t: f64,
    pub scheme: Scheme,
    /// Keep every `store_stride`-th snapshot (the final one is always kept).
    pub store_stride: usize,
}

impl PdeConfig {
    pub fn new(m: usize, dt: f64, t: f64, scheme: Scheme) -> Self {
        let steps = (t / dt).ceil() as usize;
        PdeConfig {
            m,
            dt,
            t,
            scheme,
            store_stride: (steps / 50).max(1),
        }
    }
}

/// Per-run numerical bookkeeping.
#[derive(Clone, Copy, Debug, Default)]
pub struct PdeReport {
    /// Cells clipped from tiny negative values (with renormalization).
    pub clip_events: usize,
    /// Worst `|mass − 1|` seen after any step.
    pub max_mass_drift: f64,
    /// Largest mass held by the two wall cells at any time (box domains).
    pub max_boundary_mass: f64,
    pub steps: usize,
}

struct Workspace {
    drift: Vec<f64>,
    face_flux: Vec<f64>,
    g: Vec<f64>,
    sigma2: Vec<f64>,
    sin_c: Vec<f64>,
    cos_c: Vec<f64>,
}

fn nonlocal_drift(model: &ModelSpec, grid: &DensityGrid, ws: &mut Workspace) {
    let m = grid.m;
    match &model.kernel {
        Kernel::Zero => {
            for k in 0..m {
                ws.drift[k] = model.drift.eval(grid.cell_center(k));
            }
        }
        Kernel::SineDiff { coupling } => {
            // Σ_l sin(θ_l − θ_k) ρ_l dx = cos θ_k S_sin − sin θ_k S_cos
            let mut s_sin = 0.0;
            let mut s_cos = 0.0;
            for k in 0..m {
                let w = grid.values[k] * grid.dx;
                s_sin += ws.sin_c[k] * w;
                s_cos += ws.cos_c[k] * w;
            }
            for k in 0..m {
                ws.drift[k] = model.drift.eval(grid.cell_center(k))
                    + coupling * (ws.cos_c[k] * s_sin - ws.sin_c[k] * s_cos);
            }
        }
        kernel => {
            for k in 0..m {
                let x = grid.cell_center(k);
                let mut acc = 0.0;
                for l in 0..m {
                    acc += kernel.eval(x, grid.cell_center(l)) * grid.values[l];
                }
                ws.drift[k] = model.drift.eval(x) + acc * grid.dx;
            }
        }
    }
}

/// Thomas algorithm for `diag/sub/sup` tridiagonal systems.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / denom;
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Cyclic tridiagonal solve via the Sherman–Morrison correction.
fn solve_cyclic(sub: &[f64], diag: &[f64], sup: &[f64], corner_lo: f64, corner_hi: f64, rhs: &mut [f64]) {
    // corner_lo = A[0][n-1], corner_hi = A[n-1][0]
    let n = diag.len();
    let gamma = -diag[0];
    let mut d = diag.to_vec();
    d[0] -= gamma;
    d[n - 1] -= corner_lo * corner_hi / gamma;

    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = corner_hi;

    solve_tridiagonal(sub, &d, sup, rhs);
    solve_tridiagonal(sub, &d, sup, &mut u);

    let vx = rhs[0] + corner_lo / gamma * rhs[n - 1];
    let vu = u[0] + corner_lo / gamma * u[n - 1];
    let factor = vx / (1.0 + vu);
    for i in 0..n {
        rhs[i] -= factor * u[i];
    }
}

/// Integrates the McKean–Vlasov equation from `mu0`, returning snapshots
/// (always including the initial and final time) plus a numerical report.
pub fn solve_mckean_vlasov_report(
    model: &ModelSpec,
    mu0: &DensityGrid,
    cfg: &PdeConfig,
) -> Result<(Vec<DensityGrid>, PdeReport)> {
    if !mu0.domain.matches_geometry(model.geometry) {
        return Err(Error::Config(format!(
            "model geometry {:?} does not match grid domain {:?}",
            model.geometry, mu0.domain
        )));
    }
    if (mu0.mass() - 1.0).abs() > 1e-8 {
        return Err(Error::Config("initial density must be normalized".into()));
    }
    if mu0.m != cfg.m {
        return Err(Error::Config(format!(
            "initial grid has {} cells but config requests {}",
            mu0.m, cfg.m
        )));
    }
    if !(cfg.dt > 0.0 && cfg.t > 0.0 && cfg.dt <= cfg.t) {
        return Err(Error::Config("need 0 < dt <= T".into()));
    }

    let m = cfg.m;
    let dx = mu0.dx;
    let circular = mu0.domain.is_circle();
    let sigma_plus = model.sigma_bounds.1;
    let stride = cfg.store_stride.max(1);

    let mut grid = mu0.clone();
    grid.time = 0.0;
    let mut ws = Workspace {
        drift: vec![0.0; m],
        face_flux: vec![0.0; m + 1],
        g: vec![0.0; m],
        sigma2: (0..m)
            .map(|k| {
                let s = model.sigma.eval(grid.cell_center(k));
                s * s
            })
            .collect(),
        sin_c: (0..m).map(|k| grid.cell_center(k).sin()).collect(),
        cos_c: (0..m).map(|k| grid.cell_center(k).cos()).collect(),
    };

    let steps = ((cfg.t / cfg.dt) - 1e-9).ceil().max(1.0) as usize;
    let mut report = PdeReport {
        steps,
        ..Default::default()
    };
    let mut snapshots = vec![grid.clone()];

    // diffusion operator coefficients a_k = σ²_k / 2
    let half_sigma2: Vec<f64> = ws.sigma2.iter().map(|s| s / 2.0).collect();

    for step in 0..steps {
        let t_now = step as f64 * cfg.dt;
        let h = (cfg.t - t_now).min(cfg.dt);

        nonlocal_drift(model, &grid, &mut ws);

        // face velocities; face k sits between cells k-1 and k
        let mut max_u = 0.0f64;
        for k in 0..=m {
            let u = if circular {
                let left = (k + m - 1) % m;
                let right = k % m;
                0.5 * (ws.drift[left] + ws.drift[right])
            } else if k == 0 || k == m {
                0.0
            } else {
                0.5 * (ws.drift[k - 1] + ws.drift[k])
            };
            ws.face_flux[k] = u;
            max_u = max_u.max(u.abs());
        }

        let advective = max_u * h / dx;
        let diffusive = sigma_plus * sigma_plus * h / (dx * dx);
        let cfl = match cfg.scheme {
            Scheme::ExplicitUpwind => advective + diffusive,
            Scheme::SemiImplicitDiffusion => advective,
        };
        if cfl > 0.9 {
            let denom = match cfg.scheme {
                Scheme::ExplicitUpwind => max_u / dx + sigma_plus * sigma_plus / (dx * dx),
                Scheme::SemiImplicitDiffusion => max_u / dx,
            };
            return Err(Error::Config(format!(
                "CFL violation at t = {t_now:.6}: number {cfl:.3} > 0.9; use dt <= {:.3e}",
                0.9 / denom
            )));
        }

        // upwind advective flux through each face, reusing face velocities
        for k in 0..=m {
            let u = ws.face_flux[k];
            ws.face_flux[k] = if circular {
                let left = (k + m - 1) % m;
                let right = k % m;
                if u >= 0.0 {
                    u * grid.values[left]
                } else {
                    u * grid.values[right]
                }
            } else if k == 0 || k == m {
                0.0
            } else if u >= 0.0 {
                u * grid.values[k - 1]
            } else {
                u * grid.values[k]
            };
        }

        match cfg.scheme {
            Scheme::ExplicitUpwind => {
                for k in 0..m {
                    ws.g[k] = half_sigma2[k] * grid.values[k];
                }
                // add diffusive flux −(g_k − g_{k-1})/dx at interior faces
                for k in 0..=m {
                    if circular {
                        let left = (k + m - 1) % m;
                        let right = k % m;
                        ws.face_flux[k] -= (ws.g[right] - ws.g[left]) / dx;
                    } else if k > 0 && k < m {
                        ws.face_flux[k] -= (ws.g[k] - ws.g[k - 1]) / dx;
                    }
                }
                for k in 0..m {
                    grid.values[k] -= h / dx * (ws.face_flux[k + 1] - ws.face_flux[k]);
                }
            }
            Scheme::SemiImplicitDiffusion => {
                for k in 0..m {
                    grid.values[k] -= h / dx * (ws.face_flux[k + 1] - ws.face_flux[k]);
                }
                let r = h / (dx * dx);
                let mut sub = vec![0.0; m];
                let mut diag = vec![0.0; m];
                let mut sup = vec![0.0; m];
                for k in 0..m {
                    diag[k] = 1.0 + 2.0 * r * half_sigma2[k];
                    if k > 0 {
                        sub[k] = -r * half_sigma2[k - 1];
                    }
                    if k + 1 < m {
                        sup[k] = -r * half_sigma2[k + 1];
                    }
                }
                if circular {
                    let corner_lo = -r * half_sigma2[m - 1];
                    let corner_hi = -r * half_sigma2[0];
                    solve_cyclic(&sub, &diag, &sup, corner_lo, corner_hi, &mut grid.values);
                } else {
                    // zero-flux walls: one-sided diffusion stencils
                    diag[0] = 1.0 + r * half_sigma2[0];
                    diag[m - 1] = 1.0 + r * half_sigma2[m - 1];
                    solve_tridiagonal(&sub, &diag, &sup, &mut grid.values);
                }
            }
        }

        grid.time = t_now + h;

        // positivity guard: genuine negatives are a scheme failure, tiny
        // ones are round-off and get clipped with renormalization
        let mut clipped = false;
        for (k, v) in grid.values.iter_mut().enumerate() {
            if *v < -1e-14 {
                return Err(Error::Numerical(format!(
                    "negative density {v:.3e} in cell {k} at t = {:.6}",
                    grid.time
                )));
            }
            if *v < 0.0 {
                *v = 0.0;
                clipped = true;
            }
        }
        if clipped {
            report.clip_events += 1;
            grid.normalize()?;
        }

        let drift = (grid.mass() - 1.0).abs();
        report.max_mass_drift = report.max_mass_drift.max(drift);
        if drift > 1e-8 {
            return Err(Error::Numerical(format!(
                "mass drifted by {drift:.3e} at t = {:.6}",
                grid.time
            )));
        }
        if !circular {
            let wall = (grid.values[0] + grid.values[m - 1]) * dx;
            report.max_boundary_mass = report.max_boundary_mass.max(wall);
        }

        if (step + 1) % stride == 0 || step + 1 == steps {
            snapshots.push(grid.clone());
        }
    }

    Ok((snapshots, report))
}

/// As [`solve_mckean_vlasov_report`], returning only the snapshots.
pub fn solve_mckean_vlasov(
    model: &ModelSpec,
    mu0: &DensityGrid,
    cfg: &PdeConfig,
) -> Result<Vec<DensityGrid>> {
    solve_mckean_vlasov_report(model, mu0, cfg).map(|(s, _)| s)
}

/// Deterministic stratified inverse-CDF sampling at quantile levels
/// `(k − ½)/n`, with a seed-keyed shuffle deciding which particle index
/// receives which quantile. As a multiset the output is independent of
/// the seed, and its empirical measure is within `dx + |domain|/n` of the
/// density in Wasserstein distance by construction.
pub fn sample_from_density(dens: &DensityGrid, n: usize, seed: u64) -> Vec<f64> {
    assert!(n >= 1, "need at least one sample");
    let (lo, _) = dens.domain.bounds();
    let mut cum = Vec::with_capacity(dens.m + 1);
    let mut acc = 0.0;
    cum.push(0.0);
    for v in &dens.values {
        acc += v * dens.dx;
        cum.push(acc);
    }
    let total = acc;

    let mut out = Vec::with_capacity(n);
    let mut cell = 0usize;
    for k in 0..n {
        let q = (k as f64 + 0.5) / n as f64 * total;
        while cell + 1 < dens.m && cum[cell + 1] < q {
            cell += 1;
        }
        let seg = cum[cell + 1] - cum[cell];
        let frac = if seg > 0.0 { (q - cum[cell]) / seg } else { 0.0 };
        out.push(lo + (cell as f64 + frac) * dens.dx);
    }
    rng::shuffle(&mut out, rng::hash3(seed, domain::INIT, n as u64));
    out
}

/// Self-convergence estimate: Wasserstein distance at the final time
/// between the solution on `cfg.m` cells and the solution on
/// `cfg.m · refine_factor` cells projected back.
pub fn grid_refinement_error(
    model: &ModelSpec,
    mu0: &DensityGrid,
    cfg: &PdeConfig,
    refine_factor: usize,
) -> Result<f64> {
    if refine_factor < 2 {
        return Err(Error::Config("refine_factor must be >= 2".into()));
    }
    let coarse = solve_mckean_vlasov(model, mu0, cfg)?;
    let fine_cfg = PdeConfig {
        m: cfg.m * refine_factor,
        ..*cfg
    };
    let fine = solve_mckean_vlasov(model, &mu0.refined(refine_factor), &fine_cfg)?;
    let fine_proj = fine.last().unwrap().projected(refine_factor)?;
    crate::measure::w1_between_densities(coarse.last().unwrap(), &fine_proj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;
    use std::collections::BTreeMap;
    use std::f64::consts::TAU;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn free_circle_model() -> crate::model::ModelSpec {
        builtin_model("constant_sigma_free", &params(&[("noise", 1.0), ("period", TAU)])).unwrap()
    }

    #[test]
    fn uniform_is_exactly_stationary_without_interaction() {
        let model = free_circle_model();
        let mu0 = DensityGrid::uniform(GridDomain::Circle { period: TAU }, 64).unwrap();
        let cfg = PdeConfig::new(64, 1e-3, 0.5, Scheme::ExplicitUpwind);
        let snaps = solve_mckean_vlasov(&model, &mu0, &cfg).unwrap();
        let last = snaps.last().unwrap();
        for (u, v) in mu0.values().iter().zip(last.values()) {
            assert_eq!(u, v);
        }
    }

    #[test]
    fn uniform_is_stationary_for_sine_kernel() {
        let model = builtin_model("kuramoto", &params(&[("coupling", 1.0), ("noise", 1.0)])).unwrap();
        let mu0 = DensityGrid::uniform(GridDomain::Circle { period: TAU }, 128).unwrap();
        let cfg = PdeConfig::new(128, 1e-3, 1.0, Scheme::ExplicitUpwind);
        let snaps = solve_mckean_vlasov(&model, &mu0, &cfg).unwrap();
        let dev = snaps.last().unwrap().max_deviation_from_uniform();
        assert!(dev < 1e-12, "deviation {dev}");
    }

    #[test]
    fn heat_equation_variance_growth() {
        // Γ = 0, F = 0, σ = 1 on [-8, 8]: Var(t) = Var(0) + t
        let model = builtin_model("constant_sigma_free", &params(&[("noise", 1.0)])).unwrap();
        let domain = GridDomain::Box { lo: -8.0, hi: 8.0 };
        let mu0 = DensityGrid::from_fn(domain, 512, |x| (-x * x / 0.5).exp()).unwrap();
        assert!((mu0.variance() - 0.25).abs() < 1e-3);
        let cfg = PdeConfig::new(512, 1e-4, 0.5, Scheme::ExplicitUpwind);
        let (snaps, report) = solve_mckean_vlasov_report(&model, &mu0, &cfg).unwrap();
        let var = snaps.last().unwrap().variance();
        assert!((var - 0.75).abs() <= 1e-2, "variance {var}");
        assert!(report.max_mass_drift <= 1e-10);
        assert!(report.max_boundary_mass < 1e-12);
    }

    #[test]
    fn semi_implicit_matches_explicit_on_heat() {
        let model = builtin_model("constant_sigma_free", &params(&[("noise", 1.0)])).unwrap();
        let domain = GridDomain::Box { lo: -8.0, hi: 8.0 };
        let mu0 = DensityGrid::from_fn(domain, 128, |x| (-x * x / 0.5).exp()).unwrap();
        let explicit = PdeConfig::new(128, 2e-3, 0.25, Scheme::ExplicitUpwind);
        let implicit = PdeConfig::new(128, 2e-3, 0.25, Scheme::SemiImplicitDiffusion);
        let a = solve_mckean_vlasov(&model, &mu0, &explicit).unwrap();
        let (b, rep) = solve_mckean_vlasov_report(&model, &mu0, &implicit).unwrap();
        assert!(rep.max_mass_drift <= 1e-10, "mass drift {}", rep.max_mass_drift);
        let d = crate::measure::w1_between_densities(a.last().unwrap(), b.last().unwrap()).unwrap();
        assert!(d < 2e-3, "schemes disagree by {d}");
    }

    #[test]
    fn semi_implicit_circle_uniform_stationary() {
        let model = free_circle_model();
        let mu0 = DensityGrid::uniform(GridDomain::Circle { period: TAU }, 64).unwrap();
        let cfg = PdeConfig::new(64, 1e-2, 0.5, Scheme::SemiImplicitDiffusion);
        let snaps = solve_mckean_vlasov(&model, &mu0, &cfg).unwrap();
        let dev = snaps.last().unwrap().max_deviation_from_uniform();
        assert!(dev < 1e-12, "deviation {dev}");
    }

    #[test]
    fn mass_conserved_over_many_steps() {
        let model = builtin_model("kuramoto", &params(&[("coupling", 0.8), ("noise", 0.7)])).unwrap();
        let mu0 = DensityGrid::from_fn(GridDomain::Circle { period: TAU }, 128, |x| {
            1.0 + 0.3 * x.cos()
        })
        .unwrap();
        // 10^5 steps
        let cfg = PdeConfig::new(128, 1e-5, 1.0, Scheme::ExplicitUpwind);
        let (_, report) = solve_mckean_vlasov_report(&model, &mu0, &cfg).unwrap();
        assert_eq!(report.steps, 100_000);
        assert!(report.max_mass_drift <= 1e-10, "drift {}", report.max_mass_drift);
        assert_eq!(report.clip_events, 0);
    }

    #[test]
    fn subcritical_sine_coupling_relaxes_to_uniform() {
        let model = builtin_model("kuramoto", &params(&[("coupling", 0.5), ("noise", 1.0)])).unwrap();
        let mu0 = DensityGrid::from_fn(GridDomain::Circle { period: TAU }, 128, |x| {
            1.0 + 0.5 * x.cos()
        })
        .unwrap();
        let cfg = PdeConfig {
            store_stride: 500,
            ..PdeConfig::new(128, 1e-3, 2.0, Scheme::ExplicitUpwind)
        };
        let snaps = solve_mckean_vlasov(&model, &mu0, &cfg).unwrap();
        let devs: Vec<f64> = snaps.iter().map(|g| g.max_deviation_from_uniform()).collect();
        for w in devs.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "deviation not decreasing: {devs:?}");
        }
        // linearized decay rate of the first mode is σ²/2 − K/2 = 1/4,
        // so over T = 2 the deviation shrinks to about exp(-1/2)
        assert!(devs.last().unwrap() < &(0.65 * devs[0]), "{devs:?}");
    }

    #[test]
    fn cfl_violation_names_admissible_dt() {
        let model = free_circle_model();
        let mu0 = DensityGrid::uniform(GridDomain::Circle { period: TAU }, 256).unwrap();
        let cfg = PdeConfig::new(256, 1e-2, 1.0, Scheme::ExplicitUpwind);
        let err = solve_mckean_vlasov(&model, &mu0, &cfg).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("CFL") && msg.contains("dt <="), "{msg}");
    }

    #[test]
    fn stratified_sampling_uniform_circle() {
        let dens = DensityGrid::uniform(GridDomain::Circle { period: TAU }, 32).unwrap();
        let mut s = sample_from_density(&dens, 4, 9);
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect = [TAU / 8.0, 3.0 * TAU / 8.0, 5.0 * TAU / 8.0, 7.0 * TAU / 8.0];
        for (a, b) in s.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn stratified_sampling_point_mass() {
        let mut values = vec![0.0; 64];
        values[10] = 1.0;
        let dens = DensityGrid::from_values(GridDomain::Box { lo: 0.0, hi: 6.4 }, values).unwrap();
        for x in sample_from_density(&dens, 37, 3) {
            assert!((1.0..=1.1 + 1e-12).contains(&x), "sample {x} outside the loaded cell");
        }
    }

    #[test]
    fn stratified_sampling_gaussian_mean() {
        let dens = DensityGrid::from_fn(GridDomain::Box { lo: -8.0, hi: 8.0 }, 256, |x| {
            (-(x - 0.7) * (x - 0.7) / 2.0).exp()
        })
        .unwrap();
        let n = 10_000;
        let s = sample_from_density(&dens, n, 5);
        let mean = s.iter().sum::<f64>() / n as f64;
        let bound = 3.0 / (n as f64).sqrt() + dens.dx();
        assert!((mean - dens.mean()).abs() <= bound, "mean {mean} vs {}", dens.mean());
    }

    #[test]
    fn sampling_multiset_is_seed_independent() {
        let dens = DensityGrid::from_fn(GridDomain::Box { lo: -2.0, hi: 2.0 }, 64, |x| 1.0 + x * x).unwrap();
        let mut a = sample_from_density(&dens, 100, 1);
        let mut b = sample_from_density(&dens, 100, 2);
        assert_ne!(a, b);
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn refinement_error_zero_on_stationary_case() {
        let model = free_circle_model();
        let mu0 = DensityGrid::uniform(GridDomain::Circle { period: TAU }, 64).unwrap();
        let cfg = PdeConfig::new(64, 1e-3, 0.2, Scheme::ExplicitUpwind);
        let e = grid_refinement_error(&model, &mu0, &cfg, 2).unwrap();
        assert!(e < 1e-13, "refinement error {e}");
    }

    #[test]
    fn refinement_error_decreases_on_heat() {
        // pure diffusion: no upwind error term, so the gap between
        // resolutions shrinks fast (quadratically) with dx
        let model = builtin_model("constant_sigma_free", &params(&[("noise", 1.0)])).unwrap();
        let domain = GridDomain::Box { lo: -8.0, hi: 8.0 };
        let errs: Vec<f64> = [128usize, 256]
            .iter()
            .map(|&m| {
                let mu0 = DensityGrid::from_fn(domain, m, |x| (-x * x / 0.5).exp()).unwrap();
                let cfg = PdeConfig::new(m, 5e-4, 0.25, Scheme::ExplicitUpwind);
                grid_refinement_error(&model, &mu0, &cfg, 2).unwrap()
            })
            .collect();
        assert!(errs[1] < errs[0], "errors {errs:?}");
    }

    #[test]
    fn refinement_error_decreases_for_ou() {
        // Γ = 0, F = -x, σ = 1 on a box: advection active, first-order
        let mut p = params(&[("rate", 1.0), ("noise", 1.0)]);
        p.insert("coupling".into(), 0.0);
        let model = builtin_model("linear_attract", &p).unwrap();
        let domain = GridDomain::Box { lo: -8.0, hi: 8.0 };
        let t = 0.25;
        let dt = 2e-5;
        let errs: Vec<f64> = [64usize, 128]
            .iter()
            .map(|&m| {
                let mu0 = DensityGrid::from_fn(domain, m, |x| (-(x - 1.0) * (x - 1.0)).exp()).unwrap();
                let cfg = PdeConfig::new(m, dt, t, Scheme::ExplicitUpwind);
                grid_refinement_error(&model, &mu0, &cfg, 2).unwrap()
            })
            .collect();
        assert!(errs[1] < errs[0], "errors {errs:?}");
    }

    #[test]
    fn projection_and_refinement_are_inverse_on_mass() {
        let dens = DensityGrid::from_fn(GridDomain::Box { lo: 0.0, hi: 1.0 }, 32, |x| 1.0 + x).unwrap();
        let fine = dens.refined(4);
        assert!((fine.mass() - 1.0).abs() < 1e-12);
        let back = fine.projected(4).unwrap();
        for (a, b) in dens.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
