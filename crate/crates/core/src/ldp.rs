//! Monte Carlo probe of the exponential-moment condition that transfers
//! large-deviation bounds from the annealed to the quenched system.
//!
//! For a graph realization `ξ`, the quantity of interest is
//!
//! ```text
//! (1/n) log E[ exp(C_n ⟨M⟩_T) ]
//! ```
//!
//! where the expectation runs over annealed Brownian paths and `⟨M⟩_T` is
//! the quadratic variation of the Girsanov exponent between the two path
//! laws, evaluated with `ξ` along those annealed paths. A graph is *bad*
//! when the statistic exceeds `δ_n`; the probe estimates the frequency of
//! bad graphs, which should die out as `n p_n` grows with the explicit
//! sequences `C_n = sqrt(log(n p_n))`, `δ_n = 1/sqrt(n p_n)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::sample_er;
use crate::model::ModelSpec;
use crate::pde::{sample_from_density, DensityGrid};
use crate::rng::{self, domain};
use crate::sde::{simulate_annealed_qv, SimConfig};

/// One exponential-moment experiment: inputs plus per-graph statistics.
#[derive(Clone, Debug, Serialize)]
pub struct LdpProbe {
    pub n: usize,
    pub p: f64,
    /// Tilt constant multiplying `⟨M⟩_T`.
    pub c_n: f64,
    /// Exceedance threshold for the per-graph statistic.
    pub delta_n: f64,
    pub graph_replicas: usize,
    pub path_replicas: usize,
    /// `(1/n) log( (1/R_b) Σ_b exp(C_n ⟨M⟩_T^{(b)}) )` per graph.
    pub per_graph_stat: Vec<f64>,
    /// Mean of `⟨M⟩_T` over path replicas per graph.
    pub per_graph_qv_mean: Vec<f64>,
    /// Standard deviation of `⟨M⟩_T` over path replicas per graph.
    pub per_graph_qv_sd: Vec<f64>,
    /// Fraction of graphs whose statistic exceeds `delta_n`.
    pub omega_frequency: f64,
}

impl LdpProbe {
    /// A probe request with the given replica counts and the explicit
    /// `(C_n, δ_n)` sequences.
    pub fn request(n: usize, p: f64, graph_replicas: usize, path_replicas: usize) -> Result<Self> {
        let (c_n, delta_n) = paper_sequences(n, p)?;
        Ok(LdpProbe {
            n,
            p,
            c_n,
            delta_n,
            graph_replicas,
            path_replicas,
            per_graph_stat: Vec::new(),
            per_graph_qv_mean: Vec::new(),
            per_graph_qv_sd: Vec::new(),
            omega_frequency: 0.0,
        })
    }
}

/// The explicit slow sequences `C_n = sqrt(log(n p))` and
/// `δ_n = 1/sqrt(n p)`. Requires `n p > 1` so the logarithm is positive.
pub fn paper_sequences(n: usize, p: f64) -> Result<(f64, f64)> {
    let np = n as f64 * p;
    if !(np > 1.0) {
        return Err(Error::Domain(format!(
            "need n·p > 1 for the tilt sequences, got {np}"
        )));
    }
    Ok((np.ln().sqrt(), 1.0 / np.sqrt()))
}

/// Permutation-invariant log-sum-exp: values are sorted before summation
/// so the result does not depend on replica order.
fn log_sum_exp(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let m = *v.last().unwrap();
    if m.is_infinite() {
        return m;
    }
    let sum: f64 = v.iter().map(|x| (x - m).exp()).sum();
    m + sum.ln()
}

/// Runs the exponential-moment experiment described by `probe`.
///
/// For each of `graph_replicas` independent graphs, `path_replicas`
/// annealed trajectories are integrated (noise keyed by the master seed,
/// graph index and path index) and `⟨M⟩_T` is evaluated with that graph's
/// adjacency along them. Initial data is drawn deterministically from
/// `mu0` by stratified quantiles, as in the coupled runs. Everything is a
/// pure function of `sim.seed`.
pub fn estimate_omega_frequency(
    model: &ModelSpec,
    probe: LdpProbe,
    sim: &SimConfig,
    mu0: &DensityGrid,
) -> Result<LdpProbe> {
    if !model.nondegenerate() {
        return Err(Error::Config(
            "the exponential-moment probe requires σ₋ > 0".into(),
        ));
    }
    if probe.graph_replicas == 0 || probe.path_replicas == 0 {
        return Err(Error::Config("replica counts must be positive".into()));
    }
    let n = probe.n;
    let master = sim.seed;
    let init = sample_from_density(mu0, n, rng::hash3(master, domain::INIT, n as u64));

    let per_graph: Vec<(f64, f64, f64)> = (0..probe.graph_replicas)
        .into_par_iter()
        .map(|r| -> Result<(f64, f64, f64)> {
            let graph_seed = rng::hash3(master, domain::REPLICA, r as u64);
            let graph = sample_er(n, probe.p, graph_seed)?;
            let mut qvs = Vec::with_capacity(probe.path_replicas);
            for b in 0..probe.path_replicas {
                let path_seed =
                    rng::hash3(master, domain::NOISE, (r * probe.path_replicas + b) as u64);
                let cfg = SimConfig {
                    seed: path_seed,
                    n,
                    ..*sim
                };
                qvs.push(simulate_annealed_qv(model, &graph, &init, &cfg)?);
            }
            let r_b = probe.path_replicas as f64;
            let tilted: Vec<f64> = qvs.iter().map(|q| probe.c_n * q).collect();
            let stat = (log_sum_exp(&tilted) - r_b.ln()) / n as f64;
            let mean = qvs.iter().sum::<f64>() / r_b;
            let var = qvs.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>() / r_b;
            Ok((stat, mean, var.sqrt()))
        })
        .collect::<Result<_>>()?;

    let exceed = per_graph.iter().filter(|(s, _, _)| *s > probe.delta_n).count();
    Ok(LdpProbe {
        per_graph_stat: per_graph.iter().map(|x| x.0).collect(),
        per_graph_qv_mean: per_graph.iter().map(|x| x.1).collect(),
        per_graph_qv_sd: per_graph.iter().map(|x| x.2).collect(),
        omega_frequency: exceed as f64 / probe.graph_replicas as f64,
        ..probe
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;
    use crate::pde::GridDomain;
    use std::collections::BTreeMap;
    use std::f64::consts::TAU;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn uniform_mu0() -> DensityGrid {
        DensityGrid::uniform(GridDomain::Circle { period: TAU }, 64).unwrap()
    }

    #[test]
    fn explicit_sequences() {
        let e = std::f64::consts::E;
        // n p = e: C = 1, δ = e^{-1/2}
        let (c, d) = paper_sequences(100, e / 100.0).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
        assert!((d - (-0.5f64).exp()).abs() < 1e-12);
        // n p = e^4: C = 2, δ = e^{-2}
        let (c, d) = paper_sequences(1000, e.powi(4) / 1000.0).unwrap();
        assert!((c - 2.0).abs() < 1e-12);
        assert!((d - (-2.0f64).exp()).abs() < 1e-12);
        // monotone: C grows, δ shrinks
        let (c1, d1) = paper_sequences(100, 0.1).unwrap();
        let (c2, d2) = paper_sequences(10_000, 0.1).unwrap();
        assert!(c2 > c1 && d2 < d1);
        // domain edge
        assert!(paper_sequences(10, 0.1).is_err());
    }

    #[test]
    fn log_sum_exp_is_order_invariant_and_guarded() {
        let v = [700.0, 1.0, -3.0, 699.5];
        let mut w = v;
        w.reverse();
        assert_eq!(log_sum_exp(&v), log_sum_exp(&w));
        assert!(log_sum_exp(&v).is_finite());
        assert!((log_sum_exp(&[0.0, 0.0]) - 2.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn complete_graph_has_zero_frequency() {
        let model = builtin_model("kuramoto", &params(&[("coupling", 1.0), ("noise", 1.0)])).unwrap();
        let probe = LdpProbe::request(40, 1.0, 6, 3).unwrap();
        let sim = SimConfig::new(40, 1e-2, 0.2, 71);
        let out = estimate_omega_frequency(&model, probe, &sim, &uniform_mu0()).unwrap();
        assert_eq!(out.omega_frequency, 0.0);
        for s in &out.per_graph_stat {
            assert_eq!(*s, 0.0);
        }
    }

    #[test]
    fn zero_kernel_has_zero_frequency_for_any_p() {
        let model = builtin_model(
            "constant_sigma_free",
            &params(&[("noise", 1.0), ("period", TAU)]),
        )
        .unwrap();
        let probe = LdpProbe::request(50, 0.2, 5, 3).unwrap();
        let sim = SimConfig::new(50, 1e-2, 0.2, 13);
        let out = estimate_omega_frequency(&model, probe, &sim, &uniform_mu0()).unwrap();
        assert_eq!(out.omega_frequency, 0.0);
        for (m, s) in out.per_graph_qv_mean.iter().zip(&out.per_graph_qv_sd) {
            assert_eq!((*m, *s), (0.0, 0.0));
        }
    }

    #[test]
    fn probe_is_deterministic() {
        let model = builtin_model("kuramoto", &params(&[("coupling", 1.0), ("noise", 1.0)])).unwrap();
        let sim = SimConfig::new(60, 1e-2, 0.2, 5);
        let run = || {
            let probe = LdpProbe::request(60, 0.3, 4, 2).unwrap();
            estimate_omega_frequency(&model, probe, &sim, &uniform_mu0()).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.per_graph_stat, b.per_graph_stat);
        assert_eq!(a.omega_frequency, b.omega_frequency);
    }

    #[test]
    fn degenerate_sigma_is_rejected() {
        let model = builtin_model(
            "constant_sigma_free",
            &params(&[("noise", 0.0), ("period", TAU)]),
        )
        .unwrap();
        let probe = LdpProbe::request(30, 0.5, 2, 2).unwrap();
        let sim = SimConfig::new(30, 1e-2, 0.1, 1);
        assert!(estimate_omega_frequency(&model, probe, &sim, &uniform_mu0()).is_err());
    }
}
