//! Model definition: drift `F`, pair interaction `Γ`, diffusion `σ`, and
//! the declared constants the quantitative bounds are stated in terms of.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::{self, domain};

/// State geometry of one particle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Geometry {
    /// Unbounded real line.
    Line,
    /// Circle of the given period; coordinates live in `[0, period)`.
    Circle { period: f64 },
}

impl Geometry {
    /// Canonical representative of `x` (identity on the line).
    #[inline]
    pub fn wrap(&self, x: f64) -> f64 {
        match self {
            Geometry::Line => x,
            Geometry::Circle { period } => {
                let y = x.rem_euclid(*period);
                // rem_euclid can return `period` itself when x is a tiny
                // negative number; pin the representative into [0, period).
                if y >= *period {
                    0.0
                } else {
                    y
                }
            }
        }
    }

    /// Distance between two states: absolute difference on the line,
    /// geodesic (arc) distance on the circle.
    #[inline]
    pub fn distance(&self, a: f64, b: f64) -> f64 {
        match self {
            Geometry::Line => (a - b).abs(),
            Geometry::Circle { period } => {
                let d = (a - b).abs().rem_euclid(*period);
                d.min(period - d)
            }
        }
    }

    pub fn is_circle(&self) -> bool {
        matches!(self, Geometry::Circle { .. })
    }
}

type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Single-particle drift `F`.
#[derive(Clone)]
pub enum Drift {
    Zero,
    /// `F(x) = -rate * x`
    Linear { rate: f64 },
    Custom(Fn1),
}

impl Drift {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Drift::Zero => 0.0,
            Drift::Linear { rate } => -rate * x,
            Drift::Custom(f) => f(x),
        }
    }
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Zero => write!(f, "Zero"),
            Drift::Linear { rate } => write!(f, "Linear {{ rate: {rate} }}"),
            Drift::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Pair interaction kernel `Γ(x, y)`, acting on the state of the particle
/// that feels the force (`x`) and the state of its neighbor (`y`).
///
/// Structured variants expose the algebra the integrator and the PDE
/// solver exploit: `SineDiff` admits the phase-moment reduction
/// `Σ_j sin(θ_j − θ_i) = cos θ_i Σ sin θ_j − sin θ_i Σ cos θ_j`, turning
/// complete-graph sums into O(1) work per particle.
#[derive(Clone)]
pub enum Kernel {
    Zero,
    /// `Γ(x, y) = coupling * sin(y - x)`
    SineDiff { coupling: f64 },
    /// `Γ(x, y) = coupling * tanh(y - x)`; a bounded Lipschitz stand-in
    /// for linear attraction on the line.
    TanhDiff { coupling: f64 },
    Custom(Fn2),
}

impl Kernel {
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Kernel::Zero => 0.0,
            Kernel::SineDiff { coupling } => coupling * (y - x).sin(),
            Kernel::TanhDiff { coupling } => coupling * (y - x).tanh(),
            Kernel::Custom(f) => f(x, y),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Kernel::Zero)
    }
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Zero => write!(f, "Zero"),
            Kernel::SineDiff { coupling } => write!(f, "SineDiff {{ coupling: {coupling} }}"),
            Kernel::TanhDiff { coupling } => write!(f, "TanhDiff {{ coupling: {coupling} }}"),
            Kernel::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Diffusion coefficient `σ`.
#[derive(Clone)]
pub enum Sigma {
    Constant(f64),
    Custom(Fn1),
}

impl Sigma {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Sigma::Constant(s) => *s,
            Sigma::Custom(f) => f(x),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Sigma::Constant(_))
    }
}

impl fmt::Debug for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sigma::Constant(s) => write!(f, "Constant({s})"),
            Sigma::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// A dynamical model together with the declared constants used by the
/// quantitative diagnostics.
///
/// The Lipschitz constants and bounds are *declared*, not derived: user
/// callables are opaque. [`validate_model`] spot-checks the declarations
/// statistically.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub name: String,
    pub drift: Drift,
    pub kernel: Kernel,
    pub sigma: Sigma,
    pub geometry: Geometry,
    /// Lipschitz constant of `F`.
    pub lip_drift: f64,
    /// Per-argument Lipschitz constant of `Γ`.
    pub lip_kernel: f64,
    /// Lipschitz constant of `σ`.
    pub lip_sigma: f64,
    /// Declared sup norm of `Γ`.
    pub gamma_sup: f64,
    /// Declared `(σ₋, σ₊)` with `0 ≤ σ₋ ≤ σ₊`.
    pub sigma_bounds: (f64, f64),
}

impl ModelSpec {
    /// Whether the diffusion is uniformly elliptic, which the quadratic
    /// variation diagnostics require.
    pub fn nondegenerate(&self) -> bool {
        self.sigma_bounds.0 > 0.0
    }
}

fn param(params: &BTreeMap<String, f64>, key: &str, model: &str) -> Result<f64> {
    let v = params
        .get(key)
        .copied()
        .ok_or_else(|| Error::Config(format!("model `{model}` needs parameter `{key}`")))?;
    if !v.is_finite() {
        return Err(Error::Config(format!(
            "model `{model}`: parameter `{key}` must be finite, got {v}"
        )));
    }
    Ok(v)
}

/// Constructs one of the built-in models.
///
/// * `kuramoto`: circle of period 2π, `F = 0`, `Γ(x,y) = K sin(y−x)`,
///   constant `σ`. Parameters `coupling` (K) and `noise` (σ).
/// * `linear_attract`: line, `F(x) = −a x`, `Γ(x,y) = K tanh(y−x)`,
///   constant `σ`. Parameters `rate` (a), `noise`, optional `coupling`
///   (default 1).
/// * `constant_sigma_free`: no drift, no interaction, constant `σ`.
///   Parameter `noise`, optional `period` to place it on a circle.
pub fn builtin_model(name: &str, params: &BTreeMap<String, f64>) -> Result<ModelSpec> {
    match name {
        "kuramoto" => {
            let k = param(params, "coupling", name)?;
            let sigma = param(params, "noise", name)?;
            if sigma < 0.0 {
                return Err(Error::Config("kuramoto: noise must be >= 0".into()));
            }
            Ok(ModelSpec {
                name: name.to_string(),
                drift: Drift::Zero,
                kernel: if k == 0.0 {
                    Kernel::Zero
                } else {
                    Kernel::SineDiff { coupling: k }
                },
                sigma: Sigma::Constant(sigma),
                geometry: Geometry::Circle {
                    period: std::f64::consts::TAU,
                },
                lip_drift: 0.0,
                lip_kernel: k.abs(),
                lip_sigma: 0.0,
                gamma_sup: k.abs(),
                sigma_bounds: (sigma, sigma),
            })
        }
        "linear_attract" => {
            let rate = param(params, "rate", name)?;
            let sigma = param(params, "noise", name)?;
            let k = params.get("coupling").copied().unwrap_or(1.0);
            if !k.is_finite() {
                return Err(Error::Config("linear_attract: coupling must be finite".into()));
            }
            if sigma < 0.0 {
                return Err(Error::Config("linear_attract: noise must be >= 0".into()));
            }
            Ok(ModelSpec {
                name: name.to_string(),
                drift: Drift::Linear { rate },
                kernel: if k == 0.0 {
                    Kernel::Zero
                } else {
                    Kernel::TanhDiff { coupling: k }
                },
                sigma: Sigma::Constant(sigma),
                geometry: Geometry::Line,
                lip_drift: rate.abs(),
                lip_kernel: k.abs(),
                lip_sigma: 0.0,
                gamma_sup: k.abs(),
                sigma_bounds: (sigma, sigma),
            })
        }
        "constant_sigma_free" => {
            let sigma = param(params, "noise", name)?;
            if sigma < 0.0 {
                return Err(Error::Config("constant_sigma_free: noise must be >= 0".into()));
            }
            let geometry = match params.get("period") {
                Some(p) if *p > 0.0 => Geometry::Circle { period: *p },
                Some(p) => {
                    return Err(Error::Config(format!(
                        "constant_sigma_free: period must be positive, got {p}"
                    )))
                }
                None => Geometry::Line,
            };
            Ok(ModelSpec {
                name: name.to_string(),
                drift: Drift::Zero,
                kernel: Kernel::Zero,
                sigma: Sigma::Constant(sigma),
                geometry,
                lip_drift: 0.0,
                lip_kernel: 0.0,
                lip_sigma: 0.0,
                gamma_sup: 0.0,
                sigma_bounds: (sigma, sigma),
            })
        }
        other => Err(Error::Config(format!("unknown builtin model `{other}`"))),
    }
}

/// A single failed check found by [`validate_model`].
#[derive(Clone, Debug)]
pub struct Violation {
    pub check: String,
    /// Witness point; second coordinate populated for two-argument checks.
    pub witness: (f64, Option<f64>),
    pub observed: f64,
    pub bound: f64,
}

const PERIODIC_TOL: f64 = 1e-12;

/// Statistical validation of a model's declared constants.
///
/// Samples `n_samples` points (pairs for two-argument checks) uniformly in
/// `sample_box` using a counter-based stream, so the report is a pure
/// function of the seed. Violations are returned as data; an empty vector
/// means every sampled check passed.
pub fn validate_model(
    spec: &ModelSpec,
    n_samples: usize,
    sample_box: (f64, f64),
    seed: u64,
) -> Vec<Violation> {
    assert!(n_samples >= 1, "n_samples must be >= 1");
    let (lo, hi) = sample_box;
    assert!(hi > lo, "sample box must be nonempty");

    let span = hi - lo;
    let at = |k: u64, lane: u64| lo + span * rng::uniform(rng::hash3(seed ^ domain::VALIDATE, k, lane));
    let mut out = Vec::new();

    let mut sigma_ref: Option<f64> = None;
    for k in 0..n_samples as u64 {
        let x = at(k, 0);
        let y = at(k, 1);

        let g = spec.kernel.eval(x, y);
        if g.abs() > spec.gamma_sup {
            out.push(Violation {
                check: "gamma_sup".into(),
                witness: (x, Some(y)),
                observed: g.abs(),
                bound: spec.gamma_sup,
            });
        }

        let s = spec.sigma.eval(x);
        let (s_lo, s_hi) = spec.sigma_bounds;
        if s_lo > 0.0 && (s < s_lo || s > s_hi) {
            out.push(Violation {
                check: "sigma_bounds".into(),
                witness: (x, None),
                observed: s,
                bound: if s < s_lo { s_lo } else { s_hi },
            });
        }
        if spec.sigma.is_constant() {
            match sigma_ref {
                None => sigma_ref = Some(s),
                Some(r) if s != r => out.push(Violation {
                    check: "sigma_constant".into(),
                    witness: (x, None),
                    observed: s,
                    bound: r,
                }),
                _ => {}
            }
        } else if s.abs() < 1e-12 && s_lo <= 0.0 {
            // Non-constant diffusion touching zero: flagged so callers can
            // refuse elliptic-only diagnostics.
            out.push(Violation {
                check: "sigma_degenerate_nonconstant".into(),
                witness: (x, None),
                observed: s,
                bound: 0.0,
            });
        }

        if let Geometry::Circle { period } = spec.geometry {
            let checks = [
                ("periodic_drift", spec.drift.eval(x + period) - spec.drift.eval(x)),
                ("periodic_sigma", spec.sigma.eval(x + period) - spec.sigma.eval(x)),
                (
                    "periodic_kernel",
                    spec.kernel.eval(x + period, y) - spec.kernel.eval(x, y),
                ),
            ];
            for (name, gap) in checks {
                if gap.abs() > PERIODIC_TOL {
                    out.push(Violation {
                        check: name.into(),
                        witness: (x, Some(y)),
                        observed: gap.abs(),
                        bound: PERIODIC_TOL,
                    });
                }
            }
        }

        // Lipschitz spot checks against a second sampled point.
        let x2 = at(k, 2);
        let y2 = at(k, 3);
        let dx = (x - x2).abs();
        if dx > 1e-9 {
            let df = (spec.drift.eval(x) - spec.drift.eval(x2)).abs();
            if df > spec.lip_drift * dx * (1.0 + 1e-9) {
                out.push(Violation {
                    check: "lipschitz_drift".into(),
                    witness: (x, Some(x2)),
                    observed: df / dx,
                    bound: spec.lip_drift,
                });
            }
            let ds = (spec.sigma.eval(x) - spec.sigma.eval(x2)).abs();
            if ds > spec.lip_sigma * dx * (1.0 + 1e-9) {
                out.push(Violation {
                    check: "lipschitz_sigma".into(),
                    witness: (x, Some(x2)),
                    observed: ds / dx,
                    bound: spec.lip_sigma,
                });
            }
        }
        let dpair = (x - x2).abs() + (y - y2).abs();
        if dpair > 1e-9 {
            let dg = (spec.kernel.eval(x, y) - spec.kernel.eval(x2, y2)).abs();
            if dg > spec.lip_kernel * dpair * (1.0 + 1e-9) {
                out.push(Violation {
                    check: "lipschitz_kernel".into(),
                    witness: (x, Some(y)),
                    observed: dg / dpair,
                    bound: spec.lip_kernel,
                });
            }
        }
    }
    out
}
