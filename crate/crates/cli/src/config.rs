//! TOML experiment configuration and its translation into core types.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use ermf::model::{builtin_model, Geometry, ModelSpec};
use ermf::pde::{DensityGrid, GridDomain, PdeConfig, Scheme};
use ermf::sweep::Schedule;
use ermf::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: ModelSection,
    pub graph: GraphSection,
    pub sweep: SweepSection,
    pub sim: SimSection,
    pub pde: PdeSection,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default)]
    pub ldp: LdpSection,
    #[serde(default)]
    pub graph_check: GraphCheckSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    /// `fixed`, `c_log_n_over_n` or `c_over_sqrt_n`.
    pub schedule: String,
    pub p: Option<f64>,
    pub c: Option<f64>,
    #[serde(default = "default_true")]
    pub self_loops: bool,
    /// Edge-list file replacing ER sampling (simulate and graph-check).
    pub import: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub n: Vec<usize>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Alternative to `seeds`: use seeds `1..=replicas`.
    pub replicas: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub t: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSection {
    pub m: usize,
    pub dt: f64,
    /// `explicit` or `semi_implicit` (long spellings accepted).
    #[serde(default = "default_scheme")]
    pub scheme: String,
    /// Truncation box for line-geometry models.
    #[serde(rename = "box")]
    pub box_: Option<[f64; 2]>,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Horizon; defaults to the sim horizon.
    pub t: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    /// `uniform` (default), `von_mises`, `gaussian`, or `two_cluster`.
    #[serde(default)]
    pub kind: Option<String>,
    pub kappa: Option<f64>,
    pub center: Option<f64>,
    pub mean: Option<f64>,
    pub var: Option<f64>,
    pub centers: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpSection {
    pub graph_replicas: usize,
    pub path_replicas: usize,
    /// Optional schedule constant used only by ldp-check.
    pub c: Option<f64>,
}

impl Default for LdpSection {
    fn default() -> Self {
        LdpSection {
            graph_replicas: 50,
            path_replicas: 20,
            c: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphCheckSection {
    pub k: f64,
    pub replicas: usize,
}

impl Default for GraphCheckSection {
    fn default() -> Self {
        GraphCheckSection {
            k: 4.0,
            replicas: 200,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_out_dir(),
            formats: default_formats(),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_stride() -> usize {
    100
}

fn default_scheme() -> String {
    "explicit".into()
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|e| Error::Parse(format!("config is not UTF-8: {e}")))?;
        let cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok((cfg, bytes))
    }

    fn validate(&self) -> Result<()> {
        if self.sweep.n.is_empty() {
            return Err(Error::Config("sweep.n must not be empty".into()));
        }
        if self.seeds().is_empty() {
            return Err(Error::Config(
                "provide sweep.seeds or a positive sweep.replicas".into(),
            ));
        }
        let schedule = self.schedule()?;
        for &n in &self.sweep.n {
            schedule.p(n)?;
        }
        if !(self.sim.dt > 0.0 && self.sim.t > 0.0) {
            return Err(Error::Config("sim.dt and sim.t must be positive".into()));
        }
        self.scheme()?;
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        if !self.sweep.seeds.is_empty() {
            self.sweep.seeds.clone()
        } else {
            (1..=self.sweep.replicas.unwrap_or(0) as u64).collect()
        }
    }

    pub fn model(&self) -> Result<ModelSpec> {
        builtin_model(&self.model.name, &self.model.params)
    }

    pub fn schedule(&self) -> Result<Schedule> {
        match self.graph.schedule.as_str() {
            "fixed" => {
                let p = self.graph.p.ok_or_else(|| {
                    Error::Config("graph.schedule = \"fixed\" needs graph.p".into())
                })?;
                Ok(Schedule::Fixed { p })
            }
            "c_log_n_over_n" => Ok(Schedule::CLogNOverN {
                c: self.graph.c.unwrap_or(2.0),
            }),
            "c_over_sqrt_n" => Ok(Schedule::COverSqrtN {
                c: self.graph.c.unwrap_or(2.0),
            }),
            other => Err(Error::Config(format!(
                "unknown graph.schedule `{other}` (fixed | c_log_n_over_n | c_over_sqrt_n)"
            ))),
        }
    }

    pub fn scheme(&self) -> Result<Scheme> {
        match self.pde.scheme.as_str() {
            "explicit" | "upwind-explicit" => Ok(Scheme::ExplicitUpwind),
            "semi_implicit" | "upwind-semi-implicit-diffusion" => Ok(Scheme::SemiImplicitDiffusion),
            other => Err(Error::Config(format!(
                "unknown pde.scheme `{other}` (explicit | semi_implicit)"
            ))),
        }
    }

    pub fn grid_domain(&self, model: &ModelSpec) -> Result<GridDomain> {
        match model.geometry {
            Geometry::Circle { period } => Ok(GridDomain::Circle { period }),
            Geometry::Line => {
                let b = self.pde.box_.ok_or_else(|| {
                    Error::Config("line-geometry models need pde.box = [lo, hi]".into())
                })?;
                if !(b[1] > b[0]) {
                    return Err(Error::Config("pde.box must satisfy lo < hi".into()));
                }
                Ok(GridDomain::Box { lo: b[0], hi: b[1] })
            }
        }
    }

    pub fn pde_config(&self, t: f64) -> Result<PdeConfig> {
        Ok(PdeConfig {
            m: self.pde.m,
            dt: self.pde.dt,
            t: self.pde.t.unwrap_or(t),
            scheme: self.scheme()?,
            store_stride: self.pde.stride,
        })
    }

    /// Initial density for everything except the `two_cluster` assignment.
    pub fn mu0(&self, model: &ModelSpec) -> Result<DensityGrid> {
        let domain = self.grid_domain(model)?;
        let kind = self.init.kind.as_deref().unwrap_or("uniform");
        match kind {
            "uniform" => DensityGrid::uniform(domain, self.pde.m),
            "von_mises" => {
                if !domain.is_circle() {
                    return Err(Error::Config("init.kind = von_mises needs circle geometry".into()));
                }
                let kappa = self.init.kappa.unwrap_or(2.0);
                let center = self.init.center.unwrap_or(std::f64::consts::PI);
                DensityGrid::from_fn(domain, self.pde.m, |x| (kappa * (x - center).cos()).exp())
            }
            "gaussian" => {
                let mean = self.init.mean.unwrap_or(0.0);
                let var = self.init.var.unwrap_or(1.0);
                if !(var > 0.0) {
                    return Err(Error::Config("init.var must be positive".into()));
                }
                DensityGrid::from_fn(domain, self.pde.m, |x| {
                    (-(x - mean) * (x - mean) / (2.0 * var)).exp()
                })
            }
            "two_cluster" => Err(Error::Config(
                "init.kind = two_cluster is an explicit particle assignment; it is only valid for `simulate`"
                    .into(),
            )),
            other => Err(Error::Config(format!("unknown init.kind `{other}`"))),
        }
    }

    pub fn wants(&self, format: &str) -> bool {
        self.output.formats.iter().any(|f| f == format)
    }
}
