//! Run configuration files.
//!
//! The format is INI-like: `[section]` headers, `key = value` lines, `#`
//! or `;` comments, expressions in double quotes and lists separated by
//! commas. Unknown sections and keys are errors.
//!
//! ```
//! use kld::config::RunConfig;
//!
//! let text = r#"
//! [model]
//! kind = interval
//! M = "1/2"
//! gamma = "0.2*(1-v^2)"
//! alpha = 0.6
//!
//! [grids]
//! nv = 64
//! "#;
//! let cfg = RunConfig::parse(text).unwrap();
//! assert_eq!(cfg.grids.nv, 64);
//! assert!(RunConfig::parse(&text.replace("gamma", "gama")).is_err());
//! ```

use ini::{Ini, ParseOption};
use std::path::Path;

use crate::expr::{parse, Expr, Var};
use crate::hamiltonian::{PAxis, PGrid, SpectralControls};
use crate::model::{Kind, ModelError, Vec3, VelocityModel};

/// Smallest accepted grid size.
pub const MIN_GRID: usize = 8;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}, column {col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("key `{0}` outside any section")]
    Orphan(String),
    #[error("unknown key `{key}` in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("key `{key}` given twice in [{section}]")]
    Duplicate { section: String, key: String },
    #[error("missing section [{0}]")]
    MissingSection(&'static str),
    #[error("missing key `{key}` in [{section}]")]
    Missing { section: &'static str, key: &'static str },
    #[error("`{key}`: {message}")]
    Value { key: String, message: String },
    #[error("{key} below minimum {min}")]
    Below { key: &'static str, min: usize },
    #[error("`{0}` must be positive")]
    NonPositive(&'static str),
    #[error("model: {0}")]
    Model(#[from] ModelError),
}

/// Velocity set, jump density and force field.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBlock {
    pub kind: Kind,
    pub m: Expr,
    /// One component, or `(theta, phi)` components on the sphere.
    pub gamma: Vec<Expr>,
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridBlock {
    /// Velocity nodes (along `theta` on the sphere).
    pub nv: usize,
    /// Rings in `phi` on the sphere.
    pub n_phi: Option<usize>,
    /// Space nodes.
    pub nx: usize,
    /// Period of the space domain.
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianBlock {
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
    pub p_steps: Vec<usize>,
    pub h_tol: f64,
    pub i_tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KineticBlock {
    pub eps: Vec<f64>,
    /// Largest time step; defaults to the CFL limit.
    pub dt: Option<f64>,
    pub t_final: f64,
    pub phi0: Expr,
    /// Overrides of the grid sizes for kinetic runs.
    pub nv: Option<usize>,
    pub nx: Option<usize>,
    pub snapshots: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HjBlock {
    /// Largest time step; defaults to `dx / (2 max |v|)`.
    pub dt: Option<f64>,
    pub t_final: f64,
    /// Defaults to the kinetic initial potential.
    pub phi0: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulateBlock {
    pub n: usize,
    pub t_final: f64,
    /// Multiples of `p_direction` at which the cumulant function is estimated.
    pub p_list: Vec<f64>,
    pub p_direction: Vec3,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub grids: GridBlock,
    pub hamiltonian: Option<HamiltonianBlock>,
    pub kinetic: Option<KineticBlock>,
    pub hj: Option<HjBlock>,
    pub simulate: Option<SimulateBlock>,
}

const SECTIONS: [(&str, &[&str]); 6] = [
    ("model", &["kind", "M", "gamma", "gamma_theta", "gamma_phi", "alpha"]),
    ("grids", &["nv", "n_phi", "nx", "L"]),
    ("hamiltonian", &["p_min", "p_max", "p_steps", "h_tol", "i_tol"]),
    ("kinetic", &["eps", "dt", "T", "phi0", "nv", "nx", "snapshots"]),
    ("hj", &["dt", "T", "phi0"]),
    ("simulate", &["n", "t_final", "p_list", "p_direction", "seed"]),
];

/// Values of one section.
struct Section<'a> {
    name: &'static str,
    props: &'a ini::Properties,
}

impl Section<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.props.get(key).map(str::trim)
    }

    fn required(&self, key: &'static str) -> Result<&str, ConfigError> {
        self.raw(key).ok_or(ConfigError::Missing {
            section: self.name,
            key,
        })
    }

    fn bad(&self, key: &str, message: impl ToString) -> ConfigError {
        ConfigError::Value {
            key: format!("{}.{key}", self.name),
            message: message.to_string(),
        }
    }

    fn number(&self, key: &'static str, text: &str) -> Result<f64, ConfigError> {
        let x: f64 = text.trim().parse().map_err(|_| self.bad(key, format!("`{text}` is not a number")))?;
        if x.is_finite() {
            Ok(x)
        } else {
            Err(self.bad(key, "not finite"))
        }
    }

    fn f64_opt(&self, key: &'static str) -> Result<Option<f64>, ConfigError> {
        self.raw(key).map(|t| self.number(key, t)).transpose()
    }

    fn f64(&self, key: &'static str) -> Result<f64, ConfigError> {
        self.number(key, self.required(key)?)
    }

    fn positive(&self, key: &'static str) -> Result<f64, ConfigError> {
        let x = self.f64(key)?;
        if x > 0.0 {
            Ok(x)
        } else {
            Err(ConfigError::NonPositive(key))
        }
    }

    fn positive_opt(&self, key: &'static str) -> Result<Option<f64>, ConfigError> {
        match self.f64_opt(key)? {
            Some(x) if x <= 0.0 => Err(ConfigError::NonPositive(key)),
            x => Ok(x),
        }
    }

    fn list(&self, key: &'static str, text: &str) -> Result<Vec<f64>, ConfigError> {
        text.split(',').map(|t| self.number(key, t)).collect()
    }

    fn count(&self, key: &'static str, text: &str) -> Result<usize, ConfigError> {
        text.trim()
            .parse()
            .map_err(|_| self.bad(key, format!("`{text}` is not a non-negative integer")))
    }

    fn grid_size(&self, key: &'static str) -> Result<Option<usize>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(t) => {
                let n = self.count(key, t)?;
                if n < MIN_GRID {
                    Err(ConfigError::Below { key, min: MIN_GRID })
                } else {
                    Ok(Some(n))
                }
            }
        }
    }

    fn expr(&self, key: &'static str, text: &str) -> Result<Expr, ConfigError> {
        parse(text).map_err(|e| self.bad(key, e))
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let opt = ParseOption {
            enabled_quote: true,
            enabled_escape: false,
            ..ParseOption::default()
        };
        let ini = Ini::load_from_str_opt(text, opt).map_err(|e| ConfigError::Syntax {
            line: e.line + 1,
            col: e.col + 1,
            message: e.msg.to_string(),
        })?;
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(ConfigError::Orphan(key.to_string()));
                }
                continue;
            };
            let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| *s == name) else {
                return Err(ConfigError::UnknownSection(name.to_string()));
            };
            let mut seen: Vec<&str> = Vec::new();
            for (key, _) in props.iter() {
                if !keys.contains(&key) {
                    return Err(ConfigError::UnknownKey {
                        section: name.to_string(),
                        key: key.to_string(),
                    });
                }
                if seen.contains(&key) {
                    return Err(ConfigError::Duplicate {
                        section: name.to_string(),
                        key: key.to_string(),
                    });
                }
                seen.push(key);
            }
        }
        if ini.sections().flatten().filter(|s| *s == "model").count() > 1 {
            return Err(ConfigError::Duplicate {
                section: "model".into(),
                key: "[model]".into(),
            });
        }
        let section = |name: &'static str| {
            ini.section(Some(name)).map(|props| Section { name, props })
        };
        let model = parse_model(&section("model").ok_or(ConfigError::MissingSection("model"))?)?;
        let grids = parse_grids(&section("grids").ok_or(ConfigError::MissingSection("grids"))?)?;
        let cfg = RunConfig {
            hamiltonian: section("hamiltonian").map(|s| parse_hamiltonian(&s)).transpose()?,
            kinetic: section("kinetic").map(|s| parse_kinetic(&s)).transpose()?,
            hj: section("hj").map(|s| parse_hj(&s)).transpose()?,
            simulate: section("simulate").map(|s| parse_simulate(&s)).transpose()?,
            model,
            grids,
        };
        cfg.velocity_model()?;
        Ok(cfg)
    }

    pub fn velocity_model(&self) -> Result<VelocityModel, ModelError> {
        let m = &self.model;
        VelocityModel::new(m.kind, m.m.clone(), m.gamma.clone(), m.alpha)
    }

    /// Spectral solver controls with the configured tolerances.
    pub fn spectral_controls(&self) -> SpectralControls {
        let mut c = SpectralControls::default();
        if let Some(h) = &self.hamiltonian {
            c.h_tol = h.h_tol;
            c.i_tol = h.i_tol;
        }
        c
    }

    /// Initial potential of `[hj]`, else of `[kinetic]`.
    pub fn hj_phi0(&self) -> Option<&Expr> {
        self.hj
            .as_ref()
            .and_then(|h| h.phi0.as_ref())
            .or(self.kinetic.as_ref().map(|k| &k.phi0))
    }

    /// The momentum grid of the `[hamiltonian]` section.
    pub fn p_grid(&self) -> Option<PGrid> {
        self.hamiltonian.as_ref().map(|h| {
            PGrid::new(
                (0..h.p_min.len())
                    .map(|k| PAxis::new(h.p_min[k], h.p_max[k], h.p_steps[k]))
                    .collect(),
            )
        })
    }
}

fn parse_model(s: &Section) -> Result<ModelBlock, ConfigError> {
    let kind_text = s.required("kind")?;
    let kind = Kind::from_name(kind_text)
        .ok_or_else(|| s.bad("kind", format!("`{kind_text}` is not one of interval, ring, sphere")))?;
    let m = s.expr("M", s.required("M")?)?;
    let gamma = match kind {
        Kind::Interval | Kind::Ring => {
            for k in ["gamma_theta", "gamma_phi"] {
                if s.raw(k).is_some() {
                    return Err(s.bad(k, format!("only sphere models take `{k}`; use `gamma`")));
                }
            }
            vec![s.expr("gamma", s.raw("gamma").unwrap_or("0"))?]
        }
        Kind::Sphere => {
            if s.raw("gamma").is_some() {
                return Err(s.bad("gamma", "sphere models take `gamma_theta` and `gamma_phi`"));
            }
            vec![
                s.expr("gamma_theta", s.raw("gamma_theta").unwrap_or("0"))?,
                s.expr("gamma_phi", s.raw("gamma_phi").unwrap_or("0"))?,
            ]
        }
    };
    Ok(ModelBlock {
        kind,
        m,
        gamma,
        alpha: s.positive_opt("alpha")?,
    })
}

fn parse_grids(s: &Section) -> Result<GridBlock, ConfigError> {
    Ok(GridBlock {
        nv: s.grid_size("nv")?.ok_or(ConfigError::Missing {
            section: "grids",
            key: "nv",
        })?,
        n_phi: s.grid_size("n_phi")?,
        nx: s.grid_size("nx")?.unwrap_or(256),
        length: s.positive_opt("L")?.unwrap_or(1.0),
    })
}

fn parse_hamiltonian(s: &Section) -> Result<HamiltonianBlock, ConfigError> {
    let p_min = s.list("p_min", s.required("p_min")?)?;
    let p_max = s.list("p_max", s.required("p_max")?)?;
    let p_steps = s
        .required("p_steps")?
        .split(',')
        .map(|t| s.count("p_steps", t))
        .collect::<Result<Vec<_>, _>>()?;
    let d = p_min.len();
    if d == 0 || d > 3 || p_max.len() != d || p_steps.len() != d {
        return Err(s.bad("p_min", "p_min, p_max and p_steps need the same length, 1 to 3"));
    }
    for k in 0..d {
        if p_steps[k] == 0 {
            return Err(s.bad("p_steps", "every axis needs at least one node"));
        }
        if p_max[k] < p_min[k] || (p_steps[k] == 1 && p_max[k] != p_min[k]) {
            return Err(s.bad("p_max", format!("axis {k} has an empty or inconsistent range")));
        }
    }
    let defaults = SpectralControls::default();
    Ok(HamiltonianBlock {
        p_min,
        p_max,
        p_steps,
        h_tol: s.positive_opt("h_tol")?.unwrap_or(defaults.h_tol),
        i_tol: s.positive_opt("i_tol")?.unwrap_or(defaults.i_tol),
    })
}

fn parse_kinetic(s: &Section) -> Result<KineticBlock, ConfigError> {
    let eps = s.list("eps", s.required("eps")?)?;
    if eps.iter().any(|&e| e <= 0.0) {
        return Err(ConfigError::NonPositive("eps"));
    }
    let phi0 = parse_phi0(s)?.unwrap_or(Expr::Num(0.0));
    let snapshots = match s.raw("snapshots") {
        Some(t) => s.list("snapshots", t)?,
        None => Vec::new(),
    };
    Ok(KineticBlock {
        eps,
        dt: s.positive_opt("dt")?,
        t_final: s.positive("T")?,
        phi0,
        nv: s.grid_size("nv")?,
        nx: s.grid_size("nx")?,
        snapshots,
    })
}

fn parse_phi0(s: &Section) -> Result<Option<Expr>, ConfigError> {
    let Some(text) = s.raw("phi0") else {
        return Ok(None);
    };
    let phi0 = s.expr("phi0", text)?;
    if let Some(v) = phi0.free_vars().into_iter().find(|&v| v != Var::X) {
        return Err(s.bad("phi0", format!("the initial potential may only use `x`, found `{}`", v.name())));
    }
    Ok(Some(phi0))
}

fn parse_hj(s: &Section) -> Result<HjBlock, ConfigError> {
    Ok(HjBlock {
        dt: s.positive_opt("dt")?,
        t_final: s.positive("T")?,
        phi0: parse_phi0(s)?,
    })
}

fn parse_simulate(s: &Section) -> Result<SimulateBlock, ConfigError> {
    let dir = match s.raw("p_direction") {
        Some(t) => s.list("p_direction", t)?,
        None => vec![1.0],
    };
    if dir.is_empty() || dir.len() > 3 {
        return Err(s.bad("p_direction", "needs 1 to 3 components"));
    }
    let mut p_direction = [0.0; 3];
    p_direction[..dir.len()].copy_from_slice(&dir);
    Ok(SimulateBlock {
        n: s.count("n", s.required("n")?)?,
        t_final: s.positive("t_final")?,
        p_list: match s.raw("p_list") {
            Some(t) => s.list("p_list", t)?,
            None => Vec::new(),
        },
        p_direction,
        seed: s
            .raw("seed")
            .map(|t| t.parse().map_err(|_| s.bad("seed", format!("`{t}` is not an unsigned integer"))))
            .transpose()?
            .unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "[model]\nkind = interval\nM = \"1/2\"\ngamma = \"0\"\n\n[grids]\nnv = 16\n";

    #[test]
    fn minimal_config_loads() {
        let c = RunConfig::parse(BASE).unwrap();
        assert_eq!(c.model.kind, Kind::Interval);
        assert!(c.velocity_model().unwrap().force_free());
        assert_eq!(c.grids.nx, 256);
        assert!(c.hamiltonian.is_none());
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::parse(&BASE.replace("gamma", "gama")).unwrap_err();
        assert!(e.to_string().contains("gama"), "{e}");
    }

    #[test]
    fn small_grids_are_rejected() {
        let e = RunConfig::parse(&BASE.replace("nv = 16", "nv = 4")).unwrap_err();
        assert_eq!(e.to_string(), "nv below minimum 8");
    }

    #[test]
    fn expression_errors_carry_the_key() {
        let e = RunConfig::parse(&BASE.replace("\"0\"", "\"0.2*(1-v^\"")).unwrap_err();
        assert!(e.to_string().starts_with("`model.gamma`"), "{e}");
    }

    #[test]
    fn sections_parse() {
        let text = format!(
            "{BASE}\n[hamiltonian]\np_min = -5\np_max = 5\np_steps = 101\n\n[kinetic]\neps = 0.4, 0.2\nT = 0.5\nphi0 = \"0.5*(1-cos(2*pi*x))\"\n\n[simulate]\nn = 1000\nt_final = 10\np_list = 0, 0.5\nseed = 7\n"
        );
        let c = RunConfig::parse(&text).unwrap();
        assert_eq!(c.p_grid().unwrap().len(), 101);
        assert_eq!(c.kinetic.unwrap().eps, vec![0.4, 0.2]);
        assert_eq!(c.simulate.unwrap().seed, 7);
        let bad = text.replace("phi0 = \"0.5*(1-cos(2*pi*x))\"", "phi0 = \"v\"");
        assert!(RunConfig::parse(&bad).is_err());
    }

    #[test]
    fn non_positive_values_are_rejected() {
        let text = format!("{BASE}\n[hj]\nT = -1\n");
        assert_eq!(RunConfig::parse(&text).unwrap_err(), ConfigError::NonPositive("T"));
    }
}
