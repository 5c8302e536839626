//! Velocity sets, jump densities and force fields.
//!
//! A [`VelocityModel`] is one of three hard-coded velocity manifolds with its
//! reference measure:
//!
//! | kind       | chart                  | measure                         |
//! |------------|------------------------|---------------------------------|
//! | `Interval` | `v` in `[-1, 1]`       | Lebesgue, total mass 2          |
//! | `Ring`     | `theta` in `[0, 2pi)`  | normalized arc length           |
//! | `Sphere`   | `(theta, phi)`         | normalized surface measure      |
//!
//! On the sphere the force field is given by its components on the unit
//! frame `(e_theta, e_phi)`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;

use crate::expr::{EvalError, Expr, Program, Var};
use crate::quadrature::gauss_legendre;

/// Chart coordinates. Interval: `[v, 0]`; Ring: `[theta, 0]`; Sphere:
/// `[theta, phi]`.
pub type Chart = [f64; 2];

/// A point of the ambient space. Unused trailing components are zero.
pub type Vec3 = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    Interval,
    Ring,
    Sphere,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Interval => "interval",
            Kind::Ring => "ring",
            Kind::Sphere => "sphere",
        }
    }

    pub fn from_name(s: &str) -> Option<Kind> {
        match s {
            "interval" => Some(Kind::Interval),
            "ring" => Some(Kind::Ring),
            "sphere" => Some(Kind::Sphere),
            _ => None,
        }
    }

    /// Dimension of the ambient space.
    pub fn dim(self) -> usize {
        match self {
            Kind::Interval => 1,
            Kind::Ring => 2,
            Kind::Sphere => 3,
        }
    }

    /// Number of chart coordinates.
    pub fn chart_dim(self) -> usize {
        match self {
            Kind::Sphere => 2,
            _ => 1,
        }
    }

    /// Total mass of the reference measure.
    pub fn measure(self) -> f64 {
        match self {
            Kind::Interval => 2.0,
            _ => 1.0,
        }
    }

    /// Chart variables expressions may use.
    pub fn variables(self) -> &'static [Var] {
        match self {
            Kind::Interval => &[Var::V],
            Kind::Ring => &[Var::Theta],
            Kind::Sphere => &[Var::Theta, Var::Phi],
        }
    }

    /// Number of force components.
    pub fn gamma_components(self) -> usize {
        self.chart_dim()
    }

    /// Largest speed `max |v|` over the velocity set.
    pub fn max_speed(self) -> f64 {
        1.0
    }

    fn slots(self, c: Chart) -> [f64; 4] {
        match self {
            Kind::Interval => [c[0], 0.0, 0.0, 0.0],
            Kind::Ring => [0.0, c[0], 0.0, 0.0],
            Kind::Sphere => [0.0, c[0], c[1], 0.0],
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("{kind} models need {expected} force component(s), got {found}")]
    GammaArity {
        kind: Kind,
        expected: usize,
        found: usize,
    },
    #[error("`{var}` is not a chart variable of a {kind} model (in {what})")]
    ForeignVariable {
        kind: Kind,
        var: &'static str,
        what: &'static str,
    },
    #[error("alpha must be positive, got {0}")]
    Alpha(f64),
    #[error("chart point {point:?} outside the {kind} chart")]
    OutOfChart { kind: Kind, point: Chart },
    #[error("evaluating {what} at {point:?}: {source}")]
    Eval {
        what: &'static str,
        point: Chart,
        source: EvalError,
    },
    #[error("divergence of the force field has no finite limit at the pole {0:?}")]
    PoleDivergence(Chart),
    #[error("grid resolution {0} below minimum 8")]
    Resolution(usize),
}

/// Velocity set, jump density `M`, force field and divergence constant.
#[derive(Clone, Debug)]
pub struct VelocityModel {
    kind: Kind,
    m: Program,
    gamma: Vec<Program>,
    alpha: f64,
    alpha_given: bool,
    force_free: bool,
}

/// Finite-difference step for the divergence.
const FD_STEP: f64 = 1e-5;

impl VelocityModel {
    /// Builds a model. When `alpha` is `None` it is estimated as the minimum of
    /// `1 + div Gamma` on a validation grid.
    pub fn new(
        kind: Kind,
        m: Expr,
        gamma: Vec<Expr>,
        alpha: Option<f64>,
    ) -> Result<Self, ModelError> {
        if gamma.len() != kind.gamma_components() {
            return Err(ModelError::GammaArity {
                kind,
                expected: kind.gamma_components(),
                found: gamma.len(),
            });
        }
        let allowed = kind.variables();
        let check = |e: &Expr, what| {
            for v in e.free_vars() {
                if !allowed.contains(&v) {
                    return Err(ModelError::ForeignVariable {
                        kind,
                        var: v.name(),
                        what,
                    });
                }
            }
            Ok(())
        };
        check(&m, "M")?;
        for g in &gamma {
            check(g, "Gamma")?;
        }
        if let Some(a) = alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(ModelError::Alpha(a));
            }
        }
        let mut model = VelocityModel {
            kind,
            m: m.compile(),
            gamma: gamma.iter().map(Expr::compile).collect(),
            alpha: alpha.unwrap_or(f64::NAN),
            alpha_given: alpha.is_some(),
            force_free: false,
        };
        let grid = model.validation_grid();
        model.force_free = gamma.iter().all(Expr::is_literal_zero)
            || grid.nodes.iter().all(|&c| {
                model
                    .gamma_chart(c)
                    .map(|g| g.iter().all(|x| x.abs() <= 1e-14))
                    .unwrap_or(false)
            });
        if alpha.is_none() {
            let mut lo = f64::INFINITY;
            for &c in &grid.nodes {
                if let Ok(d) = model.divergence_gamma(c) {
                    lo = lo.min(1.0 + d);
                }
            }
            model.alpha = lo;
        }
        Ok(model)
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Whether `alpha` came from the user rather than being estimated.
    pub fn alpha_given(&self) -> bool {
        self.alpha_given
    }

    pub fn m_expr(&self) -> &Expr {
        self.m.expr()
    }

    pub fn gamma_exprs(&self) -> Vec<&Expr> {
        self.gamma.iter().map(Program::expr).collect()
    }

    /// True when the force field vanishes identically.
    pub fn force_free(&self) -> bool {
        self.force_free
    }

    /// Jump density at a chart point.
    pub fn m(&self, c: Chart) -> Result<f64, ModelError> {
        self.m
            .eval_slots(&self.kind.slots(c))
            .map_err(|source| ModelError::Eval {
                what: "M",
                point: c,
                source,
            })
    }

    /// Jump density, NaN where the expression is undefined. For inner loops
    /// on validated models.
    #[inline]
    pub fn m_at(&self, c: Chart) -> f64 {
        self.m.eval_slots(&self.kind.slots(c)).unwrap_or(f64::NAN)
    }

    /// Force components in the chart frame.
    pub fn gamma_chart(&self, c: Chart) -> Result<[f64; 2], ModelError> {
        let slots = self.kind.slots(c);
        let mut out = [0.0; 2];
        for (o, g) in out.iter_mut().zip(&self.gamma) {
            *o = g.eval_slots(&slots).map_err(|source| ModelError::Eval {
                what: "Gamma",
                point: c,
                source,
            })?;
        }
        Ok(out)
    }

    #[inline]
    pub fn gamma_at(&self, c: Chart) -> [f64; 2] {
        if self.force_free {
            return [0.0; 2];
        }
        self.gamma_chart(c).unwrap_or([f64::NAN; 2])
    }

    /// Chart coordinates are inside their ranges (angles may be any real).
    pub fn check_chart(&self, c: Chart) -> Result<(), ModelError> {
        let ok = match self.kind {
            Kind::Interval => (-1.0..=1.0).contains(&c[0]),
            Kind::Ring => c[0].is_finite(),
            Kind::Sphere => c[0].is_finite() && (0.0..=PI).contains(&c[1]),
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::OutOfChart {
                kind: self.kind,
                point: c,
            })
        }
    }

    /// The embedded velocity vector.
    pub fn embed(&self, c: Chart) -> Result<Vec3, ModelError> {
        self.check_chart(c)?;
        Ok(embed(self.kind, c))
    }

    /// Force field as an ambient vector.
    #[inline]
    pub fn gamma_embedded(&self, c: Chart) -> Vec3 {
        let g = self.gamma_at(c);
        frame_vector(self.kind, c, g)
    }

    /// Ambient force field at an ambient point of the manifold.
    #[inline]
    pub fn gamma_at_point(&self, y: Vec3) -> Vec3 {
        self.gamma_embedded(chart_of(self.kind, y))
    }

    /// `div Gamma` by central differences with step `1e-5`, one-sided at the
    /// interval ends and as a limit at the sphere poles.
    pub fn divergence_gamma(&self, c: Chart) -> Result<f64, ModelError> {
        self.check_chart(c)?;
        if self.force_free {
            return Ok(0.0);
        }
        let h = FD_STEP;
        match self.kind {
            Kind::Interval => {
                let g = |v: f64| self.gamma_chart([v, 0.0]).map(|g| g[0]);
                let v = c[0];
                if v + h > 1.0 {
                    Ok((3.0 * g(v)? - 4.0 * g(v - h)? + g(v - 2.0 * h)?) / (2.0 * h))
                } else if v - h < -1.0 {
                    Ok((-3.0 * g(v)? + 4.0 * g(v + h)? - g(v + 2.0 * h)?) / (2.0 * h))
                } else {
                    Ok((g(v + h)? - g(v - h)?) / (2.0 * h))
                }
            }
            Kind::Ring => {
                let g = |t: f64| self.gamma_chart([t, 0.0]).map(|g| g[0]);
                Ok((g(c[0] + h)? - g(c[0] - h)?) / (2.0 * h))
            }
            Kind::Sphere => {
                let pole_gap = 1e-4;
                if c[1] < pole_gap || c[1] > PI - pole_gap {
                    let towards = if c[1] < FRAC_PI_2 { 1.0 } else { -1.0 };
                    let base = if c[1] < FRAC_PI_2 { 0.0 } else { PI };
                    let d1 = self.sphere_div([c[0], base + towards * pole_gap])?;
                    let d2 = self.sphere_div([c[0], base + towards * 2.0 * pole_gap])?;
                    let limit = 2.0 * d1 - d2;
                    if !limit.is_finite() || (d1 - d2).abs() > 1e-2 * (1.0 + d1.abs()) {
                        return Err(ModelError::PoleDivergence(c));
                    }
                    Ok(limit)
                } else {
                    self.sphere_div(c)
                }
            }
        }
    }

    fn sphere_div(&self, c: Chart) -> Result<f64, ModelError> {
        let h = FD_STEP;
        let [t, p] = c;
        let a = |t: f64| self.gamma_chart([t, p]).map(|g| g[0]);
        let bs = |p: f64| self.gamma_chart([t, p]).map(|g| g[1] * p.sin());
        let da = (a(t + h)? - a(t - h)?) / (2.0 * h);
        let dbs = (bs(p + h)? - bs(p - h)?) / (2.0 * h);
        Ok((da + dbs) / p.sin())
    }

    /// A grid of the default validation resolution.
    pub fn validation_grid(&self) -> VelocityGrid {
        let n = match self.kind {
            Kind::Interval => 2049,
            Kind::Ring => 1024,
            Kind::Sphere => 128,
        };
        make_grid(self.kind, n, None).expect("validation resolution is valid")
    }

    /// Checks the standing assumptions on a grid of `resolution` nodes per
    /// chart dimension.
    pub fn validate(&self, resolution: usize) -> Result<ValidationReport, ModelError> {
        let grid = make_grid(self.kind, resolution, None)?;
        let mut report = ValidationReport::default();
        let mut min_m = f64::INFINITY;
        let mut max_m = f64::NEG_INFINITY;
        let mut integral = 0.0;
        let mut min_div = f64::INFINITY;
        let mut eval_errors = Vec::new();
        for (c, w) in grid.nodes.iter().zip(&grid.weights) {
            match self.m(*c) {
                Ok(m) => {
                    min_m = min_m.min(m);
                    max_m = max_m.max(m);
                    integral += w * m;
                }
                Err(e) => eval_errors.push(e.to_string()),
            }
            match self.divergence_gamma(*c) {
                Ok(d) => min_div = min_div.min(1.0 + d),
                Err(e) => eval_errors.push(e.to_string()),
            }
        }
        let quad_tol = 1e-6;
        report.push(
            "integral_M",
            integral,
            1.0,
            (integral - 1.0).abs() <= quad_tol,
            "integral of M against the reference measure equals 1",
        );
        report.push("min_M", min_m, 0.0, min_m > 0.0, "M is bounded below by a positive constant");
        report.push("max_M", max_m, f64::NAN, max_m.is_finite(), "M is finite");
        let alpha = if self.alpha_given { self.alpha } else { 0.0 };
        report.push(
            "min_1_plus_div_gamma",
            min_div,
            alpha,
            min_div > 0.0 && min_div >= alpha - 1e-8,
            "1 + div Gamma stays above alpha > 0",
        );
        if self.kind == Kind::Interval {
            for (name, v) in [("gamma_at_minus_1", -1.0), ("gamma_at_plus_1", 1.0)] {
                match self.gamma_chart([v, 0.0]) {
                    Ok(g) => report.push(name, g[0], 0.0, g[0].abs() <= 1e-12, "force vanishes on the boundary"),
                    Err(e) => eval_errors.push(e.to_string()),
                }
            }
        }
        report.push(
            "evaluation_errors",
            eval_errors.len() as f64,
            0.0,
            eval_errors.is_empty(),
            eval_errors.first().map(String::as_str).unwrap_or("expressions evaluate everywhere"),
        );
        report.alpha_margin = min_div;
        Ok(report)
    }
}

pub(crate) fn embed(kind: Kind, c: Chart) -> Vec3 {
    match kind {
        Kind::Interval => [c[0], 0.0, 0.0],
        Kind::Ring => [c[0].cos(), c[0].sin(), 0.0],
        Kind::Sphere => {
            let (st, ct) = c[0].sin_cos();
            let (sp, cp) = c[1].sin_cos();
            [sp * ct, sp * st, cp]
        }
    }
}

/// Chart coordinates of an ambient point on (or near) the manifold; angles
/// in `[0, 2pi)`.
pub fn chart_of(kind: Kind, y: Vec3) -> Chart {
    match kind {
        Kind::Interval => [y[0].clamp(-1.0, 1.0), 0.0],
        Kind::Ring => [wrap_angle(y[1].atan2(y[0])), 0.0],
        Kind::Sphere => {
            let r = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
            let theta = if y[0] == 0.0 && y[1] == 0.0 {
                0.0
            } else {
                wrap_angle(y[1].atan2(y[0]))
            };
            [theta, (y[2] / r).clamp(-1.0, 1.0).acos()]
        }
    }
}

/// Ambient vector with frame components `g` at chart point `c`.
#[inline]
pub(crate) fn frame_vector(kind: Kind, c: Chart, g: [f64; 2]) -> Vec3 {
    match kind {
        Kind::Interval => [g[0], 0.0, 0.0],
        Kind::Ring => {
            let (s, co) = c[0].sin_cos();
            [-s * g[0], co * g[0], 0.0]
        }
        Kind::Sphere => {
            let (st, ct) = c[0].sin_cos();
            let (sp, cp) = c[1].sin_cos();
            [
                -st * g[0] + cp * ct * g[1],
                ct * g[0] + cp * st * g[1],
                -sp * g[1],
            ]
        }
    }
}

/// Projects an ambient point back onto the manifold.
#[inline]
pub(crate) fn project(kind: Kind, y: Vec3) -> Vec3 {
    match kind {
        Kind::Interval => [y[0].clamp(-1.0, 1.0), 0.0, 0.0],
        Kind::Ring => {
            let r = y[0].hypot(y[1]);
            [y[0] / r, y[1] / r, 0.0]
        }
        Kind::Sphere => {
            let r = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
            [y[0] / r, y[1] / r, y[2] / r]
        }
    }
}

pub fn wrap_angle(t: f64) -> f64 {
    let w = t.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn dist(a: Vec3, b: Vec3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    dot(d, d).sqrt()
}

#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// One line of a [`ValidationReport`].
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// `min (1 + div Gamma)` on the grid.
    pub alpha_margin: f64,
}

impl ValidationReport {
    fn push(&mut self, name: &'static str, value: f64, threshold: f64, pass: bool, detail: &str) {
        self.checks.push(Check {
            name,
            value,
            threshold,
            pass,
            detail: detail.to_string(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Quadrature nodes on the velocity set.
#[derive(Clone, Debug)]
pub struct VelocityGrid {
    pub kind: Kind,
    /// Chart coordinates, `theta` fastest on the sphere.
    pub nodes: Vec<Chart>,
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
    /// Nodes along the first chart coordinate.
    pub n_a: usize,
    /// Nodes along the second chart coordinate (1 unless Sphere).
    pub n_b: usize,
}

impl VelocityGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Quadrature of nodal values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, f)| w * f).sum()
    }

    /// `phi` values of the sphere rings, ascending.
    pub fn phis(&self) -> Vec<f64> {
        (0..self.n_b).map(|j| self.nodes[j * self.n_a][1]).collect()
    }
}

/// Builds a velocity grid with `resolution` nodes along the first chart
/// coordinate. On the sphere the `phi` direction gets `n_phi` Gauss-Legendre
/// rings in `cos phi`, by default `max(8, resolution / 2)`.
pub fn make_grid(
    kind: Kind,
    resolution: usize,
    n_phi: Option<usize>,
) -> Result<VelocityGrid, ModelError> {
    if resolution < 8 {
        return Err(ModelError::Resolution(resolution));
    }
    let n = resolution;
    let (nodes, weights, n_b): (Vec<Chart>, Vec<f64>, usize) = match kind {
        Kind::Interval => {
            let h = 2.0 / (n - 1) as f64;
            let nodes = (0..n)
                .map(|i| {
                    let v = if i == n - 1 { 1.0 } else { -1.0 + i as f64 * h };
                    [v, 0.0]
                })
                .collect();
            let weights = (0..n)
                .map(|i| if i == 0 || i == n - 1 { h / 2.0 } else { h })
                .collect();
            (nodes, weights, 1)
        }
        Kind::Ring => {
            let nodes = (0..n).map(|i| [TAU * i as f64 / n as f64, 0.0]).collect();
            (nodes, vec![1.0 / n as f64; n], 1)
        }
        Kind::Sphere => {
            let nb = n_phi.unwrap_or((n / 2).max(8));
            if nb < 8 {
                return Err(ModelError::Resolution(nb));
            }
            let (mu, wmu) = gauss_legendre(nb);
            let mut nodes = Vec::with_capacity(n * nb);
            let mut weights = Vec::with_capacity(n * nb);
            // mu descending so phi ascends.
            for j in (0..nb).rev() {
                let phi = mu[j].clamp(-1.0, 1.0).acos();
                for i in 0..n {
                    nodes.push([TAU * i as f64 / n as f64, phi]);
                    weights.push(wmu[j] / (2.0 * n as f64));
                }
            }
            (nodes, weights, nb)
        }
    };
    let points = nodes.iter().map(|&c| embed(kind, c)).collect();
    Ok(VelocityGrid {
        kind,
        nodes,
        points,
        weights,
        n_a: n,
        n_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn interval(m: &str, g: &str) -> VelocityModel {
        VelocityModel::new(Kind::Interval, parse(m).unwrap(), vec![parse(g).unwrap()], None).unwrap()
    }

    fn rotor() -> VelocityModel {
        VelocityModel::new(
            Kind::Sphere,
            parse("1").unwrap(),
            vec![parse("sin(phi)").unwrap(), parse("0").unwrap()],
            None,
        )
        .unwrap()
    }

    #[test]
    fn sphere_embedding() {
        let m = rotor();
        let e = m.embed([0.0, FRAC_PI_2]).unwrap();
        assert!(dist(e, [1.0, 0.0, 0.0]) < 1e-15);
        assert_eq!(m.embed([1.3, 0.0]).unwrap(), [0.0, 0.0, 1.0]);
        assert!(m.embed([0.0, 4.0]).is_err());
    }

    #[test]
    fn interval_embedding_is_identity() {
        let m = interval("1/2", "0");
        assert_eq!(m.embed([0.3, 0.0]).unwrap()[0], 0.3);
        assert!(m.embed([1.5, 0.0]).is_err());
    }

    #[test]
    fn drift_divergence() {
        let m = interval("1/2", "0.2*(1-v^2)");
        assert!((m.divergence_gamma([0.5, 0.0]).unwrap() + 0.2).abs() < 1e-9);
        assert!((m.divergence_gamma([-1.0, 0.0]).unwrap() - 0.4).abs() < 1e-9);
        assert!((m.divergence_gamma([1.0, 0.0]).unwrap() + 0.4).abs() < 1e-9);
    }

    #[test]
    fn rotor_is_divergence_free() {
        let m = rotor();
        for c in [[0.3, 0.7], [2.0, 2.9], [5.0, 0.0], [1.0, PI]] {
            assert!(m.divergence_gamma(c).unwrap().abs() < 1e-8, "{c:?}");
        }
    }

    #[test]
    fn pole_limit_of_radial_field() {
        // b = sin(phi): div = 2 cos(phi), limit 2 at the north pole.
        let m = VelocityModel::new(
            Kind::Sphere,
            parse("1").unwrap(),
            vec![parse("0").unwrap(), parse("0.1*sin(phi)").unwrap()],
            None,
        )
        .unwrap();
        assert!((m.divergence_gamma([0.0, 0.0]).unwrap() - 0.2).abs() < 1e-6);
        assert!((m.divergence_gamma([0.0, PI]).unwrap() + 0.2).abs() < 1e-6);
    }

    #[test]
    fn validation_outcomes() {
        let r = interval("1/2", "0.2*(1-v^2)").validate(257).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!((r.alpha_margin - 0.6).abs() < 1e-8);
        let r = interval("1/2", "2*(1-v^2)").validate(257).unwrap();
        assert!(!r.passed());
        assert!((r.alpha_margin + 3.0).abs() < 1e-8);
        assert!(interval("1/2", "0").validate(64).unwrap().passed());
        assert!(!interval("1/2", "0.1").validate(64).unwrap().passed());
        assert!(!interval("v + 1/2", "0").validate(64).unwrap().passed());
    }

    #[test]
    fn force_free_detection() {
        assert!(interval("1/2", "0").force_free());
        assert!(interval("1/2", "0*v").force_free());
        assert!(!interval("1/2", "0.2*(1-v^2)").force_free());
    }

    #[test]
    fn estimated_alpha() {
        assert!((interval("1/2", "0.2*(1-v^2)").alpha() - 0.6).abs() < 1e-8);
    }

    #[test]
    fn foreign_variables_rejected() {
        let e = VelocityModel::new(Kind::Interval, parse("phi").unwrap(), vec![parse("0").unwrap()], None);
        assert!(matches!(e, Err(ModelError::ForeignVariable { .. })));
        let e = VelocityModel::new(Kind::Sphere, parse("1").unwrap(), vec![parse("0").unwrap()], None);
        assert!(matches!(e, Err(ModelError::GammaArity { .. })));
    }

    #[test]
    fn grid_weights() {
        let g = make_grid(Kind::Interval, 8, None).unwrap();
        assert!((g.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let g = make_grid(Kind::Ring, 16, None).unwrap();
        assert!(g.weights.iter().all(|&w| w == 1.0 / 16.0));
        let g = make_grid(Kind::Sphere, 16, Some(8)).unwrap();
        assert_eq!(g.len(), 128);
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(make_grid(Kind::Ring, 4, None).is_err());
    }

    #[test]
    fn sphere_grid_integrates_polynomials_in_z() {
        let g = make_grid(Kind::Sphere, 16, Some(8)).unwrap();
        let z2: Vec<f64> = g.points.iter().map(|p| p[2] * p[2]).collect();
        assert!((g.integrate(&z2) - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn frame_is_orthonormal() {
        let c = [0.7, 1.1];
        let et = frame_vector(Kind::Sphere, c, [1.0, 0.0]);
        let ep = frame_vector(Kind::Sphere, c, [0.0, 1.0]);
        let r = embed(Kind::Sphere, c);
        assert!((dot(et, et) - 1.0).abs() < 1e-15);
        assert!((dot(ep, ep) - 1.0).abs() < 1e-15);
        assert!(dot(et, ep).abs() < 1e-15);
        assert!(dot(et, r).abs() < 1e-15 && dot(ep, r).abs() < 1e-15);
    }

    #[test]
    fn chart_round_trip() {
        for c in [[0.3, 0.4], [6.0, 2.5], [3.0, 1.0]] {
            let back = chart_of(Kind::Sphere, embed(Kind::Sphere, c));
            assert!((back[0] - c[0]).abs() < 1e-12 && (back[1] - c[1]).abs() < 1e-12);
        }
    }
}
