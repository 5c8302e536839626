//! The effective Hamiltonian `H(p)`.
//!
//! For a momentum `p` the normalization integral
//! `I(p, H) = int M~ Q_{p,H} dnu` is decreasing in `H` and blows up as `H`
//! approaches the critical value `H_crit(p)` from above, unless the
//! velocity law concentrates on an omega-limit set. `H(p)` is the root of
//! `I = 1` in the first case and `H_crit(p)` in the second (the singular
//! case).
//!
//! Characteristics are traced once per quadrature node and reused for every
//! `(p, H)`, so an evaluation of `I` costs one pass over stored samples.

mod characteristic;
mod legendre;
mod table;

pub use characteristic::{eval_q, Attractor, Characteristic, QValue, TraceControls};
pub use legendre::{legendre_transform, LegendreError, RateTable, RateValue};
pub use table::{build_table, HamiltonianTable, PAxis, PGrid};

use rayon::prelude::*;

use crate::flow::{default_seeds, find_all_omega_limits, FlowError, OmegaLimit};
use crate::model::{chart_of, dot, embed, Chart, Kind, Vec3, VelocityModel};
use crate::quadrature::{composite_gauss, graded_edges};
use crate::stationary::StationaryProfile;
use std::f64::consts::TAU;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum HamiltonianError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("no bracket for I(p, H) = 1: I({lo}) = {i_lo}, I({hi}) = {i_hi}")]
    Bracket { lo: f64, i_lo: f64, hi: f64, i_hi: f64 },
    #[error("Q diverges at node {index} ({node:?})")]
    Divergent { index: usize, node: Chart },
    #[error("the residual is only defined for regular solutions")]
    SingularSolution,
    #[error("momentum has {found} components, the model needs at most {expected}")]
    Dimension { expected: usize, found: usize },
}

/// Accuracy settings of the spectral solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralControls {
    pub trace: TraceControls,
    /// Gauss-Legendre points per quadrature panel.
    pub order: usize,
    /// Geometric refinement levels toward endpoints, poles and zeros of the force.
    pub levels: usize,
    /// Widest panel, as a fraction of the chart length.
    pub max_width: f64,
    /// Azimuthal nodes on the sphere.
    pub n_theta: usize,
    /// Root bracket width on `H`.
    pub h_tol: f64,
    /// Early exit once `|I - 1|` is this small.
    pub i_tol: f64,
    pub max_iter: usize,
    /// Probe offset above `H_crit`, relative to `1 + |H_crit|`.
    pub probe: f64,
}

impl Default for SpectralControls {
    fn default() -> Self {
        SpectralControls {
            trace: TraceControls::default(),
            order: 8,
            levels: 28,
            max_width: 0.125,
            n_theta: 12,
            h_tol: 1e-10,
            i_tol: 1e-11,
            max_iter: 200,
            probe: 1e-6,
        }
    }
}

/// Quadrature for `nu` refined where `Q` can be singular.
#[derive(Clone, Debug)]
pub struct SpectralQuadrature {
    pub nodes: Vec<Chart>,
    /// Weights for `nu`, summing to `nu(V)`.
    pub weights: Vec<f64>,
}

/// Zeros of `f` on `[a, b]` by a sign scan and bisection.
fn scalar_zeros(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let x = |k: usize| a + (b - a) * k as f64 / n as f64;
    let mut prev = f(a);
    if prev == 0.0 {
        out.push(a);
    }
    for k in 1..=n {
        let xk = x(k);
        let cur = f(xk);
        if cur == 0.0 {
            out.push(xk);
        } else if prev != 0.0 && prev.signum() != cur.signum() {
            let (mut lo, mut hi, mut flo) = (x(k - 1), xk, prev);
            while hi - lo > 1e-15 * (1.0 + lo.abs()) {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        prev = cur;
    }
    out.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    out
}

/// Builds the quadrature used for `I(p, H)`.
pub fn spectral_quadrature(model: &VelocityModel, ctl: &SpectralControls) -> SpectralQuadrature {
    let (levels, ratio) = (ctl.levels, 0.5);
    match model.kind() {
        Kind::Interval => {
            let mut clusters = vec![-1.0, 1.0];
            if !model.force_free() {
                let g = |v: f64| model.gamma_at([v, 0.0])[0];
                clusters.extend(scalar_zeros(g, -1.0, 1.0, 4096).into_iter().filter(|z| z.abs() < 1.0 - 1e-9));
            }
            let edges = graded_edges(-1.0, 1.0, &clusters, levels, ratio, 2.0 * ctl.max_width);
            let (x, w) = composite_gauss(&edges, ctl.order);
            SpectralQuadrature {
                nodes: x.into_iter().map(|v| [v, 0.0]).collect(),
                weights: w,
            }
        }
        Kind::Ring => {
            let zeros = if model.force_free() {
                Vec::new()
            } else {
                let g = |t: f64| model.gamma_at([t, 0.0])[0];
                let mut z = scalar_zeros(g, 0.0, TAU, 4096);
                z.retain(|&t| t < TAU - 1e-12);
                z
            };
            let a = zeros.first().copied().unwrap_or(0.0);
            let mut clusters: Vec<f64> = zeros.clone();
            if !zeros.is_empty() {
                clusters.push(a + TAU);
            }
            let edges = graded_edges(a, a + TAU, &clusters, levels, ratio, TAU * ctl.max_width);
            let (x, w) = composite_gauss(&edges, ctl.order);
            SpectralQuadrature {
                nodes: x.into_iter().map(|t| [crate::model::wrap_angle(t), 0.0]).collect(),
                weights: w.into_iter().map(|w| w / TAU).collect(),
            }
        }
        Kind::Sphere => {
            let edges = graded_edges(-1.0, 1.0, &[-1.0, 1.0], levels, ratio, 2.0 * ctl.max_width);
            let (mu, wmu) = composite_gauss(&edges, ctl.order);
            let nt = ctl.n_theta;
            let mut nodes = Vec::with_capacity(mu.len() * nt);
            let mut weights = Vec::with_capacity(mu.len() * nt);
            for (m, w) in mu.iter().zip(&wmu) {
                let phi = m.clamp(-1.0, 1.0).acos();
                for i in 0..nt {
                    nodes.push([TAU * i as f64 / nt as f64, phi]);
                    weights.push(w / (2.0 * nt as f64));
                }
            }
            SpectralQuadrature { nodes, weights }
        }
    }
}

/// An omega-limit set with the orbit average of `M / M~` on it.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticalSet {
    pub limit: OmegaLimit,
    pub rate: f64,
}

impl CriticalSet {
    /// Orbit average of `v . p - M / M~`.
    pub fn critical(&self, p: Vec3) -> f64 {
        dot(self.limit.mean(), p) - self.rate
    }
}

enum Source {
    Seed(usize),
    Node(usize),
    Point(Chart),
}

/// Output of [`SpectralSolver::solve`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSolution {
    pub p: Vec3,
    pub h: f64,
    pub h_crit: f64,
    pub singular: bool,
    /// `I(p, H)`, or `I(p, H_crit + delta)` at the probe when singular.
    pub integral: f64,
    /// The omega-limit attaining `H_crit` when singular.
    pub atom: Option<OmegaLimit>,
    /// `1 - int M~ Q dnu` extrapolated to the critical value; zero when regular.
    pub mass_deficit: f64,
    /// `Q` at the quadrature nodes, evaluated where `integral` was.
    pub q: Vec<f64>,
    pub iterations: usize,
}

impl SpectralSolution {
    /// The corrector `eta = -log Q`.
    pub fn eta(&self) -> Vec<f64> {
        self.q.iter().map(|q| -q.ln()).collect()
    }
}

/// Precomputed characteristics for one model and profile.
pub struct SpectralSolver<'a> {
    model: &'a VelocityModel,
    profile: &'a StationaryProfile,
    ctl: SpectralControls,
    quad: SpectralQuadrature,
    /// `w M~` at the nodes, normalized to unit sum.
    omega: Vec<f64>,
    chars: Vec<Characteristic>,
    sets: Vec<CriticalSet>,
}

/// `p` padded to three components.
pub fn momentum(model: &VelocityModel, p: &[f64]) -> Result<Vec3, HamiltonianError> {
    let d = model.kind().dim();
    if p.len() > d {
        return Err(HamiltonianError::Dimension {
            expected: d,
            found: p.len(),
        });
    }
    let mut out = [0.0; 3];
    out[..p.len()].copy_from_slice(p);
    Ok(out)
}

impl<'a> SpectralSolver<'a> {
    pub fn new(
        model: &'a VelocityModel,
        profile: &'a StationaryProfile,
        ctl: SpectralControls,
    ) -> Result<Self, HamiltonianError> {
        let quad = spectral_quadrature(model, &ctl);
        let mut omega: Vec<f64> = quad
            .nodes
            .iter()
            .zip(&quad.weights)
            .map(|(c, w)| w * profile.value_at(*c))
            .collect();
        let total: f64 = omega.iter().sum();
        omega.iter_mut().for_each(|o| *o /= total);
        let chars: Vec<Characteristic> = quad
            .nodes
            .par_iter()
            .map(|&c| Characteristic::trace(model, profile, c, &ctl.trace))
            .collect::<Result<_, _>>()?;
        let kind = model.kind();
        let rate_of = |limit: &OmegaLimit| limit.average(|y| profile.ratio(model, chart_of(kind, y)));
        let sets = find_all_omega_limits(model, &default_seeds(kind), &ctl.trace.flow)?
            .limits
            .into_iter()
            .map(|limit| CriticalSet {
                rate: rate_of(&limit),
                limit,
            })
            .collect();
        Ok(SpectralSolver {
            model,
            profile,
            ctl,
            quad,
            omega,
            chars,
            sets,
        })
    }

    pub fn model(&self) -> &VelocityModel {
        self.model
    }

    pub fn profile(&self) -> &StationaryProfile {
        self.profile
    }

    pub fn controls(&self) -> &SpectralControls {
        &self.ctl
    }

    pub fn quadrature(&self) -> &SpectralQuadrature {
        &self.quad
    }

    /// The distinct omega-limit sets reached from the seed grid. The
    /// attractors of the quadrature nodes are considered as well by
    /// [`Self::critical_h`].
    pub fn critical_sets(&self) -> &[CriticalSet] {
        &self.sets
    }

    /// `Q_{p,H}` at every quadrature node.
    pub fn q_values(&self, p: Vec3, h: f64) -> Vec<QValue> {
        self.chars
            .par_iter()
            .map_init(Vec::new, |scratch, c| c.q(p, h, &self.ctl.trace, scratch))
            .collect()
    }

    /// `I(p, H)`, infinite when some node diverges.
    pub fn normalization_integral(&self, p: Vec3, h: f64) -> f64 {
        let q = self.q_values(p, h);
        let mut sum = 0.0;
        for (o, q) in self.omega.iter().zip(&q) {
            match q {
                QValue::Finite(v) => sum += o * v,
                QValue::Divergent => return f64::INFINITY,
            }
        }
        sum
    }

    /// `H_crit(p)` and the omega-limit attaining it.
    pub fn critical_h(&self, p: Vec3) -> (f64, OmegaLimit) {
        let kind = self.model.kind();
        let mut best = (f64::NEG_INFINITY, Source::Seed(0));
        for (i, s) in self.sets.iter().enumerate() {
            let h = s.critical(p);
            if h > best.0 {
                best = (h, Source::Seed(i));
            }
        }
        if self.model.force_free() {
            // Every point is fixed: the maximizer of v . p is attained exactly.
            if let Some(c) = maximizer(kind, p) {
                let h = dot(embed(kind, c), p) - self.profile.ratio(self.model, c);
                if h > best.0 {
                    best = (h, Source::Point(c));
                }
            }
        } else {
            for (i, c) in self.chars.iter().enumerate() {
                let h = c.attractor.critical(p);
                if h > best.0 {
                    best = (h, Source::Node(i));
                }
            }
        }
        let limit = match best.1 {
            Source::Seed(i) => self.sets[i].limit.clone(),
            Source::Node(i) => self.chars[i].omega_limit(kind),
            Source::Point(c) => OmegaLimit::FixedPoint {
                w: embed(kind, c),
                chart: c,
            },
        };
        (best.0, limit)
    }

    /// Solves for `H(p)`.
    pub fn solve(&self, p: Vec3) -> Result<SpectralSolution, HamiltonianError> {
        let (h_crit, limit) = self.critical_h(p);
        let delta = self.ctl.probe * (1.0 + h_crit.abs());
        let lo0 = h_crit + delta;
        let i_probe = self.normalization_integral(p, lo0);
        if i_probe <= 1.0 {
            // Richardson over delta and delta / 2 for the deficit at delta -> 0.
            let i_half = self.normalization_integral(p, h_crit + 0.5 * delta);
            let deficit = (2.0 * (1.0 - i_half) - (1.0 - i_probe)).clamp(0.0, 1.0);
            return Ok(SpectralSolution {
                p,
                h: h_crit,
                h_crit,
                singular: true,
                integral: i_probe,
                atom: Some(limit),
                mass_deficit: deficit,
                q: self.q_finite(p, lo0),
                iterations: 0,
            });
        }
        let (mut lo, mut f_lo) = (lo0, i_probe.ln());
        let mut gap = 1.0;
        let mut hi = h_crit + gap;
        let mut i_hi = self.normalization_integral(p, hi);
        while i_hi >= 1.0 {
            if i_hi == 1.0 {
                return Ok(self.regular(p, hi, h_crit, 1.0, 0));
            }
            lo = hi;
            f_lo = i_hi.ln();
            gap *= 2.0;
            if gap > 1e8 {
                return Err(HamiltonianError::Bracket {
                    lo: lo0,
                    i_lo: i_probe,
                    hi,
                    i_hi,
                });
            }
            hi = h_crit + gap;
            i_hi = self.normalization_integral(p, hi);
        }
        let mut f_hi = i_hi.ln();
        let mut best = if f_lo.abs() < f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
        // Illinois iteration on log I with a bisection safeguard.
        let mut side = 0i8;
        let mut iterations = 0;
        for it in 0..self.ctl.max_iter {
            iterations = it + 1;
            let width = hi - lo;
            let done_width = width <= self.ctl.h_tol && (best.1.exp() - 1.0).abs() <= 1e-9;
            if done_width || width <= 4.0 * f64::EPSILON * (1.0 + hi.abs()) {
                break;
            }
            let mut x = if f_lo.is_finite() && it % 4 != 3 {
                lo - f_lo * (hi - lo) / (f_hi - f_lo)
            } else {
                0.5 * (lo + hi)
            };
            if !(x > lo && x < hi) {
                x = 0.5 * (lo + hi);
            }
            let fx = self.normalization_integral(p, x).ln();
            if fx.abs() < best.1.abs() {
                best = (x, fx);
            }
            if (fx.exp() - 1.0).abs() <= self.ctl.i_tol {
                break;
            }
            if fx > 0.0 {
                lo = x;
                f_lo = fx;
                if side == 1 {
                    f_hi *= 0.5;
                }
                side = 1;
            } else {
                hi = x;
                f_hi = fx;
                if side == -1 {
                    f_lo *= 0.5;
                }
                side = -1;
            }
        }
        Ok(self.regular(p, best.0, h_crit, best.1.exp(), iterations))
    }

    fn q_finite(&self, p: Vec3, h: f64) -> Vec<f64> {
        self.q_values(p, h).into_iter().map(QValue::value).collect()
    }

    fn regular(&self, p: Vec3, h: f64, h_crit: f64, integral: f64, iterations: usize) -> SpectralSolution {
        SpectralSolution {
            p,
            h,
            h_crit,
            singular: false,
            integral,
            atom: None,
            mass_deficit: 0.0,
            q: self.q_finite(p, h),
            iterations,
        }
    }

    /// Solves a batch of momenta in parallel, keeping the input order.
    pub fn solve_many(&self, ps: &[Vec3]) -> Result<Vec<SpectralSolution>, HamiltonianError> {
        ps.par_iter().map(|&p| self.solve(p)).collect()
    }
}

/// The point of `V` maximizing `v . p`, if unique.
fn maximizer(kind: Kind, p: Vec3) -> Option<Chart> {
    let n = dot(p, p).sqrt();
    if n == 0.0 {
        return None;
    }
    Some(match kind {
        Kind::Interval => [p[0].signum(), 0.0],
        Kind::Ring => [crate::model::wrap_angle(p[1].atan2(p[0])), 0.0],
        Kind::Sphere => [crate::model::wrap_angle(p[1].atan2(p[0])), (p[2] / n).clamp(-1.0, 1.0).acos()],
    })
}

/// Solves for `H(p)` with default controls.
pub fn solve_h(
    model: &VelocityModel,
    profile: &StationaryProfile,
    p: &[f64],
) -> Result<SpectralSolution, HamiltonianError> {
    let p = momentum(model, p)?;
    SpectralSolver::new(model, profile, SpectralControls::default())?.solve(p)
}

/// Characteristics traced from every node of a profile grid, reusable
/// across momenta.
pub struct ResidualProbe<'a> {
    model: &'a VelocityModel,
    profile: &'a StationaryProfile,
    ctl: TraceControls,
    chars: Vec<Characteristic>,
}

impl<'a> ResidualProbe<'a> {
    pub fn new(
        model: &'a VelocityModel,
        profile: &'a StationaryProfile,
        ctl: &TraceControls,
    ) -> Result<Self, HamiltonianError> {
        let chars = profile
            .grid()
            .nodes
            .par_iter()
            .map(|&c| Characteristic::trace(model, profile, c, ctl))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ResidualProbe {
            model,
            profile,
            ctl: *ctl,
            chars,
        })
    }

    /// Maximum over interior grid nodes of the spectral equation residual
    /// `|(M/M~ + H - v.p) Q + Gamma . grad Q - (M/M~) I|`, with central
    /// differences for the gradient and the result divided by `max Q`.
    pub fn residual(&self, solution: &SpectralSolution) -> Result<f64, HamiltonianError> {
        if solution.singular {
            return Err(HamiltonianError::SingularSolution);
        }
        let (model, profile) = (self.model, self.profile);
        let grid = profile.grid();
        let (p, h) = (solution.p, solution.h);
        let q: Vec<f64> = self
            .chars
            .par_iter()
            .map_init(Vec::new, |scratch, c| c.q(p, h, &self.ctl, scratch))
            .collect::<Vec<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, q)| {
                q.finite().ok_or(HamiltonianError::Divergent {
                    index: i,
                    node: grid.nodes[i],
                })
            })
            .collect::<Result<_, _>>()?;
        let ratios = profile.node_ratios();
        let q_max = q.iter().fold(0.0f64, |a, &b| a.max(b));
        let residual = |i: usize, flux: f64| {
            let v = grid.points[i];
            ((ratios[i] + h - dot(v, p)) * q[i] + flux - ratios[i] * solution.integral).abs()
        };
        let mut worst = 0.0f64;
        let (na, nb) = (grid.n_a, grid.n_b);
        match grid.kind {
            Kind::Interval => {
                let dv = 2.0 / (na - 1) as f64;
                for i in 1..na - 1 {
                    let g = model.gamma_at(grid.nodes[i])[0];
                    worst = worst.max(residual(i, g * (q[i + 1] - q[i - 1]) / (2.0 * dv)));
                }
            }
            Kind::Ring => {
                let dt = TAU / na as f64;
                for i in 0..na {
                    let g = model.gamma_at(grid.nodes[i])[0];
                    let d = (q[(i + 1) % na] - q[(i + na - 1) % na]) / (2.0 * dt);
                    worst = worst.max(residual(i, g * d));
                }
            }
            Kind::Sphere => {
                let dt = TAU / na as f64;
                let phis = grid.phis();
                for j in 1..nb - 1 {
                    let (h0, h1) = (phis[j] - phis[j - 1], phis[j + 1] - phis[j]);
                    for i in 0..na {
                        let k = j * na + i;
                        let c = grid.nodes[k];
                        let [a, b] = model.gamma_at(c);
                        let dth = (q[j * na + (i + 1) % na] - q[j * na + (i + na - 1) % na]) / (2.0 * dt);
                        let (q0, q1, q2) = (q[k - na], q[k], q[k + na]);
                        let dph = -h1 / (h0 * (h0 + h1)) * q0 + (h1 - h0) / (h0 * h1) * q1 + h0 / (h1 * (h0 + h1)) * q2;
                        worst = worst.max(residual(k, a / c[1].sin() * dth + b * dph));
                    }
                }
            }
        }
        Ok(worst / q_max)
    }
}

/// One-off [`ResidualProbe::residual`], tracing from every node of the
/// profile grid.
pub fn eigen_residual(
    solution: &SpectralSolution,
    model: &VelocityModel,
    profile: &StationaryProfile,
    ctl: &TraceControls,
) -> Result<f64, HamiltonianError> {
    if solution.singular {
        return Err(HamiltonianError::SingularSolution);
    }
    ResidualProbe::new(model, profile, ctl)?.residual(solution)
}
