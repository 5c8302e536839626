//! The stationary velocity profile `M~`, solving
//! `div(Gamma M~) = M - M~` with unit mass.
//!
//! The divergence is discretized in conservative form with first-order
//! upwind fluxes on the cells of the velocity grid, so the discrete
//! divergence integrates to zero against the quadrature weights and the
//! mass identity holds to rounding.

use crate::linalg::{BandMatrix, CyclicLu, Factorization, SingularMatrix};
use crate::model::{Chart, Kind, ModelError, VelocityGrid, VelocityModel};
use std::f64::consts::TAU;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum StationaryError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("singular stationary system (grid too coarse?): {0}")]
    Singular(#[from] SingularMatrix),
    #[error("negative stationary density {value:e} at node {index}")]
    Negative { index: usize, value: f64 },
    #[error("non-finite {what} at node {index}")]
    NonFinite { what: &'static str, index: usize },
}

/// One face of the finite-volume mesh: mass moves from `from` to `to` at
/// rate `coef * m[from]`.
#[derive(Clone, Copy, Debug)]
struct Transfer {
    from: usize,
    to: usize,
    coef: f64,
}

/// The upwind discretization of `m -> div(Gamma m)` on a velocity grid.
#[derive(Clone, Debug)]
pub struct UpwindDivergence {
    kind: Kind,
    n: usize,
    n_a: usize,
    /// Cell measures in chart units.
    areas: Vec<f64>,
    transfers: Vec<Transfer>,
}

impl UpwindDivergence {
    pub fn new(model: &VelocityModel, grid: &VelocityGrid) -> Result<Self, ModelError> {
        let n = grid.len();
        let na = grid.n_a;
        let mut transfers = Vec::new();
        let mut push = |left: usize, right: usize, u: f64, face: f64| {
            if u > 0.0 {
                transfers.push(Transfer {
                    from: left,
                    to: right,
                    coef: u * face,
                });
            } else if u < 0.0 {
                transfers.push(Transfer {
                    from: right,
                    to: left,
                    coef: -u * face,
                });
            }
        };
        let areas: Vec<f64>;
        match grid.kind {
            Kind::Interval => {
                areas = grid.weights.clone();
                if !model.force_free() {
                    for i in 0..n - 1 {
                        let vf = 0.5 * (grid.nodes[i][0] + grid.nodes[i + 1][0]);
                        push(i, i + 1, model.gamma_chart([vf, 0.0])?[0], 1.0);
                    }
                }
            }
            Kind::Ring => {
                let dt = TAU / n as f64;
                areas = vec![dt; n];
                if !model.force_free() {
                    for i in 0..n {
                        let tf = grid.nodes[i][0] + 0.5 * dt;
                        push(i, (i + 1) % n, model.gamma_chart([tf, 0.0])?[0], 1.0);
                    }
                }
            }
            Kind::Sphere => {
                let nb = grid.n_b;
                let dt = TAU / na as f64;
                // Ring j spans [faces[j+1], faces[j]] in mu = cos(phi).
                let wmu: Vec<f64> = (0..nb).map(|j| grid.weights[j * na] * 2.0 * na as f64).collect();
                let mut faces = vec![1.0];
                for w in &wmu {
                    faces.push(faces.last().unwrap() - w);
                }
                areas = (0..n).map(|k| dt * wmu[k / na]).collect();
                if !model.force_free() {
                    for j in 0..nb {
                        let phi = grid.nodes[j * na][1];
                        let s = phi.sin();
                        for i in 0..na {
                            let tf = grid.nodes[j * na + i][0] + 0.5 * dt;
                            let a = model.gamma_chart([tf, phi])?[0];
                            push(j * na + i, j * na + (i + 1) % na, a / s, wmu[j]);
                        }
                        if j + 1 < nb {
                            let mu_f = faces[j + 1].clamp(-1.0, 1.0);
                            let phi_f = mu_f.acos();
                            for i in 0..na {
                                let b = model.gamma_chart([grid.nodes[i][0], phi_f])?[1];
                                push(j * na + i, (j + 1) * na + i, b, phi_f.sin() * dt);
                            }
                        }
                    }
                }
            }
        }
        Ok(UpwindDivergence {
            kind: grid.kind,
            n,
            n_a: na,
            areas,
            transfers,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// True when no mass moves.
    pub fn is_zero(&self) -> bool {
        self.transfers.is_empty()
    }

    /// `out = D m`.
    pub fn apply(&self, m: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.transfers {
            let q = t.coef * m[t.from];
            out[t.from] += q / self.areas[t.from];
            out[t.to] -= q / self.areas[t.to];
        }
    }

    /// Factors `a I + b D`.
    pub fn factor_shifted(&self, a: f64, b: f64) -> Result<Factorization, SingularMatrix> {
        let n = self.n;
        match self.kind {
            Kind::Ring => {
                let mut sub = vec![0.0; n];
                let mut diag = vec![a; n];
                let mut sup = vec![0.0; n];
                for t in &self.transfers {
                    diag[t.from] += b * t.coef / self.areas[t.from];
                    let v = -b * t.coef / self.areas[t.to];
                    if t.from == (t.to + n - 1) % n {
                        sub[t.to] += v;
                    } else {
                        sup[t.to] += v;
                    }
                }
                Ok(Factorization::Cyclic(CyclicLu::new(&sub, &diag, &sup)?))
            }
            Kind::Interval | Kind::Sphere => {
                let bw = if self.kind == Kind::Interval { 1 } else { self.n_a };
                let mut m = BandMatrix::zeros(n, bw);
                for i in 0..n {
                    m.add(i, i, a);
                }
                for t in &self.transfers {
                    m.add(t.from, t.from, b * t.coef / self.areas[t.from]);
                    m.add(t.to, t.from, -b * t.coef / self.areas[t.to]);
                }
                Ok(Factorization::Band(m.factor()?))
            }
        }
    }
}

/// Grid values of `M~` with interpolation.
#[derive(Clone, Debug)]
pub struct StationaryProfile {
    grid: VelocityGrid,
    values: Vec<f64>,
    m_values: Vec<f64>,
}

/// Solves for the stationary profile on `grid`.
///
/// A vanishing force field gives `M~ = M` without a linear solve.
pub fn solve_stationary(
    model: &VelocityModel,
    grid: &VelocityGrid,
) -> Result<StationaryProfile, StationaryError> {
    let mut m_values = Vec::with_capacity(grid.len());
    for (i, c) in grid.nodes.iter().enumerate() {
        let m = model.m(*c)?;
        if !m.is_finite() {
            return Err(StationaryError::NonFinite { what: "M", index: i });
        }
        m_values.push(m);
    }
    let mass = grid.integrate(&m_values);
    // Keep M exact when it is already normalized on this grid.
    let rhs: Vec<f64> = if (mass - 1.0).abs() <= 1e-12 {
        m_values.clone()
    } else {
        m_values.iter().map(|m| m / mass).collect()
    };
    let values = if model.force_free() {
        rhs
    } else {
        let d = UpwindDivergence::new(model, grid)?;
        let lu = d.factor_shifted(1.0, 1.0)?;
        let mut x = rhs;
        lu.solve_in_place(&mut x);
        let s = grid.integrate(&x);
        x.iter_mut().for_each(|v| *v /= s);
        x
    };
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(StationaryError::NonFinite { what: "M~", index: i });
        }
    }
    if let Some((index, &value)) = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v <= 0.0)
        .min_by(|a, b| a.1.total_cmp(b.1))
    {
        return Err(StationaryError::Negative { index, value });
    }
    Ok(StationaryProfile {
        grid: grid.clone(),
        values,
        m_values,
    })
}

/// Outcome of the a priori bounds on `M~`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileBounds {
    pub mass: f64,
    pub min: f64,
    pub max: f64,
    /// `max M / alpha`.
    pub upper: f64,
}

/// Tolerance on unit mass.
pub const MASS_TOL: f64 = 1e-10;
/// Relative rounding allowed on the upper bound, which force-free models attain.
pub const UPPER_ROUNDING: f64 = 1e-12;

impl ProfileBounds {
    pub fn mass_holds(&self) -> bool {
        (self.mass - 1.0).abs() <= MASS_TOL
    }

    pub fn upper_holds(&self) -> bool {
        self.max <= self.upper * (1.0 + UPPER_ROUNDING)
    }

    pub fn holds(&self) -> bool {
        self.mass_holds() && self.min > 0.0 && self.upper_holds()
    }
}

impl StationaryProfile {
    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `M` at the grid nodes.
    pub fn m_values(&self) -> &[f64] {
        &self.m_values
    }

    /// `sum w M~`.
    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn bounds(&self, model: &VelocityModel) -> ProfileBounds {
        let max_m = self.m_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ProfileBounds {
            mass: self.mass(),
            min: self.min(),
            max: self.max(),
            upper: max_m / model.alpha(),
        }
    }

    /// `M~` interpolated at a chart point.
    #[inline]
    pub fn value_at(&self, c: Chart) -> f64 {
        self.grid.interpolate(&self.values, c)
    }

    /// `M / M~` at a chart point.
    #[inline]
    pub fn ratio(&self, model: &VelocityModel, c: Chart) -> f64 {
        model.m_at(c) / self.value_at(c)
    }

    /// `M / M~` at the grid nodes.
    pub fn node_ratios(&self) -> Vec<f64> {
        self.m_values.iter().zip(&self.values).map(|(m, t)| m / t).collect()
    }
}

impl VelocityGrid {
    /// Piecewise linear interpolation of nodal values (periodic in angles,
    /// blended to the ring mean at the sphere poles).
    pub fn interpolate(&self, values: &[f64], c: Chart) -> f64 {
        match self.kind {
            Kind::Interval => {
                let n = self.n_a;
                let s = (c[0] + 1.0) * 0.5 * (n - 1) as f64;
                let i = (s.floor().max(0.0) as usize).min(n - 2);
                let f = (s - i as f64).clamp(0.0, 1.0);
                values[i] + f * (values[i + 1] - values[i])
            }
            Kind::Ring => ring_interp(values, c[0]),
            Kind::Sphere => {
                let na = self.n_a;
                let nb = self.n_b;
                let ring = |j: usize| ring_interp(&values[j * na..(j + 1) * na], c[0]);
                let mean = |j: usize| values[j * na..(j + 1) * na].iter().sum::<f64>() / na as f64;
                let phi0 = self.nodes[0][1];
                let phi_last = self.nodes[(nb - 1) * na][1];
                let phi = c[1];
                if phi <= phi0 {
                    let t = (phi / phi0).clamp(0.0, 1.0);
                    let p = mean(0);
                    return p + t * (ring(0) - p);
                }
                if phi >= phi_last {
                    let t = ((std::f64::consts::PI - phi) / (std::f64::consts::PI - phi_last)).clamp(0.0, 1.0);
                    let p = mean(nb - 1);
                    return p + t * (ring(nb - 1) - p);
                }
                // Rings are ascending in phi.
                let mut lo = 0;
                let mut hi = nb - 1;
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if self.nodes[mid * na][1] <= phi {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let (pa, pb) = (self.nodes[lo * na][1], self.nodes[hi * na][1]);
                let t = (phi - pa) / (pb - pa);
                let (a, b) = (ring(lo), ring(hi));
                a + t * (b - a)
            }
        }
    }
}

fn ring_interp(values: &[f64], theta: f64) -> f64 {
    let n = values.len();
    let s = theta.rem_euclid(TAU) / TAU * n as f64;
    let i = (s.floor() as usize).min(n - 1);
    let f = s - i as f64;
    let j = (i + 1) % n;
    values[i] + f * (values[j] - values[i])
}
