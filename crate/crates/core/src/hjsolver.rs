//! The Hamilton-Jacobi equation `phi_t + H(phi_x) = 0` on a periodic
//! interval: a monotone Lax-Friedrichs scheme driven by a tabulated `H`,
//! and the Hopf-Lax formula as an independent reference for convex `H`.

use rayon::prelude::*;

use crate::hamiltonian::{HamiltonianTable, RateTable};
use crate::kinetic::SpaceGrid;

/// Tolerance on negative second differences accepted as convex.
pub const CONVEXITY_TOL: f64 = 1e-8;

/// Relative excess of the table slope over the dissipation that is
/// attributed to rounding in `H`.
pub const SLOPE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum HjError {
    #[error("time step {dt} violates the CFL limit {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("dissipation {alpha} is below the table slope {slope}")]
    Alpha { alpha: f64, slope: f64 },
    #[error("the Hamiltonian is not convex (second difference {0:e}); the Hopf-Lax formula does not apply")]
    NotConvex(f64),
    #[error("time must be positive, got {0}")]
    Time(f64),
    #[error("initial potential is not finite at x = {0}")]
    NonFinite(f64),
}

/// `phi_j` at `x_j` and time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField1D {
    pub t: f64,
    pub space: SpaceGrid,
    pub phi: Vec<f64>,
}

impl ScalarField1D {
    pub fn sample(space: SpaceGrid, phi0: impl Fn(f64) -> f64) -> Result<Self, HjError> {
        let phi: Vec<f64> = space.nodes().into_iter().map(&phi0).collect();
        if let Some(j) = phi.iter().position(|p| !p.is_finite()) {
            return Err(HjError::NonFinite(space.x(j)));
        }
        Ok(ScalarField1D { t: 0.0, space, phi })
    }

    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        self.phi.iter().zip(other).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// `H` along the first momentum axis with a count of clamped lookups.
fn h_of(table: &HamiltonianTable, p: f64) -> (f64, bool) {
    table.interpolate(&[p])
}

/// Largest stable step `dx / (2 alpha)`.
pub fn hj_cfl_limit(space: SpaceGrid, alpha: f64) -> f64 {
    space.dx() / (2.0 * alpha)
}

/// One step `phi - dt [H((D- + D+)/2) - alpha/2 (D+ - D-)]`. Returns the
/// new field and the number of momenta that fell outside the table.
pub fn lf_step(
    field: &ScalarField1D,
    table: &HamiltonianTable,
    dt: f64,
    alpha: f64,
) -> Result<(ScalarField1D, usize), HjError> {
    let slope = table.max_slope();
    if alpha * (1.0 + SLOPE_TOL) < slope {
        return Err(HjError::Alpha { alpha, slope });
    }
    let limit = hj_cfl_limit(field.space, alpha);
    if !(dt > 0.0 && dt <= limit) {
        return Err(HjError::Cfl { dt, limit });
    }
    Ok(step_unchecked(field, table, dt, alpha))
}

fn step_unchecked(field: &ScalarField1D, table: &HamiltonianTable, dt: f64, alpha: f64) -> (ScalarField1D, usize) {
    let n = field.phi.len();
    let dx = field.space.dx();
    let phi = &field.phi;
    let out: Vec<(f64, bool)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let (l, c, r) = (phi[(j + n - 1) % n], phi[j], phi[(j + 1) % n]);
            let dm = (c - l) / dx;
            let dp = (r - c) / dx;
            let (h, clamped) = h_of(table, 0.5 * (dm + dp));
            (c - dt * (h - 0.5 * alpha * (dp - dm)), clamped)
        })
        .collect();
    let clamps = out.iter().filter(|o| o.1).count();
    (
        ScalarField1D {
            t: field.t + dt,
            space: field.space,
            phi: out.into_iter().map(|o| o.0).collect(),
        },
        clamps,
    )
}

/// Result of [`solve`].
#[derive(Clone, Debug, PartialEq)]
pub struct HjSolution {
    pub field: ScalarField1D,
    pub steps: usize,
    /// Momentum lookups clamped to the table range.
    pub clamps: usize,
}

/// Advances `phi0` to `t_final` with equal steps no larger than `dt`,
/// using `alpha = max |v|`.
pub fn solve(
    phi0: impl Fn(f64) -> f64,
    table: &HamiltonianTable,
    t_final: f64,
    space: SpaceGrid,
    dt: f64,
) -> Result<HjSolution, HjError> {
    if !(t_final > 0.0) {
        return Err(HjError::Time(t_final));
    }
    let alpha = table.max_speed;
    let mut field = ScalarField1D::sample(space, phi0)?;
    let n = (t_final / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let h = t_final / n as f64;
    let mut clamps = 0;
    for k in 0..n {
        let (next, c) = if k == 0 {
            lf_step(&field, table, h, alpha)?
        } else {
            step_unchecked(&field, table, h, alpha)
        };
        field = next;
        clamps += c;
    }
    field.t = t_final;
    Ok(HjSolution {
        field,
        steps: n,
        clamps,
    })
}

/// `min_y phi0(y) + t L((x - y) / t)` with `y` on a grid four times finer
/// than `space`, restricted to `|x - y| <= t max_speed`.
pub fn hopf_lax_oracle(
    phi0: impl Fn(f64) -> f64 + Sync,
    rate: &RateTable,
    t: f64,
    space: SpaceGrid,
    max_speed: f64,
) -> Result<Vec<f64>, HjError> {
    if !rate.is_convex(CONVEXITY_TOL) {
        return Err(HjError::NotConvex(rate.min_second_difference()));
    }
    if !(t > 0.0) {
        return Err(HjError::Time(t));
    }
    let dy = space.dx() / 4.0;
    let reach = (t * max_speed / dy).floor() as i64;
    let l: Vec<f64> = (-reach..=reach).map(|k| rate.value(k as f64 * dy / t).l).collect();
    Ok(space
        .nodes()
        .into_par_iter()
        .map(|x| {
            (-reach..=reach)
                .map(|k| phi0(x - k as f64 * dy) + t * l[(k + reach) as usize])
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}
