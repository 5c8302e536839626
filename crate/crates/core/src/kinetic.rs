//! The scaled kinetic equation
//! `f_t + v f_x + div_v(Gamma f) / eps = (M rho - f) / eps`
//! on a periodic interval in `x`, and its Hopf-Cole transform
//! `phi = -eps log(f / M~)`.
//!
//! A step is split as half an `x`-transport, a full implicit velocity step
//! and another half `x`-transport. The `x`-transport is semi-Lagrangian
//! with four-point cubic interpolation, which conserves the discrete mass
//! of every velocity column up to rounding; a single global factor removes
//! the rounding. The velocity step solves
//! `(1 + c) f' + c D f' = f + c M rho` with `c = dt / eps`, `D` the upwind
//! divergence used for `M~` and `rho` taken from the incoming `f`. It is
//! positive, conserves the mass of every `x`-row and keeps `M~ rho` fixed.

use rayon::prelude::*;

use crate::linalg::{Factorization, SingularMatrix};
use crate::model::{Kind, ModelError, VelocityGrid, VelocityModel};
use crate::stationary::{StationaryProfile, UpwindDivergence};

/// Relative rounding allowed on `f / M~` when checking the a priori bounds.
pub const BOUND_ROUNDING: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum KineticError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Singular(#[from] SingularMatrix),
    #[error("kinetic runs need an interval or ring velocity set, got {0}")]
    Kind(Kind),
    #[error("epsilon must be positive, got {0}")]
    Epsilon(f64),
    #[error("time step {dt} violates the CFL limit {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("the space grid needs a positive length and at least 8 nodes, got L = {length}, nx = {nx}")]
    Space { length: f64, nx: usize },
    #[error("initial potential is {value} < 0 at x = {x}")]
    NegativeInitial { x: f64, value: f64 },
    #[error("initial potential is not finite at x = {0}")]
    NonFiniteInitial(f64),
    #[error("f = {value:e} is not positive at x node {j}, velocity node {i}")]
    NonPositive { j: usize, i: usize, value: f64 },
    #[error("the profile was computed on a different velocity grid")]
    Grid,
}

/// Uniform periodic nodes `x_j = j L / nx` on `[0, L)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceGrid {
    pub length: f64,
    pub nx: usize,
}

impl SpaceGrid {
    pub fn new(length: f64, nx: usize) -> Result<Self, KineticError> {
        if !(length > 0.0 && length.is_finite()) || nx < 8 {
            return Err(KineticError::Space { length, nx });
        }
        Ok(SpaceGrid { length, nx })
    }

    pub fn dx(&self) -> f64 {
        self.length / self.nx as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.nx).map(|j| self.x(j)).collect()
    }
}

/// The density `f_{j,i}` at `x_j` and velocity node `i`, stored with the
/// velocity index fastest.
#[derive(Clone, Debug)]
pub struct PhaseField {
    pub t: f64,
    pub eps: f64,
    pub space: SpaceGrid,
    pub velocities: VelocityGrid,
    pub f: Vec<f64>,
}

impl PhaseField {
    pub fn nv(&self) -> usize {
        self.velocities.len()
    }

    pub fn at(&self, j: usize, i: usize) -> f64 {
        self.f[j * self.nv() + i]
    }

    /// `rho_j = sum_i w_i f_{j,i}`.
    pub fn density(&self) -> Vec<f64> {
        self.f.chunks(self.nv()).map(|row| self.velocities.integrate(row)).collect()
    }

    /// `sum_j dx sum_i w_i f_{j,i}`.
    pub fn mass(&self) -> f64 {
        self.space.dx() * self.density().iter().sum::<f64>()
    }

    pub fn min(&self) -> f64 {
        self.f.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `phi^eps_{j,i}` with the same layout as [`PhaseField`].
#[derive(Clone, Debug)]
pub struct PotentialField {
    pub t: f64,
    pub eps: f64,
    pub space: SpaceGrid,
    pub velocities: VelocityGrid,
    pub phi: Vec<f64>,
}

impl PotentialField {
    pub fn nv(&self) -> usize {
        self.velocities.len()
    }

    pub fn at(&self, j: usize, i: usize) -> f64 {
        self.phi[j * self.nv() + i]
    }

    pub fn min(&self) -> f64 {
        self.phi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.phi.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Velocity average `int phi dv / int dv` at every `x` node.
    pub fn velocity_average(&self) -> Vec<f64> {
        let total: f64 = self.velocities.weights.iter().sum();
        self.phi
            .chunks(self.nv())
            .map(|row| self.velocities.integrate(row) / total)
            .collect()
    }

    /// `max_x (max_v phi - min_v phi)`.
    pub fn velocity_spread(&self) -> f64 {
        self.phi
            .chunks(self.nv())
            .map(|row| {
                let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
                hi - lo
            })
            .fold(0.0, f64::max)
    }
}

fn check_kind(kind: Kind) -> Result<(), KineticError> {
    match kind {
        Kind::Interval | Kind::Ring => Ok(()),
        Kind::Sphere => Err(KineticError::Kind(kind)),
    }
}

/// Speed along the spatial axis at every velocity node.
fn spatial_speeds(grid: &VelocityGrid) -> Vec<f64> {
    grid.points.iter().map(|p| p[0]).collect()
}

/// `f_{j,i} = M~_i exp(-phi0(x_j) / eps)`.
pub fn init_well_prepared(
    profile: &StationaryProfile,
    phi0: impl Fn(f64) -> f64,
    eps: f64,
    space: SpaceGrid,
) -> Result<PhaseField, KineticError> {
    check_kind(profile.grid().kind)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(KineticError::Epsilon(eps));
    }
    let m_tilde = profile.values();
    let mut f = Vec::with_capacity(space.nx * m_tilde.len());
    for x in space.nodes() {
        let p = phi0(x);
        if !p.is_finite() {
            return Err(KineticError::NonFiniteInitial(x));
        }
        if p < 0.0 {
            return Err(KineticError::NegativeInitial { x, value: p });
        }
        let e = (-p / eps).exp();
        f.extend(m_tilde.iter().map(|m| m * e));
    }
    Ok(PhaseField {
        t: 0.0,
        eps,
        space,
        velocities: profile.grid().clone(),
        f,
    })
}

/// `phi = -eps log(f / M~)`.
pub fn hopf_cole(field: &PhaseField, profile: &StationaryProfile) -> Result<PotentialField, KineticError> {
    let m_tilde = profile.values();
    let nv = field.nv();
    if m_tilde.len() != nv {
        return Err(KineticError::Grid);
    }
    let mut phi = Vec::with_capacity(field.f.len());
    for (k, &f) in field.f.iter().enumerate() {
        if !(f > 0.0) {
            return Err(KineticError::NonPositive {
                j: k / nv,
                i: k % nv,
                value: f,
            });
        }
        phi.push(-field.eps * (f / m_tilde[k % nv]).ln());
    }
    Ok(PotentialField {
        t: field.t,
        eps: field.eps,
        space: field.space,
        velocities: field.velocities.clone(),
        phi,
    })
}

/// The upper a priori bound `||phi0|| + (max M / min M~) t`.
pub fn apriori_upper(profile: &StationaryProfile, phi0_max: f64, t: f64) -> f64 {
    let max_m = profile.m_values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    phi0_max + max_m / profile.min() * t
}

/// Distance to the a priori bounds, `min(min phi, upper - max phi)`;
/// negative when a bound fails.
pub fn bound_margin(potential: &PotentialField, upper: f64) -> f64 {
    potential.min().min(upper - potential.max())
}

/// Whether `0 <= phi <= upper` up to [`BOUND_ROUNDING`] on `f / M~`.
pub fn bounds_hold(potential: &PotentialField, upper: f64) -> bool {
    bound_margin(potential, upper) >= -potential.eps * BOUND_ROUNDING
}

/// Interpolation stencil for a shift by `s` cells: the value at `x_j - s`
/// is `sum_k w[k] f[j + offset + k]`, and `anchor` is the stencil entry
/// closest to the foot point.
#[derive(Clone, Copy, Debug)]
struct Stencil {
    offset: isize,
    w: [f64; 4],
    anchor: usize,
}

impl Stencil {
    fn new(s: f64) -> Stencil {
        let q = s.floor();
        // Foot point lies at base + t with base = j - q - 1 and t in (0, 1].
        let t = 1.0 - (s - q);
        let w = [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ];
        Stencil {
            offset: -(q as isize) - 2,
            w,
            anchor: if t > 0.5 { 2 } else { 1 },
        }
    }

    /// Written around the anchor value so constants are reproduced exactly.
    fn apply(&self, column: &[f64], j: usize) -> f64 {
        let n = column.len() as isize;
        let at = |k: usize| column[(j as isize + self.offset + k as isize).rem_euclid(n) as usize];
        let a = at(self.anchor);
        let mut v = a;
        for k in 0..4 {
            if k != self.anchor {
                v += self.w[k] * (at(k) - a);
            }
        }
        v
    }
}

/// Precomputed operators for one `(eps, dt)` pair.
pub struct KineticStepper {
    eps: f64,
    dt: f64,
    nv: usize,
    m: Vec<f64>,
    weights: Vec<f64>,
    half_shift: Vec<Stencil>,
    velocity: Factorization,
}

impl KineticStepper {
    /// Fails when `dt > 0.9 dx / max |v|`.
    pub fn new(
        model: &VelocityModel,
        profile: &StationaryProfile,
        eps: f64,
        dt: f64,
        space: SpaceGrid,
    ) -> Result<Self, KineticError> {
        let grid = profile.grid();
        check_kind(grid.kind)?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(KineticError::Epsilon(eps));
        }
        let speeds = spatial_speeds(grid);
        let vmax = speeds.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let limit = cfl_limit(space, vmax);
        if !(dt > 0.0 && dt <= limit) {
            return Err(KineticError::Cfl { dt, limit });
        }
        let c = dt / eps;
        let d = UpwindDivergence::new(model, grid)?;
        let velocity = d.factor_shifted(1.0 + c, c)?;
        let half_shift = speeds.iter().map(|v| Stencil::new(0.5 * v * dt / space.dx())).collect();
        Ok(KineticStepper {
            eps,
            dt,
            nv: grid.len(),
            m: profile.m_values().to_vec(),
            weights: grid.weights.clone(),
            half_shift,
            velocity,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn transport_x(&self, field: &mut PhaseField) {
        let nx = field.space.nx;
        let nv = self.nv;
        let before = field.mass();
        let columns: Vec<Vec<f64>> = (0..nv)
            .into_par_iter()
            .map(|i| {
                let col: Vec<f64> = (0..nx).map(|j| field.f[j * nv + i]).collect();
                let st = &self.half_shift[i];
                (0..nx).map(|j| st.apply(&col, j)).collect()
            })
            .collect();
        for (i, col) in columns.iter().enumerate() {
            for (j, v) in col.iter().enumerate() {
                field.f[j * nv + i] = *v;
            }
        }
        rescale(field, before);
    }

    fn relax_v(&self, field: &mut PhaseField) {
        let c = self.dt / self.eps;
        let before = field.mass();
        field.f.par_chunks_mut(self.nv).for_each(|row| {
            let rho: f64 = self.weights.iter().zip(row.iter()).map(|(w, f)| w * f).sum();
            for (f, m) in row.iter_mut().zip(&self.m) {
                *f += c * m * rho;
            }
            self.velocity.solve_in_place(row);
        });
        rescale(field, before);
    }

    /// One full step.
    pub fn step(&self, field: &mut PhaseField) -> Result<(), KineticError> {
        if field.nv() != self.nv {
            return Err(KineticError::Grid);
        }
        self.transport_x(field);
        self.relax_v(field);
        self.transport_x(field);
        field.t += self.dt;
        Ok(())
    }
}

/// Largest admissible time step, `0.9 dx / max |v|`.
pub fn cfl_limit(space: SpaceGrid, max_speed: f64) -> f64 {
    if max_speed > 0.0 {
        0.9 * space.dx() / max_speed
    } else {
        f64::INFINITY
    }
}

fn rescale(field: &mut PhaseField, target: f64) {
    let after = field.mass();
    if after != target && after > 0.0 {
        let k = target / after;
        field.f.iter_mut().for_each(|f| *f *= k);
    }
}

/// One step with a freshly built stepper.
pub fn step(
    field: &mut PhaseField,
    model: &VelocityModel,
    profile: &StationaryProfile,
    dt: f64,
) -> Result<(), KineticError> {
    KineticStepper::new(model, profile, field.eps, dt, field.space)?.step(field)
}

/// Settings of a kinetic run.
#[derive(Clone, Debug, PartialEq)]
pub struct KineticConfig {
    pub eps: f64,
    pub t_final: f64,
    /// Largest time step; the run uses equal steps no larger than this.
    pub dt: f64,
    pub space: SpaceGrid,
    /// Snapshot times in `(0, t_final]`; the initial state is always kept.
    pub snapshots: Vec<f64>,
}

/// Per-step diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KineticDiagnostic {
    pub t: f64,
    pub mass: f64,
    pub min_f: f64,
    pub bound_margin: f64,
}

#[derive(Clone, Debug)]
pub struct KineticRun {
    pub snapshots: Vec<PotentialField>,
    /// The densities behind `snapshots`.
    pub densities: Vec<PhaseField>,
    pub diagnostics: Vec<KineticDiagnostic>,
    pub final_field: PhaseField,
    /// `max phi0` used in the upper bound.
    pub phi0_max: f64,
}

impl KineticRun {
    /// Whether every snapshot satisfies the a priori bounds.
    pub fn bounds_hold(&self, profile: &StationaryProfile) -> bool {
        self.snapshots
            .iter()
            .all(|s| bounds_hold(s, apriori_upper(profile, self.phi0_max, s.t)))
    }

    /// Largest relative deviation of the mass from its initial value.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.diagnostics[0].mass;
        self.diagnostics
            .iter()
            .map(|d| ((d.mass - m0) / m0).abs())
            .fold(0.0, f64::max)
    }
}

fn diagnose(field: &PhaseField, profile: &StationaryProfile, phi0_max: f64) -> Result<KineticDiagnostic, KineticError> {
    let pot = hopf_cole(field, profile)?;
    Ok(KineticDiagnostic {
        t: field.t,
        mass: field.mass(),
        min_f: field.min(),
        bound_margin: bound_margin(&pot, apriori_upper(profile, phi0_max, field.t)),
    })
}

/// Runs from well-prepared data to `t_final`, stepping exactly onto every
/// snapshot time.
pub fn run(
    model: &VelocityModel,
    profile: &StationaryProfile,
    phi0: impl Fn(f64) -> f64,
    config: &KineticConfig,
) -> Result<KineticRun, KineticError> {
    let mut field = init_well_prepared(profile, &phi0, config.eps, config.space)?;
    let phi0_max = config.space.nodes().into_iter().map(&phi0).fold(0.0, f64::max);
    let mut stops: Vec<f64> = config
        .snapshots
        .iter()
        .copied()
        .filter(|&t| t > 0.0 && t < config.t_final)
        .collect();
    stops.push(config.t_final);
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let mut snapshots = vec![hopf_cole(&field, profile)?];
    let mut densities = vec![field.clone()];
    let mut diagnostics = vec![diagnose(&field, profile, phi0_max)?];
    let mut steppers: Vec<KineticStepper> = Vec::new();
    let mut t0 = 0.0;
    for &stop in &stops {
        let span = stop - t0;
        let n = (span / config.dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dt = span / n as f64;
        let stepper = match steppers.iter().position(|s| s.dt == dt) {
            Some(k) => &steppers[k],
            None => {
                steppers.push(KineticStepper::new(model, profile, config.eps, dt, config.space)?);
                steppers.last().unwrap()
            }
        };
        for k in 0..n {
            stepper.step(&mut field)?;
            field.t = t0 + (k + 1) as f64 * dt;
            diagnostics.push(diagnose(&field, profile, phi0_max)?);
        }
        field.t = stop;
        t0 = stop;
        snapshots.push(hopf_cole(&field, profile)?);
        densities.push(field.clone());
    }
    Ok(KineticRun {
        snapshots,
        densities,
        diagnostics,
        final_field: field,
        phi0_max,
    })
}
