//! Direct simulation of the velocity-jump process: runs `X' = V`,
//! `V' = Gamma(V)` interrupted at unit rate by tumbles that redraw `V`
//! from `M`, and the empirical scaled cumulant generating function
//! `(1/t) log E exp(p . X_t)`.
//!
//! Trajectory `k` of an ensemble uses its own ChaCha8 stream seeded with
//! `base_seed + k`, so results do not depend on the thread schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use std::f64::consts::TAU;

use crate::flow::{FlowError, State, Stepper};
use crate::model::{chart_of, dot, embed, Chart, Kind, Vec3, VelocityModel};

/// Nodes of the cumulative tables on the interval and the ring.
pub const CDF_NODES: usize = 2048;
/// Smallest acceptable rejection-sampling acceptance ratio.
pub const MIN_ACCEPTANCE: f64 = 1e-3;
/// Smallest ensemble size.
pub const MIN_ENSEMBLE: usize = 1000;
/// Longest RK4 step during a run.
pub const MAX_RUN_STEP: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum PdmpError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("M is negative or not finite at {0:?}")]
    Density(Chart),
    #[error("M has zero mass")]
    ZeroMass,
    #[error("rejection sampling accepts only {0:e} of proposals")]
    Acceptance(f64),
    #[error("final time must be positive, got {0}")]
    Time(f64),
    #[error("ensembles need at least {MIN_ENSEMBLE} trajectories, got {0}")]
    Ensemble(usize),
}

/// Draws velocities with law `M`.
#[derive(Clone, Debug)]
pub enum VelocitySampler {
    /// Inverse of the piecewise linear cumulative distribution over `nodes`.
    Table { kind: Kind, nodes: Vec<f64>, cdf: Vec<f64> },
    /// Uniform proposals on the sphere accepted with probability `M / bound`.
    Rejection { bound: f64, acceptance: f64 },
}

impl VelocitySampler {
    pub fn new(model: &VelocityModel) -> Result<Self, PdmpError> {
        let m = |c: Chart| {
            let v = model.m_at(c);
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(PdmpError::Density(c))
            }
        };
        match model.kind() {
            Kind::Interval | Kind::Ring => {
                let (a, b) = if model.kind() == Kind::Interval {
                    (-1.0, 1.0)
                } else {
                    (0.0, TAU)
                };
                let h = (b - a) / (CDF_NODES - 1) as f64;
                let nodes: Vec<f64> = (0..CDF_NODES)
                    .map(|k| if k + 1 == CDF_NODES { b } else { a + k as f64 * h })
                    .collect();
                let dens = nodes.iter().map(|&v| m([v, 0.0])).collect::<Result<Vec<_>, _>>()?;
                let mut cdf = Vec::with_capacity(CDF_NODES);
                cdf.push(0.0);
                for k in 1..CDF_NODES {
                    cdf.push(cdf[k - 1] + 0.5 * (dens[k - 1] + dens[k]) * (nodes[k] - nodes[k - 1]));
                }
                let total = cdf[CDF_NODES - 1];
                if !(total > 0.0) {
                    return Err(PdmpError::ZeroMass);
                }
                cdf.iter_mut().for_each(|c| *c /= total);
                Ok(VelocitySampler::Table {
                    kind: model.kind(),
                    nodes,
                    cdf,
                })
            }
            Kind::Sphere => {
                let grid = model.validation_grid();
                let mut bound = 0.0f64;
                let mut mean = 0.0;
                for (c, w) in grid.nodes.iter().zip(&grid.weights) {
                    let v = m(*c)?;
                    bound = bound.max(v);
                    mean += w * v;
                }
                if !(bound > 0.0) {
                    return Err(PdmpError::ZeroMass);
                }
                // Headroom for maxima between the grid nodes.
                let bound = bound * 1.05;
                let acceptance = mean / bound;
                if acceptance < MIN_ACCEPTANCE {
                    return Err(PdmpError::Acceptance(acceptance));
                }
                Ok(VelocitySampler::Rejection { bound, acceptance })
            }
        }
    }

    /// Cumulative distribution at `v` (table samplers only).
    pub fn cdf(&self, v: f64) -> Option<f64> {
        match self {
            VelocitySampler::Table { nodes, cdf, .. } => {
                if v <= nodes[0] {
                    return Some(0.0);
                }
                if v >= nodes[nodes.len() - 1] {
                    return Some(1.0);
                }
                let k = nodes.partition_point(|&x| x <= v) - 1;
                let f = (v - nodes[k]) / (nodes[k + 1] - nodes[k]);
                Some(cdf[k] + f * (cdf[k + 1] - cdf[k]))
            }
            VelocitySampler::Rejection { .. } => None,
        }
    }

    pub fn sample(&self, model: &VelocityModel, rng: &mut impl Rng) -> Chart {
        match self {
            VelocitySampler::Table { kind, nodes, cdf } => {
                let u: f64 = rng.random();
                // First segment whose upper cumulative value exceeds u.
                let k = (cdf.partition_point(|&c| c <= u)).clamp(1, cdf.len() - 1) - 1;
                let span = cdf[k + 1] - cdf[k];
                let f = if span > 0.0 { ((u - cdf[k]) / span).clamp(0.0, 1.0) } else { 0.0 };
                let v = nodes[k] + f * (nodes[k + 1] - nodes[k]);
                match kind {
                    Kind::Ring if v >= TAU => [0.0, 0.0],
                    _ => [v, 0.0],
                }
            }
            VelocitySampler::Rejection { bound, .. } => loop {
                let mu: f64 = rng.random_range(-1.0..=1.0);
                let theta: f64 = rng.random_range(0.0..TAU);
                let c = [theta, mu.clamp(-1.0, 1.0).acos()];
                let u: f64 = rng.random();
                if u * bound < model.m_at(c) {
                    break c;
                }
            },
        }
    }
}

/// A recorded trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    /// Tumble times in `(0, t_final)`.
    pub jump_times: Vec<f64>,
    /// Position at each tumble.
    pub jump_positions: Vec<Vec3>,
    /// Velocity drawn at time zero and after each tumble.
    pub velocities: Vec<Vec3>,
    pub x_final: Vec3,
    pub v_final: Vec3,
}

/// Endpoint of one trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Endpoint {
    pub x: Vec3,
    pub v: Vec3,
    pub jumps: usize,
}

/// Moves `(x, v)` for `duration` along the run dynamics with RK4 steps
/// of at most `min(1e-2, duration / 10)`. One-dimensional velocity sets
/// are integrated in their chart coordinate, the sphere in ambient
/// coordinates with projection.
fn run_phase(model: &VelocityModel, x: &mut Vec3, v: &mut Chart, duration: f64) -> Result<(), FlowError> {
    let kind = model.kind();
    if model.force_free() {
        let u = embed(kind, *v);
        for k in 0..3 {
            x[k] += u[k] * duration;
        }
        return Ok(());
    }
    let h_max = MAX_RUN_STEP.min(duration / 10.0);
    let n = (duration / h_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let h = duration / n as f64;
    match kind {
        Kind::Interval | Kind::Ring => {
            let g = |a: f64| {
                let r = model.gamma_at([a, 0.0])[0];
                if r.is_finite() {
                    Ok(r)
                } else {
                    Err(FlowError::NonFinite([a, 0.0]))
                }
            };
            let speed = |a: f64| -> [f64; 2] {
                if kind == Kind::Interval {
                    [a, 0.0]
                } else {
                    [a.cos(), a.sin()]
                }
            };
            let mut a = v[0];
            for _ in 0..n {
                let k1 = g(a)?;
                let k2 = g(a + 0.5 * h * k1)?;
                let k3 = g(a + 0.5 * h * k2)?;
                let k4 = g(a + h * k3)?;
                let (s1, s2, s3, s4) = (
                    speed(a),
                    speed(a + 0.5 * h * k1),
                    speed(a + 0.5 * h * k2),
                    speed(a + h * k3),
                );
                for d in 0..2 {
                    x[d] += h / 6.0 * (s1[d] + 2.0 * s2[d] + 2.0 * s3[d] + s4[d]);
                }
                a += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                if kind == Kind::Interval {
                    a = a.clamp(-1.0, 1.0);
                }
            }
            v[0] = a;
        }
        Kind::Sphere => {
            let stepper = Stepper {
                model,
                sign: 1.0,
                rate: no_rate,
            };
            let y = embed(kind, *v);
            let mut s: State = [y[0], y[1], y[2], 0.0, x[0], x[1], x[2], 0.0];
            for _ in 0..n {
                s = stepper.step(&s, h)?;
            }
            *v = chart_of(kind, [s[0], s[1], s[2]]);
            *x = [s[4], s[5], s[6]];
        }
    }
    Ok(())
}

fn no_rate(_: Chart) -> f64 {
    0.0
}

/// Shared driver; `record` sees every tumble as `(t, x, v_new)`.
fn simulate_with(
    model: &VelocityModel,
    sampler: &VelocitySampler,
    t_final: f64,
    seed: u64,
    mut record: impl FnMut(f64, Vec3, Vec3),
) -> Result<Endpoint, PdmpError> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(PdmpError::Time(t_final));
    }
    let kind = model.kind();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = [0.0; 3];
    let mut v = sampler.sample(model, &mut rng);
    record(0.0, x, embed(kind, v));
    let mut t = 0.0;
    let mut jumps = 0;
    loop {
        let gap: f64 = rng.sample(Exp1);
        if t + gap >= t_final {
            run_phase(model, &mut x, &mut v, t_final - t)?;
            break;
        }
        run_phase(model, &mut x, &mut v, gap)?;
        t += gap;
        v = sampler.sample(model, &mut rng);
        jumps += 1;
        record(t, x, embed(kind, v));
    }
    Ok(Endpoint {
        x,
        v: embed(kind, v),
        jumps,
    })
}

/// One trajectory on `[0, t_final]` from `X = 0` with `V` drawn from `M`.
pub fn simulate_one(model: &VelocityModel, t_final: f64, seed: u64) -> Result<Trajectory, PdmpError> {
    let sampler = VelocitySampler::new(model)?;
    simulate_recorded(model, &sampler, t_final, seed)
}

pub fn simulate_recorded(
    model: &VelocityModel,
    sampler: &VelocitySampler,
    t_final: f64,
    seed: u64,
) -> Result<Trajectory, PdmpError> {
    let mut jump_times = Vec::new();
    let mut jump_positions = Vec::new();
    let mut velocities = Vec::new();
    let end = simulate_with(model, sampler, t_final, seed, |t, x, v| {
        if t > 0.0 {
            jump_times.push(t);
            jump_positions.push(x);
        }
        velocities.push(v);
    })?;
    Ok(Trajectory {
        seed,
        jump_times,
        jump_positions,
        velocities,
        x_final: end.x,
        v_final: end.v,
    })
}

/// Endpoint only, without recording the path.
pub fn simulate_endpoint(
    model: &VelocityModel,
    sampler: &VelocitySampler,
    t_final: f64,
    seed: u64,
) -> Result<Endpoint, PdmpError> {
    simulate_with(model, sampler, t_final, seed, |_, _, _| {})
}

/// `Lambda(p)` with its jackknife standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgfEstimate {
    pub p: Vec3,
    pub value: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub n: usize,
    pub t_final: f64,
    pub base_seed: u64,
    /// Mean of `X_t / t` and its standard error.
    pub mean: Vec3,
    pub mean_se: Vec3,
    /// Covariance of `X_t / sqrt(t)`.
    pub covariance: [[f64; 3]; 3],
    /// Mean number of tumbles per unit time.
    pub jump_rate: f64,
    pub cgf: Vec<CgfEstimate>,
    pub endpoints: Vec<Endpoint>,
}

/// `(1/t) log((1/n) sum exp(a_k))` and its jackknife standard error,
/// shifted by `max a` before exponentiating.
pub fn log_mean_exp(a: &[f64], t: f64) -> (f64, f64) {
    let n = a.len();
    let shift = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = a.iter().map(|&x| (x - shift).exp()).collect();
    let sum: f64 = e.iter().sum();
    let value = (shift + (sum / n as f64).ln()) / t;
    if n < 2 {
        return (value, f64::NAN);
    }
    let loo: Vec<f64> = e
        .iter()
        .map(|&ek| (shift + ((sum - ek).max(0.0) / (n - 1) as f64).ln()) / t)
        .collect();
    let mean = loo.iter().sum::<f64>() / n as f64;
    let var = loo.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>();
    (value, ((n - 1) as f64 / n as f64 * var).sqrt())
}

/// Simulates `n` trajectories with seeds `base_seed + k` and reduces them
/// in index order.
pub fn ensemble(
    model: &VelocityModel,
    n: usize,
    t_final: f64,
    p_list: &[Vec3],
    base_seed: u64,
) -> Result<EnsembleStats, PdmpError> {
    if n < MIN_ENSEMBLE {
        return Err(PdmpError::Ensemble(n));
    }
    let sampler = VelocitySampler::new(model)?;
    let endpoints = (0..n)
        .into_par_iter()
        .map(|k| simulate_endpoint(model, &sampler, t_final, base_seed.wrapping_add(k as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(reduce(endpoints, t_final, p_list, base_seed))
}

fn reduce(endpoints: Vec<Endpoint>, t: f64, p_list: &[Vec3], base_seed: u64) -> EnsembleStats {
    let n = endpoints.len();
    let nf = n as f64;
    let mut mean = [0.0; 3];
    for e in &endpoints {
        for k in 0..3 {
            mean[k] += e.x[k] / t;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut covariance = [[0.0; 3]; 3];
    let rt = t.sqrt();
    let centre = mean.map(|m| m * t / rt);
    for e in &endpoints {
        let y = e.x.map(|x| x / rt);
        for a in 0..3 {
            for b in 0..3 {
                covariance[a][b] += (y[a] - centre[a]) * (y[b] - centre[b]);
            }
        }
    }
    covariance.iter_mut().flatten().for_each(|c| *c /= nf - 1.0);
    // Var(X/t) = Var(X/sqrt(t)) / t.
    let mean_se = [0, 1, 2].map(|k| (covariance[k][k] / t / nf).sqrt());
    let jump_rate = endpoints.iter().map(|e| e.jumps as f64).sum::<f64>() / nf / t;
    let cgf = p_list
        .iter()
        .map(|&p| {
            let a: Vec<f64> = endpoints.iter().map(|e| dot(p, e.x)).collect();
            let (value, se) = log_mean_exp(&a, t);
            CgfEstimate { p, value, se }
        })
        .collect();
    EnsembleStats {
        n,
        t_final: t,
        base_seed,
        mean,
        mean_se,
        covariance,
        jump_rate,
        cgf,
        endpoints,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn interval(m: &str, g: &str) -> VelocityModel {
        VelocityModel::new(Kind::Interval, parse(m).unwrap(), vec![parse(g).unwrap()], None).unwrap()
    }

    #[test]
    fn zero_momentum_cgf_is_exactly_zero() {
        let (v, se) = log_mean_exp(&[0.0; 50], 3.0);
        assert_eq!(v, 0.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn log_mean_exp_survives_large_exponents() {
        let (v, _) = log_mean_exp(&[1000.0, 1000.0], 1.0);
        assert!((v - 1000.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_cdf_is_linear() {
        let m = interval("1/2", "0");
        let s = VelocitySampler::new(&m).unwrap();
        for v in [-1.0, -0.3, 0.0, 0.77, 1.0] {
            assert!((s.cdf(v).unwrap() - 0.5 * (v + 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn force_free_runs_are_straight() {
        let m = interval("1/2", "0");
        let tr = simulate_one(&m, 7.5, 11).unwrap();
        let mut x = 0.0;
        let mut t = 0.0;
        for (k, v) in tr.velocities.iter().enumerate() {
            let end = tr.jump_times.get(k).copied().unwrap_or(7.5);
            x += v[0] * (end - t);
            t = end;
        }
        assert!((x - tr.x_final[0]).abs() < 1e-12);
        assert_eq!(tr.velocities.len(), tr.jump_times.len() + 1);
    }

    #[test]
    fn same_seed_same_path() {
        let m = interval("1/2", "0.2*(1-v^2)");
        let a = simulate_one(&m, 5.0, 3).unwrap();
        let b = simulate_one(&m, 5.0, 3).unwrap();
        assert_eq!(a, b);
        let c = simulate_one(&m, 5.0, 4).unwrap();
        assert_ne!(a.x_final, c.x_final);
    }

    #[test]
    fn small_ensembles_are_refused() {
        let m = interval("1/2", "0");
        assert!(matches!(ensemble(&m, 10, 1.0, &[], 0), Err(PdmpError::Ensemble(10))));
    }
}
