//! The flow of `-Gamma` on the velocity set and its omega-limit sets.
//!
//! Trajectories are integrated with classical RK4 in ambient coordinates and
//! projected back onto the manifold after every step, which avoids the chart
//! singularities at the sphere poles. Omega-limits are detected either as a
//! fixed point (the force stays below `1e-9` for 100 consecutive steps) or as
//! a periodic orbit (a return to a moving Poincare section within `1e-8`).

use rayon::prelude::*;

use crate::model::{chart_of, dist, dot, embed, norm, project, Chart, Kind, Vec3, VelocityModel};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_T_MAX: f64 = 1e4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowControls {
    pub dt: f64,
    /// Give up on classification after this much time.
    pub t_max: f64,
    /// Force magnitude below which a point counts as stationary.
    pub fixed_tol: f64,
    /// Consecutive stationary steps required for a fixed point.
    pub fixed_steps: usize,
    /// Section return distance that closes a periodic orbit.
    pub return_tol: f64,
}

impl Default for FlowControls {
    fn default() -> Self {
        FlowControls {
            dt: DEFAULT_DT,
            t_max: DEFAULT_T_MAX,
            fixed_tol: 1e-9,
            fixed_steps: 100,
            return_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("force field is not finite at {0:?}")]
    NonFinite(Chart),
    #[error("no fixed point or periodic orbit reached from {start:?} within t = {t_max}")]
    Unclassified { start: Chart, t_max: f64 },
    #[error("invalid time step {0}")]
    Step(f64),
}

/// Integrator state: ambient point, then `integral of rate`, then
/// `integral of the point` (three components), then padding.
pub(crate) type State = [f64; 8];

pub(crate) fn state_point(s: &State) -> Vec3 {
    [s[0], s[1], s[2]]
}

/// RK4 for `y' = sign * Gamma(y)` augmented with the running integrals of a
/// scalar rate and of the position.
pub(crate) struct Stepper<'a, R> {
    pub model: &'a VelocityModel,
    pub sign: f64,
    pub rate: R,
}

impl<R: Fn(Chart) -> f64> Stepper<'_, R> {
    #[inline]
    pub(crate) fn deriv(&self, s: &State) -> Result<State, FlowError> {
        let kind = self.model.kind();
        let y = state_point(s);
        let c = chart_of(kind, y);
        let g = self.model.gamma_embedded(c);
        let r = (self.rate)(c);
        if !(g[0].is_finite() && g[1].is_finite() && g[2].is_finite() && r.is_finite()) {
            return Err(FlowError::NonFinite(c));
        }
        let k = self.sign;
        Ok([k * g[0], k * g[1], k * g[2], r, y[0], y[1], y[2], 0.0])
    }

    #[inline]
    pub fn step(&self, s: &State, h: f64) -> Result<State, FlowError> {
        self.step_from(s, &self.deriv(s)?, h)
    }

    /// One step when the derivative at `s` is already known.
    #[inline]
    pub fn step_from(&self, s: &State, k1: &State, h: f64) -> Result<State, FlowError> {
        let axpy = |a: &State, k: &State, f: f64| -> State {
            let mut o = *a;
            for i in 0..7 {
                o[i] += f * k[i];
            }
            o
        };
        let k2 = self.deriv(&axpy(s, k1, 0.5 * h))?;
        let k3 = self.deriv(&axpy(s, &k2, 0.5 * h))?;
        let k4 = self.deriv(&axpy(s, &k3, h))?;
        let mut o = *s;
        for i in 0..7 {
            o[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let p = project(self.model.kind(), state_point(&o));
        o[..3].copy_from_slice(&p);
        Ok(o)
    }
}

/// Points of a trajectory sampled every `dt`.
#[derive(Clone, Debug)]
pub struct FlowTrace {
    pub start: Chart,
    pub dt: f64,
    pub points: Vec<Chart>,
    pub embedded: Vec<Vec3>,
    pub duration: f64,
}

/// Integrates `v' = -Gamma(v)` from `v0` for `duration` with RK4 steps of
/// `dt` (the last step is shortened to land on `duration`).
pub fn integrate_flow(
    model: &VelocityModel,
    v0: Chart,
    duration: f64,
    dt: f64,
) -> Result<FlowTrace, FlowError> {
    integrate_signed(model, v0, duration, dt, -1.0)
}

/// Integrates the forward field `v' = Gamma(v)`.
pub fn integrate_forward(
    model: &VelocityModel,
    v0: Chart,
    duration: f64,
    dt: f64,
) -> Result<FlowTrace, FlowError> {
    integrate_signed(model, v0, duration, dt, 1.0)
}

fn integrate_signed(
    model: &VelocityModel,
    v0: Chart,
    duration: f64,
    dt: f64,
    sign: f64,
) -> Result<FlowTrace, FlowError> {
    if !(dt > 0.0 && dt.is_finite()) || !(duration >= 0.0) {
        return Err(FlowError::Step(dt));
    }
    let kind = model.kind();
    let stepper = Stepper {
        model,
        sign,
        rate: |_: Chart| 0.0,
    };
    let y0 = embed(kind, v0);
    let mut s: State = [y0[0], y0[1], y0[2], 0.0, 0.0, 0.0, 0.0, 0.0];
    let mut points = vec![v0];
    let mut embedded = vec![y0];
    let mut t = 0.0;
    let n = (duration / dt).round() as usize;
    for k in 0..n {
        let h = if k + 1 == n { duration - t } else { dt };
        if h <= 0.0 {
            break;
        }
        s = stepper.step(&s, h)?;
        t += h;
        let y = state_point(&s);
        embedded.push(y);
        points.push(chart_of(kind, y));
    }
    if n == 0 && duration > 0.0 {
        s = stepper.step(&s, duration)?;
        let y = state_point(&s);
        embedded.push(y);
        points.push(chart_of(kind, y));
    }
    Ok(FlowTrace {
        start: v0,
        dt,
        points,
        embedded,
        duration,
    })
}

/// A fixed point or a periodic orbit of the flow.
#[derive(Clone, Debug, PartialEq)]
pub enum OmegaLimit {
    FixedPoint {
        w: Vec3,
        chart: Chart,
    },
    PeriodicOrbit {
        /// Closed polyline, first point repeated at the end.
        points: Vec<Vec3>,
        times: Vec<f64>,
        period: f64,
        /// Time average of the position over one period.
        mean: Vec3,
    },
}

impl OmegaLimit {
    /// Time average of `f` on the limit set.
    pub fn average(&self, f: impl Fn(Vec3) -> f64) -> f64 {
        match self {
            OmegaLimit::FixedPoint { w, .. } => f(*w),
            OmegaLimit::PeriodicOrbit {
                points,
                times,
                period,
                ..
            } => {
                let mut sum = 0.0;
                let mut prev = f(points[0]);
                for i in 1..points.len() {
                    let cur = f(points[i]);
                    sum += 0.5 * (prev + cur) * (times[i] - times[i - 1]);
                    prev = cur;
                }
                sum / period
            }
        }
    }

    /// Average position on the limit set.
    pub fn mean(&self) -> Vec3 {
        match self {
            OmegaLimit::FixedPoint { w, .. } => *w,
            OmegaLimit::PeriodicOrbit { mean, .. } => *mean,
        }
    }

    pub fn is_fixed_point(&self) -> bool {
        matches!(self, OmegaLimit::FixedPoint { .. })
    }

    pub fn describe(&self) -> String {
        match self {
            OmegaLimit::FixedPoint { chart, .. } => format!("fixed point at {chart:?}"),
            OmegaLimit::PeriodicOrbit { period, mean, .. } => {
                format!("periodic orbit of period {period:.6} centred at {mean:?}")
            }
        }
    }

    pub(crate) fn same_as(&self, other: &OmegaLimit) -> bool {
        match (self, other) {
            (OmegaLimit::FixedPoint { w: a, .. }, OmegaLimit::FixedPoint { w: b, .. }) => {
                dist(*a, *b) < 1e-6
            }
            (
                OmegaLimit::PeriodicOrbit {
                    points: pa,
                    period: ta,
                    mean: ma,
                    ..
                },
                OmegaLimit::PeriodicOrbit {
                    points: pb,
                    period: tb,
                    mean: mb,
                    ..
                },
            ) => {
                (ta - tb).abs() <= 1e-4 * ta.max(*tb)
                    && dist(*ma, *mb) < 1e-4
                    && hausdorff(pa, pb) < 1e-5
            }
            _ => false,
        }
    }
}

fn point_segment(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let l2 = dot(ab, ab);
    let t = if l2 > 0.0 { (dot(ap, ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]])
}

fn directed(sample: &[Vec3], line: &[Vec3]) -> f64 {
    let step = (sample.len() / 64).max(1);
    sample
        .iter()
        .step_by(step)
        .map(|&p| {
            line.windows(2)
                .map(|s| point_segment(p, s[0], s[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between two polylines, measured from 64
/// subsampled vertices of each to the segments of the other.
pub fn hausdorff(a: &[Vec3], b: &[Vec3]) -> f64 {
    directed(a, b).max(directed(b, a))
}

/// Events reported by [`walk`].
pub(crate) enum Event<'a> {
    Step(f64, &'a State),
    /// A new Poincare section anchor, placed at a refined crossing.
    Anchor(f64, &'a State),
}

/// How a walk ended.
pub(crate) enum WalkEnd {
    Fixed {
        t: f64,
        state: State,
        w: Vec3,
    },
    Periodic {
        t: f64,
        state: State,
        period: f64,
    },
    Stopped,
}

/// Follows the flow of `-Gamma` from `y0` until an omega-limit is recognised
/// or `visit` returns `false`.
pub(crate) fn walk<R, F>(
    model: &VelocityModel,
    y0: Vec3,
    ctl: &FlowControls,
    rate: R,
    mut visit: F,
) -> Result<WalkEnd, FlowError>
where
    R: Fn(Chart) -> f64,
    F: FnMut(Event) -> bool,
{
    let kind = model.kind();
    let stepper = Stepper {
        model,
        sign: -1.0,
        rate,
    };
    let y0 = project(kind, y0);
    let mut s: State = [y0[0], y0[1], y0[2], 0.0, 0.0, 0.0, 0.0, 0.0];
    let mut t = 0.0;
    if !visit(Event::Step(t, &s)) {
        return Ok(WalkEnd::Stopped);
    }
    if model.force_free() {
        return Ok(WalkEnd::Fixed { t, state: s, w: y0 });
    }
    let periodic_possible = kind != Kind::Interval;
    // (anchor point, section normal, anchor time)
    let mut anchor: Option<(Vec3, Vec3, f64)> = None;
    let try_anchor = |y: Vec3, t: f64| -> Option<(Vec3, Vec3, f64)> {
        let g = model.gamma_at_point(y);
        (norm(g) > ctl.fixed_tol).then(|| (y, [-g[0], -g[1], -g[2]], t))
    };
    if periodic_possible {
        anchor = try_anchor(y0, 0.0);
    }
    let mut calm = 0usize;
    let max_steps = (ctl.t_max / ctl.dt).ceil() as u64;
    let mut steps = 0u64;
    let mut k1 = stepper.deriv(&s)?;
    loop {
        if steps >= max_steps {
            return Err(FlowError::Unclassified {
                start: chart_of(kind, y0),
                t_max: ctl.t_max,
            });
        }
        let next = stepper.step_from(&s, &k1, ctl.dt)?;
        let k_next = stepper.deriv(&next)?;
        // The first three components are -Gamma at the new point.
        let g_next = [k_next[0], k_next[1], k_next[2]];
        let t_next = t + ctl.dt;
        steps += 1;
        if periodic_possible {
            match anchor {
                Some((ya, n, ta)) => {
                    let side = |st: &State| dot(sub(state_point(st), ya), n);
                    if side(&s) < 0.0 && side(&next) >= 0.0 {
                        let (tau, sc) = refine_crossing(&stepper, &s, ctl.dt, &side)?;
                        let tc = t + tau;
                        let yc = state_point(&sc);
                        if dist(yc, ya) <= ctl.return_tol {
                            visit(Event::Step(tc, &sc));
                            return Ok(WalkEnd::Periodic {
                                t: tc,
                                state: sc,
                                period: tc - ta,
                            });
                        }
                        anchor = try_anchor(yc, tc);
                        if anchor.is_some() && !visit(Event::Anchor(tc, &sc)) {
                            return Ok(WalkEnd::Stopped);
                        }
                    }
                }
                None => {
                    if norm(g_next) > ctl.fixed_tol {
                        anchor = Some((state_point(&next), g_next, t_next));
                    }
                }
            }
        }
        s = next;
        k1 = k_next;
        t = t_next;
        if !visit(Event::Step(t, &s)) {
            return Ok(WalkEnd::Stopped);
        }
        if norm(g_next) <= ctl.fixed_tol {
            calm += 1;
            if calm >= ctl.fixed_steps {
                let w = refine_fixed_point(model, state_point(&s));
                return Ok(WalkEnd::Fixed { t, state: s, w });
            }
        } else {
            calm = 0;
        }
    }
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Finds the fraction of a step at which the section is crossed.
fn refine_crossing<R: Fn(Chart) -> f64>(
    stepper: &Stepper<R>,
    s: &State,
    dt: f64,
    side: &dyn Fn(&State) -> f64,
) -> Result<(f64, State), FlowError> {
    let (mut lo, mut hi) = (0.0, dt);
    let (mut flo, mut fhi) = (side(s), side(&stepper.step(s, dt)?));
    let mut best = (dt, stepper.step(s, dt)?);
    for it in 0..60 {
        // Regula falsi with a bisection every third iteration.
        let mut tau = if it % 3 == 2 || fhi == flo {
            0.5 * (lo + hi)
        } else {
            lo - flo * (hi - lo) / (fhi - flo)
        };
        if !(tau > lo && tau < hi) {
            tau = 0.5 * (lo + hi);
        }
        let st = stepper.step(s, tau)?;
        let f = side(&st);
        best = (tau, st);
        if f.abs() < 1e-15 || hi - lo < 1e-15 {
            break;
        }
        if f < 0.0 {
            lo = tau;
            flo = f;
        } else {
            hi = tau;
            fhi = f;
        }
    }
    Ok(best)
}

/// Newton refinement of an approximate zero of the force; falls back to the
/// input when refinement does not improve it.
fn refine_fixed_point(model: &VelocityModel, y: Vec3) -> Vec3 {
    let kind = model.kind();
    let g_norm = |y: Vec3| norm(model.gamma_at_point(y));
    let start = g_norm(y);
    let candidate = match kind {
        Kind::Interval | Kind::Ring => {
            let c0 = chart_of(kind, y);
            for end in [-1.0, 1.0] {
                if kind == Kind::Interval && (c0[0] - end).abs() < 1e-6 {
                    let e = [end, 0.0, 0.0];
                    if g_norm(e) <= 1e-12 {
                        return e;
                    }
                }
            }
            let g = |x: f64| model.gamma_at([x, 0.0])[0];
            let mut x = c0[0];
            for _ in 0..30 {
                let gx = g(x);
                if gx == 0.0 {
                    break;
                }
                let h = 1e-7;
                let d = (g(x + h) - g(x - h)) / (2.0 * h);
                if d == 0.0 || !d.is_finite() {
                    break;
                }
                let dx = gx / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            if kind == Kind::Interval {
                x = x.clamp(-1.0, 1.0);
            }
            embed(kind, [x, 0.0])
        }
        Kind::Sphere => {
            for pole in [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]] {
                if dist(y, pole) < 1e-6 && g_norm(pole) <= 1e-10 {
                    return pole;
                }
            }
            let mut c = chart_of(kind, y);
            for _ in 0..30 {
                let f = model.gamma_at(c);
                if f[0] == 0.0 && f[1] == 0.0 {
                    break;
                }
                let h = 1e-7;
                let fa = model.gamma_at([c[0] + h, c[1]]);
                let fb = model.gamma_at([c[0], c[1] + h]);
                let j = [
                    [(fa[0] - f[0]) / h, (fb[0] - f[0]) / h],
                    [(fa[1] - f[1]) / h, (fb[1] - f[1]) / h],
                ];
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                if det == 0.0 || !det.is_finite() {
                    break;
                }
                let d0 = (j[1][1] * f[0] - j[0][1] * f[1]) / det;
                let d1 = (-j[1][0] * f[0] + j[0][0] * f[1]) / det;
                c = [c[0] - d0, (c[1] - d1).clamp(0.0, std::f64::consts::PI)];
                if d0.abs().max(d1.abs()) < 1e-16 {
                    break;
                }
            }
            embed(kind, c)
        }
    };
    if dist(candidate, y) < 1e-5 && g_norm(candidate) <= start {
        candidate
    } else {
        y
    }
}

/// Classifies the omega-limit set reached from `v0`.
pub fn classify_omega_limit(
    model: &VelocityModel,
    v0: Chart,
    ctl: &FlowControls,
) -> Result<OmegaLimit, FlowError> {
    let kind = model.kind();
    let mut points: Vec<Vec3> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    let periodic_possible = kind != Kind::Interval;
    let end = walk(model, embed(kind, v0), ctl, |_| 0.0, |ev| {
        if periodic_possible {
            match ev {
                Event::Anchor(t, s) => {
                    points.clear();
                    times.clear();
                    points.push(state_point(s));
                    times.push(t);
                }
                Event::Step(t, s) => {
                    points.push(state_point(s));
                    times.push(t);
                }
            }
        }
        true
    })?;
    Ok(match end {
        WalkEnd::Fixed { w, .. } => OmegaLimit::FixedPoint {
            w,
            chart: chart_of(kind, w),
        },
        WalkEnd::Periodic { period, .. } => {
            // Close the polyline exactly on the anchor.
            let last = points.len() - 1;
            points[last] = points[0];
            let mut mean = [0.0; 3];
            for i in 1..points.len() {
                let dt = times[i] - times[i - 1];
                for k in 0..3 {
                    mean[k] += 0.5 * (points[i][k] + points[i - 1][k]) * dt / period;
                }
            }
            OmegaLimit::PeriodicOrbit {
                points,
                times,
                period,
                mean,
            }
        }
        WalkEnd::Stopped { .. } => unreachable!("visitor never stops"),
    })
}

/// Distinct omega-limits and, for every seed, the index of its limit.
#[derive(Clone, Debug)]
pub struct OmegaLimits {
    pub limits: Vec<OmegaLimit>,
    pub basin: Vec<usize>,
}

/// Classifies every seed (in parallel) and deduplicates the results.
pub fn find_all_omega_limits(
    model: &VelocityModel,
    seeds: &[Chart],
    ctl: &FlowControls,
) -> Result<OmegaLimits, FlowError> {
    let classified: Vec<OmegaLimit> = seeds
        .par_iter()
        .map(|&c| classify_omega_limit(model, c, ctl))
        .collect::<Result<_, _>>()?;
    let mut limits: Vec<OmegaLimit> = Vec::new();
    let mut basin = Vec::with_capacity(seeds.len());
    for o in classified {
        match limits.iter().position(|l| l.same_as(&o)) {
            Some(i) => basin.push(i),
            None => {
                basin.push(limits.len());
                limits.push(o);
            }
        }
    }
    Ok(OmegaLimits { limits, basin })
}

/// Seeds covering the velocity set, boundary points and poles included.
pub fn seed_grid(kind: Kind, n: usize) -> Vec<Chart> {
    let n = n.max(2);
    match kind {
        Kind::Interval => (0..n)
            .map(|i| [-1.0 + 2.0 * i as f64 / (n - 1) as f64, 0.0])
            .collect(),
        Kind::Ring => (0..n)
            .map(|i| [std::f64::consts::TAU * i as f64 / n as f64, 0.0])
            .collect(),
        Kind::Sphere => {
            let mut out = vec![[0.0, 0.0], [0.0, std::f64::consts::PI]];
            for j in 1..n {
                let phi = std::f64::consts::PI * j as f64 / n as f64;
                for i in 0..n {
                    out.push([std::f64::consts::TAU * i as f64 / n as f64, phi]);
                }
            }
            out
        }
    }
}

/// Seeds used when none are supplied.
pub fn default_seeds(kind: Kind) -> Vec<Chart> {
    match kind {
        Kind::Interval => seed_grid(kind, 33),
        Kind::Ring => seed_grid(kind, 32),
        Kind::Sphere => seed_grid(kind, 8),
    }
}
