//! Sampled characteristics `s -> phi^v_s` with the running integrals needed
//! to evaluate `Q_{p,H}(v)` for any `(p, H)` without re-integrating.
//!
//! With `A(t) = int_0^t (r + H - phi_s . p) ds` and `r = M / M~`,
//! `Q = int_0^inf r e^{-A} dt = 1 - int_0^inf (H - phi_t . p) e^{-A} dt`
//! whenever `A -> inf`, because `r e^{-A} = (A' - H + phi . p) e^{-A}`.
//! The second form is what gets integrated: it makes `Q_{0,0} = 1` exact.

use crate::flow::{walk, Event, FlowControls, FlowError, OmegaLimit, State, WalkEnd};
use crate::model::{chart_of, dot, Chart, Kind, Vec3, VelocityModel};
use crate::stationary::StationaryProfile;

/// What the characteristic converges to.
#[derive(Clone, Debug, PartialEq)]
pub enum Attractor {
    Fixed {
        w: Vec3,
        /// `M / M~` at `w`.
        rate: f64,
    },
    Periodic {
        /// Sample index where the last period starts.
        start: usize,
        period: f64,
        /// Orbit average of the position.
        mean: Vec3,
        /// Orbit average of `M / M~`.
        rate: f64,
    },
}

impl Attractor {
    /// `mean . p - mean rate`: the `H` below which `Q` diverges.
    pub fn critical(&self, p: Vec3) -> f64 {
        match self {
            Attractor::Fixed { w, rate } => dot(*w, p) - rate,
            Attractor::Periodic { mean, rate, .. } => dot(*mean, p) - rate,
        }
    }
}

/// Result of evaluating `Q` on one characteristic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QValue {
    Finite(f64),
    Divergent,
}

impl QValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            QValue::Finite(q) => Some(q),
            QValue::Divergent => None,
        }
    }

    /// `+inf` when divergent.
    pub fn value(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

/// Tuning of the characteristic integrals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceControls {
    pub flow: FlowControls,
    /// RK4 steps between stored samples.
    pub sample_every: usize,
    /// Stop accumulating once the exponent reaches this value.
    pub exponent_cap: f64,
    /// Asymptotic exponent growth rate treated as divergence.
    pub rate_eps: f64,
}

impl Default for TraceControls {
    fn default() -> Self {
        TraceControls {
            flow: FlowControls::default(),
            sample_every: 20,
            exponent_cap: 40.0,
            rate_eps: 1e-8,
        }
    }
}

/// A characteristic sampled at times `t_k` with `R = int r`, the position
/// `y` and `X = int y`. Only the first `dim` ambient components are kept.
#[derive(Clone, Debug)]
pub struct Characteristic {
    dim: usize,
    /// Rows of `[t, R, y.., X..]`.
    data: Vec<f64>,
    pub attractor: Attractor,
}

impl Characteristic {
    fn stride(&self) -> usize {
        2 + 2 * self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.stride()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Duration of the stored part.
    pub fn duration(&self) -> f64 {
        let s = self.stride();
        self.data[self.data.len() - s]
    }

    /// Integrates the flow of `-Gamma` from `v0` until its omega-limit.
    pub fn trace(
        model: &VelocityModel,
        profile: &StationaryProfile,
        v0: Chart,
        ctl: &TraceControls,
    ) -> Result<Characteristic, FlowError> {
        let kind = model.kind();
        let dim = kind.dim();
        let stride = 2 + 2 * dim;
        let min_gap = 0.5 * ctl.flow.dt * ctl.sample_every as f64;
        let mut data: Vec<f64> = Vec::new();
        let mut last_t = f64::NEG_INFINITY;
        let mut last_anchor = 0usize;
        let mut steps = 0usize;
        let push = |data: &mut Vec<f64>, last_t: &mut f64, t: f64, s: &State, replace: bool| {
            if replace && t - *last_t < min_gap && data.len() > stride {
                data.truncate(data.len() - stride);
            }
            data.push(t);
            data.push(s[3]);
            data.extend_from_slice(&s[..dim]);
            data.extend_from_slice(&s[4..4 + dim]);
            *last_t = t;
        };
        let rate = |c: Chart| profile.ratio(model, c);
        let end = walk(model, crate::model::embed(kind, v0), &ctl.flow, rate, |ev| {
            match ev {
                Event::Step(t, s) => {
                    if steps % ctl.sample_every == 0 && t - last_t >= min_gap {
                        push(&mut data, &mut last_t, t, s, false);
                    }
                    steps += 1;
                }
                Event::Anchor(t, s) => {
                    push(&mut data, &mut last_t, t, s, true);
                    last_anchor = data.len() / stride - 1;
                }
            }
            true
        })?;
        let attractor = match end {
            WalkEnd::Fixed { t, state, w } => {
                if t > last_t {
                    push(&mut data, &mut last_t, t, &state, true);
                }
                Attractor::Fixed {
                    w,
                    rate: profile.ratio(model, chart_of(kind, w)),
                }
            }
            WalkEnd::Periodic { t, state, period } => {
                // The walker already reported the closing point as a step.
                if data[data.len() - stride] != t {
                    push(&mut data, &mut last_t, t, &state, true);
                }
                let n = data.len() / stride;
                let start = last_anchor.min(n - 1);
                let s0 = start * stride;
                let s1 = (n - 1) * stride;
                let mut mean = [0.0; 3];
                for k in 0..dim {
                    mean[k] = (data[s1 + 2 + dim + k] - data[s0 + 2 + dim + k]) / period;
                }
                let rate = (data[s1 + 1] - data[s0 + 1]) / period;
                Attractor::Periodic {
                    start,
                    period,
                    mean,
                    rate,
                }
            }
            WalkEnd::Stopped { .. } => unreachable!("visitor never stops"),
        };
        Ok(Characteristic {
            dim,
            data,
            attractor,
        })
    }

    /// The omega-limit reached, as a flow object. A periodic attractor is
    /// rebuilt from the samples of its last period.
    pub fn omega_limit(&self, kind: Kind) -> OmegaLimit {
        match &self.attractor {
            Attractor::Fixed { w, .. } => OmegaLimit::FixedPoint {
                w: *w,
                chart: chart_of(kind, *w),
            },
            Attractor::Periodic {
                start, period, mean, ..
            } => {
                let d = self.dim;
                let mut points = Vec::new();
                let mut times = Vec::new();
                for i in *start..self.len() {
                    let r = self.row(i);
                    let mut y = [0.0; 3];
                    y[..d].copy_from_slice(&r[2..2 + d]);
                    points.push(y);
                    times.push(r[0]);
                }
                let last = points.len() - 1;
                points[last] = points[0];
                OmegaLimit::PeriodicOrbit {
                    points,
                    times,
                    period: *period,
                    mean: *mean,
                }
            }
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        let s = self.stride();
        &self.data[i * s..(i + 1) * s]
    }

    #[inline]
    fn exponent_and_integrand(&self, i: usize, p: Vec3, h: f64) -> (f64, f64, f64) {
        let r = self.row(i);
        let d = self.dim;
        let mut yp = 0.0;
        let mut xp = 0.0;
        for k in 0..d {
            yp += r[2 + k] * p[k];
            xp += r[2 + d + k] * p[k];
        }
        let a = r[1] + h * r[0] - xp;
        (r[0], a, h - yp)
    }

    /// `Q_{p,H}` at the start of the characteristic. `scratch` is reused
    /// between calls to avoid allocation.
    pub fn q(&self, p: Vec3, h: f64, ctl: &TraceControls, scratch: &mut Vec<f64>) -> QValue {
        let n = self.len();
        scratch.clear();
        let mut stop = n;
        let mut a_last = 0.0;
        for i in 0..n {
            let (t, a, g) = self.exponent_and_integrand(i, p, h);
            scratch.extend_from_slice(&[t, g, a]);
            a_last = a;
            if a >= ctl.exponent_cap {
                stop = i + 1;
                break;
            }
        }
        let mut s = exp_weighted(scratch, 0.0);
        if stop == n && a_last < ctl.exponent_cap {
            match self.tail(p, h, a_last, ctl, scratch) {
                Some(tail) => s += tail,
                None => return QValue::Divergent,
            }
        }
        QValue::Finite(1.0 - s)
    }

    /// Contribution of `(H - phi . p) e^{-A}` beyond the stored samples.
    fn tail(&self, p: Vec3, h: f64, a_end: f64, ctl: &TraceControls, scratch: &mut Vec<f64>) -> Option<f64> {
        match &self.attractor {
            Attractor::Fixed { w, rate } => {
                let wp = dot(*w, p);
                let lambda = rate + h - wp;
                if lambda <= ctl.rate_eps {
                    return None;
                }
                Some((-a_end).exp() * (h - wp) / lambda)
            }
            Attractor::Periodic { start, period, .. } => {
                let n = self.len();
                let (_, a0, _) = self.exponent_and_integrand(*start, p, h);
                let growth = a_end - a0;
                if growth <= ctl.rate_eps * period {
                    return None;
                }
                scratch.clear();
                for i in *start..n {
                    let (t, a, g) = self.exponent_and_integrand(i, p, h);
                    scratch.extend_from_slice(&[t, g, a]);
                }
                let per = exp_weighted(scratch, a0);
                Some((-a_end).exp() * per / (-(-growth).exp_m1()))
            }
        }
    }
}

/// `int_0^L s^k e^{-lambda s} ds` for `k = 0, 1, 2`.
fn exp_moments(lambda: f64, len: f64) -> [f64; 3] {
    let z = lambda * len;
    if z.abs() < 0.5 {
        // Series in z avoids cancellation.
        let mut m = [0.0; 3];
        let mut term = 1.0;
        for j in 0..20 {
            for (k, mk) in m.iter_mut().enumerate() {
                *mk += term / (k + j + 1) as f64;
            }
            term *= -z / (j + 1) as f64;
        }
        [m[0] * len, m[1] * len * len, m[2] * len * len * len]
    } else {
        let e = (-z).exp();
        [
            (1.0 - e) / lambda,
            (1.0 - e * (1.0 + z)) / (lambda * lambda),
            (2.0 - e * (2.0 + z * (2.0 + z))) / (lambda * lambda * lambda),
        ]
    }
}

/// `int g e^{-(a - shift)} dt` from rows `[t, g, a]`. On each pair of
/// intervals `a` is split into its chord, integrated exactly, and a smooth
/// remainder that is folded into `g` and interpolated quadratically. The
/// rule is exact whenever `a` is linear and `g` quadratic.
fn exp_weighted(rows: &[f64], shift: f64) -> f64 {
    let n = rows.len() / 3;
    let t = |i: usize| rows[3 * i];
    let g = |i: usize| rows[3 * i + 1];
    let a = |i: usize| rows[3 * i + 2] - shift;
    let mut sum = 0.0;
    let mut i = 0;
    while i + 2 < n {
        let (t0, t1, t2) = (t(i), t(i + 1), t(i + 2));
        let len = t2 - t0;
        let lambda = (a(i + 2) - a(i)) / len;
        let s1 = t1 - t0;
        // Remainder of the exponent above the chord, at the middle node.
        let f0 = g(i);
        let f1 = g(i + 1) * (-(a(i + 1) - a(i) - lambda * s1)).exp();
        let f2 = g(i + 2);
        // f(s) = f0 + c1 s + c2 s^2 through (0, f0), (s1, f1), (len, f2).
        let d1 = (f1 - f0) / s1;
        let d2 = (f2 - f0) / len;
        let c2 = (d2 - d1) / (len - s1);
        let c1 = d1 - c2 * s1;
        let m = exp_moments(lambda, len);
        sum += (-a(i)).exp() * (f0 * m[0] + c1 * m[1] + c2 * m[2]);
        i += 2;
    }
    if i + 1 < n {
        let len = t(i + 1) - t(i);
        let lambda = (a(i + 1) - a(i)) / len;
        let m = exp_moments(lambda, len);
        let c1 = (g(i + 1) - g(i)) / len;
        sum += (-a(i)).exp() * (g(i) * m[0] + c1 * m[1]);
    }
    sum
}

/// `Q_{p,H}(v)` for a single velocity.
pub fn eval_q(
    model: &VelocityModel,
    profile: &StationaryProfile,
    p: Vec3,
    h: f64,
    v: Chart,
    ctl: &TraceControls,
) -> Result<QValue, FlowError> {
    let c = Characteristic::trace(model, profile, v, ctl)?;
    Ok(c.q(p, h, ctl, &mut Vec::new()))
}
