//! Discrete Legendre transform `L(x) = max_p (p x - H(p))` of a table
//! along its single varying axis.

use super::HamiltonianTable;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum LegendreError {
    #[error("the table varies along {0} axes; the transform needs exactly one")]
    Axes(usize),
    #[error("the table needs at least 3 nodes along its axis, found {0}")]
    TooShort(usize),
}

/// `L(x)` with the maximizing momentum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateValue {
    pub x: f64,
    pub l: f64,
    pub argmax: f64,
    /// The maximum sits on the table edge, so `l` is only a lower bound.
    pub boundary: bool,
}

/// The one-dimensional slice of a table used for the transform.
#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    /// Which momentum component varies.
    pub axis: usize,
    pub p: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn legendre_transform(table: &HamiltonianTable) -> Result<RateTable, LegendreError> {
    let varying: Vec<usize> = (0..table.grid.axes.len())
        .filter(|&a| table.grid.axes[a].steps > 1)
        .collect();
    if varying.len() != 1 {
        return Err(LegendreError::Axes(varying.len()));
    }
    let axis = varying[0];
    let n = table.grid.axes[axis].steps;
    if n < 3 {
        return Err(LegendreError::TooShort(n));
    }
    // With a single varying axis the flat index is the axis index.
    Ok(RateTable {
        axis,
        p: table.grid.axes[axis].nodes(),
        h: table.h.clone(),
    })
}

impl RateTable {
    /// `L(x)` by a discrete maximum refined with the parabola through the
    /// maximizer and its neighbours.
    pub fn value(&self, x: f64) -> RateValue {
        let g = |j: usize| self.p[j] * x - self.h[j];
        let n = self.p.len();
        let mut j = 0;
        for k in 1..n {
            if g(k) > g(j) {
                j = k;
            }
        }
        if j == 0 || j + 1 == n {
            return RateValue {
                x,
                l: g(j),
                argmax: self.p[j],
                boundary: true,
            };
        }
        let (gm, g0, gp) = (g(j - 1), g(j), g(j + 1));
        let curv = gm - 2.0 * g0 + gp;
        let (l, argmax) = if curv < 0.0 {
            let s = (0.5 * (gm - gp) / curv).clamp(-1.0, 1.0);
            let step = 0.5 * (self.p[j + 1] - self.p[j - 1]);
            (g0 - (gm - gp) * (gm - gp) / (8.0 * curv), self.p[j] + s * step)
        } else {
            (g0, self.p[j])
        };
        RateValue {
            x,
            l,
            argmax,
            boundary: false,
        }
    }

    pub fn evaluate(&self, xs: &[f64]) -> Vec<RateValue> {
        xs.iter().map(|&x| self.value(x)).collect()
    }

    /// Smallest second difference of `H` along the axis.
    pub fn min_second_difference(&self) -> f64 {
        self.h
            .windows(3)
            .map(|w| w[0] - 2.0 * w[1] + w[2])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_convex(&self, tol: f64) -> bool {
        self.min_second_difference() >= -tol
    }
}
