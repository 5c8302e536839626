//! Tables of `H` on axis-aligned momentum grids.

use rayon::prelude::*;

use super::{HamiltonianError, SpectralSolver};
use crate::model::Vec3;

/// Uniform nodes `min, .., max` along one momentum axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PAxis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl PAxis {
    pub fn new(min: f64, max: f64, steps: usize) -> Self {
        PAxis { min, max, steps }
    }

    pub fn spacing(&self) -> f64 {
        if self.steps > 1 {
            (self.max - self.min) / (self.steps - 1) as f64
        } else {
            0.0
        }
    }

    pub fn value(&self, k: usize) -> f64 {
        if k + 1 == self.steps {
            self.max
        } else {
            self.min + k as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.steps).map(|k| self.value(k)).collect()
    }
}

/// A product grid of up to three axes. Flat indices run with the last axis
/// fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct PGrid {
    pub axes: Vec<PAxis>,
}

impl PGrid {
    pub fn new(axes: Vec<PAxis>) -> Self {
        assert!(!axes.is_empty() && axes.len() <= 3);
        assert!(axes.iter().all(|a| a.steps >= 1));
        PGrid { axes }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.steps).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            idx[k] = flat % a.steps;
            flat /= a.steps;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        self.axes.iter().zip(idx).fold(0, |acc, (a, &i)| acc * a.steps + i)
    }

    pub fn point(&self, flat: usize) -> Vec3 {
        let mut p = [0.0; 3];
        for (k, i) in self.multi_index(flat).into_iter().enumerate() {
            p[k] = self.axes[k].value(i);
        }
        p
    }
}

/// `H` and its diagnostics at every node of a momentum grid.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianTable {
    pub grid: PGrid,
    pub h: Vec<f64>,
    pub h_crit: Vec<f64>,
    pub singular: Vec<bool>,
    /// `I(p, H) - 1` (at the probe for singular nodes).
    pub residual: Vec<f64>,
    /// `max |v|` on the velocity set.
    pub max_speed: f64,
}

/// Solves at every grid node, in parallel, in index order.
pub fn build_table(solver: &SpectralSolver, grid: PGrid) -> Result<HamiltonianTable, HamiltonianError> {
    let ps: Vec<Vec3> = (0..grid.len()).map(|k| grid.point(k)).collect();
    let sols = ps.par_iter().map(|&p| solver.solve(p)).collect::<Result<Vec<_>, _>>()?;
    Ok(HamiltonianTable {
        h: sols.iter().map(|s| s.h).collect(),
        h_crit: sols.iter().map(|s| s.h_crit).collect(),
        singular: sols.iter().map(|s| s.singular).collect(),
        residual: sols.iter().map(|s| s.integral - 1.0).collect(),
        max_speed: solver.model().kind().max_speed(),
        grid,
    })
}

impl HamiltonianTable {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn point(&self, k: usize) -> Vec3 {
        self.grid.point(k)
    }

    /// Every pair of neighbouring nodes as `(lower, upper, axis)`.
    fn neighbours(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.len()).flat_map(move |k| {
            let idx = self.grid.multi_index(k);
            (0..self.grid.axes.len()).filter_map(move |a| {
                (idx[a] + 1 < self.grid.axes[a].steps).then(|| {
                    let mut j = idx.clone();
                    j[a] += 1;
                    (k, self.grid.flat_index(&j), a)
                })
            })
        })
    }

    /// Largest `|dH| / |dp|` between neighbouring nodes.
    pub fn max_slope(&self) -> f64 {
        self.neighbours()
            .map(|(i, j, a)| (self.h[j] - self.h[i]).abs() / self.grid.axes[a].spacing())
            .fold(0.0, f64::max)
    }

    /// Whether every slope stays within `max |v|` up to a relative tolerance.
    pub fn lipschitz_holds(&self, rel_tol: f64) -> bool {
        self.max_slope() <= self.max_speed * (1.0 + rel_tol)
    }

    /// Smallest second difference along any axis (non-negative when convex).
    pub fn min_second_difference(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for k in 0..self.len() {
            let idx = self.grid.multi_index(k);
            for (a, axis) in self.grid.axes.iter().enumerate() {
                if idx[a] == 0 || idx[a] + 1 >= axis.steps {
                    continue;
                }
                let mut lo = idx.clone();
                let mut hi = idx.clone();
                lo[a] -= 1;
                hi[a] += 1;
                let d2 = self.h[self.grid.flat_index(&lo)] - 2.0 * self.h[k] + self.h[self.grid.flat_index(&hi)];
                worst = worst.min(d2);
            }
        }
        worst
    }

    pub fn is_convex(&self, tol: f64) -> bool {
        self.min_second_difference() >= -tol
    }

    /// Multilinear interpolation; coordinates outside the grid are clamped
    /// and reported by the flag.
    pub fn interpolate(&self, p: &[f64]) -> (f64, bool) {
        let d = self.grid.axes.len();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        let mut clamped = false;
        for (a, axis) in self.grid.axes.iter().enumerate() {
            let x = p.get(a).copied().unwrap_or(0.0);
            if axis.steps == 1 {
                clamped |= x != axis.min;
                continue;
            }
            let s = (x - axis.min) / axis.spacing();
            let top = (axis.steps - 1) as f64;
            if !(0.0..=top).contains(&s) {
                clamped = true;
            }
            let s = s.clamp(0.0, top);
            let i = (s.floor() as usize).min(axis.steps - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let mut value = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut idx = base.clone();
            for a in 0..d {
                let up = corner >> a & 1 == 1;
                if up {
                    if self.grid.axes[a].steps == 1 {
                        weight = 0.0;
                        break;
                    }
                    idx[a] += 1;
                    weight *= frac[a];
                } else {
                    weight *= 1.0 - frac[a];
                }
            }
            if weight != 0.0 {
                value += weight * self.h[self.grid.flat_index(&idx)];
            }
        }
        (value, clamped)
    }
}
