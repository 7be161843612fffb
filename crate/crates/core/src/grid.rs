//! Uniform parameter grids and nodal finite differences.
//!
//! A [`Grid`] discretizes a curve's parameter interval `[a, b]` into equal
//! elements. Open grids carry `n_elems + 1` nodes including both endpoints;
//! closed grids carry `n_elems` nodes and the last element wraps back to the
//! first node (the curve is periodic there).

use nalgebra::Vector2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    a: f64,
    b: f64,
    n_elems: usize,
    closed: bool,
}

impl Grid {
    pub fn open(a: f64, b: f64, n_elems: usize) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidArgument(format!("bad interval [{a}, {b}]")));
        }
        if n_elems < 1 {
            return Err(Error::GridTooSmall {
                needed: 2,
                got: n_elems + 1,
            });
        }
        Ok(Grid {
            a,
            b,
            n_elems,
            closed: false,
        })
    }

    pub fn closed(a: f64, b: f64, n_elems: usize) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidArgument(format!("bad interval [{a}, {b}]")));
        }
        if n_elems < 3 {
            return Err(Error::GridTooSmall {
                needed: 3,
                got: n_elems,
            });
        }
        Ok(Grid {
            a,
            b,
            n_elems,
            closed: true,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn step(&self) -> f64 {
        (self.b - self.a) / self.n_elems as f64
    }

    pub fn n_elems(&self) -> usize {
        self.n_elems
    }

    pub fn node_count(&self) -> usize {
        if self.closed {
            self.n_elems
        } else {
            self.n_elems + 1
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        self.a + self.step() * i as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.node_count()).map(|i| self.node(i))
    }

    /// Node indices of element `e`; wraps for the last closed element.
    pub fn element_nodes(&self, e: usize) -> (usize, usize) {
        let j = e + 1;
        if self.closed && j == self.n_elems {
            (e, 0)
        } else {
            (e, j)
        }
    }

    /// Parameter of a point inside element `e` at local coordinate `x` in `[0, 1]`,
    /// folded back into `[a, b)` on closed grids.
    pub fn element_param(&self, e: usize, x: f64) -> f64 {
        let t = self.node(e) + x * self.step();
        if self.closed && t >= self.b {
            self.a + (t - self.b)
        } else {
            t
        }
    }

    /// Structural equality with floating tolerance on the interval.
    pub fn matches(&self, other: &Grid) -> bool {
        let scale = (self.b - self.a).abs().max(1.0);
        self.n_elems == other.n_elems
            && self.closed == other.closed
            && (self.a - other.a).abs() <= 1e-12 * scale
            && (self.b - other.b).abs() <= 1e-12 * scale
    }

    /// Second-order nodal derivative with respect to the parameter:
    /// central differences inside, one-sided second order at open endpoints,
    /// periodic wrap-around on closed grids.
    pub fn d_param(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.node_count();
        if v.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "expected {n} nodal values, got {}",
                v.len()
            )));
        }
        if n < 3 {
            return Err(Error::GridTooSmall { needed: 3, got: n });
        }
        let h = self.step();
        let mut d = vec![0.0; n];
        if self.closed {
            for i in 0..n {
                let ip = (i + 1) % n;
                let im = (i + n - 1) % n;
                d[i] = (v[ip] - v[im]) / (2.0 * h);
            }
        } else {
            d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
            for i in 1..n - 1 {
                d[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
            }
            d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
        }
        Ok(d)
    }

    pub fn d_param_vec(&self, v: &[Vector2<f64>]) -> Result<Vec<Vector2<f64>>> {
        let xs: Vec<f64> = v.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = v.iter().map(|p| p.y).collect();
        let dx = self.d_param(&xs)?;
        let dy = self.d_param(&ys)?;
        Ok(dx
            .into_iter()
            .zip(dy)
            .map(|(x, y)| Vector2::new(x, y))
            .collect())
    }
}
