//! Fully-saturated iterative learning law.
//!
//! For every node `t_i` of the time grid the memory keeps the unsaturated
//! estimate `θ*(t_i)`. An update at iteration k computes
//!
//! ```text
//! θ*_k = sat(θ*_{k-1}) + γ z_k,    θ̂_k = sat(θ*_k)
//! ```
//!
//! so saturation happens both inside the recursion and on every read. Reads
//! between nodes interpolate linearly.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Parameter {
                name: "N",
                reason: format!("need at least 2 steps, got {steps}"),
            });
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Parameter {
                name: "T",
                reason: format!("horizon must be positive and finite, got {horizon}"),
            });
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_i = i T / N`; the last node is exactly `T`.
    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            self.horizon * i as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|i| self.node(i))
    }
}

/// Component-wise clamp to `[-bound, bound]`.
pub fn sat(v: &DVector<f64>, bound: f64) -> DVector<f64> {
    v.map(|x| x.clamp(-bound, bound))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeUpdate {
    pub theta_star: DVector<f64>,
    pub theta_hat: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamMemory {
    grid: TimeGrid,
    /// Row i holds θ* at node i.
    theta_star: DMatrix<f64>,
    bound: f64,
}

impl ParamMemory {
    /// Zero-initialised memory with `m` components.
    pub fn new(grid: TimeGrid, m: usize, bound: f64) -> Result<Self> {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::Parameter {
                name: "theta_bar",
                reason: format!("saturation level must be positive, got {bound}"),
            });
        }
        Ok(ParamMemory {
            grid,
            theta_star: DMatrix::zeros(grid.steps + 1, m),
            bound,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn dim(&self) -> usize {
        self.theta_star.ncols()
    }

    pub fn theta_star(&self, i: usize) -> Result<DVector<f64>> {
        self.check_index(i)?;
        Ok(self.theta_star.row(i).transpose())
    }

    pub fn theta_hat(&self, i: usize) -> Result<DVector<f64>> {
        Ok(sat(&self.theta_star(i)?, self.bound))
    }

    pub fn update_node(&mut self, i: usize, z: &DVector<f64>, gamma: f64) -> Result<NodeUpdate> {
        self.check_index(i)?;
        check_dim("z", self.dim(), z.len())?;
        if gamma.is_nan() || gamma <= 0.0 {
            return Err(Error::Parameter {
                name: "gamma",
                reason: format!("learning gain must be positive, got {gamma}"),
            });
        }
        let theta_star = self.theta_hat(i)? + z * gamma;
        let theta_hat = sat(&theta_star, self.bound);
        self.theta_star.set_row(i, &theta_star.transpose());
        Ok(NodeUpdate {
            theta_star,
            theta_hat,
        })
    }

    /// Saturated estimate at time `t`, linear between nodes.
    pub fn read(&self, t: f64) -> Result<DVector<f64>> {
        let horizon = self.grid.horizon;
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::TimeRange { t, horizon });
        }
        let pos = t / self.grid.dt();
        let nearest = (pos.round() as usize).min(self.grid.steps);
        if (self.grid.node(nearest) - t).abs() <= 1e-12 * horizon {
            return self.theta_hat(nearest);
        }
        let i = (pos.floor() as usize).min(self.grid.steps - 1);
        let frac = (t - self.grid.node(i)) / self.grid.dt();
        let lo = self.theta_hat(i)?;
        let hi = self.theta_hat(i + 1)?;
        // the blend of two saturated values can round one ulp past the bound
        Ok(sat(&(&lo * (1.0 - frac) + hi * frac), self.bound))
    }

    /// Columns `node, component, theta_star, theta_hat`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["node", "component", "theta_star", "theta_hat"])?;
        for (i, row) in self.theta_star.row_iter().enumerate() {
            for (c, &star) in row.iter().enumerate() {
                let hat = star.clamp(-self.bound, self.bound);
                w.write_record([
                    i.to_string(),
                    c.to_string(),
                    star.to_string(),
                    hat.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i <= self.grid.steps {
            Ok(())
        } else {
            Err(Error::NodeIndex {
                index: i,
                last: self.grid.steps,
            })
        }
    }
}
