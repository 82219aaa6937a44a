//! Fuzzy basis-function approximators `θᵀξ(x)`.
//!
//! Rules are the full grid of Gaussian memberships, one set per input
//! dimension. With product inference, singleton fuzzification and
//! center-average defuzzification the normalized firing strengths `ξ(x)` form
//! a convex-combination vector and the output is linear in `θ`.
//!
//! Rule `j` enumerates the grid in row-major order: the last input dimension
//! varies fastest.

use std::io::{self, Write};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FuzzyError {
    #[error("grid needs at least one input dimension")]
    NoDimensions,
    #[error("dimension {dim}: {reason}")]
    InvalidDimension { dim: usize, reason: String },
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
}

/// Gaussian membership `exp(−(x − c)² / (2σ²))`; `width` is σ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub center: f64,
    pub width: f64,
}

impl Gaussian {
    pub fn degree(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.width;
        (-0.5 * z * z).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipGrid {
    dims: Vec<Vec<Gaussian>>,
    rules: usize,
}

impl MembershipGrid {
    pub fn new(dims: Vec<Vec<Gaussian>>) -> Result<Self, FuzzyError> {
        if dims.is_empty() {
            return Err(FuzzyError::NoDimensions);
        }
        for (dim, sets) in dims.iter().enumerate() {
            if sets.is_empty() {
                return Err(FuzzyError::InvalidDimension {
                    dim,
                    reason: "no membership functions".into(),
                });
            }
            if let Some(g) = sets
                .iter()
                .find(|g| !(g.width > 0.0 && g.width.is_finite()))
            {
                return Err(FuzzyError::InvalidDimension {
                    dim,
                    reason: format!("width {} is not positive", g.width),
                });
            }
            if sets.iter().any(|g| !g.center.is_finite())
                || sets.windows(2).any(|w| !(w[0].center < w[1].center))
            {
                return Err(FuzzyError::InvalidDimension {
                    dim,
                    reason: "centers must be finite and strictly increasing".into(),
                });
            }
        }
        let rules = dims.iter().map(Vec::len).product();
        Ok(Self { dims, rules })
    }

    /// Uniform grid over the box `[lo, hi]`: `counts[i]` equally spaced
    /// centers per dimension, width `width_scale · spacing` (or
    /// `width_scale · (hi − lo)` for a single center, placed at the
    /// midpoint).
    pub fn over_box(
        lo: &[f64],
        hi: &[f64],
        counts: &[usize],
        width_scale: f64,
    ) -> Result<Self, FuzzyError> {
        if lo.is_empty() {
            return Err(FuzzyError::NoDimensions);
        }
        if hi.len() != lo.len() {
            return Err(FuzzyError::Length {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if counts.len() != lo.len() {
            return Err(FuzzyError::Length {
                expected: lo.len(),
                got: counts.len(),
            });
        }
        if !(width_scale > 0.0 && width_scale.is_finite()) {
            return Err(FuzzyError::InvalidDimension {
                dim: 0,
                reason: format!("width_scale {width_scale} is not positive"),
            });
        }
        let mut dims = Vec::with_capacity(lo.len());
        for (dim, ((&a, &b), &count)) in lo.iter().zip(hi).zip(counts).enumerate() {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return Err(FuzzyError::InvalidDimension {
                    dim,
                    reason: format!("empty box [{a}, {b}]"),
                });
            }
            if count == 0 {
                return Err(FuzzyError::InvalidDimension {
                    dim,
                    reason: "count must be at least 1".into(),
                });
            }
            let sets = if count == 1 {
                vec![Gaussian {
                    center: 0.5 * (a + b),
                    width: width_scale * (b - a),
                }]
            } else {
                let spacing = (b - a) / (count - 1) as f64;
                (0..count)
                    .map(|j| Gaussian {
                        center: if j + 1 == count {
                            b
                        } else {
                            a + j as f64 * spacing
                        },
                        width: width_scale * spacing,
                    })
                    .collect()
            };
            dims.push(sets);
        }
        Self::new(dims)
    }

    pub fn input_dim(&self) -> usize {
        self.dims.len()
    }

    pub fn rule_count(&self) -> usize {
        self.rules
    }

    pub fn memberships(&self, dim: usize) -> &[Gaussian] {
        &self.dims[dim]
    }

    /// Normalized firing strengths `ξ(x)` written into `out` (length M).
    pub fn regressor_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        assert_eq!(out.len(), self.rules, "regressor length mismatch");
        let degrees: Vec<Vec<f64>> = self
            .dims
            .iter()
            .zip(x)
            .map(|(sets, &xi)| sets.iter().map(|g| g.degree(xi)).collect())
            .collect();

        out.fill(1.0);
        let mut stride = self.rules;
        for d in &degrees {
            stride /= d.len();
            for (j, o) in out.iter_mut().enumerate() {
                *o *= d[(j / stride) % d.len()];
            }
        }
        let total: f64 = out.iter().sum();
        if total > 0.0 {
            out.iter_mut().for_each(|o| *o /= total);
        } else {
            // Every Gaussian underflowed: x is far outside the grid. Fall back
            // to the nearest rule per dimension so ξ stays on the simplex.
            out.fill(0.0);
            let mut idx = 0;
            for (sets, &xi) in self.dims.iter().zip(x) {
                let nearest = sets
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (xi - a.1.center).abs().total_cmp(&(xi - b.1.center).abs()))
                    .map(|(k, _)| k)
                    .unwrap_or(0);
                idx = idx * sets.len() + nearest;
            }
            out[idx] = 1.0;
        }
    }

    pub fn regressor(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rules];
        self.regressor_into(x, &mut out);
        out
    }
}

/// `θᵀξ(x)` over a fixed grid; only `θ` adapts.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyApproximator {
    grid: MembershipGrid,
    theta: Vec<f64>,
}

impl FuzzyApproximator {
    pub fn new(grid: MembershipGrid, theta: Vec<f64>) -> Result<Self, FuzzyError> {
        if theta.len() != grid.rule_count() {
            return Err(FuzzyError::Length {
                expected: grid.rule_count(),
                got: theta.len(),
            });
        }
        Ok(Self { grid, theta })
    }

    pub fn constant(grid: MembershipGrid, value: f64) -> Self {
        let theta = vec![value; grid.rule_count()];
        Self { grid, theta }
    }

    pub fn grid(&self) -> &MembershipGrid {
        &self.grid
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.evaluate_with(&self.grid.regressor(x))
    }

    /// `θᵀξ` for a regressor already computed on this grid.
    pub fn evaluate_with(&self, xi: &[f64]) -> f64 {
        assert_eq!(xi.len(), self.theta.len(), "regressor length mismatch");
        self.theta.iter().zip(xi).map(|(t, x)| t * x).sum()
    }

    /// Flat text dump: `#` header lines describing the grid, then one
    /// consequent per line in rule order.
    pub fn write_theta<W: Write>(&self, mut w: W, name: &str) -> io::Result<()> {
        writeln!(
            w,
            "# {name}: {} rules, index 0..{}",
            self.theta.len(),
            self.theta.len() - 1
        )?;
        for (i, sets) in self.grid.dims.iter().enumerate() {
            let centers: Vec<String> = sets.iter().map(|g| format!("{:.9e}", g.center)).collect();
            let widths: Vec<String> = sets.iter().map(|g| format!("{:.9e}", g.width)).collect();
            writeln!(w, "# dim {i} centers {}", centers.join(" "))?;
            writeln!(w, "# dim {i} widths {}", widths.join(" "))?;
        }
        for t in &self.theta {
            writeln!(w, "{t:.17e}")?;
        }
        Ok(())
    }
}

/// Parses the consequent values written by [`FuzzyApproximator::write_theta`].
pub fn parse_theta(text: &str) -> Result<Vec<f64>, std::num::ParseFloatError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse)
        .collect()
}
