use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node placement of a [`TimeGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridMode {
    Uniform,
    /// Nodes `t_n = T (n/N)^r`.
    Graded { exponent: f64 },
}

/// Time grid `0 = t_0 < t_1 < ... < t_N = T` with `N` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    cells: usize,
    mode: GridMode,
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn new(t_final: f64, cells: usize, mode: GridMode) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::param("T", format!("must be positive, got {t_final}")));
        }
        if cells < 2 {
            return Err(Error::param("N", format!("need at least 2 cells, got {cells}")));
        }
        let nodes: Vec<f64> = match mode {
            GridMode::Uniform => (0..=cells)
                .map(|n| t_final * n as f64 / cells as f64)
                .collect(),
            GridMode::Graded { exponent } => {
                if !(exponent.is_finite() && exponent >= 1.0) {
                    return Err(Error::param(
                        "r",
                        format!("grading exponent must be >= 1, got {exponent}"),
                    ));
                }
                (0..=cells)
                    .map(|n| t_final * (n as f64 / cells as f64).powf(exponent))
                    .collect()
            }
        };
        Ok(TimeGrid {
            t_final,
            cells,
            mode,
            nodes,
        })
    }

    pub fn uniform(t_final: f64, cells: usize) -> Result<Self> {
        Self::new(t_final, cells, GridMode::Uniform)
    }

    pub fn graded(t_final: f64, cells: usize, exponent: f64) -> Result<Self> {
        Self::new(t_final, cells, GridMode::Graded { exponent })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Number of cells `N`; there are `N + 1` nodes.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.mode, GridMode::Uniform)
            || matches!(self.mode, GridMode::Graded { exponent } if exponent == 1.0)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, n: usize) -> f64 {
        self.nodes[n]
    }

    /// Width of cell `n` (1-based, `[t_{n-1}, t_n]`).
    pub fn width(&self, n: usize) -> f64 {
        self.nodes[n] - self.nodes[n - 1]
    }

    /// Uniform step; only meaningful on uniform grids.
    pub fn step(&self) -> f64 {
        self.t_final / self.cells as f64
    }

    /// Short human-readable description used in output headers.
    pub fn describe(&self) -> String {
        match self.mode {
            GridMode::Uniform => format!("uniform T={} N={}", self.t_final, self.cells),
            GridMode::Graded { exponent } => {
                format!("graded(r={}) T={} N={}", exponent, self.t_final, self.cells)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_nodes() {
        let g = TimeGrid::graded(4.0, 4, 2.0).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.25, 1.0, 2.25, 4.0]);
        assert_eq!(g.width(2), 0.75);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(TimeGrid::uniform(1.0, 1).is_err());
        assert!(TimeGrid::uniform(-1.0, 8).is_err());
        assert!(TimeGrid::graded(1.0, 8, 0.5).is_err());
    }
}
