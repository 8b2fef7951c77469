use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discretization of the interval `I`: sample locations and quadrature weights.
///
/// The L² inner product of two curves is `Σ_i f_i g_i w_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
    #[serde(skip)]
    sqrt_weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<GridRepr> for Grid {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        Grid::new(r.points, r.weights)
    }
}

impl From<Grid> for GridRepr {
    fn from(g: Grid) -> Self {
        GridRepr {
            points: g.points,
            weights: g.weights,
        }
    }
}

impl Grid {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidGrid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(i) = points.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("points must be strictly increasing".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidGrid("weights must be positive and finite".into()));
        }
        let sqrt_weights = weights.iter().map(|w| w.sqrt()).collect();
        Ok(Grid {
            points,
            weights,
            sqrt_weights,
        })
    }

    /// Midpoint rule on `[0, 1]`: points `(i + 1/2)/d`, weights `1/d`.
    pub fn uniform(d: usize) -> Result<Self> {
        let h = 1.0 / d as f64;
        let points = (0..d).map(|i| (i as f64 + 0.5) * h).collect();
        Grid::new(points, vec![h; d])
    }

    /// Trapezoid-rule weights for arbitrary increasing points.
    pub fn trapezoid(points: Vec<f64>) -> Result<Self> {
        let d = points.len();
        if d < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {d}")));
        }
        let mut weights = vec![0.0; d];
        for i in 0..d - 1 {
            let h = points[i + 1] - points[i];
            weights[i] += h / 2.0;
            weights[i + 1] += h / 2.0;
        }
        Grid::new(points, weights)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn sqrt_weights(&self) -> &[f64] {
        &self.sqrt_weights
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(vec![0.0], vec![1.0]).is_err());
        assert!(Grid::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(Grid::new(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(Grid::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(Grid::uniform(1).is_err());
    }

    #[test]
    fn trapezoid_weights_on_hand_grid() {
        // spacings 0.1, 0.4, 0.5
        let g = Grid::trapezoid(vec![0.0, 0.1, 0.5, 1.0]).unwrap();
        let expected = [0.05, 0.25, 0.45, 0.25];
        for (w, e) in g.weights().iter().zip(expected) {
            assert!((w - e).abs() < 1e-15);
        }
    }

    #[test]
    fn serde_round_trip_restores_sqrt_weights() {
        let g = Grid::trapezoid(vec![0.0, 0.3, 1.0]).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: Grid = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
        assert_eq!(g.sqrt_weights(), back.sqrt_weights());
    }
}
