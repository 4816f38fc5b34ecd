use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DyadicGrid, GridFunction};

/// A strictly positive density together with the exponent `p` it is
/// measured against.
///
/// The dual weight is `σ = w^{-1/(p-1)}`, itself a weight for the conjugate
/// exponent `p' = p/(p-1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    density: GridFunction,
    exponent: f64,
}

impl Weight {
    pub fn new(density: GridFunction, exponent: f64) -> Result<Self> {
        check_exponent(exponent)?;
        if let Some(i) = density.values().iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Domain(format!(
                "weight must be strictly positive, cell {i} has {}",
                density.values()[i]
            )));
        }
        Ok(Self { density, exponent })
    }

    /// Lebesgue measure on `grid`, tagged with exponent `p`.
    pub fn unit(grid: DyadicGrid, exponent: f64) -> Result<Self> {
        Self::new(GridFunction::constant(grid, 1.0), exponent)
    }

    #[inline]
    pub fn density(&self) -> &GridFunction {
        &self.density
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        self.density.values()
    }

    #[inline]
    pub fn grid(&self) -> DyadicGrid {
        self.density.grid()
    }

    #[inline]
    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn conjugate_exponent(&self) -> f64 {
        conjugate(self.exponent)
    }

    /// `σ = w^{-1/(p-1)}` with exponent `p'`.
    pub fn dual(&self) -> Weight {
        let e = -1.0 / (self.exponent - 1.0);
        let values = self.values().iter().map(|w| w.powf(e)).collect();
        Weight {
            density: GridFunction::from_vec(self.grid(), values),
            exponent: self.conjugate_exponent(),
        }
    }

    /// Same density, different exponent.
    pub fn with_exponent(&self, exponent: f64) -> Result<Weight> {
        check_exponent(exponent)?;
        Ok(Weight {
            density: self.density.clone(),
            exponent,
        })
    }

    pub fn scaled(&self, c: f64) -> Result<Weight> {
        Weight::new(self.density.scale(c), self.exponent)
    }

    /// `x -> 1-x`; exchanges plus and minus characteristics.
    pub fn reversed(&self) -> Weight {
        Weight {
            density: self.density.reversed(),
            exponent: self.exponent,
        }
    }
}

/// `σ = w^{1-p'}`.
pub fn dual_weight(w: &Weight) -> Weight {
    w.dual()
}

/// `p' = p/(p-1)`.
#[inline]
pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("exponent p = {p} must lie in (1, ∞)")))
    }
}

/// Measure used by the norm routines: Lebesgue, or `density · dx`.
#[derive(Clone, Copy, Debug)]
pub enum Measure<'a> {
    Lebesgue,
    Density(&'a GridFunction),
}

impl<'a> Measure<'a> {
    /// Mass of finest cell `i` on `grid`.
    #[inline]
    pub fn cell_mass(&self, grid: DyadicGrid, i: usize) -> f64 {
        match self {
            Measure::Lebesgue => grid.cell_width(),
            Measure::Density(d) => d.values()[i] * grid.cell_width(),
        }
    }
}

impl<'a> From<&'a Weight> for Measure<'a> {
    fn from(w: &'a Weight) -> Self {
        Measure::Density(w.density())
    }
}

impl<'a> From<&'a GridFunction> for Measure<'a> {
    fn from(d: &'a GridFunction) -> Self {
        Measure::Density(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_input() {
        let grid = DyadicGrid::new(2).unwrap();
        let f = GridFunction::new(grid, vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(Weight::new(f, 2.0).is_err());
        assert!(Weight::unit(grid, 1.0).is_err());
        assert!(Weight::unit(grid, f64::INFINITY).is_err());
    }

    #[test]
    fn dual_examples() {
        let grid = DyadicGrid::new(2).unwrap();
        let w = Weight::unit(grid, 3.7).unwrap();
        assert!(w.dual().values().iter().all(|&s| s == 1.0));

        let w = Weight::new(GridFunction::new(grid, vec![4.0, 1.0, 4.0, 1.0]).unwrap(), 2.0).unwrap();
        assert_eq!(w.dual().values(), &[0.25, 1.0, 0.25, 1.0]);

        let w = Weight::new(GridFunction::new(grid, vec![8.0, 2.0, 1.0, 0.5]).unwrap(), 3.0).unwrap();
        let s = w.dual();
        assert!((s.values()[0] - 8f64.powf(-0.5)).abs() < 1e-15);
        assert_eq!(s.exponent(), 1.5);
    }

    #[test]
    fn dual_is_an_involution() {
        let grid = DyadicGrid::new(6).unwrap();
        for &p in &[1.25, 1.5, 2.0, 3.0, 7.0] {
            let w = Weight::new(
                GridFunction::from_fn(grid, |i| 0.01 + (i as f64 * 0.37).sin().abs() * 50.0).unwrap(),
                p,
            )
            .unwrap();
            let back = w.dual().dual();
            assert!((back.exponent() - p).abs() < 1e-12);
            for (a, b) in w.values().iter().zip(back.values()) {
                assert!(((a - b) / a).abs() <= 1e-12);
            }
        }
    }
}
