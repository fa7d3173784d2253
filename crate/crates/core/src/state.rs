//! Unknowns of one system at one instant.

use crate::error::{Error, Result};
use crate::field::{Levels, SpectralField};
use crate::grid::GridSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Limit,
    Scaled,
    Difference,
}

impl Flavor {
    pub fn code(self) -> u32 {
        match self {
            Flavor::Limit => 0,
            Flavor::Scaled => 1,
            Flavor::Difference => 2,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Flavor::Limit),
            1 => Ok(Flavor::Scaled),
            2 => Ok(Flavor::Difference),
            other => Err(Error::Format(format!("unknown flavor code {other}"))),
        }
    }

    /// Layout of the pressure: one row for the limit system, midpoints otherwise.
    pub fn pressure_levels(self) -> Levels {
        match self {
            Flavor::Limit => Levels::Single,
            Flavor::Scaled | Flavor::Difference => Levels::Midpoints,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Flavor::Limit => "limit",
            Flavor::Scaled => "scaled",
            Flavor::Difference => "difference",
        }
    }
}

/// (u, v, b, c) live on the interior nodes; p on the flavor's pressure levels.
#[derive(Debug, Clone, PartialEq)]
pub struct MhdState {
    pub time: f64,
    pub flavor: Flavor,
    pub u: SpectralField,
    pub v: SpectralField,
    pub b: SpectralField,
    pub c: SpectralField,
    pub p: SpectralField,
}

impl MhdState {
    pub fn zeros(grid: GridSpec, flavor: Flavor) -> Self {
        let z = SpectralField::zeros(grid, Levels::Nodes);
        Self {
            time: 0.0,
            flavor,
            u: z.clone(),
            v: z.clone(),
            b: z.clone(),
            c: z,
            p: SpectralField::zeros(grid, flavor.pressure_levels()),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.u.grid()
    }

    pub fn is_finite(&self) -> bool {
        [&self.u, &self.v, &self.b, &self.c, &self.p].iter().all(|f| f.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        let g = *self.grid();
        for (name, f) in [("u", &self.u), ("v", &self.v), ("b", &self.b), ("c", &self.c)] {
            if *f.grid() != g || f.levels() != Levels::Nodes {
                return Err(Error::Usage(format!("state component {name} has the wrong layout")));
            }
        }
        if *self.p.grid() != g || self.p.levels() != self.flavor.pressure_levels() {
            return Err(Error::Usage("pressure layout does not match flavor".into()));
        }
        Ok(())
    }

    /// Multiplies every component by e^{sign·r|k|}.
    pub fn reweighted(&self, radius: f64, sign: f64) -> Result<MhdState> {
        use crate::analyticity::apply_weight;
        Ok(MhdState {
            time: self.time,
            flavor: self.flavor,
            u: apply_weight(&self.u, radius, sign)?,
            v: apply_weight(&self.v, radius, sign)?,
            b: apply_weight(&self.b, radius, sign)?,
            c: apply_weight(&self.c, radius, sign)?,
            p: apply_weight(&self.p, radius, sign)?,
        })
    }
}
