use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the piecewise map on the unit square.
///
/// Horizontal strips: `R1 = [0, 1/σ]`, `R3 = [r3_y0, r3_y0 + (2/3)/σ]`,
/// `R4 = [t - w_max/σ, t + w_max/σ]`, `R5 = [1 - (2/3)/σ, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapParams {
    pub lambda: f64,
    pub sigma: f64,
    pub c: f64,
    pub q: f64,
    pub t: f64,
    pub w_max: f64,
    pub r3_y0: f64,
    pub r3_a: f64,
    pub b: f64,
}

impl MapParams {
    /// Small contraction, large curvature: every sufficient condition holds.
    pub fn ref_strict() -> Self {
        MapParams {
            lambda: 1e-5,
            sigma: 1e5,
            c: 648.0,
            q: 0.75,
            t: 0.6,
            w_max: 0.02,
            r3_y0: 0.4,
            r3_a: 0.5,
            b: 2.0,
        }
    }

    /// Human-scale demo parameters; some sufficient conditions fail.
    pub fn ref_ex() -> Self {
        MapParams {
            lambda: 0.1,
            sigma: 5.0,
            c: 5.0,
            q: 0.75,
            t: 0.7,
            w_max: 0.22,
            r3_y0: 0.4,
            r3_a: 0.5,
            b: 2.0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: MapParams = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let vals = [p.lambda, p.sigma, p.c, p.q, p.t, p.w_max, p.r3_y0, p.r3_a, p.b];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite parameter".into()));
        }
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    pub fn r1_top(&self) -> f64 {
        1.0 / self.sigma
    }

    pub fn r3_top(&self) -> f64 {
        self.r3_y0 + (2.0 / 3.0) / self.sigma
    }

    pub fn r4_half_height(&self) -> f64 {
        self.w_max / self.sigma
    }

    pub fn r4_bottom(&self) -> f64 {
        self.t - self.r4_half_height()
    }

    pub fn r4_top(&self) -> f64 {
        self.t + self.r4_half_height()
    }

    pub fn r5_bottom(&self) -> f64 {
        1.0 - (2.0 / 3.0) / self.sigma
    }

    /// The tangency point `Q = (q, 0)`.
    pub fn tangency(&self) -> crate::Point {
        crate::Point::new(self.q, 0.0)
    }

    /// Preimage of the tangency point, `T = (0, t)`.
    pub fn tangency_preimage(&self) -> crate::Point {
        crate::Point::new(0.0, self.t)
    }

    /// Largest distance to `x = q` over the region A: `sqrt((λ + 1/σ)/c)`.
    pub fn l_sup(&self) -> f64 {
        ((self.lambda + 1.0 / self.sigma) / self.c).sqrt()
    }

    /// Hölder exponent of the coding map, `min(-ln√λ, ln√σ) / ln 2`.
    pub fn gamma(&self) -> f64 {
        let a = -self.lambda.sqrt().ln() / std::f64::consts::LN_2;
        let b = self.sigma.sqrt().ln() / std::f64::consts::LN_2;
        a.min(b)
    }

    /// Stable hash-friendly canonical text of the parameters.
    pub fn canonical(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.lambda, self.sigma, self.c, self.q, self.t, self.w_max, self.r3_y0, self.r3_a, self.b
        )
    }
}
