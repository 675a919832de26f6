use serde::{Deserialize, Serialize};

use super::params::MapParams;
use super::validate::angle_constant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Configured,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub value: f64,
    pub provenance: Provenance,
}

impl Constant {
    pub fn configured(value: f64) -> Self {
        Constant { value, provenance: Provenance::Configured }
    }

    pub fn estimated(value: f64) -> Self {
        Constant { value, provenance: Provenance::Estimated }
    }
}

/// Named constants of the construction, each with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub chi0: Constant,
    pub chi1: Constant,
    pub chi: Constant,
    pub c0: Constant,
    pub eps0: Constant,
    pub eta: Constant,
    pub rho1: Constant,
    pub c3: Constant,
    pub c4: Constant,
    pub c5: Constant,
    pub k: Constant,
    pub eps1: Constant,
    pub gamma: Constant,
    pub b: Constant,
}

impl Certificate {
    /// Closed-form constants plus conservative placeholders for the ones
    /// that are normally calibrated.
    pub fn initial(p: &MapParams) -> Self {
        let c0 = 0.05;
        let rho1 = 0.5;
        Certificate {
            chi0: Constant::configured(4.0),
            chi1: Constant::estimated(0.1),
            chi: Constant::estimated(angle_constant(p)),
            c0: Constant::estimated(c0),
            eps0: Constant::estimated(0.1),
            eta: Constant::estimated(0.1),
            rho1: Constant::estimated(rho1),
            c3: Constant::estimated(rho1 * c0),
            c4: Constant::configured(2.0 * p.c * p.sigma * p.sigma),
            c5: Constant::estimated(1.0),
            k: Constant::estimated(4.0),
            eps1: Constant::estimated(1.0),
            gamma: Constant::configured(p.gamma()),
            b: Constant::configured(p.b),
        }
    }

    pub fn entries(&self) -> Vec<(&'static str, Constant)> {
        vec![
            ("chi0", self.chi0),
            ("chi1", self.chi1),
            ("chi", self.chi),
            ("C0", self.c0),
            ("eps0", self.eps0),
            ("eta", self.eta),
            ("rho1", self.rho1),
            ("C3", self.c3),
            ("C4", self.c4),
            ("C5", self.c5),
            ("K", self.k),
            ("eps1", self.eps1),
            ("gamma", self.gamma),
            ("b", self.b),
        ]
    }

    pub fn all_positive(&self) -> bool {
        self.entries().iter().all(|(_, c)| c.value > 0.0 && c.value.is_finite())
    }
}
