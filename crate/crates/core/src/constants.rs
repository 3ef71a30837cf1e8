//! CODATA SI constants.

use serde::{Deserialize, Serialize};

pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Physical constants used by the optics layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub epsilon0: f64,
    pub hbar: f64,
    pub c: f64,
}

impl Constants {
    pub const SI: Constants = Constants {
        epsilon0: EPSILON_0,
        hbar: HBAR,
        c: SPEED_OF_LIGHT,
    };
}

impl Default for Constants {
    fn default() -> Self {
        Self::SI
    }
}
