use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// Absolute power level in dBm. RSSI, thresholds and transmit power all
/// share this unit; differences between two levels are plain dB (`f64`).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dbm(pub f64);

impl Dbm {
    pub fn to_mw(self) -> f64 {
        10f64.powf(self.0 / 10.0)
    }

    pub fn from_mw(mw: f64) -> Self {
        Dbm(10.0 * mw.log10())
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn max(self, other: Dbm) -> Dbm {
        if self.0 >= other.0 {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: Dbm) -> Dbm {
        if self.0 <= other.0 {
            self
        } else {
            other
        }
    }

    pub fn clamp(self, lo: Dbm, hi: Dbm) -> Dbm {
        Dbm(self.0.clamp(lo.0, hi.0))
    }

    /// Midpoint of two levels in the log domain.
    pub fn midpoint(self, other: Dbm) -> Dbm {
        Dbm((self.0 + other.0) / 2.0)
    }
}

impl Add<f64> for Dbm {
    type Output = Dbm;
    fn add(self, db: f64) -> Dbm {
        Dbm(self.0 + db)
    }
}

impl Sub<f64> for Dbm {
    type Output = Dbm;
    fn sub(self, db: f64) -> Dbm {
        Dbm(self.0 - db)
    }
}

impl Sub<Dbm> for Dbm {
    type Output = f64;
    fn sub(self, other: Dbm) -> f64 {
        self.0 - other.0
    }
}

impl fmt::Display for Dbm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} dBm", self.0)
    }
}

/// Sum of several levels, combined in the linear (mW) domain.
pub fn power_sum<I: IntoIterator<Item = Dbm>>(levels: I) -> Dbm {
    Dbm::from_mw(levels.into_iter().map(Dbm::to_mw).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mw_round_trip() {
        assert_relative_eq!(Dbm(0.0).to_mw(), 1.0);
        assert_relative_eq!(Dbm(-30.0).to_mw(), 1e-3, max_relative = 1e-12);
        assert_relative_eq!(Dbm::from_mw(Dbm(-61.3).to_mw()).0, -61.3, epsilon = 1e-12);
    }

    #[test]
    fn equal_powers_sum_to_plus_three_db() {
        let s = power_sum([Dbm(-70.0), Dbm(-70.0)]);
        assert_relative_eq!(s.0, -70.0 + 10.0 * 2f64.log10(), epsilon = 1e-12);
    }
}
