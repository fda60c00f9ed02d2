//! Per-user utility functions and the closed-form flow-control rule.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use super::SchedError;

/// Concave non-decreasing utility `phi_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UtilitySpec {
    /// `nu * min(x, theta)`.
    PiecewiseLinear { nu: f64, theta: f64 },
    /// `ln(1 + nu * x)`.
    LogOnePlus { nu: f64 },
    /// `ln(x)`; unbounded slope at zero.
    PureLog,
}

impl UtilitySpec {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            UtilitySpec::PiecewiseLinear { nu, theta } => nu * x.min(theta),
            UtilitySpec::LogOnePlus { nu } => (nu * x).ln_1p(),
            UtilitySpec::PureLog => x.ln(),
        }
    }

    /// Largest right-derivative on `x >= 0`, if finite.
    pub fn max_slope(&self) -> Option<f64> {
        match *self {
            UtilitySpec::PiecewiseLinear { nu, .. } | UtilitySpec::LogOnePlus { nu } => Some(nu),
            UtilitySpec::PureLog => None,
        }
    }

    pub fn validate(&self, x_max: u32) -> Result<(), SchedError> {
        let ok = match *self {
            UtilitySpec::PiecewiseLinear { nu, theta } => {
                nu > 0.0 && theta > 0.0 && theta <= f64::from(x_max)
            }
            UtilitySpec::LogOnePlus { nu } => nu > 0.0 && nu.is_finite(),
            UtilitySpec::PureLog => true,
        };
        if ok {
            Ok(())
        } else {
            Err(SchedError::Utility(self.to_string()))
        }
    }
}

impl fmt::Display for UtilitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UtilitySpec::PiecewiseLinear { nu, theta } => write!(f, "linear:{nu}:{theta}"),
            UtilitySpec::LogOnePlus { nu } => write!(f, "log1p:{nu}"),
            UtilitySpec::PureLog => write!(f, "log"),
        }
    }
}

impl Serialize for UtilitySpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Parses `log`, `log1p:<nu>` or `linear:<nu>:<theta>`.
impl FromStr for UtilitySpec {
    type Err = SchedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| SchedError::Utility(s.to_string()))
        };
        match parts.as_slice() {
            ["log"] => Ok(UtilitySpec::PureLog),
            ["log1p", nu] => Ok(UtilitySpec::LogOnePlus { nu: num(nu)? }),
            ["linear", nu, theta] => Ok(UtilitySpec::PiecewiseLinear {
                nu: num(nu)?,
                theta: num(theta)?,
            }),
            _ => Err(SchedError::Utility(s.to_string())),
        }
    }
}

/// Auxiliary rate `gamma_k(t)` maximising `V*phi(gamma) - Q*gamma` over
/// `[0, x_max]`.
///
/// `V = 0` always gives zero. With `Q = 0` the log rules return `x_max`.
pub fn choose_gamma(utility: &UtilitySpec, q: f64, v: f64, x_max: u32) -> f64 {
    let cap = f64::from(x_max);
    if v <= 0.0 {
        return 0.0;
    }
    match *utility {
        UtilitySpec::PiecewiseLinear { nu, theta } => {
            if q <= v * nu {
                theta.min(cap)
            } else {
                0.0
            }
        }
        UtilitySpec::LogOnePlus { nu } => {
            if q <= 0.0 {
                cap
            } else {
                (v / q - 1.0 / nu).clamp(0.0, cap)
            }
        }
        UtilitySpec::PureLog => {
            if q <= 0.0 {
                cap
            } else {
                (v / q).clamp(0.0, cap)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_linear_threshold() {
        let u = UtilitySpec::PiecewiseLinear { nu: 1.0, theta: 2.0 };
        assert_eq!(choose_gamma(&u, 9.0, 10.0, 3), 2.0);
        assert_eq!(choose_gamma(&u, 10.0, 10.0, 3), 2.0);
        assert_eq!(choose_gamma(&u, 10.5, 10.0, 3), 0.0);
    }

    #[test]
    fn log_one_plus_closed_form() {
        let u = UtilitySpec::LogOnePlus { nu: 1.0 };
        assert_eq!(choose_gamma(&u, 5.0, 10.0, 3), 1.0);
        assert_eq!(choose_gamma(&u, 1.0, 10.0, 3), 3.0);
        assert_eq!(choose_gamma(&u, 20.0, 10.0, 3), 0.0);
        assert_eq!(choose_gamma(&u, 0.0, 10.0, 3), 3.0);
    }

    #[test]
    fn pure_log_limit_at_zero_queue() {
        assert_eq!(choose_gamma(&UtilitySpec::PureLog, 0.0, 10.0, 3), 3.0);
        assert_eq!(choose_gamma(&UtilitySpec::PureLog, 5.0, 10.0, 3), 2.0);
    }

    #[test]
    fn zero_v_means_zero_gamma() {
        for u in [
            UtilitySpec::PureLog,
            UtilitySpec::LogOnePlus { nu: 1.0 },
            UtilitySpec::PiecewiseLinear { nu: 1.0, theta: 1.0 },
        ] {
            assert_eq!(choose_gamma(&u, 0.0, 0.0, 3), 0.0);
            assert_eq!(choose_gamma(&u, 4.0, 0.0, 3), 0.0);
        }
    }

    #[test]
    fn utility_values() {
        assert_eq!(UtilitySpec::PiecewiseLinear { nu: 2.0, theta: 1.5 }.value(3.0), 3.0);
        assert!((UtilitySpec::LogOnePlus { nu: 1.0 }.value(3.0) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(UtilitySpec::PureLog.value(0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["log", "log1p:1", "linear:1:2", "log1p:0.5"] {
            let u: UtilitySpec = s.parse().unwrap();
            assert_eq!(u.to_string().parse::<UtilitySpec>().unwrap(), u);
        }
        assert!("cubic".parse::<UtilitySpec>().is_err());
        assert!("log1p:x".parse::<UtilitySpec>().is_err());
    }

    #[test]
    fn validation() {
        assert!(UtilitySpec::PiecewiseLinear { nu: 1.0, theta: 4.0 }.validate(3).is_err());
        assert!(UtilitySpec::LogOnePlus { nu: 0.0 }.validate(3).is_err());
        assert!(UtilitySpec::LogOnePlus { nu: 1.0 }.validate(3).is_ok());
    }
}
