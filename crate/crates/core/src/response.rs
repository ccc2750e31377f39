//! Bounded client responses from raw local losses.
//!
//! Losses are divided by the round's mean loss (so they sit around 1), pushed
//! through a fixed CDF and affinely mapped into `[c1, c2]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CdfFamily {
    Weibull,
    Frechet,
    Gumbel,
    Exponential,
    Logistic,
    Normal,
}

impl CdfFamily {
    pub const ALL: [CdfFamily; 6] = [
        CdfFamily::Weibull,
        CdfFamily::Frechet,
        CdfFamily::Gumbel,
        CdfFamily::Exponential,
        CdfFamily::Logistic,
        CdfFamily::Normal,
    ];

    pub fn default_shape(self) -> f64 {
        match self {
            CdfFamily::Weibull => 2.0,
            _ => 1.0,
        }
    }

    pub fn has_shape(self) -> bool {
        !matches!(self, CdfFamily::Exponential)
    }
}

/// A CDF family with its two parameters.
///
/// `scale` is the first parameter of every family. For Gumbel, Logistic and
/// Normal it plays the role of the location (the point the CDF is centered on)
/// and `shape` is the spread; for Weibull and Frechet they are the usual
/// scale/shape pair. Exponential ignores `shape`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfKind {
    pub family: CdfFamily,
    pub scale: f64,
    pub shape: f64,
}

impl CdfKind {
    pub fn new(family: CdfFamily, scale: f64, shape: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("cdf scale must be positive, got {scale}")));
        }
        if family.has_shape() && !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::Domain(format!("cdf shape must be positive, got {shape}")));
        }
        Ok(CdfKind {
            family,
            scale,
            shape,
        })
    }

    pub fn with_defaults(family: CdfFamily) -> Self {
        CdfKind {
            family,
            scale: 1.0,
            shape: family.default_shape(),
        }
    }
}

/// Gauss error function, Abramowitz & Stegun 7.1.26 (absolute error <= 1.5e-7).
pub fn erf(x: f64) -> f64 {
    const A1: f64 = 0.254829592;
    const A2: f64 = -0.284496736;
    const A3: f64 = 1.421413741;
    const A4: f64 = -1.453152027;
    const A5: f64 = 1.061405429;
    const P: f64 = 0.3275911;
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + P * x);
    let poly = ((((A5 * t + A4) * t + A3) * t + A2) * t + A1) * t;
    sign * (1.0 - poly * (-x * x).exp())
}

pub fn cdf_eval(kind: CdfKind, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("cdf input must be nonnegative, got {x}")));
    }
    let CdfKind {
        family,
        scale: a,
        shape: b,
    } = kind;
    let v = match family {
        CdfFamily::Weibull => 1.0 - (-(x / a).powf(b)).exp(),
        CdfFamily::Frechet => {
            if x == 0.0 {
                0.0
            } else {
                (-(x / a).powf(-b)).exp()
            }
        }
        CdfFamily::Gumbel => (-(-(x - a) / b).exp()).exp(),
        CdfFamily::Exponential => 1.0 - (-x / a).exp(),
        CdfFamily::Logistic => 1.0 / (1.0 + (-(x - a) / b).exp()),
        CdfFamily::Normal => 0.5 * (1.0 + erf((x - a) / (b * std::f64::consts::SQRT_2))),
    };
    Ok(v.clamp(0.0, 1.0))
}

/// Response range `[c1, c2]` with `0 <= c1 < c2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseBounds {
    c1: f64,
    c2: f64,
}

impl ResponseBounds {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if !(c1 >= 0.0 && c1 < c2 && c2.is_finite()) {
            return Err(Error::Domain(format!(
                "response bounds need 0 <= c1 < c2, got [{c1}, {c2}]"
            )));
        }
        Ok(ResponseBounds { c1, c2 })
    }

    /// `[0, 1/K]`, the cross-silo range.
    pub fn cross_silo(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidDimension("K must be >= 1".into()));
        }
        ResponseBounds::new(0.0, 1.0 / k as f64)
    }

    /// `[0, C]`, the cross-device range.
    pub fn cross_device(sampling: f64) -> Result<Self> {
        ResponseBounds::new(0.0, sampling)
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn width(&self) -> f64 {
        self.c2 - self.c1
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.c1 && v <= self.c2
    }
}

/// Per-client responses for one round; `observed[i]` is false for clients
/// that did not report.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseVector {
    values: Vec<f64>,
    observed: Vec<bool>,
}

impl ResponseVector {
    pub fn new(values: Vec<f64>, observed: Vec<bool>) -> Result<Self> {
        crate::error::check_len(values.len(), observed.len())?;
        if values.is_empty() {
            return Err(Error::InvalidDimension("response vector needs K >= 1".into()));
        }
        Ok(ResponseVector { values, observed })
    }

    pub fn fully_observed(values: Vec<f64>) -> Self {
        let observed = vec![true; values.len()];
        ResponseVector { values, observed }
    }

    /// Scatters responses of the clients in `ids` into a length-`k` vector.
    pub fn from_partial(k: usize, ids: &[usize], responses: &[f64]) -> Result<Self> {
        crate::error::check_len(ids.len(), responses.len())?;
        let mut values = vec![0.0; k];
        let mut observed = vec![false; k];
        for (&i, &r) in ids.iter().zip(responses) {
            if i >= k {
                return Err(Error::InvalidDimension(format!("client {i} out of range for K={k}")));
            }
            values[i] = r;
            observed[i] = true;
        }
        ResponseVector::new(values, observed)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|o| **o).count()
    }

    /// Mean over observed entries, `None` when nothing was observed.
    pub fn observed_mean(&self) -> Option<f64> {
        let n = self.observed_count();
        if n == 0 {
            return None;
        }
        let sum: f64 = self
            .values
            .iter()
            .zip(&self.observed)
            .filter(|(_, o)| **o)
            .map(|(v, _)| v)
            .sum();
        Some(sum / n as f64)
    }
}

/// Maps the local losses of the available clients to bounded responses.
pub fn transform_losses(losses: &[f64], kind: CdfKind, bounds: ResponseBounds) -> Result<Vec<f64>> {
    if losses.is_empty() {
        return Err(Error::InvalidDimension("no losses to transform".into()));
    }
    if let Some(l) = losses.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(Error::Domain(format!("local loss {l} is not a finite nonnegative value")));
    }
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    if mean <= 0.0 {
        return Err(Error::DegenerateInput("all local losses are zero".into()));
    }
    losses
        .iter()
        .map(|l| Ok(bounds.c1 + bounds.width() * cdf_eval(kind, l / mean)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round2(x: f64) -> f64 {
        (x * 100.0).round() / 100.0
    }

    #[test]
    fn single_point_values() {
        let e = cdf_eval(CdfKind::with_defaults(CdfFamily::Exponential), 1.0).unwrap();
        assert!((e - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((e - 0.6321).abs() < 1e-4);
        let l = cdf_eval(CdfKind::with_defaults(CdfFamily::Logistic), 1.0).unwrap();
        assert_eq!(l, 0.5);
        let w = cdf_eval(CdfKind::with_defaults(CdfFamily::Weibull), 2.31).unwrap();
        assert!((w - 0.9952).abs() < 1e-4, "{w}");
        assert_eq!(round2(w), 1.0);
    }

    #[test]
    fn negative_input_is_domain_error() {
        for f in CdfFamily::ALL {
            assert!(matches!(
                cdf_eval(CdfKind::with_defaults(f), -0.1),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn erf_matches_reference_values() {
        // reference values of erf to 10 digits
        for (x, want) in [
            (0.0, 0.0),
            (0.5, 0.5204998778),
            (1.0, 0.8427007929),
            (2.0, 0.9953222650),
            (-1.0, -0.8427007929),
        ] {
            assert!((erf(x) - want).abs() <= 1.5e-7, "erf({x})");
        }
    }

    #[test]
    fn table_rows_at_two_decimals() {
        let losses = [0.01, 0.10, 0.02];
        let unit = ResponseBounds::new(0.0, 1.0).unwrap();
        let w = transform_losses(&losses, CdfKind::with_defaults(CdfFamily::Weibull), unit).unwrap();
        assert_eq!(w.iter().map(|x| round2(*x)).collect::<Vec<_>>(), vec![0.05, 1.00, 0.19]);
        // the last Normal entry is 0.2951, printed as 0.29 in the reference table
        let n = transform_losses(&losses, CdfKind::with_defaults(CdfFamily::Normal), unit).unwrap();
        assert_eq!(n.iter().map(|x| round2(*x)).collect::<Vec<_>>()[..2], [0.22, 0.90]);
        assert!((n[2] - 0.2951).abs() < 1e-4, "{}", n[2]);
    }

    #[test]
    fn equal_losses_map_to_cdf_at_one() {
        let unit = ResponseBounds::new(0.0, 1.0).unwrap();
        for f in CdfFamily::ALL {
            let kind = CdfKind::with_defaults(f);
            let out = transform_losses(&[0.7, 0.7, 0.7], kind, unit).unwrap();
            let at_one = cdf_eval(kind, 1.0).unwrap();
            assert!(out.iter().all(|r| (r - at_one).abs() < 1e-15));
        }
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let unit = ResponseBounds::new(0.0, 1.0).unwrap();
        let kind = CdfKind::with_defaults(CdfFamily::Normal);
        assert!(matches!(
            transform_losses(&[0.0, 0.0], kind, unit),
            Err(Error::DegenerateInput(_))
        ));
        assert!(transform_losses(&[], kind, unit).is_err());
        assert!(transform_losses(&[1.0, -1.0], kind, unit).is_err());
        assert!(ResponseBounds::new(0.5, 0.5).is_err());
        assert!(ResponseBounds::new(-0.1, 0.5).is_err());
        assert!(CdfKind::new(CdfFamily::Weibull, 0.0, 2.0).is_err());
        assert!(CdfKind::new(CdfFamily::Exponential, 1.0, 0.0).is_ok());
    }

    #[test]
    fn single_reporting_client_gets_cdf_of_one() {
        let b = ResponseBounds::new(0.0, 0.1).unwrap();
        let kind = CdfKind::with_defaults(CdfFamily::Weibull);
        let out = transform_losses(&[3.2], kind, b).unwrap();
        assert!((out[0] - 0.1 * cdf_eval(kind, 1.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn partial_scatter() {
        let r = ResponseVector::from_partial(4, &[1, 3], &[0.2, 0.4]).unwrap();
        assert_eq!(r.values(), &[0.0, 0.2, 0.0, 0.4]);
        assert_eq!(r.observed(), &[false, true, false, true]);
        assert!((r.observed_mean().unwrap() - 0.3).abs() < 1e-15);
        assert!(ResponseVector::from_partial(2, &[2], &[0.1]).is_err());
    }
}
