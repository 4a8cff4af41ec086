//! Upper-tail probabilities and quantiles for the reference distributions.

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal, StudentsT};

use crate::error::{DraError, Result};

fn bad(what: &str) -> DraError {
    DraError::NumericalFailure(format!("invalid {what} parameters"))
}

/// `P(X > x)` for a chi-square variable with `df` degrees of freedom.
pub fn chi_square_sf(x: f64, df: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(1.0);
    }
    Ok(ChiSquared::new(df).map_err(|_| bad("chi-square"))?.sf(x))
}

/// `P(F > x)` for an F variable with `(d1, d2)` degrees of freedom.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(FisherSnedecor::new(d1, d2).map_err(|_| bad("F"))?.sf(x))
}

/// Two-sided `P(|T| > |t|)` for Student's t.
pub fn t_two_sided(t: f64, df: f64) -> Result<f64> {
    let d = StudentsT::new(0.0, 1.0, df).map_err(|_| bad("t"))?;
    Ok((2.0 * d.sf(t.abs())).min(1.0))
}

/// Two-sided `P(|Z| > |z|)` for the standard normal.
pub fn normal_two_sided(z: f64) -> f64 {
    let d = Normal::standard();
    (2.0 * d.sf(z.abs())).min(1.0)
}

pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    Ok(StudentsT::new(0.0, 1.0, df).map_err(|_| bad("t"))?.inverse_cdf(p))
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}
