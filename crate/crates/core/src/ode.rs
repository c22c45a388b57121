//! Fixed-step explicit integrators for small autonomous systems.

use std::str::FromStr;

use serde::Serialize;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Classic fourth-order Runge–Kutta.
    #[default]
    Rk4,
    /// Explicit Euler.
    Euler,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "rk4" => Ok(Method::Rk4),
            "euler" => Ok(Method::Euler),
            other => Err(Error::invalid(format!("unknown integrator `{other}` (expected rk4 or euler)"))),
        }
    }
}

fn axpy(y: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

/// One step of size `h` for `y' = rhs(y)`.
pub fn step<F>(y: &[f64], h: f64, method: Method, rhs: &mut F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    match method {
        Method::Euler => axpy(y, h, &rhs(y)),
        Method::Rk4 => {
            let k1 = rhs(y);
            let k2 = rhs(&axpy(y, 0.5 * h, &k1));
            let k3 = rhs(&axpy(y, 0.5 * h, &k2));
            let k4 = rhs(&axpy(y, h, &k3));
            y.iter().enumerate().map(|(i, v)| v + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
        }
    }
}

/// Integrates over `[0, span]` with `steps` equal steps.
pub fn integrate<F>(y0: &[f64], span: f64, steps: usize, method: Method, mut rhs: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let h = span / steps as f64;
    let mut y = y0.to_vec();
    for _ in 0..steps {
        y = step(&y, h, method, &mut rhs);
    }
    y
}
