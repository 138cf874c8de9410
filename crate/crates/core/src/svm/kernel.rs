use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::{dot_unchecked, squared_distance_unchecked, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
    Poly,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Linear => "linear",
            KernelKind::Rbf => "rbf",
            KernelKind::Poly => "poly",
        })
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(KernelKind::Linear),
            "rbf" => Ok(KernelKind::Rbf),
            "poly" | "polynomial" => Ok(KernelKind::Poly),
            other => Err(Error::parse("kernel", format!("unknown kernel {other:?}"))),
        }
    }
}

/// `"scale"` or an explicit positive value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Scale,
    Value(f64),
}

impl Serialize for Gamma {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Gamma::Scale => s.serialize_str("scale"),
            Gamma::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Gamma {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Gamma::Value(v)),
            Raw::Str(s) if s == "scale" => Ok(Gamma::Scale),
            Raw::Str(s) => s
                .parse::<f64>()
                .map(Gamma::Value)
                .map_err(|_| serde::de::Error::custom(format!("invalid gamma {s:?}"))),
        }
    }
}

impl FromStr for Gamma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "scale" {
            return Ok(Gamma::Scale);
        }
        s.parse::<f64>()
            .map(Gamma::Value)
            .map_err(|_| Error::parse("gamma", format!("expected \"scale\" or a number, got {s:?}")))
    }
}

/// Unresolved kernel choice as a user states it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    #[serde(default = "default_gamma")]
    pub gamma: Gamma,
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(default)]
    pub coef0: f64,
}

fn default_gamma() -> Gamma {
    Gamma::Scale
}

fn default_degree() -> u32 {
    3
}

impl KernelSpec {
    pub fn new(kind: KernelKind) -> Self {
        KernelSpec {
            kind,
            gamma: Gamma::Scale,
            degree: 3,
            coef0: 0.0,
        }
    }

    pub fn linear() -> Self {
        KernelSpec::new(KernelKind::Linear)
    }

    pub fn rbf(gamma: Gamma) -> Self {
        KernelSpec {
            gamma,
            ..KernelSpec::new(KernelKind::Rbf)
        }
    }

    pub fn poly(gamma: Gamma, degree: u32, coef0: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Poly,
            gamma,
            degree,
            coef0,
        }
    }

    /// Resolves `gamma` against the training data, yielding an evaluable kernel.
    pub fn resolve(&self, data: &Matrix) -> Result<Kernel> {
        match self.kind {
            KernelKind::Linear => Ok(Kernel::Linear),
            KernelKind::Rbf => Ok(Kernel::Rbf {
                gamma: resolve_gamma(self, data)?,
            }),
            KernelKind::Poly => {
                if self.degree == 0 {
                    return Err(Error::contract("polynomial degree must be at least 1"));
                }
                Ok(Kernel::Poly {
                    gamma: resolve_gamma(self, data)?,
                    degree: self.degree,
                    coef0: self.coef0,
                })
            }
        }
    }
}

/// `"scale"` becomes `1 / (d · Var(X))` with the population variance of every
/// entry of `data`; explicit values pass through after a positivity check.
pub fn resolve_gamma(spec: &KernelSpec, data: &Matrix) -> Result<f64> {
    match spec.gamma {
        Gamma::Value(g) if g > 0.0 && g.is_finite() => Ok(g),
        Gamma::Value(g) => Err(Error::contract(format!("gamma must be positive, got {g}"))),
        Gamma::Scale => {
            let values = data.as_flat();
            if values.is_empty() || data.ncols() == 0 {
                return Err(Error::contract("gamma=\"scale\" needs non-empty data"));
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            if !(var > 0.0) {
                return Err(Error::domain("gamma=\"scale\" is undefined for zero-variance data"));
            }
            Ok(1.0 / (data.ncols() as f64 * var))
        }
    }
}

/// A kernel with every parameter resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
    Poly { gamma: f64, degree: u32, coef0: f64 },
}

impl Kernel {
    pub fn kind(&self) -> KernelKind {
        match self {
            Kernel::Linear => KernelKind::Linear,
            Kernel::Rbf { .. } => KernelKind::Rbf,
            Kernel::Poly { .. } => KernelKind::Poly,
        }
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot_unchecked(x, y),
            Kernel::Rbf { gamma } => (-gamma * squared_distance_unchecked(x, y)).exp(),
            Kernel::Poly {
                gamma,
                degree,
                coef0,
            } => (gamma * dot_unchecked(x, y) + coef0).powi(degree as i32),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::contract(format!(
                "kernel dimension mismatch: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        Ok(self.eval_unchecked(x, y))
    }
}

pub fn kernel_eval(kernel: &Kernel, x: &[f64], y: &[f64]) -> Result<f64> {
    kernel.eval(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_examples() {
        let rbf = Kernel::Rbf { gamma: 0.7 };
        assert_eq!(rbf.eval(&[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
        assert_eq!(Kernel::Linear.eval(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        let poly = Kernel::Poly { gamma: 1.0, degree: 2, coef0: 1.0 };
        assert_eq!(poly.eval(&[1.0, 0.0], &[1.0, 1.0]).unwrap(), 4.0);
        assert!(matches!(Kernel::Linear.eval(&[1.0], &[1.0, 2.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn gamma_resolution() {
        let data = Matrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(resolve_gamma(&KernelSpec::rbf(Gamma::Value(0.5)), &data).unwrap(), 0.5);
        assert_eq!(resolve_gamma(&KernelSpec::rbf(Gamma::Scale), &data).unwrap(), 1.0);
        let flat = Matrix::from_rows(&[vec![3.0, 3.0], vec![3.0, 3.0]]).unwrap();
        assert!(matches!(
            resolve_gamma(&KernelSpec::rbf(Gamma::Scale), &flat),
            Err(Error::Domain(_))
        ));
        assert!(resolve_gamma(&KernelSpec::rbf(Gamma::Value(-1.0)), &data).is_err());
        // Linear ignores gamma entirely.
        assert_eq!(KernelSpec::linear().resolve(&flat).unwrap(), Kernel::Linear);
    }

    #[test]
    fn serde_forms() {
        let spec: KernelSpec = serde_json::from_str(r#"{"kind":"rbf","gamma":"scale"}"#).unwrap();
        assert_eq!(spec, KernelSpec::rbf(Gamma::Scale));
        let spec: KernelSpec = serde_json::from_str(r#"{"kind":"poly","gamma":0.25,"coef0":1}"#).unwrap();
        assert_eq!(spec, KernelSpec::poly(Gamma::Value(0.25), 3, 1.0));
        let k = Kernel::Poly { gamma: 0.1, degree: 3, coef0: 0.0 };
        let json = serde_json::to_string(&k).unwrap();
        assert_eq!(json, r#"{"kind":"poly","gamma":0.1,"degree":3,"coef0":0.0}"#);
        assert_eq!(serde_json::from_str::<Kernel>(&json).unwrap(), k);
    }
}
