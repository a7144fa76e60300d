//! Wire format for operators and boundary data: TOML/JSON specs with an
//! exact (bit-preserving) round trip into the runtime types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{SymMat, Vect};
use crate::operators::{
    perturb_operator, IsaacsFamily, MatrixField, Operator, PucciSign, TorusFunction, TrigTerm,
};
use crate::scalar::{lit, Real};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrigTermSpec {
    pub amp: f64,
    pub freq: Vec<i64>,
    #[serde(default)]
    pub phase: f64,
}

/// Trig-polynomial scalar field spec (ψ and coefficient entries).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PsiSpec {
    pub dim: usize,
    #[serde(default)]
    pub terms: Vec<TrigTermSpec>,
}

impl PsiSpec {
    pub fn constant(dim: usize, c: f64) -> Self {
        PsiSpec { dim, terms: vec![TrigTermSpec { amp: c, freq: vec![0; dim], phase: 0.0 }] }
    }

    pub fn build<T: Real>(&self) -> Result<TorusFunction<T>> {
        if !(2..=3).contains(&self.dim) {
            return Err(Error::Dimension { expected: 3, got: self.dim });
        }
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            if t.freq.len() != self.dim {
                return Err(Error::Dimension { expected: self.dim, got: t.freq.len() });
            }
            let mut freq = [0i64; 3];
            freq[..self.dim].copy_from_slice(&t.freq);
            terms.push(TrigTerm { amp: lit(t.amp), freq, phase: lit(t.phase) });
        }
        Ok(TorusFunction::Trig { dim: self.dim, terms })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum MatrixFieldSpec {
    /// constant symmetric matrix by rows
    Const { rows: Vec<Vec<f64>> },
    /// upper-triangle entries (row-major) as trig-polynomial fields
    Field { dim: usize, upper: Vec<PsiSpec> },
    /// a(y)·Id
    Isotropic { a: PsiSpec },
}

impl MatrixFieldSpec {
    pub fn build<T: Real>(&self) -> Result<MatrixField<T>> {
        match self {
            MatrixFieldSpec::Const { rows } => {
                let d = rows.len();
                let mut m = SymMat::zero(d);
                for (i, r) in rows.iter().enumerate() {
                    if r.len() != d {
                        return Err(Error::Dimension { expected: d, got: r.len() });
                    }
                    for (j, v) in r.iter().enumerate() {
                        if j >= i {
                            m.set(i, j, lit(*v));
                        }
                    }
                }
                m.check_symmetric()?;
                Ok(MatrixField::Const(m))
            }
            MatrixFieldSpec::Field { dim, upper } => {
                let need = dim * (dim + 1) / 2;
                if upper.len() != need {
                    return Err(Error::Parameter(format!(
                        "matrix field needs {need} upper-triangle entries, got {}",
                        upper.len()
                    )));
                }
                let entries: Result<Vec<_>> = upper.iter().map(|s| s.build()).collect();
                Ok(MatrixField::Entries { dim: *dim, entries: entries? })
            }
            MatrixFieldSpec::Isotropic { a } => Ok(MatrixField::isotropic(a.build()?)),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OperatorSpec {
    /// −Tr(A(y)·M)
    Linear {
        a: MatrixFieldSpec,
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    /// Pucci extremal equation; sign "+" is −P⁺ (min family)
    Pucci { dim: usize, sign: String, lambda: f64, big_lambda: f64 },
    Isaacs { dim: usize, n_min: usize, n_max: usize, lambda: f64, mats: Vec<MatrixFieldSpec> },
    Perturbed { base: Box<OperatorSpec>, eta1: Vec<f64>, eps: f64 },
}

fn default_lambda() -> f64 {
    1.0
}

impl OperatorSpec {
    pub fn laplacian(dim: usize) -> Self {
        OperatorSpec::Linear {
            a: MatrixFieldSpec::Const {
                rows: (0..dim)
                    .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect(),
            },
            lambda: 1.0,
        }
    }

    pub fn build<T: Real>(&self) -> Result<Operator<T>> {
        match self {
            OperatorSpec::Linear { a, lambda } => Operator::linear(a.build()?, lit(*lambda)),
            OperatorSpec::Pucci { dim, sign, lambda, big_lambda } => {
                let s = match sign.as_str() {
                    "+" | "plus" => PucciSign::Plus,
                    "-" | "minus" => PucciSign::Minus,
                    other => {
                        return Err(Error::Parse(format!("unknown Pucci sign {other:?}")))
                    }
                };
                if *lambda <= 0.0 || lambda > big_lambda {
                    return Err(Error::Parameter("Pucci parameters require 0 < λ ≤ Λ".into()));
                }
                Ok(Operator::Pucci {
                    dim: *dim,
                    sign: s,
                    lambda: lit(*lambda),
                    big_lambda: lit(*big_lambda),
                })
            }
            OperatorSpec::Isaacs { dim, n_min, n_max, lambda, mats } => {
                let fields: Result<Vec<_>> = mats.iter().map(|m| m.build()).collect();
                Ok(Operator::Isaacs(IsaacsFamily::new(
                    *dim,
                    *n_min,
                    *n_max,
                    fields?,
                    lit(*lambda),
                )?))
            }
            OperatorSpec::Perturbed { base, eta1, eps } => {
                let b = base.build()?;
                let e = Vect::from_f64s(eta1);
                perturb_operator(&b, &e.normalize()?, lit(*eps))
            }
        }
    }
}

/// Round-trip helpers used by the config layer and tests.
pub fn to_json(spec: &OperatorSpec) -> String {
    serde_json::to_string_pretty(spec).expect("operator spec serializes")
}

pub fn from_json(s: &str) -> Result<OperatorSpec> {
    serde_json::from_str(s).map_err(|e| Error::Parse(format!("operator spec: {e}")))
}

pub fn to_toml(spec: &OperatorSpec) -> Result<String> {
    toml::to_string_pretty(spec).map_err(|e| Error::Parse(format!("operator spec: {e}")))
}

pub fn from_toml(s: &str) -> Result<OperatorSpec> {
    toml::from_str(s).map_err(|e| Error::Parse(format!("operator spec: {e}")))
}
