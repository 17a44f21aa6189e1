//! Fitted-model files (JSON, `format_version` 1).
//!
//! Numbers are written in the shortest decimal form that parses back to the
//! same `f64`, so save → load is value-identical.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConstraintMode, Factorization, FitTrace, Method, Priors, VariationalState};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceEntry {
    pub iter: usize,
    pub objective: f64,
    pub recon_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub method: Method,
    #[serde(rename = "V")]
    pub n_terms: usize,
    #[serde(rename = "D")]
    pub n_docs: usize,
    #[serde(rename = "K")]
    pub n_topics: usize,
    pub constraint_mode: ConstraintMode,
    /// Row-major, `V` rows of `K`.
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    /// Row-major, `K` rows of `D`; MU methods only.
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<Vec<f64>>>,
    /// Row-major, `K` rows of `D`; variational methods only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_rate: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_a: Option<Vec<f64>>,
    pub lambda: f64,
    pub final_objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEntry>>,
}

fn rows_of(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn trace_entries(trace: &FitTrace) -> Vec<TraceEntry> {
    trace
        .objective
        .iter()
        .zip(&trace.recon_evals)
        .enumerate()
        .map(|(i, (&objective, &recon_evals))| TraceEntry {
            iter: i + 1,
            objective,
            recon_evals,
        })
        .collect()
}

fn to_matrix(name: &str, rows: &[Vec<f64>], n_rows: usize, n_cols: usize, row_sym: &str, col_sym: &str) -> Result<Array2<f64>> {
    if rows.len() != n_rows {
        return Err(Error::DimensionMismatch(format!(
            "{name} has {} rows, {row_sym}={n_rows}",
            rows.len()
        )));
    }
    if let Some(first) = rows.first() {
        if rows.iter().all(|r| r.len() == first.len()) && first.len() != n_cols {
            return Err(Error::DimensionMismatch(format!(
                "{name} has {} columns, {col_sym}={n_cols}",
                first.len()
            )));
        }
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_cols) {
        return Err(Error::DimensionMismatch(format!(
            "{name} row {i} has {} columns, {col_sym}={n_cols}",
            r.len()
        )));
    }
    Ok(Array2::from_shape_fn((n_rows, n_cols), |(i, j)| rows[i][j]))
}

fn require<'a, T>(field: &'a Option<T>, name: &str, method: Method) -> Result<&'a T> {
    field.as_ref().ok_or_else(|| Error::Schema {
        path: name.to_string(),
        msg: format!("required for method {method}"),
    })
}

fn forbid<T>(field: &Option<T>, name: &str, method: Method) -> Result<()> {
    if field.is_some() {
        return Err(Error::Schema {
            path: name.to_string(),
            msg: format!("not allowed for method {method}"),
        });
    }
    Ok(())
}

impl ModelFile {
    /// Model file for a multiplicative-update fit.
    pub fn from_factorization(
        method: Method,
        f: &Factorization,
        lambda: f64,
        final_objective: f64,
        trace: Option<&FitTrace>,
    ) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            method,
            n_terms: f.w().nrows(),
            n_docs: f.h().ncols(),
            n_topics: f.n_topics(),
            constraint_mode: f.mode(),
            w: rows_of(f.w()),
            h: Some(rows_of(f.h())),
            beta: None,
            b_rate: None,
            alpha: None,
            rate_a: None,
            lambda,
            final_objective,
            trace: trace.map(trace_entries),
        }
    }

    /// Model file for a variational fit.
    pub fn from_variational(
        method: Method,
        w: &Array2<f64>,
        state: &VariationalState,
        priors: &Priors,
        final_objective: f64,
        trace: Option<&FitTrace>,
    ) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            method,
            n_terms: w.nrows(),
            n_docs: state.n_docs(),
            n_topics: w.ncols(),
            constraint_mode: method.constraint_mode(),
            w: rows_of(w),
            h: None,
            beta: Some(rows_of(state.beta())),
            b_rate: state.b_rate().map(rows_of),
            alpha: Some(priors.alpha().to_vec()),
            rate_a: Some(priors.rate_a().to_vec()),
            lambda: 0.0,
            final_objective,
            trace: trace.map(trace_entries),
        }
    }

    pub fn w(&self) -> Result<Array2<f64>> {
        to_matrix("W", &self.w, self.n_terms, self.n_topics, "V", "K")
    }

    /// The factorization of an MU model.
    pub fn factorization(&self) -> Result<Factorization> {
        let w = self.w()?;
        let h = require(&self.h, "H", self.method)?;
        let h = to_matrix("H", h, self.n_topics, self.n_docs, "K", "D")?;
        Factorization::new(w, h, self.constraint_mode)
    }

    pub fn priors(&self) -> Result<Priors> {
        let alpha = require(&self.alpha, "alpha", self.method)?;
        let rate_a = require(&self.rate_a, "rate_a", self.method)?;
        for (name, v) in [("alpha", alpha), ("rate_a", rate_a)] {
            if v.len() != self.n_topics {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has {} entries, K={}",
                    v.len(),
                    self.n_topics
                )));
            }
        }
        Priors::new(alpha.clone(), rate_a.clone())
    }

    /// `(W, β[, b], priors)` of a variational model.
    pub fn variational(&self) -> Result<(Array2<f64>, VariationalState, Priors)> {
        let w = self.w()?;
        let beta = require(&self.beta, "beta", self.method)?;
        let beta = to_matrix("beta", beta, self.n_topics, self.n_docs, "K", "D")?;
        let b = match &self.b_rate {
            Some(b) => Some(to_matrix("b_rate", b, self.n_topics, self.n_docs, "K", "D")?),
            None => None,
        };
        crate::model::check_nonnegative("W", &w)?;
        crate::model::check_simplex_columns("W", &w)?;
        Ok((w, VariationalState::new(beta, b)?, self.priors()?))
    }

    /// Checks every structural and numerical invariant.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.format_version));
        }
        if self.n_terms == 0 || self.n_docs == 0 || self.n_topics == 0 {
            return Err(Error::DimensionMismatch("V, D and K must all be >= 1".into()));
        }
        if self.constraint_mode != self.method.constraint_mode() {
            return Err(Error::Schema {
                path: "constraint_mode".into(),
                msg: format!(
                    "method {} requires {}, found {}",
                    self.method,
                    self.method.constraint_mode(),
                    self.constraint_mode
                ),
            });
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Schema {
                path: "lambda".into(),
                msg: format!("must be a non-negative number, found {}", self.lambda),
            });
        }
        if self.method.is_variational() {
            forbid(&self.h, "H", self.method)?;
            if self.method == Method::Gap {
                require(&self.b_rate, "b_rate", self.method)?;
            } else {
                forbid(&self.b_rate, "b_rate", self.method)?;
            }
            self.variational()?;
        } else {
            for (field, name) in [(&self.beta, "beta"), (&self.b_rate, "b_rate")] {
                forbid(field, name, self.method)?;
            }
            forbid(&self.alpha, "alpha", self.method)?;
            forbid(&self.rate_a, "rate_a", self.method)?;
            self.factorization()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model file serializes");
        s.push('\n');
        s
    }

    /// Parses and validates. Schema errors carry the JSON path of the field.
    pub fn from_json(text: &str, path: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let version: Version = serde_json::from_str(text).map_err(|e| Error::Schema {
            path: "format_version".into(),
            msg: format!("{path}: {e}"),
        })?;
        if version.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version.format_version));
        }
        let de = &mut serde_json::Deserializer::from_str(text);
        let model: ModelFile = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            msg: e.inner().to_string(),
        })?;
        model.validate()?;
        Ok(model)
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &ModelFile) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelFile::from_json(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn nmf_model() -> ModelFile {
        let f = Factorization::new(
            array![[0.1, 0.7], [0.9, 0.3]],
            array![[1.0 / 3.0, 2.0, 0.5], [4.0, 1e-300, 6.25]],
            ConstraintMode::WSimplex,
        )
        .unwrap();
        let trace = FitTrace {
            objective: vec![2.0, 1.5],
            recon_evals: vec![1, 1],
            elapsed: vec![Default::default(); 2],
        };
        ModelFile::from_factorization(Method::MuJoint, &f, 0.0, 1.5, Some(&trace))
    }

    #[test]
    fn round_trip_is_value_identical() {
        let m = nmf_model();
        let back = ModelFile::from_json(&m.to_json(), "m.json").unwrap();
        assert_eq!(back, m);

        let p = Priors::new(vec![0.1, 0.2], vec![0.5, 0.5]).unwrap();
        let s = VariationalState::new(array![[0.3, 1.7], [2.0, 0.123456789012345678]], Some(array![[1.5, 1.5], [1.5, 1.5]])).unwrap();
        let v = ModelFile::from_variational(Method::Gap, &array![[0.25, 1.0], [0.75, 0.0]], &s, &p, -3.0, None);
        assert_eq!(ModelFile::from_json(&v.to_json(), "v.json").unwrap(), v);
    }

    #[test]
    fn corrupted_k_is_a_dimension_mismatch() {
        let mut m = nmf_model();
        m.n_topics = 4;
        for r in m.w.iter_mut() {
            r.resize(5, 0.0);
        }
        let e = ModelFile::from_json(&m.to_json(), "m.json").unwrap_err().to_string();
        assert_eq!(e, "dimension mismatch: W has 5 columns, K=4");
    }

    #[test]
    fn version_and_schema_errors() {
        let mut m = nmf_model();
        m.format_version = 2;
        let e = ModelFile::from_json(&m.to_json(), "m.json").unwrap_err();
        assert!(e.to_string().contains("unsupported format_version"));

        let text = nmf_model().to_json().replace("\"mu-joint\"", "\"nope\"");
        let e = ModelFile::from_json(&text, "m.json").unwrap_err();
        assert!(matches!(&e, Error::Schema { path, .. } if path == "method"), "{e}");

        let text = nmf_model().to_json().replace("\"lambda\": 0.0", "\"lambda\": \"x\"");
        let e = ModelFile::from_json(&text, "m.json").unwrap_err();
        assert!(matches!(&e, Error::Schema { path, .. } if path == "lambda"), "{e}");
    }
}
