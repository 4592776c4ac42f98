//! Wald inference for the mean-function coefficients from the sample
//! information matrix.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::Result;
use crate::estimation::FittedModel;
use crate::linalg::{deficient_columns, Cholesky};
use crate::panel::DesignMatrix;
use crate::scalar::Scalar;

/// `Lambda_N = (1/N) sum x x' p (1 - p)`, row-major `m x m`.
pub fn information_from<T: Scalar>(x: &DesignMatrix<T>, p: &[T]) -> Vec<T> {
    let m = x.cols();
    let mut out = vec![T::zero(); m * m];
    for (k, pk) in p.iter().enumerate() {
        let w = *pk * (T::one() - *pk);
        let row = x.row(k);
        for a in 0..m {
            let wa = w * row[a];
            for b in 0..=a {
                out[a * m + b] += wa * row[b];
            }
        }
    }
    let inv_n = T::one() / T::lit(p.len() as f64);
    for a in 0..m {
        for b in 0..=a {
            let v = out[a * m + b] * inv_n;
            out[a * m + b] = v;
            out[b * m + a] = v;
        }
    }
    out
}

pub fn information_matrix<T: Scalar>(model: &FittedModel<T>) -> Result<Vec<T>> {
    Ok(information_from(&model.design()?, &model.state.p))
}

/// Two-sided standard-normal p value.
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefRow {
    pub name: String,
    pub estimate: f64,
    /// `None` when the information matrix is singular.
    pub std_dev: Option<f64>,
    pub z_score: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefReport {
    pub rows: Vec<CoefRow>,
    pub n_obs: usize,
    /// Columns along which the information matrix is rank deficient.
    pub singular_columns: Vec<String>,
}

impl CoefReport {
    pub fn get(&self, name: &str) -> Option<&CoefRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Writes `name,value,std_dev,z_score,p_value`; undefined entries are `NA`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["name", "value", "std_dev", "z_score", "p_value"])?;
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v}"));
        for r in &self.rows {
            w.write_record([r.name.clone(), format!("{}", r.estimate), fmt(r.std_dev), fmt(r.z_score), fmt(r.p_value)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds the report from raw pieces: `sd = sqrt(diag((N Lambda_N)^{-1}))`.
pub fn coef_report_from<T: Scalar>(names: &[String], beta: &[T], x: &DesignMatrix<T>, p: &[T]) -> CoefReport {
    let m = x.cols();
    let n_obs = p.len();
    let lambda = information_from(x, p);
    let scaled: Vec<T> = lambda.iter().map(|v| *v * T::lit(n_obs as f64)).collect();
    let label = |c: usize| names.get(c).cloned().unwrap_or_else(|| format!("column {}", c + 1));
    let (sd, singular_columns) = match Cholesky::factor(scaled.clone(), m) {
        Some(ch) if deficient_columns(&scaled, m, T::lit(1e-12)).is_empty() => {
            let inv = ch.inverse();
            (Some((0..m).map(|j| inv[j * m + j].as_f64().sqrt()).collect::<Vec<_>>()), vec![])
        }
        _ => {
            let bad = deficient_columns(&scaled, m, T::lit(1e-12));
            let cols = if bad.is_empty() { vec!["<numerically singular>".into()] } else { bad.into_iter().map(label).collect() };
            log::warn!("information matrix is singular along {cols:?}; standard errors omitted");
            (None, cols)
        }
    };
    let rows = (0..m)
        .map(|j| {
            let estimate = beta[j].as_f64();
            let std_dev = sd.as_ref().map(|s| s[j]);
            let z_score = std_dev.filter(|s| *s > 0.0).map(|s| estimate / s);
            CoefRow { name: label(j), estimate, std_dev, z_score, p_value: z_score.map(two_sided_p) }
        })
        .collect();
    CoefReport { rows, n_obs, singular_columns }
}

pub fn coef_report<T: Scalar>(model: &FittedModel<T>) -> Result<CoefReport> {
    let x = model.design()?;
    Ok(coef_report_from(&model.coefficient_names, &model.beta, &x, &model.state.p))
}
