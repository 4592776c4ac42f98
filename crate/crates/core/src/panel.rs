//! Binary time-series panels and the model matrix.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `n` input sites in `d` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct InputDesign<T> {
    n: usize,
    d: usize,
    data: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    names: Option<Vec<String>>,
}

impl<T: Scalar> InputDesign<T> {
    pub fn new(n: usize, d: usize, data: Vec<T>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::ShapeMismatch(format!("input design needs n >= 1 and d >= 1 (got n={n}, d={d})")));
        }
        if data.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, got: data.len() });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::BadValue { file: "inputs".into(), row: k / d + 1, col: k % d + 1, value: format!("{}", data[k].as_f64()) });
        }
        Ok(Self { n, d, data, names: None })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: names.len() });
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    #[inline]
    pub fn site(&self, i: usize) -> &[T] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn sites(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Keeps the listed sites, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let data = idx.iter().flat_map(|&i| self.site(i).iter().copied()).collect();
        Self { n: idx.len(), d: self.d, data, names: self.names.clone() }
    }

    /// Column-wise min/max of the design.
    pub fn column_ranges(&self) -> Vec<(T, T)> {
        (0..self.d)
            .map(|l| self.sites().fold((T::max_value().unwrap(), T::min_value().unwrap()), |(lo, hi), s| (lo.min(s[l]), hi.max(s[l]))))
            .collect()
    }

    /// Maps each column affinely onto `[0, 1]` using `ranges`. Constant columns map to 0.
    pub fn scaled(&self, ranges: &[(T, T)]) -> Result<Self> {
        if ranges.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: ranges.len() });
        }
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.d) {
            for (v, &(lo, hi)) in row.iter_mut().zip(ranges) {
                *v = scale_unit(*v, lo, hi);
            }
        }
        Ok(out)
    }
}

#[inline]
pub fn scale_unit<T: Scalar>(v: T, lo: T, hi: T) -> T {
    let w = hi - lo;
    if w > T::zero() {
        (v - lo) / w
    } else {
        T::zero()
    }
}

/// `n x T` panel of 0/1 responses, row `i` is the series at site `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryPanel {
    n: usize,
    t: usize,
    data: Vec<u8>,
}

impl BinaryPanel {
    pub fn new(n: usize, t: usize, data: Vec<u8>) -> Result<Self> {
        if t == 0 || n == 0 {
            return Err(Error::ShapeMismatch(format!("panel needs n >= 1 and T >= 1 (got n={n}, T={t})")));
        }
        if data.len() != n * t {
            return Err(Error::DimensionMismatch { expected: n * t, got: data.len() });
        }
        if let Some(k) = data.iter().position(|&v| v > 1) {
            return Err(Error::NonBinary { row: k / t + 1, col: k % t + 1, value: data[k].to_string() });
        }
        Ok(Self { n, t, data })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let t = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != t) {
            return Err(Error::DimensionMismatch { expected: t, got: bad.len() });
        }
        Self::new(rows.len(), t, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Response at site `i` (0-based) and time `t` (1-based, as in the model).
    /// Times before the start of the series read as 0.
    #[inline]
    pub fn y(&self, i: usize, t: usize) -> u8 {
        if t == 0 {
            0
        } else {
            self.data[i * self.t + t - 1]
        }
    }

    pub fn series(&self, i: usize) -> &[u8] {
        &self.data[i * self.t..(i + 1) * self.t]
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        let data = idx.iter().flat_map(|&i| self.series(i).iter().copied()).collect();
        Self { n: idx.len(), t: self.t, data }
    }
}

/// `n x T` panel of probabilities laid out like [`BinaryPanel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ProbPanel<T> {
    n: usize,
    t: usize,
    data: Vec<T>,
}

impl<T: Scalar> ProbPanel<T> {
    pub fn new(n: usize, t: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * t {
            return Err(Error::DimensionMismatch { expected: n * t, got: data.len() });
        }
        Ok(Self { n, t, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Probability at site `i` (0-based) and time `t` (1-based).
    pub fn get(&self, i: usize, t: usize) -> T {
        self.data[i * self.t + t - 1]
    }

    pub fn series(&self, i: usize) -> &[T] {
        &self.data[i * self.t..(i + 1) * self.t]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        let data = idx.iter().flat_map(|&i| self.series(i).iter().copied()).collect();
        Self { n: idx.len(), t: self.t, data }
    }

    /// Keeps times `from..=to` (1-based).
    pub fn window(&self, from: usize, to: usize) -> Self {
        let data = (0..self.n).flat_map(|i| self.series(i)[from - 1..to].iter().copied()).collect();
        Self { n: self.n, t: to + 1 - from, data }
    }
}

/// Autoregressive order `R` and interaction order `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelOrder {
    pub r: usize,
    pub l: usize,
}

impl ModelOrder {
    pub fn new(r: usize, l: usize) -> Self {
        Self { r, l }
    }

    /// Number of leading time steps used only as regressors.
    pub fn lag(&self) -> usize {
        self.r.max(self.l)
    }

    /// Width of the model matrix for input dimension `d`.
    pub fn columns(&self, d: usize) -> usize {
        1 + self.r + d + d * self.l
    }

    pub fn validate(&self, t: usize) -> Result<()> {
        let ok = if t == 1 { self.r == 0 && self.l == 0 } else { self.lag() < t };
        if ok {
            Ok(())
        } else {
            Err(Error::OrderTooLarge { r: self.r, l: self.l, t })
        }
    }

    /// Coefficient names in model-matrix column order.
    pub fn coefficient_names(&self, d: usize) -> Vec<String> {
        let mut names = vec!["alpha_0".to_string()];
        names.extend((1..=self.r).map(|r| format!("phi_{r}")));
        names.extend((1..=d).map(|j| format!("alpha_{j}")));
        for l in 1..=self.l {
            names.extend((1..=d).map(|j| format!("gamma_{l}_{j}")));
        }
        names
    }

    /// One model-matrix row for input `x` given the lagged responses
    /// `lagged(k) = y_{t-k}`.
    pub fn row_into<T: Scalar>(&self, x: &[T], lagged: impl Fn(usize) -> u8, out: &mut [T]) {
        let d = x.len();
        debug_assert_eq!(out.len(), self.columns(d));
        out[0] = T::one();
        for (k, o) in out[1..=self.r].iter_mut().enumerate() {
            *o = T::lit(lagged(k + 1) as f64);
        }
        let base = 1 + self.r;
        out[base..base + d].copy_from_slice(x);
        for l in 1..=self.l {
            let yl = lagged(l);
            let off = base + d * l;
            for j in 0..d {
                out[off + j] = if yl == 1 { x[j] } else { T::zero() };
            }
        }
    }
}

/// Model matrix over the effective time range `t = lag+1 .. T`, time-major:
/// row `(t - lag - 1) * n + i` belongs to site `i` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    n: usize,
    t_eff: usize,
    lag: usize,
    m: usize,
    x: Vec<T>,
    y: Vec<u8>,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of time blocks.
    pub fn blocks(&self) -> usize {
        self.t_eff
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    /// Total rows `N = n * T_eff`.
    pub fn rows(&self) -> usize {
        self.n * self.t_eff
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[T] {
        &self.x[k * self.m..(k + 1) * self.m]
    }

    /// Row-major rows of time block `b` (0-based).
    pub fn block(&self, b: usize) -> &[T] {
        &self.x[b * self.n * self.m..(b + 1) * self.n * self.m]
    }

    /// Responses aligned with the rows.
    pub fn response(&self) -> &[u8] {
        &self.y
    }

    /// Model time (1-based) of block `b`.
    pub fn time_of_block(&self, b: usize) -> usize {
        self.lag + 1 + b
    }

    pub fn as_slice(&self) -> &[T] {
        &self.x
    }

    /// `X beta` for every row.
    pub fn mul_vec(&self, beta: &[T]) -> Vec<T> {
        self.x.chunks_exact(self.m).map(|r| crate::scalar::dot(r, beta)).collect()
    }

    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<T> {
        nalgebra::DMatrix::from_row_slice(self.rows(), self.m, &self.x)
    }
}

/// Builds the model matrix of the binary time-series model.
pub fn build_design<T: Scalar>(inputs: &InputDesign<T>, panel: &BinaryPanel, order: ModelOrder) -> Result<DesignMatrix<T>> {
    if inputs.n() != panel.n() {
        return Err(Error::ShapeMismatch(format!("inputs have {} rows but the panel has {}", inputs.n(), panel.n())));
    }
    order.validate(panel.t())?;
    let (n, d) = (inputs.n(), inputs.d());
    let lag = order.lag();
    let t_eff = panel.t() - lag;
    let m = order.columns(d);
    let mut x = vec![T::zero(); n * t_eff * m];
    let mut y = Vec::with_capacity(n * t_eff);
    for b in 0..t_eff {
        let t = lag + 1 + b;
        for i in 0..n {
            let k = b * n + i;
            order.row_into(inputs.site(i), |r| panel.y(i, t - r), &mut x[k * m..(k + 1) * m]);
            y.push(panel.y(i, t));
        }
    }
    Ok(DesignMatrix { n, t_eff, lag, m, x, y })
}

/// CSV parsing options.
#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    pub has_header: bool,
}

/// Optional header and data rows.
type Table = (Option<Vec<String>>, Vec<Vec<String>>);

fn read_table(path: &Path, opts: CsvOptions) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(opts.has_header).trim(csv::Trim::All).flexible(true).from_path(path)?;
    let header = if opts.has_header { Some(rdr.headers()?.iter().map(str::to_string).collect()) } else { None };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Reads an inputs CSV (`n` rows, `d` numeric columns).
pub fn load_inputs<T: Scalar>(path: &Path, opts: CsvOptions) -> Result<InputDesign<T>> {
    let file = path.display().to_string();
    let (header, rows) = read_table(path, opts)?;
    let d = rows.first().map_or(0, Vec::len);
    let mut data = Vec::with_capacity(rows.len() * d);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::ShapeMismatch(format!("{file}: row {} has {} columns, expected {d}", r + 1, row.len())));
        }
        for (c, cell) in row.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::BadValue { file: file.clone(), row: r + 1, col: c + 1, value: cell.clone() })?;
            if !v.is_finite() {
                return Err(Error::BadValue { file: file.clone(), row: r + 1, col: c + 1, value: cell.clone() });
            }
            data.push(T::lit(v));
        }
    }
    let design = InputDesign::new(rows.len(), d, data)?;
    match header {
        Some(h) => design.with_names(h),
        None => Ok(design),
    }
}

/// Reads a panel CSV (`n` rows, `T` columns of 0/1).
pub fn load_binary_panel(path: &Path, opts: CsvOptions) -> Result<BinaryPanel> {
    let file = path.display().to_string();
    let (_, rows) = read_table(path, opts)?;
    let t = rows.first().map_or(0, Vec::len);
    let mut data = Vec::with_capacity(rows.len() * t);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != t {
            return Err(Error::ShapeMismatch(format!("{file}: row {} has {} columns, expected {t}", r + 1, row.len())));
        }
        for (c, cell) in row.iter().enumerate() {
            let v = match cell.as_str() {
                "0" | "0.0" => 0,
                "1" | "1.0" => 1,
                other => return Err(Error::NonBinary { row: r + 1, col: c + 1, value: other.to_string() }),
            };
            data.push(v);
        }
    }
    BinaryPanel::new(rows.len(), t, data)
}

/// Loads and cross-validates an (inputs, panel) pair.
pub fn load_panel<T: Scalar>(inputs_path: &Path, panel_path: &Path, opts: CsvOptions) -> Result<(InputDesign<T>, BinaryPanel)> {
    let inputs = load_inputs(inputs_path, opts)?;
    let panel = load_binary_panel(panel_path, opts)?;
    if inputs.n() != panel.n() {
        return Err(Error::ShapeMismatch(format!("inputs have {} rows but the panel has {}", inputs.n(), panel.n())));
    }
    Ok((inputs, panel))
}
