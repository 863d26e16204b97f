//! Model specifications, columnar data and design-matrix assembly.

use std::collections::HashSet;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splines::{SmoothConfig, SmoothTermBasis};
use crate::Scalar;

pub const INTERCEPT: &str = "(Intercept)";

/// Link used for the scale submodel. Only `log σ` is supported:
/// `σ_i = exp(x̃_σiᵀ α)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleLink {
    #[default]
    LogSigma,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmodelSpec {
    #[serde(default)]
    pub linear: Vec<String>,
    #[serde(default)]
    pub smooth: Vec<SmoothConfig>,
}

/// Which regressors enter the mean and the scale predictors. Both submodels
/// always carry an intercept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response: String,
    #[serde(default)]
    pub mean: SubmodelSpec,
    #[serde(default)]
    pub scale: SubmodelSpec,
    #[serde(default)]
    pub scale_link: ScaleLink,
}

impl ModelSpec {
    pub fn new(response: impl Into<String>) -> Self {
        Self {
            response: response.into(),
            mean: SubmodelSpec::default(),
            scale: SubmodelSpec::default(),
            scale_link: ScaleLink::LogSigma,
        }
    }

    pub fn mean_linear(mut self, vars: &[&str]) -> Self {
        self.mean.linear.extend(vars.iter().map(|s| s.to_string()));
        self
    }

    pub fn mean_smooth(mut self, config: SmoothConfig) -> Self {
        self.mean.smooth.push(config);
        self
    }

    pub fn scale_linear(mut self, vars: &[&str]) -> Self {
        self.scale.linear.extend(vars.iter().map(|s| s.to_string()));
        self
    }

    pub fn scale_smooth(mut self, config: SmoothConfig) -> Self {
        self.scale.smooth.push(config);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, sub) in [("mean", &self.mean), ("scale", &self.scale)] {
            let mut seen = HashSet::new();
            let vars = sub
                .linear
                .iter()
                .map(String::as_str)
                .chain(sub.smooth.iter().map(|s| s.var.as_str()));
            for var in vars {
                if var == self.response {
                    return Err(Error::InvalidSpec(format!(
                        "response `{var}` listed as a {name} regressor"
                    )));
                }
                if !seen.insert(var) {
                    return Err(Error::InvalidSpec(format!(
                        "`{var}` appears more than once in the {name} submodel"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Label of a smooth term.
    pub fn smooth_label(var: &str) -> String {
        format!("s({var})")
    }
}

/// Named numeric columns of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable<T: Scalar> {
    names: Vec<String>,
    columns: Vec<DVector<T>>,
}

impl<T: Scalar> Default for DataTable<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            columns: Vec::new(),
        }
    }
}

impl<T: Scalar> DataTable<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a column.
    pub fn insert(&mut self, name: impl Into<String>, values: DVector<T>) -> Result<()> {
        let name = name.into();
        if let Some(first) = self.columns.first() {
            if first.len() != values.len() {
                return Err(Error::DimensionMismatch {
                    what: "data column",
                    expected: first.len(),
                    found: values.len(),
                });
            }
        }
        match self.names.iter().position(|n| *n == name) {
            Some(i) => self.columns[i] = values,
            None => {
                self.names.push(name);
                self.columns.push(values);
            }
        }
        Ok(())
    }

    pub fn with(mut self, name: impl Into<String>, values: Vec<T>) -> Result<Self> {
        self.insert(name, DVector::from_vec(values))?;
        Ok(self)
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&DVector<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    fn finite_column(&self, name: &str) -> Result<&DVector<T>> {
        let col = self.column(name)?;
        if let Some(row) = col.iter().position(|v| !v.is_finite_value()) {
            return Err(Error::NonFinite {
                column: name.to_string(),
                row,
            });
        }
        Ok(col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Intercept,
    Linear,
    Smooth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermInfo {
    pub label: String,
    pub variable: Option<String>,
    pub kind: TermKind,
    pub columns: Range<usize>,
}

/// Penalty `ψ G` acting on a contiguous block of coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyBlock<T> {
    pub label: String,
    pub columns: Range<usize>,
    pub matrix: DMatrix<T>,
    pub psi: T,
}

/// Design of one submodel: intercept, linear columns, then smooth blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmodelDesign<T: Scalar> {
    pub x: DMatrix<T>,
    pub terms: Vec<TermInfo>,
    pub smooths: Vec<SmoothTermBasis<T>>,
    pub penalties: Vec<PenaltyBlock<T>>,
}

/// Smoothing parameter every penalty starts from before selection.
pub const INITIAL_PSI: f64 = 1.0;

impl<T: Scalar> SubmodelDesign<T> {
    fn assemble(sub: &SubmodelSpec, data: &DataTable<T>) -> Result<Self> {
        let n = data.nrows();
        let mut blocks: Vec<DMatrix<T>> = vec![DMatrix::from_element(n, 1, T::one())];
        let mut terms = vec![TermInfo {
            label: INTERCEPT.to_string(),
            variable: None,
            kind: TermKind::Intercept,
            columns: 0..1,
        }];
        let mut next = 1;
        for var in &sub.linear {
            let col = data.finite_column(var)?;
            blocks.push(DMatrix::from_column_slice(n, 1, col.as_slice()));
            terms.push(TermInfo {
                label: var.clone(),
                variable: Some(var.clone()),
                kind: TermKind::Linear,
                columns: next..next + 1,
            });
            next += 1;
        }
        let mut smooths = Vec::new();
        let mut penalties = Vec::new();
        for cfg in &sub.smooth {
            let col = data.finite_column(&cfg.var)?;
            let term = SmoothTermBasis::build(col.as_slice(), cfg)?;
            let k = term.num_coefs();
            let label = ModelSpec::smooth_label(&cfg.var);
            terms.push(TermInfo {
                label: label.clone(),
                variable: Some(cfg.var.clone()),
                kind: TermKind::Smooth,
                columns: next..next + k,
            });
            penalties.push(PenaltyBlock {
                label,
                columns: next..next + k,
                matrix: term.penalty().clone(),
                psi: T::lit(INITIAL_PSI),
            });
            blocks.push(term.basis().clone());
            smooths.push(term);
            next += k;
        }
        let mut x = DMatrix::zeros(n, next);
        let mut c = 0;
        for b in blocks {
            x.columns_mut(c, b.ncols()).copy_from(&b);
            c += b.ncols();
        }
        Ok(Self {
            x,
            terms,
            smooths,
            penalties,
        })
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    /// `Σ_j ψ_j G_j` embedded in a full `p x p` matrix.
    pub fn penalty_matrix(&self) -> DMatrix<T> {
        let p = self.ncols();
        let mut s = DMatrix::zeros(p, p);
        for block in &self.penalties {
            let start = block.columns.start;
            let k = block.columns.len();
            let mut view = s.view_mut((start, start), (k, k));
            view += &block.matrix * block.psi;
        }
        s
    }

    /// `βᵀ (Σ ψ G) β` without forming the full matrix.
    pub fn penalty_quadratic(&self, coef: &DVector<T>) -> T {
        self.penalties.iter().fold(T::zero(), |acc, block| {
            let b = coef.rows(block.columns.start, block.columns.len());
            acc + block.psi * (b.transpose() * &block.matrix * b)[(0, 0)]
        })
    }

    pub fn psi(&self) -> Vec<T> {
        self.penalties.iter().map(|b| b.psi).collect()
    }

    pub fn set_psi(&mut self, psi: &[T]) {
        for (block, &v) in self.penalties.iter_mut().zip(psi) {
            block.psi = v;
        }
    }

    /// Columns not covered by any penalty block.
    pub fn unpenalized_columns(&self) -> Vec<usize> {
        (0..self.ncols())
            .filter(|c| !self.penalties.iter().any(|b| b.columns.contains(c)))
            .collect()
    }

    pub fn term(&self, label: &str) -> Option<&TermInfo> {
        self.terms.iter().find(|t| t.label == label)
    }

    /// Smooth basis for a term label such as `s(x3)` or a bare variable name.
    pub fn smooth(&self, label: &str) -> Option<(&TermInfo, &SmoothTermBasis<T>)> {
        let mut k = 0;
        for t in &self.terms {
            if t.kind == TermKind::Smooth {
                if t.label == label || t.variable.as_deref() == Some(label) {
                    return Some((t, &self.smooths[k]));
                }
                k += 1;
            }
        }
        None
    }

    pub fn coefficient_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.ncols());
        for t in &self.terms {
            if t.columns.len() == 1 {
                names.push(t.label.clone());
            } else {
                names.extend(t.columns.clone().enumerate().map(|(i, _)| format!("{}.{}", t.label, i + 1)));
            }
        }
        names
    }
}

/// Mean (`X̃`) and scale (`X̃_σ`) designs.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices<T: Scalar> {
    pub mean: SubmodelDesign<T>,
    pub scale: SubmodelDesign<T>,
    /// Non-fatal assembly diagnostics.
    pub warnings: Vec<String>,
}

impl<T: Scalar> DesignMatrices<T> {
    pub fn nobs(&self) -> usize {
        self.mean.nrows()
    }

    pub fn has_smooths(&self) -> bool {
        !self.mean.penalties.is_empty() || !self.scale.penalties.is_empty()
    }
}

/// Builds both designs. Smooth blocks are centered and registered with a
/// penalty at the initial smoothing parameter.
pub fn assemble_design<T: Scalar>(spec: &ModelSpec, data: &DataTable<T>) -> Result<DesignMatrices<T>> {
    spec.validate()?;
    data.finite_column(&spec.response)?;
    let mean = SubmodelDesign::assemble(&spec.mean, data)?;
    let scale = SubmodelDesign::assemble(&spec.scale, data)?;
    let mut warnings = Vec::new();
    let n = data.nrows();
    if n < mean.ncols() {
        let msg = format!(
            "n = {n} is smaller than the {} mean columns; relying on the penalty to regularize",
            mean.ncols()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(DesignMatrices {
        mean,
        scale,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(n: usize) -> DataTable<f64> {
        let x1: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let x2: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let x3: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let y: Vec<f64> = (0..n).map(|i| i as f64).collect();
        DataTable::new()
            .with("y", y)
            .unwrap()
            .with("x1", x1)
            .unwrap()
            .with("x2", x2)
            .unwrap()
            .with("x3", x3)
            .unwrap()
    }

    #[test]
    fn linear_only_layout() {
        let spec = ModelSpec::new("y").mean_linear(&["x1", "x2"]);
        let d = assemble_design(&spec, &table(30)).unwrap();
        assert_eq!(d.mean.ncols(), 3);
        assert!(d.mean.x.column(0).iter().all(|&v| v == 1.0));
        assert_eq!(d.scale.ncols(), 1);
        assert!(d.mean.penalties.is_empty());
        assert_eq!(d.mean.unpenalized_columns(), vec![0, 1, 2]);
    }

    #[test]
    fn smooth_block_bookkeeping() {
        let spec = ModelSpec::new("y")
            .mean_linear(&["x1"])
            .mean_smooth(SmoothConfig::new("x3"))
            .scale_linear(&["x2"]);
        let d = assemble_design(&spec, &table(60)).unwrap();
        // 20 basis functions; one is absorbed by the intercept.
        assert_eq!(d.mean.ncols(), 2 + 19);
        assert_eq!(d.mean.penalties.len(), 1);
        assert_eq!(d.mean.penalties[0].columns, 2..21);
        assert_eq!(d.mean.term("s(x3)").unwrap().columns, 2..21);
        assert!(d.mean.smooth("x3").is_some());
        assert_eq!(d.mean.unpenalized_columns(), vec![0, 1]);
        let s = d.mean.penalty_matrix();
        assert_eq!(s.view((0, 0), (2, 21)).iter().filter(|&&v| v != 0.0).count(), 0);
    }

    #[test]
    fn duplicate_linear_and_smooth_rejected() {
        let spec = ModelSpec::new("y")
            .mean_linear(&["x3"])
            .mean_smooth(SmoothConfig::new("x3"));
        assert!(matches!(assemble_design(&spec, &table(30)), Err(Error::InvalidSpec(_))));
        let spec = ModelSpec::new("y").mean_linear(&["y"]);
        assert!(matches!(assemble_design(&spec, &table(30)), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn missing_and_non_finite_columns() {
        let spec = ModelSpec::new("y").mean_linear(&["nope"]);
        assert!(matches!(assemble_design(&spec, &table(10)), Err(Error::MissingColumn(_))));
        let mut t = table(10);
        let mut bad = t.column("x1").unwrap().clone();
        bad[4] = f64::NAN;
        t.insert("x1", bad).unwrap();
        let spec = ModelSpec::new("y").mean_linear(&["x1"]);
        assert!(matches!(
            assemble_design(&spec, &t),
            Err(Error::NonFinite { row: 4, .. })
        ));
    }

    #[test]
    fn underdetermined_is_warning() {
        let spec = ModelSpec::new("y").mean_smooth(SmoothConfig::new("x3"));
        let d = assemble_design(&spec, &table(12)).unwrap();
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn spec_document_roundtrip() {
        let text = r#"{"response":"y","mean":{"linear":["x1"],"smooth":[{"var":"x3","num_basis":12}]},"scale":{"linear":["x2"]}}"#;
        let spec: ModelSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.mean.smooth[0].num_basis, 12);
        assert_eq!(spec.mean.smooth[0].degree, 3);
        assert_eq!(spec.mean.smooth[0].penalty_order, 2);
        assert_eq!(spec.scale_link, ScaleLink::LogSigma);
    }
}
