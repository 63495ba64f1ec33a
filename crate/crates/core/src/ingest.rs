//! Fit the two mediation regressions, `M ~ 1 + X + A` and `Y ~ 1 + X + A + M`,
//! and reduce them to an [`EstimatePair`].

use std::io::Read;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::estimators::EstimatePair;

/// Observations `(x, a, m, y)` stored column-wise.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservationTable {
    /// `covariates[j][i]` is covariate `x{j+1}` of row `i`.
    pub covariates: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    pub m: Vec<f64>,
    pub y: Vec<f64>,
}

impl ObservationTable {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn width(&self) -> usize {
        self.covariates.len()
    }

    pub fn push_row(&mut self, x: &[f64], a: f64, m: f64, y: f64) -> Result<()> {
        if self.is_empty() && self.covariates.is_empty() {
            self.covariates = vec![Vec::new(); x.len()];
        }
        if x.len() != self.width() {
            return Err(invalid(format!("row has {} covariates, table has {}", x.len(), self.width())));
        }
        for (col, v) in self.covariates.iter_mut().zip(x) {
            col.push(*v);
        }
        self.a.push(a);
        self.m.push(m);
        self.y.push(y);
        Ok(())
    }

    /// Read a delimited file with a header naming `a`, `m`, `y` and optional
    /// covariates `x1..xd`. Column order is free.
    pub fn from_reader<R: Read>(reader: R, delimiter: u8) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
            .clone();

        let find = |name: &str| headers.iter().position(|h| h == name);
        let missing: Vec<&str> = ["a", "m", "y"].into_iter().filter(|c| find(c).is_none()).collect();
        if !missing.is_empty() {
            return Err(Error::Parse { line: 1, message: format!("missing required column(s): {}", missing.join(", ")) });
        }
        let mut x_cols: Vec<(usize, usize)> = Vec::new();
        for (pos, h) in headers.iter().enumerate() {
            if ["a", "m", "y"].contains(&h) {
                continue;
            }
            match h.strip_prefix('x').and_then(|k| k.parse::<usize>().ok()).filter(|k| *k >= 1) {
                Some(k) => x_cols.push((k, pos)),
                None => return Err(Error::Parse { line: 1, message: format!("unexpected column `{h}`") }),
            }
        }
        x_cols.sort_unstable();
        for (i, (k, _)) in x_cols.iter().enumerate() {
            if *k != i + 1 {
                return Err(Error::Parse { line: 1, message: format!("covariate columns must be x1..x{}", x_cols.len()) });
            }
        }
        let (ia, im, iy) = (find("a").unwrap(), find("m").unwrap(), find("y").unwrap());

        let mut table = ObservationTable { covariates: vec![Vec::new(); x_cols.len()], ..Default::default() };
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Parse {
                line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
            let field = |pos: usize| -> Result<f64> {
                let raw = record.get(pos).unwrap_or("");
                raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("column `{}`: `{raw}` is not a number", &headers[pos]),
                })
            };
            let x = x_cols.iter().map(|(_, pos)| field(*pos)).collect::<Result<Vec<f64>>>()?;
            table.push_row(&x, field(ia)?, field(im)?, field(iy)?)?;
        }
        Ok(table)
    }
}

/// Least-squares fit with classical standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Residual variance `RSS / (n − p)`.
    pub sigma2: f64,
}

/// Relative size of the smallest |R_ii| below which the design is declared
/// rank deficient.
const RANK_TOL: f64 = 1e-10;

/// OLS via Householder QR. `design` is `n × p` with `n > p`.
pub fn ols(design: &DMatrix<f64>, response: &DVector<f64>) -> Result<OlsFit> {
    let (n, p) = design.shape();
    if n <= p {
        return Err(invalid(format!("need more rows ({n}) than columns ({p})")));
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..p).map(|i| r[(i, i)].abs()).collect();
    let scale = diag.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 || diag.iter().any(|d| *d <= RANK_TOL * scale) {
        return Err(Error::SingularDesign(format!("design matrix ({n}×{p}) is rank deficient")));
    }
    let qty = qr.q().transpose() * response;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularDesign("triangular solve failed".into()))?;
    let residuals = response - design * &beta;
    let sigma2 = residuals.norm_squared() / (n - p) as f64;
    let r_inv = r
        .try_inverse()
        .ok_or_else(|| Error::SingularDesign("R is not invertible".into()))?;
    // (XᵀX)⁻¹ = R⁻¹R⁻ᵀ, so its diagonal is the squared row norms of R⁻¹
    let std_errors = (0..p).map(|i| (sigma2 * r_inv.row(i).norm_squared()).sqrt()).collect();
    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        std_errors,
        residuals: residuals.iter().copied().collect(),
        sigma2,
    })
}

/// Both regressions of the mediation model.
#[derive(Clone, Debug, PartialEq)]
pub struct MediationFit {
    /// `M ~ 1 + X + A`; columns `[1, x1..xd, a]`.
    pub mediator: OlsFit,
    /// `Y ~ 1 + X + A + M`; columns `[1, x1..xd, a, m]`.
    pub outcome: OlsFit,
    pub gamma_hat: f64,
    pub beta_hat: f64,
    pub se_gamma: f64,
    pub se_beta: f64,
    pub n: usize,
}

impl MediationFit {
    /// Convert to an [`EstimatePair`] with `σ = √n·se`.
    pub fn estimate_pair(&self) -> Result<EstimatePair> {
        let root_n = (self.n as f64).sqrt();
        if !(self.se_gamma > 0.0 && self.se_beta > 0.0) {
            return Err(Error::Numerical("zero residual variance: standard errors vanish".into()));
        }
        EstimatePair::new(self.gamma_hat, self.beta_hat, root_n * self.se_gamma, root_n * self.se_beta, self.n as u64)
    }
}

fn design(table: &ObservationTable, with_m: bool) -> DMatrix<f64> {
    let n = table.len();
    let p = 2 + table.width() + with_m as usize;
    DMatrix::from_fn(n, p, |i, j| match j {
        0 => 1.0,
        j if j <= table.width() => table.covariates[j - 1][i],
        j if j == table.width() + 1 => table.a[i],
        _ => table.m[i],
    })
}

/// Fit both regressions and keep the full detail.
pub fn fit_mediation(table: &ObservationTable) -> Result<MediationFit> {
    let n = table.len();
    let d = table.width();
    if n < d + 3 {
        return Err(invalid(format!("{n} rows is too few for {d} covariates (need at least {})", d + 3)));
    }
    // the outcome model has d + 3 columns and needs a residual degree of freedom
    if n < d + 4 {
        return Err(invalid(format!("{n} rows leaves no residual degrees of freedom")));
    }
    let mediator = ols(&design(table, false), &DVector::from_column_slice(&table.m))?;
    let outcome = ols(&design(table, true), &DVector::from_column_slice(&table.y))?;
    let ia = d + 1;
    let im = d + 2;
    Ok(MediationFit {
        gamma_hat: mediator.coefficients[ia],
        se_gamma: mediator.std_errors[ia],
        beta_hat: outcome.coefficients[im],
        se_beta: outcome.std_errors[im],
        n,
        mediator,
        outcome,
    })
}

/// Fit both regressions and return `(γ̂, β̂)` with `σ = √n·se`.
pub fn ols_mediation_fit(table: &ObservationTable) -> Result<EstimatePair> {
    fit_mediation(table)?.estimate_pair()
}
