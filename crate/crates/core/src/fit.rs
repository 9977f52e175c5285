//! Weighted least-squares fits of coincidence histograms.
//!
//! Each bin is modelled as A·(F(hi) − F(lo)) + B with F the analytic
//! cumulative distribution, A the number of correlated pairs and B the flat
//! background per bin. Decay times are fitted on a log scale.

use std::collections::BTreeMap;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::correlations::{cdf_direct, cdf_fluorescence, CorrelationError, Result};

/// Minimum number of histogram bins accepted by [`fit_g2`].
pub const MIN_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitKind {
    Direct,
    Fluorescence,
}

impl FitKind {
    fn names(&self) -> &'static [&'static str] {
        match self {
            FitKind::Direct => &["tau_si", "amplitude", "background"],
            FitKind::Fluorescence => &["tau_si", "tau_f", "amplitude", "background"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub kind: FitKind,
    pub params: BTreeMap<String, f64>,
    pub sigmas: BTreeMap<String, f64>,
    pub chi2_red: f64,
    #[serde(skip)]
    pub covariance: Vec<Vec<f64>>,
    #[serde(skip)]
    pub evaluations: usize,
}

impl FitResult {
    pub fn param(&self, name: &str) -> f64 {
        self.params[name]
    }
    pub fn sigma(&self, name: &str) -> f64 {
        self.sigmas[name]
    }
}

struct Problem<'a> {
    kind: FitKind,
    lo: &'a [f64],
    hi: &'a [f64],
    counts: &'a [f64],
    weights: &'a [f64],
    p: DVector<f64>,
}

impl Problem<'_> {
    fn model(&self, p: &DVector<f64>, i: usize) -> f64 {
        let (lo, hi) = (self.lo[i], self.hi[i]);
        match self.kind {
            FitKind::Direct => {
                let t = p[0].exp();
                p[1] * (cdf_direct(hi, t) - cdf_direct(lo, t)) + p[2]
            }
            FitKind::Fluorescence => {
                let (a, b) = (p[0].exp(), p[1].exp());
                p[2] * (cdf_fluorescence(hi, a, b) - cdf_fluorescence(lo, a, b)) + p[3]
            }
        }
    }

    fn residuals_at(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.counts.len(),
            (0..self.counts.len()).map(|i| (self.model(p, i) - self.counts[i]) * self.weights[i]),
        )
    }

    fn jacobian_at(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let n = p.len();
        let m = self.counts.len();
        let mut j = DMatrix::zeros(m, n);
        for k in 0..n {
            let h = 1e-6 * p[k].abs().max(1.0);
            let mut pp = p.clone();
            pp[k] += h;
            let rp = self.residuals_at(&pp);
            pp[k] -= 2.0 * h;
            let rm = self.residuals_at(&pp);
            j.set_column(k, &((rp - rm) / (2.0 * h)));
        }
        j
    }
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.p.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let r = self.residuals_at(&self.p);
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let j = self.jacobian_at(&self.p);
        j.iter().all(|v| v.is_finite()).then_some(j)
    }
}

fn bin_width(centers: &[f64]) -> Result<f64> {
    let n = centers.len();
    let w = (centers[n - 1] - centers[0]) / (n - 1) as f64;
    if !(w > 0.0) {
        return Err(CorrelationError::Data("bin centers must increase".into()));
    }
    for pair in centers.windows(2) {
        if ((pair[1] - pair[0]) - w).abs() > 1e-6 * w {
            return Err(CorrelationError::Data("bins must be uniform".into()));
        }
    }
    Ok(w)
}

fn initial_guess(kind: FitKind, centers: &[f64], counts: &[f64], width: f64) -> Vec<f64> {
    let n = counts.len();
    let edge = (n / 20).max(1);
    let outer: Vec<f64> = counts[..edge].iter().chain(&counts[n - edge..]).copied().collect();
    let bg = outer.iter().sum::<f64>() / outer.len() as f64;
    let (ipk, &cpk) = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let half = bg + 0.5 * (cpk - bg);
    let mut left = ipk;
    while left > 0 && counts[left] > half {
        left -= 1;
    }
    let mut right = ipk;
    while right + 1 < n && counts[right] > half {
        right += 1;
    }
    let hw_left = ((centers[ipk] - centers[left]).max(0.5 * width)) / std::f64::consts::LN_2;
    let hw_right = ((centers[right] - centers[ipk]).max(0.5 * width)) / std::f64::consts::LN_2;
    let amp = counts.iter().map(|c| c - bg).sum::<f64>().max(1.0);
    match kind {
        FitKind::Direct => vec![(0.5 * (hw_left + hw_right)).ln(), amp, bg.max(0.0)],
        FitKind::Fluorescence => {
            // Late-tail log slope.
            let start = centers[ipk] + 2.0 * (centers[right] - centers[ipk]).max(width);
            let floor = 3.0 * bg.max(1.0).sqrt();
            let pts: Vec<(f64, f64)> = centers
                .iter()
                .zip(counts)
                .filter(|(&t, &c)| t > start && c - bg > floor)
                .map(|(&t, &c)| (t, (c - bg).ln()))
                .collect();
            let tau_f = if pts.len() >= 3 {
                let k = pts.len() as f64;
                let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
                let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
                let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
                let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
                let slope = sxy / sxx;
                if slope < 0.0 {
                    -1.0 / slope
                } else {
                    hw_right
                }
            } else {
                hw_right
            };
            vec![hw_left.ln(), tau_f.ln(), amp, bg.max(0.0)]
        }
    }
}

/// Fits `kind` to a histogram of (bin centre in s, counts).
pub fn fit_g2(histogram: &[(f64, f64)], kind: FitKind) -> Result<FitResult> {
    if histogram.len() < MIN_BINS {
        return Err(CorrelationError::Data(format!("need at least {MIN_BINS} bins, got {}", histogram.len())));
    }
    let centers: Vec<f64> = histogram.iter().map(|h| h.0).collect();
    let counts: Vec<f64> = histogram.iter().map(|h| h.1).collect();
    if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(CorrelationError::Data("counts must be finite and non-negative".into()));
    }
    let total: f64 = counts.iter().sum();
    if !(total > 0.0) {
        return Err(CorrelationError::Data("histogram is empty".into()));
    }
    if counts.iter().filter(|&&c| c > 0.0).count() < 2 {
        return Err(CorrelationError::Data("all counts fall in one bin".into()));
    }
    let w = bin_width(&centers)?;
    let lo: Vec<f64> = centers.iter().map(|c| c - 0.5 * w).collect();
    let hi: Vec<f64> = centers.iter().map(|c| c + 0.5 * w).collect();
    let weights: Vec<f64> = counts.iter().map(|&c| if c > 0.0 { 1.0 / c.sqrt() } else { 1.0 }).collect();
    let p0 = initial_guess(kind, &centers, &counts, w);
    let problem = Problem {
        kind,
        lo: &lo,
        hi: &hi,
        counts: &counts,
        weights: &weights,
        p: DVector::from_vec(p0),
    };
    let (problem, report) = LevenbergMarquardt::new().with_patience(400).minimize(problem);
    let p = problem.p.clone();
    if !report.termination.was_successful() || p.iter().any(|v| !v.is_finite()) {
        return Err(CorrelationError::FitFailed {
            reason: format!("{:?}", report.termination),
            last: p.iter().copied().collect(),
        });
    }
    let r = problem.residuals_at(&p);
    let dof = (counts.len() - p.len()) as f64;
    let chi2_red = r.norm_squared() / dof;
    let j = problem.jacobian_at(&p);
    let jtj = j.transpose() * &j;
    let cov = jtj.try_inverse().ok_or_else(|| CorrelationError::FitFailed {
        reason: "singular normal matrix".into(),
        last: p.iter().copied().collect(),
    })?;

    let names = kind.names();
    let mut params = BTreeMap::new();
    let mut sigmas = BTreeMap::new();
    let n_tau = names.len() - 2;
    for (k, name) in names.iter().enumerate() {
        let var = cov[(k, k)].max(0.0);
        if k < n_tau {
            let v = p[k].exp();
            params.insert(name.to_string(), v);
            sigmas.insert(name.to_string(), v * var.sqrt());
        } else {
            params.insert(name.to_string(), p[k]);
            sigmas.insert(name.to_string(), var.sqrt());
        }
    }
    Ok(FitResult {
        kind,
        params,
        sigmas,
        chi2_red,
        covariance: (0..p.len()).map(|i| (0..p.len()).map(|k| cov[(i, k)]).collect()).collect(),
        evaluations: report.number_of_evaluations,
    })
}

/// Expected bin contents A·(F(hi) − F(lo)) + B for bins of `width` centred on `centers`.
pub fn expected_counts(kind: FitKind, params: &[f64], centers: &[f64], width: f64) -> Vec<f64> {
    centers
        .iter()
        .map(|&c| {
            let (lo, hi) = (c - 0.5 * width, c + 0.5 * width);
            match kind {
                FitKind::Direct => params[1] * (cdf_direct(hi, params[0]) - cdf_direct(lo, params[0])) + params[2],
                FitKind::Fluorescence => {
                    params[2] * (cdf_fluorescence(hi, params[0], params[1]) - cdf_fluorescence(lo, params[0], params[1]))
                        + params[3]
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_few_bins() {
        let h: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 1.0)).collect();
        assert!(matches!(fit_g2(&h, FitKind::Direct), Err(CorrelationError::Data(_))));
    }

    #[test]
    fn single_bin_histogram() {
        let h: Vec<(f64, f64)> = (0..40).map(|i| (i as f64 * 1e-9, if i == 20 { 100.0 } else { 0.0 })).collect();
        assert!(matches!(fit_g2(&h, FitKind::Direct), Err(CorrelationError::Data(_))));
    }

    #[test]
    fn noiseless_direct_recovery() {
        let centers: Vec<f64> = (-50..=50).map(|i| i as f64 * 2e-9).collect();
        let truth = [9.4e-9, 5e4, 12.0];
        let counts = expected_counts(FitKind::Direct, &truth, &centers, 2e-9);
        let h: Vec<(f64, f64)> = centers.into_iter().zip(counts).collect();
        let fit = fit_g2(&h, FitKind::Direct).unwrap();
        assert!((fit.param("tau_si") / 9.4e-9 - 1.0).abs() < 1e-6);
        assert!(fit.chi2_red < 1e-10);
    }
}
