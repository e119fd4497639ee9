//! Fidelity estimators and statistical analyses.

use alloc::vec::Vec;

// Inherent f64 math shadows this whenever std is linked into the build.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{domain, integrity, Error, Result};
use crate::sampling::{Outcome, SampleSet};
use crate::subspace::binom;

/// Histogram bin width for rescaled probabilities `D_n p`.
pub const PT_BIN_WIDTH: f64 = 0.12;

/// Default scaling exponent offset.
pub const DEFAULT_SCALING_OFFSET: f64 = 0.3;

/// Sum with a fixed binary reduction tree; the result depends only on the
/// order of `xs`, never on how callers chunk work.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean and standard error (sample standard deviation over `sqrt(len)`).
/// A single value has standard error 0; an empty slice gives `(NaN, NaN)`.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// LXEB over the full space: `(2^N / N_s) sum p(x_i) - 1`. `probs` is indexed by
/// the bitstring integer and must have length `2^N`.
pub fn lxeb(probs: &[f64], samples: &SampleSet) -> Result<f64> {
    let n = samples.num_qubits;
    if n >= 64 || probs.len() != 1usize << n {
        return Err(domain!("full-space probabilities need length 2^{n}, got {}", probs.len()));
    }
    if samples.total() == 0 {
        return Err(domain!("no samples"));
    }
    let mut hits = Vec::with_capacity(samples.total());
    for o in &samples.outcomes {
        match o {
            Outcome::Basis { bits, .. } => {
                let x = bits.to_u64().filter(|&x| (x as usize) < probs.len());
                let x = x.ok_or_else(|| integrity!("sample {bits:?} has no probability entry"))?;
                hits.push(probs[x as usize]);
            }
            Outcome::OutOfBand => {
                return Err(integrity!("out-of-band sample has no probability entry"));
            }
        }
    }
    Ok(probs.len() as f64 * pairwise_sum(&hits) / samples.total() as f64 - 1.0)
}

/// Sector-restricted estimate with its error bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlxebEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Samples in the sector, `n_s`.
    pub in_sector: usize,
    /// All samples, `N_s`.
    pub total: usize,
    /// No sample landed in the sector; `value` is then 0 by definition.
    pub empty_sector: bool,
}

/// Per-sample MLXEB contributions: `D_n p(x) - 1` for samples in sector `n`,
/// 0 otherwise. Their mean is the estimator.
pub fn mlxeb_contributions(ideal: &[f64], samples: &SampleSet, n: usize) -> Result<Vec<f64>> {
    let dim = binom(samples.num_qubits, n)? as usize;
    if ideal.len() != dim {
        return Err(domain!(
            "sector {n} of {} qubits has dimension {dim}, ideal vector has {}",
            samples.num_qubits,
            ideal.len()
        ));
    }
    let d = dim as f64;
    samples
        .outcomes
        .iter()
        .map(|o| match *o {
            Outcome::Basis { sector, index, .. } if sector == n => ideal
                .get(index as usize)
                .map(|p| d * p - 1.0)
                .ok_or_else(|| integrity!("sample rank {index} outside sector {n}")),
            _ => Ok(0.0),
        })
        .collect()
}

/// `F = (n_s / N_s) [ (D_n / n_s) sum_j p_n(x'_j) - 1 ]`, with standard error from
/// the spread of per-sample contributions.
pub fn mlxeb(ideal: &[f64], samples: &SampleSet, n: usize) -> Result<MlxebEstimate> {
    if samples.total() == 0 {
        return Err(domain!("no samples"));
    }
    let contributions = mlxeb_contributions(ideal, samples, n)?;
    let in_sector = samples.filter_sector(n).1;
    let total = samples.total();
    if in_sector == 0 {
        return Ok(MlxebEstimate { value: 0.0, stderr: 0.0, in_sector, total, empty_sector: true });
    }
    let (value, stderr) = mean_stderr(&contributions);
    Ok(MlxebEstimate { value, stderr, in_sector, total, empty_sector: false })
}

/// Density histogram of rescaled probabilities against `e^{-x}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PtHistogram {
    pub bin_width: f64,
    /// Empirical density per bin `[k w, (k+1) w)`.
    pub density: Vec<f64>,
    /// Mean of `e^{-x}` over each bin.
    pub expected: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PtReport {
    pub dim: usize,
    pub instances: usize,
    /// KS distance of the ensemble-averaged (sorted) values against Exp(1).
    pub ks: f64,
    /// KS distance of all instances' values pooled together.
    pub pooled_ks: f64,
    pub histogram: PtHistogram,
}

/// One-sample Kolmogorov-Smirnov distance of `values` against Exp(1).
pub fn ks_exponential(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(domain!("KS distance of an empty sample"));
    }
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let cdf = 1.0 - (-v.max(0.0)).exp();
        d = d.max(cdf - i as f64 / n).max((i + 1) as f64 / n - cdf);
    }
    Ok(d)
}

pub fn pt_histogram(values: &[f64], bin_width: f64) -> Result<PtHistogram> {
    if !(bin_width > 0.0) {
        return Err(domain!("bin width {bin_width} must be positive"));
    }
    if values.is_empty() {
        return Err(domain!("histogram of an empty sample"));
    }
    let top = values.iter().copied().fold(0.0, f64::max);
    let bins = ((top / bin_width).floor() as usize + 1).max(1);
    let mut counts = alloc::vec![0usize; bins];
    for &v in values {
        let k = ((v.max(0.0) / bin_width).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = values.len() as f64;
    let density = counts.iter().map(|&c| c as f64 / (n * bin_width)).collect();
    let expected = (0..bins)
        .map(|k| {
            let (a, b) = (k as f64 * bin_width, (k + 1) as f64 * bin_width);
            ((-a).exp() - (-b).exp()) / bin_width
        })
        .collect();
    Ok(PtHistogram { bin_width, density, expected })
}

/// Porter-Thomas comparison for one or more instances' exact sector
/// probabilities (all of the same dimension). Each instance is sorted
/// ascending and the sorted vectors are averaged elementwise before the
/// histogram and KS distance are taken.
pub fn pt_check(instances: &[Vec<f64>], bin_width: f64) -> Result<PtReport> {
    let dim = instances.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(domain!("Porter-Thomas check needs non-empty probabilities"));
    }
    if instances.iter().any(|p| p.len() != dim) {
        return Err(domain!("instances have different sector dimensions"));
    }
    let d = dim as f64;
    let mut avg = alloc::vec![0.0; dim];
    let mut pooled = Vec::with_capacity(dim * instances.len());
    for probs in instances {
        let mut x: Vec<f64> = probs.iter().map(|p| d * p).collect();
        pooled.extend_from_slice(&x);
        x.sort_by(f64::total_cmp);
        for (a, v) in avg.iter_mut().zip(&x) {
            *a += v;
        }
    }
    let m = instances.len() as f64;
    avg.iter_mut().for_each(|a| *a /= m);
    Ok(PtReport {
        dim,
        instances: instances.len(),
        ks: ks_exponential(&avg)?,
        pooled_ks: ks_exponential(&pooled)?,
        histogram: pt_histogram(&avg, bin_width)?,
    })
}

/// `[(F - 1) / (D_n - 2)]^{1 / (n + a)}`, or `None` when the base is negative
/// (the point is then excluded from collapses and fits).
pub fn scaling_transform(f: f64, dim: f64, n: usize, a: f64) -> Result<Option<f64>> {
    if !(dim > 2.0) {
        return Err(domain!("scaling transform needs D_n > 2, got {dim}"));
    }
    let exponent = n as f64 + a;
    if !(exponent > 0.0) {
        return Err(domain!("n + a = {exponent} must be positive"));
    }
    let base = (f - 1.0) / (dim - 2.0);
    if !base.is_finite() || base < 0.0 {
        return Ok(None);
    }
    Ok(Some(base.powf(1.0 / exponent)))
}

/// Parameters of `f(N_d) = exp[-(N_d / tau)^beta]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitResult {
    pub tau: f64,
    pub beta: f64,
    pub tau_stderr: f64,
    pub beta_stderr: f64,
    /// Scaling offset the data were transformed with (carried for reporting).
    pub a: f64,
    /// Norm of the residuals of `log(-log f)`.
    pub residual_norm: f64,
    pub points_used: usize,
    pub points_excluded: usize,
}

/// Stretched-exponential fit by least squares on
/// `log(-log f) = beta log N_d - beta log tau`. Points with `N_d <= 0` or
/// `f` outside `(0, 1)` are excluded. Standard errors come from a
/// heteroscedasticity-consistent (HC3) regression covariance, propagated to
/// `tau` to first order.
pub fn stretched_fit(points: &[(f64, f64)]) -> Result<FitResult> {
    weighted_fit(points, None)
}

/// As [`stretched_fit`], weighting each point by the inverse variance of
/// `log(-log f)` implied by the standard error `sigma_f` of `f`.
pub fn stretched_fit_weighted(points: &[(f64, f64)], sigma_f: &[f64]) -> Result<FitResult> {
    if sigma_f.len() != points.len() {
        return Err(domain!("{} points but {} standard errors", points.len(), sigma_f.len()));
    }
    weighted_fit(points, Some(sigma_f))
}

fn weighted_fit(points: &[(f64, f64)], sigma_f: Option<&[f64]>) -> Result<FitResult> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for (k, &(nd, f)) in points.iter().enumerate() {
        if !(nd > 0.0 && f > 0.0 && f < 1.0 && nd.is_finite()) {
            continue;
        }
        let w = match sigma_f {
            None => 1.0,
            Some(s) => {
                let sy = s[k] / (f * f.ln().abs());
                if !(sy > 0.0 && sy.is_finite()) {
                    continue;
                }
                1.0 / (sy * sy)
            }
        };
        xs.push(nd.ln());
        ys.push((-f.ln()).ln());
        ws.push(w);
    }
    let m = xs.len();
    let excluded = points.len() - m;
    if m < 3 {
        return Err(domain!("stretched fit needs at least 3 usable points, got {m}"));
    }
    let sw = pairwise_sum(&ws);
    let wx: Vec<f64> = xs.iter().zip(&ws).map(|(x, w)| w * x).collect();
    let wy: Vec<f64> = ys.iter().zip(&ws).map(|(y, w)| w * y).collect();
    let (xbar, ybar) = (pairwise_sum(&wx) / sw, pairwise_sum(&wy) / sw);
    let sxx: Vec<f64> = xs.iter().zip(&ws).map(|(x, w)| w * (x - xbar) * (x - xbar)).collect();
    let sxy: Vec<f64> =
        xs.iter().zip(&ys).zip(&ws).map(|((x, y), w)| w * (x - xbar) * (y - ybar)).collect();
    let sxx = pairwise_sum(&sxx);
    if !(sxx > 0.0) {
        return Err(Error::Fit("all usable points share one depth".into()));
    }
    let beta = pairwise_sum(&sxy) / sxx;
    let intercept = ybar - beta * xbar;
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Fit(alloc::format!("fitted beta = {beta} outside (0, 1]")));
    }
    let tau = (-intercept / beta).exp();
    let resid: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - (intercept + beta * x)).collect();
    let residual_norm = resid.iter().map(|r| r * r).sum::<f64>().sqrt();
    // Covariance of (intercept, beta). Weighted: inverse normal matrix with the
    // weights taken as absolute. Unweighted: HC3 sandwich, since the double-log
    // transform makes the residual variance depth dependent.
    let (var_c, var_beta, cov) = if sigma_f.is_some() {
        (1.0 / sw + xbar * xbar / sxx, 1.0 / sxx, -xbar / sxx)
    } else {
        let (s0, s1, s2) = (m as f64, pairwise_sum(&xs), xs.iter().map(|x| x * x).sum::<f64>());
        let det = s0 * s2 - s1 * s1;
        let inv = [[s2 / det, -s1 / det], [-s1 / det, s0 / det]];
        let mut meat = [[0.0; 2]; 2];
        for (x, r) in xs.iter().zip(&resid) {
            let v = [1.0, *x];
            let h = inv[0][0] + 2.0 * inv[0][1] * x + inv[1][1] * x * x;
            let omega = r * r / ((1.0 - h) * (1.0 - h)).max(f64::MIN_POSITIVE);
            for a in 0..2 {
                for b in 0..2 {
                    meat[a][b] += omega * v[a] * v[b];
                }
            }
        }
        let mut sand = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        sand[a][b] += inv[a][k] * meat[k][l] * inv[l][b];
                    }
                }
            }
        }
        (sand[0][0], sand[1][1], sand[0][1])
    };
    // tau = exp(-c / beta)
    let dc = -tau / beta;
    let db = tau * intercept / (beta * beta);
    let var_tau = dc * dc * var_c + db * db * var_beta + 2.0 * dc * db * cov;
    Ok(FitResult {
        tau,
        beta,
        tau_stderr: var_tau.max(0.0).sqrt(),
        beta_stderr: var_beta.max(0.0).sqrt(),
        a: DEFAULT_SCALING_OFFSET,
        residual_norm,
        points_used: m,
        points_excluded: excluded,
    })
}

/// Depth series of raw MLXEB values for one `(N, n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingSeries {
    pub dim: f64,
    pub particles: usize,
    /// `(N_d, F)` pairs.
    pub points: Vec<(f64, f64)>,
}

impl ScalingSeries {
    /// Transformed points, dropping those with a negative base.
    pub fn transformed(&self, a: f64) -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::with_capacity(self.points.len());
        for &(nd, f) in &self.points {
            if let Some(t) = scaling_transform(f, self.dim, self.particles, a)? {
                out.push((nd, t));
            }
        }
        Ok(out)
    }
}

/// Sum over series pairs of the RMS gap between transformed curves on the
/// depths both share. Smaller means a better collapse.
pub fn collapse_distance(series: &[ScalingSeries], a: f64) -> Result<f64> {
    let curves: Vec<Vec<(f64, f64)>> =
        series.iter().map(|s| s.transformed(a)).collect::<Result<_>>()?;
    let mut total = 0.0;
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let gaps: Vec<f64> = curves[i]
                .iter()
                .filter_map(|&(d, f)| {
                    curves[j].iter().find(|&&(e, _)| e == d).map(|&(_, g)| (f - g) * (f - g))
                })
                .collect();
            if !gaps.is_empty() {
                total += (pairwise_sum(&gaps) / gaps.len() as f64).sqrt();
            }
        }
    }
    Ok(total)
}

/// The offset on `grid` minimizing [`collapse_distance`], with that distance.
pub fn scan_scaling_offset(series: &[ScalingSeries], grid: &[f64]) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &a in grid {
        let d = collapse_distance(series, a)?;
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((a, d));
        }
    }
    best.ok_or_else(|| domain!("empty offset grid"))
}
