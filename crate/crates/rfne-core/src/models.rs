//! Downstream models and evaluation: logistic regression with Wald
//! inference, k-nearest-neighbor scoring, AUC, and stratified
//! cross-validation.
//!
//! Logistic regression always standardizes features internally (constant
//! columns get unit scale), so coefficients are per standard deviation of
//! each feature. Optimization is L-BFGS with Armijo backtracking, stopping
//! when the gradient max-norm falls to 1e-6 or the iteration cap is hit.

use std::collections::VecDeque;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{rng_for, STREAM_FOLD};
use rand::Rng;

/// Gradient max-norm below which the optimizer stops.
pub const GRAD_TOL: f64 = 1e-6;
const LBFGS_MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
/// Rows per deterministic accumulation chunk; partial sums are reduced in
/// chunk order so results do not depend on the worker count.
const CHUNK: usize = 1024;

/// Coefficient penalty; the intercept is never penalized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regularization {
    None,
    L2 { lambda: f64 },
}

impl Regularization {
    fn lambda(&self) -> f64 {
        match self {
            Regularization::None => 0.0,
            Regularization::L2 { lambda } => *lambda,
        }
    }
}

/// Per-column location and scale fitted on training data.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Fits means and population standard deviations; zero-variance columns
    /// get unit scale so they standardize to zero.
    pub fn fit(matrix: &Matrix) -> Standardizer {
        let (n, p) = (matrix.n_rows(), matrix.n_cols());
        let mut mean = vec![0.0; p];
        for row in matrix.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0; p];
        for row in matrix.rows() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                let c = x - m;
                *v += c * c;
            }
        }
        let sd = var
            .iter()
            .map(|v| {
                let s = (v / n as f64).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, sd }
    }

    /// Standardized copy of a matrix.
    pub fn transform(&self, matrix: &Matrix) -> Result<Matrix> {
        if matrix.n_cols() != self.mean.len() {
            return Err(Error::data(format!(
                "matrix width {} does not match standardizer width {}",
                matrix.n_cols(),
                self.mean.len()
            )));
        }
        let mut data = Vec::with_capacity(matrix.n_rows() * matrix.n_cols());
        for row in matrix.rows() {
            for ((v, m), s) in row.iter().zip(&self.mean).zip(&self.sd) {
                data.push((v - m) / s);
            }
        }
        Matrix::from_vec(matrix.n_rows(), matrix.n_cols(), data)
    }
}

/// Fitted logistic regression. `beta[0]` is the intercept; `beta[1..]` are
/// coefficients on the standardized scale.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    pub beta: Vec<f64>,
    pub standardizer: Standardizer,
    pub regularization: Regularization,
    /// Optimizer iterations actually used.
    pub iterations: usize,
    /// Gradient max-norm at the final iterate.
    pub grad_norm: f64,
    /// Whether the gradient tolerance was reached within the iteration cap.
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else if z < -30.0 {
        0.0
    } else {
        z.exp().ln_1p()
    }
}

/// Negative log-likelihood plus penalty, and its gradient, for coefficients
/// `beta = [intercept, b_1..b_p]` on the matrix as given (no internal
/// standardization).
pub fn logistic_objective_grad(
    x: &Matrix,
    y: &[u8],
    beta: &[f64],
    reg: Regularization,
) -> Result<(f64, Vec<f64>)> {
    if beta.len() != x.n_cols() + 1 {
        return Err(Error::config(format!(
            "coefficient length {} does not match {} features plus intercept",
            beta.len(),
            x.n_cols()
        )));
    }
    let n = x.n_rows();
    let p1 = beta.len();
    let partials: Vec<(f64, Vec<f64>)> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; p1];
            for &i in chunk {
                let row = x.row(i);
                let z = beta[0] + dot(row, &beta[1..]);
                let yi = f64::from(y[i]);
                loss += softplus(z) - yi * z;
                let r = sigmoid(z) - yi;
                grad[0] += r;
                for (g, v) in grad[1..].iter_mut().zip(row) {
                    *g += r * v;
                }
            }
            (loss, grad)
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; p1];
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let lambda = reg.lambda();
    for (g, b) in grad[1..].iter_mut().zip(&beta[1..]) {
        loss += 0.5 * lambda * b * b;
        *g += lambda * b;
    }
    Ok((loss, grad))
}

fn objective_value(x: &Matrix, y: &[u8], beta: &[f64], reg: Regularization) -> f64 {
    let n = x.n_rows();
    let loss: f64 = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut l = 0.0;
            for &i in chunk {
                let row = x.row(i);
                let z = beta[0] + dot(row, &beta[1..]);
                l += softplus(z) - f64::from(y[i]) * z;
            }
            l
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    let lambda = reg.lambda();
    loss + 0.5 * lambda * beta[1..].iter().map(|b| b * b).sum::<f64>()
}

fn lbfgs_direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, yv, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qk, yk) in q.iter_mut().zip(yv) {
            *qk -= a * yk;
        }
        alphas.push(a);
    }
    let gamma = history
        .back()
        .map(|(s, yv, _)| dot(s, yv) / dot(yv, yv).max(1e-300))
        .unwrap_or(1.0);
    for qk in &mut q {
        *qk *= gamma;
    }
    for ((s, yv, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(yv, &q);
        for (qk, sk) in q.iter_mut().zip(s) {
            *qk += (a - b) * sk;
        }
    }
    for v in &mut q {
        *v = -*v;
    }
    q
}

/// Fits logistic regression on `x` (standardized internally) against binary
/// labels `y`.
pub fn fit_logistic(
    x: &Matrix,
    y: &[u8],
    reg: Regularization,
    max_iter: usize,
) -> Result<LogisticModel> {
    if y.len() != x.n_rows() {
        return Err(Error::data(format!(
            "{} labels for {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    if x.n_rows() == 0 {
        return Err(Error::data("cannot fit logistic regression on zero rows".to_string()));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::data("labels must be 0 or 1".to_string()));
    }
    if !y.contains(&0) || !y.contains(&1) {
        return Err(Error::data("labels contain a single class".to_string()));
    }
    if !x.is_finite() {
        return Err(Error::numeric("feature matrix contains non-finite values".to_string()));
    }
    if reg.lambda() < 0.0 {
        return Err(Error::config("regularization strength must be non-negative".to_string()));
    }

    let standardizer = Standardizer::fit(x);
    let xs = standardizer.transform(x)?;
    let p1 = x.n_cols() + 1;
    let mut beta = vec![0.0; p1];
    let (mut f, mut g) = logistic_objective_grad(&xs, y, &beta, reg)?;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut converged = false;

    for iter in 0..max_iter {
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm <= GRAD_TOL {
            converged = true;
            break;
        }
        let mut direction = lbfgs_direction(&g, &history);
        let mut slope = dot(&g, &direction);
        if !(slope < 0.0) {
            history.clear();
            direction = g.iter().map(|v| -v).collect();
            slope = dot(&g, &direction);
        }

        let gl2 = dot(&g, &g).sqrt();
        let mut alpha = if iter == 0 { 1.0 / gl2.max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let candidate: Vec<f64> =
                beta.iter().zip(&direction).map(|(b, d)| b + alpha * d).collect();
            let fc = objective_value(&xs, y, &candidate, reg);
            if fc.is_finite() && fc <= f + ARMIJO_C1 * alpha * slope {
                accepted = Some(candidate);
                break;
            }
            alpha *= 0.5;
        }
        let Some(next) = accepted else {
            break;
        };

        let (fn_, gn) = logistic_objective_grad(&xs, y, &next, reg)?;
        let s: Vec<f64> = next.iter().zip(&beta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 {
            history.push_back((s, yv, 1.0 / sy));
            if history.len() > LBFGS_MEMORY {
                history.pop_front();
            }
        }
        beta = next;
        f = fn_;
        g = gn;
        iterations = iter + 1;
    }
    if !converged {
        converged = g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= GRAD_TOL;
    }

    Ok(LogisticModel {
        beta,
        standardizer,
        regularization: reg,
        iterations,
        grad_norm: g.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        converged,
    })
}

/// Positive-class probabilities for each row.
pub fn predict_logistic(model: &LogisticModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.n_cols() != model.standardizer.mean.len() {
        return Err(Error::data(format!(
            "matrix width {} does not match model width {}",
            x.n_cols(),
            model.standardizer.mean.len()
        )));
    }
    if !x.is_finite() {
        return Err(Error::numeric("feature matrix contains non-finite values".to_string()));
    }
    let scores: Vec<f64> = (0..x.n_rows())
        .into_par_iter()
        .map(|i| {
            let row = x.row(i);
            let mut z = model.beta[0];
            for (j, &v) in row.iter().enumerate() {
                z += model.beta[j + 1] * (v - model.standardizer.mean[j])
                    / model.standardizer.sd[j];
            }
            sigmoid(z)
        })
        .collect();
    Ok(scores)
}

/// One coefficient's inference summary.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceRow {
    pub name: String,
    pub log_odds: f64,
    pub std_err: f64,
    pub z: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub odds: f64,
}

/// Wald inference for every coefficient including the intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceTable {
    pub rows: Vec<InferenceRow>,
    /// True when the information matrix includes an L2 ridge term, making
    /// the standard errors approximate.
    pub approximate: bool,
}

/// Lower-triangular Cholesky factor of a symmetric matrix in flat row-major
/// form, or the failing pivot index.
fn cholesky(a: &[f64], n: usize) -> std::result::Result<Vec<f64>, usize> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > a[j * n + j].abs().max(1e-300) * 1e-10) {
            return Err(j);
        }
        l[j * n + j] = d.sqrt();
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = v / l[j * n + j];
        }
    }
    Ok(l)
}

fn invert_from_cholesky(l: &[f64], n: usize) -> Vec<f64> {
    // Solve L L^T X = I column by column.
    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for e in 0..n {
        for i in 0..n {
            let mut v = if i == e { 1.0 } else { 0.0 };
            for k in 0..i {
                v -= l[i * n + k] * col[k];
            }
            col[i] = v / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = col[i];
            for k in i + 1..n {
                v -= l[k * n + i] * inv[k * n + e];
            }
            inv[i * n + e] = v / l[i * n + i];
        }
    }
    inv
}

/// Wald inference from the observed information matrix at the fitted
/// coefficients. `names` labels the feature columns (the intercept row is
/// added automatically); coefficients are per standard deviation because
/// fitting standardizes internally.
pub fn logistic_inference(
    model: &LogisticModel,
    x: &Matrix,
    y: &[u8],
    names: &[String],
) -> Result<InferenceTable> {
    if names.len() != x.n_cols() {
        return Err(Error::config(format!(
            "{} names for {} feature columns",
            names.len(),
            x.n_cols()
        )));
    }
    if y.len() != x.n_rows() {
        return Err(Error::data(format!("{} labels for {} rows", y.len(), x.n_rows())));
    }
    let xs = model.standardizer.transform(x)?;
    let p1 = model.beta.len();
    let n = xs.n_rows();

    let partials: Vec<Vec<f64>> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut info = vec![0.0; p1 * p1];
            let mut a = vec![0.0; p1];
            for &i in chunk {
                let row = xs.row(i);
                a[0] = 1.0;
                a[1..].copy_from_slice(row);
                let z = model.beta[0] + dot(row, &model.beta[1..]);
                let mu = sigmoid(z);
                let w = mu * (1.0 - mu);
                for j in 0..p1 {
                    let wj = w * a[j];
                    for k in j..p1 {
                        info[j * p1 + k] += wj * a[k];
                    }
                }
            }
            info
        })
        .collect();
    let mut info = vec![0.0; p1 * p1];
    for part in partials {
        for (a, b) in info.iter_mut().zip(&part) {
            *a += b;
        }
    }
    for j in 0..p1 {
        for k in 0..j {
            info[j * p1 + k] = info[k * p1 + j];
        }
    }
    let lambda = model.regularization.lambda();
    for j in 1..p1 {
        info[j * p1 + j] += lambda;
    }

    let name_of = |j: usize| -> String {
        if j == 0 {
            "intercept".to_string()
        } else {
            names[j - 1].clone()
        }
    };
    let l = cholesky(&info, p1).map_err(|j| {
        Error::numeric(format!(
            "information matrix is singular at '{}'; the feature is constant or collinear",
            name_of(j)
        ))
    })?;
    let cov = invert_from_cholesky(&l, p1);

    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut rows = Vec::with_capacity(p1);
    for j in 0..p1 {
        let var = cov[j * p1 + j];
        if !(var > 0.0) || !var.is_finite() {
            return Err(Error::numeric(format!(
                "non-positive variance estimate for '{}'",
                name_of(j)
            )));
        }
        let se = var.sqrt();
        let b = model.beta[j];
        let z = b / se;
        rows.push(InferenceRow {
            name: name_of(j),
            log_odds: b,
            std_err: se,
            z,
            p_value: 2.0 * normal.cdf(-z.abs()),
            ci_low: b - 1.96 * se,
            ci_high: b + 1.96 * se,
            odds: b.exp(),
        });
    }
    Ok(InferenceTable { rows, approximate: lambda > 0.0 })
}

/// k-nearest-neighbors scorer over raw (unstandardized) features.
#[derive(Clone, Debug)]
pub struct KnnModel {
    pub train: Matrix,
    pub labels: Vec<u8>,
    pub k: usize,
}

/// Stores the training set for scoring; `k` must be between 1 and the number
/// of rows.
pub fn fit_knn(x: &Matrix, y: &[u8], k: usize) -> Result<KnnModel> {
    if y.len() != x.n_rows() {
        return Err(Error::data(format!("{} labels for {} rows", y.len(), x.n_rows())));
    }
    if k == 0 || k > x.n_rows() {
        return Err(Error::config(format!(
            "k must be between 1 and {} rows, got {k}",
            x.n_rows()
        )));
    }
    if !x.is_finite() {
        return Err(Error::numeric("feature matrix contains non-finite values".to_string()));
    }
    Ok(KnnModel { train: x.clone(), labels: y.to_vec(), k })
}

/// Fraction of positive labels among the k nearest training rows by
/// Euclidean distance; distance ties prefer the lower training-row index.
pub fn knn_score(model: &KnnModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.n_cols() != model.train.n_cols() {
        return Err(Error::data(format!(
            "query width {} does not match training width {}",
            x.n_cols(),
            model.train.n_cols()
        )));
    }
    if !x.is_finite() {
        return Err(Error::numeric("query matrix contains non-finite values".to_string()));
    }
    let scores: Vec<f64> = (0..x.n_rows())
        .into_par_iter()
        .map(|qi| {
            let q = x.row(qi);
            // Max-heap of (distance bits, index): non-negative f64 order
            // equals bit order, so ties fall to the lower index.
            let mut heap: std::collections::BinaryHeap<(u64, usize)> =
                std::collections::BinaryHeap::with_capacity(model.k + 1);
            for (ti, row) in model.train.rows().enumerate() {
                let d2: f64 = q.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
                heap.push((d2.to_bits(), ti));
                if heap.len() > model.k {
                    heap.pop();
                }
            }
            let hits = heap
                .iter()
                .filter(|&&(_, ti)| model.labels[ti] == 1)
                .count();
            hits as f64 / model.k as f64
        })
        .collect();
    Ok(scores)
}

/// Area under the ROC curve via the Mann-Whitney statistic with average
/// ranks for tied scores.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::data(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::numeric("scores contain non-finite values".to_string()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::data("AUC needs both classes present".to_string()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Row indices per fold, stratified by class.
pub fn stratified_folds(labels: &[u8], n_folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n_folds < 2 {
        return Err(Error::config(format!("need at least 2 folds, got {n_folds}")));
    }
    let mut folds = vec![Vec::new(); n_folds];
    for class in [0u8, 1u8] {
        let mut rows: Vec<usize> =
            (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let mut rng = rng_for(seed, STREAM_FOLD, u64::from(class));
        for i in (1..rows.len()).rev() {
            let j = rng.gen_range(0..=i);
            rows.swap(i, j);
        }
        for (i, row) in rows.into_iter().enumerate() {
            folds[i % n_folds].push(row);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Cross-validation result over a parameter grid.
#[derive(Clone, Debug)]
pub struct CvReport {
    /// `fold_aucs[point][fold]`.
    pub fold_aucs: Vec<Vec<f64>>,
    pub mean_auc: Vec<f64>,
    /// Sample standard deviation across folds.
    pub sd_auc: Vec<f64>,
    /// Index of the best mean AUC; ties keep the earliest grid point.
    pub best: usize,
}

/// Evaluates every grid point on the same stratified folds; `eval` fits on
/// the first argument and returns the AUC on the second.
pub fn cross_validate<P, F>(
    data: &EncodedDataset,
    points: &[P],
    n_folds: usize,
    seed: u64,
    eval: F,
) -> Result<CvReport>
where
    P: Sync,
    F: Fn(&EncodedDataset, &EncodedDataset, &P) -> Result<f64> + Sync,
{
    if points.is_empty() {
        return Err(Error::config("parameter grid is empty".to_string()));
    }
    let folds = stratified_folds(&data.target, n_folds, seed)?;
    let mut fold_aucs = vec![vec![0.0; n_folds]; points.len()];
    for (f, test_rows) in folds.iter().enumerate() {
        let train_rows: Vec<usize> = {
            let mut rows: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != f)
                .flat_map(|(_, rows)| rows.iter().copied())
                .collect();
            rows.sort_unstable();
            rows
        };
        let train = data.select_rows(&train_rows);
        let test = data.select_rows(test_rows);
        for part in [&train, &test] {
            if !part.target.contains(&0) || !part.target.contains(&1) {
                return Err(Error::data(format!(
                    "fold {f} leaves a single class on one side; use fewer folds"
                )));
            }
        }
        let aucs: Vec<f64> = points
            .par_iter()
            .map(|p| eval(&train, &test, p))
            .collect::<Result<_>>()
            .map_err(|e| Error::data(format!("fold {f}: {e}")))?;
        for (pi, a) in aucs.into_iter().enumerate() {
            fold_aucs[pi][f] = a;
        }
    }
    let mean_auc: Vec<f64> =
        fold_aucs.iter().map(|a| a.iter().sum::<f64>() / a.len() as f64).collect();
    let sd_auc: Vec<f64> = fold_aucs
        .iter()
        .zip(&mean_auc)
        .map(|(a, m)| {
            if a.len() < 2 {
                0.0
            } else {
                (a.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (a.len() - 1) as f64).sqrt()
            }
        })
        .collect();
    let mut best = 0;
    for (i, m) in mean_auc.iter().enumerate() {
        if *m > mean_auc[best] {
            best = i;
        }
    }
    Ok(CvReport { fold_aucs, mean_auc, sd_auc, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{encode, fit_encoding, synthetic_noise};
    use proptest::prelude::*;

    fn matrix(rows: &[&[f64]]) -> Matrix {
        let n_cols = rows[0].len();
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Matrix::from_vec(rows.len(), n_cols, data).unwrap()
    }

    #[test]
    fn standardizer_handles_constant_columns() {
        let x = matrix(&[&[1.0, 5.0], &[3.0, 5.0], &[5.0, 5.0]]);
        let s = Standardizer::fit(&x);
        assert_eq!(s.mean, vec![3.0, 5.0]);
        assert!((s.sd[0] - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(s.sd[1], 1.0);
        let xs = s.transform(&x).unwrap();
        assert_eq!(xs.get(0, 1), 0.0);
        assert!((xs.get(2, 0) - 2.0 / (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn symmetric_data_gives_zero_intercept() {
        let x = matrix(&[&[-2.0], &[-1.0], &[1.0], &[2.0]]);
        let y = [0, 0, 1, 1];
        let model = fit_logistic(&x, &y, Regularization::L2 { lambda: 1.0 }, 200).unwrap();
        assert!(model.converged);
        assert!(model.beta[0].abs() < 1e-6, "intercept {}", model.beta[0]);
        assert!(model.beta[1] > 0.0);
        assert!(model.grad_norm <= GRAD_TOL);
    }

    #[test]
    fn fit_matches_lattice_minimum() {
        let x = matrix(&[
            &[0.2, 1.1],
            &[0.5, 0.4],
            &[1.4, 0.8],
            &[1.9, 1.6],
            &[0.3, 0.2],
            &[1.1, 1.9],
            &[1.7, 0.1],
            &[0.8, 1.3],
        ]);
        let y = [0, 0, 1, 1, 0, 1, 1, 0];
        let reg = Regularization::L2 { lambda: 1.0 };
        let model = fit_logistic(&x, &y, reg, 200).unwrap();
        let xs = model.standardizer.transform(&x).unwrap();

        let mut best = (f64::INFINITY, [0.0; 3]);
        let grid: Vec<f64> = (-150..=150).map(|i| i as f64 * 0.01).collect();
        for &b0 in &grid {
            for &b1 in &grid {
                for &b2 in &grid {
                    let f = objective_value(&xs, &y, &[b0, b1, b2], reg);
                    if f < best.0 {
                        best = (f, [b0, b1, b2]);
                    }
                }
            }
        }
        for (i, b) in best.1.iter().enumerate() {
            assert!(
                b.abs() < 1.49,
                "lattice optimum touches the boundary at coordinate {i}"
            );
            assert!(
                (model.beta[i] - b).abs() <= 0.02,
                "coefficient {i}: fit {} vs lattice {}",
                model.beta[i],
                b
            );
        }
    }

    #[test]
    fn objective_gradient_matches_central_differences() {
        let x = matrix(&[
            &[0.4, -1.2, 0.7],
            &[-0.3, 0.8, 1.5],
            &[1.1, 0.2, -0.6],
            &[-0.9, -0.4, 0.3],
            &[0.6, 1.3, -1.1],
        ]);
        let y = [1, 0, 1, 0, 1];
        let beta = [0.1, -0.4, 0.3, 0.2];
        for reg in [Regularization::None, Regularization::L2 { lambda: 0.7 }] {
            let (_, grad) = logistic_objective_grad(&x, &y, &beta, reg).unwrap();
            let h = 1e-5;
            for j in 0..beta.len() {
                let mut plus = beta.to_vec();
                let mut minus = beta.to_vec();
                plus[j] += h;
                minus[j] -= h;
                let numeric = (objective_value(&x, &y, &plus, reg)
                    - objective_value(&x, &y, &minus, reg))
                    / (2.0 * h);
                assert!(
                    (grad[j] - numeric).abs() <= 1e-5 * numeric.abs().max(1.0),
                    "coordinate {j}: analytic {} vs numeric {numeric}",
                    grad[j]
                );
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = matrix(&[&[1.0], &[2.0]]);
        assert!(fit_logistic(&x, &[0, 0], Regularization::None, 50).is_err());
        assert!(fit_logistic(&x, &[0], Regularization::None, 50).is_err());
        assert!(fit_logistic(&x, &[0, 2], Regularization::None, 50).is_err());
        assert!(
            fit_logistic(&x, &[0, 1], Regularization::L2 { lambda: -1.0 }, 50).is_err()
        );
        let bad = matrix(&[&[f64::NAN], &[2.0]]);
        assert!(matches!(
            fit_logistic(&bad, &[0, 1], Regularization::None, 50),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn predict_applies_sigmoid_on_standardized_scale() {
        let model = LogisticModel {
            beta: vec![0.0, 1.0],
            standardizer: Standardizer { mean: vec![0.0], sd: vec![1.0] },
            regularization: Regularization::None,
            iterations: 0,
            grad_norm: 0.0,
            converged: true,
        };
        let x = matrix(&[&[0.0], &[2.0], &[-3.0]]);
        let p = predict_logistic(&model, &x).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!((p[1] - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-12);
        assert!((p[2] - 1.0 / (1.0 + 3.0f64.exp())).abs() < 1e-12);
    }

    fn toy_fit() -> (LogisticModel, Matrix, Vec<u8>) {
        let x = matrix(&[
            &[0.2, 1.1],
            &[0.6, 0.3],
            &[1.5, 0.9],
            &[1.8, 1.7],
            &[0.4, 0.6],
            &[1.2, 1.8],
        ]);
        let y = vec![0, 0, 1, 1, 0, 1];
        let model = fit_logistic(&x, &y, Regularization::None, 300).unwrap();
        (model, x, y)
    }

    #[test]
    fn inference_identities_hold() {
        let (model, x, y) = toy_fit();
        let names = vec!["a".to_string(), "b".to_string()];
        let table = logistic_inference(&model, &x, &y, &names).unwrap();
        assert!(!table.approximate);
        assert_eq!(table.rows.len(), 3);
        assert_eq!(table.rows[0].name, "intercept");
        assert_eq!(table.rows[2].name, "b");
        let normal = Normal::new(0.0, 1.0).unwrap();
        for row in &table.rows {
            assert!((row.odds - row.log_odds.exp()).abs() <= 1e-9 * row.odds.abs().max(1.0));
            assert!((row.z - row.log_odds / row.std_err).abs() < 1e-9);
            assert!((row.ci_low - (row.log_odds - 1.96 * row.std_err)).abs() < 1e-9);
            assert!((row.ci_high - (row.log_odds + 1.96 * row.std_err)).abs() < 1e-9);
            assert!((row.p_value - 2.0 * normal.cdf(-row.z.abs())).abs() < 1e-12);
            assert!(row.std_err > 0.0);
        }
        assert!(((0.7227f64).exp() - 2.059988).abs() < 1e-6);
    }

    #[test]
    fn doubling_the_data_shrinks_se_by_sqrt_two() {
        let (model, x, y) = toy_fit();
        let names = vec!["a".to_string(), "b".to_string()];
        let single = logistic_inference(&model, &x, &y, &names).unwrap();

        let mut rows2: Vec<&[f64]> = Vec::new();
        let stacked: Vec<Vec<f64>> =
            (0..x.n_rows()).map(|i| x.row(i).to_vec()).collect();
        for r in &stacked {
            rows2.push(r);
        }
        for r in &stacked {
            rows2.push(r);
        }
        let x2 = matrix(&rows2);
        let y2: Vec<u8> = y.iter().chain(y.iter()).copied().collect();
        let double = logistic_inference(&model, &x2, &y2, &names).unwrap();
        for (a, b) in single.rows.iter().zip(&double.rows) {
            assert!((a.std_err / b.std_err - 2.0f64.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicate_column_is_named_in_error() {
        let x = matrix(&[
            &[0.2, 0.2],
            &[0.6, 0.6],
            &[1.5, 1.5],
            &[1.8, 1.8],
            &[0.4, 0.4],
            &[1.2, 1.2],
        ]);
        let y = vec![0, 0, 1, 1, 0, 1];
        let model = fit_logistic(&x, &y, Regularization::None, 50).unwrap();
        let names = vec!["first".to_string(), "twin".to_string()];
        match logistic_inference(&model, &x, &y, &names) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("twin"), "message: {msg}"),
            other => panic!("expected a numeric error, got {other:?}"),
        }
    }

    #[test]
    fn knn_matches_brute_force() {
        let train = matrix(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[5.0, 5.0]]);
        let y = [0, 1, 1, 0];
        let model = fit_knn(&train, &y, 3).unwrap();
        let queries = matrix(&[&[0.1, 0.1], &[4.0, 4.0]]);
        let scores = knn_score(&model, &queries).unwrap();
        // Query 0: nearest three are rows 0, 1, 2 -> labels 0, 1, 1.
        assert!((scores[0] - 2.0 / 3.0).abs() < 1e-12);
        // Query 1: nearest three are rows 3, 1, 2 -> labels 0, 1, 1.
        assert!((scores[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn knn_ties_prefer_lower_index() {
        let train = matrix(&[&[0.0], &[2.0]]);
        let model = fit_knn(&train, &[1, 0], 1).unwrap();
        let scores = knn_score(&model, &matrix(&[&[1.0]])).unwrap();
        assert_eq!(scores[0], 1.0);
    }

    #[test]
    fn knn_rejects_bad_k_and_widths() {
        let train = matrix(&[&[0.0], &[2.0]]);
        assert!(fit_knn(&train, &[1, 0], 0).is_err());
        assert!(fit_knn(&train, &[1, 0], 3).is_err());
        let model = fit_knn(&train, &[1, 0], 1).unwrap();
        assert!(knn_score(&model, &matrix(&[&[1.0, 2.0]])).is_err());
    }

    #[test]
    fn auc_known_values() {
        assert_eq!(auc(&[0.0, 0.0, 1.0, 1.0], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[1.0, 1.0, 0.0, 0.0], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5, 0.5, 0.5, 0.5], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[1, 1]).is_err());
        assert!(auc(&[f64::NAN, 0.2], &[0, 1]).is_err());
    }

    fn brute_force_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            if labels[i] != 1 {
                continue;
            }
            for (j, &sj) in scores.iter().enumerate() {
                if labels[j] != 0 {
                    continue;
                }
                den += 1.0;
                if si > sj {
                    num += 1.0;
                } else if si == sj {
                    num += 0.5;
                }
            }
        }
        num / den
    }

    #[test]
    fn stratified_folds_partition_and_balance() {
        let labels: Vec<u8> = (0..103).map(|i| u8::from(i % 3 == 0)).collect();
        let folds = stratified_folds(&labels, 5, 9).unwrap();
        let mut seen = vec![false; labels.len()];
        for fold in &folds {
            for &row in fold {
                assert!(!seen[row]);
                seen[row] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
        let pos_counts: Vec<usize> = folds
            .iter()
            .map(|f| f.iter().filter(|&&r| labels[r] == 1).count())
            .collect();
        let (min, max) =
            (pos_counts.iter().min().unwrap(), pos_counts.iter().max().unwrap());
        assert!(max - min <= 1, "positive counts {pos_counts:?}");
        assert_eq!(folds, stratified_folds(&labels, 5, 9).unwrap());
        assert!(stratified_folds(&labels, 1, 9).is_err());
    }

    #[test]
    fn cross_validate_picks_first_among_ties() {
        let dataset = synthetic_noise(60, 2, 0, 5);
        let map = fit_encoding(&dataset).unwrap();
        let encoded = encode(&dataset, &map).unwrap();
        let report =
            cross_validate(&encoded, &[0.7, 0.7, 0.2], 3, 1, |_, _, &p| Ok(p)).unwrap();
        assert_eq!(report.best, 0);
        assert!((report.mean_auc[0] - 0.7).abs() < 1e-12);
        assert!(report.sd_auc[0].abs() < 1e-12);
        assert_eq!(report.fold_aucs[2], vec![0.2; 3]);
    }

    #[test]
    fn cross_validate_rejects_single_class_folds() {
        let mut dataset = synthetic_noise(12, 1, 0, 5);
        dataset.target = vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1];
        let map = fit_encoding(&dataset).unwrap();
        let encoded = encode(&dataset, &map).unwrap();
        let result = cross_validate(&encoded, &[1.0], 3, 1, |_, _, &p| Ok(p));
        assert!(matches!(result, Err(Error::Data(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn auc_matches_brute_force(
            raw in proptest::collection::vec((0u8..4, 0u8..2), 8..40)
        ) {
            let scores: Vec<f64> = raw.iter().map(|&(s, _)| f64::from(s) / 4.0).collect();
            let labels: Vec<u8> = raw.iter().map(|&(_, l)| l).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let fast = auc(&scores, &labels).unwrap();
            let brute = brute_force_auc(&scores, &labels);
            prop_assert!((fast - brute).abs() < 1e-12, "fast {fast} brute {brute}");
        }

        #[test]
        fn auc_complement_symmetry(
            raw in proptest::collection::vec((0u8..5, 0u8..2), 8..40)
        ) {
            let scores: Vec<f64> = raw.iter().map(|&(s, _)| f64::from(s)).collect();
            let labels: Vec<u8> = raw.iter().map(|&(_, l)| l).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let a = auc(&scores, &labels).unwrap();
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let b = auc(&neg, &labels).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }

        #[test]
        fn auc_invariant_under_monotone_transform(
            raw in proptest::collection::vec((-3.0f64..3.0, 0u8..2), 8..40)
        ) {
            let scores: Vec<f64> = raw.iter().map(|&(s, _)| s).collect();
            let labels: Vec<u8> = raw.iter().map(|&(_, l)| l).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let a = auc(&scores, &labels).unwrap();
            let transformed: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
            let b = auc(&transformed, &labels).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
