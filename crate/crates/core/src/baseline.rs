//! Interpretable native classifiers: two-class linear discriminant analysis
//! with a pooled covariance, and L2-regularized logistic regression.
//!
//! Both produce a signed score; positive means AD, zero or below non-AD.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Lda,
    Logistic,
    Llm,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub participant_id: String,
    pub label: Label,
    pub score: f64,
    pub source: Source,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("class {0} has fewer than 2 examples")]
    DegenerateClass(Label),
    #[error("pooled covariance is not positive definite after ridge")]
    SingularCovariance,
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("loss became non-finite at epoch {epoch}; learning rate too large?")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("model features {model:?} do not match expected {expected:?}")]
    FeatureMismatch {
        model: Vec<String>,
        expected: Vec<String>,
    },
    #[error("model document: {0}")]
    Format(String),
}

/// Anything that scores a feature row.
pub trait Classifier {
    fn feature_names(&self) -> &[String];
    fn source(&self) -> Source;
    fn score(&self, x: &[f64]) -> Result<f64, ModelError>;

    fn predict(&self, participant_id: &str, x: &[f64]) -> Result<Prediction, ModelError> {
        let score = self.score(x)?;
        Ok(Prediction {
            participant_id: participant_id.to_string(),
            label: Label::from_score(score),
            score,
            source: self.source(),
        })
    }
}

fn check_dim(expected: usize, x: &[f64]) -> Result<(), ModelError> {
    if x.len() != expected {
        return Err(ModelError::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

fn check_rows(features: &[Vec<f64>], labels: &[Label]) -> Result<usize, ModelError> {
    if features.len() != labels.len() {
        return Err(ModelError::LengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    let dim = features.first().map_or(0, Vec::len);
    for row in features {
        check_dim(dim, row)?;
    }
    Ok(dim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub feature_names: Vec<String>,
    /// Means of the AD and non_AD classes, in that order.
    pub class_means: [Vec<f64>; 2],
    /// Row-major `dim x dim`.
    pub pooled_covariance: Vec<Vec<f64>>,
    /// Priors of AD and non_AD.
    pub priors: [f64; 2],
    #[serde(skip)]
    weights: Vec<f64>,
    #[serde(skip)]
    bias: f64,
}

impl LdaModel {
    /// Rebuilds the discriminant from stored parameters.
    pub fn from_parts(
        feature_names: Vec<String>,
        class_means: [Vec<f64>; 2],
        pooled_covariance: Vec<Vec<f64>>,
        priors: [f64; 2],
    ) -> Result<Self, ModelError> {
        let dim = feature_names.len();
        check_dim(dim, &class_means[0])?;
        check_dim(dim, &class_means[1])?;
        if pooled_covariance.len() != dim || pooled_covariance.iter().any(|r| r.len() != dim) {
            return Err(ModelError::Format("covariance shape".into()));
        }
        if !(priors[0] > 0.0 && priors[1] > 0.0) {
            return Err(ModelError::Format("priors must lie in (0, 1)".into()));
        }
        let cov = DMatrix::from_fn(dim, dim, |i, j| pooled_covariance[i][j]);
        let chol = cov.cholesky().ok_or(ModelError::SingularCovariance)?;
        let mu_ad = DVector::from_column_slice(&class_means[0]);
        let mu_non = DVector::from_column_slice(&class_means[1]);
        let w = chol.solve(&(&mu_ad - &mu_non));
        // b = -1/2 (mu_ad' S^-1 mu_ad - mu_non' S^-1 mu_non) + ln(pi_ad / pi_non)
        //   = -1/2 w' (mu_ad + mu_non) + ln(pi_ad / pi_non)
        let bias = -0.5 * w.dot(&(&mu_ad + &mu_non)) + (priors[0] / priors[1]).ln();
        Ok(LdaModel {
            feature_names,
            class_means,
            pooled_covariance,
            priors,
            weights: w.as_slice().to_vec(),
            bias,
        })
    }

    /// Discriminant direction `S^-1 (mu_AD - mu_nonAD)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }
}

impl Classifier for LdaModel {
    fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    fn source(&self) -> Source {
        Source::Lda
    }

    fn score(&self, x: &[f64]) -> Result<f64, ModelError> {
        check_dim(self.weights.len(), x)?;
        Ok(dot(&self.weights, x) + self.bias)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits LDA with the bias-corrected pooled within-class covariance plus a
/// ridge of `1e-6 * trace / dim` on the diagonal.
pub fn fit_lda(
    features: &[Vec<f64>],
    labels: &[Label],
    feature_names: &[String],
) -> Result<LdaModel, ModelError> {
    let dim = check_rows(features, labels)?;
    if !features.is_empty() && dim != feature_names.len() {
        return Err(ModelError::DimensionMismatch {
            expected: feature_names.len(),
            got: dim,
        });
    }
    let dim = feature_names.len();
    let mut means = [DVector::zeros(dim), DVector::zeros(dim)];
    let mut counts = [0usize; 2];
    for (x, l) in features.iter().zip(labels) {
        let k = class_index(*l);
        means[k] += DVector::from_column_slice(x);
        counts[k] += 1;
    }
    for (k, label) in [Label::Ad, Label::NonAd].into_iter().enumerate() {
        if counts[k] < 2 {
            return Err(ModelError::DegenerateClass(label));
        }
        means[k] /= counts[k] as f64;
    }
    let mut scatter = DMatrix::zeros(dim, dim);
    for (x, l) in features.iter().zip(labels) {
        let d = DVector::from_column_slice(x) - &means[class_index(*l)];
        scatter += &d * d.transpose();
    }
    let n = features.len();
    let mut cov = scatter / (n - 2) as f64;
    let trace = cov.trace();
    let ridge = 1e-6 * trace / dim as f64;
    if !(ridge > 0.0) {
        return Err(ModelError::SingularCovariance);
    }
    for i in 0..dim {
        cov[(i, i)] += ridge;
    }
    // exact symmetry
    let cov = (&cov + cov.transpose()) * 0.5;
    let priors = [counts[0] as f64 / n as f64, counts[1] as f64 / n as f64];
    LdaModel::from_parts(
        feature_names.to_vec(),
        [means[0].as_slice().to_vec(), means[1].as_slice().to_vec()],
        (0..dim)
            .map(|i| (0..dim).map(|j| cov[(i, j)]).collect())
            .collect(),
        priors,
    )
}

fn class_index(l: Label) -> usize {
    match l {
        Label::Ad => 0,
        Label::NonAd => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticHyper {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogisticHyper {
    fn default() -> Self {
        LogisticHyper {
            lr: 0.1,
            epochs: 500,
            l2: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// `(epoch, loss)` with the loss evaluated before that epoch's update.
    pub training_log: Vec<(usize, f64)>,
}

impl Classifier for LogisticModel {
    fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    fn source(&self) -> Source {
        Source::Logistic
    }

    fn score(&self, x: &[f64]) -> Result<f64, ModelError> {
        check_dim(self.weights.len(), x)?;
        Ok(dot(&self.weights, x) + self.bias)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean negative log-likelihood plus `l2/2 * |w|^2` (bias unpenalized), and
/// its gradient. `params` is `[w..., b]`; AD is the positive class.
pub fn loss_and_gradient(
    params: &[f64],
    features: &[Vec<f64>],
    labels: &[Label],
    l2: f64,
) -> (f64, Vec<f64>) {
    let dim = params.len() - 1;
    let (w, b) = (&params[..dim], params[dim]);
    let n = features.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; dim + 1];
    for (x, l) in features.iter().zip(labels) {
        let z = dot(w, x) + b;
        let y = if *l == Label::Ad { 1.0 } else { 0.0 };
        // -[y ln s(z) + (1-y) ln(1-s(z))] = softplus(z) - y z
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, xi) in grad.iter_mut().zip(x) {
            *g += r * xi;
        }
        grad[dim] += r;
    }
    loss /= n;
    for g in grad.iter_mut() {
        *g /= n;
    }
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    for (g, wi) in grad.iter_mut().zip(w) {
        *g += l2 * wi;
    }
    (loss, grad)
}

/// Full-batch gradient descent from zero weights.
pub fn fit_logistic(
    features: &[Vec<f64>],
    labels: &[Label],
    feature_names: &[String],
    hyper: LogisticHyper,
) -> Result<LogisticModel, ModelError> {
    if !(hyper.lr > 0.0) || hyper.epochs == 0 || !(hyper.l2 >= 0.0) {
        return Err(ModelError::InvalidHyper(format!(
            "need lr > 0, epochs >= 1, l2 >= 0 (got {hyper:?})"
        )));
    }
    let dim = check_rows(features, labels)?;
    if !features.is_empty() && dim != feature_names.len() {
        return Err(ModelError::DimensionMismatch {
            expected: feature_names.len(),
            got: dim,
        });
    }
    let mut params = vec![0.0; feature_names.len() + 1];
    let mut log = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let (loss, grad) = loss_and_gradient(&params, features, labels, hyper.l2);
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch });
        }
        log.push((epoch, loss));
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= hyper.lr * g;
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::NonFiniteLoss { epoch });
        }
    }
    let bias = params.pop().expect("bias slot");
    Ok(LogisticModel {
        feature_names: feature_names.to_vec(),
        weights: params,
        bias,
        training_log: log,
    })
}

/// Per-feature mean/std standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..dim)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let scale = (0..dim)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

/// Serialized model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Lda {
        class_means: [Vec<f64>; 2],
        pooled_covariance: Vec<Vec<f64>>,
        priors: [f64; 2],
    },
    Logistic {
        weights: Vec<f64>,
        bias: f64,
        training_log: Vec<(usize, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub feature_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardizer: Option<Standardizer>,
    pub params: ModelParams,
}

#[derive(Debug, Clone)]
pub enum NativeModel {
    Lda(LdaModel),
    Logistic(LogisticModel),
}

impl Classifier for NativeModel {
    fn feature_names(&self) -> &[String] {
        match self {
            NativeModel::Lda(m) => m.feature_names(),
            NativeModel::Logistic(m) => m.feature_names(),
        }
    }

    fn source(&self) -> Source {
        match self {
            NativeModel::Lda(m) => m.source(),
            NativeModel::Logistic(m) => m.source(),
        }
    }

    fn score(&self, x: &[f64]) -> Result<f64, ModelError> {
        match self {
            NativeModel::Lda(m) => m.score(x),
            NativeModel::Logistic(m) => m.score(x),
        }
    }
}

impl NativeModel {
    pub fn to_document(&self, standardizer: Option<Standardizer>) -> ModelDocument {
        let params = match self {
            NativeModel::Lda(m) => ModelParams::Lda {
                class_means: m.class_means.clone(),
                pooled_covariance: m.pooled_covariance.clone(),
                priors: m.priors,
            },
            NativeModel::Logistic(m) => ModelParams::Logistic {
                weights: m.weights.clone(),
                bias: m.bias,
                training_log: m.training_log.clone(),
            },
        };
        ModelDocument {
            version: MODEL_FORMAT_VERSION,
            feature_names: self.feature_names().to_vec(),
            standardizer,
            params,
        }
    }

    /// Rebuilds a model, refusing documents whose features differ from `expected`.
    pub fn from_document(doc: ModelDocument, expected: &[String]) -> Result<Self, ModelError> {
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Format(format!(
                "unsupported version {}",
                doc.version
            )));
        }
        if doc.feature_names != expected {
            return Err(ModelError::FeatureMismatch {
                model: doc.feature_names,
                expected: expected.to_vec(),
            });
        }
        match doc.params {
            ModelParams::Lda {
                class_means,
                pooled_covariance,
                priors,
            } => Ok(NativeModel::Lda(LdaModel::from_parts(
                doc.feature_names,
                class_means,
                pooled_covariance,
                priors,
            )?)),
            ModelParams::Logistic {
                weights,
                bias,
                training_log,
            } => {
                check_dim(doc.feature_names.len(), &weights)?;
                Ok(NativeModel::Logistic(LogisticModel {
                    feature_names: doc.feature_names,
                    weights,
                    bias,
                    training_log,
                }))
            }
        }
    }
}
