use crate::error::{Error, Result};

/// Cohen's kappa `(P₀ − Pₑ)/(1 − Pₑ)`. Degenerate `Pₑ = 1` (a single class
/// in both truth and prediction) counts as perfect agreement.
pub fn kappa(p0: f64, pe: f64) -> f64 {
    if (1.0 - pe).abs() < 1e-15 {
        return if p0 >= 1.0 { 1.0 } else { 0.0 };
    }
    (p0 - pe) / (1.0 - pe)
}

/// Rows are true classes, columns predictions.
pub fn confusion_matrix(truth: &[usize], pred: &[usize], classes: usize) -> Result<Vec<Vec<usize>>> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!("{} labels vs {} predictions", truth.len(), pred.len())));
    }
    let mut m = vec![vec![0; classes]; classes];
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= classes || p >= classes {
            return Err(Error::Shape(format!("class index {} out of range", t.max(p))));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub kappa: f64,
    pub confusion: Vec<Vec<usize>>,
}

impl ClassificationMetrics {
    /// Accuracy and kappa with chance agreement from the empirical marginals.
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Result<Self> {
        let n: usize = confusion.iter().flatten().sum();
        if n == 0 {
            return Err(Error::UndefinedMetric("accuracy of an empty set"));
        }
        let n = n as f64;
        let k = confusion.len();
        let p0 = (0..k).map(|i| confusion[i][i]).sum::<usize>() as f64 / n;
        let pe = (0..k)
            .map(|i| {
                let row: usize = confusion[i].iter().sum();
                let col: usize = confusion.iter().map(|r| r[i]).sum();
                (row as f64 / n) * (col as f64 / n)
            })
            .sum::<f64>();
        Ok(Self { accuracy: p0, kappa: kappa(p0, pe), confusion })
    }

    pub fn from_predictions(truth: &[usize], pred: &[usize], classes: usize) -> Result<Self> {
        Self::from_confusion(confusion_matrix(truth, pred, classes)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionMetrics {
    pub rmse: f64,
    pub pcc: f64,
}

pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::Shape(format!("{} targets vs {} predictions", truth.len(), pred.len())));
    }
    Ok((truth.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.len() as f64).sqrt())
}

/// Pearson correlation; undefined when either side has zero variance.
pub fn pcc(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() || truth.len() < 2 {
        return Err(Error::Shape(format!("{} targets vs {} predictions", truth.len(), pred.len())));
    }
    let n = truth.len() as f64;
    let mt = truth.iter().sum::<f64>() / n;
    let mp = pred.iter().sum::<f64>() / n;
    let (mut stt, mut spp, mut stp) = (0.0, 0.0, 0.0);
    for (t, p) in truth.iter().zip(pred) {
        stt += (t - mt).powi(2);
        spp += (p - mp).powi(2);
        stp += (t - mt) * (p - mp);
    }
    if stt == 0.0 || spp == 0.0 {
        return Err(Error::UndefinedMetric("PCC with zero-variance targets or predictions"));
    }
    Ok(stp / (stt * spp).sqrt())
}

impl RegressionMetrics {
    pub fn from_predictions(truth: &[f64], pred: &[f64]) -> Result<Self> {
        Ok(Self { rmse: rmse(truth, pred)?, pcc: pcc(truth, pred)? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Metrics {
    Classification(ClassificationMetrics),
    Regression(RegressionMetrics),
}
