use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::{Dataset, Standardizer, Targets};
use super::metrics::{ClassificationMetrics, Metrics, RegressionMetrics};
use super::network::SpatioTemporalNet;
use crate::adam::Adam;
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::loss::{LossKind, OutputHead};
use crate::param::{clip_grad_norm, Module};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    pub seed: u64,
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 200, batch_size: 32, learning_rate: 1e-3, clip_norm: 5.0, seed: 0, standardize: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// Training accuracy for classification, RMSE for regression.
    pub metric: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self, metric_name: &str) -> String {
        self.epochs
            .iter()
            .map(|e| format!("{{\"epoch\":{},\"loss\":{},\"{metric_name}\":{}}}\n", e.epoch, e.loss, e.metric))
            .collect()
    }
}

/// Class decisions from head outputs (`units × n`).
pub fn decide(head: &OutputHead, outputs: &DMatrix<f64>) -> Vec<usize> {
    outputs
        .column_iter()
        .map(|c| match head.loss {
            LossKind::BinaryCrossEntropy => usize::from(c[0] >= 0.5),
            _ => c.argmax().0,
        })
        .collect()
}

fn batch_metric(head: &OutputHead, outputs: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    if head.loss == LossKind::MeanSquared {
        (outputs - target).norm_squared()
    } else {
        let truth = decide(head, target);
        decide(head, outputs).iter().zip(&truth).filter(|(a, b)| a == b).count() as f64
    }
}

/// Mini-batch Adam training with a seeded shuffle every epoch.
pub fn train(net: &mut SpatioTemporalNet, data: &Dataset, cfg: &TrainConfig) -> Result<(TrainLog, Adam)> {
    let mut adam = Adam::new(cfg.learning_rate);
    let log = train_with(net, &mut adam, data, cfg)?;
    Ok((log, adam))
}

/// Continues training with an existing optimizer state.
pub fn train_with(net: &mut SpatioTemporalNet, adam: &mut Adam, data: &Dataset, cfg: &TrainConfig) -> Result<TrainLog> {
    data.check(net.dims())?;
    if data.is_empty() {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidParameter("batch size 0".into()));
    }
    if cfg.standardize {
        net.standardizer = Standardizer::fit(data, net.dims())?;
    }
    let head = net.config().head;
    let units = net.config().output_units();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut metric) = (0.0, 0.0);
        for rows in order.chunks(cfg.batch_size) {
            let batch = net.batch(data, rows);
            let target = data.targets.matrix(&head, units, rows)?;
            net.zero_grad();
            let z = net.forward(&batch, true)?;
            let (loss, dz) = head.loss_and_grad(&z, &target)?;
            if !loss.is_finite() {
                log::error!("epoch {epoch}: non-finite loss {loss}, gradient norm {}", net.grad_norm());
                return Err(Error::Diverged { epoch, loss });
            }
            net.backward(&dz);
            clip_grad_norm(net, cfg.clip_norm);
            adam.step(net);
            total += loss * rows.len() as f64;
            metric += batch_metric(&head, &head.predict(&z), &target);
        }
        let n = data.len() as f64;
        let metric = if head.loss == LossKind::MeanSquared { (metric / n).sqrt() } else { metric / n };
        let record = EpochRecord { epoch, loss: total / n, metric };
        log::info!("epoch {epoch}: loss {:.6} metric {:.4}", record.loss, record.metric);
        log.epochs.push(record);
    }
    Ok(log)
}

pub fn evaluate(net: &mut SpatioTemporalNet, data: &Dataset) -> Result<Metrics> {
    let outputs = net.predict(data)?;
    let head = net.config().head;
    match &data.targets {
        Targets::Classes(truth) if head.is_classification() => {
            let pred = decide(&head, &outputs);
            Ok(Metrics::Classification(ClassificationMetrics::from_predictions(
                truth,
                &pred,
                net.config().classes,
            )?))
        }
        Targets::Real(truth) if !head.is_classification() => {
            let pred: Vec<f64> = outputs.row(0).iter().copied().collect();
            Ok(Metrics::Regression(RegressionMetrics::from_predictions(truth, &pred)?))
        }
        _ => Err(Error::InvalidParameter("targets do not match the model task".into())),
    }
}

/// Shape signature stored alongside the weights.
fn meta(net: &SpatioTemporalNet) -> DMatrix<f64> {
    let c = net.config();
    let d = net.dims();
    DMatrix::from_row_slice(
        1,
        6,
        &[
            d.features as f64,
            d.spatial as f64,
            c.output_units() as f64,
            c.lstm_hidden as f64,
            c.lstm_layers as f64,
            c.classes as f64,
        ],
    )
}

/// Parameters, buffers and (optionally) optimizer moments.
pub fn to_checkpoint(net: &mut SpatioTemporalNet, adam: Option<&Adam>) -> Checkpoint {
    let mut ck = Checkpoint::default();
    ck.insert("meta.dims", meta(net));
    let mut names = Vec::new();
    net.visit_params("", &mut |name, p| {
        ck.insert(name, p.value.clone());
        names.push(name.to_string());
    });
    net.visit_buffers("", &mut |name, b| ck.insert(name, b.clone()));
    if let Some(a) = adam.filter(|a| a.m.len() == names.len()) {
        ck.insert("adam.t", DMatrix::from_element(1, 1, a.t as f64));
        for (k, name) in names.iter().enumerate() {
            ck.insert(format!("adam.m.{name}"), a.m[k].clone());
            ck.insert(format!("adam.v.{name}"), a.v[k].clone());
        }
    }
    ck
}

/// Loads weights into a network built from the same configuration. Returns
/// the optimizer state when the checkpoint carries one.
pub fn load_checkpoint(net: &mut SpatioTemporalNet, ck: &Checkpoint) -> Result<Option<Adam>> {
    let stored = ck.get("meta.dims")?;
    if *stored != meta(net) {
        return Err(Error::Shape(format!(
            "checkpoint was written for dims {:?}, model has {:?}",
            stored.as_slice(),
            meta(net).as_slice()
        )));
    }
    let mut failure = None;
    let mut names = Vec::new();
    let mut assign = |name: &str, slot: &mut DMatrix<f64>| match ck.get(name) {
        Ok(v) if v.shape() == slot.shape() => slot.copy_from(v),
        Ok(v) => {
            failure.get_or_insert(Error::Shape(format!("{name}: {:?} vs {:?}", v.shape(), slot.shape())));
        }
        Err(e) => {
            failure.get_or_insert(e);
        }
    };
    net.visit_params("", &mut |name, p| {
        assign(name, &mut p.value);
        names.push(name.to_string());
    });
    net.visit_buffers("", &mut |name, b| assign(name, b));
    if let Some(e) = failure {
        return Err(e);
    }
    let Ok(t) = ck.get("adam.t") else {
        return Ok(None);
    };
    let mut adam = Adam::default();
    adam.t = t[(0, 0)] as u64;
    for name in &names {
        adam.m.push(ck.get(&format!("adam.m.{name}"))?.clone());
        adam.v.push(ck.get(&format!("adam.v.{name}"))?.clone());
    }
    Ok(Some(adam))
}
