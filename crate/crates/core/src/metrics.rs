//! Segmentation losses and overlap metrics.

use crate::error::{Error, Result};
use crate::sum::NeumaierSum;
use crate::volume::{softmax_field, FieldKind, LabelVolume, OneHotMask, ProbabilityField};

/// How the weighted Dice sum is normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DiceNormalization {
    /// Divide by the class count C. With non-unit weights the loss of a
    /// perfect prediction is `1 - sum(w) / C`, not zero.
    #[default]
    ClassCount,
    /// Divide by the weight sum; a perfect prediction scores zero.
    WeightSum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub class_weights: Vec<f64>,
    pub epsilon: f64,
    pub dice_normalization: DiceNormalization,
}

impl Default for LossConfig {
    /// CE weight 0.3, Dice weight 0.7, class weights `[0.1, 0.45, 0.45]`.
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 0.7,
            class_weights: vec![0.1, 0.45, 0.45],
            epsilon: 1e-6,
            dice_normalization: DiceNormalization::ClassCount,
        }
    }
}

impl LossConfig {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::invalid(
                "loss weights alpha and beta must be non-negative",
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if self.class_weights.len() != num_classes {
            return Err(Error::invalid(format!(
                "{} class weights for {num_classes} classes",
                self.class_weights.len()
            )));
        }
        if self.class_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("class weights must be non-negative"));
        }
        Ok(())
    }
}

fn check_pair(field: &ProbabilityField, truth: &OneHotMask) -> Result<()> {
    if field.geometry().shape() != truth.geometry().shape()
        || field.num_classes() != truth.num_classes()
    {
        return Err(Error::consistency(format!(
            "prediction {:?} with {} classes vs truth {:?} with {} classes",
            field.geometry().shape(),
            field.num_classes(),
            truth.geometry().shape(),
            truth.num_classes()
        )));
    }
    Ok(())
}

/// Weighted cross-entropy, summed over classes and averaged over voxels.
pub fn cross_entropy(
    logits: &ProbabilityField,
    truth: &OneHotMask,
    cfg: &LossConfig,
) -> Result<f64> {
    if logits.kind() != FieldKind::Logits {
        return Err(Error::invalid("cross-entropy expects logits"));
    }
    check_pair(logits, truth)?;
    cfg.validate(logits.num_classes())?;
    let n = logits.geometry().len();
    let c_count = logits.num_classes();
    let x = logits.flat();
    let y = truth.flat();
    let mut acc = NeumaierSum::default();
    for i in 0..n {
        let max = (0..c_count)
            .map(|c| x[c * n + i])
            .fold(f64::NEG_INFINITY, f64::max);
        let lse = max
            + (0..c_count)
                .map(|c| (x[c * n + i] - max).exp())
                .sum::<f64>()
                .ln();
        for c in 0..c_count {
            if y[c * n + i] == 1 {
                acc.add(-cfg.class_weights[c] * (x[c * n + i] - lse));
            }
        }
    }
    Ok(acc.value() / n as f64)
}

/// Weighted multi-class Dice loss on probabilities.
pub fn dice_loss(prob: &ProbabilityField, truth: &OneHotMask, cfg: &LossConfig) -> Result<f64> {
    if prob.kind() != FieldKind::Probabilities {
        return Err(Error::invalid("Dice loss expects probabilities"));
    }
    check_pair(prob, truth)?;
    cfg.validate(prob.num_classes())?;
    let n = prob.geometry().len();
    let p = prob.flat();
    let y = truth.flat();
    let mut weighted = NeumaierSum::default();
    for c in 0..prob.num_classes() {
        let (pc, yc) = (&p[c * n..(c + 1) * n], &y[c * n..(c + 1) * n]);
        let mut inter = NeumaierSum::default();
        let mut psum = NeumaierSum::default();
        let mut ysum = 0u64;
        for (pv, &yv) in pc.iter().zip(yc) {
            psum.add(*pv);
            if yv == 1 {
                inter.add(*pv);
                ysum += 1;
            }
        }
        let dice = 2.0 * inter.value() / (psum.value() + ysum as f64 + cfg.epsilon);
        weighted.add(cfg.class_weights[c] * dice);
    }
    let norm = match cfg.dice_normalization {
        DiceNormalization::ClassCount => prob.num_classes() as f64,
        DiceNormalization::WeightSum => cfg.class_weights.iter().sum(),
    };
    Ok(1.0 - weighted.value() / norm)
}

/// `alpha * CE + beta * Dice`, Dice evaluated on the softmax of the logits.
pub fn composite_loss(
    logits: &ProbabilityField,
    truth: &OneHotMask,
    cfg: &LossConfig,
) -> Result<f64> {
    let ce = cross_entropy(logits, truth, cfg)?;
    let dice = dice_loss(&softmax_field(logits)?, truth, cfg)?;
    Ok(cfg.alpha * ce + cfg.beta * dice)
}

/// Rows are ground-truth classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(num_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != num_classes * num_classes {
            return Err(Error::invalid("confusion counts must be C x C"));
        }
        Ok(Self {
            num_classes,
            counts,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.get(c, c)
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        (0..self.num_classes)
            .filter(|&g| g != c)
            .map(|g| self.get(g, c))
            .sum()
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        (0..self.num_classes)
            .filter(|&p| p != c)
            .map(|p| self.get(c, p))
            .sum()
    }
}

pub fn confusion(pred: &LabelVolume, truth: &LabelVolume) -> Result<ConfusionMatrix> {
    if pred.geometry().shape() != truth.geometry().shape()
        || pred.num_classes() != truth.num_classes()
    {
        return Err(Error::consistency(format!(
            "prediction {:?} ({} classes) vs truth {:?} ({} classes)",
            pred.geometry().shape(),
            pred.num_classes(),
            truth.geometry().shape(),
            truth.num_classes()
        )));
    }
    let c = pred.num_classes();
    let mut counts = vec![0u64; c * c];
    for (&p, &g) in pred.labels().iter().zip(truth.labels().iter()) {
        counts[g as usize * c + p as usize] += 1;
    }
    Ok(ConfusionMatrix {
        num_classes: c,
        counts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassScore {
    pub class: usize,
    /// `None` when the class is absent from both prediction and truth.
    pub iou: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverlapReport {
    pub per_class: Vec<ClassScore>,
    pub mean_iou: Option<f64>,
    pub mean_f1: Option<f64>,
}

/// Per-class IoU and F1 for `eval_classes`, with means over the defined ones.
pub fn iou_f1(cm: &ConfusionMatrix, eval_classes: &[usize]) -> Result<OverlapReport> {
    if eval_classes.is_empty() {
        return Err(Error::invalid("no classes selected for evaluation"));
    }
    if let Some(c) = eval_classes.iter().find(|&&c| c >= cm.num_classes) {
        return Err(Error::invalid(format!(
            "class {c} is not below {}",
            cm.num_classes
        )));
    }
    let per_class: Vec<ClassScore> = eval_classes
        .iter()
        .map(|&c| {
            let tp = cm.true_positives(c) as f64;
            let fp = cm.false_positives(c) as f64;
            let fn_ = cm.false_negatives(c) as f64;
            let defined = tp + fp + fn_ > 0.0;
            ClassScore {
                class: c,
                iou: defined.then(|| tp / (tp + fp + fn_)),
                f1: defined.then(|| 2.0 * tp / (2.0 * tp + fp + fn_)),
            }
        })
        .collect();
    let mean = |get: fn(&ClassScore) -> Option<f64>| {
        let vals: Vec<f64> = per_class.iter().filter_map(get).collect();
        (!vals.is_empty()).then(|| crate::sum::sum(vals.iter().copied()) / vals.len() as f64)
    };
    Ok(OverlapReport {
        mean_iou: mean(|s| s.iou),
        mean_f1: mean(|s| s.f1),
        per_class,
    })
}
