use super::Tensor;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-7;

/// Additive smoothing in the Dice ratio.
pub const DICE_SMOOTH: f64 = 1.0;

/// Central-difference step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-4;

fn check_pair(p: &[f64], y: &[f64]) -> Result<()> {
    if p.is_empty() || p.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} predictions against {} targets",
            p.len(),
            y.len()
        )));
    }
    if p.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite loss input".into()));
    }
    if p.iter().chain(y).any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Argument("probabilities and targets must lie in [0, 1]".into()));
    }
    Ok(())
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Mean pixel-wise binary cross-entropy.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(p, y)?;
    let sum: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = clamp(p);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(sum / p.len() as f64)
}

/// Gradient of [`bce_loss`] with respect to `p`; zero where the clamp is active.
pub fn bce_grad(p: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_pair(p, y)?;
    let n = p.len() as f64;
    Ok(p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            if clamp(p) != p {
                return 0.0;
            }
            (-(y / p) + (1.0 - y) / (1.0 - p)) / n
        })
        .collect())
}

fn dice_terms(p: &[f64], y: &[f64]) -> (f64, f64) {
    let mut inter = 0.0;
    let mut total = 0.0;
    for (&p, &y) in p.iter().zip(y) {
        let p = clamp(p);
        inter += p * y;
        total += p + y;
    }
    (inter, total)
}

/// `1 - (2 Σ p·y + s) / (Σ p + Σ y + s)` over clamped probabilities.
pub fn dice_loss(p: &[f64], y: &[f64], smooth: f64) -> Result<f64> {
    check_pair(p, y)?;
    if !(smooth > 0.0 && smooth.is_finite()) {
        return Err(Error::Argument(format!(
            "Dice smoothing must be positive, got {smooth}"
        )));
    }
    let (inter, total) = dice_terms(p, y);
    Ok(1.0 - (2.0 * inter + smooth) / (total + smooth))
}

/// Gradient of [`dice_loss`] with respect to `p`; zero where the clamp is active.
pub fn dice_grad(p: &[f64], y: &[f64], smooth: f64) -> Result<Vec<f64>> {
    check_pair(p, y)?;
    if !(smooth > 0.0 && smooth.is_finite()) {
        return Err(Error::Argument(format!(
            "Dice smoothing must be positive, got {smooth}"
        )));
    }
    let (inter, total) = dice_terms(p, y);
    let num = 2.0 * inter + smooth;
    let den = total + smooth;
    Ok(p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            if clamp(p) != p {
                return 0.0;
            }
            -(2.0 * y * den - num) / (den * den)
        })
        .collect())
}

fn log_softmax_rows(logits: &Tensor) -> Result<(usize, usize, Vec<f64>)> {
    let (t, v) = logits.matrix_dims()?;
    if t == 0 || v == 0 {
        return Err(Error::Shape("logits must have at least one token and one class".into()));
    }
    let mut out = Vec::with_capacity(t * v);
    for row in logits.data().chunks_exact(v) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|x| x - lse));
    }
    Ok((t, v, out))
}

fn check_targets(targets: &[usize], t: usize, v: usize) -> Result<()> {
    if targets.len() != t {
        return Err(Error::Shape(format!("{t} token rows but {} targets", targets.len())));
    }
    if let Some(bad) = targets.iter().find(|&&k| k >= v) {
        return Err(Error::Argument(format!(
            "target class {bad} outside a vocabulary of {v}"
        )));
    }
    Ok(())
}

/// Mean token cross-entropy of `(T, V)` logits against target ids.
pub fn ce_text_loss(logits: &Tensor, targets: &[usize]) -> Result<f64> {
    let (t, v, logp) = log_softmax_rows(logits)?;
    check_targets(targets, t, v)?;
    let sum: f64 = targets.iter().enumerate().map(|(i, &k)| -logp[i * v + k]).sum();
    Ok(sum / t as f64)
}

/// Gradient of [`ce_text_loss`] with respect to the logits.
pub fn ce_text_grad(logits: &Tensor, targets: &[usize]) -> Result<Tensor> {
    let (t, v, logp) = log_softmax_rows(logits)?;
    check_targets(targets, t, v)?;
    let mut g: Vec<f64> = logp.iter().map(|l| l.exp() / t as f64).collect();
    for (i, &k) in targets.iter().enumerate() {
        g[i * v + k] -= 1.0 / t as f64;
    }
    Tensor::new(vec![t, v], g)
}

/// Unweighted sum of the three training losses.
pub fn total_loss(text: f64, bce: f64, dice: f64) -> Result<f64> {
    if [text, bce, dice].iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "loss terms must be finite (text {text}, bce {bce}, dice {dice})"
        )));
    }
    Ok(text + bce + dice)
}

/// Largest relative error between `analytic` and a central-difference
/// estimate of the gradient of `f` at `point`.
///
/// Each component's error is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check(f: &dyn Fn(&[f64]) -> f64, point: &[f64], analytic: &[f64]) -> Result<f64> {
    if point.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "{} coordinates but {} gradient components",
            point.len(),
            analytic.len()
        )));
    }
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for k in 0..x.len() {
        let orig = x[k];
        x[k] = orig + GRAD_CHECK_STEP;
        let up = f(&x);
        x[k] = orig - GRAD_CHECK_STEP;
        let down = f(&x);
        x[k] = orig;
        let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
        let scale = analytic[k].abs().max(numeric.abs()).max(1e-8);
        let err = (analytic[k] - numeric).abs() / scale;
        if !err.is_finite() {
            return Err(Error::Numeric(format!("gradient component {k} is not finite")));
        }
        worst = worst.max(err);
    }
    Ok(worst)
}
