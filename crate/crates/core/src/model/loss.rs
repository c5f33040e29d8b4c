//! Masked binary-classification losses on the tape.
//!
//! Each term sees per-word probabilities `p`, targets `y ∈ {0, 1}` and a
//! validity mask; masked entries contribute neither value nor gradient.

use super::config::{LossConfig, Normalizer};
use crate::error::{Error, Result};
use crate::numcore::{Tape, Tensor, Var};

/// Probability clamp applied before taking logarithms.
pub const PROB_CLAMP: f64 = 1e-7;
/// Denominator guard of the soft-F1 ratio.
pub const F1_EPS: f64 = 1e-8;

fn check_lengths(tape: &Tape<'_>, p: Var, y: &[f64], mask: &[bool]) -> Result<Vec<usize>> {
    let shape = tape.value(p).shape().to_vec();
    let n = tape.value(p).numel();
    if y.len() != n || mask.len() != n {
        return Err(Error::Shape {
            op: "masked loss",
            left: shape,
            right: vec![y.len(), mask.len()],
        });
    }
    Ok(shape)
}

fn constant(tape: &mut Tape<'_>, shape: &[usize], values: Vec<f64>) -> Var {
    tape.constant(Tensor::new(shape.to_vec(), values).expect("length checked"))
}

fn mask_values(mask: &[bool]) -> Vec<f64> {
    mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
}

fn normalizer(mask: &[bool], norm: Normalizer) -> Result<f64> {
    let z = match norm {
        Normalizer::Valid => mask.iter().filter(|&&m| m).count(),
        Normalizer::Literal => mask.len(),
    };
    if z == 0 {
        return Err(Error::contract("loss normaliser is zero (no unmasked samples)"));
    }
    Ok(z as f64)
}

/// `−(1/Z) Σ 𝟙ᵢ [yᵢ log pᵢ + (1 − yᵢ) log(1 − pᵢ)]` with clamped `p`.
pub fn masked_bce(tape: &mut Tape<'_>, p: Var, y: &[f64], mask: &[bool], norm: Normalizer) -> Result<Var> {
    let shape = check_lengths(tape, p, y, mask)?;
    let z = normalizer(mask, norm)?;
    let pc = tape.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP);
    let log_p = tape.log(pc)?;
    let q = tape.affine(pc, -1.0, 1.0);
    let log_q = tape.log(q)?;
    let yv = constant(tape, &shape, y.to_vec());
    let one_minus_y = constant(tape, &shape, y.iter().map(|v| 1.0 - v).collect());
    let m = constant(tape, &shape, mask_values(mask));
    let a = tape.mul(yv, log_p)?;
    let b = tape.mul(one_minus_y, log_q)?;
    let ll = tape.add(a, b)?;
    let masked = tape.mul(ll, m)?;
    let s = tape.sum(masked);
    Ok(tape.scale(s, -1.0 / z))
}

/// `(1/Z) Σ 𝟙ᵢ (yᵢ − pᵢ)²`.
pub fn masked_mse(tape: &mut Tape<'_>, p: Var, y: &[f64], mask: &[bool], norm: Normalizer) -> Result<Var> {
    let shape = check_lengths(tape, p, y, mask)?;
    let z = normalizer(mask, norm)?;
    let yv = constant(tape, &shape, y.to_vec());
    let m = constant(tape, &shape, mask_values(mask));
    let d = tape.sub(yv, p)?;
    let sq = tape.mul(d, d)?;
    let masked = tape.mul(sq, m)?;
    let s = tape.sum(masked);
    Ok(tape.scale(s, 1.0 / z))
}

/// `1 − Σ𝟙ᵢyᵢpᵢ / (Σ𝟙ᵢyᵢ + Σ𝟙ᵢpᵢ)`; with `standard` the numerator is
/// doubled, giving the usual Dice/soft-F1 form. `ε` is added to the
/// denominator only when it is exactly zero.
pub fn masked_soft_f1(tape: &mut Tape<'_>, p: Var, y: &[f64], mask: &[bool], standard: bool) -> Result<Var> {
    let shape = check_lengths(tape, p, y, mask)?;
    let m = constant(tape, &shape, mask_values(mask));
    let my = constant(
        tape,
        &shape,
        y.iter().zip(mask).map(|(&v, &k)| if k { v } else { 0.0 }).collect(),
    );
    let yp = tape.mul(my, p)?;
    let tp = tape.sum(yp);
    let numerator = if standard { tape.scale(tp, 2.0) } else { tp };
    let mp = tape.mul(m, p)?;
    let sum_p = tape.sum(mp);
    let sum_y = tape.value(my).data().iter().sum::<f64>();
    let guard = if sum_y + tape.value(sum_p).item() == 0.0 { F1_EPS } else { 0.0 };
    let denominator = tape.affine(sum_p, 1.0, sum_y + guard);
    let ratio = tape.div(numerator, denominator)?;
    Ok(tape.affine(ratio, -1.0, 1.0))
}

/// `λ₁·BCE + λ₂·MSE + λ₃·softF1`; terms with zero weight are not built.
pub fn masked_total(tape: &mut Tape<'_>, p: Var, y: &[f64], mask: &[bool], cfg: &LossConfig) -> Result<Var> {
    cfg.weights.validate()?;
    let mut total: Option<Var> = None;
    let w = cfg.weights;
    for (weight, which) in [(w.bce, 0), (w.mse, 1), (w.f1, 2)] {
        if weight == 0.0 {
            continue;
        }
        let term = match which {
            0 => masked_bce(tape, p, y, mask, cfg.normalizer)?,
            1 => masked_mse(tape, p, y, mask, cfg.normalizer)?,
            _ => masked_soft_f1(tape, p, y, mask, cfg.standard_f1)?,
        };
        let term = tape.scale(term, weight);
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    Ok(total.expect("weights validated"))
}

fn eval(p: &[f64], f: impl FnOnce(&mut Tape<'_>, Var) -> Result<Var>) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::contract("loss on empty input"));
    }
    let mut tape = Tape::new();
    let pv = tape.constant(Tensor::vector(p.to_vec()));
    let out = f(&mut tape, pv)?;
    Ok(tape.value(out).item())
}

pub fn loss_bce(y: &[f64], p: &[f64], mask: &[bool], norm: Normalizer) -> Result<f64> {
    eval(p, |t, pv| masked_bce(t, pv, y, mask, norm))
}

pub fn loss_mse(y: &[f64], p: &[f64], mask: &[bool], norm: Normalizer) -> Result<f64> {
    eval(p, |t, pv| masked_mse(t, pv, y, mask, norm))
}

pub fn loss_softf1(y: &[f64], p: &[f64], mask: &[bool], standard: bool) -> Result<f64> {
    eval(p, |t, pv| masked_soft_f1(t, pv, y, mask, standard))
}

pub fn total_loss(y: &[f64], p: &[f64], mask: &[bool], cfg: &LossConfig) -> Result<f64> {
    eval(p, |t, pv| masked_total(t, pv, y, mask, cfg))
}
