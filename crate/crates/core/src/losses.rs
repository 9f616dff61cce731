//! Objective terms. Every function returns the scalar value together with its
//! gradient with respect to the network output it consumes.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

// Float math for no_std builds; inherent methods win when std is linked.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Floor applied inside every logarithm.
pub const LOG_CLAMP: f64 = 1e-8;

/// A loss with its breakdown; `total == adv + lambda * pixel`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub adv: f64,
    pub pixel: f64,
    pub lambda: f64,
}

impl LossValue {
    pub fn adversarial(v: f64) -> Self {
        LossValue {
            total: v,
            adv: v,
            pixel: 0.0,
            lambda: 0.0,
        }
    }

    /// Pure pixel term; `total` carries the unweighted value.
    pub fn pixel_only(v: f64) -> Self {
        LossValue {
            total: v,
            adv: 0.0,
            pixel: v,
            lambda: 1.0,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.total.is_finite() && (self.adv + self.lambda * self.pixel - self.total).abs() <= 1e-6
    }
}

/// `-ln(max(p, eps))` and the derivative of `-ln p`.
///
/// The clamp only bounds the reported value. The derivative keeps following
/// `-1 / p` (down to the smallest positive float) so that, after the sigmoid
/// backward, a confidently rejected sample still receives the logit gradient
/// `-(1 - p)` instead of none at all.
fn neg_log<T: Real>(p: T) -> (f64, T) {
    let value = -p.as_f64().max(LOG_CLAMP).ln();
    (value, -T::one() / p.max(T::min_positive_value()))
}

fn non_empty<T>(batch: &[T], what: &str) -> Result<()> {
    if batch.is_empty() {
        Err(Error::invalid(alloc::format!("empty {what} batch")))
    } else {
        Ok(())
    }
}

/// Discriminator side of the DC-GAN game, as a quantity to minimize:
/// `-(mean ln D(real) + mean ln(1 - D(fake)))`.
///
/// Returns the value and the gradients with respect to the real and fake probabilities.
pub fn dcgan_d_objective<T: Real>(d_real: &[T], d_fake: &[T]) -> Result<(LossValue, Vec<T>, Vec<T>)> {
    non_empty(d_real, "real")?;
    non_empty(d_fake, "fake")?;
    let (nr, nf) = (T::lit(d_real.len() as f64), T::lit(d_fake.len() as f64));
    let mut value = 0.0;
    let mut g_real = Vec::with_capacity(d_real.len());
    for &p in d_real {
        let (v, g) = neg_log(p);
        value += v / d_real.len() as f64;
        g_real.push(g / nr);
    }
    let mut g_fake = Vec::with_capacity(d_fake.len());
    for &p in d_fake {
        let (v, g) = neg_log(T::one() - p);
        value += v / d_fake.len() as f64;
        g_fake.push(-g / nf);
    }
    Ok((LossValue::adversarial(value), g_real, g_fake))
}

/// Non-saturating generator objective `-mean ln D(G(z))`.
pub fn dcgan_g_objective<T: Real>(d_fake: &[T]) -> Result<(LossValue, Vec<T>)> {
    non_empty(d_fake, "fake")?;
    mean_neg_log(d_fake)
}

/// Adversarial term for the detector, `-mean ln D(G(x))`, with `D` frozen:
/// only the gradient with respect to `D`'s output is returned, which the caller
/// propagates through `D` into the generator without touching `D`'s parameters.
pub fn adversarial_loss<T: Real>(d_generated: &[T]) -> Result<(LossValue, Vec<T>)> {
    non_empty(d_generated, "generated")?;
    mean_neg_log(d_generated)
}

fn mean_neg_log<T: Real>(ps: &[T]) -> Result<(LossValue, Vec<T>)> {
    let n = T::lit(ps.len() as f64);
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(ps.len());
    for &p in ps {
        let (v, g) = neg_log(p);
        value += v / ps.len() as f64;
        grad.push(g / n);
    }
    Ok((LossValue::adversarial(value), grad))
}

/// How the absolute differences of a batch are reduced to one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelReduction {
    /// Mean over every pixel of the batch; independent of the patch size.
    PerPixelMean,
    /// L1 norm of each item (sum over its pixels), averaged over the batch.
    #[default]
    PerImageSum,
}

/// Mean absolute difference between the generated map and the (dilated) target.
/// The subgradient at equality is 0.
pub fn pixel_l1_loss<T: Real>(generated: &Tensor<T>, target: &Tensor<T>) -> Result<(LossValue, Tensor<T>)> {
    pixel_l1_loss_with(generated, target, PixelReduction::PerPixelMean)
}

/// [`pixel_l1_loss`] with a selectable reduction.
pub fn pixel_l1_loss_with<T: Real>(
    generated: &Tensor<T>,
    target: &Tensor<T>,
    reduction: PixelReduction,
) -> Result<(LossValue, Tensor<T>)> {
    if generated.shape() != target.shape() {
        return Err(Error::shape(
            alloc::format!("{:?}", target.shape()),
            alloc::format!("{:?}", generated.shape()),
        ));
    }
    if generated.is_empty() {
        return Err(Error::invalid("empty pixel batch"));
    }
    let count = match reduction {
        PixelReduction::PerPixelMean => generated.len(),
        PixelReduction::PerImageSum => generated.batch(),
    } as f64;
    let inv = T::lit(1.0 / count);
    let mut sum = 0.0;
    let grad = generated
        .data()
        .iter()
        .zip(target.data())
        .map(|(&g, &y)| {
            let d = g - y;
            sum += d.abs().as_f64();
            if d > T::zero() {
                inv
            } else if d < T::zero() {
                -inv
            } else {
                T::zero()
            }
        })
        .collect();
    Ok((
        LossValue::pixel_only(sum / count),
        Tensor::from_vec(generated.shape(), grad)?,
    ))
}

/// `adv + lambda * pixel`.
pub fn total_loss(adv: &LossValue, pixel: &LossValue, lambda: f64) -> Result<LossValue> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    Ok(LossValue {
        total: adv.adv + lambda * pixel.pixel,
        adv: adv.adv,
        pixel: pixel.pixel,
        lambda,
    })
}

/// Mean softmax cross-entropy over `[N, 2]` logits; returns value and logit gradient.
pub fn cross_entropy<T: Real>(logits: &[T], labels: &[usize], classes: usize) -> Result<(f64, Vec<T>)> {
    if labels.is_empty() || logits.len() != labels.len() * classes {
        return Err(Error::shape(
            alloc::format!("{} logits", labels.len() * classes),
            alloc::format!("{}", logits.len()),
        ));
    }
    let n = labels.len();
    let inv = T::lit(1.0 / n as f64);
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &label) in logits.chunks(classes).zip(labels) {
        if label >= classes {
            return Err(Error::invalid(alloc::format!("label {label} out of range")));
        }
        let p = crate::networks::softmax(row);
        value -= p[label].as_f64().max(LOG_CLAMP).ln() / labels.len() as f64;
        for (k, &pk) in p.iter().enumerate() {
            let y = if k == label { T::one() } else { T::zero() };
            grad.push((pk - y) * inv);
        }
    }
    Ok((value, grad))
}
