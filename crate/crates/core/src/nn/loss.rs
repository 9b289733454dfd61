//! Losses on per-pixel probabilities. Each returns the scalar and its
//! gradient with respect to the probabilities.

use crate::error::{Error, Result};
use crate::image::BinaryMask;
use crate::scalar::Scalar;

pub const DICE_SMOOTH: f64 = 1.0;

/// Teacher probabilities are clamped to `[TEACHER_CLAMP, 1 - TEACHER_CLAMP]`.
pub const TEACHER_CLAMP: f64 = 1e-6;

/// Student probabilities are clamped to keep the logarithms finite.
const STUDENT_CLAMP: f64 = 1e-7;

/// `1 - (2 sum(p g) + s) / (sum(p) + sum(g) + s)`.
pub fn dice_loss<T: Scalar>(prob: &[T], target: &BinaryMask, smooth: f64) -> Result<(T, Vec<T>)> {
    if prob.len() != target.data().len() {
        return Err(Error::shape(target.data().len(), prob.len()));
    }
    let (mut inter, mut sp, mut sg) = (0.0f64, 0.0f64, 0.0f64);
    for (&p, &g) in prob.iter().zip(target.data()) {
        let p = p.as_f64();
        sp += p;
        if g {
            inter += p;
            sg += 1.0;
        }
    }
    let num = 2.0 * inter + smooth;
    let den = sp + sg + smooth;
    let loss = 1.0 - num / den;
    let den2 = den * den;
    let grad = target
        .data()
        .iter()
        .map(|&g| {
            let gj = if g { 1.0 } else { 0.0 };
            T::lit(-(2.0 * gj * den - num) / den2)
        })
        .collect();
    Ok((T::lit(loss), grad))
}

/// Pixel-mean soft-target binary cross-entropy of the student against a
/// fixed teacher. No gradient is produced for the teacher.
pub fn kd_loss<T: Scalar>(student: &[T], teacher: &[T]) -> Result<(T, Vec<T>)> {
    if student.len() != teacher.len() {
        return Err(Error::shape(teacher.len(), student.len()));
    }
    let n = student.len() as f64;
    let mut total = 0.0f64;
    let mut grad = Vec::with_capacity(student.len());
    for (&q, &t) in student.iter().zip(teacher) {
        let t = t.as_f64().clamp(TEACHER_CLAMP, 1.0 - TEACHER_CLAMP);
        let q = q.as_f64().clamp(STUDENT_CLAMP, 1.0 - STUDENT_CLAMP);
        total -= t * q.ln() + (1.0 - t) * (1.0 - q).ln();
        grad.push(T::lit((-t / q + (1.0 - t) / (1.0 - q)) / n));
    }
    Ok((T::lit(total / n), grad))
}

/// Pixel-mean binary entropy of a (clamped) teacher map; the minimum of
/// [`kd_loss`] over students.
pub fn mean_entropy<T: Scalar>(teacher: &[T]) -> f64 {
    let n = teacher.len() as f64;
    teacher
        .iter()
        .map(|&t| {
            let t = t.as_f64().clamp(TEACHER_CLAMP, 1.0 - TEACHER_CLAMP);
            -(t * t.ln() + (1.0 - t) * (1.0 - t).ln())
        })
        .sum::<f64>()
        / n
}
