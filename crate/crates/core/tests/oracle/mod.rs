//! Scalar-loop reference metrics, written independently of the library.
#![allow(dead_code)]

pub fn mse(y: &[f64], p: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..y.len() {
        acc += (y[i] - p[i]).powi(2);
    }
    acc / y.len() as f64
}

pub fn mae(y: &[f64], p: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..y.len() {
        acc += (y[i] - p[i]).abs();
    }
    acc / y.len() as f64
}

fn avg(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in x {
        s += v;
    }
    s / x.len() as f64
}

/// Population standard deviation.
fn sd(x: &[f64]) -> f64 {
    let m = avg(x);
    let mut s = 0.0;
    for v in x {
        s += (v - m).powi(2);
    }
    (s / x.len() as f64).sqrt()
}

pub fn nse(y: &[f64], p: &[f64]) -> f64 {
    1.0 - mse(y, p) / sd(y).powi(2)
}

pub fn kge(y: &[f64], p: &[f64]) -> f64 {
    let (my, mp) = (avg(y), avg(p));
    let mut cov = 0.0;
    for i in 0..y.len() {
        cov += (y[i] - my) * (p[i] - mp);
    }
    cov /= y.len() as f64;
    let r = cov / (sd(y) * sd(p));
    let alpha = sd(p) / sd(y);
    let beta = mp / my;
    1.0 - ((r - 1.0).powi(2) + (alpha - 1.0).powi(2) + (beta - 1.0).powi(2)).sqrt()
}

/// `(percent, excluded)`; points with `|y| < 1e-8` are skipped.
pub fn mape(y: &[f64], p: &[f64]) -> (f64, usize) {
    let mut total = 0.0;
    let mut used = 0;
    for i in 0..y.len() {
        if y[i].abs() >= 1e-8 {
            total += (p[i] - y[i]).abs() / y[i].abs();
            used += 1;
        }
    }
    (total / used as f64 * 100.0, y.len() - used)
}

/// Relative-or-absolute closeness: `|a-b| <= tol * max(1, |b|)`.
pub fn near(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
