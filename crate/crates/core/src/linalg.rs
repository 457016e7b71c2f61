//! Dense vector helpers shared by the solvers.

use nalgebra::DMatrix;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `out = m * x`
pub fn matvec(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.ncols(), x.len());
    debug_assert_eq!(m.nrows(), out.len());
    out.iter_mut().for_each(|o| *o = 0.0);
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        for (o, &mij) in out.iter_mut().zip(m.column(j).iter()) {
            *o += mij * xj;
        }
    }
}

/// `out = mᵀ * y`
pub fn matvec_t(m: &DMatrix<f64>, y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.nrows(), y.len());
    debug_assert_eq!(m.ncols(), out.len());
    for (j, o) in out.iter_mut().enumerate() {
        *o = dot(m.column(j).as_slice(), y);
    }
}

/// Subtract the mean from every entry, i.e. apply `I - 11ᵀ/N` without forming it.
pub fn center_in_place(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}
