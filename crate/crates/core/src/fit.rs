use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least-squares line through `(x, y)`.
pub fn line_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Infeasible("line fit needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::Infeasible("line fit with degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Least squares for `K` regressors via modified Gram–Schmidt.
/// Returns the coefficients and the rms residual.
pub fn least_squares<const K: usize>(rows: &[[f64; K]], y: &[f64]) -> Result<([f64; K], f64)> {
    let m = rows.len();
    if m < K || y.len() != m {
        return Err(Error::Infeasible("least squares is underdetermined".into()));
    }
    let mut q: Vec<Vec<f64>> = (0..K).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut r = [[0.0; K]; K];
    for j in 0..K {
        for i in 0..j {
            let dot: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
            r[i][j] = dot;
            let qi = q[i].clone();
            for (v, a) in q[j].iter_mut().zip(&qi) {
                *v -= dot * a;
            }
        }
        let norm = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Infeasible("rank-deficient design matrix".into()));
        }
        r[j][j] = norm;
        for v in q[j].iter_mut() {
            *v /= norm;
        }
    }
    let mut qty = [0.0; K];
    for j in 0..K {
        qty[j] = q[j].iter().zip(y).map(|(a, b)| a * b).sum();
    }
    let mut c = [0.0; K];
    for j in (0..K).rev() {
        let mut s = qty[j];
        for k in j + 1..K {
            s -= r[j][k] * c[k];
        }
        c[j] = s / r[j][j];
    }
    let mut ss = 0.0;
    for (row, yy) in rows.iter().zip(y) {
        let pred: f64 = row.iter().zip(&c).map(|(a, b)| a * b).sum();
        ss += (yy - pred) * (yy - pred);
    }
    Ok((c, (ss / m as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = line_fit(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-15);
        assert!((f.intercept - 2.0).abs() < 1e-15);
        assert!((f.r_squared - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_recovered() {
        let rows: Vec<[f64; 3]> = (0..20).map(|i| {
            let x = i as f64 * 0.1;
            [1.0, x, x * x]
        }).collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.0 - 3.0 * r[1] + 0.25 * r[2]).collect();
        let (c, res) = least_squares(&rows, &y).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] + 3.0).abs() < 1e-12);
        assert!((c[2] - 0.25).abs() < 1e-12 && res < 1e-13);
    }
}
