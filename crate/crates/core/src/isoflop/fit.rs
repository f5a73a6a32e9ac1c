use crate::error::{Error, Result};

/// `L = alpha (ln N)^2 + beta ln N + gamma` fitted to one IsoFLOP profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParabolaFit {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub n_opt: f64,
    pub l_min: f64,
    pub residual_rms: f64,
    /// `n_opt` falls outside `[min N / 10, max N * 10]`.
    pub extrapolated: bool,
}

impl ParabolaFit {
    pub fn eval(&self, n: f64) -> f64 {
        let x = n.ln();
        self.alpha * x * x + self.beta * x + self.gamma
    }
}

/// Ordinary least squares in `(ln N, L)`. Errors when fewer than three
/// distinct `N` are given or when the curvature is not positive, which means
/// the grid did not bracket the optimum.
pub fn fit_parabola(points: &[(f64, f64)]) -> Result<ParabolaFit> {
    if let Some(p) = points.iter().find(|p| !(p.0 > 0.0) || !p.1.is_finite()) {
        return Err(Error::invalid(format!("parabola point ({}, {}) needs positive N and finite loss", p.0, p.1)));
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} distinct model sizes; need 3", distinct.len())));
    }
    // sort so the result does not depend on input order
    let mut pts: Vec<(f64, f64)> = points.iter().map(|&(n, l)| (n.ln(), l)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let m = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;

    // normal equations on centred x for a*u^2 + b*u + c
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    for &(x, y) in &pts {
        let u = x - m;
        let mut p = 1.0;
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += p;
            if k < 3 {
                t[k] += p * y;
            }
            p *= u;
        }
    }
    let a = [[s[4], s[3], s[2]], [s[3], s[2], s[1]], [s[2], s[1], s[0]]];
    let rhs = [t[2], t[1], t[0]];
    let [qa, qb, qc] = solve3(a, rhs).ok_or_else(|| Error::DegenerateFit("singular normal equations".into()))?;
    let scale = qb.abs() + qc.abs() + 1.0;
    if !(qa > 1e-12 * scale) {
        return Err(Error::DegenerateFit(format!("curvature {qa} is not positive; the optimum is not bracketed")));
    }
    let alpha = qa;
    let beta = qb - 2.0 * qa * m;
    let gamma = qa * m * m - qb * m + qc;
    let x_opt = m - qb / (2.0 * qa);
    let l_min = qc - qb * qb / (4.0 * qa);
    let sse: f64 = pts
        .iter()
        .map(|&(x, y)| {
            let u = x - m;
            (qa * u * u + qb * u + qc - y).powi(2)
        })
        .sum();
    let n_opt = x_opt.exp();
    let (lo, hi) = (distinct[0], distinct[distinct.len() - 1]);
    Ok(ParabolaFit {
        alpha,
        beta,
        gamma,
        n_opt,
        l_min,
        residual_rms: (sse / pts.len() as f64).sqrt(),
        extrapolated: !(n_opt >= lo / 10.0 && n_opt <= hi * 10.0),
    })
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in row + 1..3 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// `ln Y = log_coefficient + exponent * ln C`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub log_coefficient: f64,
    pub r2: f64,
    pub c_min: f64,
    pub c_max: f64,
    /// `ln Y - fitted ln Y` per input pair, in input order.
    pub residuals: Vec<f64>,
}

pub fn fit_power_law(pairs: &[(f64, f64)]) -> Result<PowerLawFit> {
    if pairs.len() < 2 {
        return Err(Error::invalid("power-law fit needs at least two pairs"));
    }
    if let Some(p) = pairs.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0) || !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::invalid(format!("power-law inputs must be positive, got ({}, {})", p.0, p.1)));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all budgets are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let exponent = sxy / sxx;
    let log_coefficient = my - exponent * mx;
    let residuals: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - (log_coefficient + exponent * x)).collect();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let r2 = if syy == 0.0 { 1.0 } else { (1.0 - sse / syy).clamp(0.0, 1.0) };
    let c_min = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let c_max = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(PowerLawFit { exponent, log_coefficient, r2, c_min, c_max, residuals })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrapolation {
    pub value: f64,
    /// `C` lies outside the fitted budget range.
    pub extrapolated: bool,
}

pub fn extrapolate(fit: &PowerLawFit, c: f64) -> Result<Extrapolation> {
    if !(c > 0.0) {
        return Err(Error::invalid(format!("compute budget must be positive, got {c}")));
    }
    Ok(Extrapolation {
        value: (fit.log_coefficient + fit.exponent * c.ln()).exp(),
        extrapolated: c < fit.c_min || c > fit.c_max,
    })
}
