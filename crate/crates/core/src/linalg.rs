//! Small dense least-squares solver used by the regression-based modules.
//! Normal equations with column equilibration and partial pivoting; design
//! matrices here have at most ~15 columns.

/// Ordinary least squares fit of `y` on the rows of `x`.
#[derive(Debug, Clone)]
pub(crate) struct OlsFit {
    pub coef: Vec<f64>,
    pub stderr: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Residual variance SSR / (n - k).
    pub s2: f64,
    pub n: usize,
    pub k: usize,
}

/// Solves the linear system `a * x = b` in place. `a` is `n x n`,
/// row-major. Returns `None` when a pivot collapses.
fn solve_in_place(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot_row][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        let pivot = a[col][col];
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row][col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row][j] -= factor * a[col][j];
            }
            b[row] -= factor * b[col];
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Inverse of a small symmetric matrix by solving against identity columns.
fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut inv = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut m = a.to_vec();
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = solve_in_place(&mut m, &mut e)?;
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

/// OLS via equilibrated normal equations. Returns `None` for singular or
/// effectively collinear designs, or when there are fewer rows than columns.
pub(crate) fn ols(rows: &[Vec<f64>], y: &[f64]) -> Option<OlsFit> {
    let n = rows.len();
    if n == 0 || n != y.len() {
        return None;
    }
    let k = rows[0].len();
    if k == 0 || n < k {
        return None;
    }

    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (row, &yi) in rows.iter().zip(y) {
        for i in 0..k {
            for j in i..k {
                xtx[i][j] += row[i] * row[j];
            }
            xty[i] += row[i] * yi;
        }
    }
    for i in 0..k {
        for j in 0..i {
            xtx[i][j] = xtx[j][i];
        }
    }

    // Equilibrate: scale column j by 1/sqrt(XtX[j][j]) so level shifts in the
    // data do not wreck the pivoting.
    let scale: Vec<f64> = (0..k)
        .map(|j| {
            let d = xtx[j][j];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    if scale.iter().any(|&s| s == 0.0 || !s.is_finite()) {
        return None;
    }
    let mut m = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            m[i][j] = xtx[i][j] * scale[i] * scale[j];
        }
    }
    let mut rhs: Vec<f64> = (0..k).map(|i| xty[i] * scale[i]).collect();
    let mut m_for_solve = m.clone();
    let scaled_coef = solve_in_place(&mut m_for_solve, &mut rhs)?;
    let coef: Vec<f64> = (0..k).map(|i| scaled_coef[i] * scale[i]).collect();

    let residuals: Vec<f64> = rows
        .iter()
        .zip(y)
        .map(|(row, &yi)| yi - row.iter().zip(&coef).map(|(x, c)| x * c).sum::<f64>())
        .collect();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let dof = n.saturating_sub(k);
    if dof == 0 {
        return None;
    }
    let s2 = ssr / dof as f64;

    let m_inv = invert(&m)?;
    // Var(coef_i) = s2 * (XtX^-1)_ii = s2 * scale_i^2 * (M^-1)_ii.
    let stderr: Vec<f64> = (0..k)
        .map(|i| (s2 * scale[i] * scale[i] * m_inv[i][i]).max(0.0).sqrt())
        .collect();

    Some(OlsFit { coef, stderr, residuals, s2, n, k })
}

/// Simple regression of `y` on `x` with intercept: `(slope, intercept, r2)`.
/// `None` when `x` has no variance.
pub(crate) fn simple_regression(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Some((slope, intercept, r2))
}
