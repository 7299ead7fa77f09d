//! Lowest eigenpairs of a real symmetric tridiagonal matrix: Sturm-sequence
//! bisection for eigenvalues, inverse iteration for eigenvectors.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("inverse iteration for eigenpair {index} did not converge (residual {residual:e})")]
    NoConvergence { index: usize, residual: f64 },
    #[error("requested {requested} eigenpairs from a matrix of order {order}")]
    TooMany { requested: usize, order: usize },
}

#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    /// off[i] couples rows i and i + 1.
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len());
        SymTridiagonal { diag, off }
    }

    pub fn order(&self) -> usize {
        self.diag.len()
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.order();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    fn norm(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let pivmin = f64::MIN_POSITIVE * self.norm().max(1.0) * 1e4;
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.order() {
            q = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / q;
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// k-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let abs_tol = f64::EPSILON * self.norm();
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) + abs_tol * 1e-3 || mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Solves (T - shift I) x = b in place by LU with partial pivoting.
    fn shifted_solve(&self, shift: f64, b: &mut [f64]) {
        let n = self.order();
        let tiny = f64::EPSILON * self.norm().max(f64::MIN_POSITIVE);
        let mut d: Vec<f64> = self.diag.iter().map(|v| v - shift).collect();
        let mut dl = self.off.clone();
        let mut du = self.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        for i in 0..n - 1 {
            if swapped[i] {
                let temp = b[i] - dl[i] * b[i + 1];
                b[i] = b[i + 1];
                b[i + 1] = temp;
            } else {
                b[i + 1] -= dl[i] * b[i];
            }
        }
        b[n - 1] /= d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.order();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// Unit eigenvector for `eigenvalue`, kept orthogonal to `deflate`.
    pub fn eigenvector(&self, index: usize, eigenvalue: f64, deflate: &[Vec<f64>]) -> Result<Vec<f64>, EigenError> {
        let n = self.order();
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7548776662466927).fract()).collect();
        let norm = self.norm().max(f64::MIN_POSITIVE);
        let mut residual = f64::INFINITY;
        for _ in 0..12 {
            orthogonalize(&mut x, deflate);
            normalize(&mut x);
            let mut y = x.clone();
            self.shifted_solve(eigenvalue, &mut y);
            orthogonalize(&mut y, deflate);
            normalize(&mut y);
            let ty = self.apply(&y);
            let rq: f64 = ty.iter().zip(&y).map(|(a, b)| a * b).sum();
            residual = ty.iter().zip(&y).map(|(a, b)| (a - rq * b).powi(2)).sum::<f64>().sqrt() / norm;
            let change = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            x = y;
            if residual < 1e-13 && change < 1e-10 {
                return Ok(x);
            }
        }
        if residual < 1e-10 {
            Ok(x)
        } else {
            Err(EigenError::NoConvergence { index, residual })
        }
    }

    /// Lowest `k` eigenpairs; `known` lists exact leading eigenvectors to be
    /// taken as given (e.g. an analytically known ground state).
    pub fn lowest(&self, k: usize, known: &[Vec<f64>]) -> Result<Vec<(f64, Vec<f64>)>, EigenError> {
        if k > self.order() {
            return Err(EigenError::TooMany { requested: k, order: self.order() });
        }
        let mut out: Vec<(f64, Vec<f64>)> = Vec::with_capacity(k);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
        for i in 0..k {
            let lambda = self.eigenvalue(i);
            let v = match known.get(i) {
                Some(v) => {
                    let mut v = v.clone();
                    normalize(&mut v);
                    v
                }
                None => self.eigenvector(i, lambda, &basis)?,
            };
            basis.push(v.clone());
            out.push((lambda, v));
        }
        Ok(out)
    }
}

fn orthogonalize(x: &mut [f64], against: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in against {
            let c: f64 = x.iter().zip(q).map(|(a, b)| a * b).sum();
            for (xi, qi) in x.iter_mut().zip(q) {
                *xi -= c * qi;
            }
        }
    }
}

fn normalize(x: &mut [f64]) {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        for v in x.iter_mut() {
            *v /= n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn laplacian(n: usize) -> SymTridiagonal {
        SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1])
    }

    #[test]
    fn dirichlet_laplacian_spectrum() {
        let n = 50;
        let t = laplacian(n);
        for k in 0..5 {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((t.eigenvalue(k) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_solver_on_irregular_matrix() {
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64) - 3.0).collect();
        let off: Vec<f64> = (0..n - 1).map(|i| 0.5 + ((i * 3 % 5) as f64) * 0.3).collect();
        let t = SymTridiagonal::new(diag.clone(), off.clone());
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = off[i];
                m[(i + 1, i)] = off[i];
            }
        }
        let mut dense: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        let pairs = t.lowest(6, &[]).unwrap();
        for (k, (lambda, v)) in pairs.iter().enumerate() {
            assert!((lambda - dense[k]).abs() < 1e-10, "{k}: {lambda} vs {}", dense[k]);
            let tv = t.apply(v);
            let res: f64 = tv.iter().zip(v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
            assert!(res < 1e-9);
        }
        for i in 0..6 {
            for j in 0..6 {
                let d: f64 = pairs[i].1.iter().zip(&pairs[j].1).map(|(a, b)| a * b).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sturm_count_brackets() {
        let t = laplacian(10);
        assert_eq!(t.count_below(-1.0), 0);
        assert_eq!(t.count_below(5.0), 10);
    }
}
