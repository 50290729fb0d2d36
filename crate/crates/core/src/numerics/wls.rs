use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Relative diagonal jitter added to the normal matrix before factoring.
pub(crate) const RIDGE_JITTER: f64 = 1e-10;
/// Largest tolerated condition number of the jittered normal matrix.
const MAX_CONDITION: f64 = 1e12;

/// Weighted regression data: `design` is `M×P` (column 0 is the intercept of
/// the surrogate model when one is fitted), `targets` and `weights` have length `M`.
#[derive(Debug, Clone)]
pub struct WlsProblem<T = f64> {
    design: Tensor<T>,
    targets: Tensor<T>,
    weights: Tensor<T>,
}

impl<T: Real> WlsProblem<T> {
    pub fn new(design: Tensor<T>, targets: Tensor<T>, weights: Tensor<T>) -> Result<Self> {
        let (m, p) = match design.dims() {
            &[m, p] => (m, p),
            d => return Err(Error::shape(format!("design must be M×P, got {d:?}"))),
        };
        if targets.dims() != [m] || weights.dims() != [m] {
            return Err(Error::shape(format!(
                "design has {m} rows but targets {:?} and weights {:?}",
                targets.dims(),
                weights.dims()
            )));
        }
        if weights.data().iter().any(|w| *w < T::zero()) {
            return Err(Error::validation("negative sample weight"));
        }
        let positive = weights.data().iter().filter(|w| **w > T::zero()).count();
        if positive < p {
            return Err(Error::validation(format!(
                "{positive} positive weights for {p} unknowns"
            )));
        }
        Ok(WlsProblem {
            design,
            targets,
            weights,
        })
    }

    /// Convenience constructor from row slices.
    pub fn from_rows(rows: &[Vec<T>], targets: &[T], weights: &[T]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::shape("ragged design rows"));
        }
        let flat: Vec<T> = rows.iter().flatten().copied().collect();
        Self::new(
            Tensor::new(vec![rows.len(), p], flat)?,
            Tensor::from_vec(targets.to_vec())?,
            Tensor::from_vec(weights.to_vec())?,
        )
    }

    pub fn n_rows(&self) -> usize {
        self.design.dims()[0]
    }

    pub fn n_cols(&self) -> usize {
        self.design.dims()[1]
    }

    pub fn design(&self) -> &Tensor<T> {
        &self.design
    }

    pub fn targets(&self) -> &Tensor<T> {
        &self.targets
    }

    pub fn weights(&self) -> &Tensor<T> {
        &self.weights
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[T] {
        let p = self.n_cols();
        &self.design.data()[i * p..(i + 1) * p]
    }

    /// `(XᵀWX, XᵀWy)` as a row-major `P×P` matrix and a length-`P` vector.
    pub fn normal_equations(&self) -> (Vec<T>, Vec<T>) {
        let p = self.n_cols();
        let mut gram = vec![T::zero(); p * p];
        let mut rhs = vec![T::zero(); p];
        let y = self.targets.data();
        for (i, &w) in self.weights.data().iter().enumerate() {
            if w == T::zero() {
                continue;
            }
            let row = self.row(i);
            for a in 0..p {
                let wa = w * row[a];
                if wa == T::zero() {
                    continue;
                }
                rhs[a] = rhs[a] + wa * y[i];
                for b in a..p {
                    gram[a * p + b] = gram[a * p + b] + wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                gram[a * p + b] = gram[b * p + a];
            }
        }
        (gram, rhs)
    }

    /// `Xᵀ W (y − Xβ)`, the gradient of the half weighted residual sum of squares.
    pub fn residual_gradient(&self, beta: &[T]) -> Vec<T> {
        let p = self.n_cols();
        let y = self.targets.data();
        let mut g = vec![T::zero(); p];
        for (i, &w) in self.weights.data().iter().enumerate() {
            let row = self.row(i);
            let r = y[i] - dot(row, beta);
            for a in 0..p {
                g[a] = g[a] + w * r * row[a];
            }
        }
        g
    }
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Minimizes `Σ w_m (y_m − x_m·β)²`.
///
/// The normal matrix gets a relative ridge jitter and is factored with a
/// diagonally pivoted Cholesky; two refinement steps against the unjittered
/// system recover full accuracy.
pub fn wls_solve<T: Real>(p: &WlsProblem<T>) -> Result<Tensor<T>> {
    let n = p.n_cols();
    let (gram, rhs) = p.normal_equations();
    // Directions whose curvature falls below the jitter level are treated as missing.
    PivotedCholesky::factor(&gram, n, T::lit(RIDGE_JITTER))?;
    let chol = PivotedCholesky::factor(&jittered(&gram, n), n, T::lit(1.0 / MAX_CONDITION))?;
    let mut beta = chol.solve(&rhs);
    for _ in 0..2 {
        let resid: Vec<T> = (0..n)
            .map(|a| rhs[a] - dot(&gram[a * n..(a + 1) * n], &beta))
            .collect();
        let delta = chol.solve(&resid);
        for (b, d) in beta.iter_mut().zip(delta) {
            *b = *b + d;
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::RankDeficient {
            rank: chol.rank,
            expected: n,
        });
    }
    Ok(Tensor::from_parts_unchecked(vec![n], beta))
}

pub(crate) fn jittered<T: Real>(gram: &[T], n: usize) -> Vec<T> {
    let trace: T = (0..n).map(|i| gram[i * n + i]).sum();
    let scale = if trace > T::zero() {
        trace / T::lit(n as f64)
    } else {
        T::one()
    };
    let mut a = gram.to_vec();
    for i in 0..n {
        a[i * n + i] = a[i * n + i] + T::lit(RIDGE_JITTER) * scale;
    }
    a
}

/// `P A Pᵀ = L Lᵀ` with symmetric pivoting on the largest remaining diagonal.
pub(crate) struct PivotedCholesky<T> {
    n: usize,
    l: Vec<T>,
    perm: Vec<usize>,
    pub(crate) rank: usize,
}

impl<T: Real> PivotedCholesky<T> {
    /// Fails when a pivot drops below `rel_tol` times the largest diagonal.
    pub(crate) fn factor(a: &[T], n: usize, rel_tol: T) -> Result<Self> {
        let mut work = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut l = vec![T::zero(); n * n];
        let max_diag = (0..n)
            .map(|i| work[i * n + i])
            .fold(T::zero(), |m, v| m.max(v));
        let rel = rel_tol.max(T::epsilon() * T::lit(16.0 * n as f64));
        let tol = max_diag * rel;
        let mut rank = n;
        for k in 0..n {
            let (j, pivot) = (k..n)
                .map(|i| (i, work[i * n + i]))
                .fold((k, T::neg_infinity()), |best, cur| {
                    if cur.1 > best.1 {
                        cur
                    } else {
                        best
                    }
                });
            if !pivot.is_finite() || pivot <= tol {
                rank = k;
                break;
            }
            if j != k {
                swap_sym(&mut work, n, j, k);
                perm.swap(j, k);
                for c in 0..k {
                    l.swap(j * n + c, k * n + c);
                }
            }
            let d = work[k * n + k].sqrt();
            l[k * n + k] = d;
            for i in k + 1..n {
                l[i * n + k] = work[i * n + k] / d;
            }
            for i in k + 1..n {
                let lik = l[i * n + k];
                for c in k + 1..=i {
                    let v = work[i * n + c] - lik * l[c * n + k];
                    work[i * n + c] = v;
                    work[c * n + i] = v;
                }
            }
        }
        if rank < n {
            return Err(Error::RankDeficient { rank, expected: n });
        }
        Ok(PivotedCholesky { n, l, perm, rank })
    }

    pub(crate) fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut z: Vec<T> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s = row.iter().zip(&z[..i]).fold(z[i], |s, (&l, &zc)| s - l * zc);
            z[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let s = z[i + 1..]
                .iter()
                .enumerate()
                .fold(z[i], |s, (o, &zr)| s - self.l[(i + 1 + o) * n + i] * zr);
            z[i] = s / self.l[i * n + i];
        }
        let mut x = vec![T::zero(); n];
        for (k, &i) in self.perm.iter().enumerate() {
            x[i] = z[k];
        }
        x
    }
}

fn swap_sym<T: Copy>(a: &mut [T], n: usize, i: usize, j: usize) {
    for c in 0..n {
        a.swap(i * n + c, j * n + c);
    }
    for r in 0..n {
        a.swap(r * n + i, r * n + j);
    }
}
