//! Reference implementations used as test oracles. Written for clarity, not speed,
//! and sharing no code with the library.
#![allow(dead_code)]

/// Solves `A x = b` (row-major `n×n`) by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Vec<f64> {
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap())
            .unwrap();
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * n + row];
    }
    x
}

/// Weighted least squares through the normal equations.
pub fn wls_oracle(rows: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
    let p = rows[0].len();
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    for ((x, &t), &wt) in rows.iter().zip(y).zip(w) {
        for i in 0..p {
            b[i] += wt * x[i] * t;
            for j in 0..p {
                a[i * p + j] += wt * x[i] * x[j];
            }
        }
    }
    gauss_solve(a, b, p)
}

/// Shapley values as the average marginal contribution over all orderings.
pub fn permutation_shapley(n: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    fn permute(prefix: &mut Vec<usize>, used: &mut [bool], visit: &mut dyn FnMut(&[usize])) {
        if prefix.len() == used.len() {
            visit(prefix);
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                permute(prefix, used, visit);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut phi = vec![0.0; n];
    let mut count = 0.0;
    permute(&mut Vec::new(), &mut vec![false; n], &mut |order| {
        let mut set = 0usize;
        for &i in order {
            let before = f(set);
            set |= 1 << i;
            phi[i] += f(set) - before;
        }
        count += 1.0;
    });
    phi.iter().map(|p| p / count).collect()
}

pub fn mask_bits(mask: &[bool]) -> usize {
    mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| 1 << i).sum()
}

/// Small deterministic generator so oracles do not depend on the library RNG.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}
