//! Dense and banded kernels that nalgebra does not provide: a banded SPD
//! Cholesky for the ambient Gram matrix, a Bunch–Kaufman LDLᵀ for symmetric
//! indefinite saddle systems, and a Cholesky-reduced generalized eigensolver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{PbdwError, Result};

/// Symmetric matrix stored by its lower band.
///
/// Entry `(i, j)` with `i - bandwidth <= j <= i` lives at
/// `data[i * (bandwidth + 1) + (i - j)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBanded {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl SymBanded {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bandwidth {
            None
        } else {
            Some(i * (self.bandwidth + 1) + (i - j))
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Adds `value` to the symmetric pair `(i, j)`/`(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside bandwidth {}", self.bandwidth));
        self.data[s] += value;
    }

    pub fn add_diagonal(&mut self, diag: &DVector<f64>) {
        assert_eq!(diag.len(), self.n);
        for i in 0..self.n {
            self.data[i * (self.bandwidth + 1)] += diag[i];
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = DVector::zeros(self.n);
        let w = self.bandwidth + 1;
        for i in 0..self.n {
            let row = &self.data[i * w..(i + 1) * w];
            y[i] += row[0] * x[i];
            let lo = i.saturating_sub(self.bandwidth);
            for j in lo..i {
                let a = row[i - j];
                if a != 0.0 {
                    y[i] += a * x[j];
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn cholesky(&self) -> Result<BandedCholesky> {
        BandedCholesky::new(self)
    }
}

/// Lower-triangular banded Cholesky factor, `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bandwidth: usize,
    // same layout as SymBanded, holding L
    l: Vec<f64>,
}

impl BandedCholesky {
    fn new(a: &SymBanded) -> Result<Self> {
        let n = a.n;
        let b = a.bandwidth;
        let w = b + 1;
        let mut l = a.data.clone();
        for j in 0..n {
            // diagonal
            let lo = j.saturating_sub(b);
            let mut d = l[j * w];
            for k in lo..j {
                let ljk = l[j * w + (j - k)];
                d -= ljk * ljk;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(PbdwError::Factorization(format!(
                    "banded Cholesky: non-positive pivot {d:.3e} at row {j}"
                )));
            }
            let djj = d.sqrt();
            l[j * w] = djj;
            let hi = (j + b).min(n - 1);
            for i in (j + 1)..=hi {
                let lo_i = i.saturating_sub(b).max(lo);
                let mut s = l[i * w + (i - j)];
                for k in lo_i..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                l[i * w + (i - j)] = s / djj;
            }
        }
        Ok(Self { n, bandwidth: b, l })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        assert_eq!(rhs.len(), self.n);
        let w = self.bandwidth + 1;
        let mut x = rhs.clone();
        // forward: L y = b
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            let mut s = x[i];
            for k in lo..i {
                s -= self.l[i * w + (i - k)] * x[k];
            }
            x[i] = s / self.l[i * w];
        }
        // backward: Lᵀ x = y
        for i in (0..self.n).rev() {
            x[i] /= self.l[i * w];
            let xi = x[i];
            let lo = i.saturating_sub(self.bandwidth);
            for k in lo..i {
                x[k] -= self.l[i * w + (i - k)] * xi;
            }
        }
        x
    }
}

#[derive(Debug, Clone, Copy)]
enum Pivot {
    One(f64),
    /// `[d11, d21, d22]` of a symmetric 2×2 block.
    Two([f64; 3]),
}

/// Bunch–Kaufman factorization `P A Pᵀ = L D Lᵀ` of a dense symmetric
/// (possibly indefinite) matrix, with 1×1 and 2×2 diagonal pivots.
#[derive(Debug, Clone)]
pub struct BunchKaufman {
    l: DMatrix<f64>,
    pivots: Vec<(usize, Pivot)>,
    perm: Vec<usize>,
}

impl BunchKaufman {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(PbdwError::Dimension {
                expected: n,
                found: a.ncols(),
            });
        }
        let alpha = (1.0 + 17f64.sqrt()) / 8.0;
        let scale = a.amax().max(f64::MIN_POSITIVE);
        // Work on a full symmetric copy; columns < k hold L below the diagonal.
        let mut w = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::with_capacity(n);
        let mut k = 0;
        while k < n {
            let absakk = w[(k, k)].abs();
            let (imax, colmax) = ((k + 1)..n)
                .map(|i| (i, w[(i, k)].abs()))
                .fold((k, 0.0), |acc, c| if c.1 > acc.1 { c } else { acc });
            if absakk.max(colmax) <= f64::EPSILON * scale * 1e-2 {
                return Err(PbdwError::Factorization(format!(
                    "Bunch-Kaufman: zero pivot column at step {k}"
                )));
            }
            let (kp, kstep) = if absakk >= alpha * colmax {
                (k, 1)
            } else {
                let rowmax = (k..n)
                    .filter(|&j| j != imax)
                    .map(|j| w[(imax, j)].abs())
                    .fold(0.0, f64::max);
                if absakk * rowmax >= alpha * colmax * colmax {
                    (k, 1)
                } else if w[(imax, imax)].abs() >= alpha * rowmax {
                    (imax, 1)
                } else {
                    (imax, 2)
                }
            };
            let kk = k + kstep - 1;
            if kp != kk {
                swap_symmetric(&mut w, kk, kp, k);
                perm.swap(kk, kp);
            }
            if kstep == 1 {
                let d = w[(k, k)];
                for i in (k + 1)..n {
                    w[(i, k)] /= d;
                }
                for j in (k + 1)..n {
                    let ljd = w[(j, k)] * d;
                    for i in j..n {
                        let v = w[(i, j)] - w[(i, k)] * ljd;
                        w[(i, j)] = v;
                        w[(j, i)] = v;
                    }
                }
                pivots.push((k, Pivot::One(d)));
            } else {
                let d11 = w[(k, k)];
                let d21 = w[(k + 1, k)];
                let d22 = w[(k + 1, k + 1)];
                let det = d11 * d22 - d21 * d21;
                if det == 0.0 || !det.is_finite() {
                    return Err(PbdwError::Factorization(format!(
                        "Bunch-Kaufman: singular 2x2 pivot at step {k}"
                    )));
                }
                // rows of W restricted to the pivot columns, then L = W D⁻¹
                let mut wcols = Vec::with_capacity(n - k - 2);
                for i in (k + 2)..n {
                    let (w0, w1) = (w[(i, k)], w[(i, k + 1)]);
                    let l0 = (w0 * d22 - w1 * d21) / det;
                    let l1 = (w1 * d11 - w0 * d21) / det;
                    wcols.push((w0, w1, l0, l1));
                }
                for (jj, &(w0j, w1j, _, _)) in wcols.iter().enumerate() {
                    let j = k + 2 + jj;
                    for (ii, &(_, _, l0i, l1i)) in wcols.iter().enumerate().skip(jj) {
                        let i = k + 2 + ii;
                        let v = w[(i, j)] - l0i * w0j - l1i * w1j;
                        w[(i, j)] = v;
                        w[(j, i)] = v;
                    }
                }
                for (ii, &(_, _, l0, l1)) in wcols.iter().enumerate() {
                    w[(k + 2 + ii, k)] = l0;
                    w[(k + 2 + ii, k + 1)] = l1;
                }
                w[(k + 1, k)] = 0.0;
                pivots.push((k, Pivot::Two([d11, d21, d22])));
            }
            k += kstep;
        }
        let l = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else if i > j {
                w[(i, j)]
            } else {
                0.0
            }
        });
        Ok(Self { l, pivots, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x = DVector::from_fn(n, |i, _| b[self.perm[i]]);
        // L y = Pb
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.l[(i, j)] * x[j];
            }
            x[i] = s;
        }
        // D w = y
        for &(k, p) in &self.pivots {
            match p {
                Pivot::One(d) => x[k] /= d,
                Pivot::Two([d11, d21, d22]) => {
                    let det = d11 * d22 - d21 * d21;
                    let (y0, y1) = (x[k], x[k + 1]);
                    x[k] = (d22 * y0 - d21 * y1) / det;
                    x[k + 1] = (d11 * y1 - d21 * y0) / det;
                }
            }
        }
        // Lᵀ v = w
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.l[(j, i)] * x[j];
            }
            x[i] = s;
        }
        let mut out = DVector::zeros(n);
        for i in 0..n {
            out[self.perm[i]] = x[i];
        }
        out
    }

    /// `(positive, negative, zero)` eigenvalue counts, read off `D` by
    /// Sylvester's law of inertia.
    pub fn inertia(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        let mut tally = |v: f64| {
            if v > 0.0 {
                counts.0 += 1
            } else if v < 0.0 {
                counts.1 += 1
            } else {
                counts.2 += 1
            }
        };
        for &(_, p) in &self.pivots {
            match p {
                Pivot::One(d) => tally(d),
                Pivot::Two([a, b, c]) => {
                    let mean = 0.5 * (a + c);
                    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                    tally(mean + rad);
                    tally(mean - rad);
                }
            }
        }
        counts
    }
}

/// Symmetric interchange of indices `p` and `q` (both `>= k`). Rows are swapped
/// over the full width so the computed columns of `L` follow the permutation;
/// columns only within the trailing block, since the upper part of earlier
/// rows is never read.
fn swap_symmetric(w: &mut DMatrix<f64>, p: usize, q: usize, k: usize) {
    debug_assert!(p >= k && q >= k);
    w.swap_rows(p, q);
    for i in k..w.nrows() {
        w.swap((i, p), (i, q));
    }
}

/// Eigenpairs of the symmetric-definite pencil `A x = λ B x`, ascending, with
/// eigenvectors normalized so that `xᵀ B x = 1`.
#[derive(Debug, Clone)]
pub struct GeneralizedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Solves the pencil by Cholesky reduction `B = LLᵀ`, `C = L⁻¹AL⁻ᵀ`.
///
/// Fails when the smallest eigenvalue of `B` lies below `-b_tol`; `B` with
/// eigenvalues in `[-b_tol, 0]` cannot be reduced either and is reported the
/// same way.
pub fn sym_generalized_eigen(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    b_tol: f64,
) -> Result<GeneralizedEigen> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(PbdwError::Dimension {
            expected: n,
            found: b.nrows(),
        });
    }
    let bs = symmetrize(b);
    let chol = match nalgebra::Cholesky::new(bs.clone()) {
        Some(c) => c,
        None => {
            let min_eig = SymmetricEigen::new(bs).eigenvalues.min();
            return Err(PbdwError::Conditioning(format!(
                "right-hand matrix of the pencil is not positive definite \
                 (min eigenvalue {min_eig:.3e}, tolerance -{b_tol:.1e})"
            )));
        }
    };
    let l = chol.l();
    let linv_a = l
        .solve_lower_triangular(&symmetrize(a))
        .expect("Cholesky factor is nonsingular");
    let c = l
        .solve_lower_triangular(&linv_a.transpose())
        .expect("Cholesky factor is nonsingular");
    let eig = SymmetricEigen::new(symmetrize(&c));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let y = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    let vectors = l
        .transpose()
        .solve_upper_triangular(&y)
        .expect("Cholesky factor is nonsingular");
    Ok(GeneralizedEigen { values, vectors })
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    if a.is_empty() {
        return DVector::zeros(0);
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    DVector::from_vec(s)
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = singular_values(a);
    let (max, min) = (s[0], s[s.len() - 1]);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
