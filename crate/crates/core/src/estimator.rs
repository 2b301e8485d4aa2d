//! The regularized PBDW estimator in coefficient form and the inf-sup
//! constant of the background/update pair.
//!
//! With `L_z[m][n] = ℓ_m(ζ_n)` and `L_η[m][k] = ℓ_m(ψ_k)` the estimate minimizes
//! `ξ‖η‖² + (1/M)‖L_η η + L_z z − y‖²`; it is recovered from
//!
//! ```text
//! [ ξM·I + L_η L_ηᵀ   L_z ] [ η̃ ]   [ y ]
//! [ L_zᵀ              0   ] [ z  ] = [ 0 ],      η = L_ηᵀ η̃.
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{PbdwError, Result};
use crate::hilbert::{DiscreteSpace, Field, Norm};
use crate::linalg::{singular_values, sym_generalized_eigen, symmetrize, BunchKaufman};
use crate::observation::FunctionalSet;
use crate::reduction::BackgroundSpace;
use crate::update::UpdateSpace;

/// Relative singular-value cutoff for rank decisions.
pub const RANK_TOL: f64 = 1e-10;
/// Inf-sup values below this are treated as zero.
pub const BETA_TOL: f64 = 1e-10;

/// `A(ξ)` for the given blocks.
pub fn saddle_matrix(l_z: &DMatrix<f64>, l_eta: &DMatrix<f64>, xi: f64) -> DMatrix<f64> {
    let (m, n) = l_z.shape();
    let mut a = DMatrix::zeros(m + n, m + n);
    let mut top = l_eta * l_eta.transpose();
    for i in 0..m {
        top[(i, i)] += xi * m as f64;
    }
    a.view_mut((0, 0), (m, m)).copy_from(&symmetrize(&top));
    a.view_mut((0, m), (m, n)).copy_from(l_z);
    a.view_mut((m, 0), (n, m)).copy_from(&l_z.transpose());
    a
}

/// Coefficient-space solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub z_coeffs: DVector<f64>,
    pub eta_tilde: DVector<f64>,
    /// `L_ηᵀ η̃`, coefficients in the orthonormal update basis.
    pub eta_coeffs: DVector<f64>,
    pub objective: f64,
}

impl Solution {
    /// Stacked `[η̃; z]`, the unknown of the saddle system.
    pub fn stacked(&self) -> DVector<f64> {
        let m = self.eta_tilde.len();
        let n = self.z_coeffs.len();
        DVector::from_fn(m + n, |i, _| if i < m { self.eta_tilde[i] } else { self.z_coeffs[i - m] })
    }
}

/// Assembled and factorized saddle system, independent of any field data.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    l_z: DMatrix<f64>,
    l_eta: DMatrix<f64>,
    xi: f64,
    saddle: DMatrix<f64>,
    factor: BunchKaufman,
}

impl SaddleSystem {
    pub fn new(l_z: DMatrix<f64>, l_eta: DMatrix<f64>, xi: f64) -> Result<Self> {
        let (m, n) = l_z.shape();
        if l_eta.shape() != (m, m) {
            return Err(PbdwError::Dimension {
                expected: m,
                found: l_eta.nrows(),
            });
        }
        if m == 0 || n == 0 {
            return Err(PbdwError::Argument("saddle system needs M >= 1 and N >= 1".into()));
        }
        if !(xi >= 0.0) || !xi.is_finite() {
            return Err(PbdwError::Argument(format!("xi must be >= 0, got {xi}")));
        }
        let s = singular_values(&l_z);
        let sigma_min = if n > m { 0.0 } else { s[n - 1] };
        if !(sigma_min > RANK_TOL * s[0]) {
            return Err(PbdwError::Identifiability { sigma_min });
        }
        let saddle = saddle_matrix(&l_z, &l_eta, xi);
        let factor = BunchKaufman::new(&saddle)?;
        Ok(Self {
            l_z,
            l_eta,
            xi,
            saddle,
            factor,
        })
    }

    pub fn m(&self) -> usize {
        self.l_z.nrows()
    }

    pub fn n(&self) -> usize {
        self.l_z.ncols()
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn l_z(&self) -> &DMatrix<f64> {
        &self.l_z
    }

    pub fn l_eta(&self) -> &DMatrix<f64> {
        &self.l_eta
    }

    pub fn saddle(&self) -> &DMatrix<f64> {
        &self.saddle
    }

    /// `A(ξ)⁻¹ b` for a stacked right-hand side.
    pub fn solve_stacked(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.m() + self.n() {
            return Err(PbdwError::Dimension {
                expected: self.m() + self.n(),
                found: b.len(),
            });
        }
        Ok(self.factor.solve(b))
    }

    /// `J_ξ(z, η) = ξ‖η‖² + (1/M)‖L_η η + L_z z − y‖²`.
    pub fn objective(&self, z: &DVector<f64>, eta: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let r = &self.l_eta * eta + &self.l_z * z - y;
        self.xi * eta.norm_squared() + r.norm_squared() / self.m() as f64
    }

    pub fn solve(&self, y: &DVector<f64>) -> Result<Solution> {
        let (m, n) = (self.m(), self.n());
        if y.len() != m {
            return Err(PbdwError::Dimension { expected: m, found: y.len() });
        }
        let rhs = DVector::from_fn(m + n, |i, _| if i < m { y[i] } else { 0.0 });
        let x = self.factor.solve(&rhs);
        let eta_tilde = x.rows(0, m).into_owned();
        let z_coeffs = x.rows(m, n).into_owned();
        let eta_coeffs = self.l_eta.transpose() * &eta_tilde;
        let objective = self.objective(&z_coeffs, &eta_coeffs, y);
        Ok(Solution {
            z_coeffs,
            eta_tilde,
            eta_coeffs,
            objective,
        })
    }

    /// The `ξ = 0` solution, which interpolates the data.
    pub fn solve_constrained(&self, y: &DVector<f64>) -> Result<Solution> {
        if self.xi != 0.0 {
            return Err(PbdwError::Argument(format!(
                "constrained solve requires xi = 0, system has xi = {}",
                self.xi
            )));
        }
        self.solve(y)
    }

    /// Residual norms of the two block normal equations
    /// `(ξM·I + L_ηᵀL_η)η + L_ηᵀL_z z = L_ηᵀy` and `L_zᵀL_η η + L_zᵀL_z z = L_zᵀy`.
    pub fn normal_equation_residuals(&self, sol: &Solution, y: &DVector<f64>) -> (f64, f64) {
        let m = self.m() as f64;
        let fit = &self.l_eta * &sol.eta_coeffs + &self.l_z * &sol.z_coeffs - y;
        let r1 = &sol.eta_coeffs * (self.xi * m) + self.l_eta.transpose() * &fit;
        let r2 = self.l_z.transpose() * &fit;
        (r1.norm(), r2.norm())
    }
}

/// A saddle system tied to concrete background and update bases.
#[derive(Debug, Clone)]
pub struct PbdwSystem {
    algebra: SaddleSystem,
    z_basis: Vec<Field>,
    eta_basis: Vec<Field>,
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub z_coeffs: DVector<f64>,
    pub eta_tilde: DVector<f64>,
    pub eta_coeffs: DVector<f64>,
    /// `u* = Σ z_n ζ_n + Σ η_m ψ_m`.
    pub state: Field,
    pub objective: f64,
}

/// `L_z[m][n] = ℓ_m(ζ_n)`.
pub fn background_observations(fs: &FunctionalSet, background: &BackgroundSpace) -> Result<DMatrix<f64>> {
    let mut l_z = DMatrix::zeros(fs.len(), background.dim());
    for (n, zeta) in background.basis.iter().enumerate() {
        l_z.set_column(n, &fs.apply(zeta)?);
    }
    Ok(l_z)
}

impl PbdwSystem {
    pub fn assemble(
        background: &BackgroundSpace,
        us: &UpdateSpace,
        fs: &FunctionalSet,
        xi: f64,
    ) -> Result<Self> {
        if us.dim() != fs.len() {
            return Err(PbdwError::Dimension {
                expected: us.dim(),
                found: fs.len(),
            });
        }
        if background.basis.iter().chain(us.basis()).any(|f| f.space_id() != fs.space_id()) {
            return Err(PbdwError::SpaceMismatch);
        }
        let l_z = background_observations(fs, background)?;
        let algebra = SaddleSystem::new(l_z, us.l_eta().clone(), xi)?;
        Ok(Self {
            algebra,
            z_basis: background.basis.clone(),
            eta_basis: us.basis().to_vec(),
        })
    }

    pub fn algebra(&self) -> &SaddleSystem {
        &self.algebra
    }

    /// `Σ z_n ζ_n + Σ η_m ψ_m`.
    pub fn state(&self, z: &DVector<f64>, eta: &DVector<f64>) -> Field {
        let mut u = self.z_basis[0].scaled(z[0]);
        for (f, c) in self.z_basis.iter().zip(z.iter()).skip(1) {
            u.axpy(*c, f);
        }
        for (f, c) in self.eta_basis.iter().zip(eta.iter()) {
            u.axpy(*c, f);
        }
        u
    }

    fn estimate(&self, sol: Solution) -> Estimate {
        let state = self.state(&sol.z_coeffs, &sol.eta_coeffs);
        Estimate {
            z_coeffs: sol.z_coeffs,
            eta_tilde: sol.eta_tilde,
            eta_coeffs: sol.eta_coeffs,
            state,
            objective: sol.objective,
        }
    }

    pub fn solve(&self, y: &DVector<f64>) -> Result<Estimate> {
        Ok(self.estimate(self.algebra.solve(y)?))
    }

    pub fn solve_constrained(&self, y: &DVector<f64>) -> Result<Estimate> {
        Ok(self.estimate(self.algebra.solve_constrained(y)?))
    }
}

/// The inf-sup constant and its minimizer.
#[derive(Debug, Clone)]
pub struct InfSup {
    pub beta: f64,
    /// Background coefficients of the worst-observed direction, with
    /// `z_minᵀ B z_min = 1`.
    pub z_min: DVector<f64>,
}

/// `β` from the pencil `(L_zᵀ W L_z, B)` with
/// `B = I + 2 L_zᵀ W L_z − 2 sym(Cᵀ L_η⁻¹ L_z)`, `C[m][n] = (ψ_m, ζ_n)`.
///
/// Rank-deficient `L_z` (for instance `M < N`) yields `β = 0`.
pub fn inf_sup_algebraic(us: &UpdateSpace, l_z: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<InfSup> {
    let (m, n) = l_z.shape();
    if m != us.dim() || c.shape() != (m, n) {
        return Err(PbdwError::Dimension {
            expected: us.dim(),
            found: m,
        });
    }
    let mut linv_lz = DMatrix::zeros(m, n);
    for j in 0..n {
        linv_lz.set_column(j, &us.solve_l_eta(&l_z.column(j).into_owned()));
    }
    let a = symmetrize(&(linv_lz.transpose() * &linv_lz));
    let cross = c.transpose() * &linv_lz;
    let b = DMatrix::identity(n, n) + &a * 2.0 - symmetrize(&cross) * 2.0;
    let eig = sym_generalized_eigen(&a, &b, 1e-10)?;
    let lambda = eig.values[0].max(0.0);
    Ok(InfSup {
        beta: lambda.sqrt(),
        z_min: eig.vectors.column(0).into_owned(),
    })
}

/// `C[m][n] = (ψ_m, ζ_n)` in H¹.
pub fn cross_gram(space: &DiscreteSpace, us: &UpdateSpace, background: &BackgroundSpace) -> Result<DMatrix<f64>> {
    let mut c = DMatrix::zeros(us.dim(), background.dim());
    for (n, zeta) in background.basis.iter().enumerate() {
        let g = space.gram_apply(zeta.values(), Norm::H1);
        for (k, psi) in us.basis().iter().enumerate() {
            space.check(psi)?;
            c[(k, n)] = psi.values().dot(&g);
        }
    }
    Ok(c)
}

pub fn inf_sup(
    space: &DiscreteSpace,
    background: &BackgroundSpace,
    us: &UpdateSpace,
    fs: &FunctionalSet,
) -> Result<InfSup> {
    let l_z = background_observations(fs, background)?;
    let c = cross_gram(space, us, background)?;
    inf_sup_algebraic(us, &l_z, &c)
}
