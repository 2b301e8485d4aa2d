//! A priori bounds, the noise decomposition of the estimator, holdout
//! selection of `ξ` and relative error metrics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{PbdwError, Result};
use crate::estimator::{background_observations, inf_sup, saddle_matrix, PbdwSystem, SaddleSystem, BETA_TOL};
use crate::hilbert::{DiscreteSpace, Field, Norm};
use crate::linalg::singular_values;
use crate::observation::FunctionalSet;
use crate::reduction::BackgroundSpace;
use crate::update::UpdateSpace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseFreeBound {
    pub bound: f64,
    /// H¹ distance from the truth to `Z_N ⊕ (U_M ∩ Z_N^⊥)`.
    pub best_fit: f64,
    pub beta: f64,
    pub lebesgue: f64,
}

/// `√(4 + 6‖I_M‖²)/β · best_fit`, an upper bound for the H¹ error of the
/// `ξ = 0` estimate from exact data.
pub fn noise_free_bound(
    space: &DiscreteSpace,
    background: &BackgroundSpace,
    us: &UpdateSpace,
    fs: &FunctionalSet,
    u_true: &Field,
) -> Result<NoiseFreeBound> {
    space.check(u_true)?;
    let beta = inf_sup(space, background, us, fs)?.beta;
    if !(beta >= BETA_TOL) {
        return Err(PbdwError::Stability(format!("inf-sup constant {beta:.3e} is below {BETA_TOL:.0e}")));
    }
    let lebesgue = us.lebesgue_constant(space, fs)?;
    let mut generators = background.basis.clone();
    for b in null_space_of_transpose(&background_observations(fs, background)?) {
        generators.push(space.combine(us.basis(), &(us.l_eta().transpose() * b)));
    }
    let basis = space.orthonormalize(&generators, Norm::H1)?;
    let fit = space.project(u_true, &basis, Norm::H1)?;
    let best_fit = space.norm(&(u_true - &fit), Norm::H1)?;
    Ok(NoiseFreeBound {
        bound: (4.0 + 6.0 * lebesgue * lebesgue).sqrt() / beta * best_fit,
        best_fit,
        beta,
        lebesgue,
    })
}

/// Orthonormal basis of `ker(L_zᵀ)` for a full-column-rank `L_z`.
fn null_space_of_transpose(l_z: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let (m, n) = l_z.shape();
    let eig = SymmetricEigen::new(l_z * l_z.transpose());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    order[..m.saturating_sub(n)]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect()
}

/// Bias and mean-square bounds for the coefficients `[η̃; z]` under
/// i.i.d. noise of variance `σ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBudget {
    /// `ξM‖η̃_opt‖ / s_min(A(ξ))`.
    pub bias_bound: f64,
    /// `bias_bound² + trace_term`.
    pub mse_bound: f64,
    pub s_min: f64,
    /// `σ² trace(A⁻¹ Σ A⁻ᵀ)`, `Σ = diag(I_M, 0)`.
    pub trace_term: f64,
}

pub fn error_budget(sys: &SaddleSystem, eta_tilde_opt: &DVector<f64>, sigma: f64) -> Result<ErrorBudget> {
    budget_from_saddle(sys.saddle(), sys.m(), sys.xi(), eta_tilde_opt, sigma)
}

/// The budget for an explicit saddle matrix whose first `m` unknowns carry
/// the noise.
pub fn budget_from_saddle(
    a: &DMatrix<f64>,
    m: usize,
    xi: f64,
    eta_tilde_opt: &DVector<f64>,
    sigma: f64,
) -> Result<ErrorBudget> {
    if eta_tilde_opt.len() != m || a.nrows() < m || !a.is_square() {
        return Err(PbdwError::Dimension {
            expected: m,
            found: eta_tilde_opt.len(),
        });
    }
    if !(sigma >= 0.0) {
        return Err(PbdwError::Argument(format!("sigma must be >= 0, got {sigma}")));
    }
    let s = singular_values(a);
    let s_min = s[s.len() - 1];
    if !(s_min > 0.0) {
        return Err(PbdwError::Factorization("saddle matrix is singular".into()));
    }
    let bias_bound = xi * m as f64 * eta_tilde_opt.norm() / s_min;
    let trace_term = if sigma > 0.0 {
        let lu = a.clone().lu();
        let cols = DMatrix::identity(a.nrows(), m);
        let x = lu
            .solve(&cols)
            .ok_or_else(|| PbdwError::Factorization("saddle matrix is singular".into()))?;
        sigma * sigma * x.norm_squared()
    } else {
        0.0
    };
    Ok(ErrorBudget {
        bias_bound,
        mse_bound: bias_bound * bias_bound + trace_term,
        s_min,
        trace_term,
    })
}

#[derive(Debug, Clone)]
pub struct LinkCheck {
    /// `‖A(ξ)u*_ξ − A(0)u_opt − [ε; 0]‖₂`.
    pub residual: f64,
    /// Stacked `[η̃; z]` solved at `ξ` from the perturbed data.
    pub u_xi: DVector<f64>,
}

/// Solves the system at `ξ` with the data `y_opt + ε` implied by the clean
/// `ξ = 0` solution `u_opt = [η̃_opt; z_opt]` and checks the linking identity.
pub fn verify_link_identity(sys: &SaddleSystem, u_opt: &DVector<f64>, noise: &DVector<f64>) -> Result<LinkCheck> {
    let (m, n) = (sys.m(), sys.n());
    if u_opt.len() != m + n || noise.len() != m {
        return Err(PbdwError::Dimension {
            expected: m + n,
            found: u_opt.len(),
        });
    }
    let a0 = saddle_matrix(sys.l_z(), sys.l_eta(), 0.0);
    let mut rhs = &a0 * u_opt;
    for i in 0..m {
        rhs[i] += noise[i];
    }
    let y = rhs.rows(0, m).into_owned();
    let u_xi = sys.solve(&y)?.stacked();
    let residual = (sys.saddle() * &u_xi - rhs).norm();
    Ok(LinkCheck { residual, u_xi })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub xi_grid: Vec<f64>,
    /// `(1/I) Σ (y_i − ℓ_i(u*_ξ))²` on the validation set, per grid value.
    pub mse_hat: Vec<f64>,
    pub xi_star: f64,
}

/// `n` values spaced evenly in `log10` over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

/// 16 values from `1e-8` to `1e2`.
pub fn default_xi_grid() -> Vec<f64> {
    log_grid(1e-8, 1e2, 16)
}

/// Index of the smallest value; values within `tie_tol` of the minimum are
/// ties and go to the smallest key.
pub fn argmin_by_key(values: &[f64], keys: &[f64], tie_tol: f64) -> Option<usize> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    (0..values.len())
        .filter(|&i| values[i] <= min + tie_tol)
        .min_by(|&i, &j| keys[i].total_cmp(&keys[j]))
}

/// Relative size, against the mean square of the validation data, below
/// which two holdout scores are indistinguishable.
pub const MSE_TIE_REL: f64 = 1e-12;

/// Holdout selection of `ξ`: fit on the training functionals, score on the
/// validation functionals.
pub fn holdout_select_xi(
    train: (&FunctionalSet, &DVector<f64>),
    val: (&FunctionalSet, &DVector<f64>),
    background: &BackgroundSpace,
    us: &UpdateSpace,
    xi_grid: &[f64],
) -> Result<ValidationReport> {
    if xi_grid.is_empty() {
        return Err(PbdwError::Argument("xi grid is empty".into()));
    }
    let (fs, y) = train;
    let (fs_val, y_val) = val;
    if fs_val.len() != y_val.len() {
        return Err(PbdwError::Dimension {
            expected: fs_val.len(),
            found: y_val.len(),
        });
    }
    if fs_val.is_empty() {
        return Err(PbdwError::Argument("validation set is empty".into()));
    }
    if fs_val.centers().iter().any(|c| fs.centers().contains(c)) {
        return Err(PbdwError::Argument("training and validation centers overlap".into()));
    }
    let mut mse_hat = Vec::with_capacity(xi_grid.len());
    for &xi in xi_grid {
        let est = PbdwSystem::assemble(background, us, fs, xi)?.solve(y)?;
        let r = fs_val.apply(&est.state)? - y_val;
        mse_hat.push(r.norm_squared() / y_val.len() as f64);
    }
    let tie_tol = MSE_TIE_REL * y_val.norm_squared() / y_val.len() as f64;
    let best = argmin_by_key(&mse_hat, xi_grid, tie_tol).expect("grid nonempty");
    Ok(ValidationReport {
        xi_grid: xi_grid.to_vec(),
        xi_star: xi_grid[best],
        mse_hat,
    })
}

/// `‖u_true − u_est‖ / ‖u_true‖`.
pub fn relative_error(space: &DiscreteSpace, u_true: &Field, u_est: &Field, which: Norm) -> Result<f64> {
    let denom = space.norm(u_true, which)?;
    if !(denom > 0.0) {
        return Err(PbdwError::Argument("reference field has zero norm".into()));
    }
    Ok(space.norm(&(u_true - u_est), which)? / denom)
}
