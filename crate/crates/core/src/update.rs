//! Update spaces `U_M`, the interpolation operator `I_M` and the inner
//! product `((·,·))` induced by a user-chosen update space.
//!
//! For an `M`-dimensional update space with H¹-orthonormal basis `ψ_k` and
//! observation functionals `ℓ_m`, `L_η[m][k] = ℓ_m(ψ_k)` must be invertible
//! (unisolvency). Then `I_M u = Σ_k (L_η⁻¹ ℓ(u))_k ψ_k` and
//!
//! ```text
//! ((u, v)) = (u - I_M u, v - I_M v) + (I_M u, I_M v)
//!          = (u - I_M u, v - I_M v) + ℓ(u)ᵀ W ℓ(v),   W = L_η⁻ᵀ L_η⁻¹.
//! ```

use nalgebra::{DMatrix, DVector, Dyn, SymmetricEigen, LU};

use crate::error::{PbdwError, Result};
use crate::hilbert::{distance, DiscreteSpace, Field, Norm, Point};
use crate::linalg::{condition_number, symmetrize};
use crate::observation::FunctionalSet;

/// Largest admissible condition number of `L_η`.
pub const MAX_COND_L_ETA: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Generator {
    /// Riesz representers of Gaussian functionals of width `support_width`.
    VariationalRiesz { support_width: f64 },
    /// `1/(1 + r²)^exponent` evaluated at `r = scale·|x - x_m|`.
    InverseMultiquadric { scale: f64, exponent: u32 },
    /// Wendland-type `(1 - r)₊⁴ (4r + 1)` at `r = scale·|x - x_m|`.
    CsRbf { scale: f64 },
}

impl Generator {
    pub fn inverse_multiquadric() -> Self {
        Generator::InverseMultiquadric {
            scale: 1.0,
            exponent: 2,
        }
    }

    pub fn cs_rbf() -> Self {
        Generator::CsRbf { scale: 2.0 }
    }

    pub fn variational(support_width: f64) -> Self {
        Generator::VariationalRiesz { support_width }
    }

    pub fn is_variational(&self) -> bool {
        matches!(self, Generator::VariationalRiesz { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Generator::VariationalRiesz { support_width } if !(support_width > 0.0) => Err(
                PbdwError::Argument(format!("support width must be positive, got {support_width}")),
            ),
            Generator::InverseMultiquadric { scale, .. } | Generator::CsRbf { scale } if !(scale > 0.0) => {
                Err(PbdwError::Argument(format!("kernel scale must be positive, got {scale}")))
            }
            Generator::InverseMultiquadric { exponent, .. } if !(1..=2).contains(&exponent) => Err(
                PbdwError::Argument(format!("inverse multiquadric exponent must be 1 or 2, got {exponent}")),
            ),
            _ => Ok(()),
        }
    }

    /// Radial profile `Φ(r)` of a kernel generator (scale not applied).
    pub fn kernel_eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(PbdwError::Argument(format!("kernel radius must be >= 0, got {r}")));
        }
        match *self {
            Generator::InverseMultiquadric { exponent, .. } => Ok(1.0 / (1.0 + r * r).powi(exponent as i32)),
            Generator::CsRbf { .. } => {
                let t = (1.0 - r).max(0.0);
                Ok(t.powi(4) * (4.0 * r + 1.0))
            }
            Generator::VariationalRiesz { .. } => Err(PbdwError::Kind(
                "the variational generator has no radial kernel".into(),
            )),
        }
    }

    fn scale(&self) -> f64 {
        match *self {
            Generator::InverseMultiquadric { scale, .. } | Generator::CsRbf { scale } => scale,
            Generator::VariationalRiesz { .. } => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UpdateSpace {
    generator: Generator,
    raw_basis: Vec<Field>,
    basis: Vec<Field>,
    l_eta: DMatrix<f64>,
    l_eta_lu: LU<f64, Dyn, Dyn>,
    centers: Vec<Point>,
    cond_l_eta: f64,
}

impl UpdateSpace {
    pub fn build(space: &DiscreteSpace, fs: &FunctionalSet, generator: Generator) -> Result<Self> {
        generator.validate()?;
        if fs.is_empty() {
            return Err(PbdwError::Argument("update space needs at least one functional".into()));
        }
        if fs.space_id() != space.id() {
            return Err(PbdwError::SpaceMismatch);
        }
        let raw_basis: Vec<Field> = match generator {
            Generator::VariationalRiesz { support_width } => {
                if support_width < fs.filter_width() {
                    return Err(PbdwError::Argument(format!(
                        "support width {support_width} is below the filter width {}",
                        fs.filter_width()
                    )));
                }
                let rows = if support_width == fs.filter_width() {
                    fs.clone()
                } else {
                    FunctionalSet::build(space, fs.centers(), support_width)?
                };
                (0..rows.len())
                    .map(|m| space.riesz_representer(&rows.row(m)))
                    .collect::<Result<_>>()?
            }
            _ => {
                let scale = generator.scale();
                fs.centers()
                    .iter()
                    .map(|c| {
                        space.sample(|x| {
                            generator
                                .kernel_eval(scale * distance(x, c))
                                .expect("kernel generator")
                        })
                    })
                    .collect()
            }
        };
        let basis = space.orthonormalize(&raw_basis, Norm::H1)?;
        let m = basis.len();
        let mut l_eta = DMatrix::zeros(m, m);
        for (k, psi) in basis.iter().enumerate() {
            l_eta.set_column(k, &fs.apply(psi)?);
        }
        let cond_l_eta = condition_number(&l_eta);
        if !(cond_l_eta <= MAX_COND_L_ETA) {
            return Err(PbdwError::Unisolvency { cond: cond_l_eta });
        }
        let l_eta_lu = l_eta.clone().lu();
        Ok(Self {
            generator,
            raw_basis,
            basis,
            l_eta,
            l_eta_lu,
            centers: fs.centers().to_vec(),
            cond_l_eta,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn generator(&self) -> Generator {
        self.generator
    }

    pub fn raw_basis(&self) -> &[Field] {
        &self.raw_basis
    }

    /// H¹-orthonormal basis `ψ_1..ψ_M`.
    pub fn basis(&self) -> &[Field] {
        &self.basis
    }

    pub fn l_eta(&self) -> &DMatrix<f64> {
        &self.l_eta
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn cond_l_eta(&self) -> f64 {
        self.cond_l_eta
    }

    fn check_fs(&self, fs: &FunctionalSet) -> Result<()> {
        if fs.len() != self.dim() {
            return Err(PbdwError::Dimension {
                expected: self.dim(),
                found: fs.len(),
            });
        }
        Ok(())
    }

    /// `L_η⁻¹ b`.
    pub fn solve_l_eta(&self, b: &DVector<f64>) -> DVector<f64> {
        self.l_eta_lu.solve(b).expect("L_eta invertible by construction")
    }

    /// `L_η⁻ᵀ b`.
    pub fn solve_l_eta_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        self.l_eta
            .transpose()
            .lu()
            .solve(b)
            .expect("L_eta invertible by construction")
    }

    /// `W = L_η⁻ᵀ L_η⁻¹`.
    pub fn w_matrix(&self) -> DMatrix<f64> {
        let inv = self.l_eta_lu.try_inverse().expect("L_eta invertible by construction");
        symmetrize(&(inv.transpose() * inv))
    }

    /// Coefficients of `I_M u` in the orthonormal basis.
    pub fn interpolation_coeffs(&self, fs: &FunctionalSet, u: &Field) -> Result<DVector<f64>> {
        self.check_fs(fs)?;
        Ok(self.solve_l_eta(&fs.apply(u)?))
    }

    pub fn interpolate(&self, space: &DiscreteSpace, fs: &FunctionalSet, u: &Field) -> Result<Field> {
        let c = self.interpolation_coeffs(fs, u)?;
        Ok(space.combine(&self.basis, &c))
    }

    /// `((u, v))` from its definition with interpolated fields.
    pub fn modified_inner(&self, space: &DiscreteSpace, fs: &FunctionalSet, u: &Field, v: &Field) -> Result<f64> {
        let iu = self.interpolate(space, fs, u)?;
        let iv = self.interpolate(space, fs, v)?;
        Ok(space.inner(&(u - &iu), &(v - &iv), Norm::H1)? + space.inner(&iu, &iv, Norm::H1)?)
    }

    /// `((u, v))` through the weight matrix `W` acting on the observations.
    pub fn modified_inner_algebraic(
        &self,
        space: &DiscreteSpace,
        fs: &FunctionalSet,
        u: &Field,
        v: &Field,
    ) -> Result<f64> {
        let iu = self.interpolate(space, fs, u)?;
        let iv = self.interpolate(space, fs, v)?;
        let lu = fs.apply(u)?;
        let lv = fs.apply(v)?;
        let w = self.w_matrix();
        Ok(space.inner(&(u - &iu), &(v - &iv), Norm::H1)? + lu.dot(&(&w * lv)))
    }

    /// Gram matrix `K[m][m'] = (R ℓ_m, R ℓ_m')` of the Riesz representers of
    /// the functionals.
    pub fn riesz_gram(space: &DiscreteSpace, fs: &FunctionalSet) -> Result<DMatrix<f64>> {
        let reps: Vec<Field> = (0..fs.len())
            .map(|m| space.riesz_representer(&fs.row(m)))
            .collect::<Result<_>>()?;
        let m = reps.len();
        let mut k = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let g = space.inner(&reps[i], &reps[j], Norm::H1)?;
                k[(i, j)] = g;
                k[(j, i)] = g;
            }
        }
        Ok(k)
    }

    /// Operator norm of `I_M` in H¹: `1/√λ_min(L_ηᵀ K⁻¹ L_η)`.
    pub fn lebesgue_constant(&self, space: &DiscreteSpace, fs: &FunctionalSet) -> Result<f64> {
        self.check_fs(fs)?;
        let k = Self::riesz_gram(space, fs)?;
        let chol = nalgebra::Cholesky::new(k).ok_or_else(|| {
            PbdwError::Stability("Gram matrix of the functional representers is numerically singular".into())
        })?;
        let x = chol
            .l()
            .solve_lower_triangular(&self.l_eta)
            .expect("Cholesky factor is nonsingular");
        let s = symmetrize(&(x.transpose() * x));
        let lambda_min = SymmetricEigen::new(s).eigenvalues.min();
        if !(lambda_min > 0.0) {
            return Err(PbdwError::Stability(format!(
                "interpolation operator unbounded (lambda_min = {lambda_min:.3e})"
            )));
        }
        Ok(1.0 / lambda_min.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(centers: &[Point], r_w: f64) -> (DiscreteSpace, FunctionalSet) {
        let s = DiscreteSpace::unit(&[17, 17]).unwrap();
        let fs = FunctionalSet::build(&s, centers, r_w).unwrap();
        (s, fs)
    }

    fn random_field(space: &DiscreteSpace, rng: &mut ChaCha8Rng) -> Field {
        space
            .field(DVector::from_fn(space.node_count(), |_, _| rng.random_range(-1.0..1.0)))
            .unwrap()
    }

    const CENTERS: [Point; 5] = [[0.1, 0.2], [0.8, 0.3], [0.5, 0.5], [0.25, 0.9], [0.9, 0.85]];

    fn all_generators() -> Vec<Generator> {
        vec![
            Generator::variational(0.05),
            Generator::inverse_multiquadric(),
            Generator::InverseMultiquadric {
                scale: 1.0,
                exponent: 1,
            },
            Generator::cs_rbf(),
        ]
    }

    #[test]
    fn kernel_values() {
        let cs = Generator::cs_rbf();
        assert_eq!(cs.kernel_eval(0.0).unwrap(), 1.0);
        assert_eq!(cs.kernel_eval(1.0).unwrap(), 0.0);
        assert!((cs.kernel_eval(0.5).unwrap() - 0.1875).abs() < 1e-15);
        assert_eq!(cs.kernel_eval(1.7).unwrap(), 0.0);
        assert!((Generator::inverse_multiquadric().kernel_eval(1.0).unwrap() - 0.25).abs() < 1e-15);
        let imq1 = Generator::InverseMultiquadric {
            scale: 1.0,
            exponent: 1,
        };
        assert!((imq1.kernel_eval(1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            Generator::variational(0.1).kernel_eval(0.3),
            Err(PbdwError::Kind(_))
        ));
    }

    #[test]
    fn single_center_gives_nonzero_l_eta() {
        let (s, fs) = setup(&[[0.4, 0.6]], 0.05);
        for g in all_generators() {
            let us = UpdateSpace::build(&s, &fs, g).unwrap();
            assert_eq!(us.l_eta().shape(), (1, 1));
            assert!(us.l_eta()[(0, 0)].abs() > 0.0);
        }
    }

    #[test]
    fn variational_raw_basis_is_riesz_of_rows() {
        let (s, fs) = setup(&CENTERS, 0.05);
        let us = UpdateSpace::build(&s, &fs, Generator::variational(0.05)).unwrap();
        for m in 0..fs.len() {
            let r = s.riesz_representer(&fs.row(m)).unwrap();
            assert_eq!(us.raw_basis()[m], r);
        }
    }

    #[test]
    fn duplicate_centers_are_rank_errors() {
        let (s, fs) = setup(&[[0.3, 0.3], [0.7, 0.2], [0.3, 0.3]], 0.05);
        for g in all_generators() {
            let err = UpdateSpace::build(&s, &fs, g).unwrap_err();
            assert_eq!(err, PbdwError::RankDeficient { index: 3 }, "{g:?}");
        }
    }

    #[test]
    fn support_width_below_filter_width_rejected() {
        let (s, fs) = setup(&CENTERS, 0.05);
        assert!(UpdateSpace::build(&s, &fs, Generator::variational(0.01)).is_err());
    }

    #[test]
    fn interpolation_fixes_update_space_and_reproduces_data() {
        let (s, fs) = setup(&CENTERS, 0.04);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for g in all_generators() {
            let us = UpdateSpace::build(&s, &fs, g).unwrap();
            let c = DVector::from_fn(us.dim(), |_, _| rng.random_range(-1.0..1.0));
            let q = s.combine(us.basis(), &c);
            let iq = us.interpolate(&s, &fs, &q).unwrap();
            assert!((iq.values() - q.values()).amax() <= 1e-9 * q.values().amax());
            let u = random_field(&s, &mut rng);
            let iu = us.interpolate(&s, &fs, &u).unwrap();
            let (lu, liu) = (fs.apply(&u).unwrap(), fs.apply(&iu).unwrap());
            assert!((lu.clone() - liu).amax() <= 1e-9 * lu.amax());
            assert_eq!(us.interpolate(&s, &fs, &s.zeros()).unwrap().values().amax(), 0.0);
        }
    }

    #[test]
    fn one_by_one_interpolation_by_hand() {
        // M = 1: I u = (l(u) / l(psi)) psi, e.g. l(psi) = 2, l(u) = 4 gives 2 psi
        let (s, fs) = setup(&[[0.5, 0.5]], 0.05);
        let us = UpdateSpace::build(&s, &fs, Generator::cs_rbf()).unwrap();
        let psi = &us.basis()[0];
        let lpsi = us.l_eta()[(0, 0)];
        let u = s.sample(|p| 1.0 + p[0] * p[1]);
        let u = u.scaled(2.0 * lpsi / fs.apply(&u).unwrap()[0]);
        let iu = us.interpolate(&s, &fs, &u).unwrap();
        let expected = psi.scaled(2.0);
        assert!((iu.values() - expected.values()).amax() < 1e-12);
    }

    #[test]
    fn modified_inner_routes_agree_and_lemma_identities_hold() {
        let (s, fs) = setup(&CENTERS, 0.04);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut generators = all_generators();
        generators.push(Generator::variational(fs.filter_width()));
        for g in generators {
            let us = UpdateSpace::build(&s, &fs, g).unwrap();
            for _ in 0..5 {
                let u = random_field(&s, &mut rng);
                let v = random_field(&s, &mut rng);
                let scale = s.norm(&u, Norm::H1).unwrap() * s.norm(&v, Norm::H1).unwrap();
                let a = us.modified_inner(&s, &fs, &u, &v).unwrap();
                let b = us.modified_inner_algebraic(&s, &fs, &u, &v).unwrap();
                assert!((a - b).abs() <= 1e-9 * scale);
                // ((phi_m, v)) = l_m(v) with phi_m = Σ_p L[m][p] psi_p
                let lv = fs.apply(&v).unwrap();
                for m in 0..us.dim() {
                    let phi = s.combine(us.basis(), &us.l_eta().row(m).transpose());
                    let lhs = us.modified_inner(&s, &fs, &phi, &v).unwrap();
                    assert!((lhs - lv[m]).abs() <= 1e-9 * scale.max(1.0));
                }
                if g == Generator::variational(fs.filter_width()) {
                    let h1 = s.inner(&u, &v, Norm::H1).unwrap();
                    assert!((a - h1).abs() <= 1e-9 * scale);
                }
            }
        }
    }

    #[test]
    fn interpolant_is_modified_projection_and_norms_are_equivalent() {
        let (s, fs) = setup(&CENTERS, 0.04);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for g in all_generators() {
            let us = UpdateSpace::build(&s, &fs, g).unwrap();
            let lc = us.lebesgue_constant(&s, &fs).unwrap();
            for _ in 0..20 {
                let u = random_field(&s, &mut rng);
                let nu = s.norm(&u, Norm::H1).unwrap();
                let r = &u - &us.interpolate(&s, &fs, &u).unwrap();
                for q in us.basis() {
                    assert!(us.modified_inner(&s, &fs, &r, q).unwrap().abs() <= 1e-9 * nu);
                }
                let triple = us.modified_inner(&s, &fs, &u, &u).unwrap();
                assert!(0.5 * nu * nu <= triple * (1.0 + 1e-12));
                assert!(triple <= (2.0 + 3.0 * lc * lc) * nu * nu * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn lebesgue_constant_variational_is_one() {
        let (s, fs) = setup(&CENTERS, 0.05);
        let us = UpdateSpace::build(&s, &fs, Generator::variational(0.05)).unwrap();
        let lc = us.lebesgue_constant(&s, &fs).unwrap();
        assert!((lc - 1.0).abs() < 1e-8, "{lc}");
        for g in all_generators() {
            let us = UpdateSpace::build(&s, &fs, g).unwrap();
            assert!(us.lebesgue_constant(&s, &fs).unwrap() >= 1.0 - 1e-10);
        }
    }

    #[test]
    fn lebesgue_constant_bounds_sampled_ratio() {
        let (s, fs) = setup(&[[0.45, 0.55]], 0.05);
        let us = UpdateSpace::build(&s, &fs, Generator::inverse_multiquadric()).unwrap();
        let lc = us.lebesgue_constant(&s, &fs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut sampled: f64 = 0.0;
        for _ in 0..50 {
            let u = random_field(&s, &mut rng);
            let iu = us.interpolate(&s, &fs, &u).unwrap();
            sampled = sampled.max(s.norm(&iu, Norm::H1).unwrap() / s.norm(&u, Norm::H1).unwrap());
        }
        assert!(sampled <= lc * (1.0 + 1e-12));
        // the maximizer is the Riesz representer of the functional
        let r = s.riesz_representer(&fs.row(0)).unwrap();
        let ir = us.interpolate(&s, &fs, &r).unwrap();
        let ratio = s.norm(&ir, Norm::H1).unwrap() / s.norm(&r, Norm::H1).unwrap();
        assert!((ratio - lc).abs() < 1e-9 * lc);
    }
}
