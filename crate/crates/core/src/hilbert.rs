//! Discrete surrogate of the ambient Hilbert space on `[0,1]^d`, `d ∈ {1, 2}`.
//!
//! Nodes form a uniform tensor grid. The L² Gram matrix is the diagonal
//! trapezoid rule; the H¹ seminorm Gram is assembled from difference
//! quotients between neighbouring nodes (the three-point central stencil in
//! the interior, one-sided half cells on the boundary), weighted by the
//! trapezoid rule along the transverse axis.

use std::ops::{Add, Mul, Sub};
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DVector;

use crate::error::{PbdwError, Result};
use crate::linalg::{BandedCholesky, SymBanded};

/// A point of `[0,1]^d`. One-dimensional spaces use the first coordinate
/// and require the second to be zero.
pub type Point = [f64; 2];

pub fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpaceId(u64);

static NEXT_SPACE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L2,
    H1,
}

#[derive(Debug, Clone)]
pub struct DiscreteSpace {
    id: SpaceId,
    dim_spatial: usize,
    grid_shape: Vec<usize>,
    nodes: Vec<Point>,
    mass: DVector<f64>,
    stiffness: SymBanded,
    gram_h1: SymBanded,
    gram_h1_chol: BandedCholesky,
    // 1D factors for the stencil form of the H¹ Gram apply
    wx: Vec<f64>,
    kx: Tridiag,
    wy: Vec<f64>,
    ky: Tridiag,
}

impl DiscreteSpace {
    /// Uniform grid on the unit interval or square. Every axis needs at
    /// least two nodes.
    pub fn unit(grid_shape: &[usize]) -> Result<Self> {
        let d = grid_shape.len();
        if !(1..=2).contains(&d) {
            return Err(PbdwError::Argument(format!(
                "spatial dimension must be 1 or 2, got {d}"
            )));
        }
        if let Some(&n) = grid_shape.iter().find(|&&n| n < 2) {
            return Err(PbdwError::Argument(format!(
                "each grid axis needs at least 2 nodes, got {n}"
            )));
        }
        let nx = grid_shape[0];
        let ny = if d == 2 { grid_shape[1] } else { 1 };
        let (wx, kx) = axis_operators(nx);
        let (wy, ky) = if d == 2 {
            axis_operators(ny)
        } else {
            (vec![1.0], Tridiag::zero(1))
        };
        let n = nx * ny;
        let idx = |i: usize, j: usize| i + nx * j;

        let mut nodes = Vec::with_capacity(n);
        let mut mass = DVector::zeros(n);
        for j in 0..ny {
            for i in 0..nx {
                let x = i as f64 / (nx - 1) as f64;
                let y = if d == 2 { j as f64 / (ny - 1) as f64 } else { 0.0 };
                nodes.push([x, y]);
                mass[idx(i, j)] = wx[i] * wy[j];
            }
        }

        let bandwidth = if d == 2 { nx } else { 1 };
        let mut stiffness = SymBanded::zeros(n, bandwidth);
        #[allow(clippy::needless_range_loop)]
        for j in 0..ny {
            for i in 0..nx {
                let p = idx(i, j);
                // x-direction: K_x ⊗ M_y
                stiffness.add(p, p, kx.diag[i] * wy[j]);
                if i + 1 < nx {
                    stiffness.add(idx(i + 1, j), p, kx.off[i] * wy[j]);
                }
                // y-direction: M_x ⊗ K_y
                if d == 2 {
                    stiffness.add(p, p, wx[i] * ky.diag[j]);
                    if j + 1 < ny {
                        stiffness.add(idx(i, j + 1), p, wx[i] * ky.off[j]);
                    }
                }
            }
        }
        let mut gram_h1 = stiffness.clone();
        gram_h1.add_diagonal(&mass);
        let gram_h1_chol = gram_h1.cholesky()?;

        Ok(Self {
            id: SpaceId(NEXT_SPACE_ID.fetch_add(1, Ordering::Relaxed)),
            dim_spatial: d,
            grid_shape: grid_shape.to_vec(),
            nodes,
            mass,
            stiffness,
            gram_h1,
            gram_h1_chol,
            wx,
            kx,
            wy,
            ky,
        })
    }

    pub fn id(&self) -> SpaceId {
        self.id
    }

    pub fn dim_spatial(&self) -> usize {
        self.dim_spatial
    }

    pub fn grid_shape(&self) -> &[usize] {
        &self.grid_shape
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Smallest grid spacing over all axes.
    pub fn min_spacing(&self) -> f64 {
        self.grid_shape
            .iter()
            .map(|&n| 1.0 / (n - 1) as f64)
            .fold(f64::INFINITY, f64::min)
    }

    /// Diagonal of the (lumped) L² Gram matrix.
    pub fn mass(&self) -> &DVector<f64> {
        &self.mass
    }

    pub fn stiffness(&self) -> &SymBanded {
        &self.stiffness
    }

    pub fn gram_h1(&self) -> &SymBanded {
        &self.gram_h1
    }

    pub fn contains(&self, p: &Point) -> bool {
        let inside = |t: f64| (0.0..=1.0).contains(&t);
        inside(p[0]) && if self.dim_spatial == 2 { inside(p[1]) } else { p[1] == 0.0 }
    }

    pub fn check_point(&self, p: &Point) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(PbdwError::Domain(format!(
                "({}, {}) not in the closed unit {}",
                p[0],
                p[1],
                if self.dim_spatial == 2 { "square" } else { "interval" }
            )))
        }
    }

    pub fn zeros(&self) -> Field {
        Field {
            values: DVector::zeros(self.node_count()),
            space: self.id,
        }
    }

    pub fn constant(&self, c: f64) -> Field {
        Field {
            values: DVector::from_element(self.node_count(), c),
            space: self.id,
        }
    }

    /// Samples `f` at the nodes.
    pub fn sample<F: Fn(&Point) -> f64>(&self, f: F) -> Field {
        Field {
            values: DVector::from_iterator(self.node_count(), self.nodes.iter().map(f)),
            space: self.id,
        }
    }

    pub fn field(&self, values: DVector<f64>) -> Result<Field> {
        if values.len() != self.node_count() {
            return Err(PbdwError::Dimension {
                expected: self.node_count(),
                found: values.len(),
            });
        }
        Ok(Field {
            values,
            space: self.id,
        })
    }

    pub fn check(&self, u: &Field) -> Result<()> {
        if u.space != self.id {
            return Err(PbdwError::SpaceMismatch);
        }
        if u.values.len() != self.node_count() {
            return Err(PbdwError::Dimension {
                expected: self.node_count(),
                found: u.values.len(),
            });
        }
        Ok(())
    }

    /// Applies the Gram matrix of `which` to a coefficient vector.
    pub fn gram_apply(&self, v: &DVector<f64>, which: Norm) -> DVector<f64> {
        match which {
            Norm::L2 => self.mass.component_mul(v),
            Norm::H1 => self.h1_apply(v),
        }
    }

    /// `(M_x⊗M_y + K_x⊗M_y + M_x⊗K_y) v` from the 1D factors.
    fn h1_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let nx = self.wx.len();
        let ny = self.wy.len();
        let mut out = DVector::zeros(nx * ny);
        for j in 0..ny {
            let wy = self.wy[j];
            for i in 0..nx {
                let p = i + nx * j;
                let wx = self.wx[i];
                let mut acc = (wx * wy + self.kx.diag[i] * wy + wx * self.ky.diag[j]) * v[p];
                if i > 0 {
                    acc += self.kx.off[i - 1] * wy * v[p - 1];
                }
                if i + 1 < nx {
                    acc += self.kx.off[i] * wy * v[p + 1];
                }
                if j > 0 {
                    acc += wx * self.ky.off[j - 1] * v[p - nx];
                }
                if j + 1 < ny {
                    acc += wx * self.ky.off[j] * v[p + nx];
                }
                out[p] = acc;
            }
        }
        out
    }

    pub fn inner(&self, u: &Field, v: &Field, which: Norm) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(match which {
            Norm::L2 => self
                .mass
                .iter()
                .zip(u.values.iter().zip(v.values.iter()))
                .map(|(m, (a, b))| m * a * b)
                .sum(),
            Norm::H1 => u.values.dot(&self.h1_apply(&v.values)),
        })
    }

    pub fn norm(&self, u: &Field, which: Norm) -> Result<f64> {
        Ok(self.inner(u, u, which)?.max(0.0).sqrt())
    }

    /// Riesz representer in H¹ of the functional `u ↦ weightsᵀu`.
    pub fn riesz_representer(&self, weights: &DVector<f64>) -> Result<Field> {
        if weights.len() != self.node_count() {
            return Err(PbdwError::Dimension {
                expected: self.node_count(),
                found: weights.len(),
            });
        }
        Ok(Field {
            values: self.gram_h1_chol.solve(weights),
            space: self.id,
        })
    }

    /// Modified Gram–Schmidt with one reorthogonalization pass. Fails on the
    /// first candidate whose norm after projection drops below `1e-10` times
    /// its original norm.
    pub fn orthonormalize(&self, basis: &[Field], which: Norm) -> Result<Vec<Field>> {
        let mut out: Vec<Field> = Vec::with_capacity(basis.len());
        // G q for every accepted q, so that each projection is a dot product
        let mut g_out: Vec<DVector<f64>> = Vec::with_capacity(basis.len());
        for (k, b) in basis.iter().enumerate() {
            self.check(b)?;
            let original = b.values.dot(&self.gram_apply(&b.values, which)).max(0.0).sqrt();
            let mut v = b.values.clone();
            for _pass in 0..2 {
                for (q, gq) in out.iter().zip(&g_out) {
                    let c = v.dot(gq);
                    v.axpy(-c, &q.values, 1.0);
                }
            }
            let gv = self.gram_apply(&v, which);
            let nv = v.dot(&gv).max(0.0).sqrt();
            if original == 0.0 || nv < 1e-10 * original {
                return Err(PbdwError::RankDeficient { index: k + 1 });
            }
            v /= nv;
            g_out.push(gv / nv);
            out.push(Field {
                values: v,
                space: self.id,
            });
        }
        Ok(out)
    }

    /// Coefficients of the projection of `u` onto the span of an orthonormal
    /// family.
    pub fn project_coeffs(&self, u: &Field, orthonormal: &[Field], which: Norm) -> Result<DVector<f64>> {
        self.check(u)?;
        let gu = self.gram_apply(&u.values, which);
        let mut c = DVector::zeros(orthonormal.len());
        for (k, q) in orthonormal.iter().enumerate() {
            self.check(q)?;
            c[k] = q.values.dot(&gu);
        }
        Ok(c)
    }

    pub fn project(&self, u: &Field, orthonormal: &[Field], which: Norm) -> Result<Field> {
        let c = self.project_coeffs(u, orthonormal, which)?;
        Ok(self.combine(orthonormal, &c))
    }

    /// `Σ_k coeffs[k] · basis[k]`; the zero field for an empty basis.
    pub fn combine(&self, basis: &[Field], coeffs: &DVector<f64>) -> Field {
        assert_eq!(basis.len(), coeffs.len());
        let mut out = self.zeros();
        for (b, &c) in basis.iter().zip(coeffs.iter()) {
            out.axpy(c, b);
        }
        out
    }

    /// Bilinear interpolation of the nodal values at an arbitrary point.
    pub fn evaluate(&self, u: &Field, p: &Point) -> Result<f64> {
        self.check(u)?;
        self.check_point(p)?;
        let nx = self.grid_shape[0];
        let locate = |t: f64, n: usize| {
            let s = t * (n - 1) as f64;
            let i = (s.floor() as usize).min(n - 2);
            (i, s - i as f64)
        };
        let (i, tx) = locate(p[0], nx);
        if self.dim_spatial == 1 {
            return Ok((1.0 - tx) * u.values[i] + tx * u.values[i + 1]);
        }
        let ny = self.grid_shape[1];
        let (j, ty) = locate(p[1], ny);
        let v = |a: usize, b: usize| u.values[a + nx * b];
        Ok((1.0 - tx) * (1.0 - ty) * v(i, j)
            + tx * (1.0 - ty) * v(i + 1, j)
            + (1.0 - tx) * ty * v(i, j + 1)
            + tx * ty * v(i + 1, j + 1))
    }
}

#[derive(Debug, Clone)]
struct Tridiag {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl Tridiag {
    fn zero(n: usize) -> Self {
        Self {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }
}

/// Trapezoid weights and the 1D stiffness `Σ_cells h·((u_{i+1}-u_i)/h)²`.
fn axis_operators(n: usize) -> (Vec<f64>, Tridiag) {
    let h = 1.0 / (n - 1) as f64;
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    let mut k = Tridiag::zero(n);
    for i in 0..n - 1 {
        k.diag[i] += 1.0 / h;
        k.diag[i + 1] += 1.0 / h;
        k.off[i] = -1.0 / h;
    }
    (w, k)
}

/// Nodal coefficient vector tagged with the space it lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: DVector<f64>,
    space: SpaceId,
}

impl Field {
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn space_id(&self) -> SpaceId {
        self.space
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &Field) {
        assert_eq!(self.space, other.space, "fields from different spaces");
        self.values.axpy(a, &other.values, 1.0);
    }

    pub fn scale_mut(&mut self, a: f64) {
        self.values *= a;
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field {
            values: &self.values * a,
            space: self.space,
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Field {
        Field {
            values: self.values.map(f),
            space: self.space,
        }
    }
}

impl Add for &Field {
    type Output = Field;

    fn add(self, rhs: &Field) -> Field {
        assert_eq!(self.space, rhs.space, "fields from different spaces");
        Field {
            values: &self.values + &rhs.values,
            space: self.space,
        }
    }
}

impl Sub for &Field {
    type Output = Field;

    fn sub(self, rhs: &Field) -> Field {
        assert_eq!(self.space, rhs.space, "fields from different spaces");
        Field {
            values: &self.values - &rhs.values,
            space: self.space,
        }
    }
}

impl Mul<&Field> for f64 {
    type Output = Field;

    fn mul(self, rhs: &Field) -> Field {
        rhs.scaled(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(space: &DiscreteSpace, rng: &mut ChaCha8Rng) -> Field {
        space
            .field(DVector::from_fn(space.node_count(), |_, _| rng.random_range(-1.0..1.0)))
            .unwrap()
    }

    #[test]
    fn stencil_apply_matches_banded_gram() {
        for shape in [vec![7], vec![6, 9]] {
            let s = DiscreteSpace::unit(&shape).unwrap();
            let v = DVector::from_fn(s.node_count(), |i, _| ((i * 37 % 11) as f64).sin());
            let a = s.gram_apply(&v, Norm::H1);
            let b = s.gram_h1().mul_vec(&v);
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn quadrature_exact_on_constants() {
        for shape in [vec![5], vec![257], vec![9, 9], vec![33, 17]] {
            let s = DiscreteSpace::unit(&shape).unwrap();
            let one = s.constant(1.0);
            let v = s.inner(&one, &one, Norm::L2).unwrap();
            assert!((v - 1.0).abs() < 1e-12);
            let k1 = s.stiffness().mul_vec(one.values());
            assert!(k1.amax() <= 1e-12);
        }
    }

    #[test]
    fn sine_squared_integral() {
        let s = DiscreteSpace::unit(&[257]).unwrap();
        let u = s.sample(|p| (PI * p[0]).sin());
        let v = s.inner(&u, &u, Norm::L2).unwrap();
        assert!((v - 0.5).abs() < 1e-4, "{v}");
    }

    #[test]
    fn h1_dominates_l2() {
        let s = DiscreteSpace::unit(&[9, 7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let u = random_field(&s, &mut rng);
            assert!(s.inner(&u, &u, Norm::H1).unwrap() >= s.inner(&u, &u, Norm::L2).unwrap());
        }
    }

    #[test]
    fn h1_seminorm_of_linear_field() {
        // |∇x|² integrates to 1 on the unit square
        let s = DiscreteSpace::unit(&[11, 11]).unwrap();
        let u = s.sample(|p| p[0]);
        let semi = u.values().dot(&s.stiffness().mul_vec(u.values()));
        assert!((semi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_space_is_rejected() {
        let a = DiscreteSpace::unit(&[5]).unwrap();
        let b = DiscreteSpace::unit(&[5]).unwrap();
        let err = a.inner(&a.constant(1.0), &b.constant(1.0), Norm::L2).unwrap_err();
        assert_eq!(err, PbdwError::SpaceMismatch);
    }

    #[test]
    fn riesz_of_forward_map_is_unit_vector() {
        let s = DiscreteSpace::unit(&[6, 5]).unwrap();
        let k = 13;
        let mut e = DVector::zeros(s.node_count());
        e[k] = 1.0;
        let w = s.gram_h1().mul_vec(&e);
        let r = s.riesz_representer(&w).unwrap();
        assert!((r.values() - e).amax() < 1e-12);
    }

    #[test]
    fn riesz_defining_property_and_zero() {
        let s = DiscreteSpace::unit(&[8, 8]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = DVector::from_fn(s.node_count(), |_, _| rng.random_range(-1.0..1.0));
        let r = s.riesz_representer(&w).unwrap();
        for _ in 0..10 {
            let f = random_field(&s, &mut rng);
            let lhs = s.inner(&r, &f, Norm::H1).unwrap();
            assert!((lhs - w.dot(f.values())).abs() <= 1e-10);
        }
        let zero = s.riesz_representer(&DVector::zeros(s.node_count())).unwrap();
        assert_eq!(zero.values().amax(), 0.0);
    }

    #[test]
    fn orthonormalize_dependent_input_fails_at_second_index() {
        let s = DiscreteSpace::unit(&[10]).unwrap();
        let v = s.sample(|p| p[0] + 0.3);
        let err = s.orthonormalize(&[v.clone(), v.scaled(2.0)], Norm::H1).unwrap_err();
        assert_eq!(err, PbdwError::RankDeficient { index: 2 });
    }

    #[test]
    fn orthonormalize_is_idempotent_up_to_sign() {
        let s = DiscreteSpace::unit(&[7, 7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let raw: Vec<Field> = (0..4).map(|_| random_field(&s, &mut rng)).collect();
        for which in [Norm::L2, Norm::H1] {
            let q = s.orthonormalize(&raw, which).unwrap();
            let q2 = s.orthonormalize(&q, which).unwrap();
            for (a, b) in q.iter().zip(&q2) {
                let d = (a.values() - b.values()).amax().min((a.values() + b.values()).amax());
                assert!(d < 1e-12);
            }
        }
    }

    #[test]
    fn orthonormalize_two_random_fields_gives_identity_gram() {
        let s = DiscreteSpace::unit(&[12, 12]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let raw = vec![random_field(&s, &mut rng), random_field(&s, &mut rng)];
        for which in [Norm::L2, Norm::H1] {
            let q = s.orthonormalize(&raw, which).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let g = s.inner(&q[i], &q[j], which).unwrap();
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((g - e).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn evaluate_reproduces_bilinear_fields() {
        let s = DiscreteSpace::unit(&[5, 9]).unwrap();
        let f = |p: &Point| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1];
        let u = s.sample(f);
        for p in [[0.0, 0.0], [1.0, 1.0], [0.33, 0.71], [0.9, 0.05]] {
            assert!((s.evaluate(&u, &p).unwrap() - f(&p)).abs() < 1e-13);
        }
        assert!(s.evaluate(&u, &[1.2, 0.0]).is_err());
    }
}
