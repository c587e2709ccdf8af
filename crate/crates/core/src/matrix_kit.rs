//! Dense symmetric linear algebra and the vec/vech calculus.
//!
//! Everything here is a pure function of its inputs. Tolerances are relative
//! to the spectral norm of the matrix at hand so callers can work at any
//! scale.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative floor under which an eigenvalue counts as zero.
pub const EIGEN_FLOOR: f64 = 1e-12;
/// Relative tolerance for accepting slightly negative eigenvalues as PSD.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// A real symmetric matrix, symmetrized on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Symmetrizes `m` as `(m + m') / 2`.
    ///
    /// Panics if `m` is not square.
    pub fn new(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "symmetric matrix must be square");
        let t = m.transpose();
        Self((m + t) * 0.5)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Eigenvalues in descending order with matching eigenvector columns.
    pub fn eigen(&self) -> (DVector<f64>, DMatrix<f64>) {
        symmetric_eigen_desc(&self.0)
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        let (vals, _) = self.eigen();
        vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let (vals, _) = self.eigen();
        vals.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn power(&self, e: Exponent) -> Result<SymmetricMatrix> {
        sym_power(self, e)
    }

    /// Inverse via the eigendecomposition.
    pub fn inverse(&self) -> Result<SymmetricMatrix> {
        sym_power(self, Exponent::NegOne)
    }

    /// log-determinant of a positive definite matrix.
    pub fn log_det(&self) -> Result<f64> {
        let (vals, _) = self.eigen();
        let norm = vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let floor = EIGEN_FLOOR * norm;
        let mut acc = 0.0;
        for &v in vals.iter() {
            if v <= floor || v <= 0.0 {
                return Err(Error::Singular { eigenvalue: v });
            }
            acc += v.ln();
        }
        Ok(acc)
    }
}

impl From<SymmetricMatrix> for DMatrix<f64> {
    fn from(s: SymmetricMatrix) -> Self {
        s.0
    }
}

/// Supported matrix powers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exponent {
    Half,
    NegHalf,
    NegOne,
}

impl Exponent {
    fn value(self) -> f64 {
        match self {
            Exponent::Half => 0.5,
            Exponent::NegHalf => -0.5,
            Exponent::NegOne => -1.0,
        }
    }
}

/// `V diag(λ^e) V'` from the symmetric eigendecomposition of `m`.
///
/// Eigenvalues below `1e-12 * ‖m‖₂` are clamped to that floor for the square
/// root and rejected for negative powers.
pub fn sym_power(m: &SymmetricMatrix, e: Exponent) -> Result<SymmetricMatrix> {
    let (vals, vecs) = m.eigen();
    let norm = vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE * norm {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let floor = EIGEN_FLOOR * norm;
    let mut powered = DVector::zeros(vals.len());
    for (i, &v) in vals.iter().enumerate() {
        powered[i] = match e {
            Exponent::Half => v.max(floor).sqrt(),
            _ => {
                if v <= floor || v <= 0.0 {
                    return Err(Error::Singular { eigenvalue: v });
                }
                v.powf(e.value())
            }
        };
    }
    let scaled = &vecs * DMatrix::from_diagonal(&powered);
    Ok(SymmetricMatrix::new(scaled * vecs.transpose()))
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order.
pub fn symmetric_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vecs.set_column(j, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Thin SVD `m = U diag(s) Vt` with singular values in descending order.
pub fn svd_desc(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return (
            DMatrix::zeros(m.nrows(), 0),
            DVector::zeros(0),
            DMatrix::zeros(0, m.ncols()),
        );
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vt");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut u_sorted = DMatrix::zeros(m.nrows(), k);
    let mut vt_sorted = DMatrix::zeros(k, m.ncols());
    let mut s_sorted = DVector::zeros(k);
    for (j, &i) in order.iter().enumerate() {
        u_sorted.set_column(j, &u.column(i));
        vt_sorted.set_row(j, &vt.row(i));
        s_sorted[j] = s[i];
    }
    (u_sorted, s_sorted, vt_sorted)
}

/// Singular values in descending order.
pub fn singular_values_desc(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows().min(m.ncols()) == 0 {
        return DVector::zeros(0);
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    DVector::from_vec(s)
}

/// Moore-Penrose pseudoinverse. Singular values below `rel_tol * σ₁` are
/// treated as zero.
pub fn pinv(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (u, s, vt) = svd_desc(m);
    let cut = s.iter().copied().fold(0.0_f64, f64::max) * rel_tol;
    let inv = DVector::from_iterator(s.len(), s.iter().map(|&v| if v > cut { 1.0 / v } else { 0.0 }));
    vt.transpose() * DMatrix::from_diagonal(&inv) * u.transpose()
}

/// Pseudoinverse of a symmetric PSD matrix via its eigendecomposition.
pub fn pinv_psd(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (vals, vecs) = symmetric_eigen_desc(&((m + m.transpose()) * 0.5));
    let cut = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs())) * rel_tol;
    let inv = DVector::from_iterator(vals.len(), vals.iter().map(|&v| if v > cut { 1.0 / v } else { 0.0 }));
    let scaled = &vecs * DMatrix::from_diagonal(&inv);
    let out = scaled * vecs.transpose();
    (&out + out.transpose()) * 0.5
}

/// Column-stacking vectorization.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), rows * cols);
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// Stacks the lower triangle (diagonal included) column by column.
pub fn vech(m: &DMatrix<f64>) -> DVector<f64> {
    let q = m.nrows();
    let mut out = Vec::with_capacity(q * (q + 1) / 2);
    for j in 0..q {
        for i in j..q {
            out.push(m[(i, j)]);
        }
    }
    DVector::from_vec(out)
}

/// Rebuilds a symmetric matrix from its half-vectorization.
pub fn unvech(v: &DVector<f64>, q: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), q * (q + 1) / 2);
    let mut m = DMatrix::zeros(q, q);
    let mut k = 0;
    for j in 0..q {
        for i in j..q {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    m
}

/// Position of `(i, j)`, `i >= j`, inside `vech`.
fn vech_index(q: usize, i: usize, j: usize) -> usize {
    // columns 0..j contribute q, q-1, ..., q-j+1 entries
    j * q - j * j.saturating_sub(1) / 2 + (i - j)
}

/// Expansion and contraction matrices between `vec` and `vech`.
#[derive(Debug, Clone)]
pub struct VecVechKit {
    pub q: usize,
    /// `E_q`, q² × q(q+1)/2 with `vec(U) = E_q vech(U)`.
    pub expansion: DMatrix<f64>,
    /// `C_q`, q(q+1)/2 × q² with `vech(U) = C_q vec(U)`.
    pub contraction: DMatrix<f64>,
    /// `(E_q'E_q)⁻¹E_q'`.
    pub expansion_pinv: DMatrix<f64>,
}

pub fn vec_vech_build(q: usize) -> VecVechKit {
    let half = q * (q + 1) / 2;
    let mut e = DMatrix::zeros(q * q, half);
    let mut c = DMatrix::zeros(half, q * q);
    let mut pinv = DMatrix::zeros(half, q * q);
    for j in 0..q {
        for i in j..q {
            let k = vech_index(q, i, j);
            e[(i + j * q, k)] = 1.0;
            e[(j + i * q, k)] = 1.0;
            c[(k, i + j * q)] = 1.0;
            if i == j {
                pinv[(k, i + j * q)] = 1.0;
            } else {
                pinv[(k, i + j * q)] = 0.5;
                pinv[(k, j + i * q)] = 0.5;
            }
        }
    }
    VecVechKit {
        q,
        expansion: e,
        contraction: c,
        expansion_pinv: pinv,
    }
}

/// Projection onto `span(X)` in the `V` inner product and its complement:
/// `P = X (X'VX)⁻¹ X'V`, `Q = I - P`. `None` means the identity inner product.
pub fn projection(x: &DMatrix<f64>, v: Option<&SymmetricMatrix>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    let xv = match v {
        Some(v) => x.transpose() * v.as_matrix(),
        None => x.transpose(),
    };
    let gram = SymmetricMatrix::new(&xv * x);
    let inv = gram.inverse().map_err(|_| Error::RankDeficient)?;
    let p = x * inv.as_matrix() * xv;
    let q = DMatrix::identity(n, n) - &p;
    Ok((p, q))
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Orthonormal basis of `span(m)` from a thin QR, with the sign of each
/// column fixed so the triangular factor has a nonnegative diagonal.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            let col = -q.column(j);
            q.set_column(j, &col);
        }
    }
    q
}

/// Orthonormal basis `Φ₀` of the orthogonal complement of `span(Φ)` for a
/// semiorthogonal `Φ`, from a column-pivoted QR of `I - ΦΦ'`.
pub fn orthogonal_complement(phi: &DMatrix<f64>) -> DMatrix<f64> {
    let q = phi.nrows();
    let u = phi.ncols();
    if u >= q {
        return DMatrix::zeros(q, 0);
    }
    let resid = DMatrix::identity(q, q) - phi * phi.transpose();
    let qr = resid.col_piv_qr();
    let basis = qr.q().columns(0, q - u).into_owned();
    // one Gram-Schmidt pass against Φ keeps Φ'Φ₀ at round-off level
    let cleaned = &basis - phi * (phi.transpose() * &basis);
    orthonormalize(&cleaned)
}

/// Largest principal angle (radians) between the column spans of `a` and `b`.
pub fn largest_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = orthonormalize(a);
    let qb = orthonormalize(b);
    let s = singular_values_desc(&(qa.transpose() * qb));
    let smallest = s.iter().copied().fold(f64::INFINITY, f64::min);
    smallest.clamp(-1.0, 1.0).acos()
}

/// Max absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        DMatrix::from_fn(rows, cols, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    fn random_spd(n: usize, seed: u64) -> SymmetricMatrix {
        let a = lcg_matrix(n, n, seed);
        SymmetricMatrix::new(&a * a.transpose() + DMatrix::identity(n, n) * 0.5)
    }

    #[test]
    fn identity_inverse_sqrt_is_identity() {
        let out = sym_power(&SymmetricMatrix::identity(3), Exponent::NegHalf).unwrap();
        assert!(max_abs(&(out.as_matrix() - DMatrix::identity(3, 3))) < 1e-14);
    }

    #[test]
    fn diagonal_sqrt() {
        let out = sym_power(&SymmetricMatrix::from_diagonal(&[4.0, 9.0]), Exponent::Half).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        assert!(max_abs(&(out.as_matrix() - want)) < 1e-14);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = random_spd(5, 7);
        let r = sym_power(&m, Exponent::Half).unwrap();
        let sq = r.as_matrix() * r.as_matrix();
        assert!(max_abs(&(sq - m.as_matrix())) < 1e-10);
    }

    #[test]
    fn negative_powers_compose() {
        let m = random_spd(4, 3);
        let ih = sym_power(&m, Exponent::NegHalf).unwrap();
        let inv = sym_power(&m, Exponent::NegOne).unwrap();
        assert!(max_abs(&(ih.as_matrix() * ih.as_matrix() - inv.as_matrix())) < 1e-10);
        assert!(max_abs(&(inv.as_matrix() * m.as_matrix() - DMatrix::identity(4, 4))) < 1e-10);
    }

    #[test]
    fn rejects_indefinite_and_singular() {
        let m = SymmetricMatrix::from_diagonal(&[1.0, -0.5]);
        assert!(matches!(sym_power(&m, Exponent::Half), Err(Error::NotPsd { .. })));
        let s = SymmetricMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(matches!(sym_power(&s, Exponent::NegHalf), Err(Error::Singular { .. })));
        // square root of a PSD boundary matrix is fine
        let r = sym_power(&s, Exponent::Half).unwrap();
        assert!((r.as_matrix()[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(r.as_matrix()[(1, 1)].abs() < 1e-5);
    }

    #[test]
    fn vec_vech_small_cases() {
        let k1 = vec_vech_build(1);
        assert_eq!(k1.expansion, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(k1.contraction, DMatrix::from_element(1, 1, 1.0));

        let (a, b, c) = (1.5, -2.0, 3.25);
        let u = DMatrix::from_row_slice(2, 2, &[a, b, b, c]);
        assert_eq!(vech(&u).as_slice(), &[a, b, c]);
        let k2 = vec_vech_build(2);
        let expanded = &k2.expansion * vech(&u);
        assert_eq!(expanded.as_slice(), &[a, b, b, c]);
        assert_eq!(expanded, vec(&u));
    }

    #[test]
    fn contraction_times_expansion_is_identity() {
        for q in 1..=6 {
            let kit = vec_vech_build(q);
            let prod = &kit.contraction * &kit.expansion;
            assert_eq!(prod, DMatrix::identity(q * (q + 1) / 2, q * (q + 1) / 2));
            let prod2 = &kit.expansion_pinv * &kit.expansion;
            assert!(max_abs(&(prod2 - DMatrix::identity(q * (q + 1) / 2, q * (q + 1) / 2))) < 1e-15);
        }
    }

    #[test]
    fn vec_vech_identities_on_random_symmetric() {
        let kit = vec_vech_build(4);
        let u = random_spd(4, 11).into_inner();
        assert_eq!(&kit.expansion * vech(&u), vec(&u));
        assert_eq!(&kit.contraction * vec(&u), vech(&u));
        assert_eq!(unvech(&vech(&u), 4), u);
    }

    #[test]
    fn projection_onto_first_axis() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let (p, q) = projection(&x, None).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 0.0]));
        assert!(max_abs(&(p - &want)) < 1e-15);
        assert!(max_abs(&(q + want - DMatrix::identity(3, 3))) < 1e-15);
    }

    #[test]
    fn projection_properties() {
        let x = lcg_matrix(5, 2, 21);
        let (p, q) = projection(&x, None).unwrap();
        assert!(max_abs(&(&p * &x - &x)) < 1e-12);
        assert!(max_abs(&(&p - p.transpose())) < 1e-12);
        let v = random_spd(5, 22);
        let (pv, qv) = projection(&x, Some(&v)).unwrap();
        assert!(max_abs(&(&pv * &pv - &pv)) < 1e-10);
        assert!(max_abs(&(&pv * &qv)) < 1e-10);
        assert!(max_abs(&(&pv + &qv - DMatrix::identity(5, 5))) < 1e-10);
        let _ = q;
    }

    #[test]
    fn projection_rank_deficient() {
        let x = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(projection(&x, None).unwrap_err(), Error::RankDeficient);
    }

    #[test]
    fn kron_identities() {
        let b = lcg_matrix(2, 2, 1);
        let k = kron(&DMatrix::identity(2, 2), &b);
        assert_eq!(k.view((0, 0), (2, 2)), b.view((0, 0), (2, 2)));
        assert_eq!(k.view((2, 2), (2, 2)), b.view((0, 0), (2, 2)));
        assert!(max_abs(&k.view((0, 2), (2, 2)).into_owned()) == 0.0);

        let (a, c, d) = (lcg_matrix(2, 2, 2), lcg_matrix(2, 2, 3), lcg_matrix(2, 2, 4));
        let lhs = kron(&a, &b) * kron(&c, &d);
        let rhs = kron(&(&a * &c), &(&b * &d));
        assert!(max_abs(&(lhs - rhs)) < 1e-12);

        let (a3, x3, b3) = (lcg_matrix(3, 3, 5), lcg_matrix(3, 3, 6), lcg_matrix(3, 3, 8));
        let lhs = vec(&(&a3 * &x3 * &b3));
        let rhs = kron(&b3.transpose(), &a3) * vec(&x3);
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn complement_is_orthonormal() {
        let phi = orthonormalize(&lcg_matrix(6, 2, 9));
        let phi0 = orthogonal_complement(&phi);
        assert_eq!(phi0.ncols(), 4);
        assert!(max_abs(&(phi.transpose() * &phi0)) < 1e-13);
        assert!(max_abs(&(phi0.transpose() * &phi0 - DMatrix::identity(4, 4))) < 1e-13);
        // deterministic
        assert_eq!(phi0, orthogonal_complement(&phi));
    }

    #[test]
    fn principal_angle_of_rotated_span_is_zero() {
        let a = lcg_matrix(5, 2, 31);
        let mix = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -1.0, 3.0]);
        assert!(largest_principal_angle(&a, &(&a * mix)) < 1e-7);
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!((largest_principal_angle(&e1, &e2) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn pinv_of_rank_deficient() {
        let a = lcg_matrix(4, 2, 41);
        let m = &a * a.transpose();
        let p = pinv(&m, 1e-10);
        assert!(max_abs(&(&m * &p * &m - &m)) < 1e-10);
        let p2 = pinv_psd(&m, 1e-10);
        assert!(max_abs(&(p - p2)) < 1e-8);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn sqrt_recovers_spd(entries in proptest::collection::vec(-1.0f64..1.0, 16), shift in 0.01f64..2.0) {
            let a = DMatrix::from_column_slice(4, 4, &entries);
            let m = SymmetricMatrix::new(&a * a.transpose() + DMatrix::identity(4, 4) * shift);
            let r = sym_power(&m, Exponent::Half).unwrap();
            let diff = (r.as_matrix() * r.as_matrix() - m.as_matrix()).norm() / m.as_matrix().norm();
            prop_assert!(diff < 1e-10);
        }

        #[test]
        fn vech_roundtrip(entries in proptest::collection::vec(-10.0f64..10.0, 25)) {
            let a = DMatrix::from_column_slice(5, 5, &entries);
            let s = SymmetricMatrix::new(a).into_inner();
            let kit = vec_vech_build(5);
            prop_assert_eq!(&kit.expansion * vech(&s), vec(&s));
            prop_assert_eq!(&kit.contraction * vec(&s), vech(&s));
        }
    }
}
