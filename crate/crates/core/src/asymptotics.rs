//! Asymptotic covariances of `√T vec(β̂)` for the four estimators.
//!
//! Every model is treated as a smooth reparameterization of the unrestricted
//! `h = (vec(β)', vech(Σ)')'`. With `K = ∂h/∂(model parameters)` and `J_h` the
//! Fisher information of `h`, the normal-theory covariance of the restricted
//! MLE is `K(K'J_hK)†K'`, and under non-normal errors the sandwich
//! `K(K'J_hK)†K'J_h Ṽ J_hK(K'J_hK)†K'` replaces it.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{Dims, ModelKind, VarEstimate};
use crate::matrix_kit::{
    kron, orthogonal_complement, pinv_psd, projection, svd_desc, unvech, vec, vec_vech_build, vech, SymmetricMatrix,
};
use crate::moments::LagDesign;

/// Singular values below this fraction of the largest are dropped in every
/// pseudoinverse.
pub const PINV_TOLERANCE: f64 = 1e-10;

fn tri(n: usize) -> usize {
    n * (n + 1) / 2
}

/// The REVAR parameterization `β = ΦνB`, `Σ = ΦΩΦ' + Φ₀Ω₀Φ₀'`, from which the
/// OLSVAR (`h`), RRVAR (`ψ`, with `A = Φν`) and EVAR (`δ`, with `ξ = νB`)
/// vectors are all derived.
#[derive(Debug, Clone)]
pub struct ParameterVectors {
    pub dims: Dims,
    pub phi: DMatrix<f64>,
    /// Fixed completion of `Φ`; perturbations of `Φ` act on it through
    /// `I - ΦΦ'`.
    pub phi0: DMatrix<f64>,
    pub nu: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub omega0: DMatrix<f64>,
    /// Covariance of the stacked lags, qp × qp.
    pub gamma_p: DMatrix<f64>,
}

impl ParameterVectors {
    pub fn new(
        phi: DMatrix<f64>,
        nu: DMatrix<f64>,
        b: DMatrix<f64>,
        omega: DMatrix<f64>,
        omega0: DMatrix<f64>,
        gamma_p: DMatrix<f64>,
    ) -> Result<Self> {
        let (q, u) = phi.shape();
        let d = nu.ncols();
        let qp = b.ncols();
        if !qp.is_multiple_of(q.max(1)) {
            return Err(Error::BadDims(format!("B has {qp} columns, not a multiple of q={q}")));
        }
        let dims = Dims::new(d, u, qp / q, q);
        dims.validate()?;
        let shapes_ok = nu.nrows() == u
            && b.nrows() == d
            && omega.shape() == (u, u)
            && omega0.shape() == (q - u, q - u)
            && gamma_p.shape() == (qp, qp);
        if !shapes_ok {
            return Err(Error::BadDims("inconsistent parameter shapes".into()));
        }
        let phi0 = orthogonal_complement(&phi);
        Ok(Self {
            dims,
            phi,
            phi0,
            nu,
            b,
            omega,
            omega0,
            gamma_p,
        })
    }

    /// Parameters implied by a fitted model. Non-envelope fits use `Φ = I_q`;
    /// the rank factors always come from the SVD of `Φ'β̂` at the fit's rank.
    pub fn from_estimate(est: &VarEstimate, gamma_p: &SymmetricMatrix) -> Result<Self> {
        let q = est.dims.q;
        let phi = est.phi().cloned().unwrap_or_else(|| DMatrix::identity(q, q));
        let xi = phi.transpose() * &est.beta;
        let d = est.dims.d;
        let (u_s, s, vt) = svd_desc(&xi);
        let nu = u_s.columns(0, d) * DMatrix::from_diagonal(&s.rows(0, d).into_owned());
        let b = vt.rows(0, d).into_owned();
        let sigma = est.sigma.as_matrix();
        let phi0 = orthogonal_complement(&phi);
        let omega = SymmetricMatrix::new(phi.transpose() * sigma * &phi).into_inner();
        let omega0 = SymmetricMatrix::new(phi0.transpose() * sigma * &phi0).into_inner();
        Self::new(phi, nu, b, omega, omega0, gamma_p.as_matrix().clone())
    }

    pub fn a(&self) -> DMatrix<f64> {
        &self.phi * &self.nu
    }

    pub fn xi(&self) -> DMatrix<f64> {
        &self.nu * &self.b
    }

    pub fn beta(&self) -> DMatrix<f64> {
        &self.phi * &self.nu * &self.b
    }

    pub fn sigma(&self) -> DMatrix<f64> {
        let s = &self.phi * &self.omega * self.phi.transpose() + &self.phi0 * &self.omega0 * self.phi0.transpose();
        (&s + s.transpose()) * 0.5
    }

    pub fn h(&self) -> DVector<f64> {
        stack(&[vec(&self.beta()), vech(&self.sigma())])
    }

    /// `(vec(A)', vec(B)', vech(Σ)')'`.
    pub fn psi(&self) -> DVector<f64> {
        stack(&[vec(&self.a()), vec(&self.b), vech(&self.sigma())])
    }

    /// `(vec(Φ)', vec(ξ)', vech(Ω)', vech(Ω₀)')'`.
    pub fn delta(&self) -> DVector<f64> {
        stack(&[vec(&self.phi), vec(&self.xi()), vech(&self.omega), vech(&self.omega0)])
    }

    /// `(vec(Φ)', vec(ν)', vec(B)', vech(Ω)', vech(Ω₀)')'`.
    pub fn theta(&self) -> DVector<f64> {
        stack(&[
            vec(&self.phi),
            vec(&self.nu),
            vec(&self.b),
            vech(&self.omega),
            vech(&self.omega0),
        ])
    }

    fn sigma_at(&self, phi: &DMatrix<f64>, omega: &DMatrix<f64>, omega0: &DMatrix<f64>) -> DMatrix<f64> {
        let q = self.dims.q;
        let proj = DMatrix::identity(q, q) - phi * phi.transpose();
        let comp = proj * &self.phi0;
        phi * omega * phi.transpose() + &comp * omega0 * comp.transpose()
    }

    /// `h` as a function of `θ`, holding the completion base fixed.
    pub fn h_from_theta(&self, theta: &DVector<f64>) -> DVector<f64> {
        let Dims { d, u, q, p } = self.dims;
        let mut parts = split(theta, &[q * u, u * d, d * q * p, tri(u), tri(q - u)]).into_iter();
        let phi = reshape(&parts.next().unwrap(), q, u);
        let nu = reshape(&parts.next().unwrap(), u, d);
        let b = reshape(&parts.next().unwrap(), d, q * p);
        let omega = unvech(&parts.next().unwrap(), u);
        let omega0 = unvech(&parts.next().unwrap(), q - u);
        let beta = &phi * nu * b;
        stack(&[vec(&beta), vech(&self.sigma_at(&phi, &omega, &omega0))])
    }

    pub fn h_from_psi(&self, psi: &DVector<f64>) -> DVector<f64> {
        let Dims { d, q, p, .. } = self.dims;
        let parts = split(psi, &[q * d, d * q * p, tri(q)]);
        let beta = reshape(&parts[0], q, d) * reshape(&parts[1], d, q * p);
        stack(&[vec(&beta), parts[2].clone()])
    }

    pub fn h_from_delta(&self, delta: &DVector<f64>) -> DVector<f64> {
        let Dims { u, q, p, .. } = self.dims;
        let parts = split(delta, &[q * u, u * q * p, tri(u), tri(q - u)]);
        let phi = reshape(&parts[0], q, u);
        let beta = &phi * reshape(&parts[1], u, q * p);
        let omega = unvech(&parts[2], u);
        let omega0 = unvech(&parts[3], q - u);
        stack(&[vec(&beta), vech(&self.sigma_at(&phi, &omega, &omega0))])
    }
}

fn stack(parts: &[DVector<f64>]) -> DVector<f64> {
    let data: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    DVector::from_vec(data)
}

fn split(v: &DVector<f64>, lens: &[usize]) -> Vec<DVector<f64>> {
    assert_eq!(v.len(), lens.iter().sum::<usize>());
    let mut at = 0;
    lens.iter()
        .map(|&l| {
            let out = v.rows(at, l).into_owned();
            at += l;
            out
        })
        .collect()
}

fn reshape(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// `J_h` and `J_h⁻¹`, block diagonal in `(vec(β), vech(Σ))`.
#[derive(Debug, Clone)]
pub struct FisherInformation {
    pub j: DMatrix<f64>,
    pub j_inv: DMatrix<f64>,
}

pub fn fisher_information(gamma_p: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<FisherInformation> {
    let q = sigma.nrows();
    let qp = gamma_p.nrows();
    let sig = SymmetricMatrix::new(sigma.clone());
    let gp = SymmetricMatrix::new(gamma_p.clone());
    let sig_inv = sig.inverse()?.into_inner();
    let gp_inv = gp.inverse()?.into_inner();
    let kit = vec_vech_build(q);
    let nb = q * qp;
    let ns = tri(q);
    let mut j = DMatrix::zeros(nb + ns, nb + ns);
    let mut j_inv = DMatrix::zeros(nb + ns, nb + ns);
    j.view_mut((0, 0), (nb, nb)).copy_from(&kron(gp.as_matrix(), &sig_inv));
    j_inv
        .view_mut((0, 0), (nb, nb))
        .copy_from(&kron(&gp_inv, sig.as_matrix()));
    let e = &kit.expansion;
    let ep = &kit.expansion_pinv;
    j.view_mut((nb, nb), (ns, ns))
        .copy_from(&(e.transpose() * kron(&sig_inv, &sig_inv) * e * 0.5));
    j_inv
        .view_mut((nb, nb), (ns, ns))
        .copy_from(&(ep * kron(sig.as_matrix(), sig.as_matrix()) * ep.transpose() * 2.0));
    Ok(FisherInformation { j, j_inv })
}

/// Jacobians of `h` with respect to `ψ` (RRVAR), `δ` (EVAR) and `θ`
/// (REVAR).
#[derive(Debug, Clone)]
pub struct GradientMatrices {
    pub h: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// `∂vech(Σ)/∂vec(Φ)` for `Σ = ΦΩΦ' + QΦ₀Ω₀Φ₀'Q`, `Q = I - ΦΦ'`.
fn sigma_phi_block(params: &ParameterVectors) -> DMatrix<f64> {
    let Dims { u, q, .. } = params.dims;
    let m0 = &params.phi0 * &params.omega0 * params.phi0.transpose();
    let po = &params.phi * &params.omega;
    let mut out = DMatrix::zeros(tri(q), q * u);
    for col in 0..q * u {
        let mut e = DMatrix::zeros(q, u);
        e[(col % q, col / q)] = 1.0;
        let first = &e * po.transpose();
        let second = &m0 * &e * params.phi.transpose();
        let total = &first + first.transpose() - &second - second.transpose();
        out.set_column(col, &vech(&total));
    }
    out
}

/// `∂vech(XWX')/∂vech(W)` for fixed `X` (q × k).
fn congruence_block(x: &DMatrix<f64>) -> DMatrix<f64> {
    let q = x.nrows();
    let k = x.ncols();
    let mut out = DMatrix::zeros(tri(q), tri(k));
    let mut idx = 0;
    for j in 0..k {
        for i in j..k {
            let mut w = DMatrix::zeros(k, k);
            w[(i, j)] = 1.0;
            w[(j, i)] = 1.0;
            out.set_column(idx, &vech(&(x * w * x.transpose())));
            idx += 1;
        }
    }
    out
}

pub fn gradient_matrices(params: &ParameterVectors) -> GradientMatrices {
    let Dims { d, u, p, q } = params.dims;
    let qp = q * p;
    let nb = q * qp;
    let ns = tri(q);
    let iq = DMatrix::identity(q, q);
    let iqp = DMatrix::identity(qp, qp);
    let a = params.a();
    let xi = params.xi();

    let mut h = DMatrix::zeros(nb + ns, q * d + d * qp + ns);
    h.view_mut((0, 0), (nb, q * d))
        .copy_from(&kron(&params.b.transpose(), &iq));
    h.view_mut((0, q * d), (nb, d * qp)).copy_from(&kron(&iqp, &a));
    h.view_mut((nb, q * d + d * qp), (ns, ns))
        .copy_from(&DMatrix::identity(ns, ns));

    let s_phi = sigma_phi_block(params);
    let s_omega = congruence_block(&params.phi);
    let s_omega0 = congruence_block(&params.phi0);
    let (no, no0) = (tri(u), tri(q - u));

    let mut delta = DMatrix::zeros(nb + ns, q * u + u * qp + no + no0);
    delta
        .view_mut((0, 0), (nb, q * u))
        .copy_from(&kron(&xi.transpose(), &iq));
    delta
        .view_mut((0, q * u), (nb, u * qp))
        .copy_from(&kron(&iqp, &params.phi));
    delta.view_mut((nb, 0), (ns, q * u)).copy_from(&s_phi);
    delta.view_mut((nb, q * u + u * qp), (ns, no)).copy_from(&s_omega);
    delta
        .view_mut((nb, q * u + u * qp + no), (ns, no0))
        .copy_from(&s_omega0);

    let mut r = DMatrix::zeros(nb + ns, q * u + u * d + d * qp + no + no0);
    r.view_mut((0, 0), (nb, q * u)).copy_from(&kron(&xi.transpose(), &iq));
    r.view_mut((0, q * u), (nb, u * d))
        .copy_from(&kron(&params.b.transpose(), &params.phi));
    r.view_mut((0, q * u + u * d), (nb, d * qp)).copy_from(&kron(&iqp, &a));
    let off = q * u + u * d + d * qp;
    r.view_mut((nb, 0), (ns, q * u)).copy_from(&s_phi);
    r.view_mut((nb, off), (ns, no)).copy_from(&s_omega);
    r.view_mut((nb, off + no), (ns, no0)).copy_from(&s_omega0);

    GradientMatrices { h, delta, r }
}

/// Central-difference Jacobian of `f` at `x`.
pub fn numerical_jacobian<F>(f: F, x: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let m = f(x).len();
    let mut out = DMatrix::zeros(m, x.len());
    let mut probe = x.clone();
    for k in 0..x.len() {
        let orig = probe[k];
        probe[k] = orig + step;
        let up = f(&probe);
        probe[k] = orig - step;
        let down = f(&probe);
        probe[k] = orig;
        out.set_column(k, &((up - down) / (2.0 * step)));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticCovariance {
    pub model: ModelKind,
    /// Covariance of `√T ĥ`, `(q²p + q(q+1)/2)` square.
    #[serde(skip)]
    pub full: DMatrix<f64>,
    /// Top-left `q²p × q²p` block, for `√T vec(β̂)`.
    #[serde(skip)]
    pub beta_block: DMatrix<f64>,
}

impl AsymptoticCovariance {
    fn from_full(model: ModelKind, full: DMatrix<f64>, nb: usize) -> Self {
        let full = (&full + full.transpose()) * 0.5;
        let beta_block = full.view((0, 0), (nb, nb)).into_owned();
        Self {
            model,
            full,
            beta_block,
        }
    }

    /// Standard errors of `vec(β̂)` at sample size `t`.
    pub fn standard_errors(&self, t: usize) -> DVector<f64> {
        let scale = (t as f64).sqrt();
        self.beta_block.diagonal().map(|v| v.max(0.0).sqrt() / scale)
    }
}

fn jacobian_for(model: ModelKind, grads: &GradientMatrices) -> Option<&DMatrix<f64>> {
    match model {
        ModelKind::Olsvar => None,
        ModelKind::Rrvar => Some(&grads.h),
        ModelKind::Evar => Some(&grads.delta),
        ModelKind::Revar => Some(&grads.r),
    }
}

/// `K(K'JK)†K'`.
fn restricted_inverse(k: &DMatrix<f64>, j: &DMatrix<f64>) -> DMatrix<f64> {
    let inner = k.transpose() * j * k;
    k * pinv_psd(&inner, PINV_TOLERANCE) * k.transpose()
}

/// Normal-theory asymptotic covariance of `√T ĥ` under `model`, evaluated at
/// `params`.
pub fn avar(model: ModelKind, params: &ParameterVectors) -> Result<AsymptoticCovariance> {
    let fisher = fisher_information(&params.gamma_p, &params.sigma())?;
    let nb = params.dims.q * params.dims.q * params.dims.p;
    let full = match model {
        ModelKind::Olsvar => fisher.j_inv,
        _ => {
            let grads = gradient_matrices(params);
            restricted_inverse(jacobian_for(model, &grads).expect("restricted model"), &fisher.j)
        }
    };
    Ok(AsymptoticCovariance::from_full(model, full, nb))
}

/// All four covariances at the same parameter point, in
/// [`ModelKind::ALL`] order.
pub fn avar_all(params: &ParameterVectors) -> Result<Vec<AsymptoticCovariance>> {
    let fisher = fisher_information(&params.gamma_p, &params.sigma())?;
    let grads = gradient_matrices(params);
    let nb = params.dims.q * params.dims.q * params.dims.p;
    Ok(ModelKind::ALL
        .iter()
        .map(|&m| {
            let full = match jacobian_for(m, &grads) {
                None => fisher.j_inv.clone(),
                Some(k) => restricted_inverse(k, &fisher.j),
            };
            AsymptoticCovariance::from_full(m, full, nb)
        })
        .collect())
}

/// `(I - Q_{B'(Γ₍ₚ₎)} ⊗ Q_{A(Σ⁻¹)})(Γ₍ₚ₎⁻¹ ⊗ Σ)`, the RRVAR `β` block in
/// closed form.
pub fn avar_closed_form_rrvar(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    gamma_p: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (_, qb, _, qa, gp_inv, sig) = rrvar_projections(a, b, gamma_p, sigma)?;
    let n = gp_inv.nrows() * sig.nrows();
    let base = kron(&gp_inv, &sig);
    Ok((DMatrix::identity(n, n) - kron(&qb, &qa)) * base)
}

/// The same matrix written as `P_{B'}Γ₍ₚ₎⁻¹ ⊗ Σ + Q_{B'}Γ₍ₚ₎⁻¹ ⊗ P_AΣ`.
pub fn avar_rrvar_decomposed(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    gamma_p: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (pb, qb, pa, _, gp_inv, sig) = rrvar_projections(a, b, gamma_p, sigma)?;
    Ok(kron(&(&pb * &gp_inv), &sig) + kron(&(&qb * &gp_inv), &(&pa * &sig)))
}

type Projections = (
    DMatrix<f64>,
    DMatrix<f64>,
    DMatrix<f64>,
    DMatrix<f64>,
    DMatrix<f64>,
    DMatrix<f64>,
);

fn rrvar_projections(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    gamma_p: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> Result<Projections> {
    let gp = SymmetricMatrix::new(gamma_p.clone());
    let sig = SymmetricMatrix::new(sigma.clone());
    let sig_inv = sig.inverse()?;
    let (pb, qb) = projection(&b.transpose(), Some(&gp))?;
    let (pa, qa) = projection(a, Some(&sig_inv))?;
    Ok((pb, qb, pa, qa, gp.inverse()?.into_inner(), sig.into_inner()))
}

/// Sandwich covariance `K(K'JK)†K'J Ṽ JK(K'JK)†K'` for errors with finite
/// fourth moments; `Ṽ` is the covariance of `√T ĥ_OLSVAR`.
pub fn avar_nonnormal(
    model: ModelKind,
    params: &ParameterVectors,
    v_tilde: &DMatrix<f64>,
) -> Result<AsymptoticCovariance> {
    let fisher = fisher_information(&params.gamma_p, &params.sigma())?;
    let dim = fisher.j.nrows();
    if v_tilde.shape() != (dim, dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v_tilde.nrows(),
        });
    }
    let nb = params.dims.q * params.dims.q * params.dims.p;
    let bread = match model {
        ModelKind::Olsvar => fisher.j_inv.clone(),
        _ => {
            let grads = gradient_matrices(params);
            restricted_inverse(jacobian_for(model, &grads).expect("restricted model"), &fisher.j)
        }
    };
    let left = &bread * &fisher.j;
    let z = &left * v_tilde * left.transpose();
    Ok(AsymptoticCovariance::from_full(model, z, nb))
}

/// Elementwise standard-error ratios `SE_M / SE_ref` over the `β` block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeRatios {
    pub r_min: f64,
    pub r_max: f64,
    pub r_avg: f64,
}

pub fn se_ratios(avar_m: &DMatrix<f64>, avar_ref: &DMatrix<f64>) -> Result<SeRatios> {
    if avar_m.shape() != avar_ref.shape() {
        return Err(Error::DimensionMismatch {
            expected: avar_ref.nrows(),
            got: avar_m.nrows(),
        });
    }
    let n = avar_m.nrows();
    let mut ratios = Vec::with_capacity(n);
    for i in 0..n {
        let r = avar_ref[(i, i)];
        if r.is_nan() || r <= 0.0 {
            return Err(Error::ZeroSe);
        }
        ratios.push((avar_m[(i, i)].max(0.0) / r).sqrt());
    }
    let r_min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let r_max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let r_avg = ratios.iter().sum::<f64>() / n as f64;
    Ok(SeRatios { r_min, r_max, r_avg })
}

/// Plug-in covariance of `√T ĥ_OLSVAR` from the empirical covariance of
/// the influence terms `Γ̂₍ₚ₎⁻¹x_t ⊗ ε̂_t` and `vech(ε̂_tε̂_t' - Σ̂)`.
pub fn estimate_vtilde(design: &LagDesign, ols: &VarEstimate) -> Result<DMatrix<f64>> {
    let n = design.n();
    let (q, qp) = (design.q, design.lagged.ncols());
    let dim = q * qp + tri(q);
    if n < 2 {
        return Err(Error::TooShort { rows: n, required: 2 });
    }
    let gp = SymmetricMatrix::new(design.lagged.transpose() * &design.lagged / n as f64);
    let gp_inv = gp.inverse()?;
    let resid = &design.targets - &design.lagged * ols.beta.transpose();
    let sigma = resid.transpose() * &resid / n as f64;
    let mut acc = DMatrix::zeros(dim, dim);
    let mut mean = DVector::zeros(dim);
    let mut terms = Vec::with_capacity(n);
    for t in 0..n {
        let x = design.lagged.row(t).transpose();
        let e = resid.row(t).transpose();
        let zx = gp_inv.as_matrix() * x;
        let infl_beta = kron(
            &DMatrix::from_column_slice(qp, 1, zx.as_slice()),
            &DMatrix::from_column_slice(q, 1, e.as_slice()),
        );
        let infl_sigma = vech(&(&e * e.transpose() - &sigma));
        let z = stack(&[DVector::from_column_slice(infl_beta.as_slice()), infl_sigma]);
        mean += &z;
        terms.push(z);
    }
    mean /= n as f64;
    for z in &terms {
        let c = z - &mean;
        acc += &c * c.transpose();
    }
    acc /= n as f64;
    Ok((&acc + acc.transpose()) * 0.5)
}
