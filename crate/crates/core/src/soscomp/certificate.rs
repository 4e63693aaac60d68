use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::polyalg::{Monomial, Polynomial};
use crate::sdp::{SdpSolution, SdpStatus};

use super::{CompiledSos, SosError, SosProgram};

/// Acceptance thresholds for Gram certificates. Both are relative: the
/// residual is compared against `recon_tol * max(1, max |p_alpha|)` and the
/// eigenvalue against `-eig_floor * max(1, max |Q_ij|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateOptions {
    pub recon_tol: f64,
    pub eig_floor: f64,
    /// A solve that stalled short of optimality is still checked when its
    /// relative primal residual is at most this.
    pub stalled_residual: f64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        CertificateOptions {
            recon_tol: 1e-6,
            eig_floor: 1e-7,
            stalled_residual: 1e-4,
        }
    }
}

/// Evidence that `target = m^T Q m` with `Q` PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct GramCertificate {
    pub constraint: usize,
    pub name: String,
    pub basis: Vec<Monomial>,
    pub gram: DMatrix<f64>,
    /// The SOS polynomial at the solution's decision values.
    pub target: Polynomial,
    /// Coefficient mismatch of the solver's Gram matrix.
    pub raw_residual: f64,
    /// Coefficient mismatch after projecting onto the matching constraints.
    pub residual: f64,
    pub min_eigenvalue: f64,
    /// Absolute thresholds this certificate was checked against.
    pub residual_limit: f64,
    pub eigenvalue_floor: f64,
}

/// `m^T Q m` as a polynomial.
pub fn gram_polynomial(n: usize, basis: &[Monomial], q: &DMatrix<f64>) -> Polynomial {
    let mut acc: BTreeMap<Monomial, f64> = BTreeMap::new();
    for a in 0..basis.len() {
        for b in a..basis.len() {
            let w = if a == b { 1.0 } else { 2.0 };
            *acc.entry(basis[a].mul(&basis[b])).or_insert(0.0) += w * q[(a, b)];
        }
    }
    Polynomial::from_terms(n, acc)
}

impl GramCertificate {
    /// Checks a given Gram matrix against `target` without projection.
    pub fn from_gram(
        constraint: usize,
        name: impl Into<String>,
        basis: Vec<Monomial>,
        gram: DMatrix<f64>,
        target: Polynomial,
        opts: &CertificateOptions,
    ) -> Self {
        let residual = gram_polynomial(target.nvars(), &basis, &gram).max_coeff_diff(&target);
        let scale = target.max_abs_coeff().max(1.0);
        let qscale = gram.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        GramCertificate {
            constraint,
            name: name.into(),
            min_eigenvalue: min_eigenvalue(&gram),
            basis,
            gram,
            target,
            raw_residual: residual,
            residual,
            residual_limit: opts.recon_tol * scale,
            eigenvalue_floor: opts.eig_floor * qscale,
        }
    }

    pub fn reconstruct(&self) -> Polynomial {
        gram_polynomial(self.target.nvars(), &self.basis, &self.gram)
    }

    pub fn is_valid(&self) -> bool {
        self.residual <= self.residual_limit && self.min_eigenvalue >= -self.eigenvalue_floor
    }

    pub fn verify(&self) -> Result<(), SosError> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(SosError::Certificate {
                constraint: self.name.clone(),
                residual: self.residual,
                min_eigenvalue: self.min_eigenvalue,
            })
        }
    }
}

fn min_eigenvalue(q: &DMatrix<f64>) -> f64 {
    if q.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(q.clone()).eigenvalues.min()
}

/// Builds and checks one certificate per SOS constraint of `sp`.
///
/// The solver's Gram matrix is first moved onto the coefficient-matching
/// affine set (each monomial's pair pattern is corrected by its mean
/// mismatch), then its smallest eigenvalue is computed.
pub fn extract_certificate(
    sp: &SosProgram,
    compiled: &CompiledSos,
    sol: &SdpSolution,
    opts: &CertificateOptions,
) -> Result<Vec<GramCertificate>, SosError> {
    let stalled_ok =
        sol.status == SdpStatus::NumericalFailure && sol.primal_residual <= opts.stalled_residual;
    if sol.status != SdpStatus::Optimal && !stalled_ok {
        return Err(SosError::NotOptimal(sol.status));
    }
    let n = sp.nvars();
    let mut out = Vec::with_capacity(sp.sos_constraints().len());
    for (ci, c) in sp.sos_constraints().iter().enumerate() {
        let target = c.poly.evaluate(&sol.free);
        let scale = target.max_abs_coeff().max(1.0);
        let (basis, raw) = match &compiled.blocks[ci] {
            Some(b) => (b.basis.clone(), sol.blocks[b.block].clone()),
            None => (Vec::new(), DMatrix::zeros(0, 0)),
        };
        let raw = (&raw + raw.transpose()) * 0.5;
        let raw_residual = gram_polynomial(n, &basis, &raw).max_coeff_diff(&target);

        let mut pattern: BTreeMap<Monomial, Vec<(usize, usize)>> = BTreeMap::new();
        for a in 0..basis.len() {
            for b in a..basis.len() {
                pattern.entry(basis[a].mul(&basis[b])).or_default().push((a, b));
            }
        }
        let mut gram = raw.clone();
        let recon = gram_polynomial(n, &basis, &raw);
        for (alpha, pairs) in &pattern {
            let delta = target.coeff(alpha) - recon.coeff(alpha);
            let weight: f64 = pairs.iter().map(|(a, b)| if a == b { 1.0 } else { 2.0 }).sum();
            // <A_alpha, A_alpha> equals the weight sum for 0/1 patterns.
            let step = delta / weight;
            for &(a, b) in pairs {
                gram[(a, b)] += step;
                if a != b {
                    gram[(b, a)] += step;
                }
            }
        }
        let residual = gram_polynomial(n, &basis, &gram).max_coeff_diff(&target);
        let qscale = gram.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let cert = GramCertificate {
            constraint: ci,
            name: c.name.clone(),
            min_eigenvalue: min_eigenvalue(&gram),
            basis,
            gram,
            target,
            raw_residual,
            residual,
            residual_limit: opts.recon_tol * scale,
            eigenvalue_floor: opts.eig_floor * qscale,
        };
        cert.verify()?;
        out.push(cert);
    }
    Ok(out)
}
