use std::collections::{BTreeMap, BTreeSet};

use crate::polyalg::Monomial;
use crate::sdp::{Constraint, SdpProblem, SymEntry};

use super::{gram_basis_for, SosError, SosProgram};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CompileOptions {
    /// Repeatedly drop Gram basis monomials whose square appears neither in
    /// the support nor as a product of two other basis monomials.
    pub newton_prune: bool,
}

/// Where a Gram block came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SosBlock {
    pub constraint: usize,
    pub block: usize,
    pub basis: Vec<Monomial>,
}

/// Origin of each SDP row.
#[derive(Debug, Clone, PartialEq)]
pub enum RowOrigin {
    Coefficient { constraint: usize, monomial: Monomial },
    Equality(usize),
    LowerBound(usize),
    UpperBound(usize),
}

/// An SDP together with the maps needed to read certificates back.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledSos {
    pub sdp: SdpProblem,
    /// One entry per SOS constraint; `None` for identically zero polynomials.
    pub blocks: Vec<Option<SosBlock>>,
    pub rows: Vec<RowOrigin>,
    pub n_decisions: usize,
}

fn prune_basis(mut basis: Vec<Monomial>, support: &BTreeSet<Monomial>) -> Vec<Monomial> {
    loop {
        let mut cross: BTreeSet<Monomial> = BTreeSet::new();
        for (a, ma) in basis.iter().enumerate() {
            for mb in &basis[a + 1..] {
                cross.insert(ma.mul(mb));
            }
        }
        let before = basis.len();
        basis.retain(|m| {
            let sq = m.mul(m);
            support.contains(&sq) || cross.contains(&sq)
        });
        if basis.len() == before {
            return basis;
        }
    }
}

/// Translates `sp` into block form. Pure: identical programs give identical
/// problems, down to row order.
pub fn compile(sp: &SosProgram, opts: &CompileOptions) -> Result<CompiledSos, SosError> {
    let n = sp.nvars();
    let nd = sp.decisions().len();
    let mut sdp = SdpProblem::new(Vec::new(), nd);
    sdp.objective_free = sp.objective().to_vec();
    let mut blocks = Vec::with_capacity(sp.sos_constraints().len());
    let mut rows = Vec::new();

    for (ci, c) in sp.sos_constraints().iter().enumerate() {
        let Some((dmin, dmax)) = c.poly.degree_range() else {
            blocks.push(None);
            continue;
        };
        if dmax % 2 == 1 {
            return Err(SosError::OddDegree {
                constraint: c.name.clone(),
                degree: dmax,
            });
        }
        let support = c.poly.support();
        let mut basis = gram_basis_for(dmin, dmax, n)?.entries().to_vec();
        if opts.newton_prune {
            basis = prune_basis(basis, &support);
        }

        let block = if basis.is_empty() {
            blocks.push(None);
            None
        } else {
            let k = sdp.block_dims.len();
            sdp.block_dims.push(basis.len());
            blocks.push(Some(SosBlock {
                constraint: ci,
                block: k,
                basis: basis.clone(),
            }));
            Some(k)
        };

        let mut pairs: BTreeMap<Monomial, Vec<SymEntry>> = BTreeMap::new();
        for a in 0..basis.len() {
            for b in a..basis.len() {
                pairs
                    .entry(basis[a].mul(&basis[b]))
                    .or_default()
                    .push(SymEntry::new(a, b, 1.0));
            }
        }
        let monomials: BTreeSet<Monomial> = pairs.keys().cloned().chain(support).collect();
        for alpha in monomials {
            let entries = pairs.remove(&alpha).unwrap_or_default();
            let free = c
                .poly
                .sensitivities()
                .iter()
                .filter_map(|(&j, p)| {
                    let v = p.coeff(&alpha);
                    (v != 0.0).then_some((j, -v))
                })
                .collect();
            sdp.constraints.push(Constraint {
                block: if entries.is_empty() { None } else { block },
                entries,
                free,
                rhs: c.poly.constant().coeff(&alpha),
            });
            rows.push(RowOrigin::Coefficient {
                constraint: ci,
                monomial: alpha,
            });
        }
    }

    for (i, eq) in sp.linear_equalities().iter().enumerate() {
        sdp.constraints.push(Constraint {
            block: None,
            entries: vec![],
            free: eq.coeffs.clone(),
            rhs: eq.rhs,
        });
        rows.push(RowOrigin::Equality(i));
    }

    for (j, &(lo, hi)) in sp.bounds().iter().enumerate() {
        // y - s = lo and y + s = hi with a scalar slack s >= 0.
        for (end, sign, origin) in [
            (lo, -1.0, RowOrigin::LowerBound(j)),
            (hi, 1.0, RowOrigin::UpperBound(j)),
        ] {
            if end.is_finite() {
                let k = sdp.block_dims.len();
                sdp.block_dims.push(1);
                sdp.constraints.push(Constraint {
                    block: Some(k),
                    entries: vec![SymEntry::new(0, 0, sign)],
                    free: vec![(j, 1.0)],
                    rhs: end,
                });
                rows.push(origin);
            }
        }
    }

    Ok(CompiledSos {
        sdp,
        blocks,
        rows,
        n_decisions: nd,
    })
}
