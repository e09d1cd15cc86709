//! Manifold-resolved eigenanalysis of the effective Hamiltonian and state naming.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fockspace::{FockSpace, PairExchange};
use crate::linalg::eig_general;
use crate::oracle::{analytic_two_excitation, collective_states, two_excitation_states, CollectiveBasis};
use crate::operator::ComplexOperator;

/// Relative size of inter-manifold matrix elements tolerated by [`spectrum`].
pub const CONSERVATION_TOL: f64 = 1e-10;
/// Symmetry threshold for ideal (identical-transmon) configurations.
pub const SYMMETRY_EPS_IDEAL: f64 = 1e-3;
/// Symmetry threshold for measured, slightly asymmetric parameters.
pub const SYMMETRY_EPS_MEASURED: f64 = 0.1;
/// Two candidates closer than this in overlap make an assignment ambiguous.
pub const AMBIGUITY_MARGIN: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    Symmetric,
    Antisymmetric,
    None,
}

impl Symmetry {
    pub fn as_str(&self) -> &'static str {
        match self {
            Symmetry::Symmetric => "symmetric",
            Symmetry::Antisymmetric => "antisymmetric",
            Symmetry::None => "none",
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenState {
    /// Global index: states are numbered manifold by manifold in ascending energy.
    pub label: usize,
    pub energy: f64,
    pub decay: f64,
    pub manifold: usize,
    pub pair_symmetry: Symmetry,
    pub within_pair_symmetry: Symmetry,
    /// Unit-norm right eigenvector in the full Fock basis.
    pub amplitudes: DVector<C64>,
}

impl EigenState {
    /// Complex eigenvalue `E - i Gamma / 2`.
    pub fn eigenvalue(&self) -> C64 {
        C64::new(self.energy, -0.5 * self.decay)
    }

    /// The `k` largest-magnitude Fock amplitudes as `(basis index, amplitude)`.
    pub fn top_amplitudes(&self, k: usize) -> Vec<(usize, C64)> {
        let mut idx: Vec<usize> = (0..self.amplitudes.len()).collect();
        idx.sort_by(|&a, &b| self.amplitudes[b].norm().total_cmp(&self.amplitudes[a].norm()).then(a.cmp(&b)));
        idx.into_iter().take(k).map(|i| (i, self.amplitudes[i])).collect()
    }
}

#[derive(Clone, Debug)]
pub struct ManifoldSpectrum {
    pub occupation: usize,
    /// Indices into [`EffectiveSpectrum::states`].
    pub states: Vec<usize>,
    /// Eigenvector matrix was ill conditioned; values are still reported.
    pub defective: bool,
    pub condition: f64,
}

#[derive(Clone, Debug)]
pub struct EffectiveSpectrum {
    pub states: Vec<EigenState>,
    pub manifolds: Vec<ManifoldSpectrum>,
    pub levels_per_site: usize,
    pub n_sites: usize,
}

impl EffectiveSpectrum {
    pub fn manifold_states(&self, n: usize) -> impl Iterator<Item = &EigenState> {
        self.manifolds
            .get(n)
            .map(|m| m.states.as_slice())
            .unwrap_or(&[])
            .iter()
            .map(move |&i| &self.states[i])
    }

    pub fn any_defective(&self) -> bool {
        self.manifolds.iter().any(|m| m.defective)
    }
}

/// Diagonalize `h_eff` block by block over the excitation manifolds of `space`.
pub fn spectrum(h_eff: &ComplexOperator, space: &FockSpace) -> Result<EffectiveSpectrum> {
    if h_eff.dim() != space.dim() {
        return Err(Error::SizeMismatch {
            expected: space.dim(),
            got: h_eff.dim(),
        });
    }
    let h = h_eff.matrix();
    let leak = manifold_leakage(h, space);
    if leak > CONSERVATION_TOL * h.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidParameter(format!(
            "Hamiltonian couples different excitation manifolds (off-block norm {leak:.3e})"
        )));
    }

    let permutations = if space.n_sites() == 4 {
        Some((
            space.pair_exchange_permutation(PairExchange::PairSwap)?,
            space.pair_exchange_permutation(PairExchange::WithinPairSwap)?,
        ))
    } else {
        None
    };
    let eps = symmetry_eps(h, space);

    let mut states = Vec::with_capacity(space.dim());
    let mut manifolds = Vec::new();
    for n in 0..=space.max_manifold() {
        let idx = space.manifold(n);
        let m = idx.len();
        let mut block = DMatrix::from_fn(m, m, |r, c| h[(idx[r], idx[c])]);
        // remove the common carrier energy before the eigensolver sees it
        let shift = (0..m).map(|i| block[(i, i)].re).sum::<f64>() / m as f64;
        for i in 0..m {
            block[(i, i)] -= C64::new(shift, 0.0);
        }
        let eig = eig_general(&block);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            eig.values[a]
                .re
                .total_cmp(&eig.values[b].re)
                .then((-eig.values[a].im).total_cmp(&-eig.values[b].im))
        });
        let mut members = Vec::with_capacity(m);
        for &k in &order {
            let mut v = DVector::<C64>::zeros(space.dim());
            for (r, &i) in idx.iter().enumerate() {
                v[i] = eig.right[(r, k)];
            }
            fix_phase(&mut v);
            let (pair_symmetry, within_pair_symmetry) = match &permutations {
                Some((p, w)) => (classify_symmetry(&v, p, eps), classify_symmetry(&v, w, eps)),
                None => (Symmetry::None, Symmetry::None),
            };
            members.push(states.len());
            states.push(EigenState {
                label: states.len(),
                energy: eig.values[k].re + shift,
                decay: -2.0 * eig.values[k].im,
                manifold: n,
                pair_symmetry,
                within_pair_symmetry,
                amplitudes: v,
            });
        }
        manifolds.push(ManifoldSpectrum {
            occupation: n,
            states: members,
            defective: eig.is_defective(),
            condition: eig.condition,
        });
        if eig.is_defective() {
            log::warn!("manifold N = {n}: defective eigenbasis (condition {:.3e})", eig.condition);
        }
    }
    Ok(EffectiveSpectrum {
        states,
        manifolds,
        levels_per_site: space.levels_per_site(),
        n_sites: space.n_sites(),
    })
}

fn manifold_leakage(h: &DMatrix<C64>, space: &FockSpace) -> f64 {
    let mut sum = 0.0;
    for r in 0..space.dim() {
        for c in 0..space.dim() {
            if space.total_occupation(r) != space.total_occupation(c) {
                sum += h[(r, c)].norm_sqr();
            }
        }
    }
    sum.sqrt()
}

/// Use the tight threshold when the diagonal is exactly pair-symmetric.
fn symmetry_eps(h: &DMatrix<C64>, space: &FockSpace) -> f64 {
    if space.n_sites() != 4 {
        return SYMMETRY_EPS_IDEAL;
    }
    let p = match space.pair_exchange_permutation(PairExchange::PairSwap) {
        Ok(p) => p,
        Err(_) => return SYMMETRY_EPS_MEASURED,
    };
    let w = space.pair_exchange_permutation(PairExchange::WithinPairSwap).expect("4 sites");
    let scale = h.norm().max(f64::MIN_POSITIVE);
    let commutes = |op: &ComplexOperator| (op.matrix() * h - h * op.matrix()).norm() < 1e-9 * scale;
    if commutes(&p) && commutes(&w) {
        SYMMETRY_EPS_IDEAL
    } else {
        SYMMETRY_EPS_MEASURED
    }
}

/// Rotate the global phase so the largest amplitude is real and positive.
fn fix_phase(v: &mut DVector<C64>) {
    let big = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm()));
    if let Some(z) = big {
        if z.norm() > 0.0 {
            let ph = z.conj() / z.norm();
            v.iter_mut().for_each(|x| *x *= ph);
        }
    }
}

/// Exchange symmetry of `state` under the permutation `perm`.
pub fn classify_symmetry(state: &DVector<C64>, perm: &ComplexOperator, eps: f64) -> Symmetry {
    let norm = state.norm_squared();
    if norm == 0.0 {
        return Symmetry::None;
    }
    let expect = perm.matrix_element(state, state).re / norm;
    if expect > 1.0 - eps {
        Symmetry::Symmetric
    } else if expect < -(1.0 - eps) {
        Symmetry::Antisymmetric
    } else {
        Symmetry::None
    }
}

/// Identical-transmon parameters feeding the two-excitation closed forms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClosedFormParams {
    pub gamma: f64,
    pub exchange: f64,
    pub anharmonicity: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NamedState {
    pub name: String,
    /// Index into [`EffectiveSpectrum::states`].
    pub index: usize,
    /// Squared overlap with the reference state (1 when no reference exists).
    pub overlap: f64,
    /// Reference state in the Fock basis, when one exists.
    #[serde(skip)]
    pub reference: Option<DVector<C64>>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct NamedStates {
    pub states: BTreeMap<String, NamedState>,
}

impl NamedStates {
    pub fn get(&self, name: &str) -> Option<&NamedState> {
        self.states.get(name)
    }

    /// Numerical eigenvector assigned to `name`.
    pub fn vector<'a>(&'a self, spec: &'a EffectiveSpectrum, name: &str) -> Option<&'a DVector<C64>> {
        self.states.get(name).map(|s| &spec.states[s.index].amplitudes)
    }
}

/// Name the ground, one-excitation and (when `closed_form` is given) two-excitation
/// states by maximal overlap with the collective reference states.
///
/// Exactly degenerate eigenstates are first rotated onto the projections of the
/// references that live in their eigenspace, so the naming is unique.
pub fn identify_named_states(
    spec: &mut EffectiveSpectrum,
    space: &FockSpace,
    closed_form: Option<ClosedFormParams>,
) -> Result<NamedStates> {
    if space.n_sites() != 4 || spec.n_sites != 4 {
        return Err(Error::UnsupportedSiteCount {
            expected: 4,
            got: space.n_sites(),
        });
    }
    let basis = collective_states(space)?;
    let mut out = NamedStates::default();

    let ground_idx = spec.manifolds[0].states[0];
    out.states.insert(
        "G".into(),
        NamedState {
            name: "G".into(),
            index: ground_idx,
            overlap: 1.0,
            reference: Some(basis.ground.clone()),
        },
    );

    let one: Vec<(String, DVector<C64>)> = basis
        .one_excitation()
        .iter()
        .map(|(n, v)| (n.to_string(), (*v).clone()))
        .collect();
    assign_manifold(spec, 1, &one, &mut out)?;

    if let Some(p) = closed_form {
        if spec.manifolds.len() > 2 {
            let two = reference_two_excitation(&basis, p)?;
            assign_manifold(spec, 2, &two, &mut out)?;
            let taken: Vec<usize> = out.states.values().map(|s| s.index).collect();
            let mut rest: Vec<usize> = spec.manifolds[2]
                .states
                .iter()
                .copied()
                .filter(|i| !taken.contains(i))
                .collect();
            rest.sort_by(|&a, &b| spec.states[a].energy.total_cmp(&spec.states[b].energy));
            for (name, idx) in ["6", "13", "14"].iter().zip(rest) {
                out.states.insert(
                    name.to_string(),
                    NamedState {
                        name: name.to_string(),
                        index: idx,
                        overlap: 1.0,
                        reference: None,
                    },
                );
            }
        }
    }
    Ok(out)
}

fn reference_two_excitation(basis: &CollectiveBasis, p: ClosedFormParams) -> Result<Vec<(String, DVector<C64>)>> {
    let coeffs = analytic_two_excitation(p.gamma, p.exchange, p.anharmonicity)?;
    Ok(two_excitation_states(basis, &coeffs)
        .into_iter()
        .map(|(n, v)| (n.to_string(), v))
        .collect())
}

fn assign_manifold(
    spec: &mut EffectiveSpectrum,
    n: usize,
    refs: &[(String, DVector<C64>)],
    out: &mut NamedStates,
) -> Result<()> {
    let members = spec.manifolds[n].states.clone();
    align_degenerate_clusters(spec, &members, refs);

    let overlap = |i: usize, r: &DVector<C64>| {
        let v = &spec.states[i].amplitudes;
        v.dotc(r).norm_sqr() / (v.norm_squared() * r.norm_squared())
    };
    let mut used = Vec::new();
    for (name, r) in refs {
        let mut scored: Vec<(usize, f64)> = members.iter().map(|&i| (i, overlap(i, r))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        let (best, ov) = scored[0];
        if scored.len() > 1 && ov - scored[1].1 < AMBIGUITY_MARGIN {
            return Err(Error::AmbiguousAssignment {
                label: name.clone(),
                candidates: scored.iter().take(3).copied().collect(),
            });
        }
        if used.contains(&best) {
            return Err(Error::AmbiguousAssignment {
                label: name.clone(),
                candidates: scored.iter().take(3).copied().collect(),
            });
        }
        used.push(best);
        out.states.insert(
            name.clone(),
            NamedState {
                name: name.clone(),
                index: best,
                overlap: ov,
                reference: Some(r.clone()),
            },
        );
    }
    Ok(())
}

/// Within each cluster of numerically equal eigenvalues, replace the arbitrary
/// eigenbasis by the projections of the references that lie in the cluster.
fn align_degenerate_clusters(spec: &mut EffectiveSpectrum, members: &[usize], refs: &[(String, DVector<C64>)]) {
    let scale = members
        .iter()
        .map(|&i| spec.states[i].eigenvalue().norm())
        .fold(0.0, f64::max)
        .max(members.iter().map(|&i| spec.states[i].decay.abs()).fold(0.0, f64::max))
        .max(1.0);
    let tol = 1e-9 * scale;
    let mut done = vec![false; members.len()];
    for a in 0..members.len() {
        if done[a] {
            continue;
        }
        let lam = spec.states[members[a]].eigenvalue();
        let cluster: Vec<usize> = (a..members.len())
            .filter(|&b| !done[b] && (spec.states[members[b]].eigenvalue() - lam).norm() <= tol)
            .collect();
        for &b in &cluster {
            done[b] = true;
        }
        if cluster.len() < 2 {
            continue;
        }
        let dim = spec.states[members[a]].amplitudes.len();
        let vecs: Vec<DVector<C64>> = cluster.iter().map(|&b| spec.states[members[b]].amplitudes.clone()).collect();
        let q = orthonormal_columns(&vecs, dim);
        let inside: Vec<DVector<C64>> = refs
            .iter()
            .map(|(_, r)| {
                let coeff = q.adjoint() * r;
                &q * coeff
            })
            .filter(|proj| proj.norm_squared() > 0.5)
            .collect();
        if inside.len() != cluster.len() {
            continue;
        }
        for (&b, proj) in cluster.iter().zip(inside) {
            let mut v = proj.clone() / C64::new(proj.norm(), 0.0);
            fix_phase(&mut v);
            spec.states[members[b]].amplitudes = v;
        }
    }
}

fn orthonormal_columns(vecs: &[DVector<C64>], dim: usize) -> DMatrix<C64> {
    let mut cols: Vec<DVector<C64>> = Vec::new();
    for v in vecs {
        let mut w = v.clone();
        for c in &cols {
            let proj = c.dotc(&w);
            w -= c * proj;
        }
        let n = w.norm();
        if n > 1e-12 {
            cols.push(w / C64::new(n, 0.0));
        }
    }
    let mut q = DMatrix::zeros(dim, cols.len());
    for (k, c) in cols.iter().enumerate() {
        q.set_column(k, c);
    }
    q
}
