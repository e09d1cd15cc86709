//! Truncated multi-transmon Fock spaces and the elementary operators built on them.
//!
//! Basis ordering is site-1-major lexicographic: the flat index of the
//! occupation tuple `(n_1, ..., n_N)` is `sum_j n_j * d^(N-1-j)`, so `|0000>`
//! is index 0, `|0001>` index 1, and `|1000>` index `d^3`. CSV output and
//! test vectors rely on this ordering.
//!
//! A space may additionally be capped in total excitation number. The capped
//! basis keeps the lexicographic order of the surviving tuples, so indices no
//! longer follow the closed form above.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::operator::ComplexOperator;

pub const DEFAULT_DIM_CAP: usize = 4096;
pub const DEFAULT_LEVELS: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FockSpace {
    n_sites: usize,
    levels: usize,
    dim: usize,
    max_excitation: Option<usize>,
    occupations: Vec<Vec<usize>>,
    manifolds: Vec<Vec<usize>>,
}

impl FockSpace {
    pub fn new(n_sites: usize, levels_per_site: usize) -> Result<Self> {
        Self::with_cap(n_sites, levels_per_site, DEFAULT_DIM_CAP)
    }

    pub fn with_cap(n_sites: usize, levels_per_site: usize, cap: usize) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::InvalidSpace("n_sites must be at least 1".into()));
        }
        if levels_per_site < 2 {
            return Err(Error::InvalidSpace("levels_per_site must be at least 2".into()));
        }
        let dim = (levels_per_site as u128)
            .checked_pow(n_sites as u32)
            .filter(|&d| d <= cap as u128)
            .ok_or(Error::DimensionCap {
                n_sites,
                levels: levels_per_site,
                dim: (levels_per_site as f64).powi(n_sites as i32) as usize,
                cap,
            })? as usize;

        Ok(Self::build(n_sites, levels_per_site, dim, None))
    }

    /// Space keeping only states with total occupation `<= max_excitation`.
    ///
    /// Raising operators that would leave the space are truncated to zero,
    /// exactly as at the per-site level cutoff.
    pub fn with_max_excitation(
        n_sites: usize,
        levels_per_site: usize,
        max_excitation: usize,
    ) -> Result<Self> {
        let full = Self::with_cap(n_sites, levels_per_site, usize::MAX)?;
        let space = Self::build(n_sites, levels_per_site, full.dim, Some(max_excitation));
        if space.dim > DEFAULT_DIM_CAP {
            return Err(Error::DimensionCap {
                n_sites,
                levels: levels_per_site,
                dim: space.dim,
                cap: DEFAULT_DIM_CAP,
            });
        }
        Ok(space)
    }

    fn build(n_sites: usize, levels: usize, full_dim: usize, max_excitation: Option<usize>) -> Self {
        let top = n_sites * (levels - 1);
        let max_n = max_excitation.map_or(top, |m| m.min(top));
        let mut occupations = Vec::new();
        let mut manifolds = vec![Vec::new(); max_n + 1];
        for flat in 0..full_dim {
            let mut occ = vec![0; n_sites];
            let mut rest = flat;
            for site in (0..n_sites).rev() {
                occ[site] = rest % levels;
                rest /= levels;
            }
            let n: usize = occ.iter().sum();
            if n > max_n {
                continue;
            }
            manifolds[n].push(occupations.len());
            occupations.push(occ);
        }
        FockSpace {
            n_sites,
            levels,
            dim: occupations.len(),
            max_excitation: max_excitation.filter(|&m| m < top),
            occupations,
            manifolds,
        }
    }

    /// Total-excitation cap, if the space is truncated below its full range.
    pub fn max_excitation(&self) -> Option<usize> {
        self.max_excitation
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn levels_per_site(&self) -> usize {
        self.levels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn occupation(&self, index: usize) -> &[usize] {
        &self.occupations[index]
    }

    pub fn total_occupation(&self, index: usize) -> usize {
        self.occupations[index].iter().sum()
    }

    /// Flat index of an occupation tuple, or `None` if it is outside the truncation.
    pub fn index_of(&self, occupation: &[usize]) -> Option<usize> {
        if occupation.len() != self.n_sites || occupation.iter().any(|&n| n >= self.levels) {
            return None;
        }
        if self.max_excitation.is_none() {
            return Some(occupation.iter().fold(0, |acc, &n| acc * self.levels + n));
        }
        self.occupations.binary_search_by(|occ| occ.as_slice().cmp(occupation)).ok()
    }

    /// Basis indices with total occupation `n`, in ascending flat order.
    pub fn manifold(&self, n: usize) -> &[usize] {
        self.manifolds.get(n).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn max_manifold(&self) -> usize {
        self.manifolds.len() - 1
    }

    pub fn manifold_sizes(&self) -> Vec<usize> {
        self.manifolds.iter().map(Vec::len).collect()
    }

    /// Computational basis vector for an occupation tuple.
    pub fn basis_state(&self, occupation: &[usize]) -> Result<DVector<C64>> {
        let index = self.index_of(occupation).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "occupation {occupation:?} is not in a {}-site, {}-level space",
                self.n_sites, self.levels
            ))
        })?;
        let mut v = DVector::zeros(self.dim);
        v[index] = C64::new(1.0, 0.0);
        Ok(v)
    }

    /// Projector onto manifold `n`.
    pub fn manifold_projector(&self, n: usize) -> ComplexOperator {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &i in self.manifold(n) {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        ComplexOperator::from_matrix_unchecked(m).with_flags(true, true)
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.n_sites {
            return Err(Error::SiteOutOfRange {
                site,
                n_sites: self.n_sites,
            });
        }
        Ok(())
    }

    /// Annihilation operator of site `site`; the creation operator is its adjoint.
    pub fn ladder_op(&self, site: usize) -> Result<ComplexOperator> {
        self.check_site(site)?;
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (col, occ) in self.occupations.iter().enumerate() {
            let n = occ[site];
            if n == 0 {
                continue;
            }
            let mut lowered = occ.clone();
            lowered[site] -= 1;
            let row = self.index_of(&lowered).expect("lowered state stays inside truncation");
            m[(row, col)] = C64::new((n as f64).sqrt(), 0.0);
        }
        Ok(ComplexOperator::from_matrix_unchecked(m))
    }

    pub fn ladder_ops(&self) -> Vec<ComplexOperator> {
        (0..self.n_sites)
            .map(|j| self.ladder_op(j).expect("site in range"))
            .collect()
    }

    /// Per-site number operators and the total occupation operator.
    pub fn number_ops(&self) -> (Vec<ComplexOperator>, ComplexOperator) {
        let per_site: Vec<ComplexOperator> = (0..self.n_sites)
            .map(|site| {
                let diag = DVector::from_iterator(
                    self.dim,
                    self.occupations.iter().map(|occ| C64::new(occ[site] as f64, 0.0)),
                );
                ComplexOperator::from_matrix_unchecked(DMatrix::from_diagonal(&diag))
                    .with_flags(true, true)
            })
            .collect();
        let total = DVector::from_iterator(
            self.dim,
            self.occupations
                .iter()
                .map(|occ| C64::new(occ.iter().sum::<usize>() as f64, 0.0)),
        );
        let total = ComplexOperator::from_matrix_unchecked(DMatrix::from_diagonal(&total))
            .with_flags(true, true);
        (per_site, total)
    }

    /// Permutation operator for a site relabelling: site `j` is moved to `perm[j]`.
    pub fn site_permutation(&self, perm: &[usize]) -> Result<ComplexOperator> {
        if perm.len() != self.n_sites {
            return Err(Error::UnsupportedSiteCount {
                expected: perm.len(),
                got: self.n_sites,
            });
        }
        let mut seen = vec![false; self.n_sites];
        for &p in perm {
            if p >= self.n_sites || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidParameter(format!("{perm:?} is not a permutation")));
            }
        }
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (col, occ) in self.occupations.iter().enumerate() {
            let mut moved = vec![0; self.n_sites];
            for (j, &n) in occ.iter().enumerate() {
                moved[perm[j]] = n;
            }
            let row = self.index_of(&moved).expect("permuted state stays inside truncation");
            m[(row, col)] = C64::new(1.0, 0.0);
        }
        Ok(ComplexOperator::from_matrix_unchecked(m).with_flags(true, false))
    }

    /// Exchange operators of the two-pair layout (1,2)|(3,4).
    pub fn pair_exchange_permutation(&self, mode: PairExchange) -> Result<ComplexOperator> {
        if self.n_sites != 4 {
            return Err(Error::UnsupportedSiteCount {
                expected: 4,
                got: self.n_sites,
            });
        }
        match mode {
            PairExchange::PairSwap => self.site_permutation(&[2, 3, 0, 1]),
            PairExchange::WithinPairSwap => self.site_permutation(&[1, 0, 3, 2]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairExchange {
    /// 1<->3, 2<->4
    PairSwap,
    /// 1<->2, 3<->4
    WithinPairSwap,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn manifold_sizes_match_stars_and_bars() {
        let s = FockSpace::new(4, 3).unwrap();
        assert_eq!(s.dim(), 81);
        assert_eq!(&s.manifold_sizes()[..3], &[1, 4, 10]);
        assert_eq!(s.manifold_sizes().iter().sum::<usize>(), 81);

        let s = FockSpace::new(1, 2).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.manifold_sizes(), vec![1, 1]);

        let s = FockSpace::new(2, 3).unwrap();
        assert_eq!(s.dim(), 9);
        let two: Vec<_> = s.manifold(2).iter().map(|&i| s.occupation(i).to_vec()).collect();
        assert_eq!(two, vec![vec![0, 2], vec![1, 1], vec![2, 0]]);
    }

    #[test]
    fn excitation_cap_keeps_low_manifolds() {
        let full = FockSpace::new(4, 3).unwrap();
        let s = FockSpace::with_max_excitation(4, 3, 2).unwrap();
        assert_eq!(s.dim(), 15);
        assert_eq!(s.manifold_sizes(), vec![1, 4, 10]);
        assert_eq!(s.max_excitation(), Some(2));
        for i in 0..s.dim() {
            assert_eq!(s.index_of(s.occupation(i)), Some(i));
        }
        assert_eq!(s.index_of(&[1, 1, 1, 0]), None);
        let a = s.ladder_op(2).unwrap();
        let af = full.ladder_op(2).unwrap();
        for col in 0..s.dim() {
            for row in 0..s.dim() {
                let (fr, fc) = (
                    full.index_of(s.occupation(row)).unwrap(),
                    full.index_of(s.occupation(col)).unwrap(),
                );
                assert_eq!(a.matrix()[(row, col)], af.matrix()[(fr, fc)]);
            }
        }
        assert_eq!(FockSpace::with_max_excitation(4, 3, 8).unwrap(), full);
    }

    #[test]
    fn refuses_oversized_spaces() {
        let err = FockSpace::new(8, 4).unwrap_err();
        assert!(matches!(err, Error::DimensionCap { dim: 65536, cap: 4096, .. }));
        assert!(FockSpace::new(0, 3).is_err());
        assert!(FockSpace::new(3, 1).is_err());
        assert!(FockSpace::with_cap(8, 4, 1 << 16).is_ok());
    }

    #[test]
    fn ladder_lowers_single_site() {
        let s = FockSpace::new(1, 3).unwrap();
        let a = s.ladder_op(0).unwrap();
        let out = a.apply(&s.basis_state(&[2]).unwrap());
        let expected = s.basis_state(&[1]).unwrap() * c(2f64.sqrt());
        assert!((out - expected).norm() < 1e-15);
    }

    #[test]
    fn commutator_is_identity_below_truncation() {
        let s = FockSpace::new(2, 3).unwrap();
        for j in 0..2 {
            let a = s.ladder_op(j).unwrap();
            let comm = &(&a * &a.adjoint()) - &(&a.adjoint() * &a);
            for (i, occ) in (0..s.dim()).map(|i| (i, s.occupation(i))) {
                if occ[j] < 2 {
                    assert!((comm.matrix()[(i, i)] - c(1.0)).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn two_site_annihilation() {
        let s = FockSpace::new(4, 2).unwrap();
        let a1 = s.ladder_op(0).unwrap();
        let a2 = s.ladder_op(1).unwrap();
        let out = (&a1 * &a2).apply(&s.basis_state(&[1, 1, 0, 0]).unwrap());
        assert!((out - s.basis_state(&[0, 0, 0, 0]).unwrap()).norm() < 1e-15);
    }

    #[test]
    fn number_operators() {
        let s = FockSpace::new(4, 3).unwrap();
        let (n, total) = s.number_ops();
        let v = s.basis_state(&[1, 0, 1, 0]).unwrap();
        assert!((total.apply(&v) - &v * c(2.0)).norm() < 1e-15);
        let v = s.basis_state(&[0, 0, 2, 0]).unwrap();
        assert!((n[2].apply(&v) - &v * c(2.0)).norm() < 1e-15);
        let sum = n.iter().skip(1).fold(n[0].clone(), |acc, x| &acc + x);
        assert!((sum.matrix() - total.matrix()).norm() == 0.0);
    }

    #[test]
    fn total_number_trace_by_enumeration() {
        let s = FockSpace::new(4, 2).unwrap();
        let (_, total) = s.number_ops();
        // Brute force: sum of popcounts over all 16 bitstrings.
        let brute: u32 = (0u32..16).map(|b| b.count_ones()).sum();
        assert_eq!(brute, 32);
        assert!((total.matrix().trace() - c(brute as f64)).norm() < 1e-12);
    }

    #[test]
    fn pair_permutations() {
        let s = FockSpace::new(4, 3).unwrap();
        let swap = s.pair_exchange_permutation(PairExchange::PairSwap).unwrap();
        let within = s.pair_exchange_permutation(PairExchange::WithinPairSwap).unwrap();
        let out = swap.apply(&s.basis_state(&[1, 0, 0, 0]).unwrap());
        assert!((out - s.basis_state(&[0, 0, 1, 0]).unwrap()).norm() < 1e-15);

        let d1 = (s.basis_state(&[1, 0, 0, 0]).unwrap() - s.basis_state(&[0, 1, 0, 0]).unwrap())
            * c(0.5f64.sqrt());
        assert!((within.apply(&d1) + &d1).norm() < 1e-15);

        let id = DMatrix::<C64>::identity(81, 81);
        for p in [&swap, &within] {
            assert!(((p * p).matrix() - &id).norm() < 1e-15);
            assert!(((&p.adjoint() * p).matrix() - &id).norm() < 1e-15);
        }
        assert!(FockSpace::new(3, 2)
            .unwrap()
            .pair_exchange_permutation(PairExchange::PairSwap)
            .is_err());
    }

    #[test]
    fn site_out_of_range() {
        let s = FockSpace::new(2, 2).unwrap();
        assert!(matches!(s.ladder_op(2), Err(Error::SiteOutOfRange { site: 2, n_sites: 2 })));
    }
}
