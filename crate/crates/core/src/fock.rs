//! Number-resolved bosonic Fock space and Hamiltonian assembly.
//!
//! The Hilbert space is split into sectors of fixed total particle number
//! `N`, each truncated at `n_max` bosons per site. The Hamiltonian
//!
//! ```text
//! H = −τ Σ_{edges} (b_j† b_k + b_k† b_j) + (U/2) Σ_j n_j (n_j − 1) − μ Σ_j n_j + Σ_j A_j
//! ```
//!
//! conserves `N`, so it is assembled one sector at a time.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Graph;
use crate::sparse::{SparseOperator, C64};

/// Sectors larger than this are refused.
pub const MAX_SECTOR_DIM: usize = 200_000;

/// Occupation basis of one `(n_sites, N, n_max)` sector, ordered
/// lexicographically descending with site 0 most significant.
#[derive(Debug, Clone)]
pub struct FockBasis {
    n_sites: usize,
    total: usize,
    cutoff: usize,
    states: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

impl PartialEq for FockBasis {
    fn eq(&self, other: &Self) -> bool {
        self.n_sites == other.n_sites && self.total == other.total && self.cutoff == other.cutoff
    }
}

/// Number of compositions of `total` into `parts` parts, each at most `cap`.
pub fn sector_dimension(parts: usize, total: usize, cap: usize) -> usize {
    // dp[s] = ways to place s bosons on the sites processed so far
    let mut dp = vec![0usize; total + 1];
    dp[0] = 1;
    for _ in 0..parts {
        let mut next = vec![0usize; total + 1];
        for (s, &ways) in dp.iter().enumerate() {
            if ways == 0 {
                continue;
            }
            for k in 0..=cap.min(total - s) {
                next[s + k] = next[s + k].saturating_add(ways);
            }
        }
        dp = next;
    }
    dp[total]
}

impl FockBasis {
    pub fn new(n_sites: usize, total: usize, cutoff: usize) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::EmptyGraph);
        }
        if cutoff == 0 || cutoff > u8::MAX as usize {
            return Err(Error::BadCutoff(cutoff));
        }
        if total > n_sites * cutoff {
            return Err(Error::EmptySector {
                total,
                n_sites,
                cutoff,
            });
        }
        let dim = sector_dimension(n_sites, total, cutoff);
        if dim > MAX_SECTOR_DIM {
            return Err(Error::SectorTooLarge(dim, MAX_SECTOR_DIM));
        }
        let mut states = Vec::with_capacity(dim);
        let mut current = vec![0u8; n_sites];
        fill(&mut current, 0, total, cutoff, &mut states);
        debug_assert_eq!(states.len(), dim);
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(FockBasis {
            n_sites,
            total,
            cutoff,
            states,
            index,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Vec<u8>] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[u8] {
        &self.states[i]
    }

    pub fn index_of(&self, occupation: &[u8]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    /// True if some site sits at the cutoff.
    pub fn touches_cutoff(&self, i: usize) -> bool {
        self.states[i].iter().any(|&n| n as usize == self.cutoff)
    }

    /// Whether the per-site cutoff can alter physics in this sector. With
    /// `N ≤ n_max` no site can hold more than the cutoff anyway.
    pub fn is_truncated(&self) -> bool {
        self.total > self.cutoff
    }

    fn compatible(&self, other: &FockBasis) -> bool {
        self.n_sites == other.n_sites && self.cutoff == other.cutoff
    }
}

fn fill(current: &mut [u8], site: usize, remaining: usize, cap: usize, out: &mut Vec<Vec<u8>>) {
    let n = current.len();
    if site == n - 1 {
        if remaining <= cap {
            current[site] = remaining as u8;
            out.push(current.to_vec());
        }
        return;
    }
    let rest_cap = (n - site - 1) * cap;
    let hi = cap.min(remaining);
    let lo = remaining.saturating_sub(rest_cap);
    for k in (lo..=hi).rev() {
        current[site] = k as u8;
        fill(current, site + 1, remaining - k, cap, out);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Lower,
    Raise,
}

/// Matrix of `b_j` (lower) or `b_j†` (raise) from `from` into `to`. Raising a
/// site already at the cutoff gives zero.
pub fn ladder_matrix(
    from: &FockBasis,
    to: &FockBasis,
    site: usize,
    kind: Ladder,
) -> Result<SparseOperator> {
    let expected = match kind {
        Ladder::Lower => from.total.checked_sub(1),
        Ladder::Raise => Some(from.total + 1),
    };
    if !from.compatible(to) || expected != Some(to.total) {
        return Err(Error::SectorMismatch(format!(
            "{kind:?} from N = {} cannot land in N = {}",
            from.total, to.total
        )));
    }
    check_site(site, from.n_sites)?;
    let mut trip = Vec::new();
    let mut occ = Vec::with_capacity(from.n_sites);
    for (col, state) in from.states.iter().enumerate() {
        let n = state[site] as usize;
        let (new_n, amp) = match kind {
            Ladder::Lower if n > 0 => (n - 1, (n as f64).sqrt()),
            Ladder::Raise if n < from.cutoff => (n + 1, ((n + 1) as f64).sqrt()),
            _ => continue,
        };
        occ.clear();
        occ.extend_from_slice(state);
        occ[site] = new_n as u8;
        let row = to
            .index_of(&occ)
            .expect("target occupation lies in the sector");
        trip.push((row, col, C64::new(amp, 0.0)));
    }
    Ok(SparseOperator::from_triplets(
        from.total,
        to.total,
        to.dim(),
        from.dim(),
        trip,
    ))
}

fn check_site(site: usize, n_sites: usize) -> Result<()> {
    if site >= n_sites {
        Err(Error::VertexOutOfRange {
            vertex: site,
            n_sites,
        })
    } else {
        Ok(())
    }
}

/// Diagonal `n_j`.
pub fn number_matrix(basis: &FockBasis, site: usize) -> Result<SparseOperator> {
    check_site(site, basis.n_sites)?;
    let diag: Vec<f64> = basis.states.iter().map(|s| s[site] as f64).collect();
    Ok(SparseOperator::diagonal(basis.total, &diag))
}

/// Diagonal `(U/2) Σ_j n_j (n_j − 1)`.
pub fn bose_hubbard_potential(u: f64, basis: &FockBasis) -> SparseOperator {
    let diag: Vec<f64> = basis
        .states
        .iter()
        .map(|s| {
            0.5 * u
                * s.iter()
                    .map(|&n| (n as f64) * (n as f64 - 1.0))
                    .sum::<f64>()
        })
        .collect();
    SparseOperator::diagonal(basis.total, &diag)
}

/// A single-site operator `A_j` given as an `(n_max+1) × (n_max+1)` matrix in
/// the local occupation basis. Only diagonal matrices are accepted by the
/// Hamiltonian builder, which is what `[n_j, A_j] = 0` demands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsiteTerm {
    pub site: usize,
    pub local: Vec<Vec<f64>>,
}

impl OnsiteTerm {
    pub fn diagonal(site: usize, values: &[f64]) -> Self {
        let n = values.len();
        let local = (0..n)
            .map(|r| {
                (0..n)
                    .map(|c| if r == c { values[r] } else { 0.0 })
                    .collect()
            })
            .collect();
        OnsiteTerm { site, local }
    }

    /// `coeff · n_j^power`.
    pub fn power(site: usize, coeff: f64, power: i32, cutoff: usize) -> Self {
        let values: Vec<f64> = (0..=cutoff)
            .map(|n| coeff * (n as f64).powi(power))
            .collect();
        Self::diagonal(site, &values)
    }

    fn diagonal_values(&self, cutoff: usize) -> Result<Vec<f64>> {
        let expected = cutoff + 1;
        if self.local.len() != expected || self.local.iter().any(|row| row.len() != expected) {
            return Err(Error::OnsiteShape {
                site: self.site,
                got: self.local.len(),
                expected,
            });
        }
        for (r, row) in self.local.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if r != c && v != 0.0 {
                    return Err(Error::NonDiagonalOnsite { site: self.site });
                }
            }
        }
        Ok((0..expected).map(|i| self.local[i][i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub tau: f64,
    #[serde(rename = "U", default)]
    pub u: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub onsite: Vec<OnsiteTerm>,
}

impl ModelParams {
    pub fn bose_hubbard(tau: f64, u: f64) -> Self {
        ModelParams {
            tau,
            u,
            mu: 0.0,
            onsite: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::NonPositiveTau(self.tau));
        }
        Ok(())
    }
}

/// On-site part `V` of the Hamiltonian: Bose-Hubbard term, chemical
/// potential and custom diagonal terms.
pub fn onsite_potential(params: &ModelParams, basis: &FockBasis) -> Result<Vec<f64>> {
    let mut tables = Vec::with_capacity(params.onsite.len());
    for term in &params.onsite {
        check_site(term.site, basis.n_sites)?;
        tables.push((term.site, term.diagonal_values(basis.cutoff)?));
    }
    Ok(basis
        .states
        .iter()
        .map(|s| {
            let mut e = 0.0;
            for &n in s {
                let n = n as f64;
                e += 0.5 * params.u * n * (n - 1.0) - params.mu * n;
            }
            for (site, table) in &tables {
                e += table[s[*site] as usize];
            }
            e
        })
        .collect())
}

/// `H` restricted to `basis`.
pub fn build_hamiltonian(
    graph: &Graph,
    params: &ModelParams,
    basis: &FockBasis,
) -> Result<SparseOperator> {
    params.validate()?;
    if graph.n_sites() != basis.n_sites {
        return Err(Error::SectorMismatch(format!(
            "graph has {} sites but basis has {}",
            graph.n_sites(),
            basis.n_sites
        )));
    }
    let onsite = onsite_potential(params, basis)?;
    let mut trip: Vec<(usize, usize, C64)> = onsite
        .iter()
        .enumerate()
        .map(|(i, &e)| (i, i, C64::new(e, 0.0)))
        .collect();
    let mut occ = Vec::with_capacity(basis.n_sites);
    for (col, state) in basis.states.iter().enumerate() {
        for &(a, b) in graph.edges() {
            for (j, k) in [(a, b), (b, a)] {
                if let Some((row, amp)) = hop(basis, state, j, k, &mut occ) {
                    trip.push((row, col, C64::new(-params.tau * amp, 0.0)));
                }
            }
        }
    }
    let mut h =
        SparseOperator::from_triplets(basis.total, basis.total, basis.dim(), basis.dim(), trip);
    h.mark_hermitian(1e-14);
    Ok(h)
}

/// `b_j† b_k |state⟩ = amp |row⟩`, `None` if it vanishes.
fn hop(
    basis: &FockBasis,
    state: &[u8],
    j: usize,
    k: usize,
    scratch: &mut Vec<u8>,
) -> Option<(usize, f64)> {
    let (nj, nk) = (state[j] as usize, state[k] as usize);
    if nk == 0 || nj >= basis.cutoff {
        return None;
    }
    scratch.clear();
    scratch.extend_from_slice(state);
    scratch[j] += 1;
    scratch[k] -= 1;
    let row = basis
        .index_of(scratch)
        .expect("hopped occupation lies in the sector");
    Some((row, (((nj + 1) * nk) as f64).sqrt()))
}

/// All nonzero matrix elements of `b_j† b_k` (`j ≠ k`) on one sector, plus the
/// occupation table for the diagonal. Used to evaluate one-body correlations.
#[derive(Debug, Clone)]
pub struct OneBodyTable {
    n_sites: usize,
    /// `(j, k, from, to, amp)` with `b_j† b_k |from⟩ = amp |to⟩`.
    hops: Vec<(usize, usize, usize, usize, f64)>,
    occupations: Vec<Vec<f64>>,
    at_cutoff: Vec<bool>,
    truncated: bool,
}

impl OneBodyTable {
    pub fn new(basis: &FockBasis) -> Self {
        let n = basis.n_sites;
        let mut hops = Vec::new();
        let mut scratch = Vec::with_capacity(n);
        for (from, state) in basis.states.iter().enumerate() {
            for j in 0..n {
                for k in 0..n {
                    if j == k {
                        continue;
                    }
                    if let Some((to, amp)) = hop(basis, state, j, k, &mut scratch) {
                        hops.push((j, k, from, to, amp));
                    }
                }
            }
        }
        OneBodyTable {
            n_sites: n,
            hops,
            occupations: basis
                .states
                .iter()
                .map(|s| s.iter().map(|&x| x as f64).collect())
                .collect(),
            at_cutoff: (0..basis.dim()).map(|i| basis.touches_cutoff(i)).collect(),
            truncated: basis.is_truncated(),
        }
    }

    /// Adds `weight · ⟨v| b_j† b_k |v⟩` to `acc[(j, k)]`.
    pub fn accumulate(&self, v: &[C64], weight: f64, acc: &mut DMatrix<C64>) {
        for (i, occ) in self.occupations.iter().enumerate() {
            let p = v[i].norm_sqr() * weight;
            if p == 0.0 {
                continue;
            }
            for (j, &n) in occ.iter().enumerate() {
                acc[(j, j)] += C64::new(p * n, 0.0);
            }
        }
        for &(j, k, from, to, amp) in &self.hops {
            acc[(j, k)] += v[to].conj() * v[from] * (amp * weight);
        }
    }

    /// Dense `Σ_{jk} coeffs[j][k] b_j† b_k` on this sector.
    pub fn operator(&self, coeffs: &DMatrix<f64>) -> DMatrix<C64> {
        let dim = self.occupations.len();
        let mut out = DMatrix::zeros(dim, dim);
        for (i, occ) in self.occupations.iter().enumerate() {
            let d: f64 = occ
                .iter()
                .enumerate()
                .map(|(j, &n)| coeffs[(j, j)] * n)
                .sum();
            out[(i, i)] = C64::new(d, 0.0);
        }
        for &(j, k, from, to, amp) in &self.hops {
            out[(to, from)] += C64::new(coeffs[(j, k)] * amp, 0.0);
        }
        out
    }

    /// `⟨v| n_j |v⟩` for every site.
    pub fn numbers(&self, v: &[C64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_sites];
        for (i, occ) in self.occupations.iter().enumerate() {
            let p = v[i].norm_sqr();
            for (j, &n) in occ.iter().enumerate() {
                out[j] += p * n;
            }
        }
        out
    }

    /// Population on basis states with a site at the cutoff, counted only
    /// when the cutoff can bind (`N > n_max`).
    pub fn leakage(&self, v: &[C64]) -> f64 {
        if !self.truncated {
            return 0.0;
        }
        v.iter()
            .zip(&self.at_cutoff)
            .filter(|(_, &hit)| hit)
            .map(|(a, _)| a.norm_sqr())
            .sum()
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }
}

/// Spectrum of a sector Hamiltonian, eigenvalues ascending, eigenvectors as
/// columns. Signs are fixed so that the largest-modulus entry of each
/// eigenvector is positive.
#[derive(Debug, Clone)]
pub struct SectorEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SectorEigen {
    pub fn new(h: &SparseOperator) -> Result<Self> {
        let dense = h.to_dense_real();
        let dim = dense.nrows();
        let eig = SymmetricEigen::new(dense.clone());
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .partial_cmp(&eig.eigenvalues[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let values = DVector::from_iterator(dim, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(dim, dim);
        for (new, &old) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(old).clone_owned();
            let pivot = col.iter().enumerate().fold((0, 0.0f64), |best, (i, x)| {
                if x.abs() > best.1 + 1e-12 {
                    (i, x.abs())
                } else {
                    best
                }
            });
            if col[pivot.0] < 0.0 {
                col.neg_mut();
            }
            vectors.set_column(new, &col);
        }
        let residual = (&dense * &vectors - &vectors * DMatrix::from_diagonal(&values)).amax();
        let scale = 1.0 + values.amax();
        if !residual.is_finite() || residual > 1e-9 * scale {
            return Err(Error::EigenFailure(residual));
        }
        Ok(SectorEigen { values, vectors })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, i: usize) -> Vec<C64> {
        self.vectors
            .column(i)
            .iter()
            .map(|&x| C64::new(x, 0.0))
            .collect()
    }
}

/// One number sector of a model: basis, Hamiltonian, one-body table and a
/// lazily computed spectrum.
#[derive(Debug)]
pub struct Sector {
    pub basis: FockBasis,
    pub hamiltonian: SparseOperator,
    pub one_body: OneBodyTable,
    eigen: OnceLock<std::result::Result<SectorEigen, Error>>,
}

impl Sector {
    pub fn eigen(&self) -> Result<&SectorEigen> {
        self.eigen
            .get_or_init(|| SectorEigen::new(&self.hamiltonian))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn total(&self) -> usize {
        self.basis.total
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }
}

/// A Hamiltonian on a graph with a per-site cutoff, handing out sectors on
/// demand. Sectors are built once and shared.
#[derive(Debug)]
pub struct Model {
    graph: Graph,
    params: ModelParams,
    cutoff: usize,
    sectors: Mutex<BTreeMap<usize, Arc<Sector>>>,
}

impl Model {
    pub fn new(graph: Graph, params: ModelParams, cutoff: usize) -> Result<Self> {
        params.validate()?;
        if cutoff == 0 {
            return Err(Error::BadCutoff(cutoff));
        }
        for term in &params.onsite {
            check_site(term.site, graph.n_sites())?;
            term.diagonal_values(cutoff)?;
        }
        Ok(Model {
            graph,
            params,
            cutoff,
            sectors: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn n_sites(&self) -> usize {
        self.graph.n_sites()
    }

    /// Largest `N` with a nonempty sector.
    pub fn max_total(&self) -> usize {
        self.n_sites() * self.cutoff
    }

    pub fn sector(&self, total: usize) -> Result<Arc<Sector>> {
        if let Some(s) = self.sectors.lock().expect("sector cache").get(&total) {
            return Ok(Arc::clone(s));
        }
        let basis = FockBasis::new(self.n_sites(), total, self.cutoff)?;
        let hamiltonian = build_hamiltonian(&self.graph, &self.params, &basis)?;
        let one_body = OneBodyTable::new(&basis);
        let sector = Arc::new(Sector {
            basis,
            hamiltonian,
            one_body,
            eigen: OnceLock::new(),
        });
        let mut cache = self.sectors.lock().expect("sector cache");
        Ok(Arc::clone(cache.entry(total).or_insert(sector)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn enumeration_examples() {
        let b = FockBasis::new(2, 2, 2).unwrap();
        assert_eq!(b.states(), &[vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(FockBasis::new(3, 1, 1).unwrap().dim(), 3);
        let b = FockBasis::new(2, 2, 1).unwrap();
        assert_eq!(b.states(), &[vec![1, 1]]);
        assert!(matches!(
            FockBasis::new(2, 5, 2),
            Err(Error::EmptySector { .. })
        ));
        assert!(FockBasis::new(2, 0, 0).is_err());
        let vac = FockBasis::new(4, 0, 3).unwrap();
        assert_eq!(vac.states(), &[vec![0, 0, 0, 0]]);
    }

    #[test]
    fn dimension_count_matches_brute_force() {
        for n in 1..5usize {
            for cap in 1..4usize {
                for total in 0..=(n * cap) {
                    let brute = (0..(cap + 1).pow(n as u32))
                        .filter(|&code| {
                            let mut c = code;
                            let mut s = 0;
                            for _ in 0..n {
                                s += c % (cap + 1);
                                c /= cap + 1;
                            }
                            s == total
                        })
                        .count();
                    assert_eq!(sector_dimension(n, total, cap), brute);
                    assert_eq!(FockBasis::new(n, total, cap).unwrap().dim(), brute);
                }
            }
        }
    }

    #[test]
    fn ordering_and_index() {
        let b = FockBasis::new(3, 3, 2).unwrap();
        for w in b.states().windows(2) {
            assert!(w[0] > w[1]);
        }
        for i in 0..b.dim() {
            assert_eq!(b.index_of(b.state(i)), Some(i));
        }
    }

    #[test]
    fn single_site_lowering() {
        let b: Vec<_> = (0..=2).map(|n| FockBasis::new(1, n, 2).unwrap()).collect();
        let l1 = ladder_matrix(&b[1], &b[0], 0, Ladder::Lower).unwrap();
        assert_eq!(l1.get(0, 0), c(1.0));
        let l2 = ladder_matrix(&b[2], &b[1], 0, Ladder::Lower).unwrap();
        assert!((l2.get(0, 0) - c(2f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn raise_at_cutoff_vanishes() {
        let from = FockBasis::new(2, 2, 2).unwrap();
        let to = FockBasis::new(2, 3, 2).unwrap();
        let r = ladder_matrix(&from, &to, 0, Ladder::Raise).unwrap();
        // column of (2,0) is empty
        assert!((0..to.dim()).all(|row| r.get(row, 0) == c(0.0)));
        assert!(ladder_matrix(&from, &from, 0, Ladder::Raise).is_err());
        assert!(ladder_matrix(&from, &to, 0, Ladder::Lower).is_err());
    }

    #[test]
    fn number_from_ladders() {
        for total in 1..=3 {
            let b = FockBasis::new(3, total, 3).unwrap();
            let down = FockBasis::new(3, total - 1, 3).unwrap();
            for j in 0..3 {
                let lower = ladder_matrix(&b, &down, j, Ladder::Lower).unwrap();
                let raise = ladder_matrix(&down, &b, j, Ladder::Raise).unwrap();
                let n = raise.matmul(&lower);
                assert!(n.sub(&number_matrix(&b, j).unwrap()).max_abs() < 1e-14);
            }
        }
    }

    #[test]
    fn number_operator_examples() {
        let b = FockBasis::new(2, 2, 2).unwrap();
        let n0 = number_matrix(&b, 0).unwrap();
        assert_eq!(n0.diagonal_entries(), vec![c(2.0), c(1.0), c(0.0)]);
        let total = number_matrix(&b, 0)
            .unwrap()
            .add(&number_matrix(&b, 1).unwrap());
        assert!(
            total
                .sub(&SparseOperator::identity(2, 3).scale(c(2.0)))
                .max_abs()
                < 1e-15
        );
        assert!(matches!(
            number_matrix(&b, 2),
            Err(Error::VertexOutOfRange { .. })
        ));
    }

    #[test]
    fn bose_hubbard_energies() {
        let b = FockBasis::new(2, 2, 3).unwrap();
        let v = bose_hubbard_potential(1.0, &b);
        let i20 = b.index_of(&[2, 0]).unwrap();
        let i11 = b.index_of(&[1, 1]).unwrap();
        assert_eq!(v.get(i20, i20), c(1.0));
        assert_eq!(v.get(i11, i11), c(0.0));
        let b3 = FockBasis::new(2, 3, 3).unwrap();
        let v3 = bose_hubbard_potential(2.0, &b3);
        let i30 = b3.index_of(&[3, 0]).unwrap();
        assert_eq!(v3.get(i30, i30), c(6.0));
    }

    #[test]
    fn two_site_single_particle() {
        let g = Graph::path(2).unwrap();
        let b = FockBasis::new(2, 1, 2).unwrap();
        let h = build_hamiltonian(&g, &ModelParams::bose_hubbard(1.0, 7.0), &b).unwrap();
        let dense = h.to_dense_real();
        assert_eq!(
            dense,
            DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0])
        );
        let eig = SectorEigen::new(&h).unwrap();
        assert!((eig.values[0] + 1.0).abs() < 1e-14);
        assert!((eig.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn custom_onsite_terms() {
        let g = Graph::path(2).unwrap();
        let b = FockBasis::new(2, 2, 2).unwrap();
        let mut p = ModelParams::bose_hubbard(1.0, 0.0);
        p.onsite.push(OnsiteTerm::power(1, 0.5, 4, 2));
        let h = build_hamiltonian(&g, &p, &b).unwrap();
        let i02 = b.index_of(&[0, 2]).unwrap();
        assert_eq!(h.get(i02, i02), c(8.0));
        for j in 0..2 {
            let n = number_matrix(&b, j).unwrap();
            let v = SparseOperator::diagonal(2, &onsite_potential(&p, &b).unwrap());
            assert_eq!(n.matmul(&v).sub(&v.matmul(&n)).max_abs(), 0.0);
        }
        let mut bad = p.clone();
        bad.onsite[0].local[0][1] = 0.1;
        assert_eq!(
            build_hamiltonian(&g, &bad, &b),
            Err(Error::NonDiagonalOnsite { site: 1 })
        );
        let mut wrong = p.clone();
        wrong.onsite[0] = OnsiteTerm::diagonal(1, &[0.0, 1.0]);
        assert!(matches!(
            build_hamiltonian(&g, &wrong, &b),
            Err(Error::OnsiteShape { .. })
        ));
    }

    #[test]
    fn one_body_table_matches_operators() {
        let b = FockBasis::new(3, 2, 2).unwrap();
        let down = FockBasis::new(3, 1, 2).unwrap();
        let table = OneBodyTable::new(&b);
        let v: Vec<C64> = (0..b.dim())
            .map(|i| C64::new(1.0 + i as f64, 0.3 * i as f64))
            .collect();
        let mut acc = DMatrix::zeros(3, 3);
        table.accumulate(&v, 1.0, &mut acc);
        for j in 0..3 {
            for k in 0..3 {
                let bk = ladder_matrix(&b, &down, k, Ladder::Lower).unwrap();
                let bj_dag = ladder_matrix(&down, &b, j, Ladder::Raise).unwrap();
                let op = bj_dag.matmul(&bk);
                let w = op.matvec(&v);
                let expect = crate::sparse::inner(&v, &w);
                assert!((acc[(j, k)] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn model_caches_sectors() {
        let m = Model::new(
            Graph::path(3).unwrap(),
            ModelParams::bose_hubbard(1.0, 1.0),
            2,
        )
        .unwrap();
        let a = m.sector(2).unwrap();
        let b = m.sector(2).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert!(m.sector(7).is_err());
    }
}
