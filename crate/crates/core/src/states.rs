//! Stationary reference states and covariant excitation channels.
//!
//! A channel is a list of Kraus operators `K_l`, each shifting the particle
//! number by a fixed amount, together with witnesses `D_{l,j}` for the
//! covariance relation `[n_j, K_l] = K_l D_{l,j}`. The witnesses are supplied
//! by the constructor and checked by [`validate_channel`]; they are never
//! inferred.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{ladder_matrix, number_matrix, FockBasis, Ladder, Model};
use crate::sparse::{norm_sqr, SparseOperator, C64};

/// One retained eigenvector of a stationary ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleMember {
    pub total: usize,
    pub energy: f64,
    pub weight: f64,
    pub vector: Vec<C64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    Ground,
    Thermal { beta: f64 },
    Custom,
}

/// A stationary state `ω = Σ_m p_m |v_m⟩⟨v_m|` built from energy eigenvectors.
#[derive(Debug, Clone)]
pub struct StationaryEnsemble {
    pub kind: EnsembleKind,
    pub members: Vec<EnsembleMember>,
    /// Gibbs weight removed by flooring, before renormalization.
    pub dropped_mass: f64,
    pub warnings: Vec<String>,
}

impl StationaryEnsemble {
    pub fn total_weight(&self) -> f64 {
        self.members.iter().map(|m| m.weight).sum()
    }

    /// Distinct sectors carrying weight, ascending.
    pub fn sectors(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.members.iter().map(|m| m.total).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// Ground state over the listed sectors: the lowest eigenpair of each, then
/// the sector with minimal energy. Ties go to the earlier sector and, within
/// a sector, to the earlier basis-ordered eigenvector.
pub fn ground_state(model: &Model, sectors: &[usize]) -> Result<StationaryEnsemble> {
    if sectors.is_empty() {
        return Err(Error::Config(
            "ground state needs at least one sector".into(),
        ));
    }
    let mut best: Option<EnsembleMember> = None;
    for &n in sectors {
        let sector = model.sector(n)?;
        let eig = sector.eigen()?;
        let energy = eig.values[0];
        if best.as_ref().is_none_or(|b| energy < b.energy - 1e-12) {
            best = Some(EnsembleMember {
                total: n,
                energy,
                weight: 1.0,
                vector: eig.vector(0),
            });
        }
    }
    Ok(StationaryEnsemble {
        kind: EnsembleKind::Ground,
        members: vec![best.expect("nonempty sector list")],
        dropped_mass: 0.0,
        warnings: Vec::new(),
    })
}

/// Gibbs state `e^{−βH}/Z` over the listed sectors. Eigenvectors with weight
/// below `weight_floor` are dropped and the rest renormalized.
pub fn thermal_state(
    model: &Model,
    sectors: &[usize],
    beta: f64,
    weight_floor: f64,
) -> Result<StationaryEnsemble> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::BadBeta(beta));
    }
    if !(weight_floor > 0.0 && weight_floor <= 1e-6) {
        return Err(Error::BadWeightFloor(weight_floor));
    }
    if sectors.is_empty() {
        return Err(Error::Config(
            "thermal state needs at least one sector".into(),
        ));
    }
    let mut pairs = Vec::new();
    for &n in sectors {
        let sector = model.sector(n)?;
        let eig = sector.eigen()?;
        for i in 0..eig.dim() {
            pairs.push((n, i, eig.values[i]));
        }
    }
    let e_min = pairs.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    let boltz: Vec<f64> = pairs
        .iter()
        .map(|p| (-beta * (p.2 - e_min)).exp())
        .collect();
    let z: f64 = boltz.iter().sum();
    let mut members = Vec::new();
    let mut dropped = 0.0;
    for (&(n, i, energy), b) in pairs.iter().zip(&boltz) {
        let w = b / z;
        if w < weight_floor {
            dropped += w;
            continue;
        }
        let sector = model.sector(n)?;
        members.push(EnsembleMember {
            total: n,
            energy,
            weight: w,
            vector: sector.eigen()?.vector(i),
        });
    }
    let kept: f64 = members.iter().map(|m| m.weight).sum();
    for m in &mut members {
        m.weight /= kept;
    }
    let mut warnings = Vec::new();
    if dropped > 1e-6 {
        warnings.push(format!("weight flooring dropped mass {dropped:e}"));
    }
    Ok(StationaryEnsemble {
        kind: EnsembleKind::Thermal { beta },
        members,
        dropped_mass: dropped,
        warnings,
    })
}

/// Max `‖H v − E v‖` over the retained members.
pub fn stationarity_residual(state: &StationaryEnsemble, model: &Model) -> Result<f64> {
    let mut worst = 0.0f64;
    for m in &state.members {
        let sector = model.sector(m.total)?;
        let hv = sector.hamiltonian.matvec(&m.vector);
        let r: f64 = hv
            .iter()
            .zip(&m.vector)
            .map(|(a, b)| (a - b * m.energy).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst = worst.max(r);
    }
    Ok(worst)
}

pub fn is_stationary(state: &StationaryEnsemble, model: &Model, tol: f64) -> Result<(bool, f64)> {
    let r = stationarity_residual(state, model)?;
    Ok((r < tol, r))
}

/// Replaces member `index` by a random unit vector in its sector. Only useful
/// as a negative control for [`is_stationary`].
pub fn scramble_member<R: Rng>(state: &mut StationaryEnsemble, index: usize, rng: &mut R) {
    let m = &mut state.members[index];
    let mut v: Vec<C64> = (0..m.vector.len())
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let norm = norm_sqr(&v).sqrt();
    for x in &mut v {
        *x /= norm;
    }
    m.vector = v;
}

/// Elementary single-site maps used as Kraus operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KrausKind {
    Identity,
    /// `b_j† (n_j + 1)^{−1/2}`: `|n⟩ → |n+1⟩` with amplitude 1 below the cutoff.
    RaiseIsometry {
        site: usize,
    },
    /// `b_j n_j^{−1/2}`: `|n⟩ → |n−1⟩` with amplitude 1 for `n ≥ 1`.
    LowerIsometry {
        site: usize,
    },
    /// Projector onto `n_j = 0`.
    Vacant {
        site: usize,
    },
    /// `e^{iθ n_j}`.
    Phase {
        site: usize,
        theta: f64,
    },
}

impl KrausKind {
    pub fn shift(&self) -> isize {
        match self {
            KrausKind::RaiseIsometry { .. } => 1,
            KrausKind::LowerIsometry { .. } => -1,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kraus {
    pub amplitude: f64,
    pub kind: KrausKind,
    /// `D_{l,j} = witness[j] · 1` for every site `j`.
    pub witness: Vec<f64>,
}

impl Kraus {
    /// Total number of the image sector, `None` if it does not exist (the
    /// operator then vanishes on `from`).
    pub fn image_total(&self, from: usize, max_total: usize) -> Option<usize> {
        let to = from as isize + self.kind.shift();
        (to >= 0 && to as usize <= max_total).then_some(to as usize)
    }

    /// Matrix from `from` into `to`; `to` must be the image sector.
    pub fn matrix(&self, from: &FockBasis, to: &FockBasis) -> Result<SparseOperator> {
        let expected = from.total() as isize + self.kind.shift();
        if expected != to.total() as isize {
            return Err(Error::SectorMismatch(format!(
                "Kraus {:?} maps N = {} to N = {expected}, not {}",
                self.kind,
                from.total(),
                to.total()
            )));
        }
        let a = C64::new(self.amplitude, 0.0);
        let op = match self.kind {
            KrausKind::Identity => SparseOperator::identity(from.total(), from.dim()),
            KrausKind::RaiseIsometry { site } => {
                let raw = ladder_matrix(from, to, site, Ladder::Raise)?;
                normalize_entries(&raw)
            }
            KrausKind::LowerIsometry { site } => {
                let raw = ladder_matrix(from, to, site, Ladder::Lower)?;
                normalize_entries(&raw)
            }
            KrausKind::Vacant { site } => {
                let diag: Vec<f64> = from
                    .states()
                    .iter()
                    .map(|s| if s[site] == 0 { 1.0 } else { 0.0 })
                    .collect();
                SparseOperator::diagonal(from.total(), &diag)
            }
            KrausKind::Phase { site, theta } => {
                let trip = from
                    .states()
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (i, i, C64::from_polar(1.0, theta * s[site] as f64)))
                    .collect();
                SparseOperator::from_triplets(
                    from.total(),
                    from.total(),
                    from.dim(),
                    from.dim(),
                    trip,
                )
            }
        };
        Ok(op.scale(a))
    }

    pub fn witness_operator(&self, site: usize, basis: &FockBasis) -> SparseOperator {
        SparseOperator::diagonal(basis.total(), &vec![self.witness[site]; basis.dim()])
    }
}

/// Ladder matrices carry a single entry per column; setting it to 1 turns
/// `b†` into `b† (n + 1)^{−1/2}` and `b` into `b n^{−1/2}`.
fn normalize_entries(op: &SparseOperator) -> SparseOperator {
    let (r, c) = op.shape();
    let trip = op
        .iter()
        .map(|(i, j, _)| (i, j, C64::new(1.0, 0.0)))
        .collect();
    SparseOperator::from_triplets(op.from_sector(), op.to_sector(), r, c, trip)
}

/// Quantum channel `ω ↦ Σ_l K_l ω K_l†` acting on a region.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationChannel {
    pub n_sites: usize,
    pub region: Vec<usize>,
    pub kraus: Vec<Kraus>,
    /// Total excess particle number `Σ_j x_j(0)` the channel injects.
    pub declared_n0: f64,
    pub label: String,
}

fn check_region(n_sites: usize, region: &[usize]) -> Result<Vec<usize>> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut r = region.to_vec();
    for &j in &r {
        if j >= n_sites {
            return Err(Error::VertexOutOfRange { vertex: j, n_sites });
        }
    }
    r.sort_unstable();
    r.dedup();
    Ok(r)
}

fn unit_witness(n_sites: usize, site: usize, value: f64) -> Vec<f64> {
    let mut w = vec![0.0; n_sites];
    w[site] = value;
    w
}

/// Adds exactly one boson, on site `j ∈ R` with probability `p_j` (uniform by
/// default), through the raising isometry.
pub fn add_boson_channel(
    n_sites: usize,
    region: &[usize],
    site_probabilities: Option<&[f64]>,
) -> Result<ExcitationChannel> {
    let region = check_region(n_sites, region)?;
    let probs = match site_probabilities {
        Some(p) => {
            if p.len() != region.len()
                || p.iter().any(|&x| !(x >= 0.0))
                || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12
            {
                return Err(Error::BadSiteProbabilities);
            }
            p.to_vec()
        }
        None => vec![1.0 / region.len() as f64; region.len()],
    };
    let kraus = region
        .iter()
        .zip(&probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&site, &p)| Kraus {
            amplitude: p.sqrt(),
            kind: KrausKind::RaiseIsometry { site },
            witness: unit_witness(n_sites, site, 1.0),
        })
        .collect();
    Ok(ExcitationChannel {
        n_sites,
        region,
        kraus,
        declared_n0: 1.0,
        label: "add_boson".into(),
    })
}

/// With probability `p` adds one boson (uniformly over the region), otherwise
/// does nothing.
pub fn lazy_add_channel(n_sites: usize, region: &[usize], p: f64) -> Result<ExcitationChannel> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::BadProbability(p));
    }
    let region = check_region(n_sites, region)?;
    let mut kraus = Vec::new();
    if p < 1.0 {
        kraus.push(Kraus {
            amplitude: (1.0 - p).sqrt(),
            kind: KrausKind::Identity,
            witness: vec![0.0; n_sites],
        });
    }
    if p > 0.0 {
        let share = p / region.len() as f64;
        for &site in &region {
            kraus.push(Kraus {
                amplitude: share.sqrt(),
                kind: KrausKind::RaiseIsometry { site },
                witness: unit_witness(n_sites, site, 1.0),
            });
        }
    }
    Ok(ExcitationChannel {
        n_sites,
        region,
        kraus,
        declared_n0: p,
        label: "lazy_add".into(),
    })
}

/// Removes a boson from `site` when one is present. Trace preserving, but
/// `[n_j, K] = −K` forces a negative witness: not a valid excitation.
pub fn remove_boson_channel(n_sites: usize, site: usize) -> Result<ExcitationChannel> {
    let region = check_region(n_sites, &[site])?;
    Ok(ExcitationChannel {
        n_sites,
        region,
        kraus: vec![
            Kraus {
                amplitude: 1.0,
                kind: KrausKind::LowerIsometry { site },
                witness: unit_witness(n_sites, site, -1.0),
            },
            Kraus {
                amplitude: 1.0,
                kind: KrausKind::Vacant { site },
                witness: vec![0.0; n_sites],
            },
        ],
        declared_n0: -1.0,
        label: "remove_boson".into(),
    })
}

/// On-site phase `e^{iθ n_j}`, commuting with every number operator.
pub fn phase_channel(n_sites: usize, site: usize, theta: f64) -> Result<ExcitationChannel> {
    let region = check_region(n_sites, &[site])?;
    Ok(ExcitationChannel {
        n_sites,
        region,
        kraus: vec![Kraus {
            amplitude: 1.0,
            kind: KrausKind::Phase { site, theta },
            witness: vec![0.0; n_sites],
        }],
        declared_n0: 0.0,
        label: "phase".into(),
    })
}

/// Config descriptor for a channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    #[serde(rename = "type")]
    pub kind: String,
    pub region: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site_probabilities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl ChannelSpec {
    pub fn build(&self, n_sites: usize) -> Result<ExcitationChannel> {
        let single = || -> Result<usize> {
            match self.region.as_slice() {
                [j] => Ok(*j),
                _ => Err(Error::Config(format!(
                    "{} channel needs a single-site region",
                    self.kind
                ))),
            }
        };
        match self.kind.as_str() {
            "add_boson" => {
                add_boson_channel(n_sites, &self.region, self.site_probabilities.as_deref())
            }
            "lazy_add" => {
                let p = self
                    .p
                    .ok_or_else(|| Error::Config("channel.p is required for lazy_add".into()))?;
                lazy_add_channel(n_sites, &self.region, p)
            }
            "remove_boson" => remove_boson_channel(n_sites, single()?),
            "phase" => phase_channel(n_sites, single()?, self.theta.unwrap_or(0.0)),
            other => Err(Error::Config(format!("unknown channel type `{other}`"))),
        }
    }
}

/// Largest residuals of the covariance conditions on the checked sectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub sectors: Vec<usize>,
    pub completeness: f64,
    pub covariance: f64,
    pub witness_min: f64,
    pub witness_outside_region: f64,
    pub locality: f64,
    pub tol: f64,
    pub pass: bool,
    pub failures: Vec<String>,
}

/// Checks completeness `Σ K†K = 1`, the covariance relation, witness
/// positivity and locality on each domain sector.
pub fn validate_channel(
    ch: &ExcitationChannel,
    model: &Model,
    domain: &[usize],
    tol: f64,
) -> Result<ChannelReport> {
    let n = model.n_sites();
    if ch.n_sites != n {
        return Err(Error::SectorMismatch(format!(
            "channel built for {} sites, model has {n}",
            ch.n_sites
        )));
    }
    let max_total = model.max_total();
    let mut bases: BTreeMap<usize, FockBasis> = BTreeMap::new();
    let mut basis = |t: usize| -> Result<FockBasis> {
        if let Some(b) = bases.get(&t) {
            return Ok(b.clone());
        }
        let b = model.sector(t)?.basis.clone();
        bases.insert(t, b.clone());
        Ok(b)
    };
    let outside: Vec<usize> = (0..n).filter(|j| !ch.region.contains(j)).collect();

    let mut completeness = 0.0f64;
    let mut covariance = 0.0f64;
    let mut locality = 0.0f64;
    for &total in domain {
        if total > max_total {
            return Err(Error::MissingSector(total));
        }
        let from = basis(total)?;
        let mut sum = SparseOperator::zeros(total, total, from.dim(), from.dim());
        for k in &ch.kraus {
            let Some(image) = k.image_total(total, max_total) else {
                continue;
            };
            let to = basis(image)?;
            let km = k.matrix(&from, &to)?;
            sum = sum.add(&km.adjoint().matmul(&km));
            for j in 0..n {
                let lhs = number_matrix(&to, j)?
                    .matmul(&km)
                    .sub(&km.matmul(&number_matrix(&from, j)?));
                let rhs = km.matmul(&k.witness_operator(j, &from));
                covariance = covariance.max(lhs.sub(&rhs).max_abs());
            }
            for &site in &outside {
                let comm = number_matrix(&to, site)?
                    .matmul(&km)
                    .sub(&km.matmul(&number_matrix(&from, site)?));
                locality = locality.max(comm.max_abs());
                // [K, b_k] = 0 between the lowered sectors
                if total >= 1 {
                    if let (Some(img_down), true) =
                        (k.image_total(total - 1, max_total), image >= 1)
                    {
                        let down = basis(total - 1)?;
                        let to_down = basis(img_down)?;
                        let k_down = k.matrix(&down, &to_down)?;
                        let b_from = ladder_matrix(&from, &down, site, Ladder::Lower)?;
                        let b_to = ladder_matrix(&to, &to_down, site, Ladder::Lower)?;
                        let comm = k_down.matmul(&b_from).sub(&b_to.matmul(&km));
                        locality = locality.max(comm.max_abs());
                    }
                }
            }
        }
        let dev = sum
            .sub(&SparseOperator::identity(total, from.dim()))
            .max_abs();
        completeness = completeness.max(dev);
    }
    let witness_min = ch
        .kraus
        .iter()
        .flat_map(|k| k.witness.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let witness_outside_region = ch
        .kraus
        .iter()
        .flat_map(|k| outside.iter().map(move |&j| k.witness[j].abs()))
        .fold(0.0, f64::max);

    let mut failures = Vec::new();
    if completeness > tol {
        failures.push(format!("completeness deviation {completeness:e}"));
    }
    if covariance > tol {
        failures.push(format!("covariance residual {covariance:e}"));
    }
    if witness_min < -tol {
        failures.push(format!("witness positivity: min entry {witness_min}"));
    }
    if witness_outside_region > tol {
        failures.push(format!(
            "nonzero witness off the region {witness_outside_region:e}"
        ));
    }
    if locality > tol {
        failures.push(format!("acts off the region {locality:e}"));
    }
    Ok(ChannelReport {
        sectors: domain.to_vec(),
        completeness,
        covariance,
        witness_min: if witness_min.is_finite() {
            witness_min
        } else {
            0.0
        },
        witness_outside_region,
        locality,
        tol,
        pass: failures.is_empty(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::ModelParams;
    use crate::lattice::Graph;
    use rand::SeedableRng;

    fn model(g: Graph, u: f64, cutoff: usize) -> Model {
        Model::new(g, ModelParams::bose_hubbard(1.0, u), cutoff).unwrap()
    }

    #[test]
    fn ground_state_two_sites() {
        let m = model(Graph::path(2).unwrap(), 1.0, 2);
        let g = ground_state(&m, &[1]).unwrap();
        let mem = &g.members[0];
        assert!((mem.energy + 1.0).abs() < 1e-14);
        let s = 0.5f64.sqrt();
        assert!((mem.vector[0].re - s).abs() < 1e-14);
        assert!((mem.vector[1].re - s).abs() < 1e-14);
    }

    #[test]
    fn vacuum_ground_state() {
        let m = model(Graph::path(3).unwrap(), 1.0, 2);
        let g = ground_state(&m, &[0]).unwrap();
        assert_eq!(g.members[0].energy, 0.0);
        assert_eq!(g.members[0].vector, vec![C64::new(1.0, 0.0)]);
    }

    #[test]
    fn degenerate_ground_state_is_deterministic() {
        let m1 = model(Graph::edgeless(2).unwrap(), 0.0, 1);
        let m2 = model(Graph::edgeless(2).unwrap(), 0.0, 1);
        let a = ground_state(&m1, &[1]).unwrap();
        let b = ground_state(&m2, &[1]).unwrap();
        assert_eq!(a.members[0].vector, b.members[0].vector);
    }

    #[test]
    fn global_ground_state_picks_lowest_sector() {
        let m = model(Graph::path(2).unwrap(), 1.0, 2);
        let g = ground_state(&m, &[0, 1]).unwrap();
        assert_eq!(g.members[0].total, 1);
    }

    #[test]
    fn thermal_weights_by_hand() {
        let m = model(Graph::path(2).unwrap(), 1.0, 2);
        let th = thermal_state(&m, &[0, 1], 1.0, 1e-12).unwrap();
        let e = std::f64::consts::E;
        let w0: f64 = th
            .members
            .iter()
            .filter(|x| x.total == 0)
            .map(|x| x.weight)
            .sum();
        assert!((w0 - 1.0 / (1.0 + e + 1.0 / e)).abs() < 1e-14);
        assert!((th.total_weight() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn thermal_limits() {
        let m = model(Graph::path(3).unwrap(), 1.0, 2);
        let gs = ground_state(&m, &[2]).unwrap();
        let eig = m.sector(2).unwrap().eigen().unwrap().values.clone();
        let gap = eig[1] - eig[0];
        let cold = thermal_state(&m, &[2], 1e3 / gap, 1e-12).unwrap();
        let overlap: f64 = cold
            .members
            .iter()
            .map(|x| x.weight * crate::sparse::inner(&x.vector, &gs.members[0].vector).norm_sqr())
            .sum();
        assert!(overlap > 1.0 - 1e-9);
        let hot = thermal_state(&m, &[2], 1e-9, 1e-12).unwrap();
        let uniform = 1.0 / hot.members.len() as f64;
        assert!(hot
            .members
            .iter()
            .all(|x| (x.weight - uniform).abs() < 1e-8));
        assert_eq!(
            thermal_state(&m, &[2], 0.0, 1e-12).unwrap_err(),
            Error::BadBeta(0.0)
        );
        assert!(thermal_state(&m, &[2], 1.0, 1e-3).is_err());
    }

    #[test]
    fn flooring_reports_dropped_mass() {
        let m = model(Graph::path(3).unwrap(), 1.0, 2);
        let th = thermal_state(&m, &[2], 20.0, 1e-6).unwrap();
        assert!(th.members.len() < m.sector(2).unwrap().dim());
        assert!(th.dropped_mass > 0.0 && th.dropped_mass < 1e-6);
        assert!((th.total_weight() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stationarity() {
        let m = model(Graph::path(3).unwrap(), 1.0, 2);
        let mut th = thermal_state(&m, &[1, 2], 1.0, 1e-12).unwrap();
        assert!(is_stationary(&th, &m, 1e-9).unwrap().0);
        let gs = ground_state(&m, &[2]).unwrap();
        assert!(is_stationary(&gs, &m, 1e-9).unwrap().0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let idx = th.members.iter().position(|x| x.total == 2).unwrap();
        scramble_member(&mut th, idx, &mut rng);
        let (ok, r) = is_stationary(&th, &m, 1e-9).unwrap();
        assert!(!ok && r > 1e-2);
    }

    #[test]
    fn add_boson_validates() {
        let m = model(Graph::path(3).unwrap(), 1.0, 3);
        let ch = add_boson_channel(3, &[0], None).unwrap();
        let rep = validate_channel(&ch, &m, &[0, 1, 2], 1e-12).unwrap();
        assert!(rep.pass, "{:?}", rep.failures);
        assert!(rep.covariance < 1e-12 && rep.completeness < 1e-12);
        let two = add_boson_channel(3, &[0, 2], Some(&[0.25, 0.75])).unwrap();
        assert!(validate_channel(&two, &m, &[0, 1, 2], 1e-12).unwrap().pass);
    }

    #[test]
    fn completeness_fails_where_cutoff_bites() {
        let m = model(Graph::path(2).unwrap(), 1.0, 2);
        let ch = add_boson_channel(2, &[0], None).unwrap();
        let rep = validate_channel(&ch, &m, &[2], 1e-12).unwrap();
        assert!(!rep.pass);
        assert!((rep.completeness - 1.0).abs() < 1e-14);
    }

    #[test]
    fn removal_fails_positivity_only() {
        let m = model(Graph::path(3).unwrap(), 1.0, 3);
        let ch = remove_boson_channel(3, 1).unwrap();
        let rep = validate_channel(&ch, &m, &[0, 1, 2], 1e-12).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.witness_min, -1.0);
        assert!(rep.completeness < 1e-12 && rep.covariance < 1e-12 && rep.locality < 1e-12);
    }

    #[test]
    fn phase_channel_validates() {
        let m = model(Graph::path(2).unwrap(), 1.0, 2);
        let ch = phase_channel(2, 0, 0.7).unwrap();
        let rep = validate_channel(&ch, &m, &[0, 1, 2, 3, 4], 1e-12).unwrap();
        assert!(rep.pass, "{:?}", rep.failures);
    }

    #[test]
    fn wrong_witness_is_caught() {
        let m = model(Graph::path(3).unwrap(), 1.0, 3);
        let mut ch = add_boson_channel(3, &[0], None).unwrap();
        ch.kraus[0].witness = vec![0.0, 0.0, 0.0];
        let rep = validate_channel(&ch, &m, &[0, 1], 1e-12).unwrap();
        assert!(rep.covariance > 0.5 && !rep.pass);
        let mut off = add_boson_channel(3, &[0], None).unwrap();
        off.kraus[0].kind = KrausKind::RaiseIsometry { site: 2 };
        let rep = validate_channel(&off, &m, &[0, 1], 1e-12).unwrap();
        assert!(rep.locality > 0.5);
    }

    #[test]
    fn lazy_channel_edges() {
        assert_eq!(
            lazy_add_channel(2, &[0], 1.5).unwrap_err(),
            Error::BadProbability(1.5)
        );
        let id = lazy_add_channel(2, &[0], 0.0).unwrap();
        assert_eq!(id.kraus.len(), 1);
        assert_eq!(id.kraus[0].kind, KrausKind::Identity);
        let full = lazy_add_channel(2, &[0], 1.0).unwrap();
        let add = add_boson_channel(2, &[0], None).unwrap();
        assert_eq!(full.kraus, add.kraus);
        let m = model(Graph::path(2).unwrap(), 1.0, 2);
        let half = lazy_add_channel(2, &[0], 0.5).unwrap();
        let rep = validate_channel(&half, &m, &[0, 1], 1e-12).unwrap();
        assert!(rep.pass && rep.witness_min == 0.0);
    }

    #[test]
    fn region_errors() {
        assert_eq!(
            add_boson_channel(2, &[], None).unwrap_err(),
            Error::EmptyRegion
        );
        assert!(matches!(
            add_boson_channel(2, &[3], None),
            Err(Error::VertexOutOfRange { .. })
        ));
        assert_eq!(
            add_boson_channel(2, &[0, 1], Some(&[0.5, 0.6])).unwrap_err(),
            Error::BadSiteProbabilities
        );
    }

    #[test]
    fn spec_builds_channels() {
        let spec: ChannelSpec =
            serde_json::from_str(r#"{"type":"lazy_add","region":[1],"p":0.25}"#).unwrap();
        let ch = spec.build(3).unwrap();
        assert_eq!(ch.declared_n0, 0.25);
        let bad: ChannelSpec = serde_json::from_str(r#"{"type":"teleport","region":[1]}"#).unwrap();
        assert!(bad.build(3).is_err());
        let missing: ChannelSpec =
            serde_json::from_str(r#"{"type":"lazy_add","region":[1]}"#).unwrap();
        assert!(missing.build(3).is_err());
    }
}
