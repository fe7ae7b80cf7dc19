//! Time evolution of perturbed ensembles and one-body covariance trajectories.
//!
//! The perturbed state `ρ(0) = Φ(ω)` is never stored as a density matrix.
//! It is a weighted list of pure branches, one per (Kraus operator, retained
//! eigenvector) pair, and each branch is propagated independently by
//! `e^{−itH}`. Cross-branch terms never contribute to one-body correlations:
//! `b_j† b_k` conserves the particle number and branches in one sector come
//! from distinct terms of a mixture.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Model, Sector};
use crate::sparse::{inner, norm_sqr, SparseOperator, C64};
use crate::states::{ExcitationChannel, StationaryEnsemble};

/// Sector dimension above which [`Method::Auto`] switches to Krylov.
pub const DENSE_DIM_LIMIT: usize = 4000;

#[derive(Debug, Clone)]
pub struct Branch {
    pub weight: f64,
    pub total: usize,
    pub vector: Vec<C64>,
}

/// `ρ = Σ_b w_b |v_b⟩⟨v_b|` at a single time.
#[derive(Debug, Clone)]
pub struct EvolvedEnsemble {
    pub branches: Vec<Branch>,
    pub time: f64,
}

impl EvolvedEnsemble {
    pub fn total_weight(&self) -> f64 {
        self.branches
            .iter()
            .map(|b| b.weight * norm_sqr(&b.vector))
            .sum()
    }

    /// Treats `ω` itself as an ensemble (no excitation).
    pub fn from_stationary(omega: &StationaryEnsemble) -> Self {
        EvolvedEnsemble {
            branches: omega
                .members
                .iter()
                .map(|m| Branch {
                    weight: m.weight,
                    total: m.total,
                    vector: m.vector.clone(),
                })
                .collect(),
            time: 0.0,
        }
    }

    pub fn leakage(&self, model: &Model) -> Result<f64> {
        let mut leak = 0.0;
        for b in &self.branches {
            leak += b.weight * model.sector(b.total)?.one_body.leakage(&b.vector);
        }
        Ok(leak)
    }
}

/// `Φ(ω)` as branches `(p_m ‖K_l v_m‖², K_l v_m / ‖K_l v_m‖)`. Zero-norm
/// branches are dropped; the total weight must stay 1.
pub fn apply_channel(
    omega: &StationaryEnsemble,
    ch: &ExcitationChannel,
    model: &Model,
) -> Result<EvolvedEnsemble> {
    let max_total = model.max_total();
    let mut branches = Vec::new();
    for m in &omega.members {
        let from = model.sector(m.total)?;
        for k in &ch.kraus {
            let Some(image) = k.image_total(m.total, max_total) else {
                continue;
            };
            let to = model.sector(image)?;
            let km = k.matrix(&from.basis, &to.basis)?;
            let w = km.matvec(&m.vector);
            let q = norm_sqr(&w);
            if q == 0.0 {
                continue;
            }
            let scale = 1.0 / q.sqrt();
            branches.push(Branch {
                weight: m.weight * q,
                total: image,
                vector: w.into_iter().map(|x| x * scale).collect(),
            });
        }
    }
    let ens = EvolvedEnsemble {
        branches,
        time: 0.0,
    };
    let total = ens.total_weight();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Consistency(format!(
            "channel `{}` keeps weight {total} of the state; its image leaves the available sectors",
            ch.label
        )));
    }
    Ok(ens)
}

/// `C_{jk} = Σ_b w_b ⟨v_b| b_j† b_k |v_b⟩`.
pub fn covariance(ens: &EvolvedEnsemble, model: &Model) -> Result<DMatrix<C64>> {
    let n = model.n_sites();
    let mut c = DMatrix::zeros(n, n);
    for b in &ens.branches {
        model
            .sector(b.total)?
            .one_body
            .accumulate(&b.vector, b.weight, &mut c);
    }
    Ok(c)
}

pub fn reference_covariance(omega: &StationaryEnsemble, model: &Model) -> Result<DMatrix<C64>> {
    covariance(&EvolvedEnsemble::from_stationary(omega), model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Dense up to [`DENSE_DIM_LIMIT`], Krylov above.
    Auto,
    Dense,
    Krylov,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default = "default_method")]
    pub method: Method,
    /// Krylov per-step error bound.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Tolerated cutoff population before the trajectory is flagged.
    #[serde(default = "default_leak_tol")]
    pub leak_tol: f64,
    #[serde(default = "default_krylov_dim")]
    pub krylov_dim: usize,
}

fn default_method() -> Method {
    Method::Auto
}
fn default_tol() -> f64 {
    1e-12
}
fn default_leak_tol() -> f64 {
    1e-6
}
fn default_krylov_dim() -> usize {
    30
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            method: default_method(),
            tol: default_tol(),
            leak_tol: default_leak_tol(),
            krylov_dim: default_krylov_dim(),
        }
    }
}

/// `0, dt, 2dt, …` up to and including `t_max` (within rounding).
pub fn uniform_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t_max >= 0.0) || !(dt > 0.0) || !t_max.is_finite() || !dt.is_finite() {
        return Err(Error::BadTimeGrid);
    }
    let steps = (t_max / dt + 1e-9).floor() as usize;
    Ok((0..=steps).map(|i| i as f64 * dt).collect())
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.first() != Some(&0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::BadTimeGrid);
    }
    Ok(())
}

/// Result of one Krylov propagation.
#[derive(Debug, Clone)]
pub struct KrylovOutcome {
    pub vector: Vec<C64>,
    pub substeps: usize,
    /// Sum of the accepted per-substep error estimates.
    pub error_estimate: f64,
}

/// `e^{−itH} v` by Lanczos with full reorthogonalization. Each substep is
/// shortened until the a-posteriori estimate `‖v‖ β_m |e_mᵀ e^{−ihT_m} e_1|`
/// falls below `tol`. Returns `None` if no admissible step exists.
pub fn expm_krylov(
    h: &SparseOperator,
    v: &[C64],
    t: f64,
    tol: f64,
    max_dim: usize,
) -> Option<KrylovOutcome> {
    let dim = v.len();
    let mut w = v.to_vec();
    let mut remaining = t;
    let mut step = t;
    let mut substeps = 0;
    let mut error_estimate = 0.0;
    let sign = t.signum();
    while remaining.abs() > 0.0 {
        let beta0 = norm_sqr(&w).sqrt();
        if beta0 == 0.0 {
            break;
        }
        let m_cap = max_dim.min(dim).max(1);
        let mut basis: Vec<Vec<C64>> = vec![w.iter().map(|x| x / beta0).collect()];
        let mut alpha = Vec::with_capacity(m_cap);
        let mut beta: Vec<f64> = Vec::with_capacity(m_cap);
        let mut breakdown = false;
        for j in 0..m_cap {
            let mut z = h.matvec(&basis[j]);
            let a = inner(&basis[j], &z).re;
            alpha.push(a);
            for _ in 0..2 {
                for q in &basis {
                    let c = inner(q, &z);
                    for (zi, qi) in z.iter_mut().zip(q) {
                        *zi -= c * qi;
                    }
                }
            }
            let b = norm_sqr(&z).sqrt();
            let scale = alpha.iter().fold(1.0f64, |s, x| s.max(x.abs()));
            if b <= 1e-13 * scale || j + 1 == dim {
                breakdown = true;
                beta.push(b);
                break;
            }
            beta.push(b);
            if j + 1 < m_cap {
                basis.push(z.into_iter().map(|x| x / b).collect());
            }
        }
        let k = alpha.len();
        let mut tri = DMatrix::zeros(k, k);
        for i in 0..k {
            tri[(i, i)] = alpha[i];
            if i + 1 < k {
                tri[(i, i + 1)] = beta[i];
                tri[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(tri);
        let first_row: Vec<f64> = (0..k).map(|c| eig.eigenvectors[(0, c)]).collect();
        let project = |dt: f64| -> DVector<C64> {
            DVector::from_fn(k, |r, _| {
                (0..k)
                    .map(|c| {
                        C64::from_polar(1.0, -dt * eig.eigenvalues[c])
                            * (eig.eigenvectors[(r, c)] * first_row[c])
                    })
                    .sum()
            })
        };
        let residual_beta = if breakdown { 0.0 } else { beta[k - 1] };
        step = if step.abs() > remaining.abs() {
            remaining
        } else {
            step
        };
        let mut accepted = None;
        for _ in 0..80 {
            let y = project(step);
            let err = beta0 * residual_beta * y[k - 1].norm();
            if err <= tol {
                accepted = Some((y, err));
                break;
            }
            step *= 0.5;
        }
        let (y, err) = accepted?;
        let mut next = vec![C64::new(0.0, 0.0); dim];
        for (c, q) in y.iter().zip(&basis) {
            for (ni, qi) in next.iter_mut().zip(q) {
                *ni += c * qi * beta0;
            }
        }
        w = next;
        remaining -= step;
        if remaining * sign <= 1e-15 * t.abs() {
            remaining = 0.0;
        }
        substeps += 1;
        error_estimate += err;
        step *= 2.0;
    }
    Some(KrylovOutcome {
        vector: w,
        substeps,
        error_estimate,
    })
}

/// `e^{−itH} v` through the cached sector spectrum.
pub fn propagate_dense(sector: &Sector, v: &[C64], t: f64) -> Result<Vec<C64>> {
    let eig = sector.eigen()?;
    let dim = eig.dim();
    let mut coeff = vec![C64::new(0.0, 0.0); dim];
    for (c, col) in coeff.iter_mut().zip(eig.vectors.column_iter()) {
        let proj: C64 = col.iter().zip(v).map(|(a, x)| x * *a).sum();
        *c = proj;
    }
    for (c, e) in coeff.iter_mut().zip(eig.values.iter()) {
        *c *= C64::from_polar(1.0, -e * t);
    }
    let mut out = vec![C64::new(0.0, 0.0); dim];
    for (c, col) in coeff.iter().zip(eig.vectors.column_iter()) {
        for (o, a) in out.iter_mut().zip(col.iter()) {
            *o += c * *a;
        }
    }
    Ok(out)
}

fn resolve(method: Method, dim: usize) -> Method {
    match method {
        Method::Auto if dim <= DENSE_DIM_LIMIT => Method::Dense,
        Method::Auto => Method::Krylov,
        m => m,
    }
}

/// Time-resolved covariances `C(ρ(t))`, the reference `C(ω)` and diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub n_sites: usize,
    pub times: Vec<f64>,
    /// `x_j(t)`, row per time.
    pub x: Vec<Vec<f64>>,
    pub covariances: Vec<DMatrix<C64>>,
    pub reference_covariance: DMatrix<C64>,
    /// `Σ_b w_b ⟨v_b(t)| n_j |v_b(t)⟩`, computed independently of `C`.
    pub direct_numbers: Vec<Vec<f64>>,
    pub reference_numbers: Vec<f64>,
    pub leakage: Vec<f64>,
    /// Worst per-branch `|‖v(t)‖² − ‖v(0)‖²|`.
    pub norm_drift: f64,
    /// Worst per-branch `|⟨H⟩(t) − ⟨H⟩(0)|`.
    pub energy_drift: f64,
    pub leakage_exceeded: bool,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn total_numbers(&self) -> Vec<f64> {
        self.x.iter().map(|row| row.iter().sum()).collect()
    }

    /// `Δ(t) = C(ρ(t)) − C(ω)`.
    pub fn covariance_difference(&self, i: usize) -> DMatrix<C64> {
        &self.covariances[i] - &self.reference_covariance
    }
}

struct BranchSamples {
    covariances: Vec<DMatrix<C64>>,
    numbers: Vec<Vec<f64>>,
    leakage: Vec<f64>,
    norm_drift: f64,
    energy_drift: f64,
}

fn run_branch(
    model: &Model,
    branch: &Branch,
    times: &[f64],
    settings: &SolverSettings,
) -> Result<BranchSamples> {
    let sector = model.sector(branch.total)?;
    let n = model.n_sites();
    let method = resolve(settings.method, sector.dim());
    let h = &sector.hamiltonian;
    let norm0 = norm_sqr(&branch.vector);
    let energy0 = inner(&branch.vector, &h.matvec(&branch.vector)).re;
    let mut out = BranchSamples {
        covariances: Vec::with_capacity(times.len()),
        numbers: Vec::with_capacity(times.len()),
        leakage: Vec::with_capacity(times.len()),
        norm_drift: 0.0,
        energy_drift: 0.0,
    };
    let mut current = branch.vector.clone();
    let mut last_t = 0.0;
    for (step, &t) in times.iter().enumerate() {
        let v = match method {
            Method::Dense | Method::Auto => propagate_dense(&sector, &branch.vector, t)?,
            Method::Krylov => {
                let dt = t - last_t;
                if dt > 0.0 {
                    current = expm_krylov(h, &current, dt, settings.tol, settings.krylov_dim)
                        .ok_or(Error::KrylovFailure {
                            step,
                            time: t,
                            tol: settings.tol,
                        })?
                        .vector;
                }
                last_t = t;
                current.clone()
            }
        };
        let mut c = DMatrix::zeros(n, n);
        sector.one_body.accumulate(&v, branch.weight, &mut c);
        out.covariances.push(c);
        out.numbers.push(
            sector
                .one_body
                .numbers(&v)
                .into_iter()
                .map(|x| x * branch.weight)
                .collect(),
        );
        out.leakage
            .push(branch.weight * sector.one_body.leakage(&v));
        out.norm_drift = out.norm_drift.max((norm_sqr(&v) - norm0).abs());
        let energy = inner(&v, &h.matvec(&v)).re;
        out.energy_drift = out.energy_drift.max((energy - energy0).abs());
    }
    Ok(out)
}

/// Propagates every branch over `times` and assembles the trajectory.
/// Branches run in parallel; sums are taken in branch order so results do not
/// depend on the thread count.
pub fn evolve(
    model: &Model,
    omega: &StationaryEnsemble,
    initial: &EvolvedEnsemble,
    times: &[f64],
    settings: &SolverSettings,
) -> Result<Trajectory> {
    check_grid(times)?;
    let n = model.n_sites();
    for b in &initial.branches {
        let dim = model.sector(b.total)?.dim();
        if resolve(settings.method, dim) == Method::Dense {
            model.sector(b.total)?.eigen()?;
        }
    }
    let samples: Vec<Result<BranchSamples>> = initial
        .branches
        .par_iter()
        .map(|b| run_branch(model, b, times, settings))
        .collect();
    let samples: Vec<BranchSamples> = samples.into_iter().collect::<Result<_>>()?;

    let reference_covariance = reference_covariance(omega, model)?;
    let mut reference_numbers = vec![0.0; n];
    for m in &omega.members {
        let nums = model.sector(m.total)?.one_body.numbers(&m.vector);
        for (r, x) in reference_numbers.iter_mut().zip(nums) {
            *r += m.weight * x;
        }
    }

    let mut covariances = vec![DMatrix::zeros(n, n); times.len()];
    let mut direct = vec![vec![0.0; n]; times.len()];
    let mut leakage = vec![0.0; times.len()];
    let mut norm_drift = 0.0f64;
    let mut energy_drift = 0.0f64;
    for s in &samples {
        for i in 0..times.len() {
            covariances[i] += &s.covariances[i];
            for (d, x) in direct[i].iter_mut().zip(&s.numbers[i]) {
                *d += x;
            }
            leakage[i] += s.leakage[i];
        }
        norm_drift = norm_drift.max(s.norm_drift);
        energy_drift = energy_drift.max(s.energy_drift);
    }
    let max_leak = leakage.iter().copied().fold(0.0, f64::max);
    let leakage_exceeded = max_leak > settings.leak_tol;
    let mut warnings = Vec::new();
    if leakage_exceeded {
        warnings.push(format!(
            "cutoff leakage {max_leak:e} exceeds leak_tol {:e}",
            settings.leak_tol
        ));
    }
    let mut traj = Trajectory {
        n_sites: n,
        times: times.to_vec(),
        x: Vec::new(),
        covariances,
        reference_covariance,
        direct_numbers: direct,
        reference_numbers,
        leakage,
        norm_drift,
        energy_drift,
        leakage_exceeded,
        warnings,
    };
    traj.x = relative_numbers(&traj)?;
    Ok(traj)
}

/// `x_j(t) = [C(ρ(t)) − C(ω)]_{jj}`, cross-checked against direct number
/// expectations.
pub fn relative_numbers(traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
    let mut x = Vec::with_capacity(traj.times.len());
    for (i, c) in traj.covariances.iter().enumerate() {
        let row: Vec<f64> = (0..traj.n_sites)
            .map(|j| (c[(j, j)] - traj.reference_covariance[(j, j)]).re)
            .collect();
        for (j, &xj) in row.iter().enumerate() {
            let direct = traj.direct_numbers[i][j] - traj.reference_numbers[j];
            if (direct - xj).abs() > 1e-10 {
                return Err(Error::Consistency(format!(
                    "x[{j}] at t = {} is {xj} from C but {direct} from n_j",
                    traj.times[i]
                )));
            }
        }
        x.push(row);
    }
    Ok(x)
}
