//! Numerical checks: covariance ordering, the premise operator, the
//! differential inequality, comparison dynamics and the light cone.
//!
//! All checks except [`premise_check`] are pure functions of a finished
//! [`Trajectory`]. The envelope prefactor `c` has no known value, so
//! [`envelope_check`] reports an empirical one, while [`dominance_check`]
//! asserts the constant-free bound `x ≤ γ`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::fock::Model;
use crate::lattice::{Graph, VelocityBound};
use crate::sparse::C64;
use crate::states::ExcitationChannel;

/// Largest total dimension assembled densely by [`premise_check`].
pub const PREMISE_DIM_CAP: usize = 2000;

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    SymmetricEigen::new(herm).eigenvalues.min()
}

pub fn eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = SymmetricEigen::new(herm)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub min_eig: Vec<f64>,
    pub worst: f64,
    pub tol: f64,
    pub pass: bool,
}

/// `λ_min(C(ρ(t)) − C(ω))` at every grid time.
pub fn positivity_check(traj: &Trajectory, tol: f64) -> PositivityReport {
    let min_eig: Vec<f64> = (0..traj.times.len())
        .map(|i| min_eigenvalue(&traj.covariance_difference(i)))
        .collect();
    let worst = min_eig.iter().copied().fold(f64::INFINITY, f64::min);
    PositivityReport {
        pass: worst >= -tol,
        worst,
        min_eig,
        tol,
    }
}

/// Deterministic and seeded random matrices `M ⪰ 1`: the identity, each
/// `1 + e_j e_jᵀ`, then `samples` draws of `1 + AᵀA` with Gaussian `A`.
pub fn premise_matrices(n: usize, samples: usize, seed: u64) -> Vec<(String, DMatrix<f64>)> {
    let mut out = vec![("identity".to_string(), DMatrix::identity(n, n))];
    for j in 0..n {
        let mut m = DMatrix::identity(n, n);
        m[(j, j)] += 1.0;
        out.push((format!("e{j}"), m));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in 0..samples {
        let a = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        out.push((
            format!("random{s}"),
            DMatrix::identity(n, n) + a.transpose() * a,
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiseEntry {
    pub time: f64,
    pub matrix: String,
    pub min_eig: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiseReport {
    pub sectors: Vec<usize>,
    pub entries: Vec<PremiseEntry>,
    pub worst: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Smallest eigenvalue of
/// `Σ_{jk} M_{jk} Σ_l K_l† e^{itH} b_j† b_k e^{−itH} K_l − Σ_j n_j`
/// on each domain sector, for every sampled `M` and time.
///
/// Every term maps sector `N` back to `N`, so the operator is assembled one
/// domain sector at a time.
#[allow(clippy::too_many_arguments)]
pub fn premise_check(
    model: &Model,
    ch: &ExcitationChannel,
    domain: &[usize],
    times: &[f64],
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<PremiseReport> {
    let n = model.n_sites();
    let max_total = model.max_total();
    let mut involved: Vec<usize> = domain.to_vec();
    for &total in domain {
        for k in &ch.kraus {
            if let Some(img) = k.image_total(total, max_total) {
                involved.push(img);
            }
        }
    }
    involved.sort_unstable();
    involved.dedup();
    let mut dim_total = 0;
    for &t in &involved {
        if t > max_total {
            return Err(Error::MissingSector(t));
        }
        dim_total += model.sector(t)?.dim();
    }
    if dim_total > PREMISE_DIM_CAP {
        return Err(Error::DimensionCap(dim_total, PREMISE_DIM_CAP));
    }

    let matrices = premise_matrices(n, samples, seed);
    let mut entries = Vec::new();
    for &t in times {
        for (label, coeffs) in &matrices {
            let mut worst = f64::INFINITY;
            for &total in domain {
                let from = model.sector(total)?;
                let d = from.dim();
                let mut op = DMatrix::<C64>::identity(d, d) * C64::new(-(total as f64), 0.0);
                for k in &ch.kraus {
                    let Some(img) = k.image_total(total, max_total) else {
                        continue;
                    };
                    let to = model.sector(img)?;
                    let kd = k.matrix(&from.basis, &to.basis)?.to_dense();
                    let eig = to.eigen()?;
                    let vecs = eig.vectors.map(|x| C64::new(x, 0.0));
                    let phases =
                        DMatrix::from_diagonal(&eig.values.map(|e| C64::from_polar(1.0, -e * t)));
                    let u = &vecs * phases * vecs.transpose();
                    let heis = u.adjoint() * to.one_body.operator(coeffs) * &u;
                    op += kd.adjoint() * heis * &kd;
                }
                worst = worst.min(min_eigenvalue(&op));
            }
            entries.push(PremiseEntry {
                time: t,
                matrix: label.clone(),
                min_eig: worst,
            });
        }
    }
    let worst = entries
        .iter()
        .map(|e| e.min_eig)
        .fold(f64::INFINITY, f64::min);
    Ok(PremiseReport {
        sectors: domain.to_vec(),
        entries,
        pass: worst >= -tol,
        worst,
        tol,
    })
}

/// `γ(t) = exp(τ t (D·1 + M)) x0` by diagonalizing the symmetric generator.
pub fn comparison_trajectory(
    graph: &Graph,
    tau: f64,
    x0: &[f64],
    times: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if let Some((site, &value)) = x0.iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(Error::NegativeInitial { site, value });
    }
    let n = graph.n_sites();
    let gen = graph.adjacency() + DMatrix::identity(n, n) * graph.max_degree() as f64;
    let eig = SymmetricEigen::new(gen);
    let x0 = nalgebra::DVector::from_column_slice(x0);
    let proj = eig.eigenvectors.transpose() * &x0;
    Ok(times
        .iter()
        .map(|&t| {
            let scaled = proj.zip_map(&eig.eigenvalues, |c, l| c * (tau * t * l).exp());
            let g = &eig.eigenvectors * scaled;
            g.iter().copied().collect()
        })
        .collect())
}

/// `x(0)` with rounding-level negatives set to zero, as the seed of `γ`.
pub fn comparison_seed(traj: &Trajectory) -> Result<Vec<f64>> {
    traj.x[0]
        .iter()
        .enumerate()
        .map(|(site, &v)| {
            if v >= 0.0 {
                Ok(v)
            } else if v >= -1e-12 {
                Ok(0.0)
            } else {
                Err(Error::NegativeInitial { site, value: v })
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    /// `γ_j(t) − x_j(t)`, row per time.
    pub margins: Vec<Vec<f64>>,
    pub worst: f64,
    pub tol: f64,
    pub pass: bool,
}

pub fn dominance_check(traj: &Trajectory, gamma: &[Vec<f64>], tol: f64) -> Result<DominanceReport> {
    if gamma.len() != traj.times.len() || gamma.iter().any(|g| g.len() != traj.n_sites) {
        return Err(Error::GridMismatch);
    }
    let margins: Vec<Vec<f64>> = traj
        .x
        .iter()
        .zip(gamma)
        .map(|(x, g)| g.iter().zip(x).map(|(a, b)| a - b).collect())
        .collect();
    let worst = margins
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(DominanceReport {
        pass: worst >= -tol,
        worst,
        margins,
        tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffIneqReport {
    /// Interior grid times at which derivatives were estimated.
    pub times: Vec<f64>,
    /// `2τ Σ_k √(x_j x_k) − |ẋ_j|`.
    pub cauchy_schwarz: Vec<Vec<f64>>,
    /// `τ (D x_j + Σ_k x_k) − |ẋ_j|`.
    pub linearized: Vec<Vec<f64>>,
    /// `max |x'''| Δt² / 6`, added to the tolerance.
    pub fd_error: f64,
    pub worst_cauchy_schwarz: f64,
    pub worst_linearized: f64,
    /// Linearized bound ≥ Cauchy-Schwarz bound at every point.
    pub ordering_holds: bool,
    pub tol: f64,
    pub pass: bool,
}

/// Central-difference check of `|ẋ_j| ≤ 2τ Σ_{k~j} √(x_j x_k)` and of its
/// linearization `|ẋ_j| ≤ τ (D x_j + Σ_{k~j} x_k)`.
pub fn differential_inequality_check(
    traj: &Trajectory,
    graph: &Graph,
    tau: f64,
    tol: f64,
) -> Result<DiffIneqReport> {
    let times = &traj.times;
    if times.len() < 3 {
        return Err(Error::NonUniformGrid(3));
    }
    let dt = times[1] - times[0];
    if times
        .windows(2)
        .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0))
    {
        return Err(Error::NonUniformGrid(3));
    }
    let x = &traj.x;
    let n = traj.n_sites;
    let d = graph.max_degree() as f64;

    let mut third = 0.0f64;
    for w in x.windows(5) {
        for ((a, b), (c, d)) in w[4].iter().zip(&w[3]).zip(w[1].iter().zip(&w[0])) {
            let v = (a - 2.0 * b + 2.0 * c - d) / (2.0 * dt.powi(3));
            third = third.max(v.abs());
        }
    }
    let fd_error = third * dt * dt / 6.0;

    let mut cs = Vec::new();
    let mut lin = Vec::new();
    let mut ordering_holds = true;
    let mut interior = Vec::new();
    for i in 1..times.len() - 1 {
        interior.push(times[i]);
        let mut cs_row = Vec::with_capacity(n);
        let mut lin_row = Vec::with_capacity(n);
        for j in 0..n {
            let deriv = ((x[i + 1][j] - x[i - 1][j]) / (2.0 * dt)).abs();
            let xj = x[i][j].max(0.0);
            let mut cs_rhs = 0.0;
            let mut lin_rhs = d * xj;
            for &k in graph.neighbors(j) {
                let xk = x[i][k].max(0.0);
                cs_rhs += (xj * xk).sqrt();
                lin_rhs += xk;
            }
            cs_rhs *= 2.0 * tau;
            lin_rhs *= tau;
            if lin_rhs < cs_rhs - 4.0 * f64::EPSILON * lin_rhs {
                ordering_holds = false;
            }
            cs_row.push(cs_rhs - deriv);
            lin_row.push(lin_rhs - deriv);
        }
        cs.push(cs_row);
        lin.push(lin_row);
    }
    let worst = |m: &Vec<Vec<f64>>| m.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let worst_cs = worst(&cs);
    let worst_lin = worst(&lin);
    let floor = -(tol + fd_error);
    Ok(DiffIneqReport {
        times: interior,
        pass: worst_cs >= floor && worst_lin >= floor && ordering_holds,
        cauchy_schwarz: cs,
        linearized: lin,
        fd_error,
        worst_cauchy_schwarz: worst_cs,
        worst_linearized: worst_lin,
        ordering_holds,
        tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSite {
    pub site: usize,
    pub distance: Option<usize>,
    /// `max_t |x_j(t)| e^{l − vt} / N₀`, for `l ≥ 1`.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub v: f64,
    pub n0: f64,
    pub per_site: Vec<EnvelopeSite>,
    pub empirical_c: f64,
    pub c_const: f64,
    /// Largest increase of the ratio one step further along a geodesic.
    pub monotone_violation: f64,
    pub monotone: bool,
    pub unreachable: Vec<usize>,
    pub pass: bool,
}

/// Worst ratio of `|x_j(t)|` to the envelope `N₀ e^{vt − l}` per site outside
/// the region, with `l = dist(j, R)`.
pub fn envelope_check(
    traj: &Trajectory,
    graph: &Graph,
    vb: &VelocityBound,
    region: &[usize],
    n0: f64,
) -> Result<EnvelopeReport> {
    if !(n0 > 0.0) {
        return Err(Error::Config(format!("envelope needs N0 > 0, got {n0}")));
    }
    let dist = graph.distances_from_set(region);
    let mut per_site = Vec::with_capacity(graph.n_sites());
    let mut unreachable = Vec::new();
    for (j, &d) in dist.iter().enumerate() {
        let ratio = match d {
            Some(l) if l >= 1 => Some(
                traj.times
                    .iter()
                    .zip(&traj.x)
                    .map(|(&t, x)| x[j].abs() * (l as f64 - vb.v * t).exp() / n0)
                    .fold(0.0, f64::max),
            ),
            Some(_) => None,
            None => {
                unreachable.push(j);
                None
            }
        };
        per_site.push(EnvelopeSite {
            site: j,
            distance: d,
            ratio,
        });
    }
    let empirical_c = per_site.iter().filter_map(|s| s.ratio).fold(0.0, f64::max);
    let mut monotone_violation = 0.0f64;
    for &(a, b) in graph.edges() {
        for (near, far) in [(a, b), (b, a)] {
            if let (Some(ln), Some(lf)) = (dist[near], dist[far]) {
                if lf == ln + 1 && ln >= 1 {
                    let rn = per_site[near].ratio.unwrap_or(0.0);
                    let rf = per_site[far].ratio.unwrap_or(0.0);
                    monotone_violation = monotone_violation.max(rf - rn);
                }
            }
        }
    }
    let monotone = monotone_violation <= 1e-6;
    Ok(EnvelopeReport {
        v: vb.v,
        n0,
        per_site,
        pass: empirical_c.is_finite() && monotone,
        empirical_c,
        c_const: vb.c_const,
        monotone_violation,
        monotone,
        unreachable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub distance: usize,
    pub time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityReport {
    pub threshold: f64,
    pub arrivals: Vec<Arrival>,
    /// Least-squares slope of distance against arrival time.
    pub fitted_speed: Option<f64>,
    pub bound: f64,
    pub note: String,
    pub pass: bool,
}

/// First time the largest `|x_j|` in each distance shell reaches `threshold`
/// (linearly interpolated between grid points) and the ballistic speed
/// fitted through those arrivals.
pub fn empirical_velocity(
    traj: &Trajectory,
    graph: &Graph,
    region: &[usize],
    threshold: f64,
    bound: f64,
) -> Result<VelocityReport> {
    let max_x0 = traj.x[0].iter().copied().fold(0.0, f64::max);
    if !(threshold > 0.0) || (max_x0 > 1e-12 && threshold >= max_x0) {
        return Err(Error::Config(format!(
            "velocity threshold {threshold} must lie in (0, {max_x0})"
        )));
    }
    let dist = graph.distances_from_set(region);
    let max_l = dist.iter().filter_map(|d| *d).max().unwrap_or(0);
    let shell_value = |i: usize, l: usize| -> f64 {
        dist.iter()
            .enumerate()
            .filter(|(_, d)| **d == Some(l))
            .map(|(j, _)| traj.x[i][j].abs())
            .fold(0.0, f64::max)
    };
    let mut arrivals = Vec::new();
    for l in 1..=max_l {
        let mut time = None;
        for i in 0..traj.times.len() {
            let v = shell_value(i, l);
            if v >= threshold {
                time = Some(if i == 0 {
                    traj.times[0]
                } else {
                    let prev = shell_value(i - 1, l);
                    let (t0, t1) = (traj.times[i - 1], traj.times[i]);
                    t0 + (threshold - prev) / (v - prev) * (t1 - t0)
                });
                break;
            }
        }
        arrivals.push(Arrival { distance: l, time });
    }
    let pts: Vec<(f64, f64)> = arrivals
        .iter()
        .filter_map(|a| a.time.map(|t| (t, a.distance as f64)))
        .collect();
    let fitted_speed = if pts.len() >= 2 {
        let k = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let md = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - md)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    } else {
        None
    };
    let note = match (pts.len(), fitted_speed) {
        (0, _) => "front did not reach".to_string(),
        (_, None) => "too few arrivals to fit".to_string(),
        (_, Some(s)) => format!("fitted speed {s:.6} vs bound {bound:.6}"),
    };
    Ok(VelocityReport {
        threshold,
        pass: fitted_speed.is_none_or(|s| s <= bound),
        arrivals,
        fitted_speed,
        bound,
        note,
    })
}
