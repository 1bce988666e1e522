//! Diffusion maps over field snapshots and Nyström restriction of new states.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use ndarray_linalg::{Eigh, UPLO};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_sim::{shift_profile, FieldState, Grid, Integrator, ModelParams, NoiseSpec};
use crate::lifting_v::fourier_shift;
use crate::observables::{peak_phase, wrap_angle, Observer};
use crate::rng::stream;

pub const MIN_SNAPSHOTS: usize = 200;

/// Kernel-row mass (sum over the dataset) below which a restricted point
/// is reported as out of sample.
pub const OUT_OF_SAMPLE_MASS: f64 = 1e-3;

/// Normalized, aligned concatenation of `u` then `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub data: Vec<f64>,
    /// Circular shift applied to both profiles, in nodes.
    pub shift: f64,
    /// max(u) before normalization.
    pub u_scale: f64,
    /// a at the u-peak node before normalization.
    pub a_scale: f64,
}

impl Snapshot {
    pub fn nodes(&self) -> usize {
        self.data.len() / 2
    }

    pub fn u(&self) -> &[f64] {
        &self.data[..self.nodes()]
    }

    pub fn a(&self) -> &[f64] {
        &self.data[self.nodes()..]
    }

    /// Undoes the normalization (but not the shift, which the dynamics
    /// do not see).
    pub fn to_state(&self) -> FieldState {
        FieldState {
            u: self.u().iter().map(|x| x * self.u_scale).collect(),
            a: self.a().iter().map(|x| x * self.a_scale).collect(),
        }
    }
}

/// Divides `u` by its maximum and `a` by its value at the same node.
fn normalize(state: &FieldState) -> Result<(Vec<f64>, Vec<f64>, f64, f64)> {
    let (imax, &umax) = state
        .u
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .ok_or_else(|| Error::Preprocess("empty profile".into()))?;
    if !(umax > 0.0) {
        return Err(Error::Preprocess(format!("u maximum is {umax}, need > 0")));
    }
    let a_scale = state.a[imax];
    if a_scale == 0.0 || !a_scale.is_finite() {
        return Err(Error::Preprocess(format!(
            "a at the u peak (node {imax}) is {a_scale}"
        )));
    }
    Ok((
        state.u.iter().map(|x| x / umax).collect(),
        state.a.iter().map(|x| x / a_scale).collect(),
        umax,
        a_scale,
    ))
}

/// Integer shift `k` minimizing `sum_i (shift(u, k)_i - reference_i)^2`;
/// ties go to the first `k` in `0, 1, -1, 2, -2, ...`.
pub fn alignment_shift(u: &[f64], reference: &[f64]) -> Result<isize> {
    let m = u.len();
    if reference.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: reference.len(),
        });
    }
    let mi = m as isize;
    let cost = |k: isize| -> f64 {
        (0..m)
            .map(|i| {
                let j = (i as isize + k).rem_euclid(mi) as usize;
                (u[i] - reference[j]).powi(2)
            })
            .sum()
    };
    let mut best = (0isize, cost(0));
    for d in 1..=mi / 2 {
        for k in [d, -d] {
            let c = cost(k);
            if c < best.1 {
                best = (k, c);
            }
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Whole-node circular shift minimizing the squared u mismatch.
    #[default]
    Node,
    /// Trigonometric-interpolation shift matching the first-harmonic phase
    /// of u to the reference; removes the sub-node jitter of `Node`.
    Fourier,
}

/// Normalizes and aligns one state against a reference u-profile.
pub fn preprocess_one(
    state: &FieldState,
    reference_u: &[f64],
    alignment: Alignment,
) -> Result<Snapshot> {
    match alignment {
        Alignment::Node => {
            let (u, a, u_scale, a_scale) = normalize(state)?;
            let shift = alignment_shift(&u, reference_u)?;
            let mut data = shift_profile(&u, shift);
            data.extend(shift_profile(&a, shift));
            Ok(Snapshot {
                data,
                shift: shift as f64,
                u_scale,
                a_scale,
            })
        }
        Alignment::Fourier => {
            let m = state.nodes();
            if reference_u.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: reference_u.len(),
                });
            }
            let grid = Grid::new(m);
            let peak =
                |p: &[f64]| peak_phase(p, &grid).map_err(|e| Error::Preprocess(e.to_string()));
            let delta = wrap_angle(peak(reference_u)?.angle - peak(&state.u)?.angle);
            let moved = FieldState {
                u: fourier_shift(&state.u, delta),
                a: fourier_shift(&state.a, delta),
            };
            let (mut data, a, u_scale, a_scale) = normalize(&moved)?;
            data.extend(a);
            Ok(Snapshot {
                data,
                shift: delta * m as f64 / (2.0 * std::f64::consts::PI),
                u_scale,
                a_scale,
            })
        }
    }
}

/// Normalizes and aligns a sequence; the reference defaults to the first
/// normalized snapshot. Returns the snapshots and the reference u-profile.
pub fn preprocess(
    raw: &[FieldState],
    reference_u: Option<&[f64]>,
    alignment: Alignment,
) -> Result<(Vec<Snapshot>, Vec<f64>)> {
    let reference = match reference_u {
        Some(r) => r.to_vec(),
        None => {
            let first = raw
                .first()
                .ok_or_else(|| Error::InsufficientData("no snapshots".into()))?;
            normalize(first)?.0
        }
    };
    let snaps = raw
        .iter()
        .map(|s| preprocess_one(s, &reference, alignment))
        .collect::<Result<Vec<_>>>()?;
    Ok((snaps, reference))
}

fn sq_dist(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Pairwise squared Euclidean distances between rows.
pub fn squared_distances(data: &Array2<f64>) -> Array2<f64> {
    let n = data.nrows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| sq_dist(data.row(i), data.row(j))).collect())
        .collect();
    Array2::from_shape_vec((n, n), rows.concat()).expect("n x n")
}

/// `K_ij = exp(-(|x_i - x_j| / sigma)^2)`.
pub fn kernel_matrix(data: &Array2<f64>, sigma: f64) -> Result<Array2<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", "must be positive"));
    }
    Ok(kernel_from_distances(&squared_distances(data), sigma))
}

fn kernel_from_distances(d2: &Array2<f64>, sigma: f64) -> Array2<f64> {
    let s2 = sigma * sigma;
    d2.mapv(|d| (-d / s2).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovNormalization {
    pub degrees: Vec<f64>,
    /// Row-stochastic `D^-1 K`.
    pub markov: Array2<f64>,
    /// `D^-1/2 K D^-1/2`.
    pub symmetric: Array2<f64>,
}

pub fn markov_normalize(k: &Array2<f64>) -> Result<MarkovNormalization> {
    let degrees: Vec<f64> = k.sum_axis(Axis(1)).to_vec();
    if let Some(index) = degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::ZeroDegree { index });
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| d.sqrt().recip()).collect();
    let mut markov = k.clone();
    let mut symmetric = k.clone();
    for ((i, j), m) in markov.indexed_iter_mut() {
        *m /= degrees[i];
        symmetric[[i, j]] *= inv_sqrt[i] * inv_sqrt[j];
    }
    Ok(MarkovNormalization {
        degrees,
        markov,
        symmetric,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Descending, `k + 1` values.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors of the symmetric matrix, one column each.
    pub psi: Array2<f64>,
    /// `D^-1/2 psi`, scaled so the first column is all ones.
    pub phi: Array2<f64>,
}

/// Top `k + 1` eigenpairs of the symmetric form.
pub fn spectral_decompose(symmetric: &Array2<f64>, degrees: &[f64], k: usize) -> Result<Spectrum> {
    let n = symmetric.nrows();
    if k >= n {
        return Err(Error::param("k", format!("need k < N = {n}, got {k}")));
    }
    if degrees.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: degrees.len(),
        });
    }
    let (vals, vecs) = symmetric
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Eigensolver(e.to_string()))?;
    // ascending from LAPACK
    let idx: Vec<usize> = (0..=k).map(|j| n - 1 - j).collect();
    let eigenvalues: Vec<f64> = idx.iter().map(|&c| vals[c]).collect();
    let mut psi = Array2::<f64>::zeros((n, k + 1));
    for (j, &c) in idx.iter().enumerate() {
        psi.column_mut(j).assign(&vecs.column(c));
    }
    // deterministic signs: psi_1 positive, others with a nonnegative first
    // nonzero entry
    for j in 0..=k {
        let flip = if j == 0 {
            psi.column(0).sum() < 0.0
        } else {
            psi.column(j)
                .iter()
                .find(|x| x.abs() > 1e-12)
                .is_some_and(|&x| x < 0.0)
        };
        if flip {
            psi.column_mut(j).mapv_inplace(|x| -x);
        }
    }
    let phi = phi_from_psi(&psi, degrees);
    Ok(Spectrum {
        eigenvalues,
        psi,
        phi,
    })
}

fn phi_from_psi(psi: &Array2<f64>, degrees: &[f64]) -> Array2<f64> {
    let mut phi = psi.clone();
    for (i, mut row) in phi.rows_mut().into_iter().enumerate() {
        let s = degrees[i].sqrt();
        row.mapv_inplace(|x| x / s);
    }
    // D^-1/2 psi_1 is constant for a connected graph
    let c = phi.column(0).mean().expect("nonempty");
    phi.mapv_inplace(|x| x / c);
    phi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaPolicy {
    /// `factor` times the median pairwise distance.
    MedianScaled {
        factor: f64,
    },
    Fixed {
        sigma: f64,
    },
}

impl Default for SigmaPolicy {
    fn default() -> Self {
        SigmaPolicy::MedianScaled { factor: 0.5 }
    }
}

fn median_distance(d2: &Array2<f64>) -> f64 {
    let n = d2.nrows();
    let mut d: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| d2[[i, j]].sqrt())
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionMapModel {
    /// N x 2M snapshot matrix (or N x dim for generic points).
    pub dataset: Array2<f64>,
    /// Alignment reference for preprocessing new states.
    pub reference_u: Vec<f64>,
    pub alignment: Alignment,
    pub u_scales: Vec<f64>,
    pub a_scales: Vec<f64>,
    pub sigma: f64,
    pub degrees: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub psi: Array2<f64>,
    pub phi: Array2<f64>,
    /// Retained nontrivial eigenpairs.
    pub k: usize,
    /// Coarse V of each snapshot when built from field states.
    pub v: Vec<f64>,
}

impl DiffusionMapModel {
    /// Embeds arbitrary points. When `orient` is given, the sign of
    /// each nontrivial coordinate is chosen to correlate positively with it
    /// (only `phi_2` in practice; the rest keep their deterministic sign).
    pub fn from_points(
        dataset: Array2<f64>,
        sigma: SigmaPolicy,
        k: usize,
        orient: Option<&[f64]>,
    ) -> Result<Self> {
        let n = dataset.nrows();
        if n < 2 {
            return Err(Error::InsufficientData(format!("{n} points")));
        }
        let d2 = squared_distances(&dataset);
        let sigma = match sigma {
            SigmaPolicy::MedianScaled { factor } => {
                if !(factor > 0.0) {
                    return Err(Error::param("dmap.sigma.factor", "must be positive"));
                }
                factor * median_distance(&d2)
            }
            SigmaPolicy::Fixed { sigma } => sigma,
        };
        if !(sigma > 0.0) {
            return Err(Error::param(
                "dmap.sigma",
                format!("resolved to {sigma}, need > 0"),
            ));
        }
        let kernel = kernel_from_distances(&d2, sigma);
        drop(d2);
        let norm = markov_normalize(&kernel)?;
        drop(kernel);
        let mut spec = spectral_decompose(&norm.symmetric, &norm.degrees, k)?;
        if let Some(v) = orient {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: v.len(),
                });
            }
            if k >= 1 && pearson(&spec.phi.column(1).to_vec(), v) < 0.0 {
                spec.psi.column_mut(1).mapv_inplace(|x| -x);
                spec.phi.column_mut(1).mapv_inplace(|x| -x);
            }
        }
        Ok(Self {
            reference_u: Vec::new(),
            alignment: Alignment::Node,
            u_scales: vec![1.0; n],
            a_scales: vec![1.0; n],
            sigma,
            degrees: norm.degrees,
            eigenvalues: spec.eigenvalues,
            psi: spec.psi,
            phi: spec.phi,
            k,
            v: orient
                .map(|v| v.to_vec())
                .unwrap_or_else(|| vec![f64::NAN; n]),
            dataset,
        })
    }

    pub fn len(&self) -> usize {
        self.dataset.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Phi_2` of every dataset point.
    pub fn phi2(&self) -> Vec<f64> {
        self.phi.column(1).to_vec()
    }

    pub fn snapshot(&self, i: usize) -> Snapshot {
        Snapshot {
            data: self.dataset.row(i).to_vec(),
            shift: 0.0,
            u_scale: self.u_scales[i],
            a_scale: self.a_scales[i],
        }
    }

    /// Nyström extension of the retained coordinates to a preprocessed point.
    pub fn nystrom(&self, x: &[f64]) -> Result<Restriction> {
        let (n, dim) = self.dataset.dim();
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        let xv = ArrayView1::from(x);
        let s2 = self.sigma * self.sigma;
        let krow: Array1<f64> = self
            .dataset
            .rows()
            .into_iter()
            .map(|r| (-sq_dist(xv, r) / s2).exp())
            .collect();
        let mass = krow.sum();
        if !(mass > 0.0) {
            return Err(Error::ZeroDegree { index: n });
        }
        let nf = n as f64;
        let ex = mass / nf;
        // generalized kernel (1/N) K / sqrt(E K(x,.) E K(x_k,.)), E K(x_k,.) = D_kk / N
        let w: Array1<f64> = krow
            .iter()
            .zip(&self.degrees)
            .map(|(kv, d)| kv / (nf * (ex * d / nf).sqrt()))
            .collect();
        let psi: Vec<f64> = (0..=self.k)
            .map(|j| w.dot(&self.psi.column(j)) / self.eigenvalues[j])
            .collect();
        if !(psi[0] > 0.0) {
            return Err(Error::ZeroDegree { index: n });
        }
        let coords = psi[1..].iter().map(|p| p / psi[0]).collect();
        let warning =
            (mass < OUT_OF_SAMPLE_MASS).then(|| format!("out of sample: kernel-row mass {mass:e}"));
        Ok(Restriction {
            coords,
            psi1: psi[0],
            row_mass: mass,
            warning,
        })
    }

    /// Preprocesses a raw state against the model's reference and restricts it.
    pub fn restrict_state(&self, state: &FieldState) -> Result<Restriction> {
        let snap = preprocess_one(state, &self.reference_u, self.alignment)?;
        self.nystrom(&snap.data)
    }

    /// Index of the dataset point whose `Phi_2` is nearest `target`.
    pub fn nearest_phi2(&self, target: f64) -> usize {
        let col = self.phi.column(1);
        (0..self.len())
            .min_by(|&a, &b| (col[a] - target).abs().total_cmp(&(col[b] - target).abs()))
            .expect("nonempty model")
    }

    pub fn phi2_range(&self) -> (f64, f64) {
        self.phi
            .column(1)
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Restriction {
    /// `Phi_2 .. Phi_{k+1}`.
    pub coords: Vec<f64>,
    pub psi1: f64,
    pub row_mass: f64,
    pub warning: Option<String>,
}

impl Restriction {
    pub fn phi2(&self) -> f64 {
        self.coords[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmapConfig {
    pub duration: f64,
    pub sample_every: f64,
    /// Integration time discarded before sampling starts.
    pub transient: f64,
    pub sigma: SigmaPolicy,
    pub k: usize,
    /// Uniform subsampling cap for the dense eigensolve.
    pub max_points: usize,
    pub alignment: Alignment,
}

impl Default for DmapConfig {
    fn default() -> Self {
        Self {
            duration: 30_000.0,
            sample_every: 8.0,
            transient: 200.0,
            sigma: SigmaPolicy::default(),
            k: 4,
            max_points: 4000,
            alignment: Alignment::Fourier,
        }
    }
}

/// Samples a stationary trajectory from a travelling seed and embeds it.
pub fn simulate_model(
    params: &ModelParams,
    spec: &NoiseSpec,
    dt: f64,
    cfg: &DmapConfig,
    seed: u64,
) -> Result<DiffusionMapModel> {
    let mut integ = Integrator::new(params, spec, dt)?;
    let mut rng = stream(seed, &[]);
    let mut ns = integ.fresh_noise(&mut rng);
    let mut state = FieldState::travelling_seed(params, true);
    let warm = integ.steps_for("dmap.transient", cfg.transient)?;
    integ.advance(&mut state, &mut ns, warm, &mut rng)?;
    let mut states = Vec::new();
    integ.run_sampled(
        &mut state,
        &mut ns,
        cfg.duration,
        cfg.sample_every,
        &mut rng,
        |_, s| states.push(s.clone()),
    )?;
    build_model(&states, cfg.sigma, cfg.k, cfg.max_points, cfg.alignment)
}

/// Uniformly spaced indices keeping at most `max` of `n`.
pub fn subsample_indices(n: usize, max: usize) -> Vec<usize> {
    if n <= max || max == 0 {
        return (0..n).collect();
    }
    (0..max).map(|i| i * n / max).collect()
}

/// Preprocesses a trajectory of states, embeds it, and orients `Phi_2`
/// along the coarse V.
pub fn build_model(
    trajectory: &[FieldState],
    sigma: SigmaPolicy,
    k: usize,
    max_points: usize,
    alignment: Alignment,
) -> Result<DiffusionMapModel> {
    let keep = subsample_indices(trajectory.len(), max_points);
    if keep.len() < MIN_SNAPSHOTS {
        return Err(Error::InsufficientData(format!(
            "{} snapshots, need at least {MIN_SNAPSHOTS}",
            keep.len()
        )));
    }
    if keep.len() < trajectory.len() {
        log::info!(
            "diffusion map: subsampled {} of {} snapshots",
            keep.len(),
            trajectory.len()
        );
    }
    let states: Vec<FieldState> = keep.iter().map(|&i| trajectory[i].clone()).collect();
    let obs = Observer::new(states[0].nodes());
    let v = states
        .iter()
        .map(|s| obs.coarse_v(s).map(|c| c.value()))
        .collect::<Result<Vec<_>>>()?;
    let (snaps, reference_u) = preprocess(&states, None, alignment)?;
    let dim = snaps[0].data.len();
    let flat: Vec<f64> = snaps.iter().flat_map(|s| s.data.iter().copied()).collect();
    let dataset = Array2::from_shape_vec((snaps.len(), dim), flat).expect("rows of equal length");
    let mut model = DiffusionMapModel::from_points(dataset, sigma, k, Some(&v))?;
    model.reference_u = reference_u;
    model.alignment = alignment;
    model.u_scales = snaps.iter().map(|s| s.u_scale).collect();
    model.a_scales = snaps.iter().map(|s| s.a_scale).collect();
    Ok(model)
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Ranks with ties averaged.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Spread of a planar cloud about the curve traced by a running mean of
/// `y` ordered by `x`. Returns (transverse variance, longitudinal variance),
/// the latter being the variance of the curve points themselves.
pub fn curve_spread(x: &[f64], y: &[f64], window: usize) -> (f64, f64) {
    let n = x.len().min(y.len());
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let half = window / 2;
    let mut fit = vec![0.0; n];
    for (r, &i) in idx.iter().enumerate() {
        let lo = r.saturating_sub(half);
        let hi = (r + half + 1).min(n);
        fit[i] = idx[lo..hi].iter().map(|&j| y[j]).sum::<f64>() / (hi - lo) as f64;
    }
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    let resid: Vec<f64> = (0..n).map(|i| y[i] - fit[i]).collect();
    (var(&resid), var(&x[..n]) + var(&fit))
}
