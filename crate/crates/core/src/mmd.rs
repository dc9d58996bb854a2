//! Kernel MMD between the mapped source and the target distribution.
//!
//! The objective for a minibatch of `B` source rows `x` and `B` target rows
//! `y` is the biased V-statistic
//!
//! ```text
//! MMD² = 1/B² [ Σᵢⱼ k(aᵢ, aⱼ) − 2 Σᵢⱼ k(aᵢ, bⱼ) + Σᵢⱼ k(bᵢ, bⱼ) ]
//! ```
//!
//! with `aᵢ = compress(xᵢ W)`, `bⱼ = compress(yⱼ)` and `k` a sum of isotropic
//! Gaussian kernels. Self-pairs `i = j` are included. All sums accumulate in
//! `f64` with a fixed per-row reduction order, so results do not depend on
//! the rayon schedule.

use std::ops::Deref;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;

/// Number of rows sampled for the median pairwise-distance heuristic.
pub const MEDIAN_SAMPLE: usize = 2048;

/// Mixture of isotropic RBF kernels `k(a, b) = Σ exp(−‖a − b‖² / (2σ²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    bandwidths: Vec<f64>,
}

impl KernelSpec {
    pub fn new(bandwidths: Vec<f64>) -> Result<Self> {
        if bandwidths.is_empty() {
            return Err(Error::Config("kernel needs at least one bandwidth".into()));
        }
        if let Some(s) = bandwidths.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::Config(format!("bandwidth must be positive and finite, got {s}")));
        }
        Ok(KernelSpec { bandwidths })
    }

    /// Ten bandwidths `2⁻³ … 2⁶ × scale`.
    pub fn geometric(scale: f64) -> Result<Self> {
        KernelSpec::new((-3..=6).map(|e| scale * 2f64.powi(e)).collect())
    }

    /// Geometric grid around the median pairwise distance of (a sample of)
    /// the rows of `data`.
    pub fn median_heuristic<R: Rng + ?Sized>(data: &DMatrix<f64>, rng: &mut R) -> Result<Self> {
        let median = median_pairwise_distance(data, MEDIAN_SAMPLE, rng)?;
        KernelSpec::geometric(median)
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    fn gammas(&self) -> Vec<f64> {
        self.bandwidths.iter().map(|s| 1.0 / (2.0 * s * s)).collect()
    }

    /// Kernel value for a squared distance.
    pub fn eval_sq(&self, sq_dist: f64) -> f64 {
        self.gammas().iter().map(|g| (-g * sq_dist).exp()).sum()
    }
}

/// Median Euclidean distance over all pairs of up to `max_rows` sampled rows.
pub fn median_pairwise_distance<R: Rng + ?Sized>(data: &DMatrix<f64>, max_rows: usize, rng: &mut R) -> Result<f64> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::Degenerate("need at least two rows for the median heuristic".into()));
    }
    let mut rows: Vec<usize> = if n > max_rows {
        sample(rng, n, max_rows).into_vec()
    } else {
        (0..n).collect()
    };
    rows.sort_unstable();
    let sub = RowMajor::from_rows(data, &rows);
    let sub = &sub;
    let mut dists: Vec<f64> = (0..sub.n)
        .into_par_iter()
        .flat_map_iter(|i| (i + 1..sub.n).map(move |j| sub.sq_dist(i, sub, j).sqrt()))
        .collect();
    let mid = dists.len() / 2;
    let (_, m, _) = dists.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let median = *m;
    if median <= 0.0 {
        return Err(Error::Degenerate("median pairwise distance is zero".into()));
    }
    Ok(median)
}

/// Contiguous row-major copy used by the pairwise kernels.
struct RowMajor {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl RowMajor {
    fn new(m: &DMatrix<f64>) -> Self {
        let (n, p) = m.shape();
        let data = (0..n).flat_map(|i| (0..p).map(move |j| m[(i, j)])).collect();
        RowMajor { n, p, data }
    }

    fn from_rows(m: &DMatrix<f64>, rows: &[usize]) -> Self {
        let p = m.ncols();
        let data = rows.iter().flat_map(|&i| (0..p).map(move |j| m[(i, j)])).collect();
        RowMajor { n: rows.len(), p, data }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    fn sq_dist(&self, i: usize, other: &RowMajor, j: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(other.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Gram matrix `K[i, j] = k(Aᵢ, Bⱼ)`.
pub fn kernel_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!("kernel inputs have {} and {} columns", a.ncols(), b.ncols())));
    }
    let (ra, rb) = (RowMajor::new(a), RowMajor::new(b));
    let gammas = spec.gammas();
    let rows: Vec<Vec<f64>> = (0..ra.n)
        .into_par_iter()
        .map(|i| {
            (0..rb.n)
                .map(|j| {
                    let d2 = ra.sq_dist(i, &rb, j);
                    gammas.iter().map(|g| (-g * d2).exp()).sum()
                })
                .collect()
        })
        .collect();
    Ok(DMatrix::from_fn(ra.n, rb.n, |i, j| rows[i][j]))
}

/// Sum of `k(Aᵢ, Bⱼ)` over all pairs, reduced row by row in index order.
fn kernel_sum(a: &RowMajor, b: &RowMajor, gammas: &[f64]) -> f64 {
    let partial: Vec<f64> = (0..a.n)
        .into_par_iter()
        .map(|i| {
            (0..b.n)
                .map(|j| {
                    let d2 = a.sq_dist(i, b, j);
                    gammas.iter().map(|g| (-g * d2).exp()).sum::<f64>()
                })
                .sum()
        })
        .collect();
    partial.iter().sum()
}

/// Biased minibatch MMD² between two equally sized batches.
pub fn mmd2_batch(wx: &DMatrix<f64>, y: &DMatrix<f64>, spec: &KernelSpec) -> Result<f64> {
    if wx.nrows() != y.nrows() {
        return Err(Error::Shape(format!("batch sizes differ: {} vs {}", wx.nrows(), y.nrows())));
    }
    if wx.ncols() != y.ncols() {
        return Err(Error::Shape(format!("batch dims differ: {} vs {}", wx.ncols(), y.ncols())));
    }
    if wx.nrows() == 0 {
        return Err(Error::Empty("minibatch".into()));
    }
    let (a, b) = (RowMajor::new(wx), RowMajor::new(y));
    let gammas = spec.gammas();
    let kxx = kernel_sum(&a, &a, &gammas);
    let kyy = kernel_sum(&b, &b, &gammas);
    let kxy = kernel_sum(&a, &b, &gammas);
    let bb = (a.n * a.n) as f64;
    Ok((kxx + kyy - 2.0 * kxy) / bb)
}

/// Gradient of `mmd2_batch(compress(x W), compress(y))` with respect to `W`,
/// together with the objective value at `W`.
pub fn mmd2_value_and_gradient(
    w: &MappingMatrix,
    x_batch: &DMatrix<f64>,
    y_batch: &DMatrix<f64>,
    proj: &Projector,
    spec: &KernelSpec,
) -> Result<(f64, DMatrix<f64>)> {
    if x_batch.nrows() != y_batch.nrows() {
        return Err(Error::Shape(format!(
            "batch sizes differ: {} vs {}",
            x_batch.nrows(),
            y_batch.nrows()
        )));
    }
    if x_batch.ncols() != w.nrows() || w.nrows() != w.ncols() {
        return Err(Error::Shape("mapping does not match batch dimension".into()));
    }
    let a_mat = proj.compress(&(x_batch * w.as_matrix()))?;
    let b_mat = proj.compress(y_batch)?;
    let (a, b) = (RowMajor::new(&a_mat), RowMajor::new(&b_mat));
    let gammas = spec.gammas();
    let n = a.n;
    let p = a.p;
    let bb = (n * n) as f64;

    // For each source row i: kernel sums against both batches and
    // ∂MMD²/∂aᵢ = 2/B² [ Σⱼ c(aᵢ,bⱼ)(aᵢ − bⱼ) − Σⱼ c(aᵢ,aⱼ)(aᵢ − aⱼ) ],
    // where c = Σ_σ exp(−γ‖·‖²)·2γ is the kernel's radial derivative weight.
    let per_row: Vec<(f64, f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ai = a.row(i);
            let mut g = vec![0.0; p];
            let mut kxx = 0.0;
            let mut kxy = 0.0;
            for j in 0..n {
                let (k, c) = kernel_and_weight(a.sq_dist(i, &a, j), &gammas);
                kxx += k;
                for (gk, (x, z)) in g.iter_mut().zip(ai.iter().zip(a.row(j))) {
                    *gk -= c * (x - z);
                }
                let (k, c) = kernel_and_weight(a.sq_dist(i, &b, j), &gammas);
                kxy += k;
                for (gk, (x, z)) in g.iter_mut().zip(ai.iter().zip(b.row(j))) {
                    *gk += c * (x - z);
                }
            }
            for gk in &mut g {
                *gk *= 2.0 / bb;
            }
            (kxx, kxy, g)
        })
        .collect();

    let kyy = kernel_sum(&b, &b, &gammas);
    let (mut kxx, mut kxy) = (0.0, 0.0);
    let mut grad_a = DMatrix::<f64>::zeros(n, p);
    for (i, (sxx, sxy, g)) in per_row.into_iter().enumerate() {
        kxx += sxx;
        kxy += sxy;
        for (k, v) in g.into_iter().enumerate() {
            grad_a[(i, k)] = v;
        }
    }
    let value = (kxx + kyy - 2.0 * kxy) / bb;
    let grad = x_batch.tr_mul(&(grad_a * &proj.matrix));
    Ok((value, grad))
}

/// Gradient of the minibatch MMD² with respect to `W`.
pub fn mmd2_gradient(
    w: &MappingMatrix,
    x_batch: &DMatrix<f64>,
    y_batch: &DMatrix<f64>,
    proj: &Projector,
    spec: &KernelSpec,
) -> Result<DMatrix<f64>> {
    mmd2_value_and_gradient(w, x_batch, y_batch, proj, spec).map(|(_, g)| g)
}

#[inline]
fn kernel_and_weight(sq_dist: f64, gammas: &[f64]) -> (f64, f64) {
    let mut k = 0.0;
    let mut c = 0.0;
    for g in gammas {
        let e = (-g * sq_dist).exp();
        k += e;
        c += 2.0 * g * e;
    }
    (k, c)
}

/// Linear compressor `v ↦ (v − offset) Pᵀ` with orthonormal rows in `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    /// `p × d` projection basis.
    pub matrix: DMatrix<f64>,
    /// Length-`d` centering offset.
    pub offset: DVector<f64>,
    /// Fraction of the fitting data's variance captured by the basis.
    pub explained_variance: f64,
    /// Set when `p` exceeded the numerical rank and the basis was completed
    /// with arbitrary orthonormal directions.
    pub rank_deficient: bool,
}

impl Projector {
    /// `p = d`, zero offset.
    pub fn identity(d: usize) -> Self {
        Projector {
            matrix: DMatrix::identity(d, d),
            offset: DVector::zeros(d),
            explained_variance: 1.0,
            rank_deficient: false,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `(rows − offset) Pᵀ`.
    pub fn compress(&self, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rows.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "projector expects {} columns, got {}",
                self.input_dim(),
                rows.ncols()
            )));
        }
        let mut centered = rows.clone();
        let offset = self.offset.transpose();
        for mut row in centered.row_iter_mut() {
            row -= &offset;
        }
        Ok(centered * self.matrix.transpose())
    }
}

/// Principal-component projector onto the top `p` directions of `data`.
pub fn fit_projector(data: &DMatrix<f64>, p: usize) -> Result<Projector> {
    let (n, d) = data.shape();
    if p == 0 || p > d {
        return Err(Error::Config(format!("compressed dimension {p} must be in 1..={d}")));
    }
    if n < p {
        return Err(Error::Config(format!("need at least {p} rows to fit the projector, got {n}")));
    }
    let mean = data.row_mean();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.tr_mul(&centered) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));

    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let largest = eig.eigenvalues[order[0]].max(0.0);
    let kept: f64 = order[..p].iter().map(|&i| eig.eigenvalues[i].max(0.0)).sum();
    let rank_deficient = eig.eigenvalues[order[p - 1]] <= largest * 1e-12;
    if rank_deficient {
        warn!("projector dimension {p} exceeds the data rank; basis padded with arbitrary directions");
    }

    let mut matrix = DMatrix::<f64>::zeros(p, d);
    for (r, &i) in order[..p].iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        // deterministic sign: largest-magnitude component positive
        let pivot = linalg::argmax(&v.iter().map(|x| x.abs()).collect::<Vec<_>>());
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for c in 0..d {
            matrix[(r, c)] = sign * v[c];
        }
    }
    Ok(Projector {
        matrix,
        offset: mean.transpose(),
        explained_variance: if total > 0.0 { kept / total } else { 1.0 },
        rank_deficient,
    })
}

/// A `d × d` mapping applied to row vectors from the right (`x ↦ x W`).
#[derive(Debug, Clone, PartialEq)]
pub struct MappingMatrix(DMatrix<f64>);

impl MappingMatrix {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::Shape(format!("mapping must be square, got {:?}", w.shape())));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mapping matrix".into()));
        }
        Ok(MappingMatrix(w))
    }

    pub fn identity(d: usize) -> Self {
        MappingMatrix(DMatrix::identity(d, d))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `‖WᵀW − I‖_F`.
    pub fn defect(&self) -> f64 {
        linalg::orthogonality_defect(&self.0)
    }

    /// `rows · W`.
    pub fn apply(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        rows * &self.0
    }
}

impl Deref for MappingMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}
