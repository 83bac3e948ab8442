//! Gaussian-process regression with the geodesic kernel.
//!
//! The kernel matrix is the matrix exponential of the rank-`d` eigenexpansion
//! of `−B / 2ℓ²`:
//!
//! ```text
//! K = I + Σᵢ cᵢ qᵢ qᵢᵀ,   cᵢ = exp(−λᵢ / 2ℓ²) − 1
//! ```
//!
//! Because `K + σₙ²I` is the identity plus a rank-`d` correction along
//! orthonormal directions, its inverse, determinant, and the regression
//! weights all have closed forms in `α = 1 / (1 + σₙ²)` and the `cᵢ`. Nothing
//! in the prediction path forms or factors a dense `n × n` matrix.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::GeodesicSet;
use crate::spectral::Embedding;

/// Signal variance `σₛ²`; fixed, not fitted.
pub const SIGNAL_VARIANCE: f64 = 1.0;

/// `cᵢ = exp(−λᵢ / 2ℓ²) − 1`, evaluated without cancellation.
pub fn kernel_coefficients(eigvals: &DVector<f64>, ell: f64) -> DVector<f64> {
    eigvals.map(|l| (-l / (2.0 * ell * ell)).exp_m1())
}

/// `K = I + Q·diag(c)·Qᵀ`.
pub fn kernel_matrix(embedding: &Embedding, ell: f64) -> DMatrix<f64> {
    let n = embedding.len();
    let c = kernel_coefficients(&embedding.eigvals, ell);
    let q = &embedding.eigvecs;
    let mut k = DMatrix::identity(n, n);
    for (i, ci) in c.iter().enumerate() {
        let col = q.column(i);
        k.ger(*ci, &col, &col, 1.0);
    }
    k
}

/// The elementwise reading `Kᵢⱼ = exp(−bᵢⱼ / 2ℓ²)`. Diagnostic only: it is
/// not guaranteed positive definite and no closed form applies to it.
pub fn elementwise_kernel_matrix(geo: &GeodesicSet, ell: f64) -> DMatrix<f64> {
    geo.b.map(|b| (-b / (2.0 * ell * ell)).exp())
}

fn alpha(sigma_n_sq: f64) -> f64 {
    1.0 / (1.0 + sigma_n_sq)
}

/// Regression weights `βᵢ = α√λᵢ qᵢ / (1 + α cᵢ)` for the targets
/// `√λᵢ qᵢ` (the embedding coordinates). Returns `n × d`.
pub fn lowrank_solve(embedding: &Embedding, ell: f64, sigma_n_sq: f64) -> DMatrix<f64> {
    let a = alpha(sigma_n_sq);
    let c = kernel_coefficients(&embedding.eigvals, ell);
    let mut beta = embedding.eigvecs.clone();
    for (i, mut col) in beta.column_iter_mut().enumerate() {
        col *= a * embedding.eigvals[i].sqrt() / (1.0 + a * c[i]);
    }
    beta
}

/// `(K + σₙ²I)⁻¹ v = α v − α² Σᵢ cᵢ qᵢ (qᵢᵀ v) / (1 + α cᵢ)`.
pub fn apply_inverse(embedding: &Embedding, ell: f64, sigma_n_sq: f64, v: &DVector<f64>) -> DVector<f64> {
    let a = alpha(sigma_n_sq);
    let c = kernel_coefficients(&embedding.eigvals, ell);
    let mut out = v * a;
    for (i, ci) in c.iter().enumerate() {
        let q = embedding.eigvecs.column(i);
        let w = -a * a * ci * q.dot(v) / (1.0 + a * ci);
        out.axpy(w, &q, 1.0);
    }
    out
}

/// Dense `(K + σₙ²I)⁻¹` from the closed form; for verification only.
pub fn lowrank_inverse(embedding: &Embedding, ell: f64, sigma_n_sq: f64) -> DMatrix<f64> {
    let n = embedding.len();
    let a = alpha(sigma_n_sq);
    let c = kernel_coefficients(&embedding.eigvals, ell);
    let mut inv = DMatrix::identity(n, n) * a;
    for (i, ci) in c.iter().enumerate() {
        let q = embedding.eigvecs.column(i);
        inv.ger(-a * a * ci / (1.0 + a * ci), &q, &q, 1.0);
    }
    inv
}

/// `log det(K + σₙ²I) = (n − d)·log(1 + σₙ²) + Σᵢ log(exp(−λᵢ/2ℓ²) + σₙ²)`.
pub fn log_det(embedding: &Embedding, ell: f64, sigma_n_sq: f64) -> f64 {
    let n = embedding.len() as f64;
    let d = embedding.dim() as f64;
    let tail: f64 = embedding
        .eigvals
        .iter()
        .map(|l| ((-l / (2.0 * ell * ell)).exp() + sigma_n_sq).ln())
        .sum();
    (n - d) * sigma_n_sq.ln_1p() + tail
}

/// Marginal log-likelihood of the embedding coordinates, summed over the
/// `d` independent output dimensions.
pub fn log_marginal_likelihood(embedding: &Embedding, ell: f64, sigma_n_sq: f64) -> f64 {
    let n = embedding.len() as f64;
    let a = alpha(sigma_n_sq);
    let c = kernel_coefficients(&embedding.eigvals, ell);
    let logdet = log_det(embedding, ell, sigma_n_sq);
    embedding
        .eigvals
        .iter()
        .zip(c.iter())
        .map(|(l, ci)| -0.5 * a * l / (1.0 + a * ci) - 0.5 * logdet - 0.5 * n * (2.0 * PI).ln())
        .sum()
}

/// Candidate `(ℓ, σₙ²)` values for the likelihood search.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperGrid {
    pub ells: Vec<f64>,
    pub noise_vars: Vec<f64>,
}

impl HyperGrid {
    pub fn single(ell: f64, sigma_n_sq: f64) -> Self {
        Self { ells: vec![ell], noise_vars: vec![sigma_n_sq] }
    }

    /// 16 log-spaced `ℓ` over `[0.1·m, 100·m]` for the median geodesic
    /// distance `m`, and 8 log-spaced `σₙ²` over `[1e-4, 1]`.
    pub fn default_for(geo: &GeodesicSet) -> Self {
        let med = geo.median_distance().max(f64::MIN_POSITIVE);
        Self { ells: log_space(0.1 * med, 100.0 * med, 16), noise_vars: log_space(1e-4, 1.0, 8) }
    }

    fn validate(&self) -> Result<()> {
        if self.ells.is_empty() || self.noise_vars.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if self.ells.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidInput("length scales must be positive and finite".into()));
        }
        if self.noise_vars.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput("noise variances must be non-negative and finite".into()));
        }
        Ok(())
    }
}

pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

/// A fitted GP over one cluster's embedding.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub ell: f64,
    pub sigma_n_sq: f64,
    pub sigma_s_sq: f64,
    /// Length scale for the predictive variance. Equal to `ell` unless the
    /// caller sets a separate detection scale (see [`GpModel::with_variance_ell`]).
    pub variance_ell: f64,
    pub embedding: Arc<Embedding>,
    pub alpha: f64,
    pub c: DVector<f64>,
    /// `n × d`.
    pub beta: DMatrix<f64>,
    pub log_likelihood: f64,
    /// Per-axis affine map from raw GP means to embedding coordinates; see
    /// [`GpModel::calibrate_output`].
    pub out_scale: DVector<f64>,
    pub out_offset: DVector<f64>,
    c_var: DVector<f64>,
}

impl GpModel {
    pub fn new(embedding: Arc<Embedding>, ell: f64, sigma_n_sq: f64) -> Result<Self> {
        if !(ell > 0.0 && ell.is_finite()) {
            return Err(Error::InvalidInput(format!("length scale must be positive, got {ell}")));
        }
        if !(sigma_n_sq >= 0.0 && sigma_n_sq.is_finite()) {
            return Err(Error::InvalidInput(format!("noise variance must be non-negative, got {sigma_n_sq}")));
        }
        let c = kernel_coefficients(&embedding.eigvals, ell);
        let beta = lowrank_solve(&embedding, ell, sigma_n_sq);
        let log_likelihood = log_marginal_likelihood(&embedding, ell, sigma_n_sq);
        Ok(Self {
            ell,
            sigma_n_sq,
            sigma_s_sq: SIGNAL_VARIANCE,
            variance_ell: ell,
            alpha: alpha(sigma_n_sq),
            c_var: c.clone(),
            c,
            beta,
            log_likelihood,
            out_scale: DVector::from_element(embedding.dim(), 1.0),
            out_offset: DVector::zeros(embedding.dim()),
            embedding,
        })
    }

    /// Fits, per axis, the affine map that best sends the GP means at the
    /// batch points (cross-covariances taken from the batch geodesics) onto
    /// the embedding coordinates. The raw means live on a scale of roughly
    /// `λᵢ/ℓ²` times the coordinates, so without this they cannot share a
    /// space with the batch embedding.
    pub fn calibrate_output(&mut self, geo: &GeodesicSet) {
        let n = self.len();
        let d = self.dim();
        let scale = -0.5 / (self.ell * self.ell);
        let mut raw = DMatrix::zeros(d, n);
        let mut k = DVector::zeros(n);
        for j in 0..n {
            for (m, km) in k.iter_mut().enumerate() {
                *km = (scale * geo.gsq[(m, j)]).exp();
            }
            raw.set_column(j, &self.beta.tr_mul(&k));
        }
        for i in 0..d {
            let x = self.embedding.coords.row(i);
            let r = raw.row(i);
            let (mx, mr) = (x.mean(), r.mean());
            let cov: f64 = x.iter().zip(r.iter()).map(|(a, b)| (a - mx) * (b - mr)).sum();
            let var: f64 = r.iter().map(|b| (b - mr) * (b - mr)).sum();
            let s = if var > 0.0 { cov / var } else { 1.0 };
            self.out_scale[i] = s;
            self.out_offset[i] = mx - s * mr;
        }
    }

    /// Raw GP mean to embedding coordinates.
    pub fn to_coords(&self, mean: &DVector<f64>) -> DVector<f64> {
        mean.component_mul(&self.out_scale) + &self.out_offset
    }

    pub fn with_variance_ell(mut self, variance_ell: f64) -> Result<Self> {
        if !(variance_ell > 0.0 && variance_ell.is_finite()) {
            return Err(Error::InvalidInput(format!("variance length scale must be positive, got {variance_ell}")));
        }
        self.variance_ell = variance_ell;
        self.c_var = kernel_coefficients(&self.embedding.eigvals, variance_ell);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.embedding.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embedding.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embedding.dim()
    }

    /// Corrupts the `cᵢ` cached for the mean; used to check that the
    /// verification suite notices.
    #[doc(hidden)]
    pub fn inject_coefficient_fault(&mut self, factor: f64) {
        self.c *= factor;
        let a = self.alpha;
        for (i, mut col) in self.beta.column_iter_mut().enumerate() {
            let q = self.embedding.eigvecs.column(i);
            col.copy_from(&(q * (a * self.embedding.eigvals[i].sqrt() / (1.0 + a * self.c[i]))));
        }
    }
}

/// Picks the grid point with the largest marginal likelihood. Ties go to the
/// larger `ℓ`, then the smaller `σₙ²`.
pub fn fit_hyperparams(embedding: Arc<Embedding>, grid: &HyperGrid) -> Result<GpModel> {
    grid.validate()?;
    let mut best: Option<(f64, f64, f64)> = None;
    for &ell in &grid.ells {
        for &s in &grid.noise_vars {
            let ll = log_marginal_likelihood(&embedding, ell, s);
            let better = match best {
                None => true,
                Some((bl, bs, bll)) => {
                    ll > bll || (ll == bll && (ell > bl || (ell == bl && s < bs)))
                }
            };
            if better {
                best = Some((ell, s, ll));
            }
        }
    }
    let (ell, s, _) = best.ok_or(Error::EmptyGrid)?;
    GpModel::new(embedding, ell, s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: DVector<f64>,
    /// `mean` after the model's output calibration.
    pub coords: DVector<f64>,
    pub variance: f64,
    /// The raw variance was negative and got clamped to zero.
    pub clamped: bool,
}

/// Predictive mean `μᵢ = βᵢᵀk*` and variance
/// `σₛ² − k*ᵀ(K + σₙ²I)⁻¹k* + σₙ²` for squared stream geodesics `gsq_star`.
pub fn gp_predict(model: &GpModel, gsq_star: &[f64]) -> Result<Prediction> {
    let n = model.len();
    if gsq_star.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: gsq_star.len() });
    }
    if gsq_star.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::InvalidInput("squared geodesics must be finite and non-negative".into()));
    }
    let k_mean = DVector::from_iterator(n, gsq_star.iter().map(|g| (-g / (2.0 * model.ell * model.ell)).exp()));
    let mean = model.beta.tr_mul(&k_mean);

    let k_var = if model.variance_ell == model.ell {
        k_mean
    } else {
        let lv = model.variance_ell;
        DVector::from_iterator(n, gsq_star.iter().map(|g| (-g / (2.0 * lv * lv)).exp()))
    };
    let a = model.alpha;
    let mut quad = a * k_var.norm_squared();
    for (i, ci) in model.c_var.iter().enumerate() {
        let p = model.embedding.eigvecs.column(i).dot(&k_var);
        quad -= a * a * ci * p * p / (1.0 + a * ci);
    }
    let raw = model.sigma_s_sq - quad;
    let clamped = raw < 0.0;
    Ok(Prediction { coords: model.to_coords(&mean), mean, variance: raw.max(0.0) + model.sigma_n_sq, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{Eigenpairs, SpectrumDiagnostics};
    use rand::{Rng, SeedableRng};

    /// Embedding with random orthonormal eigenvectors orthogonal to `1`.
    pub(crate) fn random_embedding(seed: u64, n: usize, eigvals: &[f64]) -> Embedding {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = eigvals.len();
        let mut cols: Vec<DVector<f64>> = vec![DVector::from_element(n, 1.0 / (n as f64).sqrt())];
        while cols.len() < d + 1 {
            let mut v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            for c in &cols {
                let p = c.dot(&v);
                v.axpy(-p, c, 1.0);
            }
            cols.push(v.normalize());
        }
        let vectors = if d == 0 { DMatrix::zeros(n, 0) } else { DMatrix::from_columns(&cols[1..]) };
        Embedding::from_eigenpairs(Eigenpairs {
            values: DVector::from_vec(eigvals.to_vec()),
            vectors,
            diagnostics: SpectrumDiagnostics::default(),
        })
    }

    /// Dense solve of `(K + σ²I) x = rhs` by LU; independent of the closed forms.
    fn dense_solve(k: &DMatrix<f64>, s: f64, rhs: &DVector<f64>) -> DVector<f64> {
        let n = k.nrows();
        (k + DMatrix::identity(n, n) * s).lu().solve(rhs).unwrap()
    }

    /// Truncated series `Σ_{k≤terms} Mᵏ/k!`.
    fn expm_series(m: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
        let n = m.nrows();
        let mut out = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        for k in 1..=terms {
            term = &term * m / k as f64;
            out += &term;
        }
        out
    }

    #[test]
    fn no_eigenpairs_gives_identity_kernel() {
        let emb = random_embedding(1, 5, &[]);
        assert_eq!(kernel_matrix(&emb, 1.0), DMatrix::identity(5, 5));
        let inv = lowrank_inverse(&emb, 1.0, 0.25);
        assert!((inv - DMatrix::identity(5, 5) * 0.8).amax() < 1e-15);
    }

    #[test]
    fn huge_length_scale_tends_to_identity() {
        let emb = random_embedding(2, 6, &[3.0, 1.0]);
        let k = kernel_matrix(&emb, 1e8);
        assert!((k - DMatrix::identity(6, 6)).amax() < 1e-12);
        let beta = lowrank_solve(&emb, 1e8, 0.0);
        assert!((beta - emb.coords.transpose()).amax() < 1e-12);
    }

    #[test]
    fn rank_one_kernel_matches_exponential_series() {
        let emb = random_embedding(3, 3, &[2.0]);
        let q = emb.eigvecs.column(0).into_owned();
        let b = &q * q.transpose() * 2.0;
        let series = expm_series(&(-b / 2.0), 20);
        assert!((kernel_matrix(&emb, 1.0) - &series).amax() < 1e-10);
        let closed = DMatrix::identity(3, 3) + &q * q.transpose() * ((-1.0f64).exp() - 1.0);
        assert!((kernel_matrix(&emb, 1.0) - closed).amax() < 1e-14);
    }

    #[test]
    fn rank_one_solve_matches_dense() {
        let emb = random_embedding(4, 4, &[1.0]);
        let beta = lowrank_solve(&emb, 1.0, 0.1);
        let rhs = emb.coords.row(0).transpose();
        let x = dense_solve(&kernel_matrix(&emb, 1.0), 0.1, &rhs);
        assert!((beta.column(0) - x).amax() < 1e-10);
    }

    #[test]
    fn rank_three_solve_matches_dense() {
        let emb = random_embedding(5, 20, &[9.0, 4.5, 0.7]);
        let k = kernel_matrix(&emb, 1.3);
        let beta = lowrank_solve(&emb, 1.3, 0.05);
        for i in 0..3 {
            let x = dense_solve(&k, 0.05, &emb.coords.row(i).transpose());
            assert!((beta.column(i) - x).amax() < 1e-8);
        }
    }

    #[test]
    fn rank_one_inverse_is_sherman_morrison() {
        let emb = random_embedding(6, 5, &[2.5]);
        let (ell, s): (f64, f64) = (0.8, 0.3);
        let a = 1.0 / (1.0 + s);
        let c1 = (-2.5 / (2.0 * ell * ell)).exp() - 1.0;
        let q = emb.eigvecs.column(0).into_owned();
        let sm = DMatrix::identity(5, 5) * a - &q * q.transpose() * (a * a * c1 / (1.0 + a * c1));
        assert!((lowrank_inverse(&emb, ell, s) - sm).amax() < 1e-14);
    }

    #[test]
    fn rank_two_inverse_matches_dense_inversion() {
        let emb = random_embedding(7, 12, &[5.0, 2.0]);
        let k = kernel_matrix(&emb, 1.1) + DMatrix::identity(12, 12) * 0.2;
        let dense = k.clone().try_inverse().unwrap();
        let inv = lowrank_inverse(&emb, 1.1, 0.2);
        assert!((&inv - dense).norm() < 1e-8);
        assert!((inv * k - DMatrix::identity(12, 12)).norm() < 1e-8);
    }

    #[test]
    fn closed_form_logdet_matches_dense_determinant() {
        let emb = random_embedding(8, 15, &[4.0, 1.5]);
        let k = kernel_matrix(&emb, 0.9) + DMatrix::identity(15, 15) * 0.07;
        let dense = k.determinant().ln();
        assert!((log_det(&emb, 0.9, 0.07) - dense).abs() < 1e-8);
    }

    #[test]
    fn single_candidate_grid_returns_it() {
        let emb = Arc::new(random_embedding(9, 10, &[3.0]));
        let m = fit_hyperparams(emb, &HyperGrid::single(0.7, 0.02)).unwrap();
        assert_eq!((m.ell, m.sigma_n_sq), (0.7, 0.02));
    }

    #[test]
    fn empty_grid_is_an_error() {
        let emb = Arc::new(random_embedding(9, 10, &[3.0]));
        let grid = HyperGrid { ells: vec![], noise_vars: vec![0.1] };
        assert!(matches!(fit_hyperparams(emb, &grid), Err(Error::EmptyGrid)));
    }

    #[test]
    fn far_stream_point_reverts_to_prior() {
        let emb = Arc::new(random_embedding(10, 8, &[3.0, 1.0]));
        let m = GpModel::new(emb, 1.0, 0.05).unwrap();
        let p = gp_predict(&m, &[1e6; 8]).unwrap();
        assert!(p.mean.amax() < 1e-300);
        assert!((p.variance - 1.05).abs() < 1e-12);
    }

    #[test]
    fn prediction_matches_dense_formulas() {
        let emb = Arc::new(random_embedding(11, 25, &[6.0, 2.0]));
        let m = GpModel::new(emb.clone(), 1.7, 0.03).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let gsq: Vec<f64> = (0..25).map(|_| rng.gen_range(0.0..6.0)).collect();
        let p = gp_predict(&m, &gsq).unwrap();

        let k = kernel_matrix(&emb, 1.7);
        let ks = DVector::from_iterator(25, gsq.iter().map(|g| (-g / (2.0 * 1.7 * 1.7)).exp()));
        for i in 0..2 {
            let w = dense_solve(&k, 0.03, &emb.coords.row(i).transpose());
            assert!((p.mean[i] - w.dot(&ks)).abs() < 1e-8);
        }
        let raw = 1.0 - ks.dot(&dense_solve(&k, 0.03, &ks));
        assert!((p.variance - (raw.max(0.0) + 0.03)).abs() < 1e-8);
    }

    #[test]
    fn exact_interpolation_with_kernel_consistent_cross_covariance() {
        let emb = Arc::new(random_embedding(13, 30, &[2.0, 0.5]));
        let m = GpModel::new(emb.clone(), 0.9, 0.0).unwrap();
        let k = kernel_matrix(&emb, 0.9);
        let j = 7;
        let mean = m.beta.tr_mul(&k.column(j));
        for i in 0..2 {
            assert!((mean[i] - emb.coords[(i, j)]).abs() < 1e-6);
        }
    }

    #[test]
    fn calibration_maps_batch_means_onto_coordinates_at_large_length_scale() {
        use crate::geometry::{build_knn_graph, geodesic_distances, GraphOptions, PointCloud};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(16);
        let data: Vec<f64> = (0..60).flat_map(|_| [rng.gen_range(0.0..4.0), rng.gen_range(0.0..2.0), 0.0]).collect();
        let cloud = PointCloud::from_rows(data, 3).unwrap();
        let geo = geodesic_distances(&build_knn_graph(&cloud, 8, GraphOptions::default()).unwrap()).unwrap();
        let emb = Arc::new(crate::spectral::isomap_embed(&geo, 2).unwrap());
        let mut m = GpModel::new(emb.clone(), 1e3 * geo.max_distance(), 1e-4).unwrap();
        m.calibrate_output(&geo);
        let p = gp_predict(&m, &geo.gsq.column(5).iter().copied().collect::<Vec<_>>()).unwrap();
        assert!((p.coords - emb.coords.column(5)).amax() < 1e-4 * emb.coords.amax());
    }

    #[test]
    fn mismatched_length_is_rejected() {
        let emb = Arc::new(random_embedding(14, 6, &[1.0]));
        let m = GpModel::new(emb, 1.0, 0.1).unwrap();
        assert!(matches!(gp_predict(&m, &[0.0; 5]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn kernel_stays_positive_definite_with_negative_eigenvalues() {
        let emb = random_embedding(15, 10, &[3.0, -2.0]);
        let min = kernel_matrix(&emb, 0.5).symmetric_eigenvalues().min();
        assert!(min > 0.0);
    }
}
