//! Symmetric eigendecomposition, classical MDS, and the Isomap embedding.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{double_center, GeodesicSet};

/// Eigenvalues below `POSITIVITY_FLOOR · max|λ|` are not usable as coordinates.
pub const POSITIVITY_FLOOR: f64 = 1e-10;

/// What was discarded from the spectrum of a centered matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpectrumDiagnostics {
    pub negative_count: usize,
    pub most_negative: f64,
    /// Sum of |λ| over the negative eigenvalues.
    pub negative_mass: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone)]
pub struct Eigenpairs {
    /// Descending.
    pub values: DVector<f64>,
    /// `n × d`, column `i` pairs with `values[i]`.
    pub vectors: DMatrix<f64>,
    pub diagnostics: SpectrumDiagnostics,
}

/// Flips `v` so its largest-magnitude entry (first on ties) is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Top-`d` eigenpairs of a symmetric matrix, descending, with a
/// deterministic sign convention.
pub fn top_eigen(b: &DMatrix<f64>, d: usize) -> Result<Eigenpairs> {
    let n = b.nrows();
    if b.ncols() != n {
        return Err(Error::InvalidInput(format!("matrix is {}x{}, not square", n, b.ncols())));
    }
    if d == 0 || d > n {
        return Err(Error::InvalidInput(format!("d = {d} must satisfy 1 <= d <= n = {n}")));
    }
    let eig = b.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    select_top(&eig.eigenvalues, &eig.eigenvectors, &order, d)
}

fn select_top(values: &DVector<f64>, vectors: &DMatrix<f64>, order: &[usize], d: usize) -> Result<Eigenpairs> {
    let n = vectors.nrows();
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = POSITIVITY_FLOOR * max_abs;
    let available = values.iter().filter(|&&v| v > floor && max_abs > 0.0).count();
    if available < d {
        return Err(Error::RankDeficient { requested: d, available });
    }
    let negatives: Vec<f64> = values.iter().copied().filter(|v| *v < -floor).collect();
    let diagnostics = SpectrumDiagnostics {
        negative_count: negatives.len(),
        most_negative: negatives.iter().copied().fold(0.0, f64::min),
        negative_mass: negatives.iter().map(|v| v.abs()).sum(),
        max_abs,
    };
    let mut vecs = DMatrix::zeros(n, d);
    let mut vals = DVector::zeros(d);
    for (k, &idx) in order.iter().take(d).enumerate() {
        vals[k] = values[idx];
        let mut col: Vec<f64> = vectors.column(idx).iter().copied().collect();
        canonical_sign(&mut col);
        vecs.set_column(k, &DVector::from_vec(col));
    }
    Ok(Eigenpairs { values: vals, vectors: vecs, diagnostics })
}

/// Cyclic Jacobi eigensolver; slow but self-contained. Sweeps until the
/// off-diagonal Frobenius mass drops below `1e-10 · ‖M‖_F`.
pub fn jacobi_eigen(m: &DMatrix<f64>, d: usize) -> Result<Eigenpairs> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::InvalidInput("matrix is not square".into()));
    }
    if d == 0 || d > n {
        return Err(Error::InvalidInput(format!("d = {d} must satisfy 1 <= d <= n = {n}")));
    }
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let total = a.norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-10 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = DVector::from_iterator(n, (0..n).map(|i| a[(i, i)]));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    select_top(&values, &v, &order, d)
}

/// Top eigenpairs of a centered matrix plus the coordinates built from them.
#[derive(Debug, Clone)]
pub struct Embedding {
    /// `λ₁ ≥ … ≥ λ_d > 0`.
    pub eigvals: DVector<f64>,
    /// `n × d`, orthonormal columns `qᵢ`.
    pub eigvecs: DMatrix<f64>,
    /// `d × n`; row `i` is `√λᵢ · qᵢᵀ`.
    pub coords: DMatrix<f64>,
    pub diagnostics: SpectrumDiagnostics,
}

impl Embedding {
    pub fn from_eigenpairs(pairs: Eigenpairs) -> Self {
        let d = pairs.values.len();
        let n = pairs.vectors.nrows();
        let mut coords = DMatrix::zeros(d, n);
        for i in 0..d {
            let s = pairs.values[i].sqrt();
            for j in 0..n {
                coords[(i, j)] = s * pairs.vectors[(j, i)];
            }
        }
        Self { eigvals: pairs.values, eigvecs: pairs.vectors, coords, diagnostics: pairs.diagnostics }
    }

    pub fn dim(&self) -> usize {
        self.eigvals.len()
    }

    pub fn len(&self) -> usize {
        self.eigvecs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.eigvecs.nrows() == 0
    }
}

/// Isomap: the top-`d` spectral embedding of the geodesic inner-product matrix.
pub fn isomap_embed(geo: &GeodesicSet, d: usize) -> Result<Embedding> {
    Ok(Embedding::from_eigenpairs(top_eigen(&geo.b, d)?))
}

/// Classical MDS of a squared-distance matrix; returns `m × d` coordinates.
pub fn classical_mds(sq_dists: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    let m = sq_dists.nrows();
    if sq_dists.ncols() != m {
        return Err(Error::InvalidInput("squared-distance matrix is not square".into()));
    }
    let scale = sq_dists.amax().max(1.0);
    for i in 0..m {
        if sq_dists[(i, i)] != 0.0 {
            return Err(Error::InvalidInput(format!("non-zero diagonal at {i}")));
        }
        for j in 0..i {
            let (a, b) = (sq_dists[(i, j)], sq_dists[(j, i)]);
            if a < 0.0 || (a - b).abs() > 1e-12 * scale {
                return Err(Error::InvalidInput(format!(
                    "entry ({i}, {j}) is negative or asymmetric"
                )));
            }
        }
    }
    let emb = Embedding::from_eigenpairs(top_eigen(&double_center(sq_dists), d)?);
    Ok(emb.coords.transpose())
}
