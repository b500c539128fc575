//! Per-row-block design matrices.
//!
//! Two ensembles are supported. Dense Gaussian operators store the matrix and
//! the eigendecomposition of `A A^T`, which is all the LMMSE stage needs. The
//! row-orthogonal operator is `sqrt(B)` times a random row subset of the
//! orthonormal DCT-II, applied after a random column permutation and random
//! column signs; it is never materialized.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustdct::{DctPlanner, TransformType2And3};

use crate::code_spec::{CodeSpec, Dimensions, Ensemble};
use crate::error::{check_len, Error, Result};
use crate::spectrum::SpectralModel;

/// Dense matrix plus the eigendecomposition `A A^T = Q diag(d) Q^T`.
#[derive(Clone, Debug)]
pub struct GaussianDense {
    pub matrix: DMatrix<f64>,
    pub gram_eigenvalues: DVector<f64>,
    pub gram_eigenvectors: DMatrix<f64>,
}

impl GaussianDense {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let gram = &matrix * matrix.transpose();
        let eig = SymmetricEigen::new(gram);
        Self {
            matrix,
            gram_eigenvalues: eig.eigenvalues,
            gram_eigenvectors: eig.eigenvectors,
        }
    }
}

/// `sqrt(B) · S · C · P · D`: row selection `S`, orthonormal DCT-II `C`,
/// column permutation `P` (`(P v)_i = v[perm[i]]`) and signs `D`.
#[derive(Clone)]
pub struct SubsampledDct {
    pub rows: Vec<usize>,
    pub perm: Vec<usize>,
    pub signs: Vec<f64>,
    pub scale: f64,
    plan: Arc<dyn TransformType2And3<f64>>,
}

impl fmt::Debug for SubsampledDct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SubsampledDct")
            .field("rows", &self.rows.len())
            .field("n", &self.perm.len())
            .field("scale", &self.scale)
            .finish()
    }
}

impl SubsampledDct {
    pub fn new(rows: Vec<usize>, perm: Vec<usize>, signs: Vec<f64>, scale: f64) -> Self {
        let plan = DctPlanner::new().plan_dct2(perm.len());
        Self {
            rows,
            perm,
            signs,
            scale,
            plan,
        }
    }

    fn n(&self) -> usize {
        self.perm.len()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut buf: Vec<f64> = self.perm.iter().map(|&j| self.signs[j] * x[j]).collect();
        let mut scratch = vec![0.0; self.plan.get_scratch_len()];
        self.plan.process_dct2_with_scratch(&mut buf, &mut scratch);
        // rustdct's DCT-II is unnormalized; rescale to the orthonormal transform.
        let norm = (2.0 / n as f64).sqrt() * self.scale;
        self.rows
            .iter()
            .map(|&k| {
                let c = if k == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
                buf[k] * norm * c
            })
            .collect()
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut buf = vec![0.0; n];
        for (&k, &v) in self.rows.iter().zip(y) {
            // DCT-III halves the k = 0 term; orthonormality wants 1/sqrt(2).
            buf[k] = if k == 0 { v * std::f64::consts::SQRT_2 } else { v };
        }
        let mut scratch = vec![0.0; self.plan.get_scratch_len()];
        self.plan.process_dct3_with_scratch(&mut buf, &mut scratch);
        let norm = (2.0 / n as f64).sqrt() * self.scale;
        let mut out = vec![0.0; n];
        for (i, &j) in self.perm.iter().enumerate() {
            out[j] = self.signs[j] * buf[i] * norm;
        }
        out
    }
}

#[derive(Clone, Debug)]
pub enum OperatorKind {
    GaussianDense(GaussianDense),
    RowOrthogonalDct(SubsampledDct),
}

/// One design matrix `A_r` of size `m × n`.
#[derive(Clone, Debug)]
pub struct DesignOperator {
    /// Row-block index (1-based); 0 for free-standing test operators.
    pub r: usize,
    pub m: usize,
    pub n: usize,
    pub kind: OperatorKind,
}

impl DesignOperator {
    /// Wraps an explicit dense matrix; computes its Gram eigendecomposition.
    pub fn from_dense(r: usize, matrix: DMatrix<f64>) -> Self {
        let (m, n) = matrix.shape();
        Self {
            r,
            m,
            n,
            kind: OperatorKind::GaussianDense(GaussianDense::new(matrix)),
        }
    }

    pub fn subsampled_dct(r: usize, dct: SubsampledDct) -> Self {
        Self {
            r,
            m: dct.rows.len(),
            n: dct.perm.len(),
            kind: OperatorKind::RowOrthogonalDct(dct),
        }
    }

    pub fn apply_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, x.len())?;
        Ok(match &self.kind {
            OperatorKind::GaussianDense(g) => {
                let v = DVector::from_column_slice(x);
                (&g.matrix * v).data.into()
            }
            OperatorKind::RowOrthogonalDct(d) => d.forward(x),
        })
    }

    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.m, y.len())?;
        Ok(match &self.kind {
            OperatorKind::GaussianDense(g) => {
                let v = DVector::from_column_slice(y);
                g.matrix.tr_mul(&v).data.into()
            }
            OperatorKind::RowOrthogonalDct(d) => d.adjoint(y),
        })
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    pub fn spectral_model(&self) -> SpectralModel {
        let alpha = self.aspect_ratio();
        match self.kind {
            OperatorKind::GaussianDense(_) => {
                SpectralModel::marchenko_pastur(alpha).unwrap_or_else(|_| SpectralModel::delta_at_one(alpha))
            }
            OperatorKind::RowOrthogonalDct(_) => SpectralModel::delta_at_one(alpha),
        }
    }

    /// Dense copy built column by column from the forward map.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.m, self.n);
        let mut e = vec![0.0; self.n];
        for j in 0..self.n {
            e[j] = 1.0;
            let col = self.apply_forward(&e).expect("length checked");
            out.set_column(j, &DVector::from_vec(col));
            e[j] = 0.0;
        }
        out
    }
}

/// Draws `A_r` for row block `r`. The caller supplies an RNG stream that is
/// already specific to `(seed, r)`.
pub fn sample_design<R: Rng + ?Sized>(
    spec: &CodeSpec,
    dims: &Dimensions,
    r: usize,
    rng: &mut R,
) -> Result<DesignOperator> {
    if r < 1 || r > dims.rows {
        return Err(Error::InvalidArgument(format!("row block {r} out of range")));
    }
    let m = dims.m_r;
    let n = dims.n_r[r - 1];
    if m > n {
        return Err(Error::InfeasibleRate(format!(
            "row block {r} has more rows ({m}) than columns ({n})"
        )));
    }
    match spec.ensemble {
        Ensemble::Gaussian => Ok(DesignOperator::from_dense(
            r,
            gaussian_matrix(m, n, spec.b as f64 / n as f64, rng),
        )),
        Ensemble::RowOrthogonalDct => Ok(DesignOperator::subsampled_dct(
            r,
            random_subsampled_dct(m, n, spec.b, spec.dct_randomize, rng),
        )),
    }
}

/// `m × n` matrix with i.i.d. `N(0, variance)` entries, filled row by row.
pub fn gaussian_matrix<R: Rng + ?Sized>(m: usize, n: usize, variance: f64, rng: &mut R) -> DMatrix<f64> {
    let normal = Normal::new(0.0, variance.sqrt()).expect("variance is positive");
    let row_major: Vec<f64> = (0..m * n).map(|_| normal.sample(rng)).collect();
    DMatrix::from_row_slice(m, n, &row_major)
}

pub fn random_subsampled_dct<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    b: usize,
    randomize: bool,
    rng: &mut R,
) -> SubsampledDct {
    let mut rows = index::sample(rng, n, m).into_vec();
    rows.sort_unstable();
    let (perm, signs) = if randomize {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let signs = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        (perm, signs)
    } else {
        ((0..n).collect(), vec![1.0; n])
    };
    SubsampledDct::new(rows, perm, signs, (b as f64).sqrt())
}
