//! Normalized graph Laplacian, its rescaling onto the Chebyshev domain,
//! Chebyshev polynomial propagation and a dense eigendecomposition filter
//! used to verify the recursion.
//!
//! Isolated nodes get `D^{-1/2} = 0`, so their Laplacian row is the identity
//! row. Small or dense graphs are stored densely; large sparse graphs use CSR.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::popgraph::PopulationGraph;

/// Graphs above this node count become sparse when their fill is low.
pub const SPARSE_MIN_NODES: usize = 200;
/// Maximum stored fraction of entries for the sparse representation.
pub const SPARSE_MAX_FILL: f64 = 0.1;

const LANCZOS_MAX_STEPS: usize = 1000;
const LANCZOS_REL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LaplacianKind {
    Normalized,
    Scaled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Storage {
    #[default]
    Auto,
    Dense,
    Sparse,
}

#[derive(Clone, Debug, PartialEq)]
struct Csr {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl Csr {
    fn apply(&self, y: ArrayView2<'_, f64>) -> Array2<f64> {
        let (n, c) = y.dim();
        let mut out = Array2::zeros((n, c));
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            for p in self.indptr[i]..self.indptr[i + 1] {
                let a = self.data[p];
                row.scaled_add(a, &y.row(self.indices[p]));
            }
        }
        out
    }

    fn to_dense(&self, n: usize) -> Array2<f64> {
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for p in self.indptr[i]..self.indptr[i + 1] {
                m[[i, self.indices[p]]] = self.data[p];
            }
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Repr {
    Dense(Array2<f64>),
    Sparse(Csr),
}

/// Symmetric N x N operator, either the normalized Laplacian or its
/// Chebyshev-domain rescaling.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianMatrix {
    n: usize,
    kind: LaplacianKind,
    repr: Repr,
}

impl LaplacianMatrix {
    /// Wraps an explicit symmetric matrix.
    pub fn from_dense(m: Array2<f64>, kind: LaplacianKind) -> Result<Self> {
        let (r, c) = m.dim();
        if r != c {
            return Err(Error::Shape(format!("operator is {r}x{c}")));
        }
        for i in 0..r {
            for j in (i + 1)..r {
                if (m[[i, j]] - m[[j, i]]).abs() > 1e-10 {
                    return Err(Error::Integrity(format!("operator not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self {
            n: r,
            kind,
            repr: Repr::Dense(m),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.repr, Repr::Sparse(_))
    }

    /// `self * y` for an N x c block.
    pub fn apply(&self, y: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(y.nrows(), self.n, "operator/signal size mismatch");
        match &self.repr {
            Repr::Dense(m) => m.dot(&y),
            Repr::Sparse(s) => s.apply(y),
        }
    }

    pub fn apply_vec(&self, x: &Array1<f64>) -> Array1<f64> {
        let col = x.view().insert_axis(ndarray::Axis(1));
        self.apply(col).column(0).to_owned()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::Sparse(s) => s.to_dense(self.n),
        }
    }

    /// True when every off-diagonal entry is zero.
    pub fn is_diagonal(&self) -> bool {
        match &self.repr {
            Repr::Dense(m) => m.indexed_iter().all(|((i, j), v)| i == j || *v == 0.0),
            Repr::Sparse(s) => (0..self.n)
                .all(|i| (s.indptr[i]..s.indptr[i + 1]).all(|p| s.indices[p] == i || s.data[p] == 0.0)),
        }
    }

    /// `a * self + b * I`.
    fn affine(&self, a: f64, b: f64, kind: LaplacianKind) -> Self {
        let repr = match &self.repr {
            Repr::Dense(m) => {
                let mut out = m * a;
                out.diag_mut().mapv_inplace(|d| d + b);
                Repr::Dense(out)
            }
            Repr::Sparse(s) => {
                let mut out = s.clone();
                for i in 0..self.n {
                    for p in out.indptr[i]..out.indptr[i + 1] {
                        out.data[p] *= a;
                        if out.indices[p] == i {
                            out.data[p] += b;
                        }
                    }
                }
                Repr::Sparse(out)
            }
        };
        Self {
            n: self.n,
            kind,
            repr,
        }
    }
}

pub fn normalized_laplacian(g: &PopulationGraph) -> LaplacianMatrix {
    normalized_laplacian_with(g, Storage::Auto)
}

pub fn normalized_laplacian_with(g: &PopulationGraph, storage: Storage) -> LaplacianMatrix {
    let n = g.n_nodes();
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let fill = (n + 2 * g.n_edges()) as f64 / (n * n).max(1) as f64;
    let sparse = match storage {
        Storage::Dense => false,
        Storage::Sparse => true,
        Storage::Auto => n > SPARSE_MIN_NODES && fill < SPARSE_MAX_FILL,
    };
    let repr = if sparse {
        let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, 1.0)]).collect();
        for e in g.edges() {
            let v = -e.weight * inv_sqrt[e.u] * inv_sqrt[e.v];
            rows[e.u].push((e.v, v));
            rows[e.v].push((e.u, v));
        }
        let mut csr = Csr {
            indptr: Vec::with_capacity(n + 1),
            indices: Vec::new(),
            data: Vec::new(),
        };
        csr.indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|(j, _)| *j);
            for (j, v) in row {
                csr.indices.push(j);
                csr.data.push(v);
            }
            csr.indptr.push(csr.indices.len());
        }
        Repr::Sparse(csr)
    } else {
        let mut m = Array2::eye(n);
        for e in g.edges() {
            let v = -e.weight * inv_sqrt[e.u] * inv_sqrt[e.v];
            m[[e.u, e.v]] = v;
            m[[e.v, e.u]] = v;
        }
        Repr::Dense(m)
    };
    LaplacianMatrix {
        n,
        kind: LaplacianKind::Normalized,
        repr,
    }
}

/// `Σ_{j ∈ N(i)} W_ij (x(i) - x(j))`, the unnormalized difference form.
pub fn laplacian_difference(g: &PopulationGraph, x: &[f64], i: usize) -> f64 {
    g.edges()
        .iter()
        .filter_map(|e| {
            if e.u == i {
                Some(e.weight * (x[i] - x[e.v]))
            } else if e.v == i {
                Some(e.weight * (x[i] - x[e.u]))
            } else {
                None
            }
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaMax {
    pub value: f64,
    /// Set when the analytic bound 2 replaced the estimate.
    pub fallback: bool,
    pub iterations: usize,
}

/// Largest eigenvalue of a normalized Laplacian, clamped to (0, 2].
///
/// Lanczos with full reorthogonalization from a seeded start vector; stops
/// once the Ritz residual `|beta_m s_m|` is within 1e-6 of the Ritz value.
/// Plain power iteration stalls on dense population graphs, whose top
/// eigenvalues sit in a narrow bulk. An edgeless graph (identity operator)
/// takes the bound 2, as does a run that fails to converge.
pub fn estimate_lambda_max(l: &LaplacianMatrix) -> LambdaMax {
    let fallback = |iterations| LambdaMax {
        value: 2.0,
        fallback: true,
        iterations,
    };
    if l.is_diagonal() {
        return fallback(0);
    }
    let n = l.n();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut q = Array1::from_iter((0..n).map(|_| rng.random::<f64>() + 0.5));
    q /= q.dot(&q).sqrt();
    let mut basis: Vec<Array1<f64>> = Vec::new();
    let (mut alpha, mut beta) = (Vec::new(), Vec::<f64>::new());
    let max_steps = n.min(LANCZOS_MAX_STEPS);
    for step in 1..=max_steps {
        let mut w = l.apply_vec(&q);
        let a = q.dot(&w);
        w.scaled_add(-a, &q);
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            w.scaled_add(-b, prev);
        }
        basis.push(q);
        for _ in 0..2 {
            for v in &basis {
                let c = v.dot(&w);
                w.scaled_add(-c, v);
            }
        }
        alpha.push(a);
        let b = w.dot(&w).sqrt();
        if !b.is_finite() {
            return fallback(step);
        }
        let exhausted = b <= 1e-12 || step == max_steps;
        if exhausted || step % 5 == 0 {
            let (theta, last) = top_ritz_pair(&alpha, &beta);
            if (b * last).abs() <= LANCZOS_REL_TOL * theta.abs() {
                return LambdaMax {
                    value: theta.clamp(f64::MIN_POSITIVE, 2.0),
                    fallback: false,
                    iterations: step,
                };
            }
            if exhausted {
                break;
            }
        }
        beta.push(b);
        q = w / b;
    }
    log::warn!("lambda_max estimate did not converge; using 2");
    fallback(max_steps)
}

/// Largest eigenvalue of the Lanczos tridiagonal matrix and the last
/// component of its eigenvector.
fn top_ritz_pair(alpha: &[f64], beta: &[f64]) -> (f64, f64) {
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let top = (0..m)
        .max_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .expect("non-empty");
    (eig.eigenvalues[top], eig.eigenvectors[(m - 1, top)])
}

/// `(2 / lambda_max) L - I`.
pub fn scale_laplacian(l: &LaplacianMatrix, lambda_max: f64) -> Result<LaplacianMatrix> {
    if !(lambda_max > 0.0) {
        return Err(Error::Parameter(format!(
            "lambda_max must be > 0, got {lambda_max}"
        )));
    }
    if l.kind != LaplacianKind::Normalized {
        return Err(Error::Parameter(
            "only a normalized Laplacian can be rescaled".into(),
        ));
    }
    Ok(l.affine(2.0 / lambda_max, -1.0, LaplacianKind::Scaled))
}

/// Normalized Laplacian, λ_max estimate and rescaled operator in one step.
pub fn scaled_laplacian(g: &PopulationGraph) -> Result<(LaplacianMatrix, LambdaMax)> {
    let l = normalized_laplacian(g);
    let lm = estimate_lambda_max(&l);
    Ok((scale_laplacian(&l, lm.value)?, lm))
}

/// `[T_0(L̃)X, ..., T_K(L̃)X]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevBasis {
    terms: Vec<Array2<f64>>,
}

impl ChebyshevBasis {
    pub fn from_terms(terms: Vec<Array2<f64>>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::Shape("basis needs at least T_0".into()))?;
        let dim = first.dim();
        if terms.iter().any(|t| t.dim() != dim) {
            return Err(Error::Shape("basis terms differ in shape".into()));
        }
        Ok(Self { terms })
    }

    pub fn order(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn terms(&self) -> &[Array2<f64>] {
        &self.terms
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.terms[0]
    }

    pub fn n_nodes(&self) -> usize {
        self.terms[0].nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.terms[0].ncols()
    }
}

/// Order-0 basis `[X]`, needing no operator.
pub fn chebyshev_basis_identity(x: ArrayView2<'_, f64>) -> ChebyshevBasis {
    ChebyshevBasis {
        terms: vec![x.to_owned()],
    }
}

/// Three-term recursion `T_k = 2 L̃ T_{k-1} - T_{k-2}` applied to `x`.
pub fn chebyshev_basis(ls: &LaplacianMatrix, x: ArrayView2<'_, f64>, order: usize) -> ChebyshevBasis {
    let mut terms = Vec::with_capacity(order + 1);
    terms.push(x.to_owned());
    if order >= 1 {
        terms.push(ls.apply(x));
    }
    for k in 2..=order {
        let mut next = ls.apply(terms[k - 1].view());
        Zip::from(&mut next)
            .and(&terms[k - 2])
            .for_each(|a, &b| *a = 2.0 * *a - b);
        terms.push(next);
    }
    ChebyshevBasis { terms }
}

/// `Σ_k T_k(L̃) B_k` by Clenshaw's backward recursion; `coeffs[k]` is `B_k`.
pub fn chebyshev_combine(ls: &LaplacianMatrix, coeffs: &[Array2<f64>]) -> Array2<f64> {
    assert!(!coeffs.is_empty(), "at least one coefficient block required");
    let k_max = coeffs.len() - 1;
    if k_max == 0 {
        return coeffs[0].clone();
    }
    let dim = coeffs[0].dim();
    let mut b1 = Array2::<f64>::zeros(dim);
    let mut b2 = Array2::<f64>::zeros(dim);
    for k in (1..=k_max).rev() {
        let mut b = ls.apply(b1.view());
        Zip::from(&mut b)
            .and(&coeffs[k])
            .and(&b2)
            .for_each(|a, &c, &p| *a = c + 2.0 * *a - p);
        b2 = b1;
        b1 = b;
    }
    let mut out = ls.apply(b1.view());
    Zip::from(&mut out)
        .and(&coeffs[0])
        .and(&b2)
        .for_each(|a, &c, &p| *a = c + *a - p);
    out
}

/// Scalar Chebyshev polynomials `T_0(t) ..= T_K(t)`.
pub fn chebyshev_scalars(t: f64, order: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(order + 1);
    out.push(1.0);
    if order >= 1 {
        out.push(t);
    }
    for k in 2..=order {
        out.push(2.0 * t * out[k - 1] - out[k - 2]);
    }
    out
}

/// Sorted eigenvalues and matching eigenvectors (columns) of a dense symmetric matrix.
pub fn dense_eigen(m: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = m.nrows();
    let dm = DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn dense_eigenvalues(l: &LaplacianMatrix) -> Vec<f64> {
    dense_eigen(&l.to_dense()).0
}

/// Filters `x` in the graph Fourier basis: `U g(Λ) Uᵀ x` with
/// `g(λ) = Σ_k θ_k T_k(2λ/λ_max - 1)`. Dense eigendecomposition, so only
/// meant for small verification graphs.
pub fn spectral_filter_oracle(
    l: &LaplacianMatrix,
    lambda_max: f64,
    x: &Array1<f64>,
    theta: &[f64],
) -> Result<Array1<f64>> {
    if l.kind != LaplacianKind::Normalized {
        return Err(Error::Parameter("oracle expects the normalized Laplacian".into()));
    }
    if !(lambda_max > 0.0) {
        return Err(Error::Parameter(format!(
            "lambda_max must be > 0, got {lambda_max}"
        )));
    }
    if x.len() != l.n() {
        return Err(Error::Shape(format!(
            "signal of length {} for {} nodes",
            x.len(),
            l.n()
        )));
    }
    if theta.is_empty() {
        return Err(Error::Parameter("filter needs at least one coefficient".into()));
    }
    let (values, u) = dense_eigen(&l.to_dense());
    let k = theta.len() - 1;
    let response: Array1<f64> = values
        .iter()
        .map(|&lam| {
            let t = 2.0 * lam / lambda_max - 1.0;
            chebyshev_scalars(t, k)
                .iter()
                .zip(theta)
                .map(|(tk, th)| tk * th)
                .sum()
        })
        .collect();
    let spectrum = u.t().dot(x) * &response;
    Ok(u.dot(&spectrum))
}
