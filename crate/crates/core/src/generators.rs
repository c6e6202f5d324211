//! Symmetric one-dimensional generators on interval meshes.
//!
//! A generator is stored as a lumped mass vector `m` (the discrete measure
//! `dm = dx / rho`) and a symmetric tridiagonal stiffness matrix `K`, and acts
//! as `A = -M^{-1} K`. Then `<Au, v>_m = -v^T K u`, so self-adjointness in the
//! weighted inner product is the symmetry of `K` and the energy of `u` is
//! `-<Au, u>_m = u^T K u`.
//!
//! The divergence-form operator `(sigma^2 / 2a) (a u')'` with piecewise
//! constant `a` and `sigma^2 = rho a` is discretised by vertex-centred finite
//! volumes: cell `c` of width `h_c` contributes `a_c / (2 h_c)` to `K` and
//! `a_c h_c / (2 sigma_c^2)` to the mass of each of its endpoints. Flux
//! continuity across a coefficient jump at a node holds by construction.
//! Dirichlet endpoints are eliminated from the unknowns.

use std::io::Write;
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_nonnegative, check_positive, check_unit_open, Error, Result};

/// Minimum number of cells across the thin layer.
pub const MIN_LAYER_CELLS: usize = 8;

/// Boundary or interface condition attached to a generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundarySpec {
    Dirichlet,
    Neumann,
    /// `u' + c u = 0` with the outward normal.
    Robin {
        c: f64,
    },
    /// Skew interface with weight `alpha` on the layer side, layer diffusivity
    /// `eta` and layer width `epsilon`.
    SkewInterface {
        alpha: f64,
        eta: f64,
        epsilon: f64,
    },
}

/// Boundary conditions of a generator, left to right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLayout {
    pub left: BoundarySpec,
    pub interface: Option<BoundarySpec>,
    pub right: BoundarySpec,
}

/// Eigenpairs of `-A`, ascending, with `m`-orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Column `k` holds `phi_k` at the unknowns.
    pub vectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mode(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k).iter().copied().collect()
    }
}

/// A symmetric generator on a one-dimensional mesh.
#[derive(Debug, Clone)]
pub struct DiscreteGenerator {
    /// All mesh points including eliminated Dirichlet endpoints.
    mesh: Vec<f64>,
    /// Indices into `mesh` of the unknowns.
    first: usize,
    /// Positions of the unknowns.
    grid: Vec<f64>,
    weights: Vec<f64>,
    diag: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    boundary: BoundaryLayout,
    spectrum: OnceLock<std::result::Result<Spectrum, Error>>,
}

/// One homogeneous piece of a mesh: `cells` equal cells on `[a, b]` with
/// flux weight `a_coef` and variance `sigma2`.
#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    cells: usize,
    a_coef: f64,
    sigma2: f64,
}

fn assemble(
    pieces: &[Piece],
    left: BoundarySpec,
    interface: Option<BoundarySpec>,
    right: BoundarySpec,
) -> Result<DiscreteGenerator> {
    let mut mesh = vec![pieces[0].a];
    let mut cell_a = Vec::new();
    let mut cell_m = Vec::new();
    for p in pieces {
        let h = (p.b - p.a) / p.cells as f64;
        for j in 1..=p.cells {
            mesh.push(if j == p.cells {
                p.b
            } else {
                p.a + j as f64 * h
            });
            cell_a.push(p.a_coef / (2.0 * h));
            cell_m.push(0.5 * p.a_coef * h / p.sigma2);
        }
    }
    let n_nodes = mesh.len();
    let mut diag = vec![0.0; n_nodes];
    let mut off = vec![0.0; n_nodes - 1];
    let mut mass = vec![0.0; n_nodes];
    for c in 0..n_nodes - 1 {
        diag[c] += cell_a[c];
        diag[c + 1] += cell_a[c];
        off[c] = -cell_a[c];
        mass[c] += cell_m[c];
        mass[c + 1] += cell_m[c];
    }
    for (end, spec) in [(0usize, left), (n_nodes - 1, right)] {
        match spec {
            BoundarySpec::Robin { c } => diag[end] += 0.5 * c,
            BoundarySpec::Neumann | BoundarySpec::Dirichlet => {}
            BoundarySpec::SkewInterface { .. } => {
                return Err(Error::InvalidParameter {
                    name: "boundary",
                    reason: "a skew interface cannot be an endpoint condition".into(),
                })
            }
        }
    }
    let first = usize::from(left == BoundarySpec::Dirichlet);
    let last = if right == BoundarySpec::Dirichlet {
        n_nodes - 1
    } else {
        n_nodes
    };
    let off_inner = off[first..last - 1].to_vec();
    Ok(DiscreteGenerator {
        grid: mesh[first..last].to_vec(),
        weights: mass[first..last].to_vec(),
        diag: diag[first..last].to_vec(),
        lower: off_inner.clone(),
        upper: off_inner,
        mesh,
        first,
        boundary: BoundaryLayout {
            left,
            interface,
            right,
        },
        spectrum: OnceLock::new(),
    })
}

/// Skew-interface generator on `(l, r)` with the interface at `ell`:
/// `1/2 u''` on `(l, ell)`, `eta/2 u''` on the layer `(ell, r)`, flux
/// condition `(1 - alpha) u'(ell-) = alpha u'(ell+)`, Dirichlet at both ends.
/// `n_cells` equal-width cells are split between the two pieces in
/// proportion to their lengths.
pub fn build_skew_generator(
    l: f64,
    ell: f64,
    r: f64,
    alpha: f64,
    eta: f64,
    n_cells: usize,
) -> Result<DiscreteGenerator> {
    check_order(l, ell, r)?;
    let layer = ((n_cells as f64) * (r - ell) / (r - l)).round() as usize;
    if layer < MIN_LAYER_CELLS || layer >= n_cells {
        return Err(Error::UnderResolvedLayer {
            cells: layer,
            required: MIN_LAYER_CELLS,
        });
    }
    build_skew_generator_graded(l, ell, r, alpha, eta, n_cells - layer, layer)
}

/// As [`build_skew_generator`] with separate cell counts for the inner piece
/// and the layer, so a thin layer can be resolved without refining the bulk.
pub fn build_skew_generator_graded(
    l: f64,
    ell: f64,
    r: f64,
    alpha: f64,
    eta: f64,
    inner_cells: usize,
    layer_cells: usize,
) -> Result<DiscreteGenerator> {
    check_order(l, ell, r)?;
    check_unit_open("alpha", alpha)?;
    check_positive("eta", eta)?;
    if layer_cells < MIN_LAYER_CELLS {
        return Err(Error::UnderResolvedLayer {
            cells: layer_cells,
            required: MIN_LAYER_CELLS,
        });
    }
    if inner_cells < 2 {
        return Err(Error::InvalidParameter {
            name: "inner_cells",
            reason: format!("need at least 2 cells, got {inner_cells}"),
        });
    }
    assemble(
        &[
            Piece {
                a: l,
                b: ell,
                cells: inner_cells,
                a_coef: 1.0 - alpha,
                sigma2: 1.0,
            },
            Piece {
                a: ell,
                b: r,
                cells: layer_cells,
                a_coef: alpha,
                sigma2: eta,
            },
        ],
        BoundarySpec::Dirichlet,
        Some(BoundarySpec::SkewInterface {
            alpha,
            eta,
            epsilon: r - ell,
        }),
        BoundarySpec::Dirichlet,
    )
}

/// Boundary condition at `ell` of a limit generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Regime {
    Dirichlet,
    Neumann,
    Robin { c: f64 },
}

impl Regime {
    pub fn boundary(self) -> BoundarySpec {
        match self {
            Regime::Dirichlet => BoundarySpec::Dirichlet,
            Regime::Neumann => BoundarySpec::Neumann,
            Regime::Robin { c } => BoundarySpec::Robin { c },
        }
    }
}

/// `1/2 u''` on `(l, ell)` with Dirichlet at `l` and the regime's condition
/// at `ell`, on `n_cells` equal cells.
pub fn build_limit_generator(
    l: f64,
    ell: f64,
    regime: Regime,
    n_cells: usize,
) -> Result<DiscreteGenerator> {
    if !(l < ell) {
        return Err(Error::InvalidParameter {
            name: "ell",
            reason: format!("need l < ell, got l = {l}, ell = {ell}"),
        });
    }
    if let Regime::Robin { c } = regime {
        check_nonnegative("c", c)?;
    }
    if n_cells < 2 {
        return Err(Error::InvalidParameter {
            name: "n_cells",
            reason: format!("need at least 2 cells, got {n_cells}"),
        });
    }
    assemble(
        &[Piece {
            a: l,
            b: ell,
            cells: n_cells,
            a_coef: 1.0,
            sigma2: 1.0,
        }],
        BoundarySpec::Dirichlet,
        None,
        regime.boundary(),
    )
}

fn check_order(l: f64, ell: f64, r: f64) -> Result<()> {
    if !(l < ell && ell < r) {
        return Err(Error::InvalidParameter {
            name: "ell",
            reason: format!("need l < ell < r, got {l}, {ell}, {r}"),
        });
    }
    Ok(())
}

/// Solves the tridiagonal system with sub-diagonal `a`, diagonal `b`,
/// super-diagonal `c` and right-hand side `d` (Thomas algorithm).
pub(crate) fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut denom = b[0];
    if denom.abs() <= 1e-300_f64.max(1e-15 * scale) {
        return Err(Error::Singular { row: 0 });
    }
    cp[0] = if n > 1 { c[0] / denom } else { 0.0 };
    dp[0] = d[0] / denom;
    for i in 1..n {
        denom = b[i] - a[i - 1] * cp[i - 1];
        if denom.abs() <= 1e-300_f64.max(1e-15 * scale) || !denom.is_finite() {
            return Err(Error::Singular { row: i });
        }
        cp[i] = if i + 1 < n { c[i] / denom } else { 0.0 };
        dp[i] = (d[i] - a[i - 1] * dp[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    Ok(x)
}

impl DiscreteGenerator {
    /// Builds a generator from raw parts: node positions, lumped masses and
    /// the tridiagonal stiffness `K` (`A = -M^{-1} K`).
    pub fn from_parts(
        grid: Vec<f64>,
        weights: Vec<f64>,
        diag: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        boundary: BoundaryLayout,
    ) -> Result<Self> {
        let n = grid.len();
        if n == 0
            || weights.len() != n
            || diag.len() != n
            || lower.len() + 1 != n
            || upper.len() + 1 != n
        {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "inconsistent generator dimensions".into(),
            });
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "grid must be strictly increasing".into(),
            });
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidParameter {
                name: "measure_weights",
                reason: "weights must be positive".into(),
            });
        }
        Ok(Self {
            mesh: grid.clone(),
            first: 0,
            grid,
            weights,
            diag,
            lower,
            upper,
            boundary,
            spectrum: OnceLock::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Positions of the unknowns.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// All mesh points, including eliminated Dirichlet endpoints.
    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }

    /// Lumped masses of the unknowns.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boundary(&self) -> &BoundaryLayout {
        &self.boundary
    }

    /// Index of the unknown at mesh position `x`, if any.
    pub fn node_index(&self, x: f64) -> Option<usize> {
        let tol = 1e-9 * (1.0 + x.abs());
        let k = self.grid.partition_point(|&g| g < x - tol);
        (k < self.grid.len() && (self.grid[k] - x).abs() <= tol).then_some(k)
    }

    /// Samples `f` at the unknowns.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.grid.iter().map(|&x| f(x)).collect()
    }

    /// Largest asymmetry `|K_{i,i+1} - K_{i+1,i}|` relative to the diagonal scale.
    pub fn symmetry_residual(&self) -> f64 {
        let scale = self
            .diag
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-300);
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale
    }

    /// `K u`.
    pub fn stiffness_apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * u[i];
                if i > 0 {
                    v += self.lower[i - 1] * u[i - 1];
                }
                if i + 1 < n {
                    v += self.upper[i] * u[i + 1];
                }
                v
            })
            .collect()
    }

    /// `A u = -M^{-1} K u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.stiffness_apply(u)
            .iter()
            .zip(&self.weights)
            .map(|(k, m)| -k / m)
            .collect()
    }

    /// Weighted inner product `<u, v>_m`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(&self.weights)
            .map(|((a, b), m)| a * b * m)
            .sum()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// Energy `-<A u, u>_m = u^T K u`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        self.stiffness_apply(u)
            .iter()
            .zip(u)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Solves `(lambda - A) u = f`.
    pub fn resolvent_apply(&self, lambda: f64, f: &[f64]) -> Result<Vec<f64>> {
        check_positive("lambda", lambda)?;
        self.shifted_solve(lambda, f)
    }

    /// Solves `(lambda - A) u = f` for `lambda >= 0`; `lambda = 0` gives the
    /// Green operator `(-A)^{-1}`, which is singular for conservative generators.
    pub fn shifted_solve(&self, lambda: f64, f: &[f64]) -> Result<Vec<f64>> {
        check_nonnegative("lambda", lambda)?;
        if f.len() != self.len() {
            return Err(Error::GridMismatch(format!(
                "grid function has {} values, generator has {} unknowns",
                f.len(),
                self.len()
            )));
        }
        // (lambda M + K) u = M f
        let b: Vec<f64> = self
            .diag
            .iter()
            .zip(&self.weights)
            .map(|(k, m)| k + lambda * m)
            .collect();
        let rhs: Vec<f64> = f.iter().zip(&self.weights).map(|(v, m)| v * m).collect();
        solve_tridiagonal(&self.lower, &b, &self.upper, &rhs)
    }

    /// Eigenpairs of `-A` (computed once and cached).
    pub fn spectral_decompose(&self) -> Result<&Spectrum> {
        self.spectrum
            .get_or_init(|| self.compute_spectrum())
            .as_ref()
            .map_err(Clone::clone)
    }

    fn compute_spectrum(&self) -> std::result::Result<Spectrum, Error> {
        let residual = self.symmetry_residual();
        if residual > 1e-12 {
            return Err(Error::NotSelfAdjoint { residual });
        }
        let n = self.len();
        let s: Vec<f64> = self.weights.iter().map(|m| 1.0 / m.sqrt()).collect();
        let mut b = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            b[(i, i)] = self.diag[i] * s[i] * s[i];
            if i + 1 < n {
                let v = 0.5 * (self.lower[i] + self.upper[i]) * s[i] * s[i + 1];
                b[(i, i + 1)] = v;
                b[(i + 1, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(b);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let mut vectors = DMatrix::<f64>::zeros(n, n);
        let mut values = Vec::with_capacity(n);
        for (k, &j) in order.iter().enumerate() {
            values.push(eig.eigenvalues[j]);
            let col = eig.eigenvectors.column(j);
            // Fix the sign so that the first significant entry is positive.
            let pivot = col
                .iter()
                .copied()
                .find(|v| v.abs() > 1e-8)
                .unwrap_or(1.0)
                .signum();
            for i in 0..n {
                vectors[(i, k)] = pivot * col[i] * s[i];
            }
        }
        Ok(Spectrum { values, vectors })
    }

    /// Coefficients `<f, phi_k>_m` for all modes.
    pub fn coefficients(&self, f: &[f64]) -> Result<Vec<f64>> {
        let spec = self.spectral_decompose()?;
        Ok((0..spec.len())
            .map(|k| {
                spec.vectors
                    .column(k)
                    .iter()
                    .zip(f)
                    .zip(&self.weights)
                    .map(|((p, v), m)| p * v * m)
                    .sum()
            })
            .collect())
    }

    /// `sum_k w_k c_k phi_k` over the first `weights.len()` modes.
    pub fn synthesize(&self, coeffs: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
        let spec = self.spectral_decompose()?;
        let mut out = vec![0.0; self.len()];
        for (k, (c, w)) in coeffs.iter().zip(weights).enumerate() {
            let a = c * w;
            if a == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(spec.vectors.column(k).iter()) {
                *o += a * p;
            }
        }
        Ok(out)
    }

    /// `T_t f = sum_k e^{-mu_k t} <f, phi_k>_m phi_k`.
    pub fn semigroup_apply(&self, t: f64, f: &[f64]) -> Result<Vec<f64>> {
        check_nonnegative("t", t)?;
        let c = self.coefficients(f)?;
        let spec = self.spectral_decompose()?;
        let w: Vec<f64> = spec.values.iter().map(|mu| (-mu * t).exp()).collect();
        self.synthesize(&c, &w)
    }

    /// Writes `-A` as a matrix-market coordinate file (1-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.len();
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{n} {n} {}", 3 * n - 2)?;
        for i in 0..n {
            if i > 0 {
                writeln!(
                    out,
                    "{} {} {:e}",
                    i + 1,
                    i,
                    self.lower[i - 1] / self.weights[i]
                )?;
            }
            writeln!(
                out,
                "{} {} {:e}",
                i + 1,
                i + 1,
                self.diag[i] / self.weights[i]
            )?;
            if i + 1 < n {
                writeln!(
                    out,
                    "{} {} {:e}",
                    i + 1,
                    i + 2,
                    self.upper[i] / self.weights[i]
                )?;
            }
        }
        Ok(())
    }

    /// Grid, weights and boundary layout as JSON.
    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({
            "grid": self.grid,
            "measure_weights": self.weights,
            "mesh": self.mesh,
            "first_unknown": self.first,
            "boundary_spec": self.boundary,
        })
    }
}
