//! Group knockoff construction: the equicorrelated block-diagonal S matrix,
//! fixed-design knockoffs satisfying the Gram swap identity, and second-order
//! Gaussian model-X knockoffs.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::Dataset;

/// Multiplicative slack pulling gamma strictly inside the feasible region so
/// that the Cholesky of 2S - S Sigma^{-1} S never sits on the PSD boundary.
pub const GAMMA_SLACK: f64 = 1.0 - 1e-5;

/// One layer's Gram-side knockoff ingredients: the covariance (or X'X), the
/// equicorrelated block-diagonal S, and the scalar gamma that produced it.
#[derive(Debug, Clone)]
pub struct GramPackage {
    sigma: DMatrix<f64>,
    partition: Vec<Vec<usize>>,
    gamma: f64,
    s: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl GramPackage {
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn partition(&self) -> &[Vec<usize>] {
        &self.partition
    }

    /// Assemble a package from a caller-chosen S (tests and collapsed cases).
    /// Validates the PSD invariants but not the equicorrelated structure.
    pub fn with_s_matrix(
        sigma: DMatrix<f64>,
        partition: Vec<Vec<usize>>,
        s: DMatrix<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let d = DMatrix::identity(sigma.nrows(), sigma.ncols());
        let pkg = GramPackage {
            sigma,
            partition,
            gamma,
            s,
            d,
        };
        pkg.check_psd()?;
        Ok(pkg)
    }

    fn check_psd(&self) -> Result<()> {
        let min_s = linalg::min_eigenvalue(&self.s);
        if min_s < -1e-8 {
            return Err(Error::Conditioning(format!(
                "S is not positive semidefinite (min eigenvalue {min_s:.3e})"
            )));
        }
        let two_sigma_minus_s = 2.0 * &self.sigma - &self.s;
        let min_rem = linalg::min_eigenvalue(&two_sigma_minus_s);
        if min_rem < -1e-8 {
            return Err(Error::Conditioning(format!(
                "2 Sigma - S is not positive semidefinite (min eigenvalue {min_rem:.3e})"
            )));
        }
        Ok(())
    }
}

/// Build the equicorrelated group S: per-group blocks S_g = gamma *
/// Sigma_{g,g} with gamma = min(1, 2 lambda_min(D Sigma D)) scaled by the
/// interior slack, where D is the block-diagonal inverse square root of the
/// within-group blocks.
pub fn build_equicorrelated_s(sigma: &DMatrix<f64>, partition: &[Vec<usize>]) -> Result<GramPackage> {
    let n = sigma.nrows();
    if sigma.ncols() != n {
        return Err(Error::InvalidInput("Sigma must be square".into()));
    }
    validate_partition(partition, n)?;
    let min_eig = linalg::min_eigenvalue(sigma);
    if min_eig <= 1e-10 {
        return Err(Error::Conditioning(format!(
            "Sigma is singular or nearly so (min eigenvalue {min_eig:.3e})"
        )));
    }

    let mut d = DMatrix::zeros(n, n);
    for group in partition {
        let block = linalg::sub_block(sigma, group);
        let inv_sqrt = linalg::inv_sqrt_sym(&block, "within-group block of Sigma")?;
        for (r, &i) in group.iter().enumerate() {
            for (c, &j) in group.iter().enumerate() {
                d[(i, j)] = inv_sqrt[(r, c)];
            }
        }
    }

    let dsd = &d * sigma * &d;
    let lambda_min = linalg::min_eigenvalue(&dsd);
    let gamma = (2.0 * lambda_min).min(1.0) * GAMMA_SLACK;

    let mut s = DMatrix::zeros(n, n);
    for group in partition {
        for &i in group {
            for &j in group {
                s[(i, j)] = gamma * sigma[(i, j)];
            }
        }
    }

    let pkg = GramPackage {
        sigma: sigma.clone(),
        partition: partition.to_vec(),
        gamma,
        s,
        d,
    };
    pkg.check_psd()?;
    Ok(pkg)
}

fn validate_partition(partition: &[Vec<usize>], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for group in partition {
        for &j in group {
            if j >= n {
                return Err(Error::InvalidInput(format!("group index {} out of range", j + 1)));
            }
            if seen[j] {
                return Err(Error::InvalidInput(format!("variable {} in two groups", j + 1)));
            }
            seen[j] = true;
        }
    }
    if seen.iter().any(|&s| !s) {
        return Err(Error::InvalidInput("partition does not cover all variables".into()));
    }
    Ok(())
}

/// Fixed-design knockoff matrix together with the pieces used to build it.
#[derive(Debug, Clone)]
pub struct KnockoffDesign {
    x_tilde: DMatrix<f64>,
    c: DMatrix<f64>,
    u_tilde: DMatrix<f64>,
}

impl KnockoffDesign {
    pub fn x_tilde(&self) -> &DMatrix<f64> {
        &self.x_tilde
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn u_tilde(&self) -> &DMatrix<f64> {
        &self.u_tilde
    }
}

/// Fixed-design group knockoffs: X_tilde = X (I - Sigma^{-1} S) + U_tilde C,
/// where C'C = 2S - S Sigma^{-1} S and U_tilde is an orthonormal basis
/// orthogonal to span(X), generated from a seeded Gaussian matrix.
///
/// When rows allow (n >= 2N + 1) the random basis is also centered before
/// orthonormalization, so centered X yields centered knockoffs.
pub fn fixed_design_knockoffs(
    ds: &Dataset,
    pkg: &GramPackage,
    rng_seed: u64,
) -> Result<KnockoffDesign> {
    let x = ds.x();
    let (n, p) = (x.nrows(), x.ncols());
    if !ds.is_standardized() {
        return Err(Error::InvalidInput(
            "fixed-design knockoffs require a standardized dataset".into(),
        ));
    }
    if n < 2 * p {
        return Err(Error::InvalidInput(format!(
            "fixed-design knockoffs require n >= 2N (n = {n}, N = {p})"
        )));
    }
    if pkg.sigma.nrows() != p {
        return Err(Error::InvalidInput("GramPackage dimension does not match X".into()));
    }

    let sigma_inv_s = linalg::solve_spd(&pkg.sigma, &pkg.s, "Sigma^{-1} S")?;
    let a = 2.0 * &pkg.s - &pkg.s * &sigma_inv_s;
    let c = cholesky_with_floor(&a)?;

    // seeded Gaussian matrix, projected off span(X) (and off the all-ones
    // direction when there is room), then orthonormalized
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let mut raw = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    let qx = linalg::thin_q(x);
    if n >= 2 * p + 1 {
        linalg::center_columns(&mut raw);
    }
    let mut projected = linalg::project_off(&raw, &qx);
    if n >= 2 * p + 1 {
        linalg::center_columns(&mut projected);
        // re-project: centering can reintroduce a span(X) component only if
        // X's columns are not centered, which standardization rules out
        projected = linalg::project_off(&projected, &qx);
    }
    let u_tilde = linalg::thin_q(&projected);

    let x_tilde = x * (DMatrix::identity(p, p) - &sigma_inv_s) + &u_tilde * &c;
    Ok(KnockoffDesign {
        x_tilde,
        c,
        u_tilde,
    })
}

/// Cholesky square root of 2S - S Sigma^{-1} S with the documented eigenvalue
/// floor at zero for roundoff-negative values in [-1e-10, 0).
fn cholesky_with_floor(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match linalg::psd_sqrt(a, "2S - S Sigma^{-1} S") {
        Ok(c) => Ok(c),
        Err(Error::Conditioning(msg)) => Err(Error::Conditioning(format!(
            "knockoff residual covariance is indefinite: {msg}"
        ))),
        Err(e) => Err(e),
    }
}

/// Second-order Gaussian model-X knockoffs: each row of X gets a knockoff row
/// drawn from N(mu, V) with mu = x (I - Sigma^{-1} S) and
/// V = 2S - S Sigma^{-1} S, independently across rows given X.
///
/// Only the Gaussian construction is provided. The sequential
/// conditional-sampling recipe for arbitrary row distributions needs the
/// conditional laws of each group given everything sampled so far, for which
/// no constructive recipe exists outside special families.
pub fn modelx_gaussian_knockoffs(
    x_rows: &DMatrix<f64>,
    pkg: &GramPackage,
    rng_seed: u64,
) -> Result<DMatrix<f64>> {
    let p = x_rows.ncols();
    if pkg.sigma.nrows() != p {
        return Err(Error::InvalidInput("GramPackage dimension does not match X".into()));
    }
    let sigma_inv_s = linalg::solve_spd(&pkg.sigma, &pkg.s, "Sigma^{-1} S")?;
    let v = 2.0 * &pkg.s - &pkg.s * &sigma_inv_s;
    let min_v = linalg::min_eigenvalue(&v);
    if min_v < -1e-8 {
        return Err(Error::Conditioning(format!(
            "model-X conditional covariance indefinite (min eigenvalue {min_v:.3e})"
        )));
    }
    let c = linalg::psd_sqrt(&v, "model-X conditional covariance")?; // C'C = V
    let mu = x_rows * (DMatrix::identity(p, p) - &sigma_inv_s);

    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let z = DMatrix::from_fn(x_rows.nrows(), p, |_, _| StandardNormal.sample(&mut rng));
    // rows: x_tilde = mu + z C because Cov(C' z') = C' C = V
    Ok(mu + z * &c)
}

/// Max-norm relative violation of the Gram swap identity for one union of
/// groups: comparing [X X~]'[X X~] before and after swapping those columns.
pub fn gram_swap_violation(
    x: &DMatrix<f64>,
    x_tilde: &DMatrix<f64>,
    partition: &[Vec<usize>],
    swap_groups: &[usize],
) -> f64 {
    let p = x.ncols();
    let mut aug = DMatrix::zeros(x.nrows(), 2 * p);
    aug.view_mut((0, 0), (x.nrows(), p)).copy_from(x);
    aug.view_mut((0, p), (x.nrows(), p)).copy_from(x_tilde);
    let gram = aug.transpose() * &aug;

    let mut swapped = aug.clone();
    for &g in swap_groups {
        for &j in &partition[g] {
            swapped.swap_columns(j, p + j);
        }
    }
    let gram_swapped = swapped.transpose() * &swapped;
    let denom = linalg::max_abs(&gram).max(1e-300);
    linalg::max_abs(&(gram_swapped - gram)) / denom
}
