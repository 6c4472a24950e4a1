//! Surrogate reductions and measurement-error-model design rows.
//!
//! A design row is `φ = [1, s(z)ᵀ, wᵀ, (w_c · s(z))ᵀ …]` where `s` is the
//! surrogate reduction (identity, a single radius, principal components or a
//! restricted cubic spline projection over the radii) and the trailing blocks
//! hold one interaction block per configured confounder `c`, in the order the
//! confounders are listed.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::math;

/// Which reduction of the surrogate vector enters the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "value", rename_all = "snake_case"))]
pub enum Variant {
    /// All radii.
    Standard,
    /// One radius, by index into the schema radii.
    SingleRadius(usize),
    /// Leading principal components.
    Pca(usize),
    /// Restricted cubic spline over the radii with this many knots.
    Rcs(usize),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DesignSpec {
    pub variant: Variant,
    /// Confounder indices whose products with `s(z)` enter the design.
    pub interactions: Vec<usize>,
    /// Standardize surrogates before PCA (centering always happens).
    #[cfg_attr(feature = "serde", serde(default))]
    pub pca_scale: bool,
}

impl DesignSpec {
    pub fn new(variant: Variant) -> Self {
        Self { variant, interactions: Vec::new(), pca_scale: false }
    }

    pub fn standard() -> Self {
        Self::new(Variant::Standard)
    }

    pub fn pca(k: usize) -> Self {
        Self::new(Variant::Pca(k))
    }

    pub fn rcs(knots: usize) -> Self {
        Self::new(Variant::Rcs(knots))
    }

    pub fn with_interactions(mut self, confounders: Vec<usize>) -> Self {
        self.interactions = confounders;
        self
    }

    pub fn includes_interactions(&self) -> bool {
        !self.interactions.is_empty()
    }

    pub fn validate(&self, p_z: usize, p_w: usize) -> Result<()> {
        match self.variant {
            Variant::Standard => {}
            Variant::SingleRadius(i) if i >= p_z => {
                return Err(Error::InvalidArgument(format!("radius index {i} out of range for {p_z} radii")))
            }
            Variant::Pca(k) if k == 0 || k > p_z => {
                return Err(Error::InvalidArgument(format!("{k} principal components requested from {p_z} surrogates")))
            }
            Variant::Rcs(n) if !(3..=7).contains(&n) => {
                return Err(Error::InvalidArgument(format!("{n} spline knots requested; 3 to 7 are supported")))
            }
            Variant::Rcs(n) if n > p_z => {
                return Err(Error::InvalidArgument(format!("{n} spline knots need at least as many radii, have {p_z}")))
            }
            _ => {}
        }
        if let Some(&c) = self.interactions.iter().find(|&&c| c >= p_w) {
            return Err(Error::InvalidArgument(format!("interaction confounder {c} out of range for {p_w} confounders")));
        }
        Ok(())
    }

    /// Length of `s(z)`.
    pub fn reduced_len(&self, p_z: usize) -> usize {
        match self.variant {
            Variant::Standard => p_z,
            Variant::SingleRadius(_) => 1,
            Variant::Pca(k) => k,
            Variant::Rcs(n) => n - 1,
        }
    }

    pub fn design_len(&self, p_z: usize, p_w: usize) -> usize {
        let s = self.reduced_len(p_z);
        1 + s + p_w + self.interactions.len() * s
    }
}

/// Fitted principal-component reduction `z* = L (z − center) [/ scale]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PcaTransform {
    pub center: Vec<f64>,
    /// Per-column standard deviations when scaling was requested.
    pub scale: Option<Vec<f64>>,
    /// `k × p_Z`, orthonormal rows.
    pub loadings: Matrix,
    /// All covariance eigenvalues, descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
}

impl PcaTransform {
    pub fn n_components(&self) -> usize {
        self.loadings.rows()
    }

    /// Fraction of total variance carried by each retained component.
    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        self.eigenvalues[..self.n_components()].iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect()
    }
}

/// Principal components of the column covariance of `zmat` (one row per observation).
pub fn fit_pca(zmat: &Matrix, k: usize, scale: bool) -> Result<PcaTransform> {
    let (n, p) = (zmat.rows(), zmat.cols());
    if k == 0 || k > p {
        return Err(Error::InvalidArgument(format!("{k} principal components requested from {p} surrogates")));
    }
    if n < k + 1 {
        return Err(Error::InvalidArgument(format!("{n} rows cannot support {k} principal components")));
    }
    let mut center = vec![0.0; p];
    for i in 0..n {
        linalg::axpy(1.0, zmat.row(i), &mut center);
    }
    center.iter_mut().for_each(|c| *c /= n as f64);

    let mut cov = Matrix::zeros(p, p);
    let mut centered = vec![0.0; p];
    for i in 0..n {
        for (c, (z, m)) in centered.iter_mut().zip(zmat.row(i).iter().zip(&center)) {
            *c = z - m;
        }
        cov.add_outer(1.0, &centered, &centered);
    }
    let cov = cov.scale(1.0 / (n as f64 - 1.0)).symmetrized();

    for j in 0..p {
        if cov[(j, j)] == 0.0 {
            log::warn!("surrogate column {j} has zero variance");
        }
    }

    let (cov, scale) = if scale {
        let sd: Vec<f64> = cov.diag().iter().map(|v| if *v > 0.0 { math::sqrt(*v) } else { 1.0 }).collect();
        let corr = Matrix::from_fn(p, p, |i, j| cov[(i, j)] / (sd[i] * sd[j]));
        (corr, Some(sd))
    } else {
        (cov, None)
    };

    let eig = linalg::sym_eigen(&cov)?;
    let loadings = Matrix::from_fn(k, p, |r, c| eig.vectors[(c, r)]);
    let eigenvalues = eig.values.iter().map(|v| v.max(0.0)).collect();
    Ok(PcaTransform { center, scale, loadings, eigenvalues })
}

pub fn apply_pca(t: &PcaTransform, z: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; t.n_components()];
    apply_pca_into(t, z, &mut out)?;
    Ok(out)
}

fn apply_pca_into(t: &PcaTransform, z: &[f64], out: &mut [f64]) -> Result<()> {
    if z.len() != t.center.len() {
        return Err(Error::DimensionMismatch { context: "apply_pca", expected: t.center.len(), found: z.len() });
    }
    for (r, o) in out.iter_mut().enumerate() {
        let l = t.loadings.row(r);
        let mut acc = 0.0;
        for j in 0..z.len() {
            let mut c = z[j] - t.center[j];
            if let Some(sd) = &t.scale {
                c /= sd[j];
            }
            acc += l[j] * c;
        }
        *o = acc;
    }
    Ok(())
}

/// Restricted cubic spline basis over the buffer radii.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RcsTransform {
    pub radii: Vec<f64>,
    pub knots: Vec<f64>,
    /// `p_Z × (n_knots − 1)`; row `i` is the basis evaluated at `radii[i]`.
    pub basis: Matrix,
}

impl RcsTransform {
    pub fn n_terms(&self) -> usize {
        self.knots.len() - 1
    }

    /// Basis at an arbitrary radius.
    pub fn eval(&self, r: f64) -> Vec<f64> {
        rcs_terms(r, &self.knots)
    }

    /// `Γᵀ z`.
    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.radii.len() {
            return Err(Error::DimensionMismatch { context: "RcsTransform::apply", expected: self.radii.len(), found: z.len() });
        }
        Ok(self.basis.tr_mul_vec(z))
    }
}

/// Harrell's truncated-power restricted cubic spline terms at `r`: the linear
/// term followed by `K − 2` cubic terms that are linear beyond the last knot,
/// each scaled by `(t_K − t_1)²`.
pub fn rcs_terms(r: f64, knots: &[f64]) -> Vec<f64> {
    let k = knots.len();
    let (t_first, t_pen, t_last) = (knots[0], knots[k - 2], knots[k - 1]);
    let norm = (t_last - t_first) * (t_last - t_first);
    let cube = |x: f64| if x > 0.0 { x * x * x } else { 0.0 };
    let mut out = Vec::with_capacity(k - 1);
    out.push(r);
    for &tj in &knots[..k - 2] {
        let v = cube(r - tj) - cube(r - t_pen) * (t_last - tj) / (t_last - t_pen) + cube(r - t_last) * (t_pen - tj) / (t_last - t_pen);
        out.push(v / norm);
    }
    out
}

/// Knots at equally spaced quantiles (linear interpolation) of the radii, from
/// the smallest to the largest radius.
pub fn default_knots(radii: &[f64], n_knots: usize) -> Vec<f64> {
    let n = radii.len();
    (0..n_knots)
        .map(|j| {
            let pos = j as f64 * (n - 1) as f64 / (n_knots - 1) as f64;
            let lo = pos as usize;
            let frac = pos - lo as f64;
            if lo + 1 < n {
                radii[lo] + frac * (radii[lo + 1] - radii[lo])
            } else {
                radii[n - 1]
            }
        })
        .collect()
}

pub fn rcs_basis(radii: &[f64], n_knots: usize) -> Result<RcsTransform> {
    if !(3..=7).contains(&n_knots) {
        return Err(Error::InvalidArgument(format!("{n_knots} spline knots requested; 3 to 7 are supported")));
    }
    if radii.len() < n_knots {
        return Err(Error::InvalidArgument(format!("{} radii cannot carry {n_knots} knots", radii.len())));
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("radii must be strictly increasing".into()));
    }
    let knots = default_knots(radii, n_knots);
    let rows: Vec<Vec<f64>> = radii.iter().map(|&r| rcs_terms(r, &knots)).collect();
    Ok(RcsTransform { radii: radii.to_vec(), knots, basis: Matrix::from_rows(&rows) })
}

/// The fitted reduction behind `s(z)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum SurrogateTransform {
    Identity { p_z: usize },
    Select { index: usize, p_z: usize },
    Pca(PcaTransform),
    Rcs(RcsTransform),
}

impl SurrogateTransform {
    /// Fits the reduction a spec asks for on validation surrogates.
    pub fn fit(spec: &DesignSpec, zmat: &Matrix, radii: &[f64]) -> Result<Self> {
        let p_z = zmat.cols();
        if radii.len() != p_z {
            return Err(Error::DimensionMismatch { context: "SurrogateTransform::fit", expected: radii.len(), found: p_z });
        }
        Ok(match spec.variant {
            Variant::Standard => Self::Identity { p_z },
            Variant::SingleRadius(index) => Self::Select { index, p_z },
            Variant::Pca(k) => Self::Pca(fit_pca(zmat, k, spec.pca_scale)?),
            Variant::Rcs(n) => Self::Rcs(rcs_basis(radii, n)?),
        })
    }

    pub fn p_z(&self) -> usize {
        match self {
            Self::Identity { p_z } | Self::Select { p_z, .. } => *p_z,
            Self::Pca(t) => t.center.len(),
            Self::Rcs(t) => t.radii.len(),
        }
    }

    pub fn reduced_len(&self) -> usize {
        match self {
            Self::Identity { p_z } => *p_z,
            Self::Select { .. } => 1,
            Self::Pca(t) => t.n_components(),
            Self::Rcs(t) => t.n_terms(),
        }
    }

    fn matches(&self, variant: Variant) -> bool {
        match (self, variant) {
            (Self::Identity { .. }, Variant::Standard) => true,
            (Self::Select { index, .. }, Variant::SingleRadius(i)) => *index == i,
            (Self::Pca(t), Variant::Pca(k)) => t.n_components() == k,
            (Self::Rcs(t), Variant::Rcs(n)) => t.knots.len() == n,
            _ => false,
        }
    }

    pub fn reduce(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.reduced_len()];
        self.reduce_into(z, &mut out)?;
        Ok(out)
    }

    fn reduce_into(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        if z.len() != self.p_z() {
            return Err(Error::DimensionMismatch { context: "surrogate vector", expected: self.p_z(), found: z.len() });
        }
        match self {
            Self::Identity { .. } => out.copy_from_slice(z),
            Self::Select { index, .. } => out[0] = z[*index],
            Self::Pca(t) => apply_pca_into(t, z, out)?,
            Self::Rcs(t) => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = (0..z.len()).map(|i| t.basis[(i, k)] * z[i]).sum();
                }
            }
        }
        Ok(())
    }
}

/// A spec with its fitted transform: everything needed to turn `(z, w)` into `φ`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Design {
    pub spec: DesignSpec,
    pub transform: SurrogateTransform,
    pub p_w: usize,
}

impl Design {
    pub fn new(spec: DesignSpec, transform: SurrogateTransform, p_w: usize) -> Result<Self> {
        spec.validate(transform.p_z(), p_w)?;
        if !transform.matches(spec.variant) {
            return Err(Error::InvalidArgument("transform does not match the design variant".into()));
        }
        Ok(Self { spec, transform, p_w })
    }

    pub fn len(&self) -> usize {
        self.spec.design_len(self.transform.p_z(), self.p_w)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn row(&self, z: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        build_design(&self.spec, &self.transform, z, w)
    }

    /// Human-readable column labels, e.g. `z_90`, `pc2`, `rcs1`, `w_age`, `w_age:pc2`.
    pub fn column_names(&self, radii: &[f64], confounders: &[String]) -> Vec<String> {
        let s_names: Vec<String> = match &self.transform {
            SurrogateTransform::Identity { .. } => radii.iter().map(|r| format!("z_{r}")).collect(),
            SurrogateTransform::Select { index, .. } => vec![format!("z_{}", radii[*index])],
            SurrogateTransform::Pca(t) => (1..=t.n_components()).map(|k| format!("pc{k}")).collect(),
            SurrogateTransform::Rcs(t) => (1..=t.n_terms()).map(|k| format!("rcs{k}")).collect(),
        };
        let w_name = |c: usize| confounders.get(c).map_or_else(|| format!("w{}", c + 1), |n| format!("w_{n}"));
        let mut names = vec![String::from("intercept")];
        names.extend(s_names.iter().cloned());
        names.extend((0..self.p_w).map(w_name));
        for &c in &self.spec.interactions {
            names.extend(s_names.iter().map(|s| format!("{}:{s}", w_name(c))));
        }
        names
    }
}

/// Assembles `φ = [1, s(z)ᵀ, wᵀ, (w_c · s(z))ᵀ for each interacting c]`.
pub fn build_design(spec: &DesignSpec, transform: &SurrogateTransform, z: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if !transform.matches(spec.variant) {
        return Err(Error::InvalidArgument("transform does not match the design variant".into()));
    }
    if let Some(&c) = spec.interactions.iter().find(|&&c| c >= w.len()) {
        return Err(Error::DimensionMismatch { context: "interaction confounder", expected: w.len(), found: c + 1 });
    }
    let s = transform.reduce(z)?;
    let mut phi = Vec::with_capacity(1 + s.len() + w.len() + spec.interactions.len() * s.len());
    phi.push(1.0);
    phi.extend_from_slice(&s);
    phi.extend_from_slice(w);
    for &c in &spec.interactions {
        phi.extend(s.iter().map(|v| w[c] * v));
    }
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const RADII: [f64; 9] = [90.0, 150.0, 270.0, 510.0, 750.0, 990.0, 1230.0, 1500.0, 2100.0];

    #[test]
    fn pca_selects_high_variance_coordinates() {
        // rows chosen so the sample covariance is exactly diag(3, 1, 2)
        let rows: Vec<[f64; 3]> = vec![
            [3f64.sqrt(), 0.0, 0.0],
            [-(3f64.sqrt()), 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 2f64.sqrt()],
            [0.0, 0.0, -(2f64.sqrt())],
        ];
        // (n-1) = 5 divisor: scale so covariance is diag(3,1,2)
        let s = (5.0f64 / 2.0).sqrt();
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * s).collect()).collect();
        let t = fit_pca(&Matrix::from_rows(&rows), 2, false).unwrap();
        assert!((t.eigenvalues[0] - 3.0).abs() < 1e-12);
        assert!((t.eigenvalues[1] - 2.0).abs() < 1e-12);
        assert!((t.loadings[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!((t.loadings[(1, 2)].abs() - 1.0).abs() < 1e-12);
        // sign convention: first non-negligible loading positive
        assert!(t.loadings[(0, 0)] > 0.0 && t.loadings[(1, 2)] > 0.0);
    }

    #[test]
    fn pca_full_rank_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = Matrix::from_fn(30, 5, |_, _| rng.random_range(0.0..1.0));
        let t = fit_pca(&z, 5, false).unwrap();
        for i in 0..30 {
            let s = apply_pca(&t, z.row(i)).unwrap();
            let back = t.loadings.tr_mul_vec(&s);
            for j in 0..5 {
                assert!((back[j] + t.center[j] - z[(i, j)]).abs() < 1e-10);
            }
        }
        let llt = t.loadings.matmul(&t.loadings.transpose());
        assert!(llt.sub(&Matrix::identity(5)).max_abs() < 1e-10);
    }

    #[test]
    fn pca_rejects_too_many_components() {
        let z = Matrix::zeros(10, 3);
        assert!(fit_pca(&z, 4, false).is_err());
        assert!(fit_pca(&Matrix::zeros(2, 3), 2, false).is_err());
    }

    #[test]
    fn pca_center_maps_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = Matrix::from_fn(20, 4, |_, _| rng.random_range(0.0..1.0));
        let t = fit_pca(&z, 2, false).unwrap();
        assert!(apply_pca(&t, &t.center).unwrap().iter().all(|v| v.abs() < 1e-15));
        assert!(apply_pca(&t, &[0.0; 3]).is_err());
    }

    #[test]
    fn pca_identity_loadings() {
        let t = PcaTransform { center: vec![0.5, 0.25], scale: None, loadings: Matrix::identity(2), eigenvalues: vec![1.0, 1.0] };
        assert_eq!(apply_pca(&t, &[1.0, 1.0]).unwrap(), vec![0.5, 0.75]);
    }

    #[test]
    fn rcs_shape_and_first_column() {
        let t = rcs_basis(&RADII, 3).unwrap();
        assert_eq!((t.basis.rows(), t.basis.cols()), (9, 2));
        assert_eq!(t.basis.col(0), RADII.to_vec());
        assert_eq!(t.knots, vec![90.0, 750.0, 2100.0]);
        assert!(rcs_basis(&RADII[..2], 3).is_err());
        assert!(rcs_basis(&RADII, 8).is_err());
    }

    #[test]
    fn rcs_zero_below_first_knot() {
        let t = rcs_basis(&RADII, 5).unwrap();
        let b = t.eval(50.0);
        assert_eq!(b[0], 50.0);
        assert!(b[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rcs_linear_tail() {
        for n in 3..=7 {
            let t = rcs_basis(&RADII, n).unwrap();
            let (a, b, c) = (t.eval(2500.0), t.eval(3000.0), t.eval(3500.0));
            for k in 0..t.n_terms() {
                let second = a[k] - 2.0 * b[k] + c[k];
                assert!(second.abs() < 1e-9 * (1.0 + b[k].abs()), "n={n} k={k} {second}");
            }
        }
    }

    #[test]
    fn design_lengths() {
        let z = [0.4; 9];
        let std = Design::new(DesignSpec::standard(), SurrogateTransform::Identity { p_z: 9 }, 1).unwrap();
        assert_eq!(std.row(&z, &[1.0]).unwrap().len(), 11);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let zmat = Matrix::from_fn(40, 9, |_, _| rng.random_range(0.0..1.0));
        let spec = DesignSpec::pca(3).with_interactions(vec![0]);
        let tr = SurrogateTransform::fit(&spec, &zmat, &RADII).unwrap();
        let d = Design::new(spec, tr, 1).unwrap();
        assert_eq!(d.row(&z, &[2.0]).unwrap().len(), 8);
        assert_eq!(d.len(), 8);
    }

    #[test]
    fn design_concatenation() {
        let z = [0.1, 0.2, 0.3];
        let w = [2.0, -1.0];
        let spec = DesignSpec::standard().with_interactions(vec![1]);
        let phi = build_design(&spec, &SurrogateTransform::Identity { p_z: 3 }, &z, &w).unwrap();
        assert_eq!(phi, vec![1.0, 0.1, 0.2, 0.3, 2.0, -1.0, -0.1, -0.2, -0.3]);
    }

    #[test]
    fn design_mismatch_errors() {
        let spec = DesignSpec::pca(2);
        assert!(build_design(&spec, &SurrogateTransform::Identity { p_z: 3 }, &[0.0; 3], &[]).is_err());
        let spec = DesignSpec::standard();
        assert!(build_design(&spec, &SurrogateTransform::Identity { p_z: 3 }, &[0.0; 2], &[]).is_err());
        let spec = DesignSpec::standard().with_interactions(vec![2]);
        assert!(build_design(&spec, &SurrogateTransform::Identity { p_z: 3 }, &[0.0; 3], &[1.0]).is_err());
    }

    #[test]
    fn column_names() {
        let spec = DesignSpec::new(Variant::SingleRadius(1)).with_interactions(vec![0]);
        let d = Design::new(spec, SurrogateTransform::Select { index: 1, p_z: 3 }, 1).unwrap();
        let names = d.column_names(&[90.0, 150.0, 270.0], &["pop".into()]);
        assert_eq!(names, vec!["intercept", "z_150", "w_pop", "w_pop:z_150"]);
    }
}
