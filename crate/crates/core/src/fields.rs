//! Grids, densities, norms, moments and the change to similarity variables.
//!
//! Radial grids are parametrised by s ∈ [0, 1] with r = R·s (uniform) or
//! r = R·s² (graded). Quadrature is the trapezoid rule in s, which for
//! smooth radial integrands on the graded map is spectrally accurate.

use std::sync::{Arc, OnceLock};

use crate::error::{PksError, Result};
use crate::special::sphere_area;

/// Default clamp tolerance: negatives down to this fraction of the sup norm are zeroed.
pub const DEFAULT_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Uniform,
    Graded,
}

impl GridKind {
    pub fn name(self) -> &'static str {
        match self {
            GridKind::Uniform => "uniform",
            GridKind::Graded => "graded",
        }
    }
}

/// Radial nodes plus the quadrature data used by every radial operation.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    dim: usize,
    kind: GridKind,
    r_max: f64,
    h_s: f64,
    nodes: Vec<f64>,
    dr_weights: Vec<f64>,
    measure: Vec<f64>,
    faces: Vec<f64>,
}

impl RadialGrid {
    pub fn new(dim: usize, kind: GridKind, len: usize, r_max: f64) -> Result<Self> {
        if !(2..=5).contains(&dim) {
            return Err(PksError::InvalidParameter(format!("dimension {dim} not in 2..=5")));
        }
        if len < 8 {
            return Err(PksError::InvalidParameter(format!("radial grid needs at least 8 nodes, got {len}")));
        }
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(PksError::InvalidParameter(format!("r_max = {r_max}")));
        }
        let h_s = 1.0 / (len - 1) as f64;
        let map = |s: f64| match kind {
            GridKind::Uniform => r_max * s,
            GridKind::Graded => r_max * s * s,
        };
        let dmap = |s: f64| match kind {
            GridKind::Uniform => r_max,
            GridKind::Graded => 2.0 * r_max * s,
        };
        let area = sphere_area(dim);
        let mut nodes = Vec::with_capacity(len);
        let mut dr_weights = Vec::with_capacity(len);
        let mut measure = Vec::with_capacity(len);
        for i in 0..len {
            let s = i as f64 * h_s;
            let r = map(s);
            let end = if i == 0 || i == len - 1 { 0.5 } else { 1.0 };
            let w = end * h_s * dmap(s);
            nodes.push(r);
            dr_weights.push(w);
            measure.push(w * area * r.powi(dim as i32 - 1));
        }
        let faces = (0..len - 1).map(|i| map((i as f64 + 0.5) * h_s)).collect();
        Ok(RadialGrid { dim, kind, r_max, h_s, nodes, dr_weights, measure, faces })
    }

    /// 4096 graded nodes on [0, 40].
    pub fn default_for(dim: usize) -> Result<Self> {
        RadialGrid::new(dim, GridKind::Graded, 4096, 40.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn kind(&self) -> GridKind {
        self.kind
    }
    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    /// Spacing of the parameter s.
    pub fn h_s(&self) -> f64 {
        self.h_s
    }
    /// Weights of ∫ f(r) dr.
    pub fn dr_weights(&self) -> &[f64] {
        &self.dr_weights
    }
    /// Weights of ∫_{ℝⁿ} f(|x|) dx.
    pub fn measure(&self) -> &[f64] {
        &self.measure
    }
    /// Radii of the cell faces between consecutive nodes (len − 1 entries).
    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    /// Parameter value s for radius r.
    pub fn s_of(&self, r: f64) -> f64 {
        match self.kind {
            GridKind::Uniform => r / self.r_max,
            GridKind::Graded => (r / self.r_max).max(0.0).sqrt(),
        }
    }

    /// dr/ds at node i.
    pub fn dr_ds(&self, i: usize) -> f64 {
        match self.kind {
            GridKind::Uniform => self.r_max,
            GridKind::Graded => 2.0 * self.r_max * i as f64 * self.h_s,
        }
    }

    /// Same grid shape with all radii multiplied by `factor`.
    pub fn dilated(&self, factor: f64) -> Result<Self> {
        RadialGrid::new(self.dim, self.kind, self.len(), self.r_max * factor)
    }

    /// Same nodes, different dimension.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        RadialGrid::new(dim, self.kind, self.len(), self.r_max)
    }

    /// Cumulative integral ∫₀^{r_i} g(r) dr of nodal samples of a smooth g.
    ///
    /// Away from the origin this is the trapezoid rule in s plus the leading
    /// Euler–Maclaurin correction; the first panels integrate the cubic
    /// interpolant against the exact Jacobian, where difference formulas for
    /// the correction would be unreliable.
    pub fn cumulative(&self, g: &[f64]) -> Vec<f64> {
        self.cumulative_product(g, 0, 1.0)
    }

    /// ∫₀^{r_i} scale·r^p·g(r) dr for smooth g.
    fn cumulative_product(&self, g: &[f64], p: i32, scale: f64) -> Vec<f64> {
        const HEAD: usize = 8;
        let n = g.len();
        let h = self.h_s;
        let jac = |s: f64| match self.kind {
            GridKind::Uniform => (self.r_max * s).powi(p) * self.r_max,
            GridKind::Graded => (self.r_max * s * s).powi(p) * 2.0 * self.r_max * s,
        };
        let mut out = vec![0.0; n];
        for i in 1..=HEAD.min(n - 1) {
            let j0 = (i as isize - 2).clamp(0, n as isize - 4) as usize;
            let stencil = [g[j0], g[j0 + 1], g[j0 + 2], g[j0 + 3]];
            let a = (i - 1) as f64 * h;
            let mut acc = 0.0;
            for (x, w) in GAUSS8.iter() {
                let s = a + 0.5 * h * (1.0 + x);
                acc += w * lagrange4(&stencil, s / h - j0 as f64) * jac(s);
            }
            out[i] = out[i - 1] + scale * 0.5 * h * acc;
        }
        if n <= HEAD + 1 {
            return out;
        }
        let f: Vec<f64> = (0..n).map(|i| g[i] * jac(i as f64 * h)).collect();
        let df = diff_s(&f, h);
        let mut acc = 0.0;
        for i in HEAD + 1..n {
            acc += 0.5 * h * (f[i - 1] + f[i]);
            out[i] = out[HEAD] + scale * (acc - h * h / 12.0 * (df[i] - df[HEAD]));
        }
        out
    }

    /// Plain cumulative trapezoid in s of nodal samples g(r), i.e. ∫₀^{r_i} g dr.
    pub fn cumulative_trapezoid(&self, g: &[f64]) -> Vec<f64> {
        let h = self.h_s;
        let mut out = vec![0.0; g.len()];
        let mut prev = g[0] * self.dr_ds(0);
        for i in 1..g.len() {
            let cur = g[i] * self.dr_ds(i);
            out[i] = out[i - 1] + 0.5 * h * (prev + cur);
            prev = cur;
        }
        out
    }

    fn shell_density(&self, values: &[f64]) -> Vec<f64> {
        let area = sphere_area(self.dim);
        self.nodes.iter().zip(values).map(|(&r, &u)| u * area * r.powi(self.dim as i32 - 1)).collect()
    }

    /// Cumulative mass m(r_i) = ∫_{|x| < r_i} u with the same trapezoid weights as the total mass.
    pub fn cumulative_mass(&self, values: &[f64]) -> Vec<f64> {
        self.cumulative_trapezoid(&self.shell_density(values))
    }

    /// Fourth-order cumulative mass for smooth data (see [`RadialGrid::cumulative`]).
    pub fn cumulative_mass_smooth(&self, values: &[f64]) -> Vec<f64> {
        self.cumulative_product(values, self.dim as i32 - 1, sphere_area(self.dim))
    }

    /// Derivative with respect to r of nodal samples.
    pub fn diff_r(&self, f: &[f64]) -> Vec<f64> {
        let df = diff_s(f, self.h_s);
        (0..f.len())
            .map(|i| {
                let j = self.dr_ds(i);
                if j == 0.0 {
                    0.0
                } else {
                    df[i] / j
                }
            })
            .collect()
    }

    /// Cubic interpolation in s; zero outside [0, r_max].
    pub fn interpolate(&self, values: &[f64], r: f64) -> f64 {
        if r < 0.0 || r > self.r_max * (1.0 + 1e-14) {
            return 0.0;
        }
        let n = self.len();
        let x = self.s_of(r) / self.h_s;
        let mut i = x.floor() as isize - 1;
        i = i.clamp(0, n as isize - 4);
        let i = i as usize;
        let t = x - i as f64;
        let p = [values[i], values[i + 1], values[i + 2], values[i + 3]];
        lagrange4(&p, t)
    }
}

const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

fn lagrange4(p: &[f64; 4], t: f64) -> f64 {
    let (a, b, c, d) = (t, t - 1.0, t - 2.0, t - 3.0);
    -p[0] * b * c * d / 6.0 + p[1] * a * c * d / 2.0 - p[2] * a * b * d / 2.0 + p[3] * a * b * c / 6.0
}

/// Fourth-order first derivative of uniformly spaced samples.
pub(crate) fn diff_s(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    if n < 5 {
        for i in 0..n {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            d[i] = (f[b] - f[a]) / ((b - a) as f64 * h);
        }
        return d;
    }
    for i in 2..n - 2 {
        d[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h);
    }
    let fwd = |f: &[f64], i: usize| {
        (-25.0 * f[i] + 48.0 * f[i + 1] - 36.0 * f[i + 2] + 16.0 * f[i + 3] - 3.0 * f[i + 4]) / (12.0 * h)
    };
    let fwd1 = |f: &[f64], i: usize| {
        (-3.0 * f[i - 1] - 10.0 * f[i] + 18.0 * f[i + 1] - 6.0 * f[i + 2] + f[i + 3]) / (12.0 * h)
    };
    d[0] = fwd(f, 0);
    d[1] = fwd1(f, 1);
    let r: Vec<f64> = f.iter().rev().copied().collect();
    d[n - 1] = -fwd(&r, 0);
    d[n - 2] = -fwd1(&r, 1);
    d
}

/// Zero negatives within `tol·‖f‖_∞`; anything more negative, or non-finite, is an error.
pub fn enforce_nonnegative(values: &mut [f64], tol: f64) -> Result<()> {
    let mut sup: f64 = 0.0;
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(PksError::InvalidField(format!("non-finite sample {v} at index {i}")));
        }
        sup = sup.max(v.abs());
    }
    for (i, v) in values.iter_mut().enumerate() {
        if *v < 0.0 {
            if -*v <= tol * sup {
                *v = 0.0;
            } else {
                return Err(PksError::InvalidField(format!(
                    "negative sample {v:e} at index {i} exceeds clamp tolerance"
                )));
            }
        }
    }
    Ok(())
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(PksError::InvalidField(format!("non-finite sample at index {i}"))),
        None => Ok(()),
    }
}

/// Mass, center of mass and second moment.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub mass: f64,
    /// ∫ x u, the B₀ vector.
    pub center: Vec<f64>,
    pub second_moment: f64,
}

/// Behaviour shared by radial and planar densities.
pub trait Density: Clone + Send + Sync + Sized {
    fn dim(&self) -> usize;
    fn values(&self) -> &[f64];
    fn values_mut(&mut self) -> &mut [f64];
    /// ∫f = Σ wᵢfᵢ.
    fn quadrature_weights(&self) -> &[f64];
    /// Same grid, new samples; no sign check.
    fn with_values(&self, values: Vec<f64>) -> Self;
    fn moments(&self) -> Result<MomentSet>;
    /// Squared distance from the origin of every sample point.
    fn radius_squared(&self) -> Vec<f64>;

    fn total_mass(&self) -> Result<f64> {
        check_finite(self.values())?;
        Ok(self.integral())
    }

    /// Σ wᵢfᵢ without validation.
    fn integral(&self) -> f64 {
        self.values().iter().zip(self.quadrature_weights()).map(|(f, w)| f * w).sum()
    }

    fn sup_norm(&self) -> f64 {
        self.values().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Lᵖ norm for p ∈ [1, ∞]; `f64::INFINITY` selects the max norm.
    fn lp_norm(&self, p: f64) -> Result<f64> {
        if p.is_nan() || p < 1.0 {
            return Err(PksError::InvalidParameter(format!("p = {p} < 1")));
        }
        check_finite(self.values())?;
        if p.is_infinite() {
            return Ok(self.sup_norm());
        }
        let s: f64 = self
            .values()
            .iter()
            .zip(self.quadrature_weights())
            .map(|(f, w)| w * f.abs().powf(p))
            .sum();
        Ok(s.powf(1.0 / p))
    }

    /// L¹ distance to another density on the same grid.
    fn l1_distance(&self, other: &Self) -> f64 {
        self.values()
            .iter()
            .zip(other.values())
            .zip(self.quadrature_weights())
            .map(|((a, b), w)| w * (a - b).abs())
            .sum()
    }

    fn scaled(&self, factor: f64) -> Self {
        self.with_values(self.values().iter().map(|v| v * factor).collect())
    }

    fn minus(&self, other: &Self) -> Self {
        self.with_values(self.values().iter().zip(other.values()).map(|(a, b)| a - b).collect())
    }
}

/// A radially symmetric density sampled on a [`RadialGrid`].
#[derive(Debug, Clone)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialField {
    /// Validated constructor: finite, nonnegative up to the default clamp.
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        RadialField::with_clamp(grid, values, DEFAULT_CLAMP)
    }

    pub fn with_clamp(grid: Arc<RadialGrid>, mut values: Vec<f64>, clamp: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(PksError::InvalidField(format!(
                "{} samples for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        enforce_nonnegative(&mut values, clamp)?;
        Ok(RadialField { grid, values })
    }

    /// Signed samples (differences, correction profiles); only finiteness is checked.
    pub fn signed(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(PksError::InvalidField("length mismatch".into()));
        }
        check_finite(&values)?;
        Ok(RadialField { grid, values })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        RadialField { grid, values }
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let values = vec![0.0; grid.len()];
        RadialField { grid, values }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Cubic interpolation in the grid parameter; zero outside the grid.
    pub fn at(&self, r: f64) -> f64 {
        self.grid.interpolate(&self.values, r)
    }

    /// Resample onto another radial grid of the same dimension.
    pub fn resample(&self, grid: Arc<RadialGrid>) -> RadialField {
        let values = grid.nodes().iter().map(|&r| self.at(r)).collect();
        RadialField { grid, values }
    }
}

impl Density for RadialField {
    fn dim(&self) -> usize {
        self.grid.dim()
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    fn quadrature_weights(&self) -> &[f64] {
        self.grid.measure()
    }
    fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        RadialField { grid: self.grid.clone(), values }
    }
    fn moments(&self) -> Result<MomentSet> {
        let mass = self.total_mass()?;
        let m = self.grid.measure();
        let second_moment = self.values.iter().zip(self.nodes()).zip(m).map(|((u, r), w)| u * r * r * w).sum();
        Ok(MomentSet { mass, center: vec![0.0; self.dim()], second_moment })
    }
    fn radius_squared(&self) -> Vec<f64> {
        self.nodes().iter().map(|r| r * r).collect()
    }
}

/// Uniform N×N grid on [−L, L)², the periodic box used by the FFT paths.
#[derive(Debug)]
pub struct CartesianGrid {
    n: usize,
    half_width: f64,
    coords: Vec<f64>,
    weights: Vec<f64>,
    pub(crate) spectral: OnceLock<crate::spectral::PlanarSpectral>,
}

impl CartesianGrid {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(PksError::InvalidParameter(format!("grid size {n} must be a power of two ≥ 8")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(PksError::InvalidParameter(format!("half width {half_width}")));
        }
        let h = 2.0 * half_width / n as f64;
        let coords = (0..n).map(|i| -half_width + i as f64 * h).collect();
        Ok(CartesianGrid { n, half_width, coords, weights: vec![h * h; n * n], spectral: OnceLock::new() })
    }

    /// 256² on [−20, 20]².
    pub fn default_grid() -> Self {
        CartesianGrid::new(256, 20.0).expect("valid default grid")
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn half_width(&self) -> f64 {
        self.half_width
    }
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// A planar density; `values[i * n + j]` sits at (xᵢ, yⱼ).
#[derive(Debug, Clone)]
pub struct CartesianField2D {
    grid: Arc<CartesianGrid>,
    values: Vec<f64>,
}

impl CartesianField2D {
    pub fn new(grid: Arc<CartesianGrid>, values: Vec<f64>) -> Result<Self> {
        CartesianField2D::with_clamp(grid, values, DEFAULT_CLAMP)
    }

    pub fn with_clamp(grid: Arc<CartesianGrid>, mut values: Vec<f64>, clamp: f64) -> Result<Self> {
        if values.len() != grid.n * grid.n {
            return Err(PksError::InvalidField(format!("{} samples for an {}² grid", values.len(), grid.n)));
        }
        enforce_nonnegative(&mut values, clamp)?;
        Ok(CartesianField2D { grid, values })
    }

    pub fn signed(grid: Arc<CartesianGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n * grid.n {
            return Err(PksError::InvalidField("length mismatch".into()));
        }
        check_finite(&values)?;
        Ok(CartesianField2D { grid, values })
    }

    pub fn from_fn(grid: Arc<CartesianGrid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n;
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(f(grid.coords[i], grid.coords[j]));
            }
        }
        CartesianField2D { grid, values }
    }

    pub fn grid(&self) -> &Arc<CartesianGrid> {
        &self.grid
    }
    pub fn n(&self) -> usize {
        self.grid.n
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n + j]
    }

    /// Bicubic interpolation; zero outside the box.
    pub fn at(&self, x: f64, y: f64) -> f64 {
        let n = self.grid.n;
        let h = self.grid.spacing();
        let fx = (x + self.grid.half_width) / h;
        let fy = (y + self.grid.half_width) / h;
        if fx < 0.0 || fy < 0.0 || fx > (n - 1) as f64 || fy > (n - 1) as f64 {
            return 0.0;
        }
        let ix = (fx.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let iy = (fy.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let mut col = [0.0; 4];
        for (a, c) in col.iter_mut().enumerate() {
            let row = [
                self.get(ix + a, iy),
                self.get(ix + a, iy + 1),
                self.get(ix + a, iy + 2),
                self.get(ix + a, iy + 3),
            ];
            *c = lagrange4(&row, fy - iy as f64);
        }
        lagrange4(&col, fx - ix as f64)
    }

    pub fn resample(&self, grid: Arc<CartesianGrid>) -> CartesianField2D {
        let src = self.clone();
        CartesianField2D::from_fn(grid, move |x, y| src.at(x, y))
    }
}

impl Density for CartesianField2D {
    fn dim(&self) -> usize {
        2
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    fn quadrature_weights(&self) -> &[f64] {
        &self.grid.weights
    }
    fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        CartesianField2D { grid: self.grid.clone(), values }
    }
    fn moments(&self) -> Result<MomentSet> {
        let mass = self.total_mass()?;
        let n = self.grid.n;
        let h2 = self.grid.spacing().powi(2);
        let c = &self.grid.coords;
        let (mut bx, mut by, mut m2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let u = self.values[i * n + j] * h2;
                bx += c[i] * u;
                by += c[j] * u;
                m2 += (c[i] * c[i] + c[j] * c[j]) * u;
            }
        }
        Ok(MomentSet { mass, center: vec![bx, by], second_moment: m2 })
    }
    fn radius_squared(&self) -> Vec<f64> {
        let c = &self.grid.coords;
        let mut out = Vec::with_capacity(c.len() * c.len());
        for x in c {
            for y in c {
                out.push(x * x + y * y);
            }
        }
        out
    }
}

/// Either kind of density, for code that handles both.
#[derive(Debug, Clone)]
pub enum Field {
    Radial(RadialField),
    Cartesian(CartesianField2D),
}

impl Field {
    pub fn dim(&self) -> usize {
        match self {
            Field::Radial(f) => f.dim(),
            Field::Cartesian(_) => 2,
        }
    }
    pub fn total_mass(&self) -> Result<f64> {
        match self {
            Field::Radial(f) => f.total_mass(),
            Field::Cartesian(f) => f.total_mass(),
        }
    }
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        match self {
            Field::Radial(f) => f.lp_norm(p),
            Field::Cartesian(f) => f.lp_norm(p),
        }
    }
    pub fn moments(&self) -> Result<MomentSet> {
        match self {
            Field::Radial(f) => f.moments(),
            Field::Cartesian(f) => f.moments(),
        }
    }
}

/// A density in similarity variables ξ = x/√t, τ = log t.
#[derive(Debug, Clone)]
pub struct SimilarityState {
    pub field: Field,
    pub tau: f64,
    pub dim: usize,
}

/// Radial rescaling U(ξ) = t^{n/2} u(√t ξ): nodes divide by √t, samples multiply by t^{n/2}.
pub fn radial_to_similarity(u: &RadialField, t: f64) -> Result<RadialField> {
    if !(t.is_finite() && t > 0.0) {
        return Err(PksError::InvalidParameter(format!("t = {t} must be positive")));
    }
    let grid = Arc::new(u.grid().dilated(1.0 / t.sqrt())?);
    let s = t.powf(u.dim() as f64 / 2.0);
    Ok(RadialField { grid, values: u.values().iter().map(|v| v * s).collect() })
}

/// Inverse of [`radial_to_similarity`].
pub fn radial_from_similarity(big_u: &RadialField, t: f64) -> Result<RadialField> {
    if !(t.is_finite() && t > 0.0) {
        return Err(PksError::InvalidParameter(format!("t = {t} must be positive")));
    }
    let grid = Arc::new(big_u.grid().dilated(t.sqrt())?);
    let s = t.powf(-(big_u.dim() as f64) / 2.0);
    Ok(RadialField { grid, values: big_u.values().iter().map(|v| v * s).collect() })
}

pub fn cartesian_to_similarity(u: &CartesianField2D, t: f64) -> Result<CartesianField2D> {
    if !(t.is_finite() && t > 0.0) {
        return Err(PksError::InvalidParameter(format!("t = {t} must be positive")));
    }
    let g = &u.grid;
    let grid = Arc::new(CartesianGrid::new(g.n, g.half_width / t.sqrt())?);
    Ok(CartesianField2D { grid, values: u.values.iter().map(|v| v * t).collect() })
}

pub fn cartesian_from_similarity(big_u: &CartesianField2D, t: f64) -> Result<CartesianField2D> {
    if !(t.is_finite() && t > 0.0) {
        return Err(PksError::InvalidParameter(format!("t = {t} must be positive")));
    }
    let g = &big_u.grid;
    let grid = Arc::new(CartesianGrid::new(g.n, g.half_width * t.sqrt())?);
    Ok(CartesianField2D { grid, values: big_u.values.iter().map(|v| v / t).collect() })
}

/// Physical density at time t to similarity state at τ = log t.
///
/// The grid is rescaled with the field, so the change of variables is exact;
/// use `resample` to move the result onto a fixed ξ-grid.
pub fn to_similarity(u: &Field, t: f64) -> Result<SimilarityState> {
    let field = match u {
        Field::Radial(f) => Field::Radial(radial_to_similarity(f, t)?),
        Field::Cartesian(f) => Field::Cartesian(cartesian_to_similarity(f, t)?),
    };
    Ok(SimilarityState { dim: field.dim(), field, tau: t.ln() })
}

/// Similarity state back to (u, t) with t = e^τ.
pub fn from_similarity(state: &SimilarityState) -> Result<(Field, f64)> {
    if !state.tau.is_finite() {
        return Err(PksError::InvalidParameter(format!("tau = {}", state.tau)));
    }
    let t = state.tau.exp();
    let field = match &state.field {
        Field::Radial(f) => Field::Radial(radial_from_similarity(f, t)?),
        Field::Cartesian(f) => Field::Cartesian(cartesian_from_similarity(f, t)?),
    };
    Ok((field, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gaussian;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::default_for(n).unwrap())
    }

    #[test]
    fn weights_integrate_one() {
        for kind in [GridKind::Uniform, GridKind::Graded] {
            let g = RadialGrid::new(2, kind, 1001, 17.0).unwrap();
            let s: f64 = g.dr_weights().iter().sum();
            assert!((s / 17.0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_mass_and_peak() {
        let m = 4.0 * PI;
        let f = RadialField::from_fn(grid(2), |r| m * gaussian(2, r));
        assert!((f.total_mass().unwrap() - m).abs() < 1e-8);
        let g3 = RadialField::from_fn(grid(3), |r| 2.0 * gaussian(3, r));
        assert!((g3.lp_norm(f64::INFINITY).unwrap() - 2.0 * (4.0 * PI).powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn gaussian_l2_norm() {
        // ∫𝒢₂² = (4π)⁻² 2π ∫ r e^{-r²/2} dr = 2π/(16π²) = 1/(8π)
        let f = RadialField::from_fn(grid(2), |r| gaussian(2, r));
        let l2 = f.lp_norm(2.0).unwrap();
        assert!((l2 * l2 - 1.0 / (8.0 * PI)).abs() < 1e-13);
        assert!(matches!(f.lp_norm(0.5), Err(PksError::InvalidParameter(_))));
    }

    #[test]
    fn gaussian_second_moments() {
        for n in 2..=5 {
            let f = RadialField::from_fn(grid(n), |r| gaussian(n, r));
            let m = f.moments().unwrap();
            assert!((m.second_moment - 2.0 * n as f64).abs() < 1e-10, "n={n}");
        }
        let f = RadialField::from_fn(grid(4), |r| 2.0 * gaussian(4, r));
        let m = f.moments().unwrap();
        assert!((m.mass - 2.0).abs() < 1e-10 && (m.second_moment - 16.0).abs() < 1e-9);
    }

    #[test]
    fn unit_disk_area() {
        // node 1 of a uniform [0,2] grid sits exactly on the rim
        let g = Arc::new(RadialGrid::new(2, GridKind::Uniform, 200_001, 2.0).unwrap());
        let f = RadialField::from_fn(g, |r| {
            if (r - 1.0).abs() < 1e-12 {
                0.5
            } else if r < 1.0 {
                1.0
            } else {
                0.0
            }
        });
        assert!((f.total_mass().unwrap() - PI).abs() < 1e-9);
    }

    #[test]
    fn shifted_gaussian_center() {
        let g = Arc::new(CartesianGrid::default_grid());
        let f = CartesianField2D::from_fn(g, |x, y| gaussian(2, ((x - 1.0).powi(2) + y * y).sqrt()));
        let m = f.moments().unwrap();
        assert!((m.center[0] - 1.0).abs() < 1e-12 && m.center[1].abs() < 1e-12);
        assert!((m.mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_field() {
        let f = RadialField::zeros(grid(3));
        assert_eq!(f.total_mass().unwrap(), 0.0);
    }

    #[test]
    fn non_finite_rejected() {
        let g = grid(2);
        let mut v = vec![1.0; g.len()];
        v[5] = f64::NAN;
        assert!(matches!(RadialField::new(g, v), Err(PksError::InvalidField(_))));
    }

    #[test]
    fn clamp_policy() {
        let g = grid(2);
        let mut v = vec![1.0; g.len()];
        v[3] = -1e-13;
        let f = RadialField::new(g.clone(), v.clone()).unwrap();
        assert_eq!(f.values()[3], 0.0);
        v[3] = -1e-6;
        assert!(RadialField::new(g, v).is_err());
    }

    #[test]
    fn heat_kernel_at_one_is_the_gaussian_in_similarity_variables() {
        let m = 3.0;
        let t = 1.0;
        let u = RadialField::from_fn(grid(3), |r| m * (4.0 * PI * t).powf(-1.5) * (-r * r / (4.0 * t)).exp());
        let s = to_similarity(&Field::Radial(u.clone()), t).unwrap();
        assert_eq!(s.tau, 0.0);
        let Field::Radial(big) = &s.field else { panic!() };
        for (&xi, &v) in big.nodes().iter().zip(big.values()) {
            assert!((v - m * gaussian(3, xi)).abs() < 1e-15);
        }
    }

    #[test]
    fn similarity_round_trip_and_mass() {
        let u = RadialField::from_fn(grid(2), |r| (1.0 + r * r).powi(-3));
        let m0 = u.total_mass().unwrap();
        for &t in &[0.1, 1.0, 10.0] {
            let s = to_similarity(&Field::Radial(u.clone()), t).unwrap();
            assert!((s.field.total_mass().unwrap() / m0 - 1.0).abs() < 1e-12);
            let (back, t2) = from_similarity(&s).unwrap();
            assert!((t2 / t - 1.0).abs() < 1e-14);
            let Field::Radial(b) = back else { panic!() };
            assert!(b.l1_distance(&u) < 1e-12 * m0 || b.minus(&u).sup_norm() < 1e-12);
        }
        assert!(to_similarity(&Field::Radial(u), 0.0).is_err());
    }

    #[test]
    fn interpolation_is_cubic_accurate() {
        let g = Arc::new(RadialGrid::new(2, GridKind::Graded, 512, 10.0).unwrap());
        let f = RadialField::from_fn(g, |r| (-r * r / 4.0).exp());
        for &r in &[0.0, 0.013, 0.5, 1.7, 4.2, 9.99] {
            assert!((f.at(r) - (-r * r / 4.0f64).exp()).abs() < 1e-7, "r={r}");
        }
        assert_eq!(f.at(10.5), 0.0);
    }

    #[test]
    fn cumulative_mass_is_high_order() {
        let g = Arc::new(RadialGrid::new(3, GridKind::Graded, 1024, 30.0).unwrap());
        let f = RadialField::from_fn(g.clone(), |r| gaussian(3, r));
        let m = g.cumulative_mass_smooth(f.values());
        let plain = g.cumulative_mass(f.values());
        let mut worst_plain: f64 = 0.0;
        for (i, &r) in g.nodes().iter().enumerate() {
            let exact = crate::special::gaussian_ball_mass(3, r);
            assert!((m[i] - exact).abs() < 1e-10, "r={r}");
            worst_plain = worst_plain.max((plain[i] - exact).abs());
        }
        assert!(worst_plain < 1e-5 && worst_plain > 1e-9);
        assert!((plain[g.len() - 1] - f.total_mass().unwrap()).abs() < 1e-14);
    }
}
