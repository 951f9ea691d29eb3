//! Scenario files: initial data, grid, solver settings and requested checks.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pks_core::evolution::{gaussian_like, AdvectionScheme, SolverConfig};
use pks_core::fields::{CartesianField2D, CartesianGrid, GridKind, RadialField, RadialGrid};
use pks_core::special::{gaussian, sphere_area};
use pks_core::{PksError, Result};

use crate::checks::CheckSpec;
use crate::config::{ConfigError, ConfigFile, Section};
use crate::recipes::{self, Recipe};

#[derive(Debug, Clone, PartialEq)]
pub enum InitialKind {
    Gaussian,
    ShiftedGaussian,
    Disk,
    /// Two-column `r,u` CSV, linearly interpolated onto a radial grid.
    CustomFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialSpec {
    pub kind: InitialKind,
    /// One run per mass where the recipe sweeps.
    pub masses: Vec<f64>,
    /// Gaussian data is M(4πa)^{−n/2}e^{−|x−shift|²/4a}.
    pub width: f64,
    pub shift: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridSpec {
    Radial { kind: GridKind, len: usize, r_max: f64 },
    Cartesian { n: usize, half_width: f64 },
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub recipe: String,
    pub dim: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub initial: InitialSpec,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub checks: Vec<CheckSpec>,
}

/// A parsed scenario with its recipe, ready to run.
pub struct Loaded {
    pub scenario: Scenario,
    pub recipe: Box<dyn Recipe>,
}

impl std::fmt::Debug for Loaded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Loaded").field("scenario", &self.scenario).field("recipe", &self.recipe.name()).finish()
    }
}

pub fn load_file(path: &Path) -> std::result::Result<Loaded, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse(&text, base)
}

/// Parse scenario text; relative file references resolve against `base`.
pub fn parse(text: &str, base: &Path) -> std::result::Result<Loaded, ConfigError> {
    let cfg = ConfigFile::parse(text)?;
    let head = cfg.require_section("scenario")?;
    let name = head.raw("name").ok_or_else(|| ConfigError::key("scenario.name", "missing"))?.to_string();
    if name.is_empty() || name.contains(['/', '\\']) {
        return Err(ConfigError::key("scenario.name", format!("`{name}` is not a plain name")));
    }
    let recipe = head.str_or("recipe", &name).to_string();
    let dim = head.usize_or("dim", 2)?;
    if !(2..=5).contains(&dim) {
        return Err(ConfigError::key("scenario.dim", format!("{dim} is not in 2..=5")));
    }
    let seed = head.raw("seed").map(|v| v.parse::<u64>()).transpose().map_err(|_| ConfigError::key("scenario.seed", "not an unsigned integer"))?;
    let output = PathBuf::from(head.str_or("output", "pks-out"));

    let initial = parse_initial(cfg.section("initial"), dim, base)?;
    let grid = parse_grid(cfg.section("grid"), dim)?;
    let solver = parse_solver(cfg.section("solver"))?;
    let mut checks = Vec::new();
    for (check, sec) in cfg.sections_with_prefix("check") {
        let tolerance = sec.f64("tolerance")?.ok_or_else(|| ConfigError::key(format!("check.{check}.tolerance"), "missing"))?;
        if !(tolerance.is_finite() && tolerance > 0.0) {
            return Err(ConfigError::key(format!("check.{check}.tolerance"), format!("must be positive, got {tolerance}")));
        }
        let expected = sec.f64("expected")?;
        checks.push(CheckSpec { name: check.to_string(), tolerance, expected });
    }
    if checks.is_empty() {
        return Err(ConfigError::Section { section: "check.*".into(), message: "no checks requested".into() });
    }

    let scenario = Scenario { name, recipe, dim, seed: seed.unwrap_or(1), output, initial, grid, solver, checks };
    let recipe = recipes::build(&scenario, cfg.section("params"))?;
    for c in &scenario.checks {
        if !recipe.checks().iter().any(|d| d.name == c.name) {
            let known: Vec<_> = recipe.checks().iter().map(|d| d.name).collect();
            return Err(ConfigError::key(
                format!("check.{}", c.name),
                format!("recipe `{}` does not measure it (known: {})", recipe.name(), known.join(", ")),
            ));
        }
    }
    cfg.finish()?;
    Ok(Loaded { scenario, recipe })
}

fn parse_initial(s: &Section, dim: usize, base: &Path) -> std::result::Result<InitialSpec, ConfigError> {
    let kind = match s.str_or("kind", "gaussian") {
        "gaussian" => InitialKind::Gaussian,
        "shifted_gaussian" => InitialKind::ShiftedGaussian,
        "disk" => InitialKind::Disk,
        "custom-file" | "custom_file" => {
            let f = s.raw("file").ok_or_else(|| ConfigError::key("initial.file", "missing for custom-file data"))?;
            let p = base.join(f);
            if !p.is_file() {
                return Err(ConfigError::key("initial.file", format!("{} does not exist", p.display())));
            }
            InitialKind::CustomFile(p)
        }
        other => return Err(ConfigError::key("initial.kind", format!("unknown kind `{other}`"))),
    };
    let masses = s.list_or("mass", &[1.0])?;
    if masses.is_empty() || masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(ConfigError::key("initial.mass", "masses must be finite and non-negative"));
    }
    let width = s.positive_or("width", 1.0)?;
    let radius = s.positive_or("radius", 1.0)?;
    let shift = s.list_or("shift", &vec![0.0; dim])?;
    if shift.len() != dim {
        return Err(ConfigError::key("initial.shift", format!("needs {dim} components")));
    }
    if kind == InitialKind::Gaussian && shift.iter().any(|v| *v != 0.0) {
        return Err(ConfigError::key("initial.shift", "use kind = shifted_gaussian for off-centre data"));
    }
    Ok(InitialSpec { kind, masses, width, shift, radius })
}

fn parse_grid(s: &Section, dim: usize) -> std::result::Result<GridSpec, ConfigError> {
    match s.str_or("kind", "radial") {
        "radial" => {
            let kind = match s.str_or("spacing", "graded") {
                "graded" => GridKind::Graded,
                "uniform" => GridKind::Uniform,
                other => return Err(ConfigError::key("grid.spacing", format!("unknown spacing `{other}`"))),
            };
            let len = s.usize_or("len", 2048)?;
            if len < 16 {
                return Err(ConfigError::key("grid.len", format!("{len} < 16")));
            }
            let r_max = s.positive_or("r_max", 30.0)?;
            Ok(GridSpec::Radial { kind, len, r_max })
        }
        "cartesian" => {
            if dim != 2 {
                return Err(ConfigError::key("grid.kind", "cartesian grids are planar; set scenario.dim = 2"));
            }
            let n = s.usize_or("n", 256)?;
            if n < 8 || !n.is_power_of_two() {
                return Err(ConfigError::key("grid.n", format!("{n} is not a power of two ≥ 8")));
            }
            let half_width = s.positive_or("half_width", 20.0)?;
            Ok(GridSpec::Cartesian { n, half_width })
        }
        other => Err(ConfigError::key("grid.kind", format!("unknown kind `{other}`"))),
    }
}

fn parse_solver(s: &Section) -> std::result::Result<SolverConfig, ConfigError> {
    let d = SolverConfig::default();
    let scheme = match s.str_or("scheme", "spectral") {
        "spectral" => AdvectionScheme::Spectral,
        "upwind" => AdvectionScheme::Upwind,
        other => return Err(ConfigError::key("solver.scheme", format!("unknown scheme `{other}`"))),
    };
    let cfg = SolverConfig {
        dt_initial: s.f64_or("dt_initial", d.dt_initial)?,
        safety: s.f64_or("safety", d.safety)?,
        t_start: s.f64_or("t_start", d.t_start)?,
        t_end: s.f64_or("t_end", d.t_end)?,
        scheme,
        nonlinear: s.bool_or("nonlinear", d.nonlinear)?,
        clamp_tolerance: s.f64_or("clamp_tolerance", d.clamp_tolerance)?,
        records_per_decade: s.usize_or("records_per_decade", d.records_per_decade)?,
        record_from: s.f64_or("record_from", d.record_from)?,
        dt_max: s.f64_or("dt_max", d.dt_max)?,
        blowup_factor: s.f64_or("blowup_factor", d.blowup_factor)?,
        blowup_sup: None,
        dt_min: s.f64_or("dt_min", d.dt_min)?,
        max_steps: s.usize_or("max_steps", d.max_steps)?,
    };
    cfg.validate().map_err(|e| ConfigError::key("solver", e.to_string()))?;
    Ok(cfg)
}

impl Scenario {
    pub fn radial_grid(&self) -> Result<Arc<RadialGrid>> {
        match self.grid {
            GridSpec::Radial { kind, len, r_max } => Ok(Arc::new(RadialGrid::new(self.dim, kind, len, r_max)?)),
            GridSpec::Cartesian { .. } => Err(PksError::InvalidParameter("recipe needs a radial grid".into())),
        }
    }

    pub fn cartesian_grid(&self) -> Result<Arc<CartesianGrid>> {
        match self.grid {
            GridSpec::Cartesian { n, half_width } => Ok(Arc::new(CartesianGrid::new(n, half_width)?)),
            GridSpec::Radial { .. } => Err(PksError::InvalidParameter("recipe needs a cartesian grid".into())),
        }
    }

    /// Initial data of the given mass on a radial grid.
    pub fn radial_data(&self, grid: &Arc<RadialGrid>, mass: f64) -> Result<RadialField> {
        let spec = &self.initial;
        let zero = RadialField::zeros(grid.clone());
        match &spec.kind {
            InitialKind::Gaussian => Ok(gaussian_like(&zero, mass, spec.width)),
            InitialKind::ShiftedGaussian => {
                Err(PksError::InvalidParameter("shifted data is not radial; use a cartesian grid".into()))
            }
            InitialKind::Disk => {
                let n = grid.dim();
                let vol = sphere_area(n) * spec.radius.powi(n as i32) / n as f64;
                let level = mass / vol;
                let raw = RadialField::from_fn(grid.clone(), |r| if r <= spec.radius { level } else { 0.0 });
                Ok(rescale(raw, mass))
            }
            InitialKind::CustomFile(path) => {
                let (r, u) = read_profile(path)?;
                let raw = RadialField::with_clamp(grid.clone(), grid.nodes().iter().map(|&x| lerp(&r, &u, x)).collect(), 0.0)?;
                Ok(rescale(raw, mass))
            }
        }
    }

    /// Initial data of the given mass on a planar grid.
    pub fn cartesian_data(&self, grid: &Arc<CartesianGrid>, mass: f64) -> Result<CartesianField2D> {
        let spec = &self.initial;
        match &spec.kind {
            InitialKind::Gaussian | InitialKind::ShiftedGaussian => {
                let (sx, sy) = (spec.shift[0], spec.shift[1]);
                let a = spec.width;
                Ok(CartesianField2D::from_fn(grid.clone(), |x, y| {
                    mass / a * gaussian(2, ((x - sx).powi(2) + (y - sy).powi(2)).sqrt() / a.sqrt())
                }))
            }
            InitialKind::Disk => {
                let (sx, sy, r0) = (spec.shift[0], spec.shift[1], spec.radius);
                let raw = CartesianField2D::from_fn(grid.clone(), |x, y| {
                    if (x - sx).powi(2) + (y - sy).powi(2) <= r0 * r0 {
                        1.0
                    } else {
                        0.0
                    }
                });
                Ok(rescale(raw, mass))
            }
            InitialKind::CustomFile(path) => {
                let (r, u) = read_profile(path)?;
                let raw = CartesianField2D::from_fn(grid.clone(), |x, y| lerp(&r, &u, (x * x + y * y).sqrt()).max(0.0));
                Ok(rescale(raw, mass))
            }
        }
    }

    pub fn mass_label(mass: f64) -> String {
        format!("{:.6}pi", mass / PI)
    }
}

fn rescale<D: pks_core::fields::Density>(raw: D, mass: f64) -> D {
    let m = raw.integral();
    if m > 0.0 {
        raw.scaled(mass / m)
    } else {
        raw
    }
}

fn read_profile(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| PksError::InvalidData(format!("{}: {e}", path.display())))?;
    let mut r = Vec::new();
    let mut u = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split(',').map(|c| c.trim().parse::<f64>());
        match (it.next(), it.next()) {
            (Some(Ok(a)), Some(Ok(b))) => {
                r.push(a);
                u.push(b);
            }
            // a header line
            _ if r.is_empty() && k == 0 => continue,
            _ => return Err(PksError::InvalidData(format!("{} line {}: expected r,u", path.display(), k + 1))),
        }
    }
    if r.len() < 2 || r.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PksError::InvalidData(format!("{}: need at least two increasing radii", path.display())));
    }
    Ok((r, u))
}

/// Linear interpolation, zero outside the table on the right, held on the left.
fn lerp(r: &[f64], u: &[f64], x: f64) -> f64 {
    if x <= r[0] {
        return u[0];
    }
    if x >= r[r.len() - 1] {
        return 0.0;
    }
    let k = r.partition_point(|v| *v <= x);
    let t = (x - r[k - 1]) / (r[k] - r[k - 1]);
    u[k - 1] + t * (u[k] - u[k - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use pks_core::fields::Density;

    const MINIMAL: &str = "[scenario]\nname = t\nrecipe = first_order\n[initial]\nkind = shifted_gaussian\nshift = 0.5, 0\n[grid]\nkind = cartesian\nn = 64\nhalf_width = 12\n[check.first_order_exponent]\ntolerance = 0.05\n";

    #[test]
    fn minimal_scenario_parses() {
        let l = parse(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(l.scenario.dim, 2);
        assert_eq!(l.scenario.seed, 1);
        assert_eq!(l.scenario.initial.shift, vec![0.5, 0.0]);
        assert_eq!(l.recipe.name(), "first_order");
    }

    #[test]
    fn errors_name_the_key() {
        let e = parse(&MINIMAL.replace("tolerance = 0.05", "tolerance = 0"), Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("check.first_order_exponent.tolerance"), "{e}");
        let e = parse(&MINIMAL.replace("n = 64", "n = 64\nbogus = 1"), Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("grid.bogus"), "{e}");
        let e = parse(&MINIMAL.replace("[check.first_order_exponent]", "[check.nonsense]"), Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("check.nonsense"), "{e}");
        let e = parse(&MINIMAL.replace("name = t", "name = t\ndim = 7"), Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("scenario.dim"), "{e}");
        let e = parse(&MINIMAL.replace("kind = shifted_gaussian", "kind = custom-file\nfile = nowhere.csv"), Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("initial.file"), "{e}");
    }

    #[test]
    fn initial_data_has_the_requested_mass() {
        let text = "[scenario]\nname = t\nrecipe = rate_n3\ndim = 3\n[initial]\nkind = disk\nradius = 2\n[grid]\nlen = 4096\nr_max = 10\n[check.sup_exponent]\ntolerance = 0.1\n";
        let l = parse(text, Path::new(".")).unwrap();
        let g = l.scenario.radial_grid().unwrap();
        let u = l.scenario.radial_data(&g, 3.0).unwrap();
        assert!((u.integral() - 3.0).abs() < 1e-12);
        assert!((u.at(1.0) - 3.0 / (4.0 / 3.0 * PI * 8.0)).abs() < 1e-3);

        let l = parse(MINIMAL, Path::new(".")).unwrap();
        let cg = l.scenario.cartesian_grid().unwrap();
        let c = l.scenario.cartesian_data(&cg, 2.0).unwrap();
        let m = c.moments().unwrap();
        assert!((m.mass - 2.0).abs() < 1e-10);
        assert!((m.center[0] - 1.0).abs() < 1e-9 && m.center[1].abs() < 1e-12);
    }

    #[test]
    fn custom_profile_is_interpolated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.csv");
        fs::write(&p, "r,u\n0,1\n1,1\n2,0\n").unwrap();
        let text = concat!(
            "[scenario]\nname = t\nrecipe = rate_n3\ndim = 3\n[initial]\nkind = custom-file\nfile = u.csv\nmass = 1\n[grid]\nlen = 1024\nr_max = 4\n[check.sup_exponent]\ntolerance = 0.1\n"
        );
        let l = parse(text, dir.path()).unwrap();
        let g = l.scenario.radial_grid().unwrap();
        let u = l.scenario.radial_data(&g, 1.0).unwrap();
        assert!((u.integral() - 1.0).abs() < 1e-12);
        let ratio = u.at(1.5) / u.at(0.5);
        assert!((ratio - 0.5).abs() < 1e-3, "{ratio}");
    }
}
