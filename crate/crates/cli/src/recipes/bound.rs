use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pks_core::fields::{Density, Field, GridKind, RadialField, RadialGrid};
use pks_core::potential::sup_gradient_bound_check;
use pks_core::Result;

use super::{nan_max, positive, Outcome, Recipe};
use crate::checks::{CheckDef, Rule};
use crate::config::{ConfigError, Section};
use crate::scenario::Scenario;

const CHECKS: &[CheckDef] = &[
    CheckDef::new("disk_lhs", Rule::Relative, 0.5, "sup|∇E₂∗1_B| for the unit disk"),
    CheckDef::new("disk_rhs", Rule::Relative, 1.772_453_850_905_516, "‖1_B‖₁^{1/2}‖1_B‖∞^{1/2} = π^{1/2}"),
    CheckDef::new("sweep_ratio_max", Rule::AtMost, 0.0, "largest bound ratio over the random sweep"),
    CheckDef::new("amplitude_invariance", Rule::AtMost, 0.0, "largest relative change of the ratio under u → λu"),
];

const AMPLITUDES: [f64; 3] = [1e-3, 7.0, 1e4];

pub struct Bound {
    fields: usize,
    dims: Vec<usize>,
    len: usize,
    r_max: f64,
    disk_len: usize,
}

impl Bound {
    pub fn parse(_: &Scenario, p: &Section) -> std::result::Result<Self, ConfigError> {
        let dims = p.list_or("dims", &[2.0, 3.0, 4.0])?;
        if dims.is_empty() || dims.iter().any(|d| !(2.0..=5.0).contains(d) || d.fract() != 0.0) {
            return Err(ConfigError::key("params.dims", "dimensions must be integers in 2..=5"));
        }
        let fields = p.usize_or("fields", 50)?;
        if fields == 0 {
            return Err(ConfigError::key("params.fields", "at least one field"));
        }
        Ok(Bound {
            fields,
            dims: dims.into_iter().map(|d| d as usize).collect(),
            len: p.usize_or("len", 2048)?,
            r_max: positive(p, "r_max", 12.0)?,
            disk_len: p.usize_or("disk_len", 200_001)?,
        })
    }
}

/// A sum of one to four radial bumps a·e^{−(r−c)²/w²}.
fn random_field(grid: &Arc<RadialGrid>, rng: &mut ChaCha8Rng) -> RadialField {
    let k = rng.gen_range(1..=4);
    let bumps: Vec<(f64, f64, f64)> =
        (0..k).map(|_| (rng.gen_range(0.1..2.0), rng.gen_range(0.0..3.0), rng.gen_range(0.2..1.5))).collect();
    RadialField::from_fn(grid.clone(), |r| bumps.iter().map(|(a, c, w)| a * (-((r - c) / w).powi(2)).exp()).sum())
}

impl Recipe for Bound {
    fn name(&self) -> &'static str {
        "potential_bound"
    }

    fn checks(&self) -> &'static [CheckDef] {
        CHECKS
    }

    fn run(&self, sc: &Scenario) -> Result<Outcome> {
        let mut out = Outcome::default();
        // a uniform grid with a node on r = 1, where the indicator takes the midpoint value
        let dg = Arc::new(RadialGrid::new(2, GridKind::Uniform, self.disk_len, 2.0)?);
        let disk = RadialField::from_fn(dg, |r| {
            if (r - 1.0).abs() < 1e-12 {
                0.5
            } else if r < 1.0 {
                1.0
            } else {
                0.0
            }
        });
        let d = sup_gradient_bound_check(&Field::Radial(disk))?;
        out.note(format!("unit disk: lhs {:.8}, rhs {:.8}, ratio {:.8}", d.lhs, d.rhs_core, d.ratio));

        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
        let grids = self
            .dims
            .iter()
            .map(|&n| RadialGrid::new(n, GridKind::Graded, self.len, self.r_max).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        let mut worst: f64 = 0.0;
        let mut drift: f64 = 0.0;
        for k in 0..self.fields {
            let grid = &grids[k % grids.len()];
            let u = random_field(grid, &mut rng);
            let b = sup_gradient_bound_check(&Field::Radial(u.clone()))?;
            worst = nan_max(worst, b.ratio);
            for lambda in AMPLITUDES {
                let s = sup_gradient_bound_check(&Field::Radial(u.scaled(lambda)))?;
                drift = nan_max(drift, ((s.ratio - b.ratio) / b.ratio).abs());
            }
            out.table("bound_sweep", &["field", "dim", "lhs", "rhs_core", "ratio"]).push_values(&[
                k as f64,
                grid.dim() as f64,
                b.lhs,
                b.rhs_core,
                b.ratio,
            ]);
        }
        out.note(format!("{} random fields: largest ratio {worst:.4}, amplitude drift {drift:.2e}", self.fields));
        out.measure("disk_lhs", d.lhs);
        out.measure("disk_rhs", d.rhs_core);
        out.measure("sweep_ratio_max", worst);
        out.measure("amplitude_invariance", drift);
        Ok(out)
    }
}
