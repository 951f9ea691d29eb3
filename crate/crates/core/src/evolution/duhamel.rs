use crate::error::{PksError, Result};

use super::{Trajectory, Transport, Variables};

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
];

/// Minimum number of records for the time quadrature.
pub const MIN_RECORDS: usize = 64;

/// Mild-solution check at the final record, nonlinear history included.
pub fn duhamel_residual<D: Transport>(traj: &Trajectory<D>, sample_points: &[usize]) -> Result<f64> {
    let last = traj.records.len().saturating_sub(1);
    duhamel_residual_at(traj, sample_points, last, true)
}

/// max |u(x,t_k) − Γ_{t_k−t₀}∗u₀(x) − ∫ Γ_{t_k−s}∗(−∇·(u∇V))(x,s) ds| / ‖u(t_k)‖_∞
/// over the sample indices. On each interval between records the rate
/// −∇·(u∇V) is the cubic through the four nearest records, and the integral
/// is four-point Gauss. `include_nonlinear = false` drops the integral.
pub fn duhamel_residual_at<D: Transport>(
    traj: &Trajectory<D>,
    sample_points: &[usize],
    record: usize,
    include_nonlinear: bool,
) -> Result<f64> {
    if traj.variables != Variables::Physical {
        return Err(PksError::InvalidParameter("Duhamel check needs a physical-variables trajectory".into()));
    }
    if traj.records.len() < MIN_RECORDS {
        return Err(PksError::InsufficientSampling(format!(
            "{} records, at least {MIN_RECORDS} needed",
            traj.records.len()
        )));
    }
    if record >= traj.records.len() || record == 0 {
        return Err(PksError::OutOfRange(format!("record index {record}")));
    }
    let recs = &traj.records[..=record];
    let tk = recs[record].t;
    let u = &recs[record].field;
    if let Some(&p) = sample_points.iter().find(|&&p| p >= u.values().len()) {
        return Err(PksError::OutOfRange(format!("sample index {p}")));
    }
    let flow = |f: &D, dt: f64| if dt > 0.0 { f.propagate(dt, 1.0) } else { f.clone() };
    let mut rhs: Vec<f64> = sample_points.iter().map(|&p| flow(&recs[0].field, tk - recs[0].t).values()[p]).collect();
    if include_nonlinear && traj.config.nonlinear {
        // the rate varies slowly in s, the kernel Γ_{t_k−s} does not: interpolate
        // the rate between records and propagate exactly at Gauss nodes
        let ts: Vec<f64> = recs.iter().map(|r| r.t).collect();
        let rates = recs
            .iter()
            .map(|r| r.field.advection(1.0, traj.config.scheme).map(|(v, _)| v))
            .collect::<Result<Vec<_>>>()?;
        let len = rates[0].len();
        for i in 0..ts.len() - 1 {
            let (a, b) = (ts[i], ts[i + 1]);
            let h = b - a;
            let lo = i.saturating_sub(1).min(ts.len().saturating_sub(4));
            let hi = (lo + 4).min(ts.len());
            for (x, w) in GAUSS4 {
                let s = 0.5 * (a + b) + 0.5 * h * x;
                let mut n = vec![0.0; len];
                for j in lo..hi {
                    let mut l = 1.0;
                    for m in lo..hi {
                        if m != j {
                            l *= (s - ts[m]) / (ts[j] - ts[m]);
                        }
                    }
                    for (nv, rv) in n.iter_mut().zip(&rates[j]) {
                        *nv += l * rv;
                    }
                }
                let g = flow(&u.with_values(n), tk - s);
                for (x, &p) in rhs.iter_mut().zip(sample_points) {
                    *x += 0.5 * h * w * g.values()[p];
                }
            }
        }
    }
    let sup = u.sup_norm();
    if sup == 0.0 {
        return Ok(rhs.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    Ok(sample_points.iter().zip(&rhs).map(|(&p, x)| (u.values()[p] - x).abs() / sup).fold(0.0, f64::max))
}

