use super::GridPath;
use crate::error::{invalid, Result};

/// Successive δ-oscillation stopping times of a scalar coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Oscillation {
    /// `N_{δ,T} = sup{k : τ_k < T}`.
    pub count: usize,
    /// `τ_1, τ_2, …` (τ_0 = t0 is implicit). May end with a time equal to `T`.
    pub stop_times: Vec<f64>,
}

/// Stopping times `τ_{k+1} = inf{t ≥ τ_k : sup_{s∈[τ_k,t]} |x(t) − x(s)| = δ}`
/// of the piecewise-linear interpolation of one coordinate.
///
/// Crossings inside a grid step are located by linear inversion. A crossing
/// within relative `1e-12` of δ at a node is snapped to that node.
pub fn oscillation_count(path: &GridPath, component: usize, delta: f64) -> Result<Oscillation> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid(format!("oscillation level must be > 0 (got {delta})")));
    }
    if component >= path.dim() {
        return Err(invalid(format!("component {component} out of range for dimension {}", path.dim())));
    }
    let xs = path.component_values(component);
    let horizon = path.horizon();
    let snap = delta * 1e-12;
    let mut stop_times = Vec::new();

    // state of the current epoch: start value's running range
    let mut lo = xs[0];
    let mut hi = xs[0];
    // current position inside step i: fraction `frac` of the way from node i to i+1
    let mut i = 0;
    let mut frac = 0.0;
    while i + 1 < xs.len() {
        let a = xs[i];
        let b = xs[i + 1];
        let slope = b - a;
        let start = a + frac * slope;
        lo = lo.min(start);
        hi = hi.max(start);
        // the moving end can only widen the range on the side it travels toward
        let target = if slope > 0.0 {
            Some(lo + delta)
        } else if slope < 0.0 {
            Some(hi - delta)
        } else {
            None
        };
        let crossing = match target {
            Some(level) if (slope > 0.0 && b >= level - snap) || (slope < 0.0 && b <= level + snap) => {
                let f = ((level - a) / slope).clamp(frac, 1.0);
                Some(if (slope > 0.0 && b <= level + snap) || (slope < 0.0 && b >= level - snap) { 1.0 } else { f })
            }
            _ => None,
        };
        match crossing {
            Some(f) => {
                let t = if f >= 1.0 { path.time(i + 1) } else { path.time(i) + f * path.dt() };
                stop_times.push(t);
                let x = if f >= 1.0 { b } else { a + f * slope };
                lo = x;
                hi = x;
                if f >= 1.0 {
                    i += 1;
                    frac = 0.0;
                } else {
                    frac = f;
                }
            }
            None => {
                lo = lo.min(b);
                hi = hi.max(b);
                i += 1;
                frac = 0.0;
            }
        }
    }
    let count = stop_times.iter().filter(|&&t| t < horizon).count();
    Ok(Oscillation { count, stop_times })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_path_crosses_each_unit() {
        let p = GridPath::from_scalar(0.0, 1.0, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let osc = oscillation_count(&p, 0, 1.0).unwrap();
        assert_eq!(osc.count, 2);
        assert_eq!(osc.stop_times, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn crossing_inside_a_step_is_interpolated() {
        let p = GridPath::from_scalar(0.0, 1.0, vec![0.0, 3.0]).unwrap();
        let osc = oscillation_count(&p, 0, 1.0).unwrap();
        assert_eq!(osc.stop_times.len(), 3);
        for (k, t) in osc.stop_times.iter().enumerate() {
            assert!((t - (k as f64 + 1.0) / 3.0).abs() < 1e-15);
        }
        assert_eq!(osc.count, 2);
    }

    #[test]
    fn constant_path_never_stops() {
        let p = GridPath::constant(0.0, 0.1, 11, &[4.0]).unwrap();
        let osc = oscillation_count(&p, 0, 1.0).unwrap();
        assert_eq!(osc.count, 0);
        assert!(osc.stop_times.is_empty());
    }

    #[test]
    fn full_cosine_swing() {
        let p = GridPath::from_fn(0.0, 1.0, 1024, |t| 2.0 * (2.0 * std::f64::consts::PI * t).cos()).unwrap();
        let osc = oscillation_count(&p, 0, 4.0).unwrap();
        assert_eq!(osc.count, 1);
        assert_eq!(osc.stop_times[0], 0.5);
    }

    #[test]
    fn range_counts_both_directions() {
        // down 0.6 then up 1.0: the range reaches 1 when x climbs back to 0.4
        let p = GridPath::from_scalar(0.0, 1.0, vec![0.0, -0.6, 0.4, 0.4]).unwrap();
        let osc = oscillation_count(&p, 0, 1.0).unwrap();
        assert_eq!(osc.stop_times, vec![2.0]);
        assert_eq!(osc.count, 1);
    }

    #[test]
    fn rejects_bad_level() {
        let p = GridPath::constant(0.0, 0.1, 3, &[0.0]).unwrap();
        assert!(oscillation_count(&p, 0, 0.0).is_err());
        assert!(oscillation_count(&p, 1, 1.0).is_err());
    }
}
