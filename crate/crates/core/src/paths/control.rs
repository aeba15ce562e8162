use super::variation::best_partition_sums_from;
use super::{GridPath, IncrementNorm};
use crate::error::{invalid, Result};

/// A two-parameter map `ω(i, j)` on grid index pairs `i ≤ j`, stored densely.
///
/// Controls built from paths are superadditive by construction:
/// `ω(i,k) + ω(k,j) ≤ ω(i,j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    n: usize,
    table: Vec<f64>,
}

impl Control {
    /// `ω(i,j) = ‖X‖^q_{q-var,[t_i,t_j]}`. Costs O(n³); meant for modest grids.
    pub fn from_path(path: &GridPath, q: f64, norm: IncrementNorm) -> Result<Self> {
        if !(q >= 1.0 && q.is_finite()) {
            return Err(invalid(format!("control exponent must be >= 1 (got {q})")));
        }
        let n = path.len();
        let mut table = vec![0.0; n * n];
        for i in 0..n {
            let sums = best_partition_sums_from(path, i, q, norm);
            table[i * n + i..(i + 1) * n].copy_from_slice(&sums);
        }
        Ok(Self { n, table })
    }

    /// Tabulates an arbitrary two-parameter function. Superadditivity is not checked.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut table = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                table[i * n + j] = f(i, j);
            }
        }
        Self { n, table }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn eval(&self, i: usize, j: usize) -> f64 {
        assert!(i <= j && j < self.n, "control evaluated outside its grid");
        self.table[i * self.n + j]
    }

    /// Largest violation `ω(i,k) + ω(k,j) - ω(i,j)` over all triples (≤ 0 for a control).
    pub fn superadditivity_defect(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..self.n {
            for j in i..self.n {
                for k in i..=j {
                    worst = worst.max(self.eval(i, k) + self.eval(k, j) - self.eval(i, j));
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_path_gives_zero_control() {
        let p = GridPath::constant(0.0, 0.1, 6, &[1.5]).unwrap();
        let c = Control::from_path(&p, 2.0, IncrementNorm::Euclidean).unwrap();
        for i in 0..6 {
            for j in i..6 {
                assert_eq!(c.eval(i, j), 0.0);
            }
        }
    }

    #[test]
    fn linear_path_with_q_one_is_additive() {
        let p = GridPath::from_fn(0.0, 1.0, 8, |t| t).unwrap();
        let c = Control::from_path(&p, 1.0, IncrementNorm::Euclidean).unwrap();
        for i in 0..9 {
            assert_eq!(c.eval(i, i), 0.0);
            for j in i..9 {
                assert_relative_eq!(c.eval(i, j), p.time(j) - p.time(i), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn agrees_with_windowed_p_variation() {
        let p = GridPath::from_scalar(0.0, 1.0, vec![0.0, 1.2, -0.3, 0.4, 2.0, 1.1]).unwrap();
        let c = Control::from_path(&p, 1.5, IncrementNorm::Euclidean).unwrap();
        for i in 0..6 {
            for j in i..6 {
                let v = super::super::p_variation_power(&p, 1.5, (i, j), IncrementNorm::Euclidean).unwrap();
                assert_relative_eq!(c.eval(i, j), v, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rejects_sub_unit_exponent() {
        let p = GridPath::from_fn(0.0, 1.0, 4, |t| t).unwrap();
        assert!(Control::from_path(&p, 0.9, IncrementNorm::Euclidean).is_err());
    }
}
