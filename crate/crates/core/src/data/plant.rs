use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::pce::DisturbanceModel;

/// Linear plant `x+ = A x + B u + w` with i.i.d. disturbances. Only the
/// simulator reads `A` and `B`.
#[derive(Clone, Debug, PartialEq)]
pub struct Plant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    disturbance: DisturbanceModel,
}

/// Simulated trajectory; columns are time steps.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub x: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

impl Plant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, disturbance: DisturbanceModel) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n || b.nrows() != n || b.ncols() == 0 {
            return Err(Error::dim(format!("A {:?}, B {:?}", a.shape(), b.shape())));
        }
        if disturbance.dim() != n {
            return Err(Error::dim(format!(
                "disturbance dimension {} for {n} states",
                disturbance.dim()
            )));
        }
        Ok(Self { a, b, disturbance })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn disturbance(&self) -> &DisturbanceModel {
        &self.disturbance
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + w
    }

    /// Open-loop simulation under the given inputs (columns of `u`).
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        u: &DMatrix<f64>,
        x0: &DVector<f64>,
        rng: &mut R,
    ) -> Result<Trajectory> {
        if u.nrows() != self.nu() || x0.len() != self.nx() {
            return Err(Error::dim(format!(
                "inputs {:?}, x0 of length {}",
                u.shape(),
                x0.len()
            )));
        }
        self.simulate_with(u.ncols(), x0, rng, |k, _| u.column(k).into_owned())
    }

    /// Simulation under an arbitrary policy `u_k = policy(k, x_k)`.
    pub fn simulate_with<R, F>(
        &self,
        steps: usize,
        x0: &DVector<f64>,
        rng: &mut R,
        mut policy: F,
    ) -> Result<Trajectory>
    where
        R: Rng + ?Sized,
        F: FnMut(usize, &DVector<f64>) -> DVector<f64>,
    {
        let (nx, nu) = (self.nx(), self.nu());
        let mut x = DMatrix::zeros(nx, steps + 1);
        let mut u = DMatrix::zeros(nu, steps);
        let mut w = DMatrix::zeros(nx, steps);
        x.set_column(0, x0);
        for k in 0..steps {
            let xk = x.column(k).into_owned();
            let uk = policy(k, &xk);
            if uk.len() != nu {
                return Err(Error::dim(format!("policy returned {} inputs", uk.len())));
            }
            let wk = self.disturbance.sample(rng);
            x.set_column(k + 1, &self.step(&xk, &uk, &wk));
            u.set_column(k, &uk);
            w.set_column(k, &wk);
        }
        Ok(Trajectory { x, u, w })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(a: f64, sd: f64) -> Plant {
        Plant::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, 1.0),
            DisturbanceModel::gaussian_diag(&[sd]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_everything_stays_zero() {
        let p = scalar(2.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = p
            .simulate(&DMatrix::zeros(1, 5), &DVector::zeros(1), &mut rng)
            .unwrap();
        assert!(t.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn doubling() {
        let p = scalar(2.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = p
            .simulate(&DMatrix::zeros(1, 6), &DVector::from_element(1, 1.0), &mut rng)
            .unwrap();
        for k in 0..=6 {
            assert_eq!(t.x[(0, k)], 2f64.powi(k as i32));
        }
    }

    #[test]
    fn disturbance_sample_covariance() {
        let p = scalar(0.0, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let t = p
            .simulate(&DMatrix::zeros(1, n), &DVector::zeros(1), &mut rng)
            .unwrap();
        let var = t.w.iter().map(|v| v * v).sum::<f64>() / n as f64;
        assert!((var / 0.01 - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn dimension_errors() {
        assert!(Plant::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            DisturbanceModel::gaussian_diag(&[1.0]).unwrap()
        )
        .is_err());
    }
}
