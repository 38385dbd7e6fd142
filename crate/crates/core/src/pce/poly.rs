use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

/// Univariate orthogonal polynomial family together with its germ measure.
///
/// Hermite polynomials are the probabilists' convention, orthogonal under the
/// standard normal density. Legendre polynomials are orthogonal under the
/// uniform probability measure on `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolyFamily {
    Constant,
    Hermite,
    Legendre,
}

impl PolyFamily {
    /// Evaluates the degree-`degree` member of the family at `xi`.
    pub fn eval(self, degree: u32, xi: f64) -> f64 {
        match self {
            PolyFamily::Constant => 1.0,
            PolyFamily::Hermite => {
                let (mut prev, mut cur) = (1.0, xi);
                if degree == 0 {
                    return prev;
                }
                for n in 1..degree {
                    let next = xi * cur - f64::from(n) * prev;
                    prev = cur;
                    cur = next;
                }
                cur
            }
            PolyFamily::Legendre => {
                let (mut prev, mut cur) = (1.0, xi);
                if degree == 0 {
                    return prev;
                }
                for n in 1..degree {
                    let n = f64::from(n);
                    let next = ((2.0 * n + 1.0) * xi * cur - n * prev) / (n + 1.0);
                    prev = cur;
                    cur = next;
                }
                cur
            }
        }
    }

    /// `<phi_d, phi_d>` under the family's germ measure.
    pub fn norm(self, degree: u32) -> f64 {
        match self {
            PolyFamily::Constant => 1.0,
            PolyFamily::Hermite => (1..=degree).map(f64::from).product(),
            PolyFamily::Legendre => 1.0 / (2.0 * f64::from(degree) + 1.0),
        }
    }

    /// Draws one germ realisation from the family's measure.
    pub fn sample_germ<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            PolyFamily::Constant => 0.0,
            PolyFamily::Hermite => StandardNormal.sample(rng),
            PolyFamily::Legendre => Uniform::new_inclusive(-1.0, 1.0)
                .expect("valid bounds")
                .sample(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hermite_low_degrees() {
        let x = 0.7;
        assert_eq!(PolyFamily::Hermite.eval(0, x), 1.0);
        assert_eq!(PolyFamily::Hermite.eval(1, x), x);
        assert_relative_eq!(PolyFamily::Hermite.eval(2, x), x * x - 1.0, epsilon = 1e-15);
        assert_relative_eq!(
            PolyFamily::Hermite.eval(3, x),
            x * x * x - 3.0 * x,
            epsilon = 1e-15
        );
    }

    #[test]
    fn legendre_low_degrees() {
        let x = -0.3;
        assert_relative_eq!(
            PolyFamily::Legendre.eval(2, x),
            0.5 * (3.0 * x * x - 1.0),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            PolyFamily::Legendre.eval(3, x),
            0.5 * (5.0 * x * x * x - 3.0 * x),
            epsilon = 1e-15
        );
        assert_eq!(PolyFamily::Legendre.eval(2, 1.0), 1.0);
    }

    #[test]
    fn norms() {
        assert_eq!(PolyFamily::Hermite.norm(1), 1.0);
        assert_eq!(PolyFamily::Hermite.norm(4), 24.0);
        assert_relative_eq!(PolyFamily::Legendre.norm(1), 1.0 / 3.0);
        assert_relative_eq!(PolyFamily::Legendre.norm(2), 0.2);
        assert_eq!(PolyFamily::Constant.norm(0), 1.0);
    }
}
