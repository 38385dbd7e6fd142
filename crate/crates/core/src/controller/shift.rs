use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ocp::evaluate_cost;
use crate::pce::{DisturbanceModel, PceBasis, PceVector, Tag};
use crate::terminal::TerminalIngredients;

/// Shifted trajectory in the grown basis, feasible for the next problem with
/// the backup initial condition.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub basis: PceBasis,
    pub x: Vec<PceVector>,
    pub u: Vec<PceVector>,
    /// Cost of the candidate, `J̃`.
    pub cost: f64,
}

/// Drops the first step of an optimal trajectory, closes the horizon with the
/// terminal feedback and appends the block of the disturbance tagged `new_tag`.
#[allow(clippy::too_many_arguments)]
pub fn shift_candidate(
    x: &[PceVector],
    u: &[PceVector],
    basis: &PceBasis,
    terminal: &TerminalIngredients,
    disturbance: &DisturbanceModel,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    new_tag: Tag,
) -> Result<Candidate> {
    let n = u.len();
    if n == 0 || x.len() != n + 1 {
        return Err(Error::dim("trajectory must have N + 1 states and N ≥ 1 inputs"));
    }
    let grown = basis.grow(new_tag)?;
    let l = grown.len();
    let xn = x[n].coeffs();
    let mut xs: Vec<PceVector> = x[1..].iter().map(|z| z.padded(l)).collect();
    let terminal_state =
        PceVector::new(&terminal.mh * xn).padded(l).into_inner() + disturbance.placed(&grown, new_tag)?.coeffs();
    xs.push(PceVector::new(terminal_state));
    let mut us: Vec<PceVector> = u[1..].iter().map(|z| z.padded(l)).collect();
    us.push(PceVector::new(&terminal.k * xn).padded(l));
    let cost = evaluate_cost(&xs, &us, &grown, q, r, &terminal.p)?;
    Ok(Candidate {
        basis: grown,
        x: xs,
        u: us,
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_terminal() -> TerminalIngredients {
        let one = DMatrix::from_element(1, 1, 1.0);
        TerminalIngredients::model_based(
            &DMatrix::from_element(1, 1, 2.0),
            &one,
            &one,
            &one,
            &DMatrix::from_element(1, 1, 0.01),
        )
        .unwrap()
    }

    #[test]
    fn zero_solution_gives_disturbance_only_candidate() {
        let w = DisturbanceModel::gaussian_diag(&[0.1]).unwrap();
        let basis = PceBasis::fresh(w.template().to_vec(), 3, 0).unwrap();
        let l = basis.len();
        let x = vec![PceVector::zeros(1, l); 4];
        let u = vec![PceVector::zeros(1, l); 3];
        let t = scalar_terminal();
        let one = DMatrix::from_element(1, 1, 1.0);
        let c = shift_candidate(&x, &u, &basis, &t, &w, &one, &one, 3).unwrap();
        assert_eq!(c.basis.len(), l + 1);
        assert_eq!(c.basis.lx(), 2);
        assert!(c.u.iter().all(|z| z.coeffs().amax() == 0.0));
        assert_eq!(c.x[3].coeffs()[(0, l)], 0.1);
        // Only the appended disturbance contributes: ½·P·0.1².
        assert_relative_eq!(c.cost, 0.5 * t.p[(0, 0)] * 0.01, epsilon = 1e-14);
    }

    #[test]
    fn zero_disturbance_zero_solution_costs_nothing() {
        let w = DisturbanceModel::gaussian_diag(&[0.0]).unwrap();
        let basis = PceBasis::fresh(w.template().to_vec(), 2, 0).unwrap();
        let l = basis.len();
        let one = DMatrix::from_element(1, 1, 1.0);
        let c = shift_candidate(
            &vec![PceVector::zeros(1, l); 3],
            &vec![PceVector::zeros(1, l); 2],
            &basis,
            &scalar_terminal(),
            &w,
            &one,
            &one,
            2,
        )
        .unwrap();
        assert_eq!(c.cost, 0.0);
        assert!(c.x.iter().all(|z| z.coeffs().amax() == 0.0));
    }
}
