//! Incremental builder for conic programs of the form
//!
//! ```text
//! minimise    ½ zᵀ P z + qᵀ z
//! subject to  s = b − A z,  s ∈ K
//! ```
//!
//! solved with Clarabel. Constraints are written as affine expressions that
//! must lie in a cone, which keeps the sign conventions in one place.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine expression `Σ coeff·z[var] + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(i: usize) -> Self {
        Self {
            terms: vec![(i, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, i: usize, c: f64) -> Self {
        if c != 0.0 {
            self.terms.push((i, c));
        }
        self
    }

    pub fn add(&mut self, i: usize, c: f64) {
        if c != 0.0 {
            self.terms.push((i, c));
        }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self.constant *= s;
        self
    }

    pub fn plus(mut self, other: &Affine) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * z[i]).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeKind {
    Zero,
    Nonnegative,
    SecondOrder,
    /// Symmetric PSD matrices of the given side, upper triangle column-major
    /// with off-diagonal entries scaled by √2.
    PsdTriangle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cone {
    pub kind: ConeKind,
    pub dim: usize,
}

impl Cone {
    fn rows(&self) -> usize {
        match self.kind {
            ConeKind::PsdTriangle => self.dim * (self.dim + 1) / 2,
            _ => self.dim,
        }
    }

    fn to_clarabel(self) -> SupportedConeT<f64> {
        match self.kind {
            ConeKind::Zero => SupportedConeT::ZeroConeT(self.dim),
            ConeKind::Nonnegative => SupportedConeT::NonnegativeConeT(self.dim),
            ConeKind::SecondOrder => SupportedConeT::SecondOrderConeT(self.dim),
            ConeKind::PsdTriangle => SupportedConeT::PSDTriangleConeT(self.dim),
        }
    }
}

/// Sparse-triplet form of an assembled program, for solver-agnostic debugging.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripletProgram {
    pub n: usize,
    pub m: usize,
    /// Upper-triangular entries of P as `(row, col, value)`.
    pub p: Vec<(usize, usize, f64)>,
    pub q: Vec<f64>,
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConicStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: ConicStatus,
    /// Solver reached only its reduced accuracy thresholds.
    pub reduced_accuracy: bool,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub r_prim: f64,
    pub r_dual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ConicBuilder {
    n: usize,
    p: Vec<(usize, usize, f64)>,
    q: Vec<f64>,
    a: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    cones: Vec<Cone>,
}

impl ConicBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `count` free variables and returns the index of the first.
    pub fn add_vars(&mut self, count: usize) -> usize {
        let start = self.n;
        self.n += count;
        self.q.resize(self.n, 0.0);
        start
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    /// Adds `v·z_i·z_j` to the objective (`v/2·z_i²` when `i == j`).
    pub fn add_quad(&mut self, i: usize, j: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        self.p.push((r, c, v));
    }

    pub fn add_linear(&mut self, i: usize, v: f64) {
        self.q[i] += v;
    }

    fn push_rows(&mut self, exprs: &[Affine]) {
        for e in exprs {
            let row = self.b.len();
            for &(i, c) in &e.terms {
                debug_assert!(i < self.n, "variable {i} out of range");
                self.a.push((row, i, -c));
            }
            self.b.push(e.constant);
        }
    }

    fn push_cone(&mut self, kind: ConeKind, dim: usize) {
        if dim == 0 {
            return;
        }
        if matches!(kind, ConeKind::Zero | ConeKind::Nonnegative) {
            if let Some(last) = self.cones.last_mut() {
                if last.kind == kind {
                    last.dim += dim;
                    return;
                }
            }
        }
        self.cones.push(Cone { kind, dim });
    }

    /// `e = 0` for every expression.
    pub fn add_zero(&mut self, exprs: &[Affine]) {
        self.push_rows(exprs);
        self.push_cone(ConeKind::Zero, exprs.len());
    }

    /// `e ≥ 0` for every expression.
    pub fn add_nonneg(&mut self, exprs: &[Affine]) {
        self.push_rows(exprs);
        self.push_cone(ConeKind::Nonnegative, exprs.len());
    }

    /// `‖(e_1, …, e_m)‖ ≤ e_0`.
    pub fn add_soc(&mut self, exprs: &[Affine]) {
        assert!(!exprs.is_empty());
        self.push_rows(exprs);
        self.push_cone(ConeKind::SecondOrder, exprs.len());
    }

    /// Symmetric matrix with entries `entry(i, j)` (for `i ≤ j`) is PSD.
    pub fn add_psd<F: FnMut(usize, usize) -> Affine>(&mut self, side: usize, mut entry: F) {
        let mut exprs = Vec::with_capacity(side * (side + 1) / 2);
        for j in 0..side {
            for i in 0..=j {
                let e = entry(i, j);
                exprs.push(if i == j { e } else { e.scaled(std::f64::consts::SQRT_2) });
            }
        }
        self.push_rows(&exprs);
        self.cones.push(Cone {
            kind: ConeKind::PsdTriangle,
            dim: side,
        });
    }

    pub fn to_triplets(&self) -> TripletProgram {
        TripletProgram {
            n: self.n,
            m: self.b.len(),
            p: self.p.clone(),
            q: self.q.clone(),
            a: self.a.clone(),
            b: self.b.clone(),
            cones: self.cones.clone(),
        }
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<ConicSolution> {
        let prog = self.to_triplets();
        solve_triplets(&prog, opts)
    }
}

fn csc(m: usize, n: usize, t: &[(usize, usize, f64)]) -> CscMatrix<f64> {
    let (i, (j, v)): (Vec<usize>, (Vec<usize>, Vec<f64>)) =
        t.iter().map(|&(r, c, v)| (r, (c, v))).unzip();
    CscMatrix::new_from_triplets(m, n, i, j, v)
}

pub fn solve_triplets(prog: &TripletProgram, opts: &SolverOptions) -> Result<ConicSolution> {
    debug_assert_eq!(prog.cones.iter().map(Cone::rows).sum::<usize>(), prog.m);
    let p = csc(prog.n, prog.n, &prog.p);
    let a = csc(prog.m, prog.n, &prog.a);
    let cones: Vec<_> = prog.cones.iter().map(|c| c.to_clarabel()).collect();
    let settings = DefaultSettingsBuilder::default()
        .verbose(std::env::var_os("SDDPC_SOLVER_VERBOSE").is_some())
        .max_iter(opts.max_iter)
        .tol_gap_abs(opts.tol)
        .tol_gap_rel(opts.tol)
        .tol_feas(opts.tol)
        .presolve_enable(false)
        .build()
        .map_err(|e| Error::Numerical(format!("solver settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&p, &prog.q, &a, &prog.b, &cones, settings)
        .map_err(|e| Error::Numerical(format!("solver setup: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let (status, reduced) = match sol.status {
        SolverStatus::Solved => (ConicStatus::Optimal, false),
        SolverStatus::AlmostSolved => (ConicStatus::Optimal, true),
        SolverStatus::PrimalInfeasible => (ConicStatus::Infeasible, false),
        SolverStatus::AlmostPrimalInfeasible => (ConicStatus::Infeasible, true),
        other => {
            log::debug!("solver status {other:?}");
            (ConicStatus::NumericalFailure, false)
        }
    };
    Ok(ConicSolution {
        status,
        reduced_accuracy: reduced,
        x: sol.x.clone(),
        objective: sol.obj_val,
        iterations: sol.iterations,
        r_prim: sol.r_prim,
        r_dual: sol.r_dual,
    })
}
