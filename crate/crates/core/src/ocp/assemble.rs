use nalgebra::DMatrix;
use serde::Serialize;

use super::cost::evaluate_cost;
use super::{CovarianceMode, OcpProblem, OcpSolution, OcpStatus, Representation};
use crate::conic::{Affine, ConicBuilder, ConicStatus, TripletProgram};
use crate::error::{Error, Result};
use crate::pce::PceVector;

/// Decision-variable counts of an assembled problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct VariableCounts {
    pub x_free: usize,
    /// State coefficients that are structurally zero and eliminated.
    pub x_pinned: usize,
    pub u_free: usize,
    /// Input coefficients fixed to zero by causality and eliminated.
    pub u_pinned: usize,
    pub g: usize,
    pub c: usize,
    /// Epigraph and lifting variables.
    pub aux: usize,
}

/// Variable indices of the assembled program.
pub(crate) struct Layout {
    nx: usize,
    nu: usize,
    n: usize,
    x: Vec<Vec<Option<usize>>>,
    u: Vec<Vec<Option<usize>>>,
    lx: usize,
    cp: usize,
    cm: usize,
    g: Option<(usize, usize)>,
}

impl Layout {
    fn x(&self, j: usize, i: usize, r: usize) -> Option<usize> {
        self.x[j][i].map(|b| b + r)
    }

    fn u(&self, j: usize, i: usize, s: usize) -> Option<usize> {
        self.u[j][i].map(|b| b + s)
    }

    fn cp(&self, j: usize, r: usize) -> Option<usize> {
        (j < self.lx).then(|| self.cp + j * self.nx + r)
    }

    fn cm(&self, j: usize, r: usize) -> Option<usize> {
        (j < self.lx).then(|| self.cm + j * self.nx + r)
    }
}

/// Weight of `½‖g‖²`, selecting the least-norm multiplier among those
/// producing the same trajectory.
pub const G_REGULARIZATION: f64 = 1e-10;

/// Sums repeated variables of an expression.
fn merged(mut e: Affine) -> Affine {
    e.terms.sort_by_key(|t| t.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(e.terms.len());
    for (i, c) in e.terms {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += c,
            _ => out.push((i, c)),
        }
    }
    e.terms = out;
    e
}

fn sym_index(base: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    base + b * (b + 1) / 2 + a
}

impl OcpProblem<'_> {
    /// Whether coefficient `j` of the input (or state) at step `i` may be
    /// nonzero; the rest depend on disturbances not yet realised.
    pub fn input_is_free(&self, j: usize, i: usize) -> bool {
        j < self.basis.lx() + i * (self.basis.lw() - 1)
    }

    pub fn state_is_free(&self, j: usize, i: usize) -> bool {
        self.input_is_free(j, i)
    }

    /// Chance constraint at the initial step, which involves only data.
    pub fn initial_chance_ok(&self) -> bool {
        let c = self.init.coeffs();
        let norms = self.basis.norms();
        self.config.x_box.active().all(|(r, lo, hi)| {
            let sd = (1..self.basis.len())
                .map(|j| norms[j] * c[(r, j)] * c[(r, j)])
                .sum::<f64>()
                .sqrt();
            let m = c[(r, 0)];
            m + self.config.sigma_x * sd <= hi && m - self.config.sigma_x * sd >= lo
        })
    }

    pub fn variable_counts(&self) -> VariableCounts {
        let mut b = ConicBuilder::new();
        let lay = self.layout(&mut b);
        let (n, l) = (self.config.horizon, self.basis.len());
        let u_free: usize = lay.u.iter().flatten().filter(|u| u.is_some()).count() * self.nu();
        let x_free: usize = lay.x.iter().flatten().filter(|x| x.is_some()).count() * self.nx();
        let g = lay.g.map_or(0, |(_, cols)| cols * l);
        let base = b.num_vars();
        let _ = self.assemble_into(&mut b, &lay);
        VariableCounts {
            x_free,
            x_pinned: (n + 1) * self.nx() * l - x_free,
            u_free,
            u_pinned: n * self.nu() * l - u_free,
            g,
            c: self.nx() * lay.lx,
            aux: b.num_vars() - base,
        }
    }

    fn layout(&self, b: &mut ConicBuilder) -> Layout {
        let (nx, nu, n, l) = (self.nx(), self.nu(), self.config.horizon, self.basis.len());
        // Each Hankel row keeps its own state variable so the equalities stay
        // linearly independent; causality of those states follows from `g`.
        let hankel = matches!(self.repr, Representation::Hankel(_));
        let x = (0..l)
            .map(|j| {
                (0..=n)
                    .map(|i| (hankel || self.state_is_free(j, i)).then(|| b.add_vars(nx)))
                    .collect()
            })
            .collect();
        let u = (0..l)
            .map(|j| {
                (0..n)
                    .map(|i| self.input_is_free(j, i).then(|| b.add_vars(nu)))
                    .collect()
            })
            .collect();
        let lx = self.basis.lx();
        let cp = b.add_vars(nx * lx);
        let cm = b.add_vars(nx * lx);
        let g = match self.repr {
            Representation::Hankel(p) => {
                let cols = p.stack.cols();
                Some((b.add_vars(cols * l), cols))
            }
            _ => None,
        };
        Layout {
            nx,
            nu,
            n,
            x,
            u,
            lx,
            cp,
            cm,
            g,
        }
    }

    /// Assembled conic program in sparse-triplet form.
    pub fn to_triplets(&self) -> Result<TripletProgram> {
        let mut b = ConicBuilder::new();
        let lay = self.layout(&mut b);
        self.assemble_into(&mut b, &lay)?;
        Ok(b.to_triplets())
    }

    fn assemble_into(&self, b: &mut ConicBuilder, lay: &Layout) -> Result<()> {
        let cfg = self.config;
        let (nx, nu, n) = (lay.nx, lay.nu, lay.n);
        let l = self.basis.len();
        let norms = self.basis.norms();
        let dist = self.disturbance_blocks()?;
        let xbar = self.init.coeffs();

        // Objective.
        let quad = |b: &mut ConicBuilder, idx: &dyn Fn(usize) -> Option<usize>, w: &DMatrix<f64>, s: f64| {
            for r in 0..w.nrows() {
                let Some(vr) = idx(r) else { continue };
                b.add_quad(vr, vr, s * w[(r, r)]);
                for c in r + 1..w.ncols() {
                    if let Some(vc) = idx(c) {
                        b.add_quad(vr, vc, s * w[(r, c)]);
                    }
                }
            }
        };
        for j in 0..l {
            for i in 0..n {
                quad(b, &|r| lay.x(j, i, r), &cfg.q, norms[j]);
                quad(b, &|s| lay.u(j, i, s), &cfg.r, norms[j]);
            }
            quad(b, &|r| lay.x(j, n, r), &self.terminal.p, norms[j]);
        }
        for j in 0..lay.lx {
            for r in 0..nx {
                b.add_linear(lay.cp + j * nx + r, cfg.beta);
                b.add_linear(lay.cm + j * nx + r, cfg.beta);
            }
        }

        // Equalities.
        let mut eq = Vec::new();
        for j in 0..l {
            for r in 0..nx {
                let Some(x0) = lay.x(j, 0, r) else { continue };
                let mut e = Affine::var(x0).plus(&Affine::constant(-xbar[(r, j)]));
                if let (Some(p), Some(m)) = (lay.cp(j, r), lay.cm(j, r)) {
                    e = e.term(p, -1.0).term(m, 1.0);
                }
                eq.push(e);
            }
        }
        match self.repr {
            Representation::Model(m) => {
                for j in 0..l {
                    for i in 0..n {
                        for r in 0..nx {
                            let Some(xr) = lay.x(j, i + 1, r) else { continue };
                            let mut e = Affine::var(xr);
                            for s in 0..nx {
                                if let Some(v) = lay.x(j, i, s) {
                                    e.add(v, -m.a[(r, s)]);
                                }
                            }
                            for s in 0..nu {
                                if let Some(v) = lay.u(j, i, s) {
                                    e.add(v, -m.b[(r, s)]);
                                }
                            }
                            e.constant = -dist[i].coeffs()[(r, j)];
                            eq.push(e);
                        }
                    }
                }
            }
            Representation::Predictor(p) => {
                let (phi, k) = (&p.phi, &p.gain);
                let cut = 1e-13 * crate::linalg::max_abs(phi);
                let coef = |row: usize, col: usize| {
                    let v = phi[(row, col)];
                    if v.abs() > cut { v } else { 0.0 }
                };
                for j in 0..l {
                    for i in 1..=n {
                        for r in 0..nx {
                            let row = i * nx + r;
                            let Some(xr) = lay.x(j, i, r) else { continue };
                            let mut e = Affine::var(xr);
                            for s in 0..nx {
                                if let Some(v) = lay.x(j, 0, s) {
                                    e.add(v, -coef(row, s));
                                }
                            }
                            let mut wsum = 0.0;
                            for ii in 0..n {
                                // v = u − K x
                                for s in 0..nu {
                                    let c = coef(row, nx + ii * nu + s);
                                    if c == 0.0 {
                                        continue;
                                    }
                                    if let Some(v) = lay.u(j, ii, s) {
                                        e.add(v, -c);
                                    }
                                    for t in 0..nx {
                                        if let Some(v) = lay.x(j, ii, t) {
                                            e.add(v, c * k[(s, t)]);
                                        }
                                    }
                                }
                                for s in 0..nx {
                                    let w = dist[ii].coeffs()[(s, j)];
                                    if w != 0.0 {
                                        wsum += phi[(row, nx + n * nu + ii * nx + s)] * w;
                                    }
                                }
                            }
                            e.constant = -wsum;
                            eq.push(merged(e));
                        }
                    }
                }
            }
            Representation::Hankel(p) => {
                let (g0, cols) = lay.g.expect("Hankel layout has g");
                for c in 0..cols * l {
                    b.add_quad(g0 + c, g0 + c, G_REGULARIZATION);
                }
                let st = &p.stack;
                for j in 0..l {
                    let gj = |c: usize| g0 + j * cols + c;
                    let row_expr = |h: &DMatrix<f64>, row: usize| {
                        let mut e = Affine::default();
                        for c in 0..cols {
                            e.add(gj(c), h[(row, c)]);
                        }
                        e
                    };
                    for i in 0..=n {
                        for r in 0..nx {
                            let mut e = row_expr(&st.hx, i * nx + r);
                            if let Some(v) = lay.x(j, i, r) {
                                e.add(v, -1.0);
                            }
                            eq.push(e);
                        }
                    }
                    for i in 0..n {
                        for s in 0..nu {
                            let mut e = row_expr(&p.hv, i * nu + s);
                            if let Some(v) = lay.u(j, i, s) {
                                e.add(v, -1.0);
                            }
                            for t in 0..nx {
                                if let Some(v) = lay.x(j, i, t) {
                                    e.add(v, p.gain[(s, t)]);
                                }
                            }
                            eq.push(e);
                        }
                    }
                    for i in 0..n {
                        for s in 0..nx {
                            let mut e = row_expr(&st.hw, i * nx + s);
                            e.constant = -dist[i].coeffs()[(s, j)];
                            eq.push(e);
                        }
                    }
                }
            }
        }
        b.add_zero(&eq);

        // Nonnegative rows: slack split and the linear half of chance constraints.
        let mut nonneg = Vec::new();
        for c in 0..nx * lay.lx {
            nonneg.push(Affine::var(lay.cp + c));
            nonneg.push(Affine::var(lay.cm + c));
        }
        let mut socs: Vec<Vec<Affine>> = Vec::new();
        let mut chance = |b: &mut ConicBuilder,
                          mean: Affine,
                          spread: Vec<Affine>,
                          sigma: f64,
                          lo: f64,
                          hi: f64,
                          nonneg: &mut Vec<Affine>| {
            if spread.is_empty() {
                nonneg.push(mean.clone().scaled(-1.0).plus(&Affine::constant(hi)));
                nonneg.push(mean.plus(&Affine::constant(-lo)));
                return;
            }
            let t = b.add_vars(1);
            let mut cone = vec![Affine::var(t)];
            cone.extend(spread);
            socs.push(cone);
            nonneg.push(
                mean.clone()
                    .scaled(-1.0)
                    .term(t, -sigma)
                    .plus(&Affine::constant(hi)),
            );
            nonneg.push(mean.term(t, -sigma).plus(&Affine::constant(-lo)));
        };
        for i in 1..n {
            for (r, lo, hi) in cfg.x_box.active() {
                let spread = (1..l)
                    .filter_map(|j| lay.x(j, i, r).map(|v| Affine::var(v).scaled(norms[j].sqrt())))
                    .collect();
                let mean = Affine::var(lay.x(0, i, r).expect("mean is free"));
                chance(b, mean, spread, cfg.sigma_x, lo, hi, &mut nonneg);
            }
        }
        for i in 0..n {
            for (s, lo, hi) in cfg.u_box.active() {
                let Some(mean) = lay.u(0, i, s) else { continue };
                let spread = (1..l)
                    .filter_map(|j| lay.u(j, i, s).map(|v| Affine::var(v).scaled(norms[j].sqrt())))
                    .collect();
                chance(b, Affine::var(mean), spread, cfg.sigma_u, lo, hi, &mut nonneg);
            }
        }
        b.add_nonneg(&nonneg);
        for cone in &socs {
            b.add_soc(cone);
        }

        if cfg.terminal_constraints {
            let chol = self
                .terminal
                .p
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Numerical("terminal P not positive definite".into()))?
                .l();
            let mut cone = vec![Affine::constant((2.0 * self.terminal.gamma_level).sqrt())];
            for r in 0..nx {
                let mut e = Affine::default();
                for s in 0..nx {
                    e.add(lay.x(0, n, s).expect("terminal state is free"), chol[(s, r)]);
                }
                cone.push(e);
            }
            b.add_soc(&cone);

            let gamma = &self.terminal.gamma;
            if l > 1 {
                if nx == 1 || cfg.covariance_mode == CovarianceMode::Diagonal {
                    for r in 0..nx {
                        let mut cone = vec![Affine::constant(gamma[(r, r)].max(0.0).sqrt())];
                        cone.extend(
                            (1..l).filter_map(|j| {
                                lay.x(j, n, r).map(|v| Affine::var(v).scaled(norms[j].sqrt()))
                            }),
                        );
                        b.add_soc(&cone);
                    }
                } else {
                    // S_j ⪰ n_j x^j x^jᵀ for each j, and Σ S_j ⪯ Γ.
                    let tri = nx * (nx + 1) / 2;
                    let s0 = b.add_vars(tri * (l - 1));
                    let s_idx = |j: usize, a: usize, c: usize| sym_index(s0 + (j - 1) * tri, a, c);
                    for j in 1..l {
                        let sq = norms[j].sqrt();
                        b.add_psd(nx + 1, |a, c| {
                            if c < nx {
                                Affine::var(s_idx(j, a, c))
                            } else if a < nx {
                                lay.x(j, n, a).map_or_else(Affine::default, |v| Affine::var(v).scaled(sq))
                            } else {
                                Affine::constant(1.0)
                            }
                        });
                    }
                    b.add_psd(nx, |a, c| {
                        let mut e = Affine::constant(gamma[(a, c)]);
                        for j in 1..l {
                            e.add(s_idx(j, a, c), -1.0);
                        }
                        e
                    });
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<OcpSolution> {
        let (nx, nu, n, l) = (self.nx(), self.nu(), self.config.horizon, self.basis.len());
        if !self.initial_chance_ok() {
            return Ok(OcpSolution::rejected(OcpStatus::Infeasible, nx, l));
        }
        let mut b = ConicBuilder::new();
        let lay = self.layout(&mut b);
        self.assemble_into(&mut b, &lay)?;
        let sol = b.solve(&self.config.solver)?;
        let status = match sol.status {
            ConicStatus::Optimal => OcpStatus::Optimal,
            ConicStatus::Infeasible => OcpStatus::Infeasible,
            ConicStatus::NumericalFailure => OcpStatus::NumericalFailure,
        };
        if status != OcpStatus::Optimal {
            let mut r = OcpSolution::rejected(status, nx, l);
            r.iterations = sol.iterations;
            return Ok(r);
        }
        let z = &sol.x;
        let x: Vec<PceVector> = (0..=n)
            .map(|i| {
                PceVector::new(DMatrix::from_fn(nx, l, |r, j| {
                    lay.x(j, i, r).map_or(0.0, |v| z[v])
                }))
            })
            .collect();
        let u: Vec<PceVector> = (0..n)
            .map(|i| {
                PceVector::new(DMatrix::from_fn(nu, l, |s, j| {
                    lay.u(j, i, s).map_or(0.0, |v| z[v])
                }))
            })
            .collect();
        let slack = DMatrix::from_fn(nx, l, |r, j| match (lay.cp(j, r), lay.cm(j, r)) {
            (Some(p), Some(m)) => z[p] - z[m],
            _ => 0.0,
        });
        let g = lay
            .g
            .map(|(g0, cols)| DMatrix::from_fn(cols, l, |c, j| z[g0 + j * cols + c]));
        let value = evaluate_cost(
            &x,
            &u,
            &self.basis,
            &self.config.q,
            &self.config.r,
            &self.terminal.p,
        )?;
        Ok(OcpSolution {
            status,
            x,
            u,
            g,
            slack,
            value,
            value_with_slack: sol.objective,
            iterations: sol.iterations,
        })
    }
}
