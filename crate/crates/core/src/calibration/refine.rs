//! Joint least-squares refinement of a calibration table against every
//! recorded measurement.
//!
//! Each sample is an output intensity `|a|²` of the Blass mesh for one
//! input and one voltage map. Its gradient with respect to the parameters of
//! every cell follows from one forward pass that stores the two mode
//! amplitudes entering each cell and one backward pass that carries the
//! sensitivity of `a` to the amplitudes leaving it.

use nalgebra::{DMatrix, DVector};

use crate::lsq;
use crate::matrix::C64;
use crate::mesh::{bar_amplitudes, cell_block, fold_phase, CellCoord, CouplerParams};

use super::curve::CalibrationCurve;
use super::protocol::{Group, Heater, Record};
use super::table::{CalibrationTable, CellFlag};

const ETA_STEP: f64 = 1e-6;
const ANGLE_STEP: f64 = 1e-6;

/// Internal offset, internal coefficient, η₁, η₂, external offset, external coefficient.
const SLOTS: usize = 6;

type Block = [[C64; 2]; 2];

#[derive(Clone, Copy)]
struct CellState {
    p: [f64; SLOTS],
}

impl CellState {
    fn eta(&self, k: usize) -> f64 {
        self.p[k].clamp(ETA_STEP, 1.0 - ETA_STEP)
    }
}

/// Matrix of a cell and its derivatives in θ, φ, η₁ and η₂.
struct CellEval {
    m: Block,
    dm: [Block; 4],
    ui2: f64,
    ue2: f64,
}

fn eval_cell(s: &CellState, ui: f64, ue: f64, with_grad: bool) -> CellEval {
    let theta = s.p[0] + s.p[1] * ui * ui;
    let phi = s.p[4] + s.p[5] * ue * ue;
    let (e1, e2) = (s.eta(2), s.eta(3));
    let block = |t: f64, f: f64, a: f64, b: f64| cell_block(t, f, &CouplerParams { eta: a }, &CouplerParams { eta: b });
    let m = block(theta, phi, e1, e2);
    let zero = [[C64::new(0.0, 0.0); 2]; 2];
    let mut dm = [zero; 4];
    if with_grad {
        let diff = |p: Block, q: Block, h: f64| {
            let mut out = zero;
            for r in 0..2 {
                for c in 0..2 {
                    out[r][c] = (p[r][c] - q[r][c]) / (2.0 * h);
                }
            }
            out
        };
        let h = ANGLE_STEP;
        dm[0] = diff(block(theta + h, phi, e1, e2), block(theta - h, phi, e1, e2), h);
        dm[1] = diff(block(theta, phi + h, e1, e2), block(theta, phi - h, e1, e2), h);
        let (lo1, hi1) = ((e1 - ETA_STEP).max(0.0), (e1 + ETA_STEP).min(1.0));
        let (lo2, hi2) = ((e2 - ETA_STEP).max(0.0), (e2 + ETA_STEP).min(1.0));
        dm[2] = diff(block(theta, phi, hi1, e2), block(theta, phi, lo1, e2), (hi1 - lo1) / 2.0);
        dm[3] = diff(block(theta, phi, e1, hi2), block(theta, phi, e1, lo2), (hi2 - lo2) / 2.0);
    }
    CellEval { m, dm, ui2: ui * ui, ue2: ue * ue }
}

/// Group with voltages laid out in cell order.
struct Dense {
    input: usize,
    output: usize,
    base: Vec<(f64, f64)>,
    samples: Vec<(Vec<(usize, (f64, f64))>, f64)>,
}

struct Problem<'a> {
    d: usize,
    cells: &'a [CellCoord],
    modes: Vec<(usize, usize)>,
    groups: Vec<Dense>,
    /// Parameter index of each (cell, slot), if free.
    free: Vec<[Option<usize>; SLOTS]>,
    n_params: usize,
}

impl Problem<'_> {
    fn states(&self, fixed: &[CellState], x: &[f64]) -> Vec<CellState> {
        let mut out = fixed.to_vec();
        for (k, slots) in self.free.iter().enumerate() {
            for (s, idx) in slots.iter().enumerate() {
                if let Some(i) = idx {
                    out[k].p[s] = x[*i];
                }
            }
        }
        out
    }

    /// Residuals and, if requested, the Jacobian.
    fn evaluate(&self, states: &[CellState], jac: Option<&mut DMatrix<f64>>) -> DVector<f64> {
        let grad = jac.is_some();
        let rows: usize = self.groups.iter().map(|g| g.samples.len()).sum();
        let mut r = DVector::zeros(rows);
        let mut jac = jac;
        let n_modes = 2 * self.d;
        let mut row = 0;
        let mut enter = vec![(C64::new(0.0, 0.0), C64::new(0.0, 0.0)); self.cells.len()];
        for g in &self.groups {
            let base: Vec<CellEval> = g
                .base
                .iter()
                .zip(states)
                .map(|(&(ui, ue), s)| eval_cell(s, ui, ue, grad))
                .collect();
            for (over, y) in &g.samples {
                let local: Vec<(usize, CellEval)> = over
                    .iter()
                    .map(|&(k, (ui, ue))| (k, eval_cell(&states[k], ui, ue, grad)))
                    .collect();
                let cell = |k: usize| local.iter().find(|(j, _)| *j == k).map_or(&base[k], |(_, e)| e);
                let mut v = vec![C64::new(0.0, 0.0); n_modes];
                v[g.input] = C64::new(1.0, 0.0);
                for (k, &(a, b)) in self.modes.iter().enumerate() {
                    let m = &cell(k).m;
                    let (x, z) = (v[a], v[b]);
                    enter[k] = (x, z);
                    v[a] = m[0][0] * x + m[0][1] * z;
                    v[b] = m[1][0] * x + m[1][1] * z;
                }
                let amp = v[self.d + g.output];
                r[row] = amp.norm_sqr() - y;
                if let Some(j) = jac.as_deref_mut() {
                    let mut lam = vec![C64::new(0.0, 0.0); n_modes];
                    lam[self.d + g.output] = C64::new(1.0, 0.0);
                    for (k, &(a, b)) in self.modes.iter().enumerate().rev() {
                        let e = cell(k);
                        let (la, lb) = (lam[a], lam[b]);
                        let (x, z) = enter[k];
                        let dir = |dm: &Block| la * (dm[0][0] * x + dm[0][1] * z) + lb * (dm[1][0] * x + dm[1][1] * z);
                        let g_theta = dir(&e.dm[0]);
                        let g_phi = dir(&e.dm[1]);
                        let partials = [
                            g_theta,
                            g_theta * e.ui2,
                            dir(&e.dm[2]),
                            dir(&e.dm[3]),
                            g_phi,
                            g_phi * e.ue2,
                        ];
                        for (s, idx) in self.free[k].iter().enumerate() {
                            if let Some(i) = idx {
                                j[(row, *i)] = 2.0 * (amp.conj() * partials[s]).re;
                            }
                        }
                        let m = &e.m;
                        lam[a] = la * m[0][0] + lb * m[1][0];
                        lam[b] = la * m[0][1] + lb * m[1][1];
                    }
                }
                row += 1;
            }
        }
        r
    }
}

/// Damped Gauss-Newton on the normal equations.
fn solve(problem: &Problem, fixed: &[CellState], start: Vec<f64>, max_iter: usize) -> Vec<f64> {
    let rows: usize = problem.groups.iter().map(|g| g.samples.len()).sum();
    let n = problem.n_params;
    let mut x = DVector::from_vec(start);
    let mut j = DMatrix::zeros(rows, n);
    let mut r = problem.evaluate(&problem.states(fixed, x.as_slice()), Some(&mut j));
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..max_iter {
        let jtj = j.tr_mul(&j);
        let g = j.tr_mul(&r);
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&g);
            let trial = &x - &step;
            let r_trial = problem.evaluate(&problem.states(fixed, trial.as_slice()), None);
            let c_trial = r_trial.norm_squared();
            if c_trial.is_finite() && c_trial < cost {
                let done = cost - c_trial <= 1e-14 * cost || step.amax() < 1e-13;
                x = trial;
                cost = c_trial;
                lambda = (lambda / 3.0).max(1e-12);
                improved = !done;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
        r = problem.evaluate(&problem.states(fixed, x.as_slice()), Some(&mut j));
    }
    x.iter().copied().collect()
}

fn usable_internal(flags: &[CellFlag]) -> bool {
    !flags.iter().any(|f| matches!(f, CellFlag::Unidentifiable | CellFlag::FitFailed(_)))
}

/// Refits the table to all recorded groups and updates it in place.
pub(super) fn refine(table: &mut CalibrationTable, record: &Record, max_iter: usize) {
    if max_iter == 0 || record.groups.is_empty() {
        return;
    }
    let topo = table.topology;
    let d = topo.d();
    let u_max = table.voltage_limit;
    let cells = topo.cell_order();
    let index = |c: &CellCoord| cells.iter().position(|x| x == c).expect("cell in mesh");
    let fixed: Vec<CellState> = cells
        .iter()
        .map(|c| {
            let e = table.entry(*c).expect("complete table");
            CellState {
                p: [
                    e.internal.c,
                    e.internal.d_coef,
                    e.couplers.0,
                    e.couplers.1,
                    e.external.c,
                    e.external.d_coef,
                ],
            }
        })
        .collect();
    let mut n_params = 0;
    let mut start = Vec::new();
    let mut free = vec![[None; SLOTS]; cells.len()];
    for (k, c) in cells.iter().enumerate() {
        let e = table.entry(*c).expect("complete table");
        let mut slots = Vec::new();
        if usable_internal(&e.flags) && record.by_heater.contains_key(&Heater::Internal(*c)) {
            slots.extend([0, 1, 2, 3]);
        }
        let external_data = record.by_heater.contains_key(&Heater::External(*c));
        let external_ok = !e.flags.iter().any(|f| matches!(f, CellFlag::FitFailed(_)));
        if c.col > 0 && external_data && external_ok {
            if c.row + 1 < d {
                slots.push(4);
            }
            slots.push(5);
        }
        for s in slots {
            free[k][s] = Some(n_params);
            start.push(fixed[k].p[s]);
            n_params += 1;
        }
    }
    let dense = |g: &Group| Dense {
        input: g.input,
        output: g.output,
        base: cells
            .iter()
            .map(|c| g.base.get(c).map_or((0.0, 0.0), |v| (v.internal, v.external)))
            .collect(),
        samples: g
            .samples
            .iter()
            .map(|(over, y)| (over.iter().map(|(c, v)| (index(c), (v.internal, v.external))).collect(), *y))
            .collect(),
    };
    let problem = Problem {
        d,
        cells: &cells,
        modes: cells.iter().map(|c| topo.modes_of(*c)).collect(),
        groups: record.groups.iter().map(dense).collect(),
        free,
        n_params,
    };
    let x = solve(&problem, &fixed, start, max_iter);
    let states = problem.states(&fixed, &x);
    let residual = problem.evaluate(&states, None);
    let mut offset = 0;
    let mut group_rms = vec![0.0; problem.groups.len()];
    for (k, g) in problem.groups.iter().enumerate() {
        let n = g.samples.len();
        group_rms[k] = lsq::rms(&residual.as_slice()[offset..offset + n]);
        offset += n;
    }
    let heater_rms = |h: Heater| {
        record.by_heater.get(&h).map(|gs| {
            let v: Vec<f64> = gs.iter().map(|&k| group_rms[k]).collect();
            (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
        })
    };
    for (k, c) in cells.iter().enumerate() {
        let s = states[k];
        let e = table.entry_mut(*c).expect("complete table");
        if problem.free[k][0].is_some() {
            let couplers = (s.eta(2), s.eta(3));
            let (a, b) = bar_amplitudes(CouplerParams { eta: couplers.0 }, CouplerParams { eta: couplers.1 });
            e.internal = CalibrationCurve::new(a * a + b * b, 2.0 * a * b, fold_phase(s.p[0]), s.p[1]);
            e.couplers = couplers;
            let (lo, hi) = e.internal.extrema();
            e.split_range = (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0));
            e.phase_range = s.p[1] * u_max * u_max;
            if let Some(rms) = heater_rms(Heater::Internal(*c)) {
                e.internal_residual = rms;
            }
        }
        if problem.free[k][5].is_some() {
            e.external.c = fold_phase(s.p[4]);
            e.external.d_coef = s.p[5];
            if let Some(rms) = heater_rms(Heater::External(*c)) {
                e.external_residual = Some(rms);
            }
        }
    }
}
