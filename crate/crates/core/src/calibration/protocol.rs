//! Sequential calibration of a Blass mesh.
//!
//! **Internal heaters.** Cells are visited from the bottom row upwards and
//! from left to right within a row, starting at `(d−1, 0)` whose cross port
//! is an output. To measure cell `(i, j)`, light enters row `i`; the already
//! calibrated cells `(i, 0..j)` and `(k > i, j)` are set to their bar maximum
//! so that the cross port of `(i, j)` is routed straight to output `j`. The
//! counts are divided by the fitted transmission of that route and the cross
//! fringe is converted to the bar fringe of the cell.
//!
//! **Couplers.** A bar fringe fixes `a = A² + B²` and `b = 2AB` with
//! `A = √((1−η₁)(1−η₂))`, `B = √(η₁η₂)`. Four coupler pairs share these
//! values: `(η₁, η₂)`, `(η₂, η₁)`, `(1−η₂, 1−η₁)` and `(1−η₁, 1−η₂)`. They
//! differ in the phases the cell imprints, which a two-path interferometer
//! over a 2×2 plaquette of cells can see. The target's internal heater is
//! swept at four settings of an external heater that sits on one of the two
//! paths; each candidate pair is fitted with free path amplitudes and the
//! smallest residual wins.
//!
//! **External heaters.** In the plaquette over rows `(i, i+1)` and columns
//! `(j−1, j)` the external heater of `(i, j)` shifts one path against the
//! other. Its coefficient comes from the fringe; its offset follows by
//! comparing the fringe phase with the path phases predicted by the
//! calibrated model. Intensities do not change when every external phase of
//! a column moves by the same amount, or when an external phase of column 0
//! moves. Offsets in column 0 and in row `d−1` are therefore fixed to 0.
//!
//! **Refinement.** Leakage through cells held at their bar maximum adds weak
//! stray paths that bias the isolated fits above. All recorded sweeps are
//! finally fitted jointly against the full estimated mesh.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MeshError, Result};
use crate::lsq;
use crate::matrix::C64;
use crate::mesh::{
    cell_block, fold_phase, CellCoord, CellParams, CellSetting, CouplerParams, Topology,
    NOMINAL_HEATER_COEF,
};

use super::curve::{fringe_model, CalibrationCurve, CellVoltages};
use super::device::{Port, VirtualDevice, VoltageMap};
use super::fit::{fit_fringe, FringeData, FringeFit, MIN_FRINGE_POINTS};
use super::table::{CalibrationEntry, CalibrationTable, CellFlag};

/// Knobs of [`calibrate_mesh`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationOptions {
    /// Voltage points per sweep.
    pub points: usize,
    /// Photons per voltage point.
    pub shots: f64,
    /// Run the plaquette measurements (coupler pairs and external heaters).
    pub plaquettes: bool,
    /// Iteration budget of the model-based refinement; 0 disables it.
    pub refine_iterations: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            points: 50,
            shots: 1e4,
            plaquettes: true,
            refine_iterations: 50,
        }
    }
}

/// Cells in the order they are calibrated.
pub fn protocol_order(topology: Topology) -> Vec<CellCoord> {
    let d = topology.d();
    (0..d).rev().flat_map(|i| (0..d).map(move |j| CellCoord::new(i, j))).collect()
}

/// Cells the light crosses on its way to and from `cell` during its sweep.
pub fn route_of(topology: Topology, cell: CellCoord) -> Vec<CellCoord> {
    let d = topology.d();
    (0..cell.col)
        .map(|j| CellCoord::new(cell.row, j))
        .chain((cell.row + 1..d).map(|k| CellCoord::new(k, cell.col)))
        .collect()
}

fn linspace(hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| hi * k as f64 / (n.max(2) - 1) as f64).collect()
}

/// Every calibrated cell at its bar maximum, everything else at 0 V.
fn bar_voltages(table: &CalibrationTable) -> VoltageMap {
    table
        .entries()
        .map(|e| {
            (
                e.cell,
                CellVoltages {
                    internal: e.internal.voltage_for_extreme(true, table.voltage_limit),
                    external: 0.0,
                },
            )
        })
        .collect()
}

/// Sweeps the internal heater of `cell` and records the counts at `port`.
///
/// Fails with a protocol-order error if a cell on the route has not been
/// calibrated yet. The bar port of a Blass cell continues along its row to a
/// terminated port and cannot be observed.
pub fn synth_fringe(
    device: &mut VirtualDevice,
    table: &CalibrationTable,
    cell: CellCoord,
    port: Port,
    voltages: &[f64],
    shots: f64,
) -> Result<FringeData> {
    let topo = device.topology();
    if !topo.contains(cell) {
        return Err(MeshError::Domain(format!("cell {cell} not in {topo:?}")));
    }
    if port == Port::Bar {
        return Err(MeshError::Unsupported(format!(
            "bar port of cell {cell} ends in a terminated row line"
        )));
    }
    if let Some(missing) = route_of(topo, cell).into_iter().find(|c| !table.contains(*c)) {
        return Err(MeshError::Protocol(format!(
            "cell {cell} is reached through uncalibrated cell {missing}"
        )));
    }
    let mut v = bar_voltages(table);
    let mut counts = Vec::with_capacity(voltages.len());
    for &u in voltages {
        v.insert(cell, CellVoltages { internal: u, external: 0.0 });
        counts.push(device.measure(&v, cell.row, cell.col, shots)?);
    }
    FringeData::new(voltages.to_vec(), counts, shots)
}

/// Coupler pair on the `η₁ + η₂ ≤ 1` branch reproducing a bar fringe, with
/// `η₁ ≥ η₂`.
pub fn couplers_from_fringe(curve: &CalibrationCurve) -> (f64, f64) {
    let a = curve.a.max(0.0);
    let b = curve.b.clamp(0.0, a);
    let diff = (a * a - b * b).max(0.0).sqrt();
    let s = 1.0 - diff;
    let p = ((a - diff) / 2.0).max(0.0);
    let disc = (s * s - 4.0 * p).max(0.0).sqrt();
    (((s + disc) / 2.0).clamp(0.0, 1.0), ((s - disc) / 2.0).clamp(0.0, 1.0))
}

fn hypotheses((e1, e2): (f64, f64)) -> [(f64, f64); 4] {
    [(e1, e2), (e2, e1), (1.0 - e2, 1.0 - e1), (1.0 - e1, 1.0 - e2)]
}

/// At `(d−1, 0)` and `(0, d−1)` the pair `(1−η₂, 1−η₁)` differs from
/// `(η₁, η₂)` only by phases on ports that are mesh inputs or outputs, or
/// unused. The pair with `η₁ + η₂ ≤ 1` is reported.
fn canonicalize_corners(table: &mut CalibrationTable) {
    let d = table.topology.d();
    if d < 2 {
        return;
    }
    for cell in [CellCoord::new(d - 1, 0), CellCoord::new(0, d - 1)] {
        let e = table.entry_mut(cell).expect("calibrated");
        let (e1, e2) = e.couplers;
        if e1 + e2 > 1.0 {
            e.couplers = (1.0 - e2, 1.0 - e1);
        }
        if !e.flags.contains(&CellFlag::BranchUnresolved) {
            e.flags.push(CellFlag::BranchUnresolved);
        }
    }
}

/// One heater of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(super) enum Heater {
    Internal(CellCoord),
    External(CellCoord),
}

/// Points measured with one light path: `voltages` is the common map and
/// each sample overrides a few cells.
pub(super) struct Group {
    pub(super) base: VoltageMap,
    pub(super) input: usize,
    pub(super) output: usize,
    pub(super) samples: Vec<(Vec<(CellCoord, CellVoltages)>, f64)>,
}

/// Everything measured so far, indexed by the heaters each group informs.
#[derive(Default)]
pub(super) struct Record {
    pub(super) groups: Vec<Group>,
    pub(super) by_heater: BTreeMap<Heater, Vec<usize>>,
}

impl Record {
    fn push(&mut self, group: Group, heaters: &[Heater]) {
        let k = self.groups.len();
        self.groups.push(group);
        for h in heaters {
            self.by_heater.entry(*h).or_default().push(k);
        }
    }
}

fn measure_group(
    device: &mut VirtualDevice,
    base: VoltageMap,
    input: usize,
    output: usize,
    points: Vec<Vec<(CellCoord, CellVoltages)>>,
    shots: f64,
) -> Result<Group> {
    let mut samples = Vec::with_capacity(points.len());
    let mut v = base.clone();
    for over in points {
        for (c, cv) in &over {
            v.insert(*c, *cv);
        }
        let y = device.measure(&v, input, output, shots)? / shots;
        for (c, _) in &over {
            match base.get(c) {
                Some(b) => v.insert(*c, *b),
                None => v.remove(c),
            };
        }
        samples.push((over, y));
    }
    Ok(Group { base, input, output, samples })
}

fn internal_pass(
    device: &mut VirtualDevice,
    table: &mut CalibrationTable,
    record: &mut Record,
    opts: &CalibrationOptions,
) -> Result<()> {
    let topo = device.topology();
    let u_max = device.voltage_limit();
    let sweep = linspace(u_max, opts.points);
    for (idx, cell) in protocol_order(topo).into_iter().enumerate() {
        let raw = synth_fringe(device, table, cell, Port::Cross, &sweep, opts.shots)?;
        record.push(
            Group {
                base: bar_voltages(table),
                input: cell.row,
                output: cell.col,
                samples: raw
                    .voltages
                    .iter()
                    .zip(&raw.counts)
                    .map(|(&u, &n)| (vec![(cell, CellVoltages { internal: u, external: 0.0 })], n / raw.shots))
                    .collect(),
            },
            &[Heater::Internal(cell)],
        );
        let route: f64 = route_of(topo, cell)
            .iter()
            .map(|c| {
                let curve = table.entry(*c).expect("route calibrated").internal;
                fringe_model(curve.voltage_for_extreme(true, u_max), &curve)
            })
            .product();
        let data = FringeData::new(raw.voltages, raw.counts, raw.shots * route.max(1e-12))?;
        let mut flags = Vec::new();
        let (internal, residual) = match fit_fringe(&data) {
            Ok(FringeFit { curve, residual, identifiable }) => {
                let bar = CalibrationCurve::new(1.0 - curve.a, curve.b, curve.c + PI, curve.d_coef).normalized();
                if identifiable {
                    (bar, residual)
                } else {
                    flags.push(CellFlag::Unidentifiable);
                    (CalibrationCurve::new(bar.a, 0.0, 0.0, NOMINAL_HEATER_COEF), residual)
                }
            }
            Err(e) if idx == 0 => return Err(e),
            Err(e) => {
                flags.push(CellFlag::FitFailed(e.to_string()));
                let mean = data.transmissions().iter().sum::<f64>() / data.counts.len() as f64;
                (CalibrationCurve::new(1.0 - mean, 0.0, 0.0, NOMINAL_HEATER_COEF), f64::NAN)
            }
        };
        let (lo, hi) = internal.extrema();
        table.insert(CalibrationEntry {
            cell,
            internal,
            external: CalibrationCurve::new(0.0, 0.0, 0.0, NOMINAL_HEATER_COEF),
            internal_residual: residual,
            external_residual: None,
            split_range: (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0)),
            couplers: couplers_from_fringe(&internal),
            phase_range: internal.d_coef * u_max * u_max,
            flags,
        })?;
    }
    Ok(())
}

/// Position of the target inside its 2×2 plaquette.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Plaquette {
    TopLeft,
    BottomRight,
    TopRight,
    BottomLeft,
}

fn plaquette_of(d: usize, cell: CellCoord) -> Option<Plaquette> {
    let (down, right, up, left) = (cell.row + 1 < d, cell.col + 1 < d, cell.row >= 1, cell.col >= 1);
    if down && right {
        Some(Plaquette::TopLeft)
    } else if up && left {
        Some(Plaquette::BottomRight)
    } else if down && left {
        Some(Plaquette::TopRight)
    } else if up && right {
        Some(Plaquette::BottomLeft)
    } else {
        None
    }
}

struct Setup {
    kind: Plaquette,
    voltages: VoltageMap,
    input: usize,
    output: usize,
    /// Cell whose external heater moves one path against the other.
    swept: CellCoord,
}

fn plaquette_setup(table: &CalibrationTable, target: CellCoord, kind: Plaquette) -> Setup {
    let u_max = table.voltage_limit;
    let mut voltages = bar_voltages(table);
    let mut set = |r: usize, c: usize, level: Option<f64>| {
        let cell = CellCoord::new(r, c);
        let curve = table.entry(cell).expect("calibrated").internal;
        let u = match level {
            Some(l) => curve.voltage_for_level(l, u_max),
            None => curve.voltage_for_extreme(false, u_max),
        };
        voltages.insert(cell, CellVoltages { internal: u, external: 0.0 });
    };
    let (i, t) = (target.row, target.col);
    let (input, output, swept) = match kind {
        Plaquette::TopLeft => {
            set(i, t, Some(0.5));
            set(i, t + 1, None);
            set(i + 1, t, None);
            set(i + 1, t + 1, Some(0.5));
            (i, t + 1, CellCoord::new(i, t + 1))
        }
        Plaquette::BottomRight => {
            set(i - 1, t - 1, Some(0.5));
            set(i - 1, t, None);
            set(i, t - 1, None);
            set(i, t, Some(0.5));
            (i - 1, t, target)
        }
        Plaquette::TopRight => {
            set(i, t - 1, Some(0.5));
            set(i, t, Some(0.5));
            set(i + 1, t - 1, None);
            set(i + 1, t, Some(0.5));
            (i, t, target)
        }
        Plaquette::BottomLeft => {
            set(i - 1, t, Some(0.5));
            set(i - 1, t + 1, None);
            set(i, t, Some(0.5));
            set(i, t + 1, Some(0.5));
            (i - 1, t + 1, CellCoord::new(i - 1, t + 1))
        }
    };
    Setup { kind, voltages, input, output, swept }
}

/// Amplitudes of the two interfering paths through the target, as functions
/// of its internal phase, and the sign with which the swept phase enters the
/// first one.
fn path_amplitudes(kind: Plaquette, m: &[[C64; 2]; 2]) -> (C64, C64, f64) {
    let one = C64::new(1.0, 0.0);
    match kind {
        Plaquette::TopLeft => (m[0][0], m[1][0], 1.0),
        Plaquette::BottomRight => (m[1][0], m[1][1], 1.0),
        Plaquette::TopRight => (m[1][0], one, 1.0),
        Plaquette::BottomLeft => (m[0][1], one, -1.0),
    }
}

fn with_external(v: &VoltageMap, cell: CellCoord, u: f64) -> (CellCoord, CellVoltages) {
    let mut cv = v.get(&cell).copied().unwrap_or_default();
    cv.external = u;
    (cell, cv)
}

/// External-heater fringe recorded in a plaquette.
struct ExternalSweep {
    setup: Setup,
    fit: Result<FringeFit>,
}

fn sweep_external(
    device: &mut VirtualDevice,
    record: &mut Record,
    setup: Setup,
    opts: &CalibrationOptions,
) -> Result<ExternalSweep> {
    let us = linspace(device.voltage_limit(), opts.points);
    let points = us.iter().map(|&u| vec![with_external(&setup.voltages, setup.swept, u)]).collect();
    let group = measure_group(device, setup.voltages.clone(), setup.input, setup.output, points, opts.shots)?;
    let counts = group.samples.iter().map(|s| s.1 * opts.shots).collect();
    record.push(group, &[Heater::External(setup.swept)]);
    let fit = fit_fringe(&FringeData::new(us, counts, opts.shots)?).and_then(|f| {
        if f.identifiable {
            Ok(f)
        } else {
            Err(MeshError::Degenerate("external fringe has no contrast".into()))
        }
    });
    Ok(ExternalSweep { setup, fit })
}

/// Chooses among the four coupler pairs of `target` by sweeping its internal
/// heater at four external-phase steps of the swept heater.
fn resolve_branch(
    device: &mut VirtualDevice,
    table: &CalibrationTable,
    record: &mut Record,
    target: CellCoord,
    ext: &ExternalSweep,
    opts: &CalibrationOptions,
) -> Result<(f64, f64)> {
    let u_max = device.voltage_limit();
    let entry = table.entry(target).expect("calibrated");
    let curve = entry.internal;
    let d_ext = ext.fit.as_ref().map_err(|e| MeshError::Degenerate(e.to_string()))?.curve.d_coef;
    let internal_us = linspace(u_max, opts.points.div_ceil(2).max(MIN_FRINGE_POINTS));
    let setup = &ext.setup;
    let mut points = Vec::new();
    let mut phases = Vec::new();
    for k in 0..4 {
        let ue = u_max * (k as f64 / 3.0).sqrt();
        for &ui in &internal_us {
            let mut over = vec![with_external(&setup.voltages, setup.swept, ue)];
            let mut tv = if setup.swept == target { over[0].1 } else { setup.voltages[&target] };
            tv.internal = ui;
            if setup.swept == target {
                over[0].1 = tv;
            } else {
                over.push((target, tv));
            }
            points.push(over);
            phases.push((d_ext * ue * ue, curve.c + curve.d_coef * ui * ui));
        }
    }
    let group = measure_group(device, setup.voltages.clone(), setup.input, setup.output, points, opts.shots)?;
    let yv = DVector::from_iterator(group.samples.len(), group.samples.iter().map(|s| s.1));
    record.push(group, &[Heater::Internal(target), Heater::External(setup.swept)]);
    let mut best = (entry.couplers, f64::INFINITY);
    for (e1, e2) in hypotheses(entry.couplers) {
        let (dc1, dc2) = (CouplerParams { eta: e1 }, CouplerParams { eta: e2 });
        let mut x = DMatrix::zeros(phases.len(), 4);
        for (r, &(phi, theta)) in phases.iter().enumerate() {
            let (u, w, sign) = path_amplitudes(setup.kind, &cell_block(theta, 0.0, &dc1, &dc2));
            let z = C64::from_polar(1.0, sign * phi) * u * w.conj();
            x[(r, 0)] = u.norm_sqr();
            x[(r, 1)] = w.norm_sqr();
            x[(r, 2)] = 2.0 * z.re;
            x[(r, 3)] = -2.0 * z.im;
        }
        if let Some((_, rms)) = lsq::linear(&x, &yv) {
            if rms < best.1 {
                best = ((e1, e2), rms);
            }
        }
    }
    Ok(best.0)
}

/// Estimated mesh used to predict recorded groups.
#[derive(Clone)]
struct Model {
    topology: Topology,
    cells: BTreeMap<CellCoord, CellParams>,
}

impl Model {
    fn from_table(table: &CalibrationTable) -> Self {
        Self {
            topology: table.topology,
            cells: table.entries().map(|e| (e.cell, e.cell_params())).collect(),
        }
    }

    fn settings(&self, voltages: &VoltageMap) -> BTreeMap<CellCoord, CellSetting> {
        self.cells
            .iter()
            .map(|(&c, p)| {
                let v = voltages.get(&c).copied().unwrap_or_default();
                (c, CellSetting::new(p.internal_law().phase(v.internal), p.external.phase(v.external)))
            })
            .collect()
    }

    fn amplitude(&self, settings: &BTreeMap<CellCoord, CellSetting>, input: usize, output: usize) -> C64 {
        let d = self.topology.d();
        let mut v = vec![C64::new(0.0, 0.0); self.topology.mode_count()];
        v[input] = C64::new(1.0, 0.0);
        for coord in self.topology.cell_order() {
            let m = self.cells[&coord].matrix(settings[&coord]);
            let (a, b) = self.topology.modes_of(coord);
            let (x, y) = (v[a], v[b]);
            v[a] = m[0][0] * x + m[0][1] * y;
            v[b] = m[1][0] * x + m[1][1] * y;
        }
        v[d + output]
    }
}

/// Offset of the external heater of `cell` from its plaquette fringe.
fn external_offset(table: &CalibrationTable, cell: CellCoord, sweep: &ExternalSweep) -> Result<f64> {
    let fit = sweep.fit.as_ref().map_err(|e| MeshError::Degenerate(e.to_string()))?;
    let model = Model::from_table(table);
    let mut s = model.settings(&sweep.setup.voltages);
    let amplitude = |s: &mut BTreeMap<CellCoord, CellSetting>, phi: f64| {
        s.get_mut(&cell).expect("in mesh").phi = phi;
        model.amplitude(s, sweep.setup.input, sweep.setup.output)
    };
    let (a0, a1) = (amplitude(&mut s, 0.0), amplitude(&mut s, PI));
    let p = (a0 - a1) / 2.0;
    let q = (a0 + a1) / 2.0;
    Ok(fold_phase(fit.curve.c - (p.arg() - q.arg() + PI)))
}

fn plaquette_pass(
    device: &mut VirtualDevice,
    table: &mut CalibrationTable,
    record: &mut Record,
    opts: &CalibrationOptions,
) -> Result<()> {
    let topo = device.topology();
    let d = topo.d();
    let mut sweeps: BTreeMap<CellCoord, ExternalSweep> = BTreeMap::new();
    for cell in protocol_order(topo) {
        let Some(kind) = plaquette_of(d, cell) else {
            table.entry_mut(cell).expect("calibrated").flags.push(CellFlag::BranchUnresolved);
            continue;
        };
        let ext = sweep_external(device, record, plaquette_setup(table, cell, kind), opts)?;
        let usable = table.entry(cell).expect("calibrated").internal.b > 0.0;
        match resolve_branch(device, table, record, cell, &ext, opts) {
            Ok(pair) if usable => table.entry_mut(cell).expect("calibrated").couplers = pair,
            _ => table.entry_mut(cell).expect("calibrated").flags.push(CellFlag::BranchUnresolved),
        }
        let heater = ext.setup.swept;
        if kind == Plaquette::TopLeft || !sweeps.contains_key(&heater) {
            sweeps.insert(heater, ext);
        }
    }

    for j in 0..d {
        for i in (0..d).rev() {
            let cell = CellCoord::new(i, j);
            let sweep = sweeps.get(&cell);
            let mut flags = Vec::new();
            let (curve, residual) = match sweep.map(|s| &s.fit) {
                Some(Ok(f)) => (f.curve, f.residual),
                other => {
                    if let Some(Err(e)) = other {
                        flags.push(CellFlag::FitFailed(format!("external: {e}")));
                    }
                    flags.push(CellFlag::NominalCoefficient);
                    (CalibrationCurve::new(0.0, 0.0, 0.0, NOMINAL_HEATER_COEF), f64::NAN)
                }
            };
            let offset = if j == 0 {
                flags.push(CellFlag::InputGauge);
                0.0
            } else if i == d - 1 {
                flags.push(CellFlag::OutputGauge);
                0.0
            } else {
                match sweep.map(|s| external_offset(table, cell, s)) {
                    Some(Ok(o)) => o,
                    Some(Err(e)) => {
                        flags.push(CellFlag::FitFailed(format!("external offset: {e}")));
                        0.0
                    }
                    None => 0.0,
                }
            };
            let e = table.entry_mut(cell).expect("calibrated");
            e.external = CalibrationCurve::new(curve.a, curve.b, offset, curve.d_coef);
            e.external_residual = Some(residual);
            e.flags.extend(flags);
        }
    }
    Ok(())
}

/// Calibrates every heater of `device` and returns the table.
///
/// Fit failures are recorded in the affected entry; the run only aborts if
/// the very first cell cannot be fitted.
pub fn calibrate_mesh(device: &mut VirtualDevice, opts: &CalibrationOptions) -> Result<CalibrationTable> {
    if opts.points < MIN_FRINGE_POINTS {
        return Err(MeshError::Domain(format!("sweeps need at least {MIN_FRINGE_POINTS} points")));
    }
    let mut table = CalibrationTable::new(device.topology(), device.voltage_limit(), opts.shots, device.seed());
    table.fabrication = device.fabrication().copied();
    let mut record = Record::default();
    internal_pass(device, &mut table, &mut record, opts)?;
    if opts.plaquettes {
        plaquette_pass(device, &mut table, &mut record, opts)?;
        super::refine::refine(&mut table, &record, opts.refine_iterations);
        canonicalize_corners(&mut table);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::Noise;
    use crate::mesh::{forward, phase_distance, FabricationModel, MeshConfig, MeshSettings};
    use rand::{Rng, SeedableRng};

    fn noiseless(d: usize, fab: &FabricationModel, seed: u64) -> VirtualDevice {
        VirtualDevice::sample(d, fab, seed, Noise::Noiseless).unwrap()
    }

    #[test]
    fn order_calibrates_routes_first() {
        let topo = Topology::Blass { d: 5 };
        let order = protocol_order(topo);
        assert_eq!(order.len(), 25);
        assert_eq!(order[0], CellCoord::new(4, 0));
        for (k, c) in order.iter().enumerate() {
            for r in route_of(topo, *c) {
                assert!(order[..k].contains(&r), "{r} needed before {c}");
            }
        }
    }

    #[test]
    fn out_of_order_sweep_is_protocol_error() {
        let mut dev = noiseless(3, &FabricationModel::ideal(), 1);
        let table = CalibrationTable::new(dev.topology(), dev.voltage_limit(), 1e4, 1);
        let us = linspace(dev.voltage_limit(), 10);
        let r = synth_fringe(&mut dev, &table, CellCoord::new(1, 1), Port::Cross, &us, 1e4);
        assert!(matches!(r, Err(MeshError::Protocol(_))));
        let r = synth_fringe(&mut dev, &table, CellCoord::new(2, 0), Port::Bar, &us, 1e4);
        assert!(matches!(r, Err(MeshError::Unsupported(_))));
        assert!(synth_fringe(&mut dev, &table, CellCoord::new(2, 0), Port::Cross, &us, 1e4).is_ok());
    }

    #[test]
    fn couplers_reproduce_fringe() {
        for &(e1, e2) in &[(0.5f64, 0.5f64), (0.3, 0.6), (0.1, 0.2), (0.7, 0.8)] {
            let a = (1.0 - e1) * (1.0 - e2) + e1 * e2;
            let b = 2.0 * ((1.0 - e1) * (1.0 - e2) * e1 * e2).sqrt();
            let (f1, f2) = couplers_from_fringe(&CalibrationCurve::new(a, b, 0.0, 0.05));
            assert!(hypotheses((f1, f2)).iter().any(|&(x, y)| (x - e1).abs() < 1e-9 && (y - e2).abs() < 1e-9));
        }
    }

    #[test]
    fn ideal_device_recovers_offsets() {
        let mut dev = noiseless(4, &FabricationModel::ideal(), 3);
        let table = calibrate_mesh(&mut dev, &CalibrationOptions::default()).unwrap();
        for e in table.entries() {
            assert!(phase_distance(e.internal.c, 0.0) < 1e-6, "{} {:?}", e.cell, e.internal);
            assert!((e.couplers.0 - 0.5).abs() < 1e-6 && (e.couplers.1 - 0.5).abs() < 1e-6);
            assert!(phase_distance(e.external.c, 0.0) < 1e-6, "{} {:?}", e.cell, e.external);
        }
    }

    #[test]
    fn noiseless_device_recovers_hidden_parameters() {
        let fab = FabricationModel::default();
        for seed in [11, 12, 13] {
            let mut dev = noiseless(4, &fab, seed);
            let table = calibrate_mesh(&mut dev, &CalibrationOptions::default()).unwrap();
            let truth = dev.ground_truth().clone();
            let (mut worst_c, mut worst_eta, mut worst_ext) = (0f64, 0f64, 0f64);
            for e in table.entries() {
                let p = truth.cell(e.cell).unwrap();
                if e.flags.iter().any(|f| matches!(f, CellFlag::Unidentifiable | CellFlag::FitFailed(_))) {
                    continue;
                }
                worst_c = worst_c.max(phase_distance(e.internal.c, p.phase_offset));
                assert!((e.internal.d_coef - p.internal_coef).abs() < 1e-6 * p.internal_coef);
                let direct = (e.couplers.0 - p.dc1.eta).abs().max((e.couplers.1 - p.dc2.eta).abs());
                let mirror = (e.couplers.0 - 1.0 + p.dc2.eta).abs().max((e.couplers.1 - 1.0 + p.dc1.eta).abs());
                worst_eta = worst_eta.max(if e.flags.contains(&CellFlag::BranchUnresolved) {
                    direct.min(mirror)
                } else {
                    direct
                });
                if e.cell.col > 0 && e.cell.row + 1 < 4 {
                    let rel = p.external.offset - truth.cell(CellCoord::new(3, e.cell.col)).unwrap().external.offset;
                    worst_ext = worst_ext.max(phase_distance(e.external.c, rel));
                }
            }
            assert!(worst_c < 1e-6 && worst_eta < 1e-6 && worst_ext < 1e-6);
        }
    }

    /// Output intensities do not depend on the gauge, so the calibrated model
    /// must predict the device for arbitrary heater voltages.
    #[test]
    fn calibrated_model_predicts_device() {
        let fab = FabricationModel::default();
        let mut dev = noiseless(4, &fab, 21);
        let table = calibrate_mesh(&mut dev, &CalibrationOptions::default()).unwrap();
        let model = table.to_mesh_config().unwrap();
        let topo = model.topology();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut worst = 0f64;
        for _ in 0..20 {
            let v: VoltageMap = topo
                .cell_order()
                .into_iter()
                .map(|c| {
                    let u = CellVoltages {
                        internal: rng.random_range(0.0..dev.voltage_limit()),
                        external: rng.random_range(0.0..dev.voltage_limit()),
                    };
                    (c, u)
                })
                .collect();
            let mut s = MeshSettings::uniform(topo, CellSetting::BAR).unwrap();
            for (c, u) in &v {
                let p = model.cell(*c).unwrap();
                s.set(*c, CellSetting::new(p.internal_law().phase(u.internal), p.external.phase(u.external)))
                    .unwrap();
            }
            let predicted = forward(&model, &s).unwrap().effective;
            for i in 0..4 {
                for j in 0..4 {
                    let measured = dev.measure(&v, i, j, 1.0).unwrap();
                    worst = worst.max((measured - predicted.power(j, i)).abs());
                }
            }
        }
        assert!(worst < 1e-4, "worst intensity error {worst}");
    }

    #[test]
    fn calibration_is_deterministic() {
        let fab = FabricationModel::default();
        let opts = CalibrationOptions { points: 20, ..Default::default() };
        let run = || {
            let mut dev = VirtualDevice::sample(3, &fab, 9, Noise::Poisson).unwrap();
            serde_json::to_string(&calibrate_mesh(&mut dev, &opts).unwrap()).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn dead_coupler_is_flagged() {
        let fab = FabricationModel::ideal();
        let mut cfg = MeshConfig::ideal(Topology::Blass { d: 3 }).unwrap();
        let mut p = cfg.cell(CellCoord::new(1, 1)).unwrap().clone();
        p.dc1 = CouplerParams { eta: 0.0 };
        cfg.set_cell(CellCoord::new(1, 1), p).unwrap();
        let mut dev = VirtualDevice::from_config(cfg, fab.voltage_limit(), 0, Noise::Noiseless).unwrap();
        let table = calibrate_mesh(&mut dev, &CalibrationOptions::default()).unwrap();
        assert!(!table.entry(CellCoord::new(1, 1)).unwrap().flags.is_empty());
    }

    #[test]
    fn too_few_points_rejected() {
        let mut dev = noiseless(2, &FabricationModel::ideal(), 0);
        let r = calibrate_mesh(&mut dev, &CalibrationOptions { points: 4, ..Default::default() });
        assert!(matches!(r, Err(MeshError::Domain(_))));
    }
}
