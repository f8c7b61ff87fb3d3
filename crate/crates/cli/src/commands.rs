use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use meshlab_core::calibration::{calibrate_mesh, CalibrationTable, Noise, VirtualDevice};
use meshlab_core::compiler::{
    blass_synthesize, lossy_bs_matrix, lossy_bs_settings, reck_decompose, xgate_matrix, xgate_settings,
    CompileReport, GateSpec, LossyBsSpec, Tolerances,
};
use meshlab_core::complexity::{complexity_curve, default_platforms, log_grid, PlatformFile};
use meshlab_core::quantum::{gate_fidelity, hom_scan, output_distribution, truth_table, FockDistribution};
use meshlab_core::report::{Provenance, Report};
use meshlab_core::{forward, MeshConfig, MeshSettings, Topology, TransferMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::error::CliError;
use crate::{
    CalibrateArgs, Cli, Command, CompileArgs, ComplexityArgs, HomArgs, NoiseArg, SimulateArgs, TopologyArg,
    TruthTableArgs,
};

struct Context {
    provenance: Provenance,
    out: PathBuf,
    format: Option<Format>,
    config: RunConfig,
}

impl Context {
    fn format(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    fn path(&self, name: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::invalid(format!("cannot create {}: {e}", self.out.display())))?;
        Ok(self.out.join(name))
    }

    fn write_json<T: Serialize>(&self, name: &str, body: T) -> Result<PathBuf, CliError> {
        let path = self.path(name)?;
        let report = Report {
            provenance: self.provenance.clone(),
            body,
        };
        serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &report)?;
        Ok(path)
    }

    fn csv_file(&self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.path(name)?;
        let file = BufWriter::new(File::create(&path)?);
        Ok((path, file))
    }

    fn header(&self) -> Vec<String> {
        self.provenance.header_lines()
    }

    fn seed(&self) -> u64 {
        self.provenance.seed
    }
}

pub fn run(cli: Cli) -> Result<String, CliError> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let ctx = Context {
        provenance: Provenance::new(seed, std::env::args().collect()),
        out: cli.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from(".")),
        format: cli.format.or(config.format),
        config,
    };
    match cli.command {
        Command::Compile(a) => compile(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Hom(a) => hom(&ctx, a),
        Command::TruthTable(a) => truth(&ctx, a),
        Command::Calibrate(a) => calibrate(&ctx, a),
        Command::Complexity(a) => complexity(&ctx, a),
    }
}

/// Parses `key=value` items (separated by spaces or commas) into numbers.
fn key_values(items: &[String], keys: &[&str]) -> Result<BTreeMap<String, f64>, CliError> {
    let mut map = BTreeMap::new();
    for item in items.iter().flat_map(|s| s.split([',', ' '])).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("expected key=value, got {item:?}")))?;
        if !keys.contains(&k) {
            return Err(CliError::usage(format!("unknown key {k:?}, expected one of {keys:?}")));
        }
        let v: f64 = v.parse().map_err(|_| CliError::usage(format!("{k}: {v:?} is not a number")))?;
        map.insert(k.to_string(), v);
    }
    for k in keys {
        if !map.contains_key(*k) {
            return Err(CliError::usage(format!("missing {k}=<value>")));
        }
    }
    Ok(map)
}

fn count(map: &BTreeMap<String, f64>, key: &str) -> Result<usize, CliError> {
    let v = map[key];
    if v < 0.0 || v.fract() != 0.0 {
        return Err(CliError::usage(format!("{key} must be a non-negative integer, got {v}")));
    }
    Ok(v as usize)
}

fn gate_spec(items: &[String]) -> Result<GateSpec, CliError> {
    let kv = key_values(items, &["d", "n"])?;
    Ok(GateSpec::new(count(&kv, "d")?, count(&kv, "n")?)?)
}

fn lossy_spec(item: &str) -> Result<LossyBsSpec, CliError> {
    let kv = key_values(&[item.to_string()], &["alpha"])?;
    Ok(LossyBsSpec { alpha: kv["alpha"] })
}

fn read_json(path: &Path) -> Result<serde_json::Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

/// Settings from a file written by `compile`, or a bare settings document.
fn read_settings(path: &Path) -> Result<MeshSettings, CliError> {
    let mut doc = read_json(path)?;
    let value = match doc.get_mut("settings") {
        Some(v) => v.take(),
        None => doc,
    };
    serde_json::from_value(value).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn report_for(settings: MeshSettings, target: &TransferMatrix) -> Result<CompileReport, CliError> {
    let achieved = forward(&MeshConfig::ideal(settings.topology())?, &settings)?.effective;
    let residual = achieved.gauge_residual(target);
    Ok(CompileReport {
        schema_version: meshlab_core::SCHEMA_VERSION,
        settings,
        residual,
        feasible: residual <= Tolerances::default().residual,
        diagnostics: Vec::new(),
        offending_cell: None,
    })
}

fn compile(ctx: &Context, a: CompileArgs) -> Result<String, CliError> {
    if ctx.format(Format::Json) != Format::Json {
        return Err(CliError::usage("compile writes JSON only"));
    }
    let tol = Tolerances::default();
    let (what, report) = if let Some(items) = &a.target.xgate {
        let spec = gate_spec(items)?;
        let target = xgate_matrix(spec.d, spec.n);
        (format!("X^{} on d={}", spec.n, spec.d), report_for(xgate_settings(spec)?, &target)?)
    } else if let Some(item) = &a.target.lossy_bs {
        let spec = lossy_spec(item)?;
        let target = lossy_bs_matrix(spec.alpha);
        (format!("lossy beam splitter alpha={}", spec.alpha), report_for(lossy_bs_settings(spec)?, &target)?)
    } else {
        let path = a.target.unitary.as_ref().expect("clap group");
        let target: TransferMatrix = serde_json::from_value(read_json(path)?)
            .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
        match a.topology {
            TopologyArg::Triangular => {
                let settings = reck_decompose(&target, &tol)?;
                (format!("{}x{} unitary on triangular mesh", target.rows(), target.cols()), report_for(settings, &target)?)
            }
            TopologyArg::Blass => {
                if !target.is_square() {
                    return Err(CliError::invalid("blass synthesis needs a square matrix"));
                }
                let config = MeshConfig::ideal(Topology::Blass { d: target.rows() })?;
                (format!("{}x{} matrix on blass mesh", target.rows(), target.cols()), blass_synthesize(&target, &config, &tol)?)
            }
        }
    };
    let path = ctx.write_json("settings.json", &report)?;
    if !report.feasible {
        let mut msg = format!("{what}: infeasible, residual {:.3e}", report.residual);
        if let Some(cell) = report.offending_cell {
            msg.push_str(&format!(", offending cell {cell}"));
        }
        for note in &report.diagnostics {
            msg.push_str(&format!("\n  cell {}: {}", note.cell, note.note));
        }
        return Err(CliError::invalid(msg));
    }
    Ok(format!("compiled {what}: residual {:.3e}, settings in {}", report.residual, path.display()))
}

/// Mesh model for a settings file: ideal cells, or cells sampled with the run seed.
fn mesh_for(ctx: &Context, settings: &MeshSettings, fabricated: bool) -> Result<MeshConfig, CliError> {
    if fabricated {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed());
        Ok(ctx.config.fabrication.sample_mesh(settings.topology(), &mut rng)?)
    } else {
        Ok(MeshConfig::ideal(settings.topology())?)
    }
}

#[derive(Serialize)]
struct SimulateOutput {
    topology: Topology,
    transfer_matrix: TransferMatrix,
    fock: Option<FockDistribution>,
}

fn simulate(ctx: &Context, a: SimulateArgs) -> Result<String, CliError> {
    let settings = read_settings(&a.settings)?;
    let t = forward(&mesh_for(ctx, &settings, a.fabricated)?, &settings)?.effective;
    let fock = match &a.photons {
        Some(p) if p.len() != t.cols() => {
            return Err(CliError::usage(format!("--photons needs {} entries, got {}", t.cols(), p.len())))
        }
        Some(p) => Some(output_distribution(&t, p)?),
        None => None,
    };
    let summary = format!(
        "{}x{} transfer matrix, max singular value {:.6}",
        t.rows(),
        t.cols(),
        t.max_singular_value()
    );
    let path = match ctx.format(Format::Json) {
        Format::Json => ctx.write_json(
            "simulate.json",
            SimulateOutput {
                topology: settings.topology(),
                transfer_matrix: t,
                fock,
            },
        )?,
        Format::Csv => {
            let (path, mut w) = ctx.csv_file("simulate.csv")?;
            write_header(&mut w, &ctx.header())?;
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["output", "input", "re", "im", "power"])?;
            for i in 0..t.cols() {
                for j in 0..t.rows() {
                    let z = t.get(j, i);
                    csv.serialize((j, i, z.re, z.im, z.norm_sqr()))?;
                }
            }
            csv.flush()?;
            if let Some(dist) = fock {
                let (_, mut w) = ctx.csv_file("fock.csv")?;
                write_header(&mut w, &ctx.header())?;
                let mut csv = csv::Writer::from_writer(w);
                csv.write_record(["pattern", "probability"])?;
                for (pattern, p) in &dist.outcomes {
                    let pat: Vec<String> = pattern.iter().map(|k| k.to_string()).collect();
                    csv.write_record([pat.join(" "), p.to_string()])?;
                }
                csv.flush()?;
            }
            path
        }
    };
    Ok(format!("{summary}, written to {}", path.display()))
}

fn write_header<W: std::io::Write>(w: &mut W, lines: &[String]) -> Result<(), CliError> {
    for line in lines {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

fn hom(ctx: &Context, a: HomArgs) -> Result<String, CliError> {
    let t = if let Some(path) = &a.target.settings {
        let s = read_settings(path)?;
        forward(&MeshConfig::ideal(s.topology())?, &s)?.effective
    } else {
        let spec = lossy_spec(a.target.lossy_bs.as_deref().expect("clap group"))?;
        let s = lossy_bs_settings(spec)?;
        forward(&MeshConfig::ideal(s.topology())?, &s)?.effective
    };
    let (rows, cols) = t.dims();
    if a.inputs.len() != 2 || a.outputs.len() != 2 {
        return Err(CliError::usage("--inputs and --outputs take two modes each, as a,b"));
    }
    if let Some(&m) = a.inputs.iter().find(|&&m| m >= cols) {
        return Err(CliError::usage(format!("input mode {m} outside 0..{cols}")));
    }
    if let Some(&m) = a.outputs.iter().find(|&&m| m >= rows) {
        return Err(CliError::usage(format!("output mode {m} outside 0..{rows}")));
    }
    let cfg = &ctx.config.hom;
    let mut source = cfg.source;
    source.v_src = a.v_src.unwrap_or(source.v_src);
    source.dip_sigma = a.sigma.unwrap_or(source.dip_sigma);
    let (lo, hi) = (a.delay_min.unwrap_or(cfg.delay_min), a.delay_max.unwrap_or(cfg.delay_max));
    let n = a.points.unwrap_or(cfg.delay_points);
    if n < 2 || !(hi > lo) {
        return Err(CliError::usage(format!("delay grid needs min < max and at least 2 points, got {lo}..{hi} with {n}")));
    }
    let delays: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let scan = hom_scan(
        &t,
        (a.inputs[0], a.inputs[1]),
        (a.outputs[0], a.outputs[1]),
        &source,
        &delays,
        a.pulses.or(cfg.pulses),
    )?;
    let path = match ctx.format(Format::Csv) {
        Format::Json => ctx.write_json("hom.json", &scan)?,
        Format::Csv => {
            let (path, w) = ctx.csv_file("hom.csv")?;
            scan.write_csv(w, &ctx.header())?;
            path
        }
    };
    let kind = serde_json::to_value(scan.kind)?;
    Ok(format!(
        "visibility {:.6} ({}), written to {}",
        scan.visibility,
        kind.as_str().unwrap_or_default(),
        path.display()
    ))
}

#[derive(Serialize)]
struct TruthOutput {
    measured: meshlab_core::quantum::TruthTable,
    theory: meshlab_core::quantum::TruthTable,
    fidelity: meshlab_core::quantum::FidelityReport,
}

fn truth(ctx: &Context, a: TruthTableArgs) -> Result<String, CliError> {
    let settings = read_settings(&a.settings)?;
    let t = forward(&mesh_for(ctx, &settings, a.fabricated)?, &settings)?.effective;
    let theory = match a.expect_shift {
        Some(n) => {
            let spec = GateSpec::new(t.rows(), n)?;
            xgate_matrix(spec.d, spec.n)
        }
        None => forward(&MeshConfig::ideal(settings.topology())?, &settings)?.effective,
    };
    let measured = truth_table(&t)?;
    let theory = truth_table(&theory)?;
    let fidelity = gate_fidelity(&measured, &theory)?;
    let summary = format!("fidelity {:.6}", fidelity.gate_fidelity);
    let path = match ctx.format(Format::Csv) {
        Format::Json => ctx.write_json("truth_table.json", TruthOutput { measured, theory, fidelity })?,
        Format::Csv => {
            let (path, w) = ctx.csv_file("truth_table.csv")?;
            let mut header = ctx.header();
            header.push(format!("gate fidelity: {}", fidelity.gate_fidelity));
            measured.write_csv(w, &header)?;
            path
        }
    };
    Ok(format!("{summary}, written to {}", path.display()))
}

fn calibrate(ctx: &Context, a: CalibrateArgs) -> Result<String, CliError> {
    let cfg = &ctx.config.calibrate;
    let d = a.d.unwrap_or(cfg.d);
    let noise = match a.noise {
        Some(NoiseArg::Poisson) => Noise::Poisson,
        Some(NoiseArg::Noiseless) => Noise::Noiseless,
        None => cfg.noise,
    };
    let mut opts = cfg.options;
    opts.points = a.points.unwrap_or(opts.points);
    opts.shots = a.shots.unwrap_or(opts.shots);
    let mut device = VirtualDevice::sample(d, &ctx.config.fabrication, ctx.seed(), noise)?;
    let table = calibrate_mesh(&mut device, &opts)?;
    let summary = table.summary();
    let path = match ctx.format(Format::Json) {
        Format::Json => ctx.write_json("calibration.json", &table)?,
        Format::Csv => {
            let (path, mut w) = ctx.csv_file("calibration.csv")?;
            write_header(&mut w, &ctx.header())?;
            write_table_csv(w, &table)?;
            path
        }
    };
    Ok(format!(
        "table complete: {}/{} cells, {} flagged, mean coupler ratio {:.4}, written to {}",
        table.entries().count(),
        table.topology.cell_count(),
        summary.flagged_cells,
        summary.coupler_ratio.mean,
        path.display()
    ))
}

fn write_table_csv<W: std::io::Write>(w: W, table: &CalibrationTable) -> Result<(), CliError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "row", "col", "a", "b", "c", "d", "ext_c", "ext_d", "eta1", "eta2", "phase_range", "flags",
    ])?;
    for e in table.entries() {
        let flags: Vec<String> = e
            .flags
            .iter()
            .map(|f| serde_json::to_value(f).map(|v| v["flag"].as_str().unwrap_or_default().to_string()))
            .collect::<Result<_, _>>()?;
        csv.write_record([
            e.cell.row.to_string(),
            e.cell.col.to_string(),
            e.internal.a.to_string(),
            e.internal.b.to_string(),
            e.internal.c.to_string(),
            e.internal.d_coef.to_string(),
            e.external.c.to_string(),
            e.external.d_coef.to_string(),
            e.couplers.0.to_string(),
            e.couplers.1.to_string(),
            e.phase_range.to_string(),
            flags.join(" "),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

fn complexity(ctx: &Context, a: ComplexityArgs) -> Result<String, CliError> {
    let cfg = &ctx.config.complexity;
    let file = match a.platforms.as_ref().or(cfg.platforms.as_ref()) {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))?;
            PlatformFile::from_json(&text)?
        }
        None => default_platforms(),
    };
    if file.platforms.is_empty() {
        return Err(CliError::invalid("platform file lists no platforms"));
    }
    let grid = log_grid(
        a.r_min.unwrap_or(cfg.r_min),
        a.r_max.unwrap_or(cfg.r_max),
        a.points.unwrap_or(cfg.points),
    )
    .map_err(|e| CliError::usage(e.to_string()))?;
    let curve = complexity_curve(&file.platforms, &grid, &file.reference_points)?;
    let best = curve
        .rows
        .iter()
        .max_by(|x, y| x.c_f.total_cmp(&y.c_f))
        .expect("non-empty grid");
    let summary = format!("max c_f {:.4e} ({} at R = {} {})", best.c_f, best.platform, best.r, best.radius_unit.label());
    let path = match ctx.format(Format::Csv) {
        Format::Json => ctx.write_json("complexity.json", &curve)?,
        Format::Csv => {
            let (path, w) = ctx.csv_file("complexity.csv")?;
            curve.write_csv(w, &ctx.header())?;
            path
        }
    };
    Ok(format!("{summary}, written to {}", path.display()))
}
