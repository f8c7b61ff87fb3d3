use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compiler::{xgate_matrix, xgate_settings, GateSpec};
use crate::error::{MeshError, Result};
use crate::matrix::{complex_vec, TransferMatrix, C64};
use crate::mesh::{forward, FabricationModel, Topology};

/// Single-photon output statistics, `p[j][i]` = P(output `j` | input `i`),
/// normalized over detected photons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTable {
    pub p: Vec<Vec<f64>>,
    /// Detected fraction per input before normalization.
    pub transmission: Vec<f64>,
}

impl TruthTable {
    pub fn dim(&self) -> usize {
        self.transmission.len()
    }

    /// `input,output,probability` rows after `#` comment lines.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["input", "output", "probability"])?;
        for i in 0..self.dim() {
            for (j, row) in self.p.iter().enumerate() {
                csv.serialize((i, j, row[i]))?;
            }
        }
        csv.flush()?;
        Ok(())
    }
}

pub fn truth_table(t: &TransferMatrix) -> Result<TruthTable> {
    let (rows, cols) = t.dims();
    if rows != cols || rows < 2 {
        return Err(MeshError::Domain(format!("truth table needs a square matrix of size ≥ 2, got {rows}x{cols}")));
    }
    let mut p = vec![vec![0.0; cols]; rows];
    let mut transmission = Vec::with_capacity(cols);
    for i in 0..cols {
        let total: f64 = (0..rows).map(|j| t.power(j, i)).sum();
        if !(total > 1e-300) {
            return Err(MeshError::Degenerate(format!("input {i} reaches no output")));
        }
        for (j, row) in p.iter_mut().enumerate() {
            row[i] = t.power(j, i) / total;
        }
        transmission.push(total);
    }
    Ok(TruthTable { p, transmission })
}

/// Per-input Bhattacharyya overlaps and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub per_input: Vec<f64>,
    pub gate_fidelity: f64,
}

/// `F_i = Σ_j √(p_exp[j][i]·p_th[j][i])`, averaged over inputs `i`.
pub fn gate_fidelity(exp: &TruthTable, th: &TruthTable) -> Result<FidelityReport> {
    let d = exp.dim();
    if th.dim() != d || exp.p.len() != th.p.len() {
        return Err(MeshError::Domain(format!(
            "truth tables have different sizes: {} and {}",
            d,
            th.dim()
        )));
    }
    let per_input: Vec<f64> = (0..d)
        .map(|i| {
            exp.p
                .iter()
                .zip(&th.p)
                .map(|(a, b)| (a[i].max(0.0) * b[i].max(0.0)).sqrt())
                .sum::<f64>()
                .min(1.0)
        })
        .collect();
    let gate_fidelity = per_input.iter().sum::<f64>() / d as f64;
    Ok(FidelityReport { per_input, gate_fidelity })
}

/// Result of sending one photon in a superposition of input modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionOutput {
    #[serde(with = "complex_vec")]
    pub amplitudes: Vec<C64>,
    /// Output probabilities normalized over detected photons.
    pub probabilities: Vec<f64>,
    pub loss: f64,
}

pub fn superposition_evolve(t: &TransferMatrix, amplitudes: &[C64]) -> Result<SuperpositionOutput> {
    let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(MeshError::Validation(format!("input state has norm² {norm}, expected 1")));
    }
    let out = t.apply(amplitudes)?;
    let detected: f64 = out.iter().map(|a| a.norm_sqr()).sum();
    if !(detected > 1e-300) {
        return Err(MeshError::Degenerate("input state reaches no output".into()));
    }
    Ok(SuperpositionOutput {
        probabilities: out.iter().map(|a| a.norm_sqr() / detected).collect(),
        amplitudes: out,
        loss: (1.0 - detected).max(0.0),
    })
}

/// `|⟨a|b⟩|² / (‖a‖²‖b‖²)`.
pub fn state_fidelity(a: &[C64], b: &[C64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MeshError::Domain(format!("state sizes differ: {} and {}", a.len(), b.len())));
    }
    let na: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum();
    if na == 0.0 || nb == 0.0 {
        return Err(MeshError::Degenerate("zero state".into()));
    }
    let overlap: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    Ok(overlap.norm_sqr() / (na * nb))
}

/// Gate fidelities of an X-gate on sampled triangular meshes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloFidelity {
    pub spec: GateSpec,
    pub seed: u64,
    pub fidelities: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Programs the phases compiled for ideal cells onto meshes whose couplers
/// are drawn from `fab`, and compares each truth table with the ideal gate.
/// Trial `k` uses stream `k` of a ChaCha8 generator seeded with `seed`.
pub fn gate_fidelity_monte_carlo(
    spec: GateSpec,
    fab: &FabricationModel,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloFidelity> {
    if trials == 0 {
        return Err(MeshError::Domain("at least one trial is needed".into()));
    }
    let settings = xgate_settings(spec)?;
    let ideal = truth_table(&xgate_matrix(spec.d, spec.n))?;
    let topo = Topology::Triangular { d: spec.d };
    let mut fidelities = Vec::with_capacity(trials);
    for k in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let config = fab.sample_mesh(topo, &mut rng)?;
        let t = forward(&config, &settings)?.effective;
        fidelities.push(gate_fidelity(&truth_table(&t)?, &ideal)?.gate_fidelity);
    }
    let mean = fidelities.iter().sum::<f64>() / trials as f64;
    let std = (fidelities.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / trials as f64).sqrt();
    Ok(MonteCarloFidelity { spec, seed, fidelities, mean, std })
}
