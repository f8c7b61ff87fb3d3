use crate::error::{MeshError, Result};
use crate::matrix::{TransferMatrix, C64};
use crate::mesh::topology::{MeshConfig, MeshSettings, Topology};

/// Result of evaluating a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// All waveguides: `2d × 2d` for Blass, `d × d` for triangular.
    pub full: TransferMatrix,
    /// Input → output block, `d × d`.
    pub effective: TransferMatrix,
}

/// Evaluates the transfer matrices of `config` programmed with `settings`.
pub fn forward(config: &MeshConfig, settings: &MeshSettings) -> Result<Forward> {
    settings.check_against(config)?;
    let topo = config.topology();
    let d = topo.d();
    let mut full = TransferMatrix::identity(topo.mode_count());
    for coord in topo.cell_order() {
        let params = config.cell(coord).expect("validated config");
        let setting = settings.get(coord).expect("checked key set");
        let (a, b) = topo.modes_of(coord);
        full.apply_two_mode(a, b, &params.matrix(setting));
    }
    let out_offset = match topo {
        Topology::Blass { .. } => d,
        Topology::Triangular { .. } => 0,
    };
    apply_output_phases(&mut full, out_offset, settings.output_phases());
    let effective = full.block(out_offset..out_offset + d, 0..d);
    Ok(Forward { full, effective })
}

fn apply_output_phases(full: &mut TransferMatrix, offset: usize, phases: &[f64]) {
    for (k, &p) in phases.iter().enumerate() {
        let e = C64::from_polar(1.0, p);
        for c in 0..full.cols() {
            let v = full.get(offset + k, c) * e;
            full.set(offset + k, c, v);
        }
    }
}

/// Propagates light injected in input `input` and returns the amplitude on
/// every waveguide of the full model. Cheaper than [`forward`] when only one
/// column is needed.
pub fn propagate_input(config: &MeshConfig, settings: &MeshSettings, input: usize) -> Result<Vec<C64>> {
    settings.check_against(config)?;
    let topo = config.topology();
    if input >= topo.d() {
        return Err(MeshError::Domain(format!("input {input} outside 0..{}", topo.d())));
    }
    let mut v = vec![C64::new(0.0, 0.0); topo.mode_count()];
    v[input] = C64::new(1.0, 0.0);
    for coord in topo.cell_order() {
        let m = config.cell(coord).expect("validated config").matrix(settings.get(coord).expect("checked"));
        let (a, b) = topo.modes_of(coord);
        let (x, y) = (v[a], v[b]);
        v[a] = m[0][0] * x + m[0][1] * y;
        v[b] = m[1][0] * x + m[1][1] * y;
    }
    let offset = match topo {
        Topology::Blass { d } => d,
        Topology::Triangular { .. } => 0,
    };
    for (k, &p) in settings.output_phases().iter().enumerate() {
        v[offset + k] *= C64::from_polar(1.0, p);
    }
    Ok(v)
}
