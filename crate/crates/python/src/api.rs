//! Plain Rust layer behind the Python functions. Results are JSON values so the
//! binding layer only converts containers.

use serde_json::{json, Value};
use whslab::cli::{self, Command, ExperimentConfig};
use whslab::forms::{Grid, Route, WittenOperator};
use whslab::manifold::{find_critical_points, ClosedOneForm, SampleManifold, ScalarField};
use whslab::morse::{
    build_morse_complex, check_morse_inequalities, cohomology, FlowOptions, MorseComplex,
    OrientationChoice,
};
use whslab::oscillator::{oscillator_spectrum, OscillatorModel};
use whslab::spectra::{self, small_cluster, EigenOptions, SMALL_THRESHOLD};
use whslab::whs::{self, CellOptions, ScalingConvention, WhsSetup};
use whslab::{Error, Result};

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::InvalidArgument(e.to_string()))
}

pub fn field(name: &str, params: &[f64], dim: usize) -> Result<ScalarField> {
    ScalarField::from_catalog(name, params, &SampleManifold::standard(dim)?)
}

fn grid_for(h: &ScalarField, grid: Option<usize>) -> Result<Grid> {
    let n = h.manifold().dim();
    Grid::uniform(h.manifold(), grid.unwrap_or(if n == 1 { 255 } else { 95 }))
}

fn complex(h: &ScalarField) -> Result<MorseComplex> {
    let pts = find_critical_points(h, 64, 1e-10)?;
    build_morse_complex(
        h,
        &pts,
        &OrientationChoice::standard(&pts),
        &FlowOptions::default(),
    )
}

pub fn oscillator(n: usize, k: usize, q: usize, t: f64, count: usize) -> Result<Vec<(f64, u64)>> {
    Ok(oscillator_spectrum(&OscillatorModel::new(n, k, q, t)?, count).entries)
}

pub fn critical_points(h: &ScalarField) -> Result<Value> {
    to_value(&find_critical_points(h, 64, 1e-10)?)
}

pub fn morse_complex(h: &ScalarField) -> Result<Value> {
    let cx = complex(h)?;
    let betti = cohomology(&cx);
    let ineq = check_morse_inequalities(&cx.counts(), &betti)?;
    Ok(json!({
        "points": to_value(&cx.points)?,
        "generators": cx.generators,
        "incidence": cx.incidence,
        "counts": cx.counts(),
        "betti": betti,
        "boundary_squared_defect": cx.boundary_squared_defect(),
        "inequalities": to_value(&ineq)?,
    }))
}

/// Small cluster of the deformed Laplacian for `dh + Σ c_i dθ_i`.
pub fn small_spectrum(
    h: Option<&ScalarField>,
    harmonic: Vec<f64>,
    dim: usize,
    q: usize,
    t: f64,
    grid: Option<usize>,
) -> Result<Value> {
    let harmonic = if harmonic.is_empty() {
        vec![0.0; dim]
    } else {
        harmonic
    };
    let alpha = ClosedOneForm::new(h.cloned(), harmonic)?;
    let m = SampleManifold::standard(dim)?;
    let g = Grid::uniform(&m, grid.unwrap_or(if dim == 1 { 255 } else { 95 }))?;
    let op = WittenOperator::assemble(&g, q, t, &alpha, Route::Direct)?;
    let c = small_cluster(&op, SMALL_THRESHOLD, &EigenOptions::default())?;
    Ok(json!({
        "small": c.small,
        "first_large": c.first_large,
        "ratio": c.ratio,
        "eigenvalues": c.spectrum.eigenvalues,
    }))
}

pub fn gap_sweep(h: &ScalarField, q: usize, t_grid: &[f64], grid: Option<usize>) -> Result<Value> {
    let g = grid_for(h, grid)?;
    let r = spectra::gap_sweep(
        &g,
        &ClosedOneForm::exact(h.clone()),
        q,
        t_grid,
        &EigenOptions::default(),
    )?;
    to_value(&r)
}

pub fn whs_compare(
    h: &ScalarField,
    t_grid: &[f64],
    convention: &str,
    grid: Option<usize>,
) -> Result<Value> {
    let convention: ScalingConvention = convention.parse()?;
    let mut setup = WhsSetup::new(
        grid_for(h, grid)?,
        h.clone(),
        complex(h)?,
        &CellOptions::default(),
    )?;
    setup.convention = convention;
    to_value(&whs::whs_compare(&setup, None, t_grid)?)
}

/// Runs a CLI command with `key = value` settings; returns the exit code and report.
pub fn run(command: &str, settings: &[(String, String)]) -> Result<(i32, Value)> {
    let command = Command::parse(command)?;
    let mut cfg = ExperimentConfig::default();
    for (k, v) in settings {
        cfg.set(k, v)?;
    }
    let report = cli::run(command, cfg)?;
    Ok((report.exit_code(), to_value(&report)?))
}
