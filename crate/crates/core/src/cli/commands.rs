use serde_json::json;

use super::config::{Command, ExperimentConfig, Format};
use super::output::{num, svg_plot, Axis, Csv, Series};
use super::Run;
use crate::error::{Error, Result};
use crate::forms::{Grid, Route, WittenOperator};
use crate::manifold::{count_by_index, find_critical_points, ClosedOneForm, ScalarField};
use crate::morse::{
    build_morse_complex, check_morse_inequalities, cohomology, FlowOptions, MorseComplex,
    OrientationChoice,
};
use crate::oscillator::{oscillator_spectrum, OscillatorModel};
use crate::spectra::{
    eigensolve_with, gap_sweep, small_cluster, EigenOptions, GAP_RATIO, SMALL_THRESHOLD,
};
use crate::whs::{whs_compare, CellOptions, WhsSetup};

/// Below this `t` the small-eigenvalue count is reported but not checked.
const COUNT_MIN_T: f64 = 8.0;
const KERNEL_EPS: f64 = 1e-8;

fn per_q(cfg: &ExperimentConfig, stem: &str, q: usize, ext: &str) -> String {
    if cfg.q.len() == 1 {
        format!("{stem}.{ext}")
    } else {
        format!("{stem}_q{q}.{ext}")
    }
}

fn eigen_opts(cfg: &ExperimentConfig) -> EigenOptions {
    EigenOptions {
        seed: cfg.seed,
        ..EigenOptions::default()
    }
}

fn grid(cfg: &ExperimentConfig) -> Result<Grid> {
    Grid::new(&cfg.manifold()?, &cfg.grid)
}

fn exact_field(cfg: &ExperimentConfig, what: &str) -> Result<ScalarField> {
    match cfg.scalar_field()? {
        Some(h) if cfg.harmonic.iter().all(|&c| c == 0.0) => Ok(h),
        _ => Err(Error::Config(format!(
            "{what} needs an exact 1-form (no harmonic part)"
        ))),
    }
}

fn morse_complex(h: &ScalarField) -> Result<MorseComplex> {
    let pts = find_critical_points(h, 64, 1e-10)?;
    build_morse_complex(
        h,
        &pts,
        &OrientationChoice::standard(&pts),
        &FlowOptions::default(),
    )
}

pub(super) fn dispatch(run: &mut Run, command: Command) -> Result<()> {
    match command {
        Command::Oscillator => oscillator(run),
        Command::Spectrum => spectrum(run),
        Command::GapSweep => gap(run),
        Command::MorseComplex => {
            let h = exact_field(&run.cfg, "morse-complex")?;
            complex_artifacts(run, &morse_complex(&h)?)
        }
        Command::Inequalities => {
            let h = exact_field(&run.cfg, "inequalities")?;
            inequalities(run, &morse_complex(&h)?)
        }
        Command::Whs => {
            let h = exact_field(&run.cfg, "whs")?;
            let cx = morse_complex(&h)?;
            whs(run, h, cx)
        }
        Command::All => {
            let h = exact_field(&run.cfg, "all")?;
            let cx = morse_complex(&h)?;
            complex_artifacts(run, &cx)?;
            inequalities(run, &cx)?;
            spectrum(run)?;
            whs(run, h, cx)
        }
    }
}

fn oscillator(run: &mut Run) -> Result<()> {
    let cfg = run.cfg.clone();
    for &q in &cfg.q {
        for &t in &cfg.t {
            let model = OscillatorModel::new(cfg.n, cfg.k, q, t)?;
            let spec = oscillator_spectrum(&model, cfg.count);
            let mut csv = Csv::new(&["eigenvalue", "multiplicity"]);
            for &(e, m) in &spec.entries {
                csv.row(&[num(e), m.to_string()]);
            }
            let name = if cfg.t.len() == 1 {
                per_q(&cfg, "oscillator", q, "csv")
            } else {
                format!("oscillator_q{q}_t{t}.csv")
            };
            run.emit(Format::Csv, &name, csv.into_string())?;
            let lattice = spec.entries.iter().all(|&(e, _)| {
                let s = e / (2.0 * t);
                s >= 0.0 && s.fract() == 0.0
            });
            run.check(
                format!("oscillator q={q} t={t}: eigenvalues in 2t N"),
                lattice,
                json!(spec.entries.iter().map(|e| e.0).collect::<Vec<_>>()),
            );
            let kernel = spec.kernel_dim();
            run.check(
                format!("oscillator q={q} t={t}: kernel dimension"),
                kernel == u64::from(q == cfg.k),
                json!(kernel),
            );
        }
    }
    Ok(())
}

/// Critical counts per degree when `α` is exact, zero when it is a nonzero constant
/// form (no zeros), `None` otherwise.
fn expected_small(cfg: &ExperimentConfig) -> Result<Option<Vec<usize>>> {
    let harmonic = cfg.harmonic.iter().any(|&c| c != 0.0);
    match (cfg.scalar_field()?, harmonic) {
        (Some(h), false) => {
            let pts = find_critical_points(&h, 64, 1e-10)?;
            Ok(Some(count_by_index(&pts, cfg.dim)))
        }
        (None, true) => Ok(Some(vec![0; cfg.dim + 1])),
        _ => Ok(None),
    }
}

fn spectrum(run: &mut Run) -> Result<()> {
    let cfg = run.cfg.clone();
    let grid = grid(&cfg)?;
    let alpha = cfg.one_form()?;
    let opts = eigen_opts(&cfg);
    let expected = expected_small(&cfg)?;
    let mut csv = Csv::new(&["q", "t", "index", "eigenvalue", "relative_residual"]);
    let mut docs = Vec::new();
    for &t in &cfg.t {
        for &q in &cfg.q {
            let op = WittenOperator::assemble(&grid, q, t, &alpha, Route::Direct)?;
            let cluster = small_cluster(&op, SMALL_THRESHOLD, &opts)?;
            let spec = if cluster.spectrum.eigenvalues.len() >= cfg.count {
                cluster.spectrum.clone()
            } else {
                eigensolve_with(&op, cfg.count, &opts)?
            };
            for (i, (e, r)) in spec
                .eigenvalues
                .iter()
                .zip(&spec.residuals)
                .enumerate()
                .take(cfg.count)
            {
                csv.row(&[
                    q.to_string(),
                    num(t),
                    (i + 1).to_string(),
                    num(*e),
                    num(r / spec.operator_norm),
                ]);
            }
            let min = spec.eigenvalues[0];
            run.check(
                format!("spectrum q={q} t={t}: nonnegative"),
                min >= -1e-9 * spec.operator_norm,
                json!(min),
            );
            if let (Some(m), true) = (&expected, t >= COUNT_MIN_T) {
                run.check(
                    format!("spectrum q={q} t={t}: small count"),
                    cluster.small.len() == m[q],
                    json!({ "count": cluster.small.len(), "expected": m[q] }),
                );
                run.check(
                    format!("spectrum q={q} t={t}: gap open"),
                    cluster.ratio < GAP_RATIO,
                    json!(cluster.ratio),
                );
            }
            docs.push(json!({
                "q": q,
                "t": t,
                "small": cluster.small,
                "first_large": cluster.first_large,
                "eigenvalues": spec.eigenvalues,
            }));
        }
    }
    run.emit(Format::Csv, "spectrum.csv", csv.into_string())?;
    run.emit(Format::Json, "spectrum.json", pretty(&docs)?)?;
    Ok(())
}

fn pretty<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

fn gap(run: &mut Run) -> Result<()> {
    let cfg = run.cfg.clone();
    if cfg.t.len() < 4 || !strictly_increasing(&cfg.t) {
        return Err(Error::Config(
            "gap-sweep needs an ascending t grid with at least 4 values".into(),
        ));
    }
    let grid = grid(&cfg)?;
    let alpha = cfg.one_form()?;
    let expected = expected_small(&cfg)?;
    for &q in &cfg.q {
        let report = gap_sweep(&grid, &alpha, q, &cfg.t, &eigen_opts(&cfg))?;
        let m = report.small_count();
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|i| format!("lambda_{i}")));
        header.push("first_large".into());
        let mut csv = Csv::new(&header);
        for (i, &t) in cfg.t.iter().enumerate() {
            let mut row = vec![num(t)];
            row.extend(report.small[i].iter().map(|&v| num(v)));
            row.push(num(report.first_large[i]));
            csv.row(&row);
        }
        run.emit(
            Format::Csv,
            &per_q(&cfg, "gap_sweep", q, "csv"),
            csv.into_string(),
        )?;
        run.emit(
            Format::Json,
            &per_q(&cfg, "gap_sweep", q, "json"),
            pretty(&report)?,
        )?;
        let series: Vec<Series> = (0..m)
            .map(|j| Series {
                label: format!("lambda_{}", j + 1),
                points: cfg
                    .t
                    .iter()
                    .zip(&report.small)
                    .map(|(&t, s)| (t, s[j]))
                    .collect(),
            })
            .collect();
        run.emit(
            Format::Svg,
            &per_q(&cfg, "gap_sweep", q, "svg"),
            svg_plot(
                &format!("small eigenvalues, q = {q}"),
                "t",
                "eigenvalue",
                Axis::Linear,
                Axis::Log,
                &series,
            ),
        )?;
        if let Some(m_q) = expected.as_ref().map(|e| e[q]) {
            run.check(
                format!("gap-sweep q={q}: small count"),
                m == m_q,
                json!({ "count": m, "expected": m_q }),
            );
        }
        if let Some(fit) = &report.decay {
            run.check(
                format!("gap-sweep q={q}: exponential decay"),
                fit.slope < 0.0 && fit.r_squared > 0.99,
                json!({ "slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared }),
            );
        }
        run.check(
            format!("gap-sweep q={q}: first large increasing"),
            strictly_increasing(&report.first_large),
            json!(report.first_large),
        );
        if let Some(fit) = &report.growth {
            run.check(
                format!("gap-sweep q={q}: linear growth"),
                fit.slope > 0.0 && fit.r_squared > 0.95,
                json!({ "slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared }),
            );
        }
    }
    Ok(())
}

/// Dimension of the numerical kernel of the flat Hodge Laplacian in degree `q`.
fn harmonic_count(grid: &Grid, q: usize, opts: &EigenOptions) -> Result<usize> {
    let n = grid.dim();
    let alpha = ClosedOneForm::harmonic_only(vec![0.0; n]);
    let op = WittenOperator::assemble(grid, q, 0.0, &alpha, Route::Direct)?;
    let c = small_cluster(&op, 0.5, opts)?;
    Ok(c.small.iter().filter(|&&v| v < KERNEL_EPS).count())
}

fn complex_artifacts(run: &mut Run, cx: &MorseComplex) -> Result<()> {
    let cfg = run.cfg.clone();
    let betti = cohomology(cx);
    let doc = json!({
        "field": cfg.field,
        "params": cfg.field_params,
        "periods": cfg.periods,
        "points": cx.points.iter().map(|p| json!({
            "coords": p.coords,
            "value": p.value,
            "index": p.index,
            "hess_eigs": p.hess_eigs,
        })).collect::<Vec<_>>(),
        "counts": cx.counts(),
        "generators": cx.generators,
        "incidence": cx.incidence,
        "betti": betti,
    });
    run.emit(Format::Json, "morse_complex.json", pretty(&doc)?)?;
    let defect = cx.boundary_squared_defect();
    run.check(
        "morse-complex: boundary squared".into(),
        defect == 0,
        json!(defect),
    );
    let grid = grid(&cfg)?;
    let opts = eigen_opts(&cfg);
    let harmonic = (0..=cx.dim())
        .map(|q| harmonic_count(&grid, q, &opts))
        .collect::<Result<Vec<_>>>()?;
    run.check(
        "morse-complex: betti equals harmonic count".into(),
        harmonic == betti,
        json!({ "betti": betti, "harmonic": harmonic }),
    );
    Ok(())
}

fn inequalities(run: &mut Run, cx: &MorseComplex) -> Result<()> {
    let m = cx.counts();
    let betti = cohomology(cx);
    let report = check_morse_inequalities(&m, &betti)?;
    let mut csv = Csv::new(&["N", "m_N", "betti_N", "value", "holds"]);
    for r in &report.rows {
        csv.row(&[
            r.n.to_string(),
            m[r.n].to_string(),
            betti[r.n].to_string(),
            r.value.to_string(),
            r.holds.to_string(),
        ]);
    }
    run.emit(Format::Csv, "inequalities.csv", csv.into_string())?;
    for r in &report.rows {
        run.check(format!("inequalities: N={}", r.n), r.holds, json!(r.value));
    }
    run.check(
        "inequalities: Euler characteristic".into(),
        report.euler_equal,
        json!(report.rows.last().map(|r| r.value)),
    );
    Ok(())
}

fn whs(run: &mut Run, h: ScalarField, cx: MorseComplex) -> Result<()> {
    let cfg = run.cfg.clone();
    if !strictly_increasing(&cfg.t) || cfg.t[0] <= 0.0 {
        return Err(Error::Config(
            "whs needs an ascending grid of positive t".into(),
        ));
    }
    let qs: Vec<usize> = cfg
        .q
        .iter()
        .copied()
        .filter(|&q| !cx.generators[q].is_empty())
        .collect();
    let mut setup = WhsSetup::new(grid(&cfg)?, h, cx, &CellOptions::default())?;
    setup.convention = cfg.scaling;
    setup.eigen = eigen_opts(&cfg);
    let bundles = whs_compare(&setup, Some(&qs), &cfg.t)?;

    let mut header = vec!["t".to_string(), "deviation".to_string()];
    for d in &bundles[0].degrees {
        header.extend(d.generators.iter().map(|g| format!("mass_q{}_x{g}", d.q)));
    }
    let mut csv = Csv::new(&header);
    for b in &bundles {
        let mut row = vec![num(b.t), num(b.deviation)];
        row.extend(
            b.degrees
                .iter()
                .flat_map(|d| d.exterior_mass.iter().map(|&v| num(v))),
        );
        csv.row(&row);
    }
    run.emit(Format::Csv, "whs.csv", csv.into_string())?;
    run.emit(Format::Json, "whs.json", pretty(&bundles)?)?;
    let mut series = vec![Series {
        label: "max over q".into(),
        points: bundles.iter().map(|b| (b.t, b.deviation)).collect(),
    }];
    for (i, d) in bundles[0].degrees.iter().enumerate() {
        series.push(Series {
            label: format!("q = {}", d.q),
            points: bundles
                .iter()
                .map(|b| (b.t, b.degrees[i].deviation))
                .collect(),
        });
    }
    run.emit(
        Format::Svg,
        "whs.svg",
        svg_plot(
            &format!("|L(t)R(t) - Id| ({})", cfg.scaling),
            "t",
            "deviation",
            Axis::Log,
            Axis::Log,
            &series,
        ),
    )?;

    let dev: Vec<f64> = bundles.iter().map(|b| b.deviation).collect();
    if dev.len() > 1 {
        run.check(
            "whs: deviation strictly decreasing".into(),
            dev.windows(2).all(|w| w[1] < w[0]),
            json!(dev),
        );
        // O(1/t) predicts the ratio of the end values; a factor-2 band either side
        let expect = cfg.t[cfg.t.len() - 1] / cfg.t[0];
        let ratio = dev[0] / dev[dev.len() - 1];
        run.check(
            "whs: deviation ratio".into(),
            ratio >= expect / 2.0 && ratio <= expect * 2.0,
            json!({ "ratio": ratio, "t_ratio": expect }),
        );
        for (i, d) in bundles[0].degrees.iter().enumerate() {
            let masses: Vec<Vec<f64>> = bundles
                .iter()
                .map(|b| b.degrees[i].exterior_mass.clone())
                .collect();
            let falling =
                (0..d.generators.len()).all(|g| masses.windows(2).all(|w| w[1][g] < w[0][g]));
            run.check(
                format!("whs q={}: exterior mass decreasing", d.q),
                falling,
                json!(masses),
            );
        }
    }
    for b in &bundles {
        for d in &b.degrees {
            run.check(
                format!("whs q={} t={}: localized", d.q, b.t),
                d.localized,
                json!(d.exterior_sup),
            );
            if b.t >= COUNT_MIN_T {
                run.check(
                    format!("whs q={} t={}: Int invertible on small subspace", d.q, b.t),
                    d.determinant.abs() > 1e-6,
                    json!(d.determinant),
                );
            }
        }
    }
    Ok(())
}
