//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::manifold::{ClosedOneForm, SampleManifold, ScalarField};
use crate::whs::ScalingConvention;

/// Artifact kinds a run may emit besides the manifest and report.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl Format {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" => Ok(Self::Svg),
            other => Err(Error::Config(format!("unknown format `{other}`"))),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
            Self::Svg => "svg",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Oscillator,
    Spectrum,
    GapSweep,
    MorseComplex,
    Inequalities,
    Whs,
    All,
}

impl Command {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "oscillator" => Self::Oscillator,
            "spectrum" => Self::Spectrum,
            "gap-sweep" => Self::GapSweep,
            "morse-complex" => Self::MorseComplex,
            "inequalities" => Self::Inequalities,
            "whs" => Self::Whs,
            "all" => Self::All,
            other => return Err(Error::Config(format!("unknown command `{other}`"))),
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Oscillator => "oscillator",
            Self::Spectrum => "spectrum",
            Self::GapSweep => "gap-sweep",
            Self::MorseComplex => "morse-complex",
            Self::Inequalities => "inequalities",
            Self::Whs => "whs",
            Self::All => "all",
        }
    }
}

/// Every knob of a run. Empty lists mean "command default" until [`resolve`](Self::resolve).
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Torus dimension.
    pub dim: usize,
    pub periods: Vec<f64>,
    /// Catalog name, or `none` for a purely harmonic 1-form.
    pub field: String,
    pub field_params: Vec<f64>,
    pub harmonic: Vec<f64>,
    pub grid: Vec<usize>,
    pub t: Vec<f64>,
    pub q: Vec<usize>,
    pub seed: u64,
    pub out: PathBuf,
    pub formats: Vec<Format>,
    pub scaling: ScalingConvention,
    /// Oscillator dimension.
    pub n: usize,
    /// Oscillator critical index.
    pub k: usize,
    /// Eigenvalues per table.
    pub count: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            periods: Vec::new(),
            field: "cos-sum".into(),
            field_params: Vec::new(),
            harmonic: Vec::new(),
            grid: Vec::new(),
            t: Vec::new(),
            q: Vec::new(),
            seed: 42,
            out: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json, Format::Svg],
            scaling: ScalingConvention::default(),
            n: 1,
            k: 0,
            count: 5,
        }
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("bad value for `{key}`: `{value}`"))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| bad(key, value)))
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// `a:b:step`, inclusive of `b` up to rounding.
fn t_range(value: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = value
        .split(':')
        .map(|s| s.trim().parse().map_err(|_| bad("t-grid", value)))
        .collect::<Result<_>>()?;
    let [a, b, step] = parts[..] else {
        return Err(bad("t-grid", value));
    };
    if !(step > 0.0 && b >= a && a.is_finite() && b.is_finite()) {
        return Err(bad("t-grid", value));
    }
    let m = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=m).map(|i| a + i as f64 * step).collect())
}

impl ExperimentConfig {
    /// Applies one `key = value` setting. Keys accept `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let num = |v: &str| -> Result<usize> { v.parse().map_err(|_| bad(&key, v)) };
        match key.as_str() {
            "manifold" => {
                self.dim = match value {
                    "circle" => 1,
                    "torus" => 2,
                    v => match v.strip_prefix("torus:") {
                        Some(d) => num(d)?,
                        None => return Err(bad(&key, value)),
                    },
                };
                if self.dim == 0 {
                    return Err(bad(&key, value));
                }
            }
            "periods" => self.periods = list(&key, value)?,
            "field" => {
                let (name, params) = value.split_once(':').unwrap_or((value, ""));
                self.field = name.trim().to_string();
                self.field_params = list(&key, params)?;
            }
            "harmonic" => self.harmonic = list(&key, value)?,
            "grid" => self.grid = list(&key, value)?,
            "t" => self.t = list(&key, value)?,
            "t-grid" => self.t = t_range(value)?,
            "q" => self.q = list(&key, value)?,
            "seed" => self.seed = value.parse().map_err(|_| bad(&key, value))?,
            "out" => self.out = PathBuf::from(value),
            "format" => {
                self.formats = value
                    .split(',')
                    .map(|s| Format::parse(s.trim()))
                    .collect::<Result<_>>()?
            }
            "scaling-convention" => self.scaling = value.parse()?,
            "n" => self.n = num(value)?,
            "k" => self.k = num(value)?,
            "count" => self.count = num(value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a whole file: one `key = value` per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Fills command-dependent defaults and checks consistency.
    pub fn resolve(&mut self, command: Command) -> Result<()> {
        let n = self.dim;
        if self.periods.is_empty() {
            self.periods = vec![std::f64::consts::TAU; n];
        }
        if self.periods.len() != n || self.periods.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::Config(format!(
                "need {n} positive periods, got {:?}",
                self.periods
            )));
        }
        if self.harmonic.is_empty() {
            self.harmonic = vec![0.0; n];
        }
        if self.harmonic.len() != n {
            return Err(Error::Config(format!(
                "need {n} harmonic coefficients, got {}",
                self.harmonic.len()
            )));
        }
        if self.grid.is_empty() {
            self.grid = vec![
                match n {
                    1 => 255,
                    2 => 95,
                    _ => 31,
                };
                n
            ];
        }
        if self.grid.len() == 1 && n > 1 {
            self.grid = vec![self.grid[0]; n];
        }
        if self.grid.len() != n || self.grid.iter().any(|&g| g < 4) {
            return Err(Error::Config(format!(
                "need {n} grid sizes of at least 4, got {:?}",
                self.grid
            )));
        }
        if self.t.is_empty() {
            self.t = match command {
                Command::Oscillator => vec![1.0],
                Command::Spectrum => vec![8.0],
                Command::GapSweep => t_range("4:12:2")?,
                Command::MorseComplex | Command::Inequalities => vec![0.0],
                Command::Whs | Command::All => vec![5.0, 10.0, 20.0],
            };
        }
        if self.t.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
            return Err(Error::Config(format!(
                "t values must be >= 0: {:?}",
                self.t
            )));
        }
        if self.q.is_empty() {
            self.q = match command {
                Command::Oscillator => vec![self.k],
                Command::GapSweep => vec![0],
                _ => (0..=n).collect(),
            };
        }
        let qmax = if command == Command::Oscillator {
            self.n
        } else {
            n
        };
        if let Some(q) = self.q.iter().find(|&&q| q > qmax) {
            return Err(Error::Config(format!(
                "degree {q} exceeds dimension {qmax}"
            )));
        }
        if command == Command::Oscillator && (self.n == 0 || self.k > self.n) {
            return Err(Error::Config(format!(
                "oscillator needs 0 <= k <= n, n >= 1 (n={}, k={})",
                self.n, self.k
            )));
        }
        if self.formats.is_empty() {
            return Err(Error::Config("no output format".into()));
        }
        self.field_spec()?;
        Ok(())
    }

    pub fn manifold(&self) -> Result<SampleManifold> {
        SampleManifold::torus(self.periods.clone()).map_err(|e| Error::Config(e.to_string()))
    }

    /// The scalar field, or `None` for `field = none`.
    pub fn scalar_field(&self) -> Result<Option<ScalarField>> {
        if self.field == "none" {
            return Ok(None);
        }
        ScalarField::from_catalog(&self.field, &self.field_params, &self.manifold()?)
            .map(Some)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn one_form(&self) -> Result<ClosedOneForm> {
        ClosedOneForm::new(self.scalar_field()?, self.harmonic.clone())
            .map_err(|e| Error::Config(e.to_string()))
    }

    fn field_spec(&self) -> Result<()> {
        if self.field == "none" && self.harmonic.iter().all(|&c| c == 0.0) {
            return Err(Error::Config(
                "field = none needs a nonzero harmonic part".into(),
            ));
        }
        self.one_form().map(drop)
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    /// Canonical `key = value` rendering; parsing it yields `self` again.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("manifold", format!("torus:{}", self.dim));
        put("periods", join(&self.periods));
        let field = if self.field_params.is_empty() {
            self.field.clone()
        } else {
            format!("{}:{}", self.field, join(&self.field_params))
        };
        put("field", field);
        put("harmonic", join(&self.harmonic));
        put("grid", join(&self.grid));
        put("t", join(&self.t));
        put("q", join(&self.q));
        put("seed", self.seed.to_string());
        put("out", self.out.display().to_string());
        put(
            "format",
            self.formats
                .iter()
                .map(|f| f.as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        put("scaling-convention", self.scaling.to_string());
        put("n", self.n.to_string());
        put("k", self.k.to_string());
        put("count", self.count.to_string());
        s
    }

    /// SHA-256 of the manifest without the `out` line, hex encoded.
    pub fn digest(&self) -> String {
        let body: String = self
            .manifest()
            .lines()
            .filter(|l| !l.starts_with("out ="))
            .map(|l| format!("{l}\n"))
            .collect();
        hex::encode(Sha256::digest(body.as_bytes()))
    }
}
