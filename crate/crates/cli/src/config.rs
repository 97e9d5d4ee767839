//! Run configuration: a TOML document with one section per concern, dotted
//! `key=value` overrides, and builders for the library types.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ncq::density::{AlphaMeasure, PathConstraint, PathDensity, Softness, DEFAULT_ALPHA_QUADRATURE};
use ncq::kernels::{KernelFamily, KernelSpec};
use ncq::model::{AlphaVector, TimeGrid};
use ncq::observables::{Observable, Stencil};
use ncq::oracle::{LatticeSpec, TriangleBudget};
use ncq::sampling::{SamplerConfig, SamplerMethod};
use ncq::systems::SystemSolution;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// A configuration problem pinned to the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

fn field<T>(name: &str, r: ncq::Result<T>) -> Result<T, FieldError> {
    r.map_err(|e| FieldError {
        field: name.to_string(),
        message: e.to_string(),
    })
}

fn invalid(name: &str, message: impl Into<String>) -> FieldError {
    FieldError {
        field: name.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub system: SystemSection,
    pub kernel: KernelSection,
    pub grid: GridSection,
    pub constraints: ConstraintsSection,
    pub sampler: SamplerSection,
    pub observable: ObservableSection,
    pub scan: ScanSection,
    pub sweep: SweepSection,
    pub study: StudySection,
    pub lattice: LatticeSection,
    pub oracle: OracleSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            system: SystemSection::default(),
            kernel: KernelSection::default(),
            grid: GridSection::default(),
            constraints: ConstraintsSection {
                pin: Some(PinSection::default()),
            },
            sampler: SamplerSection::default(),
            observable: ObservableSection::default(),
            scan: ScanSection::default(),
            sweep: SweepSection::default(),
            study: StudySection::default(),
            lattice: LatticeSection::default(),
            oracle: OracleSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub id: String,
    pub params: BTreeMap<String, f64>,
    pub alpha: AlphaSection,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            id: "harmonic_oscillator_1d".into(),
            params: BTreeMap::from([("omega".to_string(), 2.0), ("mass".to_string(), 1.0)]),
            alpha: AlphaSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaSection {
    /// `point_mass`, `box_uniform`, `gaussian_prior` or `lebesgue`.
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd: Option<Vec<f64>>,
    pub quadrature: usize,
}

impl Default for AlphaSection {
    fn default() -> Self {
        Self {
            kind: "point_mass".into(),
            values: None,
            lo: None,
            hi: None,
            mean: None,
            sd: None,
            quadrature: DEFAULT_ALPHA_QUADRATURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub family: String,
    pub m_delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trunc_radius: Option<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            family: "gaussian".into(),
            m_delta: 1.0,
            trunc_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub t_start: f64,
    pub t_end: f64,
    pub n_slices: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            t_start: 0.0,
            t_end: 1.0,
            n_slices: 11,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pin: Option<PinSection>,
}

/// Initial-condition pin. `mode = "alpha"` turns it into a point-mass α;
/// `mode = "path"` keeps it as a constraint on sampled values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinSection {
    pub time: f64,
    pub x0: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vec<f64>>,
    pub mode: String,
    /// `exact` or `kernel`.
    pub softness: String,
    /// Sharpness of a `kernel` pin; defaults to the main kernel's.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_delta: Option<f64>,
}

impl Default for PinSection {
    fn default() -> Self {
        Self {
            time: 0.0,
            x0: vec![1.0],
            v0: Some(vec![0.0]),
            mode: "alpha".into(),
            softness: "exact".into(),
            m_delta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub method: String,
    pub n_samples: usize,
    pub burn_in: usize,
    pub n_chains: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proposal_step: Option<f64>,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            method: "ancestral".into(),
            n_samples: 10_000,
            burn_in: 1_000,
            n_chains: 4,
            seed: 0,
            proposal_step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservableSection {
    /// `position`, `position_squared`, `energy`, or any of these prefixed
    /// with `path_average_`.
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    pub coord: usize,
    pub stencil: String,
}

impl Default for ObservableSection {
    fn default() -> Self {
        Self {
            kind: "position_squared".into(),
            t_index: None,
            time: None,
            coord: 0,
            stencil: "forward".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    pub points: usize,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            t_index: None,
            time: None,
            lo: None,
            hi: None,
            points: 2001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Kernel family swept; defaults to `kernel.family`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    pub m_values: Vec<f64>,
    /// Truncation radius times `m_delta`, for truncated Fejér sweeps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trunc_scale: Option<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            family: None,
            m_values: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            trunc_scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub slice_counts: Vec<usize>,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            slice_counts: vec![3, 5, 11, 21, 41],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    pub points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self {
            points: 21,
            lo: None,
            hi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    /// Run the built-in triangle battery rather than the configured density.
    pub builtin: bool,
    pub ancestral_samples: usize,
    pub metropolis_samples: usize,
    pub chains: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for OracleSection {
    fn default() -> Self {
        let b = TriangleBudget::default();
        Self {
            builtin: true,
            ancestral_samples: b.ancestral_samples,
            metropolis_samples: b.metropolis_samples,
            chains: b.metropolis_chains,
            burn_in: b.burn_in,
            seed: b.seed,
        }
    }
}

/// Parses a value the way it would appear on the right of `=` in TOML,
/// falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

/// Applies one `a.b.c=value` override to a raw document.
pub fn apply_override(doc: &mut Table, spec: &str) -> Result<(), FieldError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| invalid(spec, "overrides take the form key=value"))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(invalid(key, "empty key segment"));
    }
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| invalid(key, format!("`{p}` is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl Config {
    /// Parses a document (possibly empty) and applies overrides in order.
    pub fn load(text: &str, overrides: &[String]) -> Result<Self, FieldError> {
        let mut doc: Table = text.parse().map_err(|e: toml::de::Error| invalid("", e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Config = Config::deserialize(doc).map_err(|e| invalid("", e.to_string()))?;
        Ok(cfg)
    }

    /// The fully resolved document, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn system(&self) -> Result<SystemSolution, FieldError> {
        field("system", SystemSolution::from_id(&self.system.id, &self.system.params))
    }

    pub fn kernel(&self) -> Result<KernelSpec, FieldError> {
        let family = field("kernel.family", KernelFamily::parse(&self.kernel.family))?;
        let k = &self.kernel;
        field("kernel", KernelSpec::new(family, k.m_delta, k.trunc_radius))
    }

    pub fn grid(&self) -> Result<TimeGrid, FieldError> {
        let g = &self.grid;
        field("grid", TimeGrid::new(g.t_start, g.t_end, g.n_slices))
    }

    fn alpha_measure(&self, n: usize) -> Result<AlphaMeasure, FieldError> {
        let a = &self.system.alpha;
        let need = |name: &str, v: &Option<Vec<f64>>| {
            v.clone().ok_or_else(|| {
                invalid(&format!("system.alpha.{name}"), format!("required for kind `{}`", a.kind))
            })
        };
        match a.kind.as_str() {
            "point_mass" => match &a.values {
                Some(v) => Ok(AlphaMeasure::point(v.clone())),
                None if self.pin_mode()? == Some("alpha") => Ok(AlphaMeasure::point(vec![0.0; n])),
                None => Err(invalid(
                    "system.alpha.values",
                    "required for kind `point_mass` unless an alpha-mode pin supplies it",
                )),
            },
            "box_uniform" => Ok(AlphaMeasure::BoxUniform {
                lo: need("lo", &a.lo)?,
                hi: need("hi", &a.hi)?,
            }),
            "gaussian_prior" => Ok(AlphaMeasure::GaussianPrior {
                mean: need("mean", &a.mean)?,
                sd: need("sd", &a.sd)?,
            }),
            "lebesgue" => Ok(AlphaMeasure::Lebesgue),
            other => Err(invalid(
                "system.alpha.kind",
                format!("unknown alpha measure `{other}` (expected point_mass, box_uniform, gaussian_prior or lebesgue)"),
            )),
        }
    }

    fn pin_mode(&self) -> Result<Option<&str>, FieldError> {
        match &self.constraints.pin {
            None => Ok(None),
            Some(p) => match p.mode.as_str() {
                m @ ("alpha" | "path") => Ok(Some(m)),
                other => Err(invalid(
                    "constraints.pin.mode",
                    format!("unknown pin mode `{other}` (expected alpha or path)"),
                )),
            },
        }
    }

    pub fn density(&self) -> Result<PathDensity, FieldError> {
        let system = self.system()?;
        let kernel = self.kernel()?;
        let grid = self.grid()?;
        let mut measure = self.alpha_measure(system.n_constants())?;
        let mut constraints = Vec::new();
        if let (Some(pin), Some(mode)) = (&self.constraints.pin, self.pin_mode()?) {
            if mode == "alpha" {
                let v0 = pin
                    .v0
                    .as_ref()
                    .ok_or_else(|| invalid("constraints.pin.v0", "alpha-mode pins need both x0 and v0"))?;
                let alpha: AlphaVector = field("constraints.pin", system.pinned_alpha(&pin.x0, v0, pin.time))?;
                measure = AlphaMeasure::PointMass { alpha };
            } else {
                let i = field("constraints.pin.time", grid.index_of(pin.time))?;
                let softness = match pin.softness.as_str() {
                    "exact" => Softness::Exact,
                    "kernel" => Softness::Kernel(field(
                        "constraints.pin.m_delta",
                        kernel.with_m_delta(pin.m_delta.unwrap_or(kernel.m_delta())),
                    )?),
                    other => {
                        return Err(invalid(
                            "constraints.pin.softness",
                            format!("unknown softness `{other}` (expected exact or kernel)"),
                        ))
                    }
                };
                constraints.push(PathConstraint::position(i, pin.x0.clone(), softness));
                if let Some(v0) = &pin.v0 {
                    constraints.push(PathConstraint::velocity(i, v0.clone(), softness));
                }
            }
        }
        let d = field("kernel", PathDensity::new(system, grid, kernel, measure))?;
        let d = field("system.alpha.quadrature", d.with_alpha_quadrature(self.system.alpha.quadrature))?;
        field("constraints", d.with_constraints(constraints))
    }

    pub fn sampler(&self) -> Result<SamplerConfig, FieldError> {
        let s = &self.sampler;
        let cfg = SamplerConfig {
            method: field("sampler.method", SamplerMethod::parse(&s.method))?,
            n_samples: s.n_samples,
            burn_in: s.burn_in,
            proposal_step: s.proposal_step,
            n_chains: s.n_chains,
            seed: s.seed,
        };
        field("sampler", cfg.validate())?;
        Ok(cfg)
    }

    fn slice_index(&self, grid: &TimeGrid, section: &str, t_index: Option<usize>, time: Option<f64>) -> Result<usize, FieldError> {
        match (t_index, time) {
            (Some(_), Some(_)) => Err(invalid(section, "give either t_index or time, not both")),
            (Some(i), None) => field(&format!("{section}.t_index"), grid.check_index(i).map(|_| i)),
            (None, Some(t)) => field(&format!("{section}.time"), grid.index_of(t)),
            (None, None) => Ok(grid.mid_index()),
        }
    }

    /// The configured observable on `grid`. A `t_index` follows the time it
    /// denotes on the configured grid, so studies over several grids keep
    /// probing the same instant.
    pub fn observable_on(&self, grid: &TimeGrid) -> Result<Observable, FieldError> {
        let o = &self.observable;
        let base = self.grid()?;
        let time = match (o.t_index, o.time) {
            (Some(i), None) if grid != &base => {
                self.slice_index(&base, "observable", Some(i), None)?;
                Some(base.slice_time(i))
            }
            (i, t) => {
                if i.is_none() && t.is_none() && grid != &base {
                    Some(base.slice_time(base.mid_index()))
                } else {
                    t
                }
            }
        };
        let index = if time.is_some() && o.time.is_none() {
            self.slice_index(grid, "observable", None, time)?
        } else {
            self.slice_index(grid, "observable", o.t_index, o.time)?
        };
        let stencil = field("observable.stencil", Stencil::parse(&o.stencil))?;
        let (kind, average) = match o.kind.strip_prefix("path_average_") {
            Some(k) => (k, true),
            None => (o.kind.as_str(), false),
        };
        let obs = match kind {
            "position" => Observable::PositionAt { t_index: index, coord: o.coord },
            "position_squared" => Observable::PositionSquaredAt { t_index: index, coord: o.coord },
            "energy" => Observable::Energy { stencil, t_index: index },
            other => {
                return Err(invalid(
                    "observable.kind",
                    format!("unknown observable `{other}` (expected position, position_squared or energy, optionally prefixed with path_average_)"),
                ))
            }
        };
        let obs = if average { Observable::PathAverage(Box::new(obs)) } else { obs };
        field("observable", obs.validate(grid, self.system()?.dim()))?;
        Ok(obs)
    }

    pub fn observable(&self) -> Result<Observable, FieldError> {
        self.observable_on(&self.grid()?)
    }

    pub fn scan_index(&self) -> Result<usize, FieldError> {
        self.slice_index(&self.grid()?, "scan", self.scan.t_index, self.scan.time)
    }

    /// Scan interval: configured bounds, or the classical centre ± 4π/m_delta.
    pub fn scan_range(&self, density: &PathDensity, t_index: usize) -> Result<(f64, f64), FieldError> {
        let centre = field("scan", density.classical_spread(t_index, 0))?.0;
        let half = 4.0 * PI / density.kernel().m_delta();
        let lo = self.scan.lo.unwrap_or(centre - half);
        let hi = self.scan.hi.unwrap_or(centre + half);
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid("scan", format!("scan range ({lo}, {hi}) is empty or unbounded")));
        }
        Ok((lo, hi))
    }

    pub fn sweep_family(&self) -> Result<KernelFamily, FieldError> {
        let name = self.sweep.family.as_deref().unwrap_or(&self.kernel.family);
        field("sweep.family", KernelFamily::parse(name))
    }

    pub fn lattice(&self) -> Result<LatticeSpec, FieldError> {
        let l = &self.lattice;
        match (l.lo, l.hi) {
            (Some(lo), Some(hi)) => Ok(LatticeSpec::fixed(l.points, vec![(lo, hi); self.system()?.dim()])),
            (None, None) => Ok(LatticeSpec::auto(l.points)),
            _ => Err(invalid("lattice", "give both lo and hi or neither")),
        }
    }

    pub fn triangle_budget(&self) -> TriangleBudget {
        let o = &self.oracle;
        TriangleBudget {
            ancestral_samples: o.ancestral_samples,
            metropolis_samples: o.metropolis_samples,
            metropolis_chains: o.chains,
            burn_in: o.burn_in,
            seed: o.seed,
        }
    }
}
