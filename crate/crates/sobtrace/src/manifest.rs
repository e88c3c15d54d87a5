//! Plain-text experiment manifests.
//!
//! ```text
//! fields:
//!   X1: 1, 0, 0, 0
//!   X2: 0, 1, x1, 0
//!   T:  0, 0, 0, 1
//! domain:
//!   v = [-1, 1]
//!   delta = 0.2
//! experiment:
//!   time_field = T
//! ```
//!
//! `fields:` lines are `name: c1, ..., cd`; every other section holds
//! `key = value` lines. `#` starts a comment.

use std::collections::BTreeMap;
use std::path::Path;

use sobtrace_core::domain::DomainSpec;
use sobtrace_core::expr::Expr;
use sobtrace_core::norms::NormParams;
use sobtrace_core::{Aabb, VectorField};

use crate::error::{HarnessError, Result};

const SECTIONS: [&str; 5] = ["fields", "domain", "norms", "extension", "experiment"];

#[derive(Clone, Debug)]
struct Entry {
    line: usize,
    value: String,
}

#[derive(Clone, Debug)]
pub struct ExtensionSettings {
    pub quad_order: usize,
    pub seeley: Vec<(f64, f64)>,
    pub cutoff_radius: Option<f64>,
    /// Midpoint cells per axis when integrating extended functions.
    pub grid_res: usize,
    /// Grid points per axis of the `extend` CSV export.
    pub export_res: usize,
}

#[derive(Clone, Debug)]
pub struct ExperimentSettings {
    pub corpus: usize,
    /// Name of the `∂/∂t` field when the fields live on ℝ^{n+1}.
    pub time_field: Option<String>,
    /// Names of the first-layer fields; all non-time fields by default.
    pub first_layer: Vec<String>,
    /// Bound on max/min ratio across the corpus.
    pub ratio_factor: f64,
    /// Bound on the spread of basis-change constants across the corpus.
    pub drift_factor: f64,
    /// Rows of the change-of-basis matrix, entries are expressions in `x`.
    pub change: Vec<Vec<Expr>>,
    /// Exponent of `X = t^m ∂/∂x_1`.
    pub m: u32,
    pub commutator_slope: (f64, f64),
    pub defect_slope: (f64, f64),
    pub roundtrip_tol: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Manifest {
    /// Declared fields in file order.
    pub fields: Vec<(String, VectorField)>,
    pub domain: DomainSpec,
    pub norms: NormParams,
    pub extension: ExtensionSettings,
    pub experiment: ExperimentSettings,
}

/// Command-line overrides applied after parsing.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub p: Option<f64>,
    pub grid: Option<usize>,
    pub delta: Option<f64>,
    pub seed: Option<u64>,
}

fn err(line: usize, message: impl Into<String>) -> HarnessError {
    HarnessError::Manifest { line, message: message.into() }
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
        Manifest::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Manifest> {
        let mut section: Option<&str> = None;
        let mut field_lines: Vec<(usize, String, Vec<String>)> = Vec::new();
        let mut keys: BTreeMap<(&str, String), Entry> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_suffix(':') {
                if let Some(s) = SECTIONS.iter().find(|s| **s == name.trim()) {
                    section = Some(s);
                    continue;
                }
            }
            match section {
                None => return Err(err(line, format!("`{content}` appears before any section header"))),
                Some("fields") => {
                    let (name, coeffs) =
                        content.split_once(':').ok_or_else(|| err(line, "expected `name: c1, ..., cd`"))?;
                    let name = name.trim();
                    if name.is_empty() || name.contains(char::is_whitespace) {
                        return Err(err(line, format!("invalid field name `{name}`")));
                    }
                    if field_lines.iter().any(|(_, n, _)| n == name) {
                        return Err(err(line, format!("field `{name}` declared twice")));
                    }
                    let coeffs: Vec<String> = coeffs.split(',').map(|c| c.trim().to_string()).collect();
                    field_lines.push((line, name.to_string(), coeffs));
                }
                Some(s) => {
                    let (key, value) = content.split_once('=').ok_or_else(|| err(line, "expected `key = value`"))?;
                    let key = key.trim().to_string();
                    if keys.insert((s, key.clone()), Entry { line, value: value.trim().to_string() }).is_some() {
                        return Err(err(line, format!("`{key}` set twice in `{s}`")));
                    }
                }
            }
        }
        if field_lines.is_empty() {
            return Err(HarnessError::Config("no fields declared".into()));
        }
        let d = field_lines[0].2.len();
        let mut fields = Vec::with_capacity(field_lines.len());
        for (line, name, coeffs) in &field_lines {
            if coeffs.len() != d {
                return Err(err(*line, format!("field `{name}` has {} coefficients, expected {d}", coeffs.len())));
            }
            let f = VectorField::parse(coeffs, d).map_err(|e| err(*line, format!("field `{name}`: {e}")))?;
            fields.push((name.clone(), f));
        }

        let mut reader = Reader { keys };
        let time_field = reader.string("experiment", "time_field");
        if let Some(t) = &time_field {
            if !fields.iter().any(|(n, _)| n == t) {
                return Err(HarnessError::Config(format!("time_field `{t}` is not a declared field")));
            }
        }
        let n = if time_field.is_some() { d - 1 } else { d };
        if n == 0 {
            return Err(HarnessError::Config("fields need at least one space dimension".into()));
        }

        let mut domain = DomainSpec::standard(n);
        if let Some(b) = reader.boxed("domain", "v", n)? {
            domain.v = b;
        }
        if let Some(b) = reader.boxed("domain", "v1", n)? {
            domain.v1 = b;
        }
        if let Some(b) = reader.boxed("domain", "v2", n)? {
            domain.v2 = b;
        }
        domain.eps = reader.number("domain", "eps")?.unwrap_or(domain.eps);
        domain.delta = reader.number("domain", "delta")?.unwrap_or(domain.delta);
        domain.grid_res = reader.count("domain", "grid_res")?.unwrap_or(domain.grid_res);
        domain.t_res = reader.count("domain", "t_res")?.unwrap_or(domain.t_res);

        let defaults = NormParams::default();
        let norms = NormParams {
            p: reader.number("norms", "p")?.unwrap_or(defaults.p),
            delta: reader.number("norms", "delta")?.unwrap_or(domain.delta),
            t_nodes: reader.count("norms", "t_nodes")?.unwrap_or(defaults.t_nodes),
            tau_samples: reader.count("norms", "tau_samples")?.unwrap_or(defaults.tau_samples),
            grid_res: reader.count("norms", "grid_res")?.unwrap_or(domain.grid_res),
            t_floor_exponent: reader.count("norms", "t_floor_exponent")?.map_or(defaults.t_floor_exponent, |v| v as i32),
            panel_nodes: reader.count("norms", "panel_nodes")?.unwrap_or(defaults.panel_nodes),
            finite_differences: true,
        };

        let extension = ExtensionSettings {
            quad_order: reader.count("extension", "quad_order")?.unwrap_or(12),
            seeley: match reader.take("extension", "seeley") {
                Some(e) => parse_pairs(&e)?,
                None => vec![(3.0, 1.0), (-2.0, 2.0)],
            },
            cutoff_radius: reader.number("extension", "cutoff_radius")?,
            grid_res: reader.count("extension", "grid_res")?.unwrap_or(12),
            export_res: reader.count("extension", "export_res")?.unwrap_or(9),
        };

        let names: Vec<String> = fields.iter().map(|(n, _)| n.clone()).collect();
        let first_layer = match reader.take("experiment", "first_layer") {
            Some(e) => {
                let list: Vec<String> = e.value.split(',').map(|s| s.trim().to_string()).collect();
                for name in &list {
                    if !names.contains(name) || Some(name) == time_field.as_ref() {
                        return Err(err(e.line, format!("`{name}` is not a declared space field")));
                    }
                }
                list
            }
            None => names.iter().filter(|n| Some(*n) != time_field.as_ref()).cloned().collect(),
        };
        let k = first_layer.len();
        let change = match reader.take("experiment", "change") {
            Some(e) => parse_matrix(&e, k, n)?,
            None => (0..k)
                .map(|i| (0..k).map(|j| Expr::Const(if i == j { 1.0 } else { 0.0 })).collect())
                .collect(),
        };
        let experiment = ExperimentSettings {
            corpus: reader.count("experiment", "corpus")?.unwrap_or(10),
            time_field,
            first_layer,
            ratio_factor: reader.number("experiment", "ratio_factor")?.unwrap_or(10.0),
            drift_factor: reader.number("experiment", "drift_factor")?.unwrap_or(2.0),
            change,
            m: reader.count("experiment", "m")?.map_or(1, |v| v as u32),
            commutator_slope: reader.range("experiment", "commutator_slope")?.unwrap_or((1.4, 2.1)),
            defect_slope: reader.range("experiment", "defect_slope")?.unwrap_or((1.8, 2.3)),
            roundtrip_tol: reader.number("experiment", "roundtrip_tol")?.unwrap_or(1e-10),
            seed: reader.count("experiment", "seed")?.map_or(0, |v| v as u64),
        };
        if let Some(((s, key), e)) = reader.keys.into_iter().next() {
            return Err(err(e.line, format!("unknown key `{key}` in `{s}`")));
        }
        let manifest = Manifest { fields, domain, norms, extension, experiment };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(p) = o.p {
            self.norms.p = p;
        }
        if let Some(g) = o.grid {
            self.norms.grid_res = g;
            self.domain.grid_res = g;
        }
        if let Some(d) = o.delta {
            self.norms.delta = d;
            self.domain.delta = d;
        }
        if let Some(s) = o.seed {
            self.experiment.seed = s;
        }
        self.validate()
    }

    fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.norms.validate()?;
        if self.extension.quad_order == 0 || self.extension.grid_res == 0 || self.extension.export_res < 2 {
            return Err(HarnessError::Config("extension resolutions must be positive".into()));
        }
        if self.experiment.corpus == 0 {
            return Err(HarnessError::Config("corpus must be positive".into()));
        }
        if self.experiment.m == 0 {
            return Err(HarnessError::Config("m must be at least 1".into()));
        }
        if !(self.experiment.ratio_factor >= 1.0 && self.experiment.drift_factor >= 1.0) {
            return Err(HarnessError::Config("ratio_factor and drift_factor must be at least 1".into()));
        }
        Ok(())
    }

    /// Dimension of the slice `ℝ^n`.
    pub fn slice_dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn field(&self, name: &str) -> Option<&VectorField> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }

    /// `key = value` lines echoing every parameter in use.
    pub fn echo(&self) -> Vec<(String, String)> {
        let d = &self.domain;
        let n = &self.norms;
        let e = &self.extension;
        let x = &self.experiment;
        let b = |a: &Aabb| {
            a.lo.iter().zip(&a.hi).map(|(l, h)| format!("[{l},{h}]")).collect::<Vec<_>>().join("x")
        };
        let mut out = vec![
            ("domain.v".into(), b(&d.v)),
            ("domain.v1".into(), b(&d.v1)),
            ("domain.v2".into(), b(&d.v2)),
            ("domain.eps".into(), d.eps.to_string()),
            ("domain.delta".into(), d.delta.to_string()),
            ("domain.grid_res".into(), d.grid_res.to_string()),
            ("domain.t_res".into(), d.t_res.to_string()),
            ("norms.p".into(), n.p.to_string()),
            ("norms.theta".into(), n.theta().to_string()),
            ("norms.delta".into(), n.delta.to_string()),
            ("norms.t_nodes".into(), n.t_nodes.to_string()),
            ("norms.tau_samples".into(), n.tau_samples.to_string()),
            ("norms.grid_res".into(), n.grid_res.to_string()),
            ("norms.t_floor_exponent".into(), n.t_floor_exponent.to_string()),
            ("norms.panel_nodes".into(), n.panel_nodes.to_string()),
            ("extension.quad_order".into(), e.quad_order.to_string()),
            (
                "extension.seeley".into(),
                e.seeley.iter().map(|(a, b)| format!("{a}:{b}")).collect::<Vec<_>>().join(" "),
            ),
            ("extension.grid_res".into(), e.grid_res.to_string()),
            ("experiment.corpus".into(), x.corpus.to_string()),
            ("experiment.ratio_factor".into(), x.ratio_factor.to_string()),
            ("experiment.drift_factor".into(), x.drift_factor.to_string()),
            ("experiment.roundtrip_tol".into(), x.roundtrip_tol.to_string()),
            ("experiment.seed".into(), x.seed.to_string()),
        ];
        if let Some(r) = e.cutoff_radius {
            out.push(("extension.cutoff_radius".into(), r.to_string()));
        }
        out
    }
}

struct Reader<'a> {
    keys: BTreeMap<(&'a str, String), Entry>,
}

impl<'a> Reader<'a> {
    fn take(&mut self, section: &'a str, key: &str) -> Option<Entry> {
        self.keys.remove(&(section, key.to_string()))
    }

    fn string(&mut self, section: &'a str, key: &str) -> Option<String> {
        self.take(section, key).map(|e| e.value)
    }

    fn number(&mut self, section: &'a str, key: &str) -> Result<Option<f64>> {
        self.take(section, key).map(|e| parse_number(&e.value, e.line)).transpose()
    }

    fn count(&mut self, section: &'a str, key: &str) -> Result<Option<usize>> {
        self.take(section, key)
            .map(|e| e.value.parse::<usize>().map_err(|_| err(e.line, format!("`{key}` must be a non-negative integer"))))
            .transpose()
    }

    fn range(&mut self, section: &'a str, key: &str) -> Result<Option<(f64, f64)>> {
        self.take(section, key)
            .map(|e| {
                let parts: Vec<&str> = e.value.split(',').collect();
                if parts.len() != 2 {
                    return Err(err(e.line, format!("`{key}` must be `lo, hi`")));
                }
                Ok((parse_number(parts[0], e.line)?, parse_number(parts[1], e.line)?))
            })
            .transpose()
    }

    /// `[a, b]` for every axis, or one interval per axis joined by `x`.
    fn boxed(&mut self, section: &'a str, key: &str, n: usize) -> Result<Option<Aabb>> {
        let Some(e) = self.take(section, key) else {
            return Ok(None);
        };
        let mut intervals = Vec::new();
        for part in e.value.split('x') {
            let inner = part
                .trim()
                .strip_prefix('[')
                .and_then(|p| p.strip_suffix(']'))
                .ok_or_else(|| err(e.line, format!("`{key}` must be `[lo, hi]` or `[lo, hi] x ...`")))?;
            let (lo, hi) = inner.split_once(',').ok_or_else(|| err(e.line, "interval needs `lo, hi`"))?;
            intervals.push((parse_number(lo, e.line)?, parse_number(hi, e.line)?));
        }
        if intervals.len() == 1 {
            intervals = vec![intervals[0]; n];
        }
        if intervals.len() != n {
            return Err(err(e.line, format!("`{key}` has {} intervals, expected {n}", intervals.len())));
        }
        let (lo, hi) = intervals.into_iter().unzip();
        Aabb::new(lo, hi).map(Some).map_err(|m| err(e.line, m.to_string()))
    }
}

fn parse_number(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| err(line, format!("`{}` is not a number", s.trim())))
}

/// `a1:b1, a2:b2, ...`
fn parse_pairs(e: &Entry) -> Result<Vec<(f64, f64)>> {
    e.value
        .split(',')
        .map(|p| {
            let (a, b) = p.split_once(':').ok_or_else(|| err(e.line, "Seeley pairs are written `a:b`"))?;
            Ok((parse_number(a, e.line)?, parse_number(b, e.line)?))
        })
        .collect()
}

/// Rows separated by `;`, entries by `,`.
fn parse_matrix(e: &Entry, k: usize, n: usize) -> Result<Vec<Vec<Expr>>> {
    let rows: Vec<Vec<Expr>> = e
        .value
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|c| Expr::parse(c.trim(), n).map_err(|m| err(e.line, format!("change entry `{}`: {m}", c.trim()))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
        return Err(err(e.line, format!("change must be a {k}x{k} matrix")));
    }
    Ok(rows)
}
