//! Experiment drivers: restriction and extension ratios, basis change,
//! the singular field `t^m ∂/∂x_1` and asymptotic residuals.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use sobtrace_core::domain::{admissible_delta, product_corpus, test_corpus, AdmissibleDelta, CorpusMember};
use sobtrace_core::expr::Expr;
use sobtrace_core::flows::{defect_residual, residual_exponent, straighten, ResidualFit, SlopeEstimate};
use sobtrace_core::linalg::determinant;
use sobtrace_core::norms::{flow_besov_norm, flow_modulus, modulus_seminorm, sobolev_breakdown, sobolev_norm, NormParams};
use sobtrace_core::traceops::{full_extension, restrict, ExtensionConfig};
use sobtrace_core::{check_step2, complete_basis, Aabb, Basis, Error, FlowSolverConfig, ScalarField, SharedField, VectorField};

use crate::error::{HarnessError, Result};
use crate::manifest::Manifest;
use crate::report::{spread_stats, Cell, ExperimentReport};

/// Everything derived from a manifest that the experiments share.
#[derive(Clone, Debug)]
pub struct Setup {
    pub manifest: Manifest,
    /// `Y_i` on ℝ^n.
    pub first_layer: Vec<VectorField>,
    /// `Y_i` completed by brackets to a frame at the centre of `V_1`.
    pub basis: Basis,
    /// `X_i` on ℝ^{n+1} followed by `∂/∂t`.
    pub bundle: Basis,
    /// Flow settings with `V` as working box.
    pub flow: FlowSolverConfig,
    pub admissible: AdmissibleDelta,
}

fn config_err(message: impl Into<String>) -> HarnessError {
    HarnessError::Config(message.into())
}

impl Setup {
    pub fn new(manifest: Manifest) -> Result<Setup> {
        let n = manifest.slice_dim();
        let time = manifest.experiment.time_field.clone();
        let mut first_layer = Vec::new();
        let mut lifted = Vec::new();
        for name in &manifest.experiment.first_layer {
            let f = manifest.field(name).expect("validated by the parser").clone();
            if time.is_some() {
                first_layer.push(f.restrict_to_slice()?);
                lifted.push(f);
            } else {
                lifted.push(f.lift());
                first_layer.push(f);
            }
        }
        if let Some(t) = &time {
            let f = manifest.field(t).expect("validated by the parser");
            let ok = f.coeffs().iter().enumerate().all(|(i, c)| c.as_const() == Some(if i == n { 1.0 } else { 0.0 }));
            if !ok {
                return Err(config_err(format!("time field `{t}` must be ∂/∂t")));
            }
        }
        let mut bundle_fields = lifted;
        bundle_fields.push(VectorField::coordinate(n + 1, n));
        let bundle = Basis::first_layer(bundle_fields)?;
        let basis = complete_basis(&first_layer, &manifest.domain.v1.center())?;
        let flow = FlowSolverConfig::default().with_bounds(manifest.domain.v.clone());
        let needed = manifest.domain.delta.max(manifest.norms.delta);
        let admissible = admissible_delta(&basis, &manifest.domain.v1, &manifest.domain.v, needed, 5, &flow)?;
        if admissible.raw < needed {
            return Err(config_err(format!(
                "delta = {needed} is not admissible: flows from V1 leave V beyond {:.6}",
                admissible.raw
            )));
        }
        Ok(Setup { manifest, first_layer, basis, bundle, flow, admissible })
    }

    pub fn u(&self) -> Aabb {
        self.manifest.domain.u()
    }

    pub fn extension_config(&self) -> Result<Arc<ExtensionConfig>> {
        let d = &self.manifest.domain;
        let e = &self.manifest.extension;
        let mut cfg = ExtensionConfig::new(self.basis.clone(), d.delta, d.v.clone(), d.v2.clone())?
            .with_quad_order(e.quad_order)?
            .with_seeley(e.seeley.clone())?;
        if let Some(r) = e.cutoff_radius {
            cfg = cfg.with_cutoff_radius(r)?;
        }
        Ok(Arc::new(cfg))
    }

    /// Norm parameters for extended functions.
    pub fn extension_params(&self) -> NormParams {
        NormParams { grid_res: self.manifest.extension.grid_res, ..self.manifest.norms.clone() }
    }

    fn params(&self) -> Vec<(String, String)> {
        let mut p = self.manifest.echo();
        p.push(("flow.rel_tol".into(), self.flow.rel_tol.to_string()));
        p.push(("flow.abs_tol".into(), self.flow.abs_tol.to_string()));
        p.push(("admissible.raw".into(), self.admissible.raw.to_string()));
        p.push(("admissible.safe".into(), self.admissible.safe.to_string()));
        p
    }

    pub fn besov(&self, psi: &dyn ScalarField, basis: &Basis, params: &NormParams) -> Result<f64> {
        let d = &self.manifest.domain;
        Ok(flow_besov_norm(psi, basis, &d.v1, &d.v, params, &self.flow)?)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Per-sample progress on standard error.
    pub verbose: bool,
}

fn progress(opts: RunOptions, experiment: &str, id: &str, detail: String) {
    if opts.verbose {
        eprintln!("[{experiment}] {id}: {detail}");
    }
}

fn member_cells(m: &CorpusMember) -> Vec<Cell> {
    vec![m.id.clone().into(), format!("{:?}", m.kind).into(), m.scale.into()]
}

/// Corpus ratios are stable when every ratio is finite and positive and
/// `max/min ≤ factor`.
fn stability(report: &mut ExperimentReport, ratios: &[f64], factor: f64) -> bool {
    if ratios.is_empty() || ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        report.note("ratios_finite", false);
        return false;
    }
    let (min, max, median) = spread_stats(ratios);
    report.note("min_ratio", min);
    report.note("max_ratio", max);
    report.note("median_ratio", median);
    report.note("spread", max / min);
    max / min <= factor
}

/// `‖Rφ‖_{W_{θ,p}(V, β')} / ‖φ‖_{W_{1,p}(U, β)}` over the product corpus.
pub fn verify_restriction(setup: &Setup, opts: RunOptions) -> Result<ExperimentReport> {
    let m = &setup.manifest;
    let corpus = product_corpus(&m.domain, m.experiment.corpus);
    let u = setup.u();
    let rows: Vec<Result<(f64, Vec<Cell>)>> = corpus
        .par_iter()
        .map(|member| {
            let r = restrict(member.field.clone());
            let besov = setup.besov(&r, &setup.basis, &m.norms)?;
            let sobolev = sobolev_norm(&*member.field, &setup.bundle, &u, &m.norms)?;
            let ratio = besov / sobolev;
            progress(opts, "restriction", &member.id, format!("ratio {ratio}"));
            let mut cells = member_cells(member);
            cells.extend([besov.into(), sobolev.into(), ratio.into()]);
            Ok((ratio, cells))
        })
        .collect();
    let mut report =
        ExperimentReport::new("restriction", setup.params(), &["id", "kind", "scale", "besov_trace", "sobolev", "ratio"]);
    let mut ratios = Vec::new();
    for row in rows {
        let (ratio, cells) = row?;
        ratios.push(ratio);
        report.push(cells);
    }
    report.passed = stability(&mut report, &ratios, m.experiment.ratio_factor);
    Ok(report)
}

/// Largest `|R(ρS(Eψ))(x) − ψ(x)|` over grids on `V_2` and `supp ψ` and
/// random points of `V_2`.
pub fn roundtrip_error(full: SharedField, psi: &dyn ScalarField, v2: &Aabb, res: usize, seed: u64) -> Result<f64> {
    let n = psi.dim();
    let r = restrict(full);
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut boxes = vec![v2.clone()];
    if let Some(s) = psi.support() {
        boxes.push(s);
    }
    let mut x = vec![0.0; n];
    for b in &boxes {
        let grid = b.midpoint_grid(res);
        for i in 0..grid.len() {
            grid.point(i, &mut x);
            points.push(x.clone());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..64 {
        points.push((0..n).map(|i| rng.gen_range(v2.lo[i]..v2.hi[i])).collect());
    }
    let mut worst: f64 = 0.0;
    for p in &points {
        worst = worst.max((r.eval(p)? - psi.eval(p)?).abs());
    }
    Ok(worst)
}

/// `‖ρS(Eψ)‖_{W_{1,p}(U)} / ‖ψ‖_{W_{θ,p}(V, β')}` over the corpus, with the
/// roundtrip `R ρS(Eψ) = ψ`.
pub fn verify_extension(setup: &Setup, opts: RunOptions) -> Result<ExperimentReport> {
    let m = &setup.manifest;
    let cfg = setup.extension_config()?;
    let corpus = test_corpus(&m.domain, m.experiment.corpus);
    let u = setup.u();
    let ext_params = setup.extension_params();
    let rows: Vec<Result<(f64, f64, Vec<Cell>)>> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, member)| {
            let full: SharedField = Arc::new(full_extension(member.field.clone(), cfg.clone())?);
            let roundtrip = roundtrip_error(full.clone(), &*member.field, &m.domain.v2, m.extension.grid_res, m.experiment.seed + i as u64)?;
            let sobolev = sobolev_norm(&*full, &setup.bundle, &u, &ext_params)?;
            let besov = setup.besov(&*member.field, &setup.basis, &m.norms)?;
            let ratio = sobolev / besov;
            progress(opts, "extension", &member.id, format!("ratio {ratio} roundtrip {roundtrip:e}"));
            let mut cells = member_cells(member);
            cells.extend([sobolev.into(), besov.into(), ratio.into(), roundtrip.into()]);
            Ok((ratio, roundtrip, cells))
        })
        .collect();
    let mut params = setup.params();
    params.push(("extension.cutoff_radius_used".into(), cfg.cutoff_radius().to_string()));
    let mut report = ExperimentReport::new(
        "extension",
        params,
        &["id", "kind", "scale", "sobolev_extension", "besov", "ratio", "roundtrip_error"],
    );
    let mut ratios = Vec::new();
    let mut worst: f64 = 0.0;
    for row in rows {
        let (ratio, roundtrip, cells) = row?;
        ratios.push(ratio);
        worst = worst.max(roundtrip);
        report.push(cells);
    }
    let stable = stability(&mut report, &ratios, m.experiment.ratio_factor);
    report.note("max_roundtrip_error", worst);
    report.passed = stable && worst <= m.experiment.roundtrip_tol;
    Ok(report)
}

/// `β' = C β` for the manifest's coefficient matrix `C`.
pub fn changed_basis(setup: &Setup) -> Result<Basis> {
    let change = &setup.manifest.experiment.change;
    let k = setup.first_layer.len();
    let center = setup.manifest.domain.v1.center();
    let det = determinant(k, change.iter().flat_map(|row| row.iter().map(|e| e.eval(&center))).collect());
    if det.is_nan() || det.abs() <= 1e-12 {
        return Err(config_err("change of basis is singular at the centre of V1"));
    }
    let fields = change
        .iter()
        .map(|row| {
            let terms: Vec<(Expr, &VectorField)> = row.iter().cloned().zip(&setup.first_layer).collect();
            VectorField::combination(&terms)
        })
        .collect::<sobtrace_core::Result<Vec<_>>>()?;
    let check = check_step2(&fields, &center, sobtrace_core::basis::DEFAULT_RANK_TOL)?;
    if !check.satisfied {
        return Err(Error::Step2Failed { rank: check.rank, dim: center.len() }.into());
    }
    Ok(Basis::first_layer(fields)?)
}

/// Flow-Besov norms in `β` and `β'`; the constants `max(r, 1/r)` must not
/// drift by more than `drift_factor` across the corpus.
pub fn verify_basis_equivalence(setup: &Setup, opts: RunOptions) -> Result<ExperimentReport> {
    let m = &setup.manifest;
    let other = changed_basis(setup)?;
    let corpus = test_corpus(&m.domain, m.experiment.corpus);
    let rows: Vec<Result<(f64, Vec<Cell>)>> = corpus
        .par_iter()
        .map(|member| {
            let a = setup.besov(&*member.field, &setup.basis, &m.norms)?;
            let b = setup.besov(&*member.field, &other, &m.norms)?;
            let ratio = b / a;
            let constant = ratio.max(1.0 / ratio);
            progress(opts, "basis", &member.id, format!("ratio {ratio}"));
            let mut cells = member_cells(member);
            cells.extend([a.into(), b.into(), ratio.into(), constant.into()]);
            Ok((constant, cells))
        })
        .collect();
    let mut params = setup.params();
    params.push((
        "experiment.change".into(),
        m.experiment
            .change
            .iter()
            .map(|r| r.iter().map(|e| format!("{e}")).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join(";"),
    ));
    let mut report =
        ExperimentReport::new("basis", params, &["id", "kind", "scale", "besov_beta", "besov_beta_prime", "ratio", "constant"]);
    let mut constants = Vec::new();
    for row in rows {
        let (c, cells) = row?;
        constants.push(c);
        report.push(cells);
    }
    if constants.iter().any(|c| !c.is_finite()) {
        report.note("ratios_finite", false);
        return Ok(report);
    }
    let (min, max, _) = spread_stats(&constants);
    report.note("C", max);
    report.note("drift", max / min);
    report.passed = max / min <= m.experiment.drift_factor;
    Ok(report)
}

/// `X = t^m ∂/∂x_1`: the straightening against `x_1 + t^{m+1}/(m+1)` and,
/// per corpus member, the ratio of
/// `{∫_0^δ [t^{−θ} sup_{|τ|≤t} ‖G(τ)φ_0 − φ_0‖_p]^p dt/t}^{1/p}` to
/// `‖∂_t φ‖_p + ‖Xφ‖_p`.
pub fn singular_gain_experiment(setup: &Setup, opts: RunOptions) -> Result<ExperimentReport> {
    let m = &setup.manifest;
    let n = m.slice_dim();
    let power = m.experiment.m;
    let u = setup.u();
    let mut coeffs = vec![String::from("0"); n + 1];
    coeffs[0] = format!("t^{power}");
    let x_field = VectorField::parse(&coeffs, n + 1)?;
    let cfg = FlowSolverConfig::default().with_bounds(u.clone());
    let st = straighten(&x_field, Some(&u), &cfg)?;
    let mp1 = (power + 1) as f64;
    let mut straight_err: f64 = 0.0;
    let probe = m.domain.v1.midpoint_grid(5);
    let mut x = vec![0.0; n];
    for i in 0..probe.len() {
        probe.point(i, &mut x);
        for j in -4..=4 {
            let t = 0.5 * m.domain.eps * j as f64 / 4.0;
            let p = st.forward(&x, t)?;
            let mut expected = x.clone();
            expected[0] += t.powi(power as i32 + 1) / mp1;
            for (a, b) in p.iter().zip(&expected) {
                straight_err = straight_err.max((a - b).abs());
            }
        }
    }

    let shift = VectorField::coordinate(n, 0);
    let pair = Basis::first_layer(vec![x_field.clone(), VectorField::coordinate(n + 1, n)])?;
    let ts = m.norms.t_grid();
    let corpus = product_corpus(&m.domain, m.experiment.corpus);
    let rows: Vec<Result<(f64, Vec<Cell>)>> = corpus
        .par_iter()
        .map(|member| {
            let phi0 = restrict(member.field.clone());
            let omegas = ts
                .iter()
                .map(|&t| {
                    let s = t.powi(power as i32 + 1) / mp1;
                    flow_modulus(s, &phi0, &shift, &m.domain.v1, &m.domain.v, &m.norms, &setup.flow)
                })
                .collect::<sobtrace_core::Result<Vec<_>>>()?;
            let lhs = modulus_seminorm(&ts, &omegas, m.norms.theta(), m.norms.p);
            let rhs: f64 = sobolev_breakdown(&*member.field, &pair, &u, &m.norms)?.derivative_norms.iter().sum();
            let ratio = lhs / rhs;
            progress(opts, "singular", &member.id, format!("ratio {ratio}"));
            let mut cells = member_cells(member);
            cells.extend([lhs.into(), rhs.into(), ratio.into()]);
            Ok((ratio, cells))
        })
        .collect();
    let mut params = setup.params();
    params.push(("experiment.m".into(), power.to_string()));
    let mut report = ExperimentReport::new("singular", params, &["id", "kind", "scale", "lhs", "rhs", "ratio"]);
    let mut ratios = Vec::new();
    for row in rows {
        let (r, cells) = row?;
        ratios.push(r);
        report.push(cells);
    }
    report.note("straightening_error", straight_err);
    let finite = ratios.iter().all(|r| r.is_finite() && *r >= 0.0);
    let (_, max, median) = spread_stats(&ratios);
    report.note("max_ratio", max);
    report.note("median_ratio", median);
    report.passed = finite && straight_err <= 1e-9 && max <= m.experiment.ratio_factor * median;
    Ok(report)
}

fn fit_cells(fit: &std::result::Result<ResidualFit, Error>, range: (f64, f64)) -> Result<(bool, Vec<Cell>)> {
    Ok(match fit {
        Ok(f) => match f.estimate {
            SlopeEstimate::Fitted { slope, .. } => {
                let ok = range.0 <= slope && slope <= range.1;
                let used = f.samples.iter().filter(|s| s.included).count() as f64;
                (ok, vec![slope.into(), f.max_residual().into(), used.into(), "fitted".into(), ok.into()])
            }
            SlopeEstimate::Degenerate => {
                (true, vec![f64::NAN.into(), f.max_residual().into(), 0.0.into(), "exact".into(), true.into()])
            }
        },
        Err(Error::InsufficientPoints { usable }) => (
            false,
            vec![f64::NAN.into(), f64::NAN.into(), (*usable as f64).into(), "insufficient".into(), false.into()],
        ),
        Err(e) => return Err(e.clone().into()),
    })
}

/// Commutator residual exponents for every first-layer pair and defect
/// residual exponents for every bundle field.
pub fn verify_residuals(setup: &Setup, opts: RunOptions) -> Result<ExperimentReport> {
    let m = &setup.manifest;
    let names = &m.experiment.first_layer;
    let y = m.domain.v1.center();
    let s_grid: Vec<f64> = (4..=12).map(|j| 2f64.powi(-j)).collect();
    let t_grid: Vec<f64> = (2..=10).map(|j| 2f64.powi(-j)).collect();
    let mut report = ExperimentReport::new(
        "residuals",
        setup.params(),
        &["kind", "fields", "slope", "max_residual", "points_used", "status", "pass"],
    );
    let mut all = true;
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            let fit = residual_exponent(&setup.first_layer[i], &setup.first_layer[j], &y, &s_grid, &setup.flow);
            let (ok, cells) = fit_cells(&fit, m.experiment.commutator_slope)?;
            progress(opts, "residuals", &format!("{},{}", names[i], names[j]), format!("{cells:?}"));
            all &= ok;
            let mut row: Vec<Cell> = vec!["commutator".into(), format!("{} {}", names[i], names[j]).into()];
            row.extend(cells);
            report.push(row);
        }
    }
    let u = setup.u();
    let mut xt = y.clone();
    xt.push(0.0);
    let cfg = FlowSolverConfig::default().with_bounds(u);
    for (i, name) in names.iter().enumerate() {
        let x_field = setup.bundle.field(i);
        let fit = defect_residual(&setup.first_layer[i], x_field, &y, &t_grid, &cfg);
        let (ok, cells) = fit_cells(&fit, m.experiment.defect_slope)?;
        progress(opts, "residuals", name, format!("{cells:?}"));
        all &= ok;
        let mut row: Vec<Cell> = vec!["defect".into(), name.clone().into()];
        row.extend(cells);
        report.push(row);
    }
    report.note("commutator_range", format!("{}..{}", m.experiment.commutator_slope.0, m.experiment.commutator_slope.1));
    report.note("defect_range", format!("{}..{}", m.experiment.defect_slope.0, m.experiment.defect_slope.1));
    report.passed = all;
    Ok(report)
}

/// `(x, t, value)` samples of `ρS(Eψ)` on a grid over `V_2 × (−δ, δ)`.
pub fn extension_grid(setup: &Setup, psi: SharedField) -> Result<Vec<Vec<f64>>> {
    let m = &setup.manifest;
    let full = full_extension(psi, setup.extension_config()?)?;
    let n = m.slice_dim();
    let res = m.extension.export_res;
    let region = m.domain.v2.extend(-m.domain.delta, m.domain.delta);
    let step = |i: usize, a: usize| region.lo[a] + region.width(a) * i as f64 / (res - 1) as f64;
    let total = res.pow(n as u32 + 1);
    let mut out = Vec::with_capacity(total);
    for idx in 0..total {
        let mut k = idx;
        let mut z = vec![0.0; n + 1];
        // `t` varies slowest
        for (a, za) in z.iter_mut().enumerate() {
            *za = step(k % res, a);
            k /= res;
        }
        let v = full.eval(&z)?;
        z.push(v);
        out.push(z);
    }
    Ok(out)
}
