//! One driver per subcommand. Each turns a config into tables, notes, and
//! checks; nothing here touches the file system.

use std::path::Path;

use levy_bel::estimator::{
    bel_gradient, default_fd_step, fit_loglog, ibp_check, pathwise_study, scaling_study, zv_negative_moment, FailureCounts,
    ScalingStudy,
};
use levy_bel::levy_model::{check_assumptions, IntegralCheck, MeasureParams, ProxySequence, ProxyVerdict};
use levy_bel::moments_oracle::{negative_moment_report, MomentQuery, OuterCutoff};
use levy_bel::quadrature::Verdict;

use crate::config::{Config, MomentsConfig};
use crate::output::{Check, Outcome, Table};
use crate::{CliError, Experiment};

/// Shortest round-tripping decimal, switching to exponent form for very
/// small or large magnitudes.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn run(kind: Experiment, cfg: &Config, base: &Path, workers: usize) -> Result<Outcome, CliError> {
    match kind {
        Experiment::ValidateAssumptions => validate_assumptions(cfg, base),
        Experiment::Gradient => gradient(cfg, base, workers),
        Experiment::IbpCheck => ibp(cfg, base, workers),
        Experiment::ScalingStudy => scaling(cfg, base, workers),
        Experiment::NegativeMoments => moments(cfg, base, workers),
        Experiment::PathwiseCheck => pathwise(cfg, base, workers),
    }
}

fn failure_note(f: &FailureCounts, n_paths: u64) -> String {
    format!(
        "failures: no_small_jumps={} q_bound_violated={} singular_m={} of {n_paths} paths",
        f.no_small_jumps, f.q_bound_violated, f.singular_m
    )
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Finite => "finite",
        Verdict::Infinite => "infinite",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn proxy_str(v: ProxyVerdict) -> &'static str {
    match v {
        ProxyVerdict::Holds => "holds",
        ProxyVerdict::Fails => "fails",
        ProxyVerdict::Inconclusive => "inconclusive",
    }
}

fn validate_assumptions(cfg: &Config, base: &Path) -> Result<Outcome, CliError> {
    let model = cfg.models(base)?.remove(0);
    let field = cfg.field(base)?;
    let params = MeasureParams::new(field.delta, field.kappa, cfg.rho_index(base)?)?;
    let report = check_assumptions(&model, params)?;

    let mut out = Outcome::default();
    let mut table = Table::new("validate-assumptions", &["check", "value", "verdict"]);
    let integrals: [(&str, IntegralCheck); 3] = [
        ("moment_kappa", report.moment_kappa),
        ("score_moment", report.score_moment),
        ("moment_2kappa_minus_2", report.moment_2kappa_minus_2),
    ];
    for (name, c) in integrals {
        table.push(vec![name.into(), num(c.value), verdict_str(c.verdict).into()]);
        out.checks.push(Check::new(
            name,
            c.verdict == Verdict::Finite,
            format!("integral {} is {}", num(c.value), verdict_str(c.verdict)),
        ));
    }
    let mut proxies = Table::new("validate-assumptions-proxies", &["sequence", "argument", "value"]);
    let sequences: [(&str, &ProxySequence); 2] = [("tail_growth", &report.tail_growth), ("small_ball", &report.small_ball)];
    for (name, seq) in sequences {
        let last = seq.points.last().map_or(f64::NAN, |p| p.1);
        table.push(vec![name.into(), num(last), proxy_str(seq.verdict).into()]);
        for &(a, v) in &seq.points {
            proxies.push(vec![name.into(), num(a), num(v)]);
        }
        out.checks.push(Check::new(
            name,
            seq.verdict != ProxyVerdict::Fails,
            format!("proxy {} on {} points", proxy_str(seq.verdict), seq.points.len()),
        ));
    }
    table.push(vec![
        "sharp_regime".into(),
        if report.sharp_regime { "1" } else { "0" }.into(),
        if report.sharp_regime { "yes" } else { "no" }.into(),
    ]);
    out.notes.push(format!(
        "delta={} kappa={} rho_index={} sharp_regime={}",
        num(params.delta),
        num(params.kappa),
        num(params.rho_index),
        report.sharp_regime
    ));
    out.tables = vec![table, proxies];
    Ok(out)
}

fn gradient(cfg: &Config, base: &Path, workers: usize) -> Result<Outcome, CliError> {
    let est = cfg.estimator(base, workers)?;
    let section = cfg.gradient.clone().unwrap_or_else(default_gradient);
    let h = section.fd_step.unwrap_or_else(|| default_fd_step(&est.x0));
    let bel = bel_gradient(&est)?;
    let fd = levy_bel::estimator::fd_gradient(&est, h, section.coupling())?;

    let mut out = Outcome::default();
    let mut table = Table::new(
        "gradient",
        &["component", "bel_mean", "bel_stderr", "fd_mean", "fd_stderr", "z_score", "n_valid", "n_failed"],
    );
    for i in 0..est.dim() {
        let z = (bel.mean[i] - fd.mean[i]) / bel.stderr[i].hypot(fd.stderr[i]);
        table.push(vec![
            i.to_string(),
            num(bel.mean[i]),
            num(bel.stderr[i]),
            num(fd.mean[i]),
            num(fd.stderr[i]),
            num(z),
            bel.n_valid.to_string(),
            bel.n_failed.to_string(),
        ]);
        out.checks.push(Check::new(
            format!("component_{i}"),
            z.abs() <= section.z_max,
            format!("|z| = {} <= {}", num(z.abs()), num(section.z_max)),
        ));
    }
    out.notes.push(format!("fd_step={} coupling={:?}", num(h), section.coupling()));
    out.notes.push(failure_note(&bel.failures, est.n_paths));
    if bel.bias_flag {
        out.notes.push("warning: failed-path fraction is large enough to bias the estimate".into());
    }
    out.tables.push(table);
    Ok(out)
}

fn default_gradient() -> crate::config::GradientConfig {
    toml::from_str("").expect("all gradient keys have defaults")
}

fn ibp(cfg: &Config, base: &Path, workers: usize) -> Result<Outcome, CliError> {
    let est = cfg.estimator(base, workers)?;
    let section = match &cfg.ibp_check {
        Some(s) => s.clone(),
        None => toml::from_str("").expect("all ibp keys have defaults"),
    };
    if section.k >= est.dim() {
        return Err(CliError::Config(format!("ibp_check.k = {} is out of range", section.k)));
    }
    let check = ibp_check(&est, section.k, &est.payoff)?;
    let z = check.z_score();

    let mut out = Outcome::default();
    let mut table = Table::new("ibp-check", &["side", "mean", "stderr", "n"]);
    for (name, s) in [("left", check.left), ("right", check.right), ("difference", check.difference)] {
        table.push(vec![name.into(), num(s.mean), num(s.stderr), s.n.to_string()]);
    }
    out.checks.push(Check::new(
        "identity",
        z <= section.z_max,
        format!("|difference| / stderr = {} <= {}", num(z), num(section.z_max)),
    ));
    out.tables.push(table);
    Ok(out)
}

fn scaling_table(name: &str, s: &ScalingStudy) -> Table {
    let mut table = Table::new(name, &["t", "estimate", "stderr", "n_valid", "n_failed"]);
    for p in &s.points {
        table.push(vec![num(p.t), num(p.estimate), num(p.stderr), p.n_valid.to_string(), p.n_failed.to_string()]);
    }
    table
}

fn slope_line(label: &str, s: &ScalingStudy, target: Option<f64>) -> String {
    format!(
        "{label}slope={} ci=[{},{}] target={}",
        num(s.fit.slope),
        num(s.fit.ci_lo),
        num(s.fit.ci_hi),
        target.map_or("none".into(), num)
    )
}

fn scaling(cfg: &Config, base: &Path, workers: usize) -> Result<Outcome, CliError> {
    let section = cfg.scaling_study.as_ref().ok_or_else(|| CliError::Config("missing [scaling_study] section".into()))?;
    let est = cfg.estimator(base, workers)?;
    let grid = section.grid()?;
    let study = scaling_study(&est, &grid, section.quantity()?)?;

    let mut out = Outcome::default();
    out.notes.push(format!("quantity={}", study.quantity.as_str()));
    out.notes.push(slope_line("", &study, section.target_slope.or(section.min_slope)));
    match (section.target_slope, section.tolerance) {
        (Some(target), Some(tol)) => out.checks.push(Check::new(
            "slope",
            (study.fit.slope - target).abs() <= tol,
            format!("|{} - ({})| <= {}", num(study.fit.slope), num(target), num(tol)),
        )),
        (None, None) => {}
        _ => return Err(CliError::Config("scaling_study.target_slope and tolerance go together".into())),
    }
    if let Some(min) = section.min_slope {
        out.checks.push(Check::new("min_slope", study.fit.slope >= min, format!("{} >= {}", num(study.fit.slope), num(min))));
    }
    let n_failed: u64 = study.points.iter().map(|p| p.n_failed).sum();
    out.notes.push(format!("failed paths over the grid: {n_failed}"));
    out.tables.push(scaling_table("scaling-study", &study));

    match (section.reference()?, section.min_gap) {
        (Some(q), gap) => {
            let reference = scaling_study(&est, &grid, q)?;
            out.notes.push(format!("reference_quantity={}", q.as_str()));
            out.notes.push(slope_line("reference ", &reference, None));
            let diff = study.fit.slope - reference.fit.slope;
            out.notes.push(format!("gap={}", num(diff)));
            if let Some(gap) = gap {
                out.checks.push(Check::new("gap", diff >= gap, format!("{} >= {}", num(diff), num(gap))));
            }
            out.tables.push(scaling_table("scaling-study-reference", &reference));
        }
        (None, Some(_)) => return Err(CliError::Config("scaling_study.min_gap needs a reference quantity".into())),
        (None, None) => {}
    }
    Ok(out)
}

fn moments(cfg: &Config, base: &Path, workers: usize) -> Result<Outcome, CliError> {
    let section: MomentsConfig = match &cfg.negative_moments {
        Some(s) => s.clone(),
        None => toml::from_str("").expect("all moment keys have defaults"),
    };
    let est = cfg.estimator(base, workers)?;
    if section.coord >= est.dim() {
        return Err(CliError::Config(format!("negative_moments.coord = {} is out of range", section.coord)));
    }
    let grid = section.t_grid.clone().unwrap_or_else(|| vec![est.t]);
    let rate = -est.field.kappa * section.q / cfg.rho_index(base)?;

    let mut out = Outcome::default();
    let mut table = Table::new(
        "negative-moments",
        &["t", "level", "oracle", "upper", "cutoff", "p_zero", "mc_mean", "mc_stderr", "mc_n_valid", "mc_n_zero", "rel_error"],
    );
    let mut values = Vec::with_capacity(grid.len());
    for &t in &grid {
        let mut c = est.with_t(t);
        c.validate()?;
        let trunc = c.resolved_truncation()?;
        let query = MomentQuery::new(c.models[section.coord].clone(), c.field, t, section.q, trunc)?;
        let report = negative_moment_report(&query)?;
        values.push(report.value);
        let mut row = vec![
            num(t),
            num(trunc.level),
            num(report.value),
            num(report.upper),
            match report.cutoff {
                OuterCutoff::Decayed => "decayed",
                OuterCutoff::Valley => "valley",
            }
            .into(),
            num(report.p_zero),
        ];
        if section.mc_paths > 0 {
            c.n_paths = section.mc_paths;
            let mc = zv_negative_moment(&c, section.q, section.coord)?;
            let rel = (mc.estimate.mean - report.value) / report.value;
            out.notes.push(format!("t={}: {} valid paths, {} with Z^V = 0", num(t), mc.estimate.n, mc.n_zero));
            row.extend([
                num(mc.estimate.mean),
                num(mc.estimate.stderr),
                mc.estimate.n.to_string(),
                mc.n_zero.to_string(),
                num(rel),
            ]);
            if let Some(tol) = section.rel_tol {
                out.checks.push(Check::new(
                    format!("oracle_vs_mc_t={}", num(t)),
                    rel.abs() <= tol,
                    format!("|relative error| = {} <= {}", num(rel.abs()), num(tol)),
                ));
            }
        } else {
            row.extend(std::iter::repeat_n(String::new(), 5));
        }
        table.push(row);
    }
    if grid.len() >= 2 {
        let fit = fit_loglog(&grid, &values, &vec![0.0; grid.len()]);
        out.notes.push(format!("slope={} ci=[{},{}] target={}", num(fit.slope), num(fit.ci_lo), num(fit.ci_hi), num(rate)));
        if let Some(min) = section.min_slope {
            out.checks.push(Check::new("min_slope", fit.slope >= min, format!("{} >= {}", num(fit.slope), num(min))));
        }
        let consts: Vec<f64> = grid.iter().zip(&values).map(|(t, v)| v * t.powf(-rate)).collect();
        let (lo, hi) = consts.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        out.notes.push(format!("constant range=[{},{}]", num(lo), num(hi)));
        if let Some(max) = section.max_constant_ratio {
            out.checks.push(Check::new(
                "constant_ratio",
                hi / lo <= max,
                format!("max/min of oracle * t^{} = {} <= {}", num(-rate), num(hi / lo), num(max)),
            ));
        }
    } else if section.min_slope.is_some() || section.max_constant_ratio.is_some() {
        return Err(CliError::Config("slope checks need at least two horizons in negative_moments.t_grid".into()));
    }
    out.tables.push(table);
    Ok(out)
}

fn pathwise(cfg: &Config, base: &Path, workers: usize) -> Result<Outcome, CliError> {
    let section = cfg.pathwise_check.as_ref().ok_or_else(|| CliError::Config("missing [pathwise_check] section".into()))?;
    let est = cfg.estimator(base, workers)?;
    if section.k >= est.dim() {
        return Err(CliError::Config(format!("pathwise_check.k = {} is out of range", section.k)));
    }
    let study = pathwise_study(&est, section.k, &section.eps)?;

    let mut out = Outcome::default();
    let mut table = Table::new("pathwise-check", &["eps", "mean_residual", "stderr", "ratio"]);
    for i in 0..study.eps.len() {
        let ratio = if i == 0 { String::new() } else { num(study.ratios[i - 1]) };
        table.push(vec![num(study.eps[i]), num(study.mean_residual[i]), num(study.stderr[i]), ratio]);
    }
    for (i, r) in study.ratios.iter().enumerate() {
        out.checks.push(Check::new(
            format!("ratio_{}", i + 1),
            (section.ratio_min..=section.ratio_max).contains(r),
            format!("{} in [{}, {}]", num(*r), num(section.ratio_min), num(section.ratio_max)),
        ));
    }
    out.notes.push(format!("paths={}", est.n_paths));
    out.notes.push(format!("per-path ratio range=[{},{}]", num(study.per_path_ratio_range.0), num(study.per_path_ratio_range.1)));
    out.tables.push(table);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 1.0, -0.25, 1e-9, 3.5e20, 0.1 + 0.2, f64::MIN_POSITIVE] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(1e-9), "1e-9");
        assert_eq!(num(0.5), "0.5");
    }
}
