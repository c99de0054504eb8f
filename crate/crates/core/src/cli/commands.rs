use serde_json::{json, Map, Value};

use super::{load_data, load_model, load_priors, make_backend, num, require_seed, BackendArgs, Command, McmcArgs, Outcome};
use crate::bayes::{data_cloning, gelman_rubin, gibbs_ffbs, pmmh, rw_metropolis, McmcOptions, PosteriorSamples, RHAT_THRESHOLD};
use crate::data::TimeSeriesData;
use crate::diagnostics::{
    cross_validate, draw_state_trajectory, osa_residuals, pit_scores, point_mass, posterior_predictive_check, process_assumption_check,
    quantile_residuals, response_residuals, CvScheme, PpcMode, ReplicateStates, ResidualSeries, Statistic,
};
use crate::discretized::{grid_filter, grid_means, grid_smooth, StateGrid};
use crate::error::{Result, SsmError};
use crate::estimation::{
    fit_mle, hessian_identifiability, profile_likelihood, simulation_estimability, Backend, FitOptions, FitResult, ProfileCurve,
    ProfileOptions,
};
use crate::kalman::{kalman_filter, kalman_smoother};
use crate::model::{regular_template, simulate, StateSpaceModel};
use crate::params::ParamVector;
use crate::rng::derive_seed;
use crate::selection::{aic, aicb, aicc, compare, dic, waic, write_comparison_csv, LikelihoodMode};
use crate::stats::quantile;

pub(crate) fn dispatch(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Simulate { common, model, t_len, template } => {
            let seed = require_seed(common, "simulate")?;
            let (cfg, m) = load_model(model)?;
            let tmpl = match (t_len, template) {
                (Some(n), None) => regular_template(*n, m.obs_dim())?,
                (None, Some(p)) => load_data(p)?,
                _ => return Err(SsmError::Config("give exactly one of --T and --template".into())),
            };
            let theta = m.spec().nominal();
            let sim = simulate(&*m, &theta, &tmpl, seed)?;
            let mut out = Outcome::new(
                json!({"model": cfg, "T": tmpl.len(), "template": template}),
                json!({"theta": theta.to_map(), "n_steps": sim.states.len() - 1}),
            );
            out.files.push(("data.csv".into(), sim.data.to_csv_string()?));
            out.files.push(("states.csv".into(), states_csv(&sim.states, None)?));
            Ok(out)
        }
        Command::Fit { common, input, backend } => {
            let (cfg, m) = load_model(&input.model)?;
            let data = load_data(&input.data)?;
            let b = make_backend(backend, &*m, &data, common.seed)?;
            let fit = fit_mle(&*m, &data, &b, None, &fit_options(backend))?;
            let mut out = Outcome::new(config(&cfg, input, backend, &b), fit_json(&fit, &data));
            out.warnings = fit.warnings.clone();
            out.converged = fit.converged;
            if let Some(csv) = smoothed_states_csv(&*m, &data, &fit.theta, &fit.backend)? {
                out.files.push(("states.csv".into(), csv));
            }
            Ok(out)
        }
        Command::Profile { common, input, backend, param, points, grid, threshold } => {
            let (cfg, m) = load_model(&input.model)?;
            let data = load_data(&input.data)?;
            let b = make_backend(backend, &*m, &data, common.seed)?;
            let fit = fit_mle(&*m, &data, &b, None, &fit_options(backend))?;
            let opts = ProfileOptions { grid: grid.clone(), points: *points, threshold: *threshold, ..ProfileOptions::default() };
            let p = profile_likelihood(&*m, &data, &fit, param, &opts)?;
            let mut cfgv = config(&cfg, input, backend, &b);
            cfgv["profile"] = json!({"param": param, "points": points, "grid": grid, "threshold": threshold});
            let mut out = Outcome::new(cfgv, json!({"fit": fit_json(&fit, &data), "profile": profile_json(&p)}));
            out.converged = fit.converged && p.converged.iter().all(|c| *c);
            out.warnings = fit.warnings.clone();
            out.files.push(("profile.csv".into(), profile_csv(&p)?));
            Ok(out)
        }
        Command::Ident { common, input, backend, rel_tol, threshold, replicates } => {
            let (cfg, m) = load_model(&input.model)?;
            let data = load_data(&input.data)?;
            let b = make_backend(backend, &*m, &data, common.seed)?;
            let fit = fit_mle(&*m, &data, &b, None, &fit_options(backend))?;
            let h = hessian_identifiability(&fit, *rel_tol)?;
            let opts = ProfileOptions { threshold: *threshold, ..ProfileOptions::default() };
            let profiles: Vec<ProfileCurve> =
                fit.free_names.iter().map(|n| profile_likelihood(&*m, &data, &fit, n, &opts)).collect::<Result<_>>()?;
            let mut results = json!({
                "fit": fit_json(&fit, &data),
                "hessian": {"eigenvalues": h.eigenvalues, "ratio": num(h.ratio), "rel_tol": h.rel_tol, "suspect": h.suspect},
                "profiles": profiles.iter().map(profile_json).collect::<Vec<_>>(),
            });
            let mut warnings = fit.warnings.clone();
            if h.suspect {
                warnings.push(format!("Hessian eigenvalue ratio {:.3e} below {rel_tol:e}: parameters may be non-identifiable", h.ratio));
            }
            for p in profiles.iter().filter(|p| p.flat) {
                warnings.push(format!("profile of `{}` is flat ({:.3} log units)", p.param, p.flatness));
            }
            if *replicates > 0 {
                let seed = require_seed(common, "ident --replicates")?;
                let r = simulation_estimability(&*m, &fit.theta, data.len(), *replicates, &b, seed, &FitOptions::default())?;
                results["estimability"] = json!({
                    "n_rep": r.n_rep, "n_used": r.n_used, "n_failed": r.n_failed,
                    "rows": r.rows.iter().map(|row| json!({
                        "name": row.name, "truth": row.truth, "mean": row.mean, "bias": row.bias,
                        "sd": row.sd, "rmse": row.rmse, "coverage": row.coverage,
                    })).collect::<Vec<_>>(),
                });
            }
            let mut cfgv = config(&cfg, input, backend, &b);
            cfgv["ident"] = json!({"rel_tol": rel_tol, "threshold": threshold, "replicates": replicates});
            let mut out = Outcome::new(cfgv, results);
            out.converged = fit.converged;
            out.warnings = warnings;
            Ok(out)
        }
        Command::Mcmc { common, input, backend, mcmc, sampler, keep_states } => {
            let seed = require_seed(common, "mcmc")?;
            let (cfg, m) = load_model(&input.model)?;
            let data = load_data(&input.data)?;
            let priors = load_priors(mcmc.priors.as_deref(), &*m)?;
            let mut opts = mcmc_options(mcmc);
            opts.keep_states = *keep_states;
            let (s, b) = match sampler.as_str() {
                "rw" => {
                    let b = make_backend(backend, &*m, &data, Some(seed))?;
                    if matches!(b, Backend::Particle { .. }) {
                        return Err(SsmError::Config("rw needs a deterministic likelihood; use --sampler pmmh".into()));
                    }
                    (rw_metropolis(&*m, &data, &priors, &b, &opts, seed)?, Some(b))
                }
                "gibbs" => (gibbs_ffbs(&*m, &data, &priors, &opts, seed)?, None),
                "pmmh" => (pmmh(&*m, &data, &priors, backend.particles, &opts, seed)?, None),
                other => return Err(SsmError::Config(format!("unknown sampler `{other}`; expected rw, gibbs or pmmh"))),
            };
            let (summary, converged) = posterior_summary(&s)?;
            let mut cfgv = json!({"model": cfg, "data": input.data, "sampler": sampler, "priors": priors, "mcmc": mcmc_json(&opts), "backend": b});
            cfgv["particles"] = json!(backend.particles);
            let mut out = Outcome::new(cfgv, summary);
            out.converged = converged;
            out.files.push(("posterior.csv".into(), posterior_csv(&s)?));
            if let Some(st) = &s.states {
                out.files.push(("states.csv".into(), posterior_states_csv(st)?));
            }
            Ok(out)
        }
        Command::Clone { common, input, backend, mcmc, clones } => {
            let seed = require_seed(common, "clone")?;
            let (cfg, m) = load_model(&input.model)?;
            let data = load_data(&input.data)?;
            let priors = load_priors(mcmc.priors.as_deref(), &*m)?;
            let b = make_backend(backend, &*m, &data, Some(seed))?;
            let opts = mcmc_options(mcmc);
            let r = data_cloning(&*m, &data, &priors, clones, &b, &opts, seed)?;
            let mut out = Outcome::new(
                json!({"model": cfg, "data": input.data, "backend": b, "priors": priors, "mcmc": mcmc_json(&opts), "clones": clones}),
                json!({
                    "names": r.names, "clones": r.ks,
                    "variances": r.variances.iter().map(|v| v.iter().map(|x| num(*x)).collect::<Vec<_>>()).collect::<Vec<_>>(),
                    "ratios": r.ratios.iter().map(|x| num(*x)).collect::<Vec<_>>(),
                    "slopes": r.slopes.iter().map(|x| num(*x)).collect::<Vec<_>>(),
                    "converged_per_k": r.converged,
                }),
            );
            out.converged = r.converged.iter().all(|c| *c);
            for (k, c) in r.ks.iter().zip(&r.converged) {
                if !c {
                    out.warnings.push(format!("sampler did not reach R-hat < {RHAT_THRESHOLD} at K = {k}"));
                }
            }
            Ok(out)
        }
        Command::Select { common, models, data, backend, mcmc, criteria, bootstrap, max_draws } => {
            let d = load_data(data)?;
            let mut table: Vec<(String, Vec<(String, f64)>)> = Vec::new();
            let mut details = Map::new();
            let mut warnings = Vec::new();
            let mut converged = true;
            let mut cfgs = Vec::new();
            for (i, path) in models.iter().enumerate() {
                let (cfg, m) = load_model(path)?;
                let label = path.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_else(|| format!("model{i}"));
                cfgs.push(json!({"label": label, "config": cfg}));
                let b = make_backend(backend, &*m, &d, common.seed)?;
                let fit = fit_mle(&*m, &d, &b, None, &fit_options(backend))?;
                converged &= fit.converged;
                let mut vals = Vec::new();
                let mut det = Map::new();
                det.insert("fit".into(), fit_json(&fit, &d));
                let mut samples: Option<PosteriorSamples> = None;
                for c in criteria {
                    let c = c.trim().to_lowercase();
                    let v = match c.as_str() {
                        "aic" => aic(&fit).value,
                        "aicc" => aicc(&fit, d.n_observed())?.value,
                        "aicb" => {
                            let seed = require_seed(common, "select --criteria aicb")?;
                            let r = aicb(&*m, &d, &fit, *bootstrap, derive_seed(seed, &[i as u64, 0]), &FitOptions::default())?;
                            det.insert("aicb".into(), json!({"penalty": r.penalty, "spread": r.spread, "n_failed": r.n_failed}));
                            r.report.value
                        }
                        "waic" | "dic" | "waic_conditional" | "dic_conditional" => {
                            let seed = require_seed(common, "select --criteria waic/dic")?;
                            let mode = if c.ends_with("conditional") { LikelihoodMode::Conditional } else { LikelihoodMode::Marginal };
                            if samples.is_none() {
                                let priors = load_priors(mcmc.priors.as_deref(), &*m)?;
                                let mut opts = mcmc_options(mcmc);
                                opts.init = Some(fit.theta.clone());
                                let conditional = criteria.iter().any(|x| x.contains("conditional"));
                                let s = if conditional {
                                    opts.keep_states = true;
                                    gibbs_ffbs(&*m, &d, &priors, &opts, derive_seed(seed, &[i as u64, 1]))?
                                } else {
                                    rw_metropolis(&*m, &d, &priors, &b, &opts, derive_seed(seed, &[i as u64, 1]))?
                                };
                                if let Ok(r) = gelman_rubin(&s) {
                                    if r.iter().any(|v| *v >= RHAT_THRESHOLD) {
                                        converged = false;
                                        warnings.push(format!("{label}: posterior sampler has R-hat ≥ {RHAT_THRESHOLD}"));
                                    }
                                }
                                samples = Some(s);
                            }
                            let s = samples.as_ref().unwrap();
                            if c.starts_with("waic") {
                                let r = waic(&*m, &d, s, mode, &b, Some(*max_draws))?;
                                det.insert(c.clone(), json!({"p_waic": r.p_waic, "lppd": r.lppd}));
                                r.report.value
                            } else {
                                let r = dic(&*m, &d, s, mode, &b, Some(*max_draws))?;
                                det.insert(c.clone(), json!({"p_d": r.p_d, "mean_deviance": r.mean_deviance}));
                                r.report.value
                            }
                        }
                        other => return Err(SsmError::Config(format!("unknown criterion `{other}`"))),
                    };
                    vals.push((c, v));
                }
                details.insert(label.clone(), Value::Object(det));
                table.push((label, vals));
            }
            let mut rows = Vec::new();
            for (j, c) in criteria.iter().enumerate() {
                let entries: Vec<(String, f64)> = table.iter().map(|(l, v)| (l.clone(), v[j].1)).collect();
                rows.extend(compare(&c.trim().to_lowercase(), &entries)?);
            }
            let mut buf = Vec::new();
            write_comparison_csv(&rows, &mut buf)?;
            let mut out = Outcome::new(
                json!({"models": cfgs, "data": data, "backend": backend, "criteria": criteria, "bootstrap": bootstrap, "mcmc": mcmc}),
                json!({"comparison": rows, "details": details}),
            );
            out.files.push(("comparison.csv".into(), String::from_utf8(buf).expect("utf-8")));
            out.warnings = warnings;
            out.converged = converged;
            Ok(out)
        }
        Command::Diagnose { common, input, backend, no_fit, statistic, replicates, ppc_states, alpha, max_lag } => {
            let seed = require_seed(common, "diagnose")?;
            let (cfg, m) = load_model(&input.model)?;
            let data = load_data(&input.data)?;
            let b = make_backend(backend, &*m, &data, Some(seed))?;
            let stat = Statistic::parse(statistic)?;
            let states_mode = match ppc_states.as_str() {
                "posterior" => ReplicateStates::Posterior,
                "new" => ReplicateStates::NewProcess,
                other => return Err(SsmError::Config(format!("unknown --ppc-states `{other}`; expected posterior or new"))),
            };
            let mut out_warn = Vec::new();
            let mut converged = true;
            let (theta, fit_v, b) = if *no_fit {
                let th = m.spec().nominal();
                (th.clone(), Value::Null, b.resolved(&*m, &data, &th)?)
            } else {
                let fit = fit_mle(&*m, &data, &b, None, &fit_options(backend))?;
                converged = fit.converged;
                out_warn.extend(fit.warnings.clone());
                (fit.theta.clone(), fit_json(&fit, &data), fit.backend.clone())
            };
            let osa = osa_residuals(&*m, &data, &theta, &b)?;
            let pit = pit_scores(&*m, &data, &theta, &b)?;
            let q = quantile_residuals(&pit);
            out_warn.extend(q.warnings.clone());
            let resp = response_residuals(&*m, &data, &theta, &b).ok();
            let ppc = posterior_predictive_check(&*m, &point_mass(&*m, &theta), &data, stat, PpcMode::SingleDraw, states_mode, *replicates, seed)?;
            out_warn.extend(ppc.warnings.clone());
            let process = draw_state_trajectory(&*m, &data, &theta, derive_seed(seed, &[7]))
                .and_then(|z| process_assumption_check(&*m, &data, &theta, &z))
                .ok();
            let ks = osa.standardized.summaries.iter().map(|s| s.ks.map(|k| k.p_value)).collect::<Vec<_>>();
            let non_normal = ks.iter().any(|p| matches!(p, Some(p) if *p < *alpha));
            let acf_lags = |s: &ResidualSeries| -> Vec<Vec<f64>> {
                (0..s.summaries.len())
                    .map(|c| crate::diagnostics::acf_dropping_missing(&s.column(c), (*max_lag).min(s.observed(c).len().saturating_sub(2))).map(|a| a.0).unwrap_or_default())
                    .collect()
            };
            let band = 2.0 / (osa.standardized.observed(0).len().max(1) as f64).sqrt();
            let acf_osa = acf_lags(&osa.standardized);
            let acf_exceed = acf_osa.first().map_or(0, |a| a.iter().skip(1).filter(|v| v.abs() > band).count());
            let ppc_tail = ppc.p_value < *alpha / 2.0 || ppc.p_value > 1.0 - *alpha / 2.0;
            if non_normal {
                out_warn.push(format!("one-step-ahead residuals reject N(0,1) at level {alpha}"));
            }
            if ppc_tail {
                out_warn.push(format!("observed {statistic} statistic lies in a {alpha} tail of the replicates"));
            }
            let results = json!({
                "fit": fit_v,
                "theta": theta.to_map(),
                "backend": b,
                "residuals": {
                    "standardized": osa.standardized.summaries,
                    "pit": pit.summaries,
                    "quantile": q.summaries,
                    "response": resp.as_ref().map(|r| &r.summaries),
                    "acf_standardized": acf_osa,
                    "white_noise_band": band,
                },
                "ppc": {"statistic": statistic, "states": ppc_states, "observed": ppc.observed, "p_value": ppc.p_value, "replicates": ppc.replicates.len()},
                "process": process.as_ref().map(|p| json!({
                    "mean_tests": p.mean_tests,
                    "ks": p.ks,
                })),
                "flags": {
                    "residual_non_normality": non_normal,
                    "acf_lags_outside_band": acf_exceed,
                    "ppc_tail": ppc_tail,
                },
            });
            let mut cfgv = config(&cfg, input, backend, &b);
            cfgv["diagnose"] = json!({"no_fit": no_fit, "statistic": statistic, "replicates": replicates, "ppc_states": ppc_states, "alpha": alpha, "max_lag": max_lag});
            let mut out = Outcome::new(cfgv, results);
            out.files.push(("residuals.csv".into(), residuals_csv(&data, &osa.raw, &osa.standardized, &pit, &q, resp.as_ref())?));
            out.files.push(("ppc.csv".into(), single_column_csv("statistic", &ppc.replicates)?));
            out.files.push(("acf.csv".into(), acf_csv(&acf_osa)?));
            out.warnings = out_warn;
            out.converged = converged;
            Ok(out)
        }
        Command::Cv { common, input, backend, scheme, origin, refit_every, k, no_refit } => {
            let (cfg, m) = load_model(&input.model)?;
            let data = load_data(&input.data)?;
            let b = make_backend(backend, &*m, &data, common.seed)?;
            let sch = match scheme.as_str() {
                "rolling" => CvScheme::Rolling { origin: *origin, refit_every: *refit_every },
                "block" => CvScheme::Block { k: *k },
                other => return Err(SsmError::Config(format!("unknown scheme `{other}`; expected rolling or block"))),
            };
            let fo = fit_options(backend);
            let theta = m.spec().nominal();
            let r = cross_validate(&*m, &data, sch, &b, &theta, (!no_refit).then_some(&fo))?;
            let mut cfgv = config(&cfg, input, backend, &b);
            cfgv["cv"] = json!({"scheme": sch, "refit": !no_refit});
            let mut out = Outcome::new(
                cfgv,
                json!({"mspe": r.mspe, "folds": r.folds.len(), "skipped": r.n_skipped,
                       "fold_mspe": r.folds.iter().map(|f| f.mspe).collect::<Vec<_>>()}),
            );
            out.warnings = r.warnings.clone();
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["fold", "record", "coord", "prediction", "observation"])?;
            for (i, f) in r.folds.iter().enumerate() {
                for p in &f.predictions {
                    w.write_record([i.to_string(), p.0.to_string(), p.1.to_string(), p.2.to_string(), p.3.to_string()])?;
                }
            }
            out.files.push(("cv.csv".into(), finish(w)?));
            Ok(out)
        }
    }
}

fn fit_options(b: &BackendArgs) -> FitOptions {
    FitOptions { restarts: b.restarts, ..FitOptions::default() }
}

fn mcmc_options(a: &McmcArgs) -> McmcOptions {
    McmcOptions {
        chains: a.chains,
        iters: a.iters,
        warmup: a.warmup,
        proposal_sds: a.proposal_sds.clone(),
        adapt: !a.no_adapt,
        ordering: a.ordering.clone(),
        ..McmcOptions::default()
    }
}

fn mcmc_json(o: &McmcOptions) -> Value {
    json!({
        "chains": o.chains, "iters": o.iters, "warmup": o.warmup_len(), "proposal_sds": o.proposal_sds,
        "adapt": o.adapt, "init_jitter": o.init_jitter, "keep_states": o.keep_states, "ordering": o.ordering,
    })
}

fn config(cfg: &crate::zoo::ModelConfig, input: &super::ModelArgs, args: &BackendArgs, b: &Backend) -> Value {
    json!({"model": cfg, "model_path": input.model, "data": input.data, "backend_args": args, "backend": b})
}

fn fit_json(fit: &FitResult, data: &TimeSeriesData) -> Value {
    let a = aic(fit);
    let c = aicc(fit, data.n_observed()).ok().map(|r| r.value);
    json!({
        "theta": fit.theta.to_map(),
        "free": fit.free_names,
        "estimates": fit.free_names.iter().map(|n| fit.theta.get(n).unwrap()).collect::<Vec<_>>(),
        "se": fit.se,
        "loglik": num(fit.loglik),
        "k": fit.k(),
        "n_obs": fit.n_obs,
        "aic": num(a.value),
        "aicc": c,
        "converged": fit.converged,
        "evaluations": fit.evaluations,
        "backend": fit.backend,
        "warnings": fit.warnings,
    })
}

fn profile_json(p: &ProfileCurve) -> Value {
    json!({
        "param": p.param, "max_loglik": num(p.max_loglik), "flatness": num(p.flatness),
        "threshold": p.threshold, "flat": p.flat,
    })
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| SsmError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn profile_csv(p: &ProfileCurve) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([p.param.as_str(), "loglik", "converged"])?;
    for i in 0..p.grid.len() {
        w.write_record([p.grid[i].to_string(), p.loglik[i].to_string(), p.converged[i].to_string()])?;
    }
    finish(w)
}

fn states_csv(states: &[Vec<f64>], var: Option<&[Vec<f64>]>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let d = states.first().map_or(0, |s| s.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|k| format!("z{k}")));
    if var.is_some() {
        header.extend((1..=d).map(|k| format!("var_z{k}")));
    }
    w.write_record(&header)?;
    for (t, z) in states.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(z.iter().map(|v| v.to_string()));
        if let Some(v) = var {
            row.extend(v[t].iter().map(|x| x.to_string()));
        }
        w.write_record(&row)?;
    }
    finish(w)
}

fn smoothed_states_csv(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, b: &Backend) -> Result<Option<String>> {
    match b {
        Backend::Kalman => {
            let s = kalman_smoother(&kalman_filter(model, data, theta)?)?;
            let means: Vec<Vec<f64>> = s.iter().map(|g| g.mean.iter().cloned().collect()).collect();
            let vars: Vec<Vec<f64>> = s.iter().map(|g| (0..g.mean.len()).map(|i| g.variance(i)).collect()).collect();
            Ok(Some(states_csv(&means, Some(&vars))?))
        }
        Backend::Grid { cells, bounds } => {
            let grid = match bounds {
                Some((lo, hi)) => StateGrid::new(*lo, *hi, *cells)?,
                None => StateGrid::auto(model, data, theta, *cells)?,
            };
            let f = grid_filter(model, data, theta, &grid)?;
            let m = grid_means(&grid, &grid_smooth(model, data, theta, &f));
            // grid smoothing covers z_1..z_T
            let rows: Vec<Vec<f64>> = m.iter().map(|v| vec![*v]).collect();
            let mut csv = states_csv(&rows, None)?;
            csv = csv
                .lines()
                .enumerate()
                .map(|(i, l)| if i == 0 { l.to_string() } else { shift_t(l) })
                .collect::<Vec<_>>()
                .join("\n")
                + "\n";
            Ok(Some(csv))
        }
        _ => Ok(None),
    }
}

fn shift_t(line: &str) -> String {
    let (t, rest) = line.split_once(',').unwrap_or((line, ""));
    format!("{},{rest}", t.parse::<usize>().unwrap_or(0) + 1)
}

fn posterior_summary(s: &PosteriorSamples) -> Result<(Value, bool)> {
    let rhat = gelman_rubin(s).ok();
    let mut params = Vec::new();
    for (k, name) in s.names.iter().enumerate() {
        let col = s.column(k);
        params.push(json!({
            "name": name,
            "mean": s.mean(k),
            "sd": crate::stats::sample_sd(&col),
            "mcse": num(s.mcse(k)),
            "q025": quantile(&col, 0.025),
            "q50": quantile(&col, 0.5),
            "q975": quantile(&col, 0.975),
            "rhat": rhat.as_ref().map(|r| num(r[k])),
        }));
    }
    let converged = rhat.as_ref().is_none_or(|r| r.iter().all(|v| *v < RHAT_THRESHOLD));
    Ok((
        json!({
            "parameters": params,
            "acceptance": s.acceptance,
            "chains": s.n_chains(),
            "draws_per_chain": s.n_draws(),
            "warmup": s.warmup,
            "rhat_threshold": RHAT_THRESHOLD,
        }),
        converged,
    ))
}

fn posterior_csv(s: &PosteriorSamples) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    header.extend(s.names.iter().cloned());
    header.push("log_posterior".into());
    header.push("loglik".into());
    w.write_record(&header)?;
    for c in 0..s.n_chains() {
        for d in 0..s.n_draws() {
            let mut row = vec![c.to_string(), d.to_string()];
            row.extend(s.draws[c][d].iter().map(|v| v.to_string()));
            row.push(s.log_posterior[c][d].to_string());
            row.push(s.loglik[c][d].to_string());
            w.write_record(&row)?;
        }
    }
    finish(w)
}

fn posterior_states_csv(states: &[Vec<Vec<Vec<f64>>>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let d = states.first().and_then(|c| c.first()).and_then(|t| t.first()).map_or(0, |z| z.len());
    let mut header = vec!["chain".to_string(), "draw".to_string(), "t".to_string()];
    header.extend((1..=d).map(|k| format!("z{k}")));
    w.write_record(&header)?;
    for (c, chain) in states.iter().enumerate() {
        for (i, traj) in chain.iter().enumerate() {
            for (t, z) in traj.iter().enumerate() {
                let mut row = vec![c.to_string(), i.to_string(), t.to_string()];
                row.extend(z.iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
        }
    }
    finish(w)
}

fn residuals_csv(
    data: &TimeSeriesData,
    raw: &ResidualSeries,
    std: &ResidualSeries,
    pit: &ResidualSeries,
    q: &ResidualSeries,
    resp: Option<&ResidualSeries>,
) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "coord", "y", "response", "one_step_ahead", "standardized", "pit", "quantile"])?;
    for t in 0..data.len() {
        for c in 0..data.obs_dim() {
            w.write_record([
                data.times()[t].to_string(),
                (c + 1).to_string(),
                opt(data.record(t)[c]),
                opt(resp.and_then(|r| r.values[t][c])),
                opt(raw.values[t][c]),
                opt(std.values[t][c]),
                opt(pit.values[t][c]),
                opt(q.values[t][c]),
            ])?;
        }
    }
    finish(w)
}

fn single_column_csv(name: &str, values: &[f64]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([name])?;
    for v in values {
        w.write_record([v.to_string()])?;
    }
    finish(w)
}

fn acf_csv(acfs: &[Vec<f64>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["coord", "lag", "acf"])?;
    for (c, a) in acfs.iter().enumerate() {
        for (lag, v) in a.iter().enumerate() {
            w.write_record([(c + 1).to_string(), lag.to_string(), v.to_string()])?;
        }
    }
    finish(w)
}
