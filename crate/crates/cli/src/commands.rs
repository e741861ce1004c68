//! The three subcommands: `verify` (run a suite, emit reports, exit by
//! verdict), `sample` (trees, child vectors, walk summaries), and
//! `table` (closed-form tabulation for plotting).

use std::fmt::Write as _;

use percascade::analytic::{
    biggins_transform, cle_psi_kappa, nesting_kappa, nesting_rate_j, psi, rate_function,
    CascadeParameters, Phase,
};
use percascade::cascade::{self, CascadeTree};
use percascade::identities::{self, VerificationReport};
use percascade::offspring::stable_offspring_default;
use percascade::rng::Rng;
use percascade::walk::{self, StepLaw};

use crate::opts::{
    grid_from, parse_format, parse_grid, resolve_params, resolve_params_table, CliError, OutFormat,
    RawOpts,
};
use crate::output;

/// Step cap of the stopped-walk ensembles behind `verify levy`: hitting
/// times have infinite mean, and past this horizon a run's time-average
/// statistic no longer moves at the bases in use.
const LEVY_STEP_CAP: u64 = 100_000_000;

/// Step cap of `sample walk`; capped runs are flagged in the output.
const SAMPLE_STEP_CAP: u64 = 10_000_000;

/// The two canonical (alpha, theta) pairs exercised by the tail suite.
const TAIL_PAIRS: [(f64, f64); 2] = [(1.8, 2.2), (1.2, 1.7)];

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn stable_step(params: &CascadeParameters) -> Result<StepLaw, CliError> {
    let offspring = stable_offspring_default(params.alpha)
        .map_err(|e| bad(format!("offspring law: {e:?}")))?;
    StepLaw::from_offspring(offspring).map_err(|e| bad(format!("step law: {e:?}")))
}

/// Per-phase default theta inside the moment strip, matching the
/// canonical pairs above.
fn default_theta(params: &CascadeParameters) -> f64 {
    match params.phase {
        Phase::Dilute => 2.2,
        Phase::Dense => 1.7,
    }
}

fn x_grid_or(o: &RawOpts, fallback: &[f64]) -> Result<Vec<f64>, CliError> {
    match &o.x {
        Some(text) => parse_grid(text),
        None => Ok(fallback.to_vec()),
    }
}

/// Runs one verification suite; exit 0 iff every verdict passed, 1 on
/// any failure (reports are written either way), 2 on bad configuration.
pub fn run_verify(suite: &str, o: &RawOpts) -> Result<i32, CliError> {
    let seed = o.seed.unwrap_or(1);
    let workers = o.workers.unwrap_or_else(identities::worker_count);
    let reports: Vec<VerificationReport> = match suite {
        "kemperman" => identities::verify_kemperman(),
        "rw-identity" => identities::verify_rw_identity(
            20_000,
            o.replicates.unwrap_or(20_000),
            identities::HEAVY_STEP_CAP,
            workers,
            seed,
        ),
        "levy" => {
            let params = resolve_params(o, 1.8)?;
            let theta = o.theta_value()?.unwrap_or_else(|| default_theta(&params));
            let p = o.p.unwrap_or(10_000);
            let reps = o.replicates.unwrap_or(400);
            let p_small = (p / 10).clamp(100.min(p), p);
            let grid: Vec<(u64, u64)> = if p_small < p {
                vec![(p_small, reps.saturating_mul(4).max(1)), (p, reps.max(1))]
            } else {
                vec![(p, reps.max(1))]
            };
            identities::verify_levy_formula(&params, theta, &grid, LEVY_STEP_CAP, workers, seed)
        }
        "biggins" => {
            let params = resolve_params(o, 1.8)?;
            let theta = o.theta_value()?.unwrap_or_else(|| default_theta(&params));
            let reps = o.replicates.unwrap_or(1000).max(1);
            identities::verify_biggins(
                &params,
                theta,
                o.p.unwrap_or(10_000),
                reps,
                (reps / 12).max(1),
                workers,
                seed,
            )
        }
        "fixed-point" => identities::verify_fixed_point_psi(
            &resolve_params(o, 1.8)?,
            &x_grid_or(o, &[0.25, 0.5, 1.0])?,
            o.p.unwrap_or(10_000),
            o.replicates.unwrap_or(400).max(1),
            workers,
            seed,
        ),
        "cumulant-root" => identities::verify_cumulant_root(
            &resolve_params(o, 1.8)?,
            &x_grid_or(o, &[0.5, 1.0, 2.0])?,
        ),
        "malthusian" => identities::verify_malthusian_law(
            &resolve_params(o, 1.8)?,
            o.p.unwrap_or(500),
            o.generations.unwrap_or(5),
            o.replicates.unwrap_or(500).max(1),
            &x_grid_or(o, &[0.5, 1.0, 2.0])?,
            workers,
            seed,
        ),
        "tail-index" => identities::verify_tail_index(
            &TAIL_PAIRS,
            o.p.unwrap_or(300),
            o.replicates.unwrap_or(100_000).max(1000),
            workers,
            seed,
        ),
        "nesting" => {
            let grid = x_grid_or(o, &grid_from(0.1, 2.05, 0.1)?)?;
            identities::verify_nesting_duality(o.n.unwrap_or(1.0), &grid)
        }
        "special-functions" => identities::verify_special_functions(),
        other => {
            return Err(bad(format!(
                "unknown suite {other:?}; expected one of kemperman, rw-identity, levy, \
                 biggins, fixed-point, cumulant-root, malthusian, tail-index, nesting, \
                 special-functions"
            )))
        }
    };
    let text = match parse_format(o)?.unwrap_or(OutFormat::Json) {
        OutFormat::Json => output::reports_to_json(&reports),
        OutFormat::Csv => output::reports_to_csv(&reports),
    };
    output::write_text(o.out.as_ref(), &text)?;
    Ok(if reports.iter().all(|r| r.passed()) { 0 } else { 1 })
}

/// Draws samples: whole cascade trees, first-generation child vectors,
/// or stopped-walk summaries. Deterministic per (seed, replicate index).
pub fn run_sample(what: &str, o: &RawOpts) -> Result<i32, CliError> {
    let seed = o.seed.unwrap_or(1);
    let reps = o.replicates.unwrap_or(1).max(1);
    let format = parse_format(o)?;
    let text = match what {
        "cascade" => {
            let params = resolve_params(o, 1.8)?;
            let step = stable_step(&params)?;
            let p = o.p.unwrap_or(1000);
            let generations = o.generations.unwrap_or(4);
            let tmin = o.tmin.unwrap_or(2);
            let mut trees: Vec<CascadeTree> = Vec::with_capacity(reps as usize);
            for i in 0..reps {
                let mut rng = Rng::stream(seed, i);
                let tree = cascade::grow_cascade(p, &step, generations, tmin, &mut rng)
                    .map_err(|e| bad(format!("replicate {i}: {e}")))?;
                trees.push(tree);
            }
            match format {
                Some(OutFormat::Json) => {
                    let lines: Vec<String> = trees.iter().map(|t| t.to_lines()).collect();
                    let mut s = serde_json::to_string_pretty(&lines).expect("serializes");
                    s.push('\n');
                    s
                }
                Some(OutFormat::Csv) => {
                    let mut s = String::from("tree,label,value\n");
                    for (i, tree) in trees.iter().enumerate() {
                        for line in tree.to_lines().lines() {
                            let (label, value) =
                                line.split_once(' ').expect("label value lines");
                            writeln!(s, "{i},{label},{value}").unwrap();
                        }
                    }
                    s
                }
                // Plain tree-line format: `label value` per node, trees
                // separated by headers when there are several.
                None => {
                    let mut s = String::new();
                    for (i, tree) in trees.iter().enumerate() {
                        if trees.len() > 1 {
                            writeln!(s, "tree {i}").unwrap();
                        }
                        s.push_str(&tree.to_lines());
                    }
                    s
                }
            }
        }
        "children" => {
            let params = resolve_params(o, 1.8)?;
            let step = stable_step(&params)?;
            let p = o.p.unwrap_or(10_000);
            let mut rows: Vec<Vec<u64>> = Vec::with_capacity(reps as usize);
            let mut buf = Vec::new();
            for i in 0..reps {
                let mut rng = Rng::stream(seed, i);
                cascade::sample_children_into(p, &step, &mut rng, &mut buf)
                    .map_err(|e| bad(format!("replicate {i}: {e}")))?;
                rows.push(buf.clone());
            }
            match format {
                Some(OutFormat::Json) => {
                    let mut s = serde_json::to_string_pretty(&rows).expect("serializes");
                    s.push('\n');
                    s
                }
                // One replicate per row, values ranked non-increasingly.
                Some(OutFormat::Csv) => rows
                    .iter()
                    .map(|r| {
                        r.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",") + "\n"
                    })
                    .collect(),
                None => rows
                    .iter()
                    .map(|r| {
                        r.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ") + "\n"
                    })
                    .collect(),
            }
        }
        "walk" => {
            let step = match o.law.as_deref() {
                None | Some("stable") => stable_step(&resolve_params(o, 1.8)?)?,
                Some(name) => identities::battery_laws()
                    .into_iter()
                    .find(|(n, _)| *n == name)
                    .map(|(_, law)| law)
                    .ok_or_else(|| {
                        bad(format!(
                            "unknown law {name:?}; expected pm1, drift, skip, or stable"
                        ))
                    })?,
            };
            let p = o.p.unwrap_or(100);
            let mut runs = Vec::with_capacity(reps as usize);
            for i in 0..reps {
                let mut rng = Rng::stream(seed, i);
                runs.push(walk::run_to_hitting(&step, p, &mut rng, SAMPLE_STEP_CAP));
            }
            match format {
                Some(OutFormat::Json) => {
                    let items: Vec<serde_json::Value> = runs
                        .iter()
                        .enumerate()
                        .map(|(i, r)| {
                            serde_json::json!({
                                "replicate": i,
                                "p": r.p,
                                "t_steps": r.t_steps,
                                "l_neg": r.l_neg,
                                "jumps": r.jumps.len(),
                                "max_jump": r.jumps.iter().max().copied().unwrap_or(0),
                                "truncated": r.truncated,
                            })
                        })
                        .collect();
                    let mut s = serde_json::to_string_pretty(&items).expect("serializes");
                    s.push('\n');
                    s
                }
                _ => {
                    let mut s = String::from("replicate,p,t_steps,l_neg,jumps,max_jump,truncated\n");
                    for (i, r) in runs.iter().enumerate() {
                        writeln!(
                            s,
                            "{i},{},{},{},{},{},{}",
                            r.p,
                            r.t_steps,
                            r.l_neg,
                            r.jumps.len(),
                            r.jumps.iter().max().copied().unwrap_or(0),
                            r.truncated
                        )
                        .unwrap();
                    }
                    s
                }
            }
        }
        other => {
            return Err(bad(format!(
                "unknown sample target {other:?}; expected cascade, children, or walk"
            )))
        }
    };
    output::write_text(o.out.as_ref(), &text)?;
    Ok(0)
}

/// Tabulates a closed form on a grid as `(input, value)` pairs. The
/// critical `alpha = 3/2` is accepted here.
pub fn run_table(function: &str, o: &RawOpts) -> Result<i32, CliError> {
    let (header, rows): ((&str, &str), Vec<(f64, f64)>) = match function {
        "biggins" => {
            let params = resolve_params_table(o, 1.8)?;
            let grid = match &o.theta {
                Some(text) => parse_grid(text)?,
                None => grid_from(params.alpha + 0.01, params.alpha + 1.0, 0.01)?,
            };
            let rows = grid
                .iter()
                .map(|&t| (t, biggins_transform(&params, t).as_f64()))
                .collect();
            (("theta", "phi"), rows)
        }
        "rate" => {
            let params = resolve_params_table(o, 1.8)?;
            let grid = x_grid_or(o, &grid_from(-2.0, 2.0, 0.01)?)?;
            let rows = grid.iter().map(|&x| (x, rate_function(&params, x))).collect();
            (("x", "rate"), rows)
        }
        "psi" => {
            let params = resolve_params_table(o, 1.8)?;
            let theta = o.theta_value()?.unwrap_or(2.0);
            let grid = x_grid_or(o, &grid_from(0.0, 3.0, 0.02)?)?;
            let rows = grid.iter().map(|&x| (x, psi(&params, theta, x))).collect();
            (("x", "psi"), rows)
        }
        "kappa" => {
            let params = resolve_params_table(o, 1.8)?;
            let lmax = (2.0 / params.n_loop).ln();
            let grid = match &o.lambda {
                Some(text) => parse_grid(text)?,
                None => grid_from(-3.0, lmax + 0.005, 0.01)?,
            };
            let rows = grid
                .iter()
                .map(|&l| (l, nesting_kappa(&params, l).as_f64()))
                .collect();
            (("lambda", "kappa"), rows)
        }
        "J" | "j" => {
            let n = o.n.unwrap_or(1.0);
            if !(n > 0.0 && n < 2.0) {
                return Err(bad(format!("--n {n}: the loop weight lives in (0, 2)")));
            }
            let grid = x_grid_or(o, &grid_from(0.01, 3.0, 0.01)?)?;
            let rows = grid.iter().map(|&x| (x, nesting_rate_j(n, x))).collect();
            (("x", "j"), rows)
        }
        "psi-kappa" => {
            let params = resolve_params_table(o, 1.8)?;
            let k = params.kappa_cle;
            let r = 1.0 - 4.0 / k;
            let grid = match &o.theta {
                Some(text) => parse_grid(text)?,
                None => grid_from(-1.0, r * r * k / 8.0, 0.005)?,
            };
            let rows = grid
                .iter()
                .map(|&t| (t, cle_psi_kappa(k, t).unwrap_or(f64::NAN)))
                .collect();
            (("theta", "psi_kappa"), rows)
        }
        other => {
            return Err(bad(format!(
                "unknown table {other:?}; expected biggins, rate, psi, kappa, J, or psi-kappa"
            )))
        }
    };
    let text = match parse_format(o)?.unwrap_or(OutFormat::Csv) {
        OutFormat::Csv => output::table_to_csv(header, &rows),
        OutFormat::Json => output::table_to_json(header, &rows),
    };
    output::write_text(o.out.as_ref(), &text)?;
    Ok(0)
}
