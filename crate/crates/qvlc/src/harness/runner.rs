//! Experiment execution: cell expansion, per-cell evaluation, deterministic
//! parallel sweeps, and report assembly.

use rayon::prelude::*;

use crate::entangled::{local_fixed_error, local_varlen_report, reduced_spectrum};
use crate::exponents::{
    constant_c_with, fixed_error_bound, overflow_exponent_with, varlen_error_bound,
    varlen_overflow_bound, ExponentMethod, OracleConfig, ProbVector,
};
use crate::fixed::{ErrorOptions, EstimateMethod, FixedLengthCode};
use crate::harness::config::{ExperimentConfig, Mode, Source};
use crate::harness::report::{ReportRow, SimulationReport};
use crate::linalg::average_state;
use crate::varlen::{schedule, NaiveCode, RateGrid, SmearedCode, VarlenReport};
use crate::{Error, Result};

/// One independent unit of work.
#[derive(Debug, Clone, Copy)]
struct Cell {
    n: usize,
    rate: Option<f64>,
    delta: Option<f64>,
    delta_prime: Option<f64>,
}

/// Execute a configuration. `sweep` allows delta/delta-prime lists and flags
/// infeasible cells instead of failing; `jobs` sizes the worker pool (cells
/// are independent and the merge order is fixed, so the thread count never
/// changes the report).
pub fn execute(config: &ExperimentConfig, sweep: bool, jobs: usize) -> Result<SimulationReport> {
    config.validate()?;
    let source = match config.mode {
        Mode::Exponent => None,
        _ => Some(
            config
                .source
                .as_ref()
                .expect("validated")
                .build(config.mode.is_entangled())?,
        ),
    };
    let cells = expand_cells(config, sweep)?;
    let run_cell = |cell: &Cell| -> Result<Vec<ReportRow>> {
        match config.mode {
            Mode::Exponent => exponent_cell(config, cell),
            Mode::Fixed | Mode::EntangledFixed => {
                fixed_cell(config, source.as_ref().expect("source"), cell)
            }
            Mode::Naive => naive_cell(config, source.as_ref().expect("source"), cell),
            Mode::Varlen | Mode::EntangledVarlen => {
                match varlen_cell(config, source.as_ref().expect("source"), cell) {
                    Err(Error::InfeasibleDelta(msg)) if sweep => {
                        let mut row = ReportRow::new(
                            config.mode.as_str(),
                            cell.n,
                            config.d,
                            "cell_status",
                            0.0,
                        )
                        .with_deltas(cell.delta, cell.delta_prime)
                        .with_note(format!("infeasible: {msg}"));
                        row.rate = cell.rate;
                        Ok(vec![row])
                    }
                    other => other,
                }
            }
        }
    };
    let results: Vec<Result<Vec<ReportRow>>> = if jobs == 1 {
        cells.iter().map(run_cell).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| cells.par_iter().map(run_cell).collect())
    };
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(SimulationReport::new(
        config.seed,
        serde_json::to_value(config)?,
        rows,
    ))
}

fn expand_cells(config: &ExperimentConfig, sweep: bool) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    match config.mode {
        Mode::Exponent => {
            cells.push(Cell {
                n: 0,
                rate: None,
                delta: None,
                delta_prime: None,
            });
        }
        Mode::Fixed | Mode::EntangledFixed => {
            for n in config.ns()? {
                for rate in config.rate_list()? {
                    cells.push(Cell {
                        n,
                        rate: Some(rate),
                        delta: None,
                        delta_prime: None,
                    });
                }
            }
        }
        Mode::Naive => {
            for n in config.ns()? {
                cells.push(Cell {
                    n,
                    rate: None,
                    delta: None,
                    delta_prime: None,
                });
            }
        }
        Mode::Varlen | Mode::EntangledVarlen => {
            if !sweep && (config.deltas.is_some() || config.delta_primes.is_some()) {
                return Err(Error::InvalidConfig(
                    "delta lists need the sweep command".to_string(),
                ));
            }
            for n in config.ns()? {
                let deltas: Vec<Option<f64>> = if config.use_schedule {
                    let (sched_delta, sched_prime) = schedule(n);
                    // feasible only for n > 64; otherwise fall back
                    if 2.0 * sched_prime < sched_delta {
                        vec![Some(sched_delta)]
                    } else {
                        vec![config.delta]
                    }
                } else if let Some(list) = &config.deltas {
                    list.iter().map(|&d| Some(d)).collect()
                } else {
                    vec![config.delta]
                };
                let primes: Vec<Option<f64>> = if config.use_schedule {
                    let (sched_delta, sched_prime) = schedule(n);
                    if 2.0 * sched_prime < sched_delta {
                        vec![Some(sched_prime)]
                    } else {
                        vec![config.delta_prime]
                    }
                } else if let Some(list) = &config.delta_primes {
                    list.iter().map(|&p| Some(p)).collect()
                } else {
                    vec![config.delta_prime]
                };
                for &delta in &deltas {
                    let Some(delta) = delta else {
                        return Err(Error::InvalidConfig(format!(
                            "no feasible delta for n = {n} (schedule infeasible and no fallback)"
                        )));
                    };
                    for &delta_prime in &primes {
                        cells.push(Cell {
                            n,
                            rate: None,
                            delta: Some(delta),
                            delta_prime,
                        });
                    }
                }
            }
        }
    }
    Ok(cells)
}

fn error_options(config: &ExperimentConfig) -> ErrorOptions {
    ErrorOptions {
        exact_cap: config.caps.exact_sequences,
        mc_samples: config.caps.mc_samples,
        seed: config.seed,
        max_dim: config.caps.max_dim,
    }
}

fn method_name(m: EstimateMethod) -> &'static str {
    match m {
        EstimateMethod::Exact => "exact",
        EstimateMethod::MonteCarlo => "monte-carlo",
    }
}

fn source_spectrum(source: &Source) -> Result<ProbVector> {
    match source {
        Source::Plain(e) => ProbVector::from_unnormalized(&average_state(e).spectrum()),
        Source::Bipartite(e) => Ok(reduced_spectrum(e)),
    }
}

fn fixed_cell(config: &ExperimentConfig, source: &Source, cell: &Cell) -> Result<Vec<ReportRow>> {
    let rate = cell.rate.expect("fixed cells carry a rate");
    let opts = error_options(config);
    let code = FixedLengthCode::new(rate, cell.n, config.d)?;
    let spectrum = source_spectrum(source)?;
    let bound = fixed_error_bound(cell.n, config.d, &spectrum, rate)?;
    let mode = config.mode.as_str();
    let mut rows = Vec::new();
    match source {
        Source::Plain(e) => {
            let chain = code.error_bound_chain(e, &opts)?;
            let mut row = ReportRow::new(mode, cell.n, config.d, "average_error", chain.exact.value)
                .with_rate(rate)
                .with_bound(chain.exponent_bound, 1e-12)
                .with_method(method_name(chain.exact.method))
                .with_note(format!(
                    "twice_deficiency={:.9e} source_entropy={:.9} rank={}",
                    chain.twice_deficiency, chain.source_entropy, code.rank()
                ));
            if let Some(se) = chain.exact.std_err {
                row.note.push_str(&format!(" std_err={se:.3e}"));
            }
            rows.push(row);
            if !chain.ordered_ok {
                rows.push(
                    ReportRow::new(mode, cell.n, config.d, "chain_order", 1.0)
                        .with_rate(rate)
                        .with_bound(0.0, 0.0)
                        .with_note(chain.diagnostics.join("; ")),
                );
            }
        }
        Source::Bipartite(e) => {
            let err = local_fixed_error(&code, e, &opts)?;
            rows.push(
                ReportRow::new(mode, cell.n, config.d, "average_error", err.value)
                    .with_rate(rate)
                    .with_bound(bound, 1e-12)
                    .with_method(method_name(err.method))
                    .with_note(format!(
                        "reduced_entropy={:.9} rank={}",
                        crate::exponents::shannon_entropy(&spectrum),
                        code.rank()
                    )),
            );
        }
    }
    // the dimension bound always accompanies the cell
    rows.push(
        ReportRow::new(mode, cell.n, config.d, "subspace_rank", code.rank() as f64)
            .with_rate(rate)
            .with_bound(crate::exponents::rank_bound(cell.n, config.d, rate), 1e-9),
    );
    Ok(rows)
}

fn naive_cell(config: &ExperimentConfig, source: &Source, cell: &Cell) -> Result<Vec<ReportRow>> {
    let Source::Plain(e) = source else {
        return Err(Error::InvalidConfig(
            "naive mode runs on single-system sources".to_string(),
        ));
    };
    let grid = RateGrid::from_knots(config.d, config.grid_knots.as_deref().unwrap_or(&[]))?;
    let code = NaiveCode::new(grid, cell.n, config.d)?;
    let opts = error_options(config);
    let err = code.average_error(e, &opts)?;
    let mode = config.mode.as_str();
    Ok(vec![
        ReportRow::new(mode, cell.n, config.d, "average_error", err.value)
            .with_method(method_name(err.method))
            .with_note(format!("bins={}", code.bins.len())),
        ReportRow::new(
            mode,
            cell.n,
            config.d,
            "completeness_deviation",
            code.completeness_deviation(),
        )
        .with_bound(1e-10, 0.0),
    ])
}

fn varlen_cell(config: &ExperimentConfig, source: &Source, cell: &Cell) -> Result<Vec<ReportRow>> {
    let delta = cell.delta.expect("varlen cells carry delta");
    let opts = error_options(config);
    let rates = config.rate_list()?;
    let policy = config.definitional_policy()?;
    let code = SmearedCode::new(cell.n, config.d, delta)?;
    let spectrum = source_spectrum(source)?;
    let report = match source {
        Source::Plain(e) => VarlenReport::compute(&code, e, &rates, &opts, policy)?,
        Source::Bipartite(e) => local_varlen_report(&code, e, &rates, &opts, policy)?,
    };
    let mode = config.mode.as_str();
    let mut rows = Vec::new();
    let cell_deltas = (Some(code.delta), cell.delta_prime);

    let mut err_row = ReportRow::new(mode, cell.n, config.d, "average_error", report.average_error_exact)
        .with_deltas(cell_deltas.0, cell_deltas.1)
        .with_method("exact")
        .with_note(format!(
            "requested_delta={delta:.9} l={} k_max={}",
            report.l, report.k_max
        ));
    if let Some(dp) = cell.delta_prime {
        if dp > 0.0 && 2.0 * dp < code.delta {
            err_row = err_row.with_bound(
                varlen_error_bound(cell.n, config.d, &spectrum, code.delta, dp)?,
                1e-12,
            );
        } else {
            err_row
                .note
                .push_str(" error_bound=skipped (2 delta_prime >= effective delta)");
        }
    }
    rows.push(err_row);

    if let Some(defn) = report.average_error_definitional {
        rows.push(
            ReportRow::new(
                mode,
                cell.n,
                config.d,
                "definitional_agreement",
                (report.average_error_exact - defn).abs(),
            )
            .with_deltas(cell_deltas.0, cell_deltas.1)
            .with_note(format!("definitional={defn:.12e}")),
        );
        if let Some(last) = rows.last_mut() {
            *last = last.clone().with_bound(1e-8, 0.0);
        }
    }

    rows.push(
        ReportRow::new(mode, cell.n, config.d, "povm_deviation", report.povm_deviation)
            .with_deltas(cell_deltas.0, cell_deltas.1)
            .with_bound(1e-10, 0.0),
    );

    for &(rate, p) in &report.overflow {
        rows.push(
            ReportRow::new(mode, cell.n, config.d, "overflow_probability", p)
                .with_rate(rate)
                .with_deltas(cell_deltas.0, cell_deltas.1)
                .with_bound(
                    varlen_overflow_bound(cell.n, config.d, &spectrum, code.delta, rate)?,
                    1e-12,
                ),
        );
    }

    for (&(k, i), &p) in &report.outcome_probs {
        rows.push(
            ReportRow::new(mode, cell.n, config.d, "outcome_probability", p)
                .with_deltas(cell_deltas.0, cell_deltas.1)
                .with_outcome(k, i)
                .with_note(format!("rank={}", code.outcome_rank(k, i))),
        );
        rows.push(
            ReportRow::new(
                mode,
                cell.n,
                config.d,
                "coding_length",
                report.coding_lengths[&(k, i)],
            )
            .with_deltas(cell_deltas.0, cell_deltas.1)
            .with_outcome(k, i)
            .in_nats(),
        );
    }
    Ok(rows)
}

fn exponent_cell(config: &ExperimentConfig, _cell: &Cell) -> Result<Vec<ReportRow>> {
    let a = ProbVector::new(config.a.clone().expect("validated"))?;
    let oracle: &OracleConfig = &config.oracle;
    let mode = config.mode.as_str();
    let mut rows = Vec::new();
    for rate in config.rate_list()? {
        let res = overflow_exponent_with(&a, rate, oracle)?;
        let method = match res.method {
            ExponentMethod::FastPath => "fast-path",
            ExponentMethod::GridOracle => "grid-oracle",
        };
        let argmin: Vec<String> = res
            .argmin
            .probs()
            .iter()
            .map(|p| format!("{p:.9}"))
            .collect();
        rows.push(
            ReportRow::new(mode, 0, config.d, "overflow_exponent", res.value)
                .with_rate(rate)
                .in_nats()
                .with_method(method)
                .with_note(format!("argmin=[{}]", argmin.join(" "))),
        );
    }
    rows.push(
        ReportRow::new(mode, 0, config.d, "constant_c", constant_c_with(&a, oracle)?)
            .with_note(format!(
                "per-nat; grid step={:.1e} entropy band={:.1e}",
                oracle.c_step, oracle.c_entropy_band
            )),
    );
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "mode": "fixed",
                "d": 2,
                "source": {"preset": "pure-qubit-pair", "theta": 0.8},
                "n_range": [2, 6],
                "rates": [0.5],
                "seed": 7
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn fixed_run_emits_one_error_row_per_n_with_true_flags() {
        let report = execute(&fixed_config(), false, 1).unwrap();
        let err_rows: Vec<_> = report
            .rows
            .iter()
            .filter(|r| r.quantity == "average_error")
            .collect();
        assert_eq!(err_rows.len(), 5);
        for r in err_rows {
            assert_eq!(r.satisfied, Some(true), "n={}: {:?}", r.n, r);
        }
        assert!(!report.has_bound_violation());
        assert!(!report.has_invariant_breach());
    }

    #[test]
    fn exponent_mode_monotone_in_rate() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "mode": "exponent",
                "d": 2,
                "a": [0.9, 0.1],
                "rate_grid": {"min": 0.0, "max": 0.6931, "steps": 8}
            }"#,
        )
        .unwrap();
        let report = execute(&cfg, false, 1).unwrap();
        let mut values: Vec<(f64, f64)> = report
            .rows
            .iter()
            .filter(|r| r.quantity == "overflow_exponent")
            .map(|r| (r.rate.unwrap(), r.value))
            .collect();
        values.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(values.len(), 8);
        for w in values.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-12);
        }
        assert!(report
            .rows
            .iter()
            .any(|r| r.quantity == "constant_c" && r.value > 0.0));
    }

    #[test]
    fn varlen_run_rows_and_flags() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "mode": "varlen",
                "d": 2,
                "source": {"preset": "diagonal-mixed", "q1": 0.9, "q2": 0.8},
                "n_range": [4, 6],
                "rates": [0.4, 0.6],
                "delta": 0.4,
                "delta_prime": 0.15,
                "seed": 3
            }"#,
        )
        .unwrap();
        let report = execute(&cfg, false, 1).unwrap();
        assert!(!report.has_bound_violation(), "rows: {:#?}", report.rows);
        assert!(!report.has_invariant_breach());
        let overflow_rows = report
            .rows
            .iter()
            .filter(|r| r.quantity == "overflow_probability")
            .count();
        assert_eq!(overflow_rows, 3 * 2);
        assert!(report.rows.iter().any(|r| r.quantity == "coding_length"));
    }

    #[test]
    fn sweep_flags_infeasible_cells() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "mode": "varlen",
                "d": 2,
                "source": {"preset": "diagonal-mixed"},
                "n_range": [2, 4],
                "deltas": [0.5, 0.7],
                "seed": 1
            }"#,
        )
        .unwrap();
        let report = execute(&cfg, true, 1).unwrap();
        // n = 2 with requested δ = 0.5 has effective ⌊nδ⌋ = 0: flagged
        let infeasible: Vec<_> = report
            .rows
            .iter()
            .filter(|r| r.quantity == "cell_status")
            .collect();
        assert!(!infeasible.is_empty());
        assert!(infeasible.iter().all(|r| r.note.starts_with("infeasible")));
        // the same deltas at n = 4 computed fine
        assert!(report
            .rows
            .iter()
            .any(|r| r.n == 4 && r.quantity == "average_error"));
    }

    #[test]
    fn reports_are_thread_count_independent() {
        let cfg = fixed_config();
        let a = execute(&cfg, false, 1).unwrap().to_csv(false);
        let b = execute(&cfg, false, 4).unwrap().to_csv(false);
        assert_eq!(a, b);
    }

    #[test]
    fn entangled_fixed_cell_runs() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "mode": "entangled-fixed",
                "d": 2,
                "source": {"preset": "schmidt", "q": 0.95},
                "n_range": [2, 4],
                "rates": [0.4]
            }"#,
        )
        .unwrap();
        let report = execute(&cfg, false, 1).unwrap();
        assert!(!report.has_bound_violation());
        assert_eq!(
            report
                .rows
                .iter()
                .filter(|r| r.quantity == "average_error")
                .count(),
            3
        );
    }
}
