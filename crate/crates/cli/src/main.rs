//! `persuade`: generate instances, solve for promise-form schemes, verify
//! and simulate them. Reports go to stdout as JSON; steps are 0-based.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use promise_persuasion::instances::{
    evaluate_markov_scheme, minimum_vertex_cover, random_instance, read_graph, read_markov_scheme, separation_check,
    vc_completeness_scheme, vc_instance, write_markov_scheme,
};
use promise_persuasion::mdp::{read_instance, write_instance};
use promise_persuasion::scheme::{
    check_honesty, check_local_persuasiveness, read_scheme, verify_persuasive_exhaustive, write_scheme, ViolationReport,
};
use promise_persuasion::simulate::{simulate, DeviationPolicy};
use promise_persuasion::{deviation_values, dp_solve, Error};
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "persuade", version, about = "Persuasion schemes for finite-horizon MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random instance.
    GenRandom(GenRandom),
    /// Build the vertex-cover gadget from an edge-list file.
    GenVc(GenVc),
    /// Print the receiver's post-deviation values.
    Deviation(InstanceArg),
    /// Run the backward sweep and write the resulting scheme.
    Solve(Solve),
    /// Check a promise-form scheme; exits 1 if it is not ε-persuasive.
    Verify(Verify),
    /// Evaluate a Markovian scheme; exits 1 if it is not ε-persuasive.
    EvalMarkov(EvalMarkov),
    /// Play episodes of a scheme against an obedient or deviating receiver.
    Simulate(Simulate),
    /// Compare the solver's value with the best Markovian scheme on a grid.
    Separation(Separation),
}

#[derive(Args)]
struct InstanceArg {
    #[arg(short, long)]
    instance: PathBuf,
}

#[derive(Args)]
struct GenRandom {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    states: usize,
    #[arg(long)]
    actions: usize,
    #[arg(long)]
    observations: usize,
    #[arg(long)]
    horizon: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct GenVc {
    /// Edge list: one `u v` pair per line, 0-based, `#` comments.
    graph: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Cover for the Markovian scheme: `min` or a comma-separated vertex list.
    #[arg(long, requires = "markov_out")]
    cover: Option<String>,
    /// Where to write the cover-based Markovian scheme.
    #[arg(long, requires = "cover")]
    markov_out: Option<PathBuf>,
}

#[derive(Args)]
struct Solve {
    #[arg(short, long)]
    instance: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(short, long)]
    output: PathBuf,
    /// Also write the per-step value tables.
    #[arg(long)]
    tables: Option<PathBuf>,
}

#[derive(Args)]
struct Verify {
    #[arg(short, long)]
    instance: PathBuf,
    #[arg(short, long)]
    scheme: PathBuf,
    #[arg(long)]
    epsilon: f64,
}

#[derive(Args)]
struct EvalMarkov {
    #[arg(short, long)]
    instance: PathBuf,
    #[arg(short, long)]
    markov: PathBuf,
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
}

#[derive(Args)]
struct Simulate {
    #[arg(short, long)]
    instance: PathBuf,
    #[arg(short, long)]
    scheme: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `step,action`: the receiver plays `action` at `step` regardless of the
    /// recommendation.
    #[arg(long, value_parser = parse_deviation)]
    deviate_at: Option<DeviationPolicy>,
    /// Include every episode's seed in the report.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct Separation {
    #[arg(short, long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    markov_grid: f64,
    #[arg(long)]
    epsilon: f64,
}

fn parse_deviation(s: &str) -> Result<DeviationPolicy, String> {
    let (step, action) = s.split_once(',').ok_or("expected `step,action`")?;
    Ok(DeviationPolicy {
        step: step.trim().parse().map_err(|e| format!("bad step: {e}"))?,
        action: action.trim().parse().map_err(|e| format!("bad action: {e}"))?,
    })
}

fn parse_cover(spec: &str) -> Result<Option<Vec<usize>>, Error> {
    if spec == "min" {
        return Ok(None);
    }
    spec.split(',')
        .map(|v| v.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
        .map_err(|e| Error::InvalidArgument(format!("cover must be `min` or a vertex list: {e}")))
}

enum Outcome {
    Ok,
    Failed,
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("reports serialize"));
}

fn report_json(report: &ViolationReport) -> serde_json::Value {
    json!({
        "checked": report.checked,
        "worst_slack": report.worst_slack,
        "violations": report.violations,
    })
}

/// Writes `[h] -> [[s, k, value], ...]`, with `null` for unrealizable promises.
fn write_tables(path: &Path, tables: &[promise_persuasion::ValueTable]) -> Result<(), Error> {
    let steps: Vec<Vec<(usize, usize, Option<f64>)>> = tables
        .iter()
        .map(|t| {
            t.entries
                .iter()
                .enumerate()
                .flat_map(|(s, row)| row.iter().enumerate().map(move |(k, v)| (s, k, v.finite())))
                .collect()
        })
        .collect();
    let text = serde_json::to_string(&steps).expect("tables serialize");
    std::fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run(cmd: Command) -> Result<Outcome, Error> {
    match cmd {
        Command::GenRandom(a) => {
            let inst = random_instance(a.seed, a.states, a.actions, a.observations, a.horizon)?;
            write_instance(&inst, &a.output)?;
            print_json(&json!({ "instance": a.output, "states": inst.num_states(), "horizon": inst.horizon }));
        }
        Command::GenVc(a) => {
            let graph = read_graph(&a.graph)?;
            let inst = vc_instance(&graph);
            write_instance(&inst, &a.output)?;
            let mut summary = json!({
                "instance": a.output,
                "vertices": graph.num_vertices,
                "edges": graph.edges.len(),
                "states": inst.num_states(),
            });
            if let (Some(spec), Some(out)) = (a.cover, a.markov_out) {
                let cover = match parse_cover(&spec)? {
                    Some(c) => c,
                    None => minimum_vertex_cover(&graph)?,
                };
                let scheme = vc_completeness_scheme(&graph, &cover)?;
                write_markov_scheme(&scheme, &out)?;
                summary["cover"] = json!(cover);
                summary["markov_scheme"] = json!(out);
            }
            print_json(&summary);
        }
        Command::Deviation(a) => {
            let inst = read_instance(&a.instance)?;
            print_json(&deviation_values(&inst));
        }
        Command::Solve(a) => {
            let inst = read_instance(&a.instance)?;
            let result = dp_solve(&inst, a.epsilon)?;
            write_scheme(&result.scheme, &a.output)?;
            if let Some(path) = &a.tables {
                write_tables(path, &result.tables)?;
            }
            let d = &result.diagnostics;
            print_json(&json!({
                "sender_value": result.sender_value,
                "scheme_value": result.scheme_value,
                "delta": result.grid.delta,
                "grid_points": result.grid.num_points,
                "cells_solved": d.cells_solved,
                "infeasible_cells": d.infeasible_cells,
                "total_pivots": d.total_pivots,
                "scheme": a.output,
            }));
        }
        Command::Verify(a) => {
            let inst = read_instance(&a.instance)?;
            let scheme = read_scheme(&a.scheme)?;
            let dev = deviation_values(&inst);
            let exhaustive = verify_persuasive_exhaustive(&inst, &scheme, a.epsilon)?;
            let eta = 2.0 * scheme.delta;
            let honesty = check_honesty(&inst, &scheme, eta)?;
            let local = check_local_persuasiveness(&inst, &scheme, &dev)?;
            print_json(&json!({
                "epsilon": a.epsilon,
                "persuasive": exhaustive.is_clean(),
                "violations": exhaustive.violations,
                "histories_checked": exhaustive.checked,
                "worst_slack": exhaustive.worst_slack,
                "honesty": { "eta": eta, "report": report_json(&honesty) },
                "local": report_json(&local),
            }));
            if !exhaustive.is_clean() {
                return Ok(Outcome::Failed);
            }
        }
        Command::EvalMarkov(a) => {
            let inst = read_instance(&a.instance)?;
            let scheme = read_markov_scheme(&a.markov)?;
            let eval = evaluate_markov_scheme(&inst, &scheme, a.epsilon)?;
            print_json(&json!({
                "sender_value": eval.sender_value,
                "epsilon": a.epsilon,
                "persuasive": eval.report.is_clean(),
                "violations": eval.report.violations,
                "checked": eval.report.checked,
            }));
            if !eval.report.is_clean() {
                return Ok(Outcome::Failed);
            }
        }
        Command::Simulate(a) => {
            let inst = read_instance(&a.instance)?;
            let scheme = read_scheme(&a.scheme)?;
            let mut report = simulate(&inst, &scheme, a.episodes, a.seed, a.deviate_at)?;
            if !a.trace {
                report.episode_seeds.clear();
            }
            print_json(&report);
        }
        Command::Separation(a) => {
            let inst = read_instance(&a.instance)?;
            print_json(&separation_check(&inst, a.markov_grid, a.epsilon)?);
        }
    }
    Ok(Outcome::Ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
