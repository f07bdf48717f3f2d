use std::path::Path;

use anyhow::{anyhow, Context};
use clap::Parser;
use log::info;
use serde::Serialize;
use serde_json::json;
use spongedim::dimension::Knot;
use spongedim::ifs::boundary_direction_sets;
use spongedim::sim::{
    box_count_fit, empirical_local_dimension, sample_cascade, sample_tree, sample_tree_conditioned, AlphaSchedule,
    LocalDimOptions, PercolationTree, TreeOptions,
};
use spongedim::variational::{HausdorffOptions, PackingOptions, SolverOptions};
use spongedim::*;

use crate::parse::{self, InputError};
use crate::run::{sha256_hex, Manifest, Run, MANIFEST};
use crate::{Cli, Command, Failure, IfsArg, SequenceArg, SimArgs, WeightsArg};

type Res<T> = std::result::Result<T, Failure>;

pub fn execute(cli: Cli, args: Vec<String>) -> Res<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(anyhow::Error::from(InputError("--threads must be positive".into())).into());
        }
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| anyhow!(e))?;
    pool.install(|| dispatch(cli, args))
}

fn load_ifs(run: &mut Run, arg: &IfsArg) -> Res<DiagonalIfs> {
    load_ifs_path(run, &arg.ifs)
}

fn load_ifs_path(run: &mut Run, path: &Path) -> Res<DiagonalIfs> {
    let text = run.read_input(path)?;
    Ok(DiagonalIfs::from_json(&text).with_context(|| format!("parsing {}", path.display()))?)
}

fn load_weights(run: &mut Run, w: &WeightsArg) -> Res<WeightModel> {
    let model = match (&w.weights, &w.p) {
        (Some(path), _) => {
            if w.alpha.is_some() {
                return Err(anyhow::Error::from(InputError("--alpha cannot modify a --weights file".into())).into());
            }
            let text = run.read_input(path)?;
            WeightModel::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(p)) => {
            let p = parse::prob_vector(p)?;
            match &w.alpha {
                Some(a) => {
                    let alpha = parse::survival(a, p.len())?;
                    WeightModel::percolation(p, alpha)?
                }
                None => WeightModel::deterministic(p)?,
            }
        }
        (None, None) => return Err(anyhow::Error::from(InputError("give --weights or --p".into())).into()),
    };
    Ok(model)
}

fn load_sequence(run: &mut Run, s: &SequenceArg) -> Res<ImmSequence> {
    if let Some(path) = &s.sequence {
        let text = run.read_input(path)?;
        return Ok(parse::sequence(&text).with_context(|| format!("parsing {}", path.display()))?);
    }
    let model = load_weights(run, &s.weights)?;
    let len = s.len.ok_or_else(|| anyhow::Error::from(InputError("a constant sequence needs --len".into())))?;
    Ok(ImmSequence::constant(model, len)?)
}

fn alpha_opt(s: &Option<String>, letters: usize) -> Res<Option<SurvivalVector>> {
    Ok(s.as_deref().map(|a| parse::survival(a, letters)).transpose()?)
}

fn alpha_schedule(run: &mut Run, sim: &SimArgs, letters: usize) -> Res<AlphaSchedule> {
    if let Some(path) = &sim.alpha_levels {
        let text = run.read_input(path)?;
        let raw: Vec<Vec<f64>> = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        let levels = raw.into_iter().map(SurvivalVector::new).collect::<spongedim::Result<Vec<_>>>()?;
        return Ok(AlphaSchedule::PerLevel(levels));
    }
    let a = sim.alpha.as_deref().unwrap_or("1");
    Ok(AlphaSchedule::Constant(parse::survival(a, letters)?))
}

fn model_hash(ifs: &DiagonalIfs, alpha: &AlphaSchedule) -> String {
    sha256_hex(json!({ "ifs": ifs, "alpha": alpha }).to_string().as_bytes())
}

fn tree(run: &mut Run, ifs: &DiagonalIfs, sim: &SimArgs) -> Res<(PercolationTree, AlphaSchedule, u64)> {
    let alpha = alpha_schedule(run, sim, ifs.len())?;
    let opts = TreeOptions { max_expected_nodes: sim.max_nodes };
    run.seed = Some(sim.seed);
    let (t, attempt) = if sim.condition {
        sample_tree_conditioned(ifs, &alpha, sim.depth, sim.seed, opts, spongedim::sim::SURVIVAL_RETRIES)?
    } else {
        (sample_tree(ifs, &alpha, sim.depth, sim.seed, opts)?, 0)
    };
    info!("tree: depth {}, {} nodes at the last level, attempt {attempt}", t.depth, t.counts[t.depth]);
    Ok((t, alpha, attempt))
}

fn t_grid(lambda: f64, points: usize) -> Vec<f64> {
    (0..points).map(|j| lambda.powf(j as f64 / points as f64)).collect()
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

/// Writes the result document and manifest, then reports on stdout.
fn finish(mut run: Run, json_mode: bool, result: &impl Serialize, summary: String) -> Res<()> {
    let doc = run.write_json(result)?;
    run.finish()?;
    if json_mode {
        print!("{doc}");
    } else {
        println!("{summary}");
    }
    Ok(())
}

fn strip_out(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            out.push(a.clone());
        }
    }
    out
}

fn dispatch(cli: Cli, args: Vec<String>) -> Res<()> {
    let json_mode = cli.json;
    let name = command_name(&cli.command);
    let mut run = Run::new(name, args.clone(), cli.out.clone());
    match &cli.command {
        Command::Validate(arg) => {
            let ifs = load_ifs(&mut run, arg)?;
            let violations: Vec<String> = validate_ifs(&ifs).iter().map(|v| v.to_string()).collect();
            let result = json!({ "valid": violations.is_empty(), "violations": violations });
            if violations.is_empty() {
                finish(run, json_mode, &result, "valid".into())
            } else {
                let doc = run.write_json(&result)?;
                run.finish()?;
                if json_mode {
                    print!("{doc}");
                }
                Err(Failure { code: 2, error: anyhow!("invalid IFS:\n  {}", violations.join("\n  ")) })
            }
        }
        Command::Classify(arg) => {
            let ifs = load_ifs(&mut run, arg)?;
            let c = classify(&ifs);
            let boundary = boundary_direction_sets(&ifs);
            let summary = format!("{:?} (labels {:?}, {} feasible direction sets)", c.most_specific, c.labels, c.family.len());
            finish(run, json_mode, &json!({ "classification": c, "boundary_sets": boundary }), summary)
        }
        Command::Coding { ifs, chain } => {
            let ifs = load_ifs(&mut run, ifs)?;
            let chain: Vec<DirectionSet> = parse::chain(chain)?.into_iter().map(DirectionSet::new).collect();
            let coding = build_projection_coding(&ifs, &chain)?;
            let sizes: Vec<usize> = (0..coding.levels()).map(|r| coding.level_size(r)).collect();
            finish(run, json_mode, &coding, format!("level alphabet sizes {sizes:?}"))
        }
        Command::Decompose { ifs, seq, n } => {
            let ifs = load_ifs(&mut run, ifs)?;
            let seq = load_sequence(&mut run, seq)?;
            let prefix = PrefixTable::new(&ifs, &seq, seq.len())?;
            let dec = decompose_at(&ifs, &prefix, *n)?;
            let summary = format!("levels {:?}, generations {:?}", dec.levels, dec.g);
            finish(run, json_mode, &dec.to_json(), summary)
        }
        Command::DimMm { ifs, weights } => {
            let ifs = load_ifs(&mut run, ifs)?;
            let w = load_weights(&mut run, weights)?;
            let d = dim_mandelbrot(&ifs, &w)?;
            let summary = format!("{:.6}", d.value);
            finish(run, json_mode, &d, summary)
        }
        Command::DimImm { ifs, seq, n_grid, horizon } => {
            let ifs = load_ifs(&mut run, ifs)?;
            let seq = load_sequence(&mut run, seq)?;
            let grid = parse::int_grid(n_grid)?;
            let b = dim_imm_bounds(&ifs, &seq, &grid, horizon.unwrap_or(seq.len()))?;
            run.write(
                "dim-imm.csv",
                &csv("N,d_N,d_tilde", b.profile.iter().map(|p| format!("{},{},{}", p.n, p.d_n, p.d_tilde))),
            )?;
            let summary = format!(
                "liminf d_N ≈ {:.6}, limsup d_N ≈ {:.6} (converged: {})",
                b.liminf, b.limsup, b.converged
            );
            finish(run, json_mode, &b, summary)
        }
        Command::DimPeriodic { ifs, spec, quad_steps, t_points } => {
            let ifs = load_ifs(&mut run, ifs)?;
            let text = run.read_input(spec)?;
            let spec = PeriodicSpec::from_json(&text)?;
            let d = dim_exp_periodic(&ifs, &spec, *quad_steps, &t_grid(spec.lambda, *t_points))?;
            run.write(
                "dim-periodic.csv",
                &csv("T,delta1,delta2", d.values.iter().map(|v| format!("{},{},{}", v.t, v.delta1, v.delta2))),
            )?;
            let summary = format!("dim_H {:.6}, dim_P {:.6}", d.dim_h, d.dim_p);
            finish(run, json_mode, &d, summary)
        }
        Command::OptimizeHausdorff { ifs, alpha, schedule, eps, horizon, seed } => {
            let ifs = load_ifs(&mut run, ifs)?;
            let alpha = alpha_opt(alpha, ifs.len())?;
            let schedule = parse::schedule(schedule)?;
            run.seed = Some(*seed);
            let opts = HausdorffOptions { seed: *seed, ..Default::default() };
            let r = optimize_type_ell_hausdorff(&ifs, alpha.as_ref(), &schedule, *eps, *horizon, &opts)?;
            let summary = format!("{:.6} (at horizon: {})", r.value, r.at_horizon);
            finish(run, json_mode, &r, summary)
        }
        Command::OptimizePacking { ifs, alpha, schedule, eps, n_grid, starts, seed } => {
            let ifs = load_ifs(&mut run, ifs)?;
            let alpha = alpha_opt(alpha, ifs.len())?;
            let schedule = parse::schedule(schedule)?;
            let grid = parse::int_grid(n_grid)?;
            run.seed = Some(*seed);
            let opts = PackingOptions {
                solver: SolverOptions { starts: *starts, seed: *seed, ..Default::default() },
                ..Default::default()
            };
            let r = optimize_packing(&ifs, alpha.as_ref(), &schedule, *eps, &grid, &opts)?;
            let summary = format!("{:.6} (scale {:?})", r.value, r.scale);
            finish(run, json_mode, &r, summary)
        }
        Command::DimAttractor { ifs, alpha } => {
            let ifs = load_ifs(&mut run, ifs)?;
            let alpha = parse::survival(alpha, ifs.len())?;
            let d = dim_attractor_equal_linear(&ifs, &alpha)?;
            let summary = format!("{:.6} (level {}, θ = {:.6})", d.value, d.level, d.theta);
            finish(run, json_mode, &d, summary)
        }
        Command::Simulate { ifs, sim } => {
            let ifs = load_ifs(&mut run, ifs)?;
            let (t, alpha, attempt) = tree(&mut run, &ifs, sim)?;
            let hash = model_hash(&ifs, &alpha);
            let dump = json!({
                "header": {
                    "seed": t.seed,
                    "requested_seed": sim.seed,
                    "attempt": attempt,
                    "depth": t.depth,
                    "alphabet": t.alphabet,
                    "generator": t.generator,
                    "model_hash": hash,
                },
                "masks": t.masks,
            });
            run.write("tree.json", &(dump.to_string() + "\n"))?;
            run.write("counts.csv", &csv("level,count", t.counts.iter().enumerate().map(|(k, c)| format!("{k},{c}"))))?;
            let summary = format!("survived: {}, counts {:?}", t.survived(), t.counts);
            let result = json!({ "survived": t.survived(), "counts": t.counts, "seed": t.seed, "attempt": attempt, "model_hash": hash });
            finish(run, json_mode, &result, summary)
        }
        Command::Boxcount { ifs, sim, n_list } => {
            let ifs = load_ifs(&mut run, ifs)?;
            let (t, _, _) = tree(&mut run, &ifs, sim)?;
            let ns = parse::real_grid(n_list)?;
            let rep = box_count_fit(&t, &ifs, &ns, None)?;
            run.write("boxcount.csv", &rep.to_csv())?;
            let summary = format!("slope {:.6} ± {:.6}", rep.slope, 1.96 * rep.slope_stderr);
            finish(run, json_mode, &rep, summary)
        }
        Command::Cascade { seq, depth, seed } => {
            let seq = load_sequence(&mut run, seq)?;
            run.seed = Some(*seed);
            let c = sample_cascade(&seq, *depth, *seed, TreeOptions::default())?;
            run.write("cascade.csv", &c.to_csv())?;
            let kept: Vec<usize> = c.q.iter().map(Vec::len).collect();
            let summary = format!("Y_{} = {:.6}, kept words per level {kept:?}", depth, c.y[*depth]);
            finish(run, json_mode, &json!({ "depth": c.depth, "seed": c.seed, "y": c.y, "kept": kept }), summary)
        }
        Command::LocalDim { ifs, seq, depth, seed, n_list, points, lookahead } => {
            let ifs = load_ifs(&mut run, ifs)?;
            let seq = load_sequence(&mut run, seq)?;
            let ns = parse::real_grid(n_list)?;
            run.seed = Some(*seed);
            let opts = LocalDimOptions { points: *points, lookahead: *lookahead, ..Default::default() };
            let rep = empirical_local_dimension(&ifs, &seq, *seed, *depth, &ns, &opts)?;
            run.write(
                "local-dim.csv",
                &csv(
                    "point,word,slope",
                    rep.points.iter().enumerate().map(|(i, p)| {
                        let w: Vec<String> = p.word.iter().map(|x| x.to_string()).collect();
                        format!("{i},{},{}", w.join("."), p.slope)
                    }),
                ),
            )?;
            let summary = format!("median slope {:.6}, mean {:.6}", rep.median, rep.mean);
            finish(run, json_mode, &rep, summary)
        }
        Command::GapDemo { ifs, alpha, lambda } => {
            let ifs = match ifs {
                Some(p) => load_ifs_path(&mut run, p)?,
                None => DiagonalIfs::full_grid(&[3, 2], &[vec![1, 1], vec![2, 1]])?,
            };
            let n = ifs.len();
            let alpha = parse::survival(alpha, n)?;
            let rest = |x: f64| (1.0 - x) / (n - 1) as f64;
            let p1: Vec<f64> = (0..n).map(|i| if i == 0 { 0.7 } else { rest(0.7) }).collect();
            let p2: Vec<f64> = (0..n).map(|i| if i == 0 { 0.1 } else { rest(0.1) }).collect();
            let spec = PeriodicSpec::new(
                *lambda,
                vec![
                    Knot { t: 1.0, p: ProbVector::new(p1.clone())? },
                    Knot { t: lambda.sqrt(), p: ProbVector::new(p2.clone())? },
                ],
                Some(alpha.clone()),
            )?;
            let imm = dim_exp_periodic(&ifs, &spec, 256, &t_grid(*lambda, 64))?;
            let phase = |p: Vec<f64>| -> Res<f64> {
                Ok(dim_mandelbrot(&ifs, &WeightModel::percolation(ProbVector::new(p)?, alpha.clone())?)?.value)
            };
            let (m1, m2) = (phase(p1)?, phase(p2)?);
            let best = optimize_mandelbrot(&ifs, Some(&alpha), &SolverOptions::default())?;
            let result = json!({
                "spec": spec,
                "imm": { "dim_h": imm.dim_h, "dim_p": imm.dim_p, "gap": imm.dim_p - imm.dim_h },
                "mm": { "phase_dims": [m1, m2], "sup": best.value, "gap": 0.0 },
            });
            let summary = format!(
                "inhomogeneous: dim_H {:.6}, dim_P {:.6} (gap {:.6}); Mandelbrot measures: phases {:.6}, {:.6}, sup {:.6} (dim_H = dim_P)",
                imm.dim_h,
                imm.dim_p,
                imm.dim_p - imm.dim_h,
                m1,
                m2,
                best.value
            );
            finish(run, json_mode, &result, summary)
        }
        Command::Replay { manifest } => {
            let text = std::fs::read_to_string(manifest).with_context(|| format!("reading {}", manifest.display()))?;
            let old: Manifest =
                serde_json::from_str(&text).map_err(|e| anyhow::Error::from(InputError(format!("bad manifest: {e}"))))?;
            let out_dir = if args.iter().any(|a| a == "--out" || a.starts_with("--out=")) {
                cli.out.clone()
            } else {
                manifest.parent().map(Path::to_path_buf).unwrap_or_default()
            };
            let mut new_args = strip_out(&old.args);
            new_args.push("--out".into());
            new_args.push(out_dir.display().to_string());
            let replayed = Cli::try_parse_from(std::iter::once("spongedim".to_string()).chain(new_args.iter().cloned()))
                .map_err(|e| anyhow::Error::from(InputError(format!("manifest arguments: {e}"))))?;
            if matches!(replayed.command, Command::Replay { .. }) {
                return Err(anyhow::Error::from(InputError("cannot replay a replay".into())).into());
            }
            dispatch(replayed, new_args)?;
            let fresh: Manifest = serde_json::from_str(&std::fs::read_to_string(out_dir.join(MANIFEST)).map_err(|e| anyhow!(e))?)
                .map_err(|e| anyhow!(e))?;
            let mismatched: Vec<&str> = old
                .outputs
                .iter()
                .filter(|o| !fresh.outputs.contains(o))
                .map(|o| o.path.as_str())
                .collect();
            if mismatched.is_empty() && fresh.outputs.len() == old.outputs.len() {
                eprintln!("replay reproduced {} artifacts", old.outputs.len());
                Ok(())
            } else {
                Err(Failure { code: 1, error: anyhow!("replay differs in {mismatched:?}") })
            }
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Validate(_) => "validate",
        Command::Classify(_) => "classify",
        Command::Coding { .. } => "coding",
        Command::Decompose { .. } => "decompose",
        Command::DimMm { .. } => "dim-mm",
        Command::DimImm { .. } => "dim-imm",
        Command::DimPeriodic { .. } => "dim-periodic",
        Command::OptimizeHausdorff { .. } => "optimize-hausdorff",
        Command::OptimizePacking { .. } => "optimize-packing",
        Command::DimAttractor { .. } => "dim-attractor",
        Command::Simulate { .. } => "simulate",
        Command::Boxcount { .. } => "boxcount",
        Command::Cascade { .. } => "cascade",
        Command::LocalDim { .. } => "local-dim",
        Command::GapDemo { .. } => "gap-demo",
        Command::Replay { .. } => "replay",
    }
}
