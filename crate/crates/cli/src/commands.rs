use crate::manifest::RunManifest;
use crate::{BaselineKind, Cli, Command, EnvArgs, MapArgs};
use serde_json::json;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use trep_core::actor::Actor;
use trep_core::data::{generate_synthetic, ingest_atc, load_corpus, save_corpus, AtcSpec, ScenarioSpec};
use trep_core::embed::{train_embeddings, EmbeddingTable};
use trep_core::eval::{
    self, curves_svg, dft_all, encode_all, kmeans, median_horizon, merge_curves, parse_representations,
    representations_csv, Curve, KMeansOptions,
};
use trep_core::grid::{parse_map, parse_walls, render_map, render_walls};
use trep_core::tensor::Checkpoint;
use trep_core::trainer::{self, pretrain_actor, PretrainOptions, Source, TrainConfig};
use trep_core::{presets, Env, Error, GridSpec, RoadNetwork, Result, Trajectory};

struct Ctx {
    config: TrainConfig,
    out_dir: PathBuf,
}

impl Ctx {
    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn manifest(&self, command: &str) -> RunManifest {
        RunManifest::new(command, &self.config)
    }

    fn finish(&self, manifest: &RunManifest) -> Result<()> {
        let path = manifest.write(&self.out_dir)?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

fn read_text(path: &Path, what: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {what} {}: {e}", path.display())))
}

fn load_network(args: &MapArgs, config: &TrainConfig, manifest: &mut RunManifest) -> Result<RoadNetwork> {
    let (map_text, walls_text) = match (&args.preset, &args.map) {
        (Some(name), _) => {
            let (m, w) = presets::by_name(name).ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
            (m.to_string(), w.to_string())
        }
        (None, Some(path)) => {
            manifest.input(path);
            let walls = match &args.walls {
                Some(w) => {
                    manifest.input(w);
                    read_text(w, "wall file")?
                }
                None => String::new(),
            };
            (read_text(path, "map")?, walls)
        }
        (None, None) => return Err(Error::Config("either --preset or --map is required".into())),
    };
    let mut map = parse_map(&map_text)?;
    parse_walls(&walls_text, &mut map)?;
    let spec = GridSpec::new([0.0, 0.0], config.alpha, map.width, map.height)?;
    let net = RoadNetwork::build(&map, spec)?;
    manifest.map_hash = Some(net.hash().to_string());
    Ok(net)
}

fn load_env(args: &EnvArgs, config: &TrainConfig, manifest: &mut RunManifest) -> Result<Env> {
    let net = load_network(&args.map, config, manifest)?;
    let embeddings = match &args.embeddings {
        Some(path) => {
            manifest.input(path);
            EmbeddingTable::load(path, &net)?
        }
        None => train_embeddings(&net, &config.embed_config())?,
    };
    Env::new(net, embeddings)
}

fn read_corpus(path: &Path, net: &RoadNetwork, manifest: &mut RunManifest) -> Result<Vec<Trajectory>> {
    manifest.input(path);
    let corpus = load_corpus(path, net)?;
    if corpus.is_empty() {
        return Err(Error::Data(format!("corpus {} is empty", path.display())));
    }
    Ok(corpus)
}

fn load_actor(path: &Path, env: &Env, manifest: &mut RunManifest) -> Result<Actor> {
    manifest.input(path);
    let ckpt = Checkpoint::load(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Actor::from_checkpoint(ckpt, env)
}

fn save_checkpoint(ckpt: &Checkpoint, path: &Path, manifest: &mut RunManifest) -> Result<()> {
    ckpt.save(path)?;
    manifest.checkpoint(path);
    Ok(())
}

fn write_output(path: &Path, text: &str, manifest: &mut RunManifest) -> Result<()> {
    std::fs::write(path, text)?;
    manifest.output(path);
    Ok(())
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<TrainConfig> {
    let mut config = match path {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

pub fn run(cli: Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref(), cli.seed)?;
    std::fs::create_dir_all(&cli.out_dir)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", cli.out_dir.display())))?;
    let ctx = Ctx { config, out_dir: cli.out_dir };
    if let Some(p) = &cli.config {
        log::info!("configuration from {}", p.display());
    }
    match cli.command {
        Command::BuildMap(map) => build_map(&ctx, &map),
        Command::GenSynth { map, scenario, per_group, held_out, output } => {
            gen_synth(&ctx, &map, scenario.as_deref(), per_group, held_out, &output)
        }
        Command::IngestAtc { map, input, spec, output } => ingest(&ctx, &map, &input, spec.as_deref(), &output),
        Command::Embed(map) => embed(&ctx, &map),
        Command::Pretrain { env, corpus, output } => pretrain(&ctx, &env, &corpus, &output),
        Command::Train { env, corpus, actor } => train(&ctx, &env, &corpus, actor.as_deref()),
        Command::Encode { env, actor, corpus, output } => encode(&ctx, &env, &actor, &corpus, &output),
        Command::Cluster { representations, k, restarts, output } => cluster(&ctx, &representations, k, restarts, &output),
        Command::EvalWcse { map, representations, corpus, k_min, k_max, restarts, name, output } => {
            eval_wcse(&ctx, &map, &representations, &corpus, (k_min, k_max), restarts, &name, &output)
        }
        Command::Baseline { kind, env, corpus } => baseline(&ctx, kind, &env, &corpus),
        Command::Perturb { env, actor, corpus, step, trials, output } => {
            perturb(&ctx, &env, &actor, &corpus, step, trials, &output)
        }
        Command::ExportCurves { inputs, output } => export_curves(&ctx, &inputs, &output),
    }
}

fn build_map(ctx: &Ctx, args: &MapArgs) -> Result<()> {
    let mut m = ctx.manifest("build-map");
    let net = load_network(args, &ctx.config, &mut m)?;
    write_output(&ctx.out("map.txt"), &render_map(net.map()), &mut m)?;
    write_output(&ctx.out("walls.txt"), &render_walls(net.map()), &mut m)?;
    let spec = net.spec();
    let summary = json!({
        "width": spec.width,
        "height": spec.height,
        "alpha": spec.cell_size,
        "cells": net.len(),
        "edges": net.edge_count(),
        "hash": net.hash(),
    });
    write_output(&ctx.out("network.json"), &format!("{}\n", serde_json::to_string_pretty(&summary)?), &mut m)?;
    println!("{} cells, {} edges, hash {}", net.len(), net.edge_count(), net.hash());
    ctx.finish(&m)
}

fn gen_synth(ctx: &Ctx, args: &MapArgs, scenario: Option<&Path>, per_group: usize, held_out: bool, output: &str) -> Result<()> {
    let mut m = ctx.manifest("gen-synth");
    let net = load_network(args, &ctx.config, &mut m)?;
    let mut spec = match scenario {
        Some(p) => {
            m.input(p);
            serde_json::from_str::<ScenarioSpec>(&read_text(p, "scenario")?)
                .map_err(|e| Error::Config(format!("invalid scenario {}: {e}", p.display())))?
        }
        None => ScenarioSpec::default_ring(per_group, ctx.config.seed),
    };
    if held_out {
        spec = spec.held_out();
    }
    let corpus = generate_synthetic(&net, &spec)?;
    let path = ctx.out(output);
    save_corpus(&path, &net, &corpus)?;
    m.output(&path);
    println!("{} trajectories in {} groups", corpus.len(), spec.groups.len());
    ctx.finish(&m)
}

fn ingest(ctx: &Ctx, args: &MapArgs, input: &Path, spec: Option<&Path>, output: &str) -> Result<()> {
    let mut m = ctx.manifest("ingest-atc");
    let net = load_network(args, &ctx.config, &mut m)?;
    let spec = match spec {
        Some(p) => {
            m.input(p);
            serde_json::from_str::<AtcSpec>(&read_text(p, "ingestion spec")?)
                .map_err(|e| Error::Config(format!("invalid ingestion spec {}: {e}", p.display())))?
        }
        None => AtcSpec::default(),
    };
    m.input(input);
    let file = std::fs::File::open(input).map_err(|e| Error::Data(format!("cannot read {}: {e}", input.display())))?;
    let corpus = ingest_atc(std::io::BufReader::new(file), &spec, &net)?;
    let path = ctx.out(output);
    save_corpus(&path, &net, &corpus.trajectories)?;
    m.output(&path);
    println!(
        "{} trajectories; dropped {} blocked and {} outside samples, {} short trajectories",
        corpus.trajectories.len(),
        corpus.dropped_blocked,
        corpus.dropped_outside,
        corpus.dropped_short
    );
    ctx.finish(&m)
}

fn embed(ctx: &Ctx, args: &MapArgs) -> Result<()> {
    let mut m = ctx.manifest("embed");
    let net = load_network(args, &ctx.config, &mut m)?;
    let table = train_embeddings(&net, &ctx.config.embed_config())?;
    let path = ctx.out("embeddings.json");
    table.save(&path)?;
    m.output(&path);
    ctx.finish(&m)
}

fn pretrain(ctx: &Ctx, args: &EnvArgs, corpus: &Path, output: &str) -> Result<()> {
    let mut m = ctx.manifest("pretrain");
    let env = load_env(args, &ctx.config, &mut m)?;
    let corpus = read_corpus(corpus, &env.net, &mut m)?;
    let mut actor = Actor::new(&env, ctx.config.actor_config(), ctx.config.component_seed("actor-init"))?;
    let report = pretrain_actor(&mut actor, &env, &corpus, &PretrainOptions::from_config(&ctx.config))?;
    save_checkpoint(&actor.to_checkpoint(&env)?, &ctx.out(output), &mut m)?;
    write_output(&ctx.out("pretrain.json"), &format!("{}\n", serde_json::to_string(&report)?), &mut m)?;
    if let Some(loss) = report.epoch_losses.last() {
        println!("{} iterations, final epoch loss {loss}", report.iterations);
    }
    ctx.finish(&m)
}

fn train(ctx: &Ctx, args: &EnvArgs, corpus: &Path, actor: Option<&Path>) -> Result<()> {
    let mut m = ctx.manifest("train");
    let env = load_env(args, &ctx.config, &mut m)?;
    let corpus = read_corpus(corpus, &env.net, &mut m)?;
    let log_path = ctx.out("train-log.jsonl");
    let mut sink = BufWriter::new(std::fs::File::create(&log_path)?);
    let refinement = match actor {
        Some(path) => {
            let actor = load_actor(path, &env, &mut m)?;
            trainer::refine(&env, actor, &ctx.config, Source::from_config(&ctx.config, &corpus), Some(&mut sink))?
        }
        None => trainer::fit(&env, &corpus, &ctx.config, Some(&mut sink))?.1,
    };
    sink.flush()?;
    m.output(&log_path);
    let outcome = &refinement.outcome;
    save_checkpoint(&outcome.actor.to_checkpoint(&env)?, &ctx.out("actor.ckpt"), &mut m)?;
    save_checkpoint(&outcome.critic.to_checkpoint(&env)?, &ctx.out("critic.ckpt"), &mut m)?;
    let losses = json!({ "critic_pretrain_losses": refinement.critic_pretrain_losses });
    write_output(&ctx.out("critic-pretrain.json"), &format!("{losses}\n"), &mut m)?;
    println!("{} iterations, converged: {}", outcome.iterations, outcome.converged);
    ctx.finish(&m)
}

fn encode(ctx: &Ctx, args: &EnvArgs, actor: &Path, corpus: &Path, output: &str) -> Result<()> {
    let mut m = ctx.manifest("encode");
    let env = load_env(args, &ctx.config, &mut m)?;
    let actor = load_actor(actor, &env, &mut m)?;
    let corpus = read_corpus(corpus, &env.net, &mut m)?;
    let reps = encode_all(&actor, &env, &corpus)?;
    write_output(&ctx.out(output), &representations_csv(&reps), &mut m)?;
    ctx.finish(&m)
}

fn read_representations(path: &Path, manifest: &mut RunManifest) -> Result<Vec<Vec<f64>>> {
    manifest.input(path);
    parse_representations(&read_text(path, "representations")?).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn cluster(ctx: &Ctx, representations: &Path, k: usize, restarts: usize, output: &str) -> Result<()> {
    let mut m = ctx.manifest("cluster");
    let reps = read_representations(representations, &mut m)?;
    let a = kmeans(&reps, k, ctx.config.component_seed("kmeans"), KMeansOptions { restarts, ..KMeansOptions::default() })?;
    let mut text = String::from("trajectory,cluster,medoid\n");
    for (i, &label) in a.labels.iter().enumerate() {
        text.push_str(&format!("{i},{label},{}\n", u8::from(a.medoids[label] == i)));
    }
    write_output(&ctx.out(output), &text, &mut m)?;
    println!("inertia {}", a.inertia);
    ctx.finish(&m)
}

#[allow(clippy::too_many_arguments)]
fn eval_wcse(
    ctx: &Ctx,
    args: &MapArgs,
    representations: &Path,
    corpus: &Path,
    (k_min, k_max): (usize, usize),
    restarts: usize,
    name: &str,
    output: &str,
) -> Result<()> {
    if k_min == 0 || k_min > k_max {
        return Err(Error::Config(format!("need 1 <= k_min <= k_max, got {k_min}..{k_max}")));
    }
    if name.is_empty() || name.contains(',') {
        return Err(Error::Config("series name must be non-empty and free of commas".into()));
    }
    let mut m = ctx.manifest("eval-wcse");
    let net = load_network(args, &ctx.config, &mut m)?;
    let reps = read_representations(representations, &mut m)?;
    let corpus = read_corpus(corpus, &net, &mut m)?;
    if reps.len() != corpus.len() {
        return Err(Error::Data(format!("{} representations for {} trajectories", reps.len(), corpus.len())));
    }
    let opts = KMeansOptions { restarts, ..KMeansOptions::default() };
    let curve = Curve::compute(name, &net, &reps, &corpus, k_min..=k_max, ctx.config.component_seed("kmeans"), opts)?;
    write_output(&ctx.out(output), &curve.to_csv(), &mut m)?;
    ctx.finish(&m)
}

fn baseline(ctx: &Ctx, kind: BaselineKind, args: &EnvArgs, corpus: &Path) -> Result<()> {
    let mut m = ctx.manifest("baseline");
    match kind {
        BaselineKind::Dft => {
            let net = load_network(&args.map, &ctx.config, &mut m)?;
            let corpus = read_corpus(corpus, &net, &mut m)?;
            let reps = dft_all(&net, &corpus, ctx.config.repr_dim)?;
            write_output(&ctx.out("dft.csv"), &representations_csv(&reps), &mut m)?;
        }
        BaselineKind::Cssrnn | BaselineKind::TrepLl => {
            let env = load_env(args, &ctx.config, &mut m)?;
            let corpus = read_corpus(corpus, &env.net, &mut m)?;
            let (actor, name) = match kind {
                BaselineKind::Cssrnn => (eval::train_cssrnn(&env, &corpus, &ctx.config)?, "cssrnn.ckpt"),
                _ => (eval::train_trep_ll(&env, &corpus, &ctx.config)?, "trep-ll.ckpt"),
            };
            save_checkpoint(&actor.to_checkpoint(&env)?, &ctx.out(name), &mut m)?;
        }
    }
    ctx.finish(&m)
}

fn perturb(ctx: &Ctx, args: &EnvArgs, actor: &Path, corpus: &Path, step: usize, trials: usize, output: &str) -> Result<()> {
    let mut m = ctx.manifest("perturb");
    let env = load_env(args, &ctx.config, &mut m)?;
    let actor = load_actor(actor, &env, &mut m)?;
    let corpus = read_corpus(corpus, &env.net, &mut m)?;
    let records = eval::recoverability_trials(&actor, &env, &corpus, step, ctx.config.delta, trials)?;
    let mut text = String::new();
    for (i, r) in &records {
        let line = json!({
            "trajectory": i,
            "step": r.step,
            "forced": r.forced,
            "horizon": r.horizon,
            "cells": r.cells,
        });
        text.push_str(&format!("{line}\n"));
    }
    write_output(&ctx.out(output), &text, &mut m)?;
    let horizons: Vec<Option<usize>> = records.iter().map(|(_, r)| r.horizon).collect();
    match median_horizon(&horizons) {
        Some(med) => println!("{} trials, median rejoin horizon {med}", records.len()),
        None => println!("no recoverable deviation at step {step}"),
    }
    ctx.finish(&m)
}

fn export_curves(ctx: &Ctx, inputs: &[PathBuf], output: &str) -> Result<()> {
    let mut m = ctx.manifest("export-curves");
    let mut curves = Vec::with_capacity(inputs.len());
    for p in inputs {
        m.input(p);
        curves.push(Curve::parse(&read_text(p, "curve file")?).map_err(|e| Error::Data(format!("{}: {e}", p.display())))?);
    }
    write_output(&ctx.out(&format!("{output}.csv")), &merge_curves(&curves), &mut m)?;
    write_output(&ctx.out(&format!("{output}.svg")), &curves_svg(&curves), &mut m)?;
    ctx.finish(&m)
}
