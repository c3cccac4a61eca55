use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use regionrec::analysis::{format_intent_table, plan_report, read_plan_sets, top_relations_per_intent, PatternTaxonomy};
use regionrec::checkpoint::Checkpoint;
use regionrec::eval::{evaluate_all, evaluate_scorer, random_baseline, EvalReport, PopularityScorer};
use regionrec::ingest::{
    build_user_graph, graph_from_triples, prune_graph, read_feature_table, resolve_bins, write_feature_table, BinConfig,
    BinSet, FeatureSchema,
};
use regionrec::interactions::{load_split, matrix_from_pairs, read_pairs, save_split, split_interactions, InteractionMatrix, Vocab};
use regionrec::kg::{read_triples, write_triples, KnowledgeGraph};
use regionrec::model::recommend_topk;
use regionrec::parallel::Execution;
use regionrec::pipeline::region_vocab;
use regionrec::synth::{generate_synthetic, SynthConfig};
use regionrec::train::{fit_with, TrainConfig};
use regionrec::Error;

#[derive(Parser)]
#[command(name = "regionrec", version, about = "Recommend development patterns to regions from a region-feature knowledge graph")]
struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the region-feature graph from a feature table.
    Ingest {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replace continuous-value nodes with discretized level nodes.
    Prune {
        #[arg(long)]
        graph: PathBuf,
        /// Per-relation bin rules; quantile quartiles otherwise.
        #[arg(long)]
        bins: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the resolved bin edges [default: <out>.bins.toml].
        #[arg(long)]
        bins_out: Option<PathBuf>,
    },
    /// Split interactions into train, validation and test sets.
    Split {
        #[arg(long)]
        interactions: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Print the top-K patterns for one region.
    Recommend {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        region: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Score the model and baselines on the test split.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', default_values_t = vec![3, 5])]
        k: Vec<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Inspect learned parameters.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Coincidence degrees, development directions and plan accuracy.
    Plan {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long)]
        gov: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        top: usize,
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2596)]
        regions: usize,
        #[arg(long, default_value_t = 94)]
        items: usize,
        #[arg(long, default_value_t = 6)]
        factors: usize,
        #[arg(long, default_value_t = 3.0)]
        interactions: f64,
        #[arg(long, default_value_t = 0.2)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Highest-weighted relations of each intent.
    Intents {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Training configuration (TOML).
    #[arg(long, env = "REGIONREC_CONFIG")]
    config: Option<PathBuf>,
    /// Resolved bin edges stored with the model.
    #[arg(long)]
    bins: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    split: PathBuf,
}

const USAGE: u8 = 1;
const DATA: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match run(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { DATA } else { USAGE })
        }
    }
}

fn run(command: Command, exec: Execution) -> regionrec::Result<()> {
    let schema = FeatureSchema::standard();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match command {
        Command::Ingest { features, out: path } => {
            let records = read_feature_table(File::open(&features)?, &schema)?;
            let ug = build_user_graph(&records, &schema)?;
            write_graph(&ug, &path)?;
            let s = ug.stats()?;
            writeln!(out, "regions\t{}", records.len())?;
            writeln!(out, "nodes\t{}\nedges\t{}\ndensity\t{:.6e}", s.node_count, s.edge_count, s.density)?;
        }
        Command::Prune {
            graph,
            bins,
            out: path,
            bins_out,
        } => {
            let ug = read_graph(&graph, &schema)?;
            let config = match bins {
                Some(p) => {
                    let mut c = BinConfig::load(&p)?;
                    c.default = BinConfig::default().default;
                    c
                }
                None => BinConfig::default(),
            };
            let resolved = resolve_bins(&ug, &config)?;
            let (ugp, report) = prune_graph(&ug, &resolved)?;
            write_graph(&ugp, &path)?;
            let bins_path = bins_out.unwrap_or_else(|| with_suffix(&path, ".bins.toml"));
            std::fs::write(&bins_path, resolved.to_config().to_toml())?;
            let (b, a) = (report.stats_before, report.stats_after);
            writeln!(out, "\tnodes\tedges\tdensity")?;
            writeln!(out, "before\t{}\t{}\t{:.6e}", b.node_count, b.edge_count, b.density)?;
            writeln!(out, "after\t{}\t{}\t{:.6e}", a.node_count, a.edge_count, a.density)?;
            writeln!(out, "removed {} value nodes, created {} level nodes", report.nodes_removed, report.nodes_created)?;
        }
        Command::Split {
            interactions,
            graph,
            out: dir,
            seed,
        } => {
            let g = read_graph(&graph, &schema)?;
            let users = region_vocab(&g)?;
            let rows = read_pairs(BufReader::new(File::open(&interactions)?))?;
            let mut items = Vocab::new();
            let pairs = matrix_from_pairs(&rows, &users, &mut items)?;
            let y = InteractionMatrix::from_pairs(users.len(), items.len(), pairs)?;
            let split = split_interactions(&y, seed);
            save_split(&dir, &split, &users, &items)?;
            writeln!(
                out,
                "train\t{}\nvalidation\t{}\ntest\t{}",
                split.train.len(),
                split.validation.len(),
                split.test.len()
            )?;
        }
        Command::Train(args) => train(args, &schema, exec, &mut out)?,
        Command::Recommend { model, region, k } => {
            let ctx = Context::load(&model, &schema)?;
            let u = ctx
                .users
                .get(&region)
                .ok_or_else(|| Error::Input(format!("unknown region {region:?}")))?;
            let ranked = recommend_topk(&ctx.checkpoint.params, &ctx.graph, &ctx.split.train, regionrec::kg::EntityId(u), k)?;
            for (rank, (i, score)) in ranked.into_iter().enumerate() {
                writeln!(out, "{}\t{}\t{:.6}", rank + 1, ctx.items.name(i), score)?;
            }
        }
        Command::Evaluate { model, k, json } => {
            let ctx = Context::load(&model, &schema)?;
            let split = &ctx.split;
            let report = evaluate_all(&ctx.checkpoint.params, &ctx.graph, split, &k, exec)?;
            let pop = evaluate_scorer(&PopularityScorer::new(&split.train), &split.train, &split.test, &k, exec)?;
            let random = EvalReport {
                metrics: k
                    .iter()
                    .map(|&k| random_baseline(&split.train, &split.test, k))
                    .collect::<regionrec::Result<_>>()?,
                users_evaluated: report.users_evaluated,
            };
            if json {
                let v = serde_json::json!({ "model": report, "popularity": pop, "random": random });
                writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("serializable"))?;
            } else {
                write!(out, "{}", report.to_table("model"))?;
                write!(out, "{}", pop.to_table("popularity"))?;
                write!(out, "{}", random.to_table("random"))?;
            }
        }
        Command::Analyze {
            what: AnalyzeCommand::Intents { checkpoint, graph, top },
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let g = read_graph(&graph, &schema)?;
            check_graph_matches(&ckpt, &g)?;
            let k = top.min(g.num_relations());
            write!(out, "{}", format_intent_table(&top_relations_per_intent(&ckpt.params, &g, k)?))?;
        }
        Command::Plan {
            model,
            taxonomy,
            gov,
            top,
            json,
        } => {
            let ctx = Context::load(&model, &schema)?;
            let tax = PatternTaxonomy::read(BufReader::new(File::open(&taxonomy)?))?;
            let gov = gov
                .map(|p| -> regionrec::Result<_> { read_plan_sets(BufReader::new(File::open(p)?)) })
                .transpose()?;
            let report = plan_report(
                &ctx.checkpoint.params,
                &ctx.graph,
                &ctx.split.train,
                &ctx.users,
                &ctx.items,
                &tax,
                gov.as_ref(),
                top,
                exec,
            )?;
            if json {
                writeln!(out, "{}", report.to_json())?;
            } else {
                write!(out, "{}", report.to_table())?;
            }
        }
        Command::Synth {
            out: dir,
            regions,
            items,
            factors,
            interactions,
            noise,
            seed,
        } => {
            let cfg = SynthConfig {
                num_regions: regions,
                num_items: items,
                num_latent_factors: factors,
                interactions_per_region: interactions,
                noise_rate: noise,
                seed,
            };
            let data = generate_synthetic(&cfg)?;
            std::fs::create_dir_all(&dir)?;
            write_feature_table(File::create(dir.join("features.csv"))?, &schema, &data.records)?;
            let mut w = BufWriter::new(File::create(dir.join("interactions.tsv"))?);
            regionrec::interactions::write_pairs(&data.interactions, &data.users, &data.items, &mut w)?;
            w.flush()?;
            let mut w = BufWriter::new(File::create(dir.join("taxonomy.tsv"))?);
            data.taxonomy.write(&data.items, &mut w)?;
            w.flush()?;
            writeln!(
                out,
                "regions\t{}\nitems\t{}\ninteractions\t{}",
                regions,
                items,
                data.interactions.len()
            )?;
        }
    }
    Ok(())
}

fn train(args: TrainArgs, schema: &FeatureSchema, exec: Execution, out: &mut impl Write) -> regionrec::Result<()> {
    let mut cfg = match &args.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    let graph = read_graph(&args.graph, schema)?;
    let users = region_vocab(&graph)?;
    let (split, items) = load_split(&args.split, &users)?;
    let bins = match &args.bins {
        Some(p) => BinSet::from_config(&BinConfig::load(p)?)?,
        None => BinSet::new(),
    };
    let (params, report) = fit_with(&graph, &split, &cfg, exec, |s| {
        let f1 = s.validation_f1_at_3.map_or("-".to_owned(), |f| format!("{f:.4}"));
        eprintln!("epoch {:>3}  loss {:.5}  val F1@3 {}", s.epoch, s.mean_loss, f1);
    })?;
    let ckpt = Checkpoint {
        params,
        entities: graph.entity_names().to_vec(),
        relations: graph.relation_names().to_vec(),
        items: items.names().to_vec(),
        bins,
    };
    ckpt.save(&args.out)?;
    std::fs::write(with_suffix(&args.out, ".toml"), cfg.to_toml())?;
    writeln!(
        out,
        "best epoch {} of {} in {:.2?}; wrote {}",
        report.best_epoch,
        cfg.epochs,
        report.wall_time,
        args.out.display()
    )?;
    Ok(())
}

struct Context {
    checkpoint: Checkpoint,
    graph: KnowledgeGraph,
    split: regionrec::interactions::DataSplit,
    users: Vocab,
    items: Vocab,
}

impl Context {
    fn load(args: &ModelArgs, schema: &FeatureSchema) -> regionrec::Result<Self> {
        let checkpoint = Checkpoint::load(&args.checkpoint)?;
        let graph = read_graph(&args.graph, schema)?;
        check_graph_matches(&checkpoint, &graph)?;
        let users = region_vocab(&graph)?;
        let (split, items) = load_split(&args.split, &users)?;
        if items.names() != checkpoint.items.as_slice() {
            return Err(Error::Input("split item list differs from the checkpoint".into()));
        }
        Ok(Self {
            checkpoint,
            graph,
            split,
            users,
            items,
        })
    }
}

fn check_graph_matches(ckpt: &Checkpoint, graph: &KnowledgeGraph) -> regionrec::Result<()> {
    if ckpt.entities.as_slice() != graph.entity_names() || ckpt.relations.as_slice() != graph.relation_names() {
        return Err(Error::Input("graph does not match the checkpoint vocabulary".into()));
    }
    Ok(())
}

fn read_graph(path: &Path, schema: &FeatureSchema) -> regionrec::Result<KnowledgeGraph> {
    let rows = read_triples(BufReader::new(File::open(path)?))?;
    graph_from_triples(&rows, schema)
}

fn write_graph(graph: &KnowledgeGraph, path: &Path) -> regionrec::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_triples(graph, &mut w)?;
    w.flush()?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
