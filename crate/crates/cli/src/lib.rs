//! The `refcomm` command line: context generation, evaluation, sweeps,
//! training, the reward-space and policy-grid analyses, and the HTTP service.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use refcomm::color::write_contexts_jsonl;
use refcomm::harness::grid::{fit_end_turn_threshold, mean_features, policy_grid, GridCell};
use refcomm::harness::reward_space::{dominance_interval, reward_space, Interval, PolicyStats};
use refcomm::harness::sweep::{sweep, sweep_rows, write_csv, SweepKind};
use refcomm::harness::{
    calibrate_threshold, eval_settings, evaluate, execution, generate_splits, load_lexicon, load_parser,
    EvalResult, ExperimentConfig, Manifest,
};
use refcomm::harness::eval::make_director;
use refcomm::policies::PolicyKind;
use refcomm::rl::dqn::write_train_log;
use refcomm::rl::{load_network, train, WeightFile};

#[derive(Debug, Parser)]
#[command(name = "refcomm", version, about = "Color reference game experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (JSON). Defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the train and test context sets as JSON lines.
    GenerateContexts(Common),
    /// Evaluate policies on the test contexts.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Replaces the config's policy list: direct, extended, mixed or dqn:<weights>.
        #[arg(long)]
        policy: Vec<String>,
    },
    /// Success rate as one matcher parameter varies.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kind: SweepKind,
    },
    /// Train a DQN director.
    Train(Common),
    /// Expected reward of each policy across term penalties.
    RewardSpace(Common),
    /// Greedy action of a trained network over posterior states.
    PolicyGrid {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: PathBuf,
    },
    /// Find the select threshold that yields the target clarification rate.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "direct")]
        policy: String,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "0.0.0.0")]
        host: String,
        /// Directory that `dqn:<name>` policies are looked up in.
        #[arg(long)]
        policy_dir: PathBuf,
    },
    /// Print the ranked parses of an utterance as JSON.
    Parse {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        utterance: String,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

/// Output directory plus the manifest that records what went into it.
struct Run {
    dir: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn open(command: &str, common: &Common) -> Result<(Run, ExperimentConfig)> {
        let config = load_config(common.config.as_deref())?;
        std::fs::create_dir_all(&common.out)
            .with_context(|| format!("creating {}", common.out.display()))?;
        let mut manifest = Manifest::new(command, &config);
        manifest.parallel = execution(&config).is_parallel();
        Ok((
            Run {
                dir: common.out.clone(),
                manifest,
            },
            config,
        ))
    }

    fn create(&mut self, name: &str, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        write(&mut w)?;
        w.flush()?;
        drop(w);
        self.manifest.record(&self.dir, name)?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.create(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        self.create(name, |w| Ok(write_csv(w, rows)?))
    }

    /// A plotting script to go with a CSV. Nothing here depends on a plotting
    /// library; the script imports one when it is run.
    fn plot_stub(&mut self, csv: &str, x: &str, y: &str, group: &str) -> Result<()> {
        let stem = csv.trim_end_matches(".csv");
        let script = format!(
            "# Plot {csv}: {y} against {x}, one line per {group}.\n\
             import csv\n\
             import sys\n\
             from collections import defaultdict\n\n\
             import matplotlib.pyplot as plt\n\n\
             series = defaultdict(list)\n\
             with open(sys.argv[1] if len(sys.argv) > 1 else \"{csv}\") as f:\n\
             \x20   for row in csv.DictReader(f):\n\
             \x20       series[row[\"{group}\"]].append((float(row[\"{x}\"]), float(row[\"{y}\"])))\n\n\
             for name, pts in series.items():\n\
             \x20   pts.sort()\n\
             \x20   plt.plot([p[0] for p in pts], [p[1] for p in pts], marker=\"o\", label=name)\n\
             plt.xlabel(\"{x}\")\n\
             plt.ylabel(\"{y}\")\n\
             plt.legend()\n\
             plt.savefig(\"{stem}.png\", dpi=150)\n"
        );
        self.create(&format!("plot_{stem}.py"), |w| Ok(w.write_all(script.as_bytes())?))
    }

    fn finish(self, out: &mut dyn Write) -> Result<()> {
        self.manifest.write(&self.dir)?;
        writeln!(out, "wrote {}", self.dir.display())?;
        Ok(())
    }
}

/// One row per policy and condition, plus an `all` row per policy.
#[derive(Debug, Serialize)]
struct ResultRow<'a> {
    policy: &'a str,
    condition: String,
    episodes: usize,
    success_rate: f64,
    avg_reward: f64,
    avg_terms: f64,
    clarification_rate: f64,
}

fn result_rows(results: &[EvalResult]) -> Vec<ResultRow<'_>> {
    let mut rows = Vec::new();
    for r in results {
        rows.push(ResultRow {
            policy: &r.policy,
            condition: "all".into(),
            episodes: r.episodes,
            success_rate: r.success_rate,
            avg_reward: r.avg_reward,
            avg_terms: r.avg_terms,
            clarification_rate: r.clarification_rate,
        });
        for (c, s) in &r.per_condition {
            rows.push(ResultRow {
                policy: &r.policy,
                condition: c.as_str().into(),
                episodes: s.episodes,
                success_rate: s.success_rate,
                avg_reward: s.avg_reward,
                avg_terms: s.avg_terms,
                clarification_rate: s.clarification_rate,
            });
        }
    }
    rows
}

fn evaluate_all(config: &ExperimentConfig, policies: &[PolicyKind]) -> Result<Vec<EvalResult>> {
    let (_, test) = generate_splits(config)?;
    let lexicon = load_lexicon(config)?;
    let settings = eval_settings(config);
    policies
        .iter()
        .map(|p| Ok(evaluate(p, &test, &lexicon, &settings, execution(config))?))
        .collect()
}

#[derive(Debug, Serialize)]
struct Dominance {
    policy: String,
    /// Penalties at which this policy has the highest expected reward.
    interval: Option<Interval>,
}

#[derive(Debug, Serialize)]
struct GridRow {
    p_target: f64,
    p_distractor: f64,
    /// Empty for cells off the probability simplex.
    action: String,
}

impl From<&GridCell> for GridRow {
    fn from(c: &GridCell) -> Self {
        GridRow {
            p_target: c.p_target,
            p_distractor: c.p_distractor,
            action: c.action.map(|a| format!("{a:?}")).unwrap_or_default(),
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::GenerateContexts(common) => {
            let (mut run, config) = Run::open("generate-contexts", &common)?;
            let (train, test) = generate_splits(&config)?;
            run.create("train.jsonl", |w| Ok(write_contexts_jsonl(w, &train)?))?;
            run.create("test.jsonl", |w| Ok(write_contexts_jsonl(w, &test)?))?;
            run.finish(out)
        }
        Command::Evaluate { common, policy } => {
            let (mut run, mut config) = Run::open("evaluate", &common)?;
            if !policy.is_empty() {
                config.policies = policy;
                run.manifest = Manifest::new("evaluate", &config);
                run.manifest.parallel = execution(&config).is_parallel();
            }
            let results = evaluate_all(&config, &config.policy_kinds()?)?;
            run.json("results.json", &results)?;
            run.csv("results.csv", &result_rows(&results))?;
            for r in &results {
                writeln!(
                    out,
                    "{:<12} success {:.3} ± {:.3}  reward {:+.3}  terms {:.2}",
                    r.policy, r.success_rate, r.ci_half_width, r.avg_reward, r.avg_terms
                )?;
            }
            run.finish(out)
        }
        Command::Sweep { common, kind } => {
            let (mut run, config) = Run::open(&format!("sweep-{kind}"), &common)?;
            let grid = match kind {
                SweepKind::Threshold => &config.sweeps.threshold,
                SweepKind::Tau => &config.sweeps.tau,
                SweepKind::Alpha => &config.sweeps.alpha,
            };
            let (_, test) = generate_splits(&config)?;
            let lexicon = load_lexicon(&config)?;
            let points = sweep(
                kind,
                grid,
                &config.policy_kinds()?,
                &test,
                &lexicon,
                &eval_settings(&config),
                execution(&config),
            )?;
            let name = format!("sweep_{kind}.csv");
            run.csv(&name, &sweep_rows(kind, &points))?;
            run.plot_stub(&name, "value", "success_rate", "policy")?;
            run.finish(out)
        }
        Command::Train(common) => {
            let (mut run, config) = Run::open("train", &common)?;
            let (train_set, test) = generate_splits(&config)?;
            let lexicon = load_lexicon(&config)?;
            let trained = train(&train_set, &lexicon, &config.train_config())?;
            let file = WeightFile::from_network(&trained.network, config.seeds.train, config.hash());
            let weights = run.dir.join("weights.json");
            file.save(&weights)?;
            run.manifest.record(&run.dir, "weights.json")?;
            run.create("train_log.csv", |w| Ok(write_train_log(w, &trained.log)?))?;
            let policy = PolicyKind::Learned(weights.display().to_string());
            let mut result = evaluate(&policy, &test, &lexicon, &eval_settings(&config), execution(&config))?;
            // The artifact path depends on --out; keep the result comparable across runs.
            result.policy = "dqn".into();
            run.json("eval.json", &result)?;
            writeln!(
                out,
                "trained {} episodes, {} updates; test success {:.3}, reward {:+.3}",
                trained.log.len(),
                trained.updates,
                result.success_rate,
                result.avg_reward
            )?;
            run.finish(out)
        }
        Command::RewardSpace(common) => {
            let (mut run, config) = Run::open("reward-space", &common)?;
            let results = evaluate_all(&config, &config.policy_kinds()?)?;
            let stats: Vec<PolicyStats> = results.iter().map(PolicyStats::from).collect();
            let grid = &config.sweeps.r_term;
            run.csv("reward_space.csv", &reward_space(&stats, grid, &config.rewards))?;
            let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let dominance: Vec<Dominance> = stats
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let rivals: Vec<PolicyStats> = stats
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, r)| r.clone())
                        .collect();
                    Dominance {
                        policy: s.policy.clone(),
                        interval: dominance_interval(s, &rivals, &config.rewards, (lo, hi)),
                    }
                })
                .collect();
            run.json("dominance.json", &dominance)?;
            run.plot_stub("reward_space.csv", "r_term", "expected_reward", "policy")?;
            run.finish(out)
        }
        Command::PolicyGrid { common, weights } => {
            let (mut run, config) = Run::open("policy-grid", &common)?;
            let network = load_network(&weights)?;
            let (_, test) = generate_splits(&config)?;
            let cells = policy_grid(&network, config.grid_resolution, &mean_features(&test));
            let rows: Vec<GridRow> = cells.iter().map(GridRow::from).collect();
            run.csv("policy_grid.csv", &rows)?;
            run.json("threshold_fit.json", &fit_end_turn_threshold(&cells))?;
            run.finish(out)
        }
        Command::Calibrate { common, policy } => {
            let (mut run, config) = Run::open("calibrate", &common)?;
            let director = make_director(&policy.parse()?)?;
            let (_, test) = generate_splits(&config)?;
            let lexicon = load_lexicon(&config)?;
            let cal = calibrate_threshold(
                director.as_ref(),
                &test,
                &lexicon,
                &eval_settings(&config),
                &config.calibration,
                execution(&config),
            )?;
            writeln!(
                out,
                "threshold {:.4} gives clarification rate {:.4} after {} iterations",
                cal.threshold, cal.clarification_rate, cal.iterations
            )?;
            run.json("calibration.json", &cal)?;
            run.finish(out)
        }
        Command::Serve {
            config,
            port,
            host,
            policy_dir,
        } => {
            let config = load_config(config.as_deref())?;
            if !policy_dir.is_dir() {
                bail!("policy directory {} does not exist", policy_dir.display());
            }
            let lexicon = load_lexicon(&config)?;
            let parser = load_parser(&config, &lexicon)?;
            let mut server = refcomm_server::ServerConfig::new(policy_dir)?;
            server.generation = config.generation;
            server.rewards = config.rewards;
            server.lexicon = lexicon;
            server.parser = parser;
            let addr: SocketAddr = format!("{host}:{port}").parse().context("bad --host/--port")?;
            writeln!(out, "listening on http://{addr}")?;
            out.flush()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(refcomm_server::serve(addr, server))?;
            Ok(())
        }
        Command::Parse { config, utterance } => {
            let config = load_config(config.as_deref())?;
            let lexicon = load_lexicon(&config)?;
            let parser = load_parser(&config, &lexicon)?;
            let parses = parser.parse(&utterance);
            serde_json::to_writer_pretty(&mut *out, &parses)?;
            writeln!(out)?;
            Ok(())
        }
    }
}
