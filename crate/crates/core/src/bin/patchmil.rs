use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use patchmil::experiment::{self, mean_accuracy};
use patchmil::{harness, pgm, store, ClassifierState, Error, ExperimentConfig, ImageBag, Layout};
use patchmil::{Profile, Result, Strategy};

#[derive(Parser)]
#[command(
    name = "patchmil",
    version,
    about = "Multiple instance learning with patch samplers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (PGM bags, masks, manifest.csv) to --out.
    Generate(Common),
    /// Train one strategy and write metrics, maps, traces and a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Dataset directory from `generate`; generated in memory otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Test accuracy of a checkpoint (grid, 50% overlap, max).
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Sliding-window probability map of one PGM image.
    Map {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Window stride in pixels; the evaluation grid stride by default.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// All three strategies over shared seeds; writes summary.csv.
    Compare {
        #[command(flatten)]
        common: Common,
        /// A count (seeds start at --seed) or a comma-separated list.
        #[arg(long, default_value = "3")]
        seeds: String,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config; keys not given fall back to the profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    profile: Option<Profile>,
    #[arg(long, value_parser = parse_layout)]
    layout: Option<Layout>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Single-threaded and byte-reproducible.
    #[arg(long)]
    sequential: bool,
}

fn parse_layout(s: &str) -> std::result::Result<Layout, String> {
    match s {
        "sparse" => Ok(Layout::Sparse),
        "clustered" => Ok(Layout::Clustered),
        _ => Err(format!("unknown layout `{s}` (sparse|clustered)")),
    }
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut table: toml::Table = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("config: {e}")))?
            }
            None => toml::Table::new(),
        };
        if let Some(p) = self.profile {
            let name = match p {
                Profile::Paper => "paper",
                Profile::Desk => "desk",
            };
            table.insert("profile".into(), name.into());
        }
        if let Some(layout) = self.layout {
            let name = match layout {
                Layout::Sparse => "sparse",
                Layout::Clustered => "clustered",
            };
            let data = table
                .entry("data")
                .or_insert_with(|| toml::Table::new().into());
            let synth = data
                .as_table_mut()
                .ok_or_else(|| Error::Config("`data` must be a table".into()))?
                .entry("synth")
                .or_insert_with(|| toml::Table::new().into());
            synth
                .as_table_mut()
                .ok_or_else(|| Error::Config("`data.synth` must be a table".into()))?
                .insert("layout".into(), name.into());
        }
        let mut cfg = ExperimentConfig::from_toml_str(&table.to_string())?;
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        if let Some(epochs) = self.epochs {
            cfg.epochs = epochs;
        }
        if self.sequential {
            cfg.sequential = true;
        }
        cfg.out = self.out.clone().or(cfg.out);
        Ok(cfg)
    }
}

fn parse_seeds(arg: &str, first: u64) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("--seeds expects a count or a list, got `{arg}`"));
    if arg.contains(',') {
        return arg
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect();
    }
    let n: u64 = arg.parse().map_err(|_| bad())?;
    if n == 0 {
        return Err(bad());
    }
    Ok((first..first + n).collect())
}

fn with_data(mut cfg: ExperimentConfig, data: Option<PathBuf>) -> ExperimentConfig {
    if data.is_some() {
        cfg.data.dir = data;
    }
    cfg
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(common) => {
            let cfg = common.config()?;
            let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("data"));
            let data = experiment::load_data(&cfg)?;
            store::write_dataset(&out, &data)?;
            println!(
                "wrote {} train and {} test bags to {}",
                data.train.len(),
                data.test.len(),
                out.display()
            );
        }
        Command::Train {
            common,
            strategy,
            data,
        } => {
            let mut cfg = with_data(common.config()?, data);
            if let Some(s) = strategy {
                cfg.strategy = s;
            }
            if cfg.out.is_none() {
                cfg.out = Some(experiment::default_out().join(format!(
                    "{}-seed{}",
                    cfg.strategy.name(),
                    cfg.seed
                )));
            }
            let report = experiment::run(&cfg)?;
            for m in &report.metrics {
                println!(
                    "epoch {:>3}  loss {:.4}  train {:.3}  test {:.3}",
                    m.epoch, m.mean_loss, m.train_acc, m.test_acc
                );
            }
            println!("test_acc={}", report.test_acc);
        }
        Command::Eval {
            common,
            checkpoint,
            data,
        } => {
            let cfg = with_data(common.config()?, data);
            let state = ClassifierState::load(&checkpoint)?;
            let data = experiment::load_data(&cfg)?;
            let acc = harness::evaluate_with(
                &state.scorer(!cfg.sequential),
                &data.test,
                &patchmil::GridConfig::new(state.patch_size, cfg.eval_overlap),
            )?;
            println!("test_acc={acc}");
        }
        Command::Map {
            common,
            checkpoint,
            image,
            stride,
        } => {
            let cfg = common.config()?;
            let state = ClassifierState::load(&checkpoint)?;
            let img = pgm::read(&image)?;
            let pixels = img
                .data
                .iter()
                .map(|&b| pgm::byte_to_intensity(b))
                .collect();
            let id = image
                .file_stem()
                .map_or("image".into(), |s| s.to_string_lossy().into_owned());
            let bag = ImageBag::new(id.clone(), img.height, img.width, pixels, 0)?;
            let stride = stride.unwrap_or_else(|| {
                patchmil::GridConfig::new(state.patch_size, cfg.eval_overlap).stride()
            });
            let map = harness::probability_map(&state, &bag, state.patch_size, stride)?;
            let out = cfg
                .out
                .unwrap_or_else(|| PathBuf::from(format!("{id}.map.pgm")));
            patchmil::export::write_map(&out, &map)?;
            println!(
                "map {}x{} argmax row {} col {} score {:.4} -> {}",
                map.rows,
                map.cols,
                map.argmax.row,
                map.argmax.col,
                map.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                out.display()
            );
        }
        Command::Compare {
            common,
            seeds,
            data,
        } => {
            let mut cfg = with_data(common.config()?, data);
            let seeds = parse_seeds(&seeds, cfg.seed)?;
            if cfg.out.is_none() {
                cfg.out = Some(experiment::default_out());
            }
            let reports = experiment::compare(&cfg, &seeds, &Strategy::ALL)?;
            for r in &reports {
                println!("{},{},{}", r.strategy.name(), r.seed, r.test_acc);
            }
            for (s, acc) in mean_accuracy(&reports) {
                println!("mean {} {acc:.4}", s.name());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={} msg={msg:?}", e.kind());
            ExitCode::FAILURE
        }
    }
}
