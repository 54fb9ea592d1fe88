use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Command};
use cutleak::config::CONFIG_KEYS;
use cutleak::data::write_results_csv_file;
use cutleak::experiment::{attack_view, load_data, smashed_attack, sweep, train_arm, SweepAxis, SWEEP_HEADER};
use cutleak::{read_config, ExperimentConfig, Source, SplitModel, Tape};

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

/// `--config` plus one override flag per config key.
fn with_config_flags(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("PATH")
            .value_parser(clap::value_parser!(PathBuf))
            .help("Experiment config file (key = value lines)"),
    );
    CONFIG_KEYS.iter().fold(cmd, |cmd, &key| {
        cmd.arg(
            Arg::new(key)
                .long(flag_name(key))
                .value_name("VALUE")
                .help_heading("Config overrides")
                .help(format!("Override config key `{key}`")),
        )
    })
}

fn cli() -> Command {
    Command::new("cutleak")
        .about("Split-learning label leakage experiments")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(with_config_flags(
            Command::new("train")
                .about("Train a split model, record the cut-layer tape and save the model")
                .arg(path_arg("tape", "Tape output").default_value("tape.sltape"))
                .arg(path_arg("model", "Model snapshot output (JSON)").default_value("model.json")),
        ))
        .subcommand(with_config_flags(
            Command::new("attack")
                .about("Run the clustering attack on a tape (gradients) or a model (smashed data)")
                .arg(path_arg("tape", "Tape to attack when the source is gradients"))
                .arg(path_arg("model", "Model whose smashed data is attacked"))
                .arg(path_arg("out", "Per-sample CSV output").default_value("attack.csv"))
                .arg(path_arg("summary", "Write the JSON summary here instead of stdout")),
        ))
        .subcommand(with_config_flags(
            Command::new("sweep")
                .about("Retrain and attack once per value of one axis; writes a long-form CSV")
                .arg(
                    Arg::new("axis")
                        .long("axis")
                        .required(true)
                        .value_parser(["cut", "epoch", "batch", "pca_dim", "noise_sigma", "compression_ratio"]),
                )
                .arg(
                    Arg::new("values")
                        .long("values")
                        .required(true)
                        .value_delimiter(',')
                        .action(ArgAction::Append)
                        .help("Comma-separated axis values"),
                )
                .arg(path_arg("out", "CSV output").default_value("sweep.csv")),
        ))
        .subcommand(
            Command::new("inspect-tape")
                .about("Summarize a tape file, optionally exporting it as CSV")
                .arg(Arg::new("tape").required(true).value_parser(clap::value_parser!(PathBuf)))
                .arg(path_arg("csv", "Lossless CSV export")),
        )
}

fn path_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).value_name("PATH").value_parser(clap::value_parser!(PathBuf)).help(help)
}

fn load_config(m: &ArgMatches) -> Result<ExperimentConfig> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(path) => read_config(path)?,
        None => ExperimentConfig::default(),
    };
    for &key in CONFIG_KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn meta_path(tape: &Path) -> PathBuf {
    let mut p = tape.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}

fn cmd_train(m: &ArgMatches) -> Result<()> {
    let cfg = load_config(m)?;
    if cfg.effective_lr() == 0.0 {
        eprintln!("warning: lr is 0, model will not learn");
    }
    let data = load_data(&cfg)?;
    let arm = train_arm(&cfg, &data)?;
    let tape_path = m.get_one::<PathBuf>("tape").unwrap();
    let model_path = m.get_one::<PathBuf>("model").unwrap();
    arm.tape.save(tape_path)?;
    if let Some(meta) = &arm.tape.meta {
        std::fs::write(meta_path(tape_path), serde_json::to_string_pretty(meta)?)
            .with_context(|| format!("writing {}", meta_path(tape_path).display()))?;
    }
    std::fs::write(model_path, serde_json::to_string(&arm.model)?)
        .with_context(|| format!("writing {}", model_path.display()))?;
    println!("train_accuracy {:.6}", arm.train_accuracy);
    println!("test_accuracy {:.6}", arm.test_accuracy);
    println!("tape {} ({} entries, cut width {})", tape_path.display(), arm.tape.len(), arm.tape.cut_width);
    println!("model {}", model_path.display());
    Ok(())
}

fn cmd_attack(m: &ArgMatches) -> Result<()> {
    let cfg = load_config(m)?;
    let classes = *cfg.widths.last().context("config has no widths")?;
    let run = match cfg.attack_source {
        Source::Gradients => {
            let path = m.get_one::<PathBuf>("tape").context("--tape is required for the gradients source")?;
            let tape = Tape::load(path)?;
            let epoch = cfg.attack_epoch.resolve(tape.epochs().len())?;
            attack_view(&cfg, tape.view(Source::Gradients, epoch)?, Source::Gradients, classes)?
        }
        Source::SmashedData => {
            let path = m.get_one::<PathBuf>("model").context("--model is required for the smashed source")?;
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let model: SplitModel = serde_json::from_str(&text)?;
            let data = load_data(&cfg)?;
            smashed_attack(&cfg, &model, &data.train)?
        }
    };
    let out = m.get_one::<PathBuf>("out").unwrap();
    let file = std::fs::File::create(out).with_context(|| format!("writing {}", out.display()))?;
    run.report.write_csv(std::io::BufWriter::new(file), &run.view.sample_ids, &run.view.truth)?;
    let summary = run.report.summary_json()?;
    match m.get_one::<PathBuf>("summary") {
        Some(p) => std::fs::write(p, summary + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{summary}"),
    }
    Ok(())
}

fn cmd_sweep(m: &ArgMatches) -> Result<bool> {
    let cfg = load_config(m)?;
    let axis: SweepAxis = m.get_one::<String>("axis").unwrap().parse()?;
    let values: Vec<String> = m.get_many::<String>("values").unwrap().map(|v| v.trim().to_string()).collect();
    let rows = sweep(&cfg, axis, &values)?;
    let out = m.get_one::<PathBuf>("out").unwrap();
    let records: Vec<Vec<String>> = rows.iter().map(|r| r.to_record()).collect();
    write_results_csv_file(out, &SWEEP_HEADER, &records)?;
    for r in &rows {
        match &r.error {
            None => println!("{}={} {} accuracy {}", axis, r.value, r.source.as_str(), r.to_record()[3]),
            Some(e) => eprintln!("{}={} {} failed: {e}", axis, r.value, r.source.as_str()),
        }
    }
    Ok(rows.iter().all(|r| r.is_ok()))
}

fn cmd_inspect(m: &ArgMatches) -> Result<()> {
    let path = m.get_one::<PathBuf>("tape").unwrap();
    let tape = Tape::load(path)?;
    println!("tape {}", path.display());
    println!("cut_width {}", tape.cut_width);
    println!("entries {}", tape.len());
    for e in tape.epochs() {
        let entries: Vec<_> = tape.entries.iter().filter(|t| t.epoch == e).collect();
        let with_grad = entries.iter().filter(|t| !t.cut_gradient.is_empty()).count();
        let mean_norm = entries
            .iter()
            .map(|t| t.cut_gradient.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum::<f64>()
            / entries.len() as f64;
        println!("epoch {e}: {} entries, {with_grad} with gradients, mean gradient norm {mean_norm:.6e}", entries.len());
    }
    if let Some(csv) = m.get_one::<PathBuf>("csv") {
        let file = std::fs::File::create(csv).with_context(|| format!("writing {}", csv.display()))?;
        tape.write_csv(std::io::BufWriter::new(file))?;
        println!("csv {}", csv.display());
    }
    Ok(())
}

fn run() -> Result<bool> {
    let matches = cli().get_matches();
    match matches.subcommand() {
        Some(("train", m)) => cmd_train(m).map(|_| true),
        Some(("attack", m)) => cmd_attack(m).map(|_| true),
        Some(("sweep", m)) => cmd_sweep(m),
        Some(("inspect-tape", m)) => cmd_inspect(m).map(|_| true),
        _ => bail!("unknown subcommand"),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
