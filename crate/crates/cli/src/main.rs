use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use deepsoh::config::{load_config, Config};
use deepsoh::identify::{
    ambiguity_experiment, invert_with_expansion, invert_without_expansion, predict_rul, AmbiguityConfig,
    IdentificationResult,
};
use deepsoh::io::{read_state, write_curve, write_cycles, write_samples, write_state};
use deepsoh::measurement::{add_voltage_noise, extract_esoh};
use deepsoh::protocol::{parse_protocol, run_campaign, run_rpt, Campaign};
use deepsoh::{Error, InversionOptions, MeasurementVector, Model, ModelParameters};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

const EXIT_INPUT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "deepsoh", version, about = "Battery degradation-state simulation and identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// Model configuration (TOML). Defaults to the built-in demo cell.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a cycling campaign and write the per-cycle trajectory.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Protocol file (TOML). Defaults to the second-life campaign.
        #[arg(long, short)]
        protocol: Option<PathBuf>,
        /// Starting state file; defaults to a pristine full cell.
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
        /// Also write the final cell state to this file.
        #[arg(long)]
        save_state: Option<PathBuf>,
    },
    /// Reference performance test of a stored (or pristine) state.
    Rpt {
        #[command(flatten)]
        model: ModelArgs,
        /// State file written by `simulate --save-state`; defaults to a pristine cell.
        #[arg(long)]
        state: Option<PathBuf>,
        /// Gaussian noise added to the pseudo-OCV before the eSOH fit, V.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
    },
    /// Invert a measurement vector (JSON) into degradation states.
    Identify {
        #[command(flatten)]
        model: ModelArgs,
        /// JSON object with capacity_pos, capacity_neg, lli, resistance and optional expansion.
        measurements: PathBuf,
        /// Use the expansion reading (error if the file has none).
        #[arg(long, conflicts_with = "without_expansion")]
        with_expansion: bool,
        /// Ignore any expansion reading and report the film family.
        #[arg(long)]
        without_expansion: bool,
        /// Keep film states whose lithium exceeds the measured LLI.
        #[arg(long)]
        no_lli_budget: bool,
        /// Predict RUL of the result under this protocol.
        #[arg(long)]
        protocol: Option<PathBuf>,
        /// Write the JSON result here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Cells with identical eSOH and resistance but different films, cycled
    /// to end of life.
    AmbiguityDemo {
        #[command(flatten)]
        model: ModelArgs,
        /// Protocol file (TOML). Defaults to the second-life campaign.
        #[arg(long, short)]
        protocol: Option<PathBuf>,
        /// Number of film splits sampled along the family.
        #[arg(long, short = 'n', default_value_t = 3)]
        members: usize,
        /// Lost lithium inventory, fraction of the pristine amount.
        #[arg(long)]
        lli: Option<f64>,
        /// Lost positive active material, fraction.
        #[arg(long)]
        lam_pos: Option<f64>,
        /// Lost negative active material, fraction.
        #[arg(long)]
        lam_neg: Option<f64>,
        /// Shared cell-level film resistance, Ω.
        #[arg(long)]
        film_resistance: Option<f64>,
        /// Worker threads for the member campaigns.
        #[arg(long, short, default_value_t = 3)]
        jobs: usize,
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
    },
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            e if e.is_input_error() => EXIT_INPUT,
            Error::AmbiguousRoots(..) => EXIT_INFEASIBLE,
            _ => EXIT_NUMERICAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn with_path(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    }
}

fn model_from(args: &ModelArgs) -> Result<(Model, Config), Failure> {
    let config = match &args.config {
        Some(p) => load_config(p).map_err(with_path(p))?,
        None => Config {
            params: ModelParameters::demo(),
            seed: 0,
        },
    };
    Ok((Model::new(config.params.clone())?, config))
}

fn campaign_from(path: Option<&Path>) -> Result<Campaign, Failure> {
    match path {
        None => Ok(Campaign::second_life()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| with_path(p)(e.into()))?;
            parse_protocol(&text).map_err(with_path(p))
        }
    }
}

/// Output directory plus the hashes of everything written to it.
struct Outputs {
    dir: PathBuf,
    files: Vec<serde_json::Value>,
    inputs: Vec<String>,
    started: Instant,
}

impl Outputs {
    fn new(dir: &Path, inputs: &[Option<&PathBuf>]) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            inputs: inputs.iter().flatten().map(|p| p.display().to_string()).collect(),
            started: Instant::now(),
        })
    }

    fn write(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> deepsoh::Result<()>) -> Result<(), Failure> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.put(name, &buf)
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), Failure> {
        let mut text = serde_json::to_vec_pretty(value).map_err(Error::from)?;
        text.push(b'\n');
        self.put(name, &text)
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        w.write_all(bytes)?;
        w.flush()?;
        self.files.push(json!({
            "path": name,
            "bytes": bytes.len(),
            "sha256": hex(&Sha256::digest(bytes)),
        }));
        Ok(())
    }

    fn finish(self, command: &str, seed: u64) -> Result<(), Failure> {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let manifest = json!({
            "command": command,
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "inputs": self.inputs,
            "seed": seed,
            "finished_unix": now,
            "wall_clock_s": self.started.elapsed().as_secs_f64(),
            "outputs": self.files,
        });
        let mut text = serde_json::to_vec_pretty(&manifest).map_err(Error::from)?;
        text.push(b'\n');
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn simulate(
    model_args: &ModelArgs,
    protocol: Option<&PathBuf>,
    state: Option<&PathBuf>,
    out: &Path,
    save_state: Option<&PathBuf>,
) -> Result<(), Failure> {
    let (model, config) = model_from(model_args)?;
    let campaign = campaign_from(protocol.map(|p| p.as_path()))?;
    let start = match state {
        Some(p) => read_state(p).map_err(with_path(p))?,
        None => model.pristine_cell(1.0)?,
    };
    let mut outputs = Outputs::new(out, &[model_args.config.as_ref(), protocol, state])?;
    let result = run_campaign(&model, start, &campaign)?;
    let cycles = &result.trajectory.cycles;
    outputs.write("trajectory.csv", |w| write_cycles(w, cycles))?;
    if !result.trajectory.samples.is_empty() {
        outputs.write("samples.csv", |w| write_samples(w, &result.trajectory.samples))?;
    }
    let last = cycles.last().expect("campaign records cycle 0");
    outputs.json(
        "summary.json",
        &json!({
            "rul_cycles": result.rul_cycles,
            "reached_eol": result.reached_eol,
            "eol_capacity_ah": campaign.eol_capacity_fraction * model.nominal_capacity(),
            "nominal_capacity_ah": model.nominal_capacity(),
            "initial": {
                "deep": cycles[0].deep,
                "capacity_ah": result.initial_rpt.capacity,
                "esoh": result.initial_rpt.esoh,
                "resistance_ohm": result.initial_rpt.resistance,
                "expansion_m": result.initial_rpt.expansion,
            },
            "final": {
                "cycle": last.cycle,
                "deep": last.deep,
                "capacity_ah": last.capacity,
                "resistance_ohm": last.resistance,
                "expansion_m": last.expansion,
            },
        }),
    )?;
    if let Some(p) = save_state {
        write_state(p, &result.final_state)?;
    }
    println!(
        "{} cycles, RUL {} ({}), final capacity {:.4} Ah",
        last.cycle,
        result.rul_cycles,
        if result.reached_eol { "end of life reached" } else { "cycle limit reached" },
        last.capacity
    );
    outputs.finish("simulate", config.seed)
}

fn rpt(model_args: &ModelArgs, state: Option<&PathBuf>, noise: f64, out: &Path) -> Result<(), Failure> {
    let (model, config) = model_from(model_args)?;
    let deep = match state {
        Some(p) => read_state(p).map_err(with_path(p))?.deep,
        None => model.pristine_deep(),
    };
    let mut outputs = Outputs::new(out, &[model_args.config.as_ref(), state])?;
    let report = run_rpt(&model, &deep)?;
    let (esoh, residual) = if noise > 0.0 {
        let noisy = add_voltage_noise(&report.pseudo_ocv, noise, config.seed)?;
        let fit = extract_esoh(model.cell(), &noisy, model.pristine())?;
        (fit.record, fit.residual_rms)
    } else {
        (report.esoh, report.esoh_residual_rms)
    };
    outputs.write("pseudo_ocv.csv", |w| write_curve(w, &report.pseudo_ocv))?;
    let expected = model.esoh(&deep)?;
    outputs.json(
        "rpt.json",
        &json!({
            "capacity_ah": report.capacity,
            "esoh": esoh,
            "esoh_residual_rms_v": residual,
            "esoh_from_state": expected,
            "resistance_ohm": report.resistance,
            "pulse_current_a": report.pulse_current,
            "expansion_m": report.expansion,
            "noise_v": noise,
        }),
    )?;
    println!(
        "C = {:.4} Ah, C_p = {:.4} Ah, C_n = {:.4} Ah, x_100 = {:.4}, y_100 = {:.4}, R_s = {:.6} Ω, δ_irr = {:.4e} m",
        report.capacity, esoh.capacity_pos, esoh.capacity_neg, esoh.x_100, esoh.y_100, report.resistance, report.expansion
    );
    outputs.finish("rpt", config.seed)
}

#[allow(clippy::too_many_arguments)]
fn identify(
    model_args: &ModelArgs,
    measurements: &Path,
    with_expansion: bool,
    without_expansion: bool,
    no_lli_budget: bool,
    protocol: Option<&PathBuf>,
    out: Option<&PathBuf>,
) -> Result<(), Failure> {
    let (model, _) = model_from(model_args)?;
    let text = std::fs::read_to_string(measurements).map_err(|e| with_path(measurements)(e.into()))?;
    let y: MeasurementVector = serde_json::from_str(&text).map_err(|e| {
        with_path(measurements)(Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    })?;
    if with_expansion && y.expansion.is_none() {
        return Err(with_path(measurements)(Error::InvalidParameter(
            "--with-expansion needs an `expansion` entry".into(),
        )));
    }
    let opts = InversionOptions {
        lli_budget: !no_lli_budget,
        ..Default::default()
    };
    let result = if without_expansion || y.expansion.is_none() {
        invert_without_expansion(&model, &y.without_expansion(), &opts)?
    } else {
        invert_with_expansion(&model, &y, &opts)?
    };
    let base = deepsoh::DeepSOH {
        delta_sei: 0.0,
        delta_pl: 0.0,
        capacity_pos: y.capacity_pos,
        capacity_neg: y.capacity_neg,
        lli: y.lli,
    };
    let rul = match (protocol, &result) {
        (Some(p), IdentificationResult::Unique { state, .. }) => {
            let c = campaign_from(Some(p))?;
            Some(json!({ "rul_cycles": predict_rul(&model, state, &c)? }))
        }
        (Some(p), IdentificationResult::Family { segment, .. }) => {
            let c = campaign_from(Some(p))?;
            Some(json!({
                "start_rul_cycles": predict_rul(&model, &segment.start.apply(&base), &c)?,
                "end_rul_cycles": predict_rul(&model, &segment.end.apply(&base), &c)?,
            }))
        }
        _ => None,
    };
    let mut value = serde_json::to_value(&result).map_err(Error::from)?;
    if let Some(r) = rul {
        value["rul"] = r;
    }
    let text = serde_json::to_string_pretty(&value).map_err(Error::from)? + "\n";
    match out {
        Some(p) => std::fs::write(p, &text)?,
        None => print!("{text}"),
    }
    if let IdentificationResult::Infeasible { reason } = &result {
        return Err(Failure {
            code: EXIT_INFEASIBLE,
            message: format!("infeasible: {reason}"),
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn ambiguity(
    model_args: &ModelArgs,
    protocol: Option<&PathBuf>,
    members: usize,
    lli: Option<f64>,
    lam_pos: Option<f64>,
    lam_neg: Option<f64>,
    film_resistance: Option<f64>,
    jobs: usize,
    out: &Path,
) -> Result<(), Failure> {
    let (model, config) = model_from(model_args)?;
    let mut c = AmbiguityConfig::demo();
    c.members = members;
    c.jobs = jobs;
    c.lli = lli.unwrap_or(c.lli);
    c.lam_pos = lam_pos.unwrap_or(c.lam_pos);
    c.lam_neg = lam_neg.unwrap_or(c.lam_neg);
    c.film_resistance = film_resistance.unwrap_or(c.film_resistance);
    if protocol.is_some() {
        c.campaign = campaign_from(protocol.map(|p| p.as_path()))?;
    }
    let mut outputs = Outputs::new(out, &[model_args.config.as_ref(), protocol])?;
    let report = ambiguity_experiment(&model, &c)?;
    for (k, m) in report.members.iter().enumerate() {
        outputs.write(&format!("member_{}.csv", k + 1), |w| write_cycles(w, &m.cycles))?;
    }
    let rul_table: Vec<_> = report
        .members
        .iter()
        .map(|m| {
            json!({
                "delta_sei_m": m.film.delta_sei,
                "delta_pl_m": m.film.delta_pl,
                "expansion_m": m.initial_rpt.expansion,
                "resistance_ohm": m.initial_rpt.resistance,
                "capacity_ah": m.initial_rpt.capacity,
                "rul_cycles": m.rul_cycles,
                "reached_eol": m.reached_eol,
            })
        })
        .collect();
    outputs.json(
        "report.json",
        &json!({
            "measurement": report.measurement,
            "family": report.family,
            "members": rul_table,
            "checks": report.checks,
        }),
    )?;
    println!("{:>14} {:>14} {:>14} {:>6}", "δ_SEI (m)", "δ_pl (m)", "δ_irr (m)", "RUL");
    for m in &report.members {
        println!(
            "{:>14.4e} {:>14.4e} {:>14.4e} {:>6}{}",
            m.film.delta_sei,
            m.film.delta_pl,
            m.initial_rpt.expansion,
            m.rul_cycles,
            if m.reached_eol { "" } else { "+" }
        );
    }
    let ck = report.checks;
    println!(
        "curve gap {:.2e} V, R_s spread {:.2e}, min RUL gap {:.1}%",
        ck.max_curve_gap,
        ck.resistance_spread,
        ck.min_rul_gap * 100.0
    );
    outputs.finish("ambiguity-demo", config.seed)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Simulate {
            model,
            protocol,
            state,
            out,
            save_state,
        } => simulate(model, protocol.as_ref(), state.as_ref(), out, save_state.as_ref()),
        Command::Rpt { model, state, noise, out } => rpt(model, state.as_ref(), *noise, out),
        Command::Identify {
            model,
            measurements,
            with_expansion,
            without_expansion,
            no_lli_budget,
            protocol,
            out,
        } => identify(
            model,
            measurements,
            *with_expansion,
            *without_expansion,
            *no_lli_budget,
            protocol.as_ref(),
            out.as_ref(),
        ),
        Command::AmbiguityDemo {
            model,
            protocol,
            members,
            lli,
            lam_pos,
            lam_neg,
            film_resistance,
            jobs,
            out,
        } => ambiguity(
            model,
            protocol.as_ref(),
            *members,
            *lli,
            *lam_pos,
            *lam_neg,
            *film_resistance,
            *jobs,
            out,
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
