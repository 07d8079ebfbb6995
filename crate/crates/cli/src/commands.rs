//! Command drivers: resolve the scenario, run the core library, emit records.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use rand::Rng;

use qsum_core::adversary::{campaign_trial, AttackStrategy, ChannelAttack, DetectionStats};
use qsum_core::oracle::{
    decoy_detection_probability, exact_distribution, statevector_distribution,
};
use qsum_core::protocol::{run_private_mode, run_protocol, ProtocolConfig, Status};
use qsum_core::rng::derive_stream;

use crate::records::{
    AttackSummaryRecord, AttackTrialRecord, OracleComboRecord, OracleSummaryRecord, RecordWriter,
    RunSummaryRecord, RunTrialRecord,
};
use crate::scenario::{parse_strategy, pick, require, KeysSpec, ScenarioFile};

/// Exit codes: 0 success, 1 invalid input or internal failure (via error
/// return), 2 failed check (aborted run, oracle disagreement).
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED_CHECK: i32 = 2;

const ORACLE_TOLERANCE: f64 = 1e-10;

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// Scenario file (TOML) supplying defaults for unset flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Levels per qudit (the summation modulus).
    #[arg(long)]
    pub d: Option<u32>,
    /// Number of parties.
    #[arg(long)]
    pub n: Option<u32>,
    /// Length N of every private digit string.
    #[arg(long)]
    pub len: Option<u32>,
    /// Decoy qudits inserted into each transmitted sequence [default: len].
    #[arg(long)]
    pub decoys: Option<u32>,
    /// Abort threshold on the per-channel decoy error rate [default: 0].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write result records (JSON lines) here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the protocol transcript (one event per line) here.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

impl CommonArgs {
    fn scenario(&self, command: &str) -> Result<ScenarioFile> {
        let file = match &self.config {
            Some(path) => ScenarioFile::load(path)?,
            None => ScenarioFile::default(),
        };
        file.check_command(command)?;
        Ok(file)
    }

    fn resolve_cfg(
        &self,
        file: &ScenarioFile,
        default_n: Option<u32>,
        default_len: Option<u32>,
    ) -> Result<ProtocolConfig> {
        let d = require(self.d, file.d, "d")?;
        let n = match default_n {
            Some(dn) => pick(self.n, file.n).unwrap_or(dn),
            None => require(self.n, file.n, "n")?,
        };
        let len = match default_len {
            Some(dl) => pick(self.len, file.len).unwrap_or(dl),
            None => require(self.len, file.len, "len")?,
        };
        let seed = require(self.seed, file.seed, "seed")?;
        let cfg = ProtocolConfig {
            d,
            n,
            length: len,
            decoys: pick(self.decoys, file.decoys).unwrap_or(len),
            threshold: pick(self.threshold, file.threshold).unwrap_or(0.0),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_path(&self, file: &ScenarioFile) -> Option<PathBuf> {
        pick(self.out.clone(), file.out.clone())
    }

    fn transcript_path(&self, file: &ScenarioFile) -> Option<PathBuf> {
        pick(self.transcript.clone(), file.transcript.clone())
    }
}

fn resolve_keys(flag: &Option<String>, file: &ScenarioFile) -> KeysSpec {
    match (flag, &file.keys) {
        (Some(value), _) => KeysSpec::parse_flag(value),
        (None, Some(field)) => field.to_spec(),
        (None, None) => KeysSpec::Random,
    }
}

fn strategy_name(strategy: &Option<AttackStrategy>) -> String {
    match strategy {
        None => "none".into(),
        Some(AttackStrategy::InterceptResend(_)) => "intercept-resend".into(),
        Some(AttackStrategy::MeasureResend) => "measure-resend".into(),
        Some(AttackStrategy::EntangleProbe) => "entangle-probe".into(),
        Some(AttackStrategy::SemiHonestP1) => "semi-honest-p1".into(),
        Some(AttackStrategy::Collusion(set)) => {
            let ids: Vec<String> = set.iter().map(|p| p.0.to_string()).collect();
            format!("collude:{}", ids.join(","))
        }
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Key source: "random" or the path of a key file.
    #[arg(long)]
    pub keys: Option<String>,
    /// Channel attack to mount on the run (intercept-resend, measure-resend,
    /// or entangle-probe).
    #[arg(long)]
    pub strategy: Option<String>,
    /// Number of independent executions [default: 1]. Explicit keys are
    /// reused; random keys are redrawn per trial.
    #[arg(long)]
    pub trials: Option<u64>,
}

/// `qsum run`: full protocol executions, one record per trial.
pub fn cmd_run(args: &RunArgs) -> Result<i32> {
    let file = args.common.scenario("run")?;
    let cfg = args.common.resolve_cfg(&file, None, None)?;
    let keys_spec = resolve_keys(&args.keys, &file);
    let strategy = parse_strategy(
        pick(args.strategy.clone(), file.strategy.clone())
            .unwrap_or_else(|| "none".into())
            .as_str(),
    )?;
    if let Some(s) = &strategy {
        if !s.is_channel_attack() {
            bail!(
                "strategy {:?} analyses a participant; use the attack command",
                strategy_name(&strategy)
            );
        }
    }
    let trials = pick(args.trials, file.trials).unwrap_or(1);
    if trials == 0 {
        bail!("--trials must be at least 1");
    }
    // Fixed keys are loaded once; random keys come from each trial's stream.
    let fixed_keys = match &keys_spec {
        KeysSpec::Random => None,
        other => Some(other.load(&cfg, &mut derive_stream(cfg.seed, 0))?),
    };

    let started = Instant::now();
    let mut writer = RecordWriter::create(args.common.out_path(&file).as_deref())?;
    let mut transcripts = String::new();
    let mut completed = 0u64;
    let mut last_sum = None;
    for trial in 0..trials {
        let mut rng = derive_stream(cfg.seed, trial);
        let keys = match &fixed_keys {
            Some(keys) => keys.clone(),
            None => keys_spec.load(&cfg, &mut rng)?,
        };
        let mut tap = match &strategy {
            Some(s) => Some(ChannelAttack::new(s.clone())?),
            None => None,
        };
        let outcome = run_protocol(
            &cfg,
            &keys,
            tap.as_mut()
                .map(|t| t as &mut dyn qsum_core::harness::ChannelTap),
            &mut rng,
        )?;
        if args.common.transcript_path(&file).is_some() {
            transcripts.push_str(&outcome.transcript.render());
        }
        completed += (outcome.status == Status::Completed) as u64;
        if outcome.status == Status::Completed {
            last_sum = outcome.sum.clone();
        }
        let key_rows: Vec<Vec<u32>> = keys.iter().map(|k| k.digits.clone()).collect();
        writer.write(&RunTrialRecord::new(trial, &outcome, Some(key_rows)))?;
    }
    writer.write(&RunSummaryRecord {
        record: "summary",
        command: "run",
        d: cfg.d,
        n: cfg.n,
        len: cfg.length,
        decoys: cfg.decoys,
        threshold: cfg.threshold,
        seed: cfg.seed,
        strategy: strategy_name(&strategy),
        trials,
        completed,
        aborted: trials - completed,
    })?;
    writer.finish()?;
    if let Some(path) = args.common.transcript_path(&file) {
        fs::write(&path, transcripts)
            .with_context(|| format!("cannot write transcript {}", path.display()))?;
    }

    if completed == trials {
        match (trials, &last_sum) {
            (1, Some(k)) => {
                let digits: Vec<String> = k.iter().map(u32::to_string).collect();
                eprintln!(
                    "completed in {:.1?}: K = [{}]",
                    started.elapsed(),
                    digits.join(" ")
                );
            }
            _ => eprintln!("{trials} runs completed in {:.1?}", started.elapsed()),
        }
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "{} of {trials} runs aborted on the decoy check ({:.1?})",
            trials - completed,
            started.elapsed()
        );
        Ok(EXIT_FAILED_CHECK)
    }
}

#[derive(Args, Debug)]
pub struct PrivateModeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Key source: "random" or the path of a key file.
    #[arg(long)]
    pub keys: Option<String>,
}

/// `qsum private-mode`: one execution per preparer, sums never published.
pub fn cmd_private_mode(args: &PrivateModeArgs) -> Result<i32> {
    let file = args.common.scenario("private-mode")?;
    let cfg = args.common.resolve_cfg(&file, None, None)?;
    let keys_spec = resolve_keys(&args.keys, &file);

    let started = Instant::now();
    let mut rng = derive_stream(cfg.seed, 0);
    let keys = keys_spec.load(&cfg, &mut rng)?;
    let outcomes = run_private_mode(&cfg, &keys, &mut rng)?;

    if let Some(path) = args.common.transcript_path(&file) {
        let mut text = String::new();
        for outcome in &outcomes {
            text.push_str(&outcome.transcript.render());
        }
        fs::write(&path, text)
            .with_context(|| format!("cannot write transcript {}", path.display()))?;
    }

    let mut writer = RecordWriter::create(args.common.out_path(&file).as_deref())?;
    let mut completed = 0u64;
    for (i, outcome) in outcomes.iter().enumerate() {
        completed += (outcome.status == Status::Completed) as u64;
        let mut record = RunTrialRecord::new(i as u64, outcome, None);
        record.preparer = Some(i as u32 + 1);
        writer.write(&record)?;
    }
    writer.write(&RunSummaryRecord {
        record: "summary",
        command: "private-mode",
        d: cfg.d,
        n: cfg.n,
        len: cfg.length,
        decoys: cfg.decoys,
        threshold: cfg.threshold,
        seed: cfg.seed,
        strategy: "none".into(),
        trials: outcomes.len() as u64,
        completed,
        aborted: outcomes.len() as u64 - completed,
    })?;
    writer.finish()?;

    let sums: Vec<_> = outcomes.iter().filter_map(|o| o.sum.as_ref()).collect();
    let agree = sums.windows(2).all(|w| w[0] == w[1]);
    if completed == outcomes.len() as u64 && agree {
        eprintln!(
            "private mode completed in {:.1?}: {} preparers agree on the sum",
            started.elapsed(),
            outcomes.len()
        );
        Ok(EXIT_OK)
    } else {
        eprintln!("private mode failed: completed {completed}, agreement {agree}");
        Ok(EXIT_FAILED_CHECK)
    }
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Attack strategy: intercept-resend, measure-resend, entangle-probe,
    /// semi-honest-p1, or collude:<ids>.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Number of campaign trials.
    #[arg(long)]
    pub trials: Option<u64>,
}

/// `qsum attack`: a seeded campaign of attacked runs with per-trial records.
pub fn cmd_attack(args: &AttackArgs) -> Result<i32> {
    let file = args.common.scenario("attack")?;
    // Campaign-style defaults: the smallest legal party count and one group.
    let cfg = args.common.resolve_cfg(&file, Some(3), Some(1))?;
    let strategy_text = require(args.strategy.clone(), file.strategy.clone(), "strategy")?;
    let strategy = parse_strategy(&strategy_text)?
        .ok_or_else(|| anyhow::anyhow!("the attack command needs a strategy other than none"))?;
    if let AttackStrategy::Collusion(set) = &strategy {
        if set.iter().any(|p| p.0 > cfg.n) {
            bail!("collusion set names a party beyond n = {}", cfg.n);
        }
        if set.len() as u32 > cfg.n - 1 {
            bail!("at most n - 1 = {} parties can collude", cfg.n - 1);
        }
    }
    let trials = pick(args.trials, file.trials).unwrap_or(1000);
    if trials == 0 {
        bail!("--trials must be at least 1");
    }
    if args.common.transcript_path(&file).is_some() {
        log::warn!("attack campaigns do not write transcripts; ignoring --transcript");
    }

    let started = Instant::now();
    let mut writer = RecordWriter::create(args.common.out_path(&file).as_deref())?;
    let mut all = Vec::with_capacity(trials as usize);
    for trial in 0..trials {
        let stats = campaign_trial(Some(&strategy), &cfg, trial)?;
        writer.write(&AttackTrialRecord {
            record: "trial",
            trial,
            status: if stats.aborted {
                "aborted"
            } else {
                "completed"
            },
            mismatches: stats.mismatches,
            tested: stats.tested,
            error_rate: if stats.tested == 0 {
                0.0
            } else {
                stats.mismatches as f64 / stats.tested as f64
            },
            max_posterior_deviation: stats.max_posterior_deviation,
        })?;
        all.push(stats);
    }
    let totals = DetectionStats::from_trials(&all);
    let oracle_rate = decoy_detection_probability(cfg.d, Some(&strategy))?;
    writer.write(&AttackSummaryRecord {
        record: "summary",
        command: "attack",
        strategy: strategy_name(&Some(strategy)),
        d: cfg.d,
        n: cfg.n,
        len: cfg.length,
        decoys: cfg.decoys,
        threshold: cfg.threshold,
        seed: cfg.seed,
        trials,
        aborted: totals.aborted,
        abort_rate: totals.aborted as f64 / trials as f64,
        per_decoy_error_rate: totals.per_decoy_error_rate,
        oracle_per_decoy_rate: oracle_rate,
        max_posterior_deviation: totals.max_posterior_deviation,
    })?;
    writer.finish()?;

    eprintln!(
        "{trials} trials in {:.1?}: abort rate {:.4}, per-decoy error {:.4} (oracle {:.4})",
        started.elapsed(),
        totals.aborted as f64 / trials as f64,
        totals.per_decoy_error_rate,
        oracle_rate,
    );
    Ok(EXIT_OK)
}

#[derive(Args, Debug)]
pub struct OracleCheckArgs {
    /// Scenario file (TOML) supplying defaults for unset flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Largest level count to cross-check.
    #[arg(long)]
    pub dmax: Option<u32>,
    /// Largest wire count to cross-check.
    #[arg(long)]
    pub nmax: Option<u32>,
    /// Seed for sampled key columns on combos too large to enumerate.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write result records (JSON lines) here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `qsum oracle-check`: entrywise agreement between the combinatorial and
/// state-vector outcome distributions, per (d, n) combo.
pub fn cmd_oracle_check(args: &OracleCheckArgs) -> Result<i32> {
    let file = match &args.config {
        Some(path) => ScenarioFile::load(path)?,
        None => ScenarioFile::default(),
    };
    file.check_command("oracle-check")?;
    let dmax = pick(args.dmax, file.dmax).unwrap_or(4);
    let nmax = pick(args.nmax, file.nmax).unwrap_or(4);
    let seed = pick(args.seed, file.seed).unwrap_or(0);
    if dmax < 2 || nmax < 2 {
        bail!("--dmax and --nmax must be at least 2");
    }

    // Exhaustive key enumeration below this many columns, sampling above.
    const EXHAUSTIVE_CAP: u64 = 1024;
    const SAMPLED_COLUMNS: u64 = 200;

    let started = Instant::now();
    let mut writer = RecordWriter::create(pick(args.out.clone(), file.out.clone()).as_deref())?;
    let mut worst_diff = 0.0f64;
    let mut worst_marginal = 0.0f64;
    let mut total_columns = 0u64;
    for d in 2..=dmax {
        for n in 2..=nmax {
            let combo_columns = (d as u64).checked_pow(n).unwrap_or(u64::MAX);
            let mut combo_diff = 0.0f64;
            let mut combo_marginal = 0.0f64;
            let mut columns = 0u64;
            let mut check_column = |column: &[u32]| -> Result<()> {
                let exact = exact_distribution(d, n, column)?;
                let state = statevector_distribution(d, n, column)?;
                combo_diff = combo_diff.max(exact.max_entrywise_diff(&state));
                for wire in 1..=n {
                    for p in exact.marginal(wire) {
                        combo_marginal = combo_marginal.max((p - 1.0 / d as f64).abs());
                    }
                }
                Ok(())
            };
            if combo_columns <= EXHAUSTIVE_CAP {
                let mut column = vec![0u32; n as usize];
                loop {
                    check_column(&column)?;
                    columns += 1;
                    let mut pos = 0;
                    loop {
                        if pos == column.len() {
                            break;
                        }
                        column[pos] += 1;
                        if column[pos] < d {
                            break;
                        }
                        column[pos] = 0;
                        pos += 1;
                    }
                    if pos == column.len() {
                        break;
                    }
                }
            } else {
                let mut rng = derive_stream(seed, (d as u64) << 32 | n as u64);
                for _ in 0..SAMPLED_COLUMNS {
                    let column: Vec<u32> = (0..n).map(|_| rng.random_range(0..d)).collect();
                    check_column(&column)?;
                    columns += 1;
                }
            }
            writer.write(&OracleComboRecord {
                record: "combo",
                d,
                n,
                columns,
                max_abs_diff: combo_diff,
                max_marginal_dev: combo_marginal,
            })?;
            worst_diff = worst_diff.max(combo_diff);
            worst_marginal = worst_marginal.max(combo_marginal);
            total_columns += columns;
        }
    }
    let ok = worst_diff <= ORACLE_TOLERANCE;
    writer.write(&OracleSummaryRecord {
        record: "summary",
        command: "oracle-check",
        dmax,
        nmax,
        seed,
        columns: total_columns,
        max_abs_diff: worst_diff,
        max_marginal_dev: worst_marginal,
        tolerance: ORACLE_TOLERANCE,
        ok,
    })?;
    writer.finish()?;

    eprintln!(
        "checked {total_columns} key columns in {:.1?}: max |Δp| = {worst_diff:.3e}",
        started.elapsed()
    );
    Ok(if ok { EXIT_OK } else { EXIT_FAILED_CHECK })
}
