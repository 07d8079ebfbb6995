//! Attack strategies and quantitative analyses of what each attacker learns.
//!
//! Channel attacks (intercept-resend, measure-resend, entangle-probe) act on
//! particles in transit through the harness tap. Participant attacks are the
//! dishonest preparer, who collapses every group before distribution, and
//! collusion, which is purely passive: colluders pool their keys with the
//! broadcast transcript. Posteriors are computed by exact enumeration over
//! the hidden coset variables, never by sampling, because the privacy claims
//! they check are exact uniformity claims.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Resolves f64 math in no_std builds; std builds shadow it with the inherent
// methods, so the import sits idle there.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::harness::{ChannelTap, ParticleSlot, ParticleStore, PartyId, Transcript};
use crate::protocol::{
    announced_results, published_sum, run_protocol_inner, CheckReport, PrepMode, PrivateKeyString,
    ProtocolConfig, ProtocolOutcome, Status,
};
use crate::qudit::{
    apply_controlled_shift, extend_with_ancilla, fourier_op, measure_wire_in_place, shift_op, Basis,
};
use crate::rng::{derive_stream, RandomStream};

/// Which basis an intercept-resend attacker measures in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisPolicy {
    /// Fresh uniform choice per particle.
    Random,
    AlwaysComputational,
    AlwaysFourier,
}

impl BasisPolicy {
    fn pick(self, rng: &mut RandomStream) -> Basis {
        match self {
            BasisPolicy::Random => Basis::sample_uniform(rng),
            BasisPolicy::AlwaysComputational => Basis::Computational,
            BasisPolicy::AlwaysFourier => Basis::Fourier,
        }
    }
}

/// The attack models under analysis.
///
/// A collusion set never contains the preparer (who conspires with no one)
/// and has at most n−1 members.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AttackStrategy {
    InterceptResend(BasisPolicy),
    MeasureResend,
    EntangleProbe,
    SemiHonestP1,
    Collusion(BTreeSet<PartyId>),
}

impl AttackStrategy {
    /// Whether the strategy acts on particles in transit.
    pub fn is_channel_attack(&self) -> bool {
        matches!(
            self,
            AttackStrategy::InterceptResend(_)
                | AttackStrategy::MeasureResend
                | AttackStrategy::EntangleProbe
        )
    }
}

/// Ancilla retained by an entangle-probe attack: `wire` of the register
/// backing `slot`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProbeRecord {
    pub slot: ParticleSlot,
    pub wire: u32,
}

/// Eve measures the in-flight qudit in the policy's basis and forwards the
/// collapsed state. For entangled wires the whole group register collapses
/// accordingly. Returns what Eve observed.
pub fn intercept_resend(
    store: &mut ParticleStore,
    slot: &ParticleSlot,
    policy: BasisPolicy,
    rng: &mut RandomStream,
) -> Result<u32> {
    let basis = policy.pick(rng);
    store.measure_slot(slot, basis, rng)
}

/// The measure-resend attack: intercept-resend pinned to the computational
/// basis.
pub fn measure_resend(
    store: &mut ParticleStore,
    slot: &ParticleSlot,
    rng: &mut RandomStream,
) -> Result<u32> {
    intercept_resend(store, slot, BasisPolicy::AlwaysComputational, rng)
}

/// Eve attaches a fresh ancilla in `|0⟩` and applies the controlled shift
/// `|x⟩|e⟩ → |x⟩|e ⊕ x⟩`, forwarding the data qudit untouched in the
/// computational basis and keeping the ancilla for later measurement.
pub fn entangle_probe(store: &mut ParticleStore, slot: &ParticleSlot) -> Result<ProbeRecord> {
    let (reg, wire) = store.locate_mut(slot);
    let ancilla = extend_with_ancilla(reg)?;
    apply_controlled_shift(reg, wire, ancilla)?;
    Ok(ProbeRecord {
        slot: *slot,
        wire: ancilla,
    })
}

/// Computational-basis measurement of a retained probe ancilla.
pub fn measure_probe(
    store: &mut ParticleStore,
    record: &ProbeRecord,
    rng: &mut RandomStream,
) -> Result<u32> {
    let (reg, _) = store.locate_mut(&record.slot);
    if record.wire > reg.wires() {
        return Err(Error::Domain(format!(
            "probe wire {} outside register of {} wires",
            record.wire,
            reg.wires()
        )));
    }
    Ok(measure_wire_in_place(reg, record.wire, Basis::Computational, rng)?.value)
}

/// A channel attack mounted on one quantum channel (by default the one to
/// party 2). Implements the harness tap; Eve's observations accumulate in
/// `observed`.
pub struct ChannelAttack {
    strategy: AttackStrategy,
    target: PartyId,
    probes: Vec<ProbeRecord>,
    /// Values Eve has extracted, per slot, in interception order.
    pub observed: Vec<(ParticleSlot, u32)>,
}

impl ChannelAttack {
    pub fn new(strategy: AttackStrategy) -> Result<Self> {
        if !strategy.is_channel_attack() {
            return Err(Error::Domain(format!(
                "{strategy:?} is not a channel attack"
            )));
        }
        Ok(ChannelAttack {
            strategy,
            target: PartyId(2),
            probes: Vec::new(),
            observed: Vec::new(),
        })
    }

    pub fn with_target(mut self, target: PartyId) -> Self {
        self.target = target;
        self
    }

    pub fn target(&self) -> PartyId {
        self.target
    }

    pub fn probes(&self) -> &[ProbeRecord] {
        &self.probes
    }
}

impl ChannelTap for ChannelAttack {
    fn on_slot(
        &mut self,
        store: &mut ParticleStore,
        slot: &ParticleSlot,
        to: PartyId,
        rng: &mut RandomStream,
    ) -> Result<()> {
        if to != self.target {
            return Ok(());
        }
        match &self.strategy {
            AttackStrategy::InterceptResend(policy) => {
                let value = intercept_resend(store, slot, *policy, rng)?;
                self.observed.push((*slot, value));
            }
            AttackStrategy::MeasureResend => {
                let value = measure_resend(store, slot, rng)?;
                self.observed.push((*slot, value));
            }
            AttackStrategy::EntangleProbe => {
                let record = entangle_probe(store, slot)?;
                self.probes.push(record);
            }
            _ => unreachable!("constructor admits channel attacks only"),
        }
        Ok(())
    }

    fn after_run(&mut self, store: &mut ParticleStore, rng: &mut RandomStream) -> Result<()> {
        for record in core::mem::take(&mut self.probes) {
            let value = measure_probe(store, &record, rng)?;
            self.observed.push((record.slot, value));
        }
        Ok(())
    }
}

/// An attacker's exact conditional distribution over one key digit.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorTable {
    pub target: PartyId,
    /// 1-based group index the digit belongs to.
    pub group: u32,
    /// `posterior[k]` is the probability that the target's digit is k.
    pub posterior: Vec<f64>,
}

impl PosteriorTable {
    /// Checks the table is a probability vector.
    pub fn validate(&self) -> Result<()> {
        if self.posterior.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::Internal(
                "posterior has negative or non-finite entries".into(),
            ));
        }
        let total: f64 = self.posterior.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Internal(format!("posterior sums to {total}")));
        }
        Ok(())
    }

    /// Largest entrywise distance from the uniform vector.
    pub fn max_deviation_from_uniform(&self) -> f64 {
        let uniform = 1.0 / self.posterior.len() as f64;
        self.posterior
            .iter()
            .map(|&p| (p - uniform).abs())
            .fold(0.0, f64::max)
    }

    /// Shannon entropy in bits; 0 exactly when the digit is pinned down.
    pub fn entropy_bits(&self) -> f64 {
        -self
            .posterior
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.log2())
            .sum::<f64>()
    }

    /// The most likely digit.
    pub fn mode(&self) -> u32 {
        self.posterior
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k as u32)
            .unwrap_or(0)
    }
}

/// Everything the dishonest-preparer run produces.
pub struct SemiHonestReport {
    /// Keys the parties encoded (sampled uniformly for the run).
    pub keys: Vec<PrivateKeyString>,
    /// The collapsed value r^t of each group after the preparer's
    /// pre-measurement.
    pub premeasured: Vec<u32>,
    pub check_reports: Vec<CheckReport>,
    pub outcome: ProtocolOutcome,
    /// The preparer's posterior over every other party's digit, given r^t and
    /// the announced result.
    pub posteriors: Vec<PosteriorTable>,
}

/// The participant attack from the dishonest preparer: every group is
/// measured in the computational basis before distribution, turning the
/// carriers into product states. Decoys are honest, so the eavesdropping
/// check cannot flag the attack; afterwards the preparer conditions on each
/// announced result to form an exact posterior over the sender's digit.
pub fn semi_honest_p1_attack(
    cfg: &ProtocolConfig,
    rng: &mut RandomStream,
) -> Result<SemiHonestReport> {
    cfg.validate()?;
    let keys: Vec<PrivateKeyString> = (1..=cfg.n)
        .map(|i| PrivateKeyString::random(PartyId(i), cfg.d, cfg.length, rng))
        .collect();
    let artifacts = run_protocol_inner(cfg, &keys, None, PrepMode::PreMeasured, true, rng)?;
    let outcome = artifacts.outcome;
    let premeasured = artifacts
        .premeasured
        .ok_or_else(|| Error::Internal("pre-measured run lost its collapse record".into()))?;
    if outcome.status != Status::Completed {
        return Err(Error::Internal(
            "dishonest preparation was flagged by the decoy check on an ideal channel".into(),
        ));
    }

    let announced = announced_results(&outcome.transcript);
    let f = fourier_op(cfg.d)?;
    let mut posteriors = Vec::new();
    for rv in &announced {
        for t in 1..=cfg.length {
            let m = rv.values[t as usize - 1];
            let r = premeasured[t as usize - 1];
            // P(m | k, r) = |⟨m| U_k F |r⟩|², normalized over k.
            let mut weights = Vec::with_capacity(cfg.d as usize);
            for k in 0..cfg.d {
                let enc = shift_op(cfg.d, k)?.compose(&f)?;
                weights.push(enc.entry(m, r).norm_sqr());
            }
            let total: f64 = weights.iter().sum();
            let table = PosteriorTable {
                target: rv.owner,
                group: t,
                posterior: weights.iter().map(|w| w / total).collect(),
            };
            table.validate()?;
            posteriors.push(table);
        }
    }
    Ok(SemiHonestReport {
        keys,
        premeasured,
        check_reports: outcome.check_reports.clone(),
        outcome,
        posteriors,
    })
}

/// Exact posteriors available to a colluding subset of `{P2, …, Pn}` after a
/// completed honest run.
///
/// The colluders know their own keys, every announced result string, and the
/// published sum (from which the preparer's result string follows). The only
/// remaining structure is the coset constraint on the hidden pre-measurement
/// digits, so the posterior over the honest parties' keys is uniform over the
/// assignments consistent with it. An empty colluder set models the outside
/// observer.
pub fn collusion_posterior(
    colluders: &BTreeSet<PartyId>,
    colluder_keys: &[PrivateKeyString],
    transcript: &Transcript,
    cfg: &ProtocolConfig,
) -> Result<Vec<PosteriorTable>> {
    cfg.validate()?;
    if colluders.contains(&PartyId(1)) {
        return Err(Error::Domain(
            "the preparer conspires with no one; a collusion set cannot contain party 1".into(),
        ));
    }
    for c in colluders {
        if c.0 < 2 || c.0 > cfg.n {
            return Err(Error::Domain(format!(
                "colluder {c} is not a party (n={})",
                cfg.n
            )));
        }
    }
    if colluder_keys.len() != colluders.len() {
        return Err(Error::Domain(format!(
            "expected {} colluder key strings, got {}",
            colluders.len(),
            colluder_keys.len()
        )));
    }
    for (c, key) in colluders.iter().zip(colluder_keys) {
        if key.owner != *c || key.digits.len() != cfg.length as usize {
            return Err(Error::Domain(format!(
                "key string for colluder {c} is malformed"
            )));
        }
    }

    // Public view: M_2..M_n from the announcements, M_1 deduced from K.
    let announced = announced_results(transcript);
    let d = cfg.d;
    let mut m: Vec<Option<Vec<u32>>> = vec![None; cfg.n as usize];
    for rv in &announced {
        if rv.owner.0 >= 2 && rv.owner.0 <= cfg.n {
            m[rv.owner.0 as usize - 1] = Some(rv.values.clone());
        }
    }
    let k_published = published_sum(transcript)
        .ok_or_else(|| Error::Domain("transcript has no published sum to condition on".into()))?;
    let mut m1 = k_published.clone();
    for j in 2..=cfg.n {
        let mj = m[j as usize - 1].as_ref().ok_or_else(|| {
            Error::Domain(format!("transcript lacks the result string of party {j}"))
        })?;
        for (acc, &v) in m1.iter_mut().zip(mj) {
            *acc = (*acc + d - v % d) % d;
        }
    }
    m[0] = Some(m1);
    let m: Vec<Vec<u32>> = m.into_iter().map(|v| v.unwrap()).collect();

    let honest: Vec<PartyId> = (1..=cfg.n)
        .map(PartyId)
        .filter(|p| !colluders.contains(p))
        .collect();
    let mut tables = Vec::new();
    for t in 0..cfg.length as usize {
        // Residual of the coset constraint once colluder keys are subtracted:
        // Σ_{h honest} k_h ≡ Σ_i m_i − Σ_{s collud} k_s (mod d).
        let mut counts = vec![vec![0u64; d as usize]; honest.len()];
        let mut assignment = vec![0u32; honest.len()];
        let mut admissible = 0u64;
        loop {
            let mut residual: u64 = 0;
            for (i, &_h) in honest.iter().enumerate() {
                residual += (m[honest[i].0 as usize - 1][t] + d - assignment[i]) as u64;
            }
            for (s, key) in colluders.iter().zip(colluder_keys) {
                residual += (m[s.0 as usize - 1][t] + d - key.digits[t]) as u64;
            }
            if residual.is_multiple_of(d as u64) {
                admissible += 1;
                for (i, &k) in assignment.iter().enumerate() {
                    counts[i][k as usize] += 1;
                }
            }
            // advance the mixed-radix counter
            let mut pos = 0;
            loop {
                if pos == assignment.len() {
                    break;
                }
                assignment[pos] += 1;
                if assignment[pos] < d {
                    break;
                }
                assignment[pos] = 0;
                pos += 1;
            }
            if pos == assignment.len() {
                break;
            }
        }
        if admissible == 0 {
            return Err(Error::Internal(
                "no key assignment is consistent with the transcript".into(),
            ));
        }
        for (i, h) in honest.iter().enumerate() {
            let table = PosteriorTable {
                target: *h,
                group: t as u32 + 1,
                posterior: counts[i]
                    .iter()
                    .map(|&c| c as f64 / admissible as f64)
                    .collect(),
            };
            table.validate()?;
            tables.push(table);
        }
    }
    Ok(tables)
}

/// Result of one campaign trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialStats {
    pub trial: u64,
    pub aborted: bool,
    /// Decoy mismatches on the attacked channel (all channels for passive
    /// strategies, where they are zero anyway).
    pub mismatches: u32,
    pub tested: u32,
    /// For participant strategies: the largest entrywise deviation of any
    /// posterior computed this trial from uniform.
    pub max_posterior_deviation: Option<f64>,
}

/// Aggregate results of repeated attacked runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionStats {
    pub trials: u64,
    pub aborted: u64,
    /// Empirical mismatch rate over the attacked channel's decoys.
    pub per_decoy_error_rate: f64,
    /// For participant strategies: the largest entrywise deviation of any
    /// computed posterior from uniform.
    pub max_posterior_deviation: Option<f64>,
}

impl DetectionStats {
    /// Folds per-trial results into campaign totals.
    pub fn from_trials(trials: &[TrialStats]) -> DetectionStats {
        let mut aborted = 0u64;
        let mut mismatches = 0u64;
        let mut tested = 0u64;
        let mut max_dev: Option<f64> = None;
        for t in trials {
            aborted += t.aborted as u64;
            mismatches += t.mismatches as u64;
            tested += t.tested as u64;
            if let Some(dev) = t.max_posterior_deviation {
                max_dev = Some(max_dev.map_or(dev, |m| m.max(dev)));
            }
        }
        DetectionStats {
            trials: trials.len() as u64,
            aborted,
            per_decoy_error_rate: if tested == 0 {
                0.0
            } else {
                mismatches as f64 / tested as f64
            },
            max_posterior_deviation: max_dev,
        }
    }
}

/// Runs one attacked trial on the stream derived from `(cfg.seed, trial)`,
/// with uniformly sampled keys.
pub fn campaign_trial(
    strategy: Option<&AttackStrategy>,
    cfg: &ProtocolConfig,
    trial: u64,
) -> Result<TrialStats> {
    cfg.validate()?;
    let mut rng = derive_stream(cfg.seed, trial);
    let mut stats = TrialStats {
        trial,
        aborted: false,
        mismatches: 0,
        tested: 0,
        max_posterior_deviation: None,
    };
    match strategy {
        None => {
            let keys = random_keys(cfg, &mut rng);
            let outcome = crate::protocol::run_protocol(cfg, &keys, None, &mut rng)?;
            accumulate(&outcome.check_reports, None, &mut stats);
            stats.aborted = outcome.status == Status::Aborted;
        }
        Some(s) if s.is_channel_attack() => {
            let mut tap = ChannelAttack::new(s.clone())?;
            let target = tap.target();
            let keys = random_keys(cfg, &mut rng);
            let outcome = crate::protocol::run_protocol(cfg, &keys, Some(&mut tap), &mut rng)?;
            accumulate(&outcome.check_reports, Some(target), &mut stats);
            stats.aborted = outcome.status == Status::Aborted;
        }
        Some(AttackStrategy::SemiHonestP1) => {
            let report = semi_honest_p1_attack(cfg, &mut rng)?;
            accumulate(&report.check_reports, None, &mut stats);
            stats.aborted = report.outcome.status == Status::Aborted;
            for table in &report.posteriors {
                let dev = table.max_deviation_from_uniform();
                stats.max_posterior_deviation =
                    Some(stats.max_posterior_deviation.map_or(dev, |m| m.max(dev)));
            }
        }
        Some(AttackStrategy::Collusion(set)) => {
            let keys = random_keys(cfg, &mut rng);
            let outcome = crate::protocol::run_protocol(cfg, &keys, None, &mut rng)?;
            accumulate(&outcome.check_reports, None, &mut stats);
            stats.aborted = outcome.status == Status::Aborted;
            let colluder_keys: Vec<PrivateKeyString> =
                set.iter().map(|c| keys[c.0 as usize - 1].clone()).collect();
            let tables = collusion_posterior(set, &colluder_keys, &outcome.transcript, cfg)?;
            for table in &tables {
                let dev = table.max_deviation_from_uniform();
                stats.max_posterior_deviation =
                    Some(stats.max_posterior_deviation.map_or(dev, |m| m.max(dev)));
            }
        }
        _ => unreachable!(),
    }
    Ok(stats)
}

/// Runs the protocol `trials` times under the strategy and aggregates abort
/// frequency, decoy error rate, and (for participant attacks) posterior
/// deviation. Trial `i` owns the stream derived from `(cfg.seed, i)`.
pub fn detection_campaign(
    strategy: Option<&AttackStrategy>,
    cfg: &ProtocolConfig,
    trials: u64,
) -> Result<DetectionStats> {
    if trials == 0 {
        return Err(Error::Domain("campaign needs at least one trial".into()));
    }
    let mut all = Vec::with_capacity(trials as usize);
    for trial in 0..trials {
        all.push(campaign_trial(strategy, cfg, trial)?);
    }
    Ok(DetectionStats::from_trials(&all))
}

fn random_keys(cfg: &ProtocolConfig, rng: &mut RandomStream) -> Vec<PrivateKeyString> {
    (1..=cfg.n)
        .map(|i| PrivateKeyString::random(PartyId(i), cfg.d, cfg.length, rng))
        .collect()
}

fn accumulate(reports: &[CheckReport], only: Option<PartyId>, stats: &mut TrialStats) {
    for r in reports {
        if only.is_none_or(|p| r.recipient == p) {
            stats.mismatches += r.mismatches;
            stats.tested += r.tested;
        }
    }
}
