//! The four-step summation protocol.
//!
//! Party 1 prepares N entangled groups and distributes one wire of each to
//! every other party, padding each sequence with decoy qudits (step 1). Each
//! channel is then checked for tampering by comparing decoy measurements
//! against their preparation (step 2). Every party encodes its private digit
//! string by applying the shifted Fourier operator to its wires (step 3),
//! measures in the computational basis, and the announced results are summed
//! modulo d (step 4).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::harness::{
    ChannelTap, ClassicalMessage, Event, MeasurementRecord, Network, ParticleSlot, ParticleStore,
    PartyId, Payload, QuantumTransfer, Transcript,
};
use crate::qudit::{
    apply_local_in_place, fourier_op, make_omega, measure_remove_last_wire, measure_wire_in_place,
    prepare_single, shift_op, Basis, LocalOperator, QuditRegister,
};
use crate::rng::RandomStream;

/// Protocol parameters.
///
/// `length` is N, the length of every private digit string and the number of
/// entangled groups; `decoys` is the number of decoy qudits inserted into each
/// recipient's sequence; `threshold` is the abort threshold on the per-channel
/// decoy error rate.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub d: u32,
    pub n: u32,
    pub length: u32,
    pub decoys: u32,
    pub threshold: f64,
    pub seed: u64,
}

impl ProtocolConfig {
    /// Config with the default decoy count (one per data qudit, doubling the
    /// sequence length) and a zero error threshold for the ideal channel.
    pub fn new(d: u32, n: u32, length: u32, seed: u64) -> Self {
        ProtocolConfig {
            d,
            n,
            length,
            decoys: length,
            threshold: 0.0,
            seed,
        }
    }

    pub fn with_decoys(mut self, decoys: u32) -> Self {
        self.decoys = decoys;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Domain(format!("d must be >= 2, got {}", self.d)));
        }
        if self.n < 3 {
            return Err(Error::Domain(format!("n must be >= 3, got {}", self.n)));
        }
        if self.length < 1 {
            return Err(Error::Domain("len must be >= 1".into()));
        }
        if !self.threshold.is_finite() || !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Domain(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// One party's private digit string K_i.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrivateKeyString {
    pub owner: PartyId,
    pub digits: Vec<u32>,
}

impl PrivateKeyString {
    pub fn new(owner: PartyId, digits: Vec<u32>) -> Self {
        PrivateKeyString { owner, digits }
    }

    /// Uniform digits over `[0, d)`.
    pub fn random(owner: PartyId, d: u32, length: u32, rng: &mut RandomStream) -> Self {
        let digits = (0..length).map(|_| rng.random_range(0..d)).collect();
        PrivateKeyString { owner, digits }
    }
}

/// Checks that `keys` holds one string per party in order, with digits in
/// range and of the right length.
pub fn validate_keys(cfg: &ProtocolConfig, keys: &[PrivateKeyString]) -> Result<()> {
    if keys.len() != cfg.n as usize {
        return Err(Error::Domain(format!(
            "keys: expected {} strings, got {}",
            cfg.n,
            keys.len()
        )));
    }
    for (i, key) in keys.iter().enumerate() {
        if key.owner != PartyId(i as u32 + 1) {
            return Err(Error::Domain(format!(
                "keys: string {} owned by party {}, expected party {}",
                i,
                key.owner,
                i + 1
            )));
        }
        if key.digits.len() != cfg.length as usize {
            return Err(Error::Domain(format!(
                "keys: party {} has {} digits, expected len {}",
                key.owner,
                key.digits.len(),
                cfg.length
            )));
        }
        if let Some(bad) = key.digits.iter().find(|&&v| v >= cfg.d) {
            return Err(Error::Domain(format!(
                "keys: digit {bad} of party {} out of range for d={}",
                key.owner, cfg.d
            )));
        }
    }
    Ok(())
}

/// Preparation basis and value of one decoy qudit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoySpec {
    pub basis: Basis,
    pub value: u32,
}

/// Decoy placement for one recipient's padded sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecipientLayout {
    pub recipient: PartyId,
    /// Strictly increasing indices into the padded sequence of length N+δ.
    pub positions: Vec<u32>,
    /// Specs aligned with `positions`.
    pub specs: Vec<DecoySpec>,
    /// Store ids of the decoy registers, aligned with `positions`.
    pub decoy_ids: Vec<u32>,
}

/// Decoy placement for all recipients, index 0 holding party 2.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SequenceLayout {
    pub recipients: Vec<RecipientLayout>,
}

/// Outcome of the step-2 eavesdropping check on one channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckReport {
    pub recipient: PartyId,
    pub tested: u32,
    pub mismatches: u32,
    pub error_rate: f64,
    pub abort: bool,
}

/// One party's measured string M_i.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResultVector {
    pub owner: PartyId,
    pub values: Vec<u32>,
}

/// Componentwise sum modulo d of the given result strings.
pub fn mod_sum(vectors: &[ResultVector], d: u32) -> Result<Vec<u32>> {
    let Some(first) = vectors.first() else {
        return Err(Error::Domain("mod_sum needs at least one vector".into()));
    };
    let len = first.values.len();
    let mut out = vec![0u32; len];
    for v in vectors {
        if v.values.len() != len {
            return Err(Error::Domain(format!(
                "mod_sum: vector of party {} has length {}, expected {len}",
                v.owner,
                v.values.len()
            )));
        }
        for (acc, &x) in out.iter_mut().zip(&v.values) {
            if x >= d {
                return Err(Error::Domain(format!(
                    "mod_sum: entry {x} out of range for d={d}"
                )));
            }
            *acc = (*acc + x) % d;
        }
    }
    Ok(out)
}

/// Terminal state of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Completed,
    Aborted,
}

/// Result of one protocol execution.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolOutcome {
    pub status: Status,
    /// The published sum K; present exactly when the run completed.
    pub sum: Option<Vec<u32>>,
    pub check_reports: Vec<CheckReport>,
    pub transcript: Transcript,
}

/// How the preparer builds the initial groups. `PreMeasured` models the
/// dishonest preparer who collapses every group in the computational basis
/// before distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum PrepMode {
    Entangled,
    PreMeasured,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Distributed,
    Checked,
    Encoded,
    Done,
}

/// Driver for one protocol execution; steps must be called in order.
pub struct ProtocolRun {
    cfg: ProtocolConfig,
    net: Network,
    layout: SequenceLayout,
    reports: Vec<CheckReport>,
    premeasured: Option<Vec<u32>>,
    phase: Phase,
}

/// Unbiased sample of `count` distinct values from `0..range`, sorted.
fn sample_positions(range: u32, count: u32, rng: &mut RandomStream) -> Vec<u32> {
    debug_assert!(count <= range);
    let mut pool: Vec<u32> = (0..range).collect();
    for i in 0..count as usize {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut chosen: Vec<u32> = pool[..count as usize].to_vec();
    chosen.sort_unstable();
    chosen
}

impl ProtocolRun {
    /// Step 1: prepares the N entangled groups, builds the padded sequences
    /// with freshly sampled decoys, and transfers each sequence to its
    /// recipient (through the adversary tap, if any). The preparer keeps the
    /// first wire of every group.
    pub fn step1_prepare(
        cfg: &ProtocolConfig,
        adversary: Option<&mut (dyn ChannelTap + '_)>,
        rng: &mut RandomStream,
    ) -> Result<ProtocolRun> {
        Self::step1_with_mode(cfg, PrepMode::Entangled, adversary, rng)
    }

    pub(crate) fn step1_with_mode(
        cfg: &ProtocolConfig,
        prep: PrepMode,
        mut adversary: Option<&mut (dyn ChannelTap + '_)>,
        rng: &mut RandomStream,
    ) -> Result<ProtocolRun> {
        cfg.validate()?;
        let mut groups = Vec::with_capacity(cfg.length as usize);
        let mut premeasured = None;
        for _ in 0..cfg.length {
            groups.push(make_omega(cfg.d, cfg.n)?);
        }
        if prep == PrepMode::PreMeasured {
            let mut values = Vec::with_capacity(cfg.length as usize);
            for reg in &mut groups {
                let mut digits = Vec::with_capacity(cfg.n as usize);
                for wire in 1..=cfg.n {
                    digits.push(measure_wire_in_place(reg, wire, Basis::Computational, rng)?.value);
                }
                debug_assert!(digits.iter().all(|&v| v == digits[0]));
                values.push(digits[0]);
            }
            premeasured = Some(values);
        }

        // Decoys are sampled recipient by recipient: basis and value first,
        // then the positions within the padded sequence.
        let padded = cfg.length + cfg.decoys;
        let mut decoys = Vec::new();
        let mut layout = SequenceLayout::default();
        for j in 2..=cfg.n {
            let mut specs = Vec::with_capacity(cfg.decoys as usize);
            let mut ids = Vec::with_capacity(cfg.decoys as usize);
            for _ in 0..cfg.decoys {
                let spec = DecoySpec {
                    basis: Basis::sample_uniform(rng),
                    value: rng.random_range(0..cfg.d),
                };
                ids.push(decoys.len() as u32);
                decoys.push(prepare_single(cfg.d, spec.basis, spec.value)?);
                specs.push(spec);
            }
            let positions = sample_positions(padded, cfg.decoys, rng);
            layout.recipients.push(RecipientLayout {
                recipient: PartyId(j),
                positions,
                specs,
                decoy_ids: ids,
            });
        }

        let mut net = Network::new(ParticleStore::new(groups, decoys));
        for t in 1..=cfg.length {
            for wire in 1..=cfg.n {
                net.create_slot(ParticleSlot::EntangledWire { group: t, wire }, PartyId(1))?;
            }
        }
        for rl in &layout.recipients {
            for &id in &rl.decoy_ids {
                net.create_slot(ParticleSlot::Decoy { id }, PartyId(1))?;
            }
        }

        for rl in &layout.recipients {
            let j = rl.recipient;
            let mut slots = Vec::with_capacity(padded as usize);
            let mut next_group = 1u32;
            let mut decoy_cursor = 0usize;
            for pos in 0..padded {
                if decoy_cursor < rl.positions.len() && rl.positions[decoy_cursor] == pos {
                    slots.push(ParticleSlot::Decoy {
                        id: rl.decoy_ids[decoy_cursor],
                    });
                    decoy_cursor += 1;
                } else {
                    slots.push(ParticleSlot::EntangledWire {
                        group: next_group,
                        wire: j.0,
                    });
                    next_group += 1;
                }
            }
            debug_assert_eq!(next_group, cfg.length + 1);
            net.send_quantum(
                QuantumTransfer {
                    from: PartyId(1),
                    to: j,
                    slots,
                },
                adversary.as_deref_mut(),
                rng,
            )?;
        }

        Ok(ProtocolRun {
            cfg: cfg.clone(),
            net,
            layout,
            reports: Vec::new(),
            premeasured,
            phase: Phase::Distributed,
        })
    }

    /// Step 2: checks every channel. The preparer discloses decoy positions
    /// and bases together with the half whose results the recipient must
    /// report; the recipient measures all decoys in the stated bases, reports
    /// the chosen half, and the preparer announces the initial values of the
    /// rest. Mismatches on either half count toward the channel's error rate.
    pub fn step2_check(&mut self, rng: &mut RandomStream) -> Result<Vec<CheckReport>> {
        if self.phase != Phase::Distributed {
            return Err(Error::ProtocolLogic(
                "step 2 requires a freshly distributed run".into(),
            ));
        }
        let cfg = self.cfg.clone();
        let mut reports = Vec::new();
        for rl in &self.layout.recipients {
            let j = rl.recipient;
            if cfg.decoys == 0 {
                log::warn!("channel to {j} has no decoys; eavesdropping check is vacuous");
                reports.push(CheckReport {
                    recipient: j,
                    tested: 0,
                    mismatches: 0,
                    error_rate: 0.0,
                    abort: false,
                });
                continue;
            }
            // The preparer picks which half gets reported before any result
            // is announced.
            let half = cfg.decoys.div_ceil(2);
            let picked = sample_positions(cfg.decoys, half, rng);
            let report_positions: Vec<u32> =
                picked.iter().map(|&i| rl.positions[i as usize]).collect();
            self.net.broadcast_classical(ClassicalMessage {
                from: PartyId(1),
                payload: Payload::DecoyDisclosure {
                    recipient: j,
                    positions: rl.positions.clone(),
                    bases: rl.specs.iter().map(|s| s.basis).collect(),
                    report_positions: report_positions.clone(),
                },
            });

            let mut outcomes = Vec::with_capacity(cfg.decoys as usize);
            for (idx, &id) in rl.decoy_ids.iter().enumerate() {
                let outcome = self.net.measure_slot_logged(
                    j,
                    ParticleSlot::Decoy { id },
                    rl.specs[idx].basis,
                    rng,
                )?;
                outcomes.push(outcome);
            }

            let mut reported = Vec::new();
            let mut withheld = Vec::new();
            for (idx, &pos) in rl.positions.iter().enumerate() {
                if report_positions.binary_search(&pos).is_ok() {
                    reported.push((pos, outcomes[idx], rl.specs[idx].value));
                } else {
                    withheld.push((pos, outcomes[idx], rl.specs[idx].value));
                }
            }
            self.net.broadcast_classical(ClassicalMessage {
                from: j,
                payload: Payload::DecoyResults {
                    recipient: j,
                    values: reported.iter().map(|&(p, m, _)| (p, m)).collect(),
                },
            });
            self.net.broadcast_classical(ClassicalMessage {
                from: PartyId(1),
                payload: Payload::DecoyInitials {
                    recipient: j,
                    values: withheld.iter().map(|&(p, _, init)| (p, init)).collect(),
                },
            });

            let mismatches = reported
                .iter()
                .chain(&withheld)
                .filter(|&&(_, measured, initial)| measured != initial)
                .count() as u32;
            let error_rate = mismatches as f64 / cfg.decoys as f64;
            reports.push(CheckReport {
                recipient: j,
                tested: cfg.decoys,
                mismatches,
                error_rate,
                abort: error_rate > cfg.threshold,
            });
        }

        for report in &reports {
            if report.abort {
                self.net
                    .abort(report.recipient, report.mismatches, report.tested);
            }
        }
        self.reports = reports.clone();
        self.phase = if reports.iter().any(|r| r.abort) {
            Phase::Done
        } else {
            Phase::Checked
        };
        Ok(reports)
    }

    /// Whether step 2 flagged any channel.
    pub fn aborted(&self) -> bool {
        self.reports.iter().any(|r| r.abort)
    }

    /// Step 3: every party applies `U_k · F` (Fourier first, then the shift)
    /// to each of its wires, with k its private digit for that group. Decoys
    /// have been consumed by the check, so sequence indices map straight back
    /// to group indices.
    pub fn step3_encode(&mut self, keys: &[PrivateKeyString]) -> Result<()> {
        if self.phase != Phase::Checked {
            return Err(Error::ProtocolLogic(
                "encoding is only allowed after the eavesdropping check passes".into(),
            ));
        }
        validate_keys(&self.cfg, keys)?;
        let enc = encoding_ops(self.cfg.d)?;
        for (i, key) in keys.iter().enumerate() {
            let wire = i as u32 + 1;
            for t in 1..=self.cfg.length {
                let k = key.digits[t as usize - 1];
                let reg = self.net.store_mut().group_mut(t);
                apply_local_in_place(reg, wire, &enc[k as usize])?;
            }
        }
        self.phase = Phase::Encoded;
        Ok(())
    }

    /// Step 4: every party measures its wires in the computational basis,
    /// the non-preparing parties announce their result strings, and the
    /// preparer computes and (optionally) publishes the modulo-d sum.
    pub fn step4_measure_and_sum(
        &mut self,
        publish: bool,
        rng: &mut RandomStream,
    ) -> Result<ProtocolOutcome> {
        if self.phase != Phase::Encoded {
            return Err(Error::ProtocolLogic(
                "step 4 requires completed encoding".into(),
            ));
        }
        let cfg = self.cfg.clone();
        let mut results: Vec<ResultVector> = Vec::with_capacity(cfg.n as usize);
        for i in 1..=cfg.n {
            let mut values = Vec::with_capacity(cfg.length as usize);
            for t in 1..=cfg.length {
                let outcome = self.net.measure_slot_logged(
                    PartyId(i),
                    ParticleSlot::EntangledWire { group: t, wire: i },
                    Basis::Computational,
                    rng,
                )?;
                values.push(outcome);
            }
            results.push(ResultVector {
                owner: PartyId(i),
                values,
            });
        }
        self.phase = Phase::Done;
        self.finalize(results, publish)
    }

    /// Announces the result strings, computes K, and assembles the outcome.
    fn finalize(&mut self, results: Vec<ResultVector>, publish: bool) -> Result<ProtocolOutcome> {
        for rv in results.iter().skip(1) {
            self.net.broadcast_classical(ClassicalMessage {
                from: rv.owner,
                payload: Payload::ResultVector {
                    values: rv.values.clone(),
                },
            });
        }
        let sum = mod_sum(&results, self.cfg.d)?;
        if publish {
            self.net.broadcast_classical(ClassicalMessage {
                from: PartyId(1),
                payload: Payload::FinalSum {
                    values: sum.clone(),
                },
            });
        }
        Ok(ProtocolOutcome {
            status: Status::Completed,
            sum: Some(sum),
            check_reports: self.reports.clone(),
            transcript: self.net.transcript().clone(),
        })
    }

    fn aborted_outcome(&self) -> ProtocolOutcome {
        ProtocolOutcome {
            status: Status::Aborted,
            sum: None,
            check_reports: self.reports.clone(),
            transcript: self.net.transcript().clone(),
        }
    }

    /// Steps 3 and 4 fused per group: each wire is encoded and measured in
    /// turn, shrinking the register after every measurement. Operations on
    /// distinct wires commute, so the joint outcome distribution is identical
    /// to encoding everything first and measuring afterwards, but the cost
    /// stays O(d^n) per group instead of O(d^{n+1}).
    fn encode_measure_fused(
        &mut self,
        keys: &[PrivateKeyString],
        publish: bool,
        rng: &mut RandomStream,
    ) -> Result<ProtocolOutcome> {
        if self.phase != Phase::Checked {
            return Err(Error::ProtocolLogic(
                "encoding is only allowed after the eavesdropping check passes".into(),
            ));
        }
        validate_keys(&self.cfg, keys)?;
        let cfg = self.cfg.clone();
        let enc = encoding_ops(cfg.d)?;
        let n = cfg.n as usize;
        for i in 1..=cfg.n {
            for t in 1..=cfg.length {
                let slot = ParticleSlot::EntangledWire { group: t, wire: i };
                if self.net.owner(&slot) != Some(PartyId(i)) {
                    return Err(Error::ProtocolLogic(format!(
                        "party {i} does not own slot {slot} at measurement time"
                    )));
                }
            }
        }
        let mut matrix = vec![vec![0u32; cfg.length as usize]; n];
        let stub = QuditRegister::basis_state(cfg.d, 1, &[0])?;
        for t in 1..=cfg.length {
            let mut reg = self.net.store_mut().take_group(t, stub.clone());
            if reg.wires() == cfg.n {
                // The group register is consumed; a one-wire stub remains in
                // the store.
                for i in (1..=n).rev() {
                    let k = keys[i - 1].digits[t as usize - 1] as usize;
                    let last = reg.wires();
                    apply_local_in_place(&mut reg, last, &enc[k])?;
                    let value = if reg.wires() >= 2 {
                        measure_remove_last_wire(&mut reg, rng)?
                    } else {
                        measure_wire_in_place(&mut reg, 1, Basis::Computational, rng)?.value
                    };
                    matrix[i - 1][t as usize - 1] = value;
                }
            } else {
                // An attack widened this register with ancilla wires; keep the
                // full width so retained probes stay intact.
                for i in 1..=n {
                    let k = keys[i - 1].digits[t as usize - 1] as usize;
                    apply_local_in_place(&mut reg, i as u32, &enc[k])?;
                }
                for i in 1..=n {
                    let outcome =
                        measure_wire_in_place(&mut reg, i as u32, Basis::Computational, rng)?;
                    matrix[i - 1][t as usize - 1] = outcome.value;
                }
                *self.net.store_mut().group_mut(t) = reg;
            }
        }
        for i in 1..=cfg.n {
            for t in 1..=cfg.length {
                self.net.record_measurement(MeasurementRecord {
                    party: PartyId(i),
                    slot: ParticleSlot::EntangledWire { group: t, wire: i },
                    basis: Basis::Computational,
                    outcome: matrix[i as usize - 1][t as usize - 1],
                });
            }
        }
        self.phase = Phase::Done;
        let results = matrix
            .into_iter()
            .enumerate()
            .map(|(i, values)| ResultVector {
                owner: PartyId(i as u32 + 1),
                values,
            })
            .collect();
        self.finalize(results, publish)
    }

    pub fn transcript(&self) -> &Transcript {
        self.net.transcript()
    }

    pub fn network(&self) -> &Network {
        &self.net
    }
}

/// The d encoding operators `U_k · F` indexed by k.
fn encoding_ops(d: u32) -> Result<Vec<LocalOperator>> {
    let f = fourier_op(d)?;
    (0..d).map(|k| shift_op(d, k)?.compose(&f)).collect()
}

pub(crate) struct RunArtifacts {
    pub outcome: ProtocolOutcome,
    pub premeasured: Option<Vec<u32>>,
}

pub(crate) fn run_protocol_inner(
    cfg: &ProtocolConfig,
    keys: &[PrivateKeyString],
    mut adversary: Option<&mut (dyn ChannelTap + '_)>,
    prep: PrepMode,
    publish: bool,
    rng: &mut RandomStream,
) -> Result<RunArtifacts> {
    cfg.validate()?;
    validate_keys(cfg, keys)?;
    let mut run = ProtocolRun::step1_with_mode(cfg, prep, adversary.as_deref_mut(), rng)?;
    run.step2_check(rng)?;
    let outcome = if run.aborted() {
        run.aborted_outcome()
    } else {
        run.encode_measure_fused(keys, publish, rng)?
    };
    if let Some(tap) = adversary {
        tap.after_run(run.net.store_mut(), rng)?;
    }
    let premeasured = run.premeasured.take();
    Ok(RunArtifacts {
        outcome,
        premeasured,
    })
}

/// Runs the full protocol: distribution, eavesdropping check (with abort
/// short-circuiting), encoding, measurement, and the published sum.
/// Deterministic given the random stream.
pub fn run_protocol(
    cfg: &ProtocolConfig,
    keys: &[PrivateKeyString],
    adversary: Option<&mut (dyn ChannelTap + '_)>,
    rng: &mut RandomStream,
) -> Result<ProtocolOutcome> {
    run_protocol_inner(cfg, keys, adversary, PrepMode::Entangled, true, rng)
        .map(|artifacts| artifacts.outcome)
}

/// Private mode: the protocol is executed once per party, each acting as the
/// preparer, and no run publishes its sum. Runs are independent, each on its
/// own derived stream, and all computed sums agree.
pub fn run_private_mode(
    cfg: &ProtocolConfig,
    keys: &[PrivateKeyString],
    rng: &mut RandomStream,
) -> Result<Vec<ProtocolOutcome>> {
    cfg.validate()?;
    validate_keys(cfg, keys)?;
    let n = cfg.n;
    let mut outcomes = Vec::with_capacity(n as usize);
    for p in 1..=n {
        let mut sub = crate::rng::derive_stream(rng.random::<u64>(), p as u64);
        // Party p takes the preparer role; the others rotate after it.
        let rotated: Vec<PrivateKeyString> = (1..=n)
            .map(|role| {
                let source = ((p - 1 + role - 1) % n) as usize;
                PrivateKeyString::new(PartyId(role), keys[source].digits.clone())
            })
            .collect();
        let artifacts =
            run_protocol_inner(cfg, &rotated, None, PrepMode::Entangled, false, &mut sub)?;
        outcomes.push(artifacts.outcome);
    }
    Ok(outcomes)
}

/// Samples one group's joint outcome `(m_1, …, m_n)` for the given key
/// column: prepares the entangled carrier, encodes every wire, and measures
/// in the computational basis.
pub fn sample_group_outcome(
    d: u32,
    n: u32,
    keys_column: &[u32],
    rng: &mut RandomStream,
) -> Result<Vec<u32>> {
    if keys_column.len() != n as usize {
        return Err(Error::Domain(format!(
            "key column has {} digits, expected n={n}",
            keys_column.len()
        )));
    }
    if let Some(bad) = keys_column.iter().find(|&&k| k >= d) {
        return Err(Error::Domain(format!(
            "key digit {bad} out of range for d={d}"
        )));
    }
    let enc = encoding_ops(d)?;
    let mut reg = make_omega(d, n)?;
    let mut out = vec![0u32; n as usize];
    for i in (1..=n as usize).rev() {
        let last = reg.wires();
        apply_local_in_place(&mut reg, last, &enc[keys_column[i - 1] as usize])?;
        out[i - 1] = if reg.wires() >= 2 {
            measure_remove_last_wire(&mut reg, rng)?
        } else {
            measure_wire_in_place(&mut reg, 1, Basis::Computational, rng)?.value
        };
    }
    Ok(out)
}

/// Reconstructs every party's measured string from the transcript's
/// measurement records.
pub fn measured_results(
    transcript: &Transcript,
    cfg: &ProtocolConfig,
) -> Result<Vec<ResultVector>> {
    let mut matrix = vec![vec![None; cfg.length as usize]; cfg.n as usize];
    for event in transcript.events() {
        if let Event::Measurement(MeasurementRecord {
            party,
            slot: ParticleSlot::EntangledWire { group, wire },
            basis: Basis::Computational,
            outcome,
        }) = event
        {
            matrix[party.0 as usize - 1][*group as usize - 1] = Some(*outcome);
            debug_assert_eq!(party.0, *wire);
        }
    }
    matrix
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let values: Option<Vec<u32>> = row.into_iter().collect();
            values
                .map(|values| ResultVector {
                    owner: PartyId(i as u32 + 1),
                    values,
                })
                .ok_or_else(|| {
                    Error::Domain(format!("transcript lacks measurements for party {}", i + 1))
                })
        })
        .collect()
}

/// The result strings announced over the classical channel (parties 2..n).
pub fn announced_results(transcript: &Transcript) -> Vec<ResultVector> {
    transcript
        .events()
        .iter()
        .filter_map(|event| match event {
            Event::Classical(ClassicalMessage {
                from,
                payload: Payload::ResultVector { values },
            }) => Some(ResultVector {
                owner: *from,
                values: values.clone(),
            }),
            _ => None,
        })
        .collect()
}

/// The published sum, if the transcript contains one.
pub fn published_sum(transcript: &Transcript) -> Option<Vec<u32>> {
    transcript.events().iter().find_map(|event| match event {
        Event::Classical(ClassicalMessage {
            payload: Payload::FinalSum { values },
            ..
        }) => Some(values.clone()),
        _ => None,
    })
}
