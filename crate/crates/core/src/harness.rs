//! Simulated quantum and classical channels.
//!
//! Parties exchange particles by transferring ownership of [`ParticleSlot`]
//! handles; the backing registers live in a central [`ParticleStore`], so
//! "sending a particle" never re-encodes joint states. The classical channel
//! is an authenticated broadcast: adversaries read every message but cannot
//! alter it. Every transfer, broadcast, protocol measurement and abort is
//! appended to a [`Transcript`] that renders to a line-delimited text form,
//! byte-identical across runs with equal seeds.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::qudit::{self, Basis, QuditRegister};
use crate::rng::RandomStream;

/// 1-based party identifier; the preparer is party 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartyId(pub u32);

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Handle to one travelling particle.
///
/// An entangled-wire slot refers to exactly one wire of exactly one stored
/// group register; a decoy slot refers to a standalone one-wire register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ParticleSlot {
    /// Wire `wire ∈ [1, n]` of entangled group `group ∈ [1, N]`.
    EntangledWire { group: u32, wire: u32 },
    /// Standalone decoy register `id`.
    Decoy { id: u32 },
}

impl fmt::Display for ParticleSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParticleSlot::EntangledWire { group, wire } => write!(f, "g{group}w{wire}"),
            ParticleSlot::Decoy { id } => write!(f, "d{id}"),
        }
    }
}

/// Central storage for all registers a run touches.
///
/// Attacks may widen a register with ancilla wires; the original wires keep
/// their positions because ancillas are appended as least significant.
#[derive(Debug)]
pub struct ParticleStore {
    groups: Vec<QuditRegister>,
    decoys: Vec<QuditRegister>,
}

impl ParticleStore {
    pub fn new(groups: Vec<QuditRegister>, decoys: Vec<QuditRegister>) -> Self {
        ParticleStore { groups, decoys }
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn group(&self, group: u32) -> &QuditRegister {
        &self.groups[group as usize - 1]
    }

    pub fn group_mut(&mut self, group: u32) -> &mut QuditRegister {
        &mut self.groups[group as usize - 1]
    }

    /// Swaps a group register out for exclusive processing.
    pub(crate) fn take_group(&mut self, group: u32, placeholder: QuditRegister) -> QuditRegister {
        core::mem::replace(&mut self.groups[group as usize - 1], placeholder)
    }

    pub fn decoy(&self, id: u32) -> &QuditRegister {
        &self.decoys[id as usize]
    }

    pub fn decoy_mut(&mut self, id: u32) -> &mut QuditRegister {
        &mut self.decoys[id as usize]
    }

    /// Register and wire a slot points at.
    pub fn locate_mut(&mut self, slot: &ParticleSlot) -> (&mut QuditRegister, u32) {
        match slot {
            ParticleSlot::EntangledWire { group, wire } => {
                (&mut self.groups[*group as usize - 1], *wire)
            }
            ParticleSlot::Decoy { id } => (&mut self.decoys[*id as usize], 1),
        }
    }

    /// Measures the qudit a slot points at, collapsing the backing register.
    /// Raw store access: nothing is logged.
    pub fn measure_slot(
        &mut self,
        slot: &ParticleSlot,
        basis: Basis,
        rng: &mut RandomStream,
    ) -> Result<u32> {
        let (reg, wire) = self.locate_mut(slot);
        Ok(qudit::measure_wire_in_place(reg, wire, basis, rng)?.value)
    }
}

/// An ordered quantum transmission of slots from one party to another.
///
/// Slot order is the on-the-wire sequence order, decoys included.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantumTransfer {
    pub from: PartyId,
    pub to: PartyId,
    pub slots: Vec<ParticleSlot>,
}

/// Payload of an authenticated classical broadcast.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    /// Positions and bases of the decoys in one recipient's sequence, plus
    /// the half whose results the recipient must report back.
    DecoyDisclosure {
        recipient: PartyId,
        positions: Vec<u32>,
        bases: Vec<Basis>,
        report_positions: Vec<u32>,
    },
    /// Measured decoy values reported by the recipient, as (position, value).
    DecoyResults {
        recipient: PartyId,
        values: Vec<(u32, u32)>,
    },
    /// Initial decoy values announced by the preparer for the remaining half.
    DecoyInitials {
        recipient: PartyId,
        values: Vec<(u32, u32)>,
    },
    /// A party's measured result string M_j.
    ResultVector { values: Vec<u32> },
    /// The published modulo-d sum K.
    FinalSum { values: Vec<u32> },
}

/// A broadcast message: ordered, tamper-free, visible to every party and to
/// adversaries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassicalMessage {
    pub from: PartyId,
    pub payload: Payload,
}

/// Record of one protocol measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeasurementRecord {
    pub party: PartyId,
    pub slot: ParticleSlot,
    pub basis: Basis,
    pub outcome: u32,
}

/// One transcript entry.
#[derive(Clone, Debug, PartialEq)]
pub enum Event {
    Transfer(QuantumTransfer),
    Classical(ClassicalMessage),
    Measurement(MeasurementRecord),
    Abort {
        recipient: PartyId,
        mismatches: u32,
        tested: u32,
    },
}

fn write_ints(f: &mut fmt::Formatter<'_>, values: &[u32]) -> fmt::Result {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            write!(f, ",")?;
        }
        write!(f, "{v}")?;
    }
    Ok(())
}

fn write_pairs(f: &mut fmt::Formatter<'_>, values: &[(u32, u32)]) -> fmt::Result {
    for (i, (p, v)) in values.iter().enumerate() {
        if i > 0 {
            write!(f, ",")?;
        }
        write!(f, "{p}:{v}")?;
    }
    Ok(())
}

impl fmt::Display for Event {
    /// One event per line: event kind, party ids, payload integers.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Transfer(t) => {
                write!(f, "transfer from={} to={} slots=", t.from, t.to)?;
                for (i, slot) in t.slots.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{slot}")?;
                }
                Ok(())
            }
            Event::Classical(m) => match &m.payload {
                Payload::DecoyDisclosure {
                    recipient,
                    positions,
                    bases,
                    report_positions,
                } => {
                    write!(
                        f,
                        "disclose from={} recipient={recipient} positions=",
                        m.from
                    )?;
                    write_ints(f, positions)?;
                    write!(f, " bases=")?;
                    for (i, b) in bases.iter().enumerate() {
                        if i > 0 {
                            write!(f, ",")?;
                        }
                        write!(f, "{}", b.letter())?;
                    }
                    write!(f, " report=")?;
                    write_ints(f, report_positions)
                }
                Payload::DecoyResults { recipient, values } => {
                    write!(
                        f,
                        "decoy-results from={} recipient={recipient} values=",
                        m.from
                    )?;
                    write_pairs(f, values)
                }
                Payload::DecoyInitials { recipient, values } => {
                    write!(
                        f,
                        "decoy-initials from={} recipient={recipient} values=",
                        m.from
                    )?;
                    write_pairs(f, values)
                }
                Payload::ResultVector { values } => {
                    write!(f, "result from={} values=", m.from)?;
                    write_ints(f, values)
                }
                Payload::FinalSum { values } => {
                    write!(f, "final-sum from={} values=", m.from)?;
                    write_ints(f, values)
                }
            },
            Event::Measurement(r) => write!(
                f,
                "measure party={} slot={} basis={} outcome={}",
                r.party,
                r.slot,
                r.basis.letter(),
                r.outcome
            ),
            Event::Abort {
                recipient,
                mismatches,
                tested,
            } => write!(
                f,
                "abort recipient={recipient} mismatches={mismatches} tested={tested}"
            ),
        }
    }
}

/// Append-only, totally ordered event log. Never mutated retroactively.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Transcript {
    events: Vec<Event>,
}

impl Transcript {
    pub fn new() -> Self {
        Transcript::default()
    }

    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Renders the log as line-delimited text, one event per line.
    pub fn render(&self) -> String {
        use core::fmt::Write;
        let mut out = String::new();
        for event in &self.events {
            let _ = writeln!(out, "{event}");
        }
        out
    }
}

/// Hook invoked on each in-flight slot of a quantum transfer. The adversary
/// may measure, replace or entangle the slot through the store; its actions
/// are not logged.
pub trait ChannelTap {
    fn on_slot(
        &mut self,
        store: &mut ParticleStore,
        slot: &ParticleSlot,
        to: PartyId,
        rng: &mut RandomStream,
    ) -> Result<()>;

    /// Called once after the protocol finishes, before the store is dropped;
    /// lets probe-style attacks measure retained ancillas.
    fn after_run(&mut self, _store: &mut ParticleStore, _rng: &mut RandomStream) -> Result<()> {
        Ok(())
    }
}

/// The simulated network: particle store, slot ownership, and transcript.
///
/// Single logical event loop; the transcript is the serialization point.
#[derive(Debug)]
pub struct Network {
    store: ParticleStore,
    owners: BTreeMap<ParticleSlot, PartyId>,
    transcript: Transcript,
}

impl Network {
    pub fn new(store: ParticleStore) -> Self {
        Network {
            store,
            owners: BTreeMap::new(),
            transcript: Transcript::new(),
        }
    }

    pub fn store(&self) -> &ParticleStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParticleStore {
        &mut self.store
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }

    /// Registers a newly created slot with its initial owner.
    pub fn create_slot(&mut self, slot: ParticleSlot, owner: PartyId) -> Result<()> {
        if self.owners.insert(slot, owner).is_some() {
            return Err(Error::ProtocolLogic(alloc::format!(
                "slot {slot} created twice"
            )));
        }
        Ok(())
    }

    pub fn owner(&self, slot: &ParticleSlot) -> Option<PartyId> {
        self.owners.get(slot).copied()
    }

    /// Moves every slot of the transfer to the recipient. If an adversary tap
    /// is attached it is invoked on each slot in sequence order; the transfer
    /// (but not the adversary action) is logged.
    pub fn send_quantum(
        &mut self,
        transfer: QuantumTransfer,
        mut adversary: Option<&mut (dyn ChannelTap + '_)>,
        rng: &mut RandomStream,
    ) -> Result<()> {
        for slot in &transfer.slots {
            match self.owners.get(slot) {
                Some(owner) if *owner == transfer.from => {}
                Some(owner) => {
                    return Err(Error::ProtocolLogic(alloc::format!(
                        "party {} cannot send slot {slot} owned by {owner}",
                        transfer.from
                    )))
                }
                None => {
                    return Err(Error::ProtocolLogic(alloc::format!(
                        "slot {slot} does not exist"
                    )))
                }
            }
        }
        for slot in &transfer.slots {
            if let Some(tap) = adversary.as_deref_mut() {
                tap.on_slot(&mut self.store, slot, transfer.to, rng)?;
            }
            self.owners.insert(*slot, transfer.to);
        }
        self.transcript.push(Event::Transfer(transfer));
        Ok(())
    }

    /// Appends a broadcast to the transcript, visible to all parties and to
    /// adversaries.
    pub fn broadcast_classical(&mut self, msg: ClassicalMessage) {
        self.transcript.push(Event::Classical(msg));
    }

    /// Measures a slot the party owns and logs the record.
    pub fn measure_slot_logged(
        &mut self,
        party: PartyId,
        slot: ParticleSlot,
        basis: Basis,
        rng: &mut RandomStream,
    ) -> Result<u32> {
        match self.owners.get(&slot) {
            Some(owner) if *owner == party => {}
            other => {
                return Err(Error::ProtocolLogic(alloc::format!(
                    "party {party} cannot measure slot {slot} (owner {other:?})"
                )))
            }
        }
        let outcome = self.store.measure_slot(&slot, basis, rng)?;
        self.transcript.push(Event::Measurement(MeasurementRecord {
            party,
            slot,
            basis,
            outcome,
        }));
        Ok(outcome)
    }

    pub fn record_measurement(&mut self, record: MeasurementRecord) {
        self.transcript.push(Event::Measurement(record));
    }

    pub fn abort(&mut self, recipient: PartyId, mismatches: u32, tested: u32) {
        self.transcript.push(Event::Abort {
            recipient,
            mismatches,
            tested,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qudit::{make_omega, prepare_single};
    use crate::rng::stream_from_seed;
    use alloc::vec;

    fn small_network() -> Network {
        let groups = vec![make_omega(2, 3).unwrap()];
        let decoys = vec![prepare_single(2, Basis::Fourier, 0).unwrap()];
        let mut net = Network::new(ParticleStore::new(groups, decoys));
        for wire in 1..=3 {
            net.create_slot(ParticleSlot::EntangledWire { group: 1, wire }, PartyId(1))
                .unwrap();
        }
        net.create_slot(ParticleSlot::Decoy { id: 0 }, PartyId(1))
            .unwrap();
        net
    }

    #[test]
    fn transfer_without_adversary_is_transparent() {
        let mut net = small_network();
        let mut rng = stream_from_seed(1);
        let before = net.store().group(1).clone();
        let slot = ParticleSlot::EntangledWire { group: 1, wire: 2 };
        net.send_quantum(
            QuantumTransfer {
                from: PartyId(1),
                to: PartyId(2),
                slots: vec![slot],
            },
            None,
            &mut rng,
        )
        .unwrap();
        assert_eq!(net.store().group(1).amps(), before.amps());
        assert_eq!(net.owner(&slot), Some(PartyId(2)));
    }

    #[test]
    fn double_send_without_return_is_rejected() {
        let mut net = small_network();
        let mut rng = stream_from_seed(2);
        let slot = ParticleSlot::EntangledWire { group: 1, wire: 2 };
        let transfer = QuantumTransfer {
            from: PartyId(1),
            to: PartyId(2),
            slots: vec![slot],
        };
        net.send_quantum(transfer.clone(), None, &mut rng).unwrap();
        match net.send_quantum(transfer, None, &mut rng) {
            Err(Error::ProtocolLogic(_)) => {}
            other => panic!("expected ownership violation, got {other:?}"),
        }
    }

    #[test]
    fn broadcasts_preserve_order_and_are_readable() {
        let mut net = small_network();
        net.broadcast_classical(ClassicalMessage {
            from: PartyId(2),
            payload: Payload::ResultVector { values: vec![1, 0] },
        });
        net.broadcast_classical(ClassicalMessage {
            from: PartyId(1),
            payload: Payload::FinalSum { values: vec![1, 1] },
        });
        let rendered = net.transcript().render();
        let lines: Vec<&str> = rendered.lines().collect();
        assert_eq!(lines[0], "result from=2 values=1,0");
        assert_eq!(lines[1], "final-sum from=1 values=1,1");
    }

    #[test]
    fn measurement_requires_ownership() {
        let mut net = small_network();
        let mut rng = stream_from_seed(3);
        let slot = ParticleSlot::EntangledWire { group: 1, wire: 2 };
        let err = net.measure_slot_logged(PartyId(2), slot, Basis::Computational, &mut rng);
        assert!(matches!(err, Err(Error::ProtocolLogic(_))));
    }

    #[test]
    fn rendering_is_reproducible() {
        let render = |seed| {
            let mut net = small_network();
            let mut rng = stream_from_seed(seed);
            net.send_quantum(
                QuantumTransfer {
                    from: PartyId(1),
                    to: PartyId(2),
                    slots: vec![ParticleSlot::Decoy { id: 0 }],
                },
                None,
                &mut rng,
            )
            .unwrap();
            net.measure_slot_logged(
                PartyId(2),
                ParticleSlot::Decoy { id: 0 },
                Basis::Fourier,
                &mut rng,
            )
            .unwrap();
            net.transcript().render()
        };
        assert_eq!(render(9), render(9));
    }
}
