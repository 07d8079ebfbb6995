//! Dense state-vector simulation of d-level quantum registers.
//!
//! A register over `w` wires stores `d^w` complex amplitudes indexed by
//! base-d digit strings, with wire 1 as the most significant digit. Local
//! operators are d×d unitaries applied to one wire; measurement follows the
//! Born rule, sampling from an explicit [`RandomStream`].

use alloc::{format, vec, vec::Vec};
use core::f64::consts::TAU;

// Resolves f64 math in no_std builds; std builds shadow it with the inherent
// methods, so the import sits idle there.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// One complex amplitude. Stored states and operators keep every component
/// finite.
pub type ComplexAmp = num_complex::Complex64;

/// Tolerance for state and operator invariants (norms, unitarity).
pub const INVARIANT_TOL: f64 = 1e-9;
/// Tolerance for pure arithmetic identities.
pub const ARITHMETIC_TOL: f64 = 1e-12;
/// Hard cap on the number of stored amplitudes in one register.
pub const AMP_BUDGET: usize = 1 << 22;

/// A measurement branch below this probability indicates upstream state
/// corruption rather than a legitimate outcome.
const MIN_BRANCH_PROB: f64 = 1e-12;

/// The two mutually unbiased bases used throughout: the computational basis
/// `{|r⟩}` and its Fourier conjugate `{F|r⟩}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Basis {
    Computational,
    Fourier,
}

impl Basis {
    /// Uniformly random basis choice.
    pub fn sample_uniform(rng: &mut RandomStream) -> Basis {
        if rng.random::<bool>() {
            Basis::Computational
        } else {
            Basis::Fourier
        }
    }

    /// One-letter tag used in transcript lines.
    pub fn letter(self) -> char {
        match self {
            Basis::Computational => 'C',
            Basis::Fourier => 'F',
        }
    }
}

/// Result of one projective measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeasurementOutcome {
    /// Measured digit in `[0, d)`.
    pub value: u32,
    /// Basis the projection was taken in.
    pub basis: Basis,
}

fn checked_dim(d: u32, wires: u32) -> Result<usize> {
    let required = (d as u128).checked_pow(wires).unwrap_or(u128::MAX);
    if required > AMP_BUDGET as u128 {
        return Err(Error::Resource {
            required,
            budget: AMP_BUDGET,
        });
    }
    Ok(required as usize)
}

fn check_d(d: u32) -> Result<()> {
    if d < 2 {
        return Err(Error::Domain(format!(
            "level count d must be >= 2, got {d}"
        )));
    }
    Ok(())
}

/// `e^{2πi/d}`, the primitive d-th root of unity underlying the Fourier
/// operator.
pub fn primitive_root(d: u32) -> Result<ComplexAmp> {
    check_d(d)?;
    let angle = TAU / d as f64;
    Ok(ComplexAmp::new(angle.cos(), angle.sin()))
}

/// `e^{2πi·k/d}`, with the exponent reduced modulo d before the single trig
/// evaluation.
fn root_pow(d: u32, k: u64) -> ComplexAmp {
    let k = (k % d as u64) as f64;
    let angle = TAU * k / d as f64;
    ComplexAmp::new(angle.cos(), angle.sin())
}

/// A d×d unitary acting on a single wire.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    d: u32,
    entries: Vec<ComplexAmp>, // row-major
}

impl LocalOperator {
    /// Wraps a row-major d×d matrix, rejecting non-finite entries and
    /// non-unitary matrices.
    pub fn from_entries(d: u32, entries: Vec<ComplexAmp>) -> Result<Self> {
        check_d(d)?;
        if entries.len() != (d as usize).pow(2) {
            return Err(Error::Domain(format!(
                "operator for d={d} needs {} entries, got {}",
                (d as usize).pow(2),
                entries.len()
            )));
        }
        if entries
            .iter()
            .any(|a| !a.re.is_finite() || !a.im.is_finite())
        {
            return Err(Error::Domain(format!(
                "operator for d={d} has non-finite entries"
            )));
        }
        let op = LocalOperator { d, entries };
        let defect = op.unitarity_defect();
        if defect > INVARIANT_TOL {
            return Err(Error::Domain(format!(
                "matrix is not unitary (defect {defect:.3e} at d={d})"
            )));
        }
        Ok(op)
    }

    pub fn identity(d: u32) -> Result<Self> {
        check_d(d)?;
        let mut entries = vec![ComplexAmp::ZERO; (d as usize).pow(2)];
        for i in 0..d as usize {
            entries[i * d as usize + i] = ComplexAmp::ONE;
        }
        Ok(LocalOperator { d, entries })
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn entry(&self, row: u32, col: u32) -> ComplexAmp {
        self.entries[row as usize * self.d as usize + col as usize]
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let d = self.d as usize;
        let mut entries = vec![ComplexAmp::ZERO; d * d];
        for r in 0..d {
            for c in 0..d {
                entries[c * d + r] = self.entries[r * d + c].conj();
            }
        }
        LocalOperator { d: self.d, entries }
    }

    /// Matrix product `self · other` (`other` acts first).
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.d != other.d {
            return Err(Error::Domain(format!(
                "cannot compose operators of levels {} and {}",
                self.d, other.d
            )));
        }
        let d = self.d as usize;
        let mut entries = vec![ComplexAmp::ZERO; d * d];
        for r in 0..d {
            for c in 0..d {
                let mut acc = ComplexAmp::ZERO;
                for t in 0..d {
                    acc += self.entries[r * d + t] * other.entries[t * d + c];
                }
                entries[r * d + c] = acc;
            }
        }
        Ok(LocalOperator { d: self.d, entries })
    }

    /// Largest entrywise deviation of `A†A` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let d = self.d as usize;
        let mut worst = 0.0f64;
        for r in 0..d {
            for c in 0..d {
                let mut acc = ComplexAmp::ZERO;
                for t in 0..d {
                    acc += self.entries[t * d + r].conj() * self.entries[t * d + c];
                }
                let target = if r == c {
                    ComplexAmp::ONE
                } else {
                    ComplexAmp::ZERO
                };
                worst = worst.max((acc - target).norm());
            }
        }
        worst
    }
}

/// The d-th order discrete Fourier operator: entry `(l, r)` is `ζ^{lr}/√d`,
/// so column `r` is the conjugate-basis state `F|r⟩`.
pub fn fourier_op(d: u32) -> Result<LocalOperator> {
    check_d(d)?;
    let scale = 1.0 / (d as f64).sqrt();
    let dd = d as usize;
    let mut entries = vec![ComplexAmp::ZERO; dd * dd];
    for l in 0..dd {
        for r in 0..dd {
            entries[l * dd + r] = root_pow(d, l as u64 * r as u64) * scale;
        }
    }
    Ok(LocalOperator { d, entries })
}

/// The shift operator `U_k`: the permutation `|u⟩ → |u ⊕ k⟩` where `⊕` is
/// addition modulo d.
pub fn shift_op(d: u32, k: u32) -> Result<LocalOperator> {
    check_d(d)?;
    if k >= d {
        return Err(Error::Domain(format!(
            "shift amount k={k} out of range for d={d}"
        )));
    }
    let dd = d as usize;
    let mut entries = vec![ComplexAmp::ZERO; dd * dd];
    for u in 0..dd {
        let target = (u + k as usize) % dd;
        entries[target * dd + u] = ComplexAmp::ONE;
    }
    Ok(LocalOperator { d, entries })
}

/// A dense register of `wires` qudits of `d` levels each.
///
/// Invariants: the amplitude vector has length exactly `d^wires`, every
/// component is finite, and the squared norm is 1 within [`INVARIANT_TOL`].
#[derive(Clone, Debug, PartialEq)]
pub struct QuditRegister {
    d: u32,
    wires: u32,
    amps: Vec<ComplexAmp>,
}

impl QuditRegister {
    /// Wraps an amplitude vector, validating length, finiteness and norm.
    pub fn from_amps(d: u32, wires: u32, amps: Vec<ComplexAmp>) -> Result<Self> {
        check_d(d)?;
        if wires == 0 {
            return Err(Error::Domain("register needs at least one wire".into()));
        }
        let len = checked_dim(d, wires)?;
        if amps.len() != len {
            return Err(Error::Domain(format!(
                "register over {wires} wires of {d} levels needs {len} amplitudes, got {}",
                amps.len()
            )));
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::Domain("register has non-finite amplitudes".into()));
        }
        let reg = QuditRegister { d, wires, amps };
        let norm = reg.norm_sqr();
        if (norm - 1.0).abs() > INVARIANT_TOL {
            return Err(Error::Domain(format!(
                "register is not normalized (|ψ|² = {norm})"
            )));
        }
        Ok(reg)
    }

    /// The basis state `|digits⟩`.
    pub fn basis_state(d: u32, wires: u32, digits: &[u32]) -> Result<Self> {
        check_d(d)?;
        if digits.len() != wires as usize {
            return Err(Error::Domain(format!(
                "expected {wires} digits, got {}",
                digits.len()
            )));
        }
        if let Some(bad) = digits.iter().find(|&&v| v >= d) {
            return Err(Error::Domain(format!("digit {bad} out of range for d={d}")));
        }
        let len = checked_dim(d, wires)?;
        let mut amps = vec![ComplexAmp::ZERO; len];
        let mut index = 0usize;
        for &v in digits {
            index = index * d as usize + v as usize;
        }
        amps[index] = ComplexAmp::ONE;
        Ok(QuditRegister { d, wires, amps })
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn wires(&self) -> u32 {
        self.wires
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn amps(&self) -> &[ComplexAmp] {
        &self.amps
    }

    pub fn amp(&self, index: usize) -> ComplexAmp {
        self.amps[index]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Amplitude stride between adjacent digits of `wire`.
    fn stride(&self, wire: u32) -> usize {
        (self.d as usize).pow(self.wires - wire)
    }

    fn check_wire(&self, wire: u32) -> Result<()> {
        if wire == 0 || wire > self.wires {
            return Err(Error::Domain(format!(
                "wire {wire} out of range for a {}-wire register",
                self.wires
            )));
        }
        Ok(())
    }

    /// Digit of `wire` within the basis index `index`.
    pub fn digit_at(&self, index: usize, wire: u32) -> u32 {
        ((index / self.stride(wire)) % self.d as usize) as u32
    }

    /// All digits of a basis index, wire 1 first.
    pub fn digits_of(&self, index: usize) -> Vec<u32> {
        (1..=self.wires).map(|w| self.digit_at(index, w)).collect()
    }

    /// Basis index of a digit string, wire 1 first.
    pub fn index_of(&self, digits: &[u32]) -> usize {
        debug_assert_eq!(digits.len(), self.wires as usize);
        digits
            .iter()
            .fold(0usize, |acc, &v| acc * self.d as usize + v as usize)
    }
}

/// The shared entangled carrier state: amplitude `1/√d` on every basis string
/// whose `n` digits are all equal, 0 elsewhere.
pub fn make_omega(d: u32, n: u32) -> Result<QuditRegister> {
    check_d(d)?;
    if n < 2 {
        return Err(Error::Domain(format!(
            "entangled state needs n >= 2 wires, got {n}"
        )));
    }
    let len = checked_dim(d, n)?;
    let mut amps = vec![ComplexAmp::ZERO; len];
    // index of the all-r string: r * (d^{n-1} + ... + d + 1)
    let rep_unit = (len - 1) / (d as usize - 1);
    let amp = ComplexAmp::new(1.0 / (d as f64).sqrt(), 0.0);
    for r in 0..d as usize {
        amps[r * rep_unit] = amp;
    }
    Ok(QuditRegister { d, wires: n, amps })
}

/// A one-wire register in `|value⟩` (computational) or `F|value⟩` (Fourier).
pub fn prepare_single(d: u32, basis: Basis, value: u32) -> Result<QuditRegister> {
    check_d(d)?;
    if value >= d {
        return Err(Error::Domain(format!(
            "value {value} out of range for d={d}"
        )));
    }
    match basis {
        Basis::Computational => QuditRegister::basis_state(d, 1, &[value]),
        Basis::Fourier => {
            let scale = 1.0 / (d as f64).sqrt();
            let amps = (0..d)
                .map(|l| root_pow(d, l as u64 * value as u64) * scale)
                .collect();
            Ok(QuditRegister { d, wires: 1, amps })
        }
    }
}

/// Applies `op` to one wire in place: the register is transformed by
/// `I ⊗ … ⊗ op ⊗ … ⊗ I`. Norm is preserved (the operator is unitary).
///
/// Blocks whose amplitudes are all exactly zero are skipped, so cost scales
/// with the support of the state rather than always `d^{wires+1}`.
pub fn apply_local_in_place(reg: &mut QuditRegister, wire: u32, op: &LocalOperator) -> Result<()> {
    reg.check_wire(wire)?;
    if op.d != reg.d {
        return Err(Error::Domain(format!(
            "operator levels {} do not match register levels {}",
            op.d, reg.d
        )));
    }
    let d = reg.d as usize;
    let stride = reg.stride(wire);
    let span = stride * d;
    let mut input = vec![ComplexAmp::ZERO; d];
    let mut base = 0;
    while base < reg.amps.len() {
        for offset in 0..stride {
            let start = base + offset;
            let mut all_zero = true;
            for t in 0..d {
                let a = reg.amps[start + t * stride];
                input[t] = a;
                all_zero &= a == ComplexAmp::ZERO;
            }
            if all_zero {
                continue;
            }
            for u in 0..d {
                let row = &op.entries[u * d..(u + 1) * d];
                let mut acc = ComplexAmp::ZERO;
                for t in 0..d {
                    acc += row[t] * input[t];
                }
                reg.amps[start + u * stride] = acc;
            }
        }
        base += span;
    }
    Ok(())
}

/// Functional form of [`apply_local_in_place`].
pub fn apply_local(reg: &QuditRegister, wire: u32, op: &LocalOperator) -> Result<QuditRegister> {
    let mut out = reg.clone();
    apply_local_in_place(&mut out, wire, op)?;
    Ok(out)
}

/// Appends a fresh ancilla wire in `|0⟩` as the new least significant wire
/// and returns its index.
pub fn extend_with_ancilla(reg: &mut QuditRegister) -> Result<u32> {
    let d = reg.d as usize;
    checked_dim(reg.d, reg.wires + 1)?;
    let mut amps = vec![ComplexAmp::ZERO; reg.amps.len() * d];
    for (i, &a) in reg.amps.iter().enumerate() {
        amps[i * d] = a;
    }
    reg.amps = amps;
    reg.wires += 1;
    Ok(reg.wires)
}

/// The generalized controlled shift `|x⟩|e⟩ → |x⟩|e ⊕ x⟩` between two wires,
/// diagonal in the computational basis of the control.
pub fn apply_controlled_shift(reg: &mut QuditRegister, control: u32, target: u32) -> Result<()> {
    reg.check_wire(control)?;
    reg.check_wire(target)?;
    if control == target {
        return Err(Error::Domain(
            "controlled shift needs distinct wires".into(),
        ));
    }
    let d = reg.d as usize;
    let t_stride = reg.stride(target);
    let mut out = vec![ComplexAmp::ZERO; reg.amps.len()];
    for (idx, &a) in reg.amps.iter().enumerate() {
        if a == ComplexAmp::ZERO {
            continue;
        }
        let x = reg.digit_at(idx, control) as usize;
        let e = reg.digit_at(idx, target) as usize;
        let shifted = (e + x) % d;
        let new_idx = idx + (shifted - e).wrapping_mul(t_stride);
        out[new_idx] = a;
    }
    reg.amps = out;
    Ok(())
}

/// Walks the cumulative distribution and returns the selected branch.
fn sample_branch(probs: &[f64], total: f64, rng: &mut RandomStream) -> Result<usize> {
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Internal(format!(
            "branch probabilities sum to {total}, state corrupted upstream"
        )));
    }
    let threshold = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = None;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if threshold < acc {
            chosen = Some(i);
            break;
        }
    }
    // Float drift can leave the threshold just past the last bucket.
    let pick = chosen.unwrap_or_else(|| {
        probs
            .iter()
            .rposition(|&p| p > 0.0)
            .expect("total near 1 implies a positive branch")
    });
    if probs[pick] <= MIN_BRANCH_PROB {
        return Err(Error::Internal(format!(
            "selected measurement branch has probability {:.3e}",
            probs[pick]
        )));
    }
    Ok(pick)
}

fn collapse_wire(reg: &mut QuditRegister, wire: u32, value: u32, prob: f64) {
    let scale = 1.0 / prob.sqrt();
    let stride = reg.stride(wire);
    let d = reg.d as usize;
    for (idx, a) in reg.amps.iter_mut().enumerate() {
        if (idx / stride) % d == value as usize {
            *a *= scale;
        } else {
            *a = ComplexAmp::ZERO;
        }
    }
}

/// Born-rule measurement of one wire, collapsing the register in place.
///
/// A Fourier-basis measurement projects onto the states `F|r⟩` and reports
/// `r`: it is carried out by rotating the wire with `F†`, measuring in the
/// computational basis, and rotating the collapsed wire back with `F`.
pub fn measure_wire_in_place(
    reg: &mut QuditRegister,
    wire: u32,
    basis: Basis,
    rng: &mut RandomStream,
) -> Result<MeasurementOutcome> {
    reg.check_wire(wire)?;
    let fourier = match basis {
        Basis::Fourier => Some(fourier_op(reg.d)?),
        Basis::Computational => None,
    };
    if let Some(f) = &fourier {
        apply_local_in_place(reg, wire, &f.adjoint())?;
    }
    let d = reg.d as usize;
    let stride = reg.stride(wire);
    let mut probs = vec![0.0f64; d];
    for (idx, a) in reg.amps.iter().enumerate() {
        if *a != ComplexAmp::ZERO {
            probs[(idx / stride) % d] += a.norm_sqr();
        }
    }
    let total: f64 = probs.iter().sum();
    let value = sample_branch(&probs, total, rng)? as u32;
    collapse_wire(reg, wire, value, probs[value as usize]);
    if let Some(f) = &fourier {
        apply_local_in_place(reg, wire, f)?;
    }
    Ok(MeasurementOutcome { value, basis })
}

/// Functional form of [`measure_wire_in_place`]: returns the outcome and the
/// renormalized post-measurement register.
pub fn measure_wire(
    reg: &QuditRegister,
    wire: u32,
    basis: Basis,
    rng: &mut RandomStream,
) -> Result<(MeasurementOutcome, QuditRegister)> {
    let mut out = reg.clone();
    let outcome = measure_wire_in_place(&mut out, wire, basis, rng)?;
    Ok((outcome, out))
}

/// Computational-basis measurement of the last (least significant) wire that
/// also removes the wire, shrinking the register by a factor of d.
///
/// The last wire's digits are contiguous, so both the probability scan and
/// the compaction are streaming passes. Used by hot protocol paths; outcome
/// distribution is identical to `measure_wire_in_place` on the same wire.
pub fn measure_remove_last_wire(reg: &mut QuditRegister, rng: &mut RandomStream) -> Result<u32> {
    if reg.wires < 2 {
        return Err(Error::Domain(
            "cannot remove the only wire of a register".into(),
        ));
    }
    let d = reg.d as usize;
    let mut probs = vec![0.0f64; d];
    for chunk in reg.amps.chunks_exact(d) {
        for (t, a) in chunk.iter().enumerate() {
            if *a != ComplexAmp::ZERO {
                probs[t] += a.norm_sqr();
            }
        }
    }
    let total: f64 = probs.iter().sum();
    let value = sample_branch(&probs, total, rng)?;
    let scale = 1.0 / probs[value].sqrt();
    let new_len = reg.amps.len() / d;
    for i in 0..new_len {
        reg.amps[i] = reg.amps[i * d + value] * scale;
    }
    reg.amps.truncate(new_len);
    reg.wires -= 1;
    Ok(value as u32)
}
