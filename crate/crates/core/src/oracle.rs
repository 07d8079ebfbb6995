//! Independent analytic ground truth for the simulator.
//!
//! The joint outcome distribution of an encoded group is a uniform coset: the
//! combinatorial route here builds it without touching any linear algebra,
//! while [`statevector_distribution`] reaches the same table through the dense
//! simulator so the two implementations check each other. Channel-attack
//! detection probabilities are computed by exhaustively enumerating decoy
//! basis, decoy value and attacker branches in plain complex arithmetic local
//! to this module.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Resolves f64 math in no_std builds; std builds shadow it with the inherent
// methods, so the import sits idle there.
#[allow(unused_imports)]
use num_traits::Float;

use crate::adversary::{AttackStrategy, BasisPolicy};
use crate::error::{Error, Result};
use crate::qudit::{apply_local_in_place, fourier_op, make_omega, shift_op};

/// Probability below which a state-vector amplitude is treated as an exact
/// zero when building a distribution.
const SUPPORT_EPS: f64 = 1e-15;

/// Exact or empirical probability table over joint measurement results
/// `(m_1, …, m_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeDistribution {
    d: u32,
    n: u32,
    probs: BTreeMap<Vec<u32>, f64>,
}

impl OutcomeDistribution {
    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn prob(&self, outcome: &[u32]) -> f64 {
        self.probs.get(outcome).copied().unwrap_or(0.0)
    }

    pub fn support_len(&self) -> usize {
        self.probs.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<u32>, f64)> {
        self.probs.iter().map(|(k, &v)| (k, v))
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }

    /// Marginal distribution of one party's outcome (1-based wire).
    pub fn marginal(&self, wire: u32) -> Vec<f64> {
        let mut out = vec![0.0; self.d as usize];
        for (tuple, p) in self.probs.iter() {
            out[tuple[wire as usize - 1] as usize] += p;
        }
        out
    }

    /// Largest entrywise probability difference over the union of supports.
    pub fn max_entrywise_diff(&self, other: &OutcomeDistribution) -> f64 {
        let mut worst = 0.0f64;
        for (tuple, p) in self.probs.iter() {
            worst = worst.max((p - other.prob(tuple)).abs());
        }
        for (tuple, q) in other.probs.iter() {
            worst = worst.max((q - self.prob(tuple)).abs());
        }
        worst
    }
}

fn check_keys(d: u32, n: u32, keys_column: &[u32]) -> Result<()> {
    if d < 2 {
        return Err(Error::Domain(format!(
            "level count d must be >= 2, got {d}"
        )));
    }
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 wires, got {n}")));
    }
    if keys_column.len() != n as usize {
        return Err(Error::Domain(format!(
            "key column has {} digits, expected {n}",
            keys_column.len()
        )));
    }
    if let Some(bad) = keys_column.iter().find(|&&k| k >= d) {
        return Err(Error::Domain(format!(
            "key digit {bad} out of range for d={d}"
        )));
    }
    Ok(())
}

/// Closed-form joint outcome distribution of one encoded group: probability
/// `d^{−(n−1)}` on every tuple `(l_1 ⊕ k_1, …, l_n ⊕ k_n)` with
/// `Σ l_i ≡ 0 (mod d)`, zero elsewhere. Computed combinatorially, with no
/// state vectors involved.
pub fn exact_distribution(d: u32, n: u32, keys_column: &[u32]) -> Result<OutcomeDistribution> {
    check_keys(d, n, keys_column)?;
    let p = (d as f64).powi(-(n as i32 - 1));
    let mut probs = BTreeMap::new();
    let mut free = vec![0u32; n as usize - 1];
    loop {
        let partial: u32 = free.iter().sum();
        let last = (d - partial % d) % d;
        let mut tuple = Vec::with_capacity(n as usize);
        for (i, &l) in free.iter().enumerate() {
            tuple.push((l + keys_column[i]) % d);
        }
        tuple.push((last + keys_column[n as usize - 1]) % d);
        probs.insert(tuple, p);

        let mut pos = 0;
        loop {
            if pos == free.len() {
                break;
            }
            free[pos] += 1;
            if free[pos] < d {
                break;
            }
            free[pos] = 0;
            pos += 1;
        }
        if pos == free.len() {
            break;
        }
    }
    Ok(OutcomeDistribution { d, n, probs })
}

/// The same distribution read off the dense simulator: prepare the entangled
/// carrier, apply `U_k · F` to every wire, and square the amplitudes. A
/// second, independent route to [`exact_distribution`].
pub fn statevector_distribution(
    d: u32,
    n: u32,
    keys_column: &[u32],
) -> Result<OutcomeDistribution> {
    check_keys(d, n, keys_column)?;
    let mut reg = make_omega(d, n)?;
    let f = fourier_op(d)?;
    for wire in 1..=n {
        let enc = shift_op(d, keys_column[wire as usize - 1])?.compose(&f)?;
        apply_local_in_place(&mut reg, wire, &enc)?;
    }
    let mut probs = BTreeMap::new();
    for idx in 0..reg.len() {
        let p = reg.amp(idx).norm_sqr();
        if p > SUPPORT_EPS {
            probs.insert(reg.digits_of(idx), p);
        }
    }
    Ok(OutcomeDistribution { d, n, probs })
}

// Minimal complex arithmetic for the detection enumerations, kept local so
// this route shares nothing with the simulator.
#[derive(Clone, Copy)]
struct C {
    re: f64,
    im: f64,
}

impl C {
    fn conj_mul(self, other: C) -> C {
        // conj(self) * other
        C {
            re: self.re * other.re + self.im * other.im,
            im: self.re * other.im - self.im * other.re,
        }
    }

    fn add(self, other: C) -> C {
        C {
            re: self.re + other.re,
            im: self.im + other.im,
        }
    }

    fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

/// Amplitudes of the decoy state: `|v⟩` or `F|v⟩`.
fn decoy_amps(d: u32, fourier: bool, v: u32) -> Vec<C> {
    let dd = d as usize;
    if !fourier {
        let mut out = vec![C { re: 0.0, im: 0.0 }; dd];
        out[v as usize] = C { re: 1.0, im: 0.0 };
        out
    } else {
        let scale = 1.0 / (d as f64).sqrt();
        (0..dd)
            .map(|l| {
                let angle =
                    core::f64::consts::TAU * ((l as u64 * v as u64) % d as u64) as f64 / d as f64;
                C {
                    re: angle.cos() * scale,
                    im: angle.sin() * scale,
                }
            })
            .collect()
    }
}

/// `|⟨basis state w | ψ⟩|²` for a measurement in the chosen basis.
fn projection_prob(d: u32, fourier: bool, w: u32, psi: &[C]) -> f64 {
    let basis = decoy_amps(d, fourier, w);
    let mut acc = C { re: 0.0, im: 0.0 };
    for (b, a) in basis.iter().zip(psi) {
        acc = acc.add(b.conj_mul(*a));
    }
    acc.norm_sqr()
}

fn resend_detection(d: u32, policy: BasisPolicy) -> f64 {
    let eve_choices: &[(bool, f64)] = match policy {
        BasisPolicy::Random => &[(false, 0.5), (true, 0.5)],
        BasisPolicy::AlwaysComputational => &[(false, 1.0)],
        BasisPolicy::AlwaysFourier => &[(true, 1.0)],
    };
    let mut detection = 0.0;
    for decoy_fourier in [false, true] {
        for v in 0..d {
            let state = decoy_amps(d, decoy_fourier, v);
            for &(eve_fourier, w_eve) in eve_choices {
                for u in 0..d {
                    let p_eve = projection_prob(d, eve_fourier, u, &state);
                    if p_eve == 0.0 {
                        continue;
                    }
                    let forwarded = decoy_amps(d, eve_fourier, u);
                    for w in 0..d {
                        if w == v {
                            continue;
                        }
                        let p_recv = projection_prob(d, decoy_fourier, w, &forwarded);
                        detection += 0.5 * (1.0 / d as f64) * w_eve * p_eve * p_recv;
                    }
                }
            }
        }
    }
    detection
}

fn probe_detection(d: u32) -> f64 {
    // After the controlled shift the joint state is Σ_l ψ_l |l⟩|l⟩; the
    // recipient's outcome probability is Σ_e |basis_w(e)|²·|ψ_e|².
    let mut detection = 0.0;
    for decoy_fourier in [false, true] {
        for v in 0..d {
            let state = decoy_amps(d, decoy_fourier, v);
            for w in 0..d {
                if w == v {
                    continue;
                }
                let basis = decoy_amps(d, decoy_fourier, w);
                let mut p = 0.0;
                for e in 0..d as usize {
                    p += basis[e].norm_sqr() * state[e].norm_sqr();
                }
                detection += 0.5 * (1.0 / d as f64) * p;
            }
        }
    }
    detection
}

/// Exact per-decoy detection probability of a channel attack, found by
/// enumerating decoy basis, decoy value, attacker branches and recipient
/// outcome. `None` (no attack) and the participant strategies leave decoys
/// untouched, so their detection probability is zero.
pub fn decoy_detection_probability(d: u32, strategy: Option<&AttackStrategy>) -> Result<f64> {
    if d < 2 {
        return Err(Error::Domain(format!(
            "level count d must be >= 2, got {d}"
        )));
    }
    Ok(match strategy {
        None => 0.0,
        Some(AttackStrategy::InterceptResend(policy)) => resend_detection(d, *policy),
        Some(AttackStrategy::MeasureResend) => {
            resend_detection(d, BasisPolicy::AlwaysComputational)
        }
        Some(AttackStrategy::EntangleProbe) => probe_detection(d),
        Some(AttackStrategy::SemiHonestP1) | Some(AttackStrategy::Collusion(_)) => 0.0,
    })
}
