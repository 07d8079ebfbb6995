//! Algebraic invariants of the register simulator.

use proptest::prelude::*;
use qsum_core::qudit::{
    apply_local, apply_local_in_place, fourier_op, make_omega, measure_wire, prepare_single,
    shift_op, Basis, LocalOperator, QuditRegister, INVARIANT_TOL,
};
use qsum_core::rng::stream_from_seed;

#[test]
fn fourier_and_shift_are_unitary_up_to_sixteen_levels() {
    for d in 2..=16u32 {
        assert!(
            fourier_op(d).unwrap().unitarity_defect() <= INVARIANT_TOL,
            "F at d={d}"
        );
        for k in 0..d {
            assert!(
                shift_op(d, k).unwrap().unitarity_defect() <= INVARIANT_TOL,
                "U_{k} at d={d}"
            );
        }
    }
}

#[test]
fn shift_composition_is_addition_modulo_d() {
    for d in 2..=7u32 {
        for k in 0..d {
            for j in 0..d {
                let composed = shift_op(d, k)
                    .unwrap()
                    .compose(&shift_op(d, j).unwrap())
                    .unwrap();
                let direct = shift_op(d, (k + j) % d).unwrap();
                for r in 0..d {
                    for c in 0..d {
                        let diff = (composed.entry(r, c) - direct.entry(r, c)).norm();
                        assert!(diff <= INVARIANT_TOL, "d={d} k={k} j={j}");
                    }
                }
            }
        }
    }
}

#[test]
fn conjugate_bases_are_mutually_unbiased() {
    for d in 2..=7u32 {
        let f = fourier_op(d).unwrap();
        for r in 0..d {
            for s in 0..d {
                let overlap = f.entry(r, s).norm_sqr();
                assert!(
                    (overlap - 1.0 / d as f64).abs() <= INVARIANT_TOL,
                    "|⟨{r}|F|{s}⟩|² at d={d}"
                );
            }
        }
    }
}

#[test]
fn encoded_carrier_support_matches_the_coset_rule() {
    // After (U_k F) on every wire, exactly the strings with
    // Σ(m_i − k_i) ≡ 0 (mod d) carry probability d^{-(n-1)}.
    for d in 2..=4u32 {
        for n in 2..=4u32 {
            let mut columns = vec![vec![0u32; n as usize]];
            // all key columns, enumerated
            loop {
                let mut next = columns.last().unwrap().clone();
                let mut pos = 0;
                loop {
                    if pos == next.len() {
                        break;
                    }
                    next[pos] += 1;
                    if next[pos] < d {
                        break;
                    }
                    next[pos] = 0;
                    pos += 1;
                }
                if pos == next.len() {
                    break;
                }
                columns.push(next);
            }
            let f = fourier_op(d).unwrap();
            for keys in &columns {
                let mut reg = make_omega(d, n).unwrap();
                for wire in 1..=n {
                    let enc = shift_op(d, keys[wire as usize - 1])
                        .unwrap()
                        .compose(&f)
                        .unwrap();
                    apply_local_in_place(&mut reg, wire, &enc).unwrap();
                }
                let expected = 1.0 / (d as f64).powi(n as i32 - 1);
                for idx in 0..reg.len() {
                    let p = reg.amp(idx).norm_sqr();
                    let shifted_sum: u32 = reg
                        .digits_of(idx)
                        .iter()
                        .zip(keys)
                        .map(|(&m, &k)| (m + d - k) % d)
                        .sum();
                    if shifted_sum.is_multiple_of(d) {
                        assert!((p - expected).abs() <= 1e-12, "d={d} n={n} idx={idx}");
                    } else {
                        assert!(p <= 1e-24, "off-coset amplitude at d={d} n={n} idx={idx}");
                    }
                }
            }
        }
    }
}

fn arb_dims() -> impl Strategy<Value = (u32, u32)> {
    (2u32..=5, 1u32..=4)
}

proptest! {
    #[test]
    fn random_op_sequences_preserve_the_norm(
        (d, wires) in arb_dims(),
        ops in prop::collection::vec((0u32..20, 0u32..2), 1..8),
        seed in 0u64..1_000,
    ) {
        let mut reg = if wires == 1 {
            prepare_single(d, Basis::Computational, 0).unwrap()
        } else {
            make_omega(d, wires).unwrap()
        };
        let f = fourier_op(d).unwrap();
        for (pick, kind) in ops {
            let wire = pick % wires + 1;
            let op: LocalOperator = if kind == 0 {
                f.clone()
            } else {
                shift_op(d, pick % d).unwrap()
            };
            apply_local_in_place(&mut reg, wire, &op).unwrap();
            prop_assert!((reg.norm_sqr() - 1.0).abs() <= INVARIANT_TOL);
        }
        // measurement keeps the post-state normalized as well
        let mut rng = stream_from_seed(seed);
        let (_, post) = measure_wire(&reg, 1, Basis::Computational, &mut rng).unwrap();
        prop_assert!((post.norm_sqr() - 1.0).abs() <= INVARIANT_TOL);
    }

    #[test]
    fn measurement_outcomes_follow_the_stated_basis(
        d in 2u32..=7,
        value_pick in 0u32..100,
        fourier in proptest::bool::ANY,
        seed in 0u64..1_000,
    ) {
        let value = value_pick % d;
        let basis = if fourier { Basis::Fourier } else { Basis::Computational };
        let reg = prepare_single(d, basis, value).unwrap();
        let mut rng = stream_from_seed(seed);
        let (outcome, post) = measure_wire(&reg, 1, basis, &mut rng).unwrap();
        prop_assert_eq!(outcome.value, value);
        prop_assert!((post.norm_sqr() - 1.0).abs() <= INVARIANT_TOL);
    }

    #[test]
    fn basis_states_round_trip_through_indices(
        d in 2u32..=5,
        wires in 1u32..=4,
        pick in 0usize..10_000,
    ) {
        let len = (d as usize).pow(wires);
        let index = pick % len;
        let reg = QuditRegister::basis_state(
            d,
            wires,
            &(1..=wires)
                .map(|w| ((index / (d as usize).pow(wires - w)) % d as usize) as u32)
                .collect::<Vec<_>>(),
        )
        .unwrap();
        prop_assert_eq!(reg.amp(index).re, 1.0);
        let digits = reg.digits_of(index);
        prop_assert_eq!(reg.index_of(&digits), index);
    }
}

#[test]
fn applying_identity_after_fourier_adjoint_restores_the_input() {
    let d = 5u32;
    let f = fourier_op(d).unwrap();
    let reg = make_omega(d, 3).unwrap();
    let there = apply_local(&reg, 2, &f).unwrap();
    let back = apply_local(&there, 2, &f.adjoint()).unwrap();
    for idx in 0..reg.len() {
        assert!((back.amp(idx) - reg.amp(idx)).norm() <= 1e-12);
    }
}
