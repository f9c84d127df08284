mod common;

use common::keys;
use keyforge::commitment::{commit, decommit, reconstruct_template, Commitment};
use keyforge::features::{parse_keystroke_log, write_keystroke_log, FeatureVector, KeystrokeEvent};
use keyforge::he::Ciphertext;
use keyforge::spc::{decode, is_codeword, sample_codeword, SpcCode};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn code_strategy() -> impl Strategy<Value = SpcCode> {
    (2u32..=16, 1usize..=6)
        .prop_flat_map(|(d, n)| (Just(d), prop::collection::vec(0..d, n - 1), 1..d))
        .prop_map(|(d, mut l, last)| {
            l.push(last);
            SpcCode::new(d, l).unwrap()
        })
}

proptest! {
    #[test]
    fn decode_commutes_with_codeword_shift(code in code_strategy(), seed in any::<u64>(), raw in prop::collection::vec(any::<u32>(), 6)) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let c = sample_codeword(&code, &mut rng);
        let q = code.modulus() as u32;
        let e: Vec<u32> = raw.iter().take(code.n()).map(|x| x % q).collect();
        let shifted: Vec<u32> = c.symbols.iter().zip(&e).map(|(a, b)| (a + b) % q).collect();
        let de = decode(&e, &code).unwrap();
        let expect: Vec<u32> = c.symbols.iter().zip(&de.symbols).map(|(a, b)| (a + b) % q).collect();
        prop_assert!(is_codeword(&de.symbols, &code));
        prop_assert_eq!(decode(&shifted, &code).unwrap().symbols, expect);
    }

    #[test]
    fn commitment_json_round_trip(code in code_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let q = code.modulus() as u32;
        let x = FeatureVector::new((0..code.n() as u32).map(|i| (i * 37 + seed as u32) % q).collect(), code.d()).unwrap();
        let (com, c) = commit(&x, &code, &mut rng).unwrap();
        let back: Commitment = serde_json::from_str(&serde_json::to_string(&com).unwrap()).unwrap();
        prop_assert_eq!(&back, &com);
        prop_assert_eq!(reconstruct_template(&back, &c), x.values.clone());
        prop_assert!(decommit(&x, &back, b"z").unwrap().is_key());
    }
}

#[test]
fn code_json_rejects_invalid_exponents() {
    let code = SpcCode::new(8, vec![2, 3]).unwrap();
    let text = serde_json::to_string(&code).unwrap();
    assert_eq!(serde_json::from_str::<SpcCode>(&text).unwrap(), code);
    let bad = text.replace("3", "8");
    assert!(serde_json::from_str::<SpcCode>(&bad).is_err());
}

#[test]
fn keystroke_log_round_trip() {
    let events = vec![
        KeystrokeEvent::press("T", 0),
        KeystrokeEvent::press("H", 140),
        KeystrokeEvent::release("T", 170),
        KeystrokeEvent::release("H", 230),
    ];
    let log = parse_keystroke_log(&write_keystroke_log(&events)).unwrap();
    assert_eq!(log.events, events);
    assert!(log.diagnostics.is_empty());
}

#[test]
fn ciphertext_wire_round_trip() {
    let (pk, sk) = keys();
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let c = pk.encrypt(-12345, &mut rng).unwrap();
    let wire = c.to_wire();
    assert_eq!(wire.len(), 4 + pk.ciphertext_len());
    let back = Ciphertext::from_wire(&wire, pk).unwrap();
    assert_eq!(sk.decrypt(&back).unwrap(), -12345);
    assert!(Ciphertext::from_wire(&wire[1..], pk).is_err());
}
