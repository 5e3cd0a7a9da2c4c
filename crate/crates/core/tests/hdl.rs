mod common;

use std::path::PathBuf;

use common::decode_rtl;
use gpiodac::hdlgen::{generate_constraints, generate_dac, generate_staircase, HdlSpec};
use gpiodac::Encoding;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compares against the stored file, or rewrites it when `GPIODAC_BLESS` is set.
fn check_golden(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("GPIODAC_BLESS").is_some() {
        std::fs::create_dir_all(golden_dir()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden file {}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from golden copy");
}

fn spec(n: u32, encoding: Encoding) -> HdlSpec {
    HdlSpec::new(n, encoding, &format!("gpio_dac{n}")).unwrap()
}

#[test]
fn four_bit_artifacts_match_golden_files() {
    for (encoding, tag) in [
        (Encoding::Binary, "binary"),
        (Encoding::Thermometer, "thermometer"),
    ] {
        let s = spec(4, encoding);
        let dac = generate_dac(&s).unwrap();
        check_golden(&format!("gpio_dac4_{tag}.v"), &dac.rtl_text);
        check_golden(&format!("gpio_dac4_{tag}.pcf"), &dac.constraints_text);
        check_golden(&format!("gpio_dac4_{tag}.json"), &dac.manifest.to_json());
        let stair = generate_staircase(&s).unwrap();
        check_golden(&format!("gpio_dac4_{tag}_staircase.v"), &stair.rtl_text);
    }
}

#[test]
fn decoded_rtl_agrees_with_simulator_pin_map() {
    for n in 1..=5 {
        for encoding in [Encoding::Binary, Encoding::Thermometer] {
            let rtl = generate_dac(&spec(n, encoding)).unwrap().rtl_text;
            for code in 0..(1u32 << n) {
                let high = decode_rtl(&rtl, n, code);
                let expected: Vec<u32> = (0..(1u32 << n) - 1)
                    .filter(|&p| encoding.is_asserted(p, code))
                    .collect();
                assert_eq!(high, expected, "n {n} {encoding:?} code {code}");
                assert_eq!(high.len() as u32, code);
            }
        }
    }
}

#[test]
fn binary_weighting_of_example_code() {
    let rtl = generate_dac(&spec(4, Encoding::Binary)).unwrap().rtl_text;
    let high = decode_rtl(&rtl, 4, 0b1010);
    assert_eq!(high, [1, 2, 7, 8, 9, 10, 11, 12, 13, 14]);
    let therm = generate_dac(&spec(4, Encoding::Thermometer))
        .unwrap()
        .rtl_text;
    assert_eq!(decode_rtl(&therm, 4, 5), [0, 1, 2, 3, 4]);
}

#[test]
fn thermometer_decode_is_nested() {
    for n in 1..=5 {
        let rtl = generate_dac(&spec(n, Encoding::Thermometer))
            .unwrap()
            .rtl_text;
        for code in 0..(1u32 << n) - 1 {
            let lower = decode_rtl(&rtl, n, code);
            let upper = decode_rtl(&rtl, n, code + 1);
            assert!(lower.iter().all(|p| upper.contains(p)), "n {n} code {code}");
        }
    }
}

#[test]
fn text_hygiene() {
    for n in 1..=5 {
        for encoding in [Encoding::Binary, Encoding::Thermometer] {
            let s = spec(n, encoding);
            let a = generate_staircase(&s).unwrap();
            for text in [&a.rtl_text, &a.constraints_text] {
                assert!(text.ends_with('\n') && !text.ends_with("\n\n"));
                assert!(!text.contains('\r'));
            }
            // Every constrained port is declared by the module.
            for line in a.constraints_text.lines() {
                let port = line.split_whitespace().nth(1).unwrap();
                let base = port.split('[').next().unwrap();
                assert!(
                    a.rtl_text.contains(&format!(" {base}\n"))
                        || a.rtl_text.contains(&format!(" {base},\n"))
                );
            }
            assert_eq!(
                generate_constraints(&s).unwrap().lines().count() as u32,
                s.pin_count() + 1
            );
            assert_eq!(generate_staircase(&s).unwrap().rtl_text, a.rtl_text);
        }
    }
}
