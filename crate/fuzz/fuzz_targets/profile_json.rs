#![no_main]
use libfuzzer_sys::fuzz_target;
use streamfirst::format::{parse_profile, parse_profile_bytes, profile_to_json};

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = parse_profile_bytes(data) {
        assert_eq!(parse_profile(&profile_to_json(&p)).unwrap(), p);
    }
});
