#![no_main]
use libfuzzer_sys::fuzz_target;
use streamfirst::format::{model_to_json, parse_model, parse_model_bytes};

fuzz_target!(|data: &[u8]| {
    if let Ok(net) = parse_model_bytes(data) {
        // anything accepted must survive a write/read cycle unchanged
        let text = model_to_json(&net);
        let again = parse_model(&text).expect("re-parse of emitted model");
        assert_eq!(again, net);
    }
});
