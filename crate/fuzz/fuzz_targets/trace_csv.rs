#![no_main]
use libfuzzer_sys::fuzz_target;
use streamfirst::Trace;

fuzz_target!(|data: &[u8]| {
    if let Ok(trace) = Trace::from_csv(data) {
        assert!(trace.rows.windows(2).all(|w| w[0].t < w[1].t));
        let back = Trace::from_csv(trace.to_csv_string().as_bytes()).unwrap();
        assert_eq!(back, trace);
    }
});
