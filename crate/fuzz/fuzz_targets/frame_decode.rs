#![no_main]
use libfuzzer_sys::fuzz_target;
use roadside_teacher::pointcloud::{decode_frame, encode_frame};

fuzz_target!(|data: &[u8]| {
    let Some(points) = decode_frame(data) else {
        assert_ne!(data.len() % 16, 0);
        return;
    };
    assert_eq!(points.len() * 16, data.len());
    // Decoding normalizes no-return records, so one round trip is a fixed point.
    let again = decode_frame(&encode_frame(&points)).unwrap();
    assert_eq!(again, points);
});
