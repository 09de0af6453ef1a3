#![no_main]
use libfuzzer_sys::fuzz_target;
use roadside_teacher::pointcloud::{parse_labels, render_labels, LabelSource};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(labels) = parse_labels(text, LabelSource::External) else {
        return;
    };
    let rendered = render_labels(&labels);
    if let Ok(reparsed) = parse_labels(&rendered, LabelSource::External) {
        assert_eq!(render_labels(&reparsed), rendered);
    }
});
