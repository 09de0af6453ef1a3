#![no_main]
use libfuzzer_sys::fuzz_target;
use roadside_teacher::background::BackgroundModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = BackgroundModel::decode(data) {
        assert_eq!(model.encode(), data);
    }
});
