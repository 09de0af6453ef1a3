#![no_main]
use libfuzzer_sys::fuzz_target;
use roadside_teacher::simulator::SceneSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(spec) = SceneSpec::from_toml_str(text) {
        assert_eq!(SceneSpec::from_toml_str(&spec.to_toml_string()).unwrap(), spec);
    }
});
