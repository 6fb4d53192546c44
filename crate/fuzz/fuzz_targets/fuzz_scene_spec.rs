#![no_main]
use libfuzzer_sys::fuzz_target;
use road_stereo::kv::KvFile;
use road_stereo::synth::SceneSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(kv) = KvFile::parse(text) else {
        return;
    };
    // Parse and validate only; rendering is not a decode path.
    if let Ok(spec) = SceneSpec::from_kv(&kv) {
        let back = SceneSpec::from_kv(&KvFile::parse(&spec.to_kv_text()).unwrap()).unwrap();
        assert_eq!(back, spec);
    }
});
