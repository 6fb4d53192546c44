#![no_main]
use libfuzzer_sys::fuzz_target;
use road_stereo::kv::KvFile;
use road_stereo::transform::RoadModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(kv) = KvFile::parse(text) else {
        return;
    };
    if let Ok(model) = RoadModel::from_kv(&kv) {
        let back = RoadModel::from_kv(&KvFile::parse(&model.to_kv_text()).unwrap()).unwrap();
        assert_eq!(back.alpha0.to_bits(), model.alpha0.to_bits());
        assert_eq!(back.alpha1.to_bits(), model.alpha1.to_bits());
        assert_eq!(back.delta.to_bits(), model.delta.to_bits());
    }
});
