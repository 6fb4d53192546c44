#![no_main]
use libfuzzer_sys::fuzz_target;
use road_stereo::costs::CostVolume;

fuzz_target!(|data: &[u8]| {
    if let Ok(volume) = CostVolume::read_dump(data) {
        let bytes = volume.write_dump();
        let back = CostVolume::read_dump(&bytes).expect("canonical encoding parses");
        assert_eq!(back.write_dump(), bytes);
    }
});
