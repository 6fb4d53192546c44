#![no_main]
use libfuzzer_sys::fuzz_target;
use road_stereo::transform::{read_correspondences, write_correspondences};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(matches) = read_correspondences(text) {
        let back = read_correspondences(&write_correspondences(&matches))
            .expect("canonical encoding parses");
        assert_eq!(back.len(), matches.len());
    }
});
