#![no_main]
use libfuzzer_sys::fuzz_target;
use road_stereo::pnm::{read_pfm, write_pfm};

fuzz_target!(|data: &[u8]| {
    if let Ok(map) = read_pfm(data) {
        let bytes = write_pfm(&map);
        let back = read_pfm(&bytes).expect("canonical encoding parses");
        // Payload words survive bit-exactly through the canonical form.
        assert_eq!(write_pfm(&back), bytes);
    }
});
