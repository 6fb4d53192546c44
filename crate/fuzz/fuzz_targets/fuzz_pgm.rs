#![no_main]
use libfuzzer_sys::fuzz_target;
use road_stereo::pnm::{read_pgm, write_pgm};

fuzz_target!(|data: &[u8]| {
    // Must never panic; accepted inputs must survive a canonical round trip.
    if let Ok(image) = read_pgm(data) {
        let canonical = write_pgm(&image);
        let back = read_pgm(&canonical).expect("canonical encoding parses");
        assert_eq!(back, image);
    }
});
