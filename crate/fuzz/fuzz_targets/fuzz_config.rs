#![no_main]
use libfuzzer_sys::fuzz_target;
use road_stereo_cli::{Config, Overrides};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = Config::resolve(Some(text), &Overrides::default()) {
        let back = Config::resolve(Some(&cfg.to_kv_text()), &Overrides::default())
            .expect("printed config re-parses");
        assert_eq!(back, cfg);
    }
});
