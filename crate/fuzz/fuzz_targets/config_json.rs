#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = darcs::RunConfig::from_json_str(text) {
        // Anything accepted must survive its own echo.
        let again = darcs::RunConfig::from_value(cfg.to_json_value(), &[]).expect("echo reparses");
        assert_eq!(cfg, again);
    }
});
