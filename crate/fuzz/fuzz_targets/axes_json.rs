#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(axes) = darcs::matrix::MatrixAxes::from_json_str(text) {
        if axes.size() <= 4096 {
            assert_eq!(axes.expand(&darcs::RunConfig::default()).len(), axes.size());
        }
    }
});
