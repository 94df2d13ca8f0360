#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = darcs::datasets::parse_idx_images(data) {
        assert_eq!(img.pixels.len(), img.count * img.rows * img.cols);
        assert!(img.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
    }
});
