#![no_main]

use libfuzzer_sys::fuzz_target;

// Layout: 4-byte big-endian length of the image file, the image file, then
// the label file.
fuzz_target!(|data: &[u8]| {
    if data.len() < 4 {
        return;
    }
    let split = u32::from_be_bytes([data[0], data[1], data[2], data[3]]) as usize;
    let rest = &data[4..];
    let split = split.min(rest.len());
    let (images, labels) = rest.split_at(split);
    if let Ok(ds) = darcs::datasets::idx::dataset_from_idx_bytes(images, labels) {
        assert!(ds.num_classes() >= 2);
        assert!(ds.labels().iter().all(|&l| l < ds.num_classes()));
    }
});
