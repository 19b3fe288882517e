// Generates a short synthetic baseline, floods it with DoS frames and writes
// both captures as normalized CSV, then reads one back.

use rxads::can_io::{self, inject_dos, inject_fuzzy, synth_baseline, CaptureFormat, FrameLabel, IdSpace, LoadOptions, SynthConfig};

pub fn run_example() {
    let baseline = synth_baseline(2.0, 42, &SynthConfig::default());
    let dos = inject_dos(&baseline, 5000.0, 43);
    let fuzzy = inject_fuzzy(&baseline, 2000.0, IdSpace::STANDARD, 44);

    let injected = |frames: &[can_io::CanFrame]| frames.iter().filter(|f| f.label == FrameLabel::Injected).count();
    println!("baseline: {} frames", baseline.len());
    println!("dos:      {} frames ({} injected)", dos.len(), injected(&dos));
    println!("fuzzy:    {} frames ({} injected)", fuzzy.len(), injected(&fuzzy));

    let dir = std::env::temp_dir().join(format!("rxads_synth_capture_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("dos.csv");
    can_io::save_normalized_csv(&path, &dos).unwrap();
    let (back, meta) = can_io::load_capture(&path, CaptureFormat::Normalized, LoadOptions::default()).unwrap();
    assert_eq!(back, dos);
    println!("round trip through {}: {} frames, {:.3} s", path.display(), meta.frame_count, meta.time_span);
    std::fs::remove_dir_all(&dir).unwrap();
}

fn main() {
    run_example();
}
