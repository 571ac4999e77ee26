//! Event-camera front end: collect a fixed number of synthetic events and
//! bin them into the normalized histogram frame the accelerator consumes.
//!
//! ```bash
//! cargo run --release --example dvs_histogram
//! ```

use axidma_sim::device::{events_to_frame, synthetic_events};

fn main() {
    let (width, height) = (64u32, 64u32);
    let events = synthetic_events(4096, width, height, 42);
    let frame = events_to_frame(&events, events.len(), width, height).expect("in bounds");
    println!(
        "collected {} events -> {}x{} histogram (count sum {})",
        events.len(),
        width,
        height,
        frame.count_sum()
    );
    let bytes = frame.to_bytes();
    // Coarse ASCII view, 8x8 bins.
    for by in 0..8 {
        let mut line = String::new();
        for bx in 0..8 {
            let mut acc = 0u32;
            for y in 0..8 {
                for x in 0..8 {
                    acc += bytes[((by * 8 + y) * width as usize) + bx * 8 + x] as u32;
                }
            }
            line.push(match acc / 64 {
                0..=31 => ' ',
                32..=63 => '.',
                64..=95 => ':',
                96..=127 => '+',
                _ => '#',
            });
        }
        println!("|{line}|");
    }
}
