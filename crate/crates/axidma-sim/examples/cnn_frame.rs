//! Frame timing of the bundled five-layer accelerator workload under the
//! calibrated configuration, for all three driver strategies.
//!
//! ```bash
//! cargo run --release --example cnn_frame
//! ```

use axidma_sim::bench::run_cnn_frame;
use axidma_sim::validate::{roshambo_like, synthetic_input_frame, CALIBRATED_CONF};
use axidma_sim::{BufferScheme, DriverKind, PartitionMode, SimConfig};

fn main() {
    let cfg = SimConfig::parse(CALIBRATED_CONF).expect("calibrated config");
    let network = roshambo_like();
    let input = synthetic_input_frame(&network);
    println!("network {} ({} layers)", network.name, network.layers().len());
    for (i, layer) in network.layers().iter().enumerate() {
        println!(
            "  layer {}: {layer}  tx {} B  rx {} B  {} MACs",
            i + 1,
            layer.tx_bytes(),
            layer.output_bytes(),
            layer.macs_total()
        );
    }
    println!();
    for driver in DriverKind::ALL {
        let report = run_cnn_frame(
            &cfg,
            &network,
            &input,
            driver,
            BufferScheme::Single,
            PartitionMode::Unique,
        )
        .expect("frame");
        println!(
            "{driver:<17} frame {:8.3} ms   avg tx {:.4} us/B   avg rx {:.4} us/B   [{}]",
            report.frame_ms(),
            report.avg_tx_us_per_byte(),
            report.avg_rx_us_per_byte(),
            report.outcome
        );
    }
}
