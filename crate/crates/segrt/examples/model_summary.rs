//! Prints the network structure, parameter census, and the size of a
//! serialized weight file.
//!
//! ```text
//! cargo run --release --example model_summary
//! ```

use segrt::weights::encode_weights;
use segrt::{Result, SegModel};

fn main() -> Result<()> {
    let model: SegModel<f32> = SegModel::new(120, 160)?;

    println!("{:<22}  {:<12} {:>7}", "layer", "output", "params");
    for row in model.layer_table() {
        let output = format!(
            "{}x{}x{}",
            row.output.height, row.output.width, row.output.channels
        );
        println!("{:<22}  {:<12} {:>7}", row.name, output, row.trainable);
    }

    let counts = model.count_parameters();
    println!();
    println!("trainable parameters:     {}", counts.trainable);
    println!("running statistics:       {}", counts.running_stats);

    let mut infer = model.clone();
    infer.set_mode(segrt::Mode::Infer);
    let folded = infer.prepare_inference()?;
    println!(
        "after batch-norm folding: {}",
        folded.count_parameters().trainable
    );

    let bytes = encode_weights(&model)?;
    println!("serialized weight file:   {} bytes", bytes.len());
    Ok(())
}
