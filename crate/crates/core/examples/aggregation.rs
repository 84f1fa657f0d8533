//! Max and top-k pooling of patch scores, and where the bag loss sends its
//! gradient.

use patchmil::{aggregate_max, aggregate_topk, bag_loss_and_grads};

fn main() -> patchmil::Result<()> {
    let scores = [0.12, 0.81, 0.33, 0.78, 0.05, 0.64];
    println!("patch scores {scores:?}");

    for (name, pred) in [
        ("max", aggregate_max(&scores)?),
        ("top-3", aggregate_topk(&scores, 3)?),
        ("top-10 (clipped to 6)", aggregate_topk(&scores, 10)?),
    ] {
        println!("\n{name}: bag score {:.4}", pred.score);
        for label in [1, 0] {
            let (loss, grads) = bag_loss_and_grads(&pred, label);
            let routed: Vec<String> = grads
                .iter()
                .enumerate()
                .filter(|(_, g)| **g != 0.0)
                .map(|(i, g)| format!("patch {i}: {g:+.4}"))
                .collect();
            println!(
                "  label {label}: loss {loss:.4}, dL/ds {}",
                routed.join(", ")
            );
        }
    }
    Ok(())
}
