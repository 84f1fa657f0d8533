//! Build bags from IDX glyph files, the format MNIST ships in. Pass the
//! image and label files, or run without arguments to round-trip the
//! procedural glyphs through IDX first.
//!
//! ```text
//! cargo run --release --example idx_glyphs -- train-images-idx3-ubyte train-labels-idx1-ubyte
//! ```

use patchmil::{generate_bag, idx, procedural_glyphs, seeds, Layout, SynthConfig};

fn main() -> patchmil::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let glyphs = match (args.first(), args.get(1)) {
        (Some(images), Some(labels)) => idx::load_idx(images, labels)?,
        _ => {
            let (images, labels) = idx::encode_idx(&procedural_glyphs(0));
            println!("encoded {} + {} bytes of IDX", images.len(), labels.len());
            idx::parse_idx(&images, &labels)?
        }
    };
    let mut per_class = [0usize; 10];
    for &c in &glyphs.classes {
        per_class[c as usize] += 1;
    }
    println!(
        "{} glyphs of {}px, per class {per_class:?}",
        glyphs.len(),
        glyphs.glyph_size
    );

    let cfg = SynthConfig::desk(Layout::Clustered);
    let bag = generate_bag(&cfg, &glyphs, 1, "idx-demo", &mut seeds::stream(1, &[]))?;
    let mask = bag.truth_mask.as_ref().unwrap();
    println!(
        "bag {}: {} ink pixels, {} target pixels",
        bag.id,
        bag.pixels.iter().filter(|&&v| v > 0.0).count(),
        mask.iter().filter(|&&v| v == 1).count()
    );
    Ok(())
}
