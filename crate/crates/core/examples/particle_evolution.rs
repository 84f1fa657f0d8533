//! Watch Monte-Carlo particles gather on the target glyphs of one bag when
//! the scorer already knows where they are.
//!
//! The scorer here is the fraction of the patch covered by the truth mask,
//! so no training is involved: only the sampler moves.

use patchmil::samplers::TRACE_HEADER;
use patchmil::{generate_bag, mc_init, mc_step, procedural_glyphs, seeds, MCConfig, Patch};
use patchmil::{Layout, SynthConfig};

fn main() -> patchmil::Result<()> {
    let cfg = SynthConfig::desk(Layout::Sparse);
    let glyphs = procedural_glyphs(0);
    let bag = generate_bag(&cfg, &glyphs, 1, "demo", &mut seeds::stream(7, &[1]))?;
    let patch = 32;
    let mc = MCConfig::with_particles(64, patch);

    let coverage = |p: &Patch| {
        let c = p.coord;
        let hits: usize = (c.row..c.row + c.size)
            .flat_map(|r| (c.col..c.col + c.size).map(move |col| (r, col)))
            .filter(|&(r, col)| bag.in_truth(r, col))
            .count();
        hits as f64 / (c.size * c.size) as f64
    };

    let mut rng = seeds::stream(7, &[2]);
    let mut ps = mc_init(bag.height, bag.width, patch, &mc, bag.id.clone(), &mut rng);
    let mut trace = String::new();
    println!("step  mean coverage  particles on a target");
    for step in 0..12 {
        let out = mc_step(ps, &coverage, &mc, &mut rng, &bag, patch)?;
        let scored = &out.scored.particles;
        let mean = scored.iter().map(|p| p.raw_score.unwrap()).sum::<f64>() / scored.len() as f64;
        let on = scored
            .iter()
            .filter(|p| bag.in_truth(p.row as usize, p.col as usize))
            .count();
        println!("{step:>4}  {mean:>13.3}  {on:>3}/{}", scored.len());
        out.scored.trace_rows(step, &mut trace);
        ps = out.particles;
    }
    std::fs::write("particles.csv", format!("{TRACE_HEADER}\n{trace}"))
        .map_err(|e| patchmil::Error::io("particles.csv", e))?;
    println!("trace written to particles.csv");
    Ok(())
}
