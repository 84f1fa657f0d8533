//! Train briefly, then slide the classifier over a positive test bag and
//! save the score map next to the bag itself.

use patchmil::export::write_map;
use patchmil::{experiment, harness, pgm, ExperimentConfig, Layout, Strategy};

fn main() -> patchmil::Result<()> {
    let mut cfg = ExperimentConfig::desk(Layout::Clustered);
    cfg.strategy = Strategy::Uniform;
    let data = experiment::load_data(&cfg)?;
    let report = experiment::run_on(&cfg, &data)?;
    println!(
        "trained {} epochs, test accuracy {:.3}",
        cfg.epochs, report.test_acc
    );

    let bag = data
        .test
        .iter()
        .find(|b| b.is_positive())
        .expect("a positive bag");
    let map = harness::probability_map(&report.state, bag, cfg.patch_size, 4)?;
    let c = map.argmax;
    let (r, col) = c.center();
    println!(
        "{}x{} windows, best window at ({}, {}) score {:.3}, center on target: {}",
        map.rows,
        map.cols,
        c.row,
        c.col,
        map.values.iter().cloned().fold(0.0, f64::max),
        bag.in_truth(r as usize, col as usize)
    );

    write_map("map.pgm", &map)?;
    let image = pgm::GrayImage {
        width: bag.width,
        height: bag.height,
        data: bag
            .pixels
            .iter()
            .map(|&v| pgm::intensity_to_byte(v as f64))
            .collect(),
    };
    pgm::write("bag.pgm", &image)?;
    println!("wrote map.pgm and bag.pgm");
    Ok(())
}
