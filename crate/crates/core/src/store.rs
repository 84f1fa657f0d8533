//! On-disk dataset layout: one `P5` greymap per bag, an optional
//! `<id>.mask.pgm` truth mask (0 or 255), and `manifest.csv` with the
//! header `id,label,split`.

use std::fmt::Write as _;
use std::path::Path;

use crate::bag::ImageBag;
use crate::error::{Error, Result};
use crate::pgm::{self, GrayImage};
use crate::synth::Dataset;

pub const MANIFEST: &str = "manifest.csv";
pub const MANIFEST_HEADER: &str = "id,label,split";

fn bag_image(bag: &ImageBag) -> GrayImage {
    GrayImage {
        width: bag.width,
        height: bag.height,
        data: bag
            .pixels
            .iter()
            .map(|&v| pgm::intensity_to_byte(v as f64))
            .collect(),
    }
}

pub fn write_dataset(dir: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = format!("{MANIFEST_HEADER}\n");
    for (split, bags) in [("train", &data.train), ("test", &data.test)] {
        for bag in bags.iter() {
            pgm::write(dir.join(format!("{}.pgm", bag.id)), &bag_image(bag))?;
            if let Some(mask) = &bag.truth_mask {
                let img = GrayImage {
                    width: bag.width,
                    height: bag.height,
                    data: mask.iter().map(|&m| if m != 0 { 255 } else { 0 }).collect(),
                };
                pgm::write(dir.join(format!("{}.mask.pgm", bag.id)), &img)?;
            }
            let _ = writeln!(manifest, "{},{},{split}", bag.id, bag.label);
        }
    }
    let path = dir.join(MANIFEST);
    std::fs::write(&path, manifest).map_err(|e| Error::io(path, e))
}

pub fn read_bag(dir: &Path, id: &str, label: u8) -> Result<ImageBag> {
    let img = pgm::read(dir.join(format!("{id}.pgm")))?;
    let pixels = img
        .data
        .iter()
        .map(|&b| pgm::byte_to_intensity(b))
        .collect();
    let bag = ImageBag::new(id, img.height, img.width, pixels, label)?;
    let mask_path = dir.join(format!("{id}.mask.pgm"));
    if mask_path.exists() {
        let mask = pgm::read(&mask_path)?;
        bag.with_truth_mask(mask.data.iter().map(|&b| u8::from(b != 0)).collect())
    } else {
        Ok(bag)
    }
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::Format {
            offset: 0,
            msg: format!("{} must start with `{MANIFEST_HEADER}`", path.display()),
        });
    }
    let mut data = Dataset {
        train: Vec::new(),
        test: Vec::new(),
    };
    let mut offset = MANIFEST_HEADER.len() + 1;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |msg: &str| Error::Format {
            offset,
            msg: format!("manifest row `{line}`: {msg}"),
        };
        let [id, label, split] = fields[..] else {
            return Err(bad("expected 3 fields"));
        };
        let label: u8 = label.parse().map_err(|_| bad("label is not 0 or 1"))?;
        let bag = read_bag(dir, id, label)?;
        match split {
            "train" => data.train.push(bag),
            "test" => data.test.push(bag),
            _ => return Err(bad("split must be train or test")),
        }
        offset += line.len() + 1;
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, procedural_glyphs, Layout, SynthConfig};

    #[test]
    fn dataset_round_trips_through_directory() {
        let cfg = SynthConfig {
            n_train: 3,
            n_test: 2,
            ..SynthConfig::desk(Layout::Sparse)
        };
        let data = generate_dataset(&cfg, &procedural_glyphs(0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &data).unwrap();
        let manifest = std::fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
        assert!(manifest.starts_with("id,label,split\ntrain-00000,1,train\n"));
        assert_eq!(read_dataset(dir.path()).unwrap(), data);
    }

    #[test]
    fn bad_manifest_header() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(MANIFEST), "name,y\n").unwrap();
        assert!(matches!(
            read_dataset(dir.path()),
            Err(Error::Format { offset: 0, .. })
        ));
    }
}
