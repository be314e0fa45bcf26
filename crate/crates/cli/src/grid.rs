use std::path::Path;

use image::{GrayImage, Luma};
use ucdmt::data::{extract_valid_slices, DatasetManifest};
use ucdmt::inference::TranslatedVolume;
use ucdmt::{Error, ModalityCode};

fn to_byte(v: f32) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round()) as u8
}

fn read_f32(path: &Path) -> Result<Vec<f32>, Error> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
}

/// One row per retained slice: the input, then an (output, ground truth)
/// pair for every translated modality.
pub fn write_translation_grid(
    path: &Path,
    manifest: &DatasetManifest,
    subject: &str,
    m_x: &ModalityCode,
    outputs: &[TranslatedVolume],
) -> Result<(), Error> {
    let record = manifest.subject(subject)?;
    let slices = extract_valid_slices(&manifest.load_subject(record)?, manifest.min_brain_pixels)?;
    let [h, w, _] = record.shape;
    let translated: Vec<(usize, Vec<f32>)> = outputs
        .iter()
        .map(|o| {
            let target = ModalityCode::from_name(&o.provenance.m_y, manifest.m)?.index();
            Ok((target, read_f32(&o.volume_path)?))
        })
        .collect::<Result<_, Error>>()?;
    let columns = 1 + 2 * translated.len();
    let mut img = GrayImage::new((columns * w) as u32, (slices.len().max(1) * h) as u32);
    let mut paste = |row: usize, col: usize, pixels: &[f32]| {
        for y in 0..h {
            for x in 0..w {
                img.put_pixel((col * w + x) as u32, (row * h + y) as u32, Luma([to_byte(pixels[y * w + x])]));
            }
        }
    };
    for (row, slice) in slices.iter().enumerate() {
        paste(row, 0, slice.image(m_x.index()));
        for (k, (target, data)) in translated.iter().enumerate() {
            paste(row, 1 + 2 * k, &data[row * h * w..(row + 1) * h * w]);
            paste(row, 2 + 2 * k, slice.image(*target));
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io { path: parent.to_path_buf(), source: e })?;
    }
    img.save(path).map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display())))
}
