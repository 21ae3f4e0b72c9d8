//! Binary weight snapshots.
//!
//! Layout (all integers little-endian, all floats IEEE-754 `f32` LE):
//!
//! ```text
//! header   magic "SGRT" | u32 version (=1) | u32 input_height |
//!          u32 input_width | u32 class_count (=5) | u32 record_count
//! records  one per execution-plan step, in order:
//!            u8 tag  1=conv  2=skip save  3=up2x  4=concat skip
//!            conv body: u32 in_channels | u32 out_channels | u32 stride |
//!              depthwise (9*ci) | pointwise (ci*co) | bias (co) |
//!              gamma (co) | beta (co) | running_mean (co) | running_var (co)
//!            other tags carry no body
//! trailer  u32 CRC-32 (IEEE) of the records region
//! ```
//!
//! The reader validates in this order: magic, version, header fields,
//! record-by-record structure against the canonical plan (reporting
//! truncation at the exact offset it bites), trailing-byte check, checksum.
//! Folded models cannot be saved — folding discards the batch norms this
//! format records — so fold *after* loading, never before saving.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Mode, SegModel, Step, CLASS_CHANNELS};

/// First four bytes of every weight file.
pub const WEIGHT_MAGIC: [u8; 4] = *b"SGRT";
/// The single format version this build reads and writes.
pub const WEIGHT_VERSION: u32 = 1;

const TAG_CONV: u8 = 1;
const TAG_SAVE_SKIP: u8 = 2;
const TAG_UP2X: u8 = 3;
const TAG_CONCAT: u8 = 4;

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes a model to the weight-file byte format.
///
/// # Errors
/// Errors if the model has been folded (its batch norms are gone).
pub fn encode_weights(model: &SegModel<f32>) -> Result<Vec<u8>> {
    if model.is_folded() {
        return Err(Error::Precondition(
            "cannot save a folded model: batch norms were baked into the convolutions; \
             save before prepare_inference"
                .into(),
        ));
    }
    let shape = model.input_shape();
    let mut out = Vec::new();
    out.extend_from_slice(&WEIGHT_MAGIC);
    push_u32(&mut out, WEIGHT_VERSION);
    push_u32(&mut out, shape.height as u32);
    push_u32(&mut out, shape.width as u32);
    push_u32(&mut out, CLASS_CHANNELS as u32);
    push_u32(&mut out, model.plan().len() as u32);
    let record_start = out.len();
    for step in model.plan() {
        match step {
            Step::Conv(i) => {
                let b = &model.blocks()[*i];
                out.push(TAG_CONV);
                push_u32(&mut out, b.conv.in_channels() as u32);
                push_u32(&mut out, b.conv.out_channels() as u32);
                push_u32(&mut out, b.conv.stride() as u32);
                push_f32s(&mut out, b.conv.depthwise.data());
                push_f32s(&mut out, &b.conv.pointwise);
                push_f32s(&mut out, &b.conv.bias);
                let n = b.norm.as_ref().expect("unfolded model has batch norms");
                push_f32s(&mut out, &n.gamma);
                push_f32s(&mut out, &n.beta);
                push_f32s(&mut out, &n.running_mean);
                push_f32s(&mut out, &n.running_var);
            }
            Step::SaveSkip => out.push(TAG_SAVE_SKIP),
            Step::Up2x => out.push(TAG_UP2X),
            Step::ConcatSkip => out.push(TAG_CONCAT),
        }
    }
    let crc = crc32fast::hash(&out[record_start..]);
    push_u32(&mut out, crc);
    Ok(out)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let remaining = self.data.len() - self.pos;
        if remaining < n {
            return Err(Error::WeightTruncated {
                offset: self.data.len(),
                needed: n - remaining,
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn read_u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn read_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn read_f32s(&mut self, dst: &mut [f32]) -> Result<()> {
        let raw = self.take(dst.len() * 4)?;
        for (d, chunk) in dst.iter_mut().zip(raw.chunks_exact(4)) {
            *d = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(())
    }
}

/// Parses weight-file bytes back into a model (in infer mode).
///
/// # Errors
/// [`Error::WeightMagic`], [`Error::WeightVersion`],
/// [`Error::WeightTruncated`], [`Error::WeightStructure`], or
/// [`Error::WeightChecksum`], depending on what is wrong.
pub fn decode_weights(bytes: &[u8]) -> Result<SegModel<f32>> {
    let mut cur = Cursor { data: bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
    if magic != WEIGHT_MAGIC {
        return Err(Error::WeightMagic { found: magic });
    }
    let version = cur.read_u32()?;
    if version != WEIGHT_VERSION {
        return Err(Error::WeightVersion {
            found: version,
            supported: WEIGHT_VERSION,
        });
    }
    let height = cur.read_u32()? as usize;
    let width = cur.read_u32()? as usize;
    let classes = cur.read_u32()? as usize;
    if classes != CLASS_CHANNELS {
        return Err(Error::WeightStructure(format!(
            "file declares {classes} class channels, this build has {CLASS_CHANNELS}"
        )));
    }
    let record_count = cur.read_u32()? as usize;

    let mut model = SegModel::new(height, width).map_err(|e| {
        Error::WeightStructure(format!("unusable input resolution {height}x{width}: {e}"))
    })?;
    let plan = model.plan().to_vec();
    if record_count != plan.len() {
        return Err(Error::WeightStructure(format!(
            "file declares {record_count} records, the layer stack has {}",
            plan.len()
        )));
    }

    let record_start = cur.pos;
    for (step_index, step) in plan.iter().enumerate() {
        let tag = cur.read_u8()?;
        let expected_tag = match step {
            Step::Conv(_) => TAG_CONV,
            Step::SaveSkip => TAG_SAVE_SKIP,
            Step::Up2x => TAG_UP2X,
            Step::ConcatSkip => TAG_CONCAT,
        };
        if tag != expected_tag {
            return Err(Error::WeightStructure(format!(
                "record {step_index}: expected tag {expected_tag}, found {tag}"
            )));
        }
        if let Step::Conv(i) = step {
            let ci = cur.read_u32()? as usize;
            let co = cur.read_u32()? as usize;
            let stride = cur.read_u32()? as usize;
            let block = &mut model.blocks_mut()[*i];
            if ci != block.conv.in_channels()
                || co != block.conv.out_channels()
                || stride != block.conv.stride()
            {
                return Err(Error::WeightStructure(format!(
                    "conv layer {i}: file has {ci}->{co} stride {stride}, expected {}->{} stride {}",
                    block.conv.in_channels(),
                    block.conv.out_channels(),
                    block.conv.stride()
                )));
            }
            cur.read_f32s(block.conv.depthwise.data_mut())?;
            cur.read_f32s(&mut block.conv.pointwise)?;
            cur.read_f32s(&mut block.conv.bias)?;
            let n = block.norm.as_mut().expect("fresh model has batch norms");
            cur.read_f32s(&mut n.gamma)?;
            cur.read_f32s(&mut n.beta)?;
            cur.read_f32s(&mut n.running_mean)?;
            cur.read_f32s(&mut n.running_var)?;
        }
    }
    let record_end = cur.pos;
    let stored = cur.read_u32()?;
    if cur.pos != bytes.len() {
        return Err(Error::WeightStructure(format!(
            "{} trailing byte(s) after checksum",
            bytes.len() - cur.pos
        )));
    }
    let computed = crc32fast::hash(&bytes[record_start..record_end]);
    if stored != computed {
        return Err(Error::WeightChecksum { stored, computed });
    }
    model.set_mode(Mode::Infer);
    Ok(model)
}

/// Writes a model's weights to `path`.
pub fn save_weights(model: &SegModel<f32>, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_weights(model)?;
    std::fs::write(path.as_ref(), bytes).map_err(|e| Error::io(path.as_ref(), e))
}

/// Reads a weight file back into a model (in infer mode).
pub fn load_weights(path: impl AsRef<Path>) -> Result<SegModel<f32>> {
    let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    decode_weights(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BLOCK_SPECS;
    use crate::tensor::{Batch, Shape, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Seeded model with non-trivial running statistics (one training
    /// forward), so serialization of every array is exercised.
    fn trained_ish_model() -> SegModel<f32> {
        let mut model = SegModel::<f32>::seeded(8, 8, 99).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(100);
        let input = Batch::single(Tensor::from_vec(
            Shape::new(8, 8, 3),
            (0..8 * 8 * 3).map(|_| r.gen_range(0.0..1.0)).collect(),
        ));
        model.forward(&input).unwrap();
        model
    }

    #[test]
    fn encoded_size_is_exactly_header_records_crc() {
        let model = trained_ish_model();
        let bytes = encode_weights(&model).unwrap();
        let floats: usize = BLOCK_SPECS
            .iter()
            .map(|&(ci, co, _)| 9 * ci + ci * co + co + 4 * co)
            .sum();
        let conv_headers = BLOCK_SPECS.len() * 12;
        let tags = model.plan().len();
        assert_eq!(bytes.len(), 24 + tags + conv_headers + floats * 4 + 4);
        assert_eq!(bytes.len(), 39753);
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let model = trained_ish_model();
        let bytes = encode_weights(&model).unwrap();
        let loaded = decode_weights(&bytes).unwrap();
        assert_eq!(loaded.mode(), Mode::Infer);
        let bytes_again = encode_weights(&loaded).unwrap();
        assert_eq!(bytes, bytes_again, "re-encoding must be byte-identical");

        // And the loaded model computes the same function, bit for bit.
        let mut r = ChaCha8Rng::seed_from_u64(7);
        let input = Batch::single(Tensor::from_vec(
            Shape::new(8, 8, 3),
            (0..8 * 8 * 3).map(|_| r.gen_range(0.0..1.0)).collect(),
        ));
        let a = model.forward_infer(&input).unwrap();
        let b = loaded.forward_infer(&input).unwrap();
        assert_eq!(a.items()[0].data(), b.items()[0].data());
    }

    #[test]
    fn file_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.sgrt");
        let model = trained_ish_model();
        save_weights(&model, &path).unwrap();
        let loaded = load_weights(&path).unwrap();
        assert_eq!(
            encode_weights(&model).unwrap(),
            encode_weights(&loaded).unwrap()
        );
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = encode_weights(&trained_ish_model()).unwrap();
        bytes[0] = b'X';
        match decode_weights(&bytes) {
            Err(Error::WeightMagic { found }) => assert_eq!(&found, b"XGRT"),
            other => panic!("expected WeightMagic, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_version() {
        let mut bytes = encode_weights(&trained_ish_model()).unwrap();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        match decode_weights(&bytes) {
            Err(Error::WeightVersion { found, supported }) => {
                assert_eq!(found, 2);
                assert_eq!(supported, 1);
            }
            other => panic!("expected WeightVersion, got {other:?}"),
        }
    }

    #[test]
    fn rejects_truncation_at_any_cut() {
        let bytes = encode_weights(&trained_ish_model()).unwrap();
        for cut in [0, 3, 10, 24, 25, 100, 5000, bytes.len() - 5, bytes.len() - 1] {
            match decode_weights(&bytes[..cut]) {
                Err(Error::WeightTruncated { offset, needed }) => {
                    assert_eq!(offset, cut);
                    assert!(needed > 0);
                }
                other => panic!("cut at {cut}: expected WeightTruncated, got {other:?}"),
            }
        }
    }

    #[test]
    fn rejects_flipped_payload_byte() {
        let mut bytes = encode_weights(&trained_ish_model()).unwrap();
        // Inside the first conv record's depthwise floats (tag 1 + dims 12).
        let target = 24 + 13 + 8;
        bytes[target] ^= 0xFF;
        match decode_weights(&bytes) {
            Err(Error::WeightChecksum { stored, computed }) => assert_ne!(stored, computed),
            other => panic!("expected WeightChecksum, got {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_record_count_and_trailing_bytes() {
        let good = encode_weights(&trained_ish_model()).unwrap();

        let mut wrong_count = good.clone();
        wrong_count[20..24].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            decode_weights(&wrong_count),
            Err(Error::WeightStructure(_))
        ));

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(
            decode_weights(&trailing),
            Err(Error::WeightStructure(_))
        ));

        let mut wrong_classes = good;
        wrong_classes[16..20].copy_from_slice(&6u32.to_le_bytes());
        assert!(matches!(
            decode_weights(&wrong_classes),
            Err(Error::WeightStructure(_))
        ));
    }

    #[test]
    fn folded_models_refuse_to_save() {
        let mut model = trained_ish_model();
        model.set_mode(Mode::Infer);
        let folded = model.prepare_inference().unwrap();
        assert!(matches!(
            encode_weights(&folded),
            Err(Error::Precondition(_))
        ));
    }
}
