//! Four-level semantic hash fingerprints and segment-wise frame selection.
//!
//! A fingerprint cell is `2*[amp >= mean_amp] + [phase >= mean_phase]` over a
//! block-mean downsampled spectrum pair. Frames whose fingerprint moved the
//! most since the previous frame carry the most task-relevant change.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scene::SpectrumPair;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HashFingerprint {
    values: Array2<u8>,
}

impl HashFingerprint {
    pub fn from_values(values: Array2<u8>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v > 3) {
            return Err(Error::InvalidInput(format!("fingerprint cell {v} outside 0..=3")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array2<u8> {
        &self.values
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    /// Row-major, four cells per byte, first cell in the two high bits.
    pub fn pack(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.values.len().div_ceil(4)];
        for (i, &v) in self.values.iter().enumerate() {
            out[i / 4] |= v << (6 - 2 * (i % 4));
        }
        out
    }

    pub fn unpack(bytes: &[u8], rx: usize, ry: usize) -> Result<Self> {
        let n = rx * ry;
        if bytes.len() != n.div_ceil(4) {
            return Err(Error::InvalidInput(format!(
                "{} bytes cannot hold a {rx}x{ry} fingerprint",
                bytes.len()
            )));
        }
        let cells = (0..n).map(|i| (bytes[i / 4] >> (6 - 2 * (i % 4))) & 3).collect();
        Ok(Self {
            values: Array2::from_shape_vec((rx, ry), cells).expect("length checked"),
        })
    }
}

/// Block-mean downsampling to `rx x ry`. Block `i` along an axis of length
/// `n` covers `[floor(i n / r), floor((i+1) n / r))`.
pub fn resize_mean(m: &Array2<f64>, rx: usize, ry: usize) -> Result<Array2<f64>> {
    let (k, l) = m.dim();
    if rx == 0 || ry == 0 || rx > k || ry > l {
        return Err(Error::InvalidInput(format!(
            "cannot resize {k}x{l} to {rx}x{ry}"
        )));
    }
    let bounds = |n: usize, r: usize| -> Vec<usize> { (0..=r).map(|i| i * n / r).collect() };
    let rb = bounds(k, rx);
    let cb = bounds(l, ry);
    let mut out = Array2::zeros((rx, ry));
    for i in 0..rx {
        for j in 0..ry {
            let block = m.slice(ndarray::s![rb[i]..rb[i + 1], cb[j]..cb[j + 1]]);
            out[[i, j]] = block.sum() / block.len() as f64;
        }
    }
    Ok(out)
}

pub fn fingerprint(pair: &SpectrumPair, rx: usize, ry: usize) -> Result<HashFingerprint> {
    let amp = resize_mean(&pair.amplitude, rx, ry)?;
    let phase = resize_mean(&pair.phase, rx, ry)?;
    let mean_amp = amp.sum() / amp.len() as f64;
    let mean_phase = phase.sum() / phase.len() as f64;
    let values = ndarray::Zip::from(&amp).and(&phase).map_collect(|&a, &p| {
        match (a >= mean_amp, p >= mean_phase) {
            (true, true) => 3,
            (true, false) => 2,
            (false, true) => 1,
            (false, false) => 0,
        }
    });
    Ok(HashFingerprint { values })
}

/// Number of cells where the two fingerprints differ.
pub fn hamming(a: &HashFingerprint, b: &HashFingerprint) -> Result<usize> {
    if a.dim() != b.dim() {
        return Err(Error::shape(a.dim(), b.dim()));
    }
    Ok(a.values.iter().zip(b.values.iter()).filter(|(x, y)| x != y).count())
}

/// The RIS-masked frames of one time segment together with their masks.
#[derive(Debug, Clone)]
pub struct SegmentBuffer {
    pub pairs: Vec<SpectrumPair>,
    pub amp_masks: Vec<Array2<f64>>,
    pub phase_masks: Vec<Array2<f64>>,
}

impl SegmentBuffer {
    pub fn new(pairs: Vec<SpectrumPair>, amp_masks: Vec<Array2<f64>>, phase_masks: Vec<Array2<f64>>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidInput("segment is empty".into()));
        }
        if amp_masks.len() != pairs.len() || phase_masks.len() != pairs.len() {
            return Err(Error::InvalidInput(format!(
                "segment has {} pairs but {} / {} masks",
                pairs.len(),
                amp_masks.len(),
                phase_masks.len()
            )));
        }
        let dim = pairs[0].dim();
        for (p, (a, ph)) in pairs.iter().zip(amp_masks.iter().zip(&phase_masks)) {
            if p.dim() != dim || a.dim() != dim || ph.dim() != dim {
                return Err(Error::shape(dim, (p.dim(), a.dim(), ph.dim())));
            }
        }
        Ok(Self {
            pairs,
            amp_masks,
            phase_masks,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Removes the RIS response from frame `k` using the known masks.
    pub fn unmasked(&self, k: usize) -> SpectrumPair {
        SpectrumPair {
            amplitude: &self.pairs[k].amplitude / &self.amp_masks[k],
            phase: &self.pairs[k].phase - &self.phase_masks[k],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Selection {
    /// 0-based index within the segment.
    pub index: usize,
    /// Hamming distance of the selected frame to its predecessor.
    pub richness: usize,
    /// The selected frame, still masked.
    pub pair: SpectrumPair,
    /// Fingerprint of the selected frame; the reference for the next segment.
    pub fingerprint: HashFingerprint,
    /// Distance of every frame to its predecessor.
    pub distances: Vec<usize>,
}

/// Picks the frame with the largest fingerprint change. Frame 0 is compared
/// with `prev` (the previous segment's pick, or itself when absent); ties go to
/// the lowest index.
pub fn select_frame(segment: &SegmentBuffer, prev: Option<&HashFingerprint>, rx: usize, ry: usize) -> Result<Selection> {
    if segment.is_empty() {
        return Err(Error::InvalidInput("segment is empty".into()));
    }
    let prints = (0..segment.len())
        .map(|k| fingerprint(&segment.unmasked(k), rx, ry))
        .collect::<Result<Vec<_>>>()?;
    let mut distances = Vec::with_capacity(prints.len());
    for k in 0..prints.len() {
        let reference = if k == 0 { prev.unwrap_or(&prints[0]) } else { &prints[k - 1] };
        distances.push(hamming(&prints[k], reference)?);
    }
    let mut index = 0;
    for (k, &d) in distances.iter().enumerate() {
        if d > distances[index] {
            index = k;
        }
    }
    Ok(Selection {
        index,
        richness: distances[index],
        pair: segment.pairs[index].clone(),
        fingerprint: prints[index].clone(),
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn resize_examples() {
        let sevens = Array2::from_elem((4, 4), 7.0);
        assert_eq!(resize_mean(&sevens, 2, 2).unwrap(), Array2::from_elem((2, 2), 7.0));
        assert_eq!(resize_mean(&array![[1.0, 2.0], [3.0, 4.0]], 1, 1).unwrap(), array![[2.5]]);
        let m = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        assert_eq!(resize_mean(&m, 2, 3).unwrap(), m);
        assert!(resize_mean(&m, 3, 3).is_err());
    }

    #[test]
    fn uneven_blocks_partition_the_input() {
        let m = Array2::from_shape_fn((7, 5), |(i, j)| (i * 5 + j) as f64);
        let r = resize_mean(&m, 3, 2).unwrap();
        // blocks: rows [0,2) [2,4) [4,7); cols [0,2) [2,5)
        let weights = [[4.0, 6.0], [4.0, 6.0], [6.0, 9.0]];
        let total: f64 = (0..3).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| r[[i, j]] * weights[i][j]).sum();
        assert!((total - m.sum()).abs() < 1e-9);
    }

    #[test]
    fn constant_pair_hashes_to_all_threes() {
        let pair = SpectrumPair::new(Array2::from_elem((8, 8), 2.0), Array2::from_elem((8, 8), -1.0)).unwrap();
        let fp = fingerprint(&pair, 4, 4).unwrap();
        assert!(fp.values().iter().all(|&v| v == 3));
    }

    #[test]
    fn phase_split_gives_threes_and_twos() {
        let pair = SpectrumPair::new(Array2::from_elem((2, 2), 1.0), array![[1.0, -1.0], [-1.0, 1.0]]).unwrap();
        let fp = fingerprint(&pair, 2, 2).unwrap();
        assert_eq!(fp.values(), &array![[3u8, 2], [2, 3]]);
    }

    #[test]
    fn hamming_examples() {
        let a = HashFingerprint::from_values(Array2::zeros((8, 8))).unwrap();
        let b = HashFingerprint::from_values(Array2::from_elem((8, 8), 3)).unwrap();
        assert_eq!(hamming(&a, &a).unwrap(), 0);
        assert_eq!(hamming(&a, &b).unwrap(), 64);
        let mut c = a.values().clone();
        c[[3, 5]] = 2;
        assert_eq!(hamming(&a, &HashFingerprint::from_values(c).unwrap()).unwrap(), 1);
        let small = HashFingerprint::from_values(Array2::zeros((2, 2))).unwrap();
        assert!(hamming(&a, &small).is_err());
    }

    #[test]
    fn pack_round_trip() {
        let fp = HashFingerprint::from_values(array![[0u8, 1, 2], [3, 2, 1], [0, 3, 3]]).unwrap();
        let packed = fp.pack();
        assert_eq!(packed.len(), 3);
        assert_eq!(packed[0], 0b00_01_10_11);
        assert_eq!(HashFingerprint::unpack(&packed, 3, 3).unwrap(), fp);
        assert!(HashFingerprint::from_values(array![[4u8]]).is_err());
    }

    fn segment_of(pairs: Vec<SpectrumPair>) -> SegmentBuffer {
        let dim = pairs[0].dim();
        let n = pairs.len();
        SegmentBuffer::new(pairs, vec![Array2::ones(dim); n], vec![Array2::zeros(dim); n]).unwrap()
    }

    fn ramp(shift: f64) -> SpectrumPair {
        SpectrumPair::new(
            Array2::from_shape_fn((8, 8), |(i, j)| 1.0 + ((i + j) as f64 + shift).sin()),
            Array2::from_shape_fn((8, 8), |(i, j)| (i as f64 - shift) * (j as f64 - 3.5)),
        )
        .unwrap()
    }

    #[test]
    fn identical_frames_select_first() {
        let seg = segment_of(vec![ramp(0.0); 6]);
        let sel = select_frame(&seg, None, 4, 4).unwrap();
        assert_eq!(sel.index, 0);
        assert_eq!(sel.richness, 0);
        let single = segment_of(vec![ramp(1.0)]);
        let sel = select_frame(&single, Some(&fingerprint(&ramp(3.0), 4, 4).unwrap()), 4, 4).unwrap();
        assert_eq!(sel.index, 0);
    }

    #[test]
    fn structural_change_is_selected() {
        let mut frames = vec![ramp(0.0); 10];
        for f in frames.iter_mut().skip(4) {
            *f = ramp(2.5);
        }
        let seg = segment_of(frames.clone());
        let prev = fingerprint(&frames[0], 8, 8).unwrap();
        let sel = select_frame(&seg, Some(&prev), 8, 8).unwrap();
        // exhaustive oracle over the chain
        let prints: Vec<_> = frames.iter().map(|f| fingerprint(f, 8, 8).unwrap()).collect();
        let mut best = (0, 0);
        for k in 0..prints.len() {
            let r = if k == 0 { &prev } else { &prints[k - 1] };
            let d = hamming(&prints[k], r).unwrap();
            if d > best.1 {
                best = (k, d);
            }
        }
        assert!(best.1 > 0);
        assert_eq!(sel.index, 4);
        assert_eq!((sel.index, sel.richness), best);
    }

    #[test]
    fn masked_segment_is_unmasked_before_hashing() {
        let frames = vec![ramp(0.0), ramp(0.0), ramp(2.5)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let amps: Vec<_> = (0..3).map(|_| Array2::from_shape_simple_fn((8, 8), || rng.random_range(0.1..1.0))).collect();
        let phases: Vec<_> = (0..3).map(|_| Array2::from_shape_simple_fn((8, 8), || rng.random_range(0.0..6.0))).collect();
        let masked: Vec<_> = frames
            .iter()
            .zip(amps.iter().zip(&phases))
            .map(|(f, (a, p))| crate::scene::apply_ris(f, a, p).unwrap())
            .collect();
        let seg = SegmentBuffer::new(masked.clone(), amps, phases).unwrap();
        let sel = select_frame(&seg, None, 8, 8).unwrap();
        assert_eq!(sel.index, 2);
        assert_eq!(sel.pair, masked[2]);
        assert!(SegmentBuffer::new(vec![], vec![], vec![]).is_err());
    }

    fn arb_pair() -> impl Strategy<Value = SpectrumPair> {
        (1usize..12, 1usize..12, any::<u64>()).prop_map(|(k, l, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            SpectrumPair::new(
                Array2::from_shape_simple_fn((k, l), || rng.random_range(0.0..5.0)),
                Array2::from_shape_simple_fn((k, l), || rng.random_range(-10.0..10.0)),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn fingerprint_alphabet_and_scale_invariance(pair in arb_pair(), c in 0.01f64..100.0) {
            let (k, l) = pair.dim();
            let fp = fingerprint(&pair, k.min(4), l.min(4)).unwrap();
            prop_assert!(fp.values().iter().all(|&v| v <= 3));
            // scaling by a power of two is exact in floating point
            let c = 2f64.powi(c.log2().round() as i32);
            let scaled = SpectrumPair::new(&pair.amplitude * c, pair.phase.clone()).unwrap();
            prop_assert_eq!(fingerprint(&scaled, k.min(4), l.min(4)).unwrap(), fp);
        }

        #[test]
        fn hamming_is_a_metric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || HashFingerprint::from_values(Array2::from_shape_simple_fn((4, 4), || rng.random_range(0..4u8))).unwrap();
            let (a, b, c) = (draw(), draw(), draw());
            let d = |x: &HashFingerprint, y: &HashFingerprint| hamming(x, y).unwrap();
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert_eq!(d(&a, &a), 0);
            prop_assert_eq!(d(&a, &b) == 0, a == b);
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        }

        #[test]
        fn selected_richness_is_chain_maximum(seed in any::<u64>(), n in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames: Vec<_> = (0..n).map(|_| ramp(rng.random_range(0.0..3.0))).collect();
            let seg = segment_of(frames.clone());
            let sel = select_frame(&seg, None, 4, 4).unwrap();
            let prints: Vec<_> = frames.iter().map(|f| fingerprint(f, 4, 4).unwrap()).collect();
            let brute = (1..n).map(|k| hamming(&prints[k], &prints[k - 1]).unwrap()).max().unwrap_or(0);
            prop_assert_eq!(sel.richness, brute);
        }
    }
}
