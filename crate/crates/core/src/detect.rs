//! Swap classification, volume flagging and organ overlap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{label_components, Component};
use crate::volume::{BinaryMask, ScalarVolume};

/// A volume is flagged when at least this fraction of its body voxels is
/// swapped (inclusive).
pub const SWAP_FLAG_FRACTION: f64 = 0.001;

/// Marks voxels where the fat image is closer to the predicted water signal
/// than the water image is, by more than `margin`.
pub fn classify_swaps_prior(
    water: &ScalarVolume,
    fat: &ScalarVolume,
    prior: &ScalarVolume,
    mask: &BinaryMask,
    margin: f64,
) -> Result<BinaryMask> {
    let g = *water.geometry();
    g.ensure_same(fat.geometry(), "fat volume")?;
    g.ensure_same(prior.geometry(), "signal prior")?;
    g.ensure_same(mask.geometry(), "mask")?;
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::InvalidArgument(format!("margin must be finite and >= 0, got {margin}")));
    }
    Ok(BinaryMask::from_fn(g, |i| {
        let p = prior.get(i) as f64;
        mask.get(i) && (fat.get(i) as f64 - p).abs() + margin < (water.get(i) as f64 - p).abs()
    }))
}

/// Swapped where the water reconstruction is labeled fat and the fat
/// reconstruction is labeled water.
pub fn ingest_segmentation(fat_in_water: &BinaryMask, water_in_fat: &BinaryMask) -> Result<BinaryMask> {
    fat_in_water.and(water_in_fat)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganOverlap {
    pub organ: String,
    pub overlap_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapReport {
    pub swapped_voxel_count: usize,
    pub in_mask_voxel_count: usize,
    pub swap_fraction: f64,
    pub flagged: bool,
    pub components: Vec<Component>,
    pub per_organ: Vec<OrganOverlap>,
}

impl SwapReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn csv_header() -> &'static str {
        "swapped_voxel_count,in_mask_voxel_count,swap_fraction,flagged,components"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.swapped_voxel_count,
            self.in_mask_voxel_count,
            self.swap_fraction,
            self.flagged,
            self.components.len()
        )
    }
}

/// Counts swapped voxels inside `body` and applies the flagging rule.
pub fn flag_volume(swaps: &BinaryMask, body: &BinaryMask) -> Result<SwapReport> {
    flag_volume_excluding(swaps, body, None)
}

/// As [`flag_volume`], with `exclude` (e.g. the arms) removed from the body.
pub fn flag_volume_excluding(
    swaps: &BinaryMask,
    body: &BinaryMask,
    exclude: Option<&BinaryMask>,
) -> Result<SwapReport> {
    let body = match exclude {
        Some(ex) => body.and_not(ex)?,
        None => body.clone(),
    };
    let inside = swaps.and(&body)?;
    let in_mask = body.count();
    if in_mask == 0 {
        return Err(Error::Empty("body mask has no voxels".into()));
    }
    let swapped = inside.count();
    let (_, components) = label_components(&inside);
    Ok(SwapReport {
        swapped_voxel_count: swapped,
        in_mask_voxel_count: in_mask,
        swap_fraction: swapped as f64 / in_mask as f64,
        // Integer comparison keeps the boundary exact.
        flagged: swapped * 1000 >= in_mask,
        components,
        per_organ: Vec::new(),
    })
}

/// `|swaps ∩ organ| / |organ|`.
pub fn organ_overlap(swaps: &BinaryMask, organ: &BinaryMask, name: &str) -> Result<OrganOverlap> {
    let total = organ.count();
    if total == 0 {
        return Err(Error::Empty(format!("organ mask '{name}' has no voxels")));
    }
    let hit = swaps.and(organ)?.count();
    Ok(OrganOverlap { organ: name.to_string(), overlap_fraction: hit as f64 / total as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeGeometry;

    fn geom(n: usize) -> VolumeGeometry {
        VolumeGeometry::isotropic([n, 1, 1]).unwrap()
    }

    #[test]
    fn boundary_examples() {
        let g = geom(1000);
        let body = BinaryMask::full(g);
        let one = BinaryMask::from_fn(g, |i| i == 0);
        let r = flag_volume(&one, &body).unwrap();
        assert_eq!(r.swap_fraction, 0.001);
        assert!(r.flagged);
        assert!(!flag_volume(&BinaryMask::empty(g), &body).unwrap().flagged);

        let g = geom(10_000);
        let nine = BinaryMask::from_fn(g, |i| i % 1000 == 0 && i < 9000);
        let r = flag_volume(&nine, &BinaryMask::full(g)).unwrap();
        assert_eq!(r.swapped_voxel_count, 9);
        assert!(!r.flagged);
    }

    #[test]
    fn empty_body_is_error() {
        let g = geom(10);
        assert!(matches!(
            flag_volume(&BinaryMask::full(g), &BinaryMask::empty(g)),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn exclusion_shrinks_denominator() {
        let g = geom(2000);
        let swaps = BinaryMask::from_fn(g, |i| i == 5);
        let arms = BinaryMask::from_fn(g, |i| i >= 1000);
        assert!(!flag_volume(&swaps, &BinaryMask::full(g)).unwrap().flagged);
        let r = flag_volume_excluding(&swaps, &BinaryMask::full(g), Some(&arms)).unwrap();
        assert_eq!(r.in_mask_voxel_count, 1000);
        assert!(r.flagged);
    }

    #[test]
    fn classifier_examples() {
        let g = geom(4);
        let w = ScalarVolume::new(g, vec![3.0, 1.0, 2.0, 0.0]).unwrap();
        let f = ScalarVolume::new(g, vec![1.0, 3.0, 2.0, 0.0]).unwrap();
        let mask = BinaryMask::full(g);
        assert_eq!(classify_swaps_prior(&w, &f, &w, &mask, 0.0).unwrap().count(), 0);
        let swapped = classify_swaps_prior(&f, &w, &w, &mask, 0.0).unwrap();
        assert_eq!(swapped.data(), &[true, true, false, false]);
        assert_eq!(classify_swaps_prior(&f, &w, &w, &mask, 2.0).unwrap().count(), 0);
    }

    #[test]
    fn ingestion_requires_both() {
        let g = geom(3);
        let a = BinaryMask::new(g, vec![true, true, false]).unwrap();
        let b = BinaryMask::new(g, vec![true, false, false]).unwrap();
        assert_eq!(ingest_segmentation(&a, &b).unwrap().data(), &[true, false, false]);
        assert_eq!(ingest_segmentation(&BinaryMask::empty(g), &a).unwrap().count(), 0);
    }

    #[test]
    fn overlap_examples() {
        let g = geom(400);
        let organ = BinaryMask::from_fn(g, |i| i < 200);
        let half = BinaryMask::from_fn(g, |i| i < 100);
        assert_eq!(organ_overlap(&half, &organ, "liver").unwrap().overlap_fraction, 0.5);
        assert_eq!(organ_overlap(&BinaryMask::full(g), &organ, "liver").unwrap().overlap_fraction, 1.0);
        let disjoint = BinaryMask::from_fn(g, |i| i >= 200);
        assert_eq!(organ_overlap(&disjoint, &organ, "liver").unwrap().overlap_fraction, 0.0);
        assert!(organ_overlap(&half, &BinaryMask::empty(g), "x").is_err());
    }
}
