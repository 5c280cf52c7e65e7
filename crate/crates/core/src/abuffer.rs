//! Per-voxel fragment lists: offset scan plus the VSS, VSV and VCSV builders.

use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use glam::UVec3;
use rayon::prelude::*;

use crate::culling::CullingPyramid;
use crate::error::{Error, Result};
use crate::voxelizer::{capsule_voxel_bounds, voxel_coord, voxel_index, Method, OccupancyPyramid, SegmentTable};

const MORTON_LIMIT: u32 = 1024;

fn spread_bits(v: u32) -> u32 {
    let mut x = v & 0x3ff;
    x = (x | (x << 16)) & 0x0300_00ff;
    x = (x | (x << 8)) & 0x0300_f00f;
    x = (x | (x << 4)) & 0x030c_30c3;
    (x | (x << 2)) & 0x0924_9249
}

fn compact_bits(v: u32) -> u32 {
    let mut x = v & 0x0924_9249;
    x = (x | (x >> 2)) & 0x030c_30c3;
    x = (x | (x >> 4)) & 0x0300_f00f;
    x = (x | (x >> 8)) & 0x0300_00ff;
    (x | (x >> 16)) & 0x3ff
}

/// 30-bit interleaved code, x in the least significant slot.
pub fn morton_encode(c: UVec3) -> Result<u32> {
    if c.max_element() >= MORTON_LIMIT {
        return Err(Error::MortonRange(c.to_array()));
    }
    Ok(spread_bits(c.x) | (spread_bits(c.y) << 1) | (spread_bits(c.z) << 2))
}

pub fn morton_decode(code: u32) -> UVec3 {
    UVec3::new(compact_bits(code), compact_bits(code >> 1), compact_bits(code >> 2))
}

/// Exclusive prefix sum over per-voxel fragment counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OffsetTable {
    pub offsets: Vec<u32>,
    pub total: u64,
}

/// Parallel exclusive scan: chunk sums, a sequential scan over chunks, then a parallel fill.
pub fn exclusive_scan(counts: &[u32]) -> (Vec<u64>, u64) {
    const CHUNK: usize = 1 << 14;
    let sums: Vec<u64> = counts
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(|&v| v as u64).sum())
        .collect();
    let mut starts = Vec::with_capacity(sums.len());
    let mut acc = 0u64;
    for s in &sums {
        starts.push(acc);
        acc += s;
    }
    let mut out = vec![0u64; counts.len()];
    out.par_chunks_mut(CHUNK)
        .zip(counts.par_chunks(CHUNK))
        .zip(starts.par_iter())
        .for_each(|((dst, src), &start)| {
            let mut run = start;
            for (d, &c) in dst.iter_mut().zip(src) {
                *d = run;
                run += c as u64;
            }
        });
    (out, acc)
}

/// Per-voxel primitive counts from the packed base, zeroed outside the culling mask.
pub fn masked_counts(pyramid: &OccupancyPyramid, culling: Option<&CullingPyramid>) -> Vec<u32> {
    if let Some(c) = culling {
        assert_eq!(c.resolution(), pyramid.resolution());
    }
    pyramid
        .base()
        .par_iter()
        .enumerate()
        .map(|(i, w)| match culling {
            Some(c) if !c.is_set(i) => 0,
            _ => w.count(),
        })
        .collect()
}

/// Offsets with the fragment array limited to `u32::MAX` entries.
pub fn scan_offsets(pyramid: &OccupancyPyramid, culling: Option<&CullingPyramid>) -> Result<OffsetTable> {
    scan_offsets_with_capacity(pyramid, culling, u32::MAX as u64)
}

pub fn scan_offsets_with_capacity(
    pyramid: &OccupancyPyramid,
    culling: Option<&CullingPyramid>,
    capacity: u64,
) -> Result<OffsetTable> {
    offsets_from_counts(&masked_counts(pyramid, culling), capacity)
}

fn offsets_from_counts(counts: &[u32], capacity: u64) -> Result<OffsetTable> {
    let (offsets, total) = exclusive_scan(counts);
    let capacity = capacity.min(u32::MAX as u64);
    if total > capacity {
        return Err(Error::Capacity { total, capacity });
    }
    Ok(OffsetTable {
        offsets: offsets.into_iter().map(|o| o as u32).collect(),
        total,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Vss,
    Vsv,
    Vcsv,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Vss, Strategy::Vsv, Strategy::Vcsv];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Vss => "vss",
            Strategy::Vsv => "vsv",
            Strategy::Vcsv => "vcsv",
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vss" => Ok(Strategy::Vss),
            "vsv" => Ok(Strategy::Vsv),
            "vcsv" => Ok(Strategy::Vcsv),
            _ => Err(Error::Param(format!("unknown a-buffer strategy '{s}'"))),
        }
    }
}

/// Instrumented memory traffic of one build.
///
/// `touches()` counts operations on per-fragment storage: packed count
/// updates, fragment writes and fragment reads. Offset-cursor claims and the
/// final within-voxel canonical sort are reported separately.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ABufferStats {
    /// Capsule-voxel visits of the fragment-emitting traversal.
    pub incidences: u64,
    pub count_updates: u64,
    pub offset_claims: u64,
    pub fragment_writes: u64,
    pub fragment_reads: u64,
    pub sort_passes: u32,
    pub segments_tested: u64,
    pub segments_culled: u64,
}

impl ABufferStats {
    pub fn touches(&self) -> u64 {
        self.count_updates + self.fragment_writes + self.fragment_reads
    }
}

/// Segment indices grouped per voxel.
///
/// `fragments[offsets[v] .. offsets[v] + counts[v]]` lists the segments of voxel `v`
/// in ascending order. VSV and VCSV lay voxels out in x-fastest order, VSS in Morton order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ABuffer {
    pub resolution: u32,
    pub fragments: Vec<u32>,
    pub offsets: OffsetTable,
    pub counts: Vec<u32>,
    pub stats: ABufferStats,
}

impl ABuffer {
    pub fn empty(resolution: u32) -> Self {
        let n = (resolution as usize).pow(3);
        ABuffer {
            resolution,
            fragments: Vec::new(),
            offsets: OffsetTable {
                offsets: vec![0; n],
                total: 0,
            },
            counts: vec![0; n],
            stats: ABufferStats::default(),
        }
    }

    pub fn voxel_count(&self) -> usize {
        self.counts.len()
    }

    pub fn fragment_total(&self) -> usize {
        self.fragments.len()
    }

    pub fn fragments_at(&self, voxel: usize) -> &[u32] {
        let start = self.offsets.offsets[voxel] as usize;
        &self.fragments[start..start + self.counts[voxel] as usize]
    }

    pub fn fragments_at_coord(&self, c: UVec3) -> &[u32] {
        self.fragments_at(voxel_index(self.resolution, c))
    }

    /// Sorts every voxel's slice so output is independent of thread scheduling.
    fn canonicalize(&mut self) {
        let mut slices: Vec<(usize, usize)> = (0..self.counts.len())
            .filter(|&v| self.counts[v] > 1)
            .map(|v| (self.offsets.offsets[v] as usize, self.counts[v] as usize))
            .collect();
        slices.sort_unstable();
        let mut rest: &mut [u32] = &mut self.fragments;
        let mut consumed = 0;
        let mut parts = Vec::with_capacity(slices.len());
        for (start, len) in slices {
            let (_, tail) = rest.split_at_mut(start - consumed);
            let (part, tail) = tail.split_at_mut(len);
            parts.push(part);
            rest = tail;
            consumed = start + len;
        }
        parts.into_par_iter().for_each(|p| p.sort_unstable());
    }

    /// `ABUF` dump: magic, u32 voxel count, u32 fragment count, offsets, counts, fragments.
    pub fn write_dump<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(b"ABUF")?;
        out.write_all(&(self.voxel_count() as u32).to_le_bytes())?;
        out.write_all(&(self.fragments.len() as u32).to_le_bytes())?;
        for arr in [&self.offsets.offsets, &self.counts, &self.fragments] {
            let mut bytes = Vec::with_capacity(arr.len() * 4);
            for v in arr.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn read_dump(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != b"ABUF" {
            return Err(Error::parse("byte 0", "bad magic, expected ABUF"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let voxels = word(4) as usize;
        let frags = word(8) as usize;
        let resolution = (voxels as f64).cbrt().round() as u32;
        if (resolution as usize).pow(3) != voxels || !resolution.is_power_of_two() {
            return Err(Error::parse("byte 4", "voxel count is not a power-of-two cube"));
        }
        if bytes.len() != 12 + 4 * (2 * voxels + frags) {
            return Err(Error::parse("byte 12", "unexpected length"));
        }
        let read = |start: usize, n: usize| (0..n).map(|k| word(start + 4 * k)).collect::<Vec<u32>>();
        let offsets = read(12, voxels);
        let counts = read(12 + 4 * voxels, voxels);
        let fragments = read(12 + 8 * voxels, frags);
        for v in 0..voxels {
            if offsets[v] as u64 + counts[v] as u64 > frags as u64 {
                return Err(Error::parse(format!("voxel {v}"), "slice past fragment array"));
            }
        }
        Ok(ABuffer {
            resolution,
            fragments,
            offsets: OffsetTable {
                offsets,
                total: frags as u64,
            },
            counts,
            stats: ABufferStats::default(),
        })
    }
}

/// Voxelize-scan-voxelize: the counts come from `pyramid`, built by `method`
/// over the same segments; a second traversal claims slots by fetch-and-increment.
pub fn build_vsv(segments: &SegmentTable, pyramid: &OccupancyPyramid, method: Method, r_min: f64) -> Result<ABuffer> {
    second_pass(segments, pyramid, None, method, r_min)
}

/// Voxelize-cull-scan-voxelize: segments whose inflated bounds hold no visible
/// voxel are skipped, the rest write only into visible voxels.
pub fn build_vcsv(
    segments: &SegmentTable,
    pyramid: &OccupancyPyramid,
    culling: &CullingPyramid,
    method: Method,
    r_min: f64,
) -> Result<ABuffer> {
    second_pass(segments, pyramid, Some(culling), method, r_min)
}

fn second_pass(
    segments: &SegmentTable,
    pyramid: &OccupancyPyramid,
    culling: Option<&CullingPyramid>,
    method: Method,
    r_min: f64,
) -> Result<ABuffer> {
    let res = pyramid.resolution();
    let counts = masked_counts(pyramid, culling);
    let table = offsets_from_counts(&counts, u32::MAX as u64)?;
    let cursors: Vec<AtomicU32> = table.offsets.iter().map(|&o| AtomicU32::new(o)).collect();
    let slots: Vec<AtomicU32> = (0..table.total).map(|_| AtomicU32::new(0)).collect();
    let incidences = AtomicU64::new(0);
    let writes = AtomicU64::new(0);
    let culled = AtomicU64::new(0);

    segments.ids().par_iter().for_each(|&id| {
        let c = segments.capsule(id);
        if let Some(cull) = culling {
            let visible = capsule_voxel_bounds(&c.with_radius(c.r.max(r_min)), res).is_some_and(|[x, y, z]| {
                cull.any_in_box(UVec3::new(x.0, y.0, z.0), UVec3::new(x.1, y.1, z.1))
            });
            if !visible {
                culled.fetch_add(1, Ordering::Relaxed);
                return;
            }
        }
        let (mut local_visits, mut local_writes) = (0u64, 0u64);
        method.traverse_clamped(c, res, r_min, |v| {
            local_visits += 1;
            let i = voxel_index(res, v);
            if culling.is_some_and(|cull| !cull.is_set(i)) {
                return;
            }
            let slot = cursors[i].fetch_add(1, Ordering::Relaxed);
            if slot as u64 >= table.offsets[i] as u64 + counts[i] as u64 {
                return;
            }
            slots[slot as usize].store(id, Ordering::Relaxed);
            local_writes += 1;
        });
        incidences.fetch_add(local_visits, Ordering::Relaxed);
        writes.fetch_add(local_writes, Ordering::Relaxed);
    });

    // an overflowing claim leaves its cursor past the slice, so the scan below reports it
    for (i, cur) in cursors.iter().enumerate() {
        let filled = cur.load(Ordering::Relaxed) as u64 - table.offsets[i] as u64;
        if filled != counts[i] as u64 {
            return Err(Error::Consistency {
                voxel: i,
                message: format!("{} fragments written, {} counted", filled, counts[i]),
            });
        }
    }

    let writes = writes.into_inner();
    let mut buffer = ABuffer {
        resolution: res,
        fragments: slots.into_iter().map(AtomicU32::into_inner).collect(),
        offsets: table,
        counts,
        stats: ABufferStats {
            incidences: incidences.into_inner(),
            count_updates: pyramid.stats.visits,
            offset_claims: writes,
            fragment_writes: writes,
            fragment_reads: 0,
            sort_passes: 0,
            segments_tested: segments.len() as u64,
            segments_culled: culled.into_inner(),
        },
    };
    buffer.canonicalize();
    Ok(buffer)
}

/// Voxelize-sort-scan reference: emit `(morton code, segment)` pairs, radix
/// sort them by code, then run-length scan the sorted keys.
pub fn build_vss(segments: &SegmentTable, resolution: u32, method: Method, r_min: f64) -> Result<ABuffer> {
    if resolution > MORTON_LIMIT {
        return Err(Error::MortonRange([resolution - 1; 3]));
    }
    let per_segment: Vec<Vec<(u32, u32)>> = segments
        .ids()
        .par_iter()
        .map(|&id| {
            let mut out = Vec::new();
            method.traverse_clamped(segments.capsule(id), resolution, r_min, |v| {
                out.push((morton_encode(v).expect("coordinate checked against the grid"), id));
            });
            out
        })
        .collect();
    let mut pairs: Vec<(u32, u32)> = per_segment.into_iter().flatten().collect();
    let n = pairs.len() as u64;
    if n > u32::MAX as u64 {
        return Err(Error::Capacity {
            total: n,
            capacity: u32::MAX as u64,
        });
    }
    let passes = radix_sort_by_code(&mut pairs);

    let voxels = (resolution as usize).pow(3);
    let mut offsets = vec![0u32; voxels];
    let mut counts = vec![0u32; voxels];
    let mut start = 0usize;
    while start < pairs.len() {
        let code = pairs[start].0;
        let mut end = start + 1;
        while end < pairs.len() && pairs[end].0 == code {
            end += 1;
        }
        let v = voxel_index(resolution, morton_decode(code));
        offsets[v] = start as u32;
        counts[v] = (end - start) as u32;
        start = end;
    }
    // voxels without fragments point at the position their code would occupy
    let mut next = 0u32;
    for code in 0..voxels as u32 {
        let v = voxel_index(resolution, morton_decode(code));
        if counts[v] == 0 {
            offsets[v] = next;
        } else {
            next = offsets[v] + counts[v];
        }
    }

    Ok(ABuffer {
        resolution,
        fragments: pairs.into_iter().map(|(_, s)| s).collect(),
        offsets: OffsetTable { offsets, total: n },
        counts,
        stats: ABufferStats {
            incidences: n,
            count_updates: 0,
            offset_claims: 0,
            // emit writes, one read and one write per sort pass, one read in the run-length scan
            fragment_writes: n + passes as u64 * n,
            fragment_reads: passes as u64 * n + n,
            sort_passes: passes,
            segments_tested: segments.len() as u64,
            segments_culled: 0,
        },
    })
}

/// Stable LSD radix sort on the 30-bit code, 8 bits per pass. Returns the pass count.
fn radix_sort_by_code(pairs: &mut Vec<(u32, u32)>) -> u32 {
    let mut scratch = vec![(0u32, 0u32); pairs.len()];
    let mut passes = 0;
    for shift in [0u32, 8, 16, 24] {
        let mut hist = [0usize; 256];
        for p in pairs.iter() {
            hist[((p.0 >> shift) & 0xff) as usize] += 1;
        }
        let mut pos = [0usize; 256];
        let mut acc = 0;
        for (b, h) in hist.iter().enumerate() {
            pos[b] = acc;
            acc += h;
        }
        for p in pairs.iter() {
            let b = ((p.0 >> shift) & 0xff) as usize;
            scratch[pos[b]] = *p;
            pos[b] += 1;
        }
        std::mem::swap(pairs, &mut scratch);
        passes += 1;
    }
    passes
}

/// Per-voxel sorted fragment lists, for comparing buffers with different layouts.
pub fn per_voxel_lists(buffer: &ABuffer) -> Vec<Vec<u32>> {
    (0..buffer.voxel_count())
        .map(|v| {
            let mut l = buffer.fragments_at(v).to_vec();
            l.sort_unstable();
            l
        })
        .collect()
}

/// Voxel coordinate of every non-empty list.
pub fn occupied_voxels(buffer: &ABuffer) -> Vec<UVec3> {
    (0..buffer.voxel_count())
        .filter(|&v| buffer.counts[v] > 0)
        .map(|v| voxel_coord(buffer.resolution, v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::culling::{compute_visibility, erode, BitPyramid, Camera};
    use crate::lineset::Capsule;
    use crate::test_oracle::SplitMix;
    use crate::voxelizer::{voxelize, GridDesc, DEFAULT_R_MIN};
    use glam::DVec3;

    fn random_table(rng: &mut SplitMix, n: usize, res: f64, max_len: f64) -> SegmentTable {
        let caps = (0..n)
            .map(|_| {
                let a = DVec3::new(rng.range(0.0, res), rng.range(0.0, res), rng.range(0.0, res));
                let b = (a + rng.direction() * rng.range(0.0, max_len)).clamp(DVec3::ZERO, DVec3::splat(res));
                Capsule::new(a, b, rng.range(0.05, 1.5))
            })
            .collect();
        SegmentTable::from_capsules(caps)
    }

    #[test]
    fn morton_conventions() {
        assert_eq!(morton_encode(UVec3::ZERO).unwrap(), 0);
        assert_eq!(morton_encode(UVec3::X).unwrap(), 1);
        assert_eq!(morton_encode(UVec3::Y).unwrap(), 2);
        assert_eq!(morton_encode(UVec3::Z).unwrap(), 4);
        assert_eq!(morton_encode(UVec3::splat(1023)).unwrap(), (1 << 30) - 1);
        assert!(matches!(morton_encode(UVec3::new(0, 1024, 0)), Err(Error::MortonRange(_))));
    }

    #[test]
    fn morton_round_trip_16() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..4096 {
            let c = voxel_coord(16, i);
            let code = morton_encode(c).unwrap();
            assert!(code < 4096);
            assert!(seen.insert(code));
            assert_eq!(morton_decode(code), c);
        }
    }

    #[test]
    fn exclusive_scan_examples() {
        let (o, t) = exclusive_scan(&[3, 0, 2, 5]);
        assert_eq!(o, vec![0, 3, 3, 5]);
        assert_eq!(t, 10);
        let mut rng = SplitMix(2);
        let counts: Vec<u32> = (0..100_000).map(|_| (rng.next_u64() % 7) as u32).collect();
        let (o, t) = exclusive_scan(&counts);
        let mut acc = 0u64;
        for (i, &c) in counts.iter().enumerate() {
            assert_eq!(o[i], acc);
            acc += c as u64;
        }
        assert_eq!(t, acc);
    }

    #[test]
    fn scan_respects_culling_and_capacity() {
        let occ: Vec<f64> = (0..512).map(|i| if i % 3 == 0 { 0.5 } else { 0.0 }).collect();
        let p = OccupancyPyramid::from_occupancy(8, &occ);
        let none = BitPyramid::from_base(8, vec![false; 512]);
        let t = scan_offsets(&p, Some(&none)).unwrap();
        assert_eq!(t.total, 0);
        assert!(t.offsets.iter().all(|&o| o == 0));
        assert_eq!(scan_offsets(&p, None).unwrap().total, 171);
        assert!(matches!(
            scan_offsets_with_capacity(&p, None, 100),
            Err(Error::Capacity { total: 171, capacity: 100 })
        ));
    }

    #[test]
    fn one_segment_four_voxels() {
        // thin capsule along x at a voxel-row centre covering x in [0.6, 3.4]
        let c = Capsule::new(DVec3::new(1.0, 4.5, 4.5), DVec3::new(3.0, 4.5, 4.5), 0.4);
        let t = SegmentTable::from_capsules(vec![c]);
        // r_min at the tube radius so the traversal is not widened
        let p = voxelize(&t, 8, Method::Capsule, 0.4);
        let a = build_vsv(&t, &p, Method::Capsule, 0.4).unwrap();
        assert_eq!(a.fragments, vec![0, 0, 0, 0]);
        for x in 0..4 {
            assert_eq!(a.fragments_at_coord(UVec3::new(x, 4, 4)), &[0]);
        }
    }

    #[test]
    fn vsv_matches_vss_and_counts() {
        let mut rng = SplitMix(21);
        for _ in 0..10 {
            let t = random_table(&mut rng, 80, 16.0, 6.0);
            let p = voxelize(&t, 16, Method::Capsule, DEFAULT_R_MIN);
            let a = build_vsv(&t, &p, Method::Capsule, DEFAULT_R_MIN).unwrap();
            let b = build_vss(&t, 16, Method::Capsule, DEFAULT_R_MIN).unwrap();
            assert_eq!(a.fragment_total() as u64, p.total_count());
            assert_eq!(per_voxel_lists(&a), per_voxel_lists(&b));
            assert_eq!(a.stats.touches(), 2 * a.stats.incidences);
            assert!(b.stats.touches() >= 3 * b.stats.incidences);
        }
    }

    #[test]
    fn vsv_is_complete_against_direct_traversal() {
        let mut rng = SplitMix(5);
        let t = random_table(&mut rng, 50, 16.0, 8.0);
        let p = voxelize(&t, 16, Method::Capsule, DEFAULT_R_MIN);
        let a = build_vsv(&t, &p, Method::Capsule, DEFAULT_R_MIN).unwrap();
        for (id, c) in t.iter() {
            Method::Capsule.traverse_clamped(c, 16, DEFAULT_R_MIN, |v| {
                let hits = a.fragments_at_coord(v).iter().filter(|&&f| f == id).count();
                assert_eq!(hits, 1);
            });
        }
    }

    #[test]
    fn vss_runs_and_empty() {
        let t = SegmentTable::from_capsules(vec![]);
        let a = build_vss(&t, 8, Method::Capsule, DEFAULT_R_MIN).unwrap();
        assert_eq!(a.fragment_total(), 0);
        let caps = (0..3).map(|_| Capsule::new(DVec3::splat(2.5), DVec3::splat(2.5), 0.1)).collect();
        let t = SegmentTable::from_capsules(caps);
        let a = build_vss(&t, 8, Method::Capsule, 0.1).unwrap();
        assert_eq!(a.fragments, vec![0, 1, 2]);
        assert_eq!(a.fragments_at_coord(UVec3::splat(2)), &[0, 1, 2]);
        assert_eq!(occupied_voxels(&a), vec![UVec3::splat(2)]);
    }

    #[test]
    fn vcsv_with_full_visibility_equals_vsv() {
        let mut rng = SplitMix(9);
        let t = random_table(&mut rng, 60, 16.0, 6.0);
        let p = voxelize(&t, 16, Method::Capsule, DEFAULT_R_MIN);
        let a = build_vsv(&t, &p, Method::Capsule, DEFAULT_R_MIN).unwrap();
        let b = build_vcsv(&t, &p, &BitPyramid::full(16), Method::Capsule, DEFAULT_R_MIN).unwrap();
        assert_eq!(a.fragments, b.fragments);
        assert_eq!(a.offsets, b.offsets);
        assert_eq!(a.counts, b.counts);
    }

    #[test]
    fn vcsv_drops_segment_behind_wall() {
        let res = 8;
        let mut caps = Vec::new();
        // three adjacent rows of wall tubes along y at x = 3.5, 4.5, 5.5 make a solid slab
        for x in [3.5, 4.5, 5.5] {
            for z in 0..8 {
                caps.push(Capsule::new(DVec3::new(x, 0.0, z as f64 + 0.5), DVec3::new(x, 8.0, z as f64 + 0.5), 0.75));
            }
        }
        let hidden = caps.len() as u32;
        caps.push(Capsule::new(DVec3::new(1.5, 3.5, 3.5), DVec3::new(1.5, 4.5, 4.5), 0.2));
        let t = SegmentTable::from_capsules(caps);
        let g = GridDesc::unit(res).unwrap();
        let p = voxelize(&t, res, Method::Capsule, DEFAULT_R_MIN);
        let cam = Camera::look_at(DVec3::new(60.0, 4.0, 4.0), DVec3::splat(4.0), DVec3::Z, 0.5, 8, 8).unwrap();
        let cull = compute_visibility(&erode(&p.clamped_field(), res), &p, &g, &cam);
        let vcsv = build_vcsv(&t, &p, &cull, Method::Capsule, DEFAULT_R_MIN).unwrap();
        let vsv = build_vsv(&t, &p, Method::Capsule, DEFAULT_R_MIN).unwrap();
        assert!(!vcsv.fragments.contains(&hidden));
        assert!(vsv.fragments.contains(&hidden));
        assert!(vcsv.fragment_total() < vsv.fragment_total());
        // every visible voxel keeps its full list
        for v in 0..512 {
            if cull.is_set(v) {
                assert_eq!(vcsv.fragments_at(v), vsv.fragments_at(v));
            } else {
                assert!(vcsv.fragments_at(v).is_empty());
            }
        }
    }

    #[test]
    fn vcsv_segment_rejection_is_counted() {
        let caps = vec![
            Capsule::new(DVec3::splat(1.5), DVec3::splat(2.5), 0.3),
            Capsule::new(DVec3::splat(12.5), DVec3::splat(13.5), 0.3),
        ];
        let t = SegmentTable::from_capsules(caps);
        let p = voxelize(&t, 16, Method::Capsule, DEFAULT_R_MIN);
        let mut mask = vec![false; 4096];
        mask[voxel_index(16, UVec3::splat(2))] = true;
        let a = build_vcsv(&t, &p, &BitPyramid::from_base(16, mask), Method::Capsule, DEFAULT_R_MIN).unwrap();
        assert_eq!(a.stats.segments_culled, 1);
        assert_eq!(a.fragments, vec![0]);
    }

    #[test]
    fn dump_round_trip() {
        let mut rng = SplitMix(1);
        let t = random_table(&mut rng, 20, 8.0, 4.0);
        let p = voxelize(&t, 8, Method::Capsule, DEFAULT_R_MIN);
        for a in [build_vsv(&t, &p, Method::Capsule, DEFAULT_R_MIN).unwrap(), build_vss(&t, 8, Method::Capsule, DEFAULT_R_MIN).unwrap()] {
            let mut bytes = Vec::new();
            a.write_dump(&mut bytes).unwrap();
            let mut b = ABuffer::read_dump(&bytes).unwrap();
            b.stats = a.stats;
            assert_eq!(a, b);
        }
        assert!(ABuffer::read_dump(b"ABUX").is_err());
    }

    #[test]
    fn mismatched_pyramid_is_a_consistency_fault() {
        let c = Capsule::new(DVec3::splat(2.0), DVec3::splat(5.0), 0.5);
        let t = SegmentTable::from_capsules(vec![c]);
        let p = voxelize(&t, 8, Method::Dda, DEFAULT_R_MIN);
        assert!(matches!(build_vsv(&t, &p, Method::Capsule, DEFAULT_R_MIN), Err(Error::Consistency { .. })));
    }
}
