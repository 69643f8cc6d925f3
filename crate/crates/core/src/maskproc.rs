//! Road-mask post-processing.
//!
//! Objects standing on the road punch holes into the road segmentation,
//! and objects at the horizon notch its silhouette. Filling the convex
//! hull of the largest road component and subtracting the component
//! itself recovers those regions as obstacle candidates.
//!
//! All hull and fill predicates use exact integer arithmetic on pixel
//! coordinates, so results are invariant under mirroring.

use crate::error::{Error, Result};
use crate::geometry::convex_hull_i64;
use crate::types::{LabelMask, MaskKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskprocParams {
    /// Minimum candidate area in pixels.
    pub min_area: usize,
    /// Maximum candidate area as a fraction of the image.
    pub max_area_frac: f64,
}

impl Default for MaskprocParams {
    fn default() -> Self {
        MaskprocParams {
            min_area: 9,
            max_area_frac: 0.25,
        }
    }
}

impl MaskprocParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_area == 0 {
            return Err(Error::validation("maskproc.min_area", "must be >= 1"));
        }
        if !(self.max_area_frac > 0.0 && self.max_area_frac <= 1.0) {
            return Err(Error::validation(
                "maskproc.max_area_frac",
                "must be in (0, 1]",
            ));
        }
        Ok(())
    }
}

/// One candidate region: a connected hole in the road surface.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRegion {
    /// Row-major pixel list.
    pub pixels: Vec<(u32, u32)>,
}

impl CandidateRegion {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    /// (min_x, min_y, max_x, max_y) inclusive.
    pub fn bbox(&self) -> (u32, u32, u32, u32) {
        let mut it = self.pixels.iter();
        let &(x0, y0) = it.next().expect("regions are never empty");
        it.fold((x0, y0, x0, y0), |(ax, ay, bx, by), &(x, y)| {
            (ax.min(x), ay.min(y), bx.max(x), by.max(y))
        })
    }
}

/// Output of road-mask post-processing for one image.
#[derive(Debug, Clone)]
pub struct RoadRegions {
    pub width: u32,
    pub height: u32,
    /// Largest 4-connected road component.
    pub road: Vec<bool>,
    /// Filled convex hull of that component.
    pub hull: Vec<bool>,
    /// Accepted candidate regions in scan order of their first pixel.
    pub candidates: Vec<CandidateRegion>,
    /// Candidate index per pixel, -1 for none.
    pub candidate_of_pixel: Vec<i32>,
}

impl RoadRegions {
    pub fn candidate_at(&self, x: u32, y: u32) -> Option<usize> {
        let v = self.candidate_of_pixel[y as usize * self.width as usize + x as usize];
        (v >= 0).then_some(v as usize)
    }

    pub fn is_road(&self, x: u32, y: u32) -> bool {
        self.road[y as usize * self.width as usize + x as usize]
    }
}

/// 4-connected components of `set` pixels, discovered in row-major order;
/// each component's pixel list is in row-major order.
fn components(width: u32, height: u32, set: &[bool]) -> Vec<Vec<(u32, u32)>> {
    let w = width as usize;
    let idx = |x: u32, y: u32| y as usize * w + x as usize;
    let mut seen = vec![false; set.len()];
    let mut out = Vec::new();
    for y in 0..height {
        for x in 0..width {
            if !set[idx(x, y)] || seen[idx(x, y)] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = std::collections::VecDeque::new();
            seen[idx(x, y)] = true;
            queue.push_back((x, y));
            while let Some((cx, cy)) = queue.pop_front() {
                comp.push((cx, cy));
                let mut push = |nx: u32, ny: u32| {
                    if set[idx(nx, ny)] && !seen[idx(nx, ny)] {
                        seen[idx(nx, ny)] = true;
                        queue.push_back((nx, ny));
                    }
                };
                if cx > 0 {
                    push(cx - 1, cy);
                }
                if cx + 1 < width {
                    push(cx + 1, cy);
                }
                if cy > 0 {
                    push(cx, cy - 1);
                }
                if cy + 1 < height {
                    push(cx, cy + 1);
                }
            }
            comp.sort_unstable_by_key(|&(px, py)| (py, px));
            out.push(comp);
        }
    }
    out
}

#[inline]
fn div_floor(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    num.div_euclid(den)
}

#[inline]
fn div_ceil(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    -(-num).div_euclid(den)
}

/// Exact rational x-coordinate, `den > 0`.
#[derive(Clone, Copy)]
struct Rat {
    num: i128,
    den: i128,
}

impl Rat {
    fn int(v: i64) -> Rat {
        Rat {
            num: v as i128,
            den: 1,
        }
    }

    fn less_than(&self, other: &Rat) -> bool {
        self.num * other.den < other.num * self.den
    }

    fn ceil(&self) -> i128 {
        div_ceil(self.num, self.den)
    }

    fn floor(&self) -> i128 {
        div_floor(self.num, self.den)
    }
}

/// Marks all pixels whose centers lie inside or on the convex hull of
/// `pts` (integer pixel coordinates). Exact arithmetic throughout.
fn fill_hull(width: u32, height: u32, pts: &[(i64, i64)]) -> Vec<bool> {
    let w = width as usize;
    let mut out = vec![false; w * height as usize];
    let hull = convex_hull_i64(pts);
    if hull.is_empty() {
        return out;
    }
    if hull.len() <= 2 {
        // Degenerate hull: lattice points exactly on the segment.
        let (a, b) = (hull[0], *hull.last().unwrap());
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        if dx == 0 && dy == 0 {
            out[a.1 as usize * w + a.0 as usize] = true;
            return out;
        }
        let steps = dx.abs().max(dy.abs());
        let g = gcd(dx.abs(), dy.abs());
        let (sx, sy) = (dx / g, dy / g);
        let mut i = 0;
        loop {
            let (x, y) = (a.0 + sx * i, a.1 + sy * i);
            out[y as usize * w + x as usize] = true;
            if (x, y) == b {
                break;
            }
            i += 1;
            if i > steps {
                break;
            }
        }
        return out;
    }

    let n = hull.len();
    let y_min = hull.iter().map(|p| p.1).min().unwrap();
    let y_max = hull.iter().map(|p| p.1).max().unwrap();
    for y in y_min..=y_max {
        let mut lo: Option<Rat> = None;
        let mut hi: Option<Rat> = None;
        let mut extend = |x: Rat| {
            if lo.as_ref().is_none_or(|l| x.less_than(l)) {
                lo = Some(x);
            }
            if hi.as_ref().is_none_or(|h| h.less_than(&x)) {
                hi = Some(x);
            }
        };
        for i in 0..n {
            let p = hull[i];
            let q = hull[(i + 1) % n];
            let (py, qy) = (p.1, q.1);
            if py == qy {
                if py == y {
                    extend(Rat::int(p.0));
                    extend(Rat::int(q.0));
                }
                continue;
            }
            if y < py.min(qy) || y > py.max(qy) {
                continue;
            }
            // x = px + (y - py) * (qx - px) / (qy - py), normalized den > 0.
            let mut num = p.0 as i128 * (qy - py) as i128 + (y - py) as i128 * (q.0 - p.0) as i128;
            let mut den = (qy - py) as i128;
            if den < 0 {
                num = -num;
                den = -den;
            }
            extend(Rat { num, den });
        }
        if let (Some(lo), Some(hi)) = (lo, hi) {
            let x0 = lo.ceil().max(0) as i64;
            let x1 = hi.floor().min(width as i128 - 1) as i64;
            for x in x0..=x1 {
                out[y as usize * w + x as usize] = true;
            }
        }
    }
    out
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

/// Post-processes one road mask into obstacle candidate regions.
pub fn extract_candidates(road_mask: &LabelMask, params: &MaskprocParams) -> Result<RoadRegions> {
    params.validate()?;
    road_mask.validate()?;
    if road_mask.kind != MaskKind::Road {
        return Err(Error::validation("maskproc", "expected a road mask"));
    }
    let (width, height) = (road_mask.width, road_mask.height);
    let w = width as usize;
    let n = w * height as usize;

    let set: Vec<bool> = road_mask.data.iter().map(|&v| v == 1).collect();
    let comps = components(width, height, &set);
    let mut road = vec![false; n];
    let mut hull = vec![false; n];
    let Some(largest) = comps.iter().max_by_key(|c| c.len()) else {
        return Ok(RoadRegions {
            width,
            height,
            road,
            hull,
            candidates: Vec::new(),
            candidate_of_pixel: vec![-1; n],
        });
    };
    // max_by_key returns the last maximum; components are in scan order,
    // so prefer the first one on ties.
    let largest = comps
        .iter()
        .find(|c| c.len() == largest.len())
        .expect("at least one component");
    for &(x, y) in largest {
        road[y as usize * w + x as usize] = true;
    }
    let pts: Vec<(i64, i64)> = largest.iter().map(|&(x, y)| (x as i64, y as i64)).collect();
    hull = fill_hull(width, height, &pts);

    // Holes: hull minus the largest road component.
    let holes: Vec<bool> = hull
        .iter()
        .zip(&road)
        .map(|(&h, &r)| h && !r)
        .collect();
    let max_area = (params.max_area_frac * n as f64).floor() as usize;
    let mut candidates = Vec::new();
    let mut candidate_of_pixel = vec![-1i32; n];
    for comp in components(width, height, &holes) {
        if comp.len() < params.min_area || comp.len() > max_area {
            continue;
        }
        let touches_border = comp
            .iter()
            .any(|&(x, y)| x == 0 || x + 1 == width || y + 1 == height);
        if touches_border {
            continue;
        }
        let id = candidates.len() as i32;
        for &(x, y) in &comp {
            candidate_of_pixel[y as usize * w + x as usize] = id;
        }
        candidates.push(CandidateRegion { pixels: comp });
    }
    Ok(RoadRegions {
        width,
        height,
        road,
        hull,
        candidates,
        candidate_of_pixel,
    })
}

/// Naive depth baseline: mean camera-space depth of the projected points
/// landing inside the candidate's pixel set, plus the supporting count.
/// `None` without any supporting reflection. Depths are summed in sorted
/// order so the result is independent of input permutation.
pub fn naive_depth(
    candidate: &CandidateRegion,
    projected: &[(usize, u32, u32, f64)],
) -> Option<(f64, usize)> {
    let pixels: std::collections::BTreeSet<(u32, u32)> =
        candidate.pixels.iter().copied().collect();
    let mut depths: Vec<f64> = projected
        .iter()
        .filter(|&&(_, u, v, _)| pixels.contains(&(u, v)))
        .map(|&(_, _, _, d)| d)
        .collect();
    if depths.is_empty() {
        return None;
    }
    depths.sort_by(f64::total_cmp);
    let n = depths.len();
    Some((depths.iter().sum::<f64>() / n as f64, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;

    fn mask_from_rows(rows: &[&str]) -> LabelMask {
        let height = rows.len() as u32;
        let width = rows[0].len() as u32;
        let mut m = LabelMask::new_filled(MaskKind::Road, 0, 1, width, height, 0);
        for (y, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), width as usize);
            for (x, ch) in row.chars().enumerate() {
                if ch == '1' {
                    m.set(x as u32, y as u32, 1);
                }
            }
        }
        m
    }

    fn params(min_area: usize) -> MaskprocParams {
        MaskprocParams {
            min_area,
            max_area_frac: 0.25,
        }
    }

    #[test]
    fn hole_in_road_becomes_a_candidate() {
        let m = mask_from_rows(&[
            "0000000000",
            "1111111111",
            "1111001111",
            "1111001111",
            "1111111111",
            "0000000000",
        ]);
        let r = extract_candidates(&m, &params(4)).unwrap();
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(
            r.candidates[0].pixels,
            vec![(4, 2), (5, 2), (4, 3), (5, 3)]
        );
        assert_eq!(r.candidate_at(4, 2), Some(0));
        assert_eq!(r.candidate_at(3, 2), None);
    }

    #[test]
    fn small_holes_are_dropped_by_min_area() {
        let m = mask_from_rows(&[
            "1111111111",
            "1111011111",
            "1111111111",
        ]);
        let r = extract_candidates(&m, &params(2)).unwrap();
        assert!(r.candidates.is_empty());
        let r = extract_candidates(&m, &params(1)).unwrap();
        assert_eq!(r.candidates.len(), 1);
    }

    #[test]
    fn huge_regions_are_dropped_by_max_area() {
        // A 4x4 hole in a 10x6 image with max_area_frac 0.25 -> 15 px cap.
        let m = mask_from_rows(&[
            "1111111111",
            "1100001111",
            "1100001111",
            "1100001111",
            "1100001111",
            "1111111111",
        ]);
        let r = extract_candidates(&m, &params(1)).unwrap();
        assert!(r.candidates.iter().all(|c| c.area() <= 15));
        assert!(r.candidates.is_empty());
    }

    #[test]
    fn border_touching_regions_are_dropped() {
        let m = mask_from_rows(&[
            "1111111111",
            "0011111100",
            "1111111111",
            "1111110011", // touches nothing yet
            "1111110011", // bottom row: touches bottom border
        ]);
        let r = extract_candidates(&m, &params(1)).unwrap();
        // Left notch touches x=0, right notch touches x=9, lower notch
        // touches the bottom border: all rejected.
        assert!(r.candidates.is_empty());
    }

    #[test]
    fn horizon_notch_at_image_top_is_kept() {
        let m = mask_from_rows(&[
            "1111001111",
            "1111001111",
            "1111111111",
            "1111111111",
        ]);
        let r = extract_candidates(&m, &params(1)).unwrap();
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(r.candidates[0].area(), 4);
        assert_eq!(r.candidates[0].bbox(), (4, 0, 5, 1));
    }

    #[test]
    fn only_the_largest_component_is_road() {
        // Second small road patch inside the hull counts as a hole.
        let m = mask_from_rows(&[
            "1111111111",
            "1110000111",
            "1110110111",
            "1110000111",
            "1111111111",
        ]);
        let r = extract_candidates(&m, &params(1)).unwrap();
        assert!(!r.is_road(4, 2), "small patch is not the road component");
        // The ring hole plus the enclosed patch form one region of 12 px.
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(r.candidates[0].area(), 12);
    }

    #[test]
    fn slanted_hull_fill_matches_exact_point_test() {
        // Oracle: a pixel is in the hull iff all CCW edge crosses are >= 0.
        let mut rng = StreamRng::new(42, &[1]);
        for case in 0..50u64 {
            let width = 24u32;
            let height = 18u32;
            let n_pts = 3 + rng.index(8);
            let all: Vec<(i64, i64)> = (0..n_pts)
                .map(|_| {
                    (
                        rng.index(width as usize) as i64,
                        rng.index(height as usize) as i64,
                    )
                })
                .collect();
            let filled = fill_hull(width, height, &all);
            let hull = convex_hull_i64(&all);
            for y in 0..height {
                for x in 0..width {
                    let inside = if hull.len() < 3 {
                        filled[y as usize * width as usize + x as usize]
                    } else {
                        (0..hull.len()).all(|i| {
                            let p = hull[i];
                            let q = hull[(i + 1) % hull.len()];
                            let cross = (q.0 - p.0) as i128 * (y as i128 - p.1 as i128)
                                - (q.1 - p.1) as i128 * (x as i128 - p.0 as i128);
                            cross >= 0
                        })
                    };
                    assert_eq!(
                        filled[y as usize * width as usize + x as usize],
                        inside,
                        "case {case}: pixel ({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn mirroring_the_mask_mirrors_the_candidates() {
        let m = mask_from_rows(&[
            "0001111111110",
            "0011111111100",
            "0111100111000",
            "1111100110000",
            "1111111100000",
        ]);
        let mut mirrored = m.clone();
        for y in 0..m.height {
            for x in 0..m.width {
                mirrored.set(m.width - 1 - x, y, m.at(x, y));
            }
        }
        let a = extract_candidates(&m, &params(1)).unwrap();
        let b = extract_candidates(&mirrored, &params(1)).unwrap();
        assert_eq!(a.candidates.len(), b.candidates.len());
        let mut mirrored_pixels: Vec<Vec<(u32, u32)>> = a
            .candidates
            .iter()
            .map(|c| {
                let mut px: Vec<(u32, u32)> =
                    c.pixels.iter().map(|&(x, y)| (m.width - 1 - x, y)).collect();
                px.sort_unstable_by_key(|&(x, y)| (y, x));
                px
            })
            .collect();
        mirrored_pixels.sort();
        let mut got: Vec<Vec<(u32, u32)>> =
            b.candidates.iter().map(|c| c.pixels.clone()).collect();
        got.sort();
        assert_eq!(got, mirrored_pixels);
    }

    #[test]
    fn empty_mask_yields_nothing() {
        let m = LabelMask::new_filled(MaskKind::Road, 0, 1, 8, 6, 0);
        let r = extract_candidates(&m, &MaskprocParams::default()).unwrap();
        assert!(r.candidates.is_empty());
        assert!(r.road.iter().all(|&v| !v));
    }

    #[test]
    fn wrong_mask_kind_is_rejected() {
        let m = LabelMask::new_filled(MaskKind::Instance, 0, 1, 8, 6, 0);
        assert!(extract_candidates(&m, &MaskprocParams::default()).is_err());
    }

    #[test]
    fn naive_depth_averages_in_mask_points() {
        let candidate = CandidateRegion {
            pixels: vec![(4, 4), (5, 4), (4, 5), (5, 5)],
        };
        let projected = vec![
            (0, 4, 4, 10.0),
            (1, 5, 4, 20.0),
            (2, 4, 5, 30.0),
            (3, 9, 9, 99.0), // outside the mask
        ];
        assert_eq!(naive_depth(&candidate, &projected), Some((20.0, 3)));
        assert_eq!(naive_depth(&candidate, &[(0, 9, 9, 1.0)]), None);
        assert_eq!(naive_depth(&candidate, &[]), None);
    }

    #[test]
    fn naive_depth_is_permutation_invariant() {
        let candidate = CandidateRegion {
            pixels: (0..8).flat_map(|x| (0..8).map(move |y| (x, y))).collect(),
        };
        let mut rng = StreamRng::new(11, &[0x6d61736b]);
        let projected: Vec<(usize, u32, u32, f64)> = (0..50)
            .map(|i| {
                (
                    i,
                    (rng.next_f64() * 8.0) as u32,
                    (rng.next_f64() * 8.0) as u32,
                    5.0 + 40.0 * rng.next_f64(),
                )
            })
            .collect();
        let base = naive_depth(&candidate, &projected).unwrap();
        let mut reversed = projected.clone();
        reversed.reverse();
        let mut rotated = projected.clone();
        rotated.rotate_left(17);
        assert_eq!(naive_depth(&candidate, &reversed), Some(base));
        assert_eq!(naive_depth(&candidate, &rotated), Some(base));
    }
}
