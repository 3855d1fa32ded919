//! Billiard shapes as site masks on the square lattice.
//!
//! Occupied sites are indexed row-major: rows `j` ascending, then columns `i`
//! ascending within a row. Bonds join occupied sites at Manhattan distance 1
//! with free boundaries (no wraparound).

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, BilliardError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteCoord {
    pub i: usize,
    pub j: usize,
}

impl SiteCoord {
    pub const ORIGIN: SiteCoord = SiteCoord { i: 0, j: 0 };

    pub fn new(i: usize, j: usize) -> Self {
        SiteCoord { i, j }
    }
}

impl fmt::Display for SiteCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeTag {
    Rectangle,
    QuarterStadium,
    Custom,
}

/// An immutable set of occupied lattice sites with its bond structure.
#[derive(Debug, Clone, PartialEq)]
pub struct BilliardGeometry {
    shape: ShapeTag,
    lx: usize,
    ly: usize,
    /// Site index for each bounding-box cell, `None` when unoccupied.
    index_of: Vec<Option<usize>>,
    coord_of: Vec<SiteCoord>,
    bonds: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl BilliardGeometry {
    fn from_mask(shape: ShapeTag, lx: usize, ly: usize, occupied: &[bool]) -> Self {
        debug_assert_eq!(occupied.len(), lx * ly);
        let mut index_of = vec![None; lx * ly];
        let mut coord_of = Vec::new();
        for j in 0..ly {
            for i in 0..lx {
                if occupied[j * lx + i] {
                    index_of[j * lx + i] = Some(coord_of.len());
                    coord_of.push(SiteCoord { i, j });
                }
            }
        }

        let mut bonds = Vec::new();
        let mut adjacency = vec![Vec::with_capacity(4); coord_of.len()];
        for (m, s) in coord_of.iter().enumerate() {
            let right = (s.i + 1 < lx).then(|| index_of[s.j * lx + s.i + 1]).flatten();
            let up = (s.j + 1 < ly).then(|| index_of[(s.j + 1) * lx + s.i]).flatten();
            for other in [right, up].into_iter().flatten() {
                bonds.push((m, other));
                adjacency[m].push(other);
                adjacency[other].push(m);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }

        BilliardGeometry {
            shape,
            lx,
            ly,
            index_of,
            coord_of,
            bonds,
            adjacency,
        }
    }

    pub fn shape(&self) -> ShapeTag {
        self.shape
    }

    /// Bounding box `(Lx, Ly)`.
    pub fn bounding_box(&self) -> (usize, usize) {
        (self.lx, self.ly)
    }

    pub fn n_sites(&self) -> usize {
        self.coord_of.len()
    }

    pub fn is_occupied(&self, s: SiteCoord) -> bool {
        self.index_of(s).is_some()
    }

    pub fn index_of(&self, s: SiteCoord) -> Option<usize> {
        if s.i < self.lx && s.j < self.ly {
            self.index_of[s.j * self.lx + s.i]
        } else {
            None
        }
    }

    pub fn coord_of(&self, m: usize) -> Option<SiteCoord> {
        self.coord_of.get(m).copied()
    }

    pub fn coords(&self) -> &[SiteCoord] {
        &self.coord_of
    }

    /// Bonds as `(m, m')` with `m < m'`, in construction order.
    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    pub fn neighbors(&self, m: usize) -> Result<&[usize]> {
        match self.adjacency.get(m) {
            Some(list) => Ok(list),
            None => invalid(format!(
                "site index {m} out of range for {} sites",
                self.n_sites()
            )),
        }
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Larger bounding-box dimension.
    pub fn characteristic_length(&self) -> usize {
        self.lx.max(self.ly)
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_sites();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(m) = queue.pop_front() {
            for &k in &self.adjacency[m] {
                if !seen[k] {
                    seen[k] = true;
                    reached += 1;
                    queue.push_back(k);
                }
            }
        }
        reached == n
    }

    /// Occupation mask over the bounding box, row-major.
    pub fn mask(&self) -> Vec<bool> {
        self.index_of.iter().map(Option::is_some).collect()
    }

    /// Text grid: header `Lx Ly`, then one line per row `j = 0..Ly` with `#`
    /// for occupied and `.` for empty cells.
    pub fn to_text_grid(&self) -> String {
        let mut out = format!("{} {}\n", self.lx, self.ly);
        for j in 0..self.ly {
            for i in 0..self.lx {
                out.push(if self.index_of[j * self.lx + i].is_some() { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }
}

pub fn build_rectangle(lx: usize, ly: usize) -> Result<BilliardGeometry> {
    if lx == 0 || ly == 0 {
        return invalid(format!("rectangle dimensions must be positive, got {lx}x{ly}"));
    }
    Ok(BilliardGeometry::from_mask(
        ShapeTag::Rectangle,
        lx,
        ly,
        &vec![true; lx * ly],
    ))
}

/// Quarter of a Bunimovich stadium: a straight section of width `a` joined to
/// a quarter disk of radius `R - 1` centered at `(a - 1, 0)`.
///
/// Occupied: `0 <= j < R` and (`i < a` or `(i - a + 1)^2 + j^2 <= (R - 1)^2`).
pub fn build_quarter_stadium(a: usize, r: usize) -> Result<BilliardGeometry> {
    if a == 0 || r == 0 {
        return invalid(format!("stadium parameters must be positive, got a={a}, R={r}"));
    }
    let lx = a + r - 1;
    let ly = r;
    let radius_sq = (r - 1) * (r - 1);
    let mut occupied = vec![false; lx * ly];
    for j in 0..ly {
        for i in 0..lx {
            occupied[j * lx + i] = i < a || {
                let dx = i + 1 - a;
                dx * dx + j * j <= radius_sq
            };
        }
    }
    Ok(BilliardGeometry::from_mask(ShapeTag::QuarterStadium, lx, ly, &occupied))
}

/// Geometry over the `true` cells of `mask`, indexed `mask[j][i]`.
///
/// Rows must all have the same length. A disconnected occupied set is
/// accepted with a logged warning.
pub fn build_custom(mask: &[Vec<bool>]) -> Result<BilliardGeometry> {
    let ly = mask.len();
    let lx = mask.first().map_or(0, Vec::len);
    if ly == 0 || lx == 0 {
        return invalid("custom mask is empty");
    }
    if let Some(j) = mask.iter().position(|row| row.len() != lx) {
        return invalid(format!(
            "custom mask row {j} has length {}, expected {lx}",
            mask[j].len()
        ));
    }
    let flat: Vec<bool> = mask.iter().flatten().copied().collect();
    if !flat.iter().any(|&b| b) {
        return invalid("custom mask has no occupied site");
    }
    let g = BilliardGeometry::from_mask(ShapeTag::Custom, lx, ly, &flat);
    if !g.is_connected() {
        warn!("custom billiard with {} sites is disconnected", g.n_sites());
    }
    Ok(g)
}

/// Parses the text grid format written by [`BilliardGeometry::to_text_grid`].
pub fn parse_text_grid(text: &str) -> Result<BilliardGeometry> {
    let mut lines = text
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| BilliardError::InvalidArgument("mask file is empty".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(usize::from_str)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| BilliardError::InvalidArgument(format!("bad mask header {header:?}: {e}")))?;
    let [lx, ly] = dims[..] else {
        return invalid(format!("mask header must be `Lx Ly`, got {header:?}"));
    };

    let mut mask = Vec::with_capacity(ly);
    for (j, line) in lines.enumerate() {
        if j >= ly {
            return invalid(format!("mask has more than {ly} rows"));
        }
        let row: Vec<bool> = line
            .trim()
            .chars()
            .map(|c| match c {
                '#' => Ok(true),
                '.' => Ok(false),
                other => invalid(format!("unexpected character {other:?} in mask row {j}")),
            })
            .collect::<Result<_>>()?;
        if row.len() != lx {
            return invalid(format!("mask row {j} has {} cells, expected {lx}", row.len()));
        }
        mask.push(row);
    }
    if mask.len() != ly {
        return invalid(format!("mask has {} rows, expected {ly}", mask.len()));
    }
    build_custom(&mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefectConfig {
    pub p_defect: f64,
    pub seed: u64,
    pub protected_sites: Vec<SiteCoord>,
}

impl DefectConfig {
    /// Protects the corner `(0, 0)` where the excitation starts.
    pub fn new(p_defect: f64, seed: u64) -> Self {
        DefectConfig {
            p_defect,
            seed,
            protected_sites: vec![SiteCoord::ORIGIN],
        }
    }
}

/// Removes each unprotected site independently with probability `p_defect`.
///
/// Sites are visited in index order, one uniform draw per unprotected site,
/// so the outcome depends only on the geometry and the seed.
pub fn apply_defects(g: &BilliardGeometry, d: &DefectConfig) -> Result<BilliardGeometry> {
    if !(0.0..=1.0).contains(&d.p_defect) {
        return invalid(format!("p_defect must lie in [0, 1], got {}", d.p_defect));
    }
    if let Some(s) = d.protected_sites.iter().find(|s| !g.is_occupied(**s)) {
        return invalid(format!("protected site {s} is not occupied"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
    let mut occupied = g.mask();
    for s in g.coords() {
        if d.protected_sites.contains(s) {
            continue;
        }
        if rng.random::<f64>() < d.p_defect {
            occupied[s.j * g.lx + s.i] = false;
        }
    }
    Ok(BilliardGeometry::from_mask(g.shape, g.lx, g.ly, &occupied))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force pair scan, independent of the construction loop.
    fn enumerate_bonds(g: &BilliardGeometry) -> usize {
        let c = g.coords();
        let mut count = 0;
        for a in 0..c.len() {
            for b in a + 1..c.len() {
                let d = c[a].i.abs_diff(c[b].i) + c[a].j.abs_diff(c[b].j);
                if d == 1 {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn rectangle_small_cases() {
        let g = build_rectangle(1, 1).unwrap();
        assert_eq!((g.n_sites(), g.bonds().len()), (1, 0));
        let g = build_rectangle(2, 1).unwrap();
        assert_eq!((g.n_sites(), g.bonds().len()), (2, 1));
    }

    #[test]
    fn rectangle_bond_count_matches_enumeration() {
        let g = build_rectangle(30, 20).unwrap();
        assert_eq!(g.n_sites(), 600);
        assert_eq!(enumerate_bonds(&g), 1150);
        assert_eq!(g.bonds().len(), 30 * 19 + 20 * 29);
    }

    #[test]
    fn rectangle_rejects_zero() {
        assert!(matches!(build_rectangle(0, 3), Err(BilliardError::InvalidArgument(_))));
        assert!(build_rectangle(3, 0).is_err());
    }

    #[test]
    fn stadium_degenerate_and_small() {
        let g = build_quarter_stadium(1, 1).unwrap();
        assert_eq!(g.coords(), &[SiteCoord::ORIGIN]);

        let g = build_quarter_stadium(2, 2).unwrap();
        let mut sites = g.coords().to_vec();
        sites.sort();
        let mut expected = vec![
            SiteCoord::new(0, 0),
            SiteCoord::new(1, 0),
            SiteCoord::new(0, 1),
            SiteCoord::new(1, 1),
            SiteCoord::new(2, 0),
        ];
        expected.sort();
        assert_eq!(sites, expected);
        assert_eq!(g.bounding_box(), (3, 2));
    }

    #[test]
    fn stadium_15_15_site_count() {
        // Direct count of the mask predicate over an oversized box.
        let (a, r) = (15i64, 15i64);
        let mut count = 0;
        for j in 0..40i64 {
            for i in 0..40i64 {
                let inside = j < r && (i < a || (i - a + 1).pow(2) + j.pow(2) <= (r - 1).pow(2));
                if inside {
                    count += 1;
                }
            }
        }
        let g = build_quarter_stadium(15, 15).unwrap();
        assert_eq!(g.n_sites(), count);
        assert_eq!(g.n_sites(), 378);
        assert_eq!(g.bounding_box(), (29, 15));
        assert_eq!(g.characteristic_length(), 29);
        assert!(g.is_occupied(SiteCoord::ORIGIN));
        assert_eq!(enumerate_bonds(&g), g.bonds().len());
        assert!(g.is_connected());
    }

    #[test]
    fn stadium_rejects_zero() {
        assert!(build_quarter_stadium(0, 4).is_err());
        assert!(build_quarter_stadium(4, 0).is_err());
    }

    #[test]
    fn custom_masks() {
        let full = vec![vec![true; 3]; 3];
        let g = build_custom(&full).unwrap();
        let r = build_rectangle(3, 3).unwrap();
        assert_eq!(g.bonds(), r.bonds());
        assert_eq!(g.coords(), r.coords());

        let checker = vec![vec![true, false], vec![false, true]];
        let g = build_custom(&checker).unwrap();
        assert_eq!((g.n_sites(), g.bonds().len()), (2, 0));
        assert!(!g.is_connected());

        let ell = vec![vec![true, true], vec![true, false]];
        let g = build_custom(&ell).unwrap();
        assert_eq!((g.n_sites(), g.bonds().len()), (3, 2));
        assert_eq!(enumerate_bonds(&g), 2);
    }

    #[test]
    fn custom_rejects_empty() {
        assert!(build_custom(&[]).is_err());
        assert!(build_custom(&[vec![false, false]]).is_err());
        assert!(build_custom(&[vec![true], vec![true, true]]).is_err());
    }

    #[test]
    fn neighbor_degrees() {
        let g = build_rectangle(4, 3).unwrap();
        let corner = g.index_of(SiteCoord::new(0, 0)).unwrap();
        assert_eq!(g.neighbors(corner).unwrap().len(), 2);
        let bulk = g.index_of(SiteCoord::new(1, 1)).unwrap();
        assert_eq!(g.neighbors(bulk).unwrap().len(), 4);
        assert_eq!(g.max_degree(), 4);
        assert!(g.neighbors(12).is_err());

        let single = build_rectangle(1, 1).unwrap();
        assert!(single.neighbors(0).unwrap().is_empty());
    }

    #[test]
    fn index_order_is_row_major() {
        let g = build_rectangle(3, 2).unwrap();
        assert_eq!(g.coord_of(1), Some(SiteCoord::new(1, 0)));
        assert_eq!(g.coord_of(3), Some(SiteCoord::new(0, 1)));
    }

    #[test]
    fn defects_zero_and_certain() {
        let g = build_rectangle(6, 5).unwrap();
        for seed in [0, 1, 99] {
            assert_eq!(apply_defects(&g, &DefectConfig::new(0.0, seed)).unwrap(), g);
        }
        let h = apply_defects(&g, &DefectConfig::new(1.0, 3)).unwrap();
        assert_eq!(h.coords(), &[SiteCoord::ORIGIN]);
        assert!(h.bonds().is_empty());
    }

    #[test]
    fn defects_reject_bad_input() {
        let g = build_quarter_stadium(3, 3).unwrap();
        let mut d = DefectConfig::new(0.1, 0);
        d.protected_sites.push(SiteCoord::new(4, 2));
        assert!(apply_defects(&g, &d).is_err());
        assert!(apply_defects(&g, &DefectConfig::new(1.5, 0)).is_err());
    }

    #[test]
    fn defects_match_binomial_statistics() {
        let g = build_rectangle(30, 20).unwrap();
        let p = 5e-3;
        let trials = 10_000;
        let eligible = (g.n_sites() - 1) as f64;
        let total: usize = (0..trials)
            .map(|seed| g.n_sites() - apply_defects(&g, &DefectConfig::new(p, seed)).unwrap().n_sites())
            .sum();
        let mean = total as f64 / trials as f64;
        let expected = eligible * p;
        let sigma = (eligible * p * (1.0 - p) / trials as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * sigma, "mean {mean} vs {expected} ± {sigma}");
    }

    #[test]
    fn defects_keep_surviving_bonds() {
        let g = build_rectangle(8, 6).unwrap();
        let h = apply_defects(&g, &DefectConfig::new(0.2, 11)).unwrap();
        assert_eq!(enumerate_bonds(&h), h.bonds().len());
        for (m, s) in h.coords().iter().enumerate() {
            assert_eq!(h.index_of(*s), Some(m));
        }
    }

    #[test]
    fn text_grid_round_trip() {
        let g = build_quarter_stadium(4, 5).unwrap();
        let text = g.to_text_grid();
        assert!(text.starts_with("8 5\n"));
        let back = parse_text_grid(&text).unwrap();
        assert_eq!(back.coords(), g.coords());
        assert_eq!(back.bonds(), g.bonds());
        assert_eq!(back.shape(), ShapeTag::Custom);
    }

    #[test]
    fn text_grid_errors() {
        assert!(parse_text_grid("").is_err());
        assert!(parse_text_grid("2 2\n##\n").is_err());
        assert!(parse_text_grid("2 1\n#x\n").is_err());
        assert!(parse_text_grid("2\n##\n").is_err());
    }
}
