//! Deployment geometry and the shared scatterer field.
//!
//! All links in a realization are built from one common set of scatterer
//! rays, so MSs that sit close together see nearly the same propagation
//! paths. A ray contributes to link (AP, MS) when it falls inside the ellipse
//! with foci at the two devices whose excess path length is at most the
//! configured budget.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::los_probability;
use crate::config::SimConfig;
use crate::error::{Result, SimError};
use crate::seed::{Stream, TrialSeeds};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn midpoint(&self, other: &Point2) -> Point2 {
        Point2::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScattererRay {
    pub cluster_id: u32,
    pub position: Point2,
}

/// Device placement: positions and array boresights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub ap_positions: Vec<Point2>,
    pub ms_positions: Vec<Point2>,
    pub ap_boresights: Vec<f64>,
    pub ms_boresights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRealization {
    pub schema_version: u32,
    /// Key of the trial's random streams.
    pub trial_key: u64,
    #[serde(flatten)]
    pub placement: Placement,
    pub scatterers: Vec<ScattererRay>,
    /// `los_indicator[k][m]` is 1 when MS k has a LOS path to AP m.
    pub los_indicator: Vec<Vec<u8>>,
    /// Shadowing of the LOS path of each link, dB, `[k][m]`.
    pub los_shadow_db: Vec<Vec<f64>>,
}

impl ScenarioRealization {
    /// Draws a full realization from the trial's streams.
    pub fn generate(cfg: &SimConfig, seeds: &TrialSeeds) -> Self {
        let placement = place_entities(cfg, &mut seeds.rng(Stream::Placement));
        let scatterers = generate_scatterers(cfg, &mut seeds.rng(Stream::Scatterers));
        let los_indicator = draw_los_indicators(&placement, &mut seeds.rng(Stream::Los));
        let sigma = cfg.los_pathloss().sigma_db;
        let mut rng = seeds.rng(Stream::Shadowing);
        let los_shadow_db = placement
            .ms_positions
            .iter()
            .map(|_| {
                placement
                    .ap_positions
                    .iter()
                    .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        Self {
            schema_version: SCENARIO_SCHEMA_VERSION,
            trial_key: seeds.key(),
            placement,
            scatterers,
            los_indicator,
            los_shadow_db,
        }
    }

    pub fn num_aps(&self) -> usize {
        self.placement.ap_positions.len()
    }

    pub fn num_users(&self) -> usize {
        self.placement.ms_positions.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        if s.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(SimError::InvalidArgument(format!(
                "unsupported scenario schema_version {} (expected {})",
                s.schema_version, SCENARIO_SCHEMA_VERSION
            )));
        }
        Ok(s)
    }
}

/// Uniform AP/MS positions over the square and uniform boresights.
pub fn place_entities<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Placement {
    let side = cfg.area_side_m;
    let point = |rng: &mut R| Point2::new(rng.random::<f64>() * side, rng.random::<f64>() * side);
    let ap_positions = (0..cfg.num_aps).map(|_| point(rng)).collect();
    let ms_positions = (0..cfg.num_users).map(|_| point(rng)).collect();
    let ap_boresights = (0..cfg.num_aps).map(|_| rng.random::<f64>() * TAU).collect();
    let ms_boresights = (0..cfg.num_users).map(|_| rng.random::<f64>() * TAU).collect();
    Placement {
        ap_positions,
        ms_positions,
        ap_boresights,
        ms_boresights,
    }
}

/// Cluster centers uniform over the square, each emitting `rays_per_cluster`
/// rays scattered around the center with a Gaussian offset. Offsets that
/// leave the square are redrawn.
pub fn generate_scatterers<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Vec<ScattererRay> {
    let side = cfg.area_side_m;
    let clusters = cfg.cluster_count();
    let spread = cfg.ray_spread_m;
    let mut rays = Vec::with_capacity(clusters * cfg.rays_per_cluster);
    for id in 0..clusters {
        let center = Point2::new(rng.random::<f64>() * side, rng.random::<f64>() * side);
        for _ in 0..cfg.rays_per_cluster {
            let position = loop {
                let dx: f64 = rng.sample(StandardNormal);
                let dy: f64 = rng.sample(StandardNormal);
                let p = Point2::new(center.x + spread * dx, center.y + spread * dy);
                if (0.0..=side).contains(&p.x) && (0.0..=side).contains(&p.y) {
                    break p;
                }
            };
            rays.push(ScattererRay {
                cluster_id: id as u32,
                position,
            });
        }
    }
    rays
}

#[inline]
fn inside_ellipse(ray: &Point2, ap: &Point2, ms: &Point2, budget: f64) -> bool {
    ray.distance(ap) + ray.distance(ms) <= budget
}

/// Indices of the rays inside the gating ellipse of link (AP, MS).
///
/// Linear scan; [`RayIndex`] answers the same query faster.
pub fn active_rays(ap: &Point2, ms: &Point2, scatterers: &[ScattererRay], excess_m: f64) -> Vec<usize> {
    let budget = ap.distance(ms) + excess_m;
    scatterers
        .iter()
        .enumerate()
        .filter(|(_, r)| inside_ellipse(&r.position, ap, ms, budget))
        .map(|(i, _)| i)
        .collect()
}

/// Number of distinct clusters among `rays`.
pub fn active_cluster_count(scatterers: &[ScattererRay], rays: &[usize]) -> usize {
    let mut ids: Vec<u32> = rays.iter().map(|&i| scatterers[i].cluster_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.len()
}

/// Uniform bucket grid over the scatterer field.
#[derive(Debug, Clone)]
pub struct RayIndex {
    cell: f64,
    cols: usize,
    rows: usize,
    origin: Point2,
    /// Ray indices bucketed by cell, row-major, each bucket ascending.
    buckets: Vec<Vec<usize>>,
}

impl RayIndex {
    pub fn new(scatterers: &[ScattererRay], cell_m: f64) -> Self {
        let (mut lo, mut hi) = (Point2::new(0.0, 0.0), Point2::new(0.0, 0.0));
        if let Some(first) = scatterers.first() {
            lo = first.position;
            hi = first.position;
        }
        for r in scatterers {
            lo.x = lo.x.min(r.position.x);
            lo.y = lo.y.min(r.position.y);
            hi.x = hi.x.max(r.position.x);
            hi.y = hi.y.max(r.position.y);
        }
        let cols = (((hi.x - lo.x) / cell_m).floor() as usize) + 1;
        let rows = (((hi.y - lo.y) / cell_m).floor() as usize) + 1;
        let mut buckets = vec![Vec::new(); cols * rows];
        for (i, r) in scatterers.iter().enumerate() {
            let cx = ((r.position.x - lo.x) / cell_m) as usize;
            let cy = ((r.position.y - lo.y) / cell_m) as usize;
            buckets[cy.min(rows - 1) * cols + cx.min(cols - 1)].push(i);
        }
        Self {
            cell: cell_m,
            cols,
            rows,
            origin: lo,
            buckets,
        }
    }

    /// Same result as [`active_rays`], in ascending index order.
    pub fn active_rays(&self, ap: &Point2, ms: &Point2, scatterers: &[ScattererRay], excess_m: f64) -> Vec<usize> {
        let budget = ap.distance(ms) + excess_m;
        // every ellipse point lies within the semi-major axis of the center
        let center = ap.midpoint(ms);
        let reach = 0.5 * budget;
        let span = |lo: f64, hi: f64, origin: f64, n: usize| {
            let a = ((lo - origin) / self.cell).floor().max(0.0) as usize;
            let b = ((hi - origin) / self.cell).floor();
            if b < 0.0 {
                return None;
            }
            Some((a, (b as usize).min(n - 1)))
        };
        let (Some((x0, x1)), Some((y0, y1))) = (
            span(center.x - reach, center.x + reach, self.origin.x, self.cols),
            span(center.y - reach, center.y + reach, self.origin.y, self.rows),
        ) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                for &i in &self.buckets[cy * self.cols + cx] {
                    if inside_ellipse(&scatterers[i].position, ap, ms, budget) {
                        out.push(i);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Independent Bernoulli LOS indicators with the UMi probability, `[k][m]`.
pub fn draw_los_indicators<R: Rng + ?Sized>(placement: &Placement, rng: &mut R) -> Vec<Vec<u8>> {
    placement
        .ms_positions
        .iter()
        .map(|ms| {
            placement
                .ap_positions
                .iter()
                .map(|ap| {
                    let p = los_probability(ap.distance(ms).max(f64::MIN_POSITIVE));
                    u8::from(rng.random::<f64>() < p)
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig, Strategy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn placement_stays_in_square() {
        let cfg = SimConfig::default();
        let p = place_entities(&cfg, &mut rng(1));
        assert_eq!(p.ap_positions.len(), 100);
        assert_eq!(p.ms_positions.len(), 5);
        for q in p.ap_positions.iter().chain(&p.ms_positions) {
            assert!((0.0..=250.0).contains(&q.x) && (0.0..=250.0).contains(&q.y));
        }
        assert!(p.ap_boresights.iter().all(|b| (0.0..TAU).contains(b)));
    }

    #[test]
    fn placement_is_deterministic() {
        let cfg = SimConfig::default();
        assert_eq!(place_entities(&cfg, &mut rng(7)), place_entities(&cfg, &mut rng(7)));
    }

    #[test]
    fn placement_mean_is_area_center() {
        let cfg = SimConfig {
            num_aps: 100_000,
            num_users: 1,
            ..SimConfig::default()
        };
        let p = place_entities(&cfg, &mut rng(3));
        let mean = p.ap_positions.iter().map(|q| q.x).sum::<f64>() / 1e5;
        assert!((mean - 125.0).abs() < 1.0, "{mean}");
    }

    #[test]
    fn default_scatterer_count() {
        let rays = generate_scatterers(&SimConfig::default(), &mut rng(2));
        assert_eq!(rays.len(), 75_000);
        assert_eq!(rays.last().unwrap().cluster_id, 24_999);
        for (i, chunk) in rays.chunks(3).enumerate() {
            assert!(chunk.iter().all(|r| r.cluster_id as usize == i));
        }
        assert!(rays
            .iter()
            .all(|r| (0.0..=250.0).contains(&r.position.x) && (0.0..=250.0).contains(&r.position.y)));
    }

    #[test]
    fn zero_density_has_no_scatterers() {
        let cfg = SimConfig {
            cluster_density_per_sqm: 0.0,
            ..SimConfig::default()
        };
        assert!(generate_scatterers(&cfg, &mut rng(2)).is_empty());
    }

    #[test]
    fn ray_offsets_have_rayleigh_mean() {
        // 2000 m side keeps edge redraws negligible; 33_334 clusters -> ~1e5 rays.
        let cfg = SimConfig {
            area_side_m: 2000.0,
            cluster_density_per_sqm: 33_334.0 / 4e6,
            ..SimConfig::default()
        };
        let mut r = rng(11);
        let side = cfg.area_side_m;
        let clusters = cfg.cluster_count();
        // regenerate centers with the same stream to measure offsets
        let rays = generate_scatterers(&cfg, &mut r);
        let mut r2 = rng(11);
        let mut total = 0.0;
        let mut n = 0usize;
        let mut it = rays.iter();
        for _ in 0..clusters {
            let c = Point2::new(r2.random::<f64>() * side, r2.random::<f64>() * side);
            for _ in 0..3 {
                let ray = it.next().unwrap();
                // consume the same normals the generator consumed
                loop {
                    let dx: f64 = r2.sample(StandardNormal);
                    let dy: f64 = r2.sample(StandardNormal);
                    let p = Point2::new(c.x + 2.0 * dx, c.y + 2.0 * dy);
                    if (0.0..=side).contains(&p.x) && (0.0..=side).contains(&p.y) {
                        assert_eq!(p, ray.position);
                        break;
                    }
                }
                total += ray.position.distance(&c);
                n += 1;
            }
        }
        assert!(n >= 100_000);
        let mean = total / n as f64;
        let expected = 2.0 * (std::f64::consts::PI / 2.0).sqrt();
        assert!((mean / expected - 1.0).abs() < 0.02, "{mean} vs {expected}");
    }

    #[test]
    fn midpoint_ray_is_active_and_far_ray_is_not() {
        let ap = Point2::new(0.0, 0.0);
        let ms = Point2::new(100.0, 0.0);
        let delta = 30.0;
        // excess path of a point at (50, y) is 2*hypot(50, y) - 100; pick y for excess 2*delta
        let y = ((100.0 + 2.0 * delta) / 2.0f64).powi(2) - 50.0f64.powi(2);
        let rays = vec![
            ScattererRay {
                cluster_id: 0,
                position: Point2::new(50.0, 0.0),
            },
            ScattererRay {
                cluster_id: 1,
                position: Point2::new(50.0, y.sqrt()),
            },
        ];
        assert_eq!(active_rays(&ap, &ms, &rays, delta), vec![0]);
        assert_eq!(active_rays(&ap, &ms, &rays, 1e-9), vec![0]);
    }

    #[test]
    fn active_cluster_count_matches_ellipse_area() {
        let cfg = SimConfig::preset(Preset::Paper);
        let ap = Point2::new(75.0, 125.0);
        let ms = Point2::new(175.0, 125.0);
        let expected = 0.4 * std::f64::consts::PI * 65.0 * (130.0f64.powi(2) - 100.0f64.powi(2)).sqrt() / 2.0;
        let mut total = 0usize;
        for seed in 0..100 {
            let rays = generate_scatterers(&cfg, &mut rng(1000 + seed));
            let act = RayIndex::new(&rays, 10.0).active_rays(&ap, &ms, &rays, 30.0);
            total += active_cluster_count(&rays, &act);
        }
        let mean = total as f64 / 100.0;
        assert!((mean / expected - 1.0).abs() < 0.10, "{mean} vs {expected}");
    }

    #[test]
    fn los_indicators_at_short_range_are_certain() {
        let placement = Placement {
            ap_positions: vec![Point2::new(0.0, 0.0)],
            ms_positions: vec![Point2::new(10.0, 0.0); 1000],
            ap_boresights: vec![0.0],
            ms_boresights: vec![0.0; 1000],
        };
        let los = draw_los_indicators(&placement, &mut rng(4));
        assert!(los.iter().all(|row| row[0] == 1));
    }

    #[test]
    fn los_frequency_matches_probability() {
        let placement = Placement {
            ap_positions: vec![Point2::new(0.0, 0.0)],
            ms_positions: vec![Point2::new(39.0, 0.0); 100_000],
            ap_boresights: vec![0.0],
            ms_boresights: vec![0.0; 100_000],
        };
        let los = draw_los_indicators(&placement, &mut rng(5));
        let freq = los.iter().map(|r| r[0] as f64).sum::<f64>() / 1e5;
        assert!((freq - 0.6921).abs() < 0.01, "{freq}");

        let far = Placement {
            ms_positions: vec![Point2::new(1e6, 0.0); 10_000],
            ms_boresights: vec![0.0; 10_000],
            ..placement
        };
        let los = draw_los_indicators(&far, &mut rng(6));
        let freq = los.iter().map(|r| r[0] as f64).sum::<f64>() / 1e4;
        assert!(freq < 1e-3, "{freq}");
    }

    #[test]
    fn realization_is_deterministic_and_round_trips() {
        let cfg = SimConfig::preset(Preset::Desk);
        let seeds = TrialSeeds::new(9, 0);
        let a = ScenarioRealization::generate(&cfg, &seeds);
        let b = ScenarioRealization::generate(&cfg, &seeds);
        assert_eq!(a, b);
        let json = a.to_json().unwrap();
        assert!(json.contains("\"schema_version\":1"));
        assert_eq!(ScenarioRealization::from_json(&json).unwrap(), a);
    }

    #[test]
    fn rejects_unknown_schema_version() {
        let cfg = SimConfig::preset(Preset::Desk);
        let mut s = ScenarioRealization::generate(&cfg, &TrialSeeds::new(1, 0));
        s.schema_version = 99;
        let json = serde_json::to_string(&s).unwrap();
        assert!(ScenarioRealization::from_json(&json).is_err());
    }

    fn pt() -> impl Strategy<Value = Point2> {
        (0.0..100.0f64, 0.0..100.0f64).prop_map(|(x, y)| Point2::new(x, y))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gating_is_symmetric_monotone_and_indexed(
            ap in pt(), ms in pt(), seed in 0u64..1000, d1 in 0.1..40.0f64, extra in 0.0..40.0f64,
        ) {
            let cfg = SimConfig { area_side_m: 100.0, cluster_density_per_sqm: 0.05, ..SimConfig::default() };
            let rays = generate_scatterers(&cfg, &mut rng(seed));
            let a = active_rays(&ap, &ms, &rays, d1);
            prop_assert_eq!(&a, &active_rays(&ms, &ap, &rays, d1));
            let wider = active_rays(&ap, &ms, &rays, d1 + extra);
            prop_assert!(a.iter().all(|i| wider.contains(i)));
            let index = RayIndex::new(&rays, 7.0);
            prop_assert_eq!(&a, &index.active_rays(&ap, &ms, &rays, d1));
        }
    }
}
