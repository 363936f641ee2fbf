//! The octree map itself: voxel keys, point insertion/removal along the
//! key chain, and predicate-driven multi-scale candidate queries.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::geometry::Vec3;
use crate::surfel::stats::{derive_attributes, SurfelAttributes, SurfelError, SurfelStats};

/// Map parameters. Scale of a voxel at depth `D` is `2^D * leaf_size`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapConfig {
    /// Voxel edge length at depth 0 (meters).
    pub leaf_size: f64,
    /// Deepest (coarsest) level kept in the tree.
    pub max_depth: u8,
    /// Minimum point count for a node to qualify as a surfel.
    pub min_points: u64,
    /// Minimum planarity for association.
    pub min_planarity: f64,
    /// Radius of the candidate-search sphere around a query point (meters).
    pub search_radius: f64,
    /// Stage-two point-to-plane distance gate (meters).
    pub max_plane_dist: f64,
    /// Bitmask of depths considered during association (bit d = depth d).
    /// Depth 0 is always ignored.
    pub enabled_depths: u32,
}

impl MapConfig {
    /// Enable association at every depth from 1 to `max_depth`.
    pub fn all_depths(max_depth: u8) -> u32 {
        ((1u32 << (max_depth as u32 + 1)) - 1) & !1
    }

    pub fn scale_at(&self, depth: u8) -> f64 {
        self.leaf_size * (1u64 << depth) as f64
    }
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            leaf_size: 0.1,
            max_depth: 5,
            min_points: 6,
            min_planarity: 0.5,
            search_radius: 0.1,
            max_plane_dist: 0.3,
            enabled_depths: Self::all_depths(5),
        }
    }
}

/// Voxel address: depth plus signed integer indices at that depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeKey {
    pub depth: u8,
    pub ix: i64,
    pub iy: i64,
    pub iz: i64,
}

impl NodeKey {
    /// Key of the voxel containing `p` at `depth`. The grid is anchored at
    /// the world origin: `ix = floor(x / scale)`.
    pub fn from_point(p: &Vec3, depth: u8, cfg: &MapConfig) -> Self {
        let scale = cfg.scale_at(depth);
        NodeKey {
            depth,
            ix: libm::floor(p.x / scale) as i64,
            iy: libm::floor(p.y / scale) as i64,
            iz: libm::floor(p.z / scale) as i64,
        }
    }

    /// Parent key: one depth up, indices arithmetically shifted down.
    pub fn parent(&self) -> NodeKey {
        NodeKey {
            depth: self.depth + 1,
            ix: self.ix >> 1,
            iy: self.iy >> 1,
            iz: self.iz >> 1,
        }
    }

    /// Voxel edge length (meters).
    pub fn scale(&self, cfg: &MapConfig) -> f64 {
        cfg.scale_at(self.depth)
    }

    /// Minimum corner of the voxel cube.
    pub fn corner(&self, cfg: &MapConfig) -> Vec3 {
        let s = self.scale(cfg);
        Vec3::new(self.ix as f64 * s, self.iy as f64 * s, self.iz as f64 * s)
    }

    /// Clamped-distance test: does this voxel's cube intersect the sphere of
    /// radius `r` centered at `f`?
    pub fn intersects_sphere(&self, f: &Vec3, r: f64, cfg: &MapConfig) -> bool {
        let lo = self.corner(cfg);
        let s = self.scale(cfg);
        let mut d2 = 0.0;
        for i in 0..3 {
            let c = f[i].clamp(lo[i], lo[i] + s);
            d2 += (f[i] - c) * (f[i] - c);
        }
        d2 <= r * r
    }
}

#[derive(Debug, Clone)]
struct NodeEntry {
    stats: SurfelStats,
    /// Sensor position of the last writer; fixes the normal sign.
    viewpoint: Vec3,
    /// Memoized attributes, cleared whenever the stats change.
    cache: Option<SurfelAttributes>,
}

/// Counters returned by bulk map updates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateSummary {
    pub nodes_created: u64,
    pub nodes_touched: u64,
    pub nodes_removed: u64,
}

/// One association candidate from the first query stage.
#[derive(Debug, Clone)]
pub struct CandidateSurfel {
    pub key: NodeKey,
    pub attributes: SurfelAttributes,
}

/// Octree-organized global surfel map. Every node at every depth in
/// `0..=max_depth` carries the moments of all points inside its voxel, so a
/// parent's stats always equal the Welford merge of its children.
#[derive(Debug, Clone)]
pub struct SurfelMap {
    config: MapConfig,
    nodes: BTreeMap<NodeKey, NodeEntry>,
}

impl SurfelMap {
    pub fn new(config: MapConfig) -> Self {
        SurfelMap {
            config,
            nodes: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &MapConfig {
        &self.config
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn stats(&self, key: &NodeKey) -> Option<&SurfelStats> {
        self.nodes.get(key).map(|e| &e.stats)
    }

    /// All nodes in deterministic key order.
    pub fn nodes(&self) -> impl Iterator<Item = (&NodeKey, &SurfelStats)> {
        self.nodes.iter().map(|(k, e)| (k, &e.stats))
    }

    /// Depth-0 nodes only, for export.
    pub fn leaf_nodes(&self) -> impl Iterator<Item = (&NodeKey, &SurfelStats)> {
        self.nodes().filter(|(k, _)| k.depth == 0)
    }

    /// Insert world-frame points; every point updates the node at each depth
    /// along its key chain. `viewpoint` is the sensor position used for
    /// normal orientation.
    pub fn insert_cloud(&mut self, points: &[Vec3], viewpoint: &Vec3) -> UpdateSummary {
        let mut summary = UpdateSummary::default();
        for p in points {
            for depth in 0..=self.config.max_depth {
                let key = NodeKey::from_point(p, depth, &self.config);
                match self.nodes.get_mut(&key) {
                    Some(entry) => {
                        entry.stats = entry.stats.add_point(p);
                        entry.viewpoint = *viewpoint;
                        entry.cache = None;
                    }
                    None => {
                        summary.nodes_created += 1;
                        self.nodes.insert(
                            key,
                            NodeEntry {
                                stats: SurfelStats::from_point(p),
                                viewpoint: *viewpoint,
                                cache: None,
                            },
                        );
                    }
                }
                summary.nodes_touched += 1;
            }
        }
        summary
    }

    /// Inverse of [`insert_cloud`]; nodes reaching `N = 0` are erased.
    /// Fails with [`SurfelError::InvalidRemoval`] if a point's node chain is
    /// missing or empty.
    pub fn remove_cloud(&mut self, points: &[Vec3]) -> Result<UpdateSummary, SurfelError> {
        let mut summary = UpdateSummary::default();
        for p in points {
            for depth in 0..=self.config.max_depth {
                let key = NodeKey::from_point(p, depth, &self.config);
                let entry = self.nodes.get_mut(&key).ok_or(SurfelError::InvalidRemoval)?;
                entry.stats = entry.stats.remove_point(p)?;
                entry.cache = None;
                summary.nodes_touched += 1;
                if entry.stats.is_empty() {
                    self.nodes.remove(&key);
                    summary.nodes_removed += 1;
                }
            }
        }
        Ok(summary)
    }

    /// Recompute and cache attributes for every node that could serve as an
    /// association candidate. Called between write phases so queries hit the
    /// memoized value.
    pub fn refresh_attributes(&mut self) {
        let cfg = self.config;
        for (key, entry) in self.nodes.iter_mut() {
            if key.depth == 0 || entry.stats.n < cfg.min_points || entry.cache.is_some() {
                continue;
            }
            entry.cache = derive_attributes(&entry.stats, Some(&entry.viewpoint)).ok();
        }
    }

    fn attributes_of(&self, entry: &NodeEntry) -> Option<SurfelAttributes> {
        match &entry.cache {
            Some(a) => Some(*a),
            None => derive_attributes(&entry.stats, Some(&entry.viewpoint)).ok(),
        }
    }

    /// Stage-one association query: every node with depth in `[1, max_depth]`
    /// (and enabled in the depth mask), at least `min_points` points,
    /// planarity above `min_planarity`, a unique normal direction, and whose
    /// cube intersects the sphere of radius `search_radius` around `f`.
    ///
    /// Results are ordered by depth, then by voxel index.
    pub fn query_candidates(&self, f: &Vec3) -> Vec<CandidateSurfel> {
        let cfg = &self.config;
        let r = cfg.search_radius;
        let mut out = Vec::new();
        for depth in 1..=cfg.max_depth {
            if cfg.enabled_depths & (1u32 << depth) == 0 {
                continue;
            }
            let scale = cfg.scale_at(depth);
            let lo = |v: f64| libm::floor((v - r) / scale) as i64;
            let hi = |v: f64| libm::floor((v + r) / scale) as i64;
            for ix in lo(f.x)..=hi(f.x) {
                for iy in lo(f.y)..=hi(f.y) {
                    for iz in lo(f.z)..=hi(f.z) {
                        let key = NodeKey { depth, ix, iy, iz };
                        let Some(entry) = self.nodes.get(&key) else {
                            continue;
                        };
                        if entry.stats.n < cfg.min_points
                            || !key.intersects_sphere(f, r, cfg)
                        {
                            continue;
                        }
                        let Some(attributes) = self.attributes_of(entry) else {
                            continue;
                        };
                        if attributes.planarity <= cfg.min_planarity
                            || !attributes.normal_is_unique()
                        {
                            continue;
                        }
                        out.push(CandidateSurfel { key, attributes });
                    }
                }
            }
        }
        out
    }
}
