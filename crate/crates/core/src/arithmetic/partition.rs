use serde::{Deserialize, Serialize};

use super::cf::RotationNumber;
use super::circle::{Arc, CirclePoint};
use crate::error::{Error, Result};

/// Lengths closer than this many units of 2^-128 are treated as equal; each
/// endpoint carries at most half a unit of rounding.
const LENGTH_SLACK: u128 = 4;

/// Partition of the circle by the points {-i alpha : 0 <= i < q_k}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DynamicalPartition {
    pub level: usize,
    /// arcs sorted by start point
    pub arcs: Vec<Arc>,
    /// i such that the arc starts at -i alpha
    pub orbit_index: Vec<u64>,
}

impl DynamicalPartition {
    pub fn len(&self) -> usize {
        self.arcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    /// Index of the arc containing x.
    pub fn locate(&self, x: CirclePoint) -> usize {
        locate_sorted(&self.arcs, x)
    }

    /// Distinct arc lengths, in units of 2^-128.
    pub fn distinct_lengths(&self) -> Vec<u128> {
        distinct(self.arcs.iter().map(|a| a.units().unwrap_or(u128::MAX)))
    }

    pub fn total_length(&self) -> f64 {
        self.arcs.iter().map(|a| a.length()).sum()
    }
}

fn distinct<I: Iterator<Item = u128>>(it: I) -> Vec<u128> {
    let mut v: Vec<u128> = it.collect();
    v.sort_unstable();
    let mut out: Vec<u128> = Vec::new();
    for x in v {
        match out.last() {
            Some(&y) if x - y <= LENGTH_SLACK => {}
            _ => out.push(x),
        }
    }
    out
}

fn locate_sorted(arcs: &[Arc], x: CirclePoint) -> usize {
    // arcs are sorted by start and tile the circle; the one containing x has
    // the largest start <= x, or is the last one (which wraps through 0)
    let i = arcs.partition_point(|a| a.start <= x);
    if i == 0 {
        arcs.len() - 1
    } else {
        i - 1
    }
}

fn arcs_from_points(mut pts: Vec<(CirclePoint, u64)>) -> (Vec<Arc>, Vec<u64>) {
    pts.sort_unstable_by_key(|p| p.0);
    let n = pts.len();
    let mut arcs = Vec::with_capacity(n);
    let mut idx = Vec::with_capacity(n);
    for i in 0..n {
        let end = pts[(i + 1) % n].0;
        arcs.push(Arc::new(pts[i].0, end));
        idx.push(pts[i].1);
    }
    (arcs, idx)
}

pub fn partition_ik(rot: &RotationNumber, k: usize) -> Result<DynamicalPartition> {
    if k >= rot.depth() {
        return Err(Error::DepthExceeded { requested: k, available: rot.depth() });
    }
    let qk = rot.q[k] as u64;
    let pts: Vec<(CirclePoint, u64)> = (0..qk).map(|i| (rot.rot(-(i as i64)), i)).collect();
    let (arcs, orbit_index) = arcs_from_points(pts);
    Ok(DynamicalPartition { level: k, arcs, orbit_index })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tower {
    /// height q_k, base length ||q_{k-1} alpha||
    Long,
    /// height q_{k-1}, base length ||q_k alpha||
    Short,
}

/// Two-tower Rokhlin partition at level k cut out by the points
/// {-j alpha : 0 <= j < q_k + q_{k-1}}. The rotation carries each level onto
/// the next floor of its tower; the top floors are the two arcs adjacent to
/// 0 (lengths ||q_{k-1} alpha|| and ||q_k alpha||), and no arc meets the
/// singular orbit {-j alpha} in its interior, so every arc stays clear of 0
/// for q_k + q_{k-1} forward steps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TowerPartition {
    pub level: usize,
    pub arcs: Vec<Arc>,
    pub tower: Vec<Tower>,
    /// floor index within the tower, 0 at the base
    pub floor: Vec<u64>,
}

impl TowerPartition {
    pub fn new(rot: &RotationNumber, k: usize) -> Result<Self> {
        if k < 1 || k >= rot.depth() {
            return Err(Error::DepthExceeded { requested: k, available: rot.depth() });
        }
        let qk = rot.q[k] as u64;
        let qk1 = rot.q[k - 1] as u64;
        // label the mirror-image partition by {j alpha} first: there the
        // arc starting at j alpha is floor j of a tower with base next to 0
        let long_first = rot.delta(k - 1) > 0.0;
        let pts: Vec<(CirclePoint, u64)> = (0..qk + qk1).map(|j| (rot.rot(j as i64), j)).collect();
        let (arcs, starts) = arcs_from_points(pts);
        let mut items: Vec<(Arc, Tower, u64)> = Vec::with_capacity(arcs.len());
        for (a, &i) in arcs.iter().zip(&starts) {
            let (t, f) = if long_first {
                if i < qk {
                    (Tower::Long, i)
                } else {
                    (Tower::Short, i - qk)
                }
            } else if i < qk1 {
                (Tower::Short, i)
            } else {
                (Tower::Long, i - qk1)
            };
            let h = if t == Tower::Long { qk } else { qk1 };
            // negation reverses the direction of the rotation
            items.push((Arc::new(a.end.neg(), a.start.neg()), t, h - 1 - f));
        }
        items.sort_unstable_by_key(|x| x.0.start);
        Ok(TowerPartition {
            level: k,
            arcs: items.iter().map(|x| x.0).collect(),
            tower: items.iter().map(|x| x.1).collect(),
            floor: items.iter().map(|x| x.2).collect(),
        })
    }

    /// Index of the floor-0 arc of a tower.
    pub fn base(&self, t: Tower) -> usize {
        (0..self.len()).find(|&i| self.tower[i] == t && self.floor[i] == 0).expect("every tower has a base")
    }

    pub fn locate(&self, x: CirclePoint) -> usize {
        locate_sorted(&self.arcs, x)
    }

    pub fn len(&self) -> usize {
        self.arcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    pub fn height(&self, rot: &RotationNumber, t: Tower) -> u64 {
        match t {
            Tower::Long => rot.q[self.level] as u64,
            Tower::Short => rot.q[self.level - 1] as u64,
        }
    }

    pub fn distinct_lengths(&self) -> Vec<u128> {
        distinct(self.arcs.iter().map(|a| a.units().unwrap_or(u128::MAX)))
    }
}
