//! Indexed triangle meshes and the global manifold check.

use std::collections::HashMap;

use crate::geom::Point;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[u32; 3]>,
}

/// Why a mesh fails to be a closed 2-manifold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManifoldViolation {
    /// An undirected edge with other than two incident triangles.
    EdgeValence { edge: [u32; 2], count: usize },
    /// Two triangles traverse the same directed edge.
    Orientation { edge: [u32; 2] },
    /// The triangles around a vertex do not form one closed fan.
    VertexFan { vertex: u32 },
    DegenerateTriangle { triangle: usize },
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// `V - E + F` over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        let mut edges = HashMap::new();
        for t in &self.triangles {
            for i in 0..3 {
                used[t[i] as usize] = true;
                let (a, b) = (t[i], t[(i + 1) % 3]);
                edges.insert((a.min(b), a.max(b)), ());
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - edges.len() as i64 + self.triangles.len() as i64
    }

    /// Verifies that every edge bounds exactly two consistently oriented
    /// triangles and every vertex has a single closed fan.
    pub fn check_manifold(&self) -> Result<(), ManifoldViolation> {
        let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
        for (ti, t) in self.triangles.iter().enumerate() {
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(ManifoldViolation::DegenerateTriangle { triangle: ti });
            }
            for i in 0..3 {
                let e = (t[i], t[(i + 1) % 3]);
                if directed.insert(e, ti).is_some() {
                    return Err(ManifoldViolation::Orientation { edge: [e.0, e.1] });
                }
            }
        }
        let mut undirected: HashMap<(u32, u32), usize> = HashMap::new();
        for &(a, b) in directed.keys() {
            *undirected.entry((a.min(b), a.max(b))).or_default() += 1;
        }
        let mut bad: Vec<_> = undirected.iter().filter(|(_, &c)| c != 2).collect();
        bad.sort();
        if let Some((&(a, b), &count)) = bad.first() {
            return Err(ManifoldViolation::EdgeValence { edge: [a, b], count });
        }

        // Each triangle (v, a, b) contributes the link edge a -> b around v.
        let mut links: HashMap<u32, Vec<(u32, u32)>> = HashMap::new();
        for t in &self.triangles {
            for i in 0..3 {
                links.entry(t[i]).or_default().push((t[(i + 1) % 3], t[(i + 2) % 3]));
            }
        }
        let mut verts: Vec<_> = links.keys().copied().collect();
        verts.sort_unstable();
        for v in verts {
            let link = &links[&v];
            let next: HashMap<u32, u32> = link.iter().copied().collect();
            if next.len() != link.len() {
                return Err(ManifoldViolation::VertexFan { vertex: v });
            }
            let start = link[0].0;
            let mut cur = start;
            let mut steps = 0;
            loop {
                match next.get(&cur) {
                    Some(&n) => cur = n,
                    None => return Err(ManifoldViolation::VertexFan { vertex: v }),
                }
                steps += 1;
                if cur == start || steps > link.len() {
                    break;
                }
            }
            if cur != start || steps != link.len() {
                return Err(ManifoldViolation::VertexFan { vertex: v });
            }
        }
        Ok(())
    }
}
