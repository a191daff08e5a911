//! Fill-reducing ordering by recursive level-structure bisection
//! (graph nested dissection).
//!
//! Each connected region is split at the middle level of a breadth-first
//! level structure rooted at a pseudo-peripheral vertex; the level becomes
//! the separator and is numbered after both halves.

/// Regions at or below this size are numbered as-is.
const LEAF_SIZE: usize = 48;

struct Dissector<'a, F> {
    adj: F,
    stamp: Vec<u32>,
    next_stamp: u32,
    level: Vec<u32>,
    order: Vec<u32>,
    _marker: std::marker::PhantomData<&'a ()>,
}

/// Returns `perm` with `perm[new] = old`.
pub fn nested_dissection<'a, F>(n: usize, adj: F) -> Vec<u32>
where
    F: Fn(usize) -> &'a [u32],
{
    let mut d = Dissector {
        adj,
        stamp: vec![0; n],
        next_stamp: 1,
        level: vec![u32::MAX; n],
        order: Vec::with_capacity(n),
        _marker: std::marker::PhantomData,
    };
    d.dissect((0..n as u32).collect());
    debug_assert_eq!(d.order.len(), n);
    d.order
}

impl<'a, F> Dissector<'a, F>
where
    F: Fn(usize) -> &'a [u32],
{
    fn fresh_stamp(&mut self, region: &[u32]) -> u32 {
        let s = self.next_stamp;
        self.next_stamp += 1;
        for &v in region {
            self.stamp[v as usize] = s;
        }
        s
    }

    /// BFS from `root` inside the stamped region; fills `self.level` and
    /// returns the vertices grouped by level.
    fn levels(&mut self, root: u32, stamp: u32, region: &[u32]) -> Vec<Vec<u32>> {
        for &v in region {
            self.level[v as usize] = u32::MAX;
        }
        let mut out: Vec<Vec<u32>> = vec![vec![root]];
        self.level[root as usize] = 0;
        loop {
            let depth = out.len() as u32;
            let mut next = Vec::new();
            for &u in out.last().unwrap() {
                for &w in (self.adj)(u as usize) {
                    let wi = w as usize;
                    if self.stamp[wi] == stamp && self.level[wi] == u32::MAX {
                        self.level[wi] = depth;
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                return out;
            }
            out.push(next);
        }
    }

    /// Connected components of a stamped region, each in discovery order.
    /// Re-stamps every vertex it visits.
    fn split_components(&mut self, region: &[u32], stamp: u32) -> Vec<Vec<u32>> {
        let visited = self.next_stamp;
        self.next_stamp += 1;
        let mut out = Vec::new();
        for &s in region {
            if self.stamp[s as usize] != stamp {
                continue;
            }
            self.stamp[s as usize] = visited;
            let mut comp = vec![s];
            let mut head = 0;
            while head < comp.len() {
                let u = comp[head] as usize;
                head += 1;
                for &w in (self.adj)(u) {
                    if self.stamp[w as usize] == stamp {
                        self.stamp[w as usize] = visited;
                        comp.push(w);
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    fn region_degree(&self, v: u32, stamp: u32) -> usize {
        (self.adj)(v as usize)
            .iter()
            .filter(|&&w| self.stamp[w as usize] == stamp)
            .count()
    }

    fn dissect(&mut self, region: Vec<u32>) {
        if region.len() <= LEAF_SIZE {
            self.order.extend_from_slice(&region);
            return;
        }
        let stamp = self.fresh_stamp(&region);

        let mut levels = self.levels(region[0], stamp, &region);
        let reached: usize = levels.iter().map(Vec::len).sum();
        if reached < region.len() {
            drop(levels);
            for comp in self.split_components(&region, stamp) {
                self.dissect(comp);
            }
            return;
        }

        // Pseudo-peripheral root: restart from a minimum-degree vertex of the
        // last level while the eccentricity grows.
        for _ in 0..8 {
            let last = levels.last().unwrap();
            let cand = *last
                .iter()
                .min_by_key(|&&v| (self.region_degree(v, stamp), v))
                .unwrap();
            let trial = self.levels(cand, stamp, &region);
            if trial.len() > levels.len() {
                levels = trial;
            } else {
                levels = self.levels(levels[0][0], stamp, &region);
                break;
            }
        }

        if levels.len() < 3 {
            self.order.extend_from_slice(&region);
            return;
        }

        // Middle level by vertex count.
        let half = region.len() / 2;
        let mut cum = 0;
        let mut mid = 1;
        for (k, lv) in levels.iter().enumerate() {
            cum += lv.len();
            if cum >= half {
                mid = k;
                break;
            }
        }
        let mid = mid.clamp(1, levels.len() - 2);

        let mut part_a: Vec<u32> = levels[..mid].iter().flatten().copied().collect();
        let part_b: Vec<u32> = levels[mid + 1..].iter().flatten().copied().collect();
        let mut separator = Vec::with_capacity(levels[mid].len());
        let next_level = mid as u32 + 1;
        for &v in &levels[mid] {
            let touches_b = (self.adj)(v as usize)
                .iter()
                .any(|&w| self.stamp[w as usize] == stamp && self.level[w as usize] == next_level);
            if touches_b {
                separator.push(v);
            } else {
                part_a.push(v);
            }
        }
        drop(levels);
        self.dissect(part_a);
        self.dissect(part_b);
        self.order.extend_from_slice(&separator);
    }
}
